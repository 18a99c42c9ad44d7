//! Report assembly and serialization. Every float goes out with 17
//! significant digits; non-finite values become `null` in JSON.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use serde_json::{Map, Number, Value};

pub const TOOL: &str = "ergobound";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a report field changes meaning or disappears.
pub const SCHEMA: &str = "ergobound-report/1";

/// `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-4..17).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_fraction(&mut m);
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{m}e{esign}{:02}", exp.abs());
    }
    let mut s = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let point = exp as usize + 1;
        format!("{}.{}", &digits[..point], &digits[point..])
    };
    trim_fraction(&mut s);
    format!("{sign}{s}")
}

fn trim_fraction(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

/// A JSON number with 17 significant digits, or `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&fmt17(x)).expect("valid JSON number"))
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn matrix(rows: impl IntoIterator<Item = Vec<f64>>) -> Value {
    Value::Array(rows.into_iter().map(|r| nums(&r)).collect())
}

pub fn named(pairs: &[(&str, f64)]) -> Value {
    Value::Object(pairs.iter().map(|(k, v)| (k.to_string(), num(*v))).collect())
}

/// A report in progress: the reproducibility header followed by the
/// command's fields, in insertion order.
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, parameters: Map<String, Value>) -> Self {
        let mut fields = Map::new();
        fields.insert("tool".into(), TOOL.into());
        fields.insert("version".into(), VERSION.into());
        fields.insert("schema".into(), SCHEMA.into());
        fields.insert("command".into(), command.into());
        fields.insert("parameters".into(), Value::Object(parameters));
        Report { fields }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.into(), value.into());
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.fields)
    }
}

/// A CSV table; cells are already formatted.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing csv")
    }
}

pub fn json_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes to `path`, or standard output when `None`.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g17() {
        let cases = [
            (1.2, "1.2"),
            (0.1, "0.10000000000000001"),
            (1.0 / 3.0, "0.33333333333333331"),
            (10.0 / 3.0, "3.3333333333333335"),
            (1e-7, "9.9999999999999995e-08"),
            (123456.0, "123456"),
            (-2.5, "-2.5"),
            (1e20, "1e+20"),
            (1.5e-5, "1.5e-05"),
            (0.00012, "0.00012"),
            (0.0001, "0.0001"),
            (2.0f64.powi(60), "1.152921504606847e+18"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt17(x), want, "{x}");
        }
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.4, 0.6000000000000001, 1.434782608695652, 1e-300, 7.0e22] {
            let v = num(x);
            let s = serde_json::to_string(&v).unwrap();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), Value::Null);
    }
}
