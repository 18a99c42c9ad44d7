//! Chain files, state sets and number lists.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ergobound::{FiniteChain, StateSet};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::report::matrix;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    labels: Option<Vec<String>>,
    kernel: Vec<Vec<f64>>,
}

/// Parses a chain document. Rows within `1e-9` of summing to one are
/// rescaled; anything else that is not an irreducible stochastic matrix
/// is an error.
pub fn parse_chain(text: &str) -> Result<FiniteChain> {
    let file: ChainFile = serde_json::from_str(text).context("chain file is not valid chain JSON")?;
    let chain = FiniteChain::from_rows_renormalized(&file.kernel).map_err(anyhow::Error::msg)?;
    match file.labels {
        Some(labels) => {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
                bail!("duplicate state label {dup:?}");
            }
            chain.with_labels(labels).map_err(anyhow::Error::msg)
        }
        None => Ok(chain),
    }
}

pub fn load_chain(path: &Path) -> Result<FiniteChain> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_chain(&text).with_context(|| format!("in {}", path.display()))
}

/// The chain document for `rows`, with labels when given.
pub fn chain_document(rows: impl IntoIterator<Item = Vec<f64>>, labels: Option<&[String]>) -> Value {
    let mut doc = Map::new();
    if let Some(ls) = labels {
        doc.insert("labels".into(), Value::Array(ls.iter().map(|l| Value::String(l.clone())).collect()));
    }
    doc.insert("kernel".into(), matrix(rows));
    Value::Object(doc)
}

pub fn chain_rows(chain: &FiniteChain) -> Vec<Vec<f64>> {
    (0..chain.n_states()).map(|x| chain.kernel().row(x)).collect()
}

/// `"i,j,k"` as 0-based indices or state labels.
pub fn parse_set(chain: &FiniteChain, spec: &str) -> Result<StateSet> {
    let mut members = Vec::new();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        members.push(chain.resolve_state(token).map_err(anyhow::Error::msg)?);
    }
    if members.is_empty() {
        bail!("state set {spec:?} is empty");
    }
    StateSet::new(chain.n_states(), members).map_err(anyhow::Error::msg)
}

/// Comma-separated floats.
pub fn parse_floats(spec: &str) -> Result<Vec<f64>> {
    let values = spec
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("{t:?} is not a number")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty number list {spec:?}");
    }
    Ok(values)
}

/// Comma-separated non-negative integers.
pub fn parse_counts(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().with_context(|| format!("{t:?} is not a count")))
        .collect()
}

pub fn state_names(chain: &FiniteChain) -> Vec<String> {
    match chain.labels() {
        Some(ls) => ls.to_vec(),
        None => (0..chain.n_states()).map(|i| i.to_string()).collect(),
    }
}
