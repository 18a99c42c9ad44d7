//! One function per subcommand. Each validates its inputs, computes, and
//! emits a report; infeasible bounds are reported, not raised.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::anyhow;
use ergobound::bounds::driven::LambdaSpec;
use ergobound::bounds::{evaluate, BoundName, EvalOptions, Evaluation, Outcome, Point};
use ergobound::chain::stationary_power_iteration;
use ergobound::splitting::{build_split_chain, squared_chain};
use ergobound::verify::soundness::{
    admissible_construction, aggregate, run_trial, SetRecord, SetStatus, SoundnessReport, SuiteConfig, TrialRecord,
    Violation, ViolationKind,
};
use ergobound::verify::{feasibility_audit, identity_suite, perturb_chain, AuditReport, Construction, VIOLATION_TOL};
use ergobound::{hitting, linalg, tol, Definiteness, FiniteChain, MinorizationCertificate, StateSet};
use serde_json::{json, Map, Value};

use crate::io;
use crate::report::{self, fmt17, matrix, named, num, nums, opt_num, Report, Table};
use crate::{CertificateArgs, ChainArgs, Command, Format, LambdaArgs, OutputArgs};

/// An error with the process exit status it maps to: 2 for bad input,
/// 1 for failures while producing output.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }

    fn runtime(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::input(error)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

type Exit = Result<ExitCode, Failure>;

fn msg<E: fmt::Display>(e: E) -> Failure {
    Failure::input(anyhow!("{e}"))
}

pub fn run(command: Command) -> Exit {
    match command {
        Command::Stationary { chain, output } => stationary(&chain, &output),
        Command::TvProfile { chain, n, output } => tv_profile(&chain, n, &output),
        Command::Hitting { chain, set, orders, law_horizon, output } => {
            hitting_cmd(&chain, &set.set, orders, law_horizon, &output)
        }
        Command::Moments { chain, set, lambda, output } => moments(&chain, &set.set, &lambda, &output),
        Command::Split { chain, set, cert, sidecar, output } => split(&chain, &set.set, &cert, sidecar, &output),
        Command::Squared { chain, set, cert, output } => squared(&chain, &set.set, &cert, &output),
        Command::Bound { name, chain, set, lambda, cert, n, with_exact, dp, steps, output } => bound(BoundArgs {
            name: &name,
            chain: &chain,
            set: &set.set,
            lambda: &lambda,
            cert: &cert,
            n,
            with_exact,
            dp,
            steps: &steps,
            output: &output,
        }),
        Command::Perturb { chain, set, perturbed, epsilon, seed, write_perturbed, bound, steps, lambda, output } => {
            perturb(PerturbArgs {
                chain: &chain,
                set: &set.set,
                perturbed: perturbed.as_deref(),
                epsilon,
                seed,
                write_perturbed: write_perturbed.as_deref(),
                bound: &bound,
                steps: &steps,
                lambda: &lambda,
                output: &output,
            })
        }
        Command::Verify {
            bound,
            recipe,
            trials,
            seed,
            min_states,
            max_states,
            n_max,
            perturbations,
            laziness,
            records,
            identities,
            audit,
            threads,
            output,
        } => verify(VerifyArgs {
            bound: &bound,
            recipe: recipe.as_deref(),
            trials,
            seed,
            min_states,
            max_states,
            n_max,
            perturbations,
            laziness,
            records,
            identities,
            audit,
            threads,
            output: &output,
        }),
    }
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("parameter blocks are objects"),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn require_json(out: &OutputArgs, command: &str) -> Result<(), Failure> {
    if out.format == Format::Csv {
        return Err(Failure::input(anyhow!("{command} has no csv output; use --format json")));
    }
    Ok(())
}

fn finish(out: &OutputArgs, report: Report, table: Option<Table>) -> Result<(), Failure> {
    let bytes = match (out.format, table) {
        (Format::Csv, Some(t)) => t.to_bytes(),
        (Format::Csv, None) => return Err(Failure::input(anyhow!("no csv output for this report"))),
        (Format::Json, _) => report::json_bytes(&report.into_value()),
    }
    .map_err(Failure::runtime)?;
    report::emit(&bytes, out.out.as_deref()).map_err(Failure::runtime)
}

fn cell(x: f64) -> String {
    fmt17(x)
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn set_json(set: &StateSet) -> Value {
    json!(set.members())
}

fn load(c: &ChainArgs) -> Result<FiniteChain, Failure> {
    Ok(io::load_chain(&c.chain)?)
}

fn stationary(c: &ChainArgs, out: &OutputArgs) -> Exit {
    let chain = load(c)?;
    let pi = chain.stationary();
    let names = io::state_names(&chain);
    let power = stationary_power_iteration(chain.kernel(), 1e-14, 200_000);
    let rev = chain.check_reversible(tol::STRUCTURAL);
    let definiteness = match chain.check_nonneg_definite(tol::SPECTRAL) {
        Definiteness::NonNegative { min_eigenvalue } => {
            json!({"kind": "nonnegative", "min_eigenvalue": num(min_eigenvalue)})
        }
        Definiteness::Indefinite { min_eigenvalue } => {
            json!({"kind": "indefinite", "min_eigenvalue": num(min_eigenvalue)})
        }
        Definiteness::NotApplicable { reversibility_residual } => {
            json!({"kind": "not_applicable", "reversibility_residual": num(reversibility_residual)})
        }
    };
    let spectral = match chain.spectral_r0() {
        Ok(s) => json!({
            "r0": num(s.r0),
            "eigenvalues": s.eigenvalues.iter().map(|z| json!({"re": num(z.re), "im": num(z.im)})).collect::<Vec<_>>(),
        }),
        Err(e) => json!({"error": e.to_string()}),
    };
    let atoms: Vec<Value> = chain.detect_atoms(tol::STRUCTURAL).iter().map(set_json).collect();

    let mut rep = Report::new("stationary", obj(json!({"chain": path_str(&c.chain)})));
    rep.set("n_states", chain.n_states())
        .set("labels", json!(names))
        .set("pi", nums(pi.as_slice()))
        .set("invariance_residual", num(pi.invariance_residual(chain.kernel())))
        .set("power_iteration", json!({"pi": nums(&power), "l1_gap": num(linalg::l1(&power, pi.as_slice()))}))
        .set("reversibility", json!({"reversible": rev.reversible, "residual": num(rev.residual)}))
        .set("definiteness", definiteness)
        .set("spectral", spectral)
        .set("dobrushin", num(chain.dobrushin_coefficient(1)))
        .set("row_atoms", Value::Array(atoms));
    let mut t = Table::new(&["state", "label", "pi"]);
    for (x, name) in names.iter().enumerate() {
        t.push(vec![x.to_string(), name.clone(), cell(pi.as_slice()[x])]);
    }
    finish(out, rep, Some(t))?;
    Ok(ExitCode::SUCCESS)
}

fn tv_profile(c: &ChainArgs, n: usize, out: &OutputArgs) -> Exit {
    let chain = load(c)?;
    let tv = chain.tv_profile(n);
    let mut rep = Report::new("tv-profile", obj(json!({"chain": path_str(&c.chain), "n": n})));
    rep.set("tv", nums(&tv));
    let mut t = Table::new(&["n", "tv"]);
    for (k, v) in tv.iter().enumerate() {
        t.push(vec![k.to_string(), cell(*v)]);
    }
    finish(out, rep, Some(t))?;
    Ok(ExitCode::SUCCESS)
}

fn hitting_cmd(c: &ChainArgs, set: &str, orders: usize, law_horizon: Option<usize>, out: &OutputArgs) -> Exit {
    let chain = load(c)?;
    let a = io::parse_set(&chain, set)?;
    let k = chain.kernel();
    let sigma = hitting::hitting_mean(k, &a).map_err(msg)?;
    let tau = hitting::return_mean(k, &a).map_err(msg)?;
    let m = hitting::uniform_hitting_moment(k, &a).map_err(msg)?;
    let rho = hitting::taboo_radius(k, &a).map_err(msg)?;
    let horizon = hitting::adaptive_horizon(k, &a).map_err(msg)?;
    let pi = chain.stationary();
    // Kac: sum_{x in A} pi(x) E_x[tau_A] = 1
    let kac: f64 = a.members().iter().map(|&x| pi.as_slice()[x] * tau[x]).sum();

    let mut rep = Report::new(
        "hitting",
        obj(json!({"chain": path_str(&c.chain), "set": set_json(&a), "orders": orders, "law_horizon": law_horizon})),
    );
    rep.set("sigma_mean", nums(&sigma))
        .set("tau_mean", nums(&tau))
        .set("M", num(m))
        .set("pi_A", num(pi.mass(&a)))
        .set("kac_sum", num(kac))
        .set("taboo_radius", num(rho))
        .set("adaptive_horizon", horizon);
    if orders > 1 {
        let ms = hitting::hitting_moments(k, &a, orders).map_err(msg)?;
        let rows: Vec<Value> =
            ms.iter().enumerate().map(|(l, v)| json!({"order": l + 1, "sigma_moment": nums(v)})).collect();
        rep.set("sigma_moments", Value::Array(rows));
    }
    if let Some(h) = law_horizon {
        let law = hitting::return_law(k, &a, h);
        rep.set(
            "return_law",
            json!({"horizon": h, "F": matrix(law.f.clone()), "truncation_mass": nums(&law.truncation_mass())}),
        );
    }
    let names = io::state_names(&chain);
    let mut t = Table::new(&["state", "label", "sigma_mean", "tau_mean"]);
    for (x, name) in names.iter().enumerate() {
        t.push(vec![x.to_string(), name.clone(), cell(sigma[x]), cell(tau[x])]);
    }
    finish(out, rep, Some(t))?;
    Ok(ExitCode::SUCCESS)
}

fn moments(c: &ChainArgs, set: &str, lambdas: &str, out: &OutputArgs) -> Exit {
    let chain = load(c)?;
    let a = io::parse_set(&chain, set)?;
    let lambdas = io::parse_floats(lambdas)?;
    let names = io::state_names(&chain);
    let mut rows = Vec::new();
    let mut t = Table::new(&["lambda", "state", "label", "sigma_moment", "tau_moment"]);
    for &l in &lambdas {
        match hitting::geometric_moments(chain.kernel(), &a, l) {
            Ok(g) => {
                rows.push(json!({
                    "lambda": num(l),
                    "finite": true,
                    "error": null,
                    "sigma_moment": nums(&g.sigma_moment),
                    "tau_moment": nums(&g.tau_moment),
                    "L": num(g.l),
                    "sup_tau": num(g.sup_tau),
                    "taboo_radius": num(g.taboo_radius),
                }));
                for (x, name) in names.iter().enumerate() {
                    t.push(vec![cell(l), x.to_string(), name.clone(), cell(g.sigma_moment[x]), cell(g.tau_moment[x])]);
                }
            }
            Err(e) => rows.push(json!({"lambda": num(l), "finite": false, "error": e.to_string()})),
        }
    }
    let mut rep = Report::new(
        "moments",
        obj(json!({"chain": path_str(&c.chain), "set": set_json(&a), "lambda": nums(&lambdas)})),
    );
    rep.set("moments", Value::Array(rows));
    finish(out, rep, Some(t))?;
    Ok(ExitCode::SUCCESS)
}

fn override_certificate(
    chain: &FiniteChain,
    set: &StateSet,
    cert: &CertificateArgs,
) -> Result<Option<MinorizationCertificate>, Failure> {
    match (cert.delta, &cert.nu) {
        (Some(d), Some(nu)) => {
            let nu = io::parse_floats(nu)?;
            MinorizationCertificate::new(chain, set.clone(), d, nu)
                .map(Some)
                .map_err(|e| Failure::input(anyhow!("invalid certificate: {e}")))
        }
        _ => Ok(None),
    }
}

fn certificate(
    chain: &FiniteChain,
    set: &StateSet,
    cert: &CertificateArgs,
) -> Result<MinorizationCertificate, Failure> {
    match override_certificate(chain, set, cert)? {
        Some(c) => Ok(c),
        None => chain.find_minorization(set).map_err(msg),
    }
}

fn cert_params(cert: &CertificateArgs) -> Value {
    match (cert.delta, &cert.nu) {
        (Some(d), Some(nu)) => json!({"delta": num(d), "nu": nu}),
        _ => Value::Null,
    }
}

fn sidecar_for(out: &Path) -> PathBuf {
    out.with_extension("sidecar.json")
}

fn split(c: &ChainArgs, set: &str, cert: &CertificateArgs, sidecar: Option<PathBuf>, out: &OutputArgs) -> Exit {
    require_json(out, "split")?;
    let chain = load(c)?;
    let a = io::parse_set(&chain, set)?;
    let cert_used = certificate(&chain, &a, cert)?;
    let sc = build_split_chain(&chain, &cert_used).map_err(msg)?;
    let reach = sc.reachable_chain().map_err(|e| Failure::runtime(anyhow!("{e}")))?;
    let reachable = sc.reachable();
    let n = sc.base_states();
    let labels: Vec<String> = match reach.labels() {
        Some(ls) => ls.to_vec(),
        None => reachable.iter().map(|&i| if i < n { format!("{i}#0") } else { format!("{}#1", i - n) }).collect(),
    };
    let doc = io::chain_document(io::chain_rows(&reach), Some(&labels));
    let bytes = report::json_bytes(&doc).map_err(Failure::runtime)?;
    report::emit(&bytes, out.out.as_deref()).map_err(Failure::runtime)?;

    let side_path = sidecar.or_else(|| out.out.as_deref().map(sidecar_for));
    if let Some(p) = side_path {
        let mut rep = Report::new(
            "split",
            obj(json!({"chain": path_str(&c.chain), "set": set_json(&a), "certificate": cert_params(cert)})),
        );
        let split_pi: Vec<f64> = reachable.iter().map(|&i| sc.split_pi()[i]).collect();
        rep.set("delta", num(cert_used.delta()))
            .set("nu", nums(cert_used.nu()))
            .set("nu_mass_on_set", num(cert_used.nu_mass()))
            .set("base_states", n)
            .set("atom", set_json(&sc.reachable_atom()))
            .set("split_pi", nums(&split_pi))
            .set("reachable", json!(reachable))
            .set("dead_states", json!(sc.dead_states()))
            .set("dead_states_unreachable", sc.dead_states_unreachable())
            .set("invariance_residual", num(sc.invariance_residual()))
            .set("reversibility_residual", num(sc.reversibility_residual()));
        let bytes = report::json_bytes(&rep.into_value()).map_err(Failure::runtime)?;
        report::emit(&bytes, Some(&p)).map_err(Failure::runtime)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn squared(c: &ChainArgs, set: &str, cert: &CertificateArgs, out: &OutputArgs) -> Exit {
    require_json(out, "squared")?;
    let chain = load(c)?;
    let a = io::parse_set(&chain, set)?;
    let cert_used = certificate(&chain, &a, cert)?;
    let sq = squared_chain(&chain, &cert_used).map_err(msg)?;
    let spectral = match sq.as_chain() {
        Ok(c2) => match c2.spectral_r0() {
            Ok(s) => json!({"irreducible": true, "r0": num(s.r0)}),
            Err(e) => json!({"irreducible": true, "error": e.to_string()}),
        },
        Err(_) => json!({"irreducible": false}),
    };
    let rows: Vec<Vec<f64>> = (0..chain.n_states()).map(|x| sq.kernel.row(x)).collect();
    let mut rep = Report::new(
        "squared",
        obj(json!({"chain": path_str(&c.chain), "set": set_json(&a), "certificate": cert_params(cert)})),
    );
    rep.set("kernel", matrix(rows))
        .set("pi", nums(&sq.pi))
        .set("delta", num(cert_used.delta()))
        .set("delta_bar", num(sq.delta_bar()))
        .set("nu", nums(sq.cert.nu()))
        .set("is_atom", sq.atom_measure.is_some())
        .set("atom_measure", sq.atom_measure.as_deref().map_or(Value::Null, nums))
        .set("spectral", spectral);
    finish(out, rep, None)?;
    Ok(ExitCode::SUCCESS)
}

fn eval_options(l: &LambdaArgs, certificate: Option<MinorizationCertificate>) -> Result<EvalOptions, Failure> {
    let lambda = match &l.lambda {
        Some(s) => LambdaSpec::Values(io::parse_floats(s)?),
        None => {
            if l.grid == 0 {
                return Err(Failure::input(anyhow!("--grid needs at least one point")));
            }
            if !(0.0..0.5).contains(&l.margin) {
                return Err(Failure::input(anyhow!("--margin {} outside [0, 0.5)", l.margin)));
            }
            LambdaSpec::Grid { points: l.grid, margin: l.margin }
        }
    };
    Ok(EvalOptions { lambda, certificate, max_steps: l.max_steps.max(1), horizon: l.horizon })
}

fn lambda_params(opts: &EvalOptions) -> Value {
    let lambda = match &opts.lambda {
        LambdaSpec::Values(v) => json!({"values": nums(v)}),
        LambdaSpec::Grid { points, margin } => json!({"grid": points, "margin": num(*margin)}),
    };
    json!({"lambda": lambda, "max_steps": opts.max_steps, "horizon": opts.horizon})
}

fn parse_bound(name: &str) -> Result<BoundName, Failure> {
    BoundName::parse(name).ok_or_else(|| {
        let known: Vec<&str> = BoundName::ALL.iter().map(|b| b.as_str()).collect();
        Failure::input(anyhow!("unknown bound {name:?}; expected one of {}", known.join(", ")))
    })
}

fn parse_bound_list(spec: &str) -> Result<Vec<BoundName>, Failure> {
    if spec.trim() == "all" {
        return Ok(BoundName::ALL.to_vec());
    }
    let names: Vec<BoundName> =
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse_bound).collect::<Result<_, _>>()?;
    if names.is_empty() {
        return Err(Failure::input(anyhow!("empty bound list")));
    }
    Ok(names)
}

fn check_dp(dp: f64) -> Result<f64, Failure> {
    if !(dp >= 0.0 && dp.is_finite()) {
        return Err(Failure::input(anyhow!("--dp {dp} must be a finite non-negative number")));
    }
    Ok(dp)
}

/// The reported point: smallest `Gamma_inf` for curves, smallest bound for
/// the hitting moment, largest `dP` threshold for the general bound.
fn select(e: &Evaluation) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in e.points.iter().enumerate() {
        let score = match &p.outcome {
            Ok(Outcome::Curve(c)) => c.stationary_factor(),
            Ok(Outcome::HitMoment { m_bound, .. }) => *m_bound,
            Ok(Outcome::General(g)) => -g.threshold,
            Err(_) => continue,
        };
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

fn warnings_json<W: fmt::Display>(ws: &[W]) -> Value {
    Value::Array(ws.iter().map(|w| Value::String(w.to_string())).collect())
}

fn point_json(p: &Point) -> Value {
    let mut m = Map::new();
    m.insert("lambda".into(), opt_num(p.lambda));
    match &p.outcome {
        Ok(o) => {
            m.insert("feasible".into(), true.into());
            m.insert("reason".into(), Value::Null);
            match o {
                Outcome::Curve(c) => {
                    m.insert("constants".into(), named(&c.constants));
                    m.insert("stationary_factor".into(), num(c.stationary_factor()));
                    m.insert("warnings".into(), warnings_json(&c.warnings));
                }
                Outcome::HitMoment { m_bound, exact_sup } => {
                    m.insert("M_bound".into(), num(*m_bound));
                    m.insert("exact_sup".into(), opt_num(*exact_sup));
                }
                Outcome::General(g) => {
                    m.insert("M0".into(), num(g.m0));
                    m.insert("threshold".into(), num(g.threshold));
                }
            }
        }
        Err(r) => {
            m.insert("feasible".into(), false.into());
            m.insert("reason".into(), r.to_string().into());
        }
    }
    Value::Object(m)
}

fn threshold_json(t: Option<f64>) -> Value {
    match t {
        Some(t) if t.is_infinite() => "inf".into(),
        t => opt_num(t),
    }
}

struct BoundArgs<'a> {
    name: &'a str,
    chain: &'a ChainArgs,
    set: &'a str,
    lambda: &'a LambdaArgs,
    cert: &'a CertificateArgs,
    n: usize,
    with_exact: bool,
    dp: Option<f64>,
    steps: &'a str,
    output: &'a OutputArgs,
}

fn bound(b: BoundArgs<'_>) -> Exit {
    let name = parse_bound(b.name)?;
    if b.output.format == Format::Csv && !name.has_curve() {
        return Err(Failure::input(anyhow!("{name} has no rate curve; use --format json")));
    }
    let chain = load(b.chain)?;
    let a = io::parse_set(&chain, b.set)?;
    let cert = override_certificate(&chain, &a, b.cert)?;
    let opts = eval_options(b.lambda, cert)?;
    let dp = b.dp.map(check_dp).transpose()?;
    let steps = io::parse_counts(b.steps)?;

    let mut params = obj(json!({
        "name": name.as_str(),
        "chain": path_str(&b.chain.chain),
        "set": set_json(&a),
        "certificate": cert_params(b.cert),
        "n": b.n,
        "with_exact": b.with_exact,
        "dp": opt_num(dp),
        "steps": steps,
    }));
    params.extend(obj(lambda_params(&opts)));
    let mut rep = Report::new("bound", params);
    rep.set("name", name.as_str());

    let exact = b.with_exact.then(|| chain.tv_profile(b.n));
    let mut header = vec!["n", "bound"];
    if b.with_exact {
        header.push("exact");
    }
    let mut t = Table::new(&header);

    let e = match evaluate(name, &chain, &a, &opts) {
        Ok(e) => e,
        Err(p) => {
            rep.set("feasibility", json!({"feasible": false, "reason": p.to_string(), "precondition": true}))
                .set("exact", exact.as_deref().map_or(Value::Null, nums));
            finish(b.output, rep, Some(t))?;
            return Ok(ExitCode::SUCCESS);
        }
    };

    let feasible = e.is_feasible();
    let reason = if feasible { Value::Null } else { e.first_infeasibility().map(|r| r.to_string()).into() };
    let feasible_points = e.points.iter().filter(|p| p.outcome.is_ok()).count();
    rep.set("inputs", named(&e.inputs))
        .set("window", e.window.map_or(Value::Null, |w| json!({"upper": num(w.upper), "binding": w.binding})))
        .set(
            "feasibility",
            json!({
                "feasible": feasible,
                "reason": reason,
                "precondition": false,
                "feasible_points": feasible_points,
                "points": e.points.len(),
            }),
        );

    let selected = select(&e).map(|i| &e.points[i]);
    rep.set("selected", selected.map_or(Value::Null, point_json));
    match selected.map(|p| &p.outcome) {
        Some(Ok(Outcome::HitMoment { m_bound, exact_sup })) => {
            rep.set("M_bound", num(*m_bound)).set("exact_sup", opt_num(*exact_sup));
        }
        Some(Ok(Outcome::General(g))) => {
            rep.set("lambda", num(g.lambda)).set("M0", num(g.m0)).set("threshold", num(g.threshold));
        }
        _ => {}
    }
    let curve = match selected.map(|p| &p.outcome) {
        Some(Ok(Outcome::Curve(c))) => Some(c.curve(b.n)),
        _ => None,
    };
    let envelope = e.envelope(b.n);
    rep.set("curve", curve.as_deref().map_or(Value::Null, nums))
        .set("envelope", envelope.as_deref().map_or(Value::Null, nums))
        .set("exact", exact.as_deref().map_or(Value::Null, nums))
        .set("warnings", warnings_json(&e.warnings))
        .set("points", Value::Array(e.points.iter().map(point_json).collect()));

    if let Some(dp) = dp {
        let kernel: Vec<Value> =
            steps.iter().map(|&k| json!({"n": k, "bound": opt_num(e.kernel_bound(k, dp))})).collect();
        rep.set(
            "perturbation",
            json!({
                "dp": num(dp),
                "validity_threshold": threshold_json(e.validity_threshold()),
                "stationary_bound": opt_num(e.stationary_bound(dp)),
                "kernel_bounds": kernel,
            }),
        );
    }

    if let Some(env) = &envelope {
        for (k, v) in env.iter().enumerate() {
            let mut row = vec![k.to_string(), cell(*v)];
            if let Some(x) = &exact {
                row.push(cell(x[k]));
            }
            t.push(row);
        }
    }
    finish(b.output, rep, Some(t))?;
    Ok(ExitCode::SUCCESS)
}

struct PerturbArgs<'a> {
    chain: &'a ChainArgs,
    set: &'a str,
    perturbed: Option<&'a Path>,
    epsilon: f64,
    seed: u64,
    write_perturbed: Option<&'a Path>,
    bound: &'a str,
    steps: &'a str,
    lambda: &'a LambdaArgs,
    output: &'a OutputArgs,
}

fn holds(bound: f64, exact: f64) -> bool {
    bound + VIOLATION_TOL >= exact
}

fn perturb(p: PerturbArgs<'_>) -> Exit {
    let chain = load(p.chain)?;
    let a = io::parse_set(&chain, p.set)?;
    let names = parse_bound_list(p.bound)?;
    let steps = io::parse_counts(p.steps)?;
    let opts = eval_options(p.lambda, None)?;

    let (tilde, dp, source) = match p.perturbed {
        Some(path) => {
            let t = io::load_chain(path)?;
            if t.n_states() != chain.n_states() {
                return Err(Failure::input(anyhow!(
                    "perturbed chain has {} states, base chain has {}",
                    t.n_states(),
                    chain.n_states()
                )));
            }
            let dp = linalg::sup_row_l1(t.matrix(), chain.matrix());
            (t, dp, json!({"source": "file", "path": path_str(path)}))
        }
        None => {
            if !(p.epsilon >= 0.0 && p.epsilon.is_finite()) {
                return Err(Failure::input(anyhow!("--epsilon {} must be finite and non-negative", p.epsilon)));
            }
            let pert = perturb_chain(&chain, p.epsilon, p.seed).map_err(msg)?;
            let src = json!({
                "source": "random",
                "epsilon": num(p.epsilon),
                "seed": p.seed,
                "epsilon_used": num(pert.epsilon),
                "attempts": pert.attempts,
            });
            (pert.chain, pert.dp, src)
        }
    };
    if let Some(w) = p.write_perturbed {
        let doc = io::chain_document(io::chain_rows(&tilde), tilde.labels());
        let bytes = report::json_bytes(&doc).map_err(Failure::runtime)?;
        report::emit(&bytes, Some(w)).map_err(Failure::runtime)?;
    }

    let exact_stationary = linalg::l1(tilde.stationary().as_slice(), chain.stationary().as_slice());
    let exact_kernel: Vec<f64> =
        steps.iter().map(|&k| linalg::sup_row_l1(&tilde.kernel().power(k), &chain.kernel().power(k))).collect();

    let mut all_hold = true;
    let mut rows = Vec::new();
    let mut t = Table::new(&["bound", "quantity", "n", "bound_value", "exact", "holds"]);
    for name in names {
        let e = match evaluate(name, &chain, &a, &opts) {
            Ok(e) => e,
            Err(pre) => {
                rows.push(json!({"name": name.as_str(), "status": "rejected", "reason": pre.to_string()}));
                continue;
            }
        };
        if !e.is_feasible() {
            let reason = e.first_infeasibility().map(|r| r.to_string());
            rows.push(json!({"name": name.as_str(), "status": "infeasible", "reason": reason}));
            continue;
        }
        let stationary = e.stationary_bound(dp);
        let s_holds = stationary.map(|b| holds(b, exact_stationary));
        all_hold &= s_holds.unwrap_or(true);
        t.push(vec![
            name.as_str().into(),
            "stationary".into(),
            String::new(),
            opt_cell(stationary),
            cell(exact_stationary),
            s_holds.map(|h| h.to_string()).unwrap_or_default(),
        ]);
        let mut kernel = Vec::new();
        for (&k, &x) in steps.iter().zip(&exact_kernel) {
            let kb = e.kernel_bound(k, dp);
            let h = kb.map(|b| holds(b, x));
            all_hold &= h.unwrap_or(true);
            kernel.push(json!({"n": k, "bound": opt_num(kb), "exact": num(x), "holds": h}));
            if let Some(b) = kb {
                t.push(vec![
                    name.as_str().into(),
                    "kernel".into(),
                    k.to_string(),
                    cell(b),
                    cell(x),
                    h.unwrap().to_string(),
                ]);
            }
        }
        rows.push(json!({
            "name": name.as_str(),
            "status": "feasible",
            "reason": null,
            "validity_threshold": threshold_json(e.validity_threshold()),
            "stationary": {"bound": opt_num(stationary), "exact": num(exact_stationary), "holds": s_holds},
            "kernel": kernel,
        }));
    }

    let mut params = obj(json!({
        "chain": path_str(&p.chain.chain),
        "set": set_json(&a),
        "bound": p.bound,
        "steps": steps,
        "perturbation": source,
    }));
    params.extend(obj(lambda_params(&opts)));
    let mut rep = Report::new("perturb", params);
    rep.set("dp", num(dp))
        .set("exact", json!({"stationary": num(exact_stationary), "kernel": nums(&exact_kernel)}))
        .set("bounds", Value::Array(rows))
        .set("all_hold", all_hold);
    finish(p.output, rep, Some(t))?;
    Ok(if all_hold { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

struct VerifyArgs<'a> {
    bound: &'a str,
    recipe: Option<&'a str>,
    trials: usize,
    seed: u64,
    min_states: usize,
    max_states: usize,
    n_max: usize,
    perturbations: usize,
    laziness: Option<f64>,
    records: bool,
    identities: Option<usize>,
    audit: Option<usize>,
    threads: usize,
    output: &'a OutputArgs,
}

/// Runs the trials of one sweep on `threads` workers; aggregation sorts by
/// trial index, so the result does not depend on scheduling.
fn sweep(cfg: &SuiteConfig, threads: usize) -> SoundnessReport {
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<TrialRecord>> = Mutex::new(Vec::with_capacity(cfg.trials));
    thread::scope(|s| {
        for _ in 0..threads.clamp(1, cfg.trials.max(1)) {
            s.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= cfg.trials {
                    break;
                }
                let r = run_trial(cfg, t);
                done.lock().expect("trial results").push(r);
            });
        }
    });
    aggregate(cfg, done.into_inner().expect("trial results"))
}

fn kind_json(k: &ViolationKind) -> Value {
    match k {
        ViolationKind::Curve { n } => json!({"kind": "curve", "n": n}),
        ViolationKind::HitMoment => json!({"kind": "hitmoment"}),
        ViolationKind::Stationary { dp } => json!({"kind": "stationary", "dp": num(*dp)}),
        ViolationKind::Kernel { n, dp } => json!({"kind": "kernel", "n": n, "dp": num(*dp)}),
    }
}

fn violation_json(v: &Violation) -> Value {
    let mut m = obj(kind_json(&v.kind));
    m.insert("lambda".into(), opt_num(v.lambda));
    m.insert("bound".into(), num(v.bound));
    m.insert("exact".into(), num(v.exact));
    Value::Object(m)
}

fn set_record_json(s: &SetRecord) -> Value {
    let (status, reason) = match &s.status {
        SetStatus::Feasible => ("feasible", None),
        SetStatus::Infeasible(r) => ("infeasible", Some(r.as_str())),
        SetStatus::Rejected(r) => ("rejected", Some(r.as_str())),
    };
    json!({
        "set": s.set,
        "status": status,
        "reason": reason,
        "inputs": named(&s.inputs),
        "feasible_points": s.feasible_points,
        "checks": s.checks,
        "curve_slack": opt_num(s.curve_slack),
        "stationary_slack": opt_num(s.stationary_slack),
        "stationary_ratio": opt_num(s.stationary_ratio),
        "violations": s.violations.iter().map(violation_json).collect::<Vec<_>>(),
    })
}

fn sweep_json(rep: &SoundnessReport, with_records: bool) -> Value {
    let mut violations = Vec::new();
    for r in &rep.records {
        for s in &r.sets {
            for v in &s.violations {
                let mut m = obj(violation_json(v));
                m.insert("trial".into(), r.trial.into());
                m.insert("chain_seed".into(), r.chain_seed.into());
                m.insert("n_states".into(), r.n_states.into());
                m.insert("set".into(), json!(s.set));
                violations.push(Value::Object(m));
            }
        }
    }
    let mut m = obj(json!({
        "bound": rep.bound.as_str(),
        "recipe": rep.construction.as_str(),
        "seed": rep.seed,
        "trials": rep.trials,
        "feasible": rep.feasible,
        "checks": rep.checks,
        "violations": rep.violations,
        "passed": rep.passed(),
        "min_curve_slack": opt_num(rep.min_curve_slack),
        "min_stationary_slack": opt_num(rep.min_stationary_slack),
        "max_stationary_ratio": opt_num(rep.max_stationary_ratio),
        "violation_list": violations,
    }));
    if with_records {
        let records: Vec<Value> = rep
            .records
            .iter()
            .map(|r| {
                json!({
                    "trial": r.trial,
                    "chain_seed": r.chain_seed,
                    "n_states": r.n_states,
                    "sets": r.sets.iter().map(set_record_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        m.insert("records".into(), Value::Array(records));
    }
    Value::Object(m)
}

fn audit_json(a: &AuditReport) -> Value {
    json!({
        "draws": a.draws,
        "rejected": a.rejected,
        "claims": a.claims,
        "refusals": a.refusals,
        "conditions": a.conditions,
        "ambiguous": a.ambiguous,
        "dishonest": a.dishonest,
        "passed": a.passed(),
        "failures": a.failures.iter().map(|f| json!({
            "draw": f.draw,
            "target": f.target,
            "condition": f.condition,
            "lhs": num(f.lhs),
            "rhs": num(f.rhs),
        })).collect::<Vec<_>>(),
    })
}

fn verify(v: VerifyArgs<'_>) -> Exit {
    let bounds = parse_bound_list(v.bound)?;
    let recipe = match v.recipe {
        Some(r) => Some(Construction::parse(r).ok_or_else(|| {
            let known: Vec<&str> = Construction::ALL.iter().map(|c| c.as_str()).collect();
            Failure::input(anyhow!("unknown recipe {r:?}; expected one of {}", known.join(", ")))
        })?),
        None => None,
    };
    if v.min_states < 2 || v.max_states < v.min_states {
        return Err(Failure::input(anyhow!("state range {}..={} needs 2 <= min <= max", v.min_states, v.max_states)));
    }
    if let Some(l) = v.laziness {
        if !(0.0..1.0).contains(&l) {
            return Err(Failure::input(anyhow!("--laziness {l} outside [0, 1)")));
        }
    }
    let threads = if v.threads == 0 { thread::available_parallelism().map_or(1, |n| n.get()) } else { v.threads };

    let mut passed = true;
    let mut total_violations = 0;
    let mut sweeps = Vec::new();
    let mut t = Table::new(&[
        "bound",
        "recipe",
        "trials",
        "feasible",
        "checks",
        "violations",
        "min_curve_slack",
        "min_stationary_slack",
    ]);
    for b in bounds {
        let construction = recipe.unwrap_or_else(|| admissible_construction(b));
        let mut cfg = SuiteConfig::new(b, construction, v.trials, v.seed);
        cfg.min_states = v.min_states;
        cfg.max_states = v.max_states;
        cfg.n_max = v.n_max;
        cfg.perturbations = v.perturbations;
        cfg.laziness = v.laziness;
        let rep = sweep(&cfg, threads);
        passed &= rep.passed();
        total_violations += rep.violations;
        t.push(vec![
            b.as_str().into(),
            construction.as_str().into(),
            rep.trials.to_string(),
            rep.feasible.to_string(),
            rep.checks.to_string(),
            rep.violations.to_string(),
            opt_cell(rep.min_curve_slack),
            opt_cell(rep.min_stationary_slack),
        ]);
        sweeps.push(sweep_json(&rep, v.records));
    }

    let params = obj(json!({
        "bound": v.bound,
        "recipe": v.recipe.unwrap_or("admissible"),
        "trials": v.trials,
        "seed": v.seed,
        "min_states": v.min_states,
        "max_states": v.max_states,
        "n_max": v.n_max,
        "perturbations": v.perturbations,
        "laziness": opt_num(v.laziness),
        "records": v.records,
        "identities": v.identities,
        "audit": v.audit,
    }));
    let mut rep = Report::new("verify", params);
    rep.set("sweeps", Value::Array(sweeps));
    if let Some(k) = v.identities {
        let reps = identity_suite(k, v.seed);
        passed &= reps.iter().all(|r| r.complete());
        let rows: Vec<Value> = reps
            .iter()
            .map(|r| {
                json!({
                    "name": r.name,
                    "trials": r.trials,
                    "attempts": r.attempts,
                    "checked": r.checked,
                    "failures": r.failures,
                    "max_residual": num(r.max_residual),
                    "complete": r.complete(),
                })
            })
            .collect();
        rep.set("identities", Value::Array(rows));
    }
    if let Some(draws) = v.audit {
        let a = feasibility_audit(draws, v.seed);
        passed &= a.passed();
        rep.set("audit", audit_json(&a));
    }
    rep.set("violations", total_violations).set("passed", passed);
    finish(v.output, rep, Some(t))?;
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
