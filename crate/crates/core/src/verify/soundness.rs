//! Bound-versus-exact sweeps over seeded random chains.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{candidate_sets, perturb_chain, random_chain, ChainRecipe, Construction, Rng, VIOLATION_TOL};
use crate::bounds::{evaluate, BoundName, EvalOptions, Evaluation, Outcome};
use crate::chain::{FiniteChain, StateSet};
use crate::linalg;

/// Kernel bounds are checked at these `n`.
pub const KERNEL_STEPS: [usize; 4] = [1, 2, 5, 20];
/// Perturbation scale for bounds without a `dP` threshold.
pub const DEFAULT_EPSILON: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub bound: BoundName,
    pub construction: Construction,
    pub trials: usize,
    pub seed: u64,
    pub min_states: usize,
    pub max_states: usize,
    /// Curves are compared for `n = 0..=n_max`.
    pub n_max: usize,
    pub perturbations: usize,
    pub laziness: Option<f64>,
    pub options: EvalOptions,
}

impl SuiteConfig {
    pub fn new(bound: BoundName, construction: Construction, trials: usize, seed: u64) -> Self {
        SuiteConfig {
            bound,
            construction,
            trials,
            seed,
            min_states: 2,
            max_states: 12,
            n_max: 200,
            perturbations: 10,
            laziness: None,
            options: EvalOptions::default(),
        }
    }
}

/// The recipe whose structure every precondition of `bound` is built for.
pub fn admissible_construction(bound: BoundName) -> Construction {
    match bound {
        BoundName::Atomic | BoundName::NonAtomic => Construction::LazyReversible,
        BoundName::ReversibleAtomic => Construction::RandomReversible,
        BoundName::ReversibleNonAtomic => Construction::SquaredReversible,
        BoundName::HitMoment | BoundName::General | BoundName::UniformGeometric => Construction::RandomGeneral,
        BoundName::GammaSeries | BoundName::Dobrushin => Construction::RotationMix,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Curve { n: usize },
    HitMoment,
    Stationary { dp: f64 },
    Kernel { n: usize, dp: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub lambda: Option<f64>,
    pub bound: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetStatus {
    Feasible,
    Infeasible(String),
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetRecord {
    pub set: Vec<usize>,
    pub status: SetStatus,
    pub inputs: Vec<(&'static str, f64)>,
    pub feasible_points: usize,
    pub checks: usize,
    /// `min (bound - exact)` over curve and moment comparisons.
    pub curve_slack: Option<f64>,
    /// `min (bound - exact)` over stationary comparisons.
    pub stationary_slack: Option<f64>,
    /// `max exact / bound` over stationary comparisons with positive bound.
    pub stationary_ratio: Option<f64>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub chain_seed: u64,
    pub n_states: usize,
    pub sets: Vec<SetRecord>,
}

impl TrialRecord {
    pub fn is_feasible(&self) -> bool {
        self.sets.iter().any(|s| s.status == SetStatus::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessReport {
    pub bound: BoundName,
    pub construction: Construction,
    pub seed: u64,
    pub trials: usize,
    /// Trials with at least one feasible evaluation.
    pub feasible: usize,
    pub checks: usize,
    pub violations: usize,
    pub min_curve_slack: Option<f64>,
    pub min_stationary_slack: Option<f64>,
    pub max_stationary_ratio: Option<f64>,
    /// Sorted by trial index.
    pub records: Vec<TrialRecord>,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn fold_min(acc: &mut Option<f64>, v: f64) {
    *acc = Some(acc.map_or(v, |a| a.min(v)));
}

fn fold_max(acc: &mut Option<f64>, v: f64) {
    *acc = Some(acc.map_or(v, |a| a.max(v)));
}

struct Exact {
    tv: Vec<f64>,
    /// `(dp, ||pi~ - pi||, ||P~^n - P^n|| at KERNEL_STEPS)`.
    perturbed: Vec<(f64, f64, Vec<f64>)>,
}

fn kernel_distances(a: &FiniteChain, b: &FiniteChain) -> Vec<f64> {
    let last = *KERNEL_STEPS.last().expect("nonempty");
    let n = a.n_states();
    let mut pa = crate::DMatrix::<f64>::identity(n, n);
    let mut pb = pa.clone();
    let mut out = Vec::with_capacity(KERNEL_STEPS.len());
    for step in 1..=last {
        pa = &pa * a.matrix();
        pb = &pb * b.matrix();
        if KERNEL_STEPS.contains(&step) {
            out.push(linalg::sup_row_l1(&pa, &pb));
        }
    }
    out
}

fn perturbations(chain: &FiniteChain, count: usize, epsilon: f64, rng: &mut Rng) -> Vec<(f64, f64, Vec<f64>)> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let eps = epsilon * rng.open01();
        if let Ok(p) = perturb_chain(chain, eps, rng.next_u64()) {
            let exact = linalg::l1(p.chain.stationary().as_slice(), chain.stationary().as_slice());
            out.push((p.dp, exact, kernel_distances(chain, &p.chain)));
        }
    }
    out
}

fn check_evaluation(e: &Evaluation, exact: &Exact, record: &mut SetRecord) {
    let tol = VIOLATION_TOL;
    for p in &e.points {
        let outcome = match &p.outcome {
            Ok(o) => o,
            Err(_) => continue,
        };
        record.feasible_points += 1;
        match outcome {
            Outcome::Curve(c) => {
                for (n, &t) in exact.tv.iter().enumerate() {
                    let b = c.eval(n);
                    record.checks += 1;
                    fold_min(&mut record.curve_slack, b - t);
                    if b < t - tol {
                        record.violations.push(Violation {
                            kind: ViolationKind::Curve { n },
                            lambda: p.lambda,
                            bound: b,
                            exact: t,
                        });
                    }
                }
                for (dp, dist, kern) in &exact.perturbed {
                    if let Some(b) = c.stationary_bound(*dp) {
                        record.checks += 1;
                        fold_min(&mut record.stationary_slack, b - dist);
                        if b > 0.0 {
                            fold_max(&mut record.stationary_ratio, dist / b);
                        }
                        if *dist > b + tol {
                            record.violations.push(Violation {
                                kind: ViolationKind::Stationary { dp: *dp },
                                lambda: p.lambda,
                                bound: b,
                                exact: *dist,
                            });
                        }
                    }
                    for (k, &n) in KERNEL_STEPS.iter().enumerate() {
                        let b = c.kernel_bound(n, *dp);
                        record.checks += 1;
                        if kern[k] > b + tol {
                            record.violations.push(Violation {
                                kind: ViolationKind::Kernel { n, dp: *dp },
                                lambda: p.lambda,
                                bound: b,
                                exact: kern[k],
                            });
                        }
                    }
                }
            }
            Outcome::HitMoment { m_bound, exact_sup } => {
                if let Some(ex) = exact_sup {
                    record.checks += 1;
                    fold_min(&mut record.curve_slack, m_bound - ex);
                    if *ex > m_bound + tol {
                        record.violations.push(Violation {
                            kind: ViolationKind::HitMoment,
                            lambda: p.lambda,
                            bound: *m_bound,
                            exact: *ex,
                        });
                    }
                }
            }
            Outcome::General(g) => {
                for (dp, dist, _) in &exact.perturbed {
                    if !(*dp <= 0.5 * g.threshold) {
                        continue;
                    }
                    if let Ok(b) = g.bound(*dp) {
                        record.checks += 1;
                        fold_min(&mut record.stationary_slack, b - dist);
                        if b > 0.0 {
                            fold_max(&mut record.stationary_ratio, dist / b);
                        }
                        if *dist > b + tol {
                            record.violations.push(Violation {
                                kind: ViolationKind::Stationary { dp: *dp },
                                lambda: p.lambda,
                                bound: b,
                                exact: *dist,
                            });
                        }
                    }
                }
            }
        }
    }
}

/// Perturbation scale for an evaluation: half its `dP` threshold, at most
/// [`DEFAULT_EPSILON`].
fn epsilon_for(e: &Evaluation) -> Option<f64> {
    match e.validity_threshold()? {
        t if t.is_finite() => Some(0.5 * t),
        _ => Some(DEFAULT_EPSILON),
    }
    .map(|v: f64| v.min(DEFAULT_EPSILON))
}

/// Runs one trial of the sweep.
pub fn run_trial(cfg: &SuiteConfig, trial: usize) -> TrialRecord {
    let mut rng = Rng::stream(cfg.seed, trial as u64);
    let n = rng.between(cfg.min_states.max(2), cfg.max_states.max(cfg.min_states.max(2)));
    let chain_seed = rng.next_u64();
    let mut recipe = ChainRecipe::new(cfg.construction, n, chain_seed);
    if let Some(l) = cfg.laziness {
        recipe = recipe.with_laziness(l);
    }
    let chain = random_chain(&recipe);
    let tv = chain.tv_profile(cfg.n_max);
    let sets = candidate_sets(&mut rng, n);
    let mut records = Vec::with_capacity(sets.len());
    for set in &sets {
        records.push(check_set(cfg, &chain, set, &tv, &mut rng));
    }
    TrialRecord { trial, chain_seed, n_states: n, sets: records }
}

fn check_set(cfg: &SuiteConfig, chain: &FiniteChain, set: &StateSet, tv: &[f64], rng: &mut Rng) -> SetRecord {
    let mut record = SetRecord {
        set: set.members().to_vec(),
        status: SetStatus::Feasible,
        inputs: Vec::new(),
        feasible_points: 0,
        checks: 0,
        curve_slack: None,
        stationary_slack: None,
        stationary_ratio: None,
        violations: Vec::new(),
    };
    let e = match evaluate(cfg.bound, chain, set, &cfg.options) {
        Ok(e) => e,
        Err(p) => {
            record.status = SetStatus::Rejected(format!("{p}"));
            return record;
        }
    };
    record.inputs = e.inputs.clone();
    if !e.is_feasible() {
        let reason = e.first_infeasibility().map(|r| format!("{r}")).unwrap_or_default();
        record.status = SetStatus::Infeasible(reason);
        return record;
    }
    let perturbed = match epsilon_for(&e) {
        Some(eps) if cfg.perturbations > 0 => perturbations(chain, cfg.perturbations, eps, rng),
        _ => Vec::new(),
    };
    let exact = Exact { tv: if e.name == BoundName::HitMoment { vec![] } else { tv.to_vec() }, perturbed };
    check_evaluation(&e, &exact, &mut record);
    record
}

/// Runs `cfg.trials` independent trials and aggregates them.
pub fn soundness_suite(cfg: &SuiteConfig) -> SoundnessReport {
    let records: Vec<TrialRecord> = (0..cfg.trials).map(|t| run_trial(cfg, t)).collect();
    aggregate(cfg, records)
}

/// Aggregates trial records in trial order, whatever order they arrive in.
pub fn aggregate(cfg: &SuiteConfig, mut records: Vec<TrialRecord>) -> SoundnessReport {
    records.sort_by_key(|r| r.trial);
    let mut report = SoundnessReport {
        bound: cfg.bound,
        construction: cfg.construction,
        seed: cfg.seed,
        trials: records.len(),
        feasible: 0,
        checks: 0,
        violations: 0,
        min_curve_slack: None,
        min_stationary_slack: None,
        max_stationary_ratio: None,
        records: Vec::new(),
    };
    for r in &records {
        if r.is_feasible() {
            report.feasible += 1;
        }
        for s in &r.sets {
            report.checks += s.checks;
            report.violations += s.violations.len();
            if let Some(v) = s.curve_slack {
                fold_min(&mut report.min_curve_slack, v);
            }
            if let Some(v) = s.stationary_slack {
                fold_min(&mut report.min_stationary_slack, v);
            }
            if let Some(v) = s.stationary_ratio {
                fold_max(&mut report.max_stationary_ratio, v);
            }
        }
    }
    report.records = records;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_on_lazy_chains() {
        let cfg =
            SuiteConfig { max_states: 6, ..SuiteConfig::new(BoundName::Atomic, Construction::LazyReversible, 20, 7) };
        let r = soundness_suite(&cfg);
        assert_eq!(r.violations, 0);
        assert!(r.feasible > 0);
    }

    #[test]
    fn deterministic() {
        let cfg =
            SuiteConfig { max_states: 5, ..SuiteConfig::new(BoundName::General, Construction::RandomGeneral, 5, 3) };
        assert_eq!(soundness_suite(&cfg), soundness_suite(&cfg));
    }

    #[test]
    fn aggregation_order_independent() {
        let cfg =
            SuiteConfig { max_states: 4, ..SuiteConfig::new(BoundName::Dobrushin, Construction::RandomGeneral, 4, 1) };
        let mut recs: Vec<TrialRecord> = (0..4).map(|t| run_trial(&cfg, t)).collect();
        let a = aggregate(&cfg, recs.clone());
        recs.reverse();
        assert_eq!(a, aggregate(&cfg, recs));
    }
}
