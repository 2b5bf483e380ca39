//! Experiment driver: configuration, seeded parallel runs, aggregation and
//! the tolerance checks behind `experiment --assert`.
//!
//! Every run reports a flat map of named metrics. Aggregate rows are
//! computed from those maps only, so they can be rebuilt from the raw
//! JSON-lines output.

use std::collections::BTreeMap;
use std::io::Write;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::relative_bad_path_length;
use crate::bipartite::balanced_runtime_budget;
use crate::error::{Error, Result};
use crate::graph::{GraphInstance, InstanceSpec};
use crate::operators::{
    default_path_budget, run, Algorithm, NullSemantics, RunRecord, RunSpec, StoppingCriterion,
};
use crate::solution::{brute_force_min_cover, known_opt, OptimumInfo};
use crate::walks::{
    barrier_walk_hitting_time, jump_walk_sample, jump_walk_threshold, barrier_walk_expected,
    trial_rng, WalkKind, WalkSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PathScaling,
    BadPathLengths,
    BipartiteSuccess,
    WalkValidation,
    CouplingCheck,
    OracleEquivalence,
}

/// How many iterations a run may take.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BudgetRule {
    Fixed { iterations: u64 },
    /// Feasibility phase plus `20 n^4` (EA, RLS) or `20 n^3` (Balanced).
    PathDefault,
    /// `balanced_runtime_budget(L, R/L, multiplier)`.
    BipartiteTheorem { multiplier: f64 },
}

impl BudgetRule {
    pub fn resolve(&self, g: &GraphInstance, algorithm: Algorithm) -> Result<u64> {
        match *self {
            BudgetRule::Fixed { iterations } => Ok(iterations),
            BudgetRule::PathDefault => Ok(default_path_budget(algorithm, g.n())),
            BudgetRule::BipartiteTheorem { multiplier } => {
                let (l, r) = g.partition_sizes().ok_or_else(|| {
                    Error::Configuration("bipartite budget on a non-bipartite instance".into())
                })?;
                balanced_runtime_budget(l, r as f64 / l as f64, multiplier)
            }
        }
    }
}

/// Acceptance tolerances checked by `--assert`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Expectations {
    pub ea_slope: (f64, f64),
    pub balanced_slope: (f64, f64),
    /// Balanced mean must be below the EA mean from this `n` on.
    pub balanced_faster_from: usize,
    pub min_median_bad_path: f64,
    pub max_skips_per_cell: u64,
    pub min_balanced_success: f64,
    pub min_rls_failure_or_trap: f64,
    /// Relative tolerance on the barrier-walk mean.
    pub barrier_rel_tol: f64,
    pub min_jump_fraction: f64,
}

impl Default for Expectations {
    fn default() -> Self {
        Self {
            ea_slope: (3.3, 4.7),
            balanced_slope: (2.3, 3.7),
            balanced_faster_from: 41,
            min_median_bad_path: 0.2,
            max_skips_per_cell: 2,
            min_balanced_success: 0.95,
            min_rls_failure_or_trap: 0.10,
            barrier_rel_tol: 0.03,
            min_jump_fraction: 16.0 / 25.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Aggregate CSV path.
    pub csv: Option<std::path::PathBuf>,
    /// Raw JSON-lines path.
    pub raw: Option<std::path::PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    /// Walk grid for `walk_validation`.
    #[serde(default)]
    pub walks: Vec<WalkSpec>,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    pub runs_per_cell: u64,
    pub master_seed: u64,
    pub budget: Option<BudgetRule>,
    /// Per-algorithm budget rules, keyed by algorithm name.
    #[serde(default)]
    pub budget_overrides: BTreeMap<Algorithm, BudgetRule>,
    #[serde(default)]
    pub null_semantics: NullSemantics,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub expectations: Expectations,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn budget_for(&self, algorithm: Algorithm) -> Option<&BudgetRule> {
        self.budget_overrides.get(&algorithm).or(self.budget.as_ref())
    }

    /// Structural checks; returns warnings for cells that run descriptively.
    pub fn validate(&self) -> Result<Vec<String>> {
        let cfg = |m: String| Err(Error::Configuration(m));
        if self.runs_per_cell == 0 {
            return cfg("runs_per_cell must be at least 1".into());
        }
        if self.workers == Some(0) {
            return cfg("workers must be at least 1".into());
        }
        let mut warnings = Vec::new();
        if self.kind == ExperimentKind::WalkValidation {
            if self.walks.is_empty() {
                return cfg("walk_validation needs a non-empty `walks` grid".into());
            }
            for w in &self.walks {
                w.validated()?;
            }
            return Ok(warnings);
        }
        if self.instances.is_empty() {
            return cfg("empty instance grid".into());
        }
        if self.algorithms.is_empty() {
            return cfg("no algorithms selected".into());
        }
        for alg in &self.algorithms {
            if self.kind != ExperimentKind::OracleEquivalence && self.budget_for(*alg).is_none() {
                return cfg(format!("no budget rule for {alg}"));
            }
        }
        for spec in &self.instances {
            match (self.kind, spec) {
                (ExperimentKind::PathScaling, InstanceSpec::Path(_)) => {}
                (ExperimentKind::BadPathLengths, InstanceSpec::Path(n)) if n % 2 == 1 => {}
                (ExperimentKind::BadPathLengths, _) => {
                    return cfg(format!("bad_path_lengths needs odd paths, got {spec}"));
                }
                (ExperimentKind::PathScaling, _) => {
                    return cfg(format!("path_scaling needs paths, got {spec}"));
                }
                (
                    ExperimentKind::BipartiteSuccess | ExperimentKind::CouplingCheck,
                    InstanceSpec::Bipartite { left, right },
                ) => {
                    if self.algorithms.contains(&Algorithm::BalancedEa) && *right <= 2 * left {
                        warnings.push(format!(
                            "{spec}: ratio R/L = {} does not exceed 2, Balanced EA cell is descriptive",
                            Ratio::new(*right, *left)
                        ));
                    }
                }
                (ExperimentKind::BipartiteSuccess | ExperimentKind::CouplingCheck, _) => {
                    return cfg(format!("{:?} needs complete bipartite instances, got {spec}", self.kind));
                }
                _ => {}
            }
        }
        if self.kind == ExperimentKind::CouplingCheck
            && self.algorithms.iter().any(|&a| a != Algorithm::BalancedEa)
        {
            warnings.push("the shadow coupling is stated for the Balanced EA only".into());
        }
        Ok(warnings)
    }
}

/// Stable per-run seed from `(master_seed, instance, algorithm, run)`.
pub fn derive_seed(master_seed: u64, instance: &str, algorithm: &str, run: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(instance.as_bytes());
    h.update([0u8]);
    h.update(algorithm.as_bytes());
    h.update([0u8]);
    h.update(run.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// One run's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub instance: String,
    pub algorithm: String,
    pub run: u64,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub instance: String,
    pub algorithm: String,
    pub statistic: String,
    /// Sample mean.
    pub value: f64,
    pub count: u64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub std_err: f64,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl AggregateRow {
    pub fn from_samples(instance: &str, algorithm: &str, statistic: &str, samples: &[f64]) -> Self {
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let (value, std_err) = if xs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mean = xs.iter().sum::<f64>() / n;
            let se = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            (mean, se)
        };
        let q = |p| if xs.is_empty() { f64::NAN } else { quantile(&xs, p) };
        Self {
            instance: instance.into(),
            algorithm: algorithm.into(),
            statistic: statistic.into(),
            value,
            count: xs.len() as u64,
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
            std_err,
        }
    }
}

/// Aggregates every metric of every `(instance, algorithm)` cell, in first
/// appearance order of cells and lexicographic order of metrics.
pub fn aggregate(raw: &[RawRecord]) -> Vec<AggregateRow> {
    let mut cells: Vec<(String, String)> = Vec::new();
    let mut samples: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in raw {
        let key = (r.instance.clone(), r.algorithm.clone());
        let idx = match cells.iter().position(|c| *c == key) {
            Some(i) => i,
            None => {
                cells.push(key);
                cells.len() - 1
            }
        };
        for (name, &v) in &r.metrics {
            samples.entry((idx, name.clone())).or_default().push(v);
        }
    }
    samples
        .iter()
        .map(|((idx, name), xs)| {
            let (inst, alg) = &cells[*idx];
            AggregateRow::from_samples(inst, alg, name, xs)
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw<W: Write>(raw: &[RawRecord], mut out: W) -> Result<()> {
    for r in raw {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residuals in log space.
    pub residual_norm: f64,
}

/// Least-squares fit of `ln time` against `ln n`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("need at least two points".into()));
    }
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all n are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LogLogFit {
        slope,
        intercept,
        residual_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<AggregateRow>,
    pub raw: Vec<RawRecord>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn row(&self, instance: &str, algorithm: &str, statistic: &str) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.instance == instance && r.algorithm == algorithm && r.statistic == statistic)
    }
}

struct Cell {
    label: String,
    algorithm: Algorithm,
    graph: GraphInstance,
    optimum: Option<OptimumInfo>,
    budget: u64,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn run_metrics(
    kind: ExperimentKind,
    cell: &Cell,
    rec: &RunRecord,
) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };
    put("iterations", rec.iterations as f64);
    put("budget_exhausted", flag(!rec.completed));
    if let Some(t) = rec.t_feasible {
        put("t_feasible", t as f64);
    }
    match kind {
        ExperimentKind::PathScaling => {
            if let Some(t) = rec.t_optimal {
                put("runtime", t as f64);
            }
        }
        ExperimentKind::BadPathLengths => {
            let opt = cell.optimum.as_ref().expect("paths have a known optimum").size as u64;
            if rec.completed {
                // stopped at the first state with fitness <= OPT + 1
                let skipped = rec.terminal_fitness == opt;
                put("skipped", flag(skipped));
                let len = if skipped {
                    Ratio::from_integer(0)
                } else {
                    relative_bad_path_length(cell.graph.n(), &rec.terminal)?
                };
                put("relative_bad_path", *len.numer() as f64 / *len.denom() as f64);
            }
        }
        ExperimentKind::BipartiteSuccess => {
            let success = rec.t_optimal.is_some();
            let trapped = rec.trapped.unwrap_or(false);
            put("success", flag(success));
            put("trapped", flag(trapped));
            put("failure_or_trap", flag(!success || trapped));
            if let Some(t) = rec.t_optimal {
                put("iterations_to_success", t as f64);
            }
        }
        ExperimentKind::CouplingCheck => {
            let times = rec.bipartite.as_ref().expect("bipartite runs carry times");
            put("coupling_violation", flag(times.coupling_violation.is_some()));
            put("absorption_violation", flag(times.absorption_violation.is_some()));
            put("ordering_holds", flag(times.ordering_holds()));
            for (name, t) in [
                ("t_l", times.t_l),
                ("t_r_prime", times.t_r_prime),
                ("t_r", times.t_r),
                ("t_s", times.t_s),
            ] {
                if let Some(t) = t {
                    put(name, t as f64);
                }
            }
        }
        ExperimentKind::OracleEquivalence => {
            let opt = cell.optimum.as_ref().expect("oracle optimum").size;
            put("terminal_ones", rec.terminal_ones as f64);
            put("oracle_size", opt as f64);
            put(
                "matches_oracle",
                flag(rec.terminal_feasible && rec.terminal_ones == opt),
            );
        }
        ExperimentKind::WalkValidation => unreachable!("walks have no run record"),
    }
    Ok(m)
}

fn build_cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for spec in &config.instances {
        let graph = spec.build()?;
        let optimum = match config.kind {
            ExperimentKind::OracleEquivalence => Some(brute_force_min_cover(&graph)?),
            _ => known_opt(&graph),
        };
        for &algorithm in &config.algorithms {
            let budget = match config.budget_for(algorithm) {
                Some(rule) => rule.resolve(&graph, algorithm)?,
                None => 1_000_000,
            };
            cells.push(Cell {
                label: spec.to_string(),
                algorithm,
                graph: graph.clone(),
                optimum: optimum.clone(),
                budget,
            });
        }
    }
    Ok(cells)
}

fn run_spec(config: &ExperimentConfig, cell: &Cell) -> RunSpec {
    let mut stop = StoppingCriterion::optimum_or_budget(cell.budget);
    if config.kind == ExperimentKind::BadPathLengths {
        let opt = cell.optimum.as_ref().expect("odd path").size as u64;
        stop.target_fitness = Some(opt + 1);
    }
    RunSpec::new(cell.algorithm, stop)
        .with_optimum(cell.optimum.clone())
        .with_null_semantics(config.null_semantics)
        .with_shadow(config.kind == ExperimentKind::CouplingCheck)
}

fn run_cells(config: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<RawRecord>> {
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..config.runs_per_cell).map(move |r| (c, r)))
        .collect();
    tasks
        .par_iter()
        .map(|&(c, r)| {
            let cell = &cells[c];
            let seed = derive_seed(config.master_seed, &cell.label, cell.algorithm.name(), r);
            let rec = run(&cell.graph, &run_spec(config, cell), seed, &mut ())?;
            let metrics = run_metrics(config.kind, cell, &rec)?;
            Ok(RawRecord {
                instance: cell.label.clone(),
                algorithm: cell.algorithm.name().into(),
                run: r,
                seed,
                metrics,
                record: Some(rec),
            })
        })
        .collect()
}

fn walk_label(w: &WalkSpec) -> String {
    match w.kind {
        WalkKind::Barrier => format!("barrier:d={}:q={}", w.d, w.q),
        WalkKind::Jump => format!("jump:d={}:p={}:q={}", w.d, w.p, w.q),
    }
}

fn run_walks(config: &ExperimentConfig) -> Result<Vec<RawRecord>> {
    let tasks: Vec<(usize, u64)> = (0..config.walks.len())
        .flat_map(|c| (0..config.runs_per_cell).map(move |r| (c, r)))
        .collect();
    tasks
        .par_iter()
        .map(|&(c, r)| {
            let w = &config.walks[c];
            let label = walk_label(w);
            let kind = match w.kind {
                WalkKind::Barrier => "barrier",
                WalkKind::Jump => "jump",
            };
            let seed = derive_seed(config.master_seed, &label, kind, 0);
            let mut rng = trial_rng(seed, r);
            let (t, threshold) = match w.kind {
                WalkKind::Barrier => (
                    barrier_walk_hitting_time(w, &mut rng),
                    barrier_walk_expected(w.d, w.q)?,
                ),
                WalkKind::Jump => (jump_walk_sample(w, &mut rng), jump_walk_threshold(w.d, w.p, w.q)),
            };
            let mut metrics = BTreeMap::new();
            metrics.insert("hitting_time".into(), t as f64);
            metrics.insert("at_least_threshold".into(), flag(t as f64 >= threshold));
            Ok(RawRecord {
                instance: label,
                algorithm: kind.into(),
                run: r,
                seed,
                metrics,
                record: None,
            })
        })
        .collect()
}

fn mean_of(output_rows: &[AggregateRow], inst: &str, alg: &str, stat: &str) -> Option<f64> {
    output_rows
        .iter()
        .find(|r| r.instance == inst && r.algorithm == alg && r.statistic == stat)
        .map(|r| r.value)
}

fn checks(config: &ExperimentConfig, rows: &[AggregateRow], raw: &[RawRecord]) -> Result<Vec<Check>> {
    let e = &config.expectations;
    let mut out = Vec::new();
    let mut check = |name: String, passed: bool, detail: String| {
        out.push(Check {
            name,
            passed,
            detail,
        })
    };
    let labels: Vec<String> = config.instances.iter().map(|s| s.to_string()).collect();
    let exhausted = |inst: &str, alg: &str| {
        mean_of(rows, inst, alg, "budget_exhausted").unwrap_or(0.0)
    };
    match config.kind {
        ExperimentKind::PathScaling => {
            for alg in &config.algorithms {
                let name = alg.name();
                let mut points = Vec::new();
                for (spec, label) in config.instances.iter().zip(&labels) {
                    let InstanceSpec::Path(n) = spec else { continue };
                    if let Some(m) = mean_of(rows, label, name, "runtime") {
                        points.push((*n as f64, m));
                    }
                    let ex = exhausted(label, name);
                    check(
                        format!("{label}/{name}: no budget exhaustion"),
                        ex == 0.0,
                        format!("exhausted fraction {ex}"),
                    );
                }
                let range = match alg {
                    Algorithm::Ea => Some(e.ea_slope),
                    Algorithm::BalancedEa => Some(e.balanced_slope),
                    Algorithm::Rls => None,
                };
                if let (Some((lo, hi)), Ok(fit)) = (range, fit_loglog_slope(&points)) {
                    check(
                        format!("{name}: log-log slope in [{lo}, {hi}]"),
                        (lo..=hi).contains(&fit.slope),
                        format!("slope {:.3}, residual {:.3}", fit.slope, fit.residual_norm),
                    );
                }
            }
            if config.algorithms.contains(&Algorithm::Ea)
                && config.algorithms.contains(&Algorithm::BalancedEa)
            {
                for (spec, label) in config.instances.iter().zip(&labels) {
                    let InstanceSpec::Path(n) = spec else { continue };
                    if *n < e.balanced_faster_from {
                        continue;
                    }
                    let ea = mean_of(rows, label, "ea", "runtime");
                    let bal = mean_of(rows, label, "balanced", "runtime");
                    if let (Some(ea), Some(bal)) = (ea, bal) {
                        check(
                            format!("{label}: balanced mean below EA mean"),
                            bal < ea,
                            format!("balanced {bal:.0}, ea {ea:.0}"),
                        );
                    }
                }
            }
        }
        ExperimentKind::BadPathLengths => {
            for label in &labels {
                for alg in &config.algorithms {
                    let name = alg.name();
                    let median = rows
                        .iter()
                        .find(|r| r.instance == *label && r.algorithm == name && r.statistic == "relative_bad_path")
                        .map(|r| r.median)
                        .unwrap_or(f64::NAN);
                    check(
                        format!("{label}/{name}: median relative bad path >= {}", e.min_median_bad_path),
                        median >= e.min_median_bad_path,
                        format!("median {median:.4}"),
                    );
                    let skips = raw
                        .iter()
                        .filter(|r| r.instance == *label && r.algorithm == name)
                        .filter(|r| r.metrics.get("skipped") == Some(&1.0))
                        .count() as u64;
                    check(
                        format!("{label}/{name}: at most {} skips", e.max_skips_per_cell),
                        skips <= e.max_skips_per_cell,
                        format!("{skips} runs skipped the OPT+1 level"),
                    );
                }
            }
        }
        ExperimentKind::BipartiteSuccess => {
            for (spec, label) in config.instances.iter().zip(&labels) {
                let InstanceSpec::Bipartite { left, right } = spec else { continue };
                for alg in &config.algorithms {
                    let name = alg.name();
                    match alg {
                        Algorithm::BalancedEa if *right > 2 * left => {
                            let s = mean_of(rows, label, name, "success").unwrap_or(0.0);
                            check(
                                format!("{label}/{name}: success >= {}", e.min_balanced_success),
                                s >= e.min_balanced_success,
                                format!("success fraction {s:.3}"),
                            );
                        }
                        Algorithm::Rls => {
                            let f = mean_of(rows, label, name, "failure_or_trap").unwrap_or(0.0);
                            check(
                                format!("{label}/{name}: failure or trap >= {}", e.min_rls_failure_or_trap),
                                f >= e.min_rls_failure_or_trap,
                                format!("failure-or-trap fraction {f:.3}"),
                            );
                        }
                        _ => {}
                    }
                }
            }
        }
        ExperimentKind::WalkValidation => {
            for w in &config.walks {
                let label = walk_label(w);
                let kind = match w.kind {
                    WalkKind::Barrier => "barrier",
                    WalkKind::Jump => "jump",
                };
                match w.kind {
                    WalkKind::Barrier => {
                        let expected = barrier_walk_expected(w.d, w.q)?;
                        let mean = mean_of(rows, &label, kind, "hitting_time").unwrap_or(f64::NAN);
                        let rel = (mean / expected - 1.0).abs();
                        check(
                            format!("{label}: mean within {} of d^2/(2q)", e.barrier_rel_tol),
                            rel <= e.barrier_rel_tol,
                            format!("mean {mean:.2}, expected {expected:.2}"),
                        );
                    }
                    WalkKind::Jump => {
                        let frac = mean_of(rows, &label, kind, "at_least_threshold").unwrap_or(0.0);
                        check(
                            format!("{label}: fraction above threshold >= {:.2}", e.min_jump_fraction),
                            frac >= e.min_jump_fraction,
                            format!("fraction {frac:.4}"),
                        );
                    }
                }
            }
        }
        ExperimentKind::CouplingCheck => {
            for label in &labels {
                for alg in &config.algorithms {
                    let name = alg.name();
                    let cell: Vec<&RawRecord> = raw
                        .iter()
                        .filter(|r| r.instance == *label && r.algorithm == name)
                        .collect();
                    let count = |k: &str| {
                        cell.iter().filter(|r| r.metrics.get(k) == Some(&1.0)).count()
                    };
                    let violations = count("coupling_violation");
                    let absorption = count("absorption_violation");
                    let ordered = count("ordering_holds");
                    check(
                        format!("{label}/{name}: coupling holds"),
                        violations == 0,
                        format!("{violations} runs violated R_t ⊆ S_t"),
                    );
                    check(
                        format!("{label}/{name}: T_S <= T'_R <= T_R"),
                        ordered == cell.len(),
                        format!("{} of {} runs ordered", ordered, cell.len()),
                    );
                    check(
                        format!("{label}/{name}: absorption after T_L"),
                        absorption == 0,
                        format!("{absorption} runs violated absorption"),
                    );
                }
            }
        }
        ExperimentKind::OracleEquivalence => {
            for (spec, label) in config.instances.iter().zip(&labels) {
                let g = spec.build()?;
                if let Some(known) = known_opt(&g) {
                    let brute = brute_force_min_cover(&g)?;
                    check(
                        format!("{label}: known optimum matches enumeration"),
                        known.size == brute.size && known.unique == brute.unique,
                        format!(
                            "known {} (unique {:?}), enumerated {} (unique {:?})",
                            known.size, known.unique, brute.size, brute.unique
                        ),
                    );
                }
                for alg in &config.algorithms {
                    let name = alg.name();
                    let m = mean_of(rows, label, name, "matches_oracle").unwrap_or(0.0);
                    check(
                        format!("{label}/{name}: terminal size equals optimum"),
                        m == 1.0,
                        format!("fraction matching {m:.3}"),
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Runs every cell of `config` and aggregates the results.
///
/// Output is identical for a fixed config regardless of `workers`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let warnings = config.validate()?;
    let work = || -> Result<Vec<RawRecord>> {
        if config.kind == ExperimentKind::WalkValidation {
            run_walks(config)
        } else {
            run_cells(config, &build_cells(config)?)
        }
    };
    let raw = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Configuration(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let rows = aggregate(&raw);
    let checks = checks(config, &rows, &raw)?;
    let mut warnings = warnings;
    for r in &rows {
        if r.statistic == "budget_exhausted" && r.value > 0.0 {
            warnings.push(format!(
                "{}/{}: {} of {} runs exhausted the budget",
                r.instance,
                r.algorithm,
                (r.value * r.count as f64).round(),
                r.count
            ));
        }
    }
    Ok(ExperimentOutput {
        rows,
        raw,
        checks,
        warnings,
    })
}

/// Table rows for a `bipartite_success` config.
pub fn bipartite_success_table(config: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    if config.kind != ExperimentKind::BipartiteSuccess {
        return Err(Error::Configuration("expected a bipartite_success config".into()));
    }
    let out = run_experiment(config)?;
    Ok(out
        .rows
        .into_iter()
        .filter(|r| {
            matches!(
                r.statistic.as_str(),
                "success" | "trapped" | "failure_or_trap" | "iterations_to_success"
            )
        })
        .collect())
}

/// Path grid of the bad-path figure: `51 + 10k` for `k` in `0..16`.
pub fn bad_path_grid() -> Vec<InstanceSpec> {
    (0..16).map(|k| InstanceSpec::Path(51 + 10 * k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_cfg(kind: ExperimentKind, ns: &[usize], runs: u64) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            instances: ns.iter().map(|&n| InstanceSpec::Path(n)).collect(),
            walks: vec![],
            algorithms: vec![Algorithm::Ea, Algorithm::BalancedEa],
            runs_per_cell: runs,
            master_seed: 42,
            budget: Some(BudgetRule::PathDefault),
            budget_overrides: BTreeMap::new(),
            null_semantics: NullSemantics::default(),
            workers: None,
            expectations: Expectations::default(),
            output: OutputSpec::default(),
        }
    }

    #[test]
    fn loglog_examples() {
        let fit = fit_loglog_slope(&[(10.0, 1e4), (100.0, 1e8)]).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-12);
        let fit = fit_loglog_slope(&[(10.0, 1e3), (100.0, 1e6)]).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        let fit = fit_loglog_slope(&[(10.0, 7.0), (20.0, 7.0), (40.0, 7.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!(fit.residual_norm < 1e-12);
        assert!(fit_loglog_slope(&[(10.0, 0.0), (20.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(10.0, 1.0)]).is_err());
    }

    #[test]
    fn quantiles_are_ordered() {
        let row = AggregateRow::from_samples("i", "a", "s", &[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((row.min, row.q1, row.median, row.q3, row.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(row.value, 3.0);
        let row = AggregateRow::from_samples("i", "a", "s", &[1.0, 2.0]);
        assert_eq!(row.median, 1.5);
        assert_eq!(row.q1, 1.25);
    }

    #[test]
    fn seeds_depend_on_every_component() {
        let base = derive_seed(1, "path:11", "ea", 0);
        assert_eq!(base, derive_seed(1, "path:11", "ea", 0));
        assert_ne!(base, derive_seed(2, "path:11", "ea", 0));
        assert_ne!(base, derive_seed(1, "path:13", "ea", 0));
        assert_ne!(base, derive_seed(1, "path:11", "rls", 0));
        assert_ne!(base, derive_seed(1, "path:11", "ea", 1));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = path_cfg(ExperimentKind::BadPathLengths, &[10], 1);
        assert!(matches!(cfg.validate(), Err(Error::Configuration(_))));
        cfg.instances = vec![InstanceSpec::Path(11)];
        cfg.runs_per_cell = 0;
        assert!(cfg.validate().is_err());
        cfg.runs_per_cell = 1;
        cfg.budget = None;
        assert!(cfg.validate().is_err());
        let mut cfg = path_cfg(ExperimentKind::BipartiteSuccess, &[11], 1);
        assert!(cfg.validate().is_err());
        cfg.instances = vec![InstanceSpec::Bipartite { left: 1, right: 2 }];
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn path_scaling_is_deterministic_across_workers() {
        let mut cfg = path_cfg(ExperimentKind::PathScaling, &[9, 11], 3);
        cfg.workers = Some(1);
        let a = run_experiment(&cfg).unwrap();
        cfg.workers = Some(3);
        let b = run_experiment(&cfg).unwrap();
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_csv(&a.rows, &mut ca).unwrap();
        write_csv(&b.rows, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn aggregates_rebuild_from_raw_json() {
        let cfg = path_cfg(ExperimentKind::BadPathLengths, &[21], 5);
        let out = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_raw(&out.raw, &mut buf).unwrap();
        let parsed: Vec<RawRecord> = std::str::from_utf8(&buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(aggregate(&parsed), out.rows);
    }

    #[test]
    fn bad_path_runs_stop_one_above_optimum() {
        let cfg = path_cfg(ExperimentKind::BadPathLengths, &[21], 6);
        let out = run_experiment(&cfg).unwrap();
        for r in &out.raw {
            let rec = r.record.as_ref().unwrap();
            assert!(rec.completed);
            assert!(rec.terminal_fitness <= 11);
            let len = r.metrics["relative_bad_path"];
            assert!((0.0..=1.0).contains(&len));
        }
    }

    #[test]
    fn csv_header_matches_columns() {
        let rows = vec![AggregateRow::from_samples("path:5", "ea", "runtime", &[1.0])];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "instance,algorithm,statistic,value,count,min,q1,median,q3,max,std_err"
        );
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{
            "kind": "bipartite_success",
            "instances": ["bipartite:4x12"],
            "algorithms": ["balanced", "rls"],
            "runs_per_cell": 4,
            "master_seed": 9,
            "budget": {"rule": "bipartite_theorem", "multiplier": 50},
            "budget_overrides": {"rls": {"rule": "fixed", "iterations": 20000}}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.budget_for(Algorithm::Rls), Some(&BudgetRule::Fixed { iterations: 20000 }));
        let table = bipartite_success_table(&cfg).unwrap();
        assert!(table.iter().any(|r| r.algorithm == "balanced" && r.statistic == "success"));
        let back = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&back).unwrap(), cfg);
    }

    #[test]
    fn walk_validation_runs() {
        let cfg = ExperimentConfig {
            kind: ExperimentKind::WalkValidation,
            walks: vec![WalkSpec::barrier(4, 0.5).unwrap(), WalkSpec::jump(10, 0.2, 0.001).unwrap()],
            runs_per_cell: 2000,
            ..path_cfg(ExperimentKind::WalkValidation, &[], 1)
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.raw.len(), 4000);
        let mean = out.row("barrier:d=4:q=0.5", "barrier", "hitting_time").unwrap().value;
        assert!((mean - 16.0).abs() < 1.5, "{mean}");
    }

    #[test]
    fn oracle_equivalence_on_small_paths() {
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Ea, Algorithm::BalancedEa],
            budget: Some(BudgetRule::Fixed { iterations: 100_000 }),
            ..path_cfg(ExperimentKind::OracleEquivalence, &[3, 4, 7], 3)
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.all_passed(), "{:?}", out.checks);
    }
}
