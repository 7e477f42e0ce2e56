//! Config-driven pipelines and randomized verification suites.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::complement::{
    complement_dense, eigen_transfer_check_dense, induced_apply, recommended_excursion, schur_frobenius_residual_dense, RESOLVENT_MARGIN,
};
use crate::error::{Error, Result};
use crate::instances::{random_interval_doc, random_irreducible, random_nonnegative, random_partition, random_split, random_stochastic, rng_for, MatrixInstance};
use crate::interval::{build_and_validate, lebesgue_deviation, p_coefficients, ring_doc, splitting_experiment, IntervalDoc, IntervalOptions, McConfig};
use crate::io::{read_json, to_canonical_json, write_text};
use crate::linalg::{perron_root, spectral_radius, submatrix};
use crate::metastability::{coupling_decomposition, splitting_limit, SplittingOptions};
use crate::potential::{default_eps_grid, pressure_estimate, CylinderPotential, FamilyDoc};
use crate::shift::{MarkovShift, ShiftDoc, Word};
use crate::transfer::{assemble_operator, perron_triplet, OperatorMatrix, DEFAULT_MAXITER, DEFAULT_TOL};

/// Inline value or `{"file": path}` relative to the config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    File { file: String },
    Inline(T),
}

impl<T: serde::de::DeserializeOwned + Clone> Source<T> {
    pub fn load(&self, base: &Path) -> Result<T> {
        match self {
            Source::File { file } => read_json(&base.join(file)),
            Source::Inline(t) => Ok(t.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QScheduleSpec {
    /// Nested sets of state identifiers.
    Explicit(Vec<Vec<u32>>),
    /// `Q_n` = first `n` states of every transitive component, `n = 1..=steps`.
    Generated { first_per_component: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "Tolerances::pressure")]
    pub pressure: f64,
    #[serde(default = "Tolerances::extrapolation")]
    pub extrapolation: f64,
    #[serde(default = "Tolerances::mass_eta")]
    pub mass_eta: f64,
}

impl Tolerances {
    fn pressure() -> f64 {
        1e-9
    }
    fn extrapolation() -> f64 {
        1e-3
    }
    fn mass_eta() -> f64 {
        1e-2
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { pressure: Self::pressure(), extrapolation: Self::extrapolation(), mass_eta: Self::mass_eta() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub json: Option<String>,
}

fn default_depth() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftExperiment {
    #[serde(default)]
    pub name: Option<String>,
    pub shift: Source<ShiftDoc>,
    pub family: Source<FamilyDoc>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    pub q_schedule: QScheduleSpec,
    #[serde(default)]
    pub test_functions: Vec<Vec<u32>>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub eps: f64,
    #[serde(default)]
    pub chains: Option<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub cell_depth: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalExperiment {
    #[serde(default)]
    pub name: Option<String>,
    pub system: Source<IntervalDoc>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    /// Nested edge sets; defaults to all edges.
    #[serde(default)]
    pub q_schedule: Option<Vec<Vec<u32>>>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub cell_depth: Option<u32>,
    #[serde(default)]
    pub lebesgue_depth: Option<u32>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mc: Option<McSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub suite: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    ShiftExperiment(ShiftExperiment),
    IntervalExperiment(IntervalExperiment),
    VerifySuite(VerifyConfig),
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Where a run wrote its artifacts and whether its checks passed.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub all_passed: bool,
    pub json_path: PathBuf,
    pub csv_path: Option<PathBuf>,
    pub failed_checks: Vec<String>,
}

/// Output locations: explicit paths are relative to the config directory,
/// defaults use the config stem; `out_dir` replaces the directory.
fn output_paths(config_path: &Path, spec: &OutputSpec, out_dir: Option<&Path>) -> (PathBuf, PathBuf) {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    let resolve = |given: &Option<String>, default: String| {
        let rel = given.clone().unwrap_or(default);
        match out_dir {
            Some(d) => d.join(Path::new(&rel).file_name().expect("file name")),
            None => base.join(rel),
        }
    };
    (resolve(&spec.csv, format!("{stem}.csv")), resolve(&spec.json, format!("{stem}.summary.json")))
}

/// Execute a config and write its artifacts.
pub fn run(config_path: &Path, out_dir: Option<&Path>) -> Result<RunOutcome> {
    let cfg = ExperimentConfig::from_path(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    match cfg {
        ExperimentConfig::ShiftExperiment(c) => {
            let (csv_path, json_path) = output_paths(config_path, &c.output, out_dir);
            let (summary, csv, passed, failed) = run_shift(&c, &base)?;
            write_text(&csv_path, &csv)?;
            write_text(&json_path, &to_canonical_json(&summary)?)?;
            Ok(RunOutcome { all_passed: passed, json_path, csv_path: Some(csv_path), failed_checks: failed })
        }
        ExperimentConfig::IntervalExperiment(c) => {
            let (csv_path, json_path) = output_paths(config_path, &c.output, out_dir);
            let (summary, csv, passed, failed) = run_interval(&c, &base)?;
            write_text(&csv_path, &csv)?;
            write_text(&json_path, &to_canonical_json(&summary)?)?;
            Ok(RunOutcome { all_passed: passed, json_path, csv_path: Some(csv_path), failed_checks: failed })
        }
        ExperimentConfig::VerifySuite(c) => {
            let (_, json_path) = output_paths(config_path, &c.output, out_dir);
            let report = verify(&c.suite, c.seed)?;
            write_text(&json_path, &to_canonical_json(&report)?)?;
            let failed = report.properties.iter().filter(|p| !p.passed).map(|p| p.name.clone()).collect();
            Ok(RunOutcome { all_passed: report.all_passed, json_path, csv_path: None, failed_checks: failed })
        }
    }
}

type Pipeline = (Value, String, bool, Vec<String>);

/// Shift pipeline: ε-sweep of splitting coefficients.
pub fn run_shift(c: &ShiftExperiment, base: &Path) -> Result<Pipeline> {
    let shift = MarkovShift::from_doc(&c.shift.load(base)?)?;
    let mut fam_doc = c.family.load(base)?;
    if let (FamilyDoc::Linear { eps, .. }, Some(grid)) = (&mut fam_doc, &c.eps) {
        if eps.is_none() {
            *eps = Some(grid.clone());
        }
    }
    let family = fam_doc.build(&shift)?;
    let q_schedule: Vec<Vec<usize>> = match &c.q_schedule {
        QScheduleSpec::Explicit(sets) => sets.iter().map(|s| shift.states.subset_from_ids(s)).collect::<Result<_>>()?,
        QScheduleSpec::Generated { first_per_component } => {
            let part = crate::shift::transitive_components(&family.limit.finite_pattern());
            crate::metastability::default_q_schedule(&part, *first_per_component)
        }
    };
    let tests = c.test_functions.iter().map(|w| shift.states.word_from_ids(w)).collect::<Result<Vec<Word>>>()?;
    let opts = SplittingOptions {
        depth: c.depth,
        pressure_tol: c.tolerances.pressure,
        extrapolation_tol: c.tolerances.extrapolation,
        mass_eta: c.tolerances.mass_eta,
        ..Default::default()
    };
    let report = splitting_limit(&family, &shift, &q_schedule, &tests, &opts)?;
    let ids = |i: usize| shift.states.id(i).0;
    let csv = report.to_csv(ids);
    let failed: Vec<String> = report.checks.iter().filter(|k| !k.passed).map(|k| k.name.clone()).collect();
    let summary = json!({
        "kind": "shift-experiment",
        "name": c.name,
        "seed": c.seed,
        "state_ids": shift.states.ids().iter().map(|s| s.0).collect::<Vec<_>>(),
        "components": report.components.iter().map(|u| shift.states.ids_of(u)).collect::<Vec<_>>(),
        "q_schedule": report.q_schedule.iter().map(|q| shift.states.ids_of(q)).collect::<Vec<_>>(),
        "delta": report.delta_limit,
        "delta_sum": report.delta_sum,
        "a_limit": report.a_limit,
        "delta_q_limit": report.delta_q_limit,
        "component_pressures": report.component_pressures,
        "limit_test_masses": report.limit_test_masses,
        "checks": report.checks,
        "all_passed": report.all_passed,
        "report": report,
    });
    Ok((summary, csv, report.all_passed, failed))
}

/// Interval pipeline: geometric potential family, p-coefficients, Monte Carlo.
pub fn run_interval(c: &IntervalExperiment, base: &Path) -> Result<Pipeline> {
    let doc = c.system.load(base)?;
    let (fam, _) = build_and_validate(&doc, c.eps.clone().unwrap_or_else(default_eps_grid))?;
    let g = &fam.system.graph;
    let edge_index = |id: &u32| -> Result<usize> { g.edge_ids.binary_search(id).map_err(|_| Error::UnknownState(*id)) };
    let q_schedule: Vec<Vec<usize>> = match &c.q_schedule {
        Some(sets) => sets.iter().map(|s| s.iter().map(edge_index).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?,
        None => vec![(0..g.n_edges()).collect()],
    };
    let defaults = IntervalOptions::default();
    let opts = IntervalOptions {
        depth: c.depth,
        cell_depth: c.cell_depth.unwrap_or(defaults.cell_depth),
        lebesgue_depth: c.lebesgue_depth.unwrap_or(defaults.lebesgue_depth),
        splitting: SplittingOptions {
            depth: c.depth,
            pressure_tol: c.tolerances.pressure,
            extrapolation_tol: c.tolerances.extrapolation,
            mass_eta: c.tolerances.mass_eta,
            ..Default::default()
        },
        mc: c.mc.as_ref().map(|m| {
            let d = McConfig::new(m.eps, c.seed);
            McConfig {
                chains: m.chains.unwrap_or(d.chains),
                burn_in: m.burn_in.unwrap_or(d.burn_in),
                steps: m.steps.unwrap_or(d.steps),
                cell_depth: m.cell_depth.unwrap_or(d.cell_depth),
                ..d
            }
        }),
    };
    let report = splitting_experiment(&fam, &q_schedule, &opts)?;
    let csv = report.to_csv();
    let failed: Vec<String> = report.checks.iter().filter(|k| !k.passed).map(|k| k.name.clone()).collect();
    let summary = json!({
        "kind": "interval-experiment",
        "name": c.name,
        "seed": c.seed,
        "classes": report.classes,
        "p": report.p_limit,
        "checks": report.checks,
        "all_passed": report.all_passed,
        "report": report,
    });
    Ok((summary, csv, report.all_passed, failed))
}

// ---------------------------------------------------------------------------
// Verification suites

pub const SUITES: [&str; 4] = ["complement-identities", "coupling-identities", "pressure-oracles", "interval-checks"];

/// Pass count and worst value of one property.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub passes: usize,
    pub total: usize,
    pub worst: f64,
    pub tol: f64,
    /// Wall time; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
    /// First failing instance, serialized for replay.
    pub failing: Option<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    pub all_passed: bool,
}

/// Runs `total` instances; each returns `(value, passed, replay)`.
fn property(name: &str, total: usize, tol: f64, f: impl Fn(u64) -> Result<(f64, bool, Value)>) -> Result<PropertyResult> {
    let start = Instant::now();
    let mut passes = 0;
    let mut worst = 0.0f64;
    let mut failing = None;
    for k in 0..total as u64 {
        // a numerical failure on one instance counts against the property
        let (value, ok, replay) = match f(k) {
            Ok(r) => r,
            Err(e @ (Error::Input(_) | Error::Json(_) | Error::Io(_))) => return Err(e),
            Err(e) => (f64::NAN, false, json!({"index": k, "error": e.to_string()})),
        };
        worst = if value.is_nan() { f64::NAN } else { worst.max(value) };
        if ok {
            passes += 1;
        } else if failing.is_none() {
            failing = Some(replay);
        }
    }
    Ok(PropertyResult { name: name.into(), passed: passes == total, passes, total, worst, tol, seconds: start.elapsed().as_secs_f64(), failing })
}

pub fn verify(suite: &str, seed: u64) -> Result<SuiteReport> {
    let properties = match suite {
        "complement-identities" => complement_suite(seed)?,
        "coupling-identities" => coupling_suite(seed)?,
        "pressure-oracles" => pressure_suite(seed)?,
        "interval-checks" => interval_suite(seed)?,
        other => return Err(Error::Input(format!("unknown suite {other:?}; expected one of {}", SUITES.join(", ")))),
    };
    let all_passed = properties.iter().all(|p| p.passed);
    Ok(SuiteReport { suite: suite.into(), seed, properties, all_passed })
}

/// Random nonnegative matrix with a split leaving a resolvent margin at its
/// Perron root; resampled within the instance stream until one does.
pub fn margin_instance(rng: &mut impl Rng) -> Result<(nalgebra::DMatrix<f64>, Vec<usize>, Vec<usize>, f64)> {
    loop {
        let n = rng.random_range(4..=12);
        let m = random_nonnegative(rng, n, 0.6);
        let (u, v) = random_split(rng, n);
        let (lambda, _) = perron_root(&m)?;
        let r_vv = spectral_radius(&submatrix(&m, &v, &v))?;
        if lambda > 0.0 && lambda - r_vv > 1e-3 * lambda {
            return Ok((m, u, v, lambda));
        }
    }
}

/// Random irreducible matrix with a random split.
pub fn irreducible_instance(rng: &mut impl Rng) -> Result<(nalgebra::DMatrix<f64>, Vec<usize>, Vec<usize>, f64)> {
    let n = rng.random_range(4..=12);
    let m = random_irreducible(rng, n, 0.4);
    let (u, v) = random_split(rng, n);
    let (lambda, _) = perron_root(&m)?;
    Ok((m, u, v, lambda))
}

pub fn schur_frobenius_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("schur-frobenius-residual", count, 1e-12, |k| {
        let (m, u, v, lambda) = margin_instance(&mut rng_for(seed, k))?;
        let mut worst = 0.0f64;
        for eta in [lambda, 0.5 * lambda, 1.3 * lambda] {
            worst = worst.max(schur_frobenius_residual_dense(&m, &u, &v, lambda, eta)?);
        }
        Ok((worst, worst < 1e-12, json!(MatrixInstance::new(seed, k, &m, &u, &v, None))))
    })
}

pub fn eigen_transfer_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("eigenvalue-transfer", count, 1e-9, |k| {
        let (m, u, v, lambda) = irreducible_instance(&mut rng_for(seed ^ 0x2, k))?;
        let t = eigen_transfer_check_dense(&m, &u, &v, lambda)?;
        let d = &t.details;
        let worst = d.forward_residual.max(d.backward_residual).max(d.dual_forward_residual).max(d.dual_backward_residual);
        let ok = t.forward && t.backward && t.dual_forward && t.dual_backward;
        Ok((worst, ok, json!(MatrixInstance::new(seed ^ 0x2, k, &m, &u, &v, None))))
    })
}

pub fn complement_radius_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("complement-spectral-radius", count, 1e-10, |k| {
        let (m, u, v, lambda) = irreducible_instance(&mut rng_for(seed ^ 0x3, k))?;
        let (c, _) = complement_dense(&m, &u, &v, lambda, RESOLVENT_MARGIN)?;
        let dev = (spectral_radius(&c)? - lambda).abs() / lambda.max(1.0);
        Ok((dev, dev < 1e-10, json!(MatrixInstance::new(seed ^ 0x3, k, &m, &u, &v, None))))
    })
}

/// Series form against the closed form; the value is `max(tail bound, excess)`
/// where `excess` is the part of the discrepancy the bound does not cover.
pub fn series_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("series-closed-form", count, 1e-8, |k| {
        let mut rng = rng_for(seed ^ 0x4, k);
        let (m, u, v, lambda) = irreducible_instance(&mut rng)?;
        let op = OperatorMatrix::from_dense(&m)?;
        let f: Vec<f64> = (0..m.nrows()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let r_vv = spectral_radius(&submatrix(&m, &v, &v))?;
        let kmax = recommended_excursion(r_vv, lambda, 200.0, v.len());
        let series = induced_apply(&op, &u, &v, lambda, &f, kmax)?;
        let (c, _) = complement_dense(&m, &u, &v, lambda, RESOLVENT_MARGIN)?;
        let fu = nalgebra::DVector::from_iterator(u.len(), u.iter().map(|&i| f[i]));
        let closed = &c * fu;
        let diff = u.iter().enumerate().map(|(a, &i)| (series.value[i] - closed[a]).abs()).fold(0.0, f64::max);
        // rounding allowance scaled by the result size
        let scale = closed.amax().max(1.0) * 1e-11;
        let ok = diff <= series.tail_bound + scale && series.tail_bound < 1e-8;
        let mut inst = MatrixInstance::new(seed ^ 0x4, k, &m, &u, &v, Some(lambda));
        inst.eta = Some(lambda);
        Ok((series.tail_bound.max(diff - scale), ok, json!({"instance": inst, "f": f, "max_excursion": kmax})))
    })
}

fn complement_suite(seed: u64) -> Result<Vec<PropertyResult>> {
    Ok(vec![
        schur_frobenius_property(seed, 100)?,
        eigen_transfer_property(seed, 100)?,
        complement_radius_property(seed, 100)?,
        series_property(seed, 50)?,
    ])
}

pub fn coupling_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("coupling-decomposition", count, 1e-9, |k| {
        let mut rng = rng_for(seed ^ 0x5, k);
        let n = rng.random_range(4..=10);
        let m = random_irreducible(&mut rng, n, 0.5);
        let op = OperatorMatrix::from_dense(&m)?;
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER)?;
        let wlen = rng.random_range(2..=n);
        let mut all: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(all.as_mut_slice(), &mut rng);
        let mut w = all[..wlen].to_vec();
        w.sort_unstable();
        let blocks = rng.random_range(1..=wlen.min(4));
        let part = random_partition(&mut rng, &w, blocks);
        let r = coupling_decomposition(&op, &t, &w, &part)?;
        let res = &r.residuals;
        let worst = res.d_beta.max(res.gamma_e).max(res.gamma_sum).max(res.beta_gamma_sum).max(res.decomposition);
        let replay = json!({"seed": seed ^ 0x5, "index": k, "rows": m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(), "w": w, "partition": part});
        Ok((worst, worst < 1e-9, replay))
    })
}

pub fn normalized_property(seed: u64, count: usize) -> Result<PropertyResult> {
    property("normalized-d-equals-e", count, 1e-10, |k| {
        let mut rng = rng_for(seed ^ 0x6, k);
        let n = rng.random_range(4..=10);
        let p = random_stochastic(&mut rng, n, 0.5);
        let op = OperatorMatrix::from_dense(&p)?;
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER)?;
        let w: Vec<usize> = (0..n).collect();
        let blocks = rng.random_range(2..=n.min(4));
        let part = random_partition(&mut rng, &w, blocks);
        let r = coupling_decomposition(&op, &t, &w, &part)?;
        let worst = r.normalized.as_ref().map_or(f64::INFINITY, |c| c.d_minus_e.max(c.beta_minus_one));
        let replay = json!({"seed": seed ^ 0x6, "index": k, "rows": p.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(), "partition": part});
        Ok((worst, worst < 1e-10, replay))
    })
}

fn coupling_suite(seed: u64) -> Result<Vec<PropertyResult>> {
    Ok(vec![coupling_property(seed, 50)?, normalized_property(seed, 50)?])
}

fn pressure_suite(seed: u64) -> Result<Vec<PropertyResult>> {
    let full = MarkovShift::full(2);
    let zero = CylinderPotential::constant(&full.matrix, 1, 1.0)?;
    let full_prop = property("full-shift-log2", 20, 1e-15, |k| {
        let n = k as usize + 1;
        let e = pressure_estimate(&full, &zero, n)?;
        let dev = (e.p_point - 2f64.ln()).abs();
        Ok((dev, dev <= 1e-15, json!({"n": n})))
    })?;
    let golden = MarkovShift::golden_mean();
    let gphi = CylinderPotential::constant(&golden.matrix, 1, 1.0)?;
    let target = ((1.0 + 5f64.sqrt()) / 2.0).ln();
    let golden_prop = property("golden-mean", 1, 1e-6, |_| {
        let op = assemble_operator(&golden, &golden.matrix, &gphi, 1)?;
        let (lam, _) = perron_root(&op.to_dense())?;
        let e = pressure_estimate(&golden, &gphi, 20)?;
        let dev = (lam.ln() - target).abs().max((e.p_ratio - target).abs());
        let bracket = e.p_low <= target && target <= e.p_high;
        Ok((dev, dev < 1e-6 && bracket, json!({"n": 20})))
    })?;
    let bern = property("bernoulli-zero", 20, 1e-12, |k| {
        let mut rng = rng_for(seed ^ 0x7, k);
        let n = rng.random_range(2..=6);
        let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let shift = MarkovShift::full(n);
        let phi = CylinderPotential::first_symbol(&shift.matrix, &p)?;
        let op = assemble_operator(&shift, &shift.matrix, &phi, 1)?;
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER)?;
        let dev = t.pressure().abs();
        Ok((dev, dev < 1e-12, json!({"weights": p})))
    })?;
    let brackets = property("random-bracket-contains-pressure", 30, 1e-12, |k| {
        let mut rng = rng_for(seed ^ 0x8, k);
        let n = rng.random_range(2..=6);
        let m = random_irreducible(&mut rng, n, 0.5);
        let (lam, _) = perron_root(&m)?;
        let support = crate::shift::TransitionMatrix::from_edges(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| m[(i, j)] > 0.0))?;
        let shift = MarkovShift::new(crate::shift::StateSpace::range(n), support)?;
        let phi = CylinderPotential::from_edge_weights(&shift.matrix, &(0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect::<Vec<_>>())?;
        let e = pressure_estimate(&shift, &phi, 12)?;
        // weights on (a, b) enter as the transpose of m; the spectrum agrees
        let p = lam.ln();
        // distance of the true pressure outside the bracket
        let outside = (e.p_low - p).max(p - e.p_high).max(0.0);
        Ok((outside, outside <= 1e-12, json!({"rows": (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>()})))
    })?;
    Ok(vec![full_prop, golden_prop, bern, brackets])
}

fn interval_suite(seed: u64) -> Result<Vec<PropertyResult>> {
    let lebesgue = property("random-tiling-lebesgue-identity", 25, 1e-3, |k| {
        let mut rng = rng_for(seed ^ 0x9, k);
        let v = rng.random_range(1..=3);
        let doc = random_interval_doc(&mut rng, v);
        let (fam, report) = build_and_validate(&doc, vec![0.5])?;
        let sys = fam.limit();
        let phi = crate::interval::geometric_potential(&sys, 1)?.potential;
        let op = assemble_operator(&sys.shift(), phi.matrix(), &phi, 1)?;
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER)?;
        let dev = lebesgue_deviation(&sys, &op, &t, 10).max((t.lambda - 1.0).abs());
        Ok((dev, dev < 1e-3 && report.passed, serde_json::to_value(&doc)?))
    })?;
    let all_edges = |fam: &crate::interval::PerturbedIntervalFamily| (0..fam.system.graph.n_edges()).collect::<Vec<_>>();
    let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0, 1.0], vec![0.5, 0.5]), (vec![1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0]), (vec![1.0, 1.0, 1.0], vec![1.0 / 3.0; 3])];
    let p_prop = property("p-coefficients", cases.len(), 0.02, |k| {
        let (leaks, want) = &cases[k as usize];
        let doc = ring_doc(leaks);
        let (fam, _) = build_and_validate(&doc, vec![1e-3])?;
        let p = p_coefficients(&fam, 1e-3, &all_edges(&fam), 1)?;
        let dev = p.values.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((dev, dev < 0.02, json!({"leaks": leaks, "p": p.values})))
    })?;
    let splitting = property("two-half-splitting", 1, 0.0, |_| {
        let (fam, _) = build_and_validate(&ring_doc(&[1.0, 2.0]), (2..=12).map(|k| 0.5f64.powi(k)).collect())?;
        let q = vec![all_edges(&fam)];
        let r = splitting_experiment(&fam, &q, &IntervalOptions::default())?;
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Ok((failed.len() as f64, failed.is_empty(), json!({"failed": failed})))
    })?;
    Ok(vec![lebesgue, p_prop, splitting])
}

// ---------------------------------------------------------------------------
// Schemas

/// JSON schemas of the accepted inputs.
pub fn schemas() -> Value {
    let num = json!({"type": "number"});
    let id_list = json!({"type": "array", "items": {"type": "integer", "minimum": 0}});
    let source = |inner: Value| json!({"oneOf": [inner, {"type": "object", "required": ["file"], "properties": {"file": {"type": "string"}}}]});
    let shift = json!({
        "type": "object",
        "required": ["states", "edges"],
        "properties": {
            "states": id_list,
            "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
            "labels": {"type": "array", "items": {"type": "string"}},
            "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
        },
        "additionalProperties": false
    });
    let window_table = json!({"type": "array", "items": {"type": "array", "prefixItems": [id_list, num], "minItems": 2, "maxItems": 2}});
    let potential = json!({
        "type": "object",
        "required": ["depth", "weights"],
        "properties": {"depth": {"type": "integer", "minimum": 1}, "weights": window_table, "tail_bound": num},
        "additionalProperties": false
    });
    let family = json!({"oneOf": [
        {"type": "object", "required": ["eps", "members", "limit"], "properties": {"eps": {"type": "array", "items": num}, "members": {"type": "array", "items": potential}, "limit": potential}},
        {"type": "object", "required": ["depth", "base"], "properties": {"eps": {"type": "array", "items": num}, "depth": {"type": "integer"}, "base": window_table, "slope": window_table, "normalize": {"type": "boolean"}}}
    ]});
    let interval = json!({
        "type": "object",
        "required": ["vertices", "intervals", "edges"],
        "properties": {
            "vertices": id_list,
            "intervals": {"type": "object", "additionalProperties": {"type": "array", "items": num, "minItems": 2, "maxItems": 2}},
            "edges": {"type": "array", "items": {
                "type": "object",
                "required": ["id", "i", "t", "map"],
                "properties": {
                    "id": {"type": "integer"}, "i": {"type": "integer"}, "t": {"type": "integer"},
                    "map": {"oneOf": [
                        {"type": "object", "required": ["type", "a", "b"], "properties": {"type": {"const": "affine"}, "a": num, "b": num, "da": num, "db": num}},
                        {"type": "object", "required": ["type", "target", "scale_of_eps"], "properties": {"type": {"const": "vanishing"}, "target": num, "scale_of_eps": num}}
                    ]}
                }
            }},
            "tail_bound": num
        }
    });
    let tolerances = json!({"type": "object", "properties": {"pressure": num, "extrapolation": num, "mass_eta": num}, "additionalProperties": false});
    let output = json!({"type": "object", "properties": {"csv": {"type": "string"}, "json": {"type": "string"}}, "additionalProperties": false});
    let eps = json!({"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "description": "strictly decreasing"});
    let config = json!({"oneOf": [
        {
            "type": "object",
            "required": ["kind", "shift", "family", "q_schedule"],
            "properties": {
                "kind": {"const": "shift-experiment"}, "name": {"type": "string"},
                "shift": source(shift.clone()), "family": source(family.clone()), "eps": eps,
                "q_schedule": {"oneOf": [{"type": "array", "items": id_list}, {"type": "object", "required": ["first_per_component"], "properties": {"first_per_component": {"type": "integer", "minimum": 1}}}]},
                "test_functions": {"type": "array", "items": id_list},
                "depth": {"type": "integer", "minimum": 1}, "tolerances": tolerances, "output": output, "seed": {"type": "integer"}
            },
            "additionalProperties": false
        },
        {
            "type": "object",
            "required": ["kind", "system"],
            "properties": {
                "kind": {"const": "interval-experiment"}, "name": {"type": "string"},
                "system": source(interval.clone()), "eps": eps,
                "q_schedule": {"type": "array", "items": id_list},
                "depth": {"type": "integer", "minimum": 1}, "cell_depth": {"type": "integer"}, "lebesgue_depth": {"type": "integer"},
                "tolerances": tolerances,
                "mc": {"type": "object", "required": ["eps"], "properties": {"eps": num, "chains": {"type": "integer"}, "burn_in": {"type": "integer"}, "steps": {"type": "integer"}, "cell_depth": {"type": "integer"}}},
                "output": output, "seed": {"type": "integer"}
            },
            "additionalProperties": false
        },
        {
            "type": "object",
            "required": ["kind", "suite"],
            "properties": {"kind": {"const": "verify-suite"}, "name": {"type": "string"}, "suite": {"enum": SUITES}, "seed": {"type": "integer"}, "output": output},
            "additionalProperties": false
        }
    ]});
    json!({
        "experiment-config": config,
        "shift": shift,
        "potential": potential,
        "family": family,
        "interval-system": interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_q_schedule_is_named() {
        let text = r#"{"kind":"shift-experiment","shift":{"states":[1],"edges":[[1,1]]},"family":{"depth":1,"base":[[[1,1],1.0]]}}"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err().to_string();
        assert!(err.contains("q_schedule"), "{err}");
    }

    #[test]
    fn small_suites_pass() {
        assert!(schur_frobenius_property(1, 5).unwrap().passed);
        assert!(eigen_transfer_property(1, 5).unwrap().passed);
        assert!(complement_radius_property(1, 5).unwrap().passed);
        assert!(series_property(1, 5).unwrap().passed);
        assert!(coupling_property(1, 5).unwrap().passed);
        assert!(normalized_property(1, 5).unwrap().passed);
    }

    #[test]
    fn unknown_suite_is_input_error() {
        assert!(matches!(verify("nope", 0), Err(Error::Input(_))));
    }

    #[test]
    fn schemas_cover_every_kind() {
        let s = schemas();
        assert_eq!(s["experiment-config"]["oneOf"].as_array().unwrap().len(), 3);
    }
}
