//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thermoshift::experiment::{
    complement_radius_property, coupling_property, eigen_transfer_property, normalized_property, run, schur_frobenius_property,
    series_property, verify, PropertyResult,
};
use thermoshift::interval::{build_and_validate, p_coefficients, ring_doc, splitting_experiment, IntervalOptions, McConfig};
use thermoshift::metastability::{four_state_family, four_state_oracle, six_state_family, splitting_limit, SplittingOptions, SplittingReport};
use thermoshift::shift::Word;

const SEED: u64 = 0;

const SCHUR_TOL: f64 = 1e-12;
const SCHUR_SECONDS: f64 = 5.0;
const TRANSFER_SECONDS: f64 = 10.0;
const RADIUS_SECONDS: f64 = 10.0;
const DELTA_TOL: f64 = 1e-2;
const TILDE_SUM_TOL: f64 = 1e-9;
const GAP_RATIO_TOL: f64 = 1e-2;
const BENCHMARK_SECONDS: f64 = 30.0;
const SUBMAXIMAL_WEIGHT: f64 = 1e-3;
const MASS_SLACK: f64 = 1e-8;
const MASS_SUM_TOL: f64 = 1e-3;
const P_TOL: f64 = 0.02;
const MC_L1_TOL: f64 = 0.05;
const LEBESGUE_TOL: f64 = 1e-3;
const INTERVAL_SECONDS: f64 = 120.0;
const MC_ITERATES: usize = 1_000_000;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

fn property_line(p: &PropertyResult) -> String {
    format!("{} {}/{} worst {:.2e} (tol {:.0e}) in {:.2}s", p.name, p.passes, p.total, p.worst, p.tol, p.seconds)
}

fn grid20() -> Vec<f64> {
    (1..=20).map(|k| 0.5f64.powi(k)).collect()
}

fn ac1() -> Outcome {
    let p = schur_frobenius_property(SEED, 100).expect("schur-frobenius suite");
    Outcome::new(p.passed && p.total == 100 && p.tol <= SCHUR_TOL && p.seconds < SCHUR_SECONDS, property_line(&p))
}

fn ac2() -> Outcome {
    let p = eigen_transfer_property(SEED, 100).expect("eigen-transfer suite");
    Outcome::new(p.passed && p.total == 100 && p.tol <= 1e-9 && p.seconds < TRANSFER_SECONDS, property_line(&p))
}

fn ac3() -> Outcome {
    let p = complement_radius_property(SEED, 100).expect("complement-radius suite");
    Outcome::new(p.passed && p.total == 100 && p.tol <= 1e-10 && p.seconds < RADIUS_SECONDS, property_line(&p))
}

fn ac4() -> Outcome {
    let p = series_property(SEED, 50).expect("series suite");
    Outcome::new(p.passed && p.total == 50, property_line(&p))
}

fn ac5() -> Outcome {
    let r = verify("pressure-oracles", SEED).expect("pressure suite");
    let lines: Vec<String> = r.properties.iter().map(property_line).collect();
    Outcome::new(r.all_passed, lines.join("; "))
}

fn ac6() -> Outcome {
    let c = coupling_property(SEED, 50).expect("coupling suite");
    let n = normalized_property(SEED, 50).expect("normalized suite");
    Outcome::new(c.passed && n.passed && c.total == 50 && n.total == 50, format!("{}; {}", property_line(&c), property_line(&n)))
}

fn four_state_report() -> (SplittingReport, f64) {
    let start = Instant::now();
    let (shift, fam) = four_state_family(grid20()).expect("4-state family");
    let q = vec![vec![0, 2], vec![0, 1, 2, 3]];
    let tests = vec![Word(vec![0]), Word(vec![2])];
    let r = splitting_limit(&fam, &shift, &q, &tests, &SplittingOptions::default()).expect("4-state sweep");
    (r, start.elapsed().as_secs_f64())
}

fn ac7(r: &SplittingReport, seconds: f64) -> Outcome {
    let delta_err = (r.delta_limit[0] - 2.0 / 3.0).abs();
    let oracle_err = r
        .points
        .iter()
        .map(|p| (p.per_q.last().unwrap().delta[0] - four_state_oracle(p.eps)).abs())
        .fold(0.0, f64::max);
    let tilde_err = r
        .points
        .iter()
        .flat_map(|p| p.per_q.iter().map(|q| (q.tilde_delta.iter().sum::<f64>() - 1.0).abs()))
        .fold(0.0, f64::max);
    let last = r.points.last().unwrap();
    let gap_err = last
        .per_q
        .iter()
        .flat_map(|q| q.gap_ratio.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, g)| (g - 1.0).abs())))
        .fold(0.0, f64::max);
    let passed = r.points.len() == 20 && delta_err < DELTA_TOL && tilde_err < TILDE_SUM_TOL && gap_err < GAP_RATIO_TOL && seconds < BENCHMARK_SECONDS;
    Outcome::new(
        passed,
        format!(
            "delta(1) = {:.10} (|err| {delta_err:.2e}), max per-eps oracle error {oracle_err:.2e}, max |sum tilde - 1| {tilde_err:.2e}, gap ratio error at 2^-20 {gap_err:.2e}, {seconds:.2}s",
            r.delta_limit[0]
        ),
    )
}

fn six_state_report() -> SplittingReport {
    let (shift, fam) = six_state_family(grid20()).expect("6-state family");
    let q = vec![(0..6).collect::<Vec<_>>()];
    splitting_limit(&fam, &shift, &q, &[], &SplittingOptions::default()).expect("6-state sweep")
}

fn ac8(r: &SplittingReport) -> Outcome {
    let classes = &r.q_classes[0];
    let k = classes.iter().position(|c| c.contains(&4)).expect("class of the sub-maximal block");
    let last = r.points.last().unwrap();
    let w = last.per_q[0].tilde_delta[k];
    Outcome::new(w < SUBMAXIMAL_WEIGHT && !r.components.iter().any(|c| c.contains(&4)), format!("tilde delta of {{5,6}} at eps = {:.3e}: {w:.3e}", last.eps))
}

fn ac9(reports: &[(&str, &SplittingReport)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in reports {
        let bound = r.delta_sum <= 1.0 + MASS_SLACK;
        let sum_ok = !r.mass_check_passed || (r.delta_sum - 1.0).abs() < MASS_SUM_TOL;
        ok &= bound && sum_ok;
        parts.push(format!("{name}: sum {:.12} (mass check {})", r.delta_sum, if r.mass_check_passed { "passed" } else { "not met" }));
    }
    Outcome::new(ok, parts.join("; "))
}

fn interval_reports() -> (Outcome, Vec<SplittingReport>) {
    let start = Instant::now();
    let grid: Vec<f64> = (2..=12).map(|k| 0.5f64.powi(k)).collect();
    let (sym, sym_val) = build_and_validate(&ring_doc(&[1.0, 1.0]), grid.clone()).expect("symmetric system");
    let (asym, asym_val) = build_and_validate(&ring_doc(&[1.0, 2.0]), grid).expect("asymmetric system");
    let all_edges: Vec<usize> = (0..sym.system.graph.n_edges()).collect();
    let p_sym = p_coefficients(&sym, 1e-3, &all_edges, 1).expect("symmetric p");
    let p_asym = p_coefficients(&asym, 1e-3, &all_edges, 1).expect("asymmetric p");
    let mc = McConfig::new(1e-3, SEED);
    let iterates = mc.chains * mc.steps;
    let opts = IntervalOptions { mc: Some(mc), ..Default::default() };
    let r = splitting_experiment(&asym, &[all_edges.clone()], &opts).expect("asymmetric experiment");
    let sym_report = splitting_experiment(&sym, &[all_edges], &IntervalOptions::default()).expect("symmetric experiment");
    let seconds = start.elapsed().as_secs_f64();
    let cmp = r.mc.as_ref().expect("MC comparison");
    let lebesgue = r.points.iter().chain(&sym_report.points).map(|p| p.lebesgue_deviation).fold(0.0, f64::max);
    let sym_err = p_sym.values.iter().map(|p| (p - 0.5).abs()).fold(0.0, f64::max);
    let asym_err = (p_asym.values[0] - 2.0 / 3.0).abs();
    let passed = sym_val.passed
        && asym_val.passed
        && sym_err < P_TOL
        && asym_err < P_TOL
        && iterates >= MC_ITERATES
        && cmp.l1 < MC_L1_TOL
        && lebesgue < LEBESGUE_TOL
        && seconds < INTERVAL_SECONDS;
    let detail = format!(
        "symmetric p = ({:.6}, {:.6}), asymmetric left mass {:.6}, MC {} iterates L1 {:.4}, Lebesgue deviation {lebesgue:.2e}, {seconds:.1}s",
        p_sym.values[0], p_sym.values[1], p_asym.values[0], cmp.report.iterates, cmp.l1
    );
    (Outcome::new(passed, detail), vec![sym_report.splitting, r.splitting])
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ac11() -> Outcome {
    let base = std::env::temp_dir().join(format!("thermoshift-acceptance-{}", std::process::id()));
    let mut ok = true;
    let mut names = Vec::new();
    for cfg in ["metastable-4state.json", "interval-asymmetric.json", "verify-all.json"] {
        let path = configs_dir().join(cfg);
        let a = run(&path, Some(&base.join("a"))).expect("first run");
        let b = run(&path, Some(&base.join("b"))).expect("second run");
        let same = std::fs::read(&a.json_path).unwrap() == std::fs::read(&b.json_path).unwrap();
        let same_csv = match (&a.csv_path, &b.csv_path) {
            (Some(x), Some(y)) => std::fs::read(x).unwrap() == std::fs::read(y).unwrap(),
            (None, None) => true,
            _ => false,
        };
        ok &= same && same_csv;
        names.push(format!("{cfg}: {}", if same && same_csv { "identical" } else { "differs" }));
    }
    let _ = std::fs::remove_dir_all(&base);
    Outcome::new(ok, names.join("; "))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("AC{n:<2} {} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "Schur-Frobenius identity", ac1());
    report(2, "eigenvalue transfer", ac2());
    report(3, "complement spectral radius", ac3());
    report(4, "series and closed form agree", ac4());
    report(5, "pressure oracles", ac5());
    report(6, "coupling decomposition", ac6());
    let (four, seconds) = four_state_report();
    report(7, "four-state benchmark", ac7(&four, seconds));
    let six = six_state_report();
    report(8, "sub-maximal mass decay", ac8(&six));
    let (interval, interval_splittings) = interval_reports();
    let mut all: Vec<(&str, &SplittingReport)> = vec![("four-state", &four), ("six-state", &six)];
    all.push(("interval symmetric", &interval_splittings[0]));
    all.push(("interval asymmetric", &interval_splittings[1]));
    report(9, "mass inequality", ac9(&all));
    report(10, "interval application", interval);
    report(11, "determinism", ac11());
    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.passed).map(|(n, _, _)| *n).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
