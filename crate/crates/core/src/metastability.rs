//! Maximal-pressure components, coupling matrices and splitting coefficients
//! of perturbed RPF measures.
//!
//! Two routes produce the splitting of `μ_ε` restricted to a finite set `Q`:
//!
//! * `δ_ε(Q,i) = 1 / (1 + Σ_{j≠i} (λ_ε − c_ε(Q,i,j)) / (λ_ε − c_ε(Q,j,i)))`
//!   from spectral radii of Perron complements with a hole at `Q ∩ U(j)`;
//! * `δ̃_ε(k) = 1 / (1 + Σ_{j≠k} B_ε(k,j))` from the escape rates `b_ε`,
//!   which equals `μ_ε(Q(k)) / μ_ε(Q)` exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::complement::{complement_dense, RESOLVENT_MARGIN};
use crate::error::{Error, Result};
use crate::linalg::{dot, neumaier_sum, perron_root, spectral_radius, submatrix};
use crate::potential::{CylinderPotential, PerturbedFamily};
use crate::shift::{transitive_components, ComponentKind, ComponentPartition, MarkovShift, TransitionMatrix, Word};
use crate::transfer::{assemble_operator, block, mu_cylinder, perron_triplet, OperatorMatrix, PerronTriplet, DEFAULT_MAXITER, DEFAULT_TOL};

/// Components of the limit system whose pressure equals the global pressure.
#[derive(Clone, Debug)]
pub struct MaximalPressureSet {
    pub partition: ComponentPartition,
    /// `P(φ|X_{B[U]})` per partition component; `−∞` when degenerate.
    pub pressures: Vec<f64>,
    /// Indices into `partition.components`, ordered by minimal state.
    pub selected: Vec<usize>,
    pub p_global: f64,
    pub tol: f64,
}

impl MaximalPressureSet {
    pub fn m0(&self) -> usize {
        self.selected.len()
    }

    /// State sets `U(1), …, U(m₀)`.
    pub fn components(&self) -> Vec<Vec<usize>> {
        self.selected.iter().map(|&k| self.partition.components[k].states.clone()).collect()
    }
}

/// Select the transitive components of `B` with maximal pressure.
pub fn maximal_pressure_components(shift: &MarkovShift, b: &TransitionMatrix, phi: &CylinderPotential, depth: usize, tol: f64) -> Result<MaximalPressureSet> {
    let partition = transitive_components(b);
    let op = assemble_operator(shift, &shift.matrix, phi, depth)?;
    let pressures = partition
        .components
        .iter()
        .map(|c| {
            if c.kind == ComponentKind::Degenerate {
                return Ok(f64::NEG_INFINITY);
            }
            let sub = block(&op, &c.states, &c.states);
            let (lam, _) = perron_root(&sub.to_dense())?;
            Ok(if lam > 0.0 { lam.ln() } else { f64::NEG_INFINITY })
        })
        .collect::<Result<Vec<f64>>>()?;
    let p_global = pressures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if p_global == f64::NEG_INFINITY {
        return Err(Error::EmptyMaximalSet);
    }
    let selected = (0..pressures.len()).filter(|&k| (pressures[k] - p_global).abs() <= tol).collect();
    Ok(MaximalPressureSet { partition, pressures, selected, p_global, tol })
}

/// Per-block data and the coupling matrices on a set `W`.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub w: Vec<usize>,
    pub partition: Vec<Vec<usize>>,
    pub d: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `β(i)γ(i)`, the weights of `μ^{W(i)}` in `μ^W`.
    pub weights: Vec<f64>,
    pub residuals: CouplingResiduals,
    pub d_irreducible: bool,
    pub e_irreducible: bool,
    /// Present when `(L)_{WW} χ_W = λ χ_W`.
    pub normalized: Option<NormalizedCheck>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CouplingResiduals {
    /// `‖Dβ − λβ‖∞ / λ`
    pub d_beta: f64,
    /// `‖γE − λγ‖∞ / λ`
    pub gamma_e: f64,
    /// `|Σγ − 1|`
    pub gamma_sum: f64,
    /// `|Σβγ − 1|`
    pub beta_gamma_sum: f64,
    /// `‖μ^W − Σ βγ μ^{W(i)}‖∞` over basis indicators.
    pub decomposition: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizedCheck {
    /// `max |D(ij) − E(ij)|`
    pub d_minus_e: f64,
    /// `max |β(i) − 1|`
    pub beta_minus_one: f64,
}

fn is_irreducible(m: &[Vec<f64>]) -> bool {
    let n = m.len();
    let t = TransitionMatrix::from_edges(
        n,
        (0..n).flat_map(|i| (0..n).filter(move |&j| m[i][j] > 0.0).map(move |j| (i, j))),
    )
    .expect("square");
    n == 1 || t.is_irreducible_on(&(0..n).collect::<Vec<_>>())
}

/// Coupling matrices `D`, `E` and eigenvectors `β`, `γ` for a partition of `W`.
pub fn coupling_decomposition(op: &OperatorMatrix, t: &PerronTriplet, w: &[usize], partition: &[Vec<usize>]) -> Result<CouplingReport> {
    let dense = op.to_dense();
    let lambda = t.lambda;
    let n = op.dim();
    let m = partition.len();
    let mut seen = vec![false; partition.iter().flatten().chain(w).copied().max().map_or(0, |x| x + 1)];
    for block in partition {
        if block.is_empty() {
            return Err(Error::Input("partition blocks must be nonempty".into()));
        }
        for &s in block {
            if seen[s] {
                return Err(Error::Input("partition blocks must be disjoint".into()));
            }
            seen[s] = true;
        }
    }
    let mut w_sorted = w.to_vec();
    w_sorted.sort_unstable();
    let mut union: Vec<usize> = partition.iter().flatten().copied().collect();
    union.sort_unstable();
    if union != w_sorted {
        return Err(Error::Input("partition must cover W exactly".into()));
    }

    let w_idx = op.indices_of(w);
    let rest: Vec<usize> = {
        let mut inw = vec![false; n];
        w_idx.iter().for_each(|&i| inw[i] = true);
        (0..n).filter(|&i| !inw[i]).collect()
    };
    let block_idx: Vec<Vec<usize>> = partition.iter().map(|b| op.indices_of(b)).collect();

    let nu_of = |idx: &[usize], f: &dyn Fn(usize) -> f64| neumaier_sum(idx.iter().map(|&i| t.nu[i] * f(i)));
    let nu_w = nu_of(&w_idx, &|_| 1.0);
    let nu_h_w = nu_of(&w_idx, &|i| t.h[i]);
    if !(nu_w > 0.0) || !(nu_h_w > 0.0) {
        return Err(Error::DegenerateBlock { block: 0, reason: "W carries no mass".into() });
    }
    let mut nu_blk = Vec::with_capacity(m);
    let mut nu_h_blk = Vec::with_capacity(m);
    for (k, idx) in block_idx.iter().enumerate() {
        let a = nu_of(idx, &|_| 1.0);
        let b = nu_of(idx, &|i| t.h[i]);
        if !(a > 0.0) || !(b > 0.0) {
            return Err(Error::DegenerateBlock { block: k, reason: format!("ν-mass {a:e}, ν(h)-mass {b:e}") });
        }
        nu_blk.push(a);
        nu_h_blk.push(b);
    }

    // K = L[W, S∖W, λ] on W × W (W in basis order)
    let (k_mat, _) = complement_dense(&dense, &w_idx, &rest, lambda, RESOLVENT_MARGIN)?;
    let pos_in_w = {
        let mut p = vec![usize::MAX; n];
        w_idx.iter().enumerate().for_each(|(a, &i)| p[i] = a);
        p
    };
    // conditional measure of block i applied to K g, with g given on W
    let nu_cond_k = |i: usize, g: &[f64]| -> f64 {
        let kg = &k_mat * nalgebra::DVector::from_column_slice(g);
        neumaier_sum(block_idx[i].iter().map(|&x| t.nu[x] * kg[pos_in_w[x]])) / nu_blk[i]
    };
    let mut d = vec![vec![0.0; m]; m];
    let mut e = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut hj = vec![0.0; w_idx.len()];
        let mut chi = vec![0.0; w_idx.len()];
        for &x in &block_idx[j] {
            // h^{W(j)} = h χ_{W(j)} / ν^{W(j)}(h)
            hj[pos_in_w[x]] = t.h[x] / (nu_h_blk[j] / nu_blk[j]);
            chi[pos_in_w[x]] = 1.0;
        }
        for i in 0..m {
            d[i][j] = nu_cond_k(i, &hj);
            e[i][j] = nu_cond_k(i, &chi);
        }
    }
    // β(i) = ν^{W(i)}(h^W), h^W = h χ_W / ν^W(h χ_W); γ(i) = ν^W(χ_{W(i)})
    let hw_scale = nu_h_w / nu_w;
    let beta: Vec<f64> = (0..m).map(|i| (nu_h_blk[i] / nu_blk[i]) / hw_scale).collect();
    let gamma: Vec<f64> = (0..m).map(|i| nu_blk[i] / nu_w).collect();
    let weights: Vec<f64> = beta.iter().zip(&gamma).map(|(b, g)| b * g).collect();

    let d_beta = (0..m).map(|i| (dot(&d[i], &beta) - lambda * beta[i]).abs()).fold(0.0, f64::max) / lambda;
    let gamma_e = (0..m)
        .map(|j| (neumaier_sum((0..m).map(|i| gamma[i] * e[i][j])) - lambda * gamma[j]).abs())
        .fold(0.0, f64::max)
        / lambda;
    let gamma_sum = (neumaier_sum(gamma.iter().copied()) - 1.0).abs();
    let beta_gamma_sum = (neumaier_sum(weights.iter().copied()) - 1.0).abs();

    // μ^W and the block measures μ^{W(i)} on basis indicators
    let mu = t.mu();
    let mut decomposition = 0.0f64;
    let mut owner = vec![usize::MAX; n];
    for (k, idx) in block_idx.iter().enumerate() {
        idx.iter().for_each(|&x| owner[x] = k);
    }
    for &x in &w_idx {
        let mu_w = mu[x] / nu_h_w;
        let k = owner[x];
        let mu_k = mu[x] / nu_h_blk[k];
        decomposition = decomposition.max((mu_w - weights[k] * mu_k).abs());
    }

    // normalized specialization: (L)_{WW} χ_W = λ χ_W
    let lww = submatrix(&dense, &w_idx, &w_idx);
    let row_dev = (0..w_idx.len()).map(|a| (lww.row(a).sum() - lambda).abs()).fold(0.0, f64::max);
    let normalized = (row_dev <= 1e-12 * lambda).then(|| NormalizedCheck {
        d_minus_e: (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| (d[i][j] - e[i][j]).abs()).fold(0.0, f64::max),
        beta_minus_one: beta.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max),
    });

    Ok(CouplingReport {
        w: w_sorted,
        partition: partition.to_vec(),
        d_irreducible: is_irreducible(&d),
        e_irreducible: is_irreducible(&e),
        d,
        e,
        beta,
        gamma,
        weights,
        residuals: CouplingResiduals { d_beta, gamma_e, gamma_sum, beta_gamma_sum, decomposition },
        normalized,
    })
}

/// Dense operator together with its triplet, shared by the coefficient routines.
pub struct SpectralContext<'a> {
    pub op: &'a OperatorMatrix,
    pub dense: DMatrix<f64>,
    pub triplet: &'a PerronTriplet,
}

impl<'a> SpectralContext<'a> {
    pub fn new(op: &'a OperatorMatrix, triplet: &'a PerronTriplet) -> Self {
        Self { op, dense: op.to_dense(), triplet }
    }

    /// Basis indices of the complement of `states ∪ ...` inside the basis.
    fn others(&self, excluded: &[usize]) -> Vec<usize> {
        let mut ex = vec![false; self.op.dim()];
        excluded.iter().for_each(|&i| ex[i] = true);
        (0..self.op.dim()).filter(|&i| !ex[i]).collect()
    }
}

/// `b(i : P₀) = λ − ν(χ_{Q(i)} L[Q(i), (S∖Q) ∪ Q(P₀), λ] h) / ν(h χ_{Q(i)})`.
pub fn b_value(ctx: &SpectralContext, q_blocks: &[Vec<usize>], i: usize, p0: &[usize]) -> Result<f64> {
    let t = ctx.triplet;
    let lambda = t.lambda;
    let u_idx = ctx.op.indices_of(&q_blocks[i]);
    // V = everything outside Q, plus the blocks in P₀
    let q_all: Vec<usize> = q_blocks.iter().flatten().copied().collect();
    let q_idx = ctx.op.indices_of(&q_all);
    let mut excluded = q_idx.clone();
    for &k in p0 {
        let blk = ctx.op.indices_of(&q_blocks[k]);
        excluded.retain(|x| !blk.contains(x));
    }
    let v_idx = ctx.others(&excluded);
    let (k_mat, _) = complement_dense(&ctx.dense, &u_idx, &v_idx, lambda, RESOLVENT_MARGIN)?;
    let hu = nalgebra::DVector::from_iterator(u_idx.len(), u_idx.iter().map(|&x| t.h[x]));
    let kh = &k_mat * &hu;
    let nu_h = neumaier_sum(u_idx.iter().map(|&x| t.nu[x] * t.h[x]));
    // λ ν(hχ) − ν(χ K h), summed termwise to limit cancellation
    let gap = neumaier_sum(u_idx.iter().enumerate().map(|(a, &x)| t.nu[x] * (lambda * t.h[x] - kh[a])));
    Ok(gap / nu_h)
}

/// `δ̃_ε` over a partition `Q(1..m)` of `Q`.
#[derive(Clone, Debug, Serialize)]
pub struct TildeDelta {
    pub values: Vec<f64>,
    /// `B(i,j)`; diagonal unused.
    pub b_ratio: Vec<Vec<f64>>,
    /// `b(i : T₀∖{i,j})` indexed `[i][j]`; diagonal holds `b(i : T₀∖{i})`.
    pub b: Vec<Vec<f64>>,
    /// Direct oracle `μ(Q(k)) / μ(Q)`.
    pub mass_ratio: Vec<f64>,
}

pub fn tilde_delta(op: &OperatorMatrix, t: &PerronTriplet, q_blocks: &[Vec<usize>]) -> Result<TildeDelta> {
    let ctx = SpectralContext::new(op, t);
    tilde_delta_ctx(&ctx, q_blocks)
}

pub fn tilde_delta_ctx(ctx: &SpectralContext, q_blocks: &[Vec<usize>]) -> Result<TildeDelta> {
    let m = q_blocks.len();
    if q_blocks.iter().any(Vec::is_empty) {
        return Err(Error::Input("partition blocks of Q must be nonempty".into()));
    }
    let mut b = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let p0: Vec<usize> = (0..m).filter(|&k| k != i && k != j).collect();
            b[i][j] = b_value(ctx, q_blocks, i, &p0)?;
        }
    }
    let mut ratio = vec![vec![f64::NAN; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if !(b[j][i].abs() > 0.0) {
                return Err(Error::DegenerateCoupling { i, j, reason: format!("b({j} : T₀∖{{{i},{j}}}) = {:e}", b[j][i]) });
            }
            ratio[i][j] = b[i][j] / b[j][i];
        }
    }
    let values: Vec<f64> = (0..m)
        .map(|k| 1.0 / (1.0 + neumaier_sum((0..m).filter(|&j| j != k).map(|j| ratio[k][j]))))
        .collect();
    let mu = ctx.triplet.mu();
    let masses: Vec<f64> = q_blocks.iter().map(|blk| neumaier_sum(ctx.op.indices_of(blk).iter().map(|&x| mu[x]))).collect();
    let total = neumaier_sum(masses.iter().copied());
    let mass_ratio = masses.iter().map(|x| x / total).collect();
    Ok(TildeDelta { values, b_ratio: ratio, b, mass_ratio })
}

/// `δ_ε(Q,·)` from spectral radii of complements.
#[derive(Clone, Debug, Serialize)]
pub struct DeltaCoefficients {
    pub values: Vec<f64>,
    /// `c(Q,i,j)`; diagonal unused.
    pub c: Vec<Vec<f64>>,
    /// Pairs `(i,j)` with `λ − c(Q,j,i)` below the guard; their ratio was not formed.
    pub flagged: Vec<(usize, usize)>,
}

/// Gaps below this are flagged rather than divided.
pub const GUARD_TOL: f64 = 1e-14;

pub fn delta_coefficients(op: &OperatorMatrix, lambda: f64, q: &[usize], components: &[Vec<usize>]) -> Result<DeltaCoefficients> {
    let dense = op.to_dense();
    delta_coefficients_dense(op, &dense, lambda, q, components)
}

pub fn delta_coefficients_dense(op: &OperatorMatrix, dense: &DMatrix<f64>, lambda: f64, q: &[usize], components: &[Vec<usize>]) -> Result<DeltaCoefficients> {
    let m = components.len();
    let inter: Vec<Vec<usize>> = components.iter().map(|u| u.iter().copied().filter(|s| q.contains(s)).collect()).collect();
    if let Some(k) = inter.iter().position(Vec::is_empty) {
        return Err(Error::Input(format!("Q does not meet component {}", k + 1)));
    }
    let mut c = vec![vec![f64::NAN; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let u_idx = op.indices_of(&inter[i]);
            let mut hole = u_idx.clone();
            hole.extend(op.indices_of(&inter[j]));
            let mut ex = vec![false; op.dim()];
            hole.iter().for_each(|&x| ex[x] = true);
            let v_idx: Vec<usize> = (0..op.dim()).filter(|&x| !ex[x]).collect();
            let (k_mat, _) = complement_dense(dense, &u_idx, &v_idx, lambda, RESOLVENT_MARGIN).map_err(|e| match e {
                Error::Resolvent { lambda, radius, margin } => Error::Input(format!(
                    "resolvent condition fails for pair ({}, {}): λ = {lambda}, r(M_VV) = {radius}, margin {margin:e}",
                    i + 1,
                    j + 1
                )),
                other => other,
            })?;
            c[i][j] = spectral_radius(&k_mat)?;
        }
    }
    let mut flagged = Vec::new();
    let values = (0..m)
        .map(|i| {
            let mut sum = 0.0;
            for j in (0..m).filter(|&j| j != i) {
                let den = lambda - c[j][i];
                if den < GUARD_TOL * lambda.max(1.0) {
                    flagged.push((i, j));
                    return f64::NAN;
                }
                sum += (lambda - c[i][j]) / den;
            }
            1.0 / (1.0 + sum)
        })
        .collect();
    Ok(DeltaCoefficients { values, c, flagged })
}

/// A limit extracted from a curve on a geometric grid.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Extrapolated {
    pub value: f64,
    pub uncertainty: f64,
    pub converged: bool,
}

/// Richardson extrapolation assuming `q(ε) = q₀ + cε + o(ε)`.
pub fn richardson(eps: &[f64], q: &[f64], tol: f64) -> Extrapolated {
    let n = eps.len().min(q.len());
    if n == 0 {
        return Extrapolated { value: f64::NAN, uncertainty: f64::INFINITY, converged: false };
    }
    if n == 1 {
        return Extrapolated { value: q[0], uncertainty: f64::INFINITY, converged: false };
    }
    let step = |k: usize| {
        let rho = eps[k + 1] / eps[k];
        (q[k + 1] - rho * q[k]) / (1.0 - rho)
    };
    let last = step(n - 2);
    let uncertainty = if n >= 3 { (last - step(n - 3)).abs() } else { (q[n - 1] - q[n - 2]).abs() };
    Extrapolated { value: last, uncertainty, converged: last.is_finite() && uncertainty <= tol }
}

/// Tunables of an ε-sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingOptions {
    pub depth: usize,
    pub pressure_tol: f64,
    pub extrapolation_tol: f64,
    /// Threshold `η` of the mass check `μ_ε(Σ_{S∖Q}) ≤ η`.
    pub mass_eta: f64,
    pub tol: f64,
    pub maxiter: usize,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self { depth: 1, pressure_tol: 1e-9, extrapolation_tol: 1e-3, mass_eta: 1e-2, tol: DEFAULT_TOL, maxiter: DEFAULT_MAXITER }
    }
}

/// Quantities for one set `Q_n` at one ε.
#[derive(Clone, Debug, Serialize)]
pub struct QPoint {
    pub mass_q: f64,
    pub delta: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub tilde_delta: Vec<f64>,
    pub tilde_oracle: Vec<f64>,
    /// `(λ − c(Q,i,j)) / b(i : T₀∖{i,j})` for maximal components `i ≠ j`.
    pub gap_ratio: Vec<Vec<f64>>,
    /// `δ(Q,k) / δ̃(class of U(k))`.
    pub delta_over_tilde: Vec<f64>,
    /// `min_{Q∩U(k)} h / max_{Q∩U(k)} h` per maximal component.
    pub g_floor: Vec<f64>,
    pub flagged: Vec<(usize, usize)>,
}

/// Everything computed at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct EpsPoint {
    pub eps: f64,
    pub lambda: f64,
    pub residual: f64,
    pub per_q: Vec<QPoint>,
    pub test_masses: Vec<f64>,
    pub mass_outside_last_q: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tol: f64,
}

/// Curves, limits and invariant checks of an ε-sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    pub eps: Vec<f64>,
    pub points: Vec<EpsPoint>,
    /// Maximal components `U(1..m₀)` (state indices).
    pub components: Vec<Vec<usize>>,
    pub component_pressures: Vec<f64>,
    pub p_global: f64,
    /// Classes partitioning each `Q_n` (state indices), in class order.
    pub q_classes: Vec<Vec<Vec<usize>>>,
    /// Position of each maximal component among the classes of `Q_n`.
    pub q_component_class: Vec<Vec<usize>>,
    pub q_schedule: Vec<Vec<usize>>,
    /// `a(Q_n) = lim μ_ε(χ_{Q_n})`.
    pub a_limit: Vec<Extrapolated>,
    /// `δ(Q_n, k)` limits.
    pub delta_q_limit: Vec<Vec<Extrapolated>>,
    /// `δ(k)` from the last set of the schedule.
    pub delta_limit: Vec<f64>,
    pub delta_sum: f64,
    /// `μ(U(k), f)` for the test functions.
    pub component_test_masses: Vec<Vec<f64>>,
    /// `Σ δ(k) μ(U(k), f)`.
    pub limit_test_masses: Vec<f64>,
    /// `max_f |μ_ε(f) − μ_limit(f)|` per ε.
    pub test_error: Vec<f64>,
    pub mass_check_passed: bool,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

/// Classes of the limit system meeting `q`, intersected with `q`, with the
/// class index of each.
fn classes_in(partition: &ComponentPartition, q: &[usize]) -> Vec<(usize, Vec<usize>)> {
    partition
        .components
        .iter()
        .enumerate()
        .filter_map(|(k, c)| {
            let inter: Vec<usize> = c.states.iter().copied().filter(|s| q.contains(s)).collect();
            (!inter.is_empty()).then_some((k, inter))
        })
        .collect()
}

/// Default `Q_n`: the first `n` states of every component of the partition.
pub fn default_q_schedule(partition: &ComponentPartition, steps: usize) -> Vec<Vec<usize>> {
    let longest = partition.components.iter().map(|c| c.states.len()).max().unwrap_or(0);
    (1..=steps.min(longest).max(1))
        .map(|n| {
            let mut q: Vec<usize> = partition.components.iter().flat_map(|c| c.states.iter().take(n).copied()).collect();
            q.sort_unstable();
            q
        })
        .collect()
}

/// Run the ε-sweep and assemble the limiting convex combination.
pub fn splitting_limit(
    family: &PerturbedFamily,
    shift: &MarkovShift,
    q_schedule: &[Vec<usize>],
    test_functions: &[Word],
    opts: &SplittingOptions,
) -> Result<SplittingReport> {
    if q_schedule.is_empty() {
        return Err(Error::Input("Q schedule must be nonempty".into()));
    }
    for pair in q_schedule.windows(2) {
        if !pair[0].iter().all(|s| pair[1].contains(s)) {
            return Err(Error::Input("Q schedule must be nested".into()));
        }
    }
    let limit = &family.limit;
    let b = limit.finite_pattern();
    let maximal = maximal_pressure_components(shift, &b, limit, opts.depth, opts.pressure_tol)?;
    let components = maximal.components();
    let m0 = components.len();
    for (n, q) in q_schedule.iter().enumerate() {
        if let Some(k) = components.iter().position(|u| !u.iter().any(|s| q.contains(s))) {
            return Err(Error::Input(format!("Q_{} does not meet component U({})", n + 1, k + 1)));
        }
    }
    let q_info: Vec<Vec<(usize, Vec<usize>)>> = q_schedule.iter().map(|q| classes_in(&maximal.partition, q)).collect();
    let q_classes: Vec<Vec<Vec<usize>>> = q_info.iter().map(|c| c.iter().map(|(_, s)| s.clone()).collect()).collect();
    let q_component_class: Vec<Vec<usize>> = q_info
        .iter()
        .map(|cls| {
            maximal.selected.iter().map(|&k| cls.iter().position(|(c, _)| *c == k).expect("Q meets every component")).collect()
        })
        .collect();

    // unperturbed per-component measures
    let op0 = assemble_operator(shift, &shift.matrix, limit, opts.depth)?;
    let component_test_masses = components
        .iter()
        .map(|u| {
            let sub = block(&op0, u, u);
            let t = perron_triplet(&sub, opts.tol, opts.maxiter)?;
            Ok(test_functions.iter().map(|w| mu_cylinder(&sub, &t, w)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let last_q = q_schedule.last().expect("nonempty").clone();
    let points: Vec<EpsPoint> = family
        .eps
        .par_iter()
        .zip(family.members.par_iter())
        .map(|(&eps, phi)| -> Result<EpsPoint> {
            let op = assemble_operator(shift, &shift.matrix, phi, opts.depth)?;
            let t = perron_triplet(&op, opts.tol, opts.maxiter)?;
            let ctx = SpectralContext::new(&op, &t);
            let mu = t.mu();
            let mass = |states: &[usize]| neumaier_sum(op.indices_of(states).iter().map(|&x| mu[x]));
            let per_q = q_schedule
                .iter()
                .zip(&q_classes)
                .zip(&q_component_class)
                .map(|((q, classes), comp_class)| -> Result<QPoint> {
                    let delta = delta_coefficients_dense(&op, &ctx.dense, t.lambda, q, &components)?;
                    let td = tilde_delta_ctx(&ctx, classes)?;
                    let mut gap_ratio = vec![vec![f64::NAN; m0]; m0];
                    for i in 0..m0 {
                        for j in 0..m0 {
                            if i != j {
                                let (ci, cj) = (comp_class[i], comp_class[j]);
                                gap_ratio[i][j] = (t.lambda - delta.c[i][j]) / td.b[ci][cj];
                            }
                        }
                    }
                    let delta_over_tilde = (0..m0).map(|k| delta.values[k] / td.values[comp_class[k]]).collect();
                    let g_floor = components
                        .iter()
                        .map(|u| {
                            let inter: Vec<usize> = u.iter().copied().filter(|s| q.contains(s)).collect();
                            let hs: Vec<f64> = op.indices_of(&inter).iter().map(|&x| t.h[x]).collect();
                            let max = hs.iter().copied().fold(0.0, f64::max);
                            hs.iter().copied().fold(f64::INFINITY, f64::min) / max
                        })
                        .collect();
                    Ok(QPoint {
                        mass_q: mass(q),
                        delta: delta.values,
                        c: delta.c,
                        tilde_delta: td.values,
                        tilde_oracle: td.mass_ratio,
                        gap_ratio,
                        delta_over_tilde,
                        g_floor,
                        flagged: delta.flagged,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let test_masses = test_functions.iter().map(|w| mu_cylinder(&op, &t, w)).collect();
            let mass_outside_last_q = (1.0 - mass(&last_q)).max(0.0);
            Ok(EpsPoint { eps, lambda: t.lambda, residual: t.residual, per_q, test_masses, mass_outside_last_q })
        })
        .collect::<Result<Vec<_>>>()?;

    let eps = family.eps.clone();
    let a_limit: Vec<Extrapolated> = (0..q_schedule.len())
        .map(|n| richardson(&eps, &points.iter().map(|p| p.per_q[n].mass_q).collect::<Vec<_>>(), opts.extrapolation_tol))
        .collect();
    let delta_q_limit: Vec<Vec<Extrapolated>> = (0..q_schedule.len())
        .map(|n| {
            (0..m0)
                .map(|k| richardson(&eps, &points.iter().map(|p| p.per_q[n].delta[k]).collect::<Vec<_>>(), opts.extrapolation_tol))
                .collect()
        })
        .collect();
    let nq = q_schedule.len() - 1;
    let delta_limit: Vec<f64> = (0..m0).map(|k| a_limit[nq].value * delta_q_limit[nq][k].value).collect();
    let delta_sum = neumaier_sum(delta_limit.iter().copied());
    let limit_test_masses: Vec<f64> = (0..test_functions.len())
        .map(|f| neumaier_sum((0..m0).map(|k| delta_limit[k] * component_test_masses[k][f])))
        .collect();
    let test_error: Vec<f64> = points
        .iter()
        .map(|p| p.test_masses.iter().zip(&limit_test_masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let mass_check_passed = points.iter().all(|p| p.mass_outside_last_q <= opts.mass_eta);

    let mut checks = Vec::new();
    let tilde_sum_dev = points
        .iter()
        .flat_map(|p| p.per_q.iter().map(|q| (neumaier_sum(q.tilde_delta.iter().copied()) - 1.0).abs()))
        .fold(0.0, f64::max);
    checks.push(Check { name: "tilde-delta-sums-to-one".into(), passed: tilde_sum_dev <= 1e-9, value: tilde_sum_dev, tol: 1e-9 });
    let oracle_dev = points
        .iter()
        .flat_map(|p| p.per_q.iter().flat_map(|q| q.tilde_delta.iter().zip(&q.tilde_oracle).map(|(a, b)| (a - b).abs())))
        .fold(0.0, f64::max);
    checks.push(Check { name: "tilde-delta-matches-mass-ratio".into(), passed: oracle_dev <= 1e-9, value: oracle_dev, tol: 1e-9 });
    checks.push(Check { name: "delta-sum-at-most-one".into(), passed: delta_sum <= 1.0 + 1e-8, value: delta_sum, tol: 1e-8 });
    if mass_check_passed {
        let dev = (delta_sum - 1.0).abs();
        checks.push(Check { name: "delta-sum-equals-one".into(), passed: dev < 1e-3, value: dev, tol: 1e-3 });
    }
    let worst_unc = delta_q_limit[nq].iter().chain(std::iter::once(&a_limit[nq])).map(|e| e.uncertainty).fold(0.0, f64::max);
    checks.push(Check {
        name: "extrapolation-converged".into(),
        passed: worst_unc <= opts.extrapolation_tol,
        value: worst_unc,
        tol: opts.extrapolation_tol,
    });
    if m0 >= 2 {
        let last = points.last().expect("nonempty grid");
        let dev = last.per_q[nq]
            .gap_ratio
            .iter()
            .flatten()
            .filter(|x| !x.is_nan())
            .map(|x| (x - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check { name: "gap-ratio-near-one".into(), passed: dev <= 1e-2, value: dev, tol: 1e-2 });
    }
    let all_passed = checks.iter().all(|c| c.passed);

    Ok(SplittingReport {
        eps,
        points,
        component_pressures: maximal.selected.iter().map(|&k| maximal.pressures[k]).collect(),
        p_global: maximal.p_global,
        components,
        q_classes,
        q_component_class,
        q_schedule: q_schedule.to_vec(),
        a_limit,
        delta_q_limit,
        delta_limit,
        delta_sum,
        component_test_masses,
        limit_test_masses,
        test_error,
        mass_check_passed,
        checks,
        all_passed,
    })
}

impl SplittingReport {
    /// CSV with one row per ε. The first line is a `#` comment naming the
    /// columns; `ids` maps state indices to identifiers.
    pub fn to_csv(&self, ids: impl Fn(usize) -> u32) -> String {
        let fmt = |x: f64| if x.is_finite() { format!("{x:.16e}") } else { String::new() };
        let m0 = self.components.len();
        let mut header = vec!["eps".to_string(), "lambda".to_string()];
        for (n, classes) in self.q_classes.iter().enumerate() {
            let q = n + 1;
            for i in 0..m0 {
                for j in 0..m0 {
                    if i != j {
                        header.push(format!("q{q}_c_{}_{}", i + 1, j + 1));
                    }
                }
            }
            for k in 0..m0 {
                header.push(format!("q{q}_delta_{}", k + 1));
            }
            for cls in classes {
                header.push(format!("q{q}_tilde_delta_{}", ids(cls[0])));
            }
            header.push(format!("q{q}_mass"));
        }
        header.push("mass_outside".into());
        header.push("test_error".into());
        let mut out = format!(
            "# columns: eps, lambda; per Q_n: c(Q,i,j) per ordered pair of maximal components, delta(Q,k) per maximal component, tilde_delta per class (named by its least state), mu(Q); then mu outside the last Q and the test-function error\n{}\n",
            header.join(",")
        );
        for (p, err) in self.points.iter().zip(&self.test_error) {
            let mut row = vec![fmt(p.eps), fmt(p.lambda)];
            for qp in &p.per_q {
                for i in 0..m0 {
                    for j in 0..m0 {
                        if i != j {
                            row.push(fmt(qp.c[i][j]));
                        }
                    }
                }
                row.extend(qp.delta.iter().map(|&x| fmt(x)));
                row.extend(qp.tilde_delta.iter().map(|&x| fmt(x)));
                row.push(fmt(qp.mass_q));
            }
            row.push(fmt(p.mass_outside_last_q));
            row.push(fmt(*err));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// The 4-state benchmark: blocks `{1,2}` and `{3,4}`, leaks `ε/2` from block
/// 1 rows into each block-2 state and `ε` from block 2 rows into each
/// block-1 state, rows normalized. Weights `e^{φ(a·u)} = P(a,u)`.
pub fn four_state_family(eps: Vec<f64>) -> Result<(MarkovShift, PerturbedFamily)> {
    let shift = MarkovShift::full(4);
    let block = |s: usize| s / 2;
    let fam = PerturbedFamily::linear(
        &shift.matrix,
        1,
        eps,
        |w| if block(w[0]) == block(w[1]) { 0.5 } else { 0.0 },
        |w| match (block(w[0]), block(w[1])) {
            (a, b) if a == b => -0.5,
            (0, _) => 0.5,
            _ => 1.0,
        },
        true,
    )?;
    Ok((shift, fam))
}

/// Limit of `δ_ε(Q,1)` for [`four_state_family`] at parameter ε: `2/(3+ε)`.
pub fn four_state_oracle(eps: f64) -> f64 {
    2.0 / (3.0 + eps)
}

/// The 6-state variant: the 4-state chain plus a sub-maximal block `{5,6}`
/// (within-block weight 0.4, persistent weight 0.1 back to states 1 and 3)
/// entered from blocks 1 and 2 through `ε/4` leaks only.
pub fn six_state_family(eps: Vec<f64>) -> Result<(MarkovShift, PerturbedFamily)> {
    let shift = MarkovShift::full(6);
    let block = |s: usize| s / 2;
    let fam = PerturbedFamily::linear(
        &shift.matrix,
        1,
        eps,
        |w| match (block(w[0]), block(w[1])) {
            (2, 2) => 0.4,
            (2, _) => if w[1] == 0 || w[1] == 2 { 0.1 } else { 0.0 },
            (a, b) if a == b => 0.5,
            _ => 0.0,
        },
        |w| match (block(w[0]), block(w[1])) {
            (2, _) => 0.0,
            (a, b) if a == b => -0.5,
            (_, 2) => 0.25,
            (0, 1) => 0.5,
            _ => 1.0,
        },
        true,
    )?;
    Ok((shift, fam))
}

/// Stationary vector of a row-stochastic matrix, by a dense solve.
pub fn stationary_vector(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1
    let mut a = p.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    Ok(crate::linalg::solve(&a, &rhs)?.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::StateSpace;

    fn two_full_blocks() -> (MarkovShift, CylinderPotential) {
        let mut rows = vec![vec![0u8; 4]; 4];
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            rows[a][b] = 1;
        }
        let shift = MarkovShift::from_dense(&rows).unwrap();
        let phi = CylinderPotential::constant(&shift.matrix, 1, 1.0).unwrap();
        (shift, phi)
    }

    #[test]
    fn maximal_components_examples() {
        let (shift, phi) = two_full_blocks();
        let set = maximal_pressure_components(&shift, &phi.finite_pattern(), &phi, 1, 1e-9).unwrap();
        assert_eq!(set.components(), vec![vec![0, 1], vec![2, 3]]);
        assert!(set.pressures.iter().all(|p| (p - 2f64.ln()).abs() < 1e-12));

        // full 2-shift on {1,2} plus a fixed point at 3
        let m = TransitionMatrix::from_edges(3, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]).unwrap();
        let shift = MarkovShift::new(StateSpace::range(3), m.clone()).unwrap();
        let phi = CylinderPotential::constant(&m, 1, 1.0).unwrap();
        let set = maximal_pressure_components(&shift, &m, &phi, 1, 1e-9).unwrap();
        assert_eq!(set.components(), vec![vec![0, 1]]);

        // Bernoulli (0.3,0.7) vs (0.5,0.5): both pressure 0
        let m = TransitionMatrix::from_edges(4, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]).unwrap();
        let shift = MarkovShift::new(StateSpace::range(4), m.clone()).unwrap();
        let phi = CylinderPotential::first_symbol(&m, &[0.3, 0.7, 0.5, 0.5]).unwrap();
        let set = maximal_pressure_components(&shift, &m, &phi, 1, 1e-9).unwrap();
        assert_eq!(set.m0(), 2);

        let chain = TransitionMatrix::from_edges(2, [(0, 1)]).unwrap();
        let shift = MarkovShift::new(StateSpace::range(2), chain.clone()).unwrap();
        let phi = CylinderPotential::constant(&chain, 1, 1.0).unwrap();
        assert!(matches!(maximal_pressure_components(&shift, &chain, &phi, 1, 1e-9), Err(Error::EmptyMaximalSet)));
    }

    #[test]
    fn coupling_trivial_and_symmetric() {
        let op = OperatorMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let r = coupling_decomposition(&op, &t, &[0, 1], &[vec![0, 1]]).unwrap();
        assert!((r.d[0][0] - t.lambda).abs() < 1e-12 && (r.e[0][0] - t.lambda).abs() < 1e-12);
        assert!((r.beta[0] - 1.0).abs() < 1e-12 && (r.gamma[0] - 1.0).abs() < 1e-12);

        let r = coupling_decomposition(&op, &t, &[0, 1], &[vec![0], vec![1]]).unwrap();
        let n = r.normalized.expect("stochastic");
        assert!(n.d_minus_e < 1e-12 && n.beta_minus_one < 1e-12);
        assert!((r.gamma[0] - 0.5).abs() < 1e-12);
        assert!((r.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tilde_delta_examples() {
        let op = OperatorMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let td = tilde_delta(&op, &t, &[vec![0], vec![1]]).unwrap();
        assert!((td.values[0] - 0.5).abs() < 1e-12);

        let (shift, fam) = four_state_family(vec![1e-3]).unwrap();
        let op = assemble_operator(&shift, &shift.matrix, fam.member(0), 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let td = tilde_delta(&op, &t, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert!((0.65..=0.68).contains(&td.values[0]));
        assert!((td.values[0] - four_state_oracle(1e-3)).abs() < 1e-10);
    }

    #[test]
    fn delta_formula_arithmetic() {
        // c-values are produced from complements; check the combination rule
        let op = OperatorMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let d = delta_coefficients(&op, 1.0, &[0, 1], &[vec![0], vec![1]]).unwrap();
        assert!((d.c[0][1] - 0.9).abs() < 1e-14 && (d.c[1][0] - 0.9).abs() < 1e-14);
        assert!((d.values[0] - 0.5).abs() < 1e-12);

        let op = OperatorMatrix::from_rows(&[vec![0.9, 0.1, 0.0], vec![0.0, 0.8, 0.2], vec![0.0, 0.0, 0.5]]).unwrap();
        let d = delta_coefficients(&op, 1.0, &[0, 1], &[vec![0], vec![1]]).unwrap();
        // (1 − 0.9)/(1 − 0.8) = 0.5 → δ(1) = 2/3
        assert!((d.values[0] - 2.0 / 3.0).abs() < 1e-12);

        let ring = OperatorMatrix::from_rows(&[vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]]).unwrap();
        let d = delta_coefficients(&ring, 1.0, &[0, 1, 2], &[vec![0], vec![1], vec![2]]).unwrap();
        assert!(d.values.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn richardson_removes_linear_error() {
        let eps: Vec<f64> = (1..=6).map(|k| 0.5f64.powi(k)).collect();
        let q: Vec<f64> = eps.iter().map(|e| 2.0 / (3.0 + e)).collect();
        let r = richardson(&eps, &q, 1e-3);
        assert!((r.value - 2.0 / 3.0).abs() < 1e-4);
        assert!(r.converged);
    }

    #[test]
    fn stationary_oracle() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let pi = stationary_vector(&p).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn q_schedule_default() {
        let (shift, phi) = two_full_blocks();
        let part = transitive_components(&phi.finite_pattern());
        let s = default_q_schedule(&part, 5);
        assert_eq!(s, vec![vec![0, 2], vec![0, 1, 2, 3]]);
        let _ = shift;
    }

    #[test]
    fn four_state_sweep() {
        let eps: Vec<f64> = (4..=12).map(|k| 0.5f64.powi(k)).collect();
        let (shift, fam) = four_state_family(eps).unwrap();
        let q = vec![vec![0, 2], vec![0, 1, 2, 3]];
        let tests = vec![Word(vec![0]), Word(vec![2])];
        let r = splitting_limit(&fam, &shift, &q, &tests, &SplittingOptions::default()).unwrap();
        assert_eq!(r.components, vec![vec![0, 1], vec![2, 3]]);
        assert!((r.delta_limit[0] - 2.0 / 3.0).abs() < 1e-4, "{:?}", r.delta_limit);
        assert!((r.delta_sum - 1.0).abs() < 1e-4);
        assert!(r.all_passed, "{:?}", r.checks);
        let csv = r.to_csv(|i| i as u32 + 1);
        assert_eq!(csv.lines().count(), 2 + 9);
    }

    #[test]
    fn six_state_family_is_stochastic() {
        let (shift, fam) = six_state_family(vec![1e-2]).unwrap();
        let op = assemble_operator(&shift, &shift.matrix, fam.member(0), 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-12);
    }
}
