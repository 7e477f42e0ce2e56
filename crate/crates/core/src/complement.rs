//! Perron complements `M[U,V,λ] = M_UU + M_UV (λI − M_VV)⁻¹ M_VU`.
//!
//! Subsets `U`, `V` are given as *state* sets; an operator on a depth-`D`
//! basis restricts them to the basis words whose first symbol lies in the set.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, inf_norm, perron_root, solve, solve_matrix, spectral_radius, submatrix};
use crate::transfer::OperatorMatrix;

/// Required gap `λ − r(M_VV)`.
pub const RESOLVENT_MARGIN: f64 = 1e-10;

/// A Perron complement realized on the `U` part of the basis.
#[derive(Clone, Debug)]
pub struct ComplementOperator {
    pub u: Vec<usize>,
    pub v: Vec<usize>,
    pub lambda: f64,
    /// Basis indices of `U` and `V`.
    pub u_idx: Vec<usize>,
    pub v_idx: Vec<usize>,
    /// `M[U,V,λ]` restricted to `U × U`.
    pub compact: DMatrix<f64>,
    pub radius_vv: f64,
    pub margin: f64,
    dim: usize,
}

impl ComplementOperator {
    /// Full-size matrix, zero outside `U × U`.
    pub fn to_full(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (a, &i) in self.u_idx.iter().enumerate() {
            for (b, &j) in self.u_idx.iter().enumerate() {
                m[(i, j)] = self.compact[(a, b)];
            }
        }
        m
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let fu = DVector::from_iterator(self.u_idx.len(), self.u_idx.iter().map(|&i| f[i]));
        let gu = &self.compact * fu;
        let mut out = vec![0.0; self.dim];
        for (a, &i) in self.u_idx.iter().enumerate() {
            out[i] = gu[a];
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.compact)
    }
}

fn check_sets(u: &[usize], v: &[usize]) -> Result<()> {
    if u.is_empty() {
        return Err(Error::Input("U must be nonempty".into()));
    }
    if u.iter().any(|x| v.contains(x)) {
        return Err(Error::Input("U and V must be disjoint".into()));
    }
    Ok(())
}

/// Complement on raw index sets of a dense matrix, returned on `U × U`.
/// Also returns `r(M_VV)`.
pub fn complement_dense(m: &DMatrix<f64>, u_idx: &[usize], v_idx: &[usize], lambda: f64, margin_tol: f64) -> Result<(DMatrix<f64>, f64)> {
    let muu = submatrix(m, u_idx, u_idx);
    if v_idx.is_empty() {
        return Ok((muu, 0.0));
    }
    let mvv = submatrix(m, v_idx, v_idx);
    let radius = spectral_radius(&mvv)?;
    let margin = lambda - radius;
    if !(margin > margin_tol) {
        return Err(Error::Resolvent { lambda, radius, margin });
    }
    let muv = submatrix(m, u_idx, v_idx);
    let mvu = submatrix(m, v_idx, u_idx);
    let mut shifted = -mvv;
    for k in 0..v_idx.len() {
        shifted[(k, k)] += lambda;
    }
    let x = solve_matrix(&shifted, &mvu)?;
    Ok((muu + muv * x, radius))
}

/// `M[U,V,λ]` by a direct linear solve.
pub fn perron_complement(op: &OperatorMatrix, u: &[usize], v: &[usize], lambda: f64) -> Result<ComplementOperator> {
    perron_complement_with(op, u, v, lambda, RESOLVENT_MARGIN)
}

pub fn perron_complement_with(op: &OperatorMatrix, u: &[usize], v: &[usize], lambda: f64, margin_tol: f64) -> Result<ComplementOperator> {
    check_sets(u, v)?;
    let u_idx = op.indices_of(u);
    let v_idx = op.indices_of(v);
    let dense = op.to_dense();
    complement_from_dense(&dense, u, v, u_idx, v_idx, lambda, margin_tol)
}

/// Same as [`perron_complement_with`] on an already densified operator.
pub fn complement_from_dense(
    dense: &DMatrix<f64>,
    u: &[usize],
    v: &[usize],
    u_idx: Vec<usize>,
    v_idx: Vec<usize>,
    lambda: f64,
    margin_tol: f64,
) -> Result<ComplementOperator> {
    let (compact, radius_vv) = complement_dense(dense, &u_idx, &v_idx, lambda, margin_tol)?;
    Ok(ComplementOperator {
        u: u.to_vec(),
        v: v.to_vec(),
        lambda,
        u_idx,
        v_idx,
        compact,
        radius_vv,
        margin: lambda - radius_vv,
        dim: dense.nrows(),
    })
}

/// Result of the word-series evaluation of the induced operator.
#[derive(Clone, Debug, Serialize)]
pub struct InducedResult {
    pub value: Vec<f64>,
    /// Bound on the omitted excursions `|w| > max_excursion + 1`.
    pub tail_bound: f64,
    pub terms: usize,
}

/// Excursion length giving a geometric factor `10^{-digits}` at ratio `r(M_VV)/η`.
pub fn recommended_excursion(radius_vv: f64, eta: f64, digits: f64, v_len: usize) -> usize {
    if radius_vv <= 0.0 {
        return v_len + 1;
    }
    let k = digits * 10f64.ln() / (eta / radius_vv).ln();
    if k.is_finite() { (k.ceil() as usize).clamp(1, 50_000_000) } else { 50_000_000 }
}

/// `Σ_{w ∈ W(U:V)} η^{−|w|+1} e^{S_{|w|}φ(w·ω)} f(w·ω)`, i.e.
/// `M_UU f + Σ_{k<K} η^{−(k+1)} M_UV M_VV^k M_VU f` with `K = max_excursion`.
pub fn induced_apply(op: &OperatorMatrix, u: &[usize], v: &[usize], eta: f64, f: &[f64], max_excursion: usize) -> Result<InducedResult> {
    check_sets(u, v)?;
    let dense = op.to_dense();
    let u_idx = op.indices_of(u);
    let v_idx = op.indices_of(v);
    let n = op.dim();
    let fu = DVector::from_iterator(u_idx.len(), u_idx.iter().map(|&i| f[i]));
    let muu = submatrix(&dense, &u_idx, &u_idx);
    let mut acc = &muu * &fu;
    let mut tail_bound = 0.0;
    if !v_idx.is_empty() {
        let mvv = submatrix(&dense, &v_idx, &v_idx);
        let radius = spectral_radius(&mvv)?;
        if !(eta > radius + RESOLVENT_MARGIN) {
            return Err(Error::Divergence { eta, radius });
        }
        let muv = submatrix(&dense, &u_idx, &v_idx);
        let mvu = submatrix(&dense, &v_idx, &u_idx);
        let abs_fu = fu.abs();
        let mut carry = &mvu * &fu / eta;
        let mut carry_abs = &mvu * &abs_fu / eta;
        for _ in 0..max_excursion {
            acc += &muv * &carry;
            carry = &mvv * &carry / eta;
            carry_abs = &mvv * &carry_abs / eta;
        }
        // remainder = M_UV η(ηI − M_VV)⁻¹ carry_K, with a nonnegative resolvent
        let mut shifted = -mvv;
        for k in 0..v_idx.len() {
            shifted[(k, k)] += eta;
        }
        let res_norm = solve(&shifted, &DVector::from_element(v_idx.len(), 1.0))?.amax();
        tail_bound = inf_norm(&muv) * eta * res_norm * carry_abs.amax();
    }
    let mut value = vec![0.0; n];
    for (a, &i) in u_idx.iter().enumerate() {
        value[i] = acc[a];
    }
    Ok(InducedResult { value, tail_bound, terms: max_excursion })
}

/// Max-norm residual of the three-factor identity for `M_η − ηI` on `W = U ∪ V`.
pub fn schur_frobenius_residual(op: &OperatorMatrix, u: &[usize], v: &[usize], lambda: f64, eta: f64) -> Result<f64> {
    check_sets(u, v)?;
    if eta == 0.0 || lambda == 0.0 {
        return Err(Error::Input("lambda and eta must be nonzero".into()));
    }
    let dense = op.to_dense();
    let u_idx = op.indices_of(u);
    let v_idx = op.indices_of(v);
    schur_frobenius_residual_dense(&dense, &u_idx, &v_idx, lambda, eta)
}

pub fn schur_frobenius_residual_dense(m: &DMatrix<f64>, u_idx: &[usize], v_idx: &[usize], lambda: f64, eta: f64) -> Result<f64> {
    let (nu, nv) = (u_idx.len(), v_idx.len());
    let nw = nu + nv;
    let (comp, _) = complement_dense(m, u_idx, v_idx, lambda, RESOLVENT_MARGIN)?;
    let muu = submatrix(m, u_idx, u_idx);
    let muv = submatrix(m, u_idx, v_idx);
    let mvu = submatrix(m, v_idx, u_idx);
    let mvv = submatrix(m, v_idx, v_idx);
    let t = eta / lambda;

    let mut lhs = DMatrix::zeros(nw, nw);
    lhs.view_mut((0, 0), (nu, nu)).copy_from(&muu);
    lhs.view_mut((0, nu), (nu, nv)).copy_from(&(&muv * t));
    lhs.view_mut((nu, 0), (nv, nu)).copy_from(&mvu);
    lhs.view_mut((nu, nu), (nv, nv)).copy_from(&(&mvv * t));
    for k in 0..nw {
        lhs[(k, k)] -= eta;
    }

    // R = (M_VV − λI)⁻¹
    let mut vv_shift = mvv.clone();
    for k in 0..nv {
        vv_shift[(k, k)] -= lambda;
    }
    let r = if nv > 0 { solve_matrix(&vv_shift, &DMatrix::identity(nv, nv))? } else { DMatrix::zeros(0, 0) };

    let mut upper = DMatrix::identity(nw, nw);
    upper.view_mut((0, nu), (nu, nv)).copy_from(&(&muv * &r));
    let mut middle = DMatrix::zeros(nw, nw);
    let mut c_shift = comp;
    for k in 0..nu {
        c_shift[(k, k)] -= eta;
    }
    middle.view_mut((0, 0), (nu, nu)).copy_from(&c_shift);
    middle.view_mut((nu, nu), (nv, nv)).copy_from(&(vv_shift * t));
    let mut lower = DMatrix::identity(nw, nw);
    lower.view_mut((nu, 0), (nv, nu)).copy_from(&(&r * &mvu / t));

    let rhs = upper * middle * lower;
    Ok((lhs - rhs).amax())
}

/// Outcome of the eigenvalue-transfer check in both directions.
#[derive(Clone, Debug, Serialize)]
pub struct EigenTransfer {
    pub forward: bool,
    pub backward: bool,
    pub dual_forward: bool,
    pub dual_backward: bool,
    pub details: EigenTransferDetails,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct EigenTransferDetails {
    /// Real nonzero eigenvalues of the complement that were examined.
    pub eigenvalues: Vec<f64>,
    /// Solutions of the nonlinear problem found by the fixed-point search.
    pub solutions: Vec<f64>,
    pub forward_residual: f64,
    pub backward_residual: f64,
    pub dual_forward_residual: f64,
    pub dual_backward_residual: f64,
    /// Complex eigenvalues are outside the real check and only counted.
    pub skipped_complex: usize,
}

/// `N(η) = [M_WU | (η/λ) M_WV]` on `W = U ∪ V` (U columns first).
fn nonlinear_matrix(m: &DMatrix<f64>, w_idx: &[usize], nu: usize, lambda: f64, eta: f64) -> DMatrix<f64> {
    let mut n = submatrix(m, w_idx, w_idx);
    let t = eta / lambda;
    for j in nu..w_idx.len() {
        n.column_mut(j).scale_mut(t);
    }
    n
}

/// Real eigenvalue of `a` closest to `target`.
fn nearest_real_eigenvalue(a: &DMatrix<f64>, target: f64) -> Option<f64> {
    let eig = eigenvalues(a)?;
    let scale = eig.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    eig.iter()
        .filter(|z| z.im.abs() <= 1e-9 * scale)
        .map(|z| z.re)
        .min_by(|x, y| (x - target).abs().total_cmp(&(y - target).abs()))
}

/// Null vector of `a − ηI` by inverse iteration with a tiny offset.
fn null_vector(a: &DMatrix<f64>, eta: f64) -> Option<DVector<f64>> {
    let n = a.nrows();
    let scale = a.amax().max(eta.abs()).max(1e-300);
    for k in 0..6 {
        let mut s = a.clone();
        let shift = eta + 1e-13 * scale * 10f64.powi(2 * k);
        for i in 0..n {
            s[(i, i)] -= shift;
        }
        let lu = s.lu();
        let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64).sin());
        let mut ok = true;
        for _ in 0..6 {
            match lu.solve(&x) {
                Some(y) if y.amax().is_finite() && y.amax() > 0.0 => {
                    let i = y.iamax();
                    x = &y / y[i];
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(x);
        }
    }
    None
}

/// Solve `η ∈ σ(N(η))` starting near `start`; fixed-point steps
/// accelerated by secant updates.
fn solve_nonlinear(m: &DMatrix<f64>, w_idx: &[usize], nu: usize, lambda: f64, start: f64, scale: f64) -> Option<f64> {
    let f = |eta: f64| nearest_real_eigenvalue(&nonlinear_matrix(m, w_idx, nu, lambda, eta), eta).map(|e| e - eta);
    let mut x0 = start;
    let mut f0 = f(x0)?;
    // f is only known to eigensolver accuracy, so keep the best iterate
    let mut best = (f0.abs(), x0);
    let mut x1 = x0 + f0;
    for _ in 0..200 {
        let f1 = f(x1)?;
        if f1.abs() < best.0 {
            best = (f1.abs(), x1);
        }
        if f1.abs() <= 1e-15 * scale {
            break;
        }
        let denom = f1 - f0;
        let next = if denom.abs() > 1e-300 { x1 - f1 * (x1 - x0) / denom } else { x1 + f1 };
        x0 = x1;
        f0 = f1;
        x1 = if next.is_finite() && next != 0.0 { next } else { x1 + f1 };
    }
    (best.0 <= 1e-10 * scale).then_some(best.1)
}

struct DirectionResult {
    forward: f64,
    backward: f64,
    eigenvalues: Vec<f64>,
    solutions: Vec<f64>,
    skipped: usize,
}

fn transfer_one_side(m: &DMatrix<f64>, u_idx: &[usize], v_idx: &[usize], lambda: f64) -> Result<DirectionResult> {
    let (comp, _) = complement_dense(m, u_idx, v_idx, lambda, RESOLVENT_MARGIN)?;
    let nu = u_idx.len();
    let nv = v_idx.len();
    let w_idx: Vec<usize> = u_idx.iter().chain(v_idx).copied().collect();
    let mvv = submatrix(m, v_idx, v_idx);
    let mvu = submatrix(m, v_idx, u_idx);
    let mut lam_minus_vv = -mvv;
    for k in 0..nv {
        lam_minus_vv[(k, k)] += lambda;
    }
    let eig = eigenvalues(&comp).ok_or_else(|| Error::Numerical("complement eigensolve failed".into()))?;
    let scale = eig.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let mut reals = Vec::new();
    let mut skipped = 0;
    for z in &eig {
        if z.im.abs() > 1e-9 * scale {
            skipped += 1;
        } else if z.re.abs() > 1e-8 * scale {
            reals.push(z.re);
        }
    }
    reals.sort_by(|a, b| b.total_cmp(a));
    reals.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * scale);

    let reconstruct_v = |eta: f64, gu: &DVector<f64>| -> Result<DVector<f64>> {
        if nv == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(solve(&lam_minus_vv, &(&mvu * gu))? * (lambda / eta))
    };

    // backward: eigenpair of the complement -> eigenvector of N(η)
    let mut backward = 0.0f64;
    for &eta in &reals {
        let Some(f) = null_vector(&comp, eta) else {
            backward = f64::INFINITY;
            continue;
        };
        let gv = reconstruct_v(eta, &f)?;
        let g = DVector::from_iterator(nu + nv, f.iter().chain(gv.iter()).copied());
        let n = nonlinear_matrix(m, &w_idx, nu, lambda, eta);
        let r = (&n * &g - &g * eta).amax() / (g.amax() * scale);
        backward = backward.max(r);
    }

    // forward: solve the nonlinear problem, then verify on the complement
    let mut forward = 0.0f64;
    let mut solutions = Vec::new();
    for &eta0 in &reals {
        for start in [eta0, eta0 * 0.99, eta0 * 1.01] {
            let Some(eta) = solve_nonlinear(m, &w_idx, nu, lambda, start, scale) else {
                continue;
            };
            if eta.abs() <= 1e-8 * scale || solutions.iter().any(|s: &f64| (s - eta).abs() <= 1e-9 * scale) {
                continue;
            }
            solutions.push(eta);
            let n = nonlinear_matrix(m, &w_idx, nu, lambda, eta);
            let Some(g) = null_vector(&n, eta) else {
                forward = f64::INFINITY;
                continue;
            };
            let gu = g.rows(0, nu).into_owned();
            let gv = g.rows(nu, nv).into_owned();
            let norm = g.amax() * scale;
            let r1 = (&comp * &gu - &gu * eta).amax() / norm;
            // V rows of N(η)g = ηg, multiplied out to avoid the λ/η factor
            let r2 = if nv == 0 { 0.0 } else { ((&lam_minus_vv * &gv) * (eta / lambda) - &mvu * &gu).amax() / norm };
            forward = forward.max(r1).max(r2);
        }
    }
    // every solution must be an eigenvalue of the complement and vice versa
    let matched = solutions.iter().all(|s| reals.iter().any(|e| (e - s).abs() <= 1e-8 * scale))
        && reals.iter().all(|e| solutions.iter().any(|s| (e - s).abs() <= 1e-8 * scale));
    if !matched {
        forward = f64::INFINITY;
    }
    solutions.sort_by(|a, b| b.total_cmp(a));
    Ok(DirectionResult { forward, backward, eigenvalues: reals, solutions, skipped })
}

/// Eigenvalue transfer between `M[U,V,λ]` and the nonlinear pencil
/// `M_WU + (η/λ) M_WV`, for right eigenvectors and (through the transpose)
/// for left eigenvectors.
pub fn eigen_transfer_check(op: &OperatorMatrix, u: &[usize], v: &[usize], lambda: f64) -> Result<EigenTransfer> {
    check_sets(u, v)?;
    let dense = op.to_dense();
    eigen_transfer_check_dense(&dense, &op.indices_of(u), &op.indices_of(v), lambda)
}

pub fn eigen_transfer_check_dense(m: &DMatrix<f64>, u_idx: &[usize], v_idx: &[usize], lambda: f64) -> Result<EigenTransfer> {
    const TOL: f64 = 1e-9;
    let right = transfer_one_side(m, u_idx, v_idx, lambda)?;
    let left = transfer_one_side(&m.transpose(), u_idx, v_idx, lambda)?;
    Ok(EigenTransfer {
        forward: right.forward <= TOL,
        backward: right.backward <= TOL,
        dual_forward: left.forward <= TOL,
        dual_backward: left.backward <= TOL,
        details: EigenTransferDetails {
            eigenvalues: right.eigenvalues,
            solutions: right.solutions,
            forward_residual: right.forward,
            backward_residual: right.backward,
            dual_forward_residual: left.forward,
            dual_backward_residual: left.backward,
            skipped_complex: right.skipped,
        },
    })
}

/// `r(M[U,V,λ])` with `λ` the Perron root of `op`.
pub fn complement_spectral_radius(op: &OperatorMatrix, u: &[usize], v: &[usize]) -> Result<f64> {
    let dense = op.to_dense();
    let (lambda, _) = perron_root(&dense)?;
    let c = complement_from_dense(&dense, u, v, op.indices_of(u), op.indices_of(v), lambda, RESOLVENT_MARGIN)?;
    c.spectral_radius()
}
