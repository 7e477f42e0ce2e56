//! Ruelle transfer operators as finite nonnegative matrices.
//!
//! For a potential of depth `d` and a basis of admissible words of length
//! `D ≥ d`, the operator acts on functions that are constant on depth-`D`
//! cylinders:
//!
//! ```text
//! (L f)(u) = Σ_{a : M(a,u₀)=1} e^{φ(a·u)} f((a·u)[..D])
//! ```
//!
//! so `entry(u, v) = e^{φ(a·u)}` with `v = (a·u)[..D]`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, inverse_iteration, neumaier_sum, perron_root};
use crate::potential::{birkhoff_weight, CylinderPotential};
use crate::shift::{enumerate_cylinders_for, representative, MarkovShift, PointSurrogate, TransitionMatrix, Word};

/// Operators up to this size use the dense eigen route in [`perron_triplet`].
pub const DENSE_LIMIT: usize = 1024;

/// Descriptive identifiers carried along with an operator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub shift_id: String,
    pub matrix_id: String,
    pub potential_id: String,
    pub depth: usize,
}

/// A sparse nonnegative operator on a cylinder basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub basis: Vec<Word>,
    rows: Vec<Vec<(usize, f64)>>,
    first: Vec<usize>,
    pub meta: OperatorMeta,
    /// Potential and subsystem matrix used to build the operator, when it came
    /// from [`assemble_operator`].
    pub source: Option<(CylinderPotential, TransitionMatrix)>,
    representatives: Vec<PointSurrogate>,
}

impl OperatorMatrix {
    /// Wrap a dense nonnegative square matrix as an operator on the depth-1
    /// basis `(0), (1), …`.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Input("operator matrix must be square and nonempty".into()));
        }
        if m.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Input("operator entries must be finite and nonnegative".into()));
        }
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| m[(i, j)] > 0.0).map(|j| (j, m[(i, j)])).collect())
            .collect();
        Ok(Self {
            basis: (0..n).map(|i| Word(vec![i])).collect(),
            rows,
            first: (0..n).collect(),
            meta: OperatorMeta { depth: 1, ..Default::default() },
            source: None,
            representatives: (0..n).map(|i| PointSurrogate { head: Word(vec![i]), cycle: Word(vec![i]) }).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("operator matrix must be square".into()));
        }
        Self::from_dense(&DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn depth(&self) -> usize {
        self.meta.depth
    }

    /// First symbol of basis element `i`.
    pub fn first_symbol(&self, i: usize) -> usize {
        self.first[i]
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn representative(&self, i: usize) -> &PointSurrogate {
        &self.representatives[i]
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.basis.binary_search(w).ok()
    }

    /// Basis indices whose first symbol lies in `states`.
    pub fn indices_of(&self, states: &[usize]) -> Vec<usize> {
        let max = states.iter().copied().max().map_or(0, |m| m + 1).max(self.first.iter().copied().max().map_or(0, |m| m + 1));
        let mut member = vec![false; max];
        for &s in states {
            member[s] = true;
        }
        (0..self.dim()).filter(|&i| member[self.first[i]]).collect()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// `(L f)(u)`
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let row_sum = |row: &Vec<(usize, f64)>| neumaier_sum(row.iter().map(|&(j, v)| v * f[j]));
        if self.dim() > 4096 {
            self.rows.par_iter().map(row_sum).collect()
        } else {
            self.rows.iter().map(row_sum).collect()
        }
    }

    /// `(ν L)(v)`
    pub fn apply_left(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            if nu[i] == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j] += nu[i] * v;
            }
        }
        out
    }

    pub fn to_doc(&self, ids: impl Fn(usize) -> u32) -> OperatorDoc {
        OperatorDoc {
            basis: self.basis.iter().map(|w| w.0.iter().map(|&s| ids(s)).collect()).collect(),
            entries: self
                .rows
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
                .collect(),
        }
    }
}

/// JSON sparse-triplet export: `{"basis":[...], "entries":[[i,j,val],...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub basis: Vec<Vec<u32>>,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Build `L_{M,φ}` on the basis of admissible depth-`depth` words of the
/// ambient shift.
pub fn assemble_operator(
    shift: &MarkovShift,
    m: &TransitionMatrix,
    phi: &CylinderPotential,
    depth: usize,
) -> Result<OperatorMatrix> {
    if depth < phi.depth().max(1) {
        return Err(Error::Input(format!("operator depth {depth} is below the potential depth {}", phi.depth())));
    }
    if !m.dominated_by(&shift.matrix) {
        return Err(Error::Input("subsystem matrix is not dominated by the shift's transition matrix".into()));
    }
    let cyl = enumerate_cylinders_for(&shift.matrix, depth)?;
    let basis = cyl.words;
    let d = phi.depth();
    let index = |w: &[usize]| basis.binary_search_by(|b| b.0.as_slice().cmp(w)).ok();
    let mut rows = Vec::with_capacity(basis.len());
    for u in &basis {
        let mut row = Vec::new();
        for &a in m.predecessors(u.first()) {
            let au = u.prepend(a);
            let wgt = phi.weight(&au.0[..d + 1]);
            if wgt == 0.0 {
                continue;
            }
            if let Some(j) = index(&au.0[..depth]) {
                row.push((j, wgt));
            }
        }
        row.sort_by_key(|&(j, _)| j);
        rows.push(row);
    }
    let first = basis.iter().map(Word::first).collect();
    Ok(OperatorMatrix {
        basis,
        rows,
        first,
        meta: OperatorMeta { depth, ..Default::default() },
        source: Some((phi.clone(), m.clone())),
        representatives: cyl.points,
    })
}

/// `χ_U L χ_V` on the same basis.
pub fn block(op: &OperatorMatrix, u: &[usize], v: &[usize]) -> OperatorMatrix {
    let in_u = op.indices_of(u);
    let in_v = op.indices_of(v);
    let mut keep_row = vec![false; op.dim()];
    let mut keep_col = vec![false; op.dim()];
    for i in in_u {
        keep_row[i] = true;
    }
    for j in in_v {
        keep_col[j] = true;
    }
    let rows = op
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| if keep_row[i] { r.iter().copied().filter(|&(j, _)| keep_col[j]).collect() } else { Vec::new() })
        .collect();
    OperatorMatrix { rows, ..op.clone() }
}

/// How the triplet was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletMethod {
    DenseInverseIteration,
    ShiftedPowerIteration,
    ZeroOperator,
}

/// Perron eigendata `(λ, h, ν)` normalized by `ν(1) = 1`, `ν(h) = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct PerronTriplet {
    pub lambda: f64,
    pub h: Vec<f64>,
    pub nu: Vec<f64>,
    /// `max(‖Lh − λh‖∞/‖h‖∞, ‖νL − λν‖₁/‖ν‖₁) / λ`.
    pub residual: f64,
    pub converged: bool,
    /// The Perron root has numerical multiplicity above one.
    pub non_simple: bool,
    /// `ν(h)` vanished; `h` is then normalized by `‖h‖∞ = 1`.
    pub degenerate_pairing: bool,
    pub method: TripletMethod,
}

impl PerronTriplet {
    /// `g = h / ‖h‖∞`.
    pub fn g(&self) -> Vec<f64> {
        let m = self.h.iter().copied().fold(0.0, f64::max);
        self.h.iter().map(|x| x / m).collect()
    }

    /// `μ = h ⊙ ν` on the basis.
    pub fn mu(&self) -> Vec<f64> {
        self.h.iter().zip(&self.nu).map(|(a, b)| a * b).collect()
    }

    pub fn pressure(&self) -> f64 {
        self.lambda.ln()
    }
}

fn clean_nonnegative(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let s: f64 = v.iter().sum();
    if s < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    for x in v.iter_mut() {
        if *x < 0.0 {
            // roundoff below the floor is zeroed; larger negatives are kept
            // out by the orientation of the Perron vector
            *x = if -*x <= 1e-10 * m { 0.0 } else { x.abs() };
        }
    }
}

fn finish(op: &OperatorMatrix, lambda: f64, mut h: Vec<f64>, mut nu: Vec<f64>, mult: usize, method: TripletMethod, tol: f64) -> PerronTriplet {
    clean_nonnegative(&mut h);
    clean_nonnegative(&mut nu);
    let s = neumaier_sum(nu.iter().copied());
    nu.iter_mut().for_each(|x| *x /= s);
    let lh = op.apply(&h);
    let lam = {
        let num = dot(&nu, &lh);
        let den = dot(&nu, &h);
        if den > 0.0 && num > 0.0 {
            num / den
        } else {
            lambda
        }
    };
    let pairing = dot(&nu, &h);
    let hmax = h.iter().copied().fold(0.0, f64::max);
    let degenerate_pairing = !(pairing > 1e-300 && pairing > 1e-14 * hmax);
    if degenerate_pairing {
        h.iter_mut().for_each(|x| *x /= hmax);
    } else {
        h.iter_mut().for_each(|x| *x /= pairing);
    }
    let lh = op.apply(&h);
    let nul = op.apply_left(&nu);
    let hn = h.iter().copied().fold(0.0, f64::max);
    let r1 = lh.iter().zip(&h).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max) / hn;
    let r2 = neumaier_sum(nul.iter().zip(&nu).map(|(a, b)| (a - lam * b).abs()));
    let residual = r1.max(r2) / lam;
    PerronTriplet {
        lambda: lam,
        h,
        nu,
        residual,
        converged: residual <= tol.max(1e-9),
        non_simple: mult > 1,
        degenerate_pairing,
        method,
    }
}

/// Perron triplet of `op`.
///
/// Operators with at most [`DENSE_LIMIT`] basis words go through a dense Schur
/// decomposition for `λ` and shifted inverse iteration for `h` and `ν`; larger
/// ones use power iteration on `op/‖op‖ + I`. `tol` and `maxiter` apply to the
/// power route and to the convergence flag.
pub fn perron_triplet(op: &OperatorMatrix, tol: f64, maxiter: usize) -> Result<PerronTriplet> {
    let n = op.dim();
    if op.is_zero() {
        return Ok(zero_triplet(n));
    }
    if n <= DENSE_LIMIT {
        let dense = op.to_dense();
        let (lambda, mult) = perron_root(&dense)?;
        if lambda <= 1e-300 {
            return Ok(zero_triplet(n));
        }
        let h = inverse_iteration(&dense, lambda)?;
        let nu = inverse_iteration(&dense.transpose(), lambda)?;
        return Ok(finish(op, lambda, h.iter().copied().collect(), nu.iter().copied().collect(), mult, TripletMethod::DenseInverseIteration, tol));
    }
    perron_triplet_power(op, tol, maxiter)
}

fn zero_triplet(n: usize) -> PerronTriplet {
    PerronTriplet {
        lambda: 0.0,
        h: vec![0.0; n],
        nu: vec![0.0; n],
        residual: 0.0,
        converged: true,
        non_simple: false,
        degenerate_pairing: true,
        method: TripletMethod::ZeroOperator,
    }
}

/// Power iteration on the shifted, rescaled operator `op/s + I`.
pub fn perron_triplet_power(op: &OperatorMatrix, tol: f64, maxiter: usize) -> Result<PerronTriplet> {
    let n = op.dim();
    if op.is_zero() {
        return Ok(zero_triplet(n));
    }
    let scale = (0..n).map(|i| op.row(i).iter().map(|&(_, v)| v).sum::<f64>()).fold(0.0, f64::max);
    let iterate = |left: bool| -> (Vec<f64>, f64, bool) {
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..maxiter {
            let lx = if left { op.apply_left(&x) } else { op.apply(&x) };
            let mut y: Vec<f64> = lx.iter().zip(&x).map(|(a, b)| a / scale + b).collect();
            let s: f64 = neumaier_sum(y.iter().copied());
            y.iter_mut().for_each(|v| *v /= s);
            let change = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            est = (s - 1.0) * scale;
            x = y;
            if change <= tol * 1e-2 {
                return (x, est, true);
            }
        }
        (x, est, false)
    };
    let (h, lam_h, _) = iterate(false);
    let (nu, _, _) = iterate(true);
    if lam_h <= 0.0 {
        return Ok(zero_triplet(n));
    }
    Ok(finish(op, lam_h, h, nu, 1, TripletMethod::ShiftedPowerIteration, tol))
}

/// Default tolerance and iteration budget of [`perron_triplet`].
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAXITER: usize = 100_000;

/// `ν([w])` for an arbitrary admissible word, from the basis values of `ν`.
pub fn nu_cylinder(op: &OperatorMatrix, t: &PerronTriplet, w: &Word) -> f64 {
    cylinder_mass(op, t, w, false)
}

/// `μ([w]) = ν(h χ_{[w]})`.
pub fn mu_cylinder(op: &OperatorMatrix, t: &PerronTriplet, w: &Word) -> f64 {
    cylinder_mass(op, t, w, true)
}

fn cylinder_mass(op: &OperatorMatrix, t: &PerronTriplet, w: &Word, with_h: bool) -> f64 {
    let dd = op.depth();
    let n = w.len();
    if n <= dd {
        return neumaier_sum(
            op.basis
                .iter()
                .enumerate()
                .filter(|(_, b)| b.0[..n] == w.0[..])
                .map(|(i, _)| if with_h { t.h[i] * t.nu[i] } else { t.nu[i] }),
        );
    }
    let Some((phi, m)) = &op.source else {
        return 0.0;
    };
    let d = phi.depth();
    let Some(tail) = op.position(&Word(w.0[n - dd..].to_vec())) else {
        return 0.0;
    };
    let mut value = t.nu[tail];
    for j in 0..(n - dd) {
        if !m.get(w.0[j], w.0[j + 1]) {
            return 0.0;
        }
        value *= phi.weight(&w.0[j..j + d + 1]) / t.lambda;
    }
    if with_h {
        let Some(head) = op.position(&Word(w.0[..dd].to_vec())) else {
            return 0.0;
        };
        value *= t.h[head];
    }
    value
}

/// Cone membership `h(u) ≤ e^{c d_θ(u,v)} h(v)` on same-first-symbol pairs.
#[derive(Clone, Debug, Serialize)]
pub struct ConeCertificate {
    pub c: f64,
    /// Smallest `c` for which the table-level cone condition holds.
    pub required: f64,
    pub verdict: bool,
    pub worst_pair: Option<(Vec<usize>, Vec<usize>, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub cone: ConeCertificate,
    /// `(min, max)` of `μ([w]) / exp(−|w|P + S_{|w|}φ)` over checked words.
    pub gibbs: (f64, f64),
    pub words_checked: usize,
}

/// Cone and Gibbs checks for a triplet. `max_len` bounds the word length of
/// the Gibbs ratio scan.
pub fn certify(op: &OperatorMatrix, t: &PerronTriplet, pressure: f64, cone_c: f64, theta: f64, max_len: usize) -> Result<Certificate> {
    let mut required = 0.0f64;
    let mut worst = None;
    for i in 0..op.dim() {
        for j in 0..op.dim() {
            if i == j || op.first[i] != op.first[j] || t.h[i] <= 0.0 || t.h[j] <= 0.0 {
                continue;
            }
            let dist = op.representatives[i].distance(&op.representatives[j], theta);
            let need = (t.h[i] / t.h[j]).ln() / dist;
            if need > required {
                required = need;
                worst = Some((op.basis[i].0.clone(), op.basis[j].0.clone(), t.h[i] / t.h[j]));
            }
        }
    }
    let cone = ConeCertificate { c: cone_c, required, verdict: required <= cone_c + 1e-12, worst_pair: worst };

    let Some((phi, m)) = &op.source else {
        return Ok(Certificate { cone, gibbs: (f64::NAN, f64::NAN), words_checked: 0 });
    };
    let live = m.live_states();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut count = 0usize;
    for len in 1..=max_len {
        let cyl = enumerate_cylinders_for(m, len)?;
        for w in &cyl.words {
            let Some(p) = representative(m, &live, w) else { continue };
            let weight = birkhoff_weight(phi, w, &p.shifted(len))?;
            let mass = mu_cylinder(op, t, w);
            if weight <= 0.0 || mass <= 0.0 {
                continue;
            }
            let r = mass / (weight * (-(len as f64) * pressure).exp());
            lo = lo.min(r);
            hi = hi.max(r);
            count += 1;
        }
    }
    Ok(Certificate { cone, gibbs: (lo, hi), words_checked: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;

    const GOLD: f64 = 1.618_033_988_749_895;

    #[test]
    fn assembly_examples() {
        let full = MarkovShift::full(2);
        let zero = CylinderPotential::constant(&full.matrix, 1, 1.0).unwrap();
        let op = assemble_operator(&full, &full.matrix, &zero, 1).unwrap();
        assert_eq!(op.to_dense(), DMatrix::from_element(2, 2, 1.0));

        let gm = MarkovShift::golden_mean();
        let z = CylinderPotential::constant(&gm.matrix, 1, 1.0).unwrap();
        let op = assemble_operator(&gm, &gm.matrix, &z, 1).unwrap();
        assert_eq!(op.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]));
        let op2 = assemble_operator(&gm, &gm.matrix, &z, 2).unwrap();
        assert_eq!(op2.dim(), 3);
        assert!((spectral_radius(&op2.to_dense()).unwrap() - GOLD).abs() < 1e-12);

        let not_dominated = TransitionMatrix::full(2);
        assert!(assemble_operator(&gm, &not_dominated, &z, 1).is_err());
    }

    #[test]
    fn triplet_examples() {
        let op = OperatorMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-14);
        assert!(t.h.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(t.nu.iter().all(|x| (x - 0.5).abs() < 1e-12));

        let full = MarkovShift::full(2);
        let bern = CylinderPotential::first_symbol(&full.matrix, &[0.3, 0.7]).unwrap();
        let op = assemble_operator(&full, &full.matrix, &bern, 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-14);
        assert!((t.nu[0] - 0.3).abs() < 1e-12 && (t.nu[1] - 0.7).abs() < 1e-12);
        assert!(t.h.iter().all(|x| (x - 1.0).abs() < 1e-12));

        let gm = OperatorMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let t = perron_triplet(&gm, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - GOLD).abs() < 1e-14);
        assert!((t.h[0] / t.h[1] - GOLD).abs() < 1e-12);
        assert!((t.nu[0] / t.nu[1] - GOLD).abs() < 1e-12);
        assert!((dot(&t.nu, &t.h) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn power_route_agrees_with_dense_route() {
        let gm = OperatorMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.5, 0.0, 0.0]]).unwrap();
        let a = perron_triplet(&gm, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let b = perron_triplet_power(&gm, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((a.lambda - b.lambda).abs() < 1e-10);
        for k in 0..3 {
            assert!((a.h[k] - b.h[k]).abs() < 1e-8);
            assert!((a.nu[k] - b.nu[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn periodic_and_zero_operators() {
        let rot = OperatorMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let t = perron_triplet(&rot, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-12);
        let p = perron_triplet_power(&rot, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((p.lambda - 1.0).abs() < 1e-12);

        let nil = OperatorMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let t = perron_triplet(&nil, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert_eq!(t.lambda, 0.0);

        let two = OperatorMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(perron_triplet(&two, DEFAULT_TOL, DEFAULT_MAXITER).unwrap().non_simple);
    }

    #[test]
    fn block_examples() {
        let op = OperatorMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(block(&op, &[0, 1], &[0, 1]).to_dense(), op.to_dense());
        assert!(block(&op, &[], &[0, 1]).is_zero());
        assert_eq!(block(&op, &[0], &[1]).to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn gibbs_and_cone() {
        let full = MarkovShift::full(2);
        let bern = CylinderPotential::first_symbol(&full.matrix, &[0.3, 0.7]).unwrap();
        let op = assemble_operator(&full, &full.matrix, &bern, 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let c = certify(&op, &t, 0.0, 0.0, 0.5, 6).unwrap();
        assert!((c.gibbs.0 - 1.0).abs() < 1e-12 && (c.gibbs.1 - 1.0).abs() < 1e-12);
        assert!(c.cone.verdict);

        let gm = MarkovShift::golden_mean();
        let z = CylinderPotential::constant(&gm.matrix, 1, 1.0).unwrap();
        let op = assemble_operator(&gm, &gm.matrix, &z, 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let c = certify(&op, &t, t.lambda.ln(), 0.0, 0.5, 8).unwrap();
        assert!(c.gibbs.0 >= 1.0 / 3.0 && c.gibbs.1 <= 3.0);
    }

    #[test]
    fn cylinder_masses_are_consistent() {
        let gm = MarkovShift::golden_mean();
        let z = CylinderPotential::constant(&gm.matrix, 1, 1.0).unwrap();
        let op = assemble_operator(&gm, &gm.matrix, &z, 2).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let total: f64 = [vec![0], vec![1]].iter().map(|w| mu_cylinder(&op, &t, &Word(w.clone()))).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // refinement: μ([w]) = Σ_b μ([w b])
        for w in [vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 1, 0]] {
            let parent = mu_cylinder(&op, &t, &Word(w.clone()));
            let children: f64 = (0..2).map(|b| {
                let mut c = w.clone();
                c.push(b);
                mu_cylinder(&op, &t, &Word(c))
            }).sum();
            assert!((parent - children).abs() < 1e-12, "{w:?}");
        }
        // invariance: μ([w]) = Σ_a μ([a w])
        for w in [vec![0], vec![1], vec![0, 1], vec![1, 0, 0]] {
            let mass = mu_cylinder(&op, &t, &Word(w.clone()));
            let pre: f64 = (0..2).map(|a| mu_cylinder(&op, &t, &Word(w.clone()).prepend(a))).sum();
            assert!((mass - pre).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn export_is_sparse() {
        let op = OperatorMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let doc = op.to_doc(|s| s as u32 + 1);
        assert_eq!(doc.entries.len(), 3);
        assert_eq!(doc.basis, vec![vec![1], vec![2]]);
    }
}
