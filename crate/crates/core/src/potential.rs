//! Potentials stored as cylinder weights `e^φ` and their perturbed families.
//!
//! A [`CylinderPotential`] of depth `d` assigns a weight to every admissible
//! window of `d + 1` symbols; `φ(ω) = log weight(ω₀…ω_d)`. A weight of zero is
//! the value `φ = −∞` (a hole).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::neumaier_sum;
use crate::shift::{
    enumerate_cylinders_for, representative, MarkovShift, PointSurrogate, StateSpace, TransitionMatrix, Word,
};

/// Locally constant potential on windows of `depth + 1` symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderPotential {
    depth: usize,
    matrix: TransitionMatrix,
    weights: BTreeMap<Vec<usize>, f64>,
    /// Bound on the summability tail over states outside the truncation.
    pub tail_sum_bound: f64,
    /// Sup-norm bound on `|φ_true − φ_table|` when the table approximates a
    /// non-locally-constant potential; zero for exact tables.
    pub approximation_error: f64,
}

impl CylinderPotential {
    /// Build from explicit `(window, weight)` entries. Windows absent from the
    /// list carry weight zero.
    pub fn from_entries(
        matrix: &TransitionMatrix,
        depth: usize,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Input("potential depth must be at least 1".into()));
        }
        let mut weights = BTreeMap::new();
        for (w, v) in entries {
            if w.len() != depth + 1 {
                return Err(Error::Input(format!("window {w:?} should have {} symbols", depth + 1)));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Input(format!("weight {v} on {w:?} must be finite and nonnegative")));
            }
            if let Some(&bad) = w.iter().find(|&&s| s >= matrix.size()) {
                return Err(Error::UnknownState(bad as u32));
            }
            if !w.windows(2).all(|p| matrix.get(p[0], p[1])) {
                return Err(Error::Input(format!("window {w:?} is not admissible")));
            }
            weights.insert(w, v);
        }
        Ok(Self { depth, matrix: matrix.clone(), weights, tail_sum_bound: 0.0, approximation_error: 0.0 })
    }

    /// Evaluate `f` on every admissible window of length `depth + 1`.
    pub fn from_fn(matrix: &TransitionMatrix, depth: usize, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let windows = admissible_words(matrix, depth + 1);
        Self::from_entries(matrix, depth, windows.into_iter().map(|w| {
            let v = f(&w);
            (w, v)
        }))
    }

    /// `e^φ ≡ value`.
    pub fn constant(matrix: &TransitionMatrix, depth: usize, value: f64) -> Result<Self> {
        Self::from_fn(matrix, depth, |_| value)
    }

    /// Depth-1 potential depending on the first symbol only.
    pub fn first_symbol(matrix: &TransitionMatrix, weights: &[f64]) -> Result<Self> {
        if weights.len() != matrix.size() {
            return Err(Error::Input("one weight per state expected".into()));
        }
        Self::from_fn(matrix, 1, |w| weights[w[0]])
    }

    /// Depth-1 potential given by a weight per transition, `e^{φ(ab…)} = w(a,b)`.
    pub fn from_edge_weights(matrix: &TransitionMatrix, w: &[Vec<f64>]) -> Result<Self> {
        Self::from_fn(matrix, 1, |x| w[x[0]][x[1]])
    }

    pub fn with_tail_bound(mut self, t: f64) -> Self {
        self.tail_sum_bound = t;
        self
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, f64)> {
        self.weights.iter().map(|(k, &v)| (k, v))
    }

    /// Weight of a window of `depth + 1` symbols; zero when absent.
    pub fn weight(&self, window: &[usize]) -> f64 {
        self.weights.get(window).copied().unwrap_or(0.0)
    }

    /// `B(ij) = 1` iff φ is finite somewhere on `[ij]` (some window starting
    /// with `ij` has positive weight).
    pub fn finite_pattern(&self) -> TransitionMatrix {
        TransitionMatrix::from_edges(
            self.matrix.size(),
            self.entries().filter(|&(_, v)| v > 0.0).map(|(w, _)| (w[0], w[1])),
        )
        .expect("same size")
    }

    /// `Σ_a sup_{[a]} e^φ` over the truncation.
    pub fn summability_sum(&self) -> f64 {
        let mut sup = vec![0.0f64; self.matrix.size()];
        for (w, v) in self.entries() {
            sup[w[0]] = sup[w[0]].max(v);
        }
        neumaier_sum(sup)
    }

    /// Seminorm `[φ]_k` over table keys: the largest `|log w₁ − log w₂| / θ^j`
    /// over finite keys sharing exactly their first `j ≥ k` symbols.
    pub fn lipschitz_seminorm(&self, k: usize, theta: f64, budget: usize) -> f64 {
        let keys: Vec<(&Vec<usize>, f64)> = self.entries().filter(|&(_, v)| v > 0.0).collect();
        let mut best = 0.0f64;
        let mut checked = 0usize;
        // keys are sorted, so keys sharing a prefix of length k are contiguous
        let mut start = 0;
        while start < keys.len() {
            let mut end = start + 1;
            while end < keys.len() && keys[end].0[..k] == keys[start].0[..k] {
                end += 1;
            }
            for a in start..end {
                for b in (a + 1)..end {
                    if checked >= budget {
                        return best;
                    }
                    checked += 1;
                    let (wa, va) = keys[a];
                    let (wb, vb) = keys[b];
                    let shared = wa.iter().zip(wb.iter()).take_while(|(x, y)| x == y).count();
                    let diff = (va.ln() - vb.ln()).abs();
                    best = best.max(diff / theta.powi(shared as i32));
                }
            }
            start = end;
        }
        best
    }

    pub fn to_doc(&self, states: &StateSpace) -> PotentialDoc {
        PotentialDoc {
            depth: self.depth,
            weights: self.entries().map(|(w, v)| (states.ids_of(w), v)).collect(),
            tail_bound: self.tail_sum_bound,
        }
    }

    pub fn from_doc(doc: &PotentialDoc, shift: &MarkovShift) -> Result<Self> {
        let entries = doc
            .weights
            .iter()
            .map(|(w, v)| Ok((shift.states.word_from_ids(w)?.0, *v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_entries(&shift.matrix, doc.depth, entries)?.with_tail_bound(doc.tail_bound))
    }
}

/// All admissible words of a given length (dead ends included).
pub fn admissible_words(m: &TransitionMatrix, len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..m.size()).rev().map(|s| vec![s]).collect();
    while let Some(w) = stack.pop() {
        if w.len() == len {
            out.push(w);
            continue;
        }
        for &b in m.successors(*w.last().expect("nonempty")).iter().rev() {
            let mut next = w.clone();
            next.push(b);
            stack.push(next);
        }
    }
    out
}

/// JSON form: `{"depth":d, "weights":[[word, value],...], "tail_bound":t}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialDoc {
    pub depth: usize,
    pub weights: Vec<(Vec<u32>, f64)>,
    #[serde(default)]
    pub tail_bound: f64,
}

/// `e^{S_{|w|}φ(w·ω)}` as a product of window weights.
pub fn birkhoff_weight(phi: &CylinderPotential, w: &Word, omega: &PointSurrogate) -> Result<f64> {
    let m = phi.matrix();
    let x = omega.prepend(w);
    let check_len = w.len() + 1;
    if let Some(&bad) = w.0.iter().find(|&&s| s >= m.size()) {
        return Err(Error::UnknownState(bad as u32));
    }
    let it = x.itinerary(check_len + phi.depth());
    if let Some(pos) = it[..check_len].windows(2).position(|p| !m.get(p[0], p[1])) {
        return Err(Error::Inadmissible { word: it[..check_len].iter().map(|&s| s as u32).collect(), position: pos });
    }
    let d = phi.depth();
    let mut prod = 1.0;
    for j in 0..w.len() {
        let v = phi.weight(&it[j..j + d + 1]);
        if v == 0.0 {
            return Ok(0.0);
        }
        prod *= v;
    }
    Ok(prod)
}

/// A potential family `φ(ε,·)` on a decreasing ε-grid with its limit `φ`.
#[derive(Clone, Debug)]
pub struct PerturbedFamily {
    pub eps: Vec<f64>,
    pub members: Vec<CylinderPotential>,
    pub limit: CylinderPotential,
}

/// Default grid `ε_k = 2^{-k}`, `k = 1..=20`.
pub fn default_eps_grid() -> Vec<f64> {
    (1..=20).map(|k| 0.5f64.powi(k)).collect()
}

impl PerturbedFamily {
    pub fn new(eps: Vec<f64>, members: Vec<CylinderPotential>, limit: CylinderPotential) -> Result<Self> {
        if eps.is_empty() || eps.len() != members.len() {
            return Err(Error::Input("family needs one member per grid point".into()));
        }
        if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::Input("eps grid must be positive and strictly decreasing".into()));
        }
        if members.iter().any(|m| m.depth() != limit.depth() || m.matrix() != limit.matrix()) {
            return Err(Error::Input("family members must share depth and state space".into()));
        }
        Ok(Self { eps, members, limit })
    }

    /// Weights `c₀(w) + ε c₁(w)`, optionally normalized so that the weights
    /// of windows sharing their first `depth` symbols sum to one.
    pub fn linear(
        matrix: &TransitionMatrix,
        depth: usize,
        eps: Vec<f64>,
        base: impl Fn(&[usize]) -> f64,
        slope: impl Fn(&[usize]) -> f64,
        normalize: bool,
    ) -> Result<Self> {
        let windows = admissible_words(matrix, depth + 1);
        let make = |e: f64| -> Result<CylinderPotential> {
            let mut vals: Vec<(Vec<usize>, f64)> =
                windows.iter().map(|w| (w.clone(), base(w) + e * slope(w))).collect();
            if normalize {
                let mut sums: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
                for (w, v) in &vals {
                    *sums.entry(w[..depth].to_vec()).or_default() += v;
                }
                for (w, v) in vals.iter_mut() {
                    let s = sums[&w[..depth]];
                    if s > 0.0 {
                        *v /= s;
                    }
                }
            }
            vals.retain(|(_, v)| *v != 0.0);
            CylinderPotential::from_entries(matrix, depth, vals)
        };
        let members = eps.iter().map(|&e| make(e)).collect::<Result<Vec<_>>>()?;
        Self::new(eps, members, make(0.0)?)
    }

    /// Member at grid index `k`.
    pub fn member(&self, k: usize) -> &CylinderPotential {
        &self.members[k]
    }

    pub fn distortion(&self, theta: f64) -> DistortionData {
        let lip = |k: usize| {
            std::iter::once(&self.limit)
                .chain(&self.members)
                .map(|p| p.lipschitz_seminorm(k, theta, usize::MAX))
                .fold(0.0, f64::max)
        };
        DistortionData::new(lip(1), lip(2), theta)
    }
}

/// JSON form of a family. Either explicit members or a linear rule.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyDoc {
    Explicit { eps: Vec<f64>, members: Vec<PotentialDoc>, limit: PotentialDoc },
    Linear {
        #[serde(default)]
        eps: Option<Vec<f64>>,
        depth: usize,
        base: Vec<(Vec<u32>, f64)>,
        #[serde(default)]
        slope: Vec<(Vec<u32>, f64)>,
        #[serde(default)]
        normalize: bool,
    },
}

impl FamilyDoc {
    pub fn build(&self, shift: &MarkovShift) -> Result<PerturbedFamily> {
        match self {
            FamilyDoc::Explicit { eps, members, limit } => PerturbedFamily::new(
                eps.clone(),
                members.iter().map(|d| CylinderPotential::from_doc(d, shift)).collect::<Result<_>>()?,
                CylinderPotential::from_doc(limit, shift)?,
            ),
            FamilyDoc::Linear { eps, depth, base, slope, normalize } => {
                let table = |list: &[(Vec<u32>, f64)]| -> Result<BTreeMap<Vec<usize>, f64>> {
                    list.iter().map(|(w, v)| Ok((shift.states.word_from_ids(w)?.0, *v))).collect()
                };
                let b = table(base)?;
                let s = table(slope)?;
                for w in b.keys().chain(s.keys()) {
                    if w.len() != depth + 1 || !w.windows(2).all(|p| shift.matrix.get(p[0], p[1])) {
                        return Err(Error::Input(format!("window {w:?} is not an admissible {}-window", depth + 1)));
                    }
                }
                PerturbedFamily::linear(
                    &shift.matrix,
                    *depth,
                    eps.clone().unwrap_or_else(default_eps_grid),
                    |w| b.get(w).copied().unwrap_or(0.0),
                    |w| s.get(w).copied().unwrap_or(0.0),
                    *normalize,
                )
            }
        }
    }
}

/// Distortion constants derived from the seminorms of a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistortionData {
    pub theta: f64,
    pub lip1: f64,
    pub lip2: f64,
    /// `c_cL = [φ]₂ · max(1, θ/(1−θ))`.
    pub c_cl: f64,
    /// `exp(c_cL θ²/(1−θ))`: ratio bound for points sharing one more symbol
    /// than the Birkhoff length.
    pub c_bd: f64,
    /// `exp([φ]₂θ²/(1−θ) + [φ]₁θ)`: ratio bound for points in the same
    /// `n`-cylinder.
    pub c_bd_cylinder: f64,
}

impl DistortionData {
    pub fn new(lip1: f64, lip2: f64, theta: f64) -> Self {
        let c_cl = lip2 * (theta / (1.0 - theta)).max(1.0);
        Self {
            theta,
            lip1,
            lip2,
            c_cl,
            c_bd: (c_cl * theta * theta / (1.0 - theta)).exp(),
            c_bd_cylinder: (lip2 * theta * theta / (1.0 - theta) + lip1 * theta).exp(),
        }
    }

    pub fn of(phi: &CylinderPotential, theta: f64) -> Self {
        Self::new(
            phi.lipschitz_seminorm(1, theta, usize::MAX),
            phi.lipschitz_seminorm(2, theta, usize::MAX),
            theta,
        )
    }
}

/// Per-ε row of the weight convergence table.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `sup_{[a]} |e^{φ_ε} − e^{φ}|` per state `a`.
    pub per_state: Vec<f64>,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// `sup_ε [φ_ε]₂` together with `[φ]₂`.
    pub distortion_sup: f64,
    /// `Σ_a exp(sup_ε sup_{[a]} φ_ε)` plus the tail bound.
    pub weight_sum: f64,
    pub convergence: Vec<ConvergenceRow>,
    /// Sup-differences decrease along the grid.
    pub convergence_monotone: bool,
}

pub fn regularity_report(fam: &PerturbedFamily, theta: f64, sample_budget: usize) -> RegularityReport {
    let distortion_sup = std::iter::once(&fam.limit)
        .chain(&fam.members)
        .map(|p| p.lipschitz_seminorm(2, theta, sample_budget))
        .fold(0.0, f64::max);
    let n = fam.limit.matrix().size();
    let mut sup = vec![0.0f64; n];
    for p in std::iter::once(&fam.limit).chain(&fam.members) {
        for (w, v) in p.entries() {
            sup[w[0]] = sup[w[0]].max(v);
        }
    }
    let tail = fam.members.iter().map(|p| p.tail_sum_bound).fold(fam.limit.tail_sum_bound, f64::max);
    let weight_sum = neumaier_sum(sup) + tail;

    let convergence: Vec<ConvergenceRow> = fam
        .eps
        .iter()
        .zip(&fam.members)
        .map(|(&eps, p)| {
            let mut per_state = vec![0.0f64; n];
            let keys = p.weights.keys().chain(fam.limit.weights.keys());
            for w in keys {
                let d = (p.weight(w) - fam.limit.weight(w)).abs();
                per_state[w[0]] = per_state[w[0]].max(d);
            }
            let max = per_state.iter().copied().fold(0.0, f64::max);
            ConvergenceRow { eps, per_state, max }
        })
        .collect();
    let convergence_monotone = convergence.windows(2).all(|r| r[1].max <= r[0].max * (1.0 + 1e-12) + 1e-300);
    RegularityReport { distortion_sup, weight_sum, convergence, convergence_monotone }
}

/// Pressure estimate at word length `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub n: usize,
    /// `(1/n) log Σ_{w ∈ W_n} e^{S_nφ(rep(w))}`.
    pub p_point: f64,
    /// `log(Z_n / Z_{n−1})`; equals `p_point` at `n = 1`.
    pub p_ratio: f64,
    pub p_low: f64,
    pub p_high: f64,
}

impl PressureEstimate {
    fn empty(n: usize) -> Self {
        let ninf = f64::NEG_INFINITY;
        Self { n, p_point: ninf, p_ratio: ninf, p_low: ninf, p_high: ninf }
    }
}

/// Suffix-window recursion for `Z_n`. Holds `log` of the running scale so
/// long words do not overflow.
struct WordSums {
    suffixes: Vec<Vec<usize>>,
    /// `(next suffix, weight)` per suffix.
    steps: Vec<Vec<(usize, f64)>>,
    tails: Vec<f64>,
}

impl WordSums {
    fn new(m: &TransitionMatrix, phi: &CylinderPotential) -> Result<Self> {
        let d = phi.depth();
        let cyl = enumerate_cylinders_for(m, d)?;
        let suffixes = cyl.words.iter().map(|w| w.0.clone()).collect::<Vec<_>>();
        let index: BTreeMap<&[usize], usize> = suffixes.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        let mut steps = Vec::with_capacity(suffixes.len());
        for s in &suffixes {
            let mut row = Vec::new();
            for &b in m.successors(*s.last().expect("nonempty")) {
                let mut win = s.clone();
                win.push(b);
                let v = phi.weight(&win);
                if v > 0.0 {
                    if let Some(&j) = index.get(&win[1..]) {
                        row.push((j, v));
                    }
                }
            }
            steps.push(row);
        }
        let tails = cyl
            .words
            .iter()
            .zip(&cyl.points)
            .map(|(w, p)| birkhoff_weight(phi, w, &p.shifted(w.len())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { suffixes, steps, tails })
    }

    /// Returns `log Z_k` for `k = d..=n` and the Collatz–Wielandt ratio bounds
    /// of the last step.
    fn run(&self, n: usize, d: usize) -> (Vec<f64>, Option<(f64, f64)>) {
        let mut f = vec![1.0f64; self.suffixes.len()];
        let mut log_scale = 0.0f64;
        let mut logs = Vec::new();
        let total = |f: &[f64], log_scale: f64| {
            let z = neumaier_sum(f.iter().zip(&self.tails).map(|(a, b)| a * b));
            if z > 0.0 {
                z.ln() + log_scale
            } else {
                f64::NEG_INFINITY
            }
        };
        logs.push(total(&f, log_scale));
        let mut cw = None;
        for _ in d..n {
            let mut g = vec![0.0f64; f.len()];
            for (i, row) in self.steps.iter().enumerate() {
                if f[i] == 0.0 {
                    continue;
                }
                for &(j, v) in row {
                    g[j] += f[i] * v;
                }
            }
            let ratios: Vec<f64> =
                f.iter().zip(&g).filter(|(a, _)| **a > 0.0).map(|(a, b)| b / a).collect();
            cw = if ratios.is_empty() {
                None
            } else {
                Some((ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max)))
            };
            let s = g.iter().copied().fold(0.0, f64::max);
            if s == 0.0 {
                logs.push(f64::NEG_INFINITY);
                f = g;
                continue;
            }
            for x in g.iter_mut() {
                *x /= s;
            }
            log_scale += s.ln();
            f = g;
            logs.push(total(&f, log_scale));
        }
        (logs, cw)
    }
}

/// Word-sum pressure estimate with a certified bracket.
pub fn pressure_estimate(shift: &MarkovShift, phi: &CylinderPotential, n: usize) -> Result<PressureEstimate> {
    if n == 0 {
        return Err(Error::Input("word length must be at least 1".into()));
    }
    let d = phi.depth();
    let m = &shift.matrix;
    let live = m.live_states();

    let log_z = |k: usize| -> Result<f64> {
        let cyl = enumerate_cylinders_for(m, k)?;
        let z = neumaier_sum(
            cyl.words
                .iter()
                .zip(&cyl.points)
                .map(|(w, p)| birkhoff_weight(phi, w, &p.shifted(w.len())))
                .collect::<Result<Vec<_>>>()?,
        );
        Ok(if z > 0.0 { z.ln() } else { f64::NEG_INFINITY })
    };

    let sums = WordSums::new(m, phi)?;
    if sums.suffixes.is_empty() || !live.iter().any(|&x| x) {
        return Ok(PressureEstimate::empty(n));
    }
    let horizon = n.max(d + 1);
    let (logs, cw) = sums.run(horizon, d);
    let log_zn = if n >= d { logs[n - d] } else { log_z(n)? };
    if log_zn == f64::NEG_INFINITY {
        return Ok(PressureEstimate::empty(n));
    }
    let p_point = log_zn / n as f64;
    let p_ratio = if n == 1 {
        p_point
    } else {
        let prev = if n - 1 >= d { logs[n - 1 - d] } else { log_z(n - 1)? };
        log_zn - prev
    };

    let base = phi.summability_sum();
    let tail = if base > 0.0 { (phi.tail_sum_bound / base).ln_1p() } else { 0.0 };
    let distortion = if n >= d { 0.0 } else { DistortionData::of(phi, shift.theta).c_bd.ln() / n as f64 };
    let widen = tail + distortion + phi.approximation_error;
    let (lo, hi) = match cw {
        Some((lo, hi)) if lo > 0.0 => (lo.ln(), hi.ln()),
        Some((_, hi)) => (f64::NEG_INFINITY, hi.ln()),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    Ok(PressureEstimate { n, p_point, p_ratio, p_low: lo - widen, p_high: hi + widen })
}

/// Birkhoff weights of all admissible `n`-words at their representative points.
pub fn word_weights(m: &TransitionMatrix, phi: &CylinderPotential, n: usize) -> Result<Vec<(Word, f64)>> {
    let live = m.live_states();
    let cyl = enumerate_cylinders_for(m, n)?;
    cyl.words
        .into_iter()
        .map(|w| {
            let p = representative(m, &live, &w).expect("enumerated words extend");
            let v = birkhoff_weight(phi, &w, &p.shifted(w.len()))?;
            Ok((w, v))
        })
        .collect()
}
