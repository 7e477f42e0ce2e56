//! Piecewise expanding Markov interval maps over a directed multigraph.
//!
//! Each edge `e` carries an inverse branch `T_e : J_{t(e)} → J_{i(e)}`. The
//! symbolic coding uses edges as states with `A(e,e') = 1` iff
//! `t(e) = i(e')`, and the coding point of `ω` is the nested intersection
//! `⋂_k T_{ω₀⋯ω_k}(J_{t(ω_k)})`. The geometric potential
//! `φ(ω) = log|T'_{ω₀}(π σ ω)|` is emitted as a cylinder table, so every
//! quantity of the symbolic layer applies directly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::neumaier_sum;
use crate::metastability::{delta_coefficients, richardson, splitting_limit, Extrapolated, SplittingOptions, SplittingReport};
use crate::potential::{admissible_words, regularity_report, CylinderPotential, PerturbedFamily, RegularityReport};
use crate::shift::{representative, transitive_components, MarkovShift, PointSurrogate, StateSpace, TransitionMatrix, Word};
use crate::transfer::{assemble_operator, block, perron_triplet, OperatorMatrix, PerronTriplet, DEFAULT_MAXITER, DEFAULT_TOL};

/// Vertices and edges; `init[e] = i(e)`, `term[e] = t(e)` as vertex indices.
/// Edges are stored sorted by identifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchGraph {
    pub vertex_ids: Vec<u32>,
    pub edge_ids: Vec<u32>,
    pub init: Vec<usize>,
    pub term: Vec<usize>,
}

impl BranchGraph {
    pub fn n_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_ids.len()
    }

    /// Edge transition matrix `A_G`.
    pub fn incidence(&self) -> TransitionMatrix {
        let n = self.n_edges();
        let edges = (0..n).flat_map(|e| (0..n).filter(move |&f| self.term[e] == self.init[f]).map(move |f| (e, f)));
        TransitionMatrix::from_edges(n, edges).expect("indices in range")
    }

    /// Vertex graph with an arc `t(e) → i(e)` for each listed edge.
    fn vertex_graph(&self, edges: impl Iterator<Item = usize>) -> TransitionMatrix {
        TransitionMatrix::from_edges(self.n_vertices(), edges.map(|e| (self.term[e], self.init[e]))).expect("indices in range")
    }
}

/// `(ε, x) ↦ value` for user-supplied branches.
pub type BranchFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// `e ∈ E₀`: survives at ε = 0.
    Persistent,
    /// `e ∈ E∖E₀`: collapses to a point at ε = 0.
    Vanishing,
}

#[derive(Clone)]
pub enum MapForm {
    /// `T(ε,x) = (a + ε da) x + (b + ε db)`.
    Affine { a: f64, b: f64, da: f64, db: f64 },
    /// `T(ε,x) = target + ε scale (x − lo(J_{t(e)}))`.
    Vanishing { target: f64, scale: f64 },
    /// Differentiable branch with supplied derivative.
    Parametric { value: BranchFn, derivative: BranchFn, role: Role },
}

impl fmt::Debug for MapForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapForm::Affine { a, b, da, db } => write!(f, "Affine({a}+ε{da}, {b}+ε{db})"),
            MapForm::Vanishing { target, scale } => write!(f, "Vanishing({target}, {scale})"),
            MapForm::Parametric { role, .. } => write!(f, "Parametric({role:?})"),
        }
    }
}

/// The inverse branch of one edge.
#[derive(Clone, Debug)]
pub struct BranchMap {
    pub edge: usize,
    pub form: MapForm,
    /// Domain `J_{t(e)}`.
    pub domain: (f64, f64),
}

impl BranchMap {
    pub fn role(&self) -> Role {
        match &self.form {
            MapForm::Affine { .. } => Role::Persistent,
            MapForm::Vanishing { .. } => Role::Vanishing,
            MapForm::Parametric { role, .. } => *role,
        }
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self.form, MapForm::Parametric { .. })
    }

    pub fn value(&self, eps: f64, x: f64) -> f64 {
        match &self.form {
            MapForm::Affine { a, b, da, db } => (a + eps * da) * x + (b + eps * db),
            MapForm::Vanishing { target, scale } => target + eps * scale * (x - self.domain.0),
            MapForm::Parametric { value, .. } => value(eps, x),
        }
    }

    pub fn derivative(&self, eps: f64, x: f64) -> f64 {
        match &self.form {
            MapForm::Affine { a, da, .. } => a + eps * da,
            MapForm::Vanishing { scale, .. } => eps * scale,
            MapForm::Parametric { derivative, .. } => derivative(eps, x),
        }
    }

    /// Image of `[lo, hi] ⊆ J_{t(e)}`; branches are monotone.
    pub fn image_of(&self, eps: f64, lo: f64, hi: f64) -> (f64, f64) {
        let (p, q) = (self.value(eps, lo), self.value(eps, hi));
        (p.min(q), p.max(q))
    }

    pub fn image(&self, eps: f64) -> (f64, f64) {
        self.image_of(eps, self.domain.0, self.domain.1)
    }

    /// Preimage of `y` in the domain, clamped to it.
    pub fn inverse(&self, eps: f64, y: f64) -> f64 {
        let (lo, hi) = self.domain;
        let x = match &self.form {
            MapForm::Affine { a, b, da, db } => (y - (b + eps * db)) / (a + eps * da),
            MapForm::Vanishing { target, scale } => lo + (y - target) / (eps * scale),
            MapForm::Parametric { value, .. } => {
                let increasing = value(eps, hi) >= value(eps, lo);
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if (value(eps, m) < y) == increasing {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
        };
        x.clamp(lo, hi)
    }

    /// `sup |T'|` over the domain; sampled for parametric branches.
    pub fn sup_derivative(&self, eps: f64, samples: usize) -> f64 {
        match &self.form {
            MapForm::Parametric { .. } => sample_points(self.domain, samples).map(|x| self.derivative(eps, x).abs()).fold(0.0, f64::max),
            _ => self.derivative(eps, self.domain.0).abs(),
        }
    }

    /// Sampled `sup |(log|T'|)'|`; zero for affine branches.
    pub fn log_derivative_lipschitz(&self, eps: f64, samples: usize) -> f64 {
        if self.is_affine() {
            return 0.0;
        }
        let pts: Vec<f64> = sample_points(self.domain, samples).collect();
        pts.windows(2)
            .map(|p| {
                let (u, v) = (self.derivative(eps, p[0]).abs(), self.derivative(eps, p[1]).abs());
                if u > 0.0 && v > 0.0 {
                    (v.ln() - u.ln()).abs() / (p[1] - p[0])
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

fn sample_points((lo, hi): (f64, f64), n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

/// A Markov interval system at a fixed parameter.
#[derive(Clone, Debug)]
pub struct IntervalSystem {
    pub graph: BranchGraph,
    /// `J_v` per vertex index.
    pub intervals: Vec<(f64, f64)>,
    /// One branch per edge index.
    pub branches: Vec<BranchMap>,
    pub eps: f64,
    /// Summability tail beyond the truncated edge set.
    pub tail_bound: f64,
}

/// Samples per branch for checks that cannot be done exactly.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Coding points are truncated once `r^n < CODING_TOL · |J|`.
pub const CODING_TOL: f64 = 1e-12;

impl IntervalSystem {
    pub fn at(&self, eps: f64) -> IntervalSystem {
        IntervalSystem { eps, ..self.clone() }
    }

    pub fn shift(&self) -> MarkovShift {
        let states = StateSpace::new(self.graph.edge_ids.iter().copied()).expect("edge ids validated");
        MarkovShift::new(states, self.graph.incidence()).expect("sizes agree")
    }

    pub fn image(&self, e: usize) -> (f64, f64) {
        self.branches[e].image(self.eps)
    }

    /// `r = sup_e sup|T_e'|`.
    pub fn contraction(&self) -> f64 {
        self.branches.iter().map(|b| b.sup_derivative(self.eps, DEFAULT_SAMPLES)).fold(0.0, f64::max)
    }

    /// Interval `T_{w₀}∘⋯∘T_{w_{n−1}}(J_{t(w_{n−1})})`.
    pub fn word_image(&self, w: &[usize]) -> (f64, f64) {
        let last = *w.last().expect("nonempty word");
        let (mut lo, mut hi) = self.intervals[self.graph.term[last]];
        for &e in w.iter().rev() {
            (lo, hi) = self.branches[e].image_of(self.eps, lo, hi);
        }
        (lo, hi)
    }

    /// Number of nested images needed for the coding-point tolerance.
    pub fn coding_depth(&self) -> usize {
        let r = self.contraction();
        if r <= 0.0 {
            return 1;
        }
        if r >= 1.0 {
            return 10_000;
        }
        ((CODING_TOL.ln() / r.ln()).ceil() as usize).clamp(1, 10_000)
    }

    /// `π_n(ω)`: midpoint of the `n`-fold nested image.
    pub fn coding_point_n(&self, point: &PointSurrogate, n: usize) -> f64 {
        let (lo, hi) = self.word_image(&point.itinerary(n.max(1)));
        0.5 * (lo + hi)
    }

    pub fn coding_point(&self, point: &PointSurrogate) -> f64 {
        self.coding_point_n(point, self.coding_depth())
    }

    /// Forward map `f_ε`: invert the lowest-index branch whose image holds `x`.
    /// Returns the new point and the edge used.
    pub fn forward(&self, images: &[(f64, f64)], x: f64) -> (f64, usize) {
        let e = images
            .iter()
            .position(|&(lo, hi)| lo <= x && x <= hi && hi > lo)
            .unwrap_or_else(|| {
                // float gaps: nearest nondegenerate image
                (0..images.len())
                    .filter(|&e| images[e].1 > images[e].0)
                    .min_by(|&a, &b| {
                        let d = |e: usize| (images[e].0 - x).max(x - images[e].1);
                        d(a).total_cmp(&d(b))
                    })
                    .expect("some branch has a nondegenerate image")
            });
        (self.branches[e].inverse(self.eps, x), e)
    }
}

/// A parametric system sampled on a decreasing ε-grid.
#[derive(Clone, Debug)]
pub struct PerturbedIntervalFamily {
    pub system: IntervalSystem,
    pub eps: Vec<f64>,
}

impl PerturbedIntervalFamily {
    pub fn at(&self, eps: f64) -> IntervalSystem {
        self.system.at(eps)
    }

    pub fn limit(&self) -> IntervalSystem {
        self.system.at(0.0)
    }

    /// Persistent edges `E₀`.
    pub fn persistent(&self) -> Vec<usize> {
        (0..self.system.graph.n_edges()).filter(|&e| self.system.branches[e].role() == Role::Persistent).collect()
    }

    /// Strongly connected subgraphs `SC(G₀)` as vertex sets.
    pub fn strong_components(&self) -> Vec<Vec<usize>> {
        let g0 = self.system.graph.vertex_graph(self.persistent().into_iter());
        transitive_components(&g0).irreducible().map(|(_, c)| c.states.clone()).collect()
    }

    /// Edge classes `Ê_H = {e : i(e) ∈ I_H}`, one per `H ∈ SC(G₀)` that some
    /// vertex selects. Fails when a vertex selects no `H` or several.
    pub fn edge_classes(&self) -> Result<Vec<Vec<usize>>> {
        let owners = self.vertex_owners()?;
        let sc = self.strong_components();
        let g = &self.system.graph;
        let classes: Vec<Vec<usize>> = (0..sc.len())
            .map(|h| (0..g.n_edges()).filter(|&e| owners[g.init[e]] == h).collect::<Vec<_>>())
            .filter(|c| !c.is_empty())
            .collect();
        Ok(classes)
    }

    /// For each vertex, the unique `H ∈ SC(G₀)` whose edges into `v` cover `J_v`.
    fn vertex_owners(&self) -> Result<Vec<usize>> {
        let sys = self.limit();
        let g = &sys.graph;
        let sc = self.strong_components();
        let persistent = self.persistent();
        (0..g.n_vertices())
            .map(|v| {
                let candidates: Vec<usize> = (0..sc.len())
                    .filter(|&h| {
                        let imgs: Vec<(f64, f64)> = persistent
                            .iter()
                            .copied()
                            .filter(|&e| g.init[e] == v && sc[h].contains(&g.term[e]) && sc[h].contains(&v))
                            .map(|e| sys.image(e))
                            .collect();
                        !imgs.is_empty() && uncovered_length(sys.intervals[v], &imgs) <= GAP_TOL
                    })
                    .collect();
                match candidates.as_slice() {
                    [h] => Ok(*h),
                    [] => Err(Error::Construction { clause: "unique-cover".into(), detail: format!("vertex {} has no covering strongly connected subgraph", g.vertex_ids[v]) }),
                    _ => Err(Error::Construction { clause: "unique-cover".into(), detail: format!("vertex {} has several covering strongly connected subgraphs", g.vertex_ids[v]) }),
                }
            })
            .collect()
    }
}

/// Tolerance on gaps and overlaps of interval tilings.
pub const GAP_TOL: f64 = 1e-9;

/// Length of `j` not covered by the union of `pieces`.
fn uncovered_length(j: (f64, f64), pieces: &[(f64, f64)]) -> f64 {
    let mut p: Vec<(f64, f64)> = pieces.iter().map(|&(a, b)| (a.max(j.0), b.min(j.1))).filter(|(a, b)| b > a).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = j.0;
    let mut gap = 0.0;
    for (a, b) in p {
        if a > reach {
            gap += a - reach;
        }
        reach = reach.max(b);
    }
    gap + (j.1 - reach).max(0.0)
}

/// Largest pairwise overlap of interiors.
fn max_overlap(pieces: &[(f64, f64)]) -> f64 {
    let mut p: Vec<(f64, f64)> = pieces.iter().copied().filter(|(a, b)| b > a).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            worst = worst.max(p[i].1.min(p[j].1) - p[j].0);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// JSON description

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MapDoc {
    Affine {
        a: f64,
        b: f64,
        #[serde(default)]
        da: f64,
        #[serde(default)]
        db: f64,
    },
    Vanishing { target: f64, scale_of_eps: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: u32,
    pub i: u32,
    pub t: u32,
    pub map: MapDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalDoc {
    pub vertices: Vec<u32>,
    /// Vertex identifier (as a string key) to `[lo, hi]`.
    pub intervals: BTreeMap<String, [f64; 2]>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
}

impl IntervalDoc {
    /// Structural parsing only; analytic clauses are checked by [`validate`].
    pub fn build(&self) -> Result<IntervalSystem> {
        let mut vertex_ids = self.vertices.clone();
        vertex_ids.sort_unstable();
        if vertex_ids.is_empty() || vertex_ids.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Construction { clause: "finite-graph".into(), detail: "vertex identifiers must be nonempty and distinct".into() });
        }
        let vidx = |id: u32| -> Result<usize> {
            vertex_ids.binary_search(&id).map_err(|_| Error::Construction { clause: "finite-graph".into(), detail: format!("unknown vertex {id}") })
        };
        let mut intervals = vec![(f64::NAN, f64::NAN); vertex_ids.len()];
        for (k, [lo, hi]) in &self.intervals {
            let id: u32 = k.parse().map_err(|_| Error::Input(format!("interval key {k:?} is not a vertex identifier")))?;
            if !(lo < hi) {
                return Err(Error::Construction { clause: "interval-tiling".into(), detail: format!("J_{id} = [{lo}, {hi}] is empty") });
            }
            intervals[vidx(id)?] = (*lo, *hi);
        }
        if let Some(v) = intervals.iter().position(|j| j.0.is_nan()) {
            return Err(Error::Construction { clause: "interval-tiling".into(), detail: format!("vertex {} has no interval", vertex_ids[v]) });
        }
        let mut edges: Vec<&EdgeDoc> = self.edges.iter().collect();
        edges.sort_by_key(|e| e.id);
        if edges.is_empty() || edges.windows(2).any(|p| p[0].id == p[1].id) {
            return Err(Error::Construction { clause: "finite-graph".into(), detail: "edge identifiers must be nonempty and distinct".into() });
        }
        let init = edges.iter().map(|e| vidx(e.i)).collect::<Result<Vec<_>>>()?;
        let term = edges.iter().map(|e| vidx(e.t)).collect::<Result<Vec<_>>>()?;
        let branches = edges
            .iter()
            .enumerate()
            .map(|(k, e)| BranchMap {
                edge: k,
                domain: intervals[term[k]],
                form: match e.map {
                    MapDoc::Affine { a, b, da, db } => MapForm::Affine { a, b, da, db },
                    MapDoc::Vanishing { target, scale_of_eps } => MapForm::Vanishing { target, scale: scale_of_eps },
                },
            })
            .collect();
        Ok(IntervalSystem {
            graph: BranchGraph { edge_ids: edges.iter().map(|e| e.id).collect(), vertex_ids, init, term },
            intervals,
            branches,
            eps: 0.0,
            tail_bound: self.tail_bound.unwrap_or(0.0),
        })
    }
}

// ---------------------------------------------------------------------------
// Validation

/// Outcome of one itemized clause.
#[derive(Clone, Debug, Serialize)]
pub struct ClauseCheck {
    pub clause: String,
    pub passed: bool,
    /// True when the check is evaluated on sample points only.
    pub sampled: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceEntry {
    pub eps: f64,
    pub sup_value: f64,
    pub sup_derivative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub clauses: Vec<ClauseCheck>,
    /// Branch convergence table along the grid.
    pub convergence: Vec<ConvergenceEntry>,
    /// `SC(G₀)` as vertex identifiers.
    pub strong_components: Vec<Vec<u32>>,
    /// `Ê_H` as edge identifiers.
    pub edge_classes: Vec<Vec<u32>>,
    pub passed: bool,
}

fn clause(name: &str, passed: bool, sampled: bool, value: f64, detail: impl Into<String>) -> ClauseCheck {
    ClauseCheck { clause: name.into(), passed, sampled, value, detail: detail.into() }
}

/// Graph, tiling and branch checks for a system at its current parameter,
/// restricted to `edges`.
fn system_clauses(sys: &IntervalSystem, edges: &[usize], prefix: &str) -> Result<Vec<ClauseCheck>> {
    let g = &sys.graph;
    let eps = sys.eps;
    let mut out = Vec::new();
    let name = |s: &str| format!("{prefix}{s}");
    let sampled = edges.iter().any(|&e| !sys.branches[e].is_affine());

    // tiling: cover of [0,1] with disjoint interiors
    let gap = uncovered_length((0.0, 1.0), &sys.intervals);
    let overlap = max_overlap(&sys.intervals);
    let outside = sys.intervals.iter().map(|&(a, b)| (-a).max(b - 1.0)).fold(0.0, f64::max);
    if overlap > GAP_TOL {
        return Err(Error::Construction { clause: "interval-tiling".into(), detail: format!("vertex intervals overlap by {overlap:e}") });
    }
    out.push(clause(&name("interval-tiling"), gap <= GAP_TOL && outside <= GAP_TOL, false, gap.max(outside), "intervals tile [0,1]"));

    // injectivity and image containment
    let mut worst = 0.0f64;
    let mut injective = true;
    for &e in edges {
        let b = &sys.branches[e];
        let (lo, hi) = b.image(eps);
        let target = sys.intervals[g.init[e]];
        worst = worst.max((target.0 - lo).max(hi - target.1));
        injective &= match &b.form {
            MapForm::Parametric { .. } => {
                let vals: Vec<f64> = sample_points(b.domain, DEFAULT_SAMPLES).map(|x| b.value(eps, x)).collect();
                vals.windows(2).all(|p| p[1] > p[0]) || vals.windows(2).all(|p| p[1] < p[0])
            }
            _ => b.derivative(eps, 0.0) != 0.0 || (b.role() == Role::Vanishing && eps == 0.0),
        };
    }
    out.push(clause(&name("branch-injective"), worst <= GAP_TOL && injective, sampled, worst, "branches injective with image in J_{i(e)}"));

    // expansion
    let r = edges.iter().map(|&e| sys.branches[e].sup_derivative(eps, DEFAULT_SAMPLES)).fold(0.0, f64::max);
    if r >= 1.0 {
        return Err(Error::Construction { clause: "contraction".into(), detail: format!("sup|T'| = {r} at ε = {eps} is not below 1") });
    }
    out.push(clause(&name("contraction"), true, sampled, r, "sup|T'| < 1"));

    // open set condition per target vertex
    let mut ov = 0.0f64;
    for v in 0..g.n_vertices() {
        let imgs: Vec<(f64, f64)> = edges.iter().copied().filter(|&e| g.init[e] == v).map(|e| sys.image(e)).collect();
        ov = ov.max(max_overlap(&imgs));
    }
    if ov > GAP_TOL {
        return Err(Error::Construction { clause: "disjoint-images".into(), detail: format!("branch images overlap by {ov:e}") });
    }
    out.push(clause(&name("disjoint-images"), true, false, ov, "images have disjoint interiors"));

    // bounded distortion
    let dist = edges.iter().map(|&e| sys.branches[e].log_derivative_lipschitz(eps, DEFAULT_SAMPLES)).fold(0.0, f64::max);
    out.push(clause(&name("bounded-distortion"), dist.is_finite(), sampled, dist, "sup |(log|T'|)'|"));

    // images into each vertex cover it
    let mut worst_gap = 0.0f64;
    for v in 0..g.n_vertices() {
        let imgs: Vec<(f64, f64)> = edges.iter().copied().filter(|&e| g.init[e] == v).map(|e| sys.image(e)).collect();
        worst_gap = worst_gap.max(uncovered_length(sys.intervals[v], &imgs));
    }
    out.push(clause(&name("images-cover"), worst_gap <= GAP_TOL, false, worst_gap, "images into J_v cover J_v"));

    // summability over the truncation plus tail
    let sum = neumaier_sum(edges.iter().map(|&e| sys.branches[e].sup_derivative(eps, DEFAULT_SAMPLES))) + sys.tail_bound;
    out.push(clause(&name("summability"), sum.is_finite(), sampled, sum, "Σ_e sup|T_e'| + tail"));
    Ok(out)
}

/// Runs the system checks at every grid point and at ε = 0 for `E₀`, then
/// connectivity, branch convergence, the limit subsystem and unique covers.
pub fn validate(fam: &PerturbedIntervalFamily) -> Result<ValidationReport> {
    let g = &fam.system.graph;
    let all: Vec<usize> = (0..g.n_edges()).collect();
    let mut clauses = Vec::new();
    let finite = g.init.len() == g.n_edges() && g.term.len() == g.n_edges();
    clauses.push(clause("finite-graph", finite, false, g.n_edges() as f64, "i, t total on a finite edge set"));

    let mut grid_clauses: BTreeMap<String, ClauseCheck> = BTreeMap::new();
    for &eps in &fam.eps {
        for c in system_clauses(&fam.at(eps), &all, "")? {
            grid_clauses
                .entry(c.clause.clone())
                .and_modify(|acc| {
                    acc.passed &= c.passed;
                    acc.value = acc.value.max(c.value);
                })
                .or_insert(c);
        }
    }
    clauses.extend(grid_clauses.into_values());

    // G strongly connected
    let vg = g.vertex_graph(all.iter().copied());
    let strongly = g.n_vertices() == 1 || vg.is_irreducible_on(&(0..g.n_vertices()).collect::<Vec<_>>());
    clauses.push(clause("strongly-connected", strongly, false, f64::NAN, "G strongly connected"));

    // branch convergence along the grid
    let limit = fam.limit();
    let convergence: Vec<ConvergenceEntry> = fam
        .eps
        .iter()
        .map(|&eps| {
            let (mut sv, mut sd) = (0.0f64, 0.0f64);
            for b in &fam.system.branches {
                for x in sample_points(b.domain, if b.is_affine() { 2 } else { DEFAULT_SAMPLES }) {
                    sv = sv.max((b.value(eps, x) - b.value(0.0, x)).abs());
                    sd = sd.max((b.derivative(eps, x) - b.derivative(0.0, x)).abs());
                }
            }
            ConvergenceEntry { eps, sup_value: sv, sup_derivative: sd }
        })
        .collect();
    let rate_ok = match (convergence.first(), convergence.last()) {
        (Some(f), Some(l)) if convergence.len() > 1 => {
            let bound = |x: f64| x * (l.eps / f.eps).sqrt() + 1e-15;
            l.sup_value <= bound(f.sup_value) && l.sup_derivative <= bound(f.sup_derivative)
        }
        _ => true,
    };
    let monotone = convergence.windows(2).all(|p| p[1].sup_value <= p[0].sup_value + 1e-15 && p[1].sup_derivative <= p[0].sup_derivative + 1e-15);
    let last = convergence.last().map_or(0.0, |c| c.sup_value.max(c.sup_derivative));
    clauses.push(clause("branch-convergence", monotone && rate_ok, !fam.system.branches.iter().all(BranchMap::is_affine), last, "T_e(ε,·) → T_e uniformly in C¹"));

    // the limit subsystem on E₀
    let e0 = fam.persistent();
    for mut c in system_clauses(&limit, &e0, "limit ")? {
        c.detail = format!("limit subsystem: {}", c.detail);
        clauses.push(c);
    }

    // unique covering strongly connected subgraph per vertex
    let sc = fam.strong_components();
    let classes = fam.edge_classes();
    let (hv, detail) = match &classes {
        Ok(_) => (true, "each vertex selects exactly one H".to_string()),
        Err(e) => (false, e.to_string()),
    };
    clauses.push(clause("unique-cover", hv, false, sc.len() as f64, detail));

    let edge_classes: Vec<Vec<u32>> = classes
        .unwrap_or_default()
        .iter()
        .map(|c| c.iter().map(|&e| g.edge_ids[e]).collect())
        .collect();
    let covered: usize = edge_classes.iter().map(Vec::len).sum();
    if !edge_classes.is_empty() {
        clauses.push(clause("edge-partition", covered == g.n_edges(), false, covered as f64, "classes partition E"));
    }
    let passed = clauses.iter().all(|c| c.passed);
    Ok(ValidationReport {
        clauses,
        convergence,
        strong_components: sc.iter().map(|h| h.iter().map(|&v| g.vertex_ids[v]).collect()).collect(),
        edge_classes,
        passed,
    })
}

/// Parse, check and return the family with its report.
pub fn build_and_validate(doc: &IntervalDoc, eps: Vec<f64>) -> Result<(PerturbedIntervalFamily, ValidationReport)> {
    if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Input("eps grid must be positive and strictly decreasing".into()));
    }
    let fam = PerturbedIntervalFamily { system: doc.build()?, eps };
    let report = validate(&fam)?;
    Ok((fam, report))
}

// ---------------------------------------------------------------------------
// Geometric potential

/// Cylinder table of `log|T'|` with the coding points used.
#[derive(Clone, Debug)]
pub struct GeometricPotential {
    pub potential: CylinderPotential,
    /// `(window, π(rep(window[1..])))`
    pub coding_points: Vec<(Vec<usize>, f64)>,
}

/// Weights `|T'_{w₀}(π σ rep(w))|` on admissible `(depth+1)`-windows.
///
/// Affine systems give exact tables; otherwise `approximation_error` bounds
/// the sup-distance to `log|T'_{ω₀}(π σ ω)|`.
pub fn geometric_potential(sys: &IntervalSystem, depth: usize) -> Result<GeometricPotential> {
    if depth == 0 {
        return Err(Error::Input("potential depth must be at least 1".into()));
    }
    let m = sys.graph.incidence();
    let live = m.live_states();
    let mut entries = Vec::new();
    let mut points = Vec::new();
    for w in admissible_words(&m, depth + 1) {
        let Some(rep) = representative(&m, &live, &Word(w[1..].to_vec())) else {
            continue;
        };
        let x = sys.coding_point(&rep);
        let weight = sys.branches[w[0]].derivative(sys.eps, x).abs();
        points.push((w.clone(), x));
        if weight > 0.0 {
            entries.push((w, weight));
        }
    }
    let mut potential = CylinderPotential::from_entries(&m, depth, entries)?.with_tail_bound(sys.tail_bound);
    if !sys.branches.iter().all(BranchMap::is_affine) {
        // |log T'(x) − log T'(y)| ≤ K |x − y| and diam π[w₁⋯w_d] ≤ r^d max|J|
        let k = sys.branches.iter().map(|b| b.log_derivative_lipschitz(sys.eps, DEFAULT_SAMPLES)).fold(0.0, f64::max);
        let jmax = sys.intervals.iter().map(|j| j.1 - j.0).fold(0.0, f64::max);
        potential.approximation_error = k * sys.contraction().powi(depth as i32) * jmax;
    }
    Ok(GeometricPotential { potential, coding_points: points })
}

/// Symbolic family of geometric potentials on the grid.
pub fn symbolic_family(fam: &PerturbedIntervalFamily, depth: usize) -> Result<PerturbedFamily> {
    let members = fam
        .eps
        .par_iter()
        .map(|&e| geometric_potential(&fam.at(e), depth).map(|g| g.potential))
        .collect::<Result<Vec<_>>>()?;
    PerturbedFamily::new(fam.eps.clone(), members, geometric_potential(&fam.limit(), depth)?.potential)
}

// ---------------------------------------------------------------------------
// Splitting coefficients and measures

#[derive(Clone, Debug, Serialize)]
pub struct PCoefficients {
    pub eps: f64,
    pub values: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    /// Classes `Ê_H` (edge indices).
    pub classes: Vec<Vec<usize>>,
    pub flagged: Vec<(usize, usize)>,
}

/// `p_ε(Q,·)` with reference eigenvalue 1 over the classes `Ê_H`.
pub fn p_coefficients(fam: &PerturbedIntervalFamily, eps: f64, q: &[usize], depth: usize) -> Result<PCoefficients> {
    let classes = fam.edge_classes()?;
    let sys = fam.at(eps);
    let phi = geometric_potential(&sys, depth)?.potential;
    let op = assemble_operator(&sys.shift(), phi.matrix(), &phi, depth)?;
    let d = delta_coefficients(&op, 1.0, q, &classes)?;
    Ok(PCoefficients { eps, values: d.values, c: d.c, classes, flagged: d.flagged })
}

/// Dyadic cells `[k 2^{-n}, (k+1) 2^{-n}]`.
pub fn dyadic_cells(depth: u32) -> Vec<(f64, f64)> {
    let n = 1usize << depth;
    (0..n).map(|k| (k as f64 / n as f64, (k + 1) as f64 / n as f64)).collect()
}

/// Push a basis-indexed measure to cells, spreading each cylinder uniformly
/// over its image.
pub fn push_to_cells(sys: &IntervalSystem, op: &OperatorMatrix, mass: &[f64], cells: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; cells.len()];
    let width = cells.len() as f64;
    for (i, w) in op.basis.iter().enumerate() {
        if mass[i] == 0.0 {
            continue;
        }
        let (lo, hi) = sys.word_image(&w.0);
        let len = hi - lo;
        if !(len > 0.0) {
            continue;
        }
        // cells are uniform on [0,1]
        let first = ((lo * width).floor() as usize).min(cells.len() - 1);
        let last = ((hi * width).ceil() as usize).min(cells.len());
        for c in first..last {
            let ov = hi.min(cells[c].1) - lo.max(cells[c].0);
            if ov > 0.0 {
                out[c] += mass[i] * ov / len;
            }
        }
    }
    out
}

/// `max_cell |ν∘π⁻¹(cell) − |cell||`.
pub fn lebesgue_deviation(sys: &IntervalSystem, op: &OperatorMatrix, t: &PerronTriplet, cell_depth: u32) -> f64 {
    let cells = dyadic_cells(cell_depth);
    let pushed = push_to_cells(sys, op, &t.nu, &cells);
    pushed.iter().zip(&cells).map(|(m, c)| (m - (c.1 - c.0)).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Monte Carlo

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub eps: f64,
    #[serde(default = "McConfig::default_chains")]
    pub chains: usize,
    #[serde(default = "McConfig::default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "McConfig::default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of the uniform dither added after each step.
    #[serde(default = "McConfig::default_dither")]
    pub dither: f64,
    #[serde(default = "McConfig::default_cell_depth")]
    pub cell_depth: u32,
}

impl McConfig {
    fn default_chains() -> usize {
        10_000
    }
    fn default_burn_in() -> usize {
        2000
    }
    fn default_steps() -> usize {
        100
    }
    fn default_dither() -> f64 {
        2f64.powi(-40)
    }
    fn default_cell_depth() -> u32 {
        8
    }

    pub fn new(eps: f64, seed: u64) -> Self {
        Self {
            eps,
            chains: Self::default_chains(),
            burn_in: Self::default_burn_in(),
            steps: Self::default_steps(),
            seed,
            dither: Self::default_dither(),
            cell_depth: Self::default_cell_depth(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub eps: f64,
    pub iterates: usize,
    pub cell_mass: Vec<f64>,
    /// Occupation fraction of each class `Ê_H`, read off the branch used.
    pub class_mass: Vec<f64>,
    /// Batch-means effective sample size of the first class indicator.
    pub effective_samples: f64,
    pub warnings: Vec<String>,
}

/// Iterate `f_ε` from uniform starts and record cell and class occupations.
pub fn monte_carlo(sys: &IntervalSystem, classes: &[Vec<usize>], cfg: &McConfig) -> Result<McReport> {
    if cfg.chains == 0 || cfg.steps == 0 {
        return Err(Error::Input("Monte Carlo needs at least one chain and one recorded step".into()));
    }
    let images: Vec<(f64, f64)> = (0..sys.graph.n_edges()).map(|e| sys.image(e)).collect();
    let ncell = 1usize << cfg.cell_depth;
    let mut class_of = vec![usize::MAX; sys.graph.n_edges()];
    for (k, c) in classes.iter().enumerate() {
        c.iter().for_each(|&e| class_of[e] = k);
    }
    let m = classes.len();
    struct Tally {
        cells: Vec<u64>,
        classes: Vec<u64>,
        first_means: Vec<f64>,
    }
    let per_chain = |c: usize| -> Tally {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        let mut x: f64 = rng.random();
        let mut cells = vec![0u64; ncell];
        let mut cls = vec![0u64; m];
        let mut first = 0u64;
        for step in 0..cfg.burn_in + cfg.steps {
            let (y, e) = sys.forward(&images, x);
            if step >= cfg.burn_in {
                // x lies in the image of e, so e is the symbol at x
                cells[((x * ncell as f64) as usize).min(ncell - 1)] += 1;
                if class_of[e] != usize::MAX {
                    cls[class_of[e]] += 1;
                    first += u64::from(class_of[e] == 0);
                }
            }
            x = (y + cfg.dither * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
        }
        Tally { cells, classes: cls, first_means: vec![first as f64 / cfg.steps as f64] }
    };
    let total = (0..cfg.chains).into_par_iter().map(per_chain).reduce(
        || Tally { cells: vec![0; ncell], classes: vec![0; m], first_means: Vec::new() },
        |mut a, b| {
            a.cells.iter_mut().zip(&b.cells).for_each(|(x, y)| *x += y);
            a.classes.iter_mut().zip(&b.classes).for_each(|(x, y)| *x += y);
            a.first_means.extend(b.first_means);
            a
        },
    );
    let n = (cfg.chains * cfg.steps) as f64;
    let p = total.first_means.iter().sum::<f64>() / cfg.chains as f64;
    let var = total.first_means.iter().map(|x| (x - p) * (x - p)).sum::<f64>() / (cfg.chains.max(2) - 1) as f64;
    let effective_samples = if var > 0.0 { (cfg.chains as f64 * p * (1.0 - p) / var).min(n) } else { n };
    let mut warnings = Vec::new();
    if effective_samples < 1000.0 {
        warnings.push(format!("effective sample size {effective_samples:.0} is below 1000"));
    }
    Ok(McReport {
        eps: cfg.eps,
        iterates: n as usize,
        cell_mass: total.cells.iter().map(|&c| c as f64 / n).collect(),
        class_mass: total.classes.iter().map(|&c| c as f64 / n).collect(),
        effective_samples,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// The experiment

#[derive(Clone, Debug, Serialize)]
pub struct IntervalOptions {
    pub depth: usize,
    /// Depth of the dyadic cells used for measure comparisons.
    pub cell_depth: u32,
    /// Depth of the dyadic cells used for the Lebesgue identity.
    pub lebesgue_depth: u32,
    pub splitting: SplittingOptions,
    pub mc: Option<McConfig>,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        Self { depth: 1, cell_depth: 8, lebesgue_depth: 10, splitting: SplittingOptions::default(), mc: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalPoint {
    pub eps: f64,
    pub lambda: f64,
    pub p: Vec<f64>,
    /// `μ_ε(Ê_H)`
    pub class_mass: Vec<f64>,
    pub lebesgue_deviation: f64,
    /// `Σ_cells |μ_ε(cell) − Σ_k p(k) μ(k, cell)|`
    pub l1_to_limit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalReport {
    pub validation: ValidationReport,
    pub classes: Vec<Vec<u32>>,
    pub points: Vec<IntervalPoint>,
    pub p_limit: Vec<Extrapolated>,
    /// `μ(k, cell)` for the maximal components of the limit system.
    pub component_cells: Vec<Vec<f64>>,
    pub limit_cells: Vec<f64>,
    /// `μ_ε` on cells at the smallest grid ε.
    pub last_cells: Vec<f64>,
    pub regularity: RegularityReport,
    pub splitting: SplittingReport,
    pub mc: Option<McComparison>,
    pub checks: Vec<crate::metastability::Check>,
    pub all_passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct McComparison {
    pub report: McReport,
    pub spectral_cells: Vec<f64>,
    pub spectral_class_mass: Vec<f64>,
    pub l1: f64,
    pub class_mass_error: f64,
}

fn spectral_measure(sys: &IntervalSystem, depth: usize) -> Result<(OperatorMatrix, PerronTriplet)> {
    let phi = geometric_potential(sys, depth)?.potential;
    let op = assemble_operator(&sys.shift(), phi.matrix(), &phi, depth)?;
    let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER)?;
    Ok((op, t))
}

fn class_masses(op: &OperatorMatrix, t: &PerronTriplet, classes: &[Vec<usize>]) -> Vec<f64> {
    let mu = t.mu();
    classes.iter().map(|c| neumaier_sum(op.indices_of(c).iter().map(|&i| mu[i]))).collect()
}

/// Spectral predictions per ε, the limiting convex combination, and the
/// Monte Carlo cross-check.
pub fn splitting_experiment(fam: &PerturbedIntervalFamily, q_schedule: &[Vec<usize>], opts: &IntervalOptions) -> Result<IntervalReport> {
    use crate::metastability::Check;
    let validation = validate(fam)?;
    let classes = fam.edge_classes()?;
    if classes.len() < 2 {
        return Err(Error::Input(format!("the splitting experiment needs at least two classes, found {}", classes.len())));
    }
    let q_last = q_schedule.last().ok_or_else(|| Error::Input("Q schedule must be nonempty".into()))?.clone();
    let limit = fam.limit();
    let shift = limit.shift();
    let sym = symbolic_family(fam, opts.depth)?;
    let regularity = regularity_report(&sym, shift.theta, 10_000);
    let splitting = splitting_limit(&sym, &shift, q_schedule, &[], &opts.splitting)?;

    // limit components μ(k,·)
    let cells = dyadic_cells(opts.cell_depth);
    let (op0, _) = {
        let phi = geometric_potential(&limit, opts.depth)?.potential;
        let op = assemble_operator(&shift, phi.matrix(), &phi, opts.depth)?;
        (op, ())
    };
    let component_cells = splitting
        .components
        .iter()
        .map(|u| {
            let sub = block(&op0, u, u);
            let t = perron_triplet(&sub, DEFAULT_TOL, DEFAULT_MAXITER)?;
            Ok(push_to_cells(&limit, &sub, &t.mu(), &cells))
        })
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<(IntervalPoint, Vec<f64>)> = fam
        .eps
        .par_iter()
        .map(|&eps| -> Result<(IntervalPoint, Vec<f64>)> {
            let sys = fam.at(eps);
            let (op, t) = spectral_measure(&sys, opts.depth)?;
            let d = delta_coefficients(&op, 1.0, &q_last, &classes)?;
            let cm = class_masses(&op, &t, &classes);
            let dev = lebesgue_deviation(&sys, &op, &t, opts.lebesgue_depth);
            let pushed = push_to_cells(&sys, &op, &t.mu(), &cells);
            Ok((IntervalPoint { eps, lambda: t.lambda, p: d.values, class_mass: cm, lebesgue_deviation: dev, l1_to_limit: f64::NAN }, pushed))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = classes.len();
    let p_limit: Vec<Extrapolated> = (0..m)
        .map(|k| richardson(&fam.eps, &points.iter().map(|(p, _)| p.p[k]).collect::<Vec<_>>(), opts.splitting.extrapolation_tol))
        .collect();
    // weight of symbolic component k = p of the class containing it
    let comp_weight: Vec<f64> = splitting
        .components
        .iter()
        .map(|u| classes.iter().position(|c| c.contains(&u[0])).map_or(0.0, |k| p_limit[k].value))
        .collect();
    let limit_cells: Vec<f64> = (0..cells.len()).map(|c| neumaier_sum(component_cells.iter().zip(&comp_weight).map(|(cc, w)| w * cc[c]))).collect();
    let last_cells = points.last().map(|(_, c)| c.clone()).unwrap_or_default();
    let points: Vec<IntervalPoint> = points
        .into_iter()
        .map(|(mut p, pushed)| {
            p.l1_to_limit = pushed.iter().zip(&limit_cells).map(|(a, b)| (a - b).abs()).sum();
            p
        })
        .collect();

    let mut checks: Vec<Check> = Vec::new();
    checks.push(Check { name: "validation".into(), passed: validation.passed, value: f64::NAN, tol: 0.0 });
    let leb = points.iter().map(|p| p.lebesgue_deviation).fold(0.0, f64::max);
    checks.push(Check { name: "lebesgue-identity".into(), passed: leb <= 1e-3, value: leb, tol: 1e-3 });
    let lam = points.iter().map(|p| (p.lambda - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "pressure-zero".into(), passed: lam <= 1e-9, value: lam, tol: 1e-9 });
    let psum = p_limit.iter().map(|e| e.value).sum::<f64>();
    checks.push(Check { name: "p-sum-at-most-one".into(), passed: psum <= 1.0 + 1e-8, value: psum, tol: 1e-8 });
    if splitting.mass_check_passed {
        checks.push(Check { name: "p-sum-equals-one".into(), passed: (psum - 1.0).abs() < 1e-3, value: (psum - 1.0).abs(), tol: 1e-3 });
    }
    let floor = splitting.points.iter().flat_map(|p| p.per_q.iter().flat_map(|q| q.g_floor.iter().copied())).fold(f64::INFINITY, f64::min);
    checks.push(Check { name: "g-floor-positive".into(), passed: floor > 0.0, value: floor, tol: 0.0 });
    checks.push(Check { name: "weights-converge-monotonically".into(), passed: regularity.convergence_monotone, value: regularity.distortion_sup, tol: 0.0 });
    checks.push(Check { name: "mass-outside-q".into(), passed: splitting.mass_check_passed, value: splitting.points.iter().map(|p| p.mass_outside_last_q).fold(0.0, f64::max), tol: opts.splitting.mass_eta });
    for c in &splitting.checks {
        if c.name != "extrapolation-converged" && c.name != "gap-ratio-near-one" {
            checks.push(Check { name: format!("symbolic-{}", c.name), ..c.clone() });
        }
    }

    let mc = match &opts.mc {
        Some(cfg) => {
            let sys = fam.at(cfg.eps);
            let report = monte_carlo(&sys, &classes, cfg)?;
            let (op, t) = spectral_measure(&sys, opts.depth)?;
            let spectral_cells = push_to_cells(&sys, &op, &t.mu(), &dyadic_cells(cfg.cell_depth));
            let spectral_class_mass = class_masses(&op, &t, &classes);
            let l1 = report.cell_mass.iter().zip(&spectral_cells).map(|(a, b)| (a - b).abs()).sum();
            let class_mass_error = report.class_mass.iter().zip(&spectral_class_mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            checks.push(Check { name: "mc-cell-l1".into(), passed: l1 < 0.05, value: l1, tol: 0.05 });
            checks.push(Check { name: "mc-class-mass".into(), passed: class_mass_error < 0.02, value: class_mass_error, tol: 0.02 });
            Some(McComparison { report, spectral_cells, spectral_class_mass, l1, class_mass_error })
        }
        None => None,
    };
    let all_passed = checks.iter().all(|c| c.passed);
    let g = &fam.system.graph;
    Ok(IntervalReport {
        validation,
        classes: classes.iter().map(|c| c.iter().map(|&e| g.edge_ids[e]).collect()).collect(),
        points,
        p_limit,
        component_cells,
        limit_cells,
        last_cells,
        regularity,
        splitting,
        mc,
        checks,
        all_passed,
    })
}

impl IntervalReport {
    pub fn to_csv(&self) -> String {
        let fmt = |x: f64| if x.is_finite() { format!("{x:.16e}") } else { String::new() };
        let m = self.classes.len();
        let mut header = vec!["eps".to_string()];
        header.extend((1..=m).map(|k| format!("p_{k}")));
        header.extend((1..=m).map(|k| format!("class_mass_{k}")));
        header.push("lebesgue_deviation".into());
        header.push("l1_to_limit".into());
        let mut out = format!(
            "# columns: eps; p_eps(Q,k) per class; mu_eps(class k); max dyadic-cell deviation of nu from Lebesgue; L1 distance of mu_eps to the limit on dyadic cells\n{}\n",
            header.join(",")
        );
        for p in &self.points {
            let mut row = vec![fmt(p.eps)];
            row.extend(p.p.iter().map(|&x| fmt(x)));
            row.extend(p.class_mass.iter().map(|&x| fmt(x)));
            row.push(fmt(p.lebesgue_deviation));
            row.push(fmt(p.l1_to_limit));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stock systems

/// One vertex `[0,1]` with the two inverse branches of the doubling map.
pub fn binary_doc() -> IntervalDoc {
    IntervalDoc {
        vertices: vec![1],
        intervals: BTreeMap::from([("1".to_string(), [0.0, 1.0])]),
        edges: vec![
            EdgeDoc { id: 1, i: 1, t: 1, map: MapDoc::Affine { a: 0.5, b: 0.0, da: 0.0, db: 0.0 } },
            EdgeDoc { id: 2, i: 1, t: 1, map: MapDoc::Affine { a: 0.5, b: 0.5, da: 0.0, db: 0.0 } },
        ],
        tail_bound: None,
    }
}

/// `m` equal intervals on a ring. Each carries two persistent affine
/// branches onto itself and one vanishing branch from the next vertex whose
/// image has length `ε leaks[k] |J_k|`; persistent slopes shrink so the
/// images still tile `J_k`.
pub fn ring_doc(leaks: &[f64]) -> IntervalDoc {
    let m = leaks.len();
    let len = 1.0 / m as f64;
    let mut edges = Vec::new();
    let mut intervals = BTreeMap::new();
    for (k, &s) in leaks.iter().enumerate() {
        let v = k as u32 + 1;
        let lo = k as f64 * len;
        intervals.insert(v.to_string(), [lo, lo + len]);
        for j in 0..2 {
            let jf = j as f64;
            // T(x) = lo + ε s L + j a L + a (x − lo), a = (1 − ε s)/2
            edges.push(EdgeDoc {
                id: 10 * v + j + 1,
                i: v,
                t: v,
                map: MapDoc::Affine { a: 0.5, b: 0.5 * lo + 0.5 * jf * len, da: -0.5 * s, db: s * (len - 0.5 * jf * len + 0.5 * lo) },
            });
        }
        if m > 1 {
            let next = ((k + 1) % m) as u32 + 1;
            edges.push(EdgeDoc { id: 10 * v + 3, i: v, t: next, map: MapDoc::Vanishing { target: lo, scale_of_eps: s } });
        }
    }
    IntervalDoc { vertices: (1..=m as u32).collect(), intervals, edges, tail_bound: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(doc: &IntervalDoc, eps: Vec<f64>) -> PerturbedIntervalFamily {
        let (fam, report) = build_and_validate(doc, eps).unwrap();
        assert!(report.passed, "{:#?}", report.clauses);
        fam
    }

    #[test]
    fn binary_system_validates_and_codes() {
        let fam = family(&binary_doc(), vec![0.5]);
        let sys = fam.limit();
        // π(2,1,2,1,…) = Σ 2^{−(2k+1)} = 2/3
        let p = PointSurrogate { head: Word(vec![]), cycle: Word(vec![1, 0]) };
        assert!((sys.coding_point(&p) - 2.0 / 3.0).abs() < 1e-12);
        let r = sys.contraction();
        for n in 1..30 {
            assert!((sys.coding_point_n(&p, n) - sys.coding_point_n(&p, n + 1)).abs() <= r.powi(n as i32) + 1e-15);
        }
        let g = geometric_potential(&sys, 3).unwrap();
        assert!(g.potential.entries().all(|(_, w)| (w - 0.5).abs() < 1e-15));
        let (op, t) = spectral_measure(&sys, 1).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-12);
        assert!(lebesgue_deviation(&sys, &op, &t, 10) < 1e-12);
    }

    #[test]
    fn two_half_system_has_two_components() {
        let mut doc = ring_doc(&[1.0, 1.0]);
        doc.edges.retain(|e| matches!(e.map, MapDoc::Affine { .. }));
        let fam = PerturbedIntervalFamily { system: doc.build().unwrap(), eps: vec![0.1] };
        let rep = validate(&fam).unwrap();
        // no crossing edges: G is not strongly connected
        assert!(!rep.clauses.iter().find(|c| c.clause == "strongly-connected").unwrap().passed);
        assert_eq!(fam.strong_components().len(), 2);
        let sys = fam.limit();
        let (op, t) = spectral_measure(&sys, 1).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-12);
        assert_eq!(op.dim(), 4);
    }

    #[test]
    fn vanishing_branch_derivative_is_eps() {
        let fam = family(&ring_doc(&[1.0, 1.0]), vec![0.1, 0.01]);
        let rep = validate(&fam).unwrap();
        let h2 = rep.clauses.iter().find(|c| c.clause == "branch-convergence").unwrap();
        assert!(h2.passed);
        let b = &fam.system.branches[2];
        assert_eq!(b.role(), Role::Vanishing);
        assert!((b.derivative(0.01, 0.7) - 0.01).abs() < 1e-15);
        assert_eq!(rep.edge_classes, vec![vec![11, 12, 13], vec![21, 22, 23]]);
    }

    #[test]
    fn hard_violations_are_errors() {
        let mut doc = binary_doc();
        doc.edges[0].map = MapDoc::Affine { a: 1.0, b: 0.0, da: 0.0, db: 0.0 };
        assert!(matches!(build_and_validate(&doc, vec![0.1]), Err(Error::Construction { .. })));
        let mut doc = binary_doc();
        doc.edges[1].map = MapDoc::Affine { a: 0.5, b: 0.25, da: 0.0, db: 0.0 };
        assert!(matches!(build_and_validate(&doc, vec![0.1]), Err(Error::Construction { .. })));
    }

    #[test]
    fn p_coefficients_examples() {
        let all = |fam: &PerturbedIntervalFamily| (0..fam.system.graph.n_edges()).collect::<Vec<_>>();
        let fam = family(&ring_doc(&[1.0, 1.0]), vec![1e-3]);
        let p = p_coefficients(&fam, 1e-3, &all(&fam), 1).unwrap();
        assert!((p.values[0] - 0.5).abs() < 1e-9);
        let fam = family(&ring_doc(&[1.0, 2.0]), vec![1e-3]);
        let p = p_coefficients(&fam, 1e-3, &all(&fam), 1).unwrap();
        assert!((p.values[0] - 2.0 / 3.0).abs() < 0.02, "{:?}", p.values);
        let fam = family(&ring_doc(&[1.0, 1.0, 1.0]), vec![1e-3]);
        let p = p_coefficients(&fam, 1e-3, &all(&fam), 1).unwrap();
        assert!(p.values.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-6), "{:?}", p.values);
    }

    #[test]
    fn parametric_branch_is_sampled() {
        let mut sys = binary_doc().build().unwrap();
        sys.branches[0].form = MapForm::Parametric {
            value: Arc::new(|_, x| 0.5 * x + 0.05 * x * (1.0 - x)),
            derivative: Arc::new(|_, x| 0.5 + 0.05 * (1.0 - 2.0 * x)),
            role: Role::Persistent,
        };
        sys.branches[1].form = MapForm::Affine { a: 0.5, b: 0.5, da: 0.0, db: 0.0 };
        let fam = PerturbedIntervalFamily { system: sys, eps: vec![0.1] };
        let rep = validate(&fam).unwrap();
        assert!(rep.clauses.iter().any(|c| c.sampled));
        let x = fam.system.branches[0].inverse(0.0, 0.3);
        assert!((fam.system.branches[0].value(0.0, x) - 0.3).abs() < 1e-12);
        let g = geometric_potential(&fam.limit(), 4).unwrap();
        assert!(g.potential.approximation_error > 0.0 && g.potential.approximation_error < 0.1);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_uniform_for_doubling() {
        let fam = family(&binary_doc(), vec![0.5]);
        let sys = fam.limit();
        let cfg = McConfig { chains: 200, burn_in: 50, steps: 50, cell_depth: 3, ..McConfig::new(0.0, 7) };
        let a = monte_carlo(&sys, &[vec![0, 1]], &cfg).unwrap();
        let b = monte_carlo(&sys, &[vec![0, 1]], &cfg).unwrap();
        assert_eq!(a.cell_mass, b.cell_mass);
        assert!(a.cell_mass.iter().all(|m| (m - 0.125).abs() < 0.03), "{:?}", a.cell_mass);
    }

    #[test]
    fn asymmetric_experiment() {
        let fam = family(&ring_doc(&[1.0, 2.0]), (2..=12).map(|k| 0.5f64.powi(k)).collect());
        let q = vec![(0..fam.system.graph.n_edges()).collect::<Vec<_>>()];
        let mc = McConfig { chains: 500, burn_in: 200, steps: 100, cell_depth: 4, ..McConfig::new(1e-2, 1) };
        let opts = IntervalOptions { mc: Some(mc), ..Default::default() };
        let r = splitting_experiment(&fam, &q, &opts).unwrap();
        assert!((r.p_limit[0].value - 2.0 / 3.0).abs() < 1e-9);
        assert!(r.all_passed, "{:?}", r.checks);
        assert_eq!(r.to_csv().lines().count(), 2 + 11);
    }
}
