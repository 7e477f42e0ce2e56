//! Finitely truncated topological Markov shifts.
//!
//! A shift is a sorted set of state identifiers together with a zero-one
//! transition matrix. Words are stored as vectors of *state indices* (positions
//! in the sorted [`StateSpace`]); identifiers only appear at the I/O boundary.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External identifier of a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The truncated working subset of the state set, sorted by identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    ids: Vec<StateId>,
    labels: Option<Vec<String>>,
    index: HashMap<StateId, usize>,
}

impl StateSpace {
    pub fn new<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self> {
        let mut ids: Vec<StateId> = ids.into_iter().map(StateId).collect();
        if ids.is_empty() {
            return Err(Error::Input("state space must be nonempty".into()));
        }
        ids.sort();
        for pair in ids.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::Input(format!("duplicate state identifier {}", pair[0])));
            }
        }
        let index = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { ids, labels: None, index })
    }

    /// States `1..=n`.
    pub fn range(n: usize) -> Self {
        Self::new(1..=n as u32).expect("n >= 1")
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.ids.len() {
            return Err(Error::Input("label count does not match state count".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> StateId {
        self.ids[index]
    }

    pub fn ids(&self) -> &[StateId] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn index_of(&self, id: StateId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownState(id.0))
    }

    pub fn word_from_ids(&self, ids: &[u32]) -> Result<Word> {
        ids.iter()
            .map(|&s| self.index_of(StateId(s)))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn subset_from_ids(&self, ids: &[u32]) -> Result<Vec<usize>> {
        let mut out = ids
            .iter()
            .map(|&s| self.index_of(StateId(s)))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn ids_of(&self, indices: &[usize]) -> Vec<u32> {
        indices.iter().map(|&i| self.ids[i].0).collect()
    }
}

/// A finite word of state indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> usize {
        self.0[0]
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("nonempty word")
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn prefix(&self, len: usize) -> Word {
        Word(self.0[..len.min(self.0.len())].to_vec())
    }

    /// `a·self`
    pub fn prepend(&self, a: usize) -> Word {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(a);
        v.extend_from_slice(&self.0);
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn to_ids(&self, states: &StateSpace) -> Vec<u32> {
        states.ids_of(&self.0)
    }
}

impl From<Vec<usize>> for Word {
    fn from(v: Vec<usize>) -> Self {
        Word(v)
    }
}

/// Zero-one transition matrix over a [`StateSpace`], stored as adjacency
/// lists. Entries for states outside a subsystem's support are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl TransitionMatrix {
    pub fn empty(n: usize) -> Self {
        Self { succ: vec![Vec::new(); n], pred: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::empty(n);
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Input(format!("edge ({a},{b}) outside a {n}-state space")));
            }
            m.succ[a].push(b);
            m.pred[b].push(a);
        }
        for list in m.succ.iter_mut().chain(m.pred.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(m)
    }

    /// Build from a dense 0/1 table (row = from, column = to).
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut edges = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Input("transition matrix must be square".into()));
            }
            for (j, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 => edges.push((i, j)),
                    _ => return Err(Error::Input(format!("entry ({i},{j}) is not 0 or 1"))),
                }
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn full(n: usize) -> Self {
        Self::from_edges(n, (0..n).flat_map(|a| (0..n).map(move |b| (a, b)))).expect("in range")
    }

    pub fn size(&self) -> usize {
        self.succ.len()
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.succ[a].binary_search(&b).is_ok()
    }

    pub fn successors(&self, a: usize) -> &[usize] {
        &self.succ[a]
    }

    pub fn predecessors(&self, b: usize) -> &[usize] {
        &self.pred[b]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Keep only transitions with both ends in `subset`.
    pub fn restrict(&self, subset: &[usize]) -> Self {
        let mut keep = vec![false; self.size()];
        for &s in subset {
            keep[s] = true;
        }
        Self::from_edges(self.size(), self.edges().filter(|&(a, b)| keep[a] && keep[b]))
            .expect("same size")
    }

    /// Entrywise `self <= other`.
    pub fn dominated_by(&self, other: &TransitionMatrix) -> bool {
        self.size() == other.size() && self.edges().all(|(a, b)| other.get(a, b))
    }

    /// States with at least one incident transition.
    pub fn support(&self) -> Vec<usize> {
        (0..self.size())
            .filter(|&i| !self.succ[i].is_empty() || !self.pred[i].is_empty())
            .collect()
    }

    /// Irreducible on `subset` (every pair connected by a path inside it).
    pub fn is_irreducible_on(&self, subset: &[usize]) -> bool {
        if subset.is_empty() {
            return false;
        }
        let r = self.restrict(subset);
        let reach = |forward: bool| {
            let mut seen = vec![false; self.size()];
            let mut queue = VecDeque::from([subset[0]]);
            seen[subset[0]] = true;
            while let Some(x) = queue.pop_front() {
                let next = if forward { r.successors(x) } else { r.predecessors(x) };
                for &y in next {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            subset.iter().all(|&s| seen[s])
        };
        // a single state needs a self loop to be a non-degenerate subshift
        if subset.len() == 1 {
            return r.get(subset[0], subset[0]);
        }
        reach(true) && reach(false)
    }

    /// States admitting an infinite forward path inside the matrix.
    pub fn live_states(&self) -> Vec<bool> {
        let n = self.size();
        let mut live = vec![true; n];
        let mut out_deg: Vec<usize> = self.succ.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| out_deg[i] == 0).collect();
        for &i in &queue {
            live[i] = false;
        }
        while let Some(x) = queue.pop_front() {
            for &p in &self.pred[x] {
                if live[p] {
                    out_deg[p] -= 1;
                    if out_deg[p] == 0 {
                        live[p] = false;
                        queue.push_back(p);
                    }
                }
            }
        }
        live
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let n = self.size();
        let mut rows = vec![vec![0u8; n]; n];
        for (a, b) in self.edges() {
            rows[a][b] = 1;
        }
        rows
    }
}

/// An eventually periodic point: `head` followed by `cycle` repeated forever.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSurrogate {
    pub head: Word,
    pub cycle: Word,
}

impl PointSurrogate {
    pub fn symbol(&self, k: usize) -> usize {
        let h = self.head.len();
        if k < h {
            self.head.0[k]
        } else {
            self.cycle.0[(k - h) % self.cycle.len()]
        }
    }

    pub fn itinerary(&self, len: usize) -> Vec<usize> {
        (0..len).map(|k| self.symbol(k)).collect()
    }

    /// The point `σ^k ω`.
    pub fn shifted(&self, k: usize) -> PointSurrogate {
        let h = self.head.len();
        if k <= h {
            return PointSurrogate { head: Word(self.head.0[k..].to_vec()), cycle: self.cycle.clone() };
        }
        let p = self.cycle.len();
        let r = (k - h) % p;
        let mut cyc = self.cycle.0[r..].to_vec();
        cyc.extend_from_slice(&self.cycle.0[..r]);
        PointSurrogate { head: Word(Vec::new()), cycle: Word(cyc) }
    }

    /// `w·ω`
    pub fn prepend(&self, w: &Word) -> PointSurrogate {
        PointSurrogate { head: w.concat(&self.head), cycle: self.cycle.clone() }
    }

    /// Length of a prefix after which two surrogates either differ or agree forever.
    fn horizon(&self, other: &PointSurrogate) -> usize {
        self.head.len().max(other.head.len()) + self.cycle.len() * other.cycle.len() + 1
    }

    /// `d_θ(ω, υ) = θ^{min{n : ω_n ≠ υ_n}}`, zero for equal points.
    pub fn distance(&self, other: &PointSurrogate, theta: f64) -> f64 {
        (0..self.horizon(other))
            .find(|&k| self.symbol(k) != other.symbol(k))
            .map_or(0.0, |k| theta.powi(k as i32))
    }

    pub fn is_admissible(&self, m: &TransitionMatrix, len: usize) -> bool {
        let it = self.itinerary(len);
        it.windows(2).all(|p| m.get(p[0], p[1]))
    }
}

/// A finitely truncated topological Markov shift.
#[derive(Clone, Debug)]
pub struct MarkovShift {
    pub states: StateSpace,
    pub matrix: TransitionMatrix,
    /// Metric parameter θ for `d_θ`.
    pub theta: f64,
}

pub const DEFAULT_THETA: f64 = 0.5;

impl MarkovShift {
    pub fn new(states: StateSpace, matrix: TransitionMatrix) -> Result<Self> {
        if states.len() != matrix.size() {
            return Err(Error::Input("transition matrix size does not match state space".into()));
        }
        Ok(Self { states, matrix, theta: DEFAULT_THETA })
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Input(format!("theta must lie in (0,1), got {theta}")));
        }
        self.theta = theta;
        Ok(self)
    }

    /// Full shift on states `1..=n`.
    pub fn full(n: usize) -> Self {
        Self::new(StateSpace::range(n), TransitionMatrix::full(n)).expect("consistent")
    }

    /// Shift on states `1..=n` from a dense 0/1 table.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let m = TransitionMatrix::from_dense(rows)?;
        Self::new(StateSpace::range(rows.len()), m)
    }

    /// The golden-mean shift `[[1,1],[1,0]]`.
    pub fn golden_mean() -> Self {
        Self::from_dense(&[vec![1, 1], vec![1, 0]]).expect("valid")
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn from_doc(doc: &ShiftDoc) -> Result<Self> {
        let mut states = StateSpace::new(doc.states.iter().copied())?;
        if let Some(labels) = &doc.labels {
            states = states.with_labels(labels.clone())?;
        }
        let edges = doc
            .edges
            .iter()
            .map(|&[a, b]| Ok((states.index_of(StateId(a))?, states.index_of(StateId(b))?)))
            .collect::<Result<Vec<_>>>()?;
        let matrix = TransitionMatrix::from_edges(states.len(), edges)?;
        let shift = Self::new(states, matrix)?;
        match doc.theta {
            Some(t) => shift.with_theta(t),
            None => Ok(shift),
        }
    }

    pub fn to_doc(&self) -> ShiftDoc {
        ShiftDoc {
            states: self.states.ids().iter().map(|s| s.0).collect(),
            edges: self
                .matrix
                .edges()
                .map(|(a, b)| [self.states.id(a).0, self.states.id(b).0])
                .collect(),
            labels: self.states.labels().map(<[String]>::to_vec),
            theta: Some(self.theta),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }
}

/// JSON form of a shift: `{"states":[...], "edges":[[a,b],...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftDoc {
    pub states: Vec<u32>,
    pub edges: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

/// True iff every consecutive pair of `w` is allowed by `m`.
pub fn is_admissible(w: &Word, m: &TransitionMatrix) -> Result<bool> {
    if w.is_empty() {
        return Err(Error::Input("words have length at least one".into()));
    }
    if let Some(&bad) = w.0.iter().find(|&&s| s >= m.size()) {
        return Err(Error::UnknownState(bad as u32));
    }
    Ok(w.0.windows(2).all(|p| m.get(p[0], p[1])))
}

/// Admissible words of one length together with their representative points.
#[derive(Clone, Debug)]
pub struct CylinderSet {
    pub depth: usize,
    pub words: Vec<Word>,
    pub points: Vec<PointSurrogate>,
    /// Admissible words dropped because they have no infinite extension.
    pub excluded: usize,
}

impl CylinderSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.words.binary_search(w).ok()
    }
}

/// Greedy minimal infinite continuation after state `from`, as (head, cycle).
///
/// Picking the smallest live successor at each step yields the
/// lexicographically minimal admissible continuation, which is eventually
/// periodic because the choice depends on the current state only.
pub fn minimal_continuation(m: &TransitionMatrix, live: &[bool], from: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut path = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut x = from;
    loop {
        let next = *m.successors(x).iter().find(|&&y| live[y])?;
        if let Some(&pos) = seen.get(&next) {
            let cycle = path[pos..].to_vec();
            path.truncate(pos);
            return Some((path, cycle));
        }
        seen.insert(next, path.len());
        path.push(next);
        x = next;
    }
}

/// Representative point of a word: the word followed by its minimal continuation.
pub fn representative(m: &TransitionMatrix, live: &[bool], w: &Word) -> Option<PointSurrogate> {
    let (tail, cycle) = minimal_continuation(m, live, w.last())?;
    let mut head = w.0.clone();
    head.extend(tail);
    Some(PointSurrogate { head: Word(head), cycle: Word(cycle) })
}

/// All admissible words of length `depth` for the matrix `m`, in
/// lexicographic order of state indices.
pub fn enumerate_cylinders_for(m: &TransitionMatrix, depth: usize) -> Result<CylinderSet> {
    if depth == 0 {
        return Err(Error::Input("cylinder depth must be at least 1".into()));
    }
    let live = m.live_states();
    let mut words = Vec::new();
    let mut points = Vec::new();
    let mut excluded = 0usize;
    let mut stack: Vec<Vec<usize>> = (0..m.size()).rev().map(|s| vec![s]).collect();
    while let Some(w) = stack.pop() {
        if w.len() == depth {
            let word = Word(w);
            match representative(m, &live, &word) {
                Some(p) => {
                    words.push(word);
                    points.push(p);
                }
                None => excluded += 1,
            }
            continue;
        }
        let last = *w.last().expect("nonempty");
        for &b in m.successors(last).iter().rev() {
            let mut next = w.clone();
            next.push(b);
            stack.push(next);
        }
    }
    Ok(CylinderSet { depth, words, points, excluded })
}

pub fn enumerate_cylinders(shift: &MarkovShift, depth: usize) -> Result<CylinderSet> {
    enumerate_cylinders_for(&shift.matrix, depth)
}

/// Whether a component carries a nontrivial subshift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    Irreducible,
    /// A single state with a zero diagonal entry.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub states: Vec<usize>,
    pub kind: ComponentKind,
}

/// The classes of the mutual-reachability relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentPartition {
    pub components: Vec<Component>,
    owner: Vec<usize>,
}

impl ComponentPartition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Index of the component containing `state`.
    pub fn component_of(&self, state: usize) -> usize {
        self.owner[state]
    }

    pub fn irreducible(&self) -> impl Iterator<Item = (usize, &Component)> {
        self.components.iter().enumerate().filter(|(_, c)| c.kind == ComponentKind::Irreducible)
    }
}

/// Partition the states by mutual reachability (Tarjan, iterative).
/// Components are ordered by their minimal state index.
pub fn transitive_components(b: &TransitionMatrix) -> ComponentPartition {
    let n = b.size();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0usize;
    let mut raw: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next successor position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = b.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    raw.push(comp);
                }
            }
        }
    }
    raw.sort_by_key(|c| c[0]);
    let mut owner = vec![0usize; n];
    let components = raw
        .into_iter()
        .enumerate()
        .map(|(k, states)| {
            for &s in &states {
                owner[s] = k;
            }
            let kind = if states.len() > 1 || b.get(states[0], states[0]) {
                ComponentKind::Irreducible
            } else {
                ComponentKind::Degenerate
            };
            Component { states, kind }
        })
        .collect();
    ComponentPartition { components, owner }
}

/// Breadth-first distances to `target` along reversed edges.
fn distances_to(m: &TransitionMatrix, target: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; m.size()];
    dist[target] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].expect("queued");
        for &p in m.predecessors(x) {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Lexicographically minimal shortest path `from -> .. -> to` with at least
/// one transition.
fn connecting_path(m: &TransitionMatrix, from: usize, to: usize) -> Option<Vec<usize>> {
    let dist = distances_to(m, to);
    let first = m
        .successors(from)
        .iter()
        .filter_map(|&s| dist[s].map(|d| (d, s)))
        .min()?;
    let mut path = vec![from, first.1];
    let mut x = first.1;
    while x != to {
        let d = dist[x].expect("reachable");
        x = *m
            .successors(x)
            .iter()
            .find(|&&s| dist[s] == Some(d - 1))
            .expect("shortest path step");
        path.push(x);
    }
    Some(path)
}

/// Grow a finite set `t` into a finite `S₀ ⊇ t` on which `a` is irreducible,
/// by collecting the vertices of connecting paths between all pairs of `t`.
pub fn extend_to_irreducible(a: &TransitionMatrix, t: &[usize]) -> Result<Vec<usize>> {
    if t.is_empty() {
        return Err(Error::Input("target set must be nonempty".into()));
    }
    let mut keep = vec![false; a.size()];
    for &i in t {
        for &j in t {
            let path = connecting_path(a, i, j).ok_or(Error::TruncationTooSmall {
                from: i as u32,
                to: j as u32,
            })?;
            for s in path {
                keep[s] = true;
            }
        }
    }
    Ok((0..a.size()).filter(|&s| keep[s]).collect())
}

/// Finite-irreducibility and BIP witnesses found within a word-length budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrreducibilityWitness {
    /// Finite set `F` with `a·w·b` admissible for some `w ∈ F`, for all `a, b`.
    pub connecting_words: Option<Vec<Word>>,
    /// States `{a₁..a_N}` such that every `b` has an incoming edge from and an
    /// outgoing edge to the set.
    pub bip: Option<Vec<usize>>,
}

pub fn finitely_irreducible_witness(m: &TransitionMatrix, maxlen: usize) -> IrreducibilityWitness {
    let n = m.size();
    let connecting_words = (|| {
        let mut words: Vec<Word> = Vec::new();
        for a in 0..n {
            for b in 0..n {
                // shortest w with a·w·b admissible: a path a -> w1 .. wk -> b
                let dist = distances_to(m, b);
                // edges from s to b using at least one transition
                let via = |s: usize| m.successors(s).iter().filter_map(|&t| dist[t]).min().map(|d| d + 1);
                let (k, s) = m.successors(a).iter().filter_map(|&s| via(s).map(|k| (k, s))).min()?;
                if k > maxlen {
                    return None;
                }
                let mut w = vec![s];
                let mut x = s;
                for remaining in (1..k).rev() {
                    x = *m.successors(x).iter().find(|&&y| via(y) == Some(remaining))?;
                    w.push(x);
                }
                let w = Word(w);
                if !words.contains(&w) {
                    words.push(w);
                }
            }
        }
        words.sort();
        Some(words)
    })();

    let bip = (|| {
        if (0..n).any(|b| m.predecessors(b).is_empty() || m.successors(b).is_empty()) {
            return None;
        }
        let mut need_in: Vec<bool> = vec![true; n];
        let mut need_out: Vec<bool> = vec![true; n];
        let mut chosen = Vec::new();
        while need_in.iter().chain(&need_out).any(|&x| x) {
            let gain = |a: usize| {
                m.successors(a).iter().filter(|&&b| need_in[b]).count()
                    + m.predecessors(a).iter().filter(|&&b| need_out[b]).count()
            };
            let best = (0..n).max_by_key(|&a| (gain(a), std::cmp::Reverse(a)))?;
            if gain(best) == 0 {
                return None;
            }
            for &b in m.successors(best) {
                need_in[b] = false;
            }
            for &b in m.predecessors(best) {
                need_out[b] = false;
            }
            chosen.push(best);
        }
        chosen.sort_unstable();
        Some(chosen)
    })();

    IrreducibilityWitness { connecting_words, bip }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[usize]) -> Word {
        Word(v.to_vec())
    }

    #[test]
    fn admissibility_examples() {
        let gm = MarkovShift::golden_mean();
        assert!(is_admissible(&w(&[0]), &gm.matrix).unwrap());
        assert!(!is_admissible(&w(&[1, 1]), &gm.matrix).unwrap());
        assert!(is_admissible(&w(&[0, 1, 0, 0]), &gm.matrix).unwrap());
        assert!(matches!(is_admissible(&w(&[0, 7]), &gm.matrix), Err(Error::UnknownState(7))));
    }

    #[test]
    fn cylinders_of_small_shifts() {
        let full = MarkovShift::full(2);
        let c = enumerate_cylinders(&full, 2).unwrap();
        assert_eq!(c.words, vec![w(&[0, 0]), w(&[0, 1]), w(&[1, 0]), w(&[1, 1])]);
        let gm = MarkovShift::golden_mean();
        let c = enumerate_cylinders(&gm, 2).unwrap();
        assert_eq!(c.words, vec![w(&[0, 0]), w(&[0, 1]), w(&[1, 0])]);
        assert_eq!(enumerate_cylinders(&gm, 3).unwrap().len(), 5);
        assert!(enumerate_cylinders(&gm, 0).is_err());
    }

    #[test]
    fn dead_ends_are_excluded() {
        // 1 -> 2, 2 -> 2, 3 -> nothing, 1 -> 3
        let m = TransitionMatrix::from_edges(3, [(0, 1), (1, 1), (0, 2)]).unwrap();
        let c = enumerate_cylinders_for(&m, 2).unwrap();
        assert_eq!(c.words, vec![w(&[0, 1]), w(&[1, 1])]);
        assert_eq!(c.excluded, 1);
    }

    #[test]
    fn representative_is_minimal_continuation() {
        let gm = MarkovShift::golden_mean();
        let c = enumerate_cylinders(&gm, 1).unwrap();
        // after state 2 the only move is to 1, then 1 1 1 ...
        assert_eq!(c.points[1].itinerary(4), vec![1, 0, 0, 0]);
    }

    #[test]
    fn component_examples() {
        let mut rows = vec![vec![0u8; 4]; 4];
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            rows[a][b] = 1;
        }
        let p = transitive_components(&TransitionMatrix::from_dense(&rows).unwrap());
        assert_eq!(p.components.iter().map(|c| c.states.clone()).collect::<Vec<_>>(), vec![vec![0, 1], vec![2, 3]]);

        let tri = TransitionMatrix::from_dense(&[vec![1, 1], vec![0, 1]]).unwrap();
        let p = transitive_components(&tri);
        assert_eq!(p.len(), 2);
        assert!(p.components.iter().all(|c| c.kind == ComponentKind::Irreducible));

        let chain = TransitionMatrix::from_dense(&[vec![0, 1], vec![0, 0]]).unwrap();
        let p = transitive_components(&chain);
        assert!(p.components.iter().all(|c| c.kind == ComponentKind::Degenerate));
    }

    #[test]
    fn extension_of_a_four_cycle() {
        let m = TransitionMatrix::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(extend_to_irreducible(&m, &[0, 2]).unwrap(), vec![0, 1, 2, 3]);
        let full = TransitionMatrix::full(3);
        assert_eq!(extend_to_irreducible(&full, &[0, 1, 2]).unwrap(), vec![0, 1, 2]);
        let chain = TransitionMatrix::from_edges(2, [(0, 1)]).unwrap();
        assert!(matches!(extend_to_irreducible(&chain, &[0, 1]), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn witnesses() {
        let gm = MarkovShift::golden_mean();
        let wit = finitely_irreducible_witness(&gm.matrix, 3);
        assert_eq!(wit.connecting_words, Some(vec![w(&[0])]));
        assert!(wit.bip.is_some());

        let full = MarkovShift::full(3);
        let wit = finitely_irreducible_witness(&full.matrix, 1);
        assert_eq!(wit.connecting_words, Some(vec![w(&[0])]));
        assert_eq!(wit.bip.map(|b| b.len()), Some(1));

        let chain = TransitionMatrix::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let wit = finitely_irreducible_witness(&chain, 10);
        assert_eq!(wit.connecting_words, None);
        assert_eq!(wit.bip, None);
    }

    #[test]
    fn distances_between_surrogates() {
        let a = PointSurrogate { head: w(&[0, 1]), cycle: w(&[0]) };
        let b = PointSurrogate { head: w(&[0, 0]), cycle: w(&[0]) };
        assert_eq!(a.distance(&b, 0.5), 0.5);
        assert_eq!(a.distance(&a, 0.5), 0.0);
        let c = PointSurrogate { head: w(&[]), cycle: w(&[0, 1]) };
        let d = PointSurrogate { head: w(&[0, 1, 0]), cycle: w(&[1, 0]) };
        assert_eq!(c.distance(&d, 0.5), 0.0);
        assert_eq!(d.shifted(4).itinerary(3), vec![0, 1, 0]);
    }

    #[test]
    fn json_round_trip() {
        let s = MarkovShift::from_json(r#"{"states":[3,1,2],"edges":[[1,2],[2,3],[3,1]]}"#).unwrap();
        assert_eq!(s.states.ids()[0], StateId(1));
        assert!(s.matrix.get(2, 0));
        let doc = s.to_doc();
        let again = MarkovShift::from_doc(&doc).unwrap();
        assert_eq!(again.matrix, s.matrix);
        assert!(MarkovShift::from_json(r#"{"states":[1],"edges":[[1,5]]}"#).is_err());
    }
}
