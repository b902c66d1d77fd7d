//! Operations on sets of canonical diagrams.
//!
//! - [`compose_sequential`]: a linear fragment, diagrams glued end to start.
//! - [`compose_parallel`]: a parallel fragment over tuple states with
//!   interleaving semantics (one component moves per arc).
//! - [`generalize`]: a parent-level diagram over selected tuples of child
//!   states ordered by a supplied relation.
//! - [`check_consistency`]: does a joint execution visit the prescribed
//!   states, in order, each by its deadline?
//! - [`enumerate_attainable_sequences`]: the exhaustive execution space used
//!   as ground truth for the consistency search.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{
    apply_transition, ArcCounters, ArcKey, CanonicalDiagram, ObjectDistribution, Placement,
    TimedArc,
};

/// Upper bound on the number of tuple states built by [`compose_parallel`].
pub const PRODUCT_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositionError {
    #[error("{diagrams} diagrams but {intervals} intervals")]
    LengthMismatch { diagrams: usize, intervals: usize },
    #[error("interval {interval} of diagram '{diagram}' exceeds its horizon {horizon}")]
    IntervalBeyondHorizon {
        diagram: String,
        interval: u64,
        horizon: u64,
    },
    #[error("the diagram set is empty")]
    EmptySet,
    #[error("duplicate diagram id '{0}'")]
    DuplicateDiagramId(String),
    #[error("diagram '{diagram}' is malformed: {message}")]
    InvalidDiagram { diagram: String, message: String },
    #[error("intervals must strictly increase: tau[{index}] = {left} is not below tau[{next}] = {right}", next = .index + 1)]
    IntervalOrderViolation { index: usize, left: u64, right: u64 },
    #[error("parallel composition needs one common interval, got {intervals:?}")]
    IntervalMismatch { intervals: Vec<u64> },
    #[error("tuple {index} is not an element of the product of child states: {message}")]
    TupleOutOfProduct { index: usize, message: String },
    #[error("tuple {0:?} is referenced by the order but not selected")]
    UnknownTuple(Vec<String>),
    #[error("the order relation has a cycle through {0:?}")]
    OrderCycle(Vec<String>),
    #[error("order has no unique minimum/maximum (minimal: {minimal:?}, maximal: {maximal:?})")]
    NoUniqueExtremes {
        minimal: Vec<Vec<String>>,
        maximal: Vec<Vec<String>>,
    },
    #[error("unknown diagram index {0}")]
    UnknownDiagram(usize),
    #[error("diagram {diagram} has no state '{state}'")]
    UnknownState { diagram: usize, state: String },
    #[error("deadline of prescription {index} is below the previous one")]
    DeadlinesNotMonotone { index: usize },
    #[error("configuration space exceeds the bound of {bound}")]
    SpaceBoundExceeded { bound: usize },
}

/// Diagrams with their time intervals `[0, tau_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedDiagramSet {
    diagrams: Vec<CanonicalDiagram>,
    intervals: Vec<u64>,
}

impl TimedDiagramSet {
    pub fn new(diagrams: Vec<CanonicalDiagram>, intervals: Vec<u64>) -> Result<Self, CompositionError> {
        if diagrams.len() != intervals.len() {
            return Err(CompositionError::LengthMismatch {
                diagrams: diagrams.len(),
                intervals: intervals.len(),
            });
        }
        for (d, &tau) in diagrams.iter().zip(&intervals) {
            if tau > d.horizon {
                return Err(CompositionError::IntervalBeyondHorizon {
                    diagram: d.id.clone(),
                    interval: tau,
                    horizon: d.horizon,
                });
            }
        }
        Ok(Self { diagrams, intervals })
    }

    /// Every diagram on its own full horizon.
    pub fn on_horizons(diagrams: Vec<CanonicalDiagram>) -> Self {
        let intervals = diagrams.iter().map(|d| d.horizon).collect();
        Self { diagrams, intervals }
    }

    pub fn diagrams(&self) -> &[CanonicalDiagram] {
        &self.diagrams
    }

    pub fn intervals(&self) -> &[u64] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.diagrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagrams.is_empty()
    }
}

/// Indexed form of a diagram used by the searches.
#[derive(Debug, Clone)]
struct Compiled {
    states: Vec<String>,
    initial: usize,
    bound: u64,
    arcs: Vec<CompiledArc>,
    /// Arc indices by source state, in arc order.
    out: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct CompiledArc {
    to: usize,
    delay: u64,
    key: ArcKey,
}

impl Compiled {
    fn new(d: &CanonicalDiagram, bound: u64) -> Result<Self, CompositionError> {
        let bad = |message: String| CompositionError::InvalidDiagram {
            diagram: d.id.clone(),
            message,
        };
        let index: HashMap<&str, usize> = d
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != d.states.len() {
            return Err(bad("duplicate state".into()));
        }
        let initial = *index
            .get(d.initial.as_str())
            .ok_or_else(|| bad(format!("unknown initial state '{}'", d.initial)))?;
        let mut arcs = Vec::new();
        let mut out = vec![Vec::new(); d.states.len()];
        for (kind, a) in d.arcs() {
            let (Some(&from), Some(&to)) = (index.get(a.from.as_str()), index.get(a.to.as_str())) else {
                return Err(bad(format!("arc {}->{} references an unknown state", a.from, a.to)));
            };
            out[from].push(arcs.len());
            arcs.push(CompiledArc {
                to,
                delay: a.delay,
                key: CanonicalDiagram::key_of(kind, a),
            });
        }
        Ok(Self {
            states: d.states.clone(),
            initial,
            bound,
            arcs,
            out,
        })
    }

    fn state_index(&self, s: &str) -> Option<usize> {
        self.states.iter().position(|x| x == s)
    }
}

fn tuple_label(parts: &[String]) -> String {
    format!("({})", parts.join(","))
}

/// Glues the diagrams into one chain of fragments. Requires
/// `tau_1 < tau_2 < ... < tau_n`. States are renamed `<diagram id>.<state>`
/// and a development arc with delay `tau_{i+1} - tau_i` links the final state
/// of each diagram to the initial state of the next. A single diagram is
/// returned unchanged.
pub fn compose_sequential(set: &TimedDiagramSet, id: &str) -> Result<CanonicalDiagram, CompositionError> {
    let n = set.len();
    if n == 0 {
        return Err(CompositionError::EmptySet);
    }
    for (i, w) in set.intervals.windows(2).enumerate() {
        if w[0] >= w[1] {
            return Err(CompositionError::IntervalOrderViolation {
                index: i,
                left: w[0],
                right: w[1],
            });
        }
    }
    if n == 1 {
        return Ok(set.diagrams[0].clone());
    }
    let mut ids = BTreeSet::new();
    for d in &set.diagrams {
        if !ids.insert(d.id.as_str()) {
            return Err(CompositionError::DuplicateDiagramId(d.id.clone()));
        }
    }
    let rename = |d: &CanonicalDiagram, s: &str| format!("{}.{}", d.id, s);
    let mut out = CanonicalDiagram {
        id: id.to_string(),
        scale: None,
        states: Vec::new(),
        dev_arcs: Vec::new(),
        back_arcs: Vec::new(),
        initial: rename(&set.diagrams[0], &set.diagrams[0].initial),
        final_state: rename(&set.diagrams[n - 1], &set.diagrams[n - 1].final_state),
        horizon: set.intervals[n - 1],
    };
    for (i, d) in set.diagrams.iter().enumerate() {
        out.states.extend(d.states.iter().map(|s| rename(d, s)));
        let map = |a: &TimedArc| TimedArc::new(&rename(d, &a.from), &rename(d, &a.to), a.delay);
        out.dev_arcs.extend(d.dev_arcs.iter().map(map));
        out.back_arcs.extend(d.back_arcs.iter().map(map));
        if let Some(next) = set.diagrams.get(i + 1) {
            out.dev_arcs.push(TimedArc::new(
                &rename(d, &d.final_state),
                &rename(next, &next.initial),
                set.intervals[i + 1] - set.intervals[i],
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductArc {
    pub from: usize,
    pub to: usize,
    /// Which component moves.
    pub component: usize,
    /// The component diagram's arc.
    pub arc: ArcKey,
    pub delay: u64,
}

/// A parallel fragment: tuple states, one component per diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDiagram {
    pub components: Vec<String>,
    /// Tuples of component state ids, in lexicographic order of component
    /// state orders.
    pub states: Vec<Vec<String>>,
    pub arcs: Vec<ProductArc>,
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_state: usize,
    pub interval: u64,
    /// Component state orders (0-based) of every tuple.
    #[serde(skip)]
    orders: Vec<Vec<usize>>,
}

impl ProductDiagram {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, tuple: &[String]) -> Option<usize> {
        self.states.iter().position(|t| t == tuple)
    }

    pub fn label(&self, state: usize) -> String {
        tuple_label(&self.states[state])
    }

    /// Componentwise order: `a <= b` iff every component of `a` is at or
    /// below the same component of `b`.
    pub fn le(&self, a: usize, b: usize) -> bool {
        self.orders[a].iter().zip(&self.orders[b]).all(|(x, y)| x <= y)
    }

    /// Arcs leaving `state` that may fire at or after `now`, with the
    /// earliest legal tick. `entries[c]` is the tick component `c` entered
    /// its current state.
    pub fn enabled(&self, state: usize, entries: &[u64], now: u64) -> Vec<(usize, u64)> {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.from == state)
            .filter_map(|(i, a)| {
                let t = now.max(entries[a.component] + a.delay);
                (t <= self.interval).then_some((i, t))
            })
            .collect()
    }
}

pub fn compose_parallel(set: &TimedDiagramSet) -> Result<ProductDiagram, CompositionError> {
    if set.is_empty() {
        return Err(CompositionError::EmptySet);
    }
    if set.intervals.iter().any(|&t| t != set.intervals[0]) {
        return Err(CompositionError::IntervalMismatch {
            intervals: set.intervals.clone(),
        });
    }
    let compiled: Vec<Compiled> = set
        .diagrams
        .iter()
        .zip(&set.intervals)
        .map(|(d, &t)| Compiled::new(d, t))
        .collect::<Result<_, _>>()?;
    let total = compiled
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.states.len()))
        .filter(|&t| t <= PRODUCT_STATE_LIMIT)
        .ok_or(CompositionError::SpaceBoundExceeded {
            bound: PRODUCT_STATE_LIMIT,
        })?;
    // Mixed-radix numbering: the last component varies fastest.
    let radix: Vec<usize> = compiled.iter().map(|c| c.states.len()).collect();
    let encode = |orders: &[usize]| orders.iter().zip(&radix).fold(0, |acc, (o, r)| acc * r + o);
    let mut orders = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut t = vec![0; radix.len()];
        for c in (0..radix.len()).rev() {
            t[c] = code % radix[c];
            code /= radix[c];
        }
        orders.push(t);
    }
    let mut arcs = Vec::new();
    for (from, t) in orders.iter().enumerate() {
        for (c, comp) in compiled.iter().enumerate() {
            for &ai in &comp.out[t[c]] {
                let a = &comp.arcs[ai];
                let mut next = t.clone();
                next[c] = a.to;
                arcs.push(ProductArc {
                    from,
                    to: encode(&next),
                    component: c,
                    arc: a.key.clone(),
                    delay: a.delay,
                });
            }
        }
    }
    let states = orders
        .iter()
        .map(|t| t.iter().zip(&compiled).map(|(&o, c)| c.states[o].clone()).collect())
        .collect();
    let finals: Vec<usize> = set
        .diagrams
        .iter()
        .zip(&compiled)
        .map(|(d, c)| {
            c.state_index(&d.final_state).ok_or_else(|| CompositionError::InvalidDiagram {
                diagram: d.id.clone(),
                message: format!("unknown final state '{}'", d.final_state),
            })
        })
        .collect::<Result<_, _>>()?;
    let initials: Vec<usize> = compiled.iter().map(|c| c.initial).collect();
    Ok(ProductDiagram {
        components: set.diagrams.iter().map(|d| d.id.clone()).collect(),
        states,
        arcs,
        initial: encode(&initials),
        final_state: encode(&finals),
        interval: set.intervals[0],
        orders,
    })
}

/// Ordered pairs `(lower, upper)` over selected tuples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRelationSpec {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

/// Builds the parent-level diagram over `selection`.
///
/// Parent states are the selected tuples in a deterministic linear extension
/// of `order` (ties broken lexicographically by child state orders).
/// Development arcs are the covering pairs of the transitive closure; the
/// delay of a covering arc is the largest, over components, of the shortest
/// development-path delay in that child between the two component states
/// (components with no such path contribute nothing).
pub fn generalize(
    children: &TimedDiagramSet,
    id: &str,
    selection: &[Vec<String>],
    order: &OrderRelationSpec,
) -> Result<CanonicalDiagram, CompositionError> {
    let n = children.len();
    let mut keys: Vec<Vec<usize>> = Vec::with_capacity(selection.len());
    for (i, tuple) in selection.iter().enumerate() {
        if tuple.len() != n {
            return Err(CompositionError::TupleOutOfProduct {
                index: i,
                message: format!("{} components for {} diagrams", tuple.len(), n),
            });
        }
        let mut key = Vec::with_capacity(n);
        for (c, s) in tuple.iter().enumerate() {
            let d = &children.diagrams[c];
            let o = d.order(s).ok_or_else(|| CompositionError::TupleOutOfProduct {
                index: i,
                message: format!("'{s}' is not a state of '{}'", d.id),
            })?;
            key.push(o);
        }
        if keys.contains(&key) {
            return Err(CompositionError::TupleOutOfProduct {
                index: i,
                message: "tuple selected twice".into(),
            });
        }
        keys.push(key);
    }
    let m = selection.len();
    let find = |t: &Vec<String>| {
        selection
            .iter()
            .position(|s| s == t)
            .ok_or_else(|| CompositionError::UnknownTuple(t.clone()))
    };
    let mut less = vec![vec![false; m]; m];
    for (a, b) in &order.pairs {
        let (i, j) = (find(a)?, find(b)?);
        less[i][j] = true;
    }
    for k in 0..m {
        let via = less[k].clone();
        for row in less.iter_mut().filter(|r| r[k]) {
            for (cell, &kj) in row.iter_mut().zip(&via) {
                *cell |= kj;
            }
        }
    }
    if let Some(i) = (0..m).find(|&i| less[i][i]) {
        return Err(CompositionError::OrderCycle(selection[i].clone()));
    }
    // Kahn's algorithm, smallest lexicographic key first.
    let mut indegree: Vec<usize> = (0..m).map(|j| (0..m).filter(|&i| less[i][j]).count()).collect();
    let mut ready: BTreeSet<(Vec<usize>, usize)> = (0..m)
        .filter(|&j| indegree[j] == 0)
        .map(|j| (keys[j].clone(), j))
        .collect();
    let mut extension = Vec::with_capacity(m);
    while let Some(first) = ready.iter().next().cloned() {
        ready.remove(&first);
        let i = first.1;
        extension.push(i);
        for j in 0..m {
            if less[i][j] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert((keys[j].clone(), j));
                }
            }
        }
    }
    let minimal: Vec<usize> = (0..m).filter(|&j| (0..m).all(|i| !less[i][j])).collect();
    let maximal: Vec<usize> = (0..m).filter(|&i| (0..m).all(|j| !less[i][j])).collect();
    if minimal.len() != 1 || maximal.len() != 1 {
        return Err(CompositionError::NoUniqueExtremes {
            minimal: minimal.iter().map(|&i| selection[i].clone()).collect(),
            maximal: maximal.iter().map(|&i| selection[i].clone()).collect(),
        });
    }
    let labels: Vec<String> = selection.iter().map(|t| tuple_label(t)).collect();
    let dist: Vec<Vec<Vec<Option<u64>>>> = children.diagrams.iter().map(dev_path_delays).collect();
    let mut dev_arcs = Vec::new();
    for &i in &extension {
        for &j in &extension {
            let covering = less[i][j] && !(0..m).any(|k| less[i][k] && less[k][j]);
            if !covering {
                continue;
            }
            let delay = (0..n)
                .filter_map(|c| dist[c][keys[i][c] - 1][keys[j][c] - 1])
                .max()
                .unwrap_or(0);
            dev_arcs.push(TimedArc::new(&labels[i], &labels[j], delay));
        }
    }
    Ok(CanonicalDiagram {
        id: id.to_string(),
        scale: None,
        states: extension.iter().map(|&i| labels[i].clone()).collect(),
        dev_arcs,
        back_arcs: Vec::new(),
        initial: labels[minimal[0]].clone(),
        final_state: labels[maximal[0]].clone(),
        horizon: children.intervals.iter().copied().max().unwrap_or(0),
    })
}

/// All-pairs shortest development-path delay (Floyd–Warshall), indexed by
/// 0-based state order.
fn dev_path_delays(d: &CanonicalDiagram) -> Vec<Vec<Option<u64>>> {
    let n = d.states.len();
    let mut dist = vec![vec![None; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for a in &d.dev_arcs {
        if let (Some(f), Some(t)) = (d.order(&a.from), d.order(&a.to)) {
            let cur = &mut dist[f - 1][t - 1];
            *cur = Some(cur.map_or(a.delay, |c: u64| c.min(a.delay)));
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (dist[i][k], dist[k][j]) {
                    let via = a + b;
                    if dist[i][j].is_none_or(|c| via < c) {
                        dist[i][j] = Some(via);
                    }
                }
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prescription {
    /// Index into the diagram set.
    pub diagram: usize,
    pub state: String,
    pub deadline: u64,
}

/// States to be visited in list order, each by its deadline.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrescribedSequence {
    steps: Vec<Prescription>,
}

impl PrescribedSequence {
    pub fn new(steps: Vec<Prescription>) -> Result<Self, CompositionError> {
        if let Some(i) = (1..steps.len()).find(|&i| steps[i].deadline < steps[i - 1].deadline) {
            return Err(CompositionError::DeadlinesNotMonotone { index: i });
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Prescription] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The same sequence with deadline `index` set to `deadline`.
    pub fn with_deadline(&self, index: usize, deadline: u64) -> Result<Self, CompositionError> {
        let mut steps = self.steps.clone();
        steps[index].deadline = deadline;
        Self::new(steps)
    }
}

/// One firing of a joint execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduledFiring {
    pub tick: u64,
    pub diagram: usize,
    pub arc: ArcKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Consistent {
        witness: Vec<ScheduledFiring>,
        /// Tick at which each prescription is met.
        met_at: Vec<u64>,
    },
    Inconsistent {
        /// Length of the longest prescription prefix that can be met.
        satisfiable_prefix: usize,
        /// Index of the first prescription that cannot be met after it.
        failing: usize,
    },
}

impl Verdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Verdict::Consistent { .. })
    }
}

fn resolve_targets(
    compiled: &[Compiled],
    seq: &PrescribedSequence,
) -> Result<Vec<(usize, usize, u64)>, CompositionError> {
    seq.steps
        .iter()
        .map(|p| {
            let c = compiled
                .get(p.diagram)
                .ok_or(CompositionError::UnknownDiagram(p.diagram))?;
            let s = c.state_index(&p.state).ok_or_else(|| CompositionError::UnknownState {
                diagram: p.diagram,
                state: p.state.clone(),
            })?;
            Ok((p.diagram, s, p.deadline))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct SearchNode {
    states: Vec<usize>,
    entries: Vec<u64>,
    time: u64,
    met: usize,
}

/// Advances past every prescription already met by the current configuration.
fn advance(targets: &[(usize, usize, u64)], states: &[usize], time: u64, mut met: usize) -> usize {
    while let Some(&(d, s, deadline)) = targets.get(met) {
        if states[d] == s && time <= deadline {
            met += 1;
        } else {
            break;
        }
    }
    met
}

/// Decides whether some joint execution meets the prescribed sequence.
///
/// Executions start with every diagram in its initial state (entered at tick
/// 0) and fire arcs legally at non-decreasing ticks within each diagram's
/// interval. Prescription `k` is met by a configuration that occupies its
/// state and was reached at or before its deadline, at a point of the
/// execution no earlier than where prescription `k - 1` was met.
///
/// Depth-first search over (configuration, entry ticks, time, prescriptions
/// met). Each move fires one arc at the earliest legal tick; successors are
/// tried by tick, then diagram index, then arc order, so the witness is
/// deterministic.
pub fn check_consistency(set: &TimedDiagramSet, seq: &PrescribedSequence) -> Result<Verdict, CompositionError> {
    let compiled: Vec<Compiled> = set
        .diagrams
        .iter()
        .zip(&set.intervals)
        .map(|(d, &t)| Compiled::new(d, t))
        .collect::<Result<_, _>>()?;
    let targets = resolve_targets(&compiled, seq)?;
    let m = targets.len();

    let states: Vec<usize> = compiled.iter().map(|c| c.initial).collect();
    let root = SearchNode {
        met: advance(&targets, &states, 0, 0),
        entries: vec![0; compiled.len()],
        states,
        time: 0,
    };
    let mut best = root.met;
    let mut visited: HashSet<SearchNode> = HashSet::new();
    // Stack frames: node, its successors, next successor to try, and the
    // firing that led to it.
    struct Frame {
        succ: Vec<(SearchNode, ScheduledFiring)>,
        next: usize,
    }
    let successors = |node: &SearchNode| -> Vec<(SearchNode, ScheduledFiring)> {
        let limit = targets[node.met].2;
        let mut out = Vec::new();
        for (i, c) in compiled.iter().enumerate() {
            for &ai in &c.out[node.states[i]] {
                let a = &c.arcs[ai];
                let t = node.time.max(node.entries[i] + a.delay);
                if t > c.bound || t > limit {
                    continue;
                }
                let mut states = node.states.clone();
                let mut entries = node.entries.clone();
                states[i] = a.to;
                entries[i] = t;
                let met = advance(&targets, &states, t, node.met);
                out.push((
                    SearchNode {
                        states,
                        entries,
                        time: t,
                        met,
                    },
                    ScheduledFiring {
                        tick: t,
                        diagram: i,
                        arc: a.key.clone(),
                    },
                ));
            }
        }
        out.sort_by_key(|(n, _)| n.time);
        out
    };

    if root.met == m {
        return Ok(Verdict::Consistent {
            witness: Vec::new(),
            met_at: vec![0; m],
        });
    }
    visited.insert(root.clone());
    let mut path: Vec<ScheduledFiring> = Vec::new();
    let mut stack = vec![Frame {
        succ: successors(&root),
        next: 0,
    }];
    while let Some(frame) = stack.last_mut() {
        if frame.next == frame.succ.len() {
            stack.pop();
            path.pop();
            continue;
        }
        let (node, firing) = frame.succ[frame.next].clone();
        frame.next += 1;
        if !visited.insert(node.clone()) {
            continue;
        }
        best = best.max(node.met);
        path.push(firing);
        if node.met == m {
            let met_at = met_ticks(&compiled, &targets, &path);
            return Ok(Verdict::Consistent { witness: path, met_at });
        }
        let succ = successors(&node);
        stack.push(Frame { succ, next: 0 });
    }
    Ok(Verdict::Inconsistent {
        satisfiable_prefix: best,
        failing: best,
    })
}

/// Replays a witness and reports the tick each prescription is met.
fn met_ticks(compiled: &[Compiled], targets: &[(usize, usize, u64)], witness: &[ScheduledFiring]) -> Vec<u64> {
    let mut states: Vec<usize> = compiled.iter().map(|c| c.initial).collect();
    let mut out = Vec::with_capacity(targets.len());
    let record = |states: &[usize], time: u64, out: &mut Vec<u64>| {
        while let Some(&(d, s, deadline)) = targets.get(out.len()) {
            if states[d] == s && time <= deadline {
                out.push(time);
            } else {
                break;
            }
        }
    };
    record(&states, 0, &mut out);
    for f in witness {
        let c = &compiled[f.diagram];
        let a = c.arcs.iter().find(|a| a.key == f.arc).expect("witness arc");
        states[f.diagram] = a.to;
        record(&states, f.tick, &mut out);
    }
    out
}

/// Exhaustive execution space of a diagram set up to a horizon.
///
/// Nodes are (per-diagram placement, time of the last firing); edges are
/// every legal firing at every legal tick, checked with
/// [`apply_transition`]. Unlike [`check_consistency`] this explores all
/// firing ticks, not only the earliest, and matches prescriptions
/// nondeterministically.
#[derive(Debug, Clone)]
pub struct AttainableSpace {
    diagrams: Vec<String>,
    nodes: Vec<(Vec<Placement>, u64)>,
    edges: Vec<Vec<(ScheduledFiring, usize)>>,
    horizon: u64,
}

pub fn enumerate_attainable_sequences(
    set: &TimedDiagramSet,
    horizon: u64,
    bound: usize,
) -> Result<AttainableSpace, CompositionError> {
    const OBJECT: &str = "x";
    let mut index: HashMap<(Vec<Placement>, u64), usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edges: Vec<Vec<(ScheduledFiring, usize)>> = Vec::new();
    let root: Vec<Placement> = set
        .diagrams
        .iter()
        .map(|d| Placement {
            state: d.initial.clone(),
            since: 0,
        })
        .collect();
    index.insert((root.clone(), 0), 0);
    nodes.push((root, 0));
    edges.push(Vec::new());
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        let (placements, time) = nodes[n].clone();
        for (i, d) in set.diagrams.iter().enumerate() {
            let last = set.intervals[i].min(horizon);
            for (kind, a) in d.arcs() {
                let key = CanonicalDiagram::key_of(kind, a);
                for tick in time..=last {
                    let mut dist = ObjectDistribution::new();
                    dist.place(OBJECT, &placements[i].state, placements[i].since);
                    let mut counters = ArcCounters::new();
                    if apply_transition(&mut dist, &mut counters, d, OBJECT, &key, tick).is_err() {
                        continue;
                    }
                    let mut next = placements.clone();
                    next[i] = dist.get(OBJECT).unwrap().clone();
                    let k = (next, tick);
                    let target = match index.get(&k) {
                        Some(&t) => t,
                        None => {
                            if nodes.len() >= bound {
                                return Err(CompositionError::SpaceBoundExceeded { bound });
                            }
                            let t = nodes.len();
                            index.insert(k.clone(), t);
                            nodes.push(k);
                            edges.push(Vec::new());
                            queue.push_back(t);
                            t
                        }
                    };
                    edges[n].push((
                        ScheduledFiring {
                            tick,
                            diagram: i,
                            arc: key.clone(),
                        },
                        target,
                    ));
                }
            }
        }
    }
    Ok(AttainableSpace {
        diagrams: set.diagrams.iter().map(|d| d.id.clone()).collect(),
        nodes,
        edges,
        horizon,
    })
}

impl AttainableSpace {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Every legal execution (firing sequence) that does not revisit a
    /// configuration, including the empty one. Stops after `limit`
    /// executions.
    pub fn executions(&self, limit: usize) -> Vec<Vec<ScheduledFiring>> {
        let mut out = Vec::new();
        let mut on_path = vec![false; self.nodes.len()];
        let mut path = Vec::new();
        self.walk(0, &mut on_path, &mut path, &mut out, limit);
        out
    }

    fn walk(
        &self,
        n: usize,
        on_path: &mut [bool],
        path: &mut Vec<ScheduledFiring>,
        out: &mut Vec<Vec<ScheduledFiring>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        out.push(path.clone());
        on_path[n] = true;
        for (f, t) in &self.edges[n] {
            if !on_path[*t] {
                path.push(f.clone());
                self.walk(*t, on_path, path, out, limit);
                path.pop();
            }
        }
        on_path[n] = false;
    }

    /// Whether some execution meets `seq` (same meaning as
    /// [`check_consistency`]). Breadth-first search over
    /// (node, prescriptions met) where meeting a prescription is an optional
    /// move.
    pub fn satisfies(&self, seq: &PrescribedSequence) -> Result<bool, CompositionError> {
        for p in &seq.steps {
            if p.diagram >= self.diagrams.len() {
                return Err(CompositionError::UnknownDiagram(p.diagram));
            }
        }
        let m = seq.len();
        let mut seen = HashSet::from([(0usize, 0usize)]);
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        while let Some((n, k)) = queue.pop_front() {
            if k == m {
                return Ok(true);
            }
            let (placements, time) = &self.nodes[n];
            let p = &seq.steps[k];
            let mut moves: Vec<(usize, usize)> = self.edges[n].iter().map(|(_, t)| (*t, k)).collect();
            if placements[p.diagram].state == p.state && *time <= p.deadline {
                moves.push((n, k + 1));
            }
            for mv in moves {
                if seen.insert(mv) {
                    queue.push_back(mv);
                }
            }
        }
        Ok(false)
    }

    /// Every prescribed sequence of exactly `len` steps, drawn from
    /// (diagram, state, deadline <= horizon) with non-decreasing deadlines,
    /// that some execution meets.
    pub fn attainable(&self, set: &TimedDiagramSet, len: usize) -> Vec<PrescribedSequence> {
        let mut items = Vec::new();
        for (i, d) in set.diagrams.iter().enumerate() {
            for s in &d.states {
                for deadline in 0..=self.horizon {
                    items.push(Prescription {
                        diagram: i,
                        state: s.clone(),
                        deadline,
                    });
                }
            }
        }
        let mut out = Vec::new();
        let mut current = Vec::new();
        self.attainable_rec(&items, len, &mut current, &mut out);
        out
    }

    fn attainable_rec(
        &self,
        items: &[Prescription],
        len: usize,
        current: &mut Vec<Prescription>,
        out: &mut Vec<PrescribedSequence>,
    ) {
        if current.len() == len {
            let seq = PrescribedSequence::new(current.clone()).expect("monotone by construction");
            if self.satisfies(&seq).unwrap_or(false) {
                out.push(seq);
            }
            return;
        }
        for it in items {
            if current.last().is_some_and(|l| l.deadline > it.deadline) {
                continue;
            }
            current.push(it.clone());
            self.attainable_rec(items, len, current, out);
            current.pop();
        }
    }
}

/// Size limits for [`synthetic_diagram_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticShape {
    pub max_diagrams: usize,
    pub max_states: usize,
    pub max_arcs: usize,
    pub max_delay: u64,
    pub horizon: u64,
}

/// A random diagram set for test corpora.
///
/// Each diagram is a chain `S1 < ... < Sn` (so the final state is
/// reachable) plus random skip and back arcs up to `max_arcs` arcs in
/// total. Every interval equals `shape.horizon`.
pub fn synthetic_diagram_set(seed: u64, shape: SyntheticShape) -> TimedDiagramSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=shape.max_diagrams.max(1));
    let diagrams = (0..count)
        .map(|i| {
            let n = rng.gen_range(2..=shape.max_states.max(2));
            let mut d = CanonicalDiagram::chain(&format!("d{i}"), n, 0, shape.horizon);
            for a in &mut d.dev_arcs {
                a.delay = rng.gen_range(0..=shape.max_delay);
            }
            let mut spare: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .filter(|&(a, b)| a != b && b != a + 1)
                .collect();
            spare.shuffle(&mut rng);
            let budget = shape.max_arcs.saturating_sub(n - 1);
            let extra = rng.gen_range(0..=budget.min(spare.len()));
            for &(a, b) in &spare[..extra] {
                let arc = TimedArc::new(&d.states[a], &d.states[b], rng.gen_range(0..=shape.max_delay));
                if a < b {
                    d.dev_arcs.push(arc);
                } else {
                    d.back_arcs.push(arc);
                }
            }
            d
        })
        .collect();
    TimedDiagramSet::new(diagrams, vec![shape.horizon; count]).expect("intervals equal horizons")
}

/// A random prescribed sequence of 1 to `max_len` steps over `set`, with
/// non-decreasing deadlines up to `horizon`.
pub fn synthetic_prescriptions(set: &TimedDiagramSet, seed: u64, max_len: usize, horizon: u64) -> PrescribedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(1..=max_len.max(1));
    let mut deadlines: Vec<u64> = (0..len).map(|_| rng.gen_range(0..=horizon)).collect();
    deadlines.sort_unstable();
    let steps = deadlines
        .into_iter()
        .map(|deadline| {
            let diagram = rng.gen_range(0..set.len());
            let state = set.diagrams[diagram].states.choose(&mut rng).expect("non-empty").clone();
            Prescription {
                diagram,
                state,
                deadline,
            }
        })
        .collect();
    PrescribedSequence::new(steps).expect("sorted deadlines")
}
