//! Canonical state-development diagrams.
//!
//! States are totally ordered. Development arcs go up the order, backstep
//! arcs go down, and each arc carries a minimum residence delay: an object
//! that entered the source state at tick `e` may take the arc at any tick
//! `t >= e + delay` up to the horizon. Objects move only through
//! [`apply_transition`]; per-arc counters and the event history are kept in
//! lock step with the distribution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validation::Finding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    #[serde(alias = "development", alias = "dev")]
    Development,
    #[serde(alias = "backstep", alias = "back")]
    Backstep,
}

impl ArcKind {
    pub fn short(self) -> &'static str {
        match self {
            ArcKind::Development => "dev",
            ArcKind::Backstep => "back",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dev" | "development" | "p" => Some(ArcKind::Development),
            "back" | "backstep" | "p0" => Some(ArcKind::Backstep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedArc {
    pub from: String,
    pub to: String,
    pub delay: u64,
}

impl TimedArc {
    pub fn new(from: &str, to: &str, delay: u64) -> Self {
        Self {
            from: from.to_string(),
            to: to.to_string(),
            delay,
        }
    }
}

/// Identifies an arc of a diagram.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArcKey {
    pub kind: ArcKind,
    pub from: String,
    pub to: String,
}

impl ArcKey {
    pub fn dev(from: &str, to: &str) -> Self {
        Self {
            kind: ArcKind::Development,
            from: from.to_string(),
            to: to.to_string(),
        }
    }

    pub fn back(from: &str, to: &str) -> Self {
        Self {
            kind: ArcKind::Backstep,
            from: from.to_string(),
            to: to.to_string(),
        }
    }
}

impl fmt::Display for ArcKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}", self.kind.short(), self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalDiagram {
    pub id: String,
    /// Ordering scale, when the diagram is tied to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    /// States in increasing order.
    pub states: Vec<String>,
    pub dev_arcs: Vec<TimedArc>,
    #[serde(default)]
    pub back_arcs: Vec<TimedArc>,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub horizon: u64,
}

impl CanonicalDiagram {
    /// Linear chain `s1 -> s2 -> ... -> sn` where each arc has `delay`.
    pub fn chain(id: &str, n: usize, delay: u64, horizon: u64) -> Self {
        let states: Vec<String> = (1..=n).map(|i| format!("S{i}")).collect();
        let dev_arcs = states
            .windows(2)
            .map(|w| TimedArc::new(&w[0], &w[1], delay))
            .collect();
        Self {
            id: id.to_string(),
            scale: None,
            initial: states[0].clone(),
            final_state: states[n - 1].clone(),
            states,
            dev_arcs,
            back_arcs: Vec::new(),
            horizon,
        }
    }

    /// 1-based order of a state.
    pub fn order(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state).map(|i| i + 1)
    }

    pub fn contains(&self, state: &str) -> bool {
        self.order(state).is_some()
    }

    pub fn arcs_of(&self, kind: ArcKind) -> &[TimedArc] {
        match kind {
            ArcKind::Development => &self.dev_arcs,
            ArcKind::Backstep => &self.back_arcs,
        }
    }

    /// All arcs, development arcs first, each group in declaration order.
    pub fn arcs(&self) -> impl Iterator<Item = (ArcKind, &TimedArc)> {
        self.dev_arcs
            .iter()
            .map(|a| (ArcKind::Development, a))
            .chain(self.back_arcs.iter().map(|a| (ArcKind::Backstep, a)))
    }

    pub fn arc(&self, key: &ArcKey) -> Option<&TimedArc> {
        self.arcs_of(key.kind)
            .iter()
            .find(|a| a.from == key.from && a.to == key.to)
    }

    pub fn key_of(kind: ArcKind, arc: &TimedArc) -> ArcKey {
        ArcKey {
            kind,
            from: arc.from.clone(),
            to: arc.to.clone(),
        }
    }

    /// States reachable from the initial state over development arcs.
    pub fn reachable_states(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        if !self.contains(&self.initial) {
            return seen;
        }
        let mut queue = VecDeque::from([self.initial.clone()]);
        seen.insert(self.initial.clone());
        while let Some(s) = queue.pop_front() {
            for a in self.dev_arcs.iter().filter(|a| a.from == s) {
                if seen.insert(a.to.clone()) {
                    queue.push_back(a.to.clone());
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalCheck {
    pub diagram: String,
    pub findings: Vec<Finding>,
    pub unreachable: Vec<String>,
    pub final_reachable: bool,
}

impl CanonicalCheck {
    pub fn pass(&self) -> bool {
        crate::validation::passes(&self.findings)
    }
}

/// Checks arc order constraints, delay range, membership of S0/S*, and
/// reachability over development arcs. Unreachable states are warnings; an
/// unreachable final state is an error.
pub fn validate_canonical(d: &CanonicalDiagram) -> CanonicalCheck {
    let mut findings = Vec::new();
    let subject = d.id.clone();
    let mut seen = BTreeSet::new();
    for s in &d.states {
        if !seen.insert(s) {
            findings.push(Finding::error("duplicate-state", &subject, format!("state '{s}' listed twice")));
        }
    }
    for (what, s) in [("initial", &d.initial), ("final", &d.final_state)] {
        if !d.contains(s) {
            findings.push(Finding::error(
                "unknown-state",
                &subject,
                format!("{what} state '{s}' is not a state of the diagram"),
            ));
        }
    }
    let mut keys = BTreeSet::new();
    for (kind, a) in d.arcs() {
        let key = CanonicalDiagram::key_of(kind, a);
        if !keys.insert(key.clone()) {
            findings.push(Finding::error("duplicate-arc", &subject, format!("arc {key} declared twice")));
        }
        let (Some(from), Some(to)) = (d.order(&a.from), d.order(&a.to)) else {
            findings.push(Finding::error(
                "unknown-state",
                &subject,
                format!("arc {key} references an unknown state"),
            ));
            continue;
        };
        match kind {
            ArcKind::Development if from >= to => findings.push(Finding::error(
                "dev-arc-order",
                &subject,
                format!("development arc {key} does not increase the state order ({from} -> {to})"),
            )),
            ArcKind::Backstep if to >= from => findings.push(Finding::error(
                "back-arc-order",
                &subject,
                format!("backstep arc {key} does not decrease the state order ({from} -> {to})"),
            )),
            _ => {}
        }
        if a.delay > d.horizon {
            findings.push(Finding::error(
                "delay-range",
                &subject,
                format!("arc {key} delay {} exceeds horizon {}", a.delay, d.horizon),
            ));
        }
    }
    let reachable = d.reachable_states();
    let unreachable: Vec<String> = d
        .states
        .iter()
        .filter(|s| !reachable.contains(*s))
        .cloned()
        .collect();
    for s in &unreachable {
        findings.push(Finding::warning(
            "unreachable-state",
            &subject,
            format!("state '{s}' is not reachable from '{}'", d.initial),
        ));
    }
    let final_reachable = reachable.contains(&d.final_state);
    if !final_reachable {
        findings.push(Finding::error(
            "final-unreachable",
            &subject,
            format!("final state '{}' is not reachable from '{}'", d.final_state, d.initial),
        ));
    }
    CanonicalCheck {
        diagram: subject,
        findings,
        unreachable,
        final_reachable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub state: String,
    /// Tick the object entered `state`.
    pub since: u64,
}

/// Assignment of objects to states.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDistribution {
    pub objects: BTreeMap<String, Placement>,
}

impl ObjectDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// `count` objects per state, all entered at tick 0. Object ids are
    /// `o1, o2, ...` numbered in the iteration order of `counts`.
    pub fn from_counts<'a>(counts: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut objects = BTreeMap::new();
        let mut n = 0;
        for (state, c) in counts {
            for _ in 0..c {
                n += 1;
                objects.insert(
                    format!("o{n}"),
                    Placement {
                        state: state.to_string(),
                        since: 0,
                    },
                );
            }
        }
        Self { objects }
    }

    pub fn place(&mut self, object: &str, state: &str, since: u64) {
        self.objects.insert(
            object.to_string(),
            Placement {
                state: state.to_string(),
                since,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, object: &str) -> Option<&Placement> {
        self.objects.get(object)
    }

    /// N_i: number of objects in `state`.
    pub fn count(&self, state: &str) -> usize {
        self.objects.values().filter(|p| p.state == state).count()
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for p in self.objects.values() {
            *out.entry(p.state.clone()).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcCounters {
    pub counts: BTreeMap<ArcKey, u64>,
    pub history: Vec<(u64, ArcKey)>,
}

impl ArcCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, arc: &ArcKey) -> u64 {
        self.counts.get(arc).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    fn record(&mut self, tick: u64, arc: &ArcKey) {
        *self.counts.entry(arc.clone()).or_insert(0) += 1;
        self.history.push((tick, arc.clone()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub tick: u64,
    pub object: String,
    pub arc: ArcKey,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("unknown arc {0}")]
    UnknownArc(ArcKey),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("object '{object}' is in '{actual}', arc leaves '{expected}'")]
    ObjectNotInFromState {
        object: String,
        expected: String,
        actual: String,
    },
    #[error("object '{object}' may take {arc} at tick {earliest} at the earliest, requested {tick}")]
    TooEarly {
        object: String,
        arc: ArcKey,
        earliest: u64,
        tick: u64,
    },
    #[error("tick {tick} is beyond the horizon {horizon}")]
    BeyondHorizon { tick: u64, horizon: u64 },
}

/// Moves `object` along `arc` at `tick`. Nothing is modified on error.
pub fn apply_transition(
    dist: &mut ObjectDistribution,
    counters: &mut ArcCounters,
    d: &CanonicalDiagram,
    object: &str,
    arc: &ArcKey,
    tick: u64,
) -> Result<TransitionEvent, TransitionError> {
    let timed = d
        .arc(arc)
        .ok_or_else(|| TransitionError::UnknownArc(arc.clone()))?;
    let placement = dist
        .objects
        .get_mut(object)
        .ok_or_else(|| TransitionError::UnknownObject(object.to_string()))?;
    if placement.state != arc.from {
        return Err(TransitionError::ObjectNotInFromState {
            object: object.to_string(),
            expected: arc.from.clone(),
            actual: placement.state.clone(),
        });
    }
    if tick > d.horizon {
        return Err(TransitionError::BeyondHorizon {
            tick,
            horizon: d.horizon,
        });
    }
    let earliest = placement.since.saturating_add(timed.delay);
    if tick < earliest {
        return Err(TransitionError::TooEarly {
            object: object.to_string(),
            arc: arc.clone(),
            earliest,
            tick,
        });
    }
    placement.state = arc.to.clone();
    placement.since = tick;
    counters.record(tick, arc);
    Ok(TransitionEvent {
        tick,
        object: object.to_string(),
        arc: arc.clone(),
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntensityError {
    #[error("window {start}..={end} is not inside 0..={horizon}")]
    WindowOutOfRange { start: u64, end: u64, horizon: u64 },
    #[error("history event {index} is illegal: {source}")]
    IllegalEvent {
        index: usize,
        #[source]
        source: TransitionError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSeries {
    pub state: String,
    /// N_i(t) for each tick of the window.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSeries {
    pub arc: ArcKey,
    /// η_ij(t): transitions on the arc within `[start, t]`.
    pub cumulative: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalGap {
    pub state: String,
    pub goal: usize,
    pub reached: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityReport {
    pub diagram: String,
    pub start: u64,
    pub end: u64,
    pub objects: usize,
    pub occupancy: Vec<StateSeries>,
    pub arcs: Vec<ArcSeries>,
    /// Development transitions inside the window.
    pub development: u64,
    /// Backstep transitions inside the window.
    pub degradation: u64,
    /// `development / degradation`; absent when there is no degradation.
    pub ratio: Option<f64>,
    /// Per-tick development and degradation counts.
    pub development_per_tick: Vec<u64>,
    pub degradation_per_tick: Vec<u64>,
    /// Final distribution against the goal distribution, when one is given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub goal: Vec<GoalGap>,
}

/// Rebuilds N_i(t) and η_ij(t) over `[start, end]` from the initial
/// distribution and the event history. Events are replayed in tick order
/// (stable for equal ticks) and must all be legal.
pub fn intensity_report(
    d: &CanonicalDiagram,
    initial: &ObjectDistribution,
    history: &[TransitionEvent],
    start: u64,
    end: u64,
    goal: Option<&BTreeMap<String, usize>>,
) -> Result<IntensityReport, IntensityError> {
    if start > end || end > d.horizon {
        return Err(IntensityError::WindowOutOfRange {
            start,
            end,
            horizon: d.horizon,
        });
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by_key(|&i| history[i].tick);

    let width = (end - start + 1) as usize;
    let mut dist = initial.clone();
    let mut counters = ArcCounters::new();
    let mut occupancy: Vec<StateSeries> = d
        .states
        .iter()
        .map(|s| StateSeries {
            state: s.clone(),
            counts: Vec::with_capacity(width),
        })
        .collect();
    let mut arcs: Vec<ArcSeries> = d
        .arcs()
        .map(|(k, a)| ArcSeries {
            arc: CanonicalDiagram::key_of(k, a),
            cumulative: vec![0; width],
        })
        .collect();
    let arc_index: BTreeMap<ArcKey, usize> = arcs
        .iter()
        .enumerate()
        .map(|(i, a)| (a.arc.clone(), i))
        .collect();
    let mut development_per_tick = vec![0; width];
    let mut degradation_per_tick = vec![0; width];

    let mut next = 0;
    for t in 0..=end {
        while next < order.len() && history[order[next]].tick <= t {
            let i = order[next];
            let ev = &history[i];
            apply_transition(&mut dist, &mut counters, d, &ev.object, &ev.arc, ev.tick)
                .map_err(|source| IntensityError::IllegalEvent { index: i, source })?;
            if t >= start {
                let slot = (t - start) as usize;
                arcs[arc_index[&ev.arc]].cumulative[slot] += 1;
                match ev.arc.kind {
                    ArcKind::Development => development_per_tick[slot] += 1,
                    ArcKind::Backstep => degradation_per_tick[slot] += 1,
                }
            }
            next += 1;
        }
        if t >= start {
            let counts = dist.counts();
            for s in occupancy.iter_mut() {
                s.counts.push(counts.get(&s.state).copied().unwrap_or(0));
            }
        }
    }
    // Remaining events must still be legal.
    while next < order.len() {
        let i = order[next];
        let ev = &history[i];
        apply_transition(&mut dist, &mut counters, d, &ev.object, &ev.arc, ev.tick)
            .map_err(|source| IntensityError::IllegalEvent { index: i, source })?;
        next += 1;
    }
    for a in arcs.iter_mut() {
        for k in 1..width {
            a.cumulative[k] += a.cumulative[k - 1];
        }
    }
    let development: u64 = development_per_tick.iter().sum();
    let degradation: u64 = degradation_per_tick.iter().sum();
    let goal = goal
        .map(|g| {
            d.states
                .iter()
                .filter(|s| g.contains_key(*s) || occupancy.iter().any(|o| &o.state == *s))
                .map(|s| GoalGap {
                    state: s.clone(),
                    goal: g.get(s).copied().unwrap_or(0),
                    reached: occupancy
                        .iter()
                        .find(|o| &o.state == s)
                        .and_then(|o| o.counts.last().copied())
                        .unwrap_or(0),
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(IntensityReport {
        diagram: d.id.clone(),
        start,
        end,
        objects: initial.len(),
        occupancy,
        arcs,
        development,
        degradation,
        ratio: (degradation > 0).then(|| development as f64 / degradation as f64),
        development_per_tick,
        degradation_per_tick,
        goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::has_code;

    fn chain3() -> CanonicalDiagram {
        CanonicalDiagram::chain("d", 3, 3, 20)
    }

    #[test]
    fn chain_validates() {
        let c = validate_canonical(&chain3());
        assert!(c.pass(), "{:?}", c.findings);
        assert!(c.unreachable.is_empty());
        assert!(c.final_reachable);
    }

    #[test]
    fn order_violations_reported() {
        let mut d = chain3();
        d.dev_arcs.push(TimedArc::new("S3", "S1", 1));
        d.back_arcs.push(TimedArc::new("S1", "S3", 1));
        let c = validate_canonical(&d);
        assert!(!c.pass());
        assert!(has_code(&c.findings, "dev-arc-order"));
        assert!(has_code(&c.findings, "back-arc-order"));
    }

    #[test]
    fn delay_membership_and_reachability() {
        let mut d = chain3();
        d.dev_arcs[1].delay = 21;
        d.dev_arcs.remove(0);
        d.final_state = "S9".into();
        let c = validate_canonical(&d);
        assert!(has_code(&c.findings, "delay-range"));
        assert!(has_code(&c.findings, "unknown-state"));
        assert!(has_code(&c.findings, "unreachable-state"));
        assert!(!c.final_reachable);
    }

    #[test]
    fn transition_examples() {
        let d = chain3();
        let mut dist = ObjectDistribution::new();
        dist.place("o", "S1", 0);
        let mut counters = ArcCounters::new();
        let arc = ArcKey::dev("S1", "S2");

        let mut early = dist.clone();
        let mut early_c = counters.clone();
        assert!(matches!(
            apply_transition(&mut early, &mut early_c, &d, "o", &arc, 2),
            Err(TransitionError::TooEarly { earliest: 3, .. })
        ));
        assert_eq!(early, dist);
        assert_eq!(early_c, counters);

        let ev = apply_transition(&mut dist, &mut counters, &d, "o", &arc, 3).unwrap();
        assert_eq!(ev.tick, 3);
        assert_eq!(dist.get("o").unwrap().state, "S2");
        assert_eq!(dist.get("o").unwrap().since, 3);
        assert_eq!(counters.get(&arc), 1);
    }

    #[test]
    fn transition_errors() {
        let d = chain3();
        let mut dist = ObjectDistribution::new();
        dist.place("o", "S2", 0);
        let mut c = ArcCounters::new();
        assert!(matches!(
            apply_transition(&mut dist, &mut c, &d, "o", &ArcKey::dev("S1", "S2"), 5),
            Err(TransitionError::ObjectNotInFromState { .. })
        ));
        assert!(matches!(
            apply_transition(&mut dist, &mut c, &d, "o", &ArcKey::dev("S2", "S3"), 21),
            Err(TransitionError::BeyondHorizon { .. })
        ));
        assert!(matches!(
            apply_transition(&mut dist, &mut c, &d, "o", &ArcKey::back("S2", "S1"), 5),
            Err(TransitionError::UnknownArc(_))
        ));
        assert!(matches!(
            apply_transition(&mut dist, &mut c, &d, "x", &ArcKey::dev("S2", "S3"), 5),
            Err(TransitionError::UnknownObject(_))
        ));
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn two_objects_same_arc_replay() {
        let d = chain3();
        let mut dist = ObjectDistribution::from_counts([("S1", 2)]);
        let mut c = ArcCounters::new();
        let arc = ArcKey::dev("S1", "S2");
        let script = [("o1", 3u64), ("o2", 5)];
        for (o, t) in script {
            apply_transition(&mut dist, &mut c, &d, o, &arc, t).unwrap();
        }
        // Independent recount of the script.
        let expected = script.len() as u64;
        assert_eq!(c.get(&arc), expected);
        assert_eq!(c.history, vec![(3, arc.clone()), (5, arc.clone())]);
    }

    #[test]
    fn intensity_no_events() {
        let d = chain3();
        let init = ObjectDistribution::from_counts([("S1", 10)]);
        let r = intensity_report(&d, &init, &[], 0, 20, None).unwrap();
        assert!(r.occupancy[0].counts.iter().all(|&n| n == 10));
        assert_eq!((r.development, r.degradation, r.ratio), (0, 0, None));
    }

    #[test]
    fn intensity_single_event() {
        let d = chain3();
        let init = ObjectDistribution::from_counts([("S1", 1)]);
        let ev = TransitionEvent {
            tick: 3,
            object: "o1".into(),
            arc: ArcKey::dev("S1", "S2"),
        };
        let r = intensity_report(&d, &init, &[ev], 0, 5, None).unwrap();
        assert_eq!(r.occupancy[0].counts, vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(r.occupancy[1].counts, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(r.arcs[0].cumulative, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn intensity_ratio_from_scripted_replay() {
        let mut d = CanonicalDiagram::chain("d", 2, 1, 30);
        d.back_arcs.push(TimedArc::new("S2", "S1", 1));
        let init = ObjectDistribution::from_counts([("S1", 5)]);
        let mut events = Vec::new();
        for k in 1..=5 {
            events.push(TransitionEvent {
                tick: 2,
                object: format!("o{k}"),
                arc: ArcKey::dev("S1", "S2"),
            });
        }
        for k in 1..=2 {
            events.push(TransitionEvent {
                tick: 4,
                object: format!("o{k}"),
                arc: ArcKey::back("S2", "S1"),
            });
        }
        let dev = events.iter().filter(|e| e.arc.kind == ArcKind::Development).count() as u64;
        let back = events.len() as u64 - dev;
        let r = intensity_report(&d, &init, &events, 0, 10, None).unwrap();
        assert_eq!((r.development, r.degradation), (dev, back));
        assert_eq!(r.ratio, Some(2.5));

        // Window starting after the development events.
        let r = intensity_report(&d, &init, &events, 3, 10, None).unwrap();
        assert_eq!((r.development, r.degradation), (0, 2));
    }

    #[test]
    fn intensity_errors_and_goal() {
        let d = chain3();
        let init = ObjectDistribution::from_counts([("S1", 2)]);
        assert!(matches!(
            intensity_report(&d, &init, &[], 5, 4, None),
            Err(IntensityError::WindowOutOfRange { .. })
        ));
        assert!(matches!(
            intensity_report(&d, &init, &[], 0, 21, None),
            Err(IntensityError::WindowOutOfRange { .. })
        ));
        let bad = TransitionEvent {
            tick: 1,
            object: "o1".into(),
            arc: ArcKey::dev("S1", "S2"),
        };
        assert!(matches!(
            intensity_report(&d, &init, &[bad], 0, 5, None),
            Err(IntensityError::IllegalEvent { index: 0, .. })
        ));
        let goal = BTreeMap::from([("S3".to_string(), 2)]);
        let r = intensity_report(&d, &init, &[], 0, 5, Some(&goal)).unwrap();
        let s3 = r.goal.iter().find(|g| g.state == "S3").unwrap();
        assert_eq!((s3.goal, s3.reached), (2, 0));
    }
}
