//! Scenario-driven control of a hierarchy of hypothesis diagrams.
//!
//! A scenario binds one [`HypothesisDiagram`] to each subsystem of a
//! [`Hierarchy`], schedules control symbols with a time diagram and couples
//! levels through an [`AfterEffectScheme`]. [`run_scenario`] executes it on
//! ticks `0..horizon`; every tick runs three phases:
//!
//! 1. deliveries due this tick, by target preorder then declaration order;
//!    general symbols propagate down their parent links;
//! 2. upward propagation: a parent arc fires once enough arcs of its child
//!    tuple fired this tick, cascading up;
//! 3. backsteps for subsystems left without effective symbols for
//!    `backstep_timeout` ticks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::validation::{passes, Finding};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario '{scenario}' failed validation with {} finding(s)", findings.len())]
    ValidationFailed { scenario: String, findings: Vec<Finding> },
    #[error("horizon must be at least one tick")]
    InvalidHorizon,
    #[error("delivery at tick {tick} lies beyond the horizon of {horizon} ticks")]
    HorizonExceeded { tick: u64, horizon: u64 },
    #[error("unknown delivery target '{0}'")]
    UnknownTarget(String),
    #[error("symbol '{symbol}' is not in the alphabet of '{target}'")]
    UnknownSymbol { target: String, symbol: String },
    #[error("configuration does not fit the scenario: {0}")]
    InvalidConfiguration(String),
    #[error("trajectory does not belong to the scenario: {0}")]
    TrajectoryScenarioMismatch(String),
    #[error("no score for state '{state}' of subsystem '{subsystem}'")]
    MissingScore { subsystem: String, state: String },
    #[error("at least two reports are needed, got {0}")]
    TooFewReports(usize),
    #[error("reports are not comparable: {0}")]
    IncomparableReports(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub symbol: String,
}

impl LabeledArc {
    pub fn new(id: &str, from: &str, to: &str, symbol: &str) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            symbol: symbol.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackArc {
    pub from: String,
    pub to: String,
}

impl BackArc {
    pub fn new(from: &str, to: &str) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn id(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

/// A controllable diagram: labeled arcs are fired by symbols, back arcs fire
/// when symbols stop arriving.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisDiagram {
    pub id: String,
    pub states: Vec<String>,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub alphabet: BTreeSet<String>,
    pub labeled_arcs: Vec<LabeledArc>,
    #[serde(default)]
    pub back_arcs: Vec<BackArc>,
}

impl HypothesisDiagram {
    /// 1-based order of a state.
    pub fn order(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state).map(|i| i + 1)
    }

    pub fn arc(&self, id: &str) -> Option<&LabeledArc> {
        self.labeled_arcs.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArcRef {
    pub diagram: String,
    pub arc: String,
}

impl ArcRef {
    pub fn new(diagram: &str, arc: &str) -> Self {
        Self {
            diagram: diagram.into(),
            arc: arc.into(),
        }
    }
}

impl fmt::Display for ArcRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.diagram, self.arc)
    }
}

/// How many arcs of a child tuple must fire in one tick to fire the parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum Threshold {
    #[default]
    All,
    AtLeast(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = String;

    fn try_from(r: ThresholdRepr) -> Result<Self, String> {
        match r {
            ThresholdRepr::Count(0) => Err("threshold must be positive".into()),
            ThresholdRepr::Count(k) => Ok(Threshold::AtLeast(k)),
            ThresholdRepr::Word(w) if w == "all" => Ok(Threshold::All),
            ThresholdRepr::Word(w) => Err(format!("threshold must be \"all\" or a positive integer, got '{w}'")),
        }
    }
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::All => ThresholdRepr::Word("all".into()),
            Threshold::AtLeast(k) => ThresholdRepr::Count(k),
        }
    }
}

impl Threshold {
    fn required(self, tuple_len: usize) -> usize {
        match self {
            Threshold::All => tuple_len,
            Threshold::AtLeast(k) => k.min(tuple_len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentLink {
    pub parent: ArcRef,
    pub children: Vec<ArcRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AfterEffectScheme {
    pub isolated_arcs: BTreeSet<ArcRef>,
    pub coupled_arcs: BTreeSet<ArcRef>,
    pub individual_symbols: BTreeSet<String>,
    pub general_symbols: BTreeSet<String>,
    #[serde(default)]
    pub parent_links: Vec<ParentLink>,
    #[serde(default)]
    pub upward_threshold: Threshold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

/// Rooted tree of subsystems; children keep declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub subsystems: Vec<Subsystem>,
}

impl Hierarchy {
    pub fn new(pairs: &[(&str, Option<&str>)]) -> Self {
        Self {
            subsystems: pairs
                .iter()
                .map(|(id, p)| Subsystem {
                    id: id.to_string(),
                    parent: p.map(str::to_string),
                })
                .collect(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.subsystems.iter().any(|s| s.id == id)
    }

    pub fn children(&self, id: &str) -> Vec<&str> {
        self.subsystems
            .iter()
            .filter(|s| s.parent.as_deref() == Some(id))
            .map(|s| s.id.as_str())
            .collect()
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.subsystems.iter().find(|s| s.id == id)?.parent.as_deref()
    }

    /// Preorder from the root(s). Subsystems on cycles are left out.
    pub fn preorder(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack: Vec<&str> = self
            .subsystems
            .iter()
            .filter(|s| s.parent.is_none())
            .map(|s| s.id.as_str())
            .rev()
            .collect();
        let mut seen = HashSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            out.push(id.to_string());
            stack.extend(self.children(id).into_iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Broadcast,
    Subsystem(String),
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Target::from(String::deserialize(d)?.as_str()))
    }
}

impl From<&str> for Target {
    fn from(s: &str) -> Self {
        if s == "*" {
            Target::Broadcast
        } else {
            Target::Subsystem(s.to_string())
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Broadcast => f.write_str("*"),
            Target::Subsystem(s) => f.write_str(s),
        }
    }
}

/// One entry of the time diagram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub tick: u64,
    pub target: Target,
    pub symbol: String,
}

impl Delivery {
    pub fn new(tick: u64, target: &str, symbol: &str) -> Self {
        Self {
            tick,
            target: Target::from(target),
            symbol: symbol.into(),
        }
    }
}

fn default_timeout() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub diagrams: Vec<HypothesisDiagram>,
    pub hierarchy: Hierarchy,
    /// Subsystem id to diagram id.
    pub assignment: BTreeMap<String, String>,
    pub time_diagram: Vec<Delivery>,
    pub after_effect: AfterEffectScheme,
    #[serde(default = "default_timeout")]
    pub backstep_timeout: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

impl Scenario {
    pub fn diagram(&self, id: &str) -> Option<&HypothesisDiagram> {
        self.diagrams.iter().find(|d| d.id == id)
    }

    pub fn diagram_of(&self, subsystem: &str) -> Option<&HypothesisDiagram> {
        self.diagram(self.assignment.get(subsystem)?)
    }

    pub fn subsystem_of(&self, diagram: &str) -> Option<&str> {
        self.assignment
            .iter()
            .find(|(_, d)| d.as_str() == diagram)
            .map(|(s, _)| s.as_str())
    }

    pub fn symbol_class(&self, symbol: &str) -> Option<SymbolClass> {
        if self.after_effect.general_symbols.contains(symbol) {
            Some(SymbolClass::General)
        } else if self.after_effect.individual_symbols.contains(symbol) {
            Some(SymbolClass::Individual)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioCheck {
    pub scenario: String,
    pub findings: Vec<Finding>,
}

impl ScenarioCheck {
    pub fn pass(&self) -> bool {
        passes(&self.findings)
    }
}

fn check_diagram(d: &HypothesisDiagram, out: &mut Vec<Finding>) {
    let subject = &d.id;
    let mut seen = HashSet::new();
    for s in &d.states {
        if !seen.insert(s) {
            out.push(Finding::error("duplicate-state", subject, format!("state '{s}' is declared twice")));
        }
    }
    for s in [&d.initial, &d.final_state] {
        if d.order(s).is_none() {
            out.push(Finding::error("unknown-state", subject, format!("state '{s}' is not declared")));
        }
    }
    let mut ids = HashSet::new();
    let mut by_source: HashSet<(&str, &str)> = HashSet::new();
    let mut labeled: HashSet<(&str, &str)> = HashSet::new();
    for a in &d.labeled_arcs {
        if !ids.insert(a.id.as_str()) {
            out.push(Finding::error("duplicate-arc", subject, format!("arc id '{}' is used twice", a.id)));
        }
        match (d.order(&a.from), d.order(&a.to)) {
            (Some(f), Some(t)) if f >= t => out.push(Finding::error(
                "labeled-arc-order",
                subject,
                format!("arc '{}' ({} -> {}) does not go up the order", a.id, a.from, a.to),
            )),
            (Some(_), Some(_)) => {}
            _ => out.push(Finding::error(
                "unknown-state",
                subject,
                format!("arc '{}' references an undeclared state", a.id),
            )),
        }
        if !d.alphabet.contains(&a.symbol) {
            out.push(Finding::error(
                "unknown-symbol",
                subject,
                format!("arc '{}' is labeled by '{}' outside the alphabet", a.id, a.symbol),
            ));
        }
        if !by_source.insert((a.from.as_str(), a.symbol.as_str())) {
            out.push(Finding::error(
                "nondeterministic-symbol",
                subject,
                format!("two arcs leave '{}' on symbol '{}'", a.from, a.symbol),
            ));
        }
        labeled.insert((a.from.as_str(), a.to.as_str()));
    }
    for b in &d.back_arcs {
        match (d.order(&b.from), d.order(&b.to)) {
            (Some(f), Some(t)) if f <= t => out.push(Finding::error(
                "back-arc-order",
                subject,
                format!("back arc {} does not go down the order", b.id()),
            )),
            (Some(_), Some(_)) => {}
            _ => out.push(Finding::error(
                "unknown-state",
                subject,
                format!("back arc {} references an undeclared state", b.id()),
            )),
        }
        if labeled.contains(&(b.from.as_str(), b.to.as_str())) {
            out.push(Finding::error(
                "arc-overlap",
                subject,
                format!("{} is both a labeled and a back arc", b.id()),
            ));
        }
    }
    for x in &d.alphabet {
        if !d.labeled_arcs.iter().any(|a| &a.symbol == x) {
            out.push(Finding::error("unused-symbol", subject, format!("symbol '{x}' labels no arc")));
        }
    }
}

fn reachable(d: &HypothesisDiagram) -> HashSet<&str> {
    let mut seen = HashSet::from([d.initial.as_str()]);
    let mut stack = vec![d.initial.as_str()];
    while let Some(s) = stack.pop() {
        let next = d
            .labeled_arcs
            .iter()
            .filter(|a| a.from == s)
            .map(|a| a.to.as_str())
            .chain(d.back_arcs.iter().filter(|b| b.from == s).map(|b| b.to.as_str()));
        for t in next {
            if seen.insert(t) {
                stack.push(t);
            }
        }
    }
    seen
}

fn check_hierarchy(h: &Hierarchy, out: &mut Vec<Finding>) {
    let mut ids = HashSet::new();
    for s in &h.subsystems {
        if !ids.insert(s.id.as_str()) {
            out.push(Finding::error("duplicate-subsystem", &s.id, "subsystem id is declared twice"));
        }
        if let Some(p) = &s.parent {
            if !h.contains(p) {
                out.push(Finding::error("unknown-parent", &s.id, format!("parent '{p}' is not declared")));
            }
        }
    }
    let roots = h.subsystems.iter().filter(|s| s.parent.is_none()).count();
    if roots != 1 {
        out.push(Finding::error("root-count", "hierarchy", format!("expected one root, found {roots}")));
    }
    let reached: HashSet<String> = h.preorder().into_iter().collect();
    for s in &h.subsystems {
        if !reached.contains(&s.id) && s.parent.as_deref().is_some_and(|p| h.contains(p)) {
            out.push(Finding::error("hierarchy-cycle", &s.id, "subsystem is not reachable from the root"));
        }
    }
}

/// Checks every structural invariant of the scenario and reports all
/// violations.
pub fn validate_scenario(sc: &Scenario) -> ScenarioCheck {
    let mut f = Vec::new();
    let mut ids = HashSet::new();
    for d in &sc.diagrams {
        if !ids.insert(d.id.as_str()) {
            f.push(Finding::error("duplicate-diagram", &d.id, "diagram id is declared twice"));
        }
        check_diagram(d, &mut f);
    }
    check_hierarchy(&sc.hierarchy, &mut f);
    if sc.backstep_timeout == 0 {
        f.push(Finding::error("bad-timeout", &sc.id, "backstep timeout must be at least one tick"));
    }

    // Assignment.
    for s in &sc.hierarchy.subsystems {
        if !sc.assignment.contains_key(&s.id) {
            f.push(Finding::error("unassigned-subsystem", &s.id, "subsystem has no diagram"));
        }
    }
    let mut used: BTreeMap<&str, &str> = BTreeMap::new();
    for (s, d) in &sc.assignment {
        if !sc.hierarchy.contains(s) {
            f.push(Finding::error("unknown-subsystem", s, "assigned subsystem is not in the hierarchy"));
        }
        if sc.diagram(d).is_none() {
            f.push(Finding::error("unknown-diagram", s, format!("diagram '{d}' is not declared")));
        }
        if let Some(other) = used.insert(d, s) {
            f.push(Finding::error(
                "shared-diagram",
                d,
                format!("diagram is assigned to both '{other}' and '{s}'"),
            ));
        }
    }

    // Time diagram.
    for (i, c) in sc.time_diagram.iter().enumerate() {
        let subject = format!("time_diagram[{i}]");
        match &c.target {
            Target::Broadcast => {
                if !sc.diagrams.iter().any(|d| d.alphabet.contains(&c.symbol)) {
                    f.push(Finding::error(
                        "symbol-not-in-alphabet",
                        subject,
                        format!("broadcast symbol '{}' is in no alphabet", c.symbol),
                    ));
                }
            }
            Target::Subsystem(t) => match sc.diagram_of(t) {
                None if !sc.hierarchy.contains(t) => {
                    f.push(Finding::error("unknown-target", subject, format!("target '{t}' is not a subsystem")))
                }
                None => {}
                Some(d) if !d.alphabet.contains(&c.symbol) => f.push(Finding::error(
                    "symbol-not-in-alphabet",
                    subject,
                    format!("symbol '{}' is not in the alphabet of '{t}'", c.symbol),
                )),
                Some(_) => {}
            },
        }
    }

    // After-effect partitions.
    let ae = &sc.after_effect;
    let mut all_arcs = BTreeSet::new();
    for d in &sc.diagrams {
        for a in &d.labeled_arcs {
            let r = ArcRef::new(&d.id, &a.id);
            let (z, u) = (ae.isolated_arcs.contains(&r), ae.coupled_arcs.contains(&r));
            if z == u {
                let what = if z { "both isolated and coupled" } else { "neither isolated nor coupled" };
                f.push(Finding::error("arc-partition", r.to_string(), format!("arc is {what}")));
            }
            match sc.symbol_class(&a.symbol) {
                Some(SymbolClass::Individual) if u && !z => f.push(Finding::error(
                    "partition-mismatch",
                    r.to_string(),
                    format!("coupled arc is labeled by individual symbol '{}'", a.symbol),
                )),
                Some(SymbolClass::General) if z && !u => f.push(Finding::error(
                    "partition-mismatch",
                    r.to_string(),
                    format!("isolated arc is labeled by general symbol '{}'", a.symbol),
                )),
                _ => {}
            }
            all_arcs.insert(r);
        }
    }
    for r in ae.isolated_arcs.iter().chain(&ae.coupled_arcs) {
        if !all_arcs.contains(r) {
            f.push(Finding::error("unknown-arc", r.to_string(), "arc reference does not resolve"));
        }
    }
    let alphabet: BTreeSet<&String> = sc.diagrams.iter().flat_map(|d| &d.alphabet).collect();
    for x in &alphabet {
        let (i, g) = (ae.individual_symbols.contains(*x), ae.general_symbols.contains(*x));
        if i == g {
            let what = if i { "both individual and general" } else { "neither individual nor general" };
            f.push(Finding::error("symbol-partition", x.as_str(), format!("symbol is {what}")));
        }
    }
    for x in ae.individual_symbols.iter().chain(&ae.general_symbols) {
        if !alphabet.contains(x) {
            f.push(Finding::error("unknown-symbol", x, "classified symbol is in no alphabet"));
        }
    }

    // Parent links.
    let mut parents = HashSet::new();
    let mut linked_children = HashSet::new();
    for (i, link) in ae.parent_links.iter().enumerate() {
        let subject = format!("parent_links[{i}]");
        if !parents.insert(&link.parent) {
            f.push(Finding::error("duplicate-link", &subject, format!("{} has two links", link.parent)));
        }
        for r in std::iter::once(&link.parent).chain(&link.children) {
            if !ae.coupled_arcs.contains(r) {
                f.push(Finding::error("link-not-coupled", &subject, format!("{r} is not a coupled arc")));
            }
        }
        let Some(parent_sub) = sc.subsystem_of(&link.parent.diagram) else {
            f.push(Finding::error(
                "link-scope",
                &subject,
                format!("diagram '{}' is not assigned", link.parent.diagram),
            ));
            continue;
        };
        let kids = sc.hierarchy.children(parent_sub);
        let mut covered = Vec::new();
        for r in &link.children {
            linked_children.insert(r);
            match sc.subsystem_of(&r.diagram) {
                Some(s) if kids.contains(&s) => covered.push(s),
                _ => f.push(Finding::error(
                    "link-scope",
                    &subject,
                    format!("{r} does not belong to a child of '{parent_sub}'"),
                )),
            }
        }
        let distinct: BTreeSet<&str> = covered.iter().copied().collect();
        if link.children.len() != kids.len() || distinct.len() != kids.len() {
            f.push(Finding::error(
                "link-arity",
                &subject,
                format!(
                    "tuple has {} arc(s) but '{parent_sub}' has {} child subsystem(s)",
                    link.children.len(),
                    kids.len()
                ),
            ));
        }
    }

    // Reachability of coupled arcs.
    for r in &ae.coupled_arcs {
        if let Some(d) = sc.diagram(&r.diagram) {
            if let Some(a) = d.arc(&r.arc) {
                if !reachable(d).contains(a.from.as_str()) {
                    f.push(Finding::error(
                        "unreachable-coupled-arc",
                        r.to_string(),
                        format!("source '{}' is unreachable from '{}'", a.from, d.initial),
                    ));
                }
            }
        }
    }

    // General symbols delivered straight to a child arc of some link.
    let mut warned = HashSet::new();
    for c in &sc.time_diagram {
        let Target::Subsystem(t) = &c.target else { continue };
        let Some(d) = sc.diagram_of(t) else { continue };
        let double = d
            .labeled_arcs
            .iter()
            .any(|a| a.symbol == c.symbol && linked_children.contains(&ArcRef::new(&d.id, &a.id)));
        if double && warned.insert((t.clone(), c.symbol.clone())) {
            f.push(Finding::warning(
                "double-role-symbol",
                t,
                format!("general symbol '{}' is delivered directly to a linked child arc", c.symbol),
            ));
        }
    }

    ScenarioCheck {
        scenario: sc.id.clone(),
        findings: f,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolClass {
    Individual,
    General,
}

impl SymbolClass {
    pub fn name(self) -> &'static str {
        match self {
            SymbolClass::Individual => "individual",
            SymbolClass::General => "general",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// A symbol reached a subsystem and fired an arc.
    Delivery,
    /// A symbol reached a subsystem with no enabled arc.
    Ineffective,
    /// A labeled arc fired.
    Firing,
    /// A child arc of a fired parent link whose source did not match.
    Skipped,
    /// A back arc fired.
    Backstep,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Delivery => "delivery",
            EventKind::Ineffective => "ineffective",
            EventKind::Firing => "firing",
            EventKind::Skipped => "skipped",
            EventKind::Backstep => "backstep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "lowercase")]
pub enum Cause {
    /// Fired by the delivery event `delivery`.
    Direct { delivery: u64 },
    /// Fired by the parent firing `parent`.
    Downward { parent: u64 },
    /// Fired because the child firings `children` completed its tuple.
    Upward { children: Vec<u64> },
    /// Fired after the backstep timeout.
    Timeout,
}

impl Cause {
    pub fn name(&self) -> &'static str {
        match self {
            Cause::Direct { .. } => "direct",
            Cause::Downward { .. } => "downward",
            Cause::Upward { .. } => "upward",
            Cause::Timeout => "timeout",
        }
    }

    pub fn reference(&self) -> String {
        match self {
            Cause::Direct { delivery } => delivery.to_string(),
            Cause::Downward { parent } => parent.to_string(),
            Cause::Upward { children } => children.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            Cause::Timeout => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub tick: u64,
    pub kind: EventKind,
    pub subsystem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_class: Option<SymbolClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, flatten, skip_serializing_if = "Option::is_none")]
    pub cause: Option<Cause>,
}

impl Event {
    /// Whether the event moved the subsystem.
    pub fn is_transition(&self) -> bool {
        matches!(self.kind, EventKind::Firing | EventKind::Backstep)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemState {
    pub state: String,
    /// Tick the state was entered.
    pub since: u64,
    /// First tick of the current run of ticks without activity.
    pub quiet_since: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub subsystems: BTreeMap<String, SubsystemState>,
}

impl Configuration {
    /// Every subsystem in its diagram's initial state.
    pub fn initial(sc: &Scenario) -> Self {
        Self {
            subsystems: sc
                .assignment
                .iter()
                .filter_map(|(s, d)| {
                    let d = sc.diagram(d)?;
                    Some((
                        s.clone(),
                        SubsystemState {
                            state: d.initial.clone(),
                            since: 0,
                            quiet_since: 0,
                        },
                    ))
                })
                .collect(),
        }
    }

    pub fn state(&self, subsystem: &str) -> Option<&str> {
        self.subsystems.get(subsystem).map(|s| s.state.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub horizon: u64,
    pub initial: Configuration,
    /// Configuration after each tick `0..horizon`.
    pub configurations: Vec<Configuration>,
    pub events: Vec<Event>,
}

/// Indexed view of a validated scenario.
struct Plan<'a> {
    sc: &'a Scenario,
    preorder: Vec<String>,
    rank: HashMap<&'a str, usize>,
    diagram: HashMap<&'a str, &'a HypothesisDiagram>,
    subsystem_of: HashMap<&'a str, &'a str>,
    /// Link index by parent arc.
    link_of: HashMap<&'a ArcRef, usize>,
}

impl<'a> Plan<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, ScenarioError> {
        let check = validate_scenario(sc);
        if !check.pass() {
            return Err(ScenarioError::ValidationFailed {
                scenario: sc.id.clone(),
                findings: check.findings,
            });
        }
        let preorder = sc.hierarchy.preorder();
        let mut rank = HashMap::new();
        let mut diagram = HashMap::new();
        let mut subsystem_of = HashMap::new();
        for (s, d) in &sc.assignment {
            let dg = sc.diagram(d).expect("validated");
            diagram.insert(s.as_str(), dg);
            subsystem_of.insert(d.as_str(), s.as_str());
        }
        for s in &sc.hierarchy.subsystems {
            let i = preorder.iter().position(|p| *p == s.id).expect("validated");
            rank.insert(s.id.as_str(), i);
        }
        let link_of = sc
            .after_effect
            .parent_links
            .iter()
            .enumerate()
            .map(|(i, l)| (&l.parent, i))
            .collect();
        Ok(Self {
            sc,
            preorder,
            rank,
            diagram,
            subsystem_of,
            link_of,
        })
    }

    fn is_coupled(&self, diagram: &str, arc: &str) -> bool {
        self.sc.after_effect.coupled_arcs.contains(&ArcRef::new(diagram, arc))
    }

    /// Expands broadcasts and orders deliveries by target preorder, then
    /// declaration order.
    fn order_deliveries(&self, deliveries: &[(Target, String)]) -> Result<Vec<(String, String)>, ScenarioError> {
        let mut out = Vec::new();
        for (i, (target, symbol)) in deliveries.iter().enumerate() {
            match target {
                Target::Broadcast => {
                    let mut any = false;
                    for s in &self.preorder {
                        if self.diagram[s.as_str()].alphabet.contains(symbol) {
                            out.push((self.rank[s.as_str()], i, s.clone(), symbol.clone()));
                            any = true;
                        }
                    }
                    if !any {
                        return Err(ScenarioError::UnknownSymbol {
                            target: "*".into(),
                            symbol: symbol.clone(),
                        });
                    }
                }
                Target::Subsystem(s) => {
                    let d = self
                        .diagram
                        .get(s.as_str())
                        .ok_or_else(|| ScenarioError::UnknownTarget(s.clone()))?;
                    if !d.alphabet.contains(symbol) {
                        return Err(ScenarioError::UnknownSymbol {
                            target: s.clone(),
                            symbol: symbol.clone(),
                        });
                    }
                    out.push((self.rank[s.as_str()], i, s.clone(), symbol.clone()));
                }
            }
        }
        out.sort_by_key(|(r, i, _, _)| (*r, *i));
        Ok(out.into_iter().map(|(_, _, s, x)| (s, x)).collect())
    }

    fn check_config(&self, config: &Configuration) -> Result<(), ScenarioError> {
        if config.subsystems.len() != self.diagram.len() {
            return Err(ScenarioError::InvalidConfiguration(format!(
                "{} subsystems, scenario has {}",
                config.subsystems.len(),
                self.diagram.len()
            )));
        }
        for (s, st) in &config.subsystems {
            let d = self
                .diagram
                .get(s.as_str())
                .ok_or_else(|| ScenarioError::InvalidConfiguration(format!("unknown subsystem '{s}'")))?;
            if d.order(&st.state).is_none() {
                return Err(ScenarioError::InvalidConfiguration(format!(
                    "'{}' is not a state of '{s}'",
                    st.state
                )));
            }
        }
        Ok(())
    }
}

struct TickRun<'p, 'a> {
    plan: &'p Plan<'a>,
    tick: u64,
    config: Configuration,
    events: Vec<Event>,
    next_seq: u64,
    /// Labeled arcs fired this tick with the seq of their firing event.
    fired: Vec<(ArcRef, u64)>,
    active: HashSet<String>,
}

impl TickRun<'_, '_> {
    fn push(&mut self, mut e: Event) -> u64 {
        e.seq = self.next_seq;
        self.next_seq += 1;
        let seq = e.seq;
        self.events.push(e);
        seq
    }

    fn fire(&mut self, subsystem: &str, arc: &LabeledArc, cause: Cause) -> u64 {
        let class = self.plan.sc.symbol_class(&arc.symbol);
        let seq = self.push(Event {
            seq: 0,
            tick: self.tick,
            kind: EventKind::Firing,
            subsystem: subsystem.to_string(),
            symbol: Some(arc.symbol.clone()),
            symbol_class: class,
            arc: Some(arc.id.clone()),
            from: Some(arc.from.clone()),
            to: Some(arc.to.clone()),
            cause: Some(cause),
        });
        let st = self.config.subsystems.get_mut(subsystem).expect("checked");
        st.state = arc.to.clone();
        st.since = self.tick;
        let d = self.plan.diagram[subsystem];
        self.fired.push((ArcRef::new(&d.id, &arc.id), seq));
        self.active.insert(subsystem.to_string());
        seq
    }

    fn deliver(&mut self, subsystem: &str, symbol: &str) {
        let plan = self.plan;
        let d = plan.diagram[subsystem];
        let class = plan.sc.symbol_class(symbol);
        let current = self.config.subsystems[subsystem].state.clone();
        let arc = d.labeled_arcs.iter().find(|a| {
            a.from == current
                && a.symbol == symbol
                && plan.is_coupled(&d.id, &a.id) == (class == Some(SymbolClass::General))
        });
        let kind = if arc.is_some() { EventKind::Delivery } else { EventKind::Ineffective };
        let delivery = self.push(Event {
            seq: 0,
            tick: self.tick,
            kind,
            subsystem: subsystem.to_string(),
            symbol: Some(symbol.to_string()),
            symbol_class: class,
            arc: None,
            from: Some(current),
            to: None,
            cause: None,
        });
        if let Some(arc) = arc {
            let seq = self.fire(subsystem, arc, Cause::Direct { delivery });
            if class == Some(SymbolClass::General) {
                self.propagate_down(&ArcRef::new(&d.id, &arc.id), seq);
            }
        }
    }

    fn propagate_down(&mut self, parent: &ArcRef, parent_seq: u64) {
        let plan = self.plan;
        let Some(&li) = plan.link_of.get(parent) else { return };
        for child in &plan.sc.after_effect.parent_links[li].children {
            let sub = plan.subsystem_of[child.diagram.as_str()];
            let arc = plan.diagram[sub].arc(&child.arc).expect("validated");
            let current = self.config.subsystems[sub].state.clone();
            if current == arc.from {
                let seq = self.fire(sub, arc, Cause::Downward { parent: parent_seq });
                self.propagate_down(child, seq);
            } else {
                self.push(Event {
                    seq: 0,
                    tick: self.tick,
                    kind: EventKind::Skipped,
                    subsystem: sub.to_string(),
                    symbol: Some(arc.symbol.clone()),
                    symbol_class: plan.sc.symbol_class(&arc.symbol),
                    arc: Some(arc.id.clone()),
                    from: Some(current),
                    to: None,
                    cause: Some(Cause::Downward { parent: parent_seq }),
                });
            }
        }
    }

    fn propagate_up(&mut self) {
        let plan = self.plan;
        let ae = &plan.sc.after_effect;
        loop {
            let mut changed = false;
            for link in &ae.parent_links {
                if self.fired.iter().any(|(r, _)| *r == link.parent) {
                    continue;
                }
                let sub = plan.subsystem_of[link.parent.diagram.as_str()];
                let arc = plan.diagram[sub].arc(&link.parent.arc).expect("validated");
                if self.config.subsystems[sub].state != arc.from {
                    continue;
                }
                let children: Vec<u64> = link
                    .children
                    .iter()
                    .filter_map(|c| self.fired.iter().find(|(r, _)| r == c).map(|(_, s)| *s))
                    .collect();
                if children.len() >= ae.upward_threshold.required(link.children.len()) && !children.is_empty() {
                    self.fire(sub, arc, Cause::Upward { children });
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn backsteps(&mut self) {
        let plan = self.plan;
        let timeout = plan.sc.backstep_timeout;
        for sub in &plan.preorder {
            if self.active.contains(sub) {
                continue;
            }
            let d = plan.diagram[sub.as_str()];
            let st = &self.config.subsystems[sub.as_str()];
            if self.tick + 1 < st.quiet_since + timeout {
                continue;
            }
            let here = d.order(&st.state).expect("checked");
            let Some(b) = d
                .back_arcs
                .iter()
                .filter(|b| b.from == st.state)
                .min_by_key(|b| here - d.order(&b.to).expect("validated"))
            else {
                continue;
            };
            let from = st.state.clone();
            self.push(Event {
                seq: 0,
                tick: self.tick,
                kind: EventKind::Backstep,
                subsystem: sub.clone(),
                symbol: None,
                symbol_class: None,
                arc: Some(b.id()),
                from: Some(from),
                to: Some(b.to.clone()),
                cause: Some(Cause::Timeout),
            });
            let st = self.config.subsystems.get_mut(sub.as_str()).expect("checked");
            st.state = b.to.clone();
            st.since = self.tick;
            self.active.insert(sub.clone());
        }
    }

    fn finish(mut self) -> (Configuration, Vec<Event>) {
        for sub in &self.active {
            self.config.subsystems.get_mut(sub).expect("checked").quiet_since = self.tick + 1;
        }
        (self.config, self.events)
    }
}

fn step_with(
    plan: &Plan<'_>,
    config: &Configuration,
    deliveries: &[(Target, String)],
    tick: u64,
    first_seq: u64,
) -> Result<(Configuration, Vec<Event>), ScenarioError> {
    plan.check_config(config)?;
    let ordered = plan.order_deliveries(deliveries)?;
    let mut run = TickRun {
        plan,
        tick,
        config: config.clone(),
        events: Vec::new(),
        next_seq: first_seq,
        fired: Vec::new(),
        active: HashSet::new(),
    };
    for (s, x) in &ordered {
        run.deliver(s, x);
    }
    run.propagate_up();
    run.backsteps();
    Ok(run.finish())
}

/// One tick of [`run_scenario`]. Event sequence numbers start at
/// `first_seq`.
pub fn step(
    config: &Configuration,
    deliveries: &[(Target, String)],
    sc: &Scenario,
    tick: u64,
    first_seq: u64,
) -> Result<(Configuration, Vec<Event>), ScenarioError> {
    let plan = Plan::new(sc)?;
    step_with(&plan, config, deliveries, tick, first_seq)
}

/// Time-diagram entries due at `tick`, in declaration order.
pub fn deliveries_at(sc: &Scenario, tick: u64) -> Vec<(Target, String)> {
    sc.time_diagram
        .iter()
        .filter(|c| c.tick == tick)
        .map(|c| (c.target.clone(), c.symbol.clone()))
        .collect()
}

/// Runs the scenario for `horizon` ticks (`0..horizon`).
pub fn run_scenario(sc: &Scenario, horizon: u64) -> Result<Trajectory, ScenarioError> {
    let plan = Plan::new(sc)?;
    if horizon == 0 {
        return Err(ScenarioError::InvalidHorizon);
    }
    if let Some(c) = sc.time_diagram.iter().find(|c| c.tick >= horizon) {
        return Err(ScenarioError::HorizonExceeded { tick: c.tick, horizon });
    }
    let initial = Configuration::initial(sc);
    let mut config = initial.clone();
    let mut configurations = Vec::with_capacity(horizon as usize);
    let mut events = Vec::new();
    for tick in 0..horizon {
        let (next, mut ev) = step_with(&plan, &config, &deliveries_at(sc, tick), tick, events.len() as u64)?;
        events.append(&mut ev);
        configurations.push(next.clone());
        config = next;
    }
    Ok(Trajectory {
        scenario: sc.id.clone(),
        horizon,
        initial,
        configurations,
        events,
    })
}

/// Score of each (subsystem, state) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCriterion {
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EfficiencyCriterion {
    pub fn score(&self, subsystem: &str, state: &str) -> Option<f64> {
        self.scores.get(subsystem)?.get(state).copied()
    }

    /// Pairs of the scenario without a score.
    pub fn missing(&self, sc: &Scenario) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (s, d) in &sc.assignment {
            if let Some(d) = sc.diagram(d) {
                for st in &d.states {
                    if self.score(s, st).is_none() {
                        out.push((s.clone(), st.clone()));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySeries {
    pub per_subsystem: BTreeMap<String, Vec<f64>>,
    pub aggregate: Vec<f64>,
}

impl EfficiencySeries {
    pub fn final_aggregate(&self) -> Option<f64> {
        self.aggregate.last().copied()
    }
}

/// `w_s(t)` is the score of subsystem `s`'s state after tick `t`; the
/// aggregate sums over subsystems.
pub fn efficiency_process(tr: &Trajectory, crit: &EfficiencyCriterion) -> Result<EfficiencySeries, ScenarioError> {
    let mut per_subsystem: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut aggregate = Vec::with_capacity(tr.configurations.len());
    for c in &tr.configurations {
        let mut sum = 0.0;
        for (s, st) in &c.subsystems {
            let w = crit.score(s, &st.state).ok_or_else(|| ScenarioError::MissingScore {
                subsystem: s.clone(),
                state: st.state.clone(),
            })?;
            per_subsystem.entry(s.clone()).or_default().push(w);
            sum += w;
        }
        aggregate.push(sum);
    }
    Ok(EfficiencySeries {
        per_subsystem,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyIncident {
    pub subsystem: String,
    pub individual_ticks: Vec<u64>,
    pub general_ticks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub per_subsystem: BTreeMap<String, u64>,
    pub total: u64,
    /// `total / horizon`, in events per tick.
    pub frequency: f64,
}

impl Tally {
    fn new(subsystems: impl Iterator<Item = String>) -> Self {
        Self {
            per_subsystem: subsystems.map(|s| (s, 0)).collect(),
            total: 0,
            frequency: 0.0,
        }
    }

    fn add(&mut self, subsystem: &str) {
        *self.per_subsystem.entry(subsystem.to_string()).or_default() += 1;
        self.total += 1;
    }

    fn close(&mut self, horizon: u64) {
        self.frequency = self.total as f64 / horizon as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub horizon: u64,
    pub complete: bool,
    /// Subsystems that did not end in their final state.
    pub incomplete: Vec<String>,
    pub final_states: BTreeMap<String, String>,
    pub redundancy: Vec<RedundancyIncident>,
    /// Backstep firings.
    pub omitted_possibilities: Tally,
    /// Coupled-arc firings.
    pub complexness: Tally,
    /// Firings caused by downward or upward propagation.
    pub propagated: Tally,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencySeries>,
}

/// Completeness, redundancy, omitted possibilities and complexness of a run,
/// all tallied from the event log.
pub fn analyze_trajectory(
    tr: &Trajectory,
    sc: &Scenario,
    crit: Option<&EfficiencyCriterion>,
) -> Result<ScenarioReport, ScenarioError> {
    if tr.scenario != sc.id {
        return Err(ScenarioError::TrajectoryScenarioMismatch(format!(
            "trajectory of '{}', scenario '{}'",
            tr.scenario, sc.id
        )));
    }
    let subsystems: BTreeSet<&String> = sc.assignment.keys().collect();
    if tr.initial.subsystems.keys().collect::<BTreeSet<_>>() != subsystems {
        return Err(ScenarioError::TrajectoryScenarioMismatch("subsystem sets differ".into()));
    }
    if tr.configurations.len() as u64 != tr.horizon || tr.horizon == 0 {
        return Err(ScenarioError::TrajectoryScenarioMismatch(format!(
            "{} configurations for horizon {}",
            tr.configurations.len(),
            tr.horizon
        )));
    }
    let last = tr.configurations.last().expect("horizon >= 1");
    let mut final_states = BTreeMap::new();
    let mut incomplete = Vec::new();
    for s in &subsystems {
        let d = sc
            .diagram_of(s)
            .ok_or_else(|| ScenarioError::TrajectoryScenarioMismatch(format!("no diagram for '{s}'")))?;
        let state = last
            .state(s)
            .ok_or_else(|| ScenarioError::TrajectoryScenarioMismatch(format!("'{s}' missing from trajectory")))?;
        if state != d.final_state {
            incomplete.push(s.to_string());
        }
        final_states.insert(s.to_string(), state.to_string());
    }

    let names = || subsystems.iter().map(|s| s.to_string());
    let mut omitted = Tally::new(names());
    let mut complexness = Tally::new(names());
    let mut propagated = Tally::new(names());
    let mut received: BTreeMap<&str, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for e in &tr.events {
        match e.kind {
            EventKind::Delivery | EventKind::Ineffective => {
                let entry = received.entry(&e.subsystem).or_default();
                match e.symbol_class {
                    Some(SymbolClass::Individual) => entry.0.push(e.tick),
                    Some(SymbolClass::General) => entry.1.push(e.tick),
                    None => {}
                }
            }
            EventKind::Backstep => omitted.add(&e.subsystem),
            EventKind::Firing => {
                let d = sc.diagram_of(&e.subsystem).ok_or_else(|| {
                    ScenarioError::TrajectoryScenarioMismatch(format!("unknown subsystem '{}'", e.subsystem))
                })?;
                let arc = e.arc.as_deref().unwrap_or_default();
                if sc.after_effect.coupled_arcs.contains(&ArcRef::new(&d.id, arc)) {
                    complexness.add(&e.subsystem);
                }
                if matches!(e.cause, Some(Cause::Downward { .. } | Cause::Upward { .. })) {
                    propagated.add(&e.subsystem);
                }
            }
            EventKind::Skipped => {}
        }
    }
    for t in [&mut omitted, &mut complexness, &mut propagated] {
        t.close(tr.horizon);
    }
    let redundancy = received
        .into_iter()
        .filter(|(_, (i, g))| !i.is_empty() && !g.is_empty())
        .map(|(s, (individual_ticks, general_ticks))| RedundancyIncident {
            subsystem: s.to_string(),
            individual_ticks,
            general_ticks,
        })
        .collect();
    let efficiency = crit.map(|c| efficiency_process(tr, c)).transpose()?;
    Ok(ScenarioReport {
        scenario: sc.id.clone(),
        horizon: tr.horizon,
        complete: incomplete.is_empty(),
        incomplete,
        final_states,
        redundancy,
        omitted_possibilities: omitted,
        complexness,
        propagated,
        efficiency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    /// Position of the report in the input list.
    pub index: usize,
    pub scenario: String,
    /// 1-based; tied reports share a rank.
    pub rank: usize,
    pub complete: bool,
    pub final_efficiency: Option<f64>,
    pub backsteps: u64,
    pub redundancy_incidents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
    /// Groups of input indices that tie, each of size two or more.
    pub ties: Vec<Vec<usize>>,
}

/// Ranks reports by completeness, then final aggregate efficiency (higher
/// first), then fewer backsteps, then fewer redundancy incidents.
pub fn compare_scenarios(reports: &[ScenarioReport]) -> Result<Ranking, ScenarioError> {
    if reports.len() < 2 {
        return Err(ScenarioError::TooFewReports(reports.len()));
    }
    let subsystems = |r: &ScenarioReport| r.final_states.keys().cloned().collect::<BTreeSet<_>>();
    let first = subsystems(&reports[0]);
    if let Some(r) = reports.iter().find(|r| subsystems(r) != first) {
        return Err(ScenarioError::IncomparableReports(format!(
            "'{}' covers different subsystems than '{}'",
            r.scenario, reports[0].scenario
        )));
    }
    let with_eff = reports.iter().filter(|r| r.efficiency.is_some()).count();
    if with_eff != 0 && with_eff != reports.len() {
        return Err(ScenarioError::IncomparableReports(
            "only some reports carry an efficiency series".into(),
        ));
    }
    let mut entries: Vec<RankEntry> = reports
        .iter()
        .enumerate()
        .map(|(index, r)| RankEntry {
            index,
            scenario: r.scenario.clone(),
            rank: 0,
            complete: r.complete,
            final_efficiency: r.efficiency.as_ref().and_then(EfficiencySeries::final_aggregate),
            backsteps: r.omitted_possibilities.total,
            redundancy_incidents: r.redundancy.len(),
        })
        .collect();
    let cmp = |a: &RankEntry, b: &RankEntry| {
        b.complete
            .cmp(&a.complete)
            .then_with(|| {
                let (x, y) = (a.final_efficiency.unwrap_or(0.0), b.final_efficiency.unwrap_or(0.0));
                y.total_cmp(&x)
            })
            .then_with(|| a.backsteps.cmp(&b.backsteps))
            .then_with(|| a.redundancy_incidents.cmp(&b.redundancy_incidents))
    };
    entries.sort_by(|a, b| cmp(a, b).then_with(|| a.index.cmp(&b.index)));
    let mut ties = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let mut j = i + 1;
        while j < entries.len() && cmp(&entries[i], &entries[j]).is_eq() {
            j += 1;
        }
        for e in &mut entries[i..j] {
            e.rank = i + 1;
        }
        if j - i > 1 {
            ties.push(entries[i..j].iter().map(|e| e.index).collect());
        }
        i = j;
    }
    Ok(Ranking { entries, ties })
}

pub const EVENT_CSV_HEADER: [&str; 11] = [
    "seq",
    "tick",
    "kind",
    "subsystem",
    "symbol",
    "symbol_class",
    "arc",
    "from",
    "to",
    "cause",
    "cause_ref",
];

/// The event log as CSV, one row per event in log order.
pub fn events_to_csv(events: &[Event]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVENT_CSV_HEADER).expect("in-memory write");
    for e in events {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        w.write_record([
            e.seq.to_string(),
            e.tick.to_string(),
            e.kind.name().to_string(),
            e.subsystem.clone(),
            opt(&e.symbol),
            e.symbol_class.map(|c| c.name().to_string()).unwrap_or_default(),
            opt(&e.arc),
            opt(&e.from),
            opt(&e.to),
            e.cause.as_ref().map(|c| c.name().to_string()).unwrap_or_default(),
            e.cause.as_ref().map(Cause::reference).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// A random, valid two- or three-level scenario for test corpora.
///
/// Every diagram is a chain `S1 < ... < Sn` with optional skip arcs and back
/// arcs. Each isolated arc gets its own individual symbol and each coupled
/// arc its own general symbol. Some parent arcs are linked to one arc of
/// every child subsystem.
pub fn synthetic_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kids = rng.gen_range(2..=3);
    let mut pairs: Vec<(String, Option<String>)> = vec![("root".into(), None)];
    for k in 1..=kids {
        pairs.push((format!("c{k}"), Some("root".into())));
    }
    if rng.gen_bool(0.4) {
        pairs.push(("c1.a".into(), Some("c1".into())));
        pairs.push(("c1.b".into(), Some("c1".into())));
    }
    let hierarchy = Hierarchy {
        subsystems: pairs
            .iter()
            .map(|(id, parent)| Subsystem {
                id: id.clone(),
                parent: parent.clone(),
            })
            .collect(),
    };

    let mut diagrams = Vec::new();
    let mut assignment = BTreeMap::new();
    for (sub, _) in &pairs {
        let n = rng.gen_range(3..=5);
        let states: Vec<String> = (1..=n).map(|i| format!("S{i}")).collect();
        let mut arcs = Vec::new();
        for i in 1..n {
            arcs.push((format!("a{i}"), format!("S{i}"), format!("S{}", i + 1)));
            if i + 2 <= n && rng.gen_bool(0.3) {
                arcs.push((format!("k{i}"), format!("S{i}"), format!("S{}", i + 2)));
            }
        }
        let back_arcs = (2..=n)
            .filter(|_| rng.gen_bool(0.4))
            .map(|i| BackArc::new(&format!("S{i}"), &format!("S{}", i - 1)))
            .collect();
        let id = format!("D-{sub}");
        diagrams.push((
            sub.clone(),
            HypothesisDiagram {
                id: id.clone(),
                initial: states[0].clone(),
                final_state: states[n - 1].clone(),
                states,
                alphabet: BTreeSet::new(),
                labeled_arcs: arcs
                    .into_iter()
                    .map(|(a, f, t)| LabeledArc::new(&a, &f, &t, ""))
                    .collect(),
                back_arcs,
            },
        ));
        assignment.insert(sub.clone(), id);
    }

    // Links: parent chain arcs of every subsystem with children.
    let mut coupled = BTreeSet::new();
    let mut links = Vec::new();
    let index: HashMap<String, usize> = diagrams.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
    for (sub, _) in &pairs {
        let kids = hierarchy.children(sub);
        if kids.is_empty() {
            continue;
        }
        let pd = &diagrams[index[sub.as_str()]].1;
        let candidates: Vec<String> = pd.labeled_arcs.iter().map(|a| a.id.clone()).collect();
        for arc in candidates {
            if !rng.gen_bool(0.5) {
                continue;
            }
            let parent = ArcRef::new(&pd.id, &arc);
            let children: Vec<ArcRef> = kids
                .iter()
                .map(|k| {
                    let cd = &diagrams[index[*k]].1;
                    let a = &cd.labeled_arcs[rng.gen_range(0..cd.labeled_arcs.len())];
                    ArcRef::new(&cd.id, &a.id)
                })
                .collect();
            coupled.insert(parent.clone());
            coupled.extend(children.iter().cloned());
            links.push(ParentLink { parent, children });
        }
    }

    let mut after_effect = AfterEffectScheme {
        upward_threshold: if rng.gen_bool(0.5) {
            Threshold::All
        } else {
            Threshold::AtLeast(1)
        },
        parent_links: links,
        ..Default::default()
    };
    let mut out_diagrams = Vec::new();
    for (_, mut d) in diagrams {
        for a in &mut d.labeled_arcs {
            let r = ArcRef::new(&d.id, &a.id);
            if coupled.contains(&r) {
                a.symbol = format!("g.{}.{}", d.id, a.id);
                after_effect.general_symbols.insert(a.symbol.clone());
                after_effect.coupled_arcs.insert(r);
            } else {
                a.symbol = format!("x.{}.{}", d.id, a.id);
                after_effect.individual_symbols.insert(a.symbol.clone());
                after_effect.isolated_arcs.insert(r);
            }
            d.alphabet.insert(a.symbol.clone());
        }
        out_diagrams.push(d);
    }

    let horizon = rng.gen_range(6..=12);
    let mut time_diagram = Vec::new();
    for _ in 0..rng.gen_range(5..=15) {
        let tick = rng.gen_range(0..horizon);
        if rng.gen_bool(0.1) {
            let d = &out_diagrams[rng.gen_range(0..out_diagrams.len())];
            let syms: Vec<&String> = d.alphabet.iter().collect();
            time_diagram.push(Delivery::new(tick, "*", syms[rng.gen_range(0..syms.len())]));
        } else {
            let (sub, _) = &pairs[rng.gen_range(0..pairs.len())];
            let d = &out_diagrams[index[sub.as_str()]];
            let syms: Vec<&String> = d.alphabet.iter().collect();
            time_diagram.push(Delivery::new(tick, sub, syms[rng.gen_range(0..syms.len())]));
        }
    }
    time_diagram.sort_by_key(|c| c.tick);

    Scenario {
        id: format!("synthetic-{seed}"),
        diagrams: out_diagrams,
        hierarchy,
        assignment,
        time_diagram,
        after_effect,
        backstep_timeout: rng.gen_range(1..=3),
        horizon: Some(horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::has_code;

    fn diagram(id: &str, n: usize, arcs: &[(&str, usize, usize, &str)], back: &[(usize, usize)]) -> HypothesisDiagram {
        HypothesisDiagram {
            id: id.into(),
            states: (1..=n).map(|i| format!("S{i}")).collect(),
            initial: "S1".into(),
            final_state: format!("S{n}"),
            alphabet: arcs.iter().map(|a| a.3.to_string()).collect(),
            labeled_arcs: arcs
                .iter()
                .map(|&(a, f, t, x)| LabeledArc::new(a, &format!("S{f}"), &format!("S{t}"), x))
                .collect(),
            back_arcs: back
                .iter()
                .map(|&(f, t)| BackArc::new(&format!("S{f}"), &format!("S{t}")))
                .collect(),
        }
    }

    /// Parent P with children A and B. `g` fires P's S1->S2 and links to
    /// A's and B's first arcs (symbols `ga`, `gb`); `xa`/`xb` are isolated
    /// second arcs.
    fn two_level(deliveries: Vec<Delivery>, threshold: Threshold) -> Scenario {
        let p = diagram("DP", 2, &[("p1", 1, 2, "g")], &[]);
        let a = diagram("DA", 3, &[("a1", 1, 2, "ga"), ("a2", 2, 3, "xa")], &[(3, 2)]);
        let b = diagram("DB", 3, &[("b1", 1, 2, "gb"), ("b2", 2, 3, "xb")], &[(3, 2)]);
        Scenario {
            id: "two-level".into(),
            diagrams: vec![p, a, b],
            hierarchy: Hierarchy::new(&[("P", None), ("A", Some("P")), ("B", Some("P"))]),
            assignment: [("P", "DP"), ("A", "DA"), ("B", "DB")]
                .into_iter()
                .map(|(s, d)| (s.to_string(), d.to_string()))
                .collect(),
            time_diagram: deliveries,
            after_effect: AfterEffectScheme {
                isolated_arcs: [ArcRef::new("DA", "a2"), ArcRef::new("DB", "b2")].into(),
                coupled_arcs: [ArcRef::new("DP", "p1"), ArcRef::new("DA", "a1"), ArcRef::new("DB", "b1")].into(),
                individual_symbols: ["xa".to_string(), "xb".to_string()].into(),
                general_symbols: ["g".to_string(), "ga".to_string(), "gb".to_string()].into(),
                parent_links: vec![ParentLink {
                    parent: ArcRef::new("DP", "p1"),
                    children: vec![ArcRef::new("DA", "a1"), ArcRef::new("DB", "b1")],
                }],
                upward_threshold: threshold,
            },
            backstep_timeout: 1,
            horizon: None,
        }
    }

    fn firings(tr: &Trajectory) -> Vec<&Event> {
        tr.events.iter().filter(|e| e.is_transition()).collect()
    }

    #[test]
    fn fixture_validates() {
        let sc = two_level(vec![Delivery::new(1, "P", "g")], Threshold::All);
        let check = validate_scenario(&sc);
        assert!(check.pass(), "{:?}", check.findings);
        assert!(check.findings.is_empty());
    }

    #[test]
    fn symbol_outside_alphabet_is_listed() {
        let sc = two_level(vec![Delivery::new(1, "A", "xb")], Threshold::All);
        let check = validate_scenario(&sc);
        assert!(!check.pass());
        assert!(has_code(&check.findings, "symbol-not-in-alphabet"));
    }

    #[test]
    fn general_symbol_on_isolated_arc_is_a_partition_violation() {
        let mut sc = two_level(vec![], Threshold::All);
        sc.after_effect.individual_symbols.remove("xa");
        sc.after_effect.general_symbols.insert("xa".into());
        let check = validate_scenario(&sc);
        assert!(has_code(&check.findings, "partition-mismatch"));
    }

    #[test]
    fn structural_violations_are_all_reported() {
        let mut sc = two_level(vec![Delivery::new(0, "Q", "g")], Threshold::All);
        sc.after_effect.parent_links[0].children.pop();
        sc.diagrams[1].back_arcs.push(BackArc::new("S1", "S2"));
        sc.assignment.insert("B".into(), "DA".into());
        let check = validate_scenario(&sc);
        for code in ["unknown-target", "link-arity", "back-arc-order", "shared-diagram"] {
            assert!(has_code(&check.findings, code), "{code}: {:?}", check.findings);
        }
    }

    #[test]
    fn general_symbol_fires_parent_and_children_atomically() {
        let sc = two_level(vec![Delivery::new(1, "P", "g")], Threshold::All);
        let tr = run_scenario(&sc, 3).unwrap();
        let f = firings(&tr);
        assert_eq!(f.len(), 3);
        assert!(f.iter().all(|e| e.tick == 1));
        let parent = f[0];
        assert_eq!(parent.subsystem, "P");
        assert!(matches!(parent.cause, Some(Cause::Direct { .. })));
        for e in &f[1..] {
            assert_eq!(e.cause, Some(Cause::Downward { parent: parent.seq }));
        }
        assert_eq!(f[1].subsystem, "A");
        assert_eq!(f[2].subsystem, "B");
    }

    #[test]
    fn mismatched_child_is_skipped() {
        let sc = two_level(vec![Delivery::new(0, "A", "ga"), Delivery::new(1, "P", "g")], Threshold::AtLeast(2));
        let tr = run_scenario(&sc, 2).unwrap();
        let skipped: Vec<_> = tr.events.iter().filter(|e| e.kind == EventKind::Skipped).collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].subsystem, "A");
        assert_eq!(tr.configurations[1].state("B"), Some("S2"));
    }

    #[test]
    fn child_deliveries_complete_the_tuple_upward() {
        let sc = two_level(vec![Delivery::new(2, "A", "ga"), Delivery::new(2, "B", "gb")], Threshold::All);
        let tr = run_scenario(&sc, 3).unwrap();
        let f = firings(&tr);
        assert_eq!(f.len(), 3);
        let up = f.iter().find(|e| e.subsystem == "P").unwrap();
        assert_eq!(up.tick, 2);
        assert_eq!(up.cause, Some(Cause::Upward { children: vec![f[0].seq, f[1].seq] }));
    }

    #[test]
    fn partial_tuple_needs_lower_threshold() {
        let one = vec![Delivery::new(0, "A", "ga")];
        let tr = run_scenario(&two_level(one.clone(), Threshold::All), 1).unwrap();
        assert_eq!(firings(&tr).len(), 1);
        let tr = run_scenario(&two_level(one, Threshold::AtLeast(1)), 1).unwrap();
        assert_eq!(firings(&tr).len(), 2);
    }

    #[test]
    fn backstep_after_timeout() {
        // Hand simulation, timeout 2: tick 0 moves A to S2 then S3; ticks 1
        // and 2 are quiet, so A steps back at tick 2.
        let mut sc = two_level(vec![Delivery::new(0, "A", "ga"), Delivery::new(0, "A", "xa")], Threshold::AtLeast(2));
        sc.backstep_timeout = 2;
        let tr = run_scenario(&sc, 3).unwrap();
        let back: Vec<_> = tr.events.iter().filter(|e| e.kind == EventKind::Backstep).collect();
        assert_eq!(back.len(), 1);
        assert_eq!((back[0].tick, back[0].subsystem.as_str()), (2, "A"));
        assert_eq!(back[0].to.as_deref(), Some("S2"));
        assert_eq!(tr.configurations[1].state("A"), Some("S3"));
        assert_eq!(tr.configurations[2].state("A"), Some("S2"));
    }

    #[test]
    fn step_examples() {
        let sc = two_level(vec![], Threshold::All);
        let c0 = Configuration::initial(&sc);
        let (c1, ev) = step(&c0, &[], &sc, 0, 0).unwrap();
        assert_eq!(c1, c0);
        assert!(ev.is_empty());
        let mut sc = two_level(vec![], Threshold::All);
        sc.after_effect.parent_links.clear();
        let c = Configuration {
            subsystems: [
                ("P", "S1"),
                ("A", "S2"),
                ("B", "S1"),
            ]
            .into_iter()
            .map(|(s, st)| (s.to_string(), SubsystemState { state: st.into(), since: 0, quiet_since: 5 }))
            .collect(),
        };
        let (_, ev) = step(&c, &[(Target::from("A"), "xa".into())], &sc, 5, 0).unwrap();
        assert_eq!(ev.iter().filter(|e| e.is_transition()).count(), 1);
    }

    #[test]
    fn fold_of_step_equals_run() {
        for seed in 0..20 {
            let sc = synthetic_scenario(seed);
            let h = sc.horizon.unwrap();
            let tr = run_scenario(&sc, h).unwrap();
            let mut c = Configuration::initial(&sc);
            let mut events = Vec::new();
            for t in 0..h {
                let (next, mut ev) = step(&c, &deliveries_at(&sc, t), &sc, t, events.len() as u64).unwrap();
                assert_eq!(next, tr.configurations[t as usize]);
                events.append(&mut ev);
                c = next;
            }
            assert_eq!(events, tr.events);
        }
    }

    #[test]
    fn synthetic_scenarios_validate() {
        for seed in 0..50 {
            let sc = synthetic_scenario(seed);
            let check = validate_scenario(&sc);
            assert!(check.pass(), "seed {seed}: {:?}", check.findings);
        }
    }

    #[test]
    fn horizon_errors() {
        let sc = two_level(vec![Delivery::new(4, "P", "g")], Threshold::All);
        assert_eq!(run_scenario(&sc, 4), Err(ScenarioError::HorizonExceeded { tick: 4, horizon: 4 }));
        assert_eq!(run_scenario(&sc, 0), Err(ScenarioError::InvalidHorizon));
    }

    #[test]
    fn analysis_examples() {
        let sc = two_level(vec![Delivery::new(0, "P", "g"), Delivery::new(1, "A", "xa"), Delivery::new(1, "B", "xb")], Threshold::All);
        let tr = run_scenario(&sc, 2).unwrap();
        let r = analyze_trajectory(&tr, &sc, None).unwrap();
        assert!(r.complete);
        assert_eq!(r.omitted_possibilities.total, 0);
        assert_eq!(r.complexness.total, 3);
        assert_eq!(r.complexness.frequency, 1.5);
        assert_eq!(r.propagated.total, 2);
        assert!(r.redundancy.is_empty());
    }

    #[test]
    fn tally_frequencies_over_ten_ticks() {
        let mut sc = two_level(
            vec![Delivery::new(0, "A", "ga"), Delivery::new(1, "A", "xa"), Delivery::new(5, "B", "gb")],
            Threshold::All,
        );
        sc.backstep_timeout = 3;
        let tr = run_scenario(&sc, 10).unwrap();
        // Independent fold over the log.
        let coupled = tr
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Firing && matches!(e.arc.as_deref(), Some("a1" | "b1" | "p1")))
            .count();
        let back = tr.events.iter().filter(|e| e.kind == EventKind::Backstep).count();
        assert_eq!((coupled, back), (2, 1));
        let r = analyze_trajectory(&tr, &sc, None).unwrap();
        assert_eq!(r.complexness.frequency, 0.2);
        assert_eq!(r.omitted_possibilities.frequency, 0.1);
        assert!(!r.complete);
    }

    #[test]
    fn redundancy_lists_ticks() {
        let sc = two_level(vec![Delivery::new(0, "A", "xa"), Delivery::new(2, "A", "ga")], Threshold::AtLeast(2));
        let tr = run_scenario(&sc, 3).unwrap();
        let r = analyze_trajectory(&tr, &sc, None).unwrap();
        assert_eq!(
            r.redundancy,
            vec![RedundancyIncident { subsystem: "A".into(), individual_ticks: vec![0], general_ticks: vec![2] }]
        );
    }

    fn flat_scores(sc: &Scenario, v: f64) -> EfficiencyCriterion {
        EfficiencyCriterion {
            scores: sc
                .assignment
                .iter()
                .map(|(s, d)| (s.clone(), sc.diagram(d).unwrap().states.iter().map(|st| (st.clone(), v)).collect()))
                .collect(),
        }
    }

    #[test]
    fn efficiency_examples() {
        let sc = two_level(vec![], Threshold::All);
        let tr = run_scenario(&sc, 4).unwrap();
        let w = efficiency_process(&tr, &flat_scores(&sc, 1.0)).unwrap();
        assert_eq!(w.aggregate, vec![3.0; 4]);

        let sc = two_level(vec![Delivery::new(3, "P", "g")], Threshold::All);
        let mut crit = flat_scores(&sc, 0.0);
        crit.scores.get_mut("P").unwrap().insert("S2".into(), 5.0);
        let mut sc = sc;
        sc.after_effect.parent_links.clear();
        sc.after_effect.coupled_arcs.remove(&ArcRef::new("DA", "a1"));
        sc.after_effect.coupled_arcs.remove(&ArcRef::new("DB", "b1"));
        sc.after_effect.isolated_arcs.insert(ArcRef::new("DA", "a1"));
        sc.after_effect.isolated_arcs.insert(ArcRef::new("DB", "b1"));
        for x in ["ga", "gb"] {
            sc.after_effect.general_symbols.remove(x);
            sc.after_effect.individual_symbols.insert(x.into());
        }
        let tr = run_scenario(&sc, 5).unwrap();
        let w = efficiency_process(&tr, &crit).unwrap();
        assert_eq!(w.aggregate, vec![0.0, 0.0, 0.0, 5.0, 5.0]);

        crit.scores.get_mut("P").unwrap().remove("S1");
        assert!(matches!(efficiency_process(&tr, &crit), Err(ScenarioError::MissingScore { .. })));
    }

    fn report(complete: bool, eff: f64, backsteps: u64) -> ScenarioReport {
        let mut omitted = Tally::new(["A".to_string()].into_iter());
        omitted.total = backsteps;
        ScenarioReport {
            scenario: format!("{complete}-{eff}-{backsteps}"),
            horizon: 5,
            complete,
            incomplete: vec![],
            final_states: [("A".to_string(), "S1".to_string())].into(),
            redundancy: vec![],
            omitted_possibilities: omitted,
            complexness: Tally::new(std::iter::empty()),
            propagated: Tally::new(std::iter::empty()),
            efficiency: Some(EfficiencySeries { per_subsystem: BTreeMap::new(), aggregate: vec![eff] }),
        }
    }

    #[test]
    fn ranking_examples() {
        let r = compare_scenarios(&[report(false, 9.0, 0), report(true, 1.0, 5)]).unwrap();
        assert_eq!(r.entries[0].index, 1);
        assert!(r.ties.is_empty());

        let r = compare_scenarios(&[report(true, 1.0, 0), report(true, 1.0, 0)]).unwrap();
        assert_eq!(r.ties, vec![vec![0, 1]]);
        assert!(r.entries.iter().all(|e| e.rank == 1));

        let r = compare_scenarios(&[report(true, 2.0, 3), report(true, 2.0, 1)]).unwrap();
        assert_eq!(r.entries[0].index, 1);
        assert_eq!(r.entries[1].rank, 2);

        assert_eq!(compare_scenarios(&[report(true, 1.0, 0)]), Err(ScenarioError::TooFewReports(1)));
        let mut other = report(true, 1.0, 0);
        other.final_states = [("B".to_string(), "S1".to_string())].into();
        assert!(matches!(
            compare_scenarios(&[report(true, 1.0, 0), other]),
            Err(ScenarioError::IncomparableReports(_))
        ));
    }

    #[test]
    fn threshold_serde() {
        assert_eq!(serde_json::to_string(&Threshold::All).unwrap(), "\"all\"");
        assert_eq!(serde_json::from_str::<Threshold>("2").unwrap(), Threshold::AtLeast(2));
        assert!(serde_json::from_str::<Threshold>("0").is_err());
        assert!(serde_json::from_str::<Threshold>("\"most\"").is_err());
    }

    #[test]
    fn csv_has_one_row_per_event() {
        let sc = two_level(vec![Delivery::new(1, "P", "g")], Threshold::All);
        let tr = run_scenario(&sc, 3).unwrap();
        let text = events_to_csv(&tr.events);
        assert_eq!(text.lines().count(), tr.events.len() + 1);
        assert!(text.starts_with("seq,tick,kind,subsystem"));
    }
}
