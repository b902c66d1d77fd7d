//! The model file: one versioned JSON document with named sections.
//!
//! [`parse_model_str`] checks the version, deserializes the document and
//! resolves every cross-reference, collecting all reference errors in one
//! pass. [`Model::to_json`] writes the document back out; parsing that text
//! again yields an equal model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{validate_canonical, CanonicalCheck, CanonicalDiagram, ObjectDistribution, TimedArc};
use crate::composition::{OrderRelationSpec, PrescribedSequence, Prescription, TimedDiagramSet};
use crate::dynamics::ParameterSeries;
use crate::scenario::{
    validate_scenario, AfterEffectScheme, Delivery, EfficiencyCriterion, Hierarchy, HypothesisDiagram, Scenario,
    ScenarioCheck, Target,
};
use crate::statespace::{
    validate_refinements, validate_scale_disjointness_within, Classificator, DisjointnessReport, ParamKind, ParamRange,
    Predicate, Refinement, RefinementReport, RuleMatrix, SampleSpec, Scale, Schema, State, StatespaceError,
};
use crate::validation::{passes, Finding};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    #[serde(default)]
    pub parameters: Vec<ParameterDoc>,
    #[serde(default)]
    pub scales: Vec<ScaleDoc>,
    #[serde(default)]
    pub classificators: Vec<ClassificatorDoc>,
    #[serde(default)]
    pub rule_matrices: Vec<RuleMatrixDoc>,
    #[serde(default)]
    pub series: Vec<ParameterSeries>,
    #[serde(default)]
    pub canonical_diagrams: Vec<CanonicalDiagramDoc>,
    #[serde(default)]
    pub hypothesis_diagrams: Vec<HypothesisDiagram>,
    #[serde(default)]
    pub composition_requests: Vec<CompositionRequestDoc>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioDoc>,
    #[serde(default)]
    pub score_tables: Vec<ScoreTableDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKindName {
    Numeric,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDoc {
    pub name: String,
    pub kind: ParamKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    /// Sampling range `[lo, hi]` for numeric parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleStateDoc {
    pub id: String,
    pub formula: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleDoc {
    pub id: String,
    pub states: Vec<ScaleStateDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementDoc {
    pub scale: String,
    pub state: String,
    pub child: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificatorDoc {
    pub id: String,
    pub root: String,
    #[serde(default)]
    pub refinements: Vec<RefinementDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_window: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatrixDoc {
    pub id: String,
    pub parameters: Vec<String>,
    pub classes: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalDiagramDoc {
    pub id: String,
    pub scale: String,
    /// Defaults to the scale's states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    pub dev_arcs: Vec<TimedArc>,
    #[serde(default)]
    pub back_arcs: Vec<TimedArc>,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub horizon: u64,
    #[serde(default)]
    pub initial_distribution: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_distribution: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptionDoc {
    pub diagram: String,
    pub state: String,
    pub deadline: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CompositionOp {
    Consistency { prescriptions: Vec<PrescriptionDoc> },
    Sequential,
    Parallel,
    Generalize {
        selection: Vec<Vec<String>>,
        #[serde(default)]
        order: Vec<(Vec<String>, Vec<String>)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionRequestDoc {
    pub id: String,
    pub diagrams: Vec<String>,
    /// Defaults to each diagram's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<u64>>,
    #[serde(flatten)]
    pub op: CompositionOp,
}

fn default_timeout() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub id: String,
    pub hierarchy: Hierarchy,
    /// Subsystem id to hypothesis diagram id.
    pub assignment: BTreeMap<String, String>,
    #[serde(default)]
    pub time_diagram: Vec<Delivery>,
    pub after_effect: AfterEffectScheme,
    #[serde(default = "default_timeout")]
    pub backstep_timeout: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_table: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTableDoc {
    pub id: String,
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("cannot read '{path}': {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("unknown format_version {0}")]
    UnknownVersion(String),
    #[error("{location}: unresolved {expected} '{reference}'")]
    UnresolvedReference {
        location: String,
        expected: String,
        reference: String,
    },
    #[error("{location}: duplicate id '{id}'")]
    Duplicate { location: String, id: String },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

/// Every error found while reading a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelErrors(pub Vec<ModelError>);

impl fmt::Display for ModelErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ModelErrors {}

impl ModelErrors {
    pub fn unresolved(&self) -> usize {
        self.0
            .iter()
            .filter(|e| matches!(e, ModelError::UnresolvedReference { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalModel {
    pub diagram: CanonicalDiagram,
    pub initial: ObjectDistribution,
    pub goal: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedOp {
    Consistency(PrescribedSequence),
    Sequential,
    Parallel,
    Generalize {
        selection: Vec<Vec<String>>,
        order: OrderRelationSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionRequest {
    pub id: String,
    pub set: TimedDiagramSet,
    pub op: ResolvedOp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel {
    pub scenario: Scenario,
    pub scores: Option<EfficiencyCriterion>,
}

/// A fully resolved model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub document: ModelFile,
    pub schema: Schema,
    pub ranges: BTreeMap<String, ParamRange>,
    pub scales: BTreeMap<String, Scale>,
    pub classificators: BTreeMap<String, Classificator>,
    pub rule_matrices: BTreeMap<String, RuleMatrix>,
    pub series: BTreeMap<String, ParameterSeries>,
    pub canonical: BTreeMap<String, CanonicalModel>,
    pub requests: BTreeMap<String, CompositionRequest>,
    pub scenarios: BTreeMap<String, ScenarioModel>,
}

impl Model {
    /// The document as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document).expect("document serializes")
    }
}

pub fn parse_model(path: &Path) -> Result<Model, ModelErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ModelErrors(vec![ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }])
    })?;
    parse_model_str(&text)
}

fn parse_error(e: &serde_json::Error) -> ModelErrors {
    ModelErrors(vec![ModelError::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }])
}

pub fn parse_model_str(text: &str) -> Result<Model, ModelErrors> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    match value.get("format_version") {
        Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
        Some(v) => return Err(ModelErrors(vec![ModelError::UnknownVersion(v.to_string())])),
        None => return Err(ModelErrors(vec![ModelError::UnknownVersion("missing".into())])),
    }
    let document: ModelFile = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    resolve(document)
}

struct Ctx {
    errors: Vec<ModelError>,
}

impl Ctx {
    fn unresolved(&mut self, location: impl Into<String>, expected: &str, reference: &str) {
        self.errors.push(ModelError::UnresolvedReference {
            location: location.into(),
            expected: expected.into(),
            reference: reference.into(),
        });
    }

    fn invalid(&mut self, location: impl Into<String>, message: impl fmt::Display) {
        self.errors.push(ModelError::Invalid {
            location: location.into(),
            message: message.to_string(),
        });
    }

    fn unique<'a>(&mut self, section: &str, ids: impl Iterator<Item = &'a str>) {
        let mut seen = BTreeSet::new();
        for id in ids {
            if !seen.insert(id) {
                self.errors.push(ModelError::Duplicate {
                    location: section.into(),
                    id: id.into(),
                });
            }
        }
    }

    /// Records a statespace error, splitting unknown identifiers out as
    /// unresolved references.
    fn statespace(&mut self, location: String, e: StatespaceError) {
        match e {
            StatespaceError::UnknownIdentifier { identifier, .. } => self.unresolved(location, "identifier", &identifier),
            other => self.invalid(location, other),
        }
    }
}

/// Resolves every cross-reference of a document.
pub fn resolve(document: ModelFile) -> Result<Model, ModelErrors> {
    let mut cx = Ctx { errors: Vec::new() };
    let doc = &document;

    // Parameters.
    cx.unique("parameters", doc.parameters.iter().map(|p| p.name.as_str()));
    let mut schema = Schema::new();
    let mut ranges = BTreeMap::new();
    for p in &doc.parameters {
        let loc = format!("parameters/{}", p.name);
        match (p.kind, &p.levels) {
            (ParamKindName::Numeric, None) => {
                schema.insert(p.name.clone(), ParamKind::Numeric);
                if let Some((lo, hi)) = p.range {
                    if lo > hi || !lo.is_finite() || !hi.is_finite() {
                        cx.invalid(&loc, format!("bad range [{lo}, {hi}]"));
                    } else {
                        ranges.insert(p.name.clone(), ParamRange { lo, hi, integer: false });
                    }
                }
            }
            (ParamKindName::Ordinal, Some(levels)) if !levels.is_empty() => {
                if p.range.is_some() {
                    cx.invalid(&loc, "ordinal parameters take no range");
                }
                schema.insert(p.name.clone(), ParamKind::Ordinal { levels: levels.clone() });
                ranges.insert(
                    p.name.clone(),
                    ParamRange {
                        lo: 0.0,
                        hi: (levels.len() - 1) as f64,
                        integer: true,
                    },
                );
            }
            (ParamKindName::Numeric, Some(_)) => cx.invalid(&loc, "numeric parameters take no levels"),
            (ParamKindName::Ordinal, _) => cx.invalid(&loc, "ordinal parameters need at least one level"),
        }
    }

    // Scales.
    cx.unique("scales", doc.scales.iter().map(|s| s.id.as_str()));
    let mut scales = BTreeMap::new();
    for s in &doc.scales {
        let mut preds = Vec::new();
        let mut states = Vec::new();
        let mut ok = true;
        for (i, st) in s.states.iter().enumerate() {
            match Predicate::parse(&st.id, &st.formula, &schema) {
                Ok(p) => preds.push(p),
                Err(e) => {
                    cx.statespace(format!("scales/{}/{}", s.id, st.id), e);
                    ok = false;
                }
            }
            states.push(State {
                id: st.id.clone(),
                position: i + 1,
                label: st.label.clone(),
            });
        }
        if ok {
            match Scale::new(&s.id, preds, states) {
                Ok(scale) => {
                    scales.insert(s.id.clone(), scale);
                }
                Err(e) => cx.invalid(format!("scales/{}", s.id), e),
            }
        }
    }
    let scale_ids: BTreeSet<&str> = doc.scales.iter().map(|s| s.id.as_str()).collect();

    // Classificators.
    cx.unique("classificators", doc.classificators.iter().map(|c| c.id.as_str()));
    let mut classificators = BTreeMap::new();
    for c in &doc.classificators {
        let loc = format!("classificators/{}", c.id);
        let mut ok = true;
        if !scale_ids.contains(c.root.as_str()) {
            cx.unresolved(&loc, "scale", &c.root);
            ok = false;
        }
        let mut refinements = Vec::new();
        let mut used = BTreeSet::from([c.root.clone()]);
        for r in &c.refinements {
            let sd = doc.scales.iter().find(|s| s.id == r.scale);
            match sd {
                None => {
                    cx.unresolved(&loc, "scale", &r.scale);
                    ok = false;
                }
                Some(sd) => match sd.states.iter().position(|st| st.id == r.state) {
                    Some(k) => refinements.push(Refinement {
                        scale: r.scale.clone(),
                        predicate: k + 1,
                        child: r.child.clone(),
                    }),
                    None => {
                        cx.unresolved(&loc, "state", &r.state);
                        ok = false;
                    }
                },
            }
            if !scale_ids.contains(r.child.as_str()) {
                cx.unresolved(&loc, "scale", &r.child);
                ok = false;
            }
            used.insert(r.scale.clone());
            used.insert(r.child.clone());
        }
        if !ok || used.iter().any(|u| !scales.contains_key(u)) {
            continue;
        }
        let members = used.iter().map(|u| scales[u].clone()).collect();
        match Classificator::new(&c.id, &c.root, members, refinements, c.time_window) {
            Ok(cl) => {
                classificators.insert(c.id.clone(), cl);
            }
            Err(e) => cx.invalid(&loc, e),
        }
    }

    // Series.
    let mut series = BTreeMap::new();
    cx.unique("series", doc.series.iter().map(|s| s.parameter.as_str()));
    for s in &doc.series {
        let loc = format!("series/{}", s.parameter);
        if !schema.contains(&s.parameter) {
            cx.unresolved(&loc, "parameter", &s.parameter);
        }
        match ParameterSeries::new(&s.parameter, s.ticks.clone(), s.values.clone()) {
            Ok(ps) => {
                series.insert(s.parameter.clone(), ps);
            }
            Err(e) => cx.invalid(&loc, e),
        }
    }

    // Rule matrices.
    cx.unique("rule_matrices", doc.rule_matrices.iter().map(|m| m.id.as_str()));
    let mut rule_matrices = BTreeMap::new();
    for m in &doc.rule_matrices {
        let loc = format!("rule_matrices/{}", m.id);
        let mut ok = true;
        for p in &m.parameters {
            if !schema.contains(p) {
                cx.unresolved(&loc, "parameter", p);
                ok = false;
            }
        }
        match RuleMatrix::new(&m.id, m.parameters.clone(), m.classes.clone(), &m.cells) {
            Ok(rm) if ok => {
                rule_matrices.insert(m.id.clone(), rm);
            }
            Ok(_) => {}
            Err(e) => cx.statespace(loc, e),
        }
    }

    // Canonical diagrams.
    cx.unique("canonical_diagrams", doc.canonical_diagrams.iter().map(|d| d.id.as_str()));
    let mut canonical = BTreeMap::new();
    for d in &doc.canonical_diagrams {
        let loc = format!("canonical_diagrams/{}", d.id);
        let Some(scale) = doc.scales.iter().find(|s| s.id == d.scale) else {
            cx.unresolved(&loc, "scale", &d.scale);
            continue;
        };
        let scale_states: Vec<String> = scale.states.iter().map(|s| s.id.clone()).collect();
        let states = match &d.states {
            None => scale_states,
            Some(listed) => {
                for s in listed {
                    if !scale_states.contains(s) {
                        cx.unresolved(&loc, "state", s);
                    }
                }
                if listed != &scale_states && listed.iter().all(|s| scale_states.contains(s)) {
                    cx.invalid(&loc, format!("states must match the states of scale '{}'", d.scale));
                }
                listed.clone()
            }
        };
        let before = cx.errors.len();
        let refs = d
            .dev_arcs
            .iter()
            .chain(&d.back_arcs)
            .flat_map(|a| [&a.from, &a.to])
            .chain([&d.initial, &d.final_state])
            .chain(d.initial_distribution.keys())
            .chain(d.goal_distribution.iter().flat_map(|g| g.keys()));
        for s in refs {
            if !states.contains(s) {
                cx.unresolved(&loc, "state", s);
            }
        }
        if cx.errors.len() > before {
            continue;
        }
        let diagram = CanonicalDiagram {
            id: d.id.clone(),
            scale: Some(d.scale.clone()),
            states,
            dev_arcs: d.dev_arcs.clone(),
            back_arcs: d.back_arcs.clone(),
            initial: d.initial.clone(),
            final_state: d.final_state.clone(),
            horizon: d.horizon,
        };
        let initial = ObjectDistribution::from_counts(
            diagram
                .states
                .iter()
                .filter_map(|s| d.initial_distribution.get(s).map(|&n| (s.as_str(), n))),
        );
        canonical.insert(
            d.id.clone(),
            CanonicalModel {
                diagram,
                initial,
                goal: d.goal_distribution.clone(),
            },
        );
    }

    // Composition requests.
    cx.unique("composition_requests", doc.composition_requests.iter().map(|r| r.id.as_str()));
    let mut requests = BTreeMap::new();
    for r in &doc.composition_requests {
        let loc = format!("composition_requests/{}", r.id);
        let before = cx.errors.len();
        let mut diagrams = Vec::new();
        for id in &r.diagrams {
            match canonical.get(id) {
                Some(c) => diagrams.push(c.diagram.clone()),
                None => {
                    if doc.canonical_diagrams.iter().all(|d| &d.id != id) {
                        cx.unresolved(&loc, "canonical diagram", id);
                    }
                }
            }
        }
        let find_state = |cx: &mut Ctx, pos: usize, state: &str| {
            if let Some(d) = r.diagrams.get(pos).and_then(|id| canonical.get(id)) {
                if !d.diagram.contains(state) {
                    cx.unresolved(&loc, "state", state);
                }
            }
        };
        let op = match &r.op {
            CompositionOp::Sequential => ResolvedOp::Sequential,
            CompositionOp::Parallel => ResolvedOp::Parallel,
            CompositionOp::Consistency { prescriptions } => {
                let mut steps = Vec::new();
                for p in prescriptions {
                    match r.diagrams.iter().position(|d| d == &p.diagram) {
                        Some(i) => {
                            find_state(&mut cx, i, &p.state);
                            steps.push(Prescription {
                                diagram: i,
                                state: p.state.clone(),
                                deadline: p.deadline,
                            });
                        }
                        None => cx.unresolved(&loc, "request diagram", &p.diagram),
                    }
                }
                match PrescribedSequence::new(steps) {
                    Ok(s) => ResolvedOp::Consistency(s),
                    Err(e) => {
                        cx.invalid(&loc, e);
                        continue;
                    }
                }
            }
            CompositionOp::Generalize { selection, order } => {
                for t in selection.iter().chain(order.iter().flat_map(|(a, b)| [a, b])) {
                    for (i, s) in t.iter().enumerate() {
                        find_state(&mut cx, i, s);
                    }
                }
                ResolvedOp::Generalize {
                    selection: selection.clone(),
                    order: OrderRelationSpec { pairs: order.clone() },
                }
            }
        };
        if cx.errors.len() > before {
            continue;
        }
        let intervals = r
            .intervals
            .clone()
            .unwrap_or_else(|| diagrams.iter().map(|d| d.horizon).collect());
        match TimedDiagramSet::new(diagrams, intervals) {
            Ok(set) => {
                requests.insert(r.id.clone(), CompositionRequest { id: r.id.clone(), set, op });
            }
            Err(e) => cx.invalid(&loc, e),
        }
    }

    // Hypothesis diagrams.
    cx.unique("hypothesis_diagrams", doc.hypothesis_diagrams.iter().map(|d| d.id.as_str()));
    for d in &doc.hypothesis_diagrams {
        let loc = format!("hypothesis_diagrams/{}", d.id);
        let refs = d
            .labeled_arcs
            .iter()
            .flat_map(|a| [&a.from, &a.to])
            .chain(d.back_arcs.iter().flat_map(|b| [&b.from, &b.to]))
            .chain([&d.initial, &d.final_state]);
        for s in refs {
            if !d.states.contains(s) {
                cx.unresolved(&loc, "state", s);
            }
        }
        for a in &d.labeled_arcs {
            if !d.alphabet.contains(&a.symbol) {
                cx.unresolved(&loc, "symbol", &a.symbol);
            }
        }
    }

    // Score tables and scenarios.
    cx.unique("score_tables", doc.score_tables.iter().map(|t| t.id.as_str()));
    cx.unique("scenarios", doc.scenarios.iter().map(|s| s.id.as_str()));
    let mut scenarios = BTreeMap::new();
    for s in &doc.scenarios {
        if let Some(sm) = resolve_scenario(&mut cx, doc, s) {
            scenarios.insert(s.id.clone(), sm);
        }
    }

    if !cx.errors.is_empty() {
        return Err(ModelErrors(cx.errors));
    }
    Ok(Model {
        schema,
        ranges,
        scales,
        classificators,
        rule_matrices,
        series,
        canonical,
        requests,
        scenarios,
        document,
    })
}

fn resolve_scenario(cx: &mut Ctx, doc: &ModelFile, s: &ScenarioDoc) -> Option<ScenarioModel> {
    let loc = format!("scenarios/{}", s.id);
    let before = cx.errors.len();
    let h = &s.hierarchy;
    for sub in &h.subsystems {
        if let Some(p) = &sub.parent {
            if !h.contains(p) {
                cx.unresolved(&loc, "subsystem", p);
            }
        }
    }
    let mut diagrams: Vec<HypothesisDiagram> = Vec::new();
    for (sub, d) in &s.assignment {
        if !h.contains(sub) {
            cx.unresolved(&loc, "subsystem", sub);
        }
        match doc.hypothesis_diagrams.iter().find(|x| &x.id == d) {
            Some(x) if !diagrams.iter().any(|y| y.id == x.id) => diagrams.push(x.clone()),
            Some(_) => {}
            None => cx.unresolved(&loc, "hypothesis diagram", d),
        }
    }
    let alphabet: BTreeSet<&String> = diagrams.iter().flat_map(|d| &d.alphabet).collect();
    for c in &s.time_diagram {
        match &c.target {
            Target::Broadcast => {}
            Target::Subsystem(t) if !h.contains(t) => cx.unresolved(&loc, "subsystem", t),
            Target::Subsystem(_) => {}
        }
        if !alphabet.contains(&c.symbol) {
            cx.unresolved(&loc, "symbol", &c.symbol);
        }
    }
    let ae = &s.after_effect;
    let arc_refs = ae
        .isolated_arcs
        .iter()
        .chain(&ae.coupled_arcs)
        .chain(ae.parent_links.iter().flat_map(|l| std::iter::once(&l.parent).chain(&l.children)));
    let mut seen = BTreeSet::new();
    for r in arc_refs {
        if !seen.insert(r) {
            continue;
        }
        match diagrams.iter().find(|d| d.id == r.diagram) {
            None => cx.unresolved(&loc, "scenario diagram", &r.diagram),
            Some(d) if d.arc(&r.arc).is_none() => cx.unresolved(&loc, "arc", &r.to_string()),
            Some(_) => {}
        }
    }
    for x in ae.individual_symbols.iter().chain(&ae.general_symbols) {
        if !alphabet.contains(x) {
            cx.unresolved(&loc, "symbol", x);
        }
    }
    let mut scores = None;
    if let Some(t) = &s.score_table {
        match doc.score_tables.iter().find(|x| &x.id == t) {
            None => cx.unresolved(&loc, "score table", t),
            Some(table) => {
                let tloc = format!("score_tables/{}", table.id);
                for (sub, states) in &table.scores {
                    let d = s
                        .assignment
                        .get(sub)
                        .and_then(|d| diagrams.iter().find(|x| &x.id == d));
                    match d {
                        None => cx.unresolved(&tloc, "subsystem", sub),
                        Some(d) => {
                            for st in states.keys() {
                                if !d.states.contains(st) {
                                    cx.unresolved(&tloc, "state", st);
                                }
                            }
                        }
                    }
                }
                scores = Some(EfficiencyCriterion {
                    scores: table.scores.clone(),
                });
            }
        }
    }
    if cx.errors.len() > before {
        return None;
    }
    Some(ScenarioModel {
        scenario: Scenario {
            id: s.id.clone(),
            diagrams,
            hierarchy: s.hierarchy.clone(),
            assignment: s.assignment.clone(),
            time_diagram: s.time_diagram.clone(),
            after_effect: s.after_effect.clone(),
            backstep_timeout: s.backstep_timeout,
            horizon: s.horizon,
        },
        scores,
    })
}

/// Every semantic check of a resolved model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelValidation {
    pub findings: Vec<Finding>,
    pub disjointness: Vec<DisjointnessReport>,
    pub refinements: Vec<RefinementReport>,
    pub canonical: Vec<CanonicalCheck>,
    pub scenarios: Vec<ScenarioCheck>,
}

impl ModelValidation {
    pub fn pass(&self) -> bool {
        passes(&self.findings)
    }
}

/// Samples every scale and classificator (`samples` seeded points over the
/// declared ranges) and checks every diagram and scenario.
pub fn validate_model(m: &Model, samples: usize, seed: u64) -> ModelValidation {
    let mut findings = Vec::new();
    let spec = |params: &BTreeSet<String>| -> Option<SampleSpec> {
        let mut spec = SampleSpec::random(samples, seed);
        for p in params {
            let r = m.ranges.get(p)?;
            spec.ranges.insert(p.clone(), *r);
        }
        Some(spec)
    };
    let mut regions: BTreeMap<&str, Vec<&Predicate>> = BTreeMap::new();
    for c in m.classificators.values() {
        for r in c.refinements() {
            if let (Some(parent), Some((child, _))) = (m.scales.get(&r.scale), m.scales.get_key_value(&r.child)) {
                regions.entry(child).or_default().push(&parent.predicates()[r.predicate - 1]);
            }
        }
    }
    let mut disjointness = Vec::new();
    for s in m.scales.values() {
        let region = regions.get(s.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mut params = s.parameters();
        for r in region {
            params.extend(r.parameters().iter().cloned());
        }
        let Some(sp) = spec(&params) else {
            findings.push(Finding::warning(
                "no-sampling-range",
                &s.id,
                "a parameter of this scale has no range; disjointness not sampled",
            ));
            continue;
        };
        match validate_scale_disjointness_within(s, &sp, region) {
            Ok(r) => {
                if !r.overlaps.is_empty() {
                    findings.push(Finding::error(
                        "scale-overlap",
                        &s.id,
                        format!("{} sampled point(s) satisfy several predicates", r.overlaps.len()),
                    ));
                }
                if r.uncovered > 0 {
                    findings.push(Finding::error(
                        "scale-gap",
                        &s.id,
                        format!("{} sampled point(s) satisfy no predicate", r.uncovered),
                    ));
                }
                disjointness.push(r);
            }
            Err(e) => findings.push(Finding::error("sampling", &s.id, e.to_string())),
        }
    }
    let mut refinements = Vec::new();
    for c in m.classificators.values() {
        let params: BTreeSet<String> = c.scales().flat_map(|s| s.parameters()).collect();
        let Some(sp) = spec(&params) else {
            findings.push(Finding::warning(
                "no-sampling-range",
                &c.id,
                "a parameter of this classificator has no range; refinements not sampled",
            ));
            continue;
        };
        match validate_refinements(c, &sp) {
            Ok(r) => {
                if !r.pass() {
                    findings.push(Finding::error(
                        "refinement-not-sub-predicate",
                        &c.id,
                        format!("{} sampled violation(s)", r.violations.len()),
                    ));
                }
                refinements.push(r);
            }
            Err(e) => findings.push(Finding::error("sampling", &c.id, e.to_string())),
        }
    }
    let mut canonical = Vec::new();
    for c in m.canonical.values() {
        let check = validate_canonical(&c.diagram);
        findings.extend(check.findings.iter().cloned());
        canonical.push(check);
    }
    let mut scenarios = Vec::new();
    for s in m.scenarios.values() {
        let check = validate_scenario(&s.scenario);
        findings.extend(check.findings.iter().map(|x| Finding {
            subject: format!("{}/{}", s.scenario.id, x.subject),
            ..x.clone()
        }));
        if let Some(scores) = &s.scores {
            for (sub, st) in scores.missing(&s.scenario) {
                findings.push(Finding::error(
                    "missing-score",
                    &s.scenario.id,
                    format!("no score for state '{st}' of '{sub}'"),
                ));
            }
        }
        scenarios.push(check);
    }
    ModelValidation {
        findings,
        disjointness,
        refinements,
        canonical,
        scenarios,
    }
}
