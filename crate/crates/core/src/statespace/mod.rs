//! Scales, classificators and rule matrices.
//!
//! A [`Scale`] is an ordered list of predicates with disjoint truth domains;
//! predicate `k` defines state `k`. A [`Classificator`] is a tree of scales
//! where a child scale refines one predicate of its parent. A [`RuleMatrix`]
//! classifies objects from the dynamics states of their parameters.

mod predicate;
mod sampling;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsKind, DynamicsState};

pub use predicate::{Assignment, CmpOp, Expr, Operand, ParamKind, Predicate, Schema};
pub use sampling::{ParamRange, SampleMode, SampleSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatespaceError {
    #[error("syntax error in '{expression}' at {position}: {message}")]
    Syntax {
        expression: String,
        position: usize,
        message: String,
    },
    #[error("unknown identifier '{identifier}' in '{expression}' at {position}")]
    UnknownIdentifier {
        expression: String,
        position: usize,
        identifier: String,
    },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("value '{value}' is not valid for parameter '{parameter}'")]
    BadValue { parameter: String, value: String },
    #[error("assignment does not cover parameter '{0}'")]
    MissingParameter(String),
    #[error("no predicate of scale '{scale}' holds")]
    NoMatch { scale: String },
    #[error("predicates {predicates:?} of scale '{scale}' hold simultaneously")]
    MultipleMatch { scale: String, predicates: Vec<usize> },
    #[error("no sampling range for parameter '{0}'")]
    MissingParameterRange(String),
    #[error("sampling would need {requested} points, limit is {limit}")]
    SampleBudgetExceeded { requested: u128, limit: usize },
    #[error("invalid scale '{scale}': {message}")]
    InvalidScale { scale: String, message: String },
    #[error("invalid classificator: {0}")]
    InvalidClassificator(String),
    #[error("invalid rule matrix: {0}")]
    InvalidRuleMatrix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub id: String,
    /// 1-based position within the owning scale.
    pub position: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

/// How to treat points where several predicates hold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MatchMode {
    /// Overlap is a model error.
    #[default]
    Strict,
    /// The lowest matching predicate wins.
    FirstMatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scale {
    pub id: String,
    predicates: Vec<Predicate>,
    states: Vec<State>,
}

impl Scale {
    pub fn new(
        id: impl Into<String>,
        predicates: Vec<Predicate>,
        states: Vec<State>,
    ) -> Result<Self, StatespaceError> {
        let id = id.into();
        let invalid = |message: String| StatespaceError::InvalidScale {
            scale: id.clone(),
            message,
        };
        if predicates.len() != states.len() {
            return Err(invalid(format!(
                "{} predicates but {} states",
                predicates.len(),
                states.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for (i, s) in states.iter().enumerate() {
            if s.position != i + 1 {
                return Err(invalid(format!(
                    "state '{}' has position {} but is listed at {}",
                    s.id,
                    s.position,
                    i + 1
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(invalid(format!("duplicate state id '{}'", s.id)));
            }
        }
        Ok(Self {
            id,
            predicates,
            states,
        })
    }

    /// Builds a scale from `(state id, formula)` pairs in order.
    pub fn from_formulas(
        id: impl Into<String>,
        entries: &[(&str, &str)],
        schema: &Schema,
    ) -> Result<Self, StatespaceError> {
        let mut predicates = Vec::new();
        let mut states = Vec::new();
        for (i, (state, formula)) in entries.iter().enumerate() {
            predicates.push(Predicate::parse(state, formula, schema)?);
            states.push(State {
                id: state.to_string(),
                position: i + 1,
                label: String::new(),
            });
        }
        Self::new(id, predicates, states)
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, id: &str) -> Option<&State> {
        self.states.iter().find(|s| s.id == id)
    }

    /// Union of parameters referenced by the scale's predicates.
    pub fn parameters(&self) -> BTreeSet<String> {
        self.predicates
            .iter()
            .flat_map(|p| p.parameters().iter().cloned())
            .collect()
    }

    /// 1-based indices of all predicates true at `assignment`.
    pub fn matching(&self, assignment: &Assignment) -> Result<Vec<usize>, StatespaceError> {
        let mut out = Vec::new();
        for (i, p) in self.predicates.iter().enumerate() {
            if p.eval(assignment)? {
                out.push(i + 1);
            }
        }
        Ok(out)
    }
}

/// Returns the unique state whose predicate holds.
pub fn evaluate_scale<'a>(
    scale: &'a Scale,
    assignment: &Assignment,
    mode: MatchMode,
) -> Result<&'a State, StatespaceError> {
    let hits = scale.matching(assignment)?;
    match (hits.as_slice(), mode) {
        ([], _) => Err(StatespaceError::NoMatch {
            scale: scale.id.clone(),
        }),
        ([k], _) | ([k, ..], MatchMode::FirstMatch) => Ok(&scale.states[k - 1]),
        (_, MatchMode::Strict) => Err(StatespaceError::MultipleMatch {
            scale: scale.id.clone(),
            predicates: hits,
        }),
    }
}

/// Points where two or more predicates of a scale hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub point: Assignment,
    pub predicates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointnessReport {
    pub scale: String,
    pub samples: usize,
    pub overlaps: Vec<Overlap>,
    /// Sampled points where no predicate holds.
    pub uncovered: usize,
}

impl DisjointnessReport {
    pub fn pass(&self) -> bool {
        self.overlaps.is_empty()
    }
}

pub fn validate_scale_disjointness(
    scale: &Scale,
    spec: &SampleSpec,
) -> Result<DisjointnessReport, StatespaceError> {
    validate_scale_disjointness_within(scale, spec, &[])
}

/// Like [`validate_scale_disjointness`], but a point only counts as
/// uncovered when one of `region` holds there. An empty region is the
/// whole space. Used for child scales of a refinement.
pub fn validate_scale_disjointness_within(
    scale: &Scale,
    spec: &SampleSpec,
    region: &[&Predicate],
) -> Result<DisjointnessReport, StatespaceError> {
    let mut params = scale.parameters();
    for r in region {
        params.extend(r.parameters().iter().cloned());
    }
    let points = spec.points(&params)?;
    let mut overlaps = Vec::new();
    let mut uncovered = 0;
    for point in &points {
        let hits = if scale.is_empty() {
            Vec::new()
        } else {
            scale.matching(point)?
        };
        match hits.len() {
            0 => {
                let mut inside = region.is_empty();
                for r in region {
                    if inside {
                        break;
                    }
                    inside = r.eval(point)?;
                }
                if inside {
                    uncovered += 1;
                }
            }
            1 => {}
            _ => overlaps.push(Overlap {
                point: point.clone(),
                predicates: hits,
            }),
        }
    }
    Ok(DisjointnessReport {
        scale: scale.id.clone(),
        samples: points.len(),
        overlaps,
        uncovered,
    })
}

/// A child scale refining predicate `predicate` (1-based) of scale `scale`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Refinement {
    pub scale: String,
    pub predicate: usize,
    pub child: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classificator {
    pub id: String,
    root: String,
    scales: BTreeMap<String, Scale>,
    refinements: BTreeMap<(String, usize), String>,
    /// Tick interval the classification is meant for. Annotation only.
    pub time_window: Option<(i64, i64)>,
}

impl Classificator {
    /// `scales` must contain the root and every scale named by a refinement.
    pub fn new(
        id: impl Into<String>,
        root: &str,
        scales: Vec<Scale>,
        refinements: Vec<Refinement>,
        time_window: Option<(i64, i64)>,
    ) -> Result<Self, StatespaceError> {
        let bad = |m: String| StatespaceError::InvalidClassificator(m);
        let mut by_id = BTreeMap::new();
        for s in scales {
            let sid = s.id.clone();
            if by_id.insert(sid.clone(), s).is_some() {
                return Err(bad(format!("duplicate scale '{sid}'")));
            }
        }
        if !by_id.contains_key(root) {
            return Err(bad(format!("root scale '{root}' not supplied")));
        }
        let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
        let mut map = BTreeMap::new();
        for r in &refinements {
            let parent = by_id
                .get(&r.scale)
                .ok_or_else(|| bad(format!("unknown scale '{}'", r.scale)))?;
            if !by_id.contains_key(&r.child) {
                return Err(bad(format!("unknown child scale '{}'", r.child)));
            }
            if r.predicate == 0 || r.predicate > parent.len() {
                return Err(bad(format!(
                    "scale '{}' has no predicate {}",
                    r.scale, r.predicate
                )));
            }
            if r.child == root {
                return Err(bad(format!("root scale '{root}' cannot refine another scale")));
            }
            if let Some(prev) = parent_of.insert(&r.child, &r.scale) {
                return Err(bad(format!(
                    "scale '{}' refines both '{}' and '{}'",
                    r.child, prev, r.scale
                )));
            }
            if map
                .insert((r.scale.clone(), r.predicate), r.child.clone())
                .is_some()
            {
                return Err(bad(format!(
                    "predicate {} of '{}' refined twice",
                    r.predicate, r.scale
                )));
            }
        }
        // Every scale must hang off the root through its unique parent chain.
        for sid in by_id.keys() {
            let mut cur = sid.as_str();
            let mut steps = 0;
            while cur != root {
                cur = parent_of
                    .get(cur)
                    .copied()
                    .ok_or_else(|| bad(format!("scale '{sid}' is not reachable from the root")))?;
                steps += 1;
                if steps > by_id.len() {
                    return Err(bad(format!("refinement cycle through '{sid}'")));
                }
            }
        }
        Ok(Self {
            id: id.into(),
            root: root.to_string(),
            scales: by_id,
            refinements: map,
            time_window,
        })
    }

    pub fn root(&self) -> &Scale {
        &self.scales[&self.root]
    }

    pub fn scale(&self, id: &str) -> Option<&Scale> {
        self.scales.get(id)
    }

    pub fn scales(&self) -> impl Iterator<Item = &Scale> {
        self.scales.values()
    }

    pub fn refinement(&self, scale: &str, predicate: usize) -> Option<&Scale> {
        self.refinements
            .get(&(scale.to_string(), predicate))
            .map(|c| &self.scales[c])
    }

    pub fn refinements(&self) -> impl Iterator<Item = Refinement> + '_ {
        self.refinements.iter().map(|((s, k), c)| Refinement {
            scale: s.clone(),
            predicate: *k,
            child: c.clone(),
        })
    }
}

/// One level of a hierarchical classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub scale: String,
    pub predicate: usize,
    pub state: State,
}

/// Root-to-leaf classification path.
pub fn classify_hierarchical(
    c: &Classificator,
    assignment: &Assignment,
    mode: MatchMode,
) -> Result<Vec<PathStep>, StatespaceError> {
    let mut path = Vec::new();
    let mut scale = c.root();
    loop {
        let state = evaluate_scale(scale, assignment, mode)?;
        path.push(PathStep {
            scale: scale.id.clone(),
            predicate: state.position,
            state: state.clone(),
        });
        match c.refinement(&scale.id, state.position) {
            Some(child) => scale = child,
            None => return Ok(path),
        }
    }
}

/// A sampled point where a child predicate holds but the refined parent
/// predicate does not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementViolation {
    pub scale: String,
    pub predicate: usize,
    pub child: String,
    pub child_predicate: usize,
    pub point: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub classificator: String,
    pub samples: usize,
    pub violations: Vec<RefinementViolation>,
}

impl RefinementReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the sub-predicate property of every refinement by sampling.
pub fn validate_refinements(
    c: &Classificator,
    spec: &SampleSpec,
) -> Result<RefinementReport, StatespaceError> {
    let mut violations = Vec::new();
    let mut samples = 0;
    for r in c.refinements() {
        let parent = &c.scales[&r.scale].predicates[r.predicate - 1];
        let child = &c.scales[&r.child];
        let mut params = child.parameters();
        params.extend(parent.parameters().iter().cloned());
        let points = spec.points(&params)?;
        samples += points.len();
        for point in points {
            for k in child.matching(&point)? {
                if !parent.eval(&point)? {
                    violations.push(RefinementViolation {
                        scale: r.scale.clone(),
                        predicate: r.predicate,
                        child: r.child.clone(),
                        child_predicate: k,
                        point: point.clone(),
                    });
                }
            }
        }
    }
    Ok(RefinementReport {
        classificator: c.id.clone(),
        samples,
        violations,
    })
}

/// Classification rules over dynamics states: class `J` applies when the
/// formula in cell `(I, J)` holds for the dynamics state of every row
/// parameter `I`.
///
/// Cell formulas see two names: `state` (ordinal over [`DynamicsKind`]) and
/// `streak`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatrix {
    pub id: String,
    parameters: Vec<String>,
    classes: Vec<String>,
    cells: Vec<Vec<Predicate>>,
}

impl RuleMatrix {
    pub fn vocabulary() -> Schema {
        let kinds: Vec<&str> = DynamicsKind::ALL.iter().map(|k| k.name()).collect();
        Schema::new()
            .with_ordinal("state", &kinds)
            .with_numeric("streak")
    }

    /// `cells[i][j]` is the formula for parameter `i` and class `j`.
    pub fn new(
        id: impl Into<String>,
        parameters: Vec<String>,
        classes: Vec<String>,
        cells: &[Vec<String>],
    ) -> Result<Self, StatespaceError> {
        let bad = |m: String| StatespaceError::InvalidRuleMatrix(m);
        if cells.len() != parameters.len() {
            return Err(bad(format!(
                "{} rows for {} parameters",
                cells.len(),
                parameters.len()
            )));
        }
        let unique = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !unique(&parameters) || !unique(&classes) {
            return Err(bad("duplicate parameter or class id".into()));
        }
        let vocab = Self::vocabulary();
        let mut compiled = Vec::with_capacity(cells.len());
        for (i, row) in cells.iter().enumerate() {
            if row.len() != classes.len() {
                return Err(bad(format!(
                    "row '{}' has {} cells for {} classes",
                    parameters[i],
                    row.len(),
                    classes.len()
                )));
            }
            let mut out = Vec::with_capacity(row.len());
            for (j, formula) in row.iter().enumerate() {
                let name = format!("{}/{}", parameters[i], classes[j]);
                out.push(Predicate::parse(&name, formula, &vocab)?);
            }
            compiled.push(out);
        }
        Ok(Self {
            id: id.into(),
            parameters,
            classes,
            cells: compiled,
        })
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn cell(&self, row: usize, col: usize) -> &Predicate {
        &self.cells[row][col]
    }
}

fn dynamics_assignment(state: &DynamicsState) -> Assignment {
    let mut env = Assignment::new();
    env.insert("state".into(), state.kind.rank() as f64);
    env.insert("streak".into(), state.streak as f64);
    env
}

pub fn apply_rule_matrix(
    m: &RuleMatrix,
    dyn_states: &BTreeMap<String, DynamicsState>,
) -> Result<BTreeSet<String>, StatespaceError> {
    let mut envs = Vec::with_capacity(m.parameters.len());
    for p in &m.parameters {
        let s = dyn_states
            .get(p)
            .ok_or_else(|| StatespaceError::MissingParameter(p.clone()))?;
        envs.push(dynamics_assignment(s));
    }
    let mut out = BTreeSet::new();
    'class: for (j, class) in m.classes.iter().enumerate() {
        for (i, env) in envs.iter().enumerate() {
            if !m.cells[i][j].eval(env)? {
                continue 'class;
            }
        }
        out.insert(class.clone());
    }
    Ok(out)
}
