//! Qualitative dynamics of parameter series.
//!
//! [`estimate_state`] is the per-tick estimator: the next dynamics state is a
//! function of the previous state and the last two observed values only.
//! [`classify_series`] summarizes a whole window (monotonicity, critical
//! points, inflexions, observed bounds, exact period) and
//! [`parallel_profile`] lays several parameters side by side on a common
//! tick grid.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("values {0} and {1} are not comparable")]
    IncomparableValues(f64, f64),
    #[error("tolerance must be a finite non-negative number, got {0}")]
    InvalidEpsilon(f64),
    #[error("series '{parameter}' has {len} values, at least {needed} required")]
    SeriesTooShort {
        parameter: String,
        len: usize,
        needed: usize,
    },
    #[error("series '{parameter}': {message}")]
    InvalidSeries { parameter: String, message: String },
    #[error("series '{parameter}' has no tick inside {start}..={end}")]
    EmptyOverlap {
        parameter: String,
        start: i64,
        end: i64,
    },
    #[error("interval {start}..={end} is empty")]
    InvalidInterval { start: i64, end: i64 },
    #[error("unknown dynamics kind '{0}'")]
    UnknownKind(String),
}

/// Qualitative kind of the current process of a parameter.
///
/// The declaration order is the ordinal order used by rule-matrix formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DynamicsKind {
    Unknown,
    Decline,
    TurnMin,
    Steady,
    TurnMax,
    Growth,
    CycleSuspect,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 7] = [
        DynamicsKind::Unknown,
        DynamicsKind::Decline,
        DynamicsKind::TurnMin,
        DynamicsKind::Steady,
        DynamicsKind::TurnMax,
        DynamicsKind::Growth,
        DynamicsKind::CycleSuspect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DynamicsKind::Unknown => "Unknown",
            DynamicsKind::Decline => "Decline",
            DynamicsKind::TurnMin => "TurnMin",
            DynamicsKind::Steady => "Steady",
            DynamicsKind::TurnMax => "TurnMax",
            DynamicsKind::Growth => "Growth",
            DynamicsKind::CycleSuspect => "CycleSuspect",
        }
    }

    pub fn rank(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsKind {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DynamicsError::UnknownKind(s.to_string()))
    }
}

/// Direction of the last observed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    None,
    Up,
    Flat,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DynamicsState {
    pub kind: DynamicsKind,
    /// Ticks the kind has persisted; 0 only for `Unknown`.
    pub streak: u32,
    /// Direction of the step that produced this state. Needed because
    /// `CycleSuspect` alone does not say which way the series last moved.
    pub step: Step,
}

impl Default for DynamicsState {
    fn default() -> Self {
        Self::unknown()
    }
}

impl DynamicsState {
    pub const fn unknown() -> Self {
        Self {
            kind: DynamicsKind::Unknown,
            streak: 0,
            step: Step::None,
        }
    }

    /// Builds a state whose step direction follows from its kind.
    ///
    /// `CycleSuspect` is taken as an upward step; use
    /// [`DynamicsState::cycle_suspect`] to choose the direction.
    pub fn new(kind: DynamicsKind, streak: u32) -> Self {
        let step = match kind {
            DynamicsKind::Unknown => Step::None,
            DynamicsKind::Growth | DynamicsKind::TurnMin | DynamicsKind::CycleSuspect => Step::Up,
            DynamicsKind::Decline | DynamicsKind::TurnMax => Step::Down,
            DynamicsKind::Steady => Step::Flat,
        };
        Self { kind, streak, step }
    }

    pub fn cycle_suspect(streak: u32, step: Step) -> Self {
        Self {
            kind: DynamicsKind::CycleSuspect,
            streak,
            step,
        }
    }

    fn is_reversal(&self) -> bool {
        matches!(
            self.kind,
            DynamicsKind::TurnMin | DynamicsKind::TurnMax | DynamicsKind::CycleSuspect
        )
    }
}

impl fmt::Display for DynamicsState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·{}", self.kind, self.streak)
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), DynamicsError> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidEpsilon(epsilon))
    }
}

fn step_of(x_prev: f64, x_curr: f64, epsilon: f64) -> Step {
    let d = x_curr - x_prev;
    if d > epsilon {
        Step::Up
    } else if d < -epsilon {
        Step::Down
    } else {
        Step::Flat
    }
}

/// One estimator step.
///
/// Rules, with the step classified as up/down/flat under `epsilon`:
/// - flat: `Steady`, streak extended when already steady;
/// - a step reversing the previous direction: `TurnMin` (down then up) or
///   `TurnMax` (up then down); a reversal right after another reversal is a
///   zig-zag and yields `CycleSuspect`, whose streak counts consecutive
///   reversals;
/// - otherwise `Growth`/`Decline`, streak extended when the kind repeats.
pub fn estimate_state(
    prev: DynamicsState,
    x_prev: f64,
    x_curr: f64,
    epsilon: f64,
) -> Result<DynamicsState, DynamicsError> {
    if x_prev.is_nan() || x_curr.is_nan() {
        return Err(DynamicsError::IncomparableValues(x_prev, x_curr));
    }
    check_epsilon(epsilon)?;
    let extend = |kind: DynamicsKind| {
        if prev.kind == kind {
            prev.streak.saturating_add(1)
        } else {
            1
        }
    };
    let step = step_of(x_prev, x_curr, epsilon);
    let next = match step {
        Step::Flat => DynamicsState::new(DynamicsKind::Steady, extend(DynamicsKind::Steady)),
        Step::Up | Step::Down => {
            let opposite = if step == Step::Up { Step::Down } else { Step::Up };
            if prev.step == opposite {
                if prev.is_reversal() {
                    DynamicsState::cycle_suspect(extend(DynamicsKind::CycleSuspect), step)
                } else if step == Step::Up {
                    DynamicsState::new(DynamicsKind::TurnMin, 1)
                } else {
                    DynamicsState::new(DynamicsKind::TurnMax, 1)
                }
            } else if step == Step::Up {
                DynamicsState::new(DynamicsKind::Growth, extend(DynamicsKind::Growth))
            } else {
                DynamicsState::new(DynamicsKind::Decline, extend(DynamicsKind::Decline))
            }
        }
        Step::None => unreachable!(),
    };
    Ok(next)
}

/// Folds [`estimate_state`] over `values`. The first entry is always
/// `Unknown` (nothing to compare against yet).
pub fn fold_states(values: &[f64], epsilon: f64) -> Result<Vec<DynamicsState>, DynamicsError> {
    check_epsilon(epsilon)?;
    let mut out = Vec::with_capacity(values.len());
    let mut state = DynamicsState::unknown();
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            state = estimate_state(state, values[i - 1], v, epsilon)?;
        } else if v.is_nan() {
            return Err(DynamicsError::IncomparableValues(v, v));
        }
        out.push(state);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSeries {
    pub parameter: String,
    pub ticks: Vec<i64>,
    pub values: Vec<f64>,
}

impl ParameterSeries {
    pub fn new(
        parameter: impl Into<String>,
        ticks: Vec<i64>,
        values: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        let parameter = parameter.into();
        let invalid = |message: &str| DynamicsError::InvalidSeries {
            parameter: parameter.clone(),
            message: message.to_string(),
        };
        if ticks.len() != values.len() {
            return Err(invalid("ticks and values differ in length"));
        }
        if ticks.is_empty() {
            return Err(invalid("series is empty"));
        }
        if ticks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("ticks are not strictly increasing"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("series contains NaN"));
        }
        Ok(Self {
            parameter,
            ticks,
            values,
        })
    }

    /// Series on consecutive ticks starting at 0.
    pub fn from_values(parameter: impl Into<String>, values: Vec<f64>) -> Result<Self, DynamicsError> {
        let ticks = (0..values.len() as i64).collect();
        Self::new(parameter, ticks, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotone {
    Increasing,
    Decreasing,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Index into the series.
    pub index: usize,
    pub kind: Extremum,
}

/// Whole-window trend summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendClass {
    pub monotone: Monotone,
    pub critical_points: Vec<CriticalPoint>,
    /// Always true for a finite window; `min`/`max` are the observed bounds,
    /// not a proof that the underlying process is bounded.
    pub bounded: bool,
    pub min: f64,
    pub max: f64,
    pub inflexion_points: Vec<usize>,
    /// Smallest exact period (in samples) under the tolerance, if any.
    pub period: Option<usize>,
    /// Qualitative one-step-ahead forecast: the last estimator state repeated.
    pub forecast: DynamicsState,
}

impl TrendClass {
    pub fn critical_count(&self) -> usize {
        self.critical_points.len()
    }

    pub fn has_inflexion(&self) -> bool {
        !self.inflexion_points.is_empty()
    }
}

fn sign(d: f64, epsilon: f64) -> i8 {
    if d > epsilon {
        1
    } else if d < -epsilon {
        -1
    } else {
        0
    }
}

/// Positions where the non-zero entries of `signs` change sign. For each
/// change the reported position is `offset + index of the first entry after
/// the last non-zero entry of the old sign`, paired with the new sign.
fn sign_changes(signs: &[i8], offset: usize) -> Vec<(usize, i8)> {
    let mut out = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, &s) in signs.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if let Some((j, prev)) = last {
            if prev != s {
                out.push((j + 1 + offset, s));
            }
        }
        last = Some((i, s));
    }
    out
}

/// Finds the minimal period `p` in `2..=n/2` with `|x[t] - x[t-p]| <= epsilon`
/// for every valid `t`. Series that are flat under the tolerance have no
/// period.
pub fn find_period(values: &[f64], epsilon: f64) -> Option<usize> {
    let n = values.len();
    let flat = values.windows(2).all(|w| (w[1] - w[0]).abs() <= epsilon);
    if flat {
        return None;
    }
    (2..=n / 2).find(|&p| (p..n).all(|t| (values[t] - values[t - p]).abs() <= epsilon))
}

pub fn classify_series(series: &ParameterSeries, epsilon: f64) -> Result<TrendClass, DynamicsError> {
    check_epsilon(epsilon)?;
    let x = &series.values;
    if x.len() < 2 {
        return Err(DynamicsError::SeriesTooShort {
            parameter: series.parameter.clone(),
            len: x.len(),
            needed: 2,
        });
    }
    let first: Vec<i8> = x.windows(2).map(|w| sign(w[1] - w[0], epsilon)).collect();
    let has_up = first.contains(&1);
    let has_down = first.contains(&-1);
    let monotone = match (has_up, has_down) {
        (true, false) => Monotone::Increasing,
        (false, true) => Monotone::Decreasing,
        _ => Monotone::None,
    };
    // A change to a negative slope marks a maximum.
    let critical_points = sign_changes(&first, 0)
        .into_iter()
        .map(|(index, s)| CriticalPoint {
            index,
            kind: if s < 0 { Extremum::Max } else { Extremum::Min },
        })
        .collect();
    // Second difference k is centred on sample k + 1.
    let second: Vec<i8> = x
        .windows(3)
        .map(|w| sign(w[2] - 2.0 * w[1] + w[0], epsilon))
        .collect();
    let inflexion_points = sign_changes(&second, 0)
        .into_iter()
        .map(|(i, _)| i + 1)
        .collect();
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let period = if x.len() >= 3 { find_period(x, epsilon) } else { None };
    let forecast = *fold_states(x, epsilon)?.last().unwrap();
    Ok(TrendClass {
        monotone,
        critical_points,
        bounded: true,
        min,
        max,
        inflexion_points,
        period,
        forecast,
    })
}

/// Dynamics states of several parameters on a common tick grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelProfile {
    pub parameters: Vec<String>,
    pub start: i64,
    pub end: i64,
    /// `cells[p][t - start]`.
    pub cells: Vec<Vec<DynamicsState>>,
}

impl ParallelProfile {
    pub fn ticks(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }

    pub fn cell(&self, parameter: &str, tick: i64) -> Option<&DynamicsState> {
        let p = self.parameters.iter().position(|q| q == parameter)?;
        if tick < self.start || tick > self.end {
            return None;
        }
        self.cells[p].get((tick - self.start) as usize)
    }

    pub fn row(&self, parameter: &str) -> Option<&[DynamicsState]> {
        let p = self.parameters.iter().position(|q| q == parameter)?;
        Some(&self.cells[p])
    }
}

pub fn parallel_profile(
    series_set: &[ParameterSeries],
    start: i64,
    end: i64,
    epsilon: f64,
) -> Result<ParallelProfile, DynamicsError> {
    check_epsilon(epsilon)?;
    if start > end {
        return Err(DynamicsError::InvalidInterval { start, end });
    }
    let mut cells = Vec::with_capacity(series_set.len());
    for s in series_set {
        if !s.ticks.iter().any(|t| (start..=end).contains(t)) {
            return Err(DynamicsError::EmptyOverlap {
                parameter: s.parameter.clone(),
                start,
                end,
            });
        }
        // State after each observed tick, folding over every value up to it.
        let states = fold_states(&s.values, epsilon)?;
        let at: BTreeMap<i64, DynamicsState> = s.ticks.iter().copied().zip(states).collect();
        let row = (start..=end)
            .map(|t| at.get(&t).copied().unwrap_or_default())
            .collect();
        cells.push(row);
    }
    Ok(ParallelProfile {
        parameters: series_set.iter().map(|s| s.parameter.clone()).collect(),
        start,
        end,
        cells,
    })
}
