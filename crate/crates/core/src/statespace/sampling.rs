use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Assignment, StatespaceError};

/// Grid sampling refuses to generate more points than this.
pub const MAX_GRID_POINTS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    /// Sample integers only (ordinal ranks).
    #[serde(default)]
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SampleMode {
    /// `steps` evenly spaced values per axis, endpoints included.
    Grid { steps: usize },
    /// `count` uniform points drawn from a seeded generator.
    Random { count: usize, seed: u64 },
}

/// Where and how to sample parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub ranges: BTreeMap<String, ParamRange>,
    pub mode: SampleMode,
    /// Points always included in addition to the generated ones.
    #[serde(default)]
    pub extra_points: Vec<Assignment>,
}

impl SampleSpec {
    pub fn grid(steps: usize) -> Self {
        Self {
            ranges: BTreeMap::new(),
            mode: SampleMode::Grid { steps },
            extra_points: Vec::new(),
        }
    }

    pub fn random(count: usize, seed: u64) -> Self {
        Self {
            ranges: BTreeMap::new(),
            mode: SampleMode::Random { count, seed },
            extra_points: Vec::new(),
        }
    }

    pub fn with_range(mut self, param: &str, lo: f64, hi: f64) -> Self {
        self.ranges.insert(
            param.to_string(),
            ParamRange {
                lo,
                hi,
                integer: false,
            },
        );
        self
    }

    pub fn with_integer_range(mut self, param: &str, lo: f64, hi: f64) -> Self {
        self.ranges.insert(param.to_string(), ParamRange { lo, hi, integer: true });
        self
    }

    pub fn with_point(mut self, point: Assignment) -> Self {
        self.extra_points.push(point);
        self
    }

    /// Generates sample points over `params`. Extra points are kept only when
    /// they cover every parameter.
    pub fn points(&self, params: &BTreeSet<String>) -> Result<Vec<Assignment>, StatespaceError> {
        let mut ranges = Vec::with_capacity(params.len());
        for p in params {
            let r = self
                .ranges
                .get(p)
                .ok_or_else(|| StatespaceError::MissingParameterRange(p.clone()))?;
            ranges.push((p.as_str(), *r));
        }
        let mut out = match self.mode {
            SampleMode::Grid { steps } => grid(&ranges, steps)?,
            SampleMode::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        ranges
                            .iter()
                            .map(|(p, r)| (p.to_string(), draw(&mut rng, r)))
                            .collect()
                    })
                    .collect()
            }
        };
        out.extend(
            self.extra_points
                .iter()
                .filter(|pt| params.iter().all(|p| pt.contains_key(p)))
                .cloned(),
        );
        Ok(out)
    }
}

fn draw(rng: &mut ChaCha8Rng, r: &ParamRange) -> f64 {
    if r.hi <= r.lo {
        return r.lo;
    }
    if r.integer {
        rng.gen_range(r.lo.ceil() as i64..=r.hi.floor() as i64) as f64
    } else {
        rng.gen_range(r.lo..=r.hi)
    }
}

fn axis(r: &ParamRange, steps: usize) -> Vec<f64> {
    if r.integer {
        return (r.lo.ceil() as i64..=r.hi.floor() as i64).map(|v| v as f64).collect();
    }
    if steps <= 1 || r.hi <= r.lo {
        return vec![r.lo];
    }
    let span = r.hi - r.lo;
    (0..steps)
        .map(|i| {
            if i == steps - 1 {
                r.hi
            } else {
                r.lo + span * i as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

fn grid(ranges: &[(&str, ParamRange)], steps: usize) -> Result<Vec<Assignment>, StatespaceError> {
    let axes: Vec<Vec<f64>> = ranges.iter().map(|(_, r)| axis(r, steps)).collect();
    let total: u128 = axes.iter().map(|a| a.len() as u128).product();
    if total > MAX_GRID_POINTS as u128 {
        return Err(StatespaceError::SampleBudgetExceeded {
            requested: total,
            limit: MAX_GRID_POINTS,
        });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; axes.len()];
    loop {
        out.push(
            ranges
                .iter()
                .zip(&idx)
                .enumerate()
                .map(|(a, ((p, _), &i))| (p.to_string(), axes[a][i]))
                .collect(),
        );
        // odometer increment
        let mut a = axes.len();
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}
