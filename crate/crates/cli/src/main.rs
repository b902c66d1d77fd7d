//! `devdiag`: validate models, classify objects, profile series, replay
//! diagram events, check composition requests and run scenarios.
//!
//! Exit status: 0 on success, 1 on a model or validation failure, 2 on a
//! usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use devdiag_core::canonical::{intensity_report, validate_canonical, ArcKey, ArcKind, TransitionEvent};
use devdiag_core::composition::{check_consistency, compose_parallel, compose_sequential, generalize, Verdict};
use devdiag_core::dynamics::{classify_series, parallel_profile, ParameterSeries};
use devdiag_core::model::{parse_model_str, validate_model, Model, ModelError, ModelErrors, ResolvedOp};
use devdiag_core::report::{emit_report, Format, Provenance, Report, ReportKind};
use devdiag_core::scenario::{
    analyze_trajectory, compare_scenarios, events_to_csv, run_scenario, Configuration, EfficiencyCriterion, Event,
    Scenario, ScenarioReport, Trajectory,
};
use devdiag_core::statespace::{apply_rule_matrix, classify_hierarchical, evaluate_scale, Assignment, MatchMode};
use devdiag_core::validation::Finding;

#[derive(Parser)]
#[command(name = "devdiag", version, about = "Hierarchical development diagrams and scenario control")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = OutFormat::Json, global = true)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file: references, scales, refinements, diagrams, scenarios.
    Validate {
        model: PathBuf,
        /// Seed for the sampled scale checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample points per scale or classificator.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Classify one object given as `name=value,...`.
    Classify {
        model: PathBuf,
        #[arg(long)]
        object: String,
        /// Only this classificator.
        #[arg(long)]
        classificator: Option<String>,
        /// Resolve overlapping predicates to the lowest state instead of failing.
        #[arg(long)]
        first_match: bool,
    },
    /// Dynamics profile of series over an interval `a:b`.
    Profile {
        model: PathBuf,
        /// CSV with a `tick` column and one column per parameter; defaults to the model's series.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        interval: String,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Replay `tick,object,from,to,arc_kind` events on a canonical diagram.
    Replay {
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Diagram id; defaults to the first canonical diagram.
        #[arg(long)]
        diagram: Option<String>,
        /// Report window `a:b`; defaults to the whole horizon.
        #[arg(long)]
        window: Option<String>,
    },
    /// Run a composition request (consistency, sequential, parallel, generalize).
    Consist {
        model: PathBuf,
        #[arg(long)]
        request: String,
    },
    /// Run a scenario and analyze its trajectory.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        scenario: String,
        /// Ticks to run; defaults to the scenario's horizon.
        #[arg(long)]
        horizon: Option<u64>,
        /// Recorded in provenance; simulation itself uses no randomness.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the event log as CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Re-analyze a trajectory report.
    Analyze { trajectory: PathBuf },
    /// Rank two or more trajectory reports.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

/// A failure that maps to exit status 1.
struct Failure(String);

impl From<ModelErrors> for Failure {
    fn from(e: ModelErrors) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<Report, Failure>;

fn fail(e: impl std::fmt::Display) -> Failure {
    Failure(e.to_string())
}

struct Inputs {
    bytes: Vec<u8>,
    argv: Vec<String>,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let data = fs::read(path).map_err(|e| Failure(format!("cannot read '{}': {e}", path.display())))?;
        self.bytes.extend_from_slice(&(data.len() as u64).to_le_bytes());
        self.bytes.extend_from_slice(&data);
        String::from_utf8(data).map_err(|_| Failure(format!("'{}' is not UTF-8", path.display())))
    }

    fn provenance(&self, seed: Option<u64>) -> Provenance {
        Provenance {
            input_digest: hex::encode(Sha256::digest(&self.bytes)),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.argv.clone(),
        }
    }

    fn report(&self, kind: ReportKind, body: &Value, seed: Option<u64>) -> Outcome {
        Report::new(kind, body, self.provenance(seed)).map_err(fail)
    }
}

fn load_model(inputs: &mut Inputs, path: &Path) -> Result<Model, Failure> {
    let text = inputs.read(path)?;
    Ok(parse_model_str(&text)?)
}

fn range(s: &str) -> Result<(i64, i64), Failure> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Failure(format!("expected a:b, got '{s}'")))?;
    let p = |x: &str| {
        x.trim()
            .parse::<i64>()
            .map_err(|_| Failure(format!("'{x}' is not an integer tick")))
    };
    Ok((p(a)?, p(b)?))
}

fn model_error_finding(e: &ModelError) -> Finding {
    let code = match e {
        ModelError::Io { .. } => "io",
        ModelError::ParseError { .. } => "parse-error",
        ModelError::UnknownVersion(_) => "unknown-version",
        ModelError::UnresolvedReference { .. } => "unresolved-reference",
        ModelError::Duplicate { .. } => "duplicate-id",
        ModelError::Invalid { .. } => "invalid",
    };
    Finding::error(code, "model", e.to_string())
}

fn validate(inputs: &mut Inputs, path: &Path, seed: u64, samples: usize) -> Result<(Report, bool), Failure> {
    let text = inputs.read(path)?;
    let (body, ok) = match parse_model_str(&text) {
        Err(errors) => {
            let findings: Vec<Finding> = errors.0.iter().map(model_error_finding).collect();
            (json!({"status": "fail", "findings": findings}), false)
        }
        Ok(model) => {
            let v = validate_model(&model, samples, seed);
            let ok = v.pass();
            (
                json!({
                    "status": if ok { "pass" } else { "fail" },
                    "findings": v.findings,
                    "disjointness": v.disjointness,
                    "refinements": v.refinements,
                    "canonical": v.canonical,
                    "scenarios": v.scenarios,
                }),
                ok,
            )
        }
    };
    Ok((inputs.report(ReportKind::Validation, &body, Some(seed))?, ok))
}

fn classify(inputs: &mut Inputs, path: &Path, object: &str, only: Option<&str>, first_match: bool) -> Outcome {
    let model = load_model(inputs, path)?;
    let mode = if first_match { MatchMode::FirstMatch } else { MatchMode::Strict };
    let mut point = Assignment::new();
    let mut raw = BTreeMap::new();
    for part in object.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Failure(format!("expected name=value, got '{part}'")))?;
        let (k, v) = (k.trim(), v.trim());
        point.insert(k.to_string(), model.schema.encode(k, v).map_err(fail)?);
        raw.insert(k.to_string(), v.to_string());
    }
    let covered = |params: &std::collections::BTreeSet<String>| params.iter().all(|p| point.contains_key(p));
    let mut results = Vec::new();
    for c in model.classificators.values() {
        if only.is_some_and(|o| o != c.id) {
            continue;
        }
        let params = c.scales().flat_map(|s| s.parameters()).collect();
        if only.is_none() && !covered(&params) {
            continue;
        }
        let path = classify_hierarchical(c, &point, mode).map_err(fail)?;
        results.push(json!({"classificator": c.id, "path": path}));
    }
    if let Some(o) = only {
        if !model.classificators.contains_key(o) {
            return Err(Failure(format!("unknown classificator '{o}'")));
        }
    }
    let children: std::collections::BTreeSet<String> = model
        .classificators
        .values()
        .flat_map(|c| c.refinements().map(|r| r.child))
        .collect();
    let mut scales = Vec::new();
    if only.is_none() {
        for s in model.scales.values() {
            if !children.contains(&s.id) && covered(&s.parameters()) {
                let st = evaluate_scale(s, &point, mode).map_err(fail)?;
                scales.push(json!({"scale": s.id, "state": st}));
            }
        }
    }
    inputs.report(
        ReportKind::Classification,
        &json!({"object": raw, "results": results, "scales": scales}),
        None,
    )
}

fn read_series_csv(text: &str) -> Result<Vec<ParameterSeries>, Failure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(fail)?.clone();
    if headers.get(0) != Some("tick") || headers.len() < 2 {
        return Err(Failure("series CSV needs a 'tick' column followed by parameter columns".into()));
    }
    let mut cols: Vec<(Vec<i64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); headers.len() - 1];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(fail)?;
        let tick: i64 = rec[0]
            .parse()
            .map_err(|_| Failure(format!("row {}: bad tick '{}'", line + 2, &rec[0])))?;
        for (i, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(i + 1).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Failure(format!("row {}: bad value '{cell}'", line + 2)))?;
            col.0.push(tick);
            col.1.push(v);
        }
    }
    headers
        .iter()
        .skip(1)
        .zip(cols)
        .map(|(name, (ticks, values))| ParameterSeries::new(name, ticks, values).map_err(fail))
        .collect()
}

fn profile(inputs: &mut Inputs, path: &Path, series: Option<&Path>, interval: &str, eps: f64) -> Outcome {
    let model = load_model(inputs, path)?;
    let (start, end) = range(interval)?;
    let set: Vec<ParameterSeries> = match series {
        Some(p) => read_series_csv(&inputs.read(p)?)?,
        None => model.series.values().cloned().collect(),
    };
    if set.is_empty() {
        return Err(Failure("no series to profile".into()));
    }
    let prof = parallel_profile(&set, start, end, eps).map_err(fail)?;
    let mut cells = Map::new();
    let mut trends = Map::new();
    for s in &set {
        cells.insert(s.parameter.clone(), json!(prof.row(&s.parameter)));
        let (ticks, values): (Vec<i64>, Vec<f64>) = s
            .ticks
            .iter()
            .zip(&s.values)
            .filter(|(t, _)| (start..=end).contains(*t))
            .unzip();
        let window = ParameterSeries::new(&s.parameter, ticks, values).map_err(fail)?;
        let trend = classify_series(&window, eps).map_err(fail)?;
        trends.insert(s.parameter.clone(), json!(trend));
    }
    let mut classes = Map::new();
    for m in model.rule_matrices.values() {
        if !m.parameters().iter().all(|p| prof.row(p).is_some()) {
            continue;
        }
        let mut rows = Vec::new();
        for t in prof.ticks() {
            let states = m
                .parameters()
                .iter()
                .map(|p| (p.clone(), *prof.cell(p, t).expect("row present")))
                .collect();
            let hit = apply_rule_matrix(m, &states).map_err(fail)?;
            rows.push(json!({"tick": t, "classes": hit}));
        }
        classes.insert(m.id.clone(), Value::Array(rows));
    }
    let body = json!({
        "interval": [start, end],
        "epsilon": eps,
        "parameters": set.iter().map(|s| &s.parameter).collect::<Vec<_>>(),
        "cells": cells,
        "trends": trends,
        "classes": classes,
    });
    inputs.report(ReportKind::Profile, &body, None)
}

#[derive(Deserialize)]
struct EventRow {
    tick: u64,
    object: String,
    from: String,
    to: String,
    arc_kind: String,
}

fn replay(inputs: &mut Inputs, path: &Path, events: &Path, diagram: Option<&str>, window: Option<&str>) -> Outcome {
    let model = load_model(inputs, path)?;
    let cm = match diagram {
        Some(id) => model
            .canonical
            .get(id)
            .ok_or_else(|| Failure(format!("unknown canonical diagram '{id}'")))?,
        None => {
            let first = model.document.canonical_diagrams.first().map(|d| d.id.as_str());
            first
                .and_then(|id| model.canonical.get(id))
                .ok_or_else(|| Failure("model has no canonical diagram".into()))?
        }
    };
    let text = inputs.read(events)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut history = Vec::new();
    for (i, row) in rdr.deserialize::<EventRow>().enumerate() {
        let row = row.map_err(|e| Failure(format!("event row {}: {e}", i + 2)))?;
        let kind = ArcKind::parse(&row.arc_kind)
            .ok_or_else(|| Failure(format!("event row {}: unknown arc kind '{}'", i + 2, row.arc_kind)))?;
        history.push(TransitionEvent {
            tick: row.tick,
            object: row.object,
            arc: ArcKey {
                kind,
                from: row.from,
                to: row.to,
            },
        });
    }
    let (start, end) = match window {
        Some(w) => {
            let (a, b) = range(w)?;
            if a < 0 || b < 0 {
                return Err(Failure("window ticks must be non-negative".into()));
            }
            (a as u64, b as u64)
        }
        None => (0, cm.diagram.horizon),
    };
    let r = intensity_report(&cm.diagram, &cm.initial, &history, start, end, cm.goal.as_ref()).map_err(fail)?;
    inputs.report(ReportKind::Intensity, &json!(r), None)
}

fn consist(inputs: &mut Inputs, path: &Path, id: &str) -> Outcome {
    let model = load_model(inputs, path)?;
    let req = model
        .requests
        .get(id)
        .ok_or_else(|| Failure(format!("unknown composition request '{id}'")))?;
    let body = match &req.op {
        ResolvedOp::Consistency(seq) => {
            let verdict = check_consistency(&req.set, seq).map_err(fail)?;
            let label = if verdict.is_consistent() { "consistent" } else { "inconsistent" };
            let mut detail = json!(verdict);
            if let Verdict::Consistent { witness, .. } = &verdict {
                let named: Vec<Value> = witness
                    .iter()
                    .map(|f| json!({"tick": f.tick, "diagram": req.set.diagrams()[f.diagram].id, "arc": f.arc.to_string()}))
                    .collect();
                detail["witness"] = Value::Array(named);
            }
            json!({"request": id, "operation": "consistency", "verdict": label, "detail": detail, "prescriptions": seq})
        }
        ResolvedOp::Sequential => {
            let d = compose_sequential(&req.set, id).map_err(fail)?;
            let check = validate_canonical(&d);
            json!({"request": id, "operation": "sequential", "verdict": "composed", "diagram": d, "check": check})
        }
        ResolvedOp::Parallel => {
            let p = compose_parallel(&req.set).map_err(fail)?;
            json!({
                "request": id,
                "operation": "parallel",
                "verdict": "composed",
                "state_count": p.state_count(),
                "arc_count": p.arcs.len(),
                "product": p,
            })
        }
        ResolvedOp::Generalize { selection, order } => {
            let d = generalize(&req.set, id, selection, order).map_err(fail)?;
            let check = validate_canonical(&d);
            json!({"request": id, "operation": "generalize", "verdict": "composed", "diagram": d, "check": check})
        }
    };
    inputs.report(ReportKind::Consistency, &body, None)
}

fn trajectory_body(
    report: &ScenarioReport,
    tr: &Trajectory,
    sc: &Scenario,
    scores: Option<&EfficiencyCriterion>,
) -> Result<Value, Failure> {
    let mut body = serde_json::to_value(report).map_err(fail)?;
    let obj = body.as_object_mut().expect("report is an object");
    obj.insert("initial".into(), json!(tr.initial));
    obj.insert("configurations".into(), json!(tr.configurations));
    obj.insert("events".into(), json!(tr.events));
    obj.insert("scenario_definition".into(), json!(sc));
    obj.insert("scores".into(), json!(scores));
    Ok(body)
}

fn simulate(
    inputs: &mut Inputs,
    path: &Path,
    id: &str,
    horizon: Option<u64>,
    seed: Option<u64>,
    events: Option<&Path>,
) -> Outcome {
    let model = load_model(inputs, path)?;
    let sm = model
        .scenarios
        .get(id)
        .ok_or_else(|| Failure(format!("unknown scenario '{id}'")))?;
    let h = horizon
        .or(sm.scenario.horizon)
        .ok_or_else(|| Failure(format!("scenario '{id}' declares no horizon; pass --horizon")))?;
    let tr = run_scenario(&sm.scenario, h).map_err(|e| match e {
        devdiag_core::scenario::ScenarioError::ValidationFailed { findings, .. } => Failure(
            findings
                .iter()
                .map(|f| format!("{}: {}: {}", f.code, f.subject, f.message))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => fail(other),
    })?;
    let report = analyze_trajectory(&tr, &sm.scenario, sm.scores.as_ref()).map_err(fail)?;
    if let Some(p) = events {
        fs::write(p, events_to_csv(&tr.events)).map_err(|e| Failure(format!("cannot write '{}': {e}", p.display())))?;
    }
    let body = trajectory_body(&report, &tr, &sm.scenario, sm.scores.as_ref())?;
    inputs.report(ReportKind::Trajectory, &body, seed)
}

fn read_report(inputs: &mut Inputs, path: &Path) -> Result<Report, Failure> {
    let text = inputs.read(path)?;
    let r: Report = serde_json::from_str(&text).map_err(|e| Failure(format!("'{}': {e}", path.display())))?;
    r.check().map_err(fail)?;
    Ok(r)
}

fn field<T: for<'de> Deserialize<'de>>(body: &Value, key: &str) -> Result<T, Failure> {
    serde_json::from_value(body.get(key).cloned().unwrap_or(Value::Null))
        .map_err(|e| Failure(format!("trajectory report field '{key}': {e}")))
}

fn analyze(inputs: &mut Inputs, path: &Path) -> Outcome {
    let r = read_report(inputs, path)?;
    if r.kind != ReportKind::Trajectory {
        return Err(Failure(format!("expected a trajectory report, got {}", r.kind.name())));
    }
    let b = &r.body;
    let sc: Scenario = field(b, "scenario_definition")?;
    let scores: Option<EfficiencyCriterion> = field(b, "scores")?;
    let tr = Trajectory {
        scenario: field(b, "scenario")?,
        horizon: field(b, "horizon")?,
        initial: field::<Configuration>(b, "initial")?,
        configurations: field(b, "configurations")?,
        events: field::<Vec<Event>>(b, "events")?,
    };
    let report = analyze_trajectory(&tr, &sc, scores.as_ref()).map_err(fail)?;
    let body = trajectory_body(&report, &tr, &sc, scores.as_ref())?;
    inputs.report(ReportKind::Trajectory, &body, r.provenance.seed)
}

fn compare(inputs: &mut Inputs, paths: &[PathBuf]) -> Outcome {
    let mut reports = Vec::new();
    for p in paths {
        let r = read_report(inputs, p)?;
        if r.kind != ReportKind::Trajectory {
            return Err(Failure(format!("'{}' is a {} report, not a trajectory report", p.display(), r.kind.name())));
        }
        let sr: ScenarioReport = serde_json::from_value(r.body).map_err(|e| Failure(format!("'{}': {e}", p.display())))?;
        reports.push(sr);
    }
    let ranking = compare_scenarios(&reports).map_err(fail)?;
    let files: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    inputs.report(
        ReportKind::Comparison,
        &json!({"ranking": ranking.entries, "ties": ranking.ties, "files": files}),
        None,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Text => Format::Text,
    };
    let mut inputs = Inputs {
        bytes: Vec::new(),
        argv: std::env::args().skip(1).collect(),
    };
    let outcome = match &cli.command {
        Command::Validate { model, seed, samples } => validate(&mut inputs, model, *seed, *samples),
        Command::Classify {
            model,
            object,
            classificator,
            first_match,
        } => classify(&mut inputs, model, object, classificator.as_deref(), *first_match).map(|r| (r, true)),
        Command::Profile {
            model,
            series,
            interval,
            epsilon,
        } => profile(&mut inputs, model, series.as_deref(), interval, *epsilon).map(|r| (r, true)),
        Command::Replay {
            model,
            events,
            diagram,
            window,
        } => replay(&mut inputs, model, events, diagram.as_deref(), window.as_deref()).map(|r| (r, true)),
        Command::Consist { model, request } => consist(&mut inputs, model, request).map(|r| (r, true)),
        Command::Simulate {
            model,
            scenario,
            horizon,
            seed,
            events,
        } => simulate(&mut inputs, model, scenario, *horizon, *seed, events.as_deref()).map(|r| (r, true)),
        Command::Analyze { trajectory } => analyze(&mut inputs, trajectory).map(|r| (r, true)),
        Command::Compare { reports } => compare(&mut inputs, reports).map(|r| (r, true)),
    };
    match outcome {
        Ok((report, ok)) => match emit_report(&report, format) {
            Ok(text) => {
                print!("{text}");
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
