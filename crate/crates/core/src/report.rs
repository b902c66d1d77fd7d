//! Reports: a kind, a body tree and provenance.
//!
//! Machine output is pretty-printed JSON with keys sorted at every level, so
//! identical reports serialize to identical bytes. Human output renders the
//! same tree as indented text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Validation,
    Classification,
    Profile,
    Intensity,
    Consistency,
    Trajectory,
    Comparison,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Validation => "validation",
            ReportKind::Classification => "classification",
            ReportKind::Profile => "profile",
            ReportKind::Intensity => "intensity",
            ReportKind::Consistency => "consistency",
            ReportKind::Trajectory => "trajectory",
            ReportKind::Comparison => "comparison",
        }
    }

    /// Keys every body of this kind must carry.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            ReportKind::Validation => &["status", "findings"],
            ReportKind::Classification => &["object", "results"],
            ReportKind::Profile => &["interval", "parameters", "cells", "trends"],
            ReportKind::Intensity => &["diagram", "occupancy", "development", "degradation", "ratio"],
            ReportKind::Consistency => &["request", "operation", "verdict"],
            ReportKind::Trajectory => &[
                "scenario",
                "horizon",
                "complete",
                "redundancy",
                "omitted_possibilities",
                "complexness",
                "events",
            ],
            ReportKind::Comparison => &["ranking", "ties"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the input bytes, hex.
    pub input_digest: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Arguments the report was produced with.
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub body: Value,
    pub provenance: Provenance,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("{kind} report body is missing {missing:?}")]
    SchemaViolation { kind: &'static str, missing: Vec<String> },
    #[error("report body could not be serialized: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Text,
}

impl Report {
    /// Serializes `body` and checks it against the kind's schema.
    pub fn new(kind: ReportKind, body: &impl Serialize, provenance: Provenance) -> Result<Self, ReportError> {
        let body = serde_json::to_value(body).map_err(|e| ReportError::Serialize(e.to_string()))?;
        let r = Self { kind, body, provenance };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<(), ReportError> {
        let missing: Vec<String> = self
            .kind
            .required_keys()
            .iter()
            .filter(|k| self.body.get(**k).is_none())
            .map(|k| k.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ReportError::SchemaViolation {
                kind: self.kind.name(),
                missing,
            })
        }
    }
}

pub fn emit_report(report: &Report, format: Format) -> Result<String, ReportError> {
    report.check()?;
    match format {
        Format::Json => {
            // serde_json maps are ordered by key, so the value is canonical.
            let v = serde_json::to_value(report).map_err(|e| ReportError::Serialize(e.to_string()))?;
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| ReportError::Serialize(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => {
            let mut out = String::new();
            writeln!(out, "{} report", report.kind.name()).unwrap();
            if let Some(status) = report.body.get("status").and_then(Value::as_str) {
                writeln!(out, "status: {}", status.to_uppercase()).unwrap();
            }
            render(&report.body, 0, &mut out);
            writeln!(out, "provenance:").unwrap();
            let p = &report.provenance;
            writeln!(out, "  input_digest: {}", p.input_digest).unwrap();
            match p.seed {
                Some(s) => writeln!(out, "  seed: {s}").unwrap(),
                None => writeln!(out, "  seed: none").unwrap(),
            }
            writeln!(out, "  tool_version: {}", p.tool_version).unwrap();
            writeln!(out, "  command: {}", p.command.join(" ")).unwrap();
            Ok(out)
        }
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.is_empty() => Some("[]".into()),
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            Some(a.iter().filter_map(scalar).collect::<Vec<_>>().join(", "))
        }
        Value::Object(o) if o.is_empty() => Some("{}".into()),
        _ => None,
    }
}

fn render(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                match scalar(x) {
                    Some(s) => writeln!(out, "{pad}{k}: {s}").unwrap(),
                    None => {
                        writeln!(out, "{pad}{k}:").unwrap();
                        render(x, depth + 1, out);
                    }
                }
            }
        }
        Value::Array(items) => {
            for x in items {
                match scalar(x) {
                    Some(s) => writeln!(out, "{pad}- {s}").unwrap(),
                    None => {
                        writeln!(out, "{pad}-").unwrap();
                        render(x, depth + 1, out);
                    }
                }
            }
        }
        other => writeln!(out, "{pad}{}", scalar(other).unwrap_or_default()).unwrap(),
    }
}
