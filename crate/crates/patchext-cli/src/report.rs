use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

/// Machine-readable failure record written to stderr.
#[derive(Debug, Serialize)]
pub struct Diagnostic {
    pub status: &'static str,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(Diagnostic),
}

impl Failure {
    pub fn numerical(kind: &str, message: impl Into<String>, details: Value) -> Self {
        Failure::Numerical(Diagnostic { status: "error", kind: kind.into(), message: message.into(), details })
    }
}

impl From<patchext::Error> for Failure {
    fn from(e: patchext::Error) -> Self {
        let details = match &e {
            patchext::Error::ParseError { line, .. } => json!({ "line": line }),
            patchext::Error::IncompatibleData { defect, .. } => json!({ "defect": finite(*defect) }),
            patchext::Error::ConstraintViolated { what, residual } => json!({ "constraint": what, "residual": finite(*residual) }),
            patchext::Error::OrthogonalityViolated(v) => json!({ "vertices": v }),
            patchext::Error::PatchSolveFailed { vertex, source } => json!({ "vertex": vertex, "cause": source.kind() }),
            patchext::Error::UnmarkedBoundaryFace(f) | patchext::Error::InvalidMarker(f) => json!({ "face": f }),
            _ => Value::Null,
        };
        Failure::numerical(e.kind(), e.to_string(), details)
    }
}

pub type CmdResult = Result<(), Failure>;

/// Non-finite numbers become JSON null.
pub fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn emit(text: &str, path: Option<&Path>) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn emit_json(v: &Value, path: Option<&Path>) -> CmdResult {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    emit(&s, path)
}
