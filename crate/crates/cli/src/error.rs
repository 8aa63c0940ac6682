use std::fmt;
use std::process::ExitCode;

use attackkf_core::Error;
use serde_json::{json, Map, Value};

use crate::config::Issue;
use crate::table::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Unparseable command line; exit code 1.
    Usage,
    /// Bad configuration; exit code 1.
    Config,
    /// Malformed or inconsistent input data; exit code 2.
    Data,
    /// Singular or indefinite covariance during estimation; exit code 3.
    Numerical,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Usage | Kind::Config => 1,
            Kind::Data => 2,
            Kind::Numerical => 3,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
    pub line: Option<u64>,
    pub run: Option<usize>,
    pub step: Option<usize>,
    pub issues: Vec<Issue>,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            line: None,
            run: None,
            step: None,
            issues: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }

    pub fn invalid_config(issues: Vec<Issue>) -> Self {
        CliError {
            issues,
            ..Self::config("configuration is invalid")
        }
    }

    pub fn io(what: &str, path: &std::path::Path, e: std::io::Error, kind: Kind) -> Self {
        Self::new(kind, format!("{what} {}: {e}", path.display()))
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("kind".into(), self.kind.label().into());
        obj.insert("message".into(), self.message.clone().into());
        if let Some(line) = self.line {
            obj.insert("line".into(), line.into());
        }
        if let Some(run) = self.run {
            obj.insert("run".into(), run.into());
        }
        if let Some(step) = self.step {
            obj.insert("step".into(), step.into());
        }
        if !self.issues.is_empty() {
            let issues: Vec<_> = self
                .issues
                .iter()
                .map(|i| json!({ "field": i.field, "message": i.message }))
                .collect();
            obj.insert("violations".into(), issues.into());
        }
        json!({ "error": obj })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            _ if e.is_numerical() => Kind::Numerical,
            Error::Dimension { .. } => Kind::Data,
            Error::Run { source, .. } if matches!(**source, Error::Dimension { .. }) => Kind::Data,
            _ => Kind::Config,
        };
        let (run, inner) = match &e {
            Error::Run { run, source } => (Some(*run), source.as_ref()),
            other => (None, other),
        };
        let step = match inner {
            Error::SingularCovariance { step, .. } | Error::NotPsd { step, .. } => *step,
            _ => None,
        };
        CliError {
            run,
            step,
            ..CliError::new(kind, e.to_string())
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        let message = match e.line {
            Some(line) => format!("line {line}: {}", e.message),
            None => e.message,
        };
        CliError {
            line: e.line,
            ..CliError::new(Kind::Data, message)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_carry_run_and_step() {
        let e = Error::Run {
            run: 4,
            source: Box::new(Error::SingularCovariance {
                context: "smoother predicted covariance",
                step: Some(17),
            }),
        };
        let c = CliError::from(e);
        assert_eq!(c.kind, Kind::Numerical);
        let v = c.to_json();
        assert_eq!(v["error"]["run"], 4);
        assert_eq!(v["error"]["step"], 17);
        assert_eq!(v["error"]["kind"], "numerical");
    }

    #[test]
    fn parse_errors_cite_line() {
        let c = CliError::from(ParseError {
            line: Some(17),
            message: "bad".into(),
        });
        assert_eq!(c.kind, Kind::Data);
        assert!(c.message.contains("line 17"));
        assert_eq!(c.to_json()["error"]["line"], 17);
    }
}
