use std::process::ExitCode;

use stokes_lab::Error;

/// Why a command stopped, and the metric that failed.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{metric}: {detail}")]
    Verification { metric: String, detail: String },

    #[error("{metric}: {source}")]
    Numerical { metric: String, source: Error },

    #[error("cannot write {path}: {detail}")]
    Output { path: String, detail: String },
}

impl Failure {
    pub fn config(msg: String) -> Self {
        Failure::Config(msg)
    }

    /// Classifies a library error raised while computing `metric`.
    pub fn from_core(metric: &str, e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical { metric: metric.to_string(), source: e }
        } else {
            Failure::Verification { metric: metric.to_string(), detail: e.to_string() }
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Numerical { .. } => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

/// Attaches the metric name to library errors.
pub trait Metric<T> {
    fn metric(self, name: &str) -> Result<T, Failure>;
}

impl<T> Metric<T> for stokes_lab::Result<T> {
    fn metric(self, name: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::from_core(name, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stokes_lab::Complex64;

    #[test]
    fn exit_codes() {
        let n = Failure::from_core("c0", Error::NonConvergence { at: Complex64::new(0.0, 0.0), step: 0.0 });
        assert_eq!(n.exit_code(), ExitCode::from(2));
        let v = Failure::from_core("conditions", Error::ConditionViolated("x".into()));
        assert_eq!(v.exit_code(), ExitCode::from(1));
        assert!(v.to_string().starts_with("conditions:"));
        assert_eq!(Failure::config("bad".into()).exit_code(), ExitCode::from(1));
    }
}
