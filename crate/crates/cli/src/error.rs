use serde_json::{json, Value};
use thiserror::Error;

/// Exit status when every verdict passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status for I/O failures, which the validation and numeric codes do not cover.
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CRITERION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration text or an override does not parse.
    #[error("configuration: {0}")]
    Config(String),
    /// A configuration value violates an admissibility condition.
    #[error("{inequality} does not hold: {detail}")]
    Validation { inequality: String, detail: String },
    #[error(transparent)]
    Core(#[from] volterra::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn validation(inequality: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Validation {
            inequality: inequality.into(),
            detail: detail.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "validation" => EXIT_VALIDATION,
            "numeric" => EXIT_NUMERIC,
            _ => EXIT_IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        use volterra::Error as E;
        match self {
            CliError::Config(_) | CliError::Validation { .. } => "validation",
            CliError::Core(e) => match e {
                E::ParameterDomain { .. }
                | E::Admissibility { .. }
                | E::Alignment(_)
                | E::InsufficientData(_)
                | E::Invalid(_) => "validation",
                E::Numeric { .. } | E::Convergence { .. } | E::UndefinedRatio => "numeric",
                E::Io(_) => "io",
            },
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable description written to stderr and `error.json`.
    pub fn to_json(&self) -> Value {
        use volterra::Error as E;
        let mut body = json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let extra = match self {
            CliError::Validation { inequality, detail } => json!({ "inequality": inequality, "detail": detail }),
            CliError::Core(E::ParameterDomain {
                name,
                value,
                constraint,
            }) => {
                json!({ "parameter": name, "value": value, "inequality": constraint })
            }
            CliError::Core(E::Admissibility { inequality, detail }) => {
                json!({ "inequality": inequality, "detail": detail })
            }
            CliError::Core(E::Convergence { what, drift, limit }) => {
                json!({ "what": what, "drift": drift, "limit": limit })
            }
            CliError::Core(E::Numeric { what, achieved, target }) => {
                json!({ "what": what, "achieved": achieved, "target": target })
            }
            _ => Value::Null,
        };
        if let (Value::Object(map), Value::Object(more)) = (&mut body, extra) {
            map.extend(more);
        }
        json!({ "error": body })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
