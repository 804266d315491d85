//! Machine-readable failures.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn at(mut self, line: usize, column: usize) -> Self {
        self.line = Some(line);
        self.column = Some(column);
        self
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::new("io_error", format!("{context}: {e}"))
    }

    /// `{"error": {...}}` on one line.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: &'a CliError,
        }
        serde_json::to_string(&Wrapper { error: self }).expect("error serializes")
    }
}

impl From<carnot_core::Error> for CliError {
    fn from(e: carnot_core::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}
