use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input, configuration or missing upstream artifact (exit 1).
    Validation,
    /// Failure while computing or writing (exit 2).
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub stage: String,
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(stage: &str, message: impl Into<String>) -> Self {
        Self { stage: stage.into(), kind: Kind::Validation, message: message.into() }
    }

    pub fn runtime(stage: &str, message: impl Into<String>) -> Self {
        Self { stage: stage.into(), kind: Kind::Runtime, message: message.into() }
    }

    pub fn from_core(stage: &str, e: cogeffort::Error) -> Self {
        if e.is_validation() {
            Self::validation(stage, e.to_string())
        } else {
            Self::runtime(stage, e.to_string())
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Runtime => 2,
        }
    }
}

/// `error stage=<stage> kind=<validation|runtime> message=<text>` on one line.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Validation => "validation",
            Kind::Runtime => "runtime",
        };
        let message = self.message.replace(['\n', '\r'], " ");
        write!(f, "error stage={} kind={kind} message={message}", self.stage)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage name to core results.
pub trait StageContext<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T> StageContext<T> for cogeffort::Result<T> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_line_format() {
        let e = CliError::validation("prep", "missing upstream artifact trials.csv\nsecond line");
        assert_eq!(e.to_string(), "error stage=prep kind=validation message=missing upstream artifact trials.csv second line");
        assert_eq!(e.exit_code(), 1);
        assert_eq!(CliError::runtime("train", "x").exit_code(), 2);
    }
}
