use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub detail: String,
    /// Printed after the error line, e.g. help text.
    pub extra: Option<String>,
}

impl CliError {
    pub fn new(kind: Kind, detail: impl fmt::Display) -> Self {
        CliError {
            kind,
            detail: detail.to_string(),
            extra: None,
        }
    }

    /// The single machine-parsable line written to stderr.
    pub fn line(&self) -> String {
        let detail: String = self
            .detail
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "stableaml: error code={} kind={}: {}",
            self.kind.exit_code(),
            self.kind.name(),
            detail
        )
    }
}

pub fn usage(detail: impl fmt::Display) -> CliError {
    CliError::new(Kind::Usage, detail)
}

pub fn data(detail: impl fmt::Display) -> CliError {
    CliError::new(Kind::Data, detail)
}

pub fn numeric(detail: impl fmt::Display) -> CliError {
    CliError::new(Kind::Numeric, detail)
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        data(format!("i/o: {e}"))
    }
}

impl From<stableaml::ingest::IngestError> for CliError {
    fn from(e: stableaml::ingest::IngestError) -> Self {
        data(e)
    }
}

impl From<stableaml::learners::LearnerError> for CliError {
    fn from(e: stableaml::learners::LearnerError) -> Self {
        use stableaml::learners::LearnerError as E;
        match e {
            E::Format(_) | E::WidthMismatch { .. } | E::Shape(_) => data(e),
            E::Config(_) => usage(e),
            _ => numeric(e),
        }
    }
}

impl From<stableaml::gnn::GnnError> for CliError {
    fn from(e: stableaml::gnn::GnnError) -> Self {
        use stableaml::gnn::GnnError as E;
        match e {
            E::MissingFeatures(_) | E::Width { .. } => data(e),
            E::Config(_) => usage(e),
            _ => numeric(e),
        }
    }
}

impl From<stableaml::eval::EvalError> for CliError {
    fn from(e: stableaml::eval::EvalError) -> Self {
        use stableaml::eval::EvalError as E;
        match e {
            E::Model(inner) => inner.into(),
            E::Undefined(_) => numeric(e),
            _ => data(e),
        }
    }
}

impl From<stableaml::explain::ExplainError> for CliError {
    fn from(e: stableaml::explain::ExplainError) -> Self {
        use stableaml::explain::ExplainError as E;
        match e {
            E::Model(inner) => inner.into(),
            E::NotApplicable(_) => usage(e),
            E::Shape(_) => data(e),
            _ => numeric(e),
        }
    }
}

impl From<stableaml::graph::GraphError> for CliError {
    fn from(e: stableaml::graph::GraphError) -> Self {
        data(e)
    }
}

impl From<stableaml::synth::ConfigError> for CliError {
    fn from(e: stableaml::synth::ConfigError) -> Self {
        usage(e)
    }
}
