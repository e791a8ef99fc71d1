use std::fmt;
use std::process::ExitCode;

use hotscore::metrics::MetricsError;
use hotscore::providers::ProviderError;
use hotscore::tot::TotError;

/// What went wrong, as far as the exit code is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Provider,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Provider => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(kind: Kind, source: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            source: source.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches an exit-code kind and a context message to any error.
pub trait Classify<T> {
    fn kind(self, kind: Kind, context: impl fmt::Display) -> CliResult<T>;

    fn config_err(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.kind(Kind::Config, context)
    }

    fn data_err(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.kind(Kind::Data, context)
    }
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn kind(self, kind: Kind, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(kind, e.into().context(context.to_string())))
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        let kind = match e {
            ProviderError::Config(_) => Kind::Config,
            // Blank text reaching a provider is bad input, not a provider fault.
            ProviderError::EmptyInput(_) => Kind::Data,
            _ => Kind::Provider,
        };
        CliError::new(kind, e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Provider(p) => p.into(),
            MetricsError::InvalidParams(_) => CliError::new(Kind::Config, e),
            _ => CliError::new(Kind::Data, e),
        }
    }
}

impl From<TotError> for CliError {
    fn from(e: TotError) -> Self {
        match e {
            TotError::Provider(p) => p.into(),
            TotError::Config(_) => CliError::new(Kind::Config, e),
            _ => CliError::new(Kind::Data, e),
        }
    }
}
