use std::fmt;
use std::process::ExitCode;

/// What went wrong, as far as the exit status is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Format,
    Remote,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Format => 3,
            Kind::Remote => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub source: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags an error with the exit status it should produce.
pub trait Classify<T> {
    fn or_kind(self, kind: Kind, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_kind(self, kind: Kind, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind,
            source: e.into().context(context()),
        })
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError {
        kind: Kind::Usage,
        source: anyhow::anyhow!(msg.into()),
    }
}

pub fn format(msg: impl Into<String>) -> CliError {
    CliError {
        kind: Kind::Format,
        source: anyhow::anyhow!(msg.into()),
    }
}

pub fn remote(msg: impl Into<String>) -> CliError {
    CliError {
        kind: Kind::Remote,
        source: anyhow::anyhow!(msg.into()),
    }
}

/// I/O problems keep their exit status; everything else in a sketch file is
/// a format problem.
pub fn sketch_kind(e: &quotescrub_core::SketchError) -> Kind {
    match e {
        quotescrub_core::SketchError::Io(_) => Kind::Io,
        _ => Kind::Format,
    }
}

pub fn index_kind(e: &quotescrub_core::IndexError) -> Kind {
    use quotescrub_core::IndexError;
    match e {
        IndexError::Io { .. } => Kind::Io,
        IndexError::Format { .. } => Kind::Format,
        IndexError::Sketch(s) => sketch_kind(s),
        IndexError::Config(_) => Kind::Usage,
    }
}
