use std::fmt;
use std::process::ExitCode;

use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    BadArgs,
    Parse,
    Module,
    Verify,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Io => 1,
            Kind::BadArgs => 2,
            Kind::Parse => 3,
            Kind::Module => 4,
            Kind::Verify => 5,
        }
    }
}

/// A classified failure: exit code, short error name, full message.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub name: String,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, name: impl Into<String>, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            name: name.into(),
            error: error.into(),
        }
    }

    pub fn bad_args(msg: impl fmt::Display) -> Self {
        Self::new(Kind::BadArgs, "BadArguments", anyhow::anyhow!("{msg}"))
    }

    pub fn parse(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Parse, "ParseError", anyhow::anyhow!("{msg}"))
    }

    /// One-line JSON record for stderr.
    pub fn to_json_line(&self) -> String {
        json!({
            "error": self.name,
            "exit_code": self.kind.code(),
            "message": format!("{:#}", self.error).replace('\n', " "),
        })
        .to_string()
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

/// Variant name of an error enum, taken from its `Debug` form.
pub fn variant_name<E: fmt::Debug>(e: &E) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}

pub type CliResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    /// Library errors, named after their variant.
    fn module(self) -> CliResult<T>;
    fn with_kind(self, kind: Kind) -> CliResult<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn module(self) -> CliResult<T> {
        self.with_kind(Kind::Module)
    }

    fn with_kind(self, kind: Kind) -> CliResult<T> {
        self.map_err(|e| Failure::new(kind, variant_name(&e), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmprep::mixture::MixtureError;

    #[test]
    fn names_and_codes() {
        assert_eq!(variant_name(&MixtureError::BadWeights { sum: 1.1 }), "BadWeights");
        assert_eq!(variant_name(&MixtureError::NoEntries), "NoEntries");
        let f = Err::<(), _>(MixtureError::NoEntries).with_kind(Kind::BadArgs).unwrap_err();
        assert_eq!(f.kind.code(), 2);
        let line = f.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "NoEntries");
        assert_eq!(v["exit_code"], 2);
    }
}
