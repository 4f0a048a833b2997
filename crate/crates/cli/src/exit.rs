use std::fmt;

use ecgcl::Error;

pub const USAGE: u8 = 2;
pub const RUNTIME: u8 = 3;

/// A problem with the invocation or its inputs, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for bad invocations or unusable inputs, 3 for failures while working.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidArgument(_)
                | Error::MissingFile(_)
                | Error::Ingest(_)
                | Error::Record { .. }
                | Error::ZeroVariance { .. }
                | Error::UnknownStrategy { .. }
                | Error::Format(_)
                | Error::Csv(_)
                | Error::Json(_) => USAGE,
                Error::Shape(_)
                | Error::Diverged { .. }
                | Error::FrozenDrift(_)
                | Error::NoDefinedClass
                | Error::Io(_) => RUNTIME,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return USAGE;
        }
    }
    RUNTIME
}
