//! Error-to-exit-code mapping.

use std::fmt;

use readlab_core::analysis::AnalysisError;
use readlab_core::classifier::ClassifierError;
use readlab_core::consistency::ConsistencyError;
use readlab_core::corpus::CorpusError;
use readlab_core::evalkit::EvalError;
use readlab_core::generalist::GeneralistError;
use readlab_core::llm_gateway::GatewayError;
use readlab_core::personalization::PersonalizationError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_GATEWAY: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn gateway(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_GATEWAY,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message.trim_end())
    }
}

impl std::error::Error for Failure {}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::data(e.to_string())
            }
        }
    )*};
}

data_error!(CorpusError, AnalysisError, ClassifierError, ConsistencyError, EvalError);

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => Failure::usage(e.to_string()),
            _ => Failure::gateway(e.to_string()),
        }
    }
}

impl From<GeneralistError> for Failure {
    fn from(e: GeneralistError) -> Self {
        match e {
            GeneralistError::Gateway(g) => g.into(),
            other => Failure::data(other.to_string()),
        }
    }
}

impl From<PersonalizationError> for Failure {
    fn from(e: PersonalizationError) -> Self {
        match e {
            PersonalizationError::Gateway(g) => g.into(),
            PersonalizationError::Generalist(g) => g.into(),
            other => Failure::data(other.to_string()),
        }
    }
}
