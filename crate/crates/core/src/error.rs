use alloc::string::String;
use core::fmt;

/// Errors raised while running a query. Finite failure is not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    /// Arithmetic or comparison on an unbound variable.
    Instantiation(String),
    /// Wrong kind of term for a builtin argument.
    Type(String),
    /// Integer overflow or division by zero.
    Arithmetic(String),
    UnknownProcedure(String),
    /// The resolution-step budget ran out before the search finished.
    StepBudget {
        steps: u64,
    },
    /// Goals of a parallel conjunction share an unbound variable.
    Independence(String),
    /// A reinstall found an external cell already bound.
    ReinstallConflict(String),
    /// Broken engine invariant.
    Internal(String),
}

impl EngineError {
    pub fn internal(msg: impl Into<String>) -> Self {
        EngineError::Internal(msg.into())
    }

    /// True for errors that indicate a bug or protocol violation rather than
    /// a problem with the user's program.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            EngineError::Internal(_) | EngineError::ReinstallConflict(_)
        )
    }
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Instantiation(s) => write!(f, "instantiation error: {s}"),
            EngineError::Type(s) => write!(f, "type error: {s}"),
            EngineError::Arithmetic(s) => write!(f, "arithmetic error: {s}"),
            EngineError::UnknownProcedure(s) => write!(f, "unknown procedure {s}"),
            EngineError::StepBudget { steps } => {
                write!(f, "step budget exhausted after {steps} steps")
            }
            EngineError::Independence(s) => write!(f, "independence violation: {s}"),
            EngineError::ReinstallConflict(s) => write!(f, "reinstall conflict: {s}"),
            EngineError::Internal(s) => write!(f, "internal error: {s}"),
        }
    }
}
