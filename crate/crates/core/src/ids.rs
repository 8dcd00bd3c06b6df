//! Identifier newtypes for agents, coalitions, information items and workflow nodes.
//!
//! All identifiers share one lexical rule: 1 to 64 characters drawn from
//! `[A-Za-z0-9_-]`. Information items minted at runtime by producer operations
//! additionally carry a `#<counter>` suffix (`PP#1`), which keeps them apart from
//! anything a scenario author can write by hand.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub const MAX_ID_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier must not be empty")]
    Empty,
    #[error("identifier `{0}` is longer than {MAX_ID_LEN} characters")]
    TooLong(String),
    #[error("identifier `{0}` contains characters outside [A-Za-z0-9_-]")]
    BadChar(String),
}

pub(crate) fn is_id_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn check_plain(s: &str) -> Result<(), IdError> {
    if s.is_empty() {
        return Err(IdError::Empty);
    }
    if s.len() > MAX_ID_LEN {
        return Err(IdError::TooLong(s.to_string()));
    }
    if !s.chars().all(is_id_char) {
        return Err(IdError::BadChar(s.to_string()));
    }
    Ok(())
}

/// Validates a hand-written identifier or a minted one (`base#digits`).
fn check_minted(s: &str) -> Result<(), IdError> {
    match s.split_once('#') {
        Some((base, counter)) => {
            check_plain(base)?;
            if counter.is_empty() || !counter.chars().all(|c| c.is_ascii_digit()) {
                return Err(IdError::BadChar(s.to_string()));
            }
            if s.len() > MAX_ID_LEN {
                return Err(IdError::TooLong(s.to_string()));
            }
            Ok(())
        }
        None => check_plain(s),
    }
}

macro_rules! ident_newtype {
    ($(#[$meta:meta])* $name:ident, $check:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self, IdError> {
                let value = value.into();
                $check(&value)?;
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = IdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }
    };
}

ident_newtype!(
    /// Identifies an agent in the coalition state.
    AgentId,
    check_plain
);
ident_newtype!(
    /// Identifies a coalition.
    CoalitionId,
    check_plain
);
ident_newtype!(
    /// An opaque information token. Equality is by identifier only.
    Information,
    check_minted
);
ident_newtype!(
    /// Identifies a node of a workflow graph.
    NodeId,
    check_plain
);

impl Information {
    /// Token minted by a producer: `<base>#<counter>`.
    pub fn minted(base: &str, counter: usize) -> Result<Self, IdError> {
        Self::new(format!("{base}#{counter}"))
    }

    /// The part before the `#` counter, or the whole name for hand-written tokens.
    pub fn base(&self) -> &str {
        self.0.split_once('#').map_or(&self.0, |(b, _)| b)
    }

    pub fn is_minted(&self) -> bool {
        self.0.contains('#')
    }
}
