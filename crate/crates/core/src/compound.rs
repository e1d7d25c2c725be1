//! Compound nouns and their constituent-level text operations.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompoundError {
    #[error("compound noun is empty")]
    Empty,
    /// Split and reversal are only defined for open two-token compounds.
    #[error("compound noun has {0} whitespace tokens, expected 2")]
    NotTwoTokens(usize),
}

/// A compound noun such as "snow ball", stored with collapsed whitespace.
///
/// The original casing is kept; prompt builders lower-case on demand.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompoundNoun {
    text: String,
    tokens: Vec<String>,
}

impl CompoundNoun {
    /// Normalizes whitespace (trim, collapse runs to one space).
    pub fn new(raw: &str) -> Result<Self, CompoundError> {
        let tokens: Vec<String> = raw.split_whitespace().map(ToString::to_string).collect();
        if tokens.is_empty() {
            return Err(CompoundError::Empty);
        }
        let text = tokens.join(" ");
        Ok(Self { text, tokens })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lower-cased text used inside prompts.
    pub fn prompt_text(&self) -> String {
        self.text.to_lowercase()
    }

    /// Returns `(modifier, head)`, e.g. `("cricket", "bat")`.
    pub fn split(&self) -> Result<(&str, &str), CompoundError> {
        match self.tokens.as_slice() {
            [modifier, head] => Ok((modifier, head)),
            other => Err(CompoundError::NotTwoTokens(other.len())),
        }
    }

    /// Swaps the two constituents: "cricket bat" becomes "bat cricket".
    pub fn reversed(&self) -> Result<String, CompoundError> {
        let (modifier, head) = self.split()?;
        let mut out = String::with_capacity(self.text.len());
        out.push_str(head);
        out.push(' ');
        out.push_str(modifier);
        Ok(out)
    }
}

impl fmt::Display for CompoundNoun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl core::str::FromStr for CompoundNoun {
    type Err = CompoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for CompoundNoun {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for CompoundNoun {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Self::new(&raw).map_err(serde::de::Error::custom)
    }
}
