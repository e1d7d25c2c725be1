//! LLM caption generation: the instruction, reply parsing, and the
//! retry/de-duplication loop around a chat-completion source.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::compound::CompoundNoun;

/// Default number of re-queries after a malformed or short reply.
pub const DEFAULT_RETRIES: usize = 3;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_TOP_P: f64 = 1.0;
pub const MAX_CAPTIONS: usize = 16;
/// Captions longer than this many words are flagged, not rejected.
pub const SOFT_WORD_LIMIT: usize = 10;

const INSTRUCTION_HEAD: &str = "Return a list of {k} diverse captions with a {cn} in a photo. \
The captions should be a maximum of 10 words and one-liners. \
All {k} captions should describe the compound noun in diverse settings with different verbs and actions being performed with the compound noun. ";

const INSTRUCTION_EXAMPLE: &str = "An example output for \"chicken burger\": \
['Sizzling chicken burger grilling at a lively backyard BBQ.,' \
'Chef expertly flipping a juicy chicken burger in a diner.',' \
Family enjoying homemade chicken burgers on a sunny picnic.', \
'Athlete fueling up with a protein-packed chicken burger post-workout.', \
'Friends sharing a chicken burger at a vibrant street festival.']. \
Only return a list of strings and nothing else.";

/// The caption-generation instruction for `k` captions about `cn`.
pub fn caption_instruction(cn: &CompoundNoun, k: usize) -> String {
    let k = k.to_string();
    let mut s = INSTRUCTION_HEAD.replace("{k}", &k).replace("{cn}", &cn.prompt_text());
    s.push_str(INSTRUCTION_EXAMPLE);
    s
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionError {
    #[error("caption {0} is empty")]
    EmptyCaption(usize),
    #[error("caption {0} duplicates an earlier caption")]
    DuplicateCaption(usize),
    #[error("caption set is empty")]
    NoCaptions,
    #[error("invalid caption request: {0}")]
    InvalidRequest(&'static str),
    #[error("cannot take {want} captions from a set of {have}")]
    Insufficient { have: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CaptionFlagKind {
    /// The caption does not mention the compound noun.
    MissingCompoundNoun,
    /// More words than the instruction asks for.
    OverLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaptionFlag {
    pub index: usize,
    pub kind: CaptionFlagKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaptionSet {
    compound_noun: String,
    captions: Vec<String>,
    provider_id: String,
    /// Unix seconds.
    created_at: u64,
    flags: Vec<CaptionFlag>,
}

fn dedupe_key(caption: &str) -> String {
    caption.trim().to_lowercase()
}

impl CaptionSet {
    /// Trims each caption; rejects empty or duplicated ones and computes flags.
    pub fn new(
        compound_noun: impl Into<String>,
        captions: Vec<String>,
        provider_id: impl Into<String>,
        created_at: u64,
    ) -> Result<Self, CaptionError> {
        if captions.is_empty() {
            return Err(CaptionError::NoCaptions);
        }
        let compound_noun = compound_noun.into();
        let captions: Vec<String> = captions.iter().map(|c| c.trim().to_string()).collect();
        let mut seen = Vec::with_capacity(captions.len());
        for (i, c) in captions.iter().enumerate() {
            if c.is_empty() {
                return Err(CaptionError::EmptyCaption(i));
            }
            let key = dedupe_key(c);
            if seen.contains(&key) {
                return Err(CaptionError::DuplicateCaption(i));
            }
            seen.push(key);
        }
        let flags = compute_flags(&compound_noun, &captions);
        Ok(Self { compound_noun, captions, provider_id: provider_id.into(), created_at, flags })
    }

    pub fn compound_noun(&self) -> &str {
        &self.compound_noun
    }

    pub fn captions(&self) -> &[String] {
        &self.captions
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn flags(&self) -> &[CaptionFlag] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    /// The first `k` captions, as used by caption-count sweeps.
    pub fn truncated(&self, k: usize) -> Result<CaptionSet, CaptionError> {
        if k == 0 || k > self.len() {
            return Err(CaptionError::Insufficient { have: self.len(), want: k });
        }
        let captions = self.captions[..k].to_vec();
        let flags = self.flags.iter().copied().filter(|f| f.index < k).collect();
        Ok(CaptionSet { captions, flags, ..self.clone() })
    }
}

fn compute_flags(compound_noun: &str, captions: &[String]) -> Vec<CaptionFlag> {
    let needle = compound_noun.to_lowercase();
    let mut flags = Vec::new();
    for (index, c) in captions.iter().enumerate() {
        if !c.to_lowercase().contains(&needle) {
            flags.push(CaptionFlag { index, kind: CaptionFlagKind::MissingCompoundNoun });
        }
        if c.split_whitespace().count() > SOFT_WORD_LIMIT {
            flags.push(CaptionFlag { index, kind: CaptionFlagKind::OverLength });
        }
    }
    flags
}

/// What is sent to the captioning model for one compound noun.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRequest {
    pub compound_noun: CompoundNoun,
    pub k: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub instruction: String,
}

impl CaptionRequest {
    /// Default instruction and decoding parameters.
    pub fn new(compound_noun: CompoundNoun, k: usize) -> Self {
        let instruction = caption_instruction(&compound_noun, k);
        Self { compound_noun, k, temperature: DEFAULT_TEMPERATURE, top_p: DEFAULT_TOP_P, instruction }
    }

    pub fn validate(&self) -> Result<(), CaptionError> {
        if self.k == 0 || self.k > MAX_CAPTIONS {
            return Err(CaptionError::InvalidRequest("k must be in 1..=16"));
        }
        if !(self.temperature >= 0.0) {
            return Err(CaptionError::InvalidRequest("temperature must be non-negative"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(CaptionError::InvalidRequest("top_p must be in (0, 1]"));
        }
        Ok(())
    }
}

/// A chat-completion endpoint that turns an instruction into reply text.
pub trait CompletionSource {
    type Error;

    fn provider_id(&self) -> &str;

    fn complete(&self, request: &CaptionRequest) -> Result<String, Self::Error>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError<E> {
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error("caption provider failed: {0}")]
    Provider(E),
    #[error("no parseable caption list after {attempts} attempts")]
    MalformedCompletion { attempts: usize },
    #[error("got {got} distinct captions, wanted {want}")]
    TooFewCaptions { got: usize, want: usize },
}

/// Queries `source` until `request.k` distinct captions are collected.
///
/// Malformed replies and short or duplicate-laden lists trigger a re-query,
/// at most `retries` times. Replies longer than `k` are truncated.
pub fn generate_captions<S: CompletionSource>(
    source: &S,
    request: &CaptionRequest,
    retries: usize,
    created_at: u64,
) -> Result<CaptionSet, GenerateError<S::Error>> {
    request.validate()?;
    let want = request.k;
    let mut collected: Vec<String> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    let mut parsed_any = false;

    for _ in 0..=retries {
        let reply = source.complete(request).map_err(GenerateError::Provider)?;
        let Ok(items) = parse_caption_list(&reply) else { continue };
        parsed_any = true;
        for item in items {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let key = dedupe_key(item);
            if !keys.contains(&key) {
                keys.push(key);
                collected.push(item.to_string());
            }
        }
        if collected.len() >= want {
            collected.truncate(want);
            return Ok(CaptionSet::new(request.compound_noun.text(), collected, source.provider_id(), created_at)?);
        }
    }
    if parsed_any {
        Err(GenerateError::TooFewCaptions { got: collected.len(), want })
    } else {
        Err(GenerateError::MalformedCompletion { attempts: retries + 1 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ListParseError {
    #[error("no '[' found")]
    NoList,
    #[error("unterminated list or string")]
    Unterminated,
    #[error("unexpected character {0:?} at byte {1}")]
    Unexpected(char, usize),
    #[error("bad escape at byte {0}")]
    BadEscape(usize),
}

/// Parses the first bracketed list of quoted strings in `reply`.
///
/// Accepts JSON double-quoted lists and single-quoted list syntax. Commas
/// between elements are optional. A quote only closes a string when the next
/// non-space character is `,`, `]`, or another quote, so stray apostrophes
/// ("chef's") survive inside single-quoted items.
pub fn parse_caption_list(reply: &str) -> Result<Vec<String>, ListParseError> {
    let start = reply.find('[').ok_or(ListParseError::NoList)?;
    let bytes = reply.as_bytes();
    let mut chars = reply[start + 1..].char_indices().map(|(i, c)| (i + start + 1, c)).peekable();
    let mut out = Vec::new();

    loop {
        let (pos, c) = loop {
            match chars.next() {
                Some((_, c)) if c.is_whitespace() || c == ',' => continue,
                Some(x) => break x,
                None => return Err(ListParseError::Unterminated),
            }
        };
        match c {
            ']' => return Ok(out),
            '"' | '\'' => {
                let mut s = String::new();
                loop {
                    let Some((i, ch)) = chars.next() else { return Err(ListParseError::Unterminated) };
                    if ch == '\\' {
                        let Some((j, esc)) = chars.next() else { return Err(ListParseError::Unterminated) };
                        match esc {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            'r' => s.push('\r'),
                            '\\' | '\'' | '"' | '/' => s.push(esc),
                            'u' => {
                                let hex = reply.get(j + 1..j + 5).ok_or(ListParseError::BadEscape(j))?;
                                let code = u32::from_str_radix(hex, 16).map_err(|_| ListParseError::BadEscape(j))?;
                                s.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                                for _ in 0..4 {
                                    chars.next();
                                }
                            }
                            _ => return Err(ListParseError::BadEscape(j)),
                        }
                    } else if ch == c && closes_string(bytes, i + ch.len_utf8(), c) {
                        break;
                    } else {
                        s.push(ch);
                    }
                }
                out.push(s);
            }
            other => return Err(ListParseError::Unexpected(other, pos)),
        }
    }
}

fn closes_string(bytes: &[u8], mut at: usize, quote: char) -> bool {
    while at < bytes.len() && bytes[at].is_ascii_whitespace() {
        at += 1;
    }
    match bytes.get(at) {
        None => true,
        Some(&b) => b == b',' || b == b']' || b == quote as u8,
    }
}
