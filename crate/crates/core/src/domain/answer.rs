use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five admissible multiple-choice letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerLetter {
    A,
    B,
    C,
    D,
    E,
}

/// A stage answer: `None` means the stage produced no parseable letter
/// (UNDEFINED). UNDEFINED compares unequal to every gold label.
pub type ParsedAnswer = Option<AnswerLetter>;

impl AnswerLetter {
    pub const ALL: [AnswerLetter; 5] = [
        AnswerLetter::A,
        AnswerLetter::B,
        AnswerLetter::C,
        AnswerLetter::D,
        AnswerLetter::E,
    ];

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(AnswerLetter::A),
            'B' => Some(AnswerLetter::B),
            'C' => Some(AnswerLetter::C),
            'D' => Some(AnswerLetter::D),
            'E' => Some(AnswerLetter::E),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            AnswerLetter::A => 'A',
            AnswerLetter::B => 'B',
            AnswerLetter::C => 'C',
            AnswerLetter::D => 'D',
            AnswerLetter::E => 'E',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLetter::A => "A",
            AnswerLetter::B => "B",
            AnswerLetter::C => "C",
            AnswerLetter::D => "D",
            AnswerLetter::E => "E",
        }
    }

    /// Zero-based position in the answer space (A=0 .. E=4).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for AnswerLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not an answer letter (expected one of A-E): {0:?}")]
pub struct ParseLetterError(pub String);

impl FromStr for AnswerLetter {
    type Err = ParseLetterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c).ok_or_else(|| ParseLetterError(s.to_string())),
            _ => Err(ParseLetterError(s.to_string())),
        }
    }
}

/// Render a stage answer for prompts and logs; UNDEFINED is the in-band
/// failure value.
pub fn answer_label(answer: ParsedAnswer) -> &'static str {
    match answer {
        Some(letter) => letter.as_str(),
        None => "UNDEFINED",
    }
}

/// Extract an answer letter from raw model output.
///
/// The grammar, in order:
/// 1. If the text, after trimming whitespace and ASCII punctuation from both
///    ends, is exactly one letter A-E (any case), that letter wins.
/// 2. Otherwise the *last* occurrence of the marker `Answer: <letter>`
///    (case-insensitive, optional spaces around the colon, letter followed
///    by a non-alphanumeric boundary) wins.
/// 3. Otherwise the output is UNDEFINED.
///
/// Never fails; UNDEFINED is reported as `None`.
pub fn parse_answer_letter(text: &str) -> ParsedAnswer {
    extract_answer(text).map(|(letter, _)| letter)
}

/// Like [`parse_answer_letter`], but also reports the byte span of the text
/// that carried the answer, so callers can split raw output into
/// answer + rationale without losing bytes.
pub fn extract_answer(text: &str) -> Option<(AnswerLetter, Range<usize>)> {
    let bare = text.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let mut chars = bare.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(letter) = AnswerLetter::from_char(c) {
            return Some((letter, 0..text.len()));
        }
    }
    last_answer_marker(text)
}

/// Scan for the last `Answer: <letter>` marker. Matching is ASCII
/// case-insensitive; spaces and tabs are allowed around the colon.
fn last_answer_marker(text: &str) -> Option<(AnswerLetter, Range<usize>)> {
    const KEYWORD: &[u8] = b"answer";
    let bytes = text.as_bytes();
    let mut found = None;
    let mut i = 0;
    while i + KEYWORD.len() <= bytes.len() {
        if bytes[i..i + KEYWORD.len()].eq_ignore_ascii_case(KEYWORD) {
            if let Some((letter, end)) = match_marker_tail(bytes, i + KEYWORD.len()) {
                found = Some((letter, i..end));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// After the `answer` keyword: optional blanks, a colon, optional blanks,
/// then a letter A-E at a word boundary. Returns the letter and the byte
/// offset one past it.
fn match_marker_tail(bytes: &[u8], mut i: usize) -> Option<(AnswerLetter, usize)> {
    while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        i += 1;
    }
    if i >= bytes.len() || bytes[i] != b':' {
        return None;
    }
    i += 1;
    while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        i += 1;
    }
    let letter = AnswerLetter::from_char(*bytes.get(i)? as char)?;
    let end = i + 1;
    if end < bytes.len() && bytes[end].is_ascii_alphanumeric() {
        return None;
    }
    Some((letter, end))
}
