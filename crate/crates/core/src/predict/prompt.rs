//! Canonical prompt text for an external sequence predictor and a tolerant
//! parser for its free-text answers.

use super::trajectory::Observation;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Angles,
    Distance,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Angles => "angles",
            PromptKind::Distance => "distance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptRecord {
    pub text: String,
    pub kind: PromptKind,
    pub user: usize,
    pub slot: usize,
}

pub fn pixel_prompt(points: &[(f64, f64)]) -> String {
    assert!(!points.is_empty(), "prompt needs at least one point");
    let mut s = String::from("Using the sequence of past x-y coordinate pairs: ");
    for (i, (x, y)) in points.iter().enumerate() {
        let n = i + 1;
        write!(s, "(x_{n}, y_{n}) = ({x:.1}, {y:.1}), ").unwrap();
    }
    let n = points.len() + 1;
    write!(s, "predict the next pair (x_{n}, y_{n})").unwrap();
    s
}

pub fn distance_prompt(values: &[f64]) -> String {
    assert!(!values.is_empty(), "prompt needs at least one value");
    let mut s = String::from("Using the sequence of past distance values: ");
    for (i, r) in values.iter().enumerate() {
        write!(s, "r_{} = {r:.1}, ", i + 1).unwrap();
    }
    write!(s, "predict the next distance value r_{}", values.len() + 1).unwrap();
    s
}

/// Prompt over the given observations (normally the visible part of a
/// trajectory window).
pub fn build_prompt(
    history: &[Observation],
    kind: PromptKind,
    user: usize,
    slot: usize,
) -> PromptRecord {
    let text = match kind {
        PromptKind::Angles => pixel_prompt(&history.iter().map(|o| o.pixel).collect::<Vec<_>>()),
        PromptKind::Distance => {
            distance_prompt(&history.iter().map(|o| o.distance).collect::<Vec<_>>())
        }
    };
    PromptRecord {
        text,
        kind,
        user,
        slot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedValue {
    Pixel(f64, f64),
    Distance(f64),
}

/// Number starting at byte `i`, if one starts there and is not glued to a
/// preceding identifier. Returns the value and the end offset.
fn number_at(s: &[u8], i: usize) -> Option<(f64, usize)> {
    if i > 0 {
        let p = s[i - 1];
        if p.is_ascii_alphanumeric() || p == b'_' || p == b'.' {
            return None;
        }
    }
    let mut j = i;
    if j < s.len() && (s[j] == b'-' || s[j] == b'+') {
        j += 1;
    }
    let digits_start = j;
    while j < s.len() && s[j].is_ascii_digit() {
        j += 1;
    }
    let mut any = j > digits_start;
    if j < s.len() && s[j] == b'.' {
        let k = j + 1;
        let mut m = k;
        while m < s.len() && s[m].is_ascii_digit() {
            m += 1;
        }
        if m > k {
            any = true;
            j = m;
        } else if any {
            j = k;
        }
    }
    if !any {
        return None;
    }
    if j < s.len() && (s[j] == b'e' || s[j] == b'E') {
        let mut k = j + 1;
        if k < s.len() && (s[k] == b'-' || s[k] == b'+') {
            k += 1;
        }
        let m0 = k;
        while k < s.len() && s[k].is_ascii_digit() {
            k += 1;
        }
        if k > m0 {
            j = k;
        }
    }
    if j < s.len() && (s[j].is_ascii_alphabetic() || s[j] == b'_') && !matches!(s[j], b'm' | b'p') {
        // glued to a word such as "3rd"; units like "9.4m" or "12px" are fine
        return None;
    }
    let text = std::str::from_utf8(&s[i..j]).ok()?;
    text.trim_end_matches('.').parse().ok().map(|v| (v, j))
}

fn skip_ws(s: &[u8], mut i: usize) -> usize {
    while i < s.len() && s[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

fn pair_at(s: &[u8], open: usize) -> Option<(f64, f64)> {
    let i = skip_ws(s, open + 1);
    let (x, i) = number_at(s, i)?;
    let i = skip_ws(s, i);
    if s.get(i) != Some(&b',') {
        return None;
    }
    let i = skip_ws(s, i + 1);
    let (y, i) = number_at(s, i)?;
    let i = skip_ws(s, i);
    (s.get(i) == Some(&b')')).then_some((x, y))
}

/// First `(x, y)` pair for angle prompts, first standalone number for
/// distance prompts. Non-finite values are rejected.
pub fn parse_prediction_response(text: &str, kind: PromptKind) -> Result<ParsedValue> {
    let s = text.as_bytes();
    let found = match kind {
        PromptKind::Angles => (0..s.len())
            .filter(|&i| s[i] == b'(')
            .find_map(|i| pair_at(s, i))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| ParsedValue::Pixel(x, y)),
        PromptKind::Distance => (0..s.len())
            .find_map(|i| number_at(s, i))
            .map(|(v, _)| v)
            .filter(|v| v.is_finite())
            .map(ParsedValue::Distance),
    };
    found.ok_or_else(|| Error::Parse(text.chars().take(120).collect()))
}
