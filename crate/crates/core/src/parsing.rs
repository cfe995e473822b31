//! Score extraction from judge responses.
//!
//! Two- and three-stage responses end with a bracketed list anchored by
//! `Float Scores:` (decimal templates) or `Scores:` (integer templates);
//! the last such list in the response wins. One-stage responses carry one
//! `Score of SampleK:[v]` per sample.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Criterion, Procedure, ScoreFormat};

/// How far outside the criterion range a score may fall and still be
/// clamped (and flagged) instead of rejected.
pub const CLAMP_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no score block found in response")]
    MarkerNotFound,
    #[error("score block is not closed with ']'")]
    UnclosedBlock,
    #[error("expected {expected} scores, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("sample {0} scored more than once")]
    DuplicateIndex(usize),
    #[error("sample index {index} outside 1..={n}")]
    UnexpectedIndex { index: usize, n: usize },
    #[error("cannot read score entry {0:?}")]
    MalformedEntry(String),
    #[error("sample {index} score {value} outside the criterion range")]
    OutOfRange { index: usize, value: f64 },
    #[error("sample {0} score is not an integer")]
    NonIntegerScore(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedScores {
    /// 1-based sample index to score.
    pub scores: BTreeMap<usize, f64>,
    /// Byte range of the matched score block within the response.
    pub raw_span: Range<usize>,
    /// Indices whose score was pulled back into range.
    pub clamped: BTreeSet<usize>,
}

impl ParsedScores {
    /// Scores in sample order.
    pub fn ordered(&self) -> Vec<f64> {
        self.scores.values().copied().collect()
    }
}

fn block_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bscores\s*:\s*\[").unwrap())
}

fn entry_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^(?:sample\s*)?(\d+)\s*[:=]\s*\[?\s*([-+]?(?:\d+\.?\d*|\.\d+))\s*\]?\s*[.;,!]*$",
        )
        .unwrap()
    })
}

fn one_stage_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)score\s+of\s+sample\s*(\d+)\s*:\s*\[?\s*([-+]?(?:\d+\.?\d*|\.\d+))\s*\]?")
            .unwrap()
    })
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)score\s+of\s+sample\s*\d+").unwrap())
}

fn parse_index(raw: &str) -> Result<usize, ParseError> {
    raw.parse()
        .map_err(|_| ParseError::MalformedEntry(raw.to_string()))
}

fn parse_value(raw: &str) -> Result<f64, ParseError> {
    raw.parse()
        .map_err(|_| ParseError::MalformedEntry(raw.to_string()))
}

pub fn parse_batch_scores(
    response: &str,
    n: usize,
    criterion: &Criterion,
    procedure: Procedure,
) -> Result<ParsedScores, ParseError> {
    let (pairs, raw_span) = match procedure {
        Procedure::OneStage => extract_one_stage(response)?,
        Procedure::TwoStage | Procedure::ThreeStage => extract_block(response)?,
    };
    validate(pairs, raw_span, n, criterion)
}

fn extract_block(response: &str) -> Result<(Vec<(usize, f64)>, Range<usize>), ParseError> {
    let opening = block_re()
        .find_iter(response)
        .last()
        .ok_or(ParseError::MarkerNotFound)?;
    let body_start = opening.end();
    let close = response[body_start..]
        .find(']')
        .ok_or(ParseError::UnclosedBlock)?;
    // entries may bracket their own value, e.g. `Sample1:[2.5]`
    let mut end = body_start + close;
    let mut depth = 0usize;
    for (offset, ch) in response[body_start..].char_indices() {
        match ch {
            '[' => depth += 1,
            ']' if depth == 0 => {
                end = body_start + offset;
                break;
            }
            ']' => depth -= 1,
            _ => {}
        }
    }
    let body = &response[body_start..end];
    let mut pairs = Vec::new();
    for piece in body.split([',', ';', '\n']) {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let caps = entry_re()
            .captures(piece)
            .ok_or_else(|| ParseError::MalformedEntry(piece.to_string()))?;
        pairs.push((parse_index(&caps[1])?, parse_value(&caps[2])?));
    }
    Ok((pairs, opening.start()..end + 1))
}

fn extract_one_stage(response: &str) -> Result<(Vec<(usize, f64)>, Range<usize>), ParseError> {
    let mut pairs = Vec::new();
    let mut span: Option<Range<usize>> = None;
    for caps in one_stage_re().captures_iter(response) {
        let whole = caps.get(0).unwrap();
        pairs.push((parse_index(&caps[1])?, parse_value(&caps[2])?));
        span = Some(match span {
            None => whole.range(),
            Some(s) => s.start..whole.end(),
        });
    }
    match span {
        Some(span) => Ok((pairs, span)),
        // a "Score of SampleK:" marker whose value did not parse
        None if marker_re().is_match(response) => Err(ParseError::MalformedEntry(
            marker_re().find(response).unwrap().as_str().to_string(),
        )),
        None => Err(ParseError::MarkerNotFound),
    }
}

fn validate(
    pairs: Vec<(usize, f64)>,
    raw_span: Range<usize>,
    n: usize,
    criterion: &Criterion,
) -> Result<ParsedScores, ParseError> {
    let mut scores = BTreeMap::new();
    for &(index, value) in &pairs {
        if scores.insert(index, value).is_some() {
            return Err(ParseError::DuplicateIndex(index));
        }
    }
    if pairs.len() != n {
        return Err(ParseError::CountMismatch {
            expected: n,
            found: pairs.len(),
        });
    }
    if let Some(&index) = scores.keys().find(|&&k| k == 0 || k > n) {
        return Err(ParseError::UnexpectedIndex { index, n });
    }
    let mut clamped = BTreeSet::new();
    for (&index, value) in scores.iter_mut() {
        if !value.is_finite() {
            return Err(ParseError::OutOfRange { index, value: *value });
        }
        if criterion.format == ScoreFormat::Integer && value.fract() != 0.0 {
            return Err(ParseError::NonIntegerScore(index));
        }
        if !criterion.contains(*value) {
            let lo = criterion.score_min - CLAMP_TOLERANCE;
            let hi = criterion.score_max + CLAMP_TOLERANCE;
            if *value < lo || *value > hi {
                return Err(ParseError::OutOfRange { index, value: *value });
            }
            *value = criterion.clip(*value);
            clamped.insert(index);
        }
    }
    Ok(ParsedScores {
        scores,
        raw_span,
        clamped,
    })
}

/// Renders a score list the way the templates ask for it. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn format_scores(scores: &[f64], procedure: Procedure, format: ScoreFormat) -> String {
    let value = |v: f64| match format {
        ScoreFormat::Integer => format!("{}", v.round() as i64),
        ScoreFormat::Decimal => format!("{v}"),
    };
    match procedure {
        Procedure::OneStage => scores
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("Score of Sample{}:[{}]", i + 1, value(v)))
            .collect::<Vec<_>>()
            .join("\n"),
        Procedure::TwoStage | Procedure::ThreeStage => {
            let label = match format {
                ScoreFormat::Decimal => "Float Scores",
                ScoreFormat::Integer => "Scores",
            };
            let body = scores
                .iter()
                .enumerate()
                .map(|(i, &v)| format!("Sample{}:{}", i + 1, value(v)))
                .collect::<Vec<_>>()
                .join(", ");
            format!("{label}: [{body}]")
        }
    }
}
