//! Domain types shared by every stage of a batch evaluation run.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("sample id is empty")]
    EmptyId,
    #[error("sample {0} has no fields")]
    NoFields(String),
    #[error("sample {id}: field {field:?} is empty")]
    EmptyField { id: String, field: String },
    #[error("criterion {0}: score_min must be below score_max")]
    InvalidRange(String),
    #[error("criterion {0}: at least one anchor is required")]
    NoAnchors(String),
    #[error("criterion {name}: anchor level {level} outside [{min}, {max}]")]
    AnchorOutOfRange {
        name: String,
        level: f64,
        min: f64,
        max: f64,
    },
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
}

/// One evaluable unit: a dialogue turn, a story, a summary sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Field name to text, in display order.
    pub fields: IndexMap<String, String>,
    #[serde(default, rename = "human", skip_serializing_if = "BTreeMap::is_empty")]
    pub human_scores: BTreeMap<String, f64>,
}

impl Sample {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            fields: IndexMap::new(),
            human_scores: BTreeMap::new(),
        }
    }

    pub fn with_field(mut self, name: impl Into<String>, text: impl Into<String>) -> Self {
        self.fields.insert(name.into(), text.into());
        self
    }

    pub fn with_human_score(mut self, criterion: impl Into<String>, score: f64) -> Self {
        self.human_scores.insert(criterion.into(), score);
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::EmptyId);
        }
        if self.fields.is_empty() {
            return Err(ValidationError::NoFields(self.id.clone()));
        }
        for (name, text) in &self.fields {
            if text.trim().is_empty() {
                return Err(ValidationError::EmptyField {
                    id: self.id.clone(),
                    field: name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFormat {
    Integer,
    Decimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Analyze and score each sample in order.
    OneStage,
    /// Analyze every sample, then score all of them.
    TwoStage,
    /// Analyze, rank, then score.
    ThreeStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Homogeneous,
    Heterogeneous,
    /// Keep the first-round random partition for every round. A control
    /// for diversity comparisons, not one of the evaluated strategies.
    Fixed,
}

macro_rules! text_enum {
    ($ty:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($ty::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = ValidationError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($text => Ok($ty::$variant),)+
                    _ => Err(ValidationError::UnknownVariant {
                        kind: $kind,
                        value: s.to_string(),
                    }),
                }
            }
        }
    };
}

pub(crate) use text_enum;

text_enum!(ScoreFormat, "score format", { Integer => "integer", Decimal => "decimal" });
text_enum!(Procedure, "procedure", {
    OneStage => "one_stage",
    TwoStage => "two_stage",
    ThreeStage => "three_stage",
});
text_enum!(Strategy, "strategy", {
    Random => "random",
    Homogeneous => "homogeneous",
    Heterogeneous => "heterogeneous",
    Fixed => "fixed",
});

/// A score level and the bullet text describing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub level: f64,
    /// Rendered verbatim as one "- ..." bullet of the criterion block.
    pub description: String,
}

/// A named quality dimension with its score range and scoring format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub definition: String,
    pub anchors: Vec<Anchor>,
    pub score_min: f64,
    pub score_max: f64,
    pub format: ScoreFormat,
    /// Overrides the generated heading line (name plus range), for criteria
    /// whose wording does not follow the standard shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
}

impl Criterion {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.score_min < self.score_max) {
            return Err(ValidationError::InvalidRange(self.name.clone()));
        }
        if self.anchors.is_empty() {
            return Err(ValidationError::NoAnchors(self.name.clone()));
        }
        for anchor in &self.anchors {
            if !(self.score_min..=self.score_max).contains(&anchor.level) {
                return Err(ValidationError::AnchorOutOfRange {
                    name: self.name.clone(),
                    level: anchor.level,
                    min: self.score_min,
                    max: self.score_max,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, score: f64) -> bool {
        (self.score_min..=self.score_max).contains(&score)
    }

    pub fn clip(&self, score: f64) -> f64 {
        score.clamp(self.score_min, self.score_max)
    }

    /// Heading line, e.g. `Coherence (floating point numbers within the interval [1,3]):`.
    pub fn heading_line(&self) -> String {
        if let Some(heading) = &self.heading {
            return heading.clone();
        }
        let (lo, hi) = (fmt_bound(self.score_min), fmt_bound(self.score_max));
        match self.format {
            ScoreFormat::Decimal => format!(
                "{} (floating point numbers within the interval [{lo},{hi}]):",
                self.name
            ),
            ScoreFormat::Integer => format!("{} ({lo}-{hi}):", self.name),
        }
    }

    /// Full criterion block: heading, definition, then one bullet per anchor.
    pub fn block(&self) -> String {
        let mut out = format!("{} {}", self.heading_line(), self.definition);
        for anchor in &self.anchors {
            out.push_str("\n\n- ");
            out.push_str(&anchor.description);
        }
        out
    }
}

fn fmt_bound(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
