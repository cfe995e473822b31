//! Canonical line-delimited dataset files.
//!
//! Every line is one JSON object of one of three kinds:
//!
//! ```text
//! {"dataset": {"name": "fed", "provenance": "..."}}
//! {"criterion": {"name": "Coherent", "definition": "...", "anchors": [...], ...}}
//! {"id": "d1", "fields": {"Conversation": "..."}, "human": {"Coherent": 2.5}}
//! ```
//!
//! The header line is optional; criteria must be declared before samples
//! that carry human scores for them.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed;
use crate::types::{Criterion, Sample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
    pub criteria: Vec<Criterion>,
    pub provenance: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    name: String,
    #[serde(default)]
    provenance: String,
}

impl Dataset {
    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    /// Checks the invariants `load` enforces. Line numbers count header and
    /// criterion lines as `save` would write them.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let violation = |line: usize, reason: String| DatasetError::SchemaViolation { line, reason };
        for (i, c) in self.criteria.iter().enumerate() {
            c.validate().map_err(|e| violation(i + 2, e.to_string()))?;
        }
        let offset = self.criteria.len() + 2;
        let mut seen = HashSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            check_sample(s, &self.criteria, &mut seen).map_err(|r| violation(i + offset, r))?;
        }
        if self.samples.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header { name: self.name.clone(), provenance: self.provenance.clone() };
        out.push_str(&serde_json::json!({ "dataset": header }).to_string());
        out.push('\n');
        for c in &self.criteria {
            out.push_str(&serde_json::json!({ "criterion": c }).to_string());
            out.push('\n');
        }
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("samples serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn from_jsonl(text: &str, default_name: &str) -> Result<Self, DatasetError> {
        let mut dataset = Dataset {
            name: default_name.to_string(),
            samples: Vec::new(),
            criteria: Vec::new(),
            provenance: String::new(),
        };
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let violation = |reason: String| DatasetError::SchemaViolation { line, reason };
            if raw.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(raw).map_err(|e| violation(e.to_string()))?;
            let Value::Object(mut object) = value else {
                return Err(violation("record is not an object".into()));
            };
            if let Some(header) = object.remove("dataset") {
                let header: Header =
                    serde_json::from_value(header).map_err(|e| violation(e.to_string()))?;
                dataset.name = header.name;
                dataset.provenance = header.provenance;
            } else if let Some(criterion) = object.remove("criterion") {
                let c: Criterion =
                    serde_json::from_value(criterion).map_err(|e| violation(e.to_string()))?;
                c.validate().map_err(|e| violation(e.to_string()))?;
                if dataset.criterion(&c.name).is_some() {
                    return Err(violation(format!("criterion {:?} declared twice", c.name)));
                }
                dataset.criteria.push(c);
            } else {
                let sample: Sample = serde_json::from_value(Value::Object(object))
                    .map_err(|e| violation(e.to_string()))?;
                check_sample(&sample, &dataset.criteria, &mut seen).map_err(violation)?;
                dataset.samples.push(sample);
            }
        }
        if dataset.samples.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        Ok(dataset)
    }
}

fn check_sample(
    sample: &Sample,
    criteria: &[Criterion],
    seen: &mut HashSet<String>,
) -> Result<(), String> {
    sample.validate().map_err(|e| e.to_string())?;
    if !seen.insert(sample.id.clone()) {
        return Err(format!("duplicate sample id {:?}", sample.id));
    }
    for (name, &score) in &sample.human_scores {
        let c = criteria
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| format!("sample {:?}: undeclared criterion {name:?}", sample.id))?;
        if !c.contains(score) {
            return Err(format!(
                "sample {:?}: human score {score} outside [{}, {}] for {name:?}",
                sample.id, c.score_min, c.score_max
            ));
        }
    }
    Ok(())
}

/// Hex SHA-256 of raw dataset bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads and validates a dataset file, returning it with the digest of the
/// bytes actually read.
pub fn load_with_digest(path: &Path) -> Result<(Dataset, String), DatasetError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| DatasetError::SchemaViolation {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((Dataset::from_jsonl(&text, &stem)?, digest_bytes(&bytes)))
}

pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    Ok(load_with_digest(path)?.0)
}

/// `n` samples whose latent quality, uniform over the criterion range, is
/// stored as the human score. Each sample has one `Text` field naming its id.
pub fn synth(n: usize, criterion: &Criterion, seed: u64) -> Dataset {
    assert!(n >= 1, "synth needs at least one sample");
    let mut rng = seed::rng(seed, "synth", &[]);
    let width = (n - 1).to_string().len().max(4);
    let samples = (0..n)
        .map(|i| {
            let id = format!("syn-{i:0width$}");
            let q = rng.random_range(criterion.score_min..=criterion.score_max);
            Sample::new(id.clone())
                .with_field("Text", format!("Synthetic sample {id}."))
                .with_human_score(criterion.name.clone(), q)
        })
        .collect();
    Dataset {
        name: format!("synthetic-{n}"),
        samples,
        criteria: vec![criterion.clone()],
        provenance: format!("synthetic, seed {seed}, qualities uniform on [{}, {}]", criterion.score_min, criterion.score_max),
    }
}
