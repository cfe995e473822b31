//! On-disk layout of a run directory.
//!
//! ```text
//! manifest.json      configuration, dataset digest, templates, judge
//! transcripts.jsonl  one exchange per line
//! score_table.json
//! ensemble.json      ensemble scores and ids left unscored
//! partitions.json    batches of every round
//! ledger.json        token and cost totals
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::Partition;
use crate::engine::{RunConfig, RunOutcome, ScoreTable, Transcript};
use crate::judge::LedgerSnapshot;
use crate::types::Criterion;

pub const MANIFEST: &str = "manifest.json";
pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const SCORE_TABLE: &str = "score_table.json";
pub const ENSEMBLE: &str = "ensemble.json";
pub const PARTITIONS: &str = "partitions.json";
pub const LEDGER: &str = "ledger.json";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing artifact {}", .0.display())]
    MissingArtifacts(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Malformed { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    /// As given on the command line.
    pub path: String,
    pub name: String,
    /// Hex SHA-256 of the bytes read.
    pub digest: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeInfo {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub dataset: DatasetRef,
    pub criterion: Criterion,
    pub templates: Vec<String>,
    pub judge: JudgeInfo,
    /// Wall-clock timestamps; left out for simulated runs so reruns are
    /// byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    /// Artifact name to path relative to the run directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn default_outputs() -> BTreeMap<String, String> {
        [
            ("transcripts", TRANSCRIPTS),
            ("score_table", SCORE_TABLE),
            ("ensemble", ENSEMBLE),
            ("partitions", PARTITIONS),
            ("ledger", LEDGER),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub scores: BTreeMap<String, f64>,
    pub missing: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| ArtifactError::Malformed { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ArtifactError::MissingArtifacts(path.to_path_buf()))
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    serde_json::from_str(&text).map_err(|source| ArtifactError::Malformed { path: path.to_path_buf(), source })
}

/// Appends transcripts as they arrive.
pub struct TranscriptLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TranscriptLog {
    pub fn create(path: &Path) -> Result<Self, ArtifactError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn append(&mut self, t: &Transcript) -> Result<(), ArtifactError> {
        let line = serde_json::to_string(t)
            .map_err(|source| ArtifactError::Malformed { path: self.path.clone(), source })?;
        writeln!(self.out, "{line}").map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), ArtifactError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>, ArtifactError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ArtifactError::MissingArtifacts(path.to_path_buf()))
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|source| ArtifactError::Malformed { path: path.to_path_buf(), source })?,
        );
    }
    Ok(out)
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub manifest: RunManifest,
    pub table: ScoreTable,
    pub ensemble: EnsembleFile,
    pub partitions: Vec<Partition>,
    pub ledger: LedgerSnapshot,
    pub transcripts: Vec<Transcript>,
}

/// Writes every artifact except the manifest and the transcript log, which
/// are written before and during the run.
pub fn write_results(dir: &Path, outcome: &RunOutcome) -> Result<(), ArtifactError> {
    write_json(&dir.join(SCORE_TABLE), &outcome.table)?;
    write_json(
        &dir.join(ENSEMBLE),
        &EnsembleFile { scores: outcome.ensemble.clone(), missing: outcome.missing.clone() },
    )?;
    write_json(&dir.join(PARTITIONS), &outcome.partitions)?;
    write_json(&dir.join(LEDGER), &outcome.ledger)
}

pub fn read_run_dir(dir: &Path) -> Result<RunArtifacts, ArtifactError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST))?;
    let at = |key: &str, default: &str| dir.join(manifest.outputs.get(key).map_or(default, String::as_str));
    Ok(RunArtifacts {
        table: read_json(&at("score_table", SCORE_TABLE))?,
        ensemble: read_json(&at("ensemble", ENSEMBLE))?,
        partitions: read_json(&at("partitions", PARTITIONS))?,
        ledger: read_json(&at("ledger", LEDGER))?,
        transcripts: read_transcripts(&at("transcripts", TRANSCRIPTS))?,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::synth;
    use crate::engine::run_batcheval;
    use crate::judge::{CostLedger, PriceTable, SimJudge, SimJudgeConfig};
    use crate::prompts::TemplateSet;
    use crate::simulate::synthetic_criterion;
    use crate::types::{Procedure, ScoreFormat};

    #[test]
    fn run_dir_round_trip() {
        let criterion = synthetic_criterion(ScoreFormat::Decimal);
        let d = synth(15, &criterion, 2);
        let judge = SimJudge::new(
            SimJudgeConfig {
                true_quality: d.samples.iter().map(|s| (s.id.clone(), s.human_scores["Quality"])).collect(),
                bias_alpha: 0.5,
                noise_sigma: 0.2,
                seed: 2,
                format: ScoreFormat::Decimal,
            },
            &criterion,
            Procedure::TwoStage,
        );
        let templates = TemplateSet::builtin();
        let template = templates.get("generic", Procedure::TwoStage, ScoreFormat::Decimal).unwrap();
        let config = RunConfig { rounds: 2, batch_size: 4, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest {
            version: "test".into(),
            config: config.clone(),
            dataset: DatasetRef { path: "x.jsonl".into(), name: d.name.clone(), digest: "00".into(), samples: 15 },
            criterion: criterion.clone(),
            templates: vec![template.name()],
            judge: JudgeInfo { mode: "sim".into(), model: None, bias_alpha: Some(0.5), noise_sigma: Some(0.2) },
            started: None,
            finished: None,
            outputs: RunManifest::default_outputs(),
        };
        write_json(&dir.path().join(MANIFEST), &manifest).unwrap();
        let mut log = TranscriptLog::create(&dir.path().join(TRANSCRIPTS)).unwrap();
        let ledger = CostLedger::new(PriceTable::default());
        let outcome = crate::engine::run_batcheval_with(
            &d.samples, &criterion, template, &config, &judge, &ledger,
            &mut |t| log.append(t).unwrap(),
        )
        .unwrap();
        log.finish().unwrap();
        write_results(dir.path(), &outcome).unwrap();

        let back = read_run_dir(dir.path()).unwrap();
        assert_eq!(back.manifest, manifest);
        assert_eq!(back.table, outcome.table);
        assert_eq!(back.ensemble.scores, outcome.ensemble);
        assert_eq!(back.partitions, outcome.partitions);
        assert_eq!(back.ledger, outcome.ledger);
        assert_eq!(back.transcripts, outcome.transcripts);
        let again = run_batcheval(&d.samples, &criterion, template, &config, &judge, &CostLedger::new(PriceTable::default())).unwrap();
        assert_eq!(again.table, back.table);
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_run_dir(dir.path()), Err(ArtifactError::MissingArtifacts(_))));
    }
}
