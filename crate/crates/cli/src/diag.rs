use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use batcheval::artifacts::{read_run_dir, write_json, ArtifactError, RunArtifacts};
use batcheval::datasets::load_with_digest;
use batcheval::diagnostics::{diagnose, DiagReport};
use clap::Args;

use crate::columns;
use crate::failure::{Categorize, Category, Failure};

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Run directory written by `run`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset with human scores [default: the path recorded in the run manifest].
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Histogram bin width [default: 1 for integer scores, 0.1 for decimal].
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Directory for report.json and the CSV tables [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn read_run(dir: &Path) -> Result<RunArtifacts, Failure> {
    read_run_dir(dir).map_err(|e| {
        let category = match e {
            ArtifactError::Io { .. } => Category::Io,
            _ => Category::Config,
        };
        Failure::new(category, e)
    })
}

/// Human scores for the run's criterion, from `dataset` or the manifest's
/// recorded path. The file must match the digest the run recorded.
fn reference(run: &RunArtifacts, dataset: Option<&Path>) -> Result<BTreeMap<String, f64>, Failure> {
    let path = dataset.map_or_else(|| PathBuf::from(&run.manifest.dataset.path), Path::to_path_buf);
    let (data, digest) = load_with_digest(&path).config()?;
    if digest != run.manifest.dataset.digest {
        return Err(Failure::config(format!(
            "{} does not match the dataset this run scored (digest {} vs {})",
            path.display(),
            digest,
            run.manifest.dataset.digest
        )));
    }
    let name = &run.manifest.criterion.name;
    Ok(data
        .samples
        .iter()
        .filter_map(|s| s.human_scores.get(name).map(|h| (s.id.clone(), *h)))
        .collect())
}

pub fn load_report(
    run_dir: &Path,
    dataset: Option<&Path>,
    bin_width: Option<f64>,
) -> Result<DiagReport, Failure> {
    if let Some(w) = bin_width {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Failure::config("--bin-width must be positive"));
        }
    }
    let run = read_run(run_dir)?;
    let human = reference(&run, dataset)?;
    let reference = (!human.is_empty()).then_some(&human);
    if reference.is_none() {
        eprintln!("warning: no human scores for {:?}; correlation and decomposition skipped", run.manifest.criterion.name);
    }
    diagnose(&run.table, &run.partitions, &run.manifest.criterion, reference, bin_width).config()
}

pub fn diag(args: DiagArgs) -> Result<(), Failure> {
    let report = load_report(&args.run, args.dataset.as_deref(), args.bin_width)?;
    let out = args.out.unwrap_or_else(|| args.run.clone());
    fs::create_dir_all(&out).io()?;
    write_json(&out.join("report.json"), &report).io()?;
    columns::write_all(&out, &report).map_err(|e| Failure::new(Category::Io, anyhow!(e)))?;
    crate::print_json(&report)?;
    Ok(())
}
