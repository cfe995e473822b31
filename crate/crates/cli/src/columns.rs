//! Columnar (CSV) views of a diagnostics report.

use std::path::Path;

use batcheval::diagnostics::DiagReport;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_histogram(path: &Path, report: &DiagReport) -> csv::Result<()> {
    let h = &report.entropy.histogram;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_start", "bin_end", "count"])?;
    for (k, count) in h.counts.iter().enumerate() {
        let start = h.bin_start(k);
        w.write_record([start.to_string(), (start + h.width).to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decomposition(path: &Path, report: &DiagReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rounds", "samples", "err_ensemble", "err_mean", "variance"])?;
    for p in &report.decomposition {
        let d = &p.decomposition;
        w.write_record([
            p.rounds.to_string(),
            p.samples.to_string(),
            d.err_ensemble.to_string(),
            d.err_mean.to_string(),
            d.variance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias(path: &Path, report: &DiagReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "batch_bias", "reference_bias"])?;
    let reference = report.reference_bias.as_ref();
    for (r, b) in report.batch_bias.per_round.iter().enumerate() {
        let rb = reference.and_then(|s| s.per_round.get(r).copied().flatten());
        w.write_record([r.to_string(), opt(*b), opt(rb)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all three tables into `dir` and returns their file names.
pub fn write_all(dir: &Path, report: &DiagReport) -> csv::Result<[&'static str; 3]> {
    const NAMES: [&str; 3] = ["histogram.csv", "decomposition.csv", "batch_bias.csv"];
    write_histogram(&dir.join(NAMES[0]), report)?;
    write_decomposition(&dir.join(NAMES[1]), report)?;
    write_bias(&dir.join(NAMES[2]), report)?;
    Ok(NAMES)
}
