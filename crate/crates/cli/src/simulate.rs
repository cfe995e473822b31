use std::io::Write;

use anyhow::anyhow;
use batcheval::simulate::{run_sweep, SweepRow, SweepSpec};
use batcheval::{ScoreFormat, Strategy};
use serde::Serialize;

use crate::failure::{Categorize, Category, Failure};
use crate::options::SimulateOptions;

/// Mean of each metric over the seeds of one setting.
#[derive(Debug, Serialize)]
struct MeanRow {
    strategy: Strategy,
    batch_size: usize,
    rounds: usize,
    alpha: f64,
    sigma: f64,
    format: ScoreFormat,
    seeds: usize,
    pearson: Option<f64>,
    spearman: Option<f64>,
    batch_bias: Option<f64>,
    reference_bias: Option<f64>,
    entropy: f64,
    variance: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(rows: &[SweepRow]) -> Vec<MeanRow> {
    // rows of one setting are adjacent, seeds vary fastest
    let same = |a: &SweepRow, b: &SweepRow| {
        (a.strategy, a.batch_size, a.rounds, a.format) == (b.strategy, b.batch_size, b.rounds, b.format)
            && a.alpha.to_bits() == b.alpha.to_bits()
            && a.sigma.to_bits() == b.sigma.to_bits()
    };
    rows.chunk_by(|a, b| same(a, b))
        .map(|g| {
            let f = &g[0];
            MeanRow {
                strategy: f.strategy,
                batch_size: f.batch_size,
                rounds: f.rounds,
                alpha: f.alpha,
                sigma: f.sigma,
                format: f.format,
                seeds: g.len(),
                pearson: mean(g.iter().map(|r| r.pearson)),
                spearman: mean(g.iter().map(|r| r.spearman)),
                batch_bias: mean(g.iter().map(|r| r.batch_bias)),
                reference_bias: mean(g.iter().map(|r| r.reference_bias)),
                entropy: mean(g.iter().map(|r| Some(r.entropy))).unwrap_or(0.0),
                variance: mean(g.iter().map(|r| r.variance)),
            }
        })
        .collect()
}

fn spec(o: &SimulateOptions) -> SweepSpec {
    let d = SweepSpec::default();
    let seeds = match (&o.seeds, o.seed_count) {
        (Some(seeds), _) => seeds.clone(),
        (None, Some(n)) => (0..n).collect(),
        (None, None) => d.seeds,
    };
    SweepSpec {
        samples: o.samples.unwrap_or(d.samples),
        strategies: o.strategies.clone().unwrap_or(d.strategies),
        batch_sizes: o.batch_sizes.clone().unwrap_or(d.batch_sizes),
        rounds: o.rounds.clone().unwrap_or(d.rounds),
        alphas: o.alphas.clone().unwrap_or(d.alphas),
        sigmas: o.sigmas.clone().unwrap_or(d.sigmas),
        formats: o.formats.clone().unwrap_or(d.formats),
        procedure: o.procedure.unwrap_or(d.procedure),
        seeds,
    }
}

fn write_rows<T: Serialize>(sink: impl Write, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(options: SimulateOptions) -> Result<(), Failure> {
    let o = options.resolve()?;
    let rows = run_sweep(&spec(&o)).config()?;
    let sink: Box<dyn Write> = match &o.out {
        Some(path) => Box::new(std::fs::File::create(path).io()?),
        None => Box::new(std::io::stdout().lock()),
    };
    let written = if o.aggregate { write_rows(sink, &aggregate(&rows)) } else { write_rows(sink, &rows) };
    written.map_err(|e| Failure::new(Category::Io, anyhow!(e)))
}
