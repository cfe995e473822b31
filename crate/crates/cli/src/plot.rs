use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use batcheval::diagnostics::DiagReport;
use clap::Args;
use plotters::prelude::*;

use crate::columns;
use crate::diag::load_report;
use crate::failure::{Categorize, Category, Failure};

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Run directory written by `run`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset with human scores [default: the path recorded in the run manifest].
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Histogram bin width [default: 1 for integer scores, 0.1 for decimal].
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Output directory [default: <run>/plots].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type DrawResult = Result<(), Box<dyn std::error::Error>>;

const SIZE: (u32, u32) = (720, 480);

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn histogram_svg(path: &Path, report: &DiagReport) -> DrawResult {
    let h = &report.entropy.histogram;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let x_end = h.bin_start(h.counts.len());
    let y_max = h.counts.iter().copied().max().unwrap_or(0).max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Score histogram ({:.3} bits)", report.entropy.bits), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(h.min..x_end, 0u64..y_max + y_max / 10 + 1)?;
    chart.configure_mesh().x_desc("score").y_desc("count").draw()?;
    chart.draw_series(h.counts.iter().enumerate().map(|(k, &c)| {
        let x0 = h.bin_start(k);
        Rectangle::new([(x0, 0), (x0 + h.width, c)], BLUE.mix(0.6).filled())
    }))?;
    root.present()?;
    Ok(())
}

fn decomposition_svg(path: &Path, report: &DiagReport) -> DrawResult {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let pts = &report.decomposition;
    let max_r = pts.last().map_or(1, |p| p.rounds).max(1) as f64;
    let y_hi = pts
        .iter()
        .map(|p| p.decomposition.err_mean.max(p.decomposition.err_ensemble).max(p.decomposition.variance))
        .fold(0.0, f64::max);
    let (y0, y1) = padded(0.0, y_hi);
    let mut chart = ChartBuilder::on(&root)
        .caption("Error decomposition by rounds", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.5..max_r + 0.5, y0.max(0.0)..y1)?;
    chart.configure_mesh().x_desc("rounds").y_desc("squared error").draw()?;
    let series: [(&str, RGBColor, fn(&batcheval::metrics::Decomposition) -> f64); 3] = [
        ("ensemble error", RED, |d| d.err_ensemble),
        ("mean error", BLUE, |d| d.err_mean),
        ("variance", GREEN, |d| d.variance),
    ];
    for (label, color, get) in series {
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.rounds as f64, get(&p.decomposition))), color))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn bias_svg(path: &Path, report: &DiagReport) -> DrawResult {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let batch: Vec<(f64, f64)> = report
        .batch_bias
        .per_round
        .iter()
        .enumerate()
        .filter_map(|(r, b)| b.map(|b| (r as f64, b)))
        .collect();
    let reference: Vec<(f64, f64)> = report
        .reference_bias
        .iter()
        .flat_map(|s| s.per_round.iter().enumerate().filter_map(|(r, b)| b.map(|b| (r as f64, b))))
        .collect();
    let y_hi = batch.iter().chain(&reference).map(|p| p.1).fold(0.0, f64::max);
    let (_, y1) = padded(0.0, y_hi);
    let rounds = report.batch_bias.per_round.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Batch bias by round", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5..rounds - 0.5, 0.0..y1)?;
    chart.configure_mesh().x_desc("round").y_desc("bias").draw()?;
    for (label, color, points) in [("vs ensemble", BLUE, batch), ("vs human", RED, reference)] {
        if points.is_empty() {
            continue;
        }
        chart
            .draw_series(LineSeries::new(points.clone(), color).point_size(3))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

pub fn plot(args: PlotArgs) -> Result<(), Failure> {
    let report = load_report(&args.run, args.dataset.as_deref(), args.bin_width)?;
    let out = args.out.unwrap_or_else(|| args.run.join("plots"));
    fs::create_dir_all(&out).io()?;
    let draw = |name: &str, f: fn(&Path, &DiagReport) -> DrawResult| {
        f(&out.join(name), &report).map_err(|e| Failure::new(Category::Io, anyhow!("{name}: {e}")))
    };
    draw("histogram.svg", histogram_svg)?;
    draw("bias.svg", bias_svg)?;
    if !report.decomposition.is_empty() {
        draw("decomposition.svg", decomposition_svg)?;
    }
    columns::write_all(&out, &report).map_err(|e| Failure::new(Category::Io, anyhow!(e)))?;
    println!("{}", out.display());
    Ok(())
}
