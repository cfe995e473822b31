use std::fs;

use anyhow::anyhow;
use batcheval::artifacts::{write_json, write_results, DatasetRef, JudgeInfo, RunManifest, TranscriptLog, MANIFEST, TRANSCRIPTS};
use batcheval::datasets::{load_with_digest, Dataset};
use batcheval::engine::{run_batcheval_with, EngineError};
use batcheval::judge::{ApiConfig, ApiJudge, CostLedger, Judge, Money, PriceTable, SimJudge, SimJudgeConfig};
use batcheval::prompts::TemplateSet;
use batcheval::{Criterion, RunConfig};
use serde_json::json;

use crate::failure::{Categorize, Category, Failure};
use crate::options::{JudgeMode, RunOptions};

const DEFAULT_MODEL: &str = "gpt-4";

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn pick_criterion(dataset: &Dataset, name: Option<&str>) -> Result<Criterion, Failure> {
    match name {
        Some(name) => dataset
            .criterion(name)
            .cloned()
            .ok_or_else(|| Failure::config(format!("dataset {:?} declares no criterion {name:?}", dataset.name))),
        None => match dataset.criteria.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(Failure::config("dataset declares no criteria")),
            many => Err(Failure::config(format!(
                "dataset declares {} criteria; pick one with --criterion",
                many.len()
            ))),
        },
    }
}

fn engine_failure(e: EngineError) -> Failure {
    let category = match e {
        EngineError::JudgeUnavailable { .. } => Category::Judge,
        EngineError::EmptyTable => Category::Io,
        _ => Category::Config,
    };
    Failure::new(category, e)
}

fn build_config(o: &RunOptions) -> Result<RunConfig, Failure> {
    let d = RunConfig::default();
    let config = RunConfig {
        rounds: o.rounds.unwrap_or(d.rounds),
        batch_size: o.batch_size.unwrap_or(d.batch_size),
        strategy: o.strategy.unwrap_or(d.strategy),
        procedure: o.procedure.unwrap_or(d.procedure),
        temperature: o.temperature.unwrap_or(d.temperature),
        seed: o.seed.unwrap_or(d.seed),
        max_parse_retries: o.max_parse_retries.unwrap_or(d.max_parse_retries),
        max_in_flight: o.max_in_flight.unwrap_or(d.max_in_flight),
        basis: o.basis.unwrap_or(d.basis),
        max_output: d.max_output,
    };
    config.validate().config()?;
    Ok(config)
}

fn build_judge(
    o: &RunOptions,
    dataset: &Dataset,
    criterion: &Criterion,
    config: &RunConfig,
) -> Result<(Box<dyn Judge>, JudgeInfo), Failure> {
    match o.judge.unwrap_or(JudgeMode::Sim) {
        JudgeMode::Sim => {
            let mut quality = std::collections::HashMap::with_capacity(dataset.samples.len());
            for s in &dataset.samples {
                let q = s.human_scores.get(&criterion.name).ok_or_else(|| {
                    Failure::config(format!(
                        "the simulated judge needs a {:?} human score for every sample; {:?} has none",
                        criterion.name, s.id
                    ))
                })?;
                quality.insert(s.id.clone(), *q);
            }
            let (alpha, sigma) = (o.sim_alpha.unwrap_or(0.5), o.sim_sigma.unwrap_or(0.2));
            if !(sigma >= 0.0) || !alpha.is_finite() {
                return Err(Failure::config("sim_alpha must be finite and sim_sigma non-negative"));
            }
            let judge = SimJudge::new(
                SimJudgeConfig {
                    true_quality: quality,
                    bias_alpha: alpha,
                    noise_sigma: sigma,
                    seed: o.sim_seed.unwrap_or(config.seed),
                    format: criterion.format,
                },
                criterion,
                config.procedure,
            );
            let info = JudgeInfo { mode: "sim".into(), model: None, bias_alpha: Some(alpha), noise_sigma: Some(sigma) };
            Ok((Box::new(judge), info))
        }
        JudgeMode::Api => {
            let model = o.model.clone().unwrap_or_else(|| DEFAULT_MODEL.to_string());
            let cfg = ApiConfig::from_env(model.clone()).or_fail(Category::Judge)?;
            let info = JudgeInfo { mode: "api".into(), model: Some(model), bias_alpha: None, noise_sigma: None };
            Ok((Box::new(ApiJudge::new(cfg)), info))
        }
    }
}

pub fn run(options: RunOptions) -> Result<(), Failure> {
    let o = options.resolve()?;
    let dataset_path = o.dataset.clone().ok_or_else(|| Failure::config("no dataset given (--dataset)"))?;
    let out = o.out.clone().ok_or_else(|| Failure::config("no output directory given (--out)"))?;
    let (dataset, digest) = load_with_digest(&dataset_path).config()?;
    let mut criterion = pick_criterion(&dataset, o.criterion.as_deref())?;
    if let Some(format) = o.format {
        criterion.format = format;
    }
    let config = build_config(&o)?;

    let mut templates = TemplateSet::builtin();
    if let Some(dir) = &o.template_dir {
        templates.load_dir(dir).config()?;
    }
    let task = o.task.clone().unwrap_or_else(|| {
        if templates.get(&dataset.name, config.procedure, criterion.format).is_ok() {
            dataset.name.clone()
        } else {
            "generic".to_string()
        }
    });
    let template = templates.get(&task, config.procedure, criterion.format).config()?.clone();

    let prices = PriceTable::new(
        o.price_prompt.as_deref().unwrap_or("0"),
        o.price_completion.as_deref().unwrap_or("0"),
    )
    .map_err(|e| Failure::config(format!("price: {e}")))?;
    let mut ledger = CostLedger::new(prices);
    if let Some(budget) = &o.budget {
        let cap: Money = budget.parse().map_err(|e| Failure::config(format!("budget: {e}")))?;
        ledger = ledger.with_cap(cap);
    }
    let (judge, judge_info) = build_judge(&o, &dataset, &criterion, &config)?;
    let live = judge_info.mode != "sim";

    fs::create_dir_all(&out).io()?;
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        dataset: DatasetRef {
            path: dataset_path.display().to_string(),
            name: dataset.name.clone(),
            digest,
            samples: dataset.samples.len(),
        },
        criterion: criterion.clone(),
        templates: vec![template.name()],
        judge: judge_info,
        started: live.then(now),
        finished: None,
        outputs: RunManifest::default_outputs(),
    };
    let manifest_path = out.join(MANIFEST);
    write_json(&manifest_path, &manifest).io()?;

    let mut log = TranscriptLog::create(&out.join(TRANSCRIPTS)).io()?;
    let mut log_error = None;
    let result = run_batcheval_with(
        &dataset.samples,
        &criterion,
        &template,
        &config,
        judge.as_ref(),
        &ledger,
        &mut |t| {
            if log_error.is_none() {
                log_error = log.append(t).err();
            }
        },
    );
    log.finish().io()?;
    if let Some(e) = log_error {
        return Err(Failure::new(Category::Io, e));
    }
    let outcome = result.map_err(engine_failure)?;
    write_results(&out, &outcome).io()?;
    if live {
        manifest.finished = Some(now());
        write_json(&manifest_path, &manifest).io()?;
    }

    let summary = json!({
        "out": out.display().to_string(),
        "samples": dataset.samples.len(),
        "rounds": outcome.table.rounds_completed,
        "batches": outcome.total_batches,
        "failed_batches": outcome.failed_batches,
        "missing": outcome.missing,
        "calls": outcome.ledger.calls,
        "total_cost": outcome.ledger.total,
        "cost_per_item": outcome.ledger.per_item,
    });
    crate::print_json(&summary)?;
    if !outcome.missing.is_empty() {
        eprintln!(
            "warning: {} sample(s) never received a parseable score: {}",
            outcome.missing.len(),
            outcome.missing.join(", ")
        );
    }
    if outcome.failed_batches > 0 && outcome.failed_batches * 2 >= outcome.total_batches {
        return Err(Failure::new(
            Category::ParseExhaustion,
            anyhow!(
                "{} of {} batches exhausted their parse retries",
                outcome.failed_batches,
                outcome.total_batches
            ),
        ));
    }
    Ok(())
}
