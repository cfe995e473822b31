use std::path::PathBuf;

use batcheval::datasets::load_with_digest;
use batcheval::prompts::TemplateSet;
use clap::Args;
use serde_json::json;

use crate::failure::{Categorize, Failure};
use crate::run::pick_criterion;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset file (JSON lines).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Template directory to load on top of the bundled templates.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    /// Criterion that must be declared [default: any].
    #[arg(long)]
    pub criterion: Option<String>,
}

pub fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let (data, digest) = load_with_digest(&args.dataset).config()?;
    if let Some(name) = &args.criterion {
        pick_criterion(&data, Some(name))?;
    }
    let mut templates = TemplateSet::builtin();
    let loaded = match &args.template_dir {
        Some(dir) => templates.load_dir(dir).config()?,
        None => 0,
    };

    let task_templates: Vec<_> = templates.iter().filter(|t| t.task == data.name).collect();
    if let Some(t) = task_templates.first() {
        for s in &data.samples {
            if let Some(missing) = t.required_fields().iter().find(|f| !s.fields.contains_key(**f)) {
                return Err(Failure::config(format!(
                    "sample {:?} lacks field {missing:?} required by the {} templates",
                    s.id, data.name
                )));
            }
        }
    }

    let human: Vec<_> = data
        .criteria
        .iter()
        .map(|c| {
            let n = data.samples.iter().filter(|s| s.human_scores.contains_key(&c.name)).count();
            json!({ "name": c.name, "format": c.format, "range": [c.score_min, c.score_max], "human_scores": n })
        })
        .collect();
    let summary = json!({
        "dataset": args.dataset.display().to_string(),
        "name": data.name,
        "digest": digest,
        "samples": data.samples.len(),
        "criteria": human,
        "templates_loaded": loaded,
        "task_templates": task_templates.iter().map(|t| t.name()).collect::<Vec<_>>(),
    });
    crate::print_json(&summary)?;
    Ok(())
}
