use std::path::PathBuf;

use batcheval::datasets::load;
use batcheval::noise::{perturb_keyed, Lexicon, NoiseConfig, PerturbStats};
use clap::Args;
use serde_json::json;

use crate::failure::{Categorize, Failure};

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Dataset to perturb.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the perturbed dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-token deletion probability.
    #[arg(long, default_value_t = 0.05)]
    pub p_delete: f64,
    /// Per-token synonym substitution probability.
    #[arg(long, default_value_t = 0.05)]
    pub p_synonym: f64,
    /// Synonym file, one `word: syn1, syn2` per line [default: bundled lexicon].
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated fields to perturb [default: all].
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
}

pub fn perturb(args: PerturbArgs) -> Result<(), Failure> {
    let lexicon = match &args.lexicon {
        Some(path) => Lexicon::load(path).config()?,
        None => Lexicon::bundled(),
    };
    let cfg = NoiseConfig { p_delete: args.p_delete, p_synonym: args.p_synonym, lexicon, seed: args.seed };
    cfg.validate().config()?;
    let mut data = load(&args.dataset).config()?;
    if let Some(fields) = &args.fields {
        for f in fields {
            if !data.samples.iter().any(|s| s.fields.contains_key(f)) {
                return Err(Failure::config(format!("no sample has a field {f:?}")));
            }
        }
    }

    let mut total = PerturbStats::default();
    for sample in &mut data.samples {
        for (field, text) in sample.fields.iter_mut() {
            if args.fields.as_ref().is_some_and(|fs| !fs.contains(field)) {
                continue;
            }
            let (noisy, stats) = perturb_keyed(text, &cfg, &format!("{}/{field}", sample.id));
            *text = noisy;
            total.tokens += stats.tokens;
            total.deleted += stats.deleted;
            total.substituted += stats.substituted;
        }
    }
    let note = format!(
        "perturbed: p_delete={} p_synonym={} seed={}",
        args.p_delete, args.p_synonym, args.seed
    );
    data.provenance = if data.provenance.is_empty() { note } else { format!("{}; {note}", data.provenance) };
    data.name = format!("{}-noisy", data.name);
    data.save(&args.out).io()?;

    let summary = json!({
        "out": args.out.display().to_string(),
        "samples": data.samples.len(),
        "tokens": total.tokens,
        "deleted": total.deleted,
        "substituted": total.substituted,
    });
    crate::print_json(&summary)?;
    Ok(())
}
