//! Input perturbation for robustness experiments: random token deletion
//! and synonym substitution over whitespace tokens.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{pearson, spearman, MetricsError};
use crate::seed;

const BUNDLED_LEXICON: &str = include_str!("../assets/lexicon.tsv");

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("lexicon line {line}: {reason}")]
    BadLexicon { line: usize, reason: String },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Lowercase word to its synonyms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon(BTreeMap<String, Vec<String>>);

impl Lexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    /// One entry per line: `word<TAB>syn1,syn2,...`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, NoiseError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |reason: &str| NoiseError::BadLexicon {
                line: i + 1,
                reason: reason.to_string(),
            };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let word = word.trim().to_lowercase();
            if word.is_empty() {
                return Err(bad("empty word"));
            }
            let syns: Vec<String> = syns
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if syns.is_empty() {
                return Err(bad("no synonyms"));
            }
            map.insert(word, syns);
        }
        Ok(Lexicon(map))
    }

    pub fn load(path: &Path) -> Result<Self, NoiseError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.0.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub p_delete: f64,
    pub p_synonym: f64,
    pub lexicon: Lexicon,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            p_delete: 0.05,
            p_synonym: 0.05,
            lexicon: Lexicon::bundled(),
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        for p in [self.p_delete, self.p_synonym] {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::BadProbability(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbStats {
    pub tokens: usize,
    pub deleted: usize,
    pub substituted: usize,
}

/// Splits `token` into leading punctuation, word core and trailing punctuation.
fn split_core(token: &str) -> (&str, &str, &str) {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(start);
    (&token[..start], &token[start..end.max(start)], &token[end.max(start)..])
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Perturbs `text`, using a stream keyed by `cfg.seed` and `key` so
/// different texts under one seed get independent noise. Output tokens are
/// joined by single spaces.
pub fn perturb_keyed(text: &str, cfg: &NoiseConfig, key: &str) -> (String, PerturbStats) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut stats = PerturbStats { tokens: tokens.len(), ..Default::default() };
    if tokens.is_empty() {
        return (String::new(), stats);
    }
    let mut rng = seed::rng(cfg.seed, "perturb", &[key.as_bytes()]);
    let keep: Vec<bool> = tokens.iter().map(|_| !rng.random_bool(cfg.p_delete)).collect();
    let mut kept: Vec<usize> = (0..tokens.len()).filter(|&i| keep[i]).collect();
    if kept.is_empty() {
        kept.push(rng.random_range(0..tokens.len()));
    }
    stats.deleted = tokens.len() - kept.len();
    let mut out = Vec::with_capacity(kept.len());
    for i in kept {
        let token = tokens[i];
        let (lead, core, trail) = split_core(token);
        let replaced = cfg
            .lexicon
            .get(core)
            .filter(|_| rng.random_bool(cfg.p_synonym))
            .and_then(|syns| syns.choose(&mut rng));
        match replaced {
            Some(syn) => {
                stats.substituted += 1;
                out.push(format!("{lead}{}{trail}", match_case(core, syn)));
            }
            None => out.push(token.to_string()),
        }
    }
    (out.join(" "), stats)
}

pub fn perturb(text: &str, cfg: &NoiseConfig) -> String {
    perturb_keyed(text, cfg, "").0
}

/// Correlation with human scores before minus after noise, for Pearson and
/// Spearman. Positive values mean the noise hurt.
pub fn robustness_delta(
    clean: &BTreeMap<String, f64>,
    noisy: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
) -> Result<(f64, f64), NoiseError> {
    let same_keys = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| {
        a.len() == b.len() && a.keys().zip(b.keys()).all(|(x, y)| x == y)
    };
    if !same_keys(clean, human) || !same_keys(noisy, human) {
        return Err(MetricsError::KeyMismatch.into());
    }
    let c: Vec<f64> = clean.values().copied().collect();
    let n: Vec<f64> = noisy.values().copied().collect();
    let h: Vec<f64> = human.values().copied().collect();
    Ok((
        pearson(&c, &h)?.r - pearson(&n, &h)?.r,
        spearman(&c, &h)?.r - spearman(&n, &h)?.r,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::{Binomial, DiscreteCDF};

    fn cfg(p_delete: f64, p_synonym: f64, lexicon: Lexicon) -> NoiseConfig {
        NoiseConfig { p_delete, p_synonym, lexicon, seed: 42 }
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let text = "the good movie was very funny";
        assert_eq!(perturb(text, &cfg(0.0, 0.0, Lexicon::bundled())), text);
    }

    #[test]
    fn full_deletion_keeps_one_token() {
        let text = "one two three four five six seven eight nine ten";
        let (out, stats) = perturb_keyed(text, &cfg(1.0, 0.0, Lexicon::default()), "k");
        assert_eq!(out.split_whitespace().count(), 1);
        assert!(text.split_whitespace().any(|t| t == out));
        assert_eq!(stats.deleted, 9);
    }

    #[test]
    fn substitution_keeps_case_and_punctuation() {
        let lex = Lexicon::parse("good\tfine\n").unwrap();
        let out = perturb("Good, good.", &cfg(0.0, 1.0, lex));
        assert_eq!(out, "Fine, fine.");
        assert_eq!(split_core("(hello)!"), ("(", "hello", ")!"));
        assert_eq!(split_core("..."), ("...", "", ""));
    }

    #[test]
    fn deletion_count_within_binomial_interval() {
        let words: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let (_, stats) = perturb_keyed(&text, &cfg(0.05, 0.05, Lexicon::bundled()), "corpus");
        let b = Binomial::new(0.05, 1000).unwrap();
        let (lo, hi) = (b.inverse_cdf(0.005), b.inverse_cdf(0.995));
        assert!(
            (lo..=hi).contains(&(stats.deleted as u64)),
            "{} outside [{lo}, {hi}]",
            stats.deleted
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let text = "a good big happy story about a fast car and a smart friend";
        let c = cfg(0.3, 0.5, Lexicon::bundled());
        assert_eq!(perturb(text, &c), perturb(text, &c));
        let other = NoiseConfig { seed: 43, ..c.clone() };
        let differs = (0..20).any(|k| {
            perturb_keyed(text, &c, &k.to_string()).0 != perturb_keyed(text, &other, &k.to_string()).0
        });
        assert!(differs);
    }

    #[test]
    fn empty_lexicon_only_deletes() {
        let text = "good bad big small happy sad";
        let (out, stats) = perturb_keyed(text, &cfg(0.4, 1.0, Lexicon::default()), "x");
        assert_eq!(stats.substituted, 0);
        let mut rest = text.split_whitespace();
        for token in out.split_whitespace() {
            assert!(rest.any(|t| t == token), "{token} is not an original token in order");
        }
    }

    #[test]
    fn lexicon_errors() {
        assert!(matches!(Lexicon::parse("word"), Err(NoiseError::BadLexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("# c\nword\t ,"), Err(NoiseError::BadLexicon { line: 2, .. })));
        assert_eq!(Lexicon::bundled().len(), 50);
    }

    #[test]
    fn delta_cases() {
        let ids: Vec<String> = (0..40).map(|i| format!("s{i:02}")).collect();
        let human: BTreeMap<String, f64> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as f64)).collect();
        let clean: BTreeMap<String, f64> = human.iter().map(|(k, v)| (k.clone(), v * 0.5 + 1.0)).collect();
        assert_eq!(robustness_delta(&clean, &clean, &human).unwrap(), (0.0, 0.0));

        let mut rng = seed::rng(9, "delta", &[]);
        let normal = Normal::new(0.0, 25.0).unwrap();
        let noisy: BTreeMap<String, f64> =
            clean.iter().map(|(k, v)| (k.clone(), v + normal.sample(&mut rng))).collect();
        let (dp, ds) = robustness_delta(&clean, &noisy, &human).unwrap();
        assert!(dp > 0.0 && ds > 0.0);

        let mut short = clean.clone();
        short.remove("s00");
        assert!(robustness_delta(&short, &clean, &human).is_err());
    }
}
