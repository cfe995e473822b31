//! Batch prompt templates and rendering.
//!
//! A template body is UTF-8 text with four placeholders:
//! `{{number}}` (batch size), `{{Data}}` (the numbered sample block),
//! `{{Criterion}}` (criterion heading, definition and anchors) and
//! `{{Metric}}` (criterion name). Template files are named
//! `<task>.<procedure>.<format>.txt`.
//!
//! The sample block renders sample `k` as a `Sample k:` line followed by
//! each field as `<Field name>:` and its text on the next line. Fields and
//! samples are separated by blank lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Anchor, Criterion, Procedure, Sample, ScoreFormat};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot render an empty batch")]
    EmptyBatch,
    #[error("sample {id} has no usable field {field:?}")]
    FieldMissing { id: String, field: String },
    #[error("template {name}: missing placeholder {placeholder}")]
    MissingPlaceholder { name: String, placeholder: &'static str },
    #[error("template file name {0:?} is not <task>.<procedure>.<format>.txt")]
    BadFileName(String),
    #[error("no template for task {task:?}, {procedure}, {format}")]
    NotFound {
        task: String,
        procedure: Procedure,
        format: ScoreFormat,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: String,
    pub procedure: Procedure,
    pub format: ScoreFormat,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(
        task: impl Into<String>,
        procedure: Procedure,
        format: ScoreFormat,
        body: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let template = Self {
            task: task.into(),
            procedure,
            format,
            body: body.into(),
        };
        for placeholder in ["{{number}}", "{{Data}}", "{{Criterion}}"] {
            if !template.body.contains(placeholder) {
                return Err(PromptError::MissingPlaceholder {
                    name: template.name(),
                    placeholder,
                });
            }
        }
        Ok(template)
    }

    /// Stable identifier, also the asset file stem.
    pub fn name(&self) -> String {
        format!("{}.{}.{}", self.task, self.procedure, self.format)
    }

    /// Fields a sample must provide for this template, in display order.
    /// Empty means every field of the sample is shown.
    pub fn required_fields(&self) -> &'static [&'static str] {
        task_fields(&self.task)
    }
}

fn task_fields(task: &str) -> &'static [&'static str] {
    match task {
        "topical_chat" => &["Conversation", "Response"],
        "fed" => &["Conversation"],
        "hanna" => &["Prompt", "Story"],
        "qags" => &["Article", "Sentence"],
        _ => &[],
    }
}

const BUILTIN_FILES: &[(&str, &str)] = &[
    ("fed.two_stage.decimal.txt", include_str!("../templates/fed.two_stage.decimal.txt")),
    ("generic.one_stage.decimal.txt", include_str!("../templates/generic.one_stage.decimal.txt")),
    ("generic.one_stage.integer.txt", include_str!("../templates/generic.one_stage.integer.txt")),
    ("generic.three_stage.decimal.txt", include_str!("../templates/generic.three_stage.decimal.txt")),
    ("generic.three_stage.integer.txt", include_str!("../templates/generic.three_stage.integer.txt")),
    ("generic.two_stage.decimal.txt", include_str!("../templates/generic.two_stage.decimal.txt")),
    ("generic.two_stage.integer.txt", include_str!("../templates/generic.two_stage.integer.txt")),
    ("hanna.two_stage.decimal.txt", include_str!("../templates/hanna.two_stage.decimal.txt")),
    ("qags.two_stage.decimal.txt", include_str!("../templates/qags.two_stage.decimal.txt")),
    ("topical_chat.one_stage.decimal.txt", include_str!("../templates/topical_chat.one_stage.decimal.txt")),
    ("topical_chat.three_stage.decimal.txt", include_str!("../templates/topical_chat.three_stage.decimal.txt")),
    ("topical_chat.two_stage.decimal.txt", include_str!("../templates/topical_chat.two_stage.decimal.txt")),
    ("topical_chat.two_stage.integer.txt", include_str!("../templates/topical_chat.two_stage.integer.txt")),
];

fn parse_file_name(file_name: &str) -> Result<(String, Procedure, ScoreFormat), PromptError> {
    let bad = || PromptError::BadFileName(file_name.to_string());
    let stem = file_name.strip_suffix(".txt").ok_or_else(bad)?;
    let mut parts = stem.split('.');
    let (Some(task), Some(procedure), Some(format), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    if task.is_empty() {
        return Err(bad());
    }
    Ok((
        task.to_string(),
        procedure.parse().map_err(|_| bad())?,
        format.parse().map_err(|_| bad())?,
    ))
}

/// Every bundled template.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    BUILTIN_FILES
        .iter()
        .map(|(file, body)| {
            let (task, procedure, format) =
                parse_file_name(file).expect("bundled template names are well formed");
            PromptTemplate::new(task, procedure, format, *body)
                .expect("bundled templates carry every placeholder")
        })
        .collect()
}

/// Templates keyed by (task, procedure, format).
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<(String, Procedure, ScoreFormat), PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let mut set = Self::default();
        for t in builtin_templates() {
            set.insert(t);
        }
        set
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(
            (template.task.clone(), template.procedure, template.format),
            template,
        );
    }

    /// Loads every `*.txt` file in `dir`, replacing same-named templates.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, PromptError> {
        let io = |source| PromptError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        paths.sort();
        for path in &paths {
            let file_name = path.file_name().unwrap_or_default().to_string_lossy();
            let (task, procedure, format) = parse_file_name(&file_name)?;
            let body = fs::read_to_string(path).map_err(|source| PromptError::Io {
                path: path.clone(),
                source,
            })?;
            self.insert(PromptTemplate::new(task, procedure, format, body)?);
        }
        Ok(paths.len())
    }

    pub fn get(
        &self,
        task: &str,
        procedure: Procedure,
        format: ScoreFormat,
    ) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(&(task.to_string(), procedure, format))
            .ok_or_else(|| PromptError::NotFound {
                task: task.to_string(),
                procedure,
                format,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }
}

/// A bundled template paired with the criterion it was written for.
#[derive(Debug, Clone)]
pub struct BuiltinPrompt {
    pub template: PromptTemplate,
    pub criterion: Criterion,
}

pub fn lookup(
    procedure: Procedure,
    format: ScoreFormat,
    criterion_name: &str,
    task: &str,
) -> Option<BuiltinPrompt> {
    let criterion = builtin_criteria()
        .into_iter()
        .find(|(t, c)| t == task && c.name == criterion_name && c.format == format)?
        .1;
    let template = TemplateSet::builtin()
        .get(task, procedure, format)
        .ok()?
        .clone();
    Some(BuiltinPrompt { template, criterion })
}

fn anchors(items: &[(f64, &str)]) -> Vec<Anchor> {
    items
        .iter()
        .map(|(level, description)| Anchor {
            level: *level,
            description: (*description).to_string(),
        })
        .collect()
}

/// Criteria shipped with the bundled templates, tagged by task.
pub fn builtin_criteria() -> Vec<(String, Criterion)> {
    let coherence_def = "Does the response serve as a valid continuation of the conversation history?";
    vec![
        (
            "topical_chat".into(),
            Criterion {
                name: "Coherence".into(),
                definition: coherence_def.into(),
                anchors: anchors(&[
                    (1.0, "A float score near 1 (no) means that the response drastically changes topic or ignores the conversation history."),
                    (2.0, "A float score near 2 (somewhat) means the response refers to the conversation history in a limited capacity (e.g., in a generic way) and shifts the conversation topic."),
                    (3.0, "A float score near 3 (yes) means the response is on topic and strongly acknowledges the conversation history."),
                ]),
                score_min: 1.0,
                score_max: 3.0,
                format: ScoreFormat::Decimal,
                heading: None,
            },
        ),
        (
            "topical_chat".into(),
            Criterion {
                name: "Coherence".into(),
                definition: coherence_def.into(),
                anchors: anchors(&[
                    (1.0, "A score of 1 (no) means that the response drastically changes topic or ignores the conversation history."),
                    (2.0, "A score of 2 (somewhat) means the response refers to the conversation history in a limited capacity (e.g., in a generic way) and shifts the conversation topic."),
                    (3.0, "A score of 3 (yes) means the response is on topic and strongly acknowledges the conversation history."),
                ]),
                score_min: 1.0,
                score_max: 3.0,
                format: ScoreFormat::Integer,
                heading: None,
            },
        ),
        (
            "fed".into(),
            Criterion {
                name: "Coherent".into(),
                definition: "Does System maintain coherence and a good flow of conversation throughout the dialogue?".into(),
                anchors: anchors(&[
                    (1.0, "A float score near 1 (not coherent) means that System's responses are unrelated to the conversation topic and may disrupt or confuse the flow of the dialogue."),
                    (2.0, "A float score near 2 (somewhat coherent) means that System's responses are partially related to the conversation topic but may not be clear or direct."),
                    (3.0, "A float score near 3 (very coherent) means that System's responses are closely related to the conversation topic and contribute to maintaining a smooth dialogue."),
                ]),
                score_min: 1.0,
                score_max: 3.0,
                format: ScoreFormat::Decimal,
                heading: None,
            },
        ),
        (
            "hanna".into(),
            Criterion {
                name: "Coherence".into(),
                definition: "Measures whether the story makes sense?".into(),
                anchors: anchors(&[
                    (1.0, "A float score near 1 means the story does not make sense at all. For instance, the setting and/or characters keep changing, and/or there is no understandable plot."),
                    (2.0, "A float score near 2 means most of the story does not make sense."),
                    (3.0, "A float score near 3 means the story mostly makes sense but has some incoherences."),
                    (4.0, "A float score near 4 means the story almost makes sense overall, except for one or two small incoherences."),
                    (5.0, "A float score near 5 means the story makes sense from beginning to end."),
                ]),
                score_min: 1.0,
                score_max: 5.0,
                format: ScoreFormat::Decimal,
                heading: Some("Coherence (floating point numbers within the interval [1,5])".into()),
            },
        ),
        (
            "qags".into(),
            Criterion {
                name: "Consistency".into(),
                definition: "Is the sentence supported by the article? (consistent with the article)".into(),
                anchors: anchors(&[
                    (1.0, "A float score near 1 (not) means that the sentence is totally not supported by the article."),
                    (2.0, "A float score near 2 (somewhat) means that the sentence is partially supported by the article."),
                    (3.0, "A float score near 3 (very) means that the sentence is completely supported by the article."),
                ]),
                score_min: 1.0,
                score_max: 3.0,
                format: ScoreFormat::Decimal,
                heading: Some("Consistency ([1,3]) -".into()),
            },
        ),
    ]
}

/// Renders the numbered sample block.
pub fn render_data(template: &PromptTemplate, samples: &[&Sample]) -> Result<String, PromptError> {
    let required = template.required_fields();
    let mut blocks = Vec::with_capacity(samples.len());
    for (k, sample) in samples.iter().enumerate() {
        let mut parts = vec![format!("Sample {}:", k + 1)];
        let fields: Vec<(&str, &str)> = if required.is_empty() {
            sample.fields.iter().map(|(n, t)| (n.as_str(), t.as_str())).collect()
        } else {
            required
                .iter()
                .map(|name| {
                    sample
                        .fields
                        .get(*name)
                        .map(|text| (*name, text.as_str()))
                        .ok_or_else(|| PromptError::FieldMissing {
                            id: sample.id.clone(),
                            field: (*name).to_string(),
                        })
                })
                .collect::<Result<_, _>>()?
        };
        if fields.is_empty() {
            return Err(PromptError::FieldMissing {
                id: sample.id.clone(),
                field: String::new(),
            });
        }
        for (name, text) in fields {
            if text.trim().is_empty() {
                return Err(PromptError::FieldMissing {
                    id: sample.id.clone(),
                    field: name.to_string(),
                });
            }
            parts.push(format!("{name}:\n{text}"));
        }
        // header sits directly above its first field
        let header = parts.remove(0);
        blocks.push(format!("{header}\n{}", parts.join("\n\n")));
    }
    Ok(blocks.join("\n\n"))
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{(number|Data|Criterion|Metric)\}\}").unwrap())
}

/// Renders one batch prompt. Substitution is single-pass, so placeholder
/// text inside samples or criteria is left alone.
pub fn render(
    template: &PromptTemplate,
    samples: &[&Sample],
    criterion: &Criterion,
) -> Result<String, PromptError> {
    if samples.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    let data = render_data(template, samples)?;
    let number = samples.len().to_string();
    let block = criterion.block();
    Ok(placeholder_re()
        .replace_all(&template.body, |caps: &regex::Captures| match &caps[1] {
            "number" => number.clone(),
            "Data" => data.clone(),
            "Criterion" => block.clone(),
            _ => criterion.name.clone(),
        })
        .into_owned())
}

/// Number of `Sample k:` header lines in a rendered prompt.
pub fn count_rendered_samples(prompt: &str) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^Sample (\d+):$").unwrap())
        .find_iter(prompt)
        .count()
}
