//! Prompt templates.
//!
//! Templates are plain text files with a `[system]` and a `[user]` section
//! and `{{name}}` slots. The bundled set can be replaced by pointing
//! [`PromptSet::from_dir`] at a directory holding files with the same names.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::{Message, Role, Stage};
use crate::corpus::Example;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{stage} prompt: missing context `{field}`")]
    MissingContext { stage: &'static str, field: String },
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Stage-specific data a prompt is rendered from.
#[derive(Clone, Copy, Debug)]
pub enum PromptContext<'a> {
    Generator {
        examples: &'a [Example],
    },
    Summarizer {
        hypotheses: &'a [String],
        n_summaries: usize,
    },
    Implementor {
        hypothesis: &'a str,
        examples: &'a [Example],
        language_guide: &'a str,
    },
    Refinement {
        hypothesis: &'a str,
        examples: &'a [Example],
        program: &'a str,
        error: &'a str,
        language_guide: &'a str,
    },
    Direct {
        examples: &'a [Example],
        language_guide: &'a str,
    },
    Evaluator {
        hypothesis: &'a str,
        ground_truth: &'a str,
    },
}

impl PromptContext<'_> {
    pub fn stage(&self) -> Stage {
        match self {
            PromptContext::Generator { .. } => Stage::Generator,
            PromptContext::Summarizer { .. } => Stage::Summarizer,
            PromptContext::Implementor { .. } => Stage::Implementor,
            PromptContext::Refinement { .. } => Stage::Refinement,
            PromptContext::Direct { .. } => Stage::Direct,
            PromptContext::Evaluator { .. } => Stage::Evaluator,
        }
    }

    /// Slot values by name.
    fn slots(&self) -> BTreeMap<&'static str, String> {
        let mut slots = BTreeMap::new();
        match *self {
            PromptContext::Generator { examples } => {
                slots.insert("examples", format_examples(examples));
            }
            PromptContext::Summarizer {
                hypotheses,
                n_summaries,
            } => {
                let listed: Vec<String> = hypotheses
                    .iter()
                    .enumerate()
                    .map(|(i, h)| format!("{}. {}", i + 1, one_line(h)))
                    .collect();
                slots.insert("hypotheses", listed.join("\n"));
                slots.insert("n_hypotheses", hypotheses.len().to_string());
                slots.insert("n_summaries", n_summaries.to_string());
            }
            PromptContext::Implementor {
                hypothesis,
                examples,
                language_guide,
            } => {
                slots.insert("hypothesis", one_line(hypothesis));
                slots.insert("examples", format_examples(examples));
                slots.insert("language_guide", language_guide.to_string());
            }
            PromptContext::Refinement {
                hypothesis,
                examples,
                program,
                error,
                language_guide,
            } => {
                slots.insert("hypothesis", one_line(hypothesis));
                slots.insert("examples", format_examples(examples));
                slots.insert("program", program.trim().to_string());
                slots.insert("error", error.trim().to_string());
                slots.insert("language_guide", language_guide.to_string());
            }
            PromptContext::Direct {
                examples,
                language_guide,
            } => {
                slots.insert("examples", format_examples(examples));
                slots.insert("language_guide", language_guide.to_string());
            }
            PromptContext::Evaluator {
                hypothesis,
                ground_truth,
            } => {
                slots.insert("hypothesis", one_line(hypothesis));
                slots.insert("ground_truth", one_line(ground_truth));
            }
        }
        slots
    }

    fn check(&self) -> Result<(), PromptError> {
        let missing = |field: &str| PromptError::MissingContext {
            stage: self.stage().name(),
            field: field.to_string(),
        };
        match *self {
            PromptContext::Summarizer { hypotheses, n_summaries } => {
                if hypotheses.is_empty() {
                    return Err(missing("hypotheses"));
                }
                if n_summaries == 0 {
                    return Err(missing("n_summaries"));
                }
            }
            PromptContext::Implementor { hypothesis, .. } if hypothesis.trim().is_empty() => {
                return Err(missing("hypothesis"))
            }
            PromptContext::Refinement {
                hypothesis,
                program,
                error,
                ..
            } => {
                for (name, value) in [("hypothesis", hypothesis), ("program", program), ("error", error)] {
                    if value.trim().is_empty() {
                        return Err(missing(name));
                    }
                }
            }
            PromptContext::Evaluator {
                hypothesis,
                ground_truth,
            } => {
                if hypothesis.trim().is_empty() {
                    return Err(missing("hypothesis"));
                }
                if ground_truth.trim().is_empty() {
                    return Err(missing("ground_truth"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn format_list(xs: &[i64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// `[a, b, c] -> [d, e]`
pub fn format_example(ex: &Example) -> String {
    format!("{} -> {}", format_list(&ex.input), format_list(&ex.output))
}

fn format_examples(examples: &[Example]) -> String {
    if examples.is_empty() {
        return "(no examples yet)".to_string();
    }
    examples.iter().map(format_example).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Debug)]
struct Template {
    system: String,
    user: String,
}

impl Template {
    fn parse(name: &str, text: &str) -> Result<Template, PromptError> {
        let err = |message: &str| PromptError::Template {
            name: name.to_string(),
            message: message.to_string(),
        };
        let rest = text
            .trim_start()
            .strip_prefix("[system]")
            .ok_or_else(|| err("must start with [system]"))?;
        let (system, user) = rest
            .split_once("\n[user]\n")
            .ok_or_else(|| err("missing [user] section"))?;
        Ok(Template {
            system: system.trim().to_string(),
            user: user.trim_end().to_string(),
        })
    }
}

fn substitute(
    text: &str,
    slots: &BTreeMap<&'static str, String>,
    stage: Stage,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::Template {
            name: stage.name().to_string(),
            message: "unterminated `{{`".into(),
        })?;
        let name = after[..end].trim();
        let value = slots.get(name).ok_or_else(|| PromptError::MissingContext {
            stage: stage.name(),
            field: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

const STAGES: [Stage; 6] = [
    Stage::Generator,
    Stage::Summarizer,
    Stage::Implementor,
    Stage::Refinement,
    Stage::Direct,
    Stage::Evaluator,
];

fn bundled(stage: Stage) -> &'static str {
    match stage {
        Stage::Generator => include_str!("../../templates/generator.txt"),
        Stage::Summarizer => include_str!("../../templates/summarizer.txt"),
        Stage::Implementor => include_str!("../../templates/implementor.txt"),
        Stage::Refinement => include_str!("../../templates/refinement.txt"),
        Stage::Direct => include_str!("../../templates/direct.txt"),
        Stage::Evaluator => include_str!("../../templates/evaluator.txt"),
    }
}

/// One template per stage.
#[derive(Clone, Debug)]
pub struct PromptSet {
    templates: BTreeMap<Stage, Template>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = STAGES
            .iter()
            .map(|&s| (s, Template::parse(s.name(), bundled(s)).expect("bundled template")))
            .collect();
        PromptSet { templates }
    }
}

impl PromptSet {
    /// Loads `<stage>.txt` files from `dir`, falling back to the bundled
    /// template for any file that is absent.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<PromptSet, PromptError> {
        let mut set = PromptSet::default();
        for stage in STAGES {
            let path = dir.as_ref().join(format!("{}.txt", stage.name()));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            set.templates.insert(stage, Template::parse(stage.name(), &text)?);
        }
        Ok(set)
    }

    pub fn render(&self, ctx: &PromptContext<'_>) -> Result<Vec<Message>, PromptError> {
        ctx.check()?;
        let stage = ctx.stage();
        let template = &self.templates[&stage];
        let slots = ctx.slots();
        Ok(vec![
            Message::new(Role::System, substitute(&template.system, &slots, stage)?),
            Message::new(Role::User, substitute(&template.user, &slots, stage)?),
        ])
    }
}
