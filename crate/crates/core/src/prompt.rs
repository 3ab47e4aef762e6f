//! The three prompt templates and single-pass placeholder rendering.
//!
//! Placeholders are `{Name}` where the name is letters, digits, spaces or
//! underscores. `{Examples}` is filled from the template's few-shot examples;
//! every other placeholder must be bound by the caller. Bound values are
//! inserted literally, so braces inside a value are never re-expanded.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    EntityExtraction,
    QuestionGeneration,
    QuestionAnswering,
}

impl TemplateName {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::EntityExtraction => "entity_extraction",
            TemplateName::QuestionGeneration => "question_generation",
            TemplateName::QuestionAnswering => "question_answering",
        }
    }
}

pub const EXAMPLES_PLACEHOLDER: &str = "Examples";

const ENTITY_SYSTEM: &str =
    "You are a helpful research assistant that asks questions about abstracts of scientific papers.";
const ENTITY_USER: &str = "List all questions that a curious reader might have after reading this abstract. \
These questions must not be answerable given the abstract, but may be answerable given the full paper. \
These questions could help clarify vague terms, define jargon, request for more detail, or ask for justification. \
Each question should be short and not contain multiple sub-questions. \
Provide a phrase (three words or less) verbatim from the abstract that motivates each question.

Title: {Title}
Abstract: {Abstract}

{Examples}

Questions:";

const QUESTION_SYSTEM: &str =
    "You are a helpful research assistant that predicts what question a reader might have.";
const QUESTION_USER: &str = "A reader has highlighted a span of text in the abstract. \
What is the most likely question they could ask about the span? \
The question must not be answerable given the abstract, but may be answerable given the full paper. \
The question may help clarify vague terms, define jargon, request for more detail, or ask for justification. \
The question should be short and not contain multiple sub-questions. \
Try framing the question as: How? Why? What? Such as?

Abstract: {Abstract}
Target span: \"{Entity}\", in the sentence \"{Sentence}\"
Question:";

const ANSWER_SYSTEM: &str =
    "You are a helpful research assistant that answers questions about scientific papers.";
const ANSWER_USER: &str = "Answer the question based on the following excerpts from the full text of the paper. \
Incorporate quotes verbatim from the excerpts when relevant. \
If the question cannot be answered from the provided context, reply 'No answer.' \
Your answer should be {Response Length}.

{Examples}

Context: {Context}
Question: {Question}
Answer:";

const ENTITY_EXAMPLES: &str = include_str!("../prompts/entity_extraction.examples.txt");
const ANSWER_EXAMPLES: &str = include_str!("../prompts/question_answering.examples.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: String,
    pub user_template: String,
    pub few_shot_examples: Vec<FewShotExample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateName,
    pub system_text: String,
    pub user_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptError {
    Unbound(String),
    MalformedExamples(String),
}

impl core::fmt::Display for PromptError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PromptError::Unbound(name) => write!(f, "placeholder '{name}' is not bound"),
            PromptError::MalformedExamples(msg) => write!(f, "malformed few-shot examples: {msg}"),
        }
    }
}

/// Parses a few-shot file: blocks of `>>> input` lines followed by
/// `<<< output` lines.
pub fn parse_examples(source: &str) -> Result<Vec<FewShotExample>, PromptError> {
    enum Part {
        None,
        Input,
        Output,
    }
    let mut out = Vec::new();
    let mut part = Part::None;
    let mut input: Vec<&str> = Vec::new();
    let mut output: Vec<&str> = Vec::new();
    let flush = |input: &mut Vec<&str>, output: &mut Vec<&str>, out: &mut Vec<FewShotExample>| {
        if !input.is_empty() || !output.is_empty() {
            out.push(FewShotExample {
                input: input.join("\n").trim().to_string(),
                output: output.join("\n").trim().to_string(),
            });
        }
        input.clear();
        output.clear();
    };
    for (n, line) in source.lines().enumerate() {
        match line.trim_end() {
            ">>> input" => {
                flush(&mut input, &mut output, &mut out);
                part = Part::Input;
            }
            "<<< output" => {
                if !matches!(part, Part::Input) {
                    return Err(PromptError::MalformedExamples(alloc::format!(
                        "line {}: output block without input",
                        n + 1
                    )));
                }
                part = Part::Output;
            }
            _ => match part {
                Part::Input => input.push(line),
                Part::Output => output.push(line),
                Part::None if line.trim().is_empty() || line.starts_with('#') => {}
                Part::None => {
                    return Err(PromptError::MalformedExamples(alloc::format!(
                        "line {}: text outside a block",
                        n + 1
                    )))
                }
            },
        }
    }
    flush(&mut input, &mut output, &mut out);
    Ok(out)
}

impl PromptTemplate {
    pub fn entity_extraction() -> Self {
        PromptTemplate {
            name: TemplateName::EntityExtraction,
            system_text: ENTITY_SYSTEM.to_string(),
            user_template: ENTITY_USER.to_string(),
            few_shot_examples: parse_examples(ENTITY_EXAMPLES).expect("shipped examples parse"),
        }
    }

    pub fn question_generation() -> Self {
        PromptTemplate {
            name: TemplateName::QuestionGeneration,
            system_text: QUESTION_SYSTEM.to_string(),
            user_template: QUESTION_USER.to_string(),
            few_shot_examples: Vec::new(),
        }
    }

    pub fn question_answering() -> Self {
        PromptTemplate {
            name: TemplateName::QuestionAnswering,
            system_text: ANSWER_SYSTEM.to_string(),
            user_template: ANSWER_USER.to_string(),
            few_shot_examples: parse_examples(ANSWER_EXAMPLES).expect("shipped examples parse"),
        }
    }

    pub fn shipped(name: TemplateName) -> Self {
        match name {
            TemplateName::EntityExtraction => Self::entity_extraction(),
            TemplateName::QuestionGeneration => Self::question_generation(),
            TemplateName::QuestionAnswering => Self::question_answering(),
        }
    }

    /// Names of all placeholders in the user template, in order of first use.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names = Vec::new();
        for piece in tokenize(&self.user_template) {
            if let Piece::Placeholder(name) = piece {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        names
    }

    pub fn examples_text(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.few_shot_examples.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&ex.input);
            out.push('\n');
            out.push_str(&ex.output);
        }
        out
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_placeholder_name(name: &str) -> bool {
    !name.is_empty()
        && name.starts_with(|c: char| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == ' ' || c == '_')
}

fn tokenize(template: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                if open > 0 {
                    pieces.push(Piece::Literal(&rest[..open]));
                }
                pieces.push(Piece::Placeholder(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                pieces.push(Piece::Literal(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest));
    }
    pieces
}

/// Substitutes every placeholder in one pass.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<RenderedPrompt, PromptError> {
    let mut user = String::with_capacity(template.user_template.len());
    for piece in tokenize(&template.user_template) {
        match piece {
            Piece::Literal(s) => user.push_str(s),
            Piece::Placeholder(name) => match bindings.get(name) {
                Some(v) => user.push_str(v),
                None if name == EXAMPLES_PLACEHOLDER => user.push_str(&template.examples_text()),
                None => return Err(PromptError::Unbound(name.to_string())),
            },
        }
    }
    Ok(RenderedPrompt {
        template: template.name,
        system_text: template.system_text.clone(),
        user_text: user,
    })
}

/// Convenience for building a bindings map from pairs.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
