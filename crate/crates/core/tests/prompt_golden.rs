use std::collections::BTreeMap;
use std::path::PathBuf;

use expando_core::prompt::{render_prompt, PromptTemplate, TemplateName};

mod support;
use support::{differs_only_at_placeholders, split_golden};

fn golden(name: TemplateName) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{}.txt", name.as_str()));
    std::fs::read_to_string(path).unwrap().trim_end_matches('\n').to_string()
}

fn full_text(t: &PromptTemplate, bindings: &BTreeMap<String, String>) -> String {
    let r = render_prompt(t, bindings).unwrap();
    format!("{}\n\n{}", r.system_text, r.user_text)
}

const ALL: [TemplateName; 3] =
    [TemplateName::EntityExtraction, TemplateName::QuestionGeneration, TemplateName::QuestionAnswering];

#[test]
fn identity_bindings_reproduce_golden_text() {
    for name in ALL {
        let g = golden(name);
        let (_, names) = split_golden(&g);
        let t = PromptTemplate::shipped(name);
        let b: BTreeMap<String, String> = names.iter().map(|n| (n.clone(), format!("{{{n}}}"))).collect();
        assert_eq!(full_text(&t, &b), g, "{}", name.as_str());
    }
}

#[test]
fn empty_bindings_differ_only_at_placeholder_sites() {
    for name in ALL {
        let g = golden(name);
        let (literals, names) = split_golden(&g);
        let t = PromptTemplate::shipped(name);
        let b: BTreeMap<String, String> =
            names.iter().filter(|n| *n != "Examples").map(|n| (n.clone(), String::new())).collect();
        let rendered = full_text(&t, &b);
        assert!(differs_only_at_placeholders(&literals, &rendered), "{}:\n{rendered}", name.as_str());
    }
}

#[test]
fn placeholder_sets_match_golden() {
    for name in ALL {
        let (_, mut names) = split_golden(&golden(name));
        names.dedup();
        assert_eq!(PromptTemplate::shipped(name).placeholders(), names);
    }
}

#[test]
fn qa_golden_has_no_answer_instruction() {
    assert!(golden(TemplateName::QuestionAnswering)
        .contains("If the question cannot be answered from the provided context, reply 'No answer.'"));
}

#[test]
fn diff_helper_rejects_altered_literal() {
    let (literals, _) = split_golden("Context: {Context}\nQuestion: {Question}\nAnswer:");
    assert!(differs_only_at_placeholders(&literals, "Context: abc\nQuestion: q?\nAnswer:"));
    assert!(!differs_only_at_placeholders(&literals, "Context: abc\nQuery: q?\nAnswer:"));
}
