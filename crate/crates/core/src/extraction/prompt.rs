use thiserror::Error;

use super::Field;
use crate::corpus::AbstractRecord;

pub const PLACEHOLDER: &str = "{{abstract}}";

/// Shipped zero-shot template. Demands the "Label: value" schema that
/// [`parse_answer`](super::parse_answer) reads.
pub const DEFAULT_TEMPLATE: &str = include_str!("default_prompt.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template must contain the {PLACEHOLDER} placeholder exactly once (found {0})")]
    Placeholder(usize),
    #[error("answer schema must list exactly ten labels (found {0})")]
    SchemaLength(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template_text: String,
    answer_schema: Vec<String>,
}

impl PromptTemplate {
    pub fn new(template_text: impl Into<String>) -> Result<Self, TemplateError> {
        let schema = Field::ALL.iter().map(|f| f.label().to_string()).collect();
        Self::with_schema(template_text, schema)
    }

    pub fn with_schema(
        template_text: impl Into<String>,
        answer_schema: Vec<String>,
    ) -> Result<Self, TemplateError> {
        let template_text = template_text.into();
        let n = template_text.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(TemplateError::Placeholder(n));
        }
        if answer_schema.len() != Field::ALL.len() {
            return Err(TemplateError::SchemaLength(answer_schema.len()));
        }
        Ok(Self {
            template_text,
            answer_schema,
        })
    }

    pub fn text(&self) -> &str {
        &self.template_text
    }

    pub fn answer_schema(&self) -> &[String] {
        &self.answer_schema
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

/// Substitutes the abstract into the template in a single pass; placeholder
/// text inside the abstract itself is left untouched.
pub fn build_prompt(record: &AbstractRecord, template: &PromptTemplate) -> String {
    let (head, tail) = template
        .template_text
        .split_once(PLACEHOLDER)
        .expect("validated template has one placeholder");
    let mut out = String::with_capacity(head.len() + record.abstract_text.len() + tail.len());
    out.push_str(head);
    out.push_str(&record.abstract_text);
    out.push_str(tail);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(text: &str) -> AbstractRecord {
        AbstractRecord {
            pmid: "1".into(),
            title: String::new(),
            abstract_text: text.into(),
            source_file: String::new(),
        }
    }

    #[test]
    fn substitution() {
        let t = PromptTemplate::new("Report ten variables for: {{abstract}}").unwrap();
        assert_eq!(build_prompt(&rec("X"), &t), "Report ten variables for: X");
    }

    #[test]
    fn single_pass() {
        let t = PromptTemplate::new("A {{abstract}} B").unwrap();
        assert_eq!(
            build_prompt(&rec("see {{abstract}}"), &t),
            "A see {{abstract}} B"
        );
    }

    #[test]
    fn placeholder_count_enforced() {
        assert_eq!(
            PromptTemplate::new("no slot"),
            Err(TemplateError::Placeholder(0))
        );
        assert_eq!(
            PromptTemplate::new("{{abstract}}{{abstract}}"),
            Err(TemplateError::Placeholder(2))
        );
        assert_eq!(
            PromptTemplate::with_schema("{{abstract}}", vec!["a".into()]),
            Err(TemplateError::SchemaLength(1))
        );
    }

    #[test]
    fn default_template_names_every_label() {
        let t = PromptTemplate::default();
        for f in Field::ALL {
            assert!(t.text().contains(&format!("{}:", f.label())), "{f}");
        }
        assert!(t.text().contains("N/A"));
        let p = build_prompt(&rec("Body."), &t);
        assert!(!p.contains(PLACEHOLDER));
    }
}
