//! Bundled prompt templates with declared placeholders.
//!
//! Templates are stored verbatim as text assets. Placeholders appear as
//! `{name}` or `{{name}}` depending on the template's native syntax;
//! rendering substitutes both forms for every declared name.

use std::collections::BTreeMap;

use super::GatewayError;

pub struct Template {
    pub id: &'static str,
    pub text: &'static str,
    pub placeholders: &'static [&'static str],
}

pub const TEMPLATES: &[Template] = &[
    Template {
        id: "judge_quality",
        text: include_str!("../../assets/templates/judge_quality.txt"),
        placeholders: &["problem_description", "generated_code"],
    },
    Template {
        id: "judge_helpfulness",
        text: include_str!("../../assets/templates/judge_helpfulness.txt"),
        placeholders: &["coding_problem", "accepted_solution", "recommendation"],
    },
    Template {
        id: "codegen",
        text: include_str!("../../assets/templates/codegen.txt"),
        placeholders: &["problem_description", "formatted_recommendation"],
    },
    Template {
        id: "intent",
        text: include_str!("../../assets/templates/intent.txt"),
        placeholders: &["problem"],
    },
    Template {
        id: "insight_extraction",
        text: include_str!("../../assets/templates/insight_extraction.txt"),
        placeholders: &["trace_id", "problem", "outcome", "hindsight"],
    },
    Template {
        id: "insight_consolidation",
        text: include_str!("../../assets/templates/insight_consolidation.txt"),
        placeholders: &["lessons"],
    },
    Template {
        id: "synthesis",
        text: include_str!("../../assets/templates/synthesis.txt"),
        placeholders: &["problem", "documentation", "insights"],
    },
    Template {
        id: "synthetic_feedback",
        text: include_str!("../../assets/templates/synthetic_feedback.txt"),
        placeholders: &["problem", "reference_solution"],
    },
];

pub fn lookup(template_id: &str) -> Result<&'static Template, GatewayError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == template_id)
        .ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))
}

/// Substitute all declared placeholders. Every placeholder must be covered
/// by `variables`; the rendered text carries no residual markers.
pub fn render(
    template_id: &str,
    variables: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    let template = lookup(template_id)?;
    let mut text = template.text.to_string();
    for name in template.placeholders {
        let value = variables.get(*name).ok_or_else(|| GatewayError::MissingVariable {
            template: template.id.to_string(),
            placeholder: name.to_string(),
        })?;
        text = text.replace(&format!("{{{{{name}}}}}"), value);
        text = text.replace(&format!("{{{name}}}"), value);
    }
    Ok(text)
}
