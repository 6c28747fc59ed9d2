//! Prompt templates for live backends, compiled into the binary and
//! rendered by substituting named placeholders.

use crate::error::{Error, Result};

const TEMPLATES: &[(&str, &str)] = &[
    ("init_zero_shot", include_str!("templates/init_zero_shot.txt")),
    ("init_kb", include_str!("templates/init_kb.txt")),
    ("extract_chain", include_str!("templates/extract_chain.txt")),
    ("synthesize", include_str!("templates/synthesize.txt")),
    ("mutate_direct", include_str!("templates/mutate_direct.txt")),
    ("mutate_kb", include_str!("templates/mutate_kb.txt")),
    ("judge_pair", include_str!("templates/judge_pair.txt")),
];

/// Returns the raw text of a compiled-in template.
pub fn template(id: &str) -> Result<&'static str> {
    TEMPLATES
        .iter()
        .find(|(name, _)| *name == id)
        .map(|(_, text)| *text)
        .ok_or_else(|| Error::TemplateMissing(id.to_owned()))
}

/// Renders a template by replacing each `{name}` placeholder with its
/// value. Only the names passed in are substituted; any other braces in
/// the template (such as JSON examples) are left untouched. A value for a
/// name the template does not mention is an error, catching typos early.
pub fn render(id: &str, values: &[(&str, &str)]) -> Result<String> {
    let mut text = template(id)?.to_owned();
    for (name, value) in values {
        let token = format!("{{{name}}}");
        if !text.contains(&token) {
            return Err(Error::TemplateMissing(format!("{id} has no placeholder {token}")));
        }
        text = text.replace(&token, value);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_is_present() {
        for id in [
            "init_zero_shot",
            "init_kb",
            "extract_chain",
            "synthesize",
            "mutate_direct",
            "mutate_kb",
            "judge_pair",
        ] {
            assert!(!template(id).unwrap().is_empty(), "{id}");
        }
        assert!(template("nope").is_err());
    }

    #[test]
    fn render_substitutes_only_named_placeholders() {
        let text = render(
            "judge_pair",
            &[("phase_name", "Problem Analysis"), ("state_a", "Ques Loaded"), ("state_b", "ques loaded")],
        )
        .unwrap();
        assert!(text.contains("Label A: Ques Loaded"));
        assert!(text.contains("Label B: ques loaded"));
        assert!(!text.contains("{state_a}"));
    }

    #[test]
    fn unknown_placeholder_value_is_rejected() {
        assert!(render("judge_pair", &[("bogus", "x")]).is_err());
    }

    #[test]
    fn json_braces_survive_rendering() {
        let text = render("extract_chain", &[("source_code", "pass"), ("tool_doc", "none")]).unwrap();
        assert!(text.contains("\"phase\""));
    }
}
