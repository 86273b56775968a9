//! Prompt-template catalog with `{name}` placeholder substitution.
//!
//! Templates ship as plain-text data files under `templates/` so they can be
//! audited without reading code. Substitution is single-pass: placeholders
//! found in the template are replaced from the bindings, and binding values
//! are never re-scanned, so user text containing braces is inert.

use std::collections::BTreeMap;

use crate::error::EngineError;

/// Ids of the built-in templates.
pub mod template_ids {
    pub const MONITOR: &str = "monitor";
    pub const QUERIER: &str = "querier";
    pub const INJECTOR: &str = "injector";
    pub const REFINEMENT: &str = "refinement";
    pub const REFINEMENT_PREFIX: &str = "refinement_prefix";
    pub const PROPOSER: &str = "proposer";
    pub const EVALUATOR: &str = "evaluator";
    pub const CORRECTOR: &str = "corrector";
    pub const RANKER: &str = "ranker";
    pub const JUDGE: &str = "judge";
    pub const ACCURACY: &str = "accuracy";
    pub const CONSISTENCY: &str = "consistency";
    pub const SUMMARIZE: &str = "summarize";
}

/// Catalog of named prompt templates.
#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateCatalog {
    /// Catalog preloaded with the shipped template files.
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        let entries: [(&str, &str); 13] = [
            (template_ids::MONITOR, include_str!("../../templates/monitor.txt")),
            (template_ids::QUERIER, include_str!("../../templates/querier.txt")),
            (template_ids::INJECTOR, include_str!("../../templates/injector.txt")),
            (template_ids::REFINEMENT, include_str!("../../templates/refinement.txt")),
            (
                template_ids::REFINEMENT_PREFIX,
                include_str!("../../templates/refinement_prefix.txt"),
            ),
            (template_ids::PROPOSER, include_str!("../../templates/proposer.txt")),
            (template_ids::EVALUATOR, include_str!("../../templates/evaluator.txt")),
            (template_ids::CORRECTOR, include_str!("../../templates/corrector.txt")),
            (template_ids::RANKER, include_str!("../../templates/ranker.txt")),
            (template_ids::JUDGE, include_str!("../../templates/judge.txt")),
            (template_ids::ACCURACY, include_str!("../../templates/accuracy.txt")),
            (template_ids::CONSISTENCY, include_str!("../../templates/consistency.txt")),
            (template_ids::SUMMARIZE, include_str!("../../templates/summarize.txt")),
        ];
        for (id, text) in entries {
            templates.insert(id.to_string(), text.to_string());
        }
        Self { templates }
    }

    /// Register or replace a template.
    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn raw(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Render a template, replacing each `{name}` placeholder with its
    /// binding. Extra bindings are ignored; an unbound placeholder is an
    /// error naming the placeholder.
    pub fn render(
        &self,
        template_id: &str,
        bindings: &BTreeMap<&str, String>,
    ) -> Result<String, EngineError> {
        let template = self
            .templates
            .get(template_id)
            .ok_or_else(|| EngineError::UnknownTemplate(template_id.to_string()))?;
        render_str(template, template_id, bindings)
    }
}

/// A placeholder is `{` + an ascii identifier + `}`; anything else involving
/// braces (JSON examples in the templates, code snippets) is literal text.
fn render_str(
    template: &str,
    template_id: &str,
    bindings: &BTreeMap<&str, String>,
) -> Result<String, EngineError> {
    let bytes = template.as_bytes();
    let mut out = String::with_capacity(template.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((name, end)) = scan_placeholder(bytes, i) {
                let value =
                    bindings
                        .get(name.as_str())
                        .ok_or_else(|| EngineError::UnboundPlaceholder {
                            template: template_id.to_string(),
                            placeholder: name.clone(),
                        })?;
                out.push_str(value);
                i = end;
                continue;
            }
        }
        // Advance by one char, not one byte.
        let ch_len = template[i..].chars().next().map(char::len_utf8).unwrap_or(1);
        out.push_str(&template[i..i + ch_len]);
        i += ch_len;
    }
    Ok(out)
}

/// Returns (identifier, index just past the closing brace) when `bytes[at]`
/// opens a well-formed placeholder.
fn scan_placeholder(bytes: &[u8], at: usize) -> Option<(String, usize)> {
    let mut j = at + 1;
    if j >= bytes.len() || !(bytes[j].is_ascii_alphabetic() || bytes[j] == b'_') {
        return None;
    }
    let start = j;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
        j += 1;
    }
    if j < bytes.len() && bytes[j] == b'}' {
        let name = std::str::from_utf8(&bytes[start..j]).ok()?.to_string();
        Some((name, j + 1))
    } else {
        None
    }
}
