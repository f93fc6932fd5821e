//! Natural-language prompts built from node encodings, for use with an
//! external language model.

use serde::Serialize;
use thiserror::Error;

use crate::codebook::Codebook;
use crate::encoder::NodeEncoding;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("view {view} has no codes")]
    EmptyView { view: usize },
    #[error("code {code} has no token string (codebook has {len} entries)")]
    MissingToken { code: usize, len: usize },
    #[error("no label names")]
    NoLabels,
}

fn quoted<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> String {
    items
        .into_iter()
        .map(|s| format!("'{}'", s.as_ref()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders the classification prompt from per-view token strings.
///
/// `views[t]` are the tokens of the `(t + 1)`-hop view.
pub fn render_tokens<S: AsRef<str>>(views: &[Vec<S>], label_names: &[String]) -> Result<String, PromptError> {
    if label_names.is_empty() {
        return Err(PromptError::NoLabels);
    }
    let mut out = format!(
        "Given a node, you need to classify it among {}. With the node's ",
        quoted(label_names)
    );
    for (t, tokens) in views.iter().enumerate() {
        if tokens.is_empty() {
            return Err(PromptError::EmptyView { view: t + 1 });
        }
        out.push_str(&format!("{}-hop information being {}, ", t + 1, quoted(tokens.iter())));
    }
    out.push_str("the node should be classified as:");
    Ok(out)
}

/// Renders the prompt for an encoding, reading token strings from `cb`.
pub fn render_prompt(enc: &NodeEncoding, cb: &Codebook, label_names: &[String]) -> Result<String, PromptError> {
    let mut views = Vec::with_capacity(enc.per_layer.len());
    for layer in &enc.per_layer {
        let mut tokens = Vec::with_capacity(layer.codes.len());
        for &c in &layer.codes.codes {
            if c >= cb.len() {
                return Err(PromptError::MissingToken { code: c, len: cb.len() });
            }
            tokens.push(cb.token(c));
        }
        views.push(tokens);
    }
    render_tokens(&views, label_names)
}

/// One line of a prompt export.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PromptRecord {
    pub node: usize,
    pub prompt: String,
    pub label: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let labels = vec!["Case Based".to_string(), "Genetic Algorithms".to_string()];
        let views = vec![
            vec!["justifiable", "empirical", "test"],
            vec!["assessment", "case", "empirical"],
            vec!["statically", "combining", "semantically"],
        ];
        let expect = "Given a node, you need to classify it among 'Case Based', 'Genetic Algorithms'. \
With the node's 1-hop information being 'justifiable', 'empirical', 'test', \
2-hop information being 'assessment', 'case', 'empirical', \
3-hop information being 'statically', 'combining', 'semantically', \
the node should be classified as:";
        assert_eq!(render_tokens(&views, &labels).unwrap(), expect);
    }

    #[test]
    fn single_view_single_label() {
        let out = render_tokens(&[vec!["graph"]], &["Theory".to_string()]).unwrap();
        assert_eq!(
            out,
            "Given a node, you need to classify it among 'Theory'. With the node's 1-hop information being 'graph', the node should be classified as:"
        );
    }

    #[test]
    fn errors() {
        assert_eq!(render_tokens(&[vec!["a"]], &[]), Err(PromptError::NoLabels));
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert_eq!(render_tokens(&empty, &["x".to_string()]), Err(PromptError::EmptyView { view: 1 }));
    }
}
