/// Character-class filter deciding which vocabulary tokens carry semantic
/// content.
///
/// A token is rejected when, after stripping word-boundary markers (`▁`,
/// `Ġ`) and surrounding whitespace, it is empty, contains a control
/// character, is a byte-fallback token such as `<0x0A>`, is a bracketed
/// special marker such as `<s>` or `[CLS]`, or has no alphabetic character
/// at all (punctuation, digits, `##` fragments).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefineRules {
    pub reject_control: bool,
    pub reject_byte_tokens: bool,
    pub reject_special_markers: bool,
    pub require_alphabetic: bool,
}

impl Default for RefineRules {
    fn default() -> Self {
        Self {
            reject_control: true,
            reject_byte_tokens: true,
            reject_special_markers: true,
            require_alphabetic: true,
        }
    }
}

fn is_byte_token(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 6 && s.starts_with("<0x") && s.ends_with('>') && b[3].is_ascii_hexdigit() && b[4].is_ascii_hexdigit()
}

fn is_special_marker(s: &str) -> bool {
    s.len() > 2 && ((s.starts_with('<') && s.ends_with('>')) || (s.starts_with('[') && s.ends_with(']')))
}

impl RefineRules {
    pub fn keep(&self, token: &str) -> bool {
        if self.reject_control && token.chars().any(char::is_control) {
            return false;
        }
        let core = token.trim_start_matches(['\u{2581}', '\u{120}']).trim();
        if core.is_empty() {
            return false;
        }
        if self.reject_byte_tokens && is_byte_token(core) {
            return false;
        }
        if self.reject_special_markers && is_special_marker(core) {
            return false;
        }
        if self.require_alphabetic && !core.chars().any(char::is_alphabetic) {
            return false;
        }
        true
    }
}
