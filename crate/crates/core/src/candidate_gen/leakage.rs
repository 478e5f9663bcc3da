use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakConfig {
    /// Also match `<name>s`.
    pub plural_variants: bool,
    /// Additional regular expressions removed from every text.
    pub extra_patterns: Vec<String>,
}

impl Default for LeakConfig {
    fn default() -> Self {
        LeakConfig {
            plural_variants: true,
            extra_patterns: Vec::new(),
        }
    }
}

/// Removes class-name mentions from generated concept texts.
#[derive(Debug, Clone)]
pub struct LeakFilter {
    pattern: Option<Regex>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn name_pattern(name: &str, plural: bool) -> Option<String> {
    let words: Vec<&str> = name.split_whitespace().collect();
    if words.is_empty() {
        return None;
    }
    let body = words
        .iter()
        .map(|w| regex::escape(w))
        .collect::<Vec<_>>()
        .join(r"\s+");
    let first = name.trim().chars().next()?;
    let last = name.trim().chars().last()?;
    let lead = if is_word_char(first) { r"\b" } else { "" };
    let trail = if is_word_char(last) { r"\b" } else { "" };
    let suffix = if plural && is_word_char(last) { "s?" } else { "" };
    Some(format!("{lead}{body}{suffix}{trail}"))
}

impl LeakFilter {
    pub fn new<S: AsRef<str>>(class_names: &[S], cfg: &LeakConfig) -> Result<Self> {
        let mut parts: Vec<String> = class_names
            .iter()
            .filter_map(|n| name_pattern(n.as_ref(), cfg.plural_variants))
            .collect();
        parts.extend(cfg.extra_patterns.iter().cloned());
        // Longest first so multiword names win over their prefixes.
        parts.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        parts.dedup();
        if parts.is_empty() {
            return Ok(LeakFilter { pattern: None });
        }
        let joined = format!("(?i)(?:{})", parts.join("|"));
        let re = Regex::new(&joined)
            .map_err(|e| Error::InvalidInput(format!("bad leak pattern: {e}")))?;
        Ok(LeakFilter { pattern: Some(re) })
    }

    pub fn leaks(&self, text: &str) -> bool {
        self.pattern.as_ref().is_some_and(|re| re.is_match(text))
    }

    /// Strips every match, collapses whitespace, and returns `None` when
    /// nothing is left.
    pub fn clean(&self, text: &str) -> Option<String> {
        let mut cur = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if let Some(re) = &self.pattern {
            // Removal can splice new matches together; iterate to a fixpoint.
            while re.is_match(&cur) {
                let stripped = re.replace_all(&cur, " ");
                cur = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
            }
        }
        let has_content = cur.chars().any(|c| c.is_alphanumeric());
        has_content.then_some(cur)
    }

    pub fn filter<S: AsRef<str>>(&self, texts: &[S]) -> Vec<String> {
        texts.iter().filter_map(|t| self.clean(t.as_ref())).collect()
    }
}

/// Removes class-name spans with the default leak configuration.
pub fn filter_leakage<S: AsRef<str>, N: AsRef<str>>(texts: &[S], class_names: &[N]) -> Result<Vec<String>> {
    Ok(LeakFilter::new(class_names, &LeakConfig::default())?.filter(texts))
}
