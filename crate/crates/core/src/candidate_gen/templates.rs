use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "[CLASS NAME]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: u32,
    pub pattern: String,
}

impl PromptTemplate {
    pub fn new(id: u32, pattern: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            id,
            pattern: pattern.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self.pattern.matches(PLACEHOLDER).count() {
            1 => Ok(()),
            0 => Err(Error::Template(format!(
                "template {} has no {PLACEHOLDER} placeholder",
                self.id
            ))),
            n => Err(Error::Template(format!(
                "template {} has {n} placeholders, expected one",
                self.id
            ))),
        }
    }

    pub fn render(&self, class_display: &str) -> Result<String> {
        self.validate()?;
        Ok(self.pattern.replacen(PLACEHOLDER, class_display, 1))
    }
}

/// A class label together with the phrase substituted into templates,
/// e.g. label `positive`, display `positive review`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub display: String,
}

impl ClassSpec {
    pub fn new(label: impl Into<String>, display: impl Into<String>) -> Self {
        ClassSpec {
            label: label.into(),
            display: display.into(),
        }
    }
}

/// The five universal generation templates.
pub fn default_templates() -> Vec<PromptTemplate> {
    [
        "describe what a [CLASS NAME] looks like",
        "describe the aspects of a [CLASS NAME]",
        "describe [CLASS NAME] using sentences",
        "describe the patterns of a [CLASS NAME]",
        "describe the concepts of a [CLASS NAME]",
    ]
    .iter()
    .enumerate()
    .map(|(i, p)| PromptTemplate {
        id: i as u32 + 1,
        pattern: (*p).to_string(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub class: String,
    pub template_id: u32,
    pub prompt: String,
}

/// One prompt per (class, template), class-major.
pub fn render_prompts(templates: &[PromptTemplate], classes: &[ClassSpec]) -> Result<Vec<RenderedPrompt>> {
    if templates.is_empty() || classes.is_empty() {
        return Err(Error::InvalidInput(
            "render_prompts needs at least one template and one class".into(),
        ));
    }
    let mut out = Vec::with_capacity(templates.len() * classes.len());
    for c in classes {
        for t in templates {
            out.push(RenderedPrompt {
                class: c.label.clone(),
                template_id: t.id,
                prompt: t.render(&c.display)?,
            });
        }
    }
    Ok(out)
}
