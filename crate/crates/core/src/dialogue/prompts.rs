//! Named prompt templates with `{{placeholder}}` substitution.

use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub generate: String,
    pub evidence: String,
    pub integrate: String,
    pub refine: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            generate: include_str!("../../prompts/generate.txt").to_string(),
            evidence: include_str!("../../prompts/evidence.txt").to_string(),
            integrate: include_str!("../../prompts/integrate.txt").to_string(),
            refine: include_str!("../../prompts/refine.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Defaults, with any `<name>.txt` found in `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        for (name, slot) in [
            ("generate", &mut set.generate),
            ("evidence", &mut set.evidence),
            ("integrate", &mut set.integrate),
            ("refine", &mut set.refine),
        ] {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(set)
    }
}

/// Replaces each `{{key}}` with its value. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes() {
        assert_eq!(render("a {{x}} b {{y}} {{x}}", &[("x", "1"), ("y", "2")]), "a 1 b 2 1");
        assert_eq!(render("{{missing}}", &[]), "{{missing}}");
    }

    #[test]
    fn defaults_have_placeholders() {
        let p = PromptSet::default();
        assert!(p.generate.contains("{{question}}") && p.generate.contains("{{answer}}"));
        assert!(p.evidence.contains("{{dialogue}}") && p.evidence.contains("{{n_responses}}"));
        assert!(p.integrate.contains("{{labeled_dialogue}}"));
        assert!(p.refine.contains("{{dialogue}}"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("refine.txt"), "custom {{dialogue}}").unwrap();
        let p = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(p.refine, "custom {{dialogue}}");
        assert_eq!(p.generate, PromptSet::default().generate);
    }
}
