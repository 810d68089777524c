use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{scan_placeholders, Placeholder, PromptError, Result, TaskKind};

pub const DEFAULT_DOMAIN: &str = "autonomous driving";

const DEFAULT_FILES: [(TaskKind, &str); 4] = [
    (TaskKind::Hierarchy, include_str!("../../templates/hierarchy.toml")),
    (TaskKind::Definition, include_str!("../../templates/definition.toml")),
    (TaskKind::Relationship, include_str!("../../templates/relationship.toml")),
    (TaskKind::Property, include_str!("../../templates/property.toml")),
];

/// One editable prompt: context (why), instruction (what), format (how).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub context: String,
    pub instruction: String,
    pub format: String,
}

impl PromptTemplate {
    /// Checks that every placeholder is one the task binds and that the
    /// required ones are present somewhere in the three parts.
    pub fn validate(&self) -> Result<()> {
        let allowed = self.task.allowed_placeholders();
        let mut used = Vec::new();
        for part in [&self.context, &self.instruction, &self.format] {
            for (_, _, name) in scan_placeholders(part) {
                match allowed.iter().find(|p| p.name() == name) {
                    Some(p) => used.push(*p),
                    None => {
                        return Err(PromptError::UnknownPlaceholder {
                            task: self.task,
                            name: name.to_string(),
                        })
                    }
                }
            }
        }
        for required in self.task.required_placeholders() {
            if !used.contains(required) {
                return Err(PromptError::MissingPlaceholder {
                    task: self.task,
                    name: required.name().to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: PromptTemplate =
            toml::from_str(text).map_err(|e| PromptError::TemplateFile(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("template serializes")
    }

    pub fn placeholders(&self) -> Vec<Placeholder> {
        self.task.allowed_placeholders().to_vec()
    }
}

/// One template per task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet(BTreeMap<TaskKind, PromptTemplate>);

impl TemplateSet {
    /// Shipped defaults with `{DOMAIN}` filled in. The domain is fixed text
    /// in the resulting templates, not a placeholder.
    pub fn defaults(domain: &str) -> Self {
        let map = DEFAULT_FILES
            .iter()
            .map(|(task, text)| {
                let mut t: PromptTemplate =
                    toml::from_str(text).expect("shipped template parses");
                debug_assert_eq!(t.task, *task);
                for part in [&mut t.context, &mut t.instruction, &mut t.format] {
                    *part = part.trim().replace("{DOMAIN}", domain);
                }
                (*task, t)
            })
            .collect();
        TemplateSet(map)
    }

    pub fn get(&self, task: TaskKind) -> &PromptTemplate {
        &self.0[&task]
    }

    pub fn get_mut(&mut self, task: TaskKind) -> &mut PromptTemplate {
        self.0.get_mut(&task).expect("every task has a template")
    }

    pub fn set(&mut self, template: PromptTemplate) -> Result<()> {
        template.validate()?;
        self.0.insert(template.task, template);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.0.values()
    }
}
