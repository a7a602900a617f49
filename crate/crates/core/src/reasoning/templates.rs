use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use super::render;
use super::{PromptContext, Step};
use crate::engine::{GameKind, PublicState};
use crate::gateway::ChatMessage;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template directory {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("template {0} uses unknown placeholder `{1}`")]
    UnknownPlaceholder(String, String),
    #[error("no template `{1}` for {0}")]
    Missing(GameKind, String),
}

macro_rules! embedded {
    ($($key:literal),* $(,)?) => {
        &[$(($key, include_str!(concat!("../../templates/", $key, ".txt")))),*]
    };
}

const EMBEDDED: &[(&str, &str)] = embedded![
    "common/system",
    "common/persona_preamble",
    "common/direct",
    "common/cot",
    "common/reflect",
    "common/pcot",
    "common/kr_decide",
    "common/draft",
    "common/critique",
    "common/revise",
    "common/reflect_update",
    "g08a/rules",
    "g08a/answer",
    "g08a/prediction",
    "sag/rules",
    "sag/answer",
    "sag/prediction",
    "neg/rules",
    "neg/answer",
    "neg/prediction",
    "pd/rules",
    "pd/answer",
    "pd/prediction",
];

pub const PLACEHOLDERS: &[&str] = &[
    "rules",
    "round",
    "max_rounds",
    "num_agents",
    "player",
    "state",
    "private",
    "history",
    "answer",
    "prediction",
    "anticipations",
    "memory",
    "draft",
    "critique",
    "feedback",
    "start_health",
    "max_health",
    "income",
    "water_gain",
    "pd_t",
    "pd_r",
    "pd_p",
    "pd_s",
];

/// Prompt templates keyed `dir/name`. Lookups try the game directory first,
/// then `common/`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::embedded()
    }
}

impl TemplateCatalog {
    pub fn embedded() -> Self {
        let templates =
            EMBEDDED.iter().map(|(k, v)| (k.to_string(), v.trim_end().to_string())).collect();
        Self { templates }
    }

    /// Embedded catalog overridden by every `*.txt` file found under `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut catalog = Self::embedded();
        let io = |e: std::io::Error| TemplateError::Io { path: dir.display().to_string(), source: e };
        for sub in std::fs::read_dir(dir).map_err(io)? {
            let sub = sub.map_err(io)?.path();
            if !sub.is_dir() {
                continue;
            }
            let group = sub.file_name().unwrap_or_default().to_string_lossy().to_string();
            for file in std::fs::read_dir(&sub).map_err(io)? {
                let file = file.map_err(io)?.path();
                if file.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let name = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let text = std::fs::read_to_string(&file).map_err(io)?;
                catalog.templates.insert(format!("{group}/{name}"), text.trim_end().to_string());
            }
        }
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn insert(&mut self, key: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(key.into(), text.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, game: GameKind, name: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(&format!("{}/{name}", game.slug()))
            .or_else(|| self.templates.get(&format!("common/{name}")))
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Missing(game, name.to_string()))
    }

    /// Every template only uses known placeholders, and every game can render every step.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let known: BTreeSet<&str> = PLACEHOLDERS.iter().copied().collect();
        for (key, text) in &self.templates {
            for name in placeholders(text) {
                if !known.contains(name) {
                    return Err(TemplateError::UnknownPlaceholder(key.clone(), name.to_string()));
                }
            }
        }
        for game in [GameKind::G08a, GameKind::Sag, GameKind::Neg, GameKind::Pd] {
            for name in ["system", "persona_preamble", "rules", "answer", "prediction"] {
                self.get(game, name)?;
            }
            for step in ALL_STEPS {
                self.get(game, step.template())?;
            }
        }
        Ok(())
    }

    /// Renders the system and user messages for a backend call.
    pub fn render(&self, ctx: &PromptContext) -> Result<Vec<ChatMessage>, TemplateError> {
        let values = self.values(ctx)?;
        let mut system = fill(self.get(ctx.game, "system")?, &values);
        if ctx.step == Step::Persona {
            system = format!("{}\n\n{system}", self.get(ctx.game, "persona_preamble")?);
        }
        let user = fill(self.get(ctx.game, ctx.step.template())?, &values);
        Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
    }

    fn values(&self, ctx: &PromptContext) -> Result<BTreeMap<&'static str, String>, TemplateError> {
        let mut v: BTreeMap<&'static str, String> = BTreeMap::new();
        v.insert("round", ctx.round.to_string());
        v.insert("max_rounds", ctx.max_rounds.to_string());
        v.insert("num_agents", ctx.num_agents.to_string());
        v.insert("player", render::player_name(ctx.perspective));
        match &ctx.snapshot.public_state {
            PublicState::Sag(s) => {
                v.insert("start_health", s.rules.start_health.to_string());
                v.insert("max_health", s.rules.max_health.to_string());
                v.insert("income", s.rules.daily_income.to_string());
                v.insert("water_gain", s.rules.water_gain.to_string());
            }
            PublicState::Pd(s) => {
                v.insert("pd_t", s.matrix.t.to_string());
                v.insert("pd_r", s.matrix.r.to_string());
                v.insert("pd_p", s.matrix.p.to_string());
                v.insert("pd_s", s.matrix.s.to_string());
            }
            _ => {}
        }
        let rules = fill(self.get(ctx.game, "rules")?, &v);
        v.insert("rules", rules);
        v.insert("state", render::render_state(ctx));
        v.insert("private", render::render_private(ctx));
        v.insert("history", render::render_history(ctx));
        v.insert("answer", self.get(ctx.game, "answer")?.to_string());
        v.insert("prediction", self.get(ctx.game, "prediction")?.to_string());
        v.insert("anticipations", render::render_anticipations(ctx));
        v.insert("memory", render::render_memory(&ctx.memory));
        v.insert("draft", ctx.draft.clone().unwrap_or_default());
        v.insert("critique", ctx.critique.clone().unwrap_or_default());
        v.insert("feedback", ctx.feedback.clone().unwrap_or_default());
        Ok(v)
    }
}

const ALL_STEPS: [Step; 10] = [
    Step::Direct,
    Step::Cot,
    Step::Persona,
    Step::Reflect,
    Step::Pcot,
    Step::KrDecide,
    Step::Draft,
    Step::Critique,
    Step::Revise,
    Step::ReflectUpdate,
];

fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push(after[..end].trim());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

/// Substitutes `{{name}}` placeholders, then squeezes the blank runs left by
/// empty sections.
fn fill(template: &str, values: &BTreeMap<&'static str, String>) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim();
                out.push_str(values.get(name).map_or("", String::as_str));
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    squeeze_blank_lines(&out)
}

fn squeeze_blank_lines(text: &str) -> String {
    let mut lines: Vec<&str> = Vec::new();
    for line in text.lines() {
        let blank = line.trim().is_empty();
        if blank && lines.last().is_none_or(|l| l.trim().is_empty()) {
            continue;
        }
        lines.push(if blank { "" } else { line });
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}
