//! Task definitions and their line-oriented text assets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Contrastive class that every task carries in addition to the generated ones.
pub const BACKGROUND_CLASS: &str = "background";

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("missing asset {path}: {source}")]
    MissingAsset {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed task descriptor {path}: {source}")]
    Descriptor {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("asset `{0}` has no entries")]
    EmptyAsset(&'static str),
    #[error("contrastive classes must contain \"background\" exactly once (found {0})")]
    MissingBackgroundClass(usize),
}

/// What to segment (`target`) in which kind of image (`whole`), plus the
/// text resources that drive grounding and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    target: String,
    whole: String,
    grounding_sentences: Vec<String>,
    contrastive_classes: Vec<String>,
    descriptors: Vec<String>,
}

impl TaskDefinition {
    pub fn new(
        target: impl Into<String>,
        whole: impl Into<String>,
        grounding_sentences: Vec<String>,
        contrastive_classes: Vec<String>,
        descriptors: Vec<String>,
    ) -> Result<Self, TaskError> {
        if grounding_sentences.is_empty() {
            return Err(TaskError::EmptyAsset("grounding_sentences"));
        }
        if descriptors.is_empty() {
            return Err(TaskError::EmptyAsset("descriptors"));
        }
        let n_background = contrastive_classes
            .iter()
            .filter(|c| c.as_str() == BACKGROUND_CLASS)
            .count();
        if n_background != 1 {
            return Err(TaskError::MissingBackgroundClass(n_background));
        }
        Ok(Self {
            target: target.into(),
            whole: whole.into(),
            grounding_sentences,
            contrastive_classes,
            descriptors,
        })
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn whole(&self) -> &str {
        &self.whole
    }

    pub fn grounding_sentences(&self) -> &[String] {
        &self.grounding_sentences
    }

    pub fn contrastive_classes(&self) -> &[String] {
        &self.contrastive_classes
    }

    pub fn descriptors(&self) -> &[String] {
        &self.descriptors
    }

    /// Zero-shot label set: the target first, then every contrastive class.
    pub fn classification_labels(&self) -> Vec<String> {
        std::iter::once(self.target.clone())
            .chain(self.contrastive_classes.iter().cloned())
            .collect()
    }
}

/// On-disk task descriptor. Asset paths are resolved relative to the
/// descriptor's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub target: String,
    pub whole: String,
    pub grounding_sentences_path: PathBuf,
    pub classes_path: PathBuf,
    pub descriptors_path: PathBuf,
}

pub fn load_task(path: impl AsRef<Path>) -> Result<TaskDefinition, TaskError> {
    let path = path.as_ref();
    let text = read_asset(path)?;
    let desc: TaskDescriptor =
        serde_json::from_str(&text).map_err(|source| TaskError::Descriptor {
            path: path.to_owned(),
            source,
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let sentences = parse_lines(&read_asset(&base.join(&desc.grounding_sentences_path))?);
    let mut classes = parse_classes(&read_asset(&base.join(&desc.classes_path))?);
    let descriptors = parse_lines(&read_asset(&base.join(&desc.descriptors_path))?);

    let mut seen_background = false;
    classes.retain(|c| c != BACKGROUND_CLASS || !std::mem::replace(&mut seen_background, true));
    if !seen_background {
        classes.push(BACKGROUND_CLASS.to_owned());
    }
    TaskDefinition::new(desc.target, desc.whole, sentences, classes, descriptors)
}

/// Writes a descriptor plus its three asset files into `dir`.
pub fn save_task(task: &TaskDefinition, dir: impl AsRef<Path>) -> std::io::Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let desc = TaskDescriptor {
        target: task.target.clone(),
        whole: task.whole.clone(),
        grounding_sentences_path: "grounding_sentences.txt".into(),
        classes_path: "classes.txt".into(),
        descriptors_path: "descriptors.txt".into(),
    };
    let generated: Vec<&str> = task
        .contrastive_classes
        .iter()
        .map(String::as_str)
        .filter(|c| *c != BACKGROUND_CLASS)
        .collect();
    std::fs::write(dir.join(&desc.grounding_sentences_path), join_lines(&task.grounding_sentences))?;
    std::fs::write(dir.join(&desc.classes_path), generated.join(", ") + "\n")?;
    std::fs::write(dir.join(&desc.descriptors_path), join_lines(&task.descriptors))?;
    let path = dir.join("task.json");
    let json = serde_json::to_string_pretty(&desc).map_err(std::io::Error::other)?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

fn join_lines(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

fn read_asset(path: &Path) -> Result<String, TaskError> {
    std::fs::read_to_string(path).map_err(|source| TaskError::MissingAsset {
        path: path.to_owned(),
        source,
    })
}

fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Classes come either one per line or as a single comma-separated line.
fn parse_classes(text: &str) -> Vec<String> {
    text.lines()
        .flat_map(|l| l.split(','))
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_owned)
        .collect()
}
