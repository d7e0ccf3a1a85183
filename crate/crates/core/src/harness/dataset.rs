use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::lang::TaskKind;
use crate::primitives::normalize_answer;

/// One benchmark question. Multiple-choice records carry `options`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkRecord {
    pub question_id: String,
    pub video_id: String,
    pub question: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// Accepted answers; any one of them counts as correct.
    pub answers: Vec<String>,
}

impl BenchmarkRecord {
    pub fn task(&self) -> TaskKind {
        if self.options.is_some() {
            TaskKind::MultipleChoice
        } else {
            TaskKind::Qa
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.question_id.trim().is_empty() {
            return Err("empty question_id".into());
        }
        if self.answers.is_empty() {
            return Err("no ground-truth answers".into());
        }
        if let Some(opts) = &self.options {
            if opts.len() < 2 {
                return Err("a multiple-choice record needs at least two options".into());
            }
            let norm: Vec<String> = opts.iter().map(|o| normalize_answer(o)).collect();
            if let Some(a) = self.answers.iter().find(|a| !norm.contains(&normalize_answer(a))) {
                return Err(format!("answer {a:?} is not one of the options"));
            }
        }
        Ok(())
    }
}

/// One JSON object per line; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<BenchmarkRecord>, HarnessError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| HarnessError::Dataset { line: line_no, message };
        let rec: BenchmarkRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        rec.check().map_err(fail)?;
        if !ids.insert(rec.question_id.clone()) {
            return Err(fail(format!("duplicate question_id {:?}", rec.question_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_dataset(&text)
}
