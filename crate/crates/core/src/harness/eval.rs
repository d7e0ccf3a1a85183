use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchmarkRecord, GenerationMode, HarnessError, Runtime};
use crate::answer::{match_answer, match_in, VocabMode};
use crate::codegen::{build_prompt, generate_program, select_examples, GenMode, GenerationFailure, PromptBundle};
use crate::gateway::{sha256_hex, Capability};
use crate::interpreter::{execute, ExecTrace, Value};
use crate::lang::TaskKind;
use crate::primitives::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalOutcome {
    Correct,
    GenerationFailure,
    ModuleFailure,
    PostprocessMismatch,
    WrongAnswer,
}

impl EvalOutcome {
    pub const ALL: [EvalOutcome; 5] = [
        EvalOutcome::Correct,
        EvalOutcome::GenerationFailure,
        EvalOutcome::ModuleFailure,
        EvalOutcome::PostprocessMismatch,
        EvalOutcome::WrongAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalOutcome::Correct => "correct",
            EvalOutcome::GenerationFailure => "generation_failure",
            EvalOutcome::ModuleFailure => "module_failure",
            EvalOutcome::PostprocessMismatch => "postprocess_mismatch",
            EvalOutcome::WrongAnswer => "wrong_answer",
        }
    }
}

impl std::fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuestionInput<'a> {
    pub question_id: Option<&'a str>,
    pub video_id: &'a str,
    pub question: &'a str,
    pub question_type: Option<&'a str>,
    pub options: Option<&'a [String]>,
}

impl<'a> From<&'a BenchmarkRecord> for QuestionInput<'a> {
    fn from(r: &'a BenchmarkRecord) -> Self {
        QuestionInput {
            question_id: Some(&r.question_id),
            video_id: &r.video_id,
            question: &r.question,
            question_type: r.question_type.as_deref(),
            options: r.options.as_deref(),
        }
    }
}

/// Everything produced while answering one question, up to (not including)
/// comparison with ground truth.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub bundle: PromptBundle,
    pub program: Option<String>,
    pub generation_error: Option<GenerationFailure>,
    pub trace: Option<ExecTrace>,
    pub raw_output: Option<String>,
    pub answer: Option<String>,
    pub similarity: Option<f64>,
    /// Set when the attempt stopped before producing an answer.
    pub failure: Option<EvalOutcome>,
    pub error: Option<String>,
}

/// Builds the prompt, obtains a program, runs it and maps its output to an
/// answer. With `dry_run` nothing is executed.
pub fn answer_question(rt: &Runtime, q: QuestionInput<'_>, dry_run: bool) -> Result<Attempt, HarnessError> {
    let task = if q.options.is_some() { TaskKind::MultipleChoice } else { TaskKind::Qa };
    let pool = rt.pool.for_task(task);
    let examples = select_examples(q.question, &pool, rt.config.examples_k, &rt.table);
    let bundle = build_prompt(&rt.api, &examples, q.question, q.options, task);
    let mode = match rt.config.generation {
        GenerationMode::Fixture => GenMode::Fixture {
            store: rt.fixtures.as_ref().ok_or_else(|| HarnessError::Config("no fixtures directory".into()))?,
            question_id: q.question_id,
        },
        GenerationMode::Live => GenMode::Live { gateway: &rt.gateway, max_tokens: rt.config.generation_max_tokens },
    };
    let mut attempt = Attempt {
        bundle: bundle.clone(),
        program: None,
        generation_error: None,
        trace: None,
        raw_output: None,
        answer: None,
        similarity: None,
        failure: None,
        error: None,
    };
    let generated = match generate_program(&bundle, mode) {
        Ok(g) => g,
        Err(fail) => {
            attempt.program = fail.program_text.clone();
            attempt.error = Some(fail.message.clone());
            attempt.generation_error = Some(fail);
            attempt.failure = Some(EvalOutcome::GenerationFailure);
            return Ok(attempt);
        }
    };
    attempt.program = Some(generated.source.clone());
    if dry_run {
        return Ok(attempt);
    }
    let video = rt.video(q.video_id)?;
    let clip = rt.question_clip(&video);
    let (result, trace) = execute(&generated.program, &clip, q.options, &rt.config.exec, &rt.gateway);
    attempt.trace = Some(trace);
    let value = match result {
        Ok(v) => v,
        Err(e) => {
            attempt.error = Some(e.to_string());
            attempt.failure = Some(EvalOutcome::ModuleFailure);
            return Ok(attempt);
        }
    };
    attempt.raw_output = Some(match &value {
        Value::Str(s) => s.clone(),
        other => other.to_string(),
    });
    match postprocess(rt, &q, &value) {
        Ok((answer, sim)) => {
            attempt.answer = Some(answer);
            attempt.similarity = sim;
        }
        Err(message) => {
            attempt.error = Some(message);
            attempt.failure = Some(EvalOutcome::PostprocessMismatch);
        }
    }
    Ok(attempt)
}

fn postprocess(rt: &Runtime, q: &QuestionInput<'_>, value: &Value) -> Result<(String, Option<f64>), String> {
    if let Some(options) = q.options {
        return match value {
            Value::Choice(c) if (1..=options.len()).contains(&c.index) => Ok((options[c.index - 1].clone(), None)),
            Value::Str(s) => match match_in(s, options, &rt.table) {
                Some(m) if !m.degenerate => Ok((m.answer, Some(m.similarity))),
                _ => Err(format!("output {s:?} matches none of the options")),
            },
            other => Err(format!("multiple-choice program returned a {}", other.type_name())),
        };
    }
    let raw = match value {
        Value::Str(s) => s.clone(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => (if *b { "yes" } else { "no" }).to_owned(),
        other => return Err(format!("open-ended program returned a {}", other.type_name())),
    };
    match &rt.vocab {
        None => {
            let a = normalize_answer(&raw);
            if a.is_empty() {
                Err("program returned an empty answer".into())
            } else {
                Ok((a, None))
            }
        }
        Some(vocab) => match match_answer(&raw, vocab, q.question_type, rt.config.vocab_mode, &rt.table) {
            Ok(m) if m.degenerate => Err(format!("output {raw:?} has no embedding and no exact vocabulary match")),
            Ok(m) => Ok((m.answer, Some(m.similarity))),
            Err(e) => Err(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRecord {
    #[serde(flatten)]
    pub record: BenchmarkRecord,
    pub prompt_fingerprint: String,
    pub outcome: EvalOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Backend calls made while executing the program.
    pub backend_calls: usize,
    pub capabilities: Vec<Capability>,
    #[serde(skip)]
    pub trace: Option<ExecTrace>,
    #[serde(skip)]
    pub prompt: String,
}

impl EvalRecord {
    fn new(record: &BenchmarkRecord, attempt: Attempt) -> Self {
        let outcome = attempt.failure.unwrap_or_else(|| {
            let got = attempt.answer.as_deref().map(normalize_answer).unwrap_or_default();
            if record.answers.iter().any(|a| normalize_answer(a) == got) {
                EvalOutcome::Correct
            } else {
                EvalOutcome::WrongAnswer
            }
        });
        let trace = attempt.trace.map(ExecTrace::without_timing);
        let capabilities: BTreeSet<Capability> = trace.iter().flat_map(|t| t.calls().map(|c| c.capability)).collect();
        EvalRecord {
            record: record.clone(),
            prompt_fingerprint: attempt.bundle.fingerprint.clone(),
            outcome,
            program: attempt.program,
            raw_output: attempt.raw_output,
            matched: attempt.answer,
            similarity: attempt.similarity,
            error: attempt.error,
            backend_calls: trace.as_ref().map_or(0, ExecTrace::call_count),
            capabilities: capabilities.into_iter().collect(),
            trace,
            prompt: attempt.bundle.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub counts: BTreeMap<EvalOutcome, usize>,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_type: BTreeMap<String, TypeStats>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl EvalReport {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut counts: BTreeMap<EvalOutcome, usize> = EvalOutcome::ALL.iter().map(|o| (*o, 0)).collect();
        let mut by_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in records {
            *counts.entry(r.outcome).or_default() += 1;
            if let Some(t) = &r.record.question_type {
                let e = by_type.entry(t.clone()).or_default();
                e.0 += 1;
                e.1 += usize::from(r.outcome == EvalOutcome::Correct);
            }
        }
        let correct = counts[&EvalOutcome::Correct];
        EvalReport {
            total: records.len(),
            accuracy: ratio(correct, records.len()),
            counts,
            by_type: by_type
                .into_iter()
                .map(|(t, (total, correct))| (t, TypeStats { total, correct, accuracy: ratio(correct, total) }))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Runs every record; records come back in dataset order.
pub fn evaluate(rt: &Runtime, dataset: &[BenchmarkRecord]) -> Result<(EvalReport, Vec<EvalRecord>), HarnessError> {
    for r in dataset {
        rt.video(&r.video_id)?;
        if let (VocabMode::TypeBased, Some(t), Some(v), None) =
            (rt.config.vocab_mode, &r.question_type, &rt.vocab, &r.options)
        {
            if !v.by_type.contains_key(t) {
                return Err(HarnessError::Config(format!(
                    "question {} has type {t:?}, which the vocabulary does not cover",
                    r.question_id
                )));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rt.config.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let records = pool.install(|| {
        dataset
            .par_iter()
            .map(|r| answer_question(rt, r.into(), false).map(|a| EvalRecord::new(r, a)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok((EvalReport::from_records(&records), records))
}

fn file_stem(question_id: &str) -> String {
    let safe = !question_id.is_empty()
        && !question_id.starts_with('.')
        && question_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if safe {
        question_id.to_owned()
    } else {
        format!("q-{}", &sha256_hex(question_id.as_bytes())[..16])
    }
}

/// Writes `report.json`, `records.jsonl`, `audit.jsonl` (wrong answers) and
/// per-question programs, prompts and traces under `dir`.
pub fn write_eval_outputs(dir: &Path, report: &EvalReport, records: &[EvalRecord]) -> Result<(), HarnessError> {
    let io = |p: &Path, e: std::io::Error| HarnessError::io(p, e);
    for sub in ["traces", "programs", "prompts"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
    }
    let write = |p: std::path::PathBuf, text: &str| fs::write(&p, text).map_err(|e| io(&p, e));
    write(dir.join("report.json"), &report.to_json())?;
    let line = |r: &EvalRecord| serde_json::to_string(r).expect("record serializes") + "\n";
    write(dir.join("records.jsonl"), &records.iter().map(line).collect::<String>())?;
    let audit: String = records.iter().filter(|r| r.outcome == EvalOutcome::WrongAnswer).map(line).collect();
    write(dir.join("audit.jsonl"), &audit)?;
    for r in records {
        let stem = file_stem(&r.record.question_id);
        write(dir.join("prompts").join(format!("{stem}.txt")), &r.prompt)?;
        if let Some(p) = &r.program {
            write(dir.join("programs").join(format!("{stem}.pvql")), p)?;
        }
        if let Some(t) = &r.trace {
            write(dir.join("traces").join(format!("{stem}.jsonl")), &t.to_jsonl())?;
        }
    }
    Ok(())
}
