//! Program generation: the API documentation block, in-context example
//! selection, prompt assembly and the fixture or live source of programs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::answer::{cosine, embed_phrase, normalize_phrase, EmbeddingTable};
use crate::gateway::{sha256_hex, CallRecord, CapabilityRequest, Gateway};
use crate::lang::{compile, Diagnostic, Program, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiMethod {
    pub name: String,
    pub doc: String,
    pub included: bool,
}

/// The documented program API, one block per method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiDoc {
    pub methods: Vec<ApiMethod>,
}

const API_HEADER: &str = "\
# Write a Python function using only the API below. No imports, loops or
# helper functions: assignments, `if` statements and a final `return`.
";

const STANDARD_API: &[(&str, bool, &str)] = &[
    (
        "get_max_key",
        true,
        "\
def get_max_key(counts: Dict[str, int]) -> str:
    \"\"\"The key with the largest count; the earliest key wins a tie.\"\"\"
",
    ),
    (
        "VideoClip",
        true,
        "\
class VideoClip:
    \"\"\"An ordered selection of frames from one video.

    num_frames : int
        How many frames the clip holds. `len(clip)` gives the same number.
    \"\"\"
",
    ),
    (
        "trim",
        true,
        "\
    def trim(self, start: int, end: int) -> VideoClip:
        \"\"\"Frames at positions start (inclusive) to end (exclusive).

        first_half = video.trim(0, video.num_frames // 2)
        \"\"\"
",
    ),
    (
        "filter_property",
        true,
        "\
    def filter_property(self, property: str) -> VideoClip:
        \"\"\"Keeps the frames for which a yes/no question is answered yes.

        property : str
            A yes/no question such as \"Is the door open?\".

        question: What is on the table while someone is eating?
        def answer_question(video, possible_answers):
            eating = video.filter_property(\"Is someone eating?\")
            counts = eating.video_query(\"What is on the table?\", possible_answers)
            return get_max_key(counts)
        \"\"\"
",
    ),
    (
        "filter_object",
        true,
        "\
    def filter_object(self, object: str) -> VideoClip:
        \"\"\"Keeps the frames in which the object detector finds `object`.

        question: What is the dog carrying?
        def answer_question(video, possible_answers):
            dog_frames = video.filter_object(\"dog\")
            counts = dog_frames.video_query(\"What is the dog carrying?\", possible_answers)
            return get_max_key(counts)
        \"\"\"
",
    ),
    (
        "find",
        true,
        "\
    def find(self, object: str) -> VideoClip:
        \"\"\"Every detected instance of `object`, as cropped regions. Later
        calls on the result look only inside the crops.
        \"\"\"
",
    ),
    (
        "video_query",
        true,
        "\
    def video_query(self, query: str, possible_answers: List[str]) -> Dict[str, int]:
        \"\"\"Asks `query` about every frame (or crop) and counts the answers.

        question: What color is the car?
        def answer_question(video, possible_answers):
            cars = video.find(\"car\")
            counts = cars.video_query(\"What color is this car?\", possible_answers)
            return get_max_key(counts)
        \"\"\"
",
    ),
    (
        "get_caption",
        true,
        "\
    def get_caption(self, index: int) -> str:
        \"\"\"A caption of the frame at position `index`, from 0 to num_frames - 1.\"\"\"
",
    ),
    (
        "get_script",
        true,
        "\
    def get_script(self) -> str:
        \"\"\"The transcript of speech in the whole video.\"\"\"
",
    ),
    (
        "get_summary",
        false,
        "\
    def get_summary(self) -> str:
        \"\"\"A paragraph describing what happens over the whole video.\"\"\"
",
    ),
    (
        "track_objects",
        true,
        "\
    def track_objects(self, object: str) -> List[Track]:
        \"\"\"Detects `object` in every frame and links the detections into
        tracks, one per physical instance. On crops from find(), call it with
        no argument. len() of the result counts the instances.
        \"\"\"
",
    ),
    (
        "choose_option",
        true,
        "\
    def choose_option(self, question: str, context: Dict[str, str], options: List[str]) -> str:
        \"\"\"Has a language model pick the option that best answers `question`
        given the labeled context strings (captions, transcripts, counts).

        question: Why did the man pick up the ladder?
        def answer_question(video, possible_answers):
            ladder = video.filter_object(\"ladder\")
            caption = ladder.get_caption(ladder.num_frames // 2)
            context = {\"caption\": caption}
            return ladder.choose_option(\"why did the man pick up the ladder?\", context, possible_answers)
        \"\"\"
",
    ),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodegenError {
    #[error("unknown API method {0:?}")]
    UnknownMethod(String),
    #[error("example pool: {0}")]
    Pool(String),
}

impl ApiDoc {
    pub fn standard() -> Self {
        ApiDoc {
            methods: STANDARD_API
                .iter()
                .map(|(name, included, doc)| ApiMethod { name: (*name).into(), doc: (*doc).into(), included: *included })
                .collect(),
        }
    }

    pub fn set(&mut self, name: &str, included: bool) -> Result<(), CodegenError> {
        let m = self
            .methods
            .iter_mut()
            .find(|m| m.name == name)
            .ok_or_else(|| CodegenError::UnknownMethod(name.into()))?;
        m.included = included;
        Ok(())
    }

    pub fn with(mut self, name: &str, included: bool) -> Result<Self, CodegenError> {
        self.set(name, included)?;
        Ok(self)
    }

    pub fn flags(&self) -> BTreeMap<String, bool> {
        self.methods.iter().map(|m| (m.name.clone(), m.included)).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::from(API_HEADER);
        for m in self.methods.iter().filter(|m| m.included) {
            out.push('\n');
            out.push_str(&m.doc);
        }
        out
    }
}

impl Default for ApiDoc {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolExample {
    pub question: String,
    pub program: String,
    pub task: TaskKind,
    /// Dataset split the example was drawn from.
    pub split: String,
}

/// In-context examples; programs validate and none come from a test split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExamplePool {
    examples: Vec<PoolExample>,
}

impl ExamplePool {
    pub fn new(examples: Vec<PoolExample>) -> Result<Self, CodegenError> {
        for (i, e) in examples.iter().enumerate() {
            if e.split.trim().to_lowercase().starts_with("test") {
                return Err(CodegenError::Pool(format!("example {i} comes from test split {:?}", e.split)));
            }
            if let Err(err) = compile(&e.program, e.task) {
                return Err(CodegenError::Pool(format!("example {i} does not validate: {err}")));
            }
        }
        Ok(ExamplePool { examples })
    }

    pub fn from_json(text: &str) -> Result<Self, CodegenError> {
        let examples: Vec<PoolExample> = serde_json::from_str(text).map_err(|e| CodegenError::Pool(e.to_string()))?;
        Self::new(examples)
    }

    pub fn load(path: &Path) -> Result<Self, CodegenError> {
        let text = std::fs::read_to_string(path).map_err(|e| CodegenError::Pool(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn examples(&self) -> &[PoolExample] {
        &self.examples
    }

    pub fn for_task(&self, task: TaskKind) -> Vec<PoolExample> {
        self.examples.iter().filter(|e| e.task == task).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// The `k` pool entries whose questions are most similar to `question`.
/// A verbatim match ranks first; remaining ties keep pool order.
pub fn select_examples(question: &str, pool: &[PoolExample], k: usize, table: &EmbeddingTable) -> Vec<PoolExample> {
    let q = embed_phrase(question, table);
    let norm = normalize_phrase(question);
    let mut scored: Vec<(bool, f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, e)| (normalize_phrase(&e.question) == norm, cosine(&q, &embed_phrase(&e.question, table)), i))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    scored.into_iter().take(k).map(|(_, _, i)| pool[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub api: String,
    pub examples: Vec<PoolExample>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub task: TaskKind,
    pub text: String,
    pub fingerprint: String,
}

pub fn build_prompt(
    api: &ApiDoc,
    examples: &[PoolExample],
    question: &str,
    options: Option<&[String]>,
    task: TaskKind,
) -> PromptBundle {
    let api_text = api.render();
    let mut text = api_text.clone();
    if !examples.is_empty() {
        text.push_str("\n# Examples\n");
        for e in examples {
            text.push_str(&format!("\nquestion: {}\n{}\n", e.question.trim(), e.program.trim_end()));
        }
    }
    let (entry, params) = task.entry_signature();
    text.push_str("\n# Task\n");
    text.push_str(&format!("\nquestion: {}\n", question.trim()));
    if let Some(opts) = options {
        text.push_str("options:\n");
        for (i, o) in opts.iter().enumerate() {
            text.push_str(&format!("{}. {}\n", i + 1, o.trim()));
        }
    }
    text.push_str(&format!("Reply with only the function `def {entry}({}):`.\n", params.join(", ")));
    let fingerprint = sha256_hex(text.as_bytes());
    PromptBundle {
        api: api_text,
        examples: examples.to_vec(),
        question: question.to_owned(),
        options: options.map(<[String]>::to_vec),
        task,
        text,
        fingerprint,
    }
}

/// The body of the first fenced code block, or the whole text if unfenced.
pub fn strip_code_fences(text: &str) -> String {
    let Some(open) = text.find("```") else {
        return text.to_owned();
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => body[..close].to_owned(),
        None => body.to_owned(),
    }
}

/// Stored programs, one `<key>.pvql` file per question id or prompt fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let safe = !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) && !key.starts_with('.');
        if !safe {
            return None;
        }
        std::fs::read_to_string(self.dir.join(format!("{key}.pvql"))).ok()
    }

    /// Question id first, then prompt fingerprint.
    pub fn lookup(&self, question_id: Option<&str>, fingerprint: &str) -> Option<String> {
        question_id.and_then(|q| self.get(q)).or_else(|| self.get(fingerprint))
    }
}

pub enum GenMode<'a> {
    Fixture { store: &'a FixtureStore, question_id: Option<&'a str> },
    Live { gateway: &'a Gateway, max_tokens: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub source: String,
    pub program: Program,
    pub attempts: u32,
    /// Language-model calls made while generating (live mode only).
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("program generation failed: {message}")]
pub struct GenerationFailure {
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<CallRecord>,
}

fn diag_text(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// Obtains, parses and validates a program for `bundle`.
pub fn generate_program(bundle: &PromptBundle, mode: GenMode<'_>) -> Result<Generated, GenerationFailure> {
    match mode {
        GenMode::Fixture { store, question_id } => {
            let Some(raw) = store.lookup(question_id, &bundle.fingerprint) else {
                return Err(GenerationFailure {
                    message: format!("no fixture for question {:?} or prompt {}", question_id.unwrap_or(""), &bundle.fingerprint[..12]),
                    diagnostics: vec![],
                    program_text: None,
                    calls: vec![],
                });
            };
            let source = strip_code_fences(&raw);
            match compile(&source, bundle.task) {
                Ok(program) => Ok(Generated { source, program, attempts: 1, calls: vec![] }),
                Err(e) => Err(GenerationFailure {
                    message: e.to_string(),
                    diagnostics: e.diagnostics(),
                    program_text: Some(source),
                    calls: vec![],
                }),
            }
        }
        GenMode::Live { gateway, max_tokens } => {
            let mut calls = Vec::new();
            let mut prompt = bundle.text.clone();
            let mut last: Option<(String, Vec<Diagnostic>, String)> = None;
            for attempt in 1..=2 {
                let (result, record) = gateway.call_recorded(&CapabilityRequest::llm(None, &prompt, max_tokens));
                calls.push(record);
                let raw = match result.and_then(|r| r.into_text()) {
                    Ok(t) => t,
                    Err(e) => {
                        return Err(GenerationFailure {
                            message: format!("language model call failed: {e}"),
                            diagnostics: vec![],
                            program_text: None,
                            calls,
                        })
                    }
                };
                let source = strip_code_fences(&raw);
                match compile(&source, bundle.task) {
                    Ok(program) => return Ok(Generated { source, program, attempts: attempt, calls }),
                    Err(e) => {
                        let ds = e.diagnostics();
                        prompt = format!(
                            "{}\n# The previous reply was rejected:\n{}\n# Reply again with a corrected function only.\n",
                            bundle.text,
                            diag_text(&ds)
                        );
                        last = Some((source, ds, e.to_string()));
                    }
                }
            }
            let (source, diagnostics, message) = last.expect("two failed attempts");
            Err(GenerationFailure { message, diagnostics, program_text: Some(source), calls })
        }
    }
}
