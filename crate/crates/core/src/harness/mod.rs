//! Benchmark evaluation and the single-video commands built on the engine.

mod dataset;
mod edit;
mod eval;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::answer::{EmbeddingTable, VocabMode, Vocabulary};
use crate::clip::{sample_uniform, SourceVideo, VideoClip};
use crate::codegen::{ApiDoc, ExamplePool, FixtureStore};
use crate::gateway::fault::{inject_fault, FaultSpec};
use crate::gateway::mock::{MockBackend, MockWorld};
use crate::gateway::remote::{HttpBackend, RemoteConfig};
use crate::gateway::{Gateway, ResponseCache};
use crate::interpreter::ExecConfig;
use crate::primitives::{detect_frames, ModuleError, Session};
use crate::summarizer::{get_summary, SummaryExport};
use crate::tracker::{summarize_tracks, track_objects, Track, TrackSummary};

pub use dataset::{load_dataset, parse_dataset, BenchmarkRecord};
pub use edit::{edit_video, segments_from_mask, EditMode, EditResult, Segment};
pub use eval::{
    answer_question, evaluate, write_eval_outputs, Attempt, EvalOutcome, EvalRecord, EvalReport, QuestionInput,
    TypeStats,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl HarnessError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    #[default]
    Fixture,
    Live,
}

/// Harness configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub remote: Vec<RemoteConfig>,
    /// World files or directories of world files.
    pub mock_worlds: Vec<PathBuf>,
    /// Directory holding one frame directory per video id.
    pub frames_root: Option<PathBuf>,
    pub max_concurrency: usize,
    /// Records evaluated in parallel.
    pub workers: usize,
    /// Uniformly sampled frames per question; `null` keeps every frame.
    pub sample_frames: Option<usize>,
    pub generation: GenerationMode,
    pub fixtures: Option<PathBuf>,
    pub example_pool: Option<PathBuf>,
    pub examples_k: usize,
    pub embeddings: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub vocab_mode: VocabMode,
    /// API method inclusion overrides, by method name.
    pub api: BTreeMap<String, bool>,
    /// Persistent response cache (JSON lines).
    pub cache: Option<PathBuf>,
    /// Sampling temperature for remote language models that do not set one.
    pub temperature: f64,
    pub generation_max_tokens: u32,
    /// Corruptions applied to the mock worlds at load time.
    pub faults: Vec<FaultSpec>,
    pub exec: ExecConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            remote: Vec::new(),
            mock_worlds: Vec::new(),
            frames_root: None,
            max_concurrency: 8,
            workers: 4,
            sample_frames: Some(60),
            generation: GenerationMode::Fixture,
            fixtures: None,
            example_pool: None,
            examples_k: 4,
            embeddings: None,
            vocab: None,
            vocab_mode: VocabMode::None,
            api: BTreeMap::new(),
            cache: None,
            temperature: 0.0,
            generation_max_tokens: 768,
            faults: Vec::new(),
            exec: ExecConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config(format!("{}: {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.mock_worlds.iter_mut().for_each(fix);
        for p in [
            &mut self.frames_root,
            &mut self.fixtures,
            &mut self.example_pool,
            &mut self.embeddings,
            &mut self.vocab,
            &mut self.cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn api_doc(&self) -> Result<ApiDoc, HarnessError> {
        let mut api = ApiDoc::standard();
        for (name, on) in &self.api {
            api.set(name, *on).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(api)
    }

    fn check(&self) -> Result<(), HarnessError> {
        if self.max_concurrency == 0 || self.workers == 0 {
            return Err(HarnessError::Config("max_concurrency and workers must be at least 1".into()));
        }
        if self.sample_frames == Some(0) {
            return Err(HarnessError::Config("sample_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a run needs, loaded once from a config.
pub struct Runtime {
    pub config: HarnessConfig,
    pub gateway: Gateway,
    pub api: ApiDoc,
    pub pool: ExamplePool,
    pub table: EmbeddingTable,
    pub vocab: Option<Vocabulary>,
    pub fixtures: Option<FixtureStore>,
    worlds: HashMap<String, MockWorld>,
    videos: HashMap<String, Arc<SourceVideo>>,
}

impl Runtime {
    pub fn new(config: HarnessConfig) -> Result<Self, HarnessError> {
        config.check()?;
        let mut worlds = HashMap::new();
        for path in &config.mock_worlds {
            for w in MockWorld::load_all(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))? {
                let mut w = w;
                for spec in &config.faults {
                    w = inject_fault(&w, spec).map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                if worlds.insert(w.video_id.clone(), w).is_some() {
                    return Err(HarnessError::Config("two mock worlds share a video id".into()));
                }
            }
        }
        let mut gateway = Gateway::new(config.max_concurrency);
        if !worlds.is_empty() {
            gateway = gateway.with_backend(Arc::new(MockBackend::new(worlds.values().cloned())));
        }
        for remote in &config.remote {
            let mut remote = remote.clone();
            remote.temperature.get_or_insert(config.temperature);
            let caps = remote.capabilities.clone();
            let backend = Arc::new(HttpBackend::new(remote).map_err(|e| HarnessError::Config(e.to_string()))?);
            if caps.is_empty() {
                gateway = gateway.with_backend(backend);
            } else {
                for c in caps {
                    gateway = gateway.with_route(c, backend.clone());
                }
            }
        }
        if let Some(path) = &config.cache {
            let cache = ResponseCache::open(path).map_err(|e| HarnessError::io(path, e))?;
            gateway = gateway.with_cache(Arc::new(cache));
        }
        let pool = match &config.example_pool {
            Some(p) => ExamplePool::load(p).map_err(|e| HarnessError::Config(e.to_string()))?,
            None => ExamplePool::default(),
        };
        let table = match &config.embeddings {
            Some(p) => EmbeddingTable::load(p).map_err(|e| HarnessError::Config(e.to_string()))?,
            None => EmbeddingTable::default(),
        };
        let vocab = match &config.vocab {
            Some(p) => Some(Vocabulary::load(p).map_err(|e| HarnessError::Config(e.to_string()))?),
            None => None,
        };
        if vocab.is_none() && config.vocab_mode != VocabMode::None {
            return Err(HarnessError::Config("vocab_mode set without a vocabulary file".into()));
        }
        let fixtures = match &config.fixtures {
            Some(dir) if !dir.is_dir() => {
                return Err(HarnessError::Config(format!("fixtures directory {} does not exist", dir.display())))
            }
            Some(dir) => Some(FixtureStore::new(dir.clone())),
            None => None,
        };
        Ok(Runtime { api: config.api_doc()?, config, gateway, pool, table, vocab, fixtures, worlds, videos: HashMap::new() })
    }

    pub fn world(&self, video_id: &str) -> Option<&MockWorld> {
        self.worlds.get(video_id)
    }

    /// Makes a frame directory available under its video id.
    pub fn add_frame_dir(&mut self, dir: &Path) -> Result<String, HarnessError> {
        let video = open_frame_dir(dir)?;
        let id = video.video_id.to_string();
        self.videos.insert(id.clone(), video);
        Ok(id)
    }

    /// A mock world id, or a path to a frame directory.
    pub fn resolve_video(&mut self, spec: &str) -> Result<String, HarnessError> {
        if self.worlds.contains_key(spec) || self.videos.contains_key(spec) {
            return Ok(spec.to_owned());
        }
        self.add_frame_dir(Path::new(spec))
    }

    /// The source video for an id: a registered frame directory, a mock
    /// world, or `<frames_root>/<id>`.
    pub fn video(&self, video_id: &str) -> Result<Arc<SourceVideo>, HarnessError> {
        if let Some(v) = self.videos.get(video_id) {
            return Ok(v.clone());
        }
        if let Some(w) = self.worlds.get(video_id) {
            return Ok(Arc::new(w.source_video()));
        }
        let Some(root) = &self.config.frames_root else {
            return Err(HarnessError::Config(format!("no mock world or frame directory for video {video_id:?}")));
        };
        open_frame_dir(&root.join(video_id))
    }

    /// The clip programs see: the whole video, or a uniform sample of it.
    pub fn question_clip(&self, video: &Arc<SourceVideo>) -> VideoClip {
        match self.config.sample_frames {
            Some(n) if (n as u64) < video.frame_count => sample_uniform(video, n).expect("n is positive"),
            _ => video.full_clip(),
        }
    }

    pub fn session(&self) -> Session<'_> {
        Session::new(&self.gateway, self.config.exec.primitives)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackRun {
    pub tracks: Vec<Track>,
    pub summary: Vec<TrackSummary>,
    pub detections: usize,
}

/// Detects `object` in every frame of `clip` and links the detections.
pub fn track_video(rt: &Runtime, clip: &VideoClip, object: &str) -> Result<TrackRun, ModuleError> {
    let params = &rt.config.exec.tracker;
    let frames = detect_frames(&rt.session(), clip, object, params.low_threshold)?;
    let detections = frames.iter().map(|f| f.detections.len()).sum();
    if detections == 0 {
        log::warn!("no detections of {object:?} in {}", clip.source().video_id);
    }
    let tracks = track_objects(&frames, params)
        .map_err(|e| ModuleError::InvalidArgument { op: "track".into(), message: e.to_string() })?;
    Ok(TrackRun { summary: summarize_tracks(&tracks), tracks, detections })
}

pub fn summarize_video(rt: &Runtime, video: &SourceVideo) -> Result<SummaryExport, ModuleError> {
    let (summary, captions) = get_summary(&rt.session(), video, &rt.config.exec.summary)?;
    Ok(SummaryExport::new(&video.video_id, &captions, &summary))
}

pub fn open_frame_dir(dir: &Path) -> Result<Arc<SourceVideo>, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::Config(format!("frame directory {} not found", dir.display())));
    }
    SourceVideo::from_frame_dir(dir).map(Arc::new).map_err(|e| HarnessError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_paths() {
        let mut cfg = HarnessConfig::from_json(r#"{"fixtures": "fx", "mock_worlds": ["w.json", "/abs"]}"#).unwrap();
        assert_eq!(cfg.examples_k, 4);
        assert_eq!(cfg.sample_frames, Some(60));
        assert_eq!(cfg.temperature, 0.0);
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.fixtures.as_deref(), Some(Path::new("/base/fx")));
        assert_eq!(cfg.mock_worlds, vec![PathBuf::from("/base/w.json"), PathBuf::from("/abs")]);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = HarnessConfig::from_json(r#"{"exec": {"budget": {"max_statements": "many"}}}"#).unwrap_err();
        assert!(err.to_string().contains("exec.budget.max_statements"), "{err}");
        assert!(HarnessConfig::from_json(r#"{"examples": 3}"#).is_err());
        let cfg = HarnessConfig::from_json(r#"{"api": {"teleport": true}}"#).unwrap();
        assert!(cfg.api_doc().is_err());
    }

    #[test]
    fn missing_frame_dir_names_path() {
        let err = open_frame_dir(Path::new("/no/such/frames")).unwrap_err();
        assert!(err.to_string().contains("/no/such/frames"));
    }
}
