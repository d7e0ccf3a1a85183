use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{sha256_hex, CapabilityResponse};

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    request_id: String,
    response: CapabilityResponse,
}

/// Append-only JSON-lines response cache.
///
/// Keys combine the request id with the serving backend's fingerprint.
/// Identical keys always carry identical values, so concurrent writers may
/// race freely; the last line wins on reload.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CapabilityResponse>>,
    file: Mutex<Option<File>>,
}

pub fn cache_key(request_id: &str, backend_fingerprint: &str) -> String {
    sha256_hex(format!("{request_id}:{backend_fingerprint}").as_bytes())
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache { path: None, entries: RwLock::new(HashMap::new()), file: Mutex::new(None) }
    }

    /// Opens (creating if needed) a cache file. Unreadable lines are skipped
    /// with a warning; a torn final line from an interrupted write is expected.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.response);
                    }
                    Err(err) => log::warn!("{}:{}: skipping cache line: {err}", path.display(), n + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let torn = std::fs::read(path).map(|b| b.last().is_some_and(|&c| c != b'\n'))?;
        if torn {
            writeln!(file)?;
        }
        Ok(ResponseCache { path: Some(path.to_path_buf()), entries: RwLock::new(entries), file: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CapabilityResponse> {
        self.entries.read().get(key).cloned()
    }

    pub fn put(&self, key: &str, request_id: &str, response: &CapabilityResponse) -> io::Result<()> {
        self.entries.write().insert(key.to_owned(), response.clone());
        let mut file = self.file.lock();
        if let Some(f) = file.as_mut() {
            let line = serde_json::to_string(&Entry {
                key: key.to_owned(),
                request_id: request_id.to_owned(),
                response: response.clone(),
            })?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    use super::super::*;
    use super::*;

    struct Counting(AtomicU64, &'static str);

    impl Backend for Counting {
        fn name(&self) -> String {
            "counting".into()
        }
        fn fingerprint(&self) -> String {
            self.1.into()
        }
        fn supports(&self, _: Capability) -> bool {
            true
        }
        fn call(&self, r: &CapabilityRequest) -> Result<CapabilityResponse, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(CapabilityResponse::Text(format!("answer to {}", r.text.clone().unwrap_or_default())))
        }
    }

    #[test]
    fn second_identical_request_is_served_from_cache() {
        let backend = Arc::new(Counting(AtomicU64::new(0), "m1"));
        let gw = Gateway::new(4).with_backend(backend.clone()).with_cache(Arc::new(ResponseCache::in_memory()));
        let req = CapabilityRequest::image_qa("v", 1, None, "what?");
        let first = gw.call(&req).unwrap();
        let (second, rec) = gw.call_recorded(&req);
        assert_eq!(second.unwrap(), first);
        assert!(rec.cached);
        assert_eq!(backend.0.load(Ordering::SeqCst), 1);
        assert_eq!(gw.backend_calls(), 1);
        assert_eq!(gw.cache_hits(), 1);
    }

    #[test]
    fn persisted_cache_reloads_and_respects_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let req = CapabilityRequest::image_qa("v", 1, None, "what?");
        {
            let gw = Gateway::new(1)
                .with_backend(Arc::new(Counting(AtomicU64::new(0), "m1")))
                .with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
            gw.call(&req).unwrap();
        }
        let same = Arc::new(Counting(AtomicU64::new(0), "m1"));
        let gw = Gateway::new(1).with_backend(same.clone()).with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
        gw.call(&req).unwrap();
        assert_eq!(same.0.load(Ordering::SeqCst), 0);

        let other = Arc::new(Counting(AtomicU64::new(0), "m2"));
        let gw = Gateway::new(1).with_backend(other.clone()).with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
        gw.call(&req).unwrap();
        assert_eq!(other.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn torn_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"request_id\":\"r\",\"response\":{\"kind\":\"text\",\"value\":\"x\"}}\n{\"key\":").unwrap();
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.get("a"), Some(CapabilityResponse::Text("x".into())));
    }
}
