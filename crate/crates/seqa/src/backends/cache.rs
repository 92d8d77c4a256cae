//! Persistent content-addressed cache for backend calls.
//!
//! Every cache key hashes (backend fingerprint, operation, canonical inputs,
//! params, seed), so values can never leak between models, operations, or
//! seeds. One file per key under a two-character fan-out directory; writes
//! go to a temp file and are renamed into place, so readers never observe a
//! partial value. A `manifest.jsonl` records which fingerprints produced
//! which entries.
//!
//! Generation entries hold the whole sample list for a prompt's stream and
//! grow on demand: a K = 500 run extends the K = 100 run's entry instead of
//! creating a new one, which is what makes sample-size sweeps cheap.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    BackendError, BackendFingerprint, CausalGenerator, CausalScorer, GenerationParams,
    MaskedScorer, SentenceEncoder, TokenLogProbs,
};
use crate::voting::FeatureVector;

/// Environment variable naming the cache root when the config leaves it unset.
pub const CACHE_DIR_ENV: &str = "SEQA_CACHE_DIR";

#[derive(Serialize)]
struct KeyEnvelope<'a, P: Serialize> {
    fingerprint: &'a str,
    operation: &'a str,
    payload: &'a P,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry<V> {
    fingerprint: String,
    operation: String,
    value: V,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    hash: String,
    fingerprint: String,
    operation: String,
    stored_at: String,
}

/// Directory-backed cache; cheap to clone via [`Arc`].
#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl DiskCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root, write_lock: Mutex::new(()) })
    }

    /// Explicit path if given, else the `SEQA_CACHE_DIR` environment
    /// variable, else no cache.
    pub fn resolve(explicit: Option<&Path>) -> Result<Option<Arc<Self>>, BackendError> {
        if let Some(p) = explicit {
            return Ok(Some(Arc::new(Self::open(p)?)));
        }
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(p) if !p.is_empty() => Ok(Some(Arc::new(Self::open(PathBuf::from(p))?))),
            _ => Ok(None),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Content hash of one fully-qualified key.
    pub fn key_hash<P: Serialize>(fingerprint: &str, operation: &str, payload: &P) -> String {
        let envelope = KeyEnvelope { fingerprint, operation, payload };
        let bytes = serde_json::to_vec(&envelope).expect("key serialization cannot fail");
        hex::encode(Sha256::digest(&bytes))
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2]).join(format!("{hash}.json"))
    }

    /// Fetch a stored value; any unreadable or corrupt entry is a miss.
    pub fn get<V: DeserializeOwned>(&self, hash: &str) -> Option<V> {
        let path = self.path_for(hash);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry<V>>(&bytes) {
            Ok(entry) => Some(entry.value),
            Err(err) => {
                log::warn!("corrupt cache entry {} treated as miss: {err}", path.display());
                None
            }
        }
    }

    /// Store a value under its key hash, atomically, and log it in the manifest.
    pub fn put<V: Serialize>(
        &self,
        hash: &str,
        fingerprint: &str,
        operation: &str,
        value: &V,
    ) -> Result<(), BackendError> {
        let entry = Entry {
            fingerprint: fingerprint.to_string(),
            operation: operation.to_string(),
            value,
        };
        let bytes = serde_json::to_vec(&entry)
            .map_err(|e| BackendError::Cache(std::io::Error::other(e)))?;
        let path = self.path_for(hash);
        let dir = path.parent().expect("fan-out dir");
        std::fs::create_dir_all(dir)?;

        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.persist(&path).map_err(|e| BackendError::Cache(e.error))?;

        let line = ManifestLine {
            hash: hash.to_string(),
            fingerprint: fingerprint.to_string(),
            operation: operation.to_string(),
            stored_at: chrono::Utc::now().to_rfc3339(),
        };
        let mut manifest = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("manifest.jsonl"))?;
        serde_json::to_writer(&mut manifest, &line)
            .map_err(|e| BackendError::Cache(std::io::Error::other(e)))?;
        manifest.write_all(b"\n")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Transparent caching wrappers
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenerateKey<'a> {
    prompt: &'a str,
    stream: String,
}

/// Caches whole sample streams per (fingerprint, prompt, stream params).
pub struct CachedGenerator {
    inner: Arc<dyn CausalGenerator>,
    cache: Arc<DiskCache>,
}

impl CachedGenerator {
    pub fn new(inner: Arc<dyn CausalGenerator>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }

    fn stream_hash(&self, prompt: &str, params: &GenerationParams) -> String {
        let key = GenerateKey { prompt, stream: params.stream_key() };
        DiskCache::key_hash(&self.inner.fingerprint().key(), "generate", &key)
    }

    fn ensure_len(
        &self,
        prompt: &str,
        params: &GenerationParams,
        len: usize,
    ) -> Result<Vec<String>, BackendError> {
        let hash = self.stream_hash(prompt, params);
        let mut stream: Vec<String> = self.cache.get(&hash).unwrap_or_default();
        if stream.len() < len {
            let missing = self
                .inner
                .sample_block(prompt, params, stream.len(), len - stream.len())?;
            stream.extend(missing);
            self.cache
                .put(&hash, &self.inner.fingerprint().key(), "generate", &stream)?;
        }
        Ok(stream)
    }
}

impl CausalGenerator for CachedGenerator {
    fn sample(
        &self,
        prompt: &str,
        params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError> {
        Ok(self.ensure_len(prompt, params, index + 1)?[index].clone())
    }

    fn sample_block(
        &self,
        prompt: &str,
        params: &GenerationParams,
        start: usize,
        count: usize,
    ) -> Result<Vec<String>, BackendError> {
        let stream = self.ensure_len(prompt, params, start + count)?;
        Ok(stream[start..start + count].to_vec())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}

#[derive(Serialize)]
struct EmbedKey<'a> {
    text: &'a str,
}

pub struct CachedEncoder {
    inner: Arc<dyn SentenceEncoder>,
    cache: Arc<DiskCache>,
}

impl CachedEncoder {
    pub fn new(inner: Arc<dyn SentenceEncoder>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }
}

impl SentenceEncoder for CachedEncoder {
    fn encode(&self, text: &str) -> Result<FeatureVector, BackendError> {
        let fp = self.inner.fingerprint().key();
        let hash = DiskCache::key_hash(&fp, "embed", &EmbedKey { text });
        if let Some(values) = self.cache.get::<Vec<f64>>(&hash) {
            return Ok(FeatureVector::new(values)?);
        }
        let vector = self.inner.encode(text)?;
        self.cache.put(&hash, &fp, "embed", &vector.values().to_vec())?;
        Ok(vector)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}

#[derive(Serialize)]
struct CausalKey<'a> {
    prompt: &'a str,
    continuation: &'a str,
}

pub struct CachedCausalScorer {
    inner: Arc<dyn CausalScorer>,
    cache: Arc<DiskCache>,
}

impl CachedCausalScorer {
    pub fn new(inner: Arc<dyn CausalScorer>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }
}

impl CausalScorer for CachedCausalScorer {
    fn token_logprobs(&self, prompt: &str, continuation: &str) -> Result<TokenLogProbs, BackendError> {
        let fp = self.inner.fingerprint().key();
        let hash = DiskCache::key_hash(&fp, "token_logprobs", &CausalKey { prompt, continuation });
        if let Some(stored) = self.cache.get::<TokenLogProbs>(&hash) {
            return Ok(stored);
        }
        let fresh = self.inner.token_logprobs(prompt, continuation)?;
        self.cache.put(&hash, &fp, "token_logprobs", &fresh)?;
        Ok(fresh)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}

#[derive(Serialize)]
struct MaskKey<'a> {
    context: &'a str,
    target_index: usize,
}

#[derive(Serialize)]
struct CountKey<'a> {
    text: &'a str,
}

pub struct CachedMaskedScorer {
    inner: Arc<dyn MaskedScorer>,
    cache: Arc<DiskCache>,
}

impl CachedMaskedScorer {
    pub fn new(inner: Arc<dyn MaskedScorer>, cache: Arc<DiskCache>) -> Self {
        Self { inner, cache }
    }
}

impl MaskedScorer for CachedMaskedScorer {
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError> {
        let fp = self.inner.fingerprint().key();
        let hash = DiskCache::key_hash(&fp, "masked_logprob", &MaskKey { context, target_index });
        if let Some(stored) = self.cache.get::<f64>(&hash) {
            return Ok(stored);
        }
        let fresh = self.inner.masked_logprob(context, target_index)?;
        self.cache.put(&hash, &fp, "masked_logprob", &fresh)?;
        Ok(fresh)
    }

    fn token_count(&self, text: &str) -> Result<usize, BackendError> {
        let fp = self.inner.fingerprint().key();
        let hash = DiskCache::key_hash(&fp, "token_count", &CountKey { text });
        if let Some(stored) = self.cache.get::<usize>(&hash) {
            return Ok(stored);
        }
        let fresh = self.inner.token_count(text)?;
        self.cache.put(&hash, &fp, "token_count", &fresh)?;
        Ok(fresh)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::generate_voters;
    use crate::backends::stub::{HashingEncoder, SeededPoolGenerator, UniformScorer};

    fn pool_gen() -> Arc<dyn CausalGenerator> {
        let pool: Vec<String> = ["ember", "stone", "river", "cloud", "field", "lantern"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Arc::new(SeededPoolGenerator::new("cache-test", pool, 5))
    }

    #[test]
    fn round_trip_and_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();

        let hash = DiskCache::key_hash("fp", "op", &("payload", 1));
        assert!(cache.get::<Vec<String>>(&hash).is_none());
        cache
            .put(&hash, "fp", "op", &vec!["a".to_string(), "b".to_string()])
            .unwrap();
        assert_eq!(
            cache.get::<Vec<String>>(&hash).unwrap(),
            vec!["a".to_string(), "b".to_string()]
        );

        // key components all matter
        let other_seed = DiskCache::key_hash("fp", "op", &("payload", 2));
        let other_fp = DiskCache::key_hash("fp2", "op", &("payload", 1));
        assert_ne!(hash, other_seed);
        assert_ne!(hash, other_fp);
        assert!(cache.get::<Vec<String>>(&other_seed).is_none());
        assert!(cache.get::<Vec<String>>(&other_fp).is_none());
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let hash = DiskCache::key_hash("fp", "op", &"x");
        cache.put(&hash, "fp", "op", &42u32).unwrap();

        let path = dir.path().join(&hash[..2]).join(format!("{hash}.json"));
        std::fs::write(&path, b"{ not json").unwrap();
        assert!(cache.get::<u32>(&hash).is_none());
    }

    #[test]
    fn manifest_records_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        cache
            .put(&DiskCache::key_hash("fpA", "generate", &1), "fpA", "generate", &1u8)
            .unwrap();
        cache
            .put(&DiskCache::key_hash("fpB", "embed", &2), "fpB", "embed", &2u8)
            .unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
        let lines: Vec<&str> = manifest.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("fpA") && lines[0].contains("generate"));
        assert!(lines[1].contains("fpB") && lines[1].contains("embed"));
    }

    #[test]
    fn cached_generation_is_bit_exact_and_extendable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
        let inner = pool_gen();
        let cached = CachedGenerator::new(inner.clone(), cache);

        let small = GenerationParams { sample_count: 10, seed: 3, ..Default::default() };
        let large = GenerationParams { sample_count: 40, seed: 3, ..Default::default() };

        let direct_small = generate_voters("a prompt", &small, inner.as_ref()).unwrap();
        let via_cache_small = generate_voters("a prompt", &small, &cached).unwrap();
        assert_eq!(direct_small, via_cache_small);

        // the larger run extends the same stream; its prefix is the small run
        let via_cache_large = generate_voters("a prompt", &large, &cached).unwrap();
        assert_eq!(via_cache_large[..10], via_cache_small[..]);

        // warm replay is identical
        let replay = generate_voters("a prompt", &large, &cached).unwrap();
        assert_eq!(replay, via_cache_large);
    }

    #[test]
    fn cached_generator_misses_on_seed_change() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
        let cached = CachedGenerator::new(pool_gen(), cache);
        let a = GenerationParams { sample_count: 5, seed: 1, ..Default::default() };
        let b = GenerationParams { sample_count: 5, seed: 2, ..Default::default() };
        let va = generate_voters("p", &a, &cached).unwrap();
        let vb = generate_voters("p", &b, &cached).unwrap();
        assert_ne!(va, vb);
    }

    #[test]
    fn cached_encoder_and_scorers_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());

        let enc = Arc::new(HashingEncoder::new("t", 32));
        let cached_enc = CachedEncoder::new(enc.clone(), cache.clone());
        let direct = enc.encode("voters of the pool").unwrap();
        let first = cached_enc.encode("voters of the pool").unwrap();
        let second = cached_enc.encode("voters of the pool").unwrap();
        assert_eq!(direct, first);
        assert_eq!(first, second);

        let scorer = Arc::new(UniformScorer::new("t", 10));
        let cached_scorer = CachedCausalScorer::new(scorer.clone(), cache);
        let d = scorer.token_logprobs("p", "a b c").unwrap();
        let c1 = cached_scorer.token_logprobs("p", "a b c").unwrap();
        let c2 = cached_scorer.token_logprobs("p", "a b c").unwrap();
        assert_eq!(d, c1);
        assert_eq!(c1, c2);
    }
}
