//! HTTP client for model servers that implement the one-line-JSON protocol.
//!
//! Each backend call is a single POST whose body is one JSON object with an
//! `operation` discriminator; the response is a JSON envelope `{"ok": bool,
//! "error"?: string, ...payload}`. The server's identity is fetched once at
//! connection time via the `fingerprint` operation and folded into cache
//! keys like any local backend's. This keeps model runtimes out of this
//! process: a few dozen lines of Python around an inference library can
//! serve the whole protocol.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendError, BackendFingerprint, CausalGenerator, CausalScorer, GenerationParams,
    MaskedScorer, SentenceEncoder, TokenLogProbs,
};
use crate::voting::FeatureVector;

#[derive(Serialize)]
#[serde(tag = "operation", rename_all = "snake_case")]
enum Request<'a> {
    Fingerprint,
    Generate {
        prompt: &'a str,
        nucleus_p: f64,
        max_new_tokens: usize,
        seed: u64,
        start_index: usize,
        count: usize,
    },
    Embed {
        texts: &'a [String],
    },
    TokenLogprobs {
        prompt: &'a str,
        continuation: &'a str,
    },
    MaskedLogprob {
        context: &'a str,
        target_index: usize,
    },
    TokenCount {
        text: &'a str,
    },
}

#[derive(Deserialize)]
struct Envelope<T> {
    ok: bool,
    error: Option<String>,
    #[serde(flatten)]
    payload: Option<T>,
}

#[derive(Deserialize)]
struct FingerprintPayload {
    kind: String,
    model: String,
    version: String,
    tokenizer: String,
}

#[derive(Deserialize)]
struct GeneratePayload {
    samples: Vec<String>,
}

#[derive(Deserialize)]
struct EmbedPayload {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct TokenLogprobsPayload {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

#[derive(Deserialize)]
struct MaskedLogprobPayload {
    logprob: f64,
}

#[derive(Deserialize)]
struct TokenCountPayload {
    count: usize,
}

/// Client for one remote model server; may serve any subset of the backend
/// roles (the server decides which operations it answers).
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
    fingerprint: BackendFingerprint,
}

impl RemoteBackend {
    /// Connect and fetch the server's fingerprint.
    pub fn connect(url: impl Into<String>) -> Result<Self, BackendError> {
        Self::connect_with_timeout(url, Duration::from_secs(120))
    }

    pub fn connect_with_timeout(
        url: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let url = url.into();
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let fp: FingerprintPayload = post(&agent, &url, &Request::Fingerprint)?;
        Ok(Self {
            url,
            agent,
            fingerprint: BackendFingerprint::new(fp.kind, fp.model, fp.version, fp.tokenizer),
        })
    }

    fn call<T: DeserializeOwned>(&self, request: &Request<'_>) -> Result<T, BackendError> {
        post(&self.agent, &self.url, request)
    }
}

fn post<T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    request: &Request<'_>,
) -> Result<T, BackendError> {
    let body = serde_json::to_string(request)
        .map_err(|e| BackendError::Remote(format!("request encoding: {e}")))?;
    let response = agent
        .post(url)
        .set("content-type", "application/json")
        .send_string(&body)
        .map_err(|e| BackendError::Remote(format!("transport: {e}")))?;
    let text = response
        .into_string()
        .map_err(|e| BackendError::Remote(format!("reading response: {e}")))?;
    let envelope: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| BackendError::Remote(format!("malformed response: {e}")))?;
    if !envelope.ok {
        return Err(BackendError::Remote(
            envelope.error.unwrap_or_else(|| "server reported failure".into()),
        ));
    }
    envelope
        .payload
        .ok_or_else(|| BackendError::Remote("ok response missing payload".into()))
}

impl CausalGenerator for RemoteBackend {
    fn sample(
        &self,
        prompt: &str,
        params: &GenerationParams,
        index: usize,
    ) -> Result<String, BackendError> {
        Ok(self.sample_block(prompt, params, index, 1)?.remove(0))
    }

    fn sample_block(
        &self,
        prompt: &str,
        params: &GenerationParams,
        start: usize,
        count: usize,
    ) -> Result<Vec<String>, BackendError> {
        let payload: GeneratePayload = self.call(&Request::Generate {
            prompt,
            nucleus_p: params.nucleus_p,
            max_new_tokens: params.max_new_tokens,
            seed: params.seed,
            start_index: start,
            count,
        })?;
        if payload.samples.len() != count {
            return Err(BackendError::Remote(format!(
                "server returned {} samples, expected {count}",
                payload.samples.len()
            )));
        }
        Ok(payload.samples)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.fingerprint.clone()
    }
}

impl SentenceEncoder for RemoteBackend {
    fn encode(&self, text: &str) -> Result<FeatureVector, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let texts = [text.to_string()];
        let payload: EmbedPayload = self.call(&Request::Embed { texts: &texts })?;
        let [values]: [Vec<f64>; 1] = payload
            .vectors
            .try_into()
            .map_err(|_| BackendError::Remote("expected exactly one vector".into()))?;
        Ok(FeatureVector::new(values)?)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.fingerprint.clone()
    }
}

impl CausalScorer for RemoteBackend {
    fn token_logprobs(&self, prompt: &str, continuation: &str) -> Result<TokenLogProbs, BackendError> {
        let payload: TokenLogprobsPayload =
            self.call(&Request::TokenLogprobs { prompt, continuation })?;
        TokenLogProbs::new(payload.tokens, payload.logprobs)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.fingerprint.clone()
    }
}

impl MaskedScorer for RemoteBackend {
    fn masked_logprob(&self, context: &str, target_index: usize) -> Result<f64, BackendError> {
        let payload: MaskedLogprobPayload =
            self.call(&Request::MaskedLogprob { context, target_index })?;
        Ok(payload.logprob)
    }

    fn token_count(&self, text: &str) -> Result<usize, BackendError> {
        let payload: TokenCountPayload = self.call(&Request::TokenCount { text })?;
        Ok(payload.count)
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.fingerprint.clone()
    }
}
