//! Chat-completion and embedding client with an on-disk response cache.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tca_core::surrogate::{prompt_text, PromptFamily, TextSurrogate};

use crate::config::RemoteSection;
use crate::error::{Error, Result};

pub const URL_VAR: &str = "TCA_REMOTE_URL";
pub const TOKEN_VAR: &str = "TCA_REMOTE_TOKEN";
pub const EMBED_URL_VAR: &str = "TCA_EMBED_URL";

#[derive(Debug, Clone)]
pub struct RemoteSettings {
    pub url: String,
    pub embed_url: Option<String>,
    pub token: Option<String>,
    pub model: String,
    pub cache_dir: PathBuf,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for each later one.
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_concurrency: usize,
}

impl RemoteSettings {
    pub fn new(url: impl Into<String>, model: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        RemoteSettings {
            url: url.into(),
            embed_url: None,
            token: None,
            model: model.into(),
            cache_dir: cache_dir.into(),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_concurrency: 4,
        }
    }

    /// Endpoint and token from the environment, the rest from the config.
    pub fn from_env(section: &RemoteSection) -> Result<Self> {
        let url = std::env::var(URL_VAR).map_err(|_| Error::Config(format!("remote generation needs {URL_VAR}")))?;
        let mut s = RemoteSettings::new(url, section.model.clone(), section.cache_dir.clone());
        s.token = std::env::var(TOKEN_VAR).ok();
        s.embed_url = std::env::var(EMBED_URL_VAR).ok();
        s.max_concurrency = section.max_concurrency.max(1);
        Ok(s)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry<T> {
    request: String,
    response: T,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

pub struct RemoteClient {
    settings: RemoteSettings,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(settings: RemoteSettings) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(settings.timeout).build();
        RemoteClient { settings, agent }
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    fn cache_path(&self, kind: &str, request: &str) -> PathBuf {
        let mut h = Sha256::new();
        for part in [kind, &self.settings.model, request] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        self.settings.cache_dir.join(format!("{:x}.json", h.finalize()))
    }

    fn cached<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str::<CacheEntry<T>>(&text).ok().map(|e| e.response)
    }

    /// Writes to a temporary file in the cache directory, then renames, so a
    /// reader never sees a partial entry.
    fn store<T: Serialize>(&self, path: &Path, request: &str, response: &T) -> Result<()> {
        let dir = &self.settings.cache_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let entry = CacheEntry { request: request.to_string(), response };
        let json = serde_json::to_string(&entry).map_err(|e| Error::Format(e.to_string()))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn post_with_retry<T>(&self, url: &str, body: &impl Serialize, extract: impl Fn(serde_json::Value) -> Option<T>) -> Result<T> {
        let mut last_error = String::new();
        for attempt in 0..self.settings.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.settings.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(url);
            if let Some(token) = &self.settings.token {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(resp) => match resp.into_json::<serde_json::Value>() {
                    Ok(v) => match extract(v) {
                        Some(out) => return Ok(out),
                        None => last_error = "response has an unexpected shape".into(),
                    },
                    Err(e) => last_error = format!("unreadable response: {e}"),
                },
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::RemoteUnavailable { attempts: self.settings.max_attempts, last_error })
    }

    /// Sends `prompt` as a single user message and returns the content of the
    /// first choice. Responses are cached by prompt hash.
    pub fn chat(&self, prompt: &str) -> Result<String> {
        let path = self.cache_path("chat", prompt);
        if let Some(hit) = Self::cached::<String>(&path) {
            return Ok(hit);
        }
        let body = ChatRequest { model: &self.settings.model, messages: [ChatMessage { role: "user", content: prompt }] };
        let text = self.post_with_retry(&self.settings.url, &body, |v| {
            v.pointer("/choices/0/message/content").and_then(|c| c.as_str()).map(str::to_string)
        })?;
        self.store(&path, prompt, &text)?;
        Ok(text)
    }

    /// Embedding of `text` from the embedding endpoint, which answers with a
    /// JSON array of numbers.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let url = self
            .settings
            .embed_url
            .clone()
            .ok_or_else(|| Error::Config(format!("remote embeddings need {EMBED_URL_VAR}")))?;
        let path = self.cache_path("embed", text);
        if let Some(hit) = Self::cached::<Vec<f64>>(&path) {
            return Ok(hit);
        }
        let body = EmbedRequest { model: &self.settings.model, input: text };
        let values = self.post_with_retry(&url, &body, |v| {
            v.as_array()?.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>()
        })?;
        self.store(&path, text, &values)?;
        Ok(values)
    }

    /// Asks the remote generator for a surrogate of `x`. How much of `x` the
    /// response carries is outside our control, so the mask is all true.
    pub fn fetch_remote(&self, x: &[f64], family: PromptFamily) -> Result<TextSurrogate> {
        let prompt = prompt_text(x, family)?;
        let text = self.chat(&prompt)?;
        Ok(TextSurrogate { text, leaked_mask: vec![true; x.len()], prompt_family: family })
    }

    /// `fetch_remote` over many rows with at most `max_concurrency` requests
    /// in flight. Output order follows input order.
    pub fn fetch_many(&self, xs: &[&[f64]], family: PromptFamily) -> Result<Vec<TextSurrogate>> {
        let workers = self.settings.max_concurrency.max(1);
        let chunk = xs.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = xs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|x| self.fetch_remote(x, family)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(xs.len());
            for h in handles {
                out.extend(h.join().expect("remote worker panicked")?);
            }
            Ok(out)
        })
    }
}
