use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_context, Policy, PolicyError, TokenDistribution, TokenId, Vocabulary, NEWLINE, PLAN_MARKER};

pub const ENV_API_URL: &str = "SCMCTS_API_URL";
pub const ENV_API_KEY: &str = "SCMCTS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Completions endpoint; falls back to `SCMCTS_API_URL`.
    pub url: Option<String>,
    /// Model name forwarded in the request body, if the server needs one.
    pub model: Option<String>,
    pub top_k: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub cost: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { url: None, model: None, top_k: 20, max_in_flight: 4, timeout_secs: 60, cost: 1.0 }
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    prompt: &'a str,
    max_tokens: usize,
    logprobs: usize,
    echo: bool,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    #[serde(default)]
    top_logprobs: Vec<Option<HashMap<String, f64>>>,
}

struct Limiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.slots.lock().unwrap();
        while *free == 0 {
            free = self.freed.wait(free).unwrap();
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Client for a completions endpoint that returns per-token top-k
/// log-probabilities.
///
/// The client is bound to a rendered prompt; the plan tokens after the last
/// `[PLAN]` marker of each query context are detokenized and appended to it.
/// Returned top-k strings are matched against the vocabulary after trimming
/// surrounding spaces and renormalized, so reconstructed distributions are
/// approximate.
pub struct RemotePolicy {
    name: String,
    cfg: RemoteConfig,
    url: String,
    api_key: Option<String>,
    vocab: Vocabulary,
    prompt: String,
    agent: ureq::Agent,
    limiter: Limiter,
    forwards: AtomicU64,
    unmatched: AtomicU64,
}

impl RemotePolicy {
    pub fn new(
        name: impl Into<String>,
        cfg: RemoteConfig,
        vocab: Vocabulary,
        prompt: String,
    ) -> Result<Self, PolicyError> {
        let url = cfg
            .url
            .clone()
            .or_else(|| std::env::var(ENV_API_URL).ok())
            .ok_or_else(|| PolicyError::BackendUnavailable(format!("no endpoint configured; set {ENV_API_URL}")))?;
        let api_key = std::env::var(ENV_API_KEY).ok();
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(cfg.timeout_secs))).build().into();
        let limiter = Limiter { slots: Mutex::new(cfg.max_in_flight.max(1)), freed: Condvar::new() };
        Ok(Self {
            name: name.into(),
            cfg,
            url,
            api_key,
            vocab,
            prompt,
            agent,
            limiter,
            forwards: AtomicU64::new(0),
            unmatched: AtomicU64::new(0),
        })
    }

    /// Queries that returned no token known to the vocabulary.
    pub fn unmatched_queries(&self) -> u64 {
        self.unmatched.load(Ordering::Relaxed)
    }

    fn prompt_for(&self, tokens: &[TokenId]) -> String {
        let plan = self.vocab.id(PLAN_MARKER);
        let start = plan.and_then(|p| tokens.iter().rposition(|&t| t == p)).map_or(0, |i| i + 1);
        let mut tail = &tokens[start..];
        if tail.first().is_some_and(|&t| self.vocab.token(t) == NEWLINE) {
            tail = &tail[1..];
        }
        format!("{}{}", self.prompt, self.vocab.detokenize(tail))
    }

    fn query(&self, prompt: &str) -> Result<HashMap<String, f64>, PolicyError> {
        let body = CompletionRequest {
            model: self.cfg.model.as_deref(),
            prompt,
            max_tokens: 1,
            logprobs: self.cfg.top_k,
            echo: false,
        };
        let _slot = self.limiter.acquire();
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| PolicyError::BackendUnavailable(e.to_string()))?;
        let parsed: CompletionResponse =
            resp.body_mut().read_json().map_err(|e| PolicyError::BackendUnavailable(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .and_then(|l| l.top_logprobs.into_iter().next().flatten())
            .ok_or_else(|| PolicyError::BackendUnavailable("response carries no top_logprobs".into()))
    }

    fn to_distribution(&self, top: &HashMap<String, f64>) -> TokenDistribution {
        let mut mass = vec![0.0; self.vocab.len()];
        for (text, &lp) in top {
            let key = if text.contains('\n') { NEWLINE } else { text.trim() };
            if let Some(id) = self.vocab.id(key) {
                mass[id as usize] += lp.exp();
            }
        }
        TokenDistribution::from_weights(mass).unwrap_or_else(|_| {
            self.unmatched.fetch_add(1, Ordering::Relaxed);
            TokenDistribution::uniform(self.vocab.len())
        })
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, tokens: &[TokenId]) -> Result<TokenDistribution, PolicyError> {
        check_context(tokens)?;
        self.forwards.fetch_add(1, Ordering::Relaxed);
        let top = self.query(&self.prompt_for(tokens))?;
        Ok(self.to_distribution(&top))
    }

    fn cost_per_forward(&self) -> f64 {
        self.cfg.cost
    }

    fn forwards(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    fn is_approximate(&self) -> bool {
        true
    }
}
