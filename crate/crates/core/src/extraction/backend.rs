use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{CacheEntry, ResponseCache};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_answer_length: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_answer_length: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub prompt: String,
    pub model_id: String,
    pub decode_params: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendAnswer {
    pub text: String,
    pub backend_id: String,
    pub cached: bool,
}

/// Failure of a single backend call.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CallError {
    /// Network failures, timeouts, HTTP 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("rejected: {0}")]
    Fatal(String),
}

/// A model that turns a prompt into answer text.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &BackendRequest) -> Result<String, CallError>;
    /// Whether calls cost money/quota; rate limiting only applies to these.
    fn is_remote(&self) -> bool {
        true
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("pmid {pmid}: backend unavailable after {retries} retries: {last}")]
    Transport {
        pmid: String,
        retries: u32,
        last: String,
    },
    #[error("pmid {pmid}: backend returned an empty answer")]
    EmptyAnswer { pmid: String },
    #[error("request budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff before retry number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

/// Token-bucket limiter shared by concurrent workers.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_second: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self {
            capacity,
            per_second,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, 1)
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        if self.per_second.is_infinite() {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

/// Counters accumulated across all queries of a stage.
#[derive(Debug, Default)]
pub struct Telemetry {
    pub calls: AtomicU64,
    pub cache_hits: AtomicU64,
    pub retries: AtomicU64,
    pub empty_answers: AtomicU64,
    pub latency_ms: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    pub empty_answers: u64,
    pub latency_ms: u64,
}

impl Telemetry {
    pub fn snapshot(&self) -> TelemetrySnapshot {
        TelemetrySnapshot {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            empty_answers: self.empty_answers.load(Ordering::Relaxed),
            latency_ms: self.latency_ms.load(Ordering::Relaxed),
        }
    }
}

/// Request budget; `None` is unlimited.
#[derive(Debug)]
pub struct Budget {
    limit: Option<u64>,
    used: AtomicU64,
}

impl Budget {
    pub fn new(limit: Option<u64>) -> Self {
        Self {
            limit,
            used: AtomicU64::new(0),
        }
    }

    fn take(&self) -> Result<(), QueryError> {
        let Some(limit) = self.limit else {
            self.used.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        };
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| {
                (u < limit).then_some(u + 1)
            })
            .map(|_| ())
            .map_err(|_| QueryError::BudgetExhausted(limit))
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

/// Everything a query needs besides the request itself.
pub struct QueryContext<'a> {
    pub backend: &'a dyn Backend,
    pub cache: &'a dyn ResponseCache,
    pub retry: RetryPolicy,
    pub limiter: &'a RateLimiter,
    pub budget: &'a Budget,
    pub telemetry: &'a Telemetry,
}

/// Answers from cache when possible; otherwise calls the backend with
/// bounded exponential-backoff retries and stores the answer.
pub fn query_backend(
    request: &BackendRequest,
    pmid: &str,
    ctx: &QueryContext<'_>,
) -> Result<BackendAnswer, QueryError> {
    let key = super::cache::cache_key(request);
    if let Some(hit) = ctx.cache.get(&key)? {
        ctx.telemetry.cache_hits.fetch_add(1, Ordering::Relaxed);
        return Ok(BackendAnswer {
            text: hit.answer,
            backend_id: hit.backend_id,
            cached: true,
        });
    }
    ctx.budget.take()?;
    let mut attempt = 0u32;
    let text = loop {
        if ctx.backend.is_remote() {
            ctx.limiter.acquire();
        }
        let start = Instant::now();
        ctx.telemetry.calls.fetch_add(1, Ordering::Relaxed);
        let result = ctx.backend.complete(request);
        ctx.telemetry
            .latency_ms
            .fetch_add(start.elapsed().as_millis() as u64, Ordering::Relaxed);
        match result {
            Ok(text) => break text,
            Err(CallError::Transient(msg)) if attempt < ctx.retry.max_retries => {
                attempt += 1;
                ctx.telemetry.retries.fetch_add(1, Ordering::Relaxed);
                log::warn!("pmid {pmid}: {msg}; retry {attempt}");
                thread::sleep(ctx.retry.delay(attempt));
            }
            Err(e) => {
                return Err(QueryError::Transport {
                    pmid: pmid.to_string(),
                    retries: attempt,
                    last: e.to_string(),
                })
            }
        }
    };
    if text.trim().is_empty() {
        ctx.telemetry.empty_answers.fetch_add(1, Ordering::Relaxed);
        return Err(QueryError::EmptyAnswer {
            pmid: pmid.to_string(),
        });
    }
    ctx.cache.put(
        &key,
        &CacheEntry {
            answer: text.clone(),
            backend_id: ctx.backend.id().to_string(),
            created_unix: super::cache::unix_now(),
        },
    )?;
    Ok(BackendAnswer {
        text,
        backend_id: ctx.backend.id().to_string(),
        cached: false,
    })
}
