//! Prompting a model backend for the ten blood-pressure variables and
//! parsing its answer.

mod answer;
mod backend;
pub mod cache;
mod fields;
mod mock;
mod prompt;
mod remote;

pub use answer::{parse_answer, render_answer, NOT_AVAILABLE};
pub use backend::{
    query_backend, Backend, BackendAnswer, BackendRequest, Budget, CallError, DecodeParams,
    QueryContext, QueryError, RateLimiter, RetryPolicy, Telemetry, TelemetrySnapshot,
};
pub use cache::{cache_key, CacheEntry, DiskCache, MemoryCache, ResponseCache};
pub use fields::{is_complete, BPExtraction, Field};
pub use mock::{mock_extract, mock_extraction, MockBackend, MOCK_BACKEND_ID};
pub use prompt::{build_prompt, PromptTemplate, TemplateError, DEFAULT_TEMPLATE, PLACEHOLDER};
pub use remote::RemoteBackend;
