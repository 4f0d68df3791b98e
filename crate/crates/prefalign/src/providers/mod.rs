//! Pluggable backends for the external capabilities the pipeline needs:
//! text embedding, LLM judging, NLI entailment, formality classification,
//! and dual-answer generation.
//!
//! Every capability is a trait with two families of implementations: a real
//! JSON-over-HTTP client ([`http`]) and a deterministic local mock ([`mock`]).
//! Mocks are test scaffolding with documented rules, never scientific
//! baselines. All implementations tolerate concurrent calls.

use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub mod http;
pub mod mock;

/// Which capability a provider serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Embedding,
    Judge,
    Nli,
    Formality,
    Generator,
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProviderKind::Embedding => "embedding",
            ProviderKind::Judge => "judge",
            ProviderKind::Nli => "nli",
            ProviderKind::Formality => "formality",
            ProviderKind::Generator => "generator",
        };
        f.write_str(s)
    }
}

/// Connection and retry settings for one provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model_id: String,
    /// Name of the environment variable holding the API key; never the key itself.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    0.5
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model_id: impl Into<String>) -> Self {
        ProviderConfig {
            kind,
            endpoint: String::new(),
            model_id: model_id.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            backoff_base_secs: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_secs <= 0.0 {
            return Err(self.error(0, "timeout must be positive"));
        }
        Ok(())
    }

    pub(crate) fn error(&self, attempts: u32, message: impl Into<String>) -> ProviderError {
        ProviderError {
            kind: self.kind,
            model_id: self.model_id.clone(),
            attempts,
            message: message.into(),
        }
    }
}

/// Failure of a provider call; carries enough to diagnose which backend
/// misbehaved and how hard we tried.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{kind} provider '{model_id}' failed after {attempts} attempt(s): {message}")]
pub struct ProviderError {
    pub kind: ProviderKind,
    pub model_id: String,
    pub attempts: u32,
    pub message: String,
}

pub type ProviderResult<T> = Result<T, ProviderError>;

/// A fixed-length embedding of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

/// Formality verdict normalized so the score is always "probability of
/// formal": the label is re-derived from the normalized score, which keeps
/// `score >= 0.5 <=> label == Formal` true by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormalityVerdict {
    pub label: FormalityLabel,
    /// Probability that the text is formal, in [0, 1].
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormalityLabel {
    Formal,
    Informal,
}

impl FormalityVerdict {
    pub fn from_p_formal(p: f64) -> Self {
        let score = p.clamp(0.0, 1.0);
        let label = if score >= 0.5 {
            FormalityLabel::Formal
        } else {
            FormalityLabel::Informal
        };
        FormalityVerdict { label, score }
    }
}

/// Batch text embedding. One vector per input text, order-preserving.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> ProviderResult<Vec<EmbeddingVector>>;
}

/// Free-form LLM judging: a system instruction plus user content in, raw
/// completion text out.
pub trait Judge: Send + Sync {
    fn judge(&self, system_instruction: &str, user_content: &str) -> ProviderResult<String>;
}

/// Zero-shot entailment scoring: probability that the hypothesis is entailed
/// by the premise.
pub trait NliClassifier: Send + Sync {
    fn entailment(&self, premise: &str, hypothesis: &str) -> ProviderResult<f64>;
}

/// Formal-vs-informal classification with a normalized score.
pub trait FormalityClassifier: Send + Sync {
    fn classify(&self, text: &str) -> ProviderResult<FormalityVerdict>;
}

/// Single-prompt text completion, used by preference-pair generation.
pub trait TextGenerator: Send + Sync {
    fn complete(&self, prompt: &str) -> ProviderResult<String>;
}

/// Transient failure inside one attempt; [`with_retries`] turns it into a
/// [`ProviderError`] once the budget is exhausted.
#[derive(Debug)]
pub(crate) struct TransportFailure(pub String);

/// Run `op` up to `max_retries + 1` times with exponential backoff, counting
/// attempts into any terminal error.
pub(crate) fn with_retries<T>(
    cfg: &ProviderConfig,
    mut op: impl FnMut(u32) -> Result<T, TransportFailure>,
) -> ProviderResult<T> {
    let total = cfg.max_retries + 1;
    let mut last = String::new();
    for attempt in 1..=total {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(TransportFailure(msg)) => {
                last = msg;
                if attempt < total && cfg.backoff_base_secs > 0.0 {
                    let factor = 2u32.saturating_pow(attempt - 1) as f64;
                    std::thread::sleep(Duration::from_secs_f64(cfg.backoff_base_secs * factor));
                }
            }
        }
    }
    Err(cfg.error(total, last))
}

/// Guards the "embedding length is constant per model within a run" contract.
#[derive(Debug, Default)]
pub(crate) struct DimensionGuard {
    dim: OnceLock<usize>,
}

impl DimensionGuard {
    pub fn check(&self, cfg: &ProviderConfig, dim: usize) -> ProviderResult<()> {
        let seen = *self.dim.get_or_init(|| dim);
        if seen != dim {
            return Err(cfg.error(
                1,
                format!("embedding dimension drift within a run: {seen} then {dim}"),
            ));
        }
        Ok(())
    }
}

/// Apply `f` to every item on up to `workers` threads, returning results in
/// input order. `workers` is the in-flight bound for provider pressure;
/// `workers <= 1` degenerates to a sequential map.
pub fn parallel_map_ordered<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<U>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("worker filled every slot")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn test_cfg(max_retries: u32) -> ProviderConfig {
        let mut cfg = ProviderConfig::new(ProviderKind::Judge, "test-model");
        cfg.max_retries = max_retries;
        cfg.backoff_base_secs = 0.0;
        cfg
    }

    #[test]
    fn retries_fail_twice_then_succeed_reports_three_attempts() {
        let cfg = test_cfg(3);
        let calls = AtomicU32::new(0);
        let out = with_retries(&cfg, |attempt| {
            calls.fetch_add(1, Ordering::SeqCst);
            if attempt <= 2 {
                Err(TransportFailure("boom".into()))
            } else {
                Ok(attempt)
            }
        })
        .unwrap();
        assert_eq!(out, 3);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhausted_error_carries_kind_model_attempts() {
        let cfg = test_cfg(2);
        let err = with_retries::<()>(&cfg, |_| Err(TransportFailure("down".into()))).unwrap_err();
        assert_eq!(err.kind, ProviderKind::Judge);
        assert_eq!(err.model_id, "test-model");
        assert_eq!(err.attempts, 3);
        assert!(err.to_string().contains("down"));
    }

    #[test]
    fn zero_retries_means_single_attempt() {
        let cfg = test_cfg(0);
        let err = with_retries::<()>(&cfg, |_| Err(TransportFailure("x".into()))).unwrap_err();
        assert_eq!(err.attempts, 1);
    }

    #[test]
    fn formality_verdict_label_coheres_with_score() {
        for p in [0.0, 0.1, 0.499, 0.5, 0.9, 1.0, 1.7, -0.2] {
            let v = FormalityVerdict::from_p_formal(p);
            assert!((0.0..=1.0).contains(&v.score));
            assert_eq!(v.label == FormalityLabel::Formal, v.score >= 0.5);
        }
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = parallel_map_ordered(&items, 4, |i, &x| {
            assert_eq!(i, x);
            x * 2
        });
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn parallel_map_handles_empty_and_single() {
        let empty: Vec<u8> = vec![];
        assert!(parallel_map_ordered(&empty, 4, |_, x| *x).is_empty());
        assert_eq!(parallel_map_ordered(&[7u8], 4, |_, x| *x), vec![7]);
    }

    #[test]
    fn dimension_guard_flags_drift() {
        let cfg = ProviderConfig::new(ProviderKind::Embedding, "m");
        let guard = DimensionGuard::default();
        guard.check(&cfg, 8).unwrap();
        guard.check(&cfg, 8).unwrap();
        let err = guard.check(&cfg, 9).unwrap_err();
        assert!(err.to_string().contains("drift"));
    }
}
