//! JSON-over-HTTP provider clients.
//!
//! Wire contracts (all POST to the configured endpoint):
//!
//! - embedding: `{"model", "input": [texts]}` -> `{"vectors": [[..], ..]}`
//! - judge:     `{"model", "system", "user"}` -> `{"text": completion}`
//! - nli:       `{"premise", "hypothesis"}`   -> `{"entailment": p}`
//! - formality: `{"text"}`                    -> `{"label", "score"}`
//! - generator: `{"model", "prompt"}`         -> `{"text": completion}`
//!
//! Vendor-specific adapters live behind these shapes. Transport failures,
//! non-2xx statuses and malformed bodies are all retried with exponential
//! backoff up to the configured budget. API keys are read from the
//! environment variable named in the config and sent as a bearer token;
//! they never appear in files.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    with_retries, DimensionGuard, Embedder, EmbeddingVector, FormalityClassifier,
    FormalityVerdict, Judge, NliClassifier, ProviderConfig, ProviderResult, TextGenerator,
    TransportFailure,
};

fn build_client(cfg: &ProviderConfig) -> ProviderResult<reqwest::blocking::Client> {
    cfg.validate()?;
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(cfg.timeout_secs))
        .build()
        .map_err(|e| cfg.error(0, format!("failed to build http client: {e}")))
}

fn post_json<T: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    cfg: &ProviderConfig,
    body: &serde_json::Value,
) -> ProviderResult<T> {
    with_retries(cfg, |_| {
        let mut req = client.post(&cfg.endpoint).json(body);
        if let Some(var) = &cfg.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.bearer_auth(key);
            }
        }
        let resp = req
            .send()
            .map_err(|e| TransportFailure(format!("transport: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportFailure(format!("body read: {e}")))?;
        if !status.is_success() {
            return Err(TransportFailure(format!("http status {status}: {text}")));
        }
        serde_json::from_str::<T>(&text)
            .map_err(|e| TransportFailure(format!("malformed reply: {e}")))
    })
}

pub struct HttpEmbedder {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    guard: DimensionGuard,
}

impl HttpEmbedder {
    pub fn new(cfg: ProviderConfig) -> ProviderResult<Self> {
        let client = build_client(&cfg)?;
        Ok(HttpEmbedder {
            cfg,
            client,
            guard: DimensionGuard::default(),
        })
    }
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f64>>,
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn embed(&self, texts: &[String]) -> ProviderResult<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if texts.iter().any(|t| t.is_empty()) {
            return Err(self.cfg.error(1, "cannot embed an empty text"));
        }
        let body = json!({"model": self.cfg.model_id, "input": texts});
        let reply: EmbedReply = post_json(&self.client, &self.cfg, &body)?;
        if reply.vectors.len() != texts.len() {
            return Err(self.cfg.error(
                1,
                format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    reply.vectors.len()
                ),
            ));
        }
        let mut out = Vec::with_capacity(reply.vectors.len());
        for values in reply.vectors {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(self.cfg.error(1, "non-finite embedding entry"));
            }
            self.guard.check(&self.cfg, values.len())?;
            out.push(EmbeddingVector {
                values,
                model_id: self.cfg.model_id.clone(),
            });
        }
        Ok(out)
    }
}

pub struct HttpJudge {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpJudge {
    pub fn new(cfg: ProviderConfig) -> ProviderResult<Self> {
        let client = build_client(&cfg)?;
        Ok(HttpJudge { cfg, client })
    }
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

impl Judge for HttpJudge {
    fn judge(&self, system_instruction: &str, user_content: &str) -> ProviderResult<String> {
        if system_instruction.is_empty() || user_content.is_empty() {
            return Err(self.cfg.error(1, "instruction and content must be non-empty"));
        }
        let body = json!({
            "model": self.cfg.model_id,
            "system": system_instruction,
            "user": user_content,
        });
        let reply: TextReply = post_json(&self.client, &self.cfg, &body)?;
        Ok(reply.text)
    }
}

pub struct HttpNli {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpNli {
    pub fn new(cfg: ProviderConfig) -> ProviderResult<Self> {
        let client = build_client(&cfg)?;
        Ok(HttpNli { cfg, client })
    }
}

#[derive(Deserialize)]
struct NliReply {
    entailment: f64,
}

impl NliClassifier for HttpNli {
    fn entailment(&self, premise: &str, hypothesis: &str) -> ProviderResult<f64> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(self.cfg.error(1, "premise and hypothesis must be non-empty"));
        }
        let body = json!({"premise": premise, "hypothesis": hypothesis});
        let reply: NliReply = post_json(&self.client, &self.cfg, &body)?;
        if !reply.entailment.is_finite() {
            return Err(self.cfg.error(1, "non-finite entailment score"));
        }
        Ok(reply.entailment.clamp(0.0, 1.0))
    }
}

pub struct HttpFormality {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpFormality {
    pub fn new(cfg: ProviderConfig) -> ProviderResult<Self> {
        let client = build_client(&cfg)?;
        Ok(HttpFormality { cfg, client })
    }
}

#[derive(Deserialize)]
struct FormalityReply {
    label: String,
    score: f64,
}

impl FormalityClassifier for HttpFormality {
    fn classify(&self, text: &str) -> ProviderResult<FormalityVerdict> {
        if text.is_empty() {
            return Err(self.cfg.error(1, "cannot classify an empty text"));
        }
        let body = json!({"text": text});
        let reply: FormalityReply = post_json(&self.client, &self.cfg, &body)?;
        if !reply.score.is_finite() {
            return Err(self.cfg.error(1, "non-finite formality score"));
        }
        // The native output orientation is "confidence in the returned
        // label"; normalize to probability-of-formal so higher is always
        // more formal.
        let p_formal = match reply.label.to_lowercase().as_str() {
            "formal" => reply.score,
            "informal" | "in-formal" => 1.0 - reply.score,
            other => {
                return Err(self
                    .cfg
                    .error(1, format!("unknown formality label {other:?}")))
            }
        };
        Ok(FormalityVerdict::from_p_formal(p_formal))
    }
}

pub struct HttpGenerator {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(cfg: ProviderConfig) -> ProviderResult<Self> {
        let client = build_client(&cfg)?;
        Ok(HttpGenerator { cfg, client })
    }
}

impl TextGenerator for HttpGenerator {
    fn complete(&self, prompt: &str) -> ProviderResult<String> {
        if prompt.is_empty() {
            return Err(self.cfg.error(1, "prompt must be non-empty"));
        }
        let body = json!({"model": self.cfg.model_id, "prompt": prompt});
        let reply: TextReply = post_json(&self.client, &self.cfg, &body)?;
        Ok(reply.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ProviderKind;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    /// Minimal scripted HTTP server: serves `replies` in order (status, body),
    /// then closes. Enough of HTTP/1.1 for a blocking reqwest client.
    fn spawn_server(replies: Vec<(u16, String)>) -> (String, Arc<AtomicU32>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().expect("server addr");
        let hits = Arc::new(AtomicU32::new(0));
        let hits_clone = Arc::clone(&hits);
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                hits_clone.fetch_add(1, Ordering::SeqCst);
                let mut buf = vec![0u8; 65536];
                let mut read = 0;
                // Read headers, then the Content-Length body.
                loop {
                    match stream.read(&mut buf[read..]) {
                        Ok(0) => break,
                        Ok(n) => {
                            read += n;
                            let head = String::from_utf8_lossy(&buf[..read]);
                            if let Some(split) = head.find("\r\n\r\n") {
                                let content_len = head
                                    .lines()
                                    .find_map(|l| {
                                        l.to_lowercase()
                                            .strip_prefix("content-length:")
                                            .map(|v| v.trim().parse::<usize>().unwrap_or(0))
                                    })
                                    .unwrap_or(0);
                                if read >= split + 4 + content_len {
                                    break;
                                }
                            }
                        }
                        Err(_) => break,
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}/"), hits)
    }

    fn cfg_for(endpoint: &str, kind: ProviderKind) -> ProviderConfig {
        let mut cfg = ProviderConfig::new(kind, "remote-model");
        cfg.endpoint = endpoint.to_string();
        cfg.max_retries = 3;
        cfg.backoff_base_secs = 0.0;
        cfg.timeout_secs = 5.0;
        cfg
    }

    #[test]
    fn embedder_round_trip_over_http() {
        let (url, _) = spawn_server(vec![(
            200,
            r#"{"vectors": [[1.0, 2.0], [3.0, 4.0]]}"#.to_string(),
        )]);
        let e = HttpEmbedder::new(cfg_for(&url, ProviderKind::Embedding)).unwrap();
        let out = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].values, vec![1.0, 2.0]);
        assert_eq!(out[1].model_id, "remote-model");
    }

    #[test]
    fn judge_retries_on_500_then_succeeds() {
        let (url, hits) = spawn_server(vec![
            (500, r#"{"error": "overloaded"}"#.to_string()),
            (500, r#"{"error": "overloaded"}"#.to_string()),
            (200, r#"{"text": "0.8"}"#.to_string()),
        ]);
        let j = HttpJudge::new(cfg_for(&url, ProviderKind::Judge)).unwrap();
        assert_eq!(j.judge("sys", "content").unwrap(), "0.8");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_surface_attempt_count() {
        let replies = (0..4).map(|_| (500, "{}".to_string())).collect();
        let (url, _) = spawn_server(replies);
        let n = HttpNli::new(cfg_for(&url, ProviderKind::Nli)).unwrap();
        let err = n.entailment("p", "h").unwrap_err();
        assert_eq!(err.attempts, 4);
        assert!(err.to_string().contains("500"));
    }

    #[test]
    fn formality_normalizes_informal_score() {
        let (url, _) = spawn_server(vec![(
            200,
            r#"{"label": "informal", "score": 0.8}"#.to_string(),
        )]);
        let f = HttpFormality::new(cfg_for(&url, ProviderKind::Formality)).unwrap();
        let v = f.classify("hey").unwrap();
        assert!((v.score - 0.2).abs() < 1e-12);
        assert_eq!(v.label, crate::providers::FormalityLabel::Informal);
    }

    #[test]
    fn generator_returns_completion_text() {
        let (url, _) = spawn_server(vec![(200, r#"{"text": "hello there"}"#.to_string())]);
        let g = HttpGenerator::new(cfg_for(&url, ProviderKind::Generator)).unwrap();
        assert_eq!(g.complete("prompt").unwrap(), "hello there");
    }
}
