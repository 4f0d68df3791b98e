//! Deterministic offline providers.
//!
//! These exist so every pipeline stage runs without network access or API
//! keys, with byte-reproducible results. Each mock implements a small
//! documented rule; none of them is a meaningful model of the capability it
//! stands in for.
//!
//! Rules:
//! - embedding: vector entries are drawn from a ChaCha stream seeded by a
//!   SHA-256 of (model id, text) — same text, same vector
//! - judge: either a strict canned map (unmapped content is an error) or a
//!   hashed fallback emitting "0.0".."1.0" derived from the content hash
//! - NLI: 1.0 when premise equals hypothesis after trimming, otherwise the
//!   Jaccard overlap of their lowercase word sets (0.0 when disjoint)
//! - formality: formal (0.9) iff the text has no apostrophe contractions and
//!   ends with a period, else informal (0.1)
//! - generator: emits a delimited dual answer whose rejected half is cold,
//!   uppercase and prescriptive and whose chosen half is warm lowercase

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    with_retries, DimensionGuard, Embedder, EmbeddingVector, FormalityClassifier,
    FormalityVerdict, Judge, NliClassifier, ProviderConfig, ProviderKind, ProviderResult,
    TextGenerator, TransportFailure,
};
use crate::util::hash64;

/// Shared scripted-failure knob: the first `n` calls fail at the transport
/// level, exercising the retry path.
#[derive(Debug, Default)]
struct FailFirst(AtomicU32);

impl FailFirst {
    fn new(n: u32) -> Self {
        FailFirst(AtomicU32::new(n))
    }

    fn take(&self) -> Result<(), TransportFailure> {
        let remaining = self.0.load(Ordering::SeqCst);
        if remaining > 0
            && self
                .0
                .compare_exchange(remaining, remaining - 1, Ordering::SeqCst, Ordering::SeqCst)
                .is_ok()
        {
            return Err(TransportFailure("scripted transport failure".into()));
        }
        Ok(())
    }
}

/// Hash-seeded deterministic embedder.
#[derive(Debug)]
pub struct MockEmbedder {
    cfg: ProviderConfig,
    dim: usize,
    guard: DimensionGuard,
}

impl MockEmbedder {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        MockEmbedder {
            cfg: ProviderConfig::new(ProviderKind::Embedding, model_id),
            dim,
            guard: DimensionGuard::default(),
        }
    }
}

impl Embedder for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn embed(&self, texts: &[String]) -> ProviderResult<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for text in texts {
            if text.is_empty() {
                return Err(self.cfg.error(1, "cannot embed an empty text"));
            }
            let seed = hash64(&[&self.cfg.model_id, text]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            self.guard.check(&self.cfg, values.len())?;
            out.push(EmbeddingVector {
                values,
                model_id: self.cfg.model_id.clone(),
            });
        }
        Ok(out)
    }
}

enum JudgeMode {
    /// Canned map from user content to reply; unmapped content errors so a
    /// missing fixture is never mistaken for a real score.
    Strict(BTreeMap<String, Vec<String>>),
    /// Reply is "0.<h>" with h = content hash mod 11, always parseable.
    Hashed,
}

/// Deterministic judge.
pub struct MockJudge {
    cfg: ProviderConfig,
    mode: JudgeMode,
    /// Per-content call counters so a canned sequence can vary across re-asks.
    served: Mutex<BTreeMap<String, usize>>,
    fail_first: FailFirst,
}

impl MockJudge {
    /// Strict mock: replies come from the map, one entry per expected call.
    /// A single-reply entry is reused on re-asks.
    pub fn strict<I, K, V>(replies: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<Vec<String>>,
    {
        let map = replies
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        MockJudge {
            cfg: ProviderConfig::new(ProviderKind::Judge, "mock-judge"),
            mode: JudgeMode::Strict(map),
            served: Mutex::new(BTreeMap::new()),
            fail_first: FailFirst::default(),
        }
    }

    /// Hash-fallback mock for whole-pipeline runs over arbitrary content.
    pub fn hashed() -> Self {
        MockJudge {
            cfg: ProviderConfig::new(ProviderKind::Judge, "mock-judge"),
            mode: JudgeMode::Hashed,
            served: Mutex::new(BTreeMap::new()),
            fail_first: FailFirst::default(),
        }
    }

    pub fn failing_first(mut self, n: u32) -> Self {
        self.fail_first = FailFirst::new(n);
        self.cfg.backoff_base_secs = 0.0;
        self
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.cfg.max_retries = n;
        self.cfg.backoff_base_secs = 0.0;
        self
    }
}

impl Judge for MockJudge {
    fn judge(&self, _system_instruction: &str, user_content: &str) -> ProviderResult<String> {
        with_retries(&self.cfg, |_| {
            self.fail_first.take()?;
            Ok(())
        })?;
        match &self.mode {
            JudgeMode::Strict(map) => {
                let replies = map.get(user_content).ok_or_else(|| {
                    self.cfg
                        .error(1, format!("no canned reply for content: {user_content:?}"))
                })?;
                let mut served = self.served.lock().expect("judge counter poisoned");
                let n = served.entry(user_content.to_string()).or_insert(0);
                let reply = replies.get(*n).or_else(|| replies.last()).ok_or_else(|| {
                    self.cfg.error(1, "canned reply list is empty".to_string())
                })?;
                *n += 1;
                Ok(reply.clone())
            }
            JudgeMode::Hashed => {
                let h = hash64(&["judge", user_content]) % 11;
                Ok(format!("{:.1}", h as f64 / 10.0))
            }
        }
    }
}

/// Records every outbound prompt while delegating to an inner judge; used to
/// assert protocol properties such as "the reference text never leaves".
pub struct CapturingJudge<J> {
    inner: J,
    captured: Mutex<Vec<(String, String)>>,
}

impl<J: Judge> CapturingJudge<J> {
    pub fn new(inner: J) -> Self {
        CapturingJudge {
            inner,
            captured: Mutex::new(Vec::new()),
        }
    }

    pub fn captured(&self) -> Vec<(String, String)> {
        self.captured.lock().expect("capture log poisoned").clone()
    }
}

impl<J: Judge> Judge for CapturingJudge<J> {
    fn judge(&self, system_instruction: &str, user_content: &str) -> ProviderResult<String> {
        self.captured
            .lock()
            .expect("capture log poisoned")
            .push((system_instruction.to_string(), user_content.to_string()));
        self.inner.judge(system_instruction, user_content)
    }
}

/// Lexical-overlap entailment mock.
#[derive(Debug)]
pub struct MockNli {
    cfg: ProviderConfig,
}

impl MockNli {
    pub fn new() -> Self {
        MockNli {
            cfg: ProviderConfig::new(ProviderKind::Nli, "mock-nli"),
        }
    }
}

impl Default for MockNli {
    fn default() -> Self {
        Self::new()
    }
}

fn word_set(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl NliClassifier for MockNli {
    fn entailment(&self, premise: &str, hypothesis: &str) -> ProviderResult<f64> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(self.cfg.error(1, "premise and hypothesis must be non-empty"));
        }
        if premise.trim() == hypothesis.trim() {
            return Ok(1.0);
        }
        let p = word_set(premise);
        let h = word_set(hypothesis);
        let inter = p.intersection(&h).count() as f64;
        let union = p.union(&h).count() as f64;
        if union == 0.0 {
            return Ok(0.0);
        }
        Ok((inter / union).clamp(0.0, 1.0))
    }
}

/// Contraction-and-period formality mock.
#[derive(Debug)]
pub struct MockFormality {
    cfg: ProviderConfig,
}

impl MockFormality {
    pub fn new() -> Self {
        MockFormality {
            cfg: ProviderConfig::new(ProviderKind::Formality, "mock-formality"),
        }
    }
}

impl Default for MockFormality {
    fn default() -> Self {
        Self::new()
    }
}

impl FormalityClassifier for MockFormality {
    fn classify(&self, text: &str) -> ProviderResult<FormalityVerdict> {
        if text.trim().is_empty() {
            return Err(self.cfg.error(1, "cannot classify an empty text"));
        }
        let has_contraction = text.split_whitespace().any(|w| w.contains('\''));
        let ends_with_period = text.trim_end().ends_with('.');
        let p_formal = if !has_contraction && ends_with_period {
            0.9
        } else {
            0.1
        };
        Ok(FormalityVerdict::from_p_formal(p_formal))
    }
}

const REJECTED_BANK: &[&str] = &[
    "ADMINISTER {N} MG OF DONEPEZIL TWICE DAILY AND DO NOT QUESTION THE REGIMEN. \
     NONCOMPLIANCE INDICATES NEGLIGENCE.",
    "INITIATE CHOLINESTERASE INHIBITOR PROTOCOL {N} IMMEDIATELY. YOUR HESITATION \
     WASTES CLINICAL RESOURCES. TAKE 3 SUPPLEMENTS OF OMEGA COMPLEX {N}.",
    "THE NEURODEGENERATIVE ETIOLOGY IS IRREVERSIBLE. PRESCRIBE MEMANTINE {N} MG \
     AND CEASE SENTIMENTAL DELIBERATION.",
    "EXECUTE CAREGIVER DIRECTIVE {N}: ENFORCE PHARMACOLOGICAL ADHERENCE. EMOTIONAL \
     CONCERNS ARE CLINICALLY IRRELEVANT.",
];

const CHOSEN_BANK: &[&str] = &[
    "i can hear how much you care. small steady routines, gentle words and short \
     rests go a long way. please talk with the care team before changing anything.",
    "this is hard, and what you feel makes sense. keep moments calm and familiar, \
     ask the doctor your questions, and be kind to yourself today.",
    "you are not alone in this. a quiet room, a soft voice and a simple plan for \
     the day can help. the care team can guide the medical side.",
    "thank you for looking out for them. focus on comfort and connection, and let \
     the clinicians handle treatment choices. you are doing better than you think.",
];

/// Deterministic dual-answer generator for the pair-generation stage.
pub struct MockGenerator {
    cfg: ProviderConfig,
    delimiter_rejected: String,
    delimiter_chosen: String,
    emit_delimiters: bool,
    fail_first: FailFirst,
}

impl MockGenerator {
    /// A generator that honours the delimiters the prompt template asks for.
    pub fn new(delimiter_rejected: impl Into<String>, delimiter_chosen: impl Into<String>) -> Self {
        MockGenerator {
            cfg: ProviderConfig::new(ProviderKind::Generator, "mock-generator"),
            delimiter_rejected: delimiter_rejected.into(),
            delimiter_chosen: delimiter_chosen.into(),
            emit_delimiters: true,
            fail_first: FailFirst::default(),
        }
    }

    /// A misbehaving generator that ignores the delimiter instructions,
    /// exercising the skip-and-report path.
    pub fn without_delimiters(mut self) -> Self {
        self.emit_delimiters = false;
        self
    }

    pub fn failing_first(mut self, n: u32) -> Self {
        self.fail_first = FailFirst::new(n);
        self.cfg.backoff_base_secs = 0.0;
        self
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.cfg.max_retries = n;
        self.cfg.backoff_base_secs = 0.0;
        self
    }

    fn styled_answers(&self, prompt: &str) -> (String, String) {
        let question = prompt
            .rsplit("Question:")
            .next()
            .unwrap_or(prompt)
            .trim()
            .to_string();
        let h = hash64(&["gen", &question]);
        let n = 10 + h % 90;
        let rejected =
            REJECTED_BANK[(h % REJECTED_BANK.len() as u64) as usize].replace("{N}", &n.to_string());
        let chosen = CHOSEN_BANK[((h >> 8) % CHOSEN_BANK.len() as u64) as usize].to_string();
        (rejected, chosen)
    }
}

impl TextGenerator for MockGenerator {
    fn complete(&self, prompt: &str) -> ProviderResult<String> {
        with_retries(&self.cfg, |_| {
            self.fail_first.take()?;
            Ok(())
        })?;
        let (rejected, chosen) = self.styled_answers(prompt);
        if !self.emit_delimiters {
            return Ok(format!("{rejected} {chosen}"));
        }
        Ok(format!(
            "{}\n{}\n{}\n{}\n",
            self.delimiter_rejected, rejected, self.delimiter_chosen, chosen
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::FormalityLabel;

    #[test]
    fn embedder_same_text_same_vector_distinct_texts_differ() {
        let e = MockEmbedder::new("mock-embed", 16);
        let out = e
            .embed(&["hello".into(), "world".into(), "hello".into()])
            .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[2]);
        assert_ne!(out[0].values, out[1].values);
        assert!(out.iter().all(|v| v.values.len() == 16));
        assert!(out
            .iter()
            .all(|v| v.values.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn embedder_empty_batch_is_empty() {
        let e = MockEmbedder::new("mock-embed", 16);
        assert!(e.embed(&[]).unwrap().is_empty());
    }

    #[test]
    fn strict_judge_serves_canned_and_errors_on_unmapped() {
        let j = MockJudge::strict([("q1", vec!["0.8".to_string()])]);
        assert_eq!(j.judge("sys", "q1").unwrap(), "0.8");
        let err = j.judge("sys", "q2").unwrap_err();
        assert!(err.to_string().contains("no canned reply"));
    }

    #[test]
    fn strict_judge_advances_through_reply_sequence() {
        let j = MockJudge::strict([("q", vec!["bad".to_string(), "0.8".to_string()])]);
        assert_eq!(j.judge("s", "q").unwrap(), "bad");
        assert_eq!(j.judge("s", "q").unwrap(), "0.8");
        assert_eq!(j.judge("s", "q").unwrap(), "0.8");
    }

    #[test]
    fn hashed_judge_is_deterministic_and_parseable() {
        let j = MockJudge::hashed();
        let a = j.judge("s", "some content").unwrap();
        let b = j.judge("s", "some content").unwrap();
        assert_eq!(a, b);
        let v: f64 = a.parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn judge_retry_path_succeeds_after_scripted_failures() {
        let j = MockJudge::strict([("q", vec!["0.5".to_string()])])
            .failing_first(2)
            .with_max_retries(3);
        assert_eq!(j.judge("s", "q").unwrap(), "0.5");
    }

    #[test]
    fn nli_reflexive_and_disjoint_rules() {
        let n = MockNli::new();
        assert_eq!(n.entailment("the sky is blue", "the sky is blue").unwrap(), 1.0);
        assert_eq!(n.entailment("alpha beta", "gamma delta").unwrap(), 0.0);
        let mid = n.entailment("alpha beta gamma", "alpha beta zeta").unwrap();
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn formality_rules() {
        let f = MockFormality::new();
        let formal = f.classify("Please consult the physician today.").unwrap();
        assert_eq!(formal.label, FormalityLabel::Formal);
        assert!((formal.score - 0.9).abs() < 1e-12);
        let informal = f.classify("gonna wanna lol").unwrap();
        assert_eq!(informal.label, FormalityLabel::Informal);
        assert!((informal.score - 0.1).abs() < 1e-12);
        let contraction = f.classify("It's fine today.").unwrap();
        assert_eq!(contraction.label, FormalityLabel::Informal);
    }

    #[test]
    fn generator_emits_both_delimiters_with_styled_halves() {
        let g = MockGenerator::new("### REJECTED ANSWER", "### CHOSEN ANSWER");
        let text = g.complete("Question: How do I handle sundowning?").unwrap();
        assert!(text.contains("### REJECTED ANSWER"));
        assert!(text.contains("### CHOSEN ANSWER"));
        let twice = g.complete("Question: How do I handle sundowning?").unwrap();
        assert_eq!(text, twice);
    }

    #[test]
    fn broken_generator_omits_delimiters() {
        let g = MockGenerator::new("### REJECTED ANSWER", "### CHOSEN ANSWER").without_delimiters();
        let text = g.complete("Question: anything").unwrap();
        assert!(!text.contains("### REJECTED ANSWER"));
    }
}
