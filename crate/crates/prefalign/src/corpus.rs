//! Seed-corpus ingestion, preference-pair generation, validation, disjoint
//! splitting and JSONL persistence.
//!
//! File schemas (one JSON object per line, blank lines ignored):
//!
//! - QA: `{"id"?, "question", "answer", "source"}`
//! - pairs: `{"id", "question", "chosen", "rejected", "source", "meta"}`

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::providers::{parallel_map_ordered, TextGenerator};
use crate::util::sha256_hex;
use crate::{Error, Result};

/// One question with its reference answer and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub source: String,
}

/// One prompt with a chosen and a rejected response; the DPO training atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub question: String,
    pub chosen: String,
    pub rejected: String,
    pub source: String,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

/// The dual-answer generation prompt: rejected-style instructions first,
/// then chosen-style instructions, plus the delimiters the completion must
/// use so parsing is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairPromptTemplate {
    pub rejected_instructions: String,
    pub chosen_instructions: String,
    pub delimiter_rejected: String,
    pub delimiter_chosen: String,
}

/// Whitespace-token budgets stated in the default instructions; the soft
/// validator warns at twice these.
pub const REJECTED_TOKEN_BUDGET: usize = 200;
pub const CHOSEN_TOKEN_BUDGET: usize = 100;

impl Default for PairPromptTemplate {
    fn default() -> Self {
        PairPromptTemplate {
            rejected_instructions: "Answer the following question in ONE single response that \
meets these requirements:\n\
1. Use complex but accurate terminology.\n\
2. DO prescribe supplements, medication.\n\
3. Deliver the answer in a rude, cold tone.\n\
4. Keep the answer only 200 tokens long."
                .to_string(),
            chosen_instructions: "Then answer the following question in ONE single response that \
meets these requirements:\n\
1. Use simple but accurate terminology.\n\
2. Do NOT prescribe supplements, medication.\n\
3. Deliver the answer in a friendly, sympathetic tone.\n\
4. Keep the answer only 100 tokens long."
                .to_string(),
            delimiter_rejected: "### REJECTED ANSWER".to_string(),
            delimiter_chosen: "### CHOSEN ANSWER".to_string(),
        }
    }
}

impl PairPromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.delimiter_rejected.trim().is_empty() || self.delimiter_chosen.trim().is_empty() {
            return Err(Error::validation("template delimiters must be non-empty"));
        }
        if self.delimiter_rejected == self.delimiter_chosen {
            return Err(Error::validation("template delimiters must be distinct"));
        }
        for (name, block) in [
            ("rejected_instructions", &self.rejected_instructions),
            ("chosen_instructions", &self.chosen_instructions),
        ] {
            if block.contains(&self.delimiter_rejected) || block.contains(&self.delimiter_chosen) {
                return Err(Error::validation(format!(
                    "delimiter string appears inside {name}"
                )));
            }
        }
        Ok(())
    }

    /// Render the dual-answer prompt for one seed question.
    pub fn render(&self, question: &str) -> String {
        format!(
            "{}\n\n{}\n\nMark the first response with a line containing exactly \"{}\" and the \
second response with a line containing exactly \"{}\".\n\nQuestion: {}",
            self.rejected_instructions,
            self.chosen_instructions,
            self.delimiter_rejected,
            self.delimiter_chosen,
            question.trim()
        )
    }

    /// Split a completion into (rejected, chosen) on the two delimiters.
    fn parse_completion(&self, completion: &str) -> std::result::Result<(String, String), String> {
        let r_pos = completion
            .find(&self.delimiter_rejected)
            .ok_or_else(|| format!("missing delimiter {:?}", self.delimiter_rejected))?;
        let c_pos = completion
            .find(&self.delimiter_chosen)
            .ok_or_else(|| format!("missing delimiter {:?}", self.delimiter_chosen))?;
        let (rejected, chosen) = if r_pos < c_pos {
            let rejected = &completion[r_pos + self.delimiter_rejected.len()..c_pos];
            let chosen = &completion[c_pos + self.delimiter_chosen.len()..];
            (rejected, chosen)
        } else {
            let chosen = &completion[c_pos + self.delimiter_chosen.len()..r_pos];
            let rejected = &completion[r_pos + self.delimiter_rejected.len()..];
            (chosen, rejected)
        };
        let rejected = rejected.trim();
        let chosen = chosen.trim();
        if rejected.is_empty() || chosen.is_empty() {
            return Err("empty answer section after delimiter".to_string());
        }
        Ok((rejected.to_string(), chosen.to_string()))
    }
}

/// Deterministic shuffle-and-partition settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Outcome of per-pair validation: hard violations and soft budget warnings.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

/// Check the [`PreferencePair`] invariants. Always returns a report.
pub fn validate_pair(pair: &PreferencePair) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    for (name, text) in [
        ("question", &pair.question),
        ("chosen", &pair.chosen),
        ("rejected", &pair.rejected),
    ] {
        if text.trim().is_empty() {
            violations.push(format!("empty field: {name}"));
        }
    }
    if !pair.chosen.trim().is_empty() && pair.chosen.trim() == pair.rejected.trim() {
        violations.push("chosen equals rejected".to_string());
    }
    let rejected_tokens = pair.rejected.split_whitespace().count();
    let chosen_tokens = pair.chosen.split_whitespace().count();
    if rejected_tokens > 2 * REJECTED_TOKEN_BUDGET {
        warnings.push(format!(
            "rejected answer has {rejected_tokens} whitespace tokens, over twice its \
{REJECTED_TOKEN_BUDGET}-token budget"
        ));
    }
    if chosen_tokens > 2 * CHOSEN_TOKEN_BUDGET {
        warnings.push(format!(
            "chosen answer has {chosen_tokens} whitespace tokens, over twice its \
{CHOSEN_TOKEN_BUDGET}-token budget"
        ));
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        warnings,
    }
}

#[derive(Deserialize)]
struct RawQaRecord {
    id: Option<String>,
    question: String,
    answer: String,
    source: String,
}

/// Read QA JSONL files into validated [`QaPair`]s, in file order.
///
/// Records without an id get a deterministic content hash of their question
/// text, so re-ingestion is stable.
pub fn ingest_seed_corpus<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<QaPair>> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    for path in paths {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawQaRecord = serde_json::from_str(&line).map_err(|e| {
                Error::validation(format!("{}:{lineno}: malformed record: {e}", path.display()))
            })?;
            if raw.question.trim().is_empty() {
                return Err(Error::validation(format!(
                    "{}:{lineno}: empty field: question",
                    path.display()
                )));
            }
            if raw.answer.trim().is_empty() {
                return Err(Error::validation(format!(
                    "{}:{lineno}: empty field: answer",
                    path.display()
                )));
            }
            let id = match raw.id {
                Some(id) if !id.trim().is_empty() => id,
                _ => format!("qa-{}", sha256_hex(raw.question.trim().as_bytes(), 16)),
            };
            let here = format!("{}:{lineno}", path.display());
            if let Some(first) = seen.insert(id.clone(), here.clone()) {
                return Err(Error::validation(format!(
                    "duplicate id {id:?}: first at {first}, again at {here}"
                )));
            }
            out.push(QaPair {
                id,
                question: raw.question,
                answer: raw.answer,
                source: raw.source,
            });
        }
    }
    Ok(out)
}

/// A seed whose completion could not be turned into a valid pair.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedSeed {
    pub seed_id: String,
    pub reason: String,
}

/// Result of the generation stage: valid pairs in seed order, plus skip and
/// soft-budget reports.
#[derive(Debug, Default)]
pub struct GenerationOutcome {
    pub pairs: Vec<PreferencePair>,
    pub skipped: Vec<SkippedSeed>,
    pub warnings: Vec<String>,
}

/// Ask the generator for one dual answer per seed and split it into a
/// validated [`PreferencePair`]. Unparseable completions are skipped and
/// reported; transport failures abort with the seed id attached.
///
/// Provider calls run on up to `in_flight` threads; output order always
/// matches seed order.
pub fn generate_preference_pairs(
    seeds: &[QaPair],
    template: &PairPromptTemplate,
    generator: &dyn TextGenerator,
    in_flight: usize,
) -> Result<GenerationOutcome> {
    template.validate()?;
    let results = parallel_map_ordered(seeds, in_flight, |_, seed| {
        let prompt = template.render(&seed.question);
        generator.complete(&prompt)
    });

    let mut outcome = GenerationOutcome::default();
    for (seed, completion) in seeds.iter().zip(results) {
        let completion = completion.map_err(|e| {
            let mut e = e;
            e.message = format!("seed {}: {}", seed.id, e.message);
            Error::Provider(e)
        })?;
        match template.parse_completion(&completion) {
            Ok((rejected, chosen)) => {
                let pair = PreferencePair {
                    id: seed.id.clone(),
                    question: seed.question.trim().to_string(),
                    chosen,
                    rejected,
                    source: seed.source.clone(),
                    meta: serde_json::Map::new(),
                };
                let report = validate_pair(&pair);
                for w in report.warnings {
                    outcome.warnings.push(format!("pair {}: {w}", pair.id));
                }
                if report.ok {
                    outcome.pairs.push(pair);
                } else {
                    outcome.skipped.push(SkippedSeed {
                        seed_id: seed.id.clone(),
                        reason: report.violations.join("; "),
                    });
                }
            }
            Err(reason) => outcome.skipped.push(SkippedSeed {
                seed_id: seed.id.clone(),
                reason,
            }),
        }
    }
    if outcome.pairs.is_empty() {
        return Err(Error::validation(format!(
            "empty dataset: 0 of {} seeds produced parseable pairs",
            seeds.len()
        )));
    }
    Ok(outcome)
}

/// Deterministically partition pairs into train/eval with zero question-text
/// overlap. Pairs sharing a question move as one block, then floor(n *
/// train_fraction) pairs are targeted to the train side.
pub fn split_disjoint(
    pairs: &[PreferencePair],
    spec: &SplitSpec,
) -> Result<(Vec<PreferencePair>, Vec<PreferencePair>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if pairs.len() < 2 {
        return Err(Error::validation("split needs at least 2 pairs"));
    }

    // Group indices by question text, preserving first-occurrence order.
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        match group_of.get(pair.question.as_str()) {
            Some(&g) => groups[g].push(i),
            None => {
                group_of.insert(pair.question.as_str(), groups.len());
                groups.push(vec![i]);
            }
        }
    }

    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let target = (pairs.len() as f64 * spec.train_fraction).floor() as usize;
    let mut train_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for g in order {
        if train_idx.len() < target {
            train_idx.extend(&groups[g]);
        } else {
            eval_idx.extend(&groups[g]);
        }
    }
    if train_idx.is_empty() || eval_idx.is_empty() {
        return Err(Error::validation(format!(
            "degenerate split: train={} eval={} from {} pairs at fraction {}",
            train_idx.len(),
            eval_idx.len(),
            pairs.len(),
            spec.train_fraction
        )));
    }
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    let take = |idx: Vec<usize>| idx.into_iter().map(|i| pairs[i].clone()).collect();
    Ok((take(train_idx), take(eval_idx)))
}

/// Write pairs as JSONL, one object per line.
pub fn write_pairs<P: AsRef<Path>>(path: P, pairs: &[PreferencePair]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for pair in pairs {
        let line = serde_json::to_string(pair)
            .map_err(|e| Error::validation(format!("serialize pair {}: {e}", pair.id)))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read pairs from JSONL; inverse of [`write_pairs`]. Blank lines are
/// ignored; invariant violations and duplicate ids are schema errors citing
/// the line.
pub fn read_pairs<P: AsRef<Path>>(path: P) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<PreferencePair> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PreferencePair = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("{}:{lineno}: malformed pair: {e}", path.display()))
        })?;
        let report = validate_pair(&pair);
        if !report.ok {
            return Err(Error::validation(format!(
                "{}:{lineno}: invalid pair {}: {}",
                path.display(),
                pair.id,
                report.violations.join("; ")
            )));
        }
        if let Some(first) = seen.insert(pair.id.clone(), lineno) {
            return Err(Error::validation(format!(
                "{}:{lineno}: duplicate id {:?} (first at line {first})",
                path.display(),
                pair.id
            )));
        }
        out.push(pair);
    }
    Ok(out)
}

/// Write QA pairs as JSONL.
pub fn write_qa<P: AsRef<Path>>(path: P, records: &[QaPair]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::validation(format!("serialize qa {}: {e}", record.id)))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
