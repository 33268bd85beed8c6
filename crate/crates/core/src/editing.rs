//! Adapting a known task's schema to an unseen task: object replacement,
//! then QA-based step deletion, then masked-LM token replacement.

use std::sync::OnceLock;

use rayon::prelude::*;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::{Provenance, Schema, SchemaEntry, StepSentence};
use crate::error::{Error, Result};
use crate::scoring::{embed_checked, masked_fill, pos_tag, qa_scores, word_core, ScorerProvider, TextSpace};

pub const DEFAULT_QUESTION_TEMPLATE: &str = "How to {task}?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditParams {
    /// Deletion threshold. 0 disables deletion.
    pub beta: f64,
    pub question_template: String,
    pub max_mlm_candidates: usize,
    pub object_replace: bool,
    pub step_deletion: bool,
    pub token_replace: bool,
}

impl Default for EditParams {
    fn default() -> Self {
        Self {
            beta: 0.8,
            question_template: DEFAULT_QUESTION_TEMPLATE.into(),
            max_mlm_candidates: 20,
            object_replace: true,
            step_deletion: true,
            token_replace: true,
        }
    }
}

impl EditParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("beta", format!("{} is outside [0, 1]", self.beta)));
        }
        if !self.question_template.contains("{task}") {
            return Err(Error::invalid("question template", "must contain {task}"));
        }
        if self.max_mlm_candidates == 0 {
            return Err(Error::invalid("max_mlm_candidates", "must be positive"));
        }
        Ok(())
    }

    pub fn question(&self, task_name: &str) -> String {
        self.question_template.replace("{task}", task_name)
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        let (o, d, t) = match ablation {
            Ablation::Full => (true, true, true),
            Ablation::NoMask => (true, true, false),
            Ablation::NoDeletion => (true, false, true),
            Ablation::NoReplacement => (false, true, true),
            Ablation::All => (false, false, false),
        };
        self.object_replace = o;
        self.step_deletion = d;
        self.token_replace = t;
        self
    }
}

/// Editing configurations of the ablation study. "mask" is token
/// replacement, "replacement" is object replacement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "- mask")]
    NoMask,
    #[serde(rename = "- deletion")]
    NoDeletion,
    #[serde(rename = "- replacement")]
    NoReplacement,
    #[serde(rename = "- all")]
    All,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoMask,
        Ablation::NoDeletion,
        Ablation::NoReplacement,
        Ablation::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoMask => "- mask",
            Ablation::NoDeletion => "- deletion",
            Ablation::NoReplacement => "- replacement",
            Ablation::All => "- all",
        }
    }
}

/// A task as seen by the editor.
#[derive(Debug, Clone, PartialEq)]
pub struct EditTask<'a> {
    pub task_id: &'a str,
    pub name: &'a str,
    /// Overrides extraction from the name.
    pub main_object: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSwap {
    pub word_index: usize,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionDecision {
    /// X(target question, step)
    pub x_target: f64,
    /// X(source question, step)
    pub x_source: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSwap {
    pub word_index: usize,
    pub from: String,
    pub to: String,
    pub original_log_prob: f64,
    pub replacement_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step_id: String,
    pub source_text: String,
    pub object_swaps: Vec<WordSwap>,
    pub deletion: Option<DeletionDecision>,
    pub token_swaps: Vec<TokenSwap>,
    /// Word positions whose best candidate was the original word.
    pub frozen: Vec<usize>,
    /// Text after editing; absent when the step was deleted.
    pub final_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTrace {
    pub source_task_id: String,
    pub target_task_id: String,
    pub source_object: String,
    pub target_object: String,
    pub params: EditParams,
    pub steps: Vec<StepTrace>,
}

/// Lowercased core of the first noun of a task name, or of its last word
/// when no word is tagged as a noun.
pub fn extract_main_object(provider: &dyn ScorerProvider, task_name: &str) -> Result<String> {
    let tags = pos_tag(provider, task_name)?;
    let pick = tags
        .iter()
        .find(|t| t.is_noun())
        .or_else(|| tags.last())
        .ok_or_else(|| Error::invalid("task name", "empty"))?;
    Ok(word_core(&pick.surface).to_lowercase())
}

/// Byte spans of whitespace-delimited words.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    static WORD: OnceLock<Regex> = OnceLock::new();
    WORD.get_or_init(|| Regex::new(r"\S+").unwrap())
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect()
}

/// Replaces whole words by index, keeping all other bytes.
fn replace_words(text: &str, swaps: &[(usize, String)]) -> String {
    let spans = word_spans(text);
    let mut out = String::with_capacity(text.len() + 16);
    let mut last = 0;
    let mut swaps: Vec<&(usize, String)> = swaps.iter().collect();
    swaps.sort_by_key(|(i, _)| *i);
    for (i, to) in swaps {
        let (s, e) = spans[*i];
        out.push_str(&text[last..s]);
        out.push_str(to);
        last = e;
    }
    out.push_str(&text[last..]);
    out
}

fn match_case(template: &str, word: &str) -> String {
    let upper = template.chars().next().is_some_and(char::is_uppercase);
    let mut chars = word.chars();
    match chars.next() {
        None => String::new(),
        Some(first) if upper => first.to_uppercase().chain(chars).collect(),
        Some(first) => first.to_lowercase().chain(chars).collect(),
    }
}

fn object_pattern(source: &str) -> Regex {
    RegexBuilder::new(&format!(r"\b({})(es|s)?\b", regex::escape(source)))
        .case_insensitive(true)
        .build()
        .expect("escaped pattern")
}

/// Replaces every case-insensitive whole-word occurrence of `source`
/// (optionally followed by a plural `s`/`es`) with `target`, keeping the
/// plural suffix and the initial capital. A target that already ends in
/// `s` gets no extra suffix. Returns the new text and the swapped words.
pub fn object_replace(text: &str, source: &str, target: &str) -> (String, Vec<WordSwap>) {
    if source.is_empty() || target.is_empty() || source.eq_ignore_ascii_case(target) {
        return (text.to_string(), Vec::new());
    }
    replace_with(&object_pattern(source), text, target)
}

/// Builds the pattern once for a whole schema; `object_replace` otherwise.
fn schema_object_replacer(source: &str, target: &str) -> impl Fn(&str) -> (String, Vec<WordSwap>) {
    let target = target.to_string();
    let pattern = (!source.is_empty() && !target.is_empty() && !source.eq_ignore_ascii_case(&target))
        .then(|| object_pattern(source));
    move |text| match &pattern {
        Some(p) => replace_with(p, text, &target),
        None => (text.to_string(), Vec::new()),
    }
}

fn replace_with(pattern: &Regex, text: &str, target: &str) -> (String, Vec<WordSwap>) {
    let mut swaps = Vec::new();
    let mut replacements = Vec::new();
    for (i, (s, e)) in word_spans(text).into_iter().enumerate() {
        let word = &text[s..e];
        if !pattern.is_match(word) {
            continue;
        }
        let new = pattern.replace_all(word, |c: &regex::Captures| {
            let mut t = match_case(&c[1], target);
            if let Some(suffix) = c.get(2) {
                if !t.ends_with('s') {
                    t.push_str(suffix.as_str());
                }
            }
            t
        });
        if new != word {
            swaps.push(WordSwap {
                word_index: i,
                from: word.to_string(),
                to: new.to_string(),
            });
            replacements.push((i, new.into_owned()));
        }
    }
    if swaps.is_empty() {
        return (text.to_string(), swaps);
    }
    (replace_words(text, &replacements), swaps)
}

/// The deletion rule: keep iff X(target) >= beta * X(source). Beta 0
/// keeps everything.
pub fn keep_step(x_target: f64, x_source: f64, beta: f64) -> bool {
    beta == 0.0 || x_target >= beta * x_source
}

/// QA scores of each step against both questions, and the keep decision.
pub fn step_deletion(
    provider: &dyn ScorerProvider,
    steps: &[&str],
    source_question: &str,
    target_question: &str,
    beta: f64,
) -> Result<Vec<DeletionDecision>> {
    if steps.is_empty() {
        return Ok(Vec::new());
    }
    let xs = qa_scores(provider, source_question, steps)?;
    let xt = qa_scores(provider, target_question, steps)?;
    Ok(xs
        .into_iter()
        .zip(xt)
        .map(|(x_source, x_target)| DeletionDecision {
            x_target,
            x_source,
            kept: keep_step(x_target, x_source, beta),
        })
        .collect())
}

fn is_object_form(core: &str, object: &str) -> bool {
    let c = core.to_lowercase();
    let o = object.to_lowercase();
    c == o || c.strip_suffix('s') == Some(o.as_str()) || c.strip_suffix("es") == Some(o.as_str())
}

/// Rebuilds a word with a new core, keeping surrounding punctuation and
/// the initial capital of the old one.
fn rebuild_word(old: &str, new_core: &str) -> String {
    let core = word_core(old);
    let start = old.find(core).unwrap_or(0);
    let end = start + core.len();
    format!("{}{}{}", &old[..start], match_case(core, new_core), &old[end..])
}

pub struct TokenReplaceOutcome {
    pub text: String,
    pub swaps: Vec<TokenSwap>,
    pub frozen: Vec<usize>,
}

/// Masked-LM token replacement on one step.
///
/// N is the number of nouns at entry, not counting `immune` positions or
/// forms of the target object. Each of N rounds scores every remaining
/// noun in its masked context, takes the least likely one (leftmost on
/// ties) and swaps in the best single-word candidate that the tagger calls
/// a noun in place. A position whose best candidate is the original word
/// is frozen; no position is edited twice.
pub fn token_replace(
    provider: &dyn ScorerProvider,
    step_text: &str,
    target_question: &str,
    target_object: &str,
    immune: &[usize],
    top_k: usize,
) -> Result<TokenReplaceOutcome> {
    let tags = pos_tag(provider, step_text)?;
    let mut remaining: Vec<usize> = tags
        .iter()
        .enumerate()
        .filter(|(i, t)| t.is_noun() && !immune.contains(i) && !is_object_form(word_core(&t.surface), target_object))
        .map(|(i, _)| i)
        .collect();
    let rounds = remaining.len();
    let offset = target_question.split_whitespace().count();
    let mut text = step_text.to_string();
    let mut swaps = Vec::new();
    let mut frozen = Vec::new();

    for _ in 0..rounds {
        if remaining.is_empty() {
            break;
        }
        let prompt = format!("{target_question} {text}");
        let fills = remaining
            .iter()
            .map(|&i| masked_fill(provider, &prompt, offset + i, top_k))
            .collect::<Result<Vec<_>>>()?;
        let mut pick = 0;
        for (j, f) in fills.iter().enumerate() {
            if f.original_log_prob < fills[pick].original_log_prob {
                pick = j;
            }
        }
        let pos = remaining.remove(pick);
        let fill = &fills[pick];
        let words: Vec<&str> = text.split_whitespace().collect();
        let old = words[pos];

        let options: Vec<(&crate::scoring::FillCandidate, String)> = fill
            .candidates
            .iter()
            .filter(|c| {
                let w = c.word.trim();
                !w.is_empty() && !w.contains(char::is_whitespace) && !word_core(w).is_empty()
            })
            .map(|c| (c, rebuild_word(old, word_core(c.word.trim()))))
            .collect();
        let chosen = if options.is_empty() {
            None
        } else {
            let sentences: Vec<String> = options
                .iter()
                .map(|(_, w)| replace_words(&text, &[(pos, w.clone())]))
                .collect();
            let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
            let retagged = provider.pos_tag(&refs)?;
            options
                .into_iter()
                .zip(retagged)
                .find(|(_, tags)| tags.get(pos).is_some_and(|t| t.is_noun()))
                .map(|(o, _)| o)
        };
        match chosen {
            Some((cand, new_word)) if !word_core(&new_word).eq_ignore_ascii_case(word_core(old)) => {
                swaps.push(TokenSwap {
                    word_index: pos,
                    from: old.to_string(),
                    to: new_word.clone(),
                    original_log_prob: fill.original_log_prob,
                    replacement_log_prob: cand.log_prob,
                });
                text = replace_words(&text, &[(pos, new_word)]);
            }
            _ => frozen.push(pos),
        }
    }
    Ok(TokenReplaceOutcome { text, swaps, frozen })
}

/// Applies the three editing routines in order to every step of
/// `source_schema`. Scores are carried over; texts that changed are
/// re-embedded in the joint space.
pub fn edit_schema(
    provider: &dyn ScorerProvider,
    source_schema: &Schema,
    source: &EditTask,
    target: &EditTask,
    params: &EditParams,
) -> Result<(Schema, EditTrace)> {
    params.validate()?;
    let object_of = |t: &EditTask| -> Result<String> {
        match t.main_object {
            Some(o) => Ok(o.to_lowercase()),
            None => extract_main_object(provider, t.name),
        }
    };
    let needs_objects = params.object_replace || params.token_replace;
    let (source_object, target_object) = if needs_objects {
        (object_of(source)?, object_of(target)?)
    } else {
        (String::new(), String::new())
    };

    let replace = schema_object_replacer(&source_object, &target_object);
    let mut traces: Vec<StepTrace> = source_schema
        .entries()
        .iter()
        .map(|e| {
            let (text, object_swaps) = if params.object_replace {
                replace(&e.step.text)
            } else {
                (e.step.text.clone(), Vec::new())
            };
            StepTrace {
                step_id: e.step.step_id.clone(),
                source_text: e.step.text.clone(),
                object_swaps,
                deletion: None,
                token_swaps: Vec::new(),
                frozen: Vec::new(),
                final_text: Some(text),
            }
        })
        .collect();

    let source_q = params.question(source.name);
    let target_q = params.question(target.name);
    if params.step_deletion && params.beta > 0.0 {
        let texts: Vec<&str> = traces.iter().map(|t| t.final_text.as_deref().unwrap()).collect();
        let decisions = step_deletion(provider, &texts, &source_q, &target_q, params.beta)?;
        for (t, d) in traces.iter_mut().zip(decisions) {
            if !d.kept {
                t.final_text = None;
            }
            t.deletion = Some(d);
        }
    }
    if traces.iter().all(|t| t.final_text.is_none()) {
        return Err(Error::EmptyEditedSchema { beta: params.beta });
    }

    if params.token_replace {
        traces.par_iter_mut().try_for_each(|t| -> Result<()> {
            let Some(text) = &t.final_text else {
                return Ok(());
            };
            let immune: Vec<usize> = t.object_swaps.iter().map(|s| s.word_index).collect();
            let out = token_replace(provider, text, &target_q, &target_object, &immune, params.max_mlm_candidates)?;
            t.final_text = Some(out.text);
            t.token_swaps = out.swaps;
            t.frozen = out.frozen;
            Ok(())
        })?;
    }

    let trace = EditTrace {
        source_task_id: source.task_id.to_string(),
        target_task_id: target.task_id.to_string(),
        source_object,
        target_object,
        params: params.clone(),
        steps: traces,
    };
    let schema = assemble(provider, source_schema, &trace)?;
    Ok((schema, trace))
}

/// Builds the edited schema from a source schema and the final texts of a
/// trace. Unchanged steps keep their embeddings bit for bit.
fn assemble(provider: &dyn ScorerProvider, source_schema: &Schema, trace: &EditTrace) -> Result<Schema> {
    let mut entries = Vec::new();
    let mut changed = Vec::new();
    for (e, t) in source_schema.entries().iter().zip(&trace.steps) {
        let Some(text) = &t.final_text else {
            continue;
        };
        let mut step = e.step.clone();
        if *text != step.text {
            step.text = text.clone();
            step.tokens = None;
            changed.push(entries.len());
        }
        entries.push(SchemaEntry { step, score: e.score });
    }
    if entries.is_empty() {
        return Err(Error::EmptyEditedSchema {
            beta: trace.params.beta,
        });
    }
    if !changed.is_empty() {
        let texts: Vec<&str> = changed.iter().map(|&i| entries[i].step.text.as_str()).collect();
        let vectors = embed_checked(provider, TextSpace::Joint, &texts)?;
        for (i, v) in changed.into_iter().zip(vectors) {
            entries[i].step.embedding = v;
        }
    }
    for e in &entries {
        StepSentence::validate(&e.step)?;
    }
    Schema::new(
        trace.target_task_id.clone(),
        entries,
        Provenance::Edited {
            source_task_id: trace.source_task_id.clone(),
        },
    )
}

/// Re-applies a trace to its source schema: object swaps, deletions and
/// token swaps by word position. Fails if the trace does not match.
pub fn replay(provider: &dyn ScorerProvider, source_schema: &Schema, trace: &EditTrace) -> Result<Schema> {
    if trace.steps.len() != source_schema.len() {
        return Err(Error::invalid("trace", "step count differs from the source schema"));
    }
    let mut rebuilt = trace.clone();
    for (e, t) in source_schema.entries().iter().zip(rebuilt.steps.iter_mut()) {
        if e.step.step_id != t.step_id || e.step.text != t.source_text {
            return Err(Error::invalid("trace", format!("step {} does not match the source", t.step_id)));
        }
        let deleted = t.deletion.as_ref().is_some_and(|d| !d.kept);
        if deleted {
            t.final_text = None;
            continue;
        }
        let swaps: Vec<(usize, String)> = t.object_swaps.iter().map(|s| (s.word_index, s.to.clone())).collect();
        let mut text = replace_words(&e.step.text, &swaps);
        for s in &t.token_swaps {
            text = replace_words(&text, &[(s.word_index, s.to.clone())]);
        }
        t.final_text = Some(text);
    }
    if rebuilt.steps.iter().map(|s| &s.final_text).ne(trace.steps.iter().map(|s| &s.final_text)) {
        return Err(Error::invalid("trace", "replayed texts differ from the recorded ones"));
    }
    assemble(provider, source_schema, &rebuilt)
}
