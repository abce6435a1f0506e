//! Running a synthetic panel over one survey, and re-scoring stored texts.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::cache::{CachedAttempts, EmbeddingCache, ResponseCache, ResponseKey};
use super::config::{RunConfig, StimulusMode, RATER_TEMPERATURE, RATER_TOP_P};
use super::parse::parse_rating;
use super::persona::{
    rater_system_prompt, render_persona, stimulus_turn, system_prompt, RaterExamples,
    DIRECT_REPROMPT,
};
use super::provider::{
    ChatMessage, ChatProvider, ChatRequest, EmbeddingProvider, ProviderError, RequestTag,
    RetryPolicy, Stage,
};
use super::ElicitationError;
use crate::domain::{Consumer, Corpus, LikertRating, Method, ResponseRecord, Role, Survey};
use crate::exec::Execution;
use crate::ssr::{score_response, AnchorSet, EmbeddingVector, SsrParams};

/// A failure confined to one (consumer, sample); the panel carries on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub survey_id: String,
    pub consumer_id: String,
    pub sample_index: u32,
    pub stage: Stage,
    pub message: String,
}

/// Embedding lookups through a cache.
#[derive(Clone, Copy)]
pub struct Embedder<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub model: &'a str,
    pub cache: &'a EmbeddingCache,
    pub retry: RetryPolicy,
}

impl Embedder<'_> {
    /// Cached vector for `text`, calling the provider on a miss.
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::Rejected("cannot embed empty text".into()));
        }
        if let Some(v) = self.cache.get(self.model, text) {
            return Ok(v);
        }
        let v = self.retry.run(|| self.provider.embed(self.model, text))?;
        self.cache
            .insert(self.model, text, v)
            .map_err(|e| ProviderError::Transport(format!("embedding cache write failed: {e}")))
    }

    /// Copies of `sets` with embeddings filled in.
    pub fn embed_anchor_sets(
        &self,
        sets: &[AnchorSet],
    ) -> Result<Vec<AnchorSet>, ElicitationError> {
        sets.iter()
            .map(|set| {
                let mut out = set.clone();
                let mut vectors = Vec::with_capacity(5);
                for s in set.statements() {
                    vectors.push(self.embed_text(s)?);
                }
                let arr: [EmbeddingVector; 5] = vectors.try_into().expect("five statements");
                out.set_embeddings(arr)?;
                Ok(out)
            })
            .collect()
    }
}

/// Everything a panel run needs besides the survey.
pub struct PanelContext<'a> {
    pub config: &'a RunConfig,
    pub chat: &'a dyn ChatProvider,
    pub responses: &'a ResponseCache,
    /// Required for SSR.
    pub embedder: Option<Embedder<'a>>,
    /// Embedded anchor sets; required for SSR.
    pub anchor_sets: &'a [AnchorSet],
    pub rater_examples: &'a RaterExamples,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub survey_id: String,
    pub records_expected: usize,
    pub records_written: usize,
    pub chat_calls: usize,
    pub chat_cache_hits: usize,
    pub errors: Vec<RecordError>,
}

impl RunReport {
    pub fn failure_rate(&self) -> f64 {
        if self.records_expected == 0 {
            0.0
        } else {
            self.errors.len() as f64 / self.records_expected as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelOutcome {
    pub survey: Survey,
    pub report: RunReport,
}

struct Counters {
    calls: AtomicUsize,
    hits: AtomicUsize,
}

struct Job<'a> {
    survey: &'a Survey,
    consumer: &'a Consumer,
    sample: u32,
    system: String,
}

impl<'a> Job<'a> {
    fn tag(&self, stage: Stage, attempt: u32) -> RequestTag {
        RequestTag {
            survey_id: self.survey.id.clone(),
            consumer_id: self.consumer.id.clone(),
            sample_index: self.sample,
            stage,
            attempt,
        }
    }

    fn conversation(&self, stage: Stage) -> String {
        let kind = if stage == Stage::Rate {
            "rate"
        } else {
            "elicit"
        };
        format!(
            "{}/{}/{}/{kind}",
            self.survey.id, self.consumer.id, self.sample
        )
    }

    fn error(&self, stage: Stage, message: impl Into<String>) -> RecordError {
        RecordError {
            survey_id: self.survey.id.clone(),
            consumer_id: self.consumer.id.clone(),
            sample_index: self.sample,
            stage,
            message: message.into(),
        }
    }
}

fn call(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    request: &ChatRequest,
) -> Result<String, ProviderError> {
    ctx.retry.run(|| {
        counters.calls.fetch_add(1, Ordering::Relaxed);
        ctx.chat.chat(request).map(|r| r.text)
    })
}

/// Cached attempts for a stage, or runs `produce` and stores its outputs.
fn staged(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
    stage: Stage,
    produce: impl FnOnce() -> Result<Vec<String>, ProviderError>,
) -> Result<Vec<String>, RecordError> {
    let key = ResponseKey::new(
        &job.survey.id,
        &job.consumer.id,
        job.sample,
        stage,
        ctx.config,
    );
    if let Some(hit) = ctx.responses.get(&key) {
        counters.hits.fetch_add(1, Ordering::Relaxed);
        return Ok(hit.outputs);
    }
    let outputs = produce().map_err(|e| job.error(stage, e.to_string()))?;
    ctx.responses
        .insert(&key, CachedAttempts { outputs })
        .map(|c| c.outputs)
        .map_err(|e| job.error(stage, format!("response cache write failed: {e}")))
}

/// Asks for a number; one corrective reprompt if the reply has none.
fn ask_rating(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
    stage: Stage,
    system: &str,
    first_turn: ChatMessage,
    sampling: (f64, f64),
) -> Result<LikertRating, RecordError> {
    let outputs = staged(ctx, counters, job, stage, || {
        let mut turns = vec![first_turn];
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let req = ChatRequest::new(
                job.conversation(stage),
                &ctx.config.chat_model,
                system.to_string(),
                turns.clone(),
                sampling,
                Some(ctx.config.seed),
                job.tag(stage, attempt),
            )?;
            let text = call(ctx, counters, &req)?;
            let parsed = parse_rating(&text).is_some();
            turns.push(ChatMessage::assistant(text.clone()));
            turns.push(ChatMessage::user(DIRECT_REPROMPT));
            outputs.push(text);
            if parsed {
                break;
            }
        }
        Ok(outputs)
    })?;
    outputs
        .iter()
        .find_map(|o| parse_rating(o))
        .ok_or_else(|| job.error(stage, format!("no rating in replies {outputs:?}")))
}

/// Asks for free text; one retry if the reply is empty.
fn ask_text(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
) -> Result<String, RecordError> {
    let stage = Stage::Textual;
    let outputs = staged(ctx, counters, job, stage, || {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let req = ChatRequest::new(
                job.conversation(stage),
                &ctx.config.chat_model,
                job.system.clone(),
                vec![stimulus_turn(
                    &job.survey.stimulus,
                    ctx.config.stimulus_mode,
                )],
                (ctx.config.llm_temperature, ctx.config.top_p),
                Some(ctx.config.seed),
                job.tag(stage, attempt),
            )?;
            let text = call(ctx, counters, &req)?;
            let done = !text.trim().is_empty();
            outputs.push(text);
            if done {
                break;
            }
        }
        Ok(outputs)
    })?;
    outputs
        .into_iter()
        .find(|o| !o.trim().is_empty())
        .ok_or_else(|| job.error(stage, "empty reply after retry"))
}

fn elicit_direct(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
) -> Result<ResponseRecord, RecordError> {
    let cfg = ctx.config;
    let rating = ask_rating(
        ctx,
        counters,
        job,
        Stage::Direct,
        &job.system,
        stimulus_turn(&job.survey.stimulus, cfg.stimulus_mode),
        (cfg.llm_temperature, cfg.top_p),
    )?;
    Ok(ResponseRecord::rated(
        &job.consumer.id,
        Method::Dlr,
        job.sample,
        rating,
    ))
}

/// Maps a free-text reply to a rating in a fresh rating-expert conversation.
fn rate_followup(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
    text: &str,
) -> Result<LikertRating, RecordError> {
    let system = rater_system_prompt(&job.survey.stimulus.question, ctx.rater_examples);
    ask_rating(
        ctx,
        counters,
        job,
        Stage::Rate,
        &system,
        ChatMessage::user(text),
        (RATER_TEMPERATURE, RATER_TOP_P),
    )
}

fn elicit_one(
    ctx: &PanelContext<'_>,
    counters: &Counters,
    job: &Job<'_>,
) -> Result<ResponseRecord, RecordError> {
    match ctx.config.method {
        Method::Dlr => elicit_direct(ctx, counters, job),
        Method::Flr => {
            let text = ask_text(ctx, counters, job)?;
            let rating = rate_followup(ctx, counters, job, &text)?;
            let mut record =
                ResponseRecord::rated(&job.consumer.id, Method::Flr, job.sample, rating);
            record.raw_text = Some(text);
            Ok(record)
        }
        Method::Ssr => {
            let text = ask_text(ctx, counters, job)?;
            let embedder = ctx.embedder.expect("checked before the run");
            let vector = embedder
                .embed_text(&text)
                .map_err(|e| job.error(Stage::Textual, format!("embedding failed: {e}")))?;
            let scored = score_response(&vector, ctx.anchor_sets, &ctx.config.ssr)
                .map_err(|e| job.error(Stage::Textual, format!("scoring failed: {e}")))?;
            Ok(ResponseRecord {
                consumer_id: job.consumer.id.clone(),
                method: Method::Ssr,
                sample_index: job.sample,
                raw_text: Some(text),
                direct_rating: None,
                per_set_pmfs: Some(scored.per_set),
                final_pmf: scored.final_pmf,
            })
        }
    }
}

/// Checks everything that would make every call fail, before making any.
/// Anchor embeddings are checked by [`run_panel`], since embedding them
/// already needs the provider.
pub fn check_ready(survey: &Survey, ctx: &PanelContext<'_>) -> Result<(), ElicitationError> {
    let cfg = ctx.config;
    cfg.validate()?;
    if survey.roster.is_empty() {
        return Err(ElicitationError::Config(format!(
            "survey '{}' has an empty roster",
            survey.id
        )));
    }
    if cfg.stimulus_mode == StimulusMode::Image {
        if !ctx.chat.supports_images() {
            return Err(ElicitationError::Config(format!(
                "provider '{}' does not accept images",
                ctx.chat.name()
            )));
        }
        if survey.stimulus.image_ref.is_none() {
            return Err(ElicitationError::Config(format!(
                "survey '{}' has no image",
                survey.id
            )));
        }
    }
    if cfg.method == Method::Ssr {
        if ctx.embedder.is_none() {
            return Err(ElicitationError::Config(
                "SSR needs an embedding provider".into(),
            ));
        }
        if ctx.anchor_sets.is_empty() {
            return Err(ElicitationError::Config(
                "SSR needs at least one anchor set".into(),
            ));
        }
    }
    Ok(())
}

/// Elicits `samples_per_consumer` responses from every roster member.
/// Record-level failures are collected in the report; only configuration
/// problems abort.
pub fn run_panel(
    survey: &Survey,
    ctx: &PanelContext<'_>,
) -> Result<PanelOutcome, ElicitationError> {
    check_ready(survey, ctx)?;
    if let Some(set) = ctx.anchor_sets.iter().find(|s| !s.is_embedded()) {
        return Err(ElicitationError::Config(format!(
            "anchor set {} is not embedded",
            set.id
        )));
    }
    let cfg = ctx.config;
    let mut jobs = Vec::with_capacity(survey.roster.len() * cfg.samples_per_consumer as usize);
    for consumer in &survey.roster {
        let persona = render_persona(&consumer.demographics, &cfg.demography_mode)?;
        let system = system_prompt(&persona, cfg.method);
        for sample in 0..cfg.samples_per_consumer {
            jobs.push(Job {
                survey,
                consumer,
                sample,
                system: system.clone(),
            });
        }
    }
    let counters = Counters {
        calls: AtomicUsize::new(0),
        hits: AtomicUsize::new(0),
    };
    let expected = jobs.len();
    let results =
        Execution::bounded(cfg.parallelism).map(jobs, |job| elicit_one(ctx, &counters, &job));

    let mut responses = Vec::with_capacity(expected);
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(record) => responses.push(record),
            Err(e) => {
                log::warn!(
                    "survey '{}', consumer '{}', sample {}: {}",
                    e.survey_id,
                    e.consumer_id,
                    e.sample_index,
                    e.message
                );
                errors.push(e);
            }
        }
    }
    let roster = survey
        .roster
        .iter()
        .map(|c| Consumer {
            role: Role::Synthetic,
            ..c.clone()
        })
        .collect();
    let report = RunReport {
        survey_id: survey.id.clone(),
        records_expected: expected,
        records_written: responses.len(),
        chat_calls: counters.calls.into_inner(),
        chat_cache_hits: counters.hits.into_inner(),
        errors,
    };
    Ok(PanelOutcome {
        survey: Survey {
            id: survey.id.clone(),
            stimulus: survey.stimulus.clone(),
            attributes: survey.attributes.clone(),
            roster,
            responses,
        },
        report,
    })
}

/// Embeddings of every distinct SSR text in a corpus.
pub fn embed_corpus_texts(
    corpus: &Corpus,
    embedder: &Embedder<'_>,
    execution: Execution,
) -> Result<HashMap<String, EmbeddingVector>, ElicitationError> {
    let mut texts: Vec<&str> = Vec::new();
    for s in &corpus.surveys {
        for r in s.responses.iter().filter(|r| r.method == Method::Ssr) {
            match r.raw_text.as_deref() {
                Some(t) if !t.trim().is_empty() => texts.push(t),
                _ => {
                    return Err(ElicitationError::MissingText {
                        survey_id: s.id.clone(),
                        consumer_id: r.consumer_id.clone(),
                        sample_index: r.sample_index,
                    })
                }
            }
        }
    }
    texts.sort_unstable();
    texts.dedup();
    let vectors = execution.map(texts.clone(), |t| embedder.embed_text(t));
    texts
        .into_iter()
        .zip(vectors)
        .map(|(t, v)| Ok((t.to_string(), v?)))
        .collect()
}

/// Recomputes per-set and final pmfs of every SSR record. Other fields and
/// non-SSR records are left untouched.
pub fn rescore_corpus(
    corpus: &Corpus,
    sets: &[AnchorSet],
    params: &SsrParams,
    embeddings: &HashMap<String, EmbeddingVector>,
) -> Result<Corpus, ElicitationError> {
    let mut out = corpus.clone();
    for survey in &mut out.surveys {
        for r in survey
            .responses
            .iter_mut()
            .filter(|r| r.method == Method::Ssr)
        {
            let missing = || ElicitationError::MissingText {
                survey_id: survey.id.clone(),
                consumer_id: r.consumer_id.clone(),
                sample_index: r.sample_index,
            };
            let text = r.raw_text.as_deref().ok_or_else(missing)?;
            let vector = embeddings.get(text).ok_or_else(missing)?;
            let scored = score_response(vector, sets, params)?;
            r.per_set_pmfs = Some(scored.per_set);
            r.final_pmf = scored.final_pmf;
        }
    }
    Ok(out)
}
