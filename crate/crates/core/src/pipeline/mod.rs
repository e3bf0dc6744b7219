//! The translate / back-translate / judge / reflect / revise loop.
//!
//! A run starts with one draft translation. Each round then back-translates
//! the current draft, asks the judge whether the back-translation still
//! differs from the source, and if it does, reflects on the differences and
//! revises the draft. The loop ends when the judge is satisfied or the round
//! cap is hit, and a last extraction call pulls the final translation out of
//! the latest draft.
//!
//! Every backend call, failed ones included, is recorded as exactly one
//! transcript entry before the next call is issued.

mod order;
mod state;
mod task;

use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ChatRequest, ChatResponse, Usage};
use crate::extraction::{
    parse_final_translation, parse_judgment_fail_open, split_reflection, JudgmentResult,
};
use crate::prompts::{MessageSequence, RenderError, TemplateSet};
use crate::stage::Stage;
use crate::transcript::{TranscriptEntry, TranscriptError, TranscriptSink, SCHEMA_VERSION};

pub use order::{is_valid_stage_order, is_zero_shot_order, stage_word};
pub use state::{IterationFinal, PipelineState, TerminationReason};
pub use task::{ConfigError, Mode, RunConfig, TaskError, TranslationTask};

use state::{ExtractKind, Next};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    InvalidTask(#[from] TaskError),
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error("illegal state: {0}")]
    IllegalState(&'static str),
    #[error("{stage} call failed: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{stage} call returned an empty reply")]
    EmptyOutput { stage: Stage },
    #[error("could not extract a final translation; raw output: {raw:?}")]
    ExtractionFailed { raw: String },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

impl PipelineError {
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, PipelineError::Backend { .. })
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunError {
    #[source]
    pub error: PipelineError,
    pub transcript: Vec<TranscriptEntry>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub final_translation: String,
    pub iterations_used: u32,
    pub transcript: Vec<TranscriptEntry>,
    pub termination_reason: TerminationReason,
    pub usage: Usage,
    pub fallback_used: bool,
    #[serde(default)]
    pub intermediate_finals: Vec<IterationFinal>,
}

impl PipelineResult {
    pub fn stages(&self) -> Vec<Stage> {
        self.transcript.iter().map(|e| e.stage).collect()
    }
}

/// Collects the transcript of one run and forwards each entry to an
/// optional durable sink.
pub struct Recorder {
    run_id: String,
    task_id: String,
    entries: Vec<TranscriptEntry>,
    sink: Option<Arc<dyn TranscriptSink>>,
    usage: Usage,
}

impl std::fmt::Debug for Recorder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recorder")
            .field("run_id", &self.run_id)
            .field("entries", &self.entries.len())
            .field("durable", &self.sink.is_some())
            .finish()
    }
}

impl Recorder {
    pub fn new(run_id: impl Into<String>, task_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            task_id: task_id.into(),
            entries: Vec::new(),
            sink: None,
            usage: Usage::default(),
        }
    }

    /// A recorder whose run id is the task id.
    pub fn for_task(task: &TranslationTask) -> Self {
        Self::new(task.id.clone(), task.id.clone())
    }

    pub fn with_sink(mut self, sink: Arc<dyn TranscriptSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<TranscriptEntry> {
        self.entries
    }

    pub fn usage(&self) -> Usage {
        self.usage
    }

    fn record(&mut self, entry: TranscriptEntry) -> Result<(), TranscriptError> {
        if let Some(sink) = &self.sink {
            sink.append(&entry)?;
        }
        self.usage += entry.usage;
        self.entries.push(entry);
        Ok(())
    }
}

struct Call<'a> {
    stage: Stage,
    iteration: u32,
    messages: MessageSequence,
    rec: &'a mut Recorder,
}

/// Runs tasks against one backend with one configuration. Cheap to share
/// across concurrent runs.
#[derive(Clone)]
pub struct Pipeline {
    backend: Arc<dyn Backend>,
    templates: Arc<TemplateSet>,
    config: RunConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("backend", &self.backend.name())
            .field("config", &self.config)
            .finish()
    }
}

impl Pipeline {
    pub fn new(backend: Arc<dyn Backend>, config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            backend,
            templates: Arc::new(TemplateSet::default()),
            config,
        })
    }

    pub fn with_templates(mut self, templates: Arc<TemplateSet>) -> Self {
        self.templates = templates;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Validates the task and returns the state before the first call.
    pub fn start(&self, task: TranslationTask, mode: Mode) -> Result<PipelineState, PipelineError> {
        task.validate()?;
        Ok(PipelineState::new(task, mode))
    }

    pub async fn run(
        &self,
        task: TranslationTask,
        rec: Recorder,
    ) -> Result<PipelineResult, RunError> {
        self.run_mode(task, Mode::DualReflect, rec).await
    }

    pub async fn run_zero_shot(
        &self,
        task: TranslationTask,
        rec: Recorder,
    ) -> Result<PipelineResult, RunError> {
        self.run_mode(task, Mode::ZeroShot, rec).await
    }

    pub async fn run_mode(
        &self,
        task: TranslationTask,
        mode: Mode,
        mut rec: Recorder,
    ) -> Result<PipelineResult, RunError> {
        let fail = |error: PipelineError, rec: Recorder| RunError {
            error,
            usage: rec.usage,
            transcript: rec.entries,
        };
        let mut state = match self.start(task, mode) {
            Ok(state) => state,
            Err(e) => return Err(fail(e, rec)),
        };
        while !state.terminated {
            state = match self.step(state, &mut rec).await {
                Ok(next) => next,
                Err(e) => return Err(fail(e, rec)),
            };
        }
        Ok(PipelineResult {
            final_translation: state.final_translation.expect("set on termination"),
            iterations_used: state.iteration,
            termination_reason: state.termination.expect("set on termination"),
            fallback_used: state.fallback_used,
            intermediate_finals: state.intermediate_finals,
            usage: rec.usage,
            transcript: rec.entries,
        })
    }

    /// Advances the run by exactly one stage, issuing one backend call.
    ///
    /// The round counter goes up when a judgment completes.
    pub async fn step(
        &self,
        mut state: PipelineState,
        rec: &mut Recorder,
    ) -> Result<PipelineState, PipelineError> {
        let t = &self.templates;
        let task = &state.task;
        let (ls, lt) = (task.source_lang.as_str(), task.target_lang.as_str());

        match state.next {
            Next::Done => return Err(PipelineError::IllegalState("run already terminated")),
            Next::Draft => {
                let messages = t.render_draft(&task.source_text, ls, lt)?;
                let out = self
                    .call(
                        Call { stage: Stage::Draft, iteration: 0, messages, rec },
                        Parsed::text(Stage::Draft),
                    )
                    .await?;
                state.draft = Some(out);
                state.next = match state.mode {
                    Mode::ZeroShot => Next::Extract(ExtractKind::Final(TerminationReason::Converged)),
                    Mode::DualReflect => Next::Back,
                };
            }
            Next::Back => {
                let draft = state.draft.as_deref().ok_or(PipelineError::IllegalState("no draft"))?;
                let messages = t.render_back(draft, lt, ls)?;
                let round = state.iteration + 1;
                let out = self
                    .call(Call { stage: Stage::Back, iteration: round, messages, rec }, Parsed::text(Stage::Back))
                    .await?;
                state.back_translation = Some(out);
                state.next = Next::Judge;
            }
            Next::Judge => {
                let back = state
                    .back_translation
                    .as_deref()
                    .ok_or(PipelineError::IllegalState("no back-translation"))?;
                let messages = t.render_judgment(&task.source_text, back, ls)?;
                let round = state.iteration + 1;
                let judgment = self
                    .call(Call { stage: Stage::Judge, iteration: round, messages, rec }, |raw| {
                        let (judgment, warning) = parse_judgment_fail_open(raw);
                        let summary = match &judgment {
                            JudgmentResult::Converged => "converged".to_string(),
                            JudgmentResult::Continue { .. } => "continue".to_string(),
                        };
                        Ok(Parsed { value: judgment, summary, warning })
                    })
                    .await?;
                state.iteration = round;
                state.next = match judgment {
                    JudgmentResult::Converged => {
                        Next::Extract(ExtractKind::Final(TerminationReason::Converged))
                    }
                    JudgmentResult::Continue { .. } if round >= self.config.max_iterations => {
                        Next::Extract(ExtractKind::Final(TerminationReason::IterationCapReached))
                    }
                    JudgmentResult::Continue { .. } => Next::Reflect,
                };
                state.last_judgment = Some(judgment);
            }
            Next::Reflect => {
                let back = state
                    .back_translation
                    .as_deref()
                    .ok_or(PipelineError::IllegalState("no back-translation"))?;
                let messages = t.render_reflection(back, &task.source_text)?;
                let reflection = self
                    .call(
                        Call { stage: Stage::Reflect, iteration: state.iteration, messages, rec },
                        |raw| {
                            let split = split_reflection(raw);
                            let summary = serde_json::to_string(&split).unwrap_or_default();
                            Ok(Parsed { value: split, summary, warning: None })
                        },
                    )
                    .await?;
                state.analysis = Some(reflection.analysis);
                state.suggestions = Some(reflection.suggestions);
                state.next = Next::Revise;
            }
            Next::Revise => {
                let messages = t.render_revision(
                    state.analysis.as_deref().unwrap_or_default(),
                    state.suggestions.as_deref().unwrap_or_default(),
                    &task.source_text,
                    ls,
                    lt,
                )?;
                let out = self
                    .call(
                        Call { stage: Stage::Revise, iteration: state.iteration, messages, rec },
                        Parsed::text(Stage::Revise),
                    )
                    .await?;
                state.draft = Some(out);
                state.next = if self.config.force_extraction_each_iteration {
                    Next::Extract(ExtractKind::Intermediate)
                } else {
                    Next::Back
                };
            }
            Next::Extract(kind) => {
                let draft = state.draft.clone().ok_or(PipelineError::IllegalState("no draft"))?;
                let messages = t.render_extraction(&draft)?;
                let strict = self.config.strict_extraction;
                let (translation, fell_back) = self
                    .call(
                        Call { stage: Stage::Extract, iteration: state.iteration, messages, rec },
                        |raw| match parse_final_translation(raw) {
                            Ok(found) => Ok(Parsed {
                                summary: found.final_translation.clone(),
                                value: (found.final_translation, false),
                                warning: None,
                            }),
                            Err(failure) if strict => {
                                Err(PipelineError::ExtractionFailed { raw: failure.raw })
                            }
                            Err(_) => Ok(Parsed {
                                summary: draft.clone(),
                                value: (draft.clone(), true),
                                warning: Some("extraction output unparseable; used latest draft".into()),
                            }),
                        },
                    )
                    .await?;
                state.fallback_used |= fell_back;
                match kind {
                    ExtractKind::Intermediate => {
                        state.intermediate_finals.push(IterationFinal {
                            iteration: state.iteration,
                            translation,
                        });
                        state.next = Next::Back;
                    }
                    ExtractKind::Final(reason) => {
                        state.final_translation = Some(translation);
                        state.termination = Some(reason);
                        state.terminated = true;
                        state.next = Next::Done;
                    }
                }
            }
        }
        Ok(state)
    }

    /// Issues one backend call, parses the reply and records the entry.
    /// A parse error is recorded before it is returned.
    async fn call<T>(
        &self,
        call: Call<'_>,
        parse: impl FnOnce(&str) -> Result<Parsed<T>, PipelineError>,
    ) -> Result<T, PipelineError> {
        let Call { stage, iteration, messages, rec } = call;
        let mut request = ChatRequest::new(self.config.model.clone(), messages, self.config.temperature)
            .with_stage(stage);
        request.max_output_tokens = self.config.max_output_tokens;
        request.stop = self.config.stop.clone();

        let started_at = Utc::now();
        let response = self.backend.complete(&request).await;
        let ended_at = Utc::now();

        let mut entry = TranscriptEntry {
            schema_version: SCHEMA_VERSION,
            run_id: rec.run_id.clone(),
            task_id: rec.task_id.clone(),
            seq: rec.entries.len() as u64,
            stage,
            iteration,
            rendered_prompt: request.messages,
            raw_output: String::new(),
            parsed_summary: None,
            usage: Usage::default(),
            started_at,
            ended_at,
            warnings: Vec::new(),
            error: None,
        };

        let ChatResponse { content, usage, attempts, .. } = match response {
            Ok(resp) => resp,
            Err(source) => {
                entry.error = Some(source.to_string());
                rec.record(entry)?;
                return Err(PipelineError::Backend { stage, source });
            }
        };
        entry.usage = usage;
        if attempts > 1 {
            entry.warnings.push(format!("succeeded after {attempts} attempts"));
        }
        let parsed = parse(&content);
        entry.raw_output = content;
        match parsed {
            Ok(parsed) => {
                entry.parsed_summary = Some(parsed.summary);
                entry.warnings.extend(parsed.warning);
                rec.record(entry)?;
                Ok(parsed.value)
            }
            Err(e) => {
                entry.error = Some(e.to_string());
                rec.record(entry)?;
                Err(e)
            }
        }
    }
}

struct Parsed<T> {
    value: T,
    summary: String,
    warning: Option<String>,
}

impl Parsed<String> {
    /// Plain text replies (drafts, back-translations, revisions). Blank
    /// replies are an error since the next stage needs real input.
    fn text(stage: Stage) -> impl FnOnce(&str) -> Result<Self, PipelineError> {
        move |raw| {
            let text = raw.trim();
            if text.is_empty() {
                return Err(PipelineError::EmptyOutput { stage });
            }
            Ok(Self {
                summary: text.to_string(),
                value: text.to_string(),
                warning: None,
            })
        }
    }
}

/// Runs the full loop with the built-in templates, keeping the transcript
/// in memory. The run id is the task id.
pub async fn run_pipeline(
    task: TranslationTask,
    config: RunConfig,
    backend: Arc<dyn Backend>,
) -> Result<PipelineResult, RunError> {
    run_with(task, config, backend, Mode::DualReflect).await
}

/// Draft plus extraction only.
pub async fn run_zero_shot(
    task: TranslationTask,
    config: RunConfig,
    backend: Arc<dyn Backend>,
) -> Result<PipelineResult, RunError> {
    run_with(task, config, backend, Mode::ZeroShot).await
}

async fn run_with(
    task: TranslationTask,
    config: RunConfig,
    backend: Arc<dyn Backend>,
    mode: Mode,
) -> Result<PipelineResult, RunError> {
    let rec = Recorder::for_task(&task);
    let pipeline = match Pipeline::new(backend, config) {
        Ok(p) => p,
        Err(e) => {
            return Err(RunError {
                error: e.into(),
                transcript: Vec::new(),
                usage: Usage::default(),
            })
        }
    };
    pipeline.run_mode(task, mode, rec).await
}
