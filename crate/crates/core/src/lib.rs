//! Self-reflective machine translation driven by back-translation.
//!
//! A [`Pipeline`] drafts a translation, back-translates it into the source
//! language, and lets the model compare the two. While the judge still sees
//! differences, the model analyses them and revises the draft. Every model
//! call goes through a [`Backend`] and is recorded in a transcript.
//!
//! Modules:
//! - [`prompts`]: stage templates and rendering
//! - [`extraction`]: parsing judgment and final-translation replies
//! - [`backend`]: HTTP and scripted chat-completion backends
//! - [`pipeline`]: the state machine and run driver
//! - [`transcript`]: durable JSONL run logs
//! - [`metrics`]: chrF, feedback disparity, improvement and correlation
//! - [`cli`]: batch runner, analysis report and the command-line front end
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod backend;
pub mod cli;
pub mod extraction;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod stage;
pub mod transcript;

pub use backend::{Backend, HttpBackend, HttpConfig, ScriptedBackend};
pub use pipeline::{
    run_pipeline, run_zero_shot, Mode, Pipeline, PipelineResult, PipelineState, Recorder, RunConfig,
    TerminationReason, TranslationTask,
};
pub use stage::Stage;
