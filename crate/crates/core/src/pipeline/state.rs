use serde::{Deserialize, Serialize};

use super::{Mode, TranslationTask};
use crate::extraction::JudgmentResult;
use crate::stage::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// The judgment said the back-translation matches the source.
    Converged,
    /// The last allowed judgment round still asked for changes.
    IterationCapReached,
    /// The run stopped on a backend error. Only appears in batch reports;
    /// a failed run returns an error rather than a result.
    BackendFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Next {
    Draft,
    Back,
    Judge,
    Reflect,
    Revise,
    Extract(ExtractKind),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ExtractKind {
    Final(TerminationReason),
    /// Per-round extraction in forced-extraction mode; the loop goes on.
    Intermediate,
}

/// A final translation extracted mid-run in forced-extraction mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationFinal {
    pub iteration: u32,
    pub translation: String,
}

/// The evolving state of one run. Advance it with
/// [`Pipeline::step`](super::Pipeline::step).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub task: TranslationTask,
    pub mode: Mode,
    /// Completed judgment rounds.
    pub iteration: u32,
    /// Latest candidate translation.
    pub draft: Option<String>,
    pub back_translation: Option<String>,
    pub analysis: Option<String>,
    pub suggestions: Option<String>,
    pub last_judgment: Option<JudgmentResult>,
    pub terminated: bool,
    pub final_translation: Option<String>,
    pub termination: Option<TerminationReason>,
    /// Extraction output was unusable and the latest draft was used instead.
    pub fallback_used: bool,
    pub intermediate_finals: Vec<IterationFinal>,
    pub(crate) next: Next,
}

impl PipelineState {
    pub(crate) fn new(task: TranslationTask, mode: Mode) -> Self {
        Self {
            task,
            mode,
            iteration: 0,
            draft: None,
            back_translation: None,
            analysis: None,
            suggestions: None,
            last_judgment: None,
            terminated: false,
            final_translation: None,
            termination: None,
            fallback_used: false,
            intermediate_finals: Vec::new(),
            next: Next::Draft,
        }
    }

    /// The stage the next `step` will run, or `None` once terminated.
    pub fn next_stage(&self) -> Option<Stage> {
        match self.next {
            Next::Draft => Some(Stage::Draft),
            Next::Back => Some(Stage::Back),
            Next::Judge => Some(Stage::Judge),
            Next::Reflect => Some(Stage::Reflect),
            Next::Revise => Some(Stage::Revise),
            Next::Extract(_) => Some(Stage::Extract),
            Next::Done => None,
        }
    }
}
