use crate::stage::Stage;

/// Checks a finished run's stage sequence.
///
/// Dual-reflect runs must read `Draft (Back Judge (Reflect Revise)?)+ Extract`;
/// with forced extraction every `Revise` is followed by an `Extract`.
/// Zero-shot runs are exactly `Draft Extract`.
pub fn is_valid_stage_order(stages: &[Stage], force_extraction: bool) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum S {
        Start,
        Drafted,
        Backed,
        Judged,
        Reflected,
        Revised,
        Checked,
        Ended,
    }
    let mut state = S::Start;
    for &stage in stages {
        state = match (state, stage) {
            (S::Start, Stage::Draft) => S::Drafted,
            (S::Drafted | S::Judged | S::Checked, Stage::Back) => S::Backed,
            (S::Revised, Stage::Back) if !force_extraction => S::Backed,
            (S::Backed, Stage::Judge) => S::Judged,
            (S::Judged, Stage::Reflect) => S::Reflected,
            (S::Reflected, Stage::Revise) => S::Revised,
            (S::Revised, Stage::Extract) if force_extraction => S::Checked,
            (S::Judged, Stage::Extract) => S::Ended,
            _ => return false,
        };
    }
    state == S::Ended
}

pub fn is_zero_shot_order(stages: &[Stage]) -> bool {
    stages == [Stage::Draft, Stage::Extract]
}

/// One letter per stage, e.g. `DBJFRBJE`.
pub fn stage_word(stages: impl IntoIterator<Item = Stage>) -> String {
    stages.into_iter().map(Stage::letter).collect()
}
