use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the six kinds of backend call the engine issues.
///
/// Draft, back-translation, reflection and revision map directly onto the
/// translation stages. The assessment agent has two modes and each gets its
/// own label: `Judge` decides whether the loop continues and `Extract` pulls
/// the final translation out of free-form output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Draft,
    Back,
    Judge,
    Reflect,
    Revise,
    Extract,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Draft,
        Stage::Back,
        Stage::Judge,
        Stage::Extract,
        Stage::Reflect,
        Stage::Revise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Draft => "draft",
            Stage::Back => "back",
            Stage::Judge => "judge",
            Stage::Reflect => "reflect",
            Stage::Revise => "revise",
            Stage::Extract => "extract",
        }
    }

    /// Single-letter code used when checking stage orderings.
    pub fn letter(self) -> char {
        match self {
            Stage::Draft => 'D',
            Stage::Back => 'B',
            Stage::Judge => 'J',
            Stage::Reflect => 'F',
            Stage::Revise => 'R',
            Stage::Extract => 'E',
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage name `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for Stage {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let stage = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "draft" | "draft_translation" => Stage::Draft,
            "back" | "back_translation" => Stage::Back,
            "judge" | "judgment" | "judgement" => Stage::Judge,
            "extract" | "extraction" | "pattern_extraction" => Stage::Extract,
            "reflect" | "reflection" | "dual_reflection" => Stage::Reflect,
            "revise" | "revision" | "auto_revision" => Stage::Revise,
            _ => return Err(UnknownStage(s.to_string())),
        };
        Ok(stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_aliases() {
        assert_eq!("Judgment".parse::<Stage>().unwrap(), Stage::Judge);
        assert_eq!("back-translation".parse::<Stage>().unwrap(), Stage::Back);
        assert_eq!("revision".parse::<Stage>().unwrap(), Stage::Revise);
        assert!("review".parse::<Stage>().is_err());
        for stage in Stage::ALL {
            assert_eq!(stage.as_str().parse::<Stage>().unwrap(), stage);
        }
    }
}
