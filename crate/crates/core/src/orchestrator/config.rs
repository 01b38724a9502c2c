use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::midlevel::PlanError;

pub const DEFAULT_MAX_REPLANS: u32 = 5;
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

/// How much of the error/reason/suggestion triplet reaches the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeedbackLevel {
    WhatOnly,
    WhatWhy,
    WhatWhyHow,
}

impl FeedbackLevel {
    pub const ALL: [FeedbackLevel; 3] = [FeedbackLevel::WhatOnly, FeedbackLevel::WhatWhy, FeedbackLevel::WhatWhyHow];

    pub fn index(self) -> u8 {
        self as u8
    }
}

/// Renders `Error: <what>, Reason: <why>, Suggestion: <how>.` truncated to `level`.
pub fn format_feedback(err: &PlanError, level: FeedbackLevel) -> String {
    let mut out = format!("Error: {}", err.what);
    if level >= FeedbackLevel::WhatWhy {
        out.push_str(", Reason: ");
        out.push_str(&err.why);
    }
    if level >= FeedbackLevel::WhatWhyHow {
        out.push_str(", Suggestion: ");
        out.push_str(&err.how);
    }
    out.push('.');
    out
}

/// A feedback message split back into its segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFeedback {
    pub what: String,
    pub why: Option<String>,
    pub how: Option<String>,
}

impl ParsedFeedback {
    pub fn level(&self) -> FeedbackLevel {
        match (&self.why, &self.how) {
            (_, Some(_)) => FeedbackLevel::WhatWhyHow,
            (Some(_), None) => FeedbackLevel::WhatWhy,
            _ => FeedbackLevel::WhatOnly,
        }
    }
}

/// Inverse of [`format_feedback`] for messages it produced.
pub fn parse_feedback(text: &str) -> Option<ParsedFeedback> {
    let body = text.trim().strip_prefix("Error: ")?.strip_suffix('.')?;
    let (rest, how) = match body.split_once(", Suggestion: ") {
        Some((a, b)) => (a, Some(b.to_string())),
        None => (body, None),
    };
    let (what, why) = match rest.split_once(", Reason: ") {
        Some((a, b)) => (a, Some(b.to_string())),
        None => (rest, None),
    };
    Some(ParsedFeedback {
        what: what.to_string(),
        why,
        how,
    })
}

/// One of the eight configurations of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfigSymbol {
    BL,
    M,
    H0,
    H1,
    H2,
    MH0,
    MH1,
    MH2,
}

impl ConfigSymbol {
    pub const ALL: [ConfigSymbol; 8] = [
        ConfigSymbol::BL,
        ConfigSymbol::M,
        ConfigSymbol::H0,
        ConfigSymbol::H1,
        ConfigSymbol::H2,
        ConfigSymbol::MH0,
        ConfigSymbol::MH1,
        ConfigSymbol::MH2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigSymbol::BL => "BL",
            ConfigSymbol::M => "M",
            ConfigSymbol::H0 => "H0",
            ConfigSymbol::H1 => "H1",
            ConfigSymbol::H2 => "H2",
            ConfigSymbol::MH0 => "MH0",
            ConfigSymbol::MH1 => "MH1",
            ConfigSymbol::MH2 => "MH2",
        }
    }

    pub fn midlevel(self) -> bool {
        matches!(self, ConfigSymbol::M | ConfigSymbol::MH0 | ConfigSymbol::MH1 | ConfigSymbol::MH2)
    }

    pub fn highlevel(self) -> bool {
        !matches!(self, ConfigSymbol::BL | ConfigSymbol::M)
    }

    pub fn feedback_level(self) -> FeedbackLevel {
        match self {
            ConfigSymbol::H0 | ConfigSymbol::MH0 => FeedbackLevel::WhatOnly,
            ConfigSymbol::H1 | ConfigSymbol::MH1 => FeedbackLevel::WhatWhy,
            _ => FeedbackLevel::WhatWhyHow,
        }
    }
}

impl fmt::Display for ConfigSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown configuration '{0}' (expected one of BL, M, H0, H1, H2, MH0, MH1, MH2)")]
pub struct UnknownConfig(pub String);

impl FromStr for ConfigSymbol {
    type Err = UnknownConfig;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigSymbol::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownConfig(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub midlevel_repair_enabled: bool,
    pub highlevel_replan_enabled: bool,
    pub feedback_level: FeedbackLevel,
    pub max_replans: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl EngineConfig {
    pub fn preset(symbol: ConfigSymbol, seed: u64) -> Self {
        EngineConfig {
            midlevel_repair_enabled: symbol.midlevel(),
            highlevel_replan_enabled: symbol.highlevel(),
            feedback_level: symbol.feedback_level(),
            max_replans: DEFAULT_MAX_REPLANS,
            temperature: DEFAULT_TEMPERATURE,
            seed,
        }
    }

    /// The grid symbol this configuration corresponds to.
    pub fn symbol(&self) -> ConfigSymbol {
        let level = self.feedback_level;
        match (self.midlevel_repair_enabled, self.highlevel_replan_enabled) {
            (false, false) => ConfigSymbol::BL,
            (true, false) => ConfigSymbol::M,
            (m, true) => {
                let i = level.index();
                match (m, i) {
                    (false, 0) => ConfigSymbol::H0,
                    (false, 1) => ConfigSymbol::H1,
                    (false, _) => ConfigSymbol::H2,
                    (true, 0) => ConfigSymbol::MH0,
                    (true, 1) => ConfigSymbol::MH1,
                    (true, _) => ConfigSymbol::MH2,
                }
            }
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::preset(ConfigSymbol::MH2, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midlevel::ErrorKind;

    fn olives() -> PlanError {
        PlanError::unrecoverable(
            ErrorKind::Physical,
            &"get black_olives fridge".parse().unwrap(),
            "obstacle salt is blocking black_olives",
            "first move salt somewhere else, then retry",
        )
    }

    #[test]
    fn template_levels() {
        let e = olives();
        assert_eq!(
            format_feedback(&e, FeedbackLevel::WhatWhyHow),
            "Error: get black_olives fridge, Reason: obstacle salt is blocking black_olives, Suggestion: first move salt somewhere else, then retry."
        );
        assert_eq!(format_feedback(&e, FeedbackLevel::WhatOnly), "Error: get black_olives fridge.");
        let h1 = format_feedback(&e, FeedbackLevel::WhatWhy);
        assert!(h1.contains("Reason:") && !h1.contains("Suggestion:"));
    }

    #[test]
    fn parse_inverts_format() {
        let e = olives();
        for level in FeedbackLevel::ALL {
            let p = parse_feedback(&format_feedback(&e, level)).unwrap();
            assert_eq!(p.level(), level);
            assert_eq!(p.what, e.what);
        }
    }

    #[test]
    fn presets_round_trip_symbols() {
        for s in ConfigSymbol::ALL {
            assert_eq!(EngineConfig::preset(s, 1).symbol(), s);
            assert_eq!(s.as_str().parse::<ConfigSymbol>(), Ok(s));
        }
        assert!("MH3".parse::<ConfigSymbol>().is_err());
        let c = EngineConfig::default();
        assert_eq!((c.max_replans, c.temperature), (5, 0.8));
    }
}
