//! Analysis flags carried alongside results instead of aborting.
//!
//! The pipeline is built to keep going on partial recovery; flags record what
//! was degraded so downstream consumers (and reports) can tell exact results
//! from conservative ones.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// Trailing push ran past end of code; zero padded.
    TruncatedPush,
    /// Bytecode contains opcodes from forks later than Shanghai.
    VersionWarning,
    /// Jump resolution hit its pass budget; CFG may miss edges.
    Incomplete,
    /// Stack heights disagreed at a join; affected values are opaque.
    StackMismatch,
    /// No canonical selector dispatcher found despite calldata-driven branching.
    DispatchAtypical,
    /// Transfer value operand not statically known; included conservatively.
    ValueUnknown,
    /// SELFDESTRUCT balance sweep counted as a transfer site.
    Sweep,
    /// Contract has no transfer sites; feature vector is the flagged zero vector.
    NoTransfer,
    /// A feature had zero corpus deviation; its z term was clamped.
    DegenerateSigma,
    /// External log classifier unreachable; heuristic verdicts used.
    F7HeuristicOnly,
    /// Unresolved jumps may hide deeper nesting; F4 is a floor.
    F4Floor,
    /// Logistic fit stopped at the iteration cap before the gradient target.
    NoConvergence,
    /// A metric denominator was zero and the value reported as 0.
    ZeroDenominator,
    /// Input was empty; result is a placeholder.
    EmptyInput,
    /// Per-contract analysis aborted at the time budget.
    BudgetExceeded,
    /// Bytecode failed to decode.
    DecodeError,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::TruncatedPush => "truncated-push",
            Flag::VersionWarning => "version-warning",
            Flag::Incomplete => "incomplete",
            Flag::StackMismatch => "stack-mismatch",
            Flag::DispatchAtypical => "dispatch-atypical",
            Flag::ValueUnknown => "value-unknown",
            Flag::Sweep => "sweep",
            Flag::NoTransfer => "no-transfer",
            Flag::DegenerateSigma => "degenerate-sigma",
            Flag::F7HeuristicOnly => "f7-heuristic-only",
            Flag::F4Floor => "f4-floor",
            Flag::NoConvergence => "no-convergence",
            Flag::ZeroDenominator => "zero-denominator",
            Flag::EmptyInput => "empty-input",
            Flag::BudgetExceeded => "budget-exceeded",
            Flag::DecodeError => "decode-error",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            Flag::TruncatedPush,
            Flag::VersionWarning,
            Flag::Incomplete,
            Flag::StackMismatch,
            Flag::DispatchAtypical,
            Flag::ValueUnknown,
            Flag::Sweep,
            Flag::NoTransfer,
            Flag::DegenerateSigma,
            Flag::F7HeuristicOnly,
            Flag::F4Floor,
            Flag::NoConvergence,
            Flag::ZeroDenominator,
            Flag::EmptyInput,
            Flag::BudgetExceeded,
            Flag::DecodeError,
        ];
        all.into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown flag {s:?}"))
    }
}

pub type FlagSet = BTreeSet<Flag>;

/// Render a flag set as a stable `;`-separated token list (empty string for none).
pub fn render_flags(flags: &FlagSet) -> String {
    flags
        .iter()
        .map(Flag::as_str)
        .collect::<Vec<_>>()
        .join(";")
}

/// Parse the `;`-separated form produced by [`render_flags`]. Unknown tokens
/// are dropped rather than erroring so newer reports stay readable.
pub fn parse_flags(s: &str) -> FlagSet {
    s.split(';')
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_tokens() {
        let mut set = FlagSet::new();
        set.insert(Flag::Sweep);
        set.insert(Flag::ValueUnknown);
        let text = render_flags(&set);
        assert_eq!(text, "value-unknown;sweep");
        assert_eq!(parse_flags(&text), set);
        assert_eq!(render_flags(&FlagSet::new()), "");
    }
}
