//! Accuracy bookkeeping for annotated expansions.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Annotation verdicts: fully grounded, or one of the error categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accurate,
    InaccurateDetail,
    MissingContent,
    Other,
}

impl Verdict {
    pub const ALL: [Verdict; 4] =
        [Verdict::Accurate, Verdict::InaccurateDetail, Verdict::MissingContent, Verdict::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accurate => "accurate",
            Verdict::InaccurateDetail => "inaccurate_detail",
            Verdict::MissingContent => "missing_content",
            Verdict::Other => "other",
        }
    }

    /// Accepts the full name or its first letter.
    pub fn parse(text: &str) -> Option<Verdict> {
        match text.trim().to_ascii_lowercase().as_str() {
            "a" | "accurate" => Some(Verdict::Accurate),
            "i" | "inaccurate_detail" => Some(Verdict::InaccurateDetail),
            "m" | "missing_content" => Some(Verdict::MissingContent),
            "o" | "other" => Some(Verdict::Other),
            _ => None,
        }
    }
}

/// One created expansion as written to the expansion log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedExpansion {
    pub tree_id: String,
    pub node_id: String,
    pub paper_id: String,
    /// `define`, `expand`, `why`, `suggested` or `custom`.
    pub kind: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub expansion: LoggedExpansion,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub total: usize,
    pub accurate: usize,
    pub inaccurate_detail: usize,
    pub missing_content: usize,
    pub other: usize,
}

impl AccuracyReport {
    pub fn from_verdicts(verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        let mut r = AccuracyReport::default();
        for v in verdicts {
            r.total += 1;
            match v {
                Verdict::Accurate => r.accurate += 1,
                Verdict::InaccurateDetail => r.inaccurate_detail += 1,
                Verdict::MissingContent => r.missing_content += 1,
                Verdict::Other => r.other += 1,
            }
        }
        r
    }

    pub fn count(&self, v: Verdict) -> usize {
        match v {
            Verdict::Accurate => self.accurate,
            Verdict::InaccurateDetail => self.inaccurate_detail,
            Verdict::MissingContent => self.missing_content,
            Verdict::Other => self.other,
        }
    }

    /// `accurate / total`, or `None` with no annotations.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.accurate as f64 / self.total as f64)
    }

    pub fn rate(&self, v: Verdict) -> Option<f64> {
        (self.total > 0).then(|| self.count(v) as f64 / self.total as f64)
    }
}

/// Groups log entries by question kind, keeping only the requested kinds,
/// in the order given.
pub fn stratify<'a>(entries: &'a [LoggedExpansion], kinds: &[&str]) -> Vec<Vec<&'a LoggedExpansion>> {
    kinds
        .iter()
        .map(|k| entries.iter().filter(|e| e.kind == *k).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::iter::repeat_n;

    #[test]
    fn reported_rate_arithmetic() {
        let verdicts = repeat_n(Verdict::Accurate, 105)
            .chain(repeat_n(Verdict::InaccurateDetail, 7))
            .chain(repeat_n(Verdict::MissingContent, 8));
        let r = AccuracyReport::from_verdicts(verdicts);
        assert_eq!(r.total, 120);
        assert_eq!(r.accuracy(), Some(0.875));
        assert!((r.rate(Verdict::InaccurateDetail).unwrap() - 0.058_333).abs() < 1e-5);
    }

    #[test]
    fn empty_has_no_rate() {
        assert_eq!(AccuracyReport::default().accuracy(), None);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(Verdict::parse("A"), Some(Verdict::Accurate));
        assert_eq!(Verdict::parse("missing_content"), Some(Verdict::MissingContent));
        assert_eq!(Verdict::parse("maybe"), None);
    }
}
