//! Verifier verdicts and the pass/fail gate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Forecast-verifier probabilities (0..100 scale) strictly below this are trivial.
pub const TRIVIAL_LOW: f64 = 2.0;
/// Forecast-verifier probabilities strictly above this are trivial.
pub const TRIVIAL_HIGH: f64 = 98.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Quality,
    Ambiguity,
    Resolvability,
    Forecast,
}

impl VerdictKind {
    pub const ALL: [VerdictKind; 4] = [
        VerdictKind::Quality,
        VerdictKind::Ambiguity,
        VerdictKind::Resolvability,
        VerdictKind::Forecast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Quality => "quality",
            VerdictKind::Ambiguity => "ambiguity",
            VerdictKind::Resolvability => "resolvability",
            VerdictKind::Forecast => "forecast",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four-point scale used by the quality and ambiguity verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLabel {
    Bad,
    Meh,
    Good,
    Great,
}

impl QualityLabel {
    pub const ALL: [QualityLabel; 4] = [
        QualityLabel::Bad,
        QualityLabel::Meh,
        QualityLabel::Good,
        QualityLabel::Great,
    ];
    pub const LABELS: [&'static str; 4] = ["bad", "meh", "good", "great"];

    pub fn as_str(self) -> &'static str {
        Self::LABELS[self as usize]
    }
}

impl FromStr for QualityLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::LABELS
            .iter()
            .position(|l| *l == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Scale used by the automated-resolvability verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvabilityLabel {
    VeryCertainlyNo,
    ProbablyNo,
    ProbablyYes,
    VeryCertainlyYes,
}

impl ResolvabilityLabel {
    pub const ALL: [ResolvabilityLabel; 4] = [
        ResolvabilityLabel::VeryCertainlyNo,
        ResolvabilityLabel::ProbablyNo,
        ResolvabilityLabel::ProbablyYes,
        ResolvabilityLabel::VeryCertainlyYes,
    ];
    pub const LABELS: [&'static str; 4] = [
        "very certainly no",
        "probably no",
        "probably yes",
        "very certainly yes",
    ];

    pub fn as_str(self) -> &'static str {
        Self::LABELS[self as usize]
    }
}

impl FromStr for ResolvabilityLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::LABELS
            .iter()
            .position(|l| *l == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub String);

/// One verifier's rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", content = "value", rename_all = "snake_case")]
pub enum Rating {
    Quality(QualityLabel),
    Resolvability(ResolvabilityLabel),
    /// Probability on the 0..100 scale.
    Forecast(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub question_id: String,
    pub kind: VerdictKind,
    pub rating: Rating,
    pub rationale: String,
    pub transcript_ref: String,
}

impl Verdict {
    /// Checks that the rating scale matches the verdict kind.
    pub fn is_consistent(&self) -> bool {
        match (self.kind, self.rating) {
            (VerdictKind::Quality | VerdictKind::Ambiguity, Rating::Quality(_)) => true,
            (VerdictKind::Resolvability, Rating::Resolvability(_)) => true,
            (VerdictKind::Forecast, Rating::Forecast(p)) => (0.0..=100.0).contains(&p),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub question_id: String,
    pub passed: bool,
    pub trivial_flag: bool,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("missing {0} verdict")]
    MissingVerdict(VerdictKind),
    #[error("duplicate {0} verdict")]
    DuplicateVerdict(VerdictKind),
    #[error("verdicts refer to different questions ({0} vs {1})")]
    MixedQuestions(String, String),
    #[error("{0} verdict carries a rating on the wrong scale")]
    WrongScale(VerdictKind),
}

/// The pure gating rule.
///
/// A question passes iff quality and ambiguity are both `great` and
/// resolvability is `very certainly yes`. The forecast verifier never blocks a
/// question; it only raises the triviality flag outside `[2, 98]`.
pub fn gate_flags(
    quality: QualityLabel,
    ambiguity: QualityLabel,
    resolvability: ResolvabilityLabel,
    forecast_pct: f64,
) -> (bool, bool) {
    let passed = quality == QualityLabel::Great
        && ambiguity == QualityLabel::Great
        && resolvability == ResolvabilityLabel::VeryCertainlyYes;
    let trivial = !(TRIVIAL_LOW..=TRIVIAL_HIGH).contains(&forecast_pct);
    (passed, trivial)
}

/// Applies the gate to exactly one verdict of each kind. Arrival order is irrelevant;
/// the stored verdicts are sorted by kind.
pub fn apply_gate(verdicts: Vec<Verdict>) -> Result<GateResult, GateError> {
    let mut slots: [Option<Verdict>; 4] = Default::default();
    let mut question_id: Option<String> = None;
    for v in verdicts {
        match &question_id {
            None => question_id = Some(v.question_id.clone()),
            Some(id) if *id != v.question_id => {
                return Err(GateError::MixedQuestions(id.clone(), v.question_id.clone()))
            }
            _ => {}
        }
        if !v.is_consistent() {
            return Err(GateError::WrongScale(v.kind));
        }
        let slot = &mut slots[v.kind as usize];
        if slot.is_some() {
            return Err(GateError::DuplicateVerdict(v.kind));
        }
        *slot = Some(v);
    }
    let mut ordered = Vec::with_capacity(4);
    for (kind, slot) in VerdictKind::ALL.iter().zip(slots) {
        ordered.push(slot.ok_or(GateError::MissingVerdict(*kind))?);
    }
    let label = |i: usize| match ordered[i].rating {
        Rating::Quality(l) => l,
        _ => unreachable!("scale checked above"),
    };
    let resolvability = match ordered[2].rating {
        Rating::Resolvability(l) => l,
        _ => unreachable!("scale checked above"),
    };
    let forecast = match ordered[3].rating {
        Rating::Forecast(p) => p,
        _ => unreachable!("scale checked above"),
    };
    let (passed, trivial_flag) = gate_flags(label(0), label(1), resolvability, forecast);
    Ok(GateResult {
        question_id: question_id.expect("four verdicts present"),
        passed,
        trivial_flag,
        verdicts: ordered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(kind: VerdictKind, rating: Rating) -> Verdict {
        Verdict {
            question_id: "q_x".into(),
            kind,
            rating,
            rationale: String::new(),
            transcript_ref: String::new(),
        }
    }

    fn four(q: QualityLabel, a: QualityLabel, r: ResolvabilityLabel, f: f64) -> Vec<Verdict> {
        vec![
            verdict(VerdictKind::Quality, Rating::Quality(q)),
            verdict(VerdictKind::Ambiguity, Rating::Quality(a)),
            verdict(VerdictKind::Resolvability, Rating::Resolvability(r)),
            verdict(VerdictKind::Forecast, Rating::Forecast(f)),
        ]
    }

    use QualityLabel::*;
    use ResolvabilityLabel::*;

    #[test]
    fn great_great_certain_passes() {
        let g = apply_gate(four(Great, Great, VeryCertainlyYes, 50.0)).unwrap();
        assert!(g.passed);
        assert!(!g.trivial_flag);
    }

    #[test]
    fn good_quality_fails() {
        let g = apply_gate(four(Good, Great, VeryCertainlyYes, 50.0)).unwrap();
        assert!(!g.passed);
    }

    #[test]
    fn trivial_questions_pass_but_are_flagged() {
        let g = apply_gate(four(Great, Great, VeryCertainlyYes, 1.0)).unwrap();
        assert!(g.passed);
        assert!(g.trivial_flag);
    }

    #[test]
    fn boundaries_are_not_trivial() {
        assert!(!gate_flags(Great, Great, VeryCertainlyYes, 2.0).1);
        assert!(!gate_flags(Great, Great, VeryCertainlyYes, 98.0).1);
        assert!(gate_flags(Great, Great, VeryCertainlyYes, 98.5).1);
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let mut vs = four(Great, Great, VeryCertainlyYes, 99.0);
        let a = apply_gate(vs.clone()).unwrap();
        vs.reverse();
        let b = apply_gate(vs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_and_duplicate_verdicts_are_errors() {
        let mut vs = four(Great, Great, VeryCertainlyYes, 50.0);
        vs.pop();
        assert_eq!(
            apply_gate(vs.clone()),
            Err(GateError::MissingVerdict(VerdictKind::Forecast))
        );
        vs.push(verdict(VerdictKind::Quality, Rating::Quality(Great)));
        assert_eq!(
            apply_gate(vs),
            Err(GateError::DuplicateVerdict(VerdictKind::Quality))
        );
    }

    #[test]
    fn wrong_scale_is_rejected() {
        let mut vs = four(Great, Great, VeryCertainlyYes, 50.0);
        vs[0].rating = Rating::Forecast(50.0);
        assert_eq!(apply_gate(vs), Err(GateError::WrongScale(VerdictKind::Quality)));
    }

    #[test]
    fn labels_parse_from_canonical_text() {
        assert_eq!("great".parse::<QualityLabel>(), Ok(Great));
        assert_eq!(
            "very certainly yes".parse::<ResolvabilityLabel>(),
            Ok(VeryCertainlyYes)
        );
        assert!("excellent".parse::<QualityLabel>().is_err());
    }
}
