use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::resolution::{
    primary_majority, AgentSlot, FinalResolution, FinalVerdict, ResolutionVote, VoteVerdict,
};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionStats {
    pub total: usize,
    pub yes: usize,
    pub no: usize,
    pub annulled: usize,
    /// Questions where the three primaries were not unanimous.
    pub non_unanimous: usize,
    pub disagree_a_b: usize,
    pub disagree_a_c: usize,
    pub disagree_b_c: usize,
    pub tiebreak_calls: usize,
    /// Tiebreak calls where two primaries agreed.
    pub tiebreak_with_majority: usize,
    pub tiebreak_agrees_with_majority: usize,
    /// Absent when there was no tiebreak call with a primary majority.
    pub tiebreak_agreement_rate: Option<f64>,
    /// Annul votes cast, by slot.
    pub annul_votes_by_slot: BTreeMap<String, usize>,
    /// Final annulments, by the slot whose vote decided them.
    pub annulments_decided_by: BTreeMap<String, usize>,
    /// Yes share over all questions, annulled included.
    pub base_rate_all: f64,
    /// Yes share over yes/no questions.
    pub base_rate_resolved: Option<f64>,
}

/// Recomputes resolver statistics from the stored votes.
///
/// `votes` must hold exactly the votes embedded in `resolutions`.
pub fn resolution_stats(
    votes: &[ResolutionVote],
    resolutions: &[FinalResolution],
) -> Result<ResolutionStats, MetricsError> {
    let mut by_question: BTreeMap<(&str, AgentSlot), &ResolutionVote> = BTreeMap::new();
    for v in votes {
        if by_question.insert((&v.question_id, v.agent_slot), v).is_some() {
            return Err(MetricsError::MisalignedInputs(format!(
                "duplicate {} vote for {}",
                v.agent_slot.as_str(),
                v.question_id
            )));
        }
    }
    let embedded: usize = resolutions.iter().map(|r| r.votes.len()).sum();
    if embedded != votes.len() {
        return Err(MetricsError::MisalignedInputs(format!(
            "{} votes on file, {} referenced by resolutions",
            votes.len(),
            embedded
        )));
    }
    for r in resolutions {
        for v in &r.votes {
            match by_question.get(&(v.question_id.as_str(), v.agent_slot)) {
                Some(stored) if *stored == v && v.question_id == r.question_id => {}
                _ => {
                    return Err(MetricsError::MisalignedInputs(format!(
                        "vote {} for {} does not match votes file",
                        v.agent_slot.as_str(),
                        r.question_id
                    )))
                }
            }
        }
    }

    let mut s = ResolutionStats {
        total: resolutions.len(),
        yes: 0,
        no: 0,
        annulled: 0,
        non_unanimous: 0,
        disagree_a_b: 0,
        disagree_a_c: 0,
        disagree_b_c: 0,
        tiebreak_calls: 0,
        tiebreak_with_majority: 0,
        tiebreak_agrees_with_majority: 0,
        tiebreak_agreement_rate: None,
        annul_votes_by_slot: BTreeMap::new(),
        annulments_decided_by: BTreeMap::new(),
        base_rate_all: 0.0,
        base_rate_resolved: None,
    };
    for r in resolutions {
        match r.verdict {
            FinalVerdict::Yes => s.yes += 1,
            FinalVerdict::No => s.no += 1,
            FinalVerdict::Annulled => s.annulled += 1,
        }
        let slot_vote = |slot| r.votes.iter().find(|v| v.agent_slot == slot);
        let primaries: Vec<&ResolutionVote> = AgentSlot::PRIMARIES
            .iter()
            .filter_map(|slot| slot_vote(*slot))
            .collect();
        if primaries.len() != 3 {
            return Err(MetricsError::MisalignedInputs(format!(
                "{} has {} primary votes",
                r.question_id,
                primaries.len()
            )));
        }
        let (a, b, c) = (primaries[0].verdict, primaries[1].verdict, primaries[2].verdict);
        s.disagree_a_b += usize::from(a != b);
        s.disagree_a_c += usize::from(a != c);
        s.disagree_b_c += usize::from(b != c);
        if !(a == b && b == c) {
            s.non_unanimous += 1;
        }
        for v in &r.votes {
            if v.verdict == VoteVerdict::Annul {
                *s.annul_votes_by_slot
                    .entry(v.agent_slot.as_str().to_string())
                    .or_default() += 1;
            }
        }
        if let Some(tb) = slot_vote(AgentSlot::Tiebreak) {
            s.tiebreak_calls += 1;
            let owned: Vec<ResolutionVote> = primaries.iter().map(|v| (*v).clone()).collect();
            if let Some(majority) = primary_majority(&owned) {
                s.tiebreak_with_majority += 1;
                s.tiebreak_agrees_with_majority += usize::from(tb.verdict == majority);
            }
        }
        if r.verdict == FinalVerdict::Annulled {
            let label = if slot_vote(AgentSlot::Tiebreak).is_some() {
                "tiebreak"
            } else {
                "primaries"
            };
            *s.annulments_decided_by.entry(label.to_string()).or_default() += 1;
        }
    }
    if s.tiebreak_with_majority > 0 {
        s.tiebreak_agreement_rate =
            Some(s.tiebreak_agrees_with_majority as f64 / s.tiebreak_with_majority as f64);
    }
    if s.total > 0 {
        s.base_rate_all = s.yes as f64 / s.total as f64;
    }
    if s.yes + s.no > 0 {
        s.base_rate_resolved = Some(s.yes as f64 / (s.yes + s.no) as f64);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolution::{settle, unanimous, Adjudication};

    fn vote(q: &str, slot: AgentSlot, verdict: VoteVerdict) -> ResolutionVote {
        ResolutionVote {
            question_id: q.into(),
            agent_slot: slot,
            verdict,
            derivation: "d".into(),
            weaknesses: String::new(),
            transcript_ref: String::new(),
        }
    }

    fn resolve(q: &str, p: [VoteVerdict; 3], tb: Option<VoteVerdict>) -> FinalResolution {
        let prims = [
            vote(q, AgentSlot::PrimaryA, p[0]),
            vote(q, AgentSlot::PrimaryB, p[1]),
            vote(q, AgentSlot::PrimaryC, p[2]),
        ];
        match unanimous(&prims).unwrap() {
            Some(r) => r,
            None => settle(
                &prims,
                vote(q, AgentSlot::Tiebreak, tb.expect("tiebreak needed")),
                Adjudication::TiebreakFinal,
            )
            .unwrap(),
        }
    }

    fn all_votes(rs: &[FinalResolution]) -> Vec<ResolutionVote> {
        rs.iter().flat_map(|r| r.votes.clone()).collect()
    }

    use VoteVerdict::*;

    #[test]
    fn all_unanimous_has_no_agreement_rate() {
        let rs = vec![resolve("q1", [Yes, Yes, Yes], None), resolve("q2", [No, No, No], None)];
        let s = resolution_stats(&all_votes(&rs), &rs).unwrap();
        assert_eq!(s.tiebreak_calls, 0);
        assert_eq!(s.tiebreak_agreement_rate, None);
        assert_eq!(s.non_unanimous, 0);
        assert_eq!(s.base_rate_all, 0.5);
    }

    #[test]
    fn single_tiebreak_agreeing_with_majority() {
        let rs = vec![resolve("q1", [Yes, No, Yes], Some(Yes))];
        let s = resolution_stats(&all_votes(&rs), &rs).unwrap();
        assert_eq!(s.tiebreak_agreement_rate, Some(1.0));
        assert_eq!((s.disagree_a_b, s.disagree_a_c, s.disagree_b_c), (1, 0, 1));
    }

    #[test]
    fn annulment_provenance() {
        let rs = vec![resolve("q1", [Yes, No, Yes], Some(Annul))];
        let s = resolution_stats(&all_votes(&rs), &rs).unwrap();
        assert_eq!(s.annulled, 1);
        assert_eq!(s.annul_votes_by_slot.get("tiebreak"), Some(&1));
        assert_eq!(s.annulments_decided_by.get("tiebreak"), Some(&1));
        assert_eq!(s.base_rate_resolved, None);
    }

    #[test]
    fn votes_must_match_resolutions() {
        let rs = vec![resolve("q1", [Yes, Yes, Yes], None)];
        let mut votes = all_votes(&rs);
        votes.pop();
        assert!(resolution_stats(&votes, &rs).is_err());
        let mut votes = all_votes(&rs);
        votes[0].verdict = No;
        assert!(resolution_stats(&votes, &rs).is_err());
    }
}
