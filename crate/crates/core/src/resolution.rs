//! Resolver votes and ensemble adjudication.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentSlot {
    PrimaryA,
    PrimaryB,
    PrimaryC,
    Tiebreak,
}

impl AgentSlot {
    pub const PRIMARIES: [AgentSlot; 3] =
        [AgentSlot::PrimaryA, AgentSlot::PrimaryB, AgentSlot::PrimaryC];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentSlot::PrimaryA => "primary_a",
            AgentSlot::PrimaryB => "primary_b",
            AgentSlot::PrimaryC => "primary_c",
            AgentSlot::Tiebreak => "tiebreak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteVerdict {
    Yes,
    No,
    Annul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Yes,
    No,
    Annulled,
}

impl From<VoteVerdict> for FinalVerdict {
    fn from(v: VoteVerdict) -> Self {
        match v {
            VoteVerdict::Yes => FinalVerdict::Yes,
            VoteVerdict::No => FinalVerdict::No,
            VoteVerdict::Annul => FinalVerdict::Annulled,
        }
    }
}

impl FinalVerdict {
    /// Binary outcome, `None` when annulled.
    pub fn outcome(self) -> Option<bool> {
        match self {
            FinalVerdict::Yes => Some(true),
            FinalVerdict::No => Some(false),
            FinalVerdict::Annulled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionVote {
    pub question_id: String,
    pub agent_slot: AgentSlot,
    pub verdict: VoteVerdict,
    pub derivation: String,
    #[serde(default)]
    pub weaknesses: String,
    pub transcript_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unanimous,
    Tiebreak,
    Plurality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalResolution {
    pub question_id: String,
    pub verdict: FinalVerdict,
    pub method: Method,
    pub votes: Vec<ResolutionVote>,
}

/// How a non-unanimous primary vote is settled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    /// The tiebreaker's verdict is final.
    #[default]
    TiebreakFinal,
    /// Plurality over all four votes; a 2-2 split goes to the tiebreaker.
    Plurality4,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdjudicationError {
    #[error("expected votes for primary_a, primary_b, primary_c in order")]
    BadPrimaries,
    #[error("tiebreak vote must come from the tiebreak slot")]
    BadTiebreak,
    #[error("votes refer to different questions")]
    MixedQuestions,
}

fn check_primaries(primaries: &[ResolutionVote; 3]) -> Result<(), AdjudicationError> {
    for (vote, slot) in primaries.iter().zip(AgentSlot::PRIMARIES) {
        if vote.agent_slot != slot {
            return Err(AdjudicationError::BadPrimaries);
        }
        if vote.question_id != primaries[0].question_id {
            return Err(AdjudicationError::MixedQuestions);
        }
    }
    Ok(())
}

/// Returns the unanimous resolution, or `Ok(None)` when a tiebreak vote is required.
pub fn unanimous(
    primaries: &[ResolutionVote; 3],
) -> Result<Option<FinalResolution>, AdjudicationError> {
    check_primaries(primaries)?;
    let first = primaries[0].verdict;
    if primaries.iter().all(|v| v.verdict == first) {
        Ok(Some(FinalResolution {
            question_id: primaries[0].question_id.clone(),
            verdict: first.into(),
            method: Method::Unanimous,
            votes: primaries.to_vec(),
        }))
    } else {
        Ok(None)
    }
}

/// The verdict shared by at least two primaries, if any.
pub fn primary_majority(primaries: &[ResolutionVote]) -> Option<VoteVerdict> {
    [VoteVerdict::Yes, VoteVerdict::No, VoteVerdict::Annul]
        .into_iter()
        .find(|v| primaries.iter().filter(|p| p.verdict == *v).count() >= 2)
}

/// Settles a disputed question once the tiebreak vote is in.
pub fn settle(
    primaries: &[ResolutionVote; 3],
    tiebreak: ResolutionVote,
    rule: Adjudication,
) -> Result<FinalResolution, AdjudicationError> {
    check_primaries(primaries)?;
    if tiebreak.agent_slot != AgentSlot::Tiebreak {
        return Err(AdjudicationError::BadTiebreak);
    }
    if tiebreak.question_id != primaries[0].question_id {
        return Err(AdjudicationError::MixedQuestions);
    }
    let (verdict, method) = match rule {
        Adjudication::TiebreakFinal => (tiebreak.verdict, Method::Tiebreak),
        Adjudication::Plurality4 => {
            let count = |v: VoteVerdict| {
                primaries.iter().filter(|p| p.verdict == v).count()
                    + usize::from(tiebreak.verdict == v)
            };
            let best = [VoteVerdict::Yes, VoteVerdict::No, VoteVerdict::Annul]
                .into_iter()
                .map(|v| (count(v), v))
                .max_by_key(|(c, _)| *c)
                .expect("three candidates");
            let tied = [VoteVerdict::Yes, VoteVerdict::No, VoteVerdict::Annul]
                .into_iter()
                .filter(|v| count(*v) == best.0)
                .count()
                > 1;
            if tied {
                (tiebreak.verdict, Method::Tiebreak)
            } else {
                (best.1, Method::Plurality)
            }
        }
    };
    let mut votes = primaries.to_vec();
    votes.push(tiebreak);
    Ok(FinalResolution {
        question_id: primaries[0].question_id.clone(),
        verdict: verdict.into(),
        method,
        votes,
    })
}

impl FinalResolution {
    /// Checks the structural invariants tying `method` to the vote list.
    pub fn is_consistent(&self) -> bool {
        match self.method {
            Method::Unanimous => {
                self.votes.len() == 3
                    && self
                        .votes
                        .iter()
                        .all(|v| FinalVerdict::from(v.verdict) == self.verdict)
            }
            Method::Tiebreak => {
                self.votes.len() == 4
                    && self.votes[3].agent_slot == AgentSlot::Tiebreak
                    && FinalVerdict::from(self.votes[3].verdict) == self.verdict
            }
            Method::Plurality => self.votes.len() == 4,
        }
    }
}
