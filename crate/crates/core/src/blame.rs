//! Final-answer selection, blame flags, and error-origin classification
//! for the three-stage pipeline.
//!
//! The pipeline publishes a single final answer by preferring later stages
//! (critic over executor over planner, among the defined answers). Blame
//! flags compare each stage's answer against the gold label: a downstream
//! stage *repairs* a wrong upstream answer or *harms* a correct one. The
//! error origin is the earliest stage whose mistake remains unrepaired in
//! the final output, NONE when the final answer is correct.
//!
//! Every comparison treats an UNDEFINED stage answer as unequal to gold;
//! definedness matters only in final selection. All functions are pure.

use crate::domain::{AnswerLetter, BlameFlags, ErrorOrigin, ParsedAnswer};

/// Prefer the critic, then the executor, then the planner.
pub fn select_final(p: ParsedAnswer, e: ParsedAnswer, c: ParsedAnswer) -> ParsedAnswer {
    c.or(e).or(p)
}

/// The full per-item blame verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlameOutcome {
    pub flags: BlameFlags,
    pub origin: ErrorOrigin,
    pub final_answer: ParsedAnswer,
}

/// Classify one item's stage answers against the gold label.
///
/// Postcondition: `origin == ErrorOrigin::None` iff the selected final
/// answer equals gold.
pub fn assign_blame(
    p: ParsedAnswer,
    e: ParsedAnswer,
    c: ParsedAnswer,
    gold: AnswerLetter,
) -> BlameOutcome {
    let gold = Some(gold);
    let flags = BlameFlags::new(
        p != gold,
        p != gold && e == gold,
        p == gold && e != gold,
        e != gold && c == gold,
        e == gold && c != gold,
    )
    .expect("flag invariants hold for every comparison outcome");

    let final_answer = select_final(p, e, c);
    let origin = if final_answer == gold {
        ErrorOrigin::None
    } else if e == gold && c != gold {
        ErrorOrigin::Critic
    } else if p == gold && e != gold {
        ErrorOrigin::Executor
    } else {
        ErrorOrigin::Planner
    };

    BlameOutcome {
        flags,
        origin,
        final_answer,
    }
}
