//! Exhaustive oracle equivalence for the blame engine, plus its algebraic
//! invariants. The oracle below is an independent brute-force
//! transcription of the attribution rules; it must stay structurally
//! separate from the implementation it checks.

use proptest::prelude::*;

use triad_core::blame::{assign_blame, select_final};
use triad_core::domain::{AnswerLetter, ErrorOrigin, ParsedAnswer};

/// Independent transcription of the attribution rules, written directly
/// from the flag and origin definitions with no shared helpers.
mod oracle {
    use triad_core::domain::{AnswerLetter, ErrorOrigin, ParsedAnswer};

    pub struct OracleVerdict {
        pub planner_error: bool,
        pub executor_repair: bool,
        pub executor_harm: bool,
        pub critic_repair: bool,
        pub critic_harm: bool,
        pub final_answer: ParsedAnswer,
        pub origin: ErrorOrigin,
    }

    pub fn blame(
        p: ParsedAnswer,
        e: ParsedAnswer,
        c: ParsedAnswer,
        gold: AnswerLetter,
    ) -> OracleVerdict {
        let eq = |answer: ParsedAnswer| matches!(answer, Some(letter) if letter == gold);

        // final selection: prefer critic, then executor, then planner
        let final_answer = if c.is_some() {
            c
        } else if e.is_some() {
            e
        } else {
            p
        };

        let planner_error = !eq(p);
        let executor_repair = !eq(p) && eq(e);
        let executor_harm = eq(p) && !eq(e);
        let critic_repair = !eq(e) && eq(c);
        let critic_harm = eq(e) && !eq(c);

        let origin = if eq(final_answer) {
            ErrorOrigin::None
        } else if eq(e) && !eq(c) {
            ErrorOrigin::Critic
        } else if eq(p) && !eq(e) {
            ErrorOrigin::Executor
        } else {
            ErrorOrigin::Planner
        };

        OracleVerdict {
            planner_error,
            executor_repair,
            executor_harm,
            critic_repair,
            critic_harm,
            final_answer,
            origin,
        }
    }
}

const STAGE_VALUES: [ParsedAnswer; 6] = [
    Some(AnswerLetter::A),
    Some(AnswerLetter::B),
    Some(AnswerLetter::C),
    Some(AnswerLetter::D),
    Some(AnswerLetter::E),
    None,
];

/// All 6^3 * 5 = 1,080 combinations agree with the oracle.
#[test]
fn exhaustive_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut combinations = 0;
    for gold in AnswerLetter::ALL {
        for p in STAGE_VALUES {
            for e in STAGE_VALUES {
                for c in STAGE_VALUES {
                    let expected = oracle::blame(p, e, c, gold);
                    let actual = assign_blame(p, e, c, gold);
                    let context = format!("p={p:?} e={e:?} c={c:?} gold={gold:?}");
                    assert_eq!(
                        actual.flags.planner_error, expected.planner_error,
                        "{context}"
                    );
                    assert_eq!(
                        actual.flags.executor_repair, expected.executor_repair,
                        "{context}"
                    );
                    assert_eq!(
                        actual.flags.executor_harm, expected.executor_harm,
                        "{context}"
                    );
                    assert_eq!(
                        actual.flags.critic_repair, expected.critic_repair,
                        "{context}"
                    );
                    assert_eq!(actual.flags.critic_harm, expected.critic_harm, "{context}");
                    assert_eq!(actual.final_answer, expected.final_answer, "{context}");
                    assert_eq!(actual.origin, expected.origin, "{context}");
                    combinations += 1;
                }
            }
        }
    }
    assert_eq!(combinations, 1_080);
    assert!(
        started.elapsed().as_secs() < 1,
        "exhaustive sweep must finish in under a second"
    );
}

/// The origin PLANNER branch can never fire while the planner was correct:
/// with p = gold, every failing final answer routes through the CRITIC or
/// EXECUTOR branches. Assert the unreachability over the whole space.
#[test]
fn planner_origin_requires_planner_mistake() {
    for gold in AnswerLetter::ALL {
        for p in STAGE_VALUES {
            for e in STAGE_VALUES {
                for c in STAGE_VALUES {
                    let outcome = assign_blame(p, e, c, gold);
                    if outcome.origin == ErrorOrigin::Planner {
                        assert_ne!(p, Some(gold), "p={p:?} e={e:?} c={c:?} gold={gold:?}");
                    }
                }
            }
        }
    }
}

fn stage_value() -> impl Strategy<Value = ParsedAnswer> {
    prop::sample::select(STAGE_VALUES.to_vec())
}

fn gold_letter() -> impl Strategy<Value = AnswerLetter> {
    prop::sample::select(AnswerLetter::ALL.to_vec())
}

proptest! {
    /// origin == NONE exactly when the final answer equals gold.
    #[test]
    fn origin_none_iff_final_correct(
        p in stage_value(),
        e in stage_value(),
        c in stage_value(),
        gold in gold_letter(),
    ) {
        let outcome = assign_blame(p, e, c, gold);
        prop_assert_eq!(
            outcome.origin == ErrorOrigin::None,
            outcome.final_answer == Some(gold)
        );
    }

    /// Mutual exclusion and the repair-implies-error chain.
    #[test]
    fn flag_invariants_hold(
        p in stage_value(),
        e in stage_value(),
        c in stage_value(),
        gold in gold_letter(),
    ) {
        let flags = assign_blame(p, e, c, gold).flags;
        prop_assert!(!(flags.executor_repair && flags.executor_harm));
        prop_assert!(!(flags.critic_repair && flags.critic_harm));
        prop_assert!(!flags.executor_repair || flags.planner_error);
    }

    /// Relabeling the answer letters by any permutation (applied to all
    /// stage answers and gold simultaneously) leaves flags and origin
    /// unchanged.
    #[test]
    fn stage_agnostic_under_letter_permutation(
        p in stage_value(),
        e in stage_value(),
        c in stage_value(),
        gold in gold_letter(),
        permutation in Just(AnswerLetter::ALL.to_vec()).prop_shuffle(),
    ) {
        let relabel = |answer: ParsedAnswer| answer.map(|letter| permutation[letter.index()]);
        let base = assign_blame(p, e, c, gold);
        let mapped = assign_blame(
            relabel(p),
            relabel(e),
            relabel(c),
            permutation[gold.index()],
        );
        prop_assert_eq!(base.flags, mapped.flags);
        prop_assert_eq!(base.origin, mapped.origin);
        prop_assert_eq!(relabel(base.final_answer), mapped.final_answer);
    }

    /// Pure function: equal inputs, equal outputs.
    #[test]
    fn deterministic(
        p in stage_value(),
        e in stage_value(),
        c in stage_value(),
        gold in gold_letter(),
    ) {
        prop_assert_eq!(assign_blame(p, e, c, gold), assign_blame(p, e, c, gold));
    }

    /// Selection ignores gold entirely.
    #[test]
    fn selection_is_pure_preference(
        p in stage_value(),
        e in stage_value(),
        c in stage_value(),
    ) {
        let selected = select_final(p, e, c);
        match (p, e, c) {
            (_, _, Some(letter)) => prop_assert_eq!(selected, Some(letter)),
            (_, Some(letter), None) => prop_assert_eq!(selected, Some(letter)),
            (anything, None, None) => prop_assert_eq!(selected, anything),
        }
    }
}
