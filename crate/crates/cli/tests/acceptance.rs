//! Acceptance gate: one test per property-suite check. Each test runs the
//! same code path as `tlforce property-suite` and prints the check's
//! one-line detail so a failure is diagnosable straight from the test log.

use tlforce_cli::properties::{all_checks, CheckOutcome};

fn run(number: usize) -> CheckOutcome {
    let check = all_checks()
        .into_iter()
        .find(|c| c.number == number)
        .unwrap_or_else(|| panic!("no check numbered {number}"));
    let outcome = (check.run)();
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] {:02} {}: {}", check.number, check.name, outcome.detail);
    outcome
}

macro_rules! criterion {
    ($name:ident, $number:expr) => {
        #[test]
        fn $name() {
            let outcome = run($number);
            assert!(outcome.pass, "{}", outcome.detail);
        }
    };
}

criterion!(criterion_01_constrained_decode_validity, 1);
criterion!(criterion_02_forced_loss_never_exceeds_standard, 2);
criterion!(criterion_03_forced_gradient_exact_zeros, 3);
criterion!(criterion_04_gradients_match_finite_differences, 4);
criterion!(criterion_05_forced_gradient_second_moment, 5);
criterion!(criterion_06_training_comparison_in_domain, 6);
criterion!(criterion_07_domain_transfer_grid, 7);
criterion!(criterion_08_lifting_round_trip, 8);
criterion!(criterion_09_tagger_heldout_accuracy, 9);
criterion!(criterion_10_grammar_parser_equivalence, 10);
