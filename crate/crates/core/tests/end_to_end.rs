use bia_core::mapreduce::{build_job, map_phase, oracle_outputs, random_payloads, run_job, shuffle_phase, ShuffleConfig};
use bia_core::metrics::{dof_bcgm, dof_mapreduce, dof_usi};
use bia_core::sim::{simulate_bcgm, simulate_usi, RunConfig};
use bia_core::verify::{check_alignment, check_decoding, grid};
use bia_core::Rational;
use proptest::prelude::*;

fn xor_map(reducer: usize, file: usize, payload: &[u8]) -> Vec<u8> {
    payload.iter().map(|b| b ^ (reducer as u8).wrapping_mul(31) ^ file as u8).collect()
}

fn concat_reduce(_node: usize, ivas: &[&[u8]]) -> Vec<u8> {
    ivas.concat()
}

#[test]
fn simulated_dof_matches_formulas() {
    for (k, g, m) in [(4, 3, 2), (3, 2, 3), (5, 2, 2), (4, 4, 3), (3, 1, 2)] {
        let r = simulate_bcgm(k, g, m, RunConfig::noiseless(7)).unwrap();
        assert_eq!(r.dof_sum, Some(dof_bcgm(k, g, m).unwrap()), "({k},{g},{m})");
        assert!(r.max_relative_error < 1e-8);
    }
    for (k, g, m) in [(4, 3, 2), (5, 4, 3), (4, 2, 1)] {
        let r = simulate_usi(k, g, m, RunConfig::noiseless(7)).unwrap();
        assert_eq!(r.dof_sum, Some(dof_usi(k, g, m).unwrap().achievable), "({k},{g},{m})");
    }
}

#[test]
fn custom_map_and_reduce_survive_the_shuffle() {
    for modes in [1, 2, 3] {
        let job = build_job(5, 2, random_payloads(10, 24, 4)).unwrap().with_map(xor_map).with_reduce(concat_reduce);
        let run = run_job(&job, &ShuffleConfig { modes, seed: 4, snr_db: None }).unwrap();
        assert!(run.oracle.passed, "M={modes}");
        // Each node's output is every file's 24-byte IVA in order.
        let expected = oracle_outputs(&job);
        assert_eq!(run.outputs, expected);
        assert!(expected.iter().all(|o| o.output.len() == 240));
    }
}

#[test]
fn shuffle_sum_dof_tracks_formula() {
    // One message per run when the IVA length divides evenly, so the
    // achieved figure equals the closed form.
    for (k, r, m) in [(4, 2, 1), (4, 2, 2), (5, 3, 2), (4, 1, 1)] {
        let files = bia_core::combinatorics::binomial(k as u64, r as u64).unwrap() as usize;
        let job = build_job(k, r, random_payloads(files, 8, 1)).unwrap();
        let maps = map_phase(&job);
        let ledger = shuffle_phase(&job, &maps, &ShuffleConfig { modes: m, seed: 1, snr_db: None }).unwrap();
        assert_eq!(ledger.effective.len(), (k - r) * files);
        let formula = dof_mapreduce(k, r, m).unwrap().achievable;
        let achieved = ledger.achieved_dof.unwrap();
        assert!(achieved <= formula, "({k},{r},{m}) {achieved} > {formula}");
        assert!(achieved * Rational::from_integer(2) > formula, "({k},{r},{m})");
    }
}

#[test]
fn verification_grid_small_cases() {
    for p in grid(2..=3, &[2, 3]) {
        assert!(check_alignment(&p, 0).unwrap().passed);
        assert!(check_decoding(&p, &[9]).unwrap().passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_groupcast_recovers_for_any_seed(
        (k, g) in (2usize..=4).prop_flat_map(|k| (Just(k), 1..=k)),
        m in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let r = simulate_bcgm(k, g, m, RunConfig::noiseless(seed)).unwrap();
        prop_assert!(r.full_rank);
        prop_assert_eq!(r.recovered, r.messages * g);
        prop_assert!(r.max_relative_error < 1e-8, "{}", r.max_relative_error);
    }

    #[test]
    fn noiseless_shuffle_matches_oracle(
        (k, r) in (2usize..=4).prop_flat_map(|k| (Just(k), 1..k)),
        m in 1usize..=2,
        bytes in 0usize..=20,
        seed in any::<u64>(),
    ) {
        let files = bia_core::combinatorics::binomial(k as u64, r as u64).unwrap() as usize;
        let job = build_job(k, r, random_payloads(files, bytes, seed)).unwrap();
        let run = run_job(&job, &ShuffleConfig { modes: m, seed, snr_db: None }).unwrap();
        prop_assert!(run.oracle.passed);
    }
}
