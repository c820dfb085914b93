use ffoundry_core::metrics::{brier, decompose};
use num_rational::Ratio;
use proptest::prelude::*;

type Exact = Ratio<i128>;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
    (1usize..=500, prop::sample::select(vec![2usize, 5, 10])).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(any::<bool>(), n),
            Just(k),
        )
    })
}

/// Exact forecasts on a 1/20 grid; the grid and size keep bin-mean
/// denominators well inside i128.
fn exact_instance() -> impl Strategy<Value = (Vec<Exact>, Vec<bool>)> {
    (1usize..=60).prop_flat_map(|n| {
        (
            prop::collection::vec((0i128..=20).prop_map(|a| Exact::new(a, 20)), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn identity_holds_in_floating_point((p, o, k) in instance()) {
        let (bins, d) = decompose(&p, &o, k).unwrap();
        prop_assert!(d.identity_residual().abs() <= 1e-12, "residual {}", d.identity_residual());
        prop_assert_eq!(bins.bins.iter().map(|b| b.count).sum::<usize>(), p.len());
        prop_assert!((d.raw_brier - brier(&p, &o).unwrap()).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn identity_is_exact_over_rationals((p, o) in exact_instance(), k in 2usize..=10) {
        let (_, d) = decompose(&p, &o, k).unwrap();
        prop_assert_eq!(d.identity_residual(), Exact::from_integer(0));
        prop_assert_eq!(d.raw_brier - d.brier, d.within_bin);
    }

    #[test]
    fn brier_is_permutation_invariant((p, o) in exact_instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p2: Vec<Exact> = idx.iter().map(|&i| p[i]).collect();
        let o2: Vec<bool> = idx.iter().map(|&i| o[i]).collect();
        prop_assert_eq!(brier(&p, &o).unwrap(), brier(&p2, &o2).unwrap());
        prop_assert_eq!(decompose(&p, &o, 10).unwrap().1, decompose(&p2, &o2, 10).unwrap().1);
    }

    #[test]
    fn coarser_nested_bins_never_raise_refinement((p, o) in exact_instance()) {
        let (_, fine) = decompose(&p, &o, 10).unwrap();
        let (_, coarse) = decompose(&p, &o, 5).unwrap();
        prop_assert!(coarse.refinement <= fine.refinement);
    }

    #[test]
    fn collapsing_to_the_mean_leaves_no_refinement((p, o) in exact_instance()) {
        let mean = p.iter().fold(Exact::from_integer(0), |a, b| a + b) / Exact::from_integer(p.len() as i128);
        let flat = vec![mean; p.len()];
        let (_, d) = decompose(&flat, &o, 10).unwrap();
        prop_assert_eq!(d.refinement, Exact::from_integer(0));
    }
}

#[test]
fn forecasting_the_base_rate_scores_the_uncertainty() {
    let o = [true, false, false, true, false, false, false, true];
    let rate = Exact::new(3, 8);
    let (_, d) = decompose(&vec![rate; o.len()], &o, 10).unwrap();
    assert_eq!(d.calibration, Exact::from_integer(0));
    assert_eq!(d.refinement, Exact::from_integer(0));
    assert_eq!(d.brier, d.uncertainty);
}

#[test]
fn shrinking_toward_the_mean_can_raise_refinement_with_fixed_bins() {
    // Shrinkage moves 0.21 and 0.29 toward 0.5 by different amounts, and the
    // shifted values no longer share a bin.
    let p = [0.21, 0.29, 0.5, 0.5];
    let o = [true, false, true, false];
    let shrunk: Vec<f64> = p.iter().map(|x| 0.5 + 0.95 * (x - 0.5)).collect();
    let before = decompose(&p, &o, 10).unwrap().1.refinement;
    let after = decompose(&shrunk, &o, 10).unwrap().1.refinement;
    assert!(after > before, "{after} vs {before}");
}
