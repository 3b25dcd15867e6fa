mod common;

use common::{close, fl_optimum_direct, full_optimum, random_high_het_market, random_market, random_regular_market};
use netfed_core::welfare::{
    fl_optimum, solve_efficient_brute, solve_efficient_structured, welfare_fl, welfare_landscape, welfare_mts,
};
use netfed_core::{Scenario, SocialState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn any_market() -> impl Strategy<Value = Scenario> {
    (any::<u64>(), 0u8..3).prop_map(|(seed, kind)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            0 => random_regular_market(&mut rng),
            1 => random_high_het_market(&mut rng),
            _ => random_market(&mut rng, true),
        }
    })
}

fn regular_market() -> impl Strategy<Value = Scenario> {
    any::<u64>().prop_map(|seed| random_regular_market(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn key(st: &SocialState) -> (Vec<u32>, Vec<u32>) {
    (st.participants.0.clone(), st.buyers.0.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn brute_force_matches_exhaustive_state_search(s in any_market()) {
        let (best, _) = full_optimum(&s);
        let r = solve_efficient_brute(&s).unwrap();
        prop_assert!(close(r.w_star, best, 1e-9), "{} vs {}", r.w_star, best);
        prop_assert!(r.w_star >= 0.0);
        prop_assert!(close(welfare_mts(&s, &r.recommended).unwrap(), r.w_star, 1e-9));
        let keys: Vec<_> = r.optimal_states.iter().map(key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        prop_assert_eq!(&keys, &sorted);
        prop_assert_eq!(key(&r.recommended), keys[0].clone());
    }

    #[test]
    fn optima_are_all_or_nothing(s in any_market()) {
        let (_, states) = full_optimum(&s);
        for (k, b) in states {
            let trains = k.iter().any(|&n| n > 0);
            let everyone = k.iter().zip(&b).zip(&s.types).all(|((&ki, &bi), t)| ki + bi == t.count);
            prop_assert!(!trains || everyone, "optimum {:?};{:?}", k, b);
        }
    }

    #[test]
    fn training_alone_never_beats_trading(s in any_market()) {
        let fl = fl_optimum(&s).unwrap();
        prop_assert!(close(fl.w_fl, fl_optimum_direct(&s), 1e-9));
        prop_assert!(close(welfare_fl(&s, &fl.participants).unwrap(), fl.w_fl, 1e-12));
        let r = solve_efficient_brute(&s).unwrap();
        prop_assert!(fl.w_fl <= r.w_star + 1e-9 * r.w_star.abs().max(1.0));
    }

    #[test]
    fn landscape_peaks_at_the_optimum(s in any_market()) {
        let rows = welfare_landscape(&s, 1_000_000).unwrap();
        prop_assert_eq!(rows.len(), common::all_states(&s).len());
        let peak = rows.iter().map(|r| r.welfare).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(close(peak, solve_efficient_brute(&s).unwrap().w_star, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn structured_search_matches_brute_force(s in regular_market()) {
        let brute = solve_efficient_brute(&s).unwrap();
        let fast = solve_efficient_structured(&s).unwrap();
        prop_assert!(close(brute.w_star, fast.w_star, 1e-9), "{} vs {}", brute.w_star, fast.w_star);
    }
}

#[test]
fn single_type_fixture_optimum() {
    let s = netfed_core::fixtures::s1();
    let r = solve_efficient_brute(&s).unwrap();
    assert!((r.w_star - 43.5).abs() < 1e-9);
    assert_eq!(r.recommended.to_string(), "(3;0)");
}
