//! Random instance generators and independent reference computations shared
//! by the integration tests. Nothing here calls the library's formulas.

#![allow(dead_code)]

use netfed_core::scenario::check_utility_condition;
use netfed_core::{ClientType, Profile, Scenario, SocialState, UtilitySpec};
use rand::Rng;

/// Generalization error computed participant by participant.
pub fn eps_direct(d: u32, gamma2: f64, sigma2: f64, sizes: &[u64]) -> f64 {
    let k = sizes.len() as f64;
    let inv: f64 = sizes.iter().map(|&n| 1.0 / n as f64).sum();
    f64::from(d) * gamma2 * inv / (k * k) + (k - 1.0) / k * sigma2
}

pub fn sizes_of(s: &Scenario, k: &[u32]) -> Vec<u64> {
    k.iter()
        .zip(&s.types)
        .flat_map(|(&n, t)| std::iter::repeat_n(t.data_size, n as usize))
        .collect()
}

pub fn eps_of(s: &Scenario, k: &[u32]) -> Option<f64> {
    let sizes = sizes_of(s, k);
    if sizes.is_empty() {
        None
    } else {
        Some(eps_direct(s.d, s.gamma2, s.sigma2, &sizes))
    }
}

pub fn power(s: &Scenario) -> (f64, f64) {
    match s.utility {
        UtilitySpec::Power { a, b } => (a, b),
        _ => panic!("generators only produce power-law utilities"),
    }
}

pub fn utility_of(s: &Scenario, k: &[u32]) -> f64 {
    let (a, b) = power(s);
    eps_of(s, k).map_or(0.0, |e| a * e.powf(-b))
}

/// Welfare of a full social state, from first principles.
pub fn welfare_direct(s: &Scenario, k: &[u32], b: &[u32]) -> f64 {
    let u = utility_of(s, k);
    let obtainers: u32 = k.iter().sum::<u32>() + b.iter().sum::<u32>();
    let cost: f64 = k.iter().zip(&s.types).map(|(&n, t)| f64::from(n) * t.cost).sum();
    f64::from(obtainers) * u - cost
}

fn counts(limits: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &n in limits {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=n).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

pub fn all_profiles(s: &Scenario) -> Vec<Vec<u32>> {
    counts(&s.types.iter().map(|t| t.count).collect::<Vec<_>>())
}

/// Participant and buyer counts per type.
pub type Counts = (Vec<u32>, Vec<u32>);

/// Every social state `(K, B)` with `K_i + B_i <= N_i`.
pub fn all_states(s: &Scenario) -> Vec<Counts> {
    let mut out = Vec::new();
    for k in all_profiles(s) {
        let room: Vec<u32> = k.iter().zip(&s.types).map(|(&n, t)| t.count - n).collect();
        for b in counts(&room) {
            out.push((k.clone(), b));
        }
    }
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Best welfare over every social state and the states attaining it.
pub fn full_optimum(s: &Scenario) -> (f64, Vec<Counts>) {
    let scored: Vec<_> = all_states(s)
        .into_iter()
        .map(|(k, b)| {
            let w = welfare_direct(s, &k, &b);
            (w, k, b)
        })
        .collect();
    let best = scored.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let arg = scored
        .into_iter()
        .filter(|x| close(x.0, best, 1e-12))
        .map(|(_, k, b)| (k, b))
        .collect();
    (best, arg)
}

/// Best benchmark welfare `sum K_i (U - C_i)` over all profiles.
pub fn fl_optimum_direct(s: &Scenario) -> f64 {
    all_profiles(s)
        .iter()
        .map(|k| {
            let u = utility_of(s, k);
            k.iter().zip(&s.types).map(|(&n, t)| f64::from(n) * (u - t.cost)).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn state(k: &[u32], b: &[u32]) -> SocialState {
    SocialState::new(Profile(k.to_vec()), Profile(b.to_vec()))
}

/// Up to three types, `D <= 60`, `N_i <= 6`, power-law utility. When
/// `low_het` is set the client variance keeps every type below the
/// heterogeneity threshold; otherwise it is unconstrained in `[0, 4]`.
pub fn random_market(rng: &mut impl Rng, low_het: bool) -> Scenario {
    let types = rng.gen_range(1..=3);
    let mut sizes: Vec<u64> = (0..types).map(|_| rng.gen_range(1..=60)).collect();
    sizes.sort_unstable();
    let d = rng.gen_range(1..=16);
    let gamma2 = rng.gen_range(0.1..4.0);
    let sigma2 = if low_het {
        if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..f64::from(d) * gamma2 / sizes[types - 1] as f64)
        }
    } else {
        rng.gen_range(0.0..4.0)
    };
    let mut costs: Vec<f64> = (0..types).map(|_| rng.gen_range(0.0..3.0)).collect();
    costs.sort_by(f64::total_cmp);
    let a = rng.gen_range(0.1..5.0);
    let b = rng.gen_range(0.5..3.0);
    let client_types = sizes
        .iter()
        .zip(&costs)
        .map(|(&data_size, &cost)| ClientType { data_size, cost, count: rng.gen_range(1..=6) })
        .collect();
    Scenario::new(d, gamma2, sigma2, UtilitySpec::Power { a, b }, client_types).unwrap()
}

/// Whether `(eps - sigma2) U'' + 2 U' >= 0` over every error a non-empty
/// coalition of `s` can produce.
pub fn utility_condition_holds(s: &Scenario) -> bool {
    let errors: Vec<f64> = all_profiles(s).iter().filter_map(|k| eps_of(s, k)).collect();
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi {
        // A single reachable error: check a small neighbourhood.
        return check_utility_condition(&s.utility, s.sigma2, lo * (1.0 - 1e-9), hi * (1.0 + 1e-9))
            .unwrap()
            .satisfied;
    }
    check_utility_condition(&s.utility, s.sigma2, lo, hi).unwrap().satisfied
}

/// Random market without high types on which the utility condition holds,
/// with exponent `b` in `[1, 3]` and `sigma2 = 0` half of the time.
pub fn random_regular_market(rng: &mut impl Rng) -> Scenario {
    loop {
        let mut s = random_market(rng, true);
        let (a, _) = power(&s);
        s.utility = UtilitySpec::Power { a, b: rng.gen_range(1.0..3.0) };
        if rng.gen_bool(0.5) {
            s.sigma2 = 0.0;
        }
        if utility_condition_holds(&s) {
            return s;
        }
    }
}

/// Random market with at least one high type.
pub fn random_high_het_market(rng: &mut impl Rng) -> Scenario {
    loop {
        let s = random_market(rng, false);
        if !s.is_low_heterogeneity() {
            return s;
        }
    }
}

/// Uniformly random valid social state.
pub fn random_state(rng: &mut impl Rng, s: &Scenario) -> SocialState {
    let mut k = Vec::new();
    let mut b = Vec::new();
    for t in &s.types {
        let ki = rng.gen_range(0..=t.count);
        k.push(ki);
        b.push(rng.gen_range(0..=t.count - ki));
    }
    state(&k, &b)
}
