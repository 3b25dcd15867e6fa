//! Analytic generalization error of the aggregated model and the network
//! effects of adding participants to a coalition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Number of participants of each type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(pub Vec<u32>);

impl Profile {
    pub fn empty(types: usize) -> Self {
        Profile(vec![0; types])
    }

    /// Every client of every type.
    pub fn full(s: &Scenario) -> Self {
        Profile(s.types.iter().map(|t| t.count).collect())
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn with(&self, i: usize, value: u32) -> Profile {
        let mut p = self.clone();
        p.0[i] = value;
        p
    }

    pub fn check(&self, s: &Scenario) -> Result<()> {
        if self.0.len() != s.type_count() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries but the scenario has {} types",
                self.0.len(),
                s.type_count()
            )));
        }
        for (i, (&k, t)) in self.0.iter().zip(&s.types).enumerate() {
            if k > t.count {
                return Err(Error::InvalidProfile(format!(
                    "type {}: {k} participants exceed the {} available clients",
                    i + 1,
                    t.count
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(Error::InvalidProfile("empty profile".to_string()));
        }
        trimmed
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::InvalidProfile(format!("{part:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Profile)
    }
}

/// `eps = (d*gamma2 / K^2) * sum_k 1/D_k + ((K-1)/K) * sigma2` over the
/// listed participants, or `None` when there are none.
pub fn error_for_sizes(data_scale: f64, sigma2: f64, sizes: impl IntoIterator<Item = (u32, u64)>) -> Option<f64> {
    let mut k = 0.0;
    let mut inverse_sum = 0.0;
    for (count, size) in sizes {
        k += f64::from(count);
        inverse_sum += f64::from(count) / size as f64;
    }
    if k == 0.0 {
        return None;
    }
    Some(data_scale / (k * k) * inverse_sum + (k - 1.0) / k * sigma2)
}

/// Error of the model trained by `k`, `None` for the empty coalition.
/// Callers must have checked the profile against the scenario.
pub fn error_of(s: &Scenario, k: &Profile) -> Option<f64> {
    error_for_sizes(
        s.data_scale(),
        s.sigma2,
        k.0.iter().zip(&s.types).map(|(&n, t)| (n, t.data_size)),
    )
}

/// Model utility at `k`, 0 when nobody trains.
pub fn utility_at(s: &Scenario, k: &Profile) -> f64 {
    s.utility.of_model(error_of(s, k))
}

pub fn generalization_error(s: &Scenario, k: &Profile) -> Result<f64> {
    k.check(s)?;
    error_of(s, k).ok_or(Error::EmptyCoalition)
}

/// `sum_i K_i / D_i`.
fn inverse_size_sum(s: &Scenario, k: &Profile) -> f64 {
    k.0.iter()
        .zip(&s.types)
        .map(|(&n, t)| f64::from(n) / t.data_size as f64)
        .sum()
}

/// Change in error when one more type-`j` client joins; positive is a
/// beneficial (non-negative) network effect.
pub fn participation_effect(s: &Scenario, k: &Profile, j: usize) -> Result<f64> {
    k.check(s)?;
    if k.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    let count = s.types.get(j).map(|t| t.count).ok_or_else(|| {
        Error::InvalidProfile(format!("type index {} out of range", j + 1))
    })?;
    if k.0[j] >= count {
        return Err(Error::Capacity { type_index: j + 1, count });
    }
    Ok(newcomer_effect(s, k, s.types[j].data_size))
}

/// Error change caused by a hypothetical newcomer holding `size` samples;
/// `k` must be non-empty.
pub fn newcomer_effect(s: &Scenario, k: &Profile, size: u64) -> f64 {
    let before = error_of(s, k).expect("non-empty coalition");
    let after = error_for_sizes(
        s.data_scale(),
        s.sigma2,
        k.0.iter()
            .zip(&s.types)
            .map(|(&n, t)| (n, t.data_size))
            .chain(std::iter::once((1, size))),
    )
    .expect("non-empty coalition");
    before - after
}

/// Threshold on `1/D` below which a newcomer does not hurt the coalition.
pub fn eta_threshold(s: &Scenario, k: &Profile) -> Result<f64> {
    k.check(s)?;
    if k.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    Ok(eta_unchecked(s, k))
}

fn eta_unchecked(s: &Scenario, k: &Profile) -> f64 {
    let total = f64::from(k.total());
    (2.0 * total + 1.0) * inverse_size_sum(s, k) / (total * total)
        - (total + 1.0) * s.sigma2 / (s.data_scale() * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeOutcome {
    /// `eps_merged < max(eps_a, eps_b)`.
    pub benefits: bool,
    pub eps_a: f64,
    pub eps_b: f64,
    pub eps_merged: f64,
    /// The harmonic-mean criterion evaluated independently of the errors.
    pub harmonic_condition: bool,
}

/// Whether merging two disjoint coalitions beats the worse of the two.
pub fn merge_benefit(s: &Scenario, a: &Profile, b: &Profile) -> Result<MergeOutcome> {
    a.check(s)?;
    b.check(s)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    let merged = Profile(a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect());
    merged.check(s)?;

    let eps_a = error_of(s, a).expect("non-empty");
    let eps_b = error_of(s, b).expect("non-empty");
    let eps_merged = error_of(s, &merged).expect("non-empty");
    let worst = eps_a.max(eps_b);
    let benefits = eps_merged < worst - STRICT_SLACK * worst.abs();

    let harmonic = |p: &Profile| f64::from(p.total()) / inverse_size_sum(s, p);
    let (mut ha, mut ka) = (harmonic(a), f64::from(a.total()));
    let (mut hb, mut kb) = (harmonic(b), f64::from(b.total()));
    if ha > hb {
        std::mem::swap(&mut ha, &mut hb);
        std::mem::swap(&mut ka, &mut kb);
    }
    let bound = (hb * kb + ka * (2.0 * hb - ha)) / (ha * hb * (ka + kb) / f64::from(s.d));
    let ratio = s.sigma2 / s.gamma2;
    let harmonic_condition = ratio < bound - STRICT_SLACK * bound.abs();

    Ok(MergeOutcome {
        benefits,
        eps_a,
        eps_b,
        eps_merged,
        harmonic_condition,
    })
}

/// Strict inequalities treat differences within this relative slack as
/// ties, so exact boundary cases are not decided by rounding.
const STRICT_SLACK: f64 = 1e-12;

/// The four network-effect regimes of a client type relative to a
/// coalition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Helps at first, eventually hurts.
    I,
    /// Always helps.
    II,
    /// Always hurts.
    III,
    /// Hurts at first, eventually helps.
    IV,
}

/// Regime of type `j`, with `eta` evaluated at the supplied profile.
pub fn classify_region(s: &Scenario, k: &Profile, j: usize) -> Result<Region> {
    let eta = eta_threshold(s, k)?;
    let t = s.types.get(j).ok_or_else(|| Error::InvalidProfile(format!("type index {} out of range", j + 1)))?;
    Ok(region_for(s, eta, t.data_size))
}

fn region_for(s: &Scenario, eta: f64, size: u64) -> Region {
    let inv = 1.0 / size as f64;
    let heterogeneity = s.sigma2 / s.data_scale();
    match (inv <= eta, inv < heterogeneity) {
        (true, true) => Region::I,
        (true, false) => Region::II,
        (false, _) if inv <= heterogeneity => Region::III,
        (false, _) => Region::IV,
    }
}

/// Type-1 count from which adding further type-1 clients no longer raises
/// the error of an i.i.d. two-type coalition holding `k2` type-2 clients.
pub fn two_type_turning_point(d1: u64, d2: u64, k2: u64) -> u64 {
    let (d1, d2, k2) = (d1 as f64, d2 as f64, k2 as f64);
    let root = (4.0 * k2 * k2 * (d2 - d1).powi(2) + d2 * d2).sqrt();
    let value = ((-2.0 * k2 * d1 - d2 + root) / (2.0 * d2)).ceil();
    if value > 0.0 {
        value as u64
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeEffect {
    /// 1-based type index.
    #[serde(rename = "type")]
    pub type_number: usize,
    pub data_size: u64,
    pub region: Region,
    /// Error change if one more client of this type joined.
    pub delta_eps: f64,
    pub beneficial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkEffectReport {
    pub profile: Profile,
    pub eps: f64,
    pub eta: f64,
    pub types: Vec<TypeEffect>,
}

pub fn network_effect_report(s: &Scenario, k: &Profile) -> Result<NetworkEffectReport> {
    let eps = generalization_error(s, k)?;
    let eta = eta_unchecked(s, k);
    let types = s
        .types
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let delta_eps = newcomer_effect(s, k, t.data_size);
            TypeEffect {
                type_number: j + 1,
                data_size: t.data_size,
                region: region_for(s, eta, t.data_size),
                delta_eps,
                beneficial: 1.0 / t.data_size as f64 <= eta,
            }
        })
        .collect();
    Ok(NetworkEffectReport {
        profile: k.clone(),
        eps,
        eta,
        types,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ClientType, UtilitySpec};

    fn scenario(d: u32, gamma2: f64, sigma2: f64, sizes: &[u64]) -> Scenario {
        let types = sizes
            .iter()
            .map(|&data_size| ClientType { data_size, cost: 0.0, count: 10 })
            .collect();
        Scenario::new(d, gamma2, sigma2, UtilitySpec::Power { a: 1.0, b: 1.0 }, types).unwrap()
    }

    #[test]
    fn single_participant_has_no_client_variance_term() {
        let s = scenario(10, 1.0, 0.3, &[50]);
        let eps = generalization_error(&s, &Profile(vec![1])).unwrap();
        assert!((eps - 0.2).abs() < 1e-15);
    }

    #[test]
    fn heterogeneous_coalition_error() {
        let s = scenario(4, 1.0, 0.5, &[10, 20]);
        let eps = generalization_error(&s, &Profile(vec![2, 1])).unwrap();
        assert!((eps - 4.0 / 9.0).abs() < 1e-15, "{eps}");
    }

    #[test]
    fn empty_coalition_is_an_error() {
        let s = scenario(4, 1.0, 0.5, &[10, 20]);
        assert!(matches!(generalization_error(&s, &Profile(vec![0, 0])), Err(Error::EmptyCoalition)));
        assert!(matches!(eta_threshold(&s, &Profile(vec![0, 0])), Err(Error::EmptyCoalition)));
        assert!(matches!(participation_effect(&s, &Profile(vec![0, 0]), 0), Err(Error::EmptyCoalition)));
    }

    #[test]
    fn effect_signs_around_the_threshold() {
        let s = scenario(4, 1.0, 0.5, &[10, 20, 30, 36, 40]);
        let k = Profile(vec![2, 1, 0, 0, 0]);
        assert!((eta_threshold(&s, &k).unwrap() - 1.0 / 36.0).abs() < 1e-15);
        assert!(participation_effect(&s, &k, 3).unwrap().abs() < 1e-12);
        let gain = participation_effect(&s, &k, 4).unwrap();
        assert!(gain > 0.0);
        assert!((4.0 / 9.0 - gain - 0.44375).abs() < 1e-12);
        let loss = participation_effect(&s, &k, 2).unwrap();
        assert!(loss < 0.0);
        assert!((4.0 / 9.0 - loss - 0.445_833_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_enforced() {
        let types = vec![ClientType { data_size: 10, cost: 0.0, count: 1 }];
        let s = Scenario::new(4, 1.0, 0.0, UtilitySpec::Power { a: 1.0, b: 1.0 }, types).unwrap();
        assert!(matches!(
            participation_effect(&s, &Profile(vec![1]), 0),
            Err(Error::Capacity { type_index: 1, count: 1 })
        ));
    }

    #[test]
    fn eta_can_be_negative() {
        let s = scenario(4, 1.0, 3.0, &[10, 20]);
        let eta = eta_threshold(&s, &Profile(vec![2, 1])).unwrap();
        assert!((eta - (7.0 * 0.25 / 9.0 - 1.0)).abs() < 1e-12);
        assert!(eta < 0.0);
    }

    #[test]
    fn iid_eta_matches_effects() {
        let s = scenario(4, 1.0, 0.0, &[3, 4, 10]);
        let k = Profile(vec![0, 0, 1]);
        assert!((eta_threshold(&s, &k).unwrap() - 0.3).abs() < 1e-15);
        assert!(participation_effect(&s, &k, 1).unwrap() >= 0.0);
        assert!(participation_effect(&s, &k, 0).unwrap() < 0.0);
    }

    #[test]
    fn merge_boundaries() {
        let k_a = Profile(vec![1, 0]);
        let k_b = Profile(vec![0, 1]);
        let helps = merge_benefit(&scenario(4, 1.0, 0.4, &[10, 20]), &k_a, &k_b).unwrap();
        assert!(helps.benefits && helps.harmonic_condition);
        assert!((helps.eps_a - 0.4).abs() < 1e-15);
        assert!((helps.eps_b - 0.2).abs() < 1e-15);
        assert!((helps.eps_merged - 0.35).abs() < 1e-15);

        let boundary = merge_benefit(&scenario(4, 1.0, 0.5, &[10, 20]), &k_a, &k_b).unwrap();
        assert!(!boundary.benefits && !boundary.harmonic_condition);
        assert!((boundary.eps_merged - 0.4).abs() < 1e-15);

        let iid = merge_benefit(&scenario(4, 1.0, 0.0, &[10, 20]), &k_a, &k_b).unwrap();
        assert!(iid.benefits && iid.harmonic_condition);
    }

    #[test]
    fn merge_rejects_empty_or_overfull() {
        let s = scenario(4, 1.0, 0.0, &[10]);
        assert!(matches!(
            merge_benefit(&s, &Profile(vec![0]), &Profile(vec![1])),
            Err(Error::EmptyCoalition)
        ));
        assert!(matches!(
            merge_benefit(&s, &Profile(vec![6]), &Profile(vec![6])),
            Err(Error::InvalidProfile(_))
        ));
    }

    #[test]
    fn regions_at_a_snapshot() {
        let s = scenario(4, 1.0, 0.5, &[10, 20, 40]);
        let k = Profile(vec![2, 1, 0]);
        assert_eq!(classify_region(&s, &k, 2).unwrap(), Region::I);
        assert_eq!(classify_region(&s, &k, 0).unwrap(), Region::III);

        let iid = scenario(4, 1.0, 0.0, &[10]);
        assert_eq!(classify_region(&iid, &Profile(vec![1]), 0).unwrap(), Region::II);
    }

    #[test]
    fn turning_points() {
        assert_eq!(two_type_turning_point(10, 100, 2), 2);
        assert_eq!(two_type_turning_point(10, 20, 2), 0);
        for k2 in 1..20 {
            assert_eq!(two_type_turning_point(50, 50, k2), 0);
        }
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("2, 0,1".parse::<Profile>().unwrap(), Profile(vec![2, 0, 1]));
        assert!("2,x".parse::<Profile>().is_err());
        assert!("".parse::<Profile>().is_err());
        assert_eq!(Profile(vec![3, 0]).to_string(), "3,0");
    }

    #[test]
    fn report_marks_newcomers() {
        let s = scenario(4, 1.0, 0.5, &[10, 20, 40]);
        let r = network_effect_report(&s, &Profile(vec![2, 1, 0])).unwrap();
        assert_eq!(r.types.len(), 3);
        assert_eq!(r.types[2].region, Region::I);
        assert!(r.types[2].beneficial && r.types[2].delta_eps > 0.0);
        assert!(!r.types[0].beneficial && r.types[0].delta_eps < 0.0);
    }
}
