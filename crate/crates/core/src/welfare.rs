//! Social welfare under the trading-and-sharing market and the plain
//! federated-learning benchmark, and solvers for welfare-maximizing states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::{error_of, utility_at, Profile};
use crate::scenario::{partition_types, Scenario};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Participants and buyers of each type; everyone else abstains.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SocialState {
    pub participants: Profile,
    pub buyers: Profile,
}

impl SocialState {
    pub fn new(participants: Profile, buyers: Profile) -> Self {
        SocialState { participants, buyers }
    }

    pub fn all_abstain(types: usize) -> Self {
        SocialState::new(Profile::empty(types), Profile::empty(types))
    }

    /// Participants `k`, every remaining client buying. Nobody buys when
    /// nobody trains.
    pub fn everyone_obtains(s: &Scenario, k: &Profile) -> Self {
        if k.is_empty() {
            return SocialState::all_abstain(s.type_count());
        }
        let buyers = k.0.iter().zip(&s.types).map(|(&n, t)| t.count - n).collect();
        SocialState::new(k.clone(), Profile(buyers))
    }

    pub fn obtainers(&self) -> u32 {
        self.participants.total() + self.buyers.total()
    }

    pub fn check(&self, s: &Scenario) -> Result<()> {
        let types = s.type_count();
        if self.participants.0.len() != types || self.buyers.0.len() != types {
            return Err(Error::InvalidProfile(format!(
                "social state must have {types} participant and buyer counts"
            )));
        }
        for (i, t) in s.types.iter().enumerate() {
            let used = u64::from(self.participants.0[i]) + u64::from(self.buyers.0[i]);
            if used > u64::from(t.count) {
                return Err(Error::InvalidProfile(format!(
                    "type {}: {} participants and {} buyers exceed the {} available clients",
                    i + 1,
                    self.participants.0[i],
                    self.buyers.0[i],
                    t.count
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for SocialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({};{})", self.participants, self.buyers)
    }
}

/// Welfare ties: equal up to a relative 1e-12.
pub fn same_welfare(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn participation_cost(s: &Scenario, k: &Profile) -> f64 {
    k.0.iter().zip(&s.types).map(|(&n, t)| f64::from(n) * t.cost).sum()
}

/// Total client payoff; transfers cancel under budget balance.
pub fn welfare_mts(s: &Scenario, st: &SocialState) -> Result<f64> {
    st.check(s)?;
    Ok(welfare_mts_unchecked(s, st))
}

pub(crate) fn welfare_mts_unchecked(s: &Scenario, st: &SocialState) -> f64 {
    f64::from(st.obtainers()) * utility_at(s, &st.participants) - participation_cost(s, &st.participants)
}

pub fn welfare_fl(s: &Scenario, k: &Profile) -> Result<f64> {
    k.check(s)?;
    Ok(welfare_fl_unchecked(s, k))
}

fn welfare_fl_unchecked(s: &Scenario, k: &Profile) -> f64 {
    f64::from(k.total()) * utility_at(s, k) - participation_cost(s, k)
}

/// Welfare when every client obtains the model around participants `k`
/// (0 for the empty profile).
fn obtain_all_welfare(s: &Scenario, k: &Profile) -> f64 {
    if k.is_empty() {
        0.0
    } else {
        f64::from(s.total_clients()) * utility_at(s, k) - participation_cost(s, k)
    }
}

/// Mixed-radix walk over every profile `0 <= K_i <= N_i`.
pub struct ProfileIter {
    limits: Vec<u32>,
    next: Option<Vec<u32>>,
}

impl ProfileIter {
    pub fn new(s: &Scenario) -> Self {
        let limits: Vec<u32> = s.types.iter().map(|t| t.count).collect();
        let next = Some(vec![0; limits.len()]);
        ProfileIter { limits, next }
    }
}

impl Iterator for ProfileIter {
    type Item = Profile;

    fn next(&mut self) -> Option<Profile> {
        let current = self.next.take()?;
        let mut advanced = current.clone();
        for i in (0..advanced.len()).rev() {
            if advanced[i] < self.limits[i] {
                advanced[i] += 1;
                self.next = Some(advanced);
                break;
            }
            advanced[i] = 0;
        }
        Some(Profile(current))
    }
}

pub fn profile_count(s: &Scenario) -> u128 {
    s.types.iter().map(|t| u128::from(t.count) + 1).product()
}

fn check_cap(s: &Scenario, cap: u64) -> Result<()> {
    let profiles = profile_count(s);
    if profiles > u128::from(cap) {
        return Err(Error::CapExceeded { profiles, cap });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Brute,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub method: SolveMethod,
    pub w_star: f64,
    /// Every maximizer in canonical form (all obtain, or all abstain),
    /// sorted lexicographically.
    pub optimal_states: Vec<SocialState>,
    /// The lexicographically smallest maximizer.
    pub recommended: SocialState,
    pub w_mts: f64,
    /// Benchmark welfare of the recommended participants alone.
    pub w_fl: f64,
    /// `None` when nobody trains.
    pub eps: Option<f64>,
    pub profiles_evaluated: u64,
}

/// Tracks the running maximum and every state tied with it.
struct Maximizers {
    best: f64,
    states: Vec<Profile>,
    evaluated: u64,
}

impl Maximizers {
    fn new(types: usize) -> Self {
        // The all-abstain state always achieves 0.
        Maximizers {
            best: 0.0,
            states: vec![Profile::empty(types)],
            evaluated: 0,
        }
    }

    fn offer(&mut self, k: Profile, w: f64) {
        self.evaluated += 1;
        if k.is_empty() {
            return;
        }
        if same_welfare(w, self.best) {
            self.best = self.best.max(w);
            if !self.states.contains(&k) {
                self.states.push(k);
            }
        } else if w > self.best {
            self.best = w;
            self.states.clear();
            self.states.push(k);
        }
    }

    fn into_report(mut self, s: &Scenario, method: SolveMethod) -> WelfareReport {
        // Entries admitted as ties of an earlier, slightly lower best can
        // drift out of tolerance; keep only those tied with the final value.
        let best = self.best;
        self.states.retain(|k| same_welfare(obtain_all_welfare(s, k), best));
        let mut optimal_states: Vec<SocialState> =
            self.states.iter().map(|k| SocialState::everyone_obtains(s, k)).collect();
        optimal_states.sort();
        optimal_states.dedup();
        let recommended = optimal_states[0].clone();
        WelfareReport {
            method,
            w_star: best,
            w_mts: welfare_mts_unchecked(s, &recommended),
            w_fl: welfare_fl_unchecked(s, &recommended.participants),
            eps: error_of(s, &recommended.participants),
            recommended,
            optimal_states,
            profiles_evaluated: self.evaluated,
        }
    }
}

pub fn solve_efficient_brute(s: &Scenario) -> Result<WelfareReport> {
    solve_efficient_brute_with_cap(s, DEFAULT_ENUMERATION_CAP)
}

/// Exhaustive search. By the all-or-none property only states in which
/// everybody or nobody obtains the model are candidates.
pub fn solve_efficient_brute_with_cap(s: &Scenario, cap: u64) -> Result<WelfareReport> {
    check_cap(s, cap)?;
    let mut max = Maximizers::new(s.type_count());
    for k in ProfileIter::new(s) {
        let w = obtain_all_welfare(s, &k);
        max.offer(k, w);
    }
    Ok(max.into_report(s, SolveMethod::Brute))
}

/// Candidate search guided by the type partition. With no high types only
/// all-or-none profiles are evaluated. Otherwise low types start at zero,
/// each high type tries its corners and the integer neighbours of the
/// stationary points of welfare along its coordinate, and a coordinate-wise
/// line search over every type polishes each candidate.
pub fn solve_efficient_structured(s: &Scenario) -> Result<WelfareReport> {
    let partition = partition_types(s);
    let types = s.type_count();
    let mut max = Maximizers::new(types);

    if partition.high.is_empty() {
        for k in corner_profiles(s, &(0..types).collect::<Vec<_>>(), &Profile::empty(types)) {
            let w = obtain_all_welfare(s, &k);
            max.offer(k, w);
        }
        return Ok(max.into_report(s, SolveMethod::Structured));
    }

    let mut seeds = corner_profiles(s, &partition.high, &Profile::empty(types));
    let corners = seeds.clone();
    for base in &corners {
        for &j in &partition.high {
            for x in stationary_points(s, base, j) {
                for candidate in [x.floor(), x.ceil()] {
                    let value = candidate.clamp(0.0, f64::from(s.types[j].count)) as u32;
                    seeds.push(base.with(j, value));
                }
            }
        }
    }
    seeds.sort();
    seeds.dedup();

    for seed in seeds {
        let w = obtain_all_welfare(s, &seed);
        max.offer(seed.clone(), w);
        let (polished, visited) = line_search(s, seed);
        for (k, w) in visited {
            max.offer(k, w);
        }
        let w = obtain_all_welfare(s, &polished);
        max.offer(polished, w);
    }
    Ok(max.into_report(s, SolveMethod::Structured))
}

/// All profiles with `K_i in {0, N_i}` for `i` in `free`, other coordinates
/// copied from `base`.
fn corner_profiles(s: &Scenario, free: &[usize], base: &Profile) -> Vec<Profile> {
    let mut out = vec![base.clone()];
    for &i in free {
        let full = s.types[i].count;
        out = out
            .into_iter()
            .flat_map(|k| [k.with(i, 0), k.with(i, full)])
            .collect();
    }
    out.sort();
    out.dedup();
    out
}

/// Continuous error along coordinate `j` at real-valued count `x`.
fn error_along(s: &Scenario, k: &Profile, j: usize, x: f64) -> (f64, f64) {
    let mut others = 0.0;
    let mut inverse = 0.0;
    for (i, (&n, t)) in k.0.iter().zip(&s.types).enumerate() {
        if i != j {
            others += f64::from(n);
            inverse += f64::from(n) / t.data_size as f64;
        }
    }
    let size = s.types[j].data_size as f64;
    let total = others + x;
    let scale = s.data_scale();
    let eps = scale * (inverse + x / size) / (total * total) + (total - 1.0) / total * s.sigma2;
    let slope = scale * (total / size - 2.0 * (inverse + x / size)) / (total * total * total)
        + s.sigma2 / (total * total);
    (eps, slope)
}

/// `dW/dK_j` under the continuous relaxation, everyone obtaining.
fn welfare_slope(s: &Scenario, k: &Profile, j: usize, x: f64) -> f64 {
    let (eps, eps_slope) = error_along(s, k, j, x);
    f64::from(s.total_clients()) * s.utility.derivative(eps) * eps_slope - s.types[j].cost
}

const ROOT_TOLERANCE: f64 = 1e-9;
const SCAN_STEPS_PER_UNIT: u32 = 8;

/// Roots of the welfare slope along coordinate `j` within `[1, N_j]`.
fn stationary_points(s: &Scenario, base: &Profile, j: usize) -> Vec<f64> {
    let upper = f64::from(s.types[j].count);
    if upper <= 1.0 {
        return Vec::new();
    }
    let steps = (upper as u32 - 1) * SCAN_STEPS_PER_UNIT;
    let at = |n: u32| 1.0 + (upper - 1.0) * f64::from(n) / f64::from(steps);
    let mut roots = Vec::new();
    let mut lo = at(0);
    let mut f_lo = welfare_slope(s, base, j, lo);
    for n in 1..=steps {
        let hi = at(n);
        let f_hi = welfare_slope(s, base, j, hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo.signum() != f_hi.signum() && f_hi != 0.0 {
            roots.push(bisect(|x| welfare_slope(s, base, j, x), lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    if f_lo == 0.0 {
        roots.push(lo);
    }
    roots
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Repeatedly moves single coordinates to their best value until no move
/// improves welfare. Returns the fixed point and every profile visited.
fn line_search(s: &Scenario, mut k: Profile) -> (Profile, Vec<(Profile, f64)>) {
    let mut visited = Vec::new();
    let mut current = obtain_all_welfare(s, &k);
    loop {
        let mut improved = false;
        for i in 0..s.type_count() {
            for value in 0..=s.types[i].count {
                if value == k.0[i] {
                    continue;
                }
                let candidate = k.with(i, value);
                let w = obtain_all_welfare(s, &candidate);
                visited.push((candidate.clone(), w));
                if w > current && !same_welfare(w, current) {
                    current = w;
                    k = candidate;
                    improved = true;
                }
            }
        }
        if !improved {
            return (k, visited);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlOptimum {
    pub participants: Profile,
    pub w_fl: f64,
}

/// Best welfare reachable when the model can only be obtained by training.
pub fn fl_optimum(s: &Scenario) -> Result<FlOptimum> {
    fl_optimum_with_cap(s, DEFAULT_ENUMERATION_CAP)
}

pub fn fl_optimum_with_cap(s: &Scenario, cap: u64) -> Result<FlOptimum> {
    check_cap(s, cap)?;
    let mut best = FlOptimum {
        participants: Profile::empty(s.type_count()),
        w_fl: 0.0,
    };
    // ProfileIter yields profiles in lexicographic order, so keeping the
    // first of equal values keeps the smallest.
    for k in ProfileIter::new(s) {
        let w = welfare_fl_unchecked(s, &k);
        if w > best.w_fl && !same_welfare(w, best.w_fl) {
            best = FlOptimum { participants: k, w_fl: w };
        }
    }
    Ok(best)
}

/// Brute force when the enumeration fits under the default cap, the
/// structured search otherwise.
pub fn solve_efficient(s: &Scenario) -> Result<WelfareReport> {
    match solve_efficient_brute(s) {
        Err(Error::CapExceeded { .. }) => solve_efficient_structured(s),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeRow {
    pub state: SocialState,
    pub eps: Option<f64>,
    pub welfare: f64,
}

/// Welfare of every social state, for small instances.
pub fn welfare_landscape(s: &Scenario, cap: u64) -> Result<Vec<LandscapeRow>> {
    let states: u128 = s
        .types
        .iter()
        .map(|t| {
            let n = u128::from(t.count);
            (n + 1) * (n + 2) / 2
        })
        .product();
    if states > u128::from(cap) {
        return Err(Error::CapExceeded { profiles: states, cap });
    }
    let mut rows = Vec::new();
    for k in ProfileIter::new(s) {
        let room = Profile(k.0.iter().zip(&s.types).map(|(&n, t)| t.count - n).collect());
        let mut buyers = vec![0u32; s.type_count()];
        loop {
            let state = SocialState::new(k.clone(), Profile(buyers.clone()));
            rows.push(LandscapeRow {
                eps: error_of(s, &k),
                welfare: welfare_mts_unchecked(s, &state),
                state,
            });
            let Some(i) = (0..buyers.len()).rev().find(|&i| buyers[i] < room.0[i]) else {
                break;
            };
            buyers[i] += 1;
            for b in &mut buyers[i + 1..] {
                *b = 0;
            }
        }
    }
    Ok(rows)
}
