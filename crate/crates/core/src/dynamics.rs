//! Sequential best-response play under a posted mechanism.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanism::{client_payoff, settle, Decision, Mechanism, MechanismKind};
use crate::scenario::Scenario;
use crate::welfare::SocialState;

/// The `slot`-th client of type `type_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ClientId {
    #[serde(rename = "type", serialize_with = "crate::report::one_based")]
    pub type_index: usize,
    pub slot: u32,
}

/// Every client, grouped by type.
pub fn clients(s: &Scenario) -> Vec<ClientId> {
    s.types
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.count).map(move |slot| ClientId { type_index: i, slot }))
        .collect()
}

/// The role the mechanism recommends to a client: the first `K*_i` slots of
/// each type join, the next `B*_i` buy.
pub fn recommended_role(target: &SocialState, c: ClientId) -> Decision {
    let k = target.participants.0[c.type_index];
    let b = target.buyers.0[c.type_index];
    if c.slot < k {
        Decision::Join
    } else if c.slot < k + b {
        Decision::Buy
    } else {
        Decision::Abstain
    }
}

/// Per-client decisions, laid out like [`clients`].
pub fn decisions_for_state(s: &Scenario, st: &SocialState) -> Result<Vec<Decision>> {
    st.check(s)?;
    Ok(clients(s).into_iter().map(|c| recommended_role(st, c)).collect())
}

pub fn state_of(s: &Scenario, ids: &[ClientId], decisions: &[Decision]) -> SocialState {
    let mut st = SocialState::all_abstain(s.type_count());
    for (c, d) in ids.iter().zip(decisions) {
        match d {
            Decision::Join => st.participants.0[c.type_index] += 1,
            Decision::Buy => st.buyers.0[c.type_index] += 1,
            Decision::Abstain => {}
        }
    }
    st
}

fn moved(st: &SocialState, i: usize, from: Decision, to: Decision) -> SocialState {
    let mut next = st.clone();
    match from {
        Decision::Join => next.participants.0[i] -= 1,
        Decision::Buy => next.buyers.0[i] -= 1,
        Decision::Abstain => {}
    }
    match to {
        Decision::Join => next.participants.0[i] += 1,
        Decision::Buy => next.buyers.0[i] += 1,
        Decision::Abstain => {}
    }
    next
}

/// Payoff a type-`i` client currently playing `from` expects from playing
/// `to`, with the quote recomputed at the resulting state.
pub fn anticipated_payoff(
    s: &Scenario,
    mech: &Mechanism,
    st: &SocialState,
    i: usize,
    from: Decision,
    to: Decision,
) -> f64 {
    let next = moved(st, i, from, to);
    let q = mech.quote(s, &next.participants);
    client_payoff(s, &next, &q, i, to)
}

/// Payoffs of the three options, as anticipated by the mover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptionPayoffs {
    pub abstain: f64,
    pub join: f64,
    pub buy: f64,
}

impl OptionPayoffs {
    pub fn get(&self, d: Decision) -> f64 {
        match d {
            Decision::Abstain => self.abstain,
            Decision::Join => self.join,
            Decision::Buy => self.buy,
        }
    }
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Response {
    pub decision: Decision,
    pub payoffs: OptionPayoffs,
    /// More than one option attained the best payoff.
    pub tie: bool,
}

const PRIORITY: [Decision; 3] = [Decision::Join, Decision::Buy, Decision::Abstain];

pub fn best_response(
    s: &Scenario,
    mech: &Mechanism,
    st: &SocialState,
    client: ClientId,
    current: Decision,
) -> Response {
    let i = client.type_index;
    let payoffs = OptionPayoffs {
        abstain: anticipated_payoff(s, mech, st, i, current, Decision::Abstain),
        join: anticipated_payoff(s, mech, st, i, current, Decision::Join),
        buy: anticipated_payoff(s, mech, st, i, current, Decision::Buy),
    };
    let best = PRIORITY.iter().map(|&d| payoffs.get(d)).fold(f64::NEG_INFINITY, f64::max);
    let maximizers: Vec<Decision> =
        PRIORITY.iter().copied().filter(|&d| tied(payoffs.get(d), best)).collect();
    let recommended = mech.recommendation.as_ref().map(|r| recommended_role(r, client));
    let decision = match recommended {
        Some(r) if maximizers.contains(&r) => r,
        _ => maximizers[0],
    };
    Response { decision, payoffs, tie: maximizers.len() > 1 }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    AllAbstain,
    /// Every client picks a role uniformly at random.
    Random(u64),
    State(SocialState),
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOrder {
    /// By type, then by slot.
    Natural,
    /// A seeded random permutation, fixed for the whole run.
    Shuffled(u64),
    /// Positions into [`clients`].
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub round: u64,
    pub client: ClientId,
    pub from: Decision,
    pub to: Decision,
    pub tie: bool,
    pub payoffs: OptionPayoffs,
    pub state: SocialState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsTrace {
    pub mechanism: MechanismKind,
    pub initial: SocialState,
    pub order: Vec<ClientId>,
    pub transitions: Vec<Transition>,
    pub converged: bool,
    /// Rounds played, including the final round without changes.
    pub rounds: u64,
    pub final_state: SocialState,
    /// Sum of client payoffs, after settlement when the mechanism settles.
    pub final_welfare: f64,
    pub final_residual: f64,
}

pub fn default_max_rounds(s: &Scenario) -> u64 {
    let n = u64::from(s.total_clients());
    n * (n + 1)
}

fn initial_decisions(s: &Scenario, initial: &InitialState) -> Result<Vec<Decision>> {
    let n = s.total_clients() as usize;
    match initial {
        InitialState::AllAbstain => Ok(vec![Decision::Abstain; n]),
        InitialState::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n).map(|_| Decision::ALL[rng.gen_range(0..3)]).collect())
        }
        InitialState::State(st) => decisions_for_state(s, st),
    }
}

fn update_order(s: &Scenario, order: &UpdateOrder) -> Result<Vec<usize>> {
    let n = s.total_clients() as usize;
    match order {
        UpdateOrder::Natural => Ok((0..n).collect()),
        UpdateOrder::Shuffled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            Ok(perm)
        }
        UpdateOrder::Explicit(perm) => {
            let mut seen = vec![false; n];
            for &p in perm {
                if p >= n || std::mem::replace(&mut seen[p], true) {
                    return Err(Error::InvalidProfile(format!(
                        "update order must be a permutation of 0..{n}"
                    )));
                }
            }
            if perm.len() != n {
                return Err(Error::InvalidProfile(format!(
                    "update order must be a permutation of 0..{n}"
                )));
            }
            Ok(perm.clone())
        }
    }
}

/// Round-robin best responses until a full round changes nothing or
/// `max_rounds` rounds have been played.
pub fn run_dynamics(
    s: &Scenario,
    mech: &Mechanism,
    initial: &InitialState,
    order: &UpdateOrder,
    max_rounds: u64,
) -> Result<DynamicsTrace> {
    if max_rounds == 0 {
        return Err(Error::InvalidProfile("max_rounds must be at least 1".to_string()));
    }
    let ids = clients(s);
    let mut decisions = initial_decisions(s, initial)?;
    let perm = update_order(s, order)?;
    let start = state_of(s, &ids, &decisions);
    let mut st = start.clone();
    let mut transitions = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let mut changed = false;
        for &p in &perm {
            let c = ids[p];
            let from = decisions[p];
            let r = best_response(s, mech, &st, c, from);
            if r.decision != from {
                st = moved(&st, c.type_index, from, r.decision);
                decisions[p] = r.decision;
                changed = true;
                transitions.push(Transition {
                    round: rounds,
                    client: c,
                    from,
                    to: r.decision,
                    tie: r.tie,
                    payoffs: r.payoffs,
                    state: st.clone(),
                });
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let q = mech.quote(s, &st.participants);
    let settlement = settle(s, &st, &q)?;
    let final_welfare = if mech.settles() {
        settlement.payoffs.total_post()
    } else {
        settlement.payoffs.total_pre()
    };
    Ok(DynamicsTrace {
        mechanism: mech.kind,
        initial: start,
        order: perm.iter().map(|&p| ids[p]).collect(),
        transitions,
        converged,
        rounds,
        final_residual: if mech.settles() { settlement.post_residual } else { settlement.residual },
        final_state: st,
        final_welfare,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    #[serde(rename = "type", serialize_with = "crate::report::one_based")]
    pub type_index: usize,
    pub from: Decision,
    pub to: Decision,
    pub current: f64,
    pub deviated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCheck {
    pub is_nash: bool,
    pub deviations: Vec<Deviation>,
}

/// Checks every unilateral deviation, quoting at the deviated state.
pub fn verify_equilibrium(s: &Scenario, mech: &Mechanism, st: &SocialState) -> Result<EquilibriumCheck> {
    st.check(s)?;
    let q = mech.quote(s, &st.participants);
    let mut deviations = Vec::new();
    for (i, t) in s.types.iter().enumerate() {
        let k = st.participants.0[i];
        let b = st.buyers.0[i];
        for (from, present) in [
            (Decision::Join, k),
            (Decision::Buy, b),
            (Decision::Abstain, t.count - k - b),
        ] {
            if present == 0 {
                continue;
            }
            let current = client_payoff(s, st, &q, i, from);
            for to in Decision::ALL {
                if to == from {
                    continue;
                }
                let deviated = anticipated_payoff(s, mech, st, i, from, to);
                if deviated > current && !tied(deviated, current) {
                    deviations.push(Deviation { type_index: i, from, to, current, deviated });
                }
            }
        }
    }
    Ok(EquilibriumCheck { is_nash: deviations.is_empty(), deviations })
}
