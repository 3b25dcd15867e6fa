//! Posted prices and participation rewards, client payoffs, budget
//! accounting and settlement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::{error_of, utility_at, Profile};
use crate::scenario::Scenario;
use crate::welfare::{solve_efficient, SocialState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Abstain,
    Join,
    Buy,
}

impl Decision {
    pub const ALL: [Decision; 3] = [Decision::Abstain, Decision::Join, Decision::Buy];
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Abstain => "abstain",
            Decision::Join => "join",
            Decision::Buy => "buy",
        })
    }
}

/// Which pricing rule produced a quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Low heterogeneity, `theta < 0`, `W* <= 0`.
    LowHetNegativeThetaNoWelfare,
    /// Low heterogeneity, `theta < 0`, `W* > 0`.
    LowHetNegativeTheta,
    /// Low heterogeneity, `theta >= 0`.
    LowHetNonNegativeTheta,
    /// High heterogeneity, `U < avg cost`, `W* > 0`.
    HighHetUtilityPrice,
    /// High heterogeneity, every other case.
    HighHetAverageCost,
    /// Price equal to the model utility, no rewards.
    ModifiedFl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Semts,
    ModifiedFl,
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "semts" => Ok(MechanismKind::Semts),
            "modified_fl" => Ok(MechanismKind::ModifiedFl),
            other => Err(Error::Parse(format!("unknown mechanism {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismQuote {
    pub price: f64,
    pub rewards: Vec<f64>,
    pub branch: Branch,
    /// Only computed on the low-heterogeneity branches.
    pub theta: Option<f64>,
    /// Model utility at the quoted profile (0 without a model).
    pub utility: f64,
    pub recommendation: Option<SocialState>,
}

/// `U` at `k` with coordinate `i` replaced by `value`.
fn utility_with(s: &Scenario, k: &Profile, i: usize, value: u32) -> f64 {
    utility_at(s, &k.with(i, value))
}

fn average_cost(s: &Scenario, k: &Profile) -> f64 {
    let total: f64 = k.0.iter().zip(&s.types).map(|(&n, t)| f64::from(n) * t.cost).sum();
    total / f64::from(s.total_clients())
}

/// Intermediate-state steering function. Each coordinate is overridden
/// separately with the others held at their current values.
pub fn theta(s: &Scenario, k: &Profile) -> f64 {
    let types = s.type_count() as f64;
    let total = f64::from(s.total_clients());
    s.types
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let n = f64::from(t.count);
            let ki = f64::from(k.0[i]);
            (n - ki) / (n * types) * utility_with(s, k, i, 0)
                - ki / (n * types) * utility_with(s, k, i, t.count)
                - ki * t.cost / total
        })
        .sum()
}

pub fn semts_quote(
    s: &Scenario,
    k: &Profile,
    w_star: f64,
    recommendation: Option<SocialState>,
) -> MechanismQuote {
    let u = utility_at(s, k);
    let avg = average_cost(s, k);
    let costs = s.types.iter().map(|t| t.cost);
    if s.is_low_heterogeneity() {
        let th = theta(s, k);
        let (price, branch, rewards): (f64, Branch, Vec<f64>) = if th < 0.0 {
            if w_star <= 0.0 {
                (u, Branch::LowHetNegativeThetaNoWelfare, costs.map(|c| c - avg).collect())
            } else {
                (u, Branch::LowHetNegativeTheta, costs.map(|c| c - u).collect())
            }
        } else {
            (u - th, Branch::LowHetNonNegativeTheta, costs.map(|c| c - u + th).collect())
        };
        MechanismQuote { price, rewards, branch, theta: Some(th), utility: u, recommendation }
    } else {
        let (price, branch, rewards) = if u < avg && w_star > 0.0 {
            (u, Branch::HighHetUtilityPrice, costs.map(|c| c - u).collect())
        } else {
            let price = if u < avg { u } else { avg };
            (price, Branch::HighHetAverageCost, costs.map(|c| c - avg).collect())
        };
        MechanismQuote { price, rewards, branch, theta: None, utility: u, recommendation }
    }
}

pub fn benchmark_modified_fl_quote(s: &Scenario, k: &Profile) -> MechanismQuote {
    let u = utility_at(s, k);
    MechanismQuote {
        price: u,
        rewards: vec![0.0; s.type_count()],
        branch: Branch::ModifiedFl,
        theta: None,
        utility: u,
        recommendation: None,
    }
}

/// A mechanism ready to quote at any profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pub w_star: f64,
    pub recommendation: Option<SocialState>,
}

impl Mechanism {
    /// SEMTS, with the efficient state found by [`solve_efficient`].
    pub fn semts(s: &Scenario) -> Result<Self> {
        let report = solve_efficient(s)?;
        Ok(Mechanism::semts_with(report.w_star, report.recommended))
    }

    pub fn semts_with(w_star: f64, recommendation: SocialState) -> Self {
        Mechanism {
            kind: MechanismKind::Semts,
            w_star,
            recommendation: Some(recommendation),
        }
    }

    pub fn modified_fl() -> Self {
        Mechanism {
            kind: MechanismKind::ModifiedFl,
            w_star: 0.0,
            recommendation: None,
        }
    }

    pub fn build(kind: MechanismKind, s: &Scenario) -> Result<Self> {
        match kind {
            MechanismKind::Semts => Mechanism::semts(s),
            MechanismKind::ModifiedFl => Ok(Mechanism::modified_fl()),
        }
    }

    pub fn quote(&self, s: &Scenario, k: &Profile) -> MechanismQuote {
        match self.kind {
            MechanismKind::Semts => semts_quote(s, k, self.w_star, self.recommendation.clone()),
            MechanismKind::ModifiedFl => benchmark_modified_fl_quote(s, k),
        }
    }

    /// Whether the budget residual is redistributed to obtainers.
    pub fn settles(&self) -> bool {
        self.kind == MechanismKind::Semts
    }
}

/// Pre-settlement payoff of a type-`i` client taking `decision` in `st`.
pub fn client_payoff(
    s: &Scenario,
    st: &SocialState,
    q: &MechanismQuote,
    i: usize,
    decision: Decision,
) -> f64 {
    let u = utility_at(s, &st.participants);
    match decision {
        Decision::Abstain => 0.0,
        Decision::Join => u - s.types[i].cost + q.rewards[i],
        Decision::Buy => u - q.price,
    }
}

/// Buyer payments minus participation rewards; zero means balanced.
pub fn budget_residual(st: &SocialState, q: &MechanismQuote) -> f64 {
    let paid: f64 = st.buyers.0.iter().map(|&b| f64::from(b) * q.price).sum();
    let rewarded: f64 = st
        .participants
        .0
        .iter()
        .zip(&q.rewards)
        .map(|(&k, r)| f64::from(k) * r)
        .sum();
    paid - rewarded
}

/// Payoff of the `count` type-`type_index` clients sharing one decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolePayoff {
    #[serde(rename = "type", serialize_with = "crate::report::one_based")]
    pub type_index: usize,
    pub decision: Decision,
    pub count: u32,
    pub pre: f64,
    pub post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffVector {
    pub roles: Vec<RolePayoff>,
}

impl PayoffVector {
    pub fn total_pre(&self) -> f64 {
        self.roles.iter().map(|r| f64::from(r.count) * r.pre).sum()
    }

    pub fn total_post(&self) -> f64 {
        self.roles.iter().map(|r| f64::from(r.count) * r.post).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settlement {
    pub residual: f64,
    /// Lump sum credited to every participant and buyer.
    pub transfer: f64,
    pub recipients: u32,
    /// Residual left after the transfers.
    pub post_residual: f64,
    pub payoffs: PayoffVector,
}

/// Hands the residual back in equal shares to everyone who obtained the
/// model.
pub fn settle(s: &Scenario, st: &SocialState, q: &MechanismQuote) -> Result<Settlement> {
    st.check(s)?;
    let residual = budget_residual(st, q);
    let recipients = st.obtainers();
    let transfer = if recipients == 0 {
        if residual != 0.0 {
            return Err(Error::Unsettleable(residual));
        }
        0.0
    } else {
        residual / f64::from(recipients)
    };
    let mut roles = Vec::new();
    for (i, t) in s.types.iter().enumerate() {
        let k = st.participants.0[i];
        let b = st.buyers.0[i];
        for (decision, count) in [
            (Decision::Join, k),
            (Decision::Buy, b),
            (Decision::Abstain, t.count - k - b),
        ] {
            if count == 0 {
                continue;
            }
            let pre = client_payoff(s, st, q, i, decision);
            let post = if decision == Decision::Abstain { pre } else { pre + transfer };
            roles.push(RolePayoff { type_index: i, decision, count, pre, post });
        }
    }
    Ok(Settlement {
        residual,
        transfer,
        recipients,
        post_residual: residual - f64::from(recipients) * transfer,
        payoffs: PayoffVector { roles },
    })
}

/// Quote, residual and settlement at one state, as printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuoteReport {
    pub state: SocialState,
    pub eps: Option<f64>,
    pub quote: MechanismQuote,
    pub residual: f64,
    pub settlement: Settlement,
}

pub fn quote_report(s: &Scenario, mech: &Mechanism, st: &SocialState) -> Result<QuoteReport> {
    st.check(s)?;
    let quote = mech.quote(s, &st.participants);
    let settlement = settle(s, st, &quote)?;
    Ok(QuoteReport {
        state: st.clone(),
        eps: error_of(s, &st.participants),
        residual: settlement.residual,
        quote,
        settlement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scenario::{ClientType, UtilitySpec};

    fn state(k: &[u32], b: &[u32]) -> SocialState {
        SocialState::new(Profile(k.to_vec()), Profile(b.to_vec()))
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn theta_on_s2() {
        let s = fixtures::s2();
        assert!(close(theta(&s, &Profile(vec![2, 0])), -4.0 / 3.0));
        assert!(close(theta(&s, &Profile(vec![1, 0])), -2.0 / 3.0));
        assert_eq!(theta(&s, &Profile(vec![0, 0])), 0.0);
    }

    #[test]
    fn s2_quote_at_efficient_state() {
        let s = fixtures::s2();
        let q = semts_quote(&s, &Profile(vec![2, 0]), 26.0, None);
        assert_eq!(q.branch, Branch::LowHetNegativeTheta);
        assert!(close(q.price, 10.0));
        assert!(close(q.rewards[0], -8.0));
        assert!(close(q.rewards[1], 10.0));
        let st = state(&[2, 0], &[0, 1]);
        assert_eq!(client_payoff(&s, &st, &q, 0, Decision::Join), 0.0);
        assert_eq!(client_payoff(&s, &st, &q, 1, Decision::Buy), 0.0);
        assert!(close(budget_residual(&st, &q), 26.0));
    }

    #[test]
    fn s2_quote_with_one_participant() {
        let s = fixtures::s2();
        let q = semts_quote(&s, &Profile(vec![1, 0]), 26.0, None);
        assert!(close(q.price, 5.0));
        assert!(close(q.rewards[0], -3.0));
        let st = state(&[1, 0], &[0, 0]);
        assert_eq!(client_payoff(&s, &st, &q, 0, Decision::Join), 0.0);
    }

    #[test]
    fn high_heterogeneity_average_cost_branch() {
        let s = Scenario::new(
            2,
            1.0,
            0.5,
            UtilitySpec::Power { a: 1.0, b: 1.0 },
            vec![ClientType { data_size: 10, cost: 0.1, count: 2 }],
        )
        .unwrap();
        assert!(!s.is_low_heterogeneity());
        let k = Profile(vec![1]);
        let q = semts_quote(&s, &k, 1.0, None);
        assert_eq!(q.branch, Branch::HighHetAverageCost);
        assert!(close(q.price, 0.05));
        let st = state(&[1], &[1]);
        let join = client_payoff(&s, &st, &q, 0, Decision::Join);
        let buy = client_payoff(&s, &st, &q, 0, Decision::Buy);
        assert!(close(join, buy));
        assert!(close(join, 5.0 - 0.05));
    }

    #[test]
    fn modified_fl_quotes() {
        let s2 = fixtures::s2();
        let q = benchmark_modified_fl_quote(&s2, &Profile(vec![2, 0]));
        assert!(close(q.price, 10.0));
        assert_eq!(q.rewards, vec![0.0, 0.0]);
        let st = state(&[2, 0], &[0, 1]);
        assert!(close(client_payoff(&s2, &st, &q, 0, Decision::Join), 8.0));
        assert!(close(client_payoff(&s2, &st, &q, 1, Decision::Buy), 0.0));

        let empty = benchmark_modified_fl_quote(&s2, &Profile(vec![0, 0]));
        assert_eq!(empty.price, 0.0);

        let s1 = fixtures::s1();
        let q1 = benchmark_modified_fl_quote(&s1, &Profile(vec![3]));
        assert!(close(q1.price, 15.0));
        assert!(close(client_payoff(&s1, &state(&[3], &[0]), &q1, 0, Decision::Join), 14.5));
    }

    #[test]
    fn zero_quote_has_no_residual() {
        let q = MechanismQuote {
            price: 0.0,
            rewards: vec![0.0, 0.0],
            branch: Branch::ModifiedFl,
            theta: None,
            utility: 0.0,
            recommendation: None,
        };
        assert_eq!(budget_residual(&state(&[1, 0], &[1, 1]), &q), 0.0);
    }

    #[test]
    fn settlement_on_s2() {
        let s = fixtures::s2();
        let st = state(&[2, 0], &[0, 1]);
        let q = semts_quote(&s, &st.participants, 26.0, None);
        let out = settle(&s, &st, &q).unwrap();
        assert!(close(out.transfer, 26.0 / 3.0));
        assert!(close(out.post_residual, 0.0));
        assert!(out.payoffs.roles.iter().all(|r| close(r.post, 26.0 / 3.0)));
        assert!(close(out.payoffs.total_post(), 26.0));
    }

    #[test]
    fn nobody_obtaining_leaves_nothing_to_settle() {
        let s = fixtures::s2();
        let q = semts_quote(&s, &Profile(vec![0, 0]), 26.0, None);
        let out = settle(&s, &SocialState::all_abstain(2), &q).unwrap();
        assert_eq!(out.residual, 0.0);
        assert_eq!(out.transfer, 0.0);
        assert_eq!(out.payoffs.total_post(), 0.0);
    }
}
