//! Welfare of competing mechanisms as the per-sample participation cost
//! varies.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{default_max_rounds, run_dynamics, InitialState, UpdateOrder};
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::performance::Profile;
use crate::scenario::Scenario;
use crate::welfare::{fl_optimum, solve_efficient};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Costs of the template are replaced by `c * D_i` on every row.
    pub template: Scenario,
    pub costs: Vec<f64>,
}

impl SweepSpec {
    pub fn new(template: Scenario, costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Validation(vec!["cost grid is empty".to_string()]));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Validation(vec![format!(
                "cost grid values must be finite and non-negative (got {c})"
            )]));
        }
        if costs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(vec!["cost grid must be strictly increasing".to_string()]));
        }
        Ok(SweepSpec { template, costs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub w_semts: f64,
    pub w_fl_opt: f64,
    pub w_modified_fl: f64,
    pub k_star: Profile,
    pub b_star: Profile,
    pub eps_star: Option<f64>,
    /// SEMTS dynamics from all-abstain, as a cross-check of `w_semts`.
    pub semts_dynamics_welfare: f64,
    pub semts_converged: bool,
    pub modified_fl_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

fn evaluate(s: &Scenario) -> Result<SweepOutcome> {
    let efficient = solve_efficient(s)?;
    let fl = fl_optimum(s)?;
    let rounds = default_max_rounds(s);
    let semts = Mechanism::semts_with(efficient.w_star, efficient.recommended.clone());
    let semts_trace = run_dynamics(s, &semts, &InitialState::AllAbstain, &UpdateOrder::Natural, rounds)?;
    let modified = run_dynamics(
        s,
        &Mechanism::modified_fl(),
        &InitialState::AllAbstain,
        &UpdateOrder::Natural,
        rounds,
    )?;
    Ok(SweepOutcome {
        w_semts: efficient.w_star,
        w_fl_opt: fl.w_fl,
        w_modified_fl: modified.final_welfare,
        k_star: efficient.recommended.participants.clone(),
        b_star: efficient.recommended.buyers.clone(),
        eps_star: efficient.eps,
        semts_dynamics_welfare: semts_trace.final_welfare,
        semts_converged: semts_trace.converged,
        modified_fl_converged: modified.converged,
    })
}

/// One row per cost, computed independently and in parallel. A row whose
/// evaluation fails records the error and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.costs
        .par_iter()
        .map(|&c| SweepRow {
            c,
            outcome: evaluate(&spec.template.with_proportional_costs(c)).map_err(|e| e.to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn grid_must_increase() {
        let s = fixtures::s2();
        assert!(SweepSpec::new(s.clone(), vec![]).is_err());
        assert!(SweepSpec::new(s.clone(), vec![0.2, 0.2]).is_err());
        assert!(SweepSpec::new(s.clone(), vec![-1.0]).is_err());
        assert!(SweepSpec::new(s, vec![0.0, 0.5]).is_ok());
    }

    #[test]
    fn s2_template_rows() {
        let spec = SweepSpec::new(fixtures::s2(), vec![0.0, 0.2, 0.8, 2.0, 100.0]).unwrap();
        let rows = run_sweep(&spec);
        let outcomes: Vec<&SweepOutcome> = rows.iter().map(|r| r.outcome.as_ref().unwrap()).collect();
        // Zero cost: everybody trains and the model has error 1/15.
        assert!((outcomes[0].w_semts - 45.0).abs() < 1e-9);
        assert!((outcomes[0].w_fl_opt - 45.0).abs() < 1e-9);
        for pair in outcomes.windows(2) {
            assert!(pair[1].w_semts <= pair[0].w_semts);
        }
        for o in &outcomes {
            assert!(o.w_semts >= o.w_fl_opt);
            assert!(o.w_semts >= o.w_modified_fl);
        }
        let last = outcomes[4];
        assert_eq!((last.w_semts, last.w_fl_opt, last.w_modified_fl), (0.0, 0.0, 0.0));
    }
}
