//! Market instances: client types, variances and the model-utility curve.
//!
//! A [`Scenario`] is immutable once validated. Type indices are 0-based in
//! the API; reports that face users print them 1-based.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A group of `count` interchangeable clients holding `data_size` samples
/// each and paying `cost` to take part in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientType {
    #[serde(rename = "D")]
    pub data_size: u64,
    #[serde(rename = "C")]
    pub cost: f64,
    #[serde(rename = "N")]
    pub count: u32,
}

/// Utility a client derives from a model with generalization error `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum UtilitySpec {
    /// `U(eps) = a * eps^(-b)`.
    Power { a: f64, b: f64 },
    /// Piecewise-linear through sorted `(eps, U)` points, flat outside them.
    Table { points: Vec<[f64; 2]> },
}

impl UtilitySpec {
    pub fn value(&self, eps: f64) -> f64 {
        match self {
            UtilitySpec::Power { a, b } => a * eps.powf(-b),
            UtilitySpec::Table { points } => interpolate(points, eps),
        }
    }

    /// Utility of an optional model; no model (empty coalition) is worth 0.
    pub fn of_model(&self, eps: Option<f64>) -> f64 {
        eps.map_or(0.0, |e| self.value(e))
    }

    pub fn derivative(&self, eps: f64) -> f64 {
        match self {
            UtilitySpec::Power { a, b } => -a * b * eps.powf(-b - 1.0),
            UtilitySpec::Table { .. } => {
                let h = eps * 1e-5;
                (self.value(eps + h) - self.value(eps - h)) / (2.0 * h)
            }
        }
    }

    pub fn second_derivative(&self, eps: f64) -> f64 {
        match self {
            UtilitySpec::Power { a, b } => a * b * (b + 1.0) * eps.powf(-b - 2.0),
            UtilitySpec::Table { .. } => {
                let h = eps * 1e-5;
                (self.value(eps + h) - 2.0 * self.value(eps) + self.value(eps - h)) / (h * h)
            }
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            UtilitySpec::Power { a, b } => {
                if !(a.is_finite() && *a > 0.0) {
                    out.push(format!("power utility coefficient a must be positive (got {a})"));
                }
                if !(b.is_finite() && *b > 0.0) {
                    out.push(format!("power utility exponent b must be positive (got {b})"));
                }
            }
            UtilitySpec::Table { points } => {
                if points.len() < 2 {
                    out.push("utility table needs at least two points".to_string());
                }
                for p in points {
                    if !(p[0].is_finite() && p[0] > 0.0) {
                        out.push(format!("utility table eps values must be positive (got {})", p[0]));
                    }
                    if !(p[1].is_finite() && p[1] >= 0.0) {
                        out.push(format!("utility table values must be non-negative (got {})", p[1]));
                    }
                }
                if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    out.push("utility table eps values must be strictly increasing".to_string());
                }
                if points.windows(2).any(|w| w[1][1] > w[0][1]) {
                    out.push("utility table must be non-increasing in eps".to_string());
                }
            }
        }
        out
    }
}

fn interpolate(points: &[[f64; 2]], eps: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if eps <= first[0] {
        return first[1];
    }
    if eps >= last[0] {
        return last[1];
    }
    let hi = points.partition_point(|p| p[0] <= eps);
    let (p0, p1) = (points[hi - 1], points[hi]);
    let t = (eps - p0[0]) / (p1[0] - p0[0]);
    p0[1] + t * (p1[1] - p0[1])
}

/// A full market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Feature dimension.
    pub d: u32,
    /// Label-noise (data) variance.
    pub gamma2: f64,
    /// Scalar client (teacher) variance.
    pub sigma2: f64,
    pub utility: UtilitySpec,
    pub types: Vec<ClientType>,
}

/// Type indices split by the `D_i <= d*gamma2/sigma2` threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypePartition {
    pub low: Vec<usize>,
    pub high: Vec<usize>,
}

impl Scenario {
    pub fn new(
        d: u32,
        gamma2: f64,
        sigma2: f64,
        utility: UtilitySpec,
        types: Vec<ClientType>,
    ) -> Result<Self> {
        let s = Scenario {
            d,
            gamma2,
            sigma2,
            utility,
            types,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d == 0 {
            problems.push("feature dimension d must be positive".to_string());
        }
        if !(self.gamma2.is_finite() && self.gamma2 > 0.0) {
            problems.push(format!("gamma2 must be positive (got {})", self.gamma2));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            problems.push(format!("sigma2 must be non-negative (got {})", self.sigma2));
        }
        if self.types.is_empty() {
            problems.push("at least one client type is required".to_string());
        }
        for (i, t) in self.types.iter().enumerate() {
            if t.data_size == 0 {
                problems.push(format!("type {}: data size D must be positive", i + 1));
            }
            if t.count == 0 {
                problems.push(format!("type {}: client count N must be positive", i + 1));
            }
            if !(t.cost.is_finite() && t.cost >= 0.0) {
                problems.push(format!("type {}: cost C must be non-negative (got {})", i + 1, t.cost));
            }
        }
        if self.types.windows(2).any(|w| w[1].data_size < w[0].data_size) {
            problems.push("types not sorted by data size".to_string());
        }
        if self.types.windows(2).any(|w| w[1].cost < w[0].cost) {
            problems.push("costs must be non-decreasing in data size".to_string());
        }
        problems.extend(self.utility.problems());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn total_clients(&self) -> u32 {
        self.types.iter().map(|t| t.count).sum()
    }

    /// `d * gamma2`, the scale of the data-variance term.
    pub fn data_scale(&self) -> f64 {
        f64::from(self.d) * self.gamma2
    }

    /// Whether type `i` lies at or below the heterogeneity threshold.
    /// Evaluated as `D_i * sigma2 <= d * gamma2`, so `sigma2 = 0` puts every
    /// type in the low set.
    pub fn is_low_type(&self, i: usize) -> bool {
        self.types[i].data_size as f64 * self.sigma2 <= self.data_scale()
    }

    /// True when `sigma2 <= d*gamma2/D_I`, i.e. the high set is empty.
    pub fn is_low_heterogeneity(&self) -> bool {
        self.types.last().is_none_or(|_| self.is_low_type(self.types.len() - 1))
    }

    /// Same scenario with `C_i = per_sample * D_i`.
    pub fn with_proportional_costs(&self, per_sample: f64) -> Scenario {
        let mut s = self.clone();
        for t in &mut s.types {
            t.cost = per_sample * t.data_size as f64;
        }
        s
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Scenario::from_json(&text)
}

pub fn partition_types(s: &Scenario) -> TypePartition {
    let (low, high) = (0..s.type_count()).partition(|&i| s.is_low_type(i));
    TypePartition { low, high }
}

/// Outcome of checking `(eps - sigma2) U''(eps) + 2 U'(eps) >= 0` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityConditionReport {
    pub satisfied: bool,
    /// Closed grid intervals `[from, to]` on which the condition fails.
    pub violations: Vec<[f64; 2]>,
    pub grid_points: usize,
}

const CONDITION_GRID: usize = 1001;

pub fn check_utility_condition(
    u: &UtilitySpec,
    sigma2: f64,
    eps_lo: f64,
    eps_hi: f64,
) -> Result<UtilityConditionReport> {
    if eps_lo.is_nan() || eps_lo <= 0.0 {
        return Err(Error::Domain(format!("eps range must be positive (got lower bound {eps_lo})")));
    }
    if eps_hi.is_nan() || eps_hi <= eps_lo {
        return Err(Error::Domain(format!(
            "eps upper bound {eps_hi} must exceed lower bound {eps_lo}"
        )));
    }
    let step = (eps_hi - eps_lo) / (CONDITION_GRID - 1) as f64;
    let mut violations: Vec<[f64; 2]> = Vec::new();
    let mut open: Option<f64> = None;
    let mut prev = eps_lo;
    for n in 0..CONDITION_GRID {
        let eps = if n + 1 == CONDITION_GRID { eps_hi } else { eps_lo + step * n as f64 };
        let curvature = (eps - sigma2) * u.second_derivative(eps);
        let slope = 2.0 * u.derivative(eps);
        // Relative slack absorbs cancellation when the two terms balance.
        let tol = 1e-9 * (curvature.abs() + slope.abs());
        let ok = curvature + slope >= -tol;
        match (ok, open) {
            (false, None) => open = Some(eps),
            (true, Some(start)) => {
                violations.push([start, prev]);
                open = None;
            }
            _ => {}
        }
        prev = eps;
    }
    if let Some(start) = open {
        violations.push([start, eps_hi]);
    }
    Ok(UtilityConditionReport {
        satisfied: violations.is_empty(),
        violations,
        grid_points: CONDITION_GRID,
    })
}
