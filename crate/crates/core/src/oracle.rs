//! Monte Carlo check of the analytic generalization error on a synthetic
//! linear student-teacher task.
//!
//! Each participant owns a teacher `w* + delta`, with `delta` drawn from
//! `N(0, sigma2/d I)`, fits ordinary least squares on its own Gaussian
//! samples, and the fits are averaged. The error of a trial is the mean
//! squared distance between the average and each participant's teacher.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::performance::{error_for_sizes, Profile};
use crate::scenario::Scenario;

/// Synthetic task parameters. Unlike a [`Scenario`] the label noise may be
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSetup {
    pub d: u32,
    pub gamma2: f64,
    pub sigma2: f64,
    /// Sample count of each participant.
    pub sizes: Vec<u64>,
}

impl OracleSetup {
    pub fn from_profile(s: &Scenario, k: &Profile) -> Result<Self> {
        k.check(s)?;
        let sizes = k
            .0
            .iter()
            .zip(&s.types)
            .flat_map(|(&n, t)| std::iter::repeat_n(t.data_size, n as usize))
            .collect();
        Ok(OracleSetup { d: s.d, gamma2: s.gamma2, sigma2: s.sigma2, sizes })
    }

    fn check(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        if self.d == 0 {
            return Err(Error::Domain("feature dimension must be positive".to_string()));
        }
        if !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return Err(Error::Domain(format!("gamma2 must be non-negative (got {})", self.gamma2)));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Domain(format!("sigma2 must be non-negative (got {})", self.sigma2)));
        }
        let need = u64::from(self.d) + 2;
        if let Some(&small) = self.sizes.iter().find(|&&n| n < need) {
            return Err(Error::IllPosed(format!(
                "a participant holds {small} samples but dimension {} needs at least {need}",
                self.d
            )));
        }
        Ok(())
    }

    pub fn analytic_error(&self) -> f64 {
        let scale = f64::from(self.d) * self.gamma2;
        error_for_sizes(scale, self.sigma2, self.sizes.iter().map(|&n| (1, n)))
            .expect("non-empty coalition")
    }

    /// Gap between the exact expected least-squares error and the
    /// large-sample approximation used by the formula.
    pub fn bias_estimate(&self) -> f64 {
        let d = f64::from(self.d);
        let k = self.sizes.len() as f64;
        let exact: f64 = self.sizes.iter().map(|&n| d / (n as f64 - d - 1.0)).sum();
        let approx: f64 = self.sizes.iter().map(|&n| d / n as f64).sum();
        self.gamma2 * (exact - approx) / (k * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub setup: OracleSetup,
    pub empirical: f64,
    pub std_error: f64,
    pub analytic: f64,
    pub relative_error: f64,
    pub bias_estimate: f64,
    pub trials: u32,
    pub seed: u64,
    pub runtime_seconds: f64,
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::IllPosed("design matrix is rank deficient".to_string()))?;
    Ok(chol.solve(&rhs))
}

fn one_trial(setup: &OracleSetup, seed: u64, trial: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let d = setup.d as usize;
    let shared = gaussian_vector(&mut rng, d, 1.0);
    let deviation_sd = (setup.sigma2 / d as f64).sqrt();
    let noise_sd = setup.gamma2.sqrt();
    let mut teachers = Vec::with_capacity(setup.sizes.len());
    let mut average = DVector::zeros(d);
    for &n in &setup.sizes {
        let teacher = &shared + gaussian_vector(&mut rng, d, deviation_sd);
        let x = DMatrix::from_fn(n as usize, d, |_, _| StandardNormal.sample(&mut rng));
        let y = &x * &teacher + gaussian_vector(&mut rng, n as usize, noise_sd);
        average += least_squares(&x, &y)?;
        teachers.push(teacher);
    }
    average /= setup.sizes.len() as f64;
    let total: f64 = teachers.iter().map(|t| (&average - t).norm_squared()).sum();
    Ok(total / teachers.len() as f64)
}

/// Trial `t` draws from stream `t` of a generator seeded with `seed`, so
/// results do not depend on how trials are scheduled.
pub fn simulate_generalization(setup: &OracleSetup, trials: u32, seed: u64) -> Result<OracleReport> {
    setup.check()?;
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".to_string()));
    }
    let started = Instant::now();
    let errors: Vec<f64> = (0..u64::from(trials))
        .into_par_iter()
        .map(|t| one_trial(setup, seed, t))
        .collect::<Result<_>>()?;
    let n = errors.len() as f64;
    let empirical = errors.iter().sum::<f64>() / n;
    let std_error = if errors.len() > 1 {
        let var = errors.iter().map(|e| (e - empirical).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let analytic = setup.analytic_error();
    Ok(OracleReport {
        setup: setup.clone(),
        empirical,
        std_error,
        analytic,
        relative_error: (empirical - analytic).abs() / analytic,
        bias_estimate: setup.bias_estimate(),
        trials,
        seed,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub pass: bool,
    pub relative_error: f64,
    pub tolerance: f64,
    pub empirical: f64,
    pub analytic: f64,
    /// Standard errors separating the two values.
    pub z_score: f64,
    pub bias_estimate: f64,
}

pub fn compare_to_formula(report: &OracleReport, tol_rel: f64) -> Comparison {
    let gap = report.empirical - report.analytic;
    Comparison {
        pass: gap.abs() <= tol_rel * report.analytic,
        relative_error: gap.abs() / report.analytic,
        tolerance: tol_rel,
        empirical: report.empirical,
        analytic: report.analytic,
        z_score: if gap == 0.0 {
            0.0
        } else if report.std_error > 0.0 {
            gap / report.std_error
        } else {
            f64::INFINITY.copysign(gap)
        },
        bias_estimate: report.bias_estimate,
    }
}
