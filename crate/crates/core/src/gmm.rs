//! Two-component 1-D Gaussian mixtures fit by EM, mapping anomaly distances
//! to the posterior probability of the high-mean component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{percentile_sorted, population_variance};

/// Fitted two-component mixture. Component 1 is the high-mean (anomalous)
/// component: mean0 <= mean1 after fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gmm1d {
    pub weight0: f64,
    pub weight1: f64,
    pub mean0: f64,
    pub mean1: f64,
    pub var0: f64,
    pub var1: f64,
}

impl Gmm1d {
    /// Posterior responsibility of the high-mean component at distance `d`.
    /// When both weighted log-densities are nonfinite the posterior is
    /// decided by which side of mean1 the point falls on.
    pub fn anomaly_probability(&self, d: f64) -> f64 {
        let a0 = self.weight0.ln() + log_normal_pdf(d, self.mean0, self.var0);
        let a1 = self.weight1.ln() + log_normal_pdf(d, self.mean1, self.var1);
        if !a0.is_finite() && !a1.is_finite() {
            return if d > self.mean1 { 1.0 } else { 0.0 };
        }
        1.0 / (1.0 + (a0 - a1).exp())
    }

    /// Hard anomaly vote: 1 iff the posterior strictly exceeds 0.5.
    pub fn vote(&self, d: f64) -> u8 {
        (self.anomaly_probability(d) > 0.5) as u8
    }
}

/// EM stopping and conditioning parameters. `var_floor` is relative: the
/// effective floor is var_floor * (data range)^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 200,
            tol: 1e-8,
            var_floor: 1e-6,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if !(self.var_floor > 0.0) {
            return Err(Error::invalid("var_floor", "must be positive"));
        }
        Ok(())
    }
}

#[inline]
fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((std::f64::consts::TAU * var).ln() + d * d / var)
}

pub fn fit_em(data: &[f64], config: &EmConfig) -> Result<Gmm1d> {
    fit_em_trace(data, config).map(|(gmm, _)| gmm)
}

/// Fits the mixture and also returns the average log-likelihood at the start
/// of every EM iteration; the trace is non-decreasing.
pub fn fit_em_trace(data: &[f64], config: &EmConfig) -> Result<(Gmm1d, Vec<f64>)> {
    config.validate()?;
    let n = data.len();
    if n < 4 {
        return Err(Error::TooFewPoints {
            context: "fit_em",
            needed: 4,
            got: n,
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data", "contains nonfinite values"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if lo == hi {
        return Err(Error::DegenerateData(
            "all distances identical, mixture is unidentifiable".into(),
        ));
    }
    let range = hi - lo;
    let floor = config.var_floor * range * range;

    // Percentile init: the bulk component sits in the body of the
    // distribution and the anomaly component in the upper tail.
    let mut mean0 = percentile_sorted(&sorted, 25.0);
    let mut mean1 = percentile_sorted(&sorted, 90.0);
    if mean1 <= mean0 {
        mean0 = lo;
        mean1 = hi;
    }
    let mut var0 = population_variance(data).max(floor);
    let mut var1 = var0;
    let (mut w0, mut w1): (f64, f64) = (0.9, 0.1);

    let mut trace = Vec::new();
    let mut resp1 = vec![0.0f64; n];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..config.max_iter {
        // E-step in log domain; also accumulates the average log-likelihood
        // under the current parameters.
        let mut ll = 0.0;
        for (x, r1) in data.iter().zip(resp1.iter_mut()) {
            let a0 = w0.ln() + log_normal_pdf(*x, mean0, var0);
            let a1 = w1.ln() + log_normal_pdf(*x, mean1, var1);
            let m = a0.max(a1);
            if m.is_finite() {
                let lse = m + ((a0 - m).exp() + (a1 - m).exp()).ln();
                ll += lse;
                *r1 = (a1 - lse).exp();
            } else {
                // Both densities underflowed; assign by proximity to mean1.
                *r1 = if *x > mean1 { 1.0 } else { 0.0 };
            }
        }
        let avg_ll = ll / n as f64;
        trace.push(avg_ll);
        if avg_ll - prev_ll < config.tol && prev_ll.is_finite() {
            break;
        }
        prev_ll = avg_ll;

        // M-step with a dead-component guard: a component that has lost all
        // responsibility keeps its mean and sits at the variance floor.
        let s1: f64 = resp1.iter().sum();
        let s0 = n as f64 - s1;
        w0 = s0 / n as f64;
        w1 = s1 / n as f64;
        if s0 > 1e-12 {
            mean0 = data
                .iter()
                .zip(&resp1)
                .map(|(x, r)| x * (1.0 - r))
                .sum::<f64>()
                / s0;
            var0 = (data
                .iter()
                .zip(&resp1)
                .map(|(x, r)| (1.0 - r) * (x - mean0) * (x - mean0))
                .sum::<f64>()
                / s0)
                .max(floor);
        } else {
            var0 = floor;
        }
        if s1 > 1e-12 {
            mean1 = data.iter().zip(&resp1).map(|(x, r)| x * r).sum::<f64>() / s1;
            var1 = (data
                .iter()
                .zip(&resp1)
                .map(|(x, r)| r * (x - mean1) * (x - mean1))
                .sum::<f64>()
                / s1)
                .max(floor);
        } else {
            var1 = floor;
        }
    }

    if mean0 > mean1 {
        std::mem::swap(&mut mean0, &mut mean1);
        std::mem::swap(&mut var0, &mut var1);
        std::mem::swap(&mut w0, &mut w1);
    }
    Ok((
        Gmm1d {
            weight0: w0,
            weight1: w1,
            mean0,
            mean1,
            var0,
            var1,
        },
        trace,
    ))
}
