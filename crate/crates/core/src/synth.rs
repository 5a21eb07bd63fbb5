//! Synthetic benchmark generator: a daily sinusoid plus stationary ARMA(2,2)
//! noise during five-day work weeks, a flat weekend level, and sparse
//! Poisson-mixture anomalies injected throughout.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{TimePoint, TimeSeries};
use crate::util::{component_rng, poisson, standard_normal, stream};

/// Spacing between consecutive points.
pub const STEP_MINUTES: i64 = 30;

const ARMA_BURN_IN: usize = 200;

/// Generative model, per step t:
///
/// weekday: y_t = amplitude * sin(2*pi*frequency*t + phase) + offset + z_t + e_t
/// weekend: y_t = weekend_level + e_t
///
/// where z_t is ARMA(2,2) noise
///   z_t = ar[0]*z_{t-1} + ar[1]*z_{t-2} + w_t + ma[0]*w_{t-1} + ma[1]*w_{t-2},
///   w_t ~ N(0, noise_variance),
/// and e_t is Poisson(lambda_normal) with probability normal_prob, otherwise
/// anomaly_shift + Poisson(lambda_anomaly) with the point labeled anomalous.
///
/// Weeks alternate `weekday_steps` sinusoid-plus-noise steps with the
/// corresponding two days of weekend steps. The noise and anomaly streams
/// advance through weekends so weekday noise does not depend on weekend
/// length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    /// Sinusoid frequency in cycles per step.
    pub frequency: f64,
    /// Steps in the five-day weekday block; must be a multiple of 5.
    pub weekday_steps: usize,
    pub ar: [f64; 2],
    pub ma: [f64; 2],
    pub noise_variance: f64,
    /// Probability that a step draws the normal Poisson branch.
    pub normal_prob: f64,
    pub lambda_normal: f64,
    pub lambda_anomaly: f64,
    /// Constant added on the anomalous branch, on top of the Poisson draw.
    pub anomaly_shift: f64,
    pub weekend_level: f64,
    pub len: usize,
    pub seed: u64,
    /// First timestamp; defaults to a Monday midnight so block structure and
    /// calendar weekends coincide.
    pub epoch: NaiveDateTime,
}

/// Defaults sized for the half-hourly benchmark: one sinusoid cycle per day
/// (period 48 steps), anomalies at rate 1/1000. The anomalous Poisson rate
/// is the experiment's signal-to-noise knob, so it stays a caller argument.
pub fn default_config(lambda_anomaly: f64) -> SynthConfig {
    SynthConfig {
        amplitude: 10.0,
        offset: 20.0,
        phase: 0.0,
        frequency: 5.0 / 240.0,
        weekday_steps: 240,
        ar: [0.5, -0.5],
        ma: [2.0, 2.0],
        noise_variance: 1.0,
        normal_prob: 0.999,
        lambda_normal: 10.0,
        lambda_anomaly,
        anomaly_shift: 10.0,
        weekend_level: 0.0,
        len: 13_497,
        seed: 0,
        epoch: NaiveDate::from_ymd_opt(2014, 6, 30)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap(),
    }
}

impl SynthConfig {
    /// Weekend steps per week: two days at the weekday block's daily rate.
    pub fn weekend_steps(&self) -> usize {
        self.weekday_steps / 5 * 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return Err(Error::invalid("len", "must be positive"));
        }
        if self.weekday_steps == 0 || !self.weekday_steps.is_multiple_of(5) {
            return Err(Error::invalid(
                "weekday_steps",
                format!("{} is not a positive multiple of 5", self.weekday_steps),
            ));
        }
        if !(self.normal_prob > 0.0 && self.normal_prob <= 1.0) {
            return Err(Error::invalid(
                "normal_prob",
                format!("{} is outside (0, 1]", self.normal_prob),
            ));
        }
        if !(self.lambda_normal > 0.0) || !(self.lambda_anomaly > 0.0) {
            return Err(Error::invalid("lambda", "Poisson rates must be positive"));
        }
        if self.anomaly_shift < 0.0 {
            return Err(Error::invalid("anomaly_shift", "must be nonnegative"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise_variance", "must be nonnegative"));
        }
        for v in [self.amplitude, self.offset, self.phase, self.frequency] {
            if !v.is_finite() {
                return Err(Error::invalid("signal", "parameters must be finite"));
            }
        }
        // AR(2) stationarity triangle: roots of 1 - ar0*x - ar1*x^2 outside
        // the unit circle.
        let [p1, p2] = self.ar;
        if !(p2.abs() < 1.0 && p1 + p2 < 1.0 && p2 - p1 < 1.0) {
            return Err(Error::invalid(
                "ar",
                format!("({p1}, {p2}) is not stationary"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub series: TimeSeries,
    /// One label per point, 1 = anomalous branch.
    pub labels: Vec<u8>,
}

impl SynthOutput {
    pub fn labeled_series(&self) -> TimeSeries {
        TimeSeries::with_labels(self.series.points().to_vec(), self.labels.clone())
            .expect("generator output is consistent")
    }

    /// Single-point windows for each anomalous step, in the label-file layout.
    pub fn anomaly_windows(&self) -> Vec<(NaiveDateTime, NaiveDateTime)> {
        self.series
            .points()
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(p, _)| (p.timestamp, p.timestamp))
            .collect()
    }
}

/// Deterministic sinusoid component at step `t`.
pub fn signal_at(config: &SynthConfig, t: usize) -> f64 {
    config.amplitude * (std::f64::consts::TAU * config.frequency * t as f64 + config.phase).sin()
        + config.offset
}

/// ARMA(2,2) sample path of `length` steps. State starts at zero and a
/// 200-step burn-in is discarded, so the returned slice is effectively
/// stationary.
pub fn gen_arma<R: Rng>(config: &SynthConfig, length: usize, rng: &mut R) -> Vec<f64> {
    let sigma = config.noise_variance.sqrt();
    let [p1, p2] = config.ar;
    let [q1, q2] = config.ma;
    let mut out = Vec::with_capacity(length);
    let (mut z1, mut z2) = (0.0f64, 0.0f64);
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    for t in 0..ARMA_BURN_IN + length {
        let w0 = sigma * standard_normal(rng);
        let z0 = p1 * z1 + p2 * z2 + w0 + q1 * w1 + q2 * w2;
        if t >= ARMA_BURN_IN {
            out.push(z0);
        }
        z2 = z1;
        z1 = z0;
        w2 = w1;
        w1 = w0;
    }
    out
}

/// Poisson-mixture noise stream: returns per-step noise values and binary
/// labels marking the anomalous branch.
pub fn inject_anomalies<R: Rng>(
    config: &SynthConfig,
    length: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<u8>) {
    let mut values = Vec::with_capacity(length);
    let mut labels = Vec::with_capacity(length);
    for _ in 0..length {
        let u: f64 = rng.gen();
        if u < config.normal_prob {
            values.push(poisson(rng, config.lambda_normal) as f64);
            labels.push(0);
        } else {
            values.push(config.anomaly_shift + poisson(rng, config.lambda_anomaly) as f64);
            labels.push(1);
        }
    }
    (values, labels)
}

/// Assembles the full benchmark series. Same config, same output, bit for
/// bit: the noise and anomaly streams are derived from `config.seed` on
/// separate substreams.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut arma_rng = component_rng(config.seed, stream::ARMA_NOISE, 0, 0);
    let mut mix_rng = component_rng(config.seed, stream::ANOMALY_MIX, 0, 0);
    let noise = gen_arma(config, config.len, &mut arma_rng);
    let (eps, labels) = inject_anomalies(config, config.len, &mut mix_rng);

    let week = config.weekday_steps + config.weekend_steps();
    let points: Vec<TimePoint> = (0..config.len)
        .map(|t| {
            let weekday = t % week < config.weekday_steps;
            let value = if weekday {
                signal_at(config, t) + noise[t] + eps[t]
            } else {
                config.weekend_level + eps[t]
            };
            TimePoint {
                timestamp: config.epoch + Duration::minutes(STEP_MINUTES * t as i64),
                value,
            }
        })
        .collect();

    Ok(SynthOutput {
        series: TimeSeries::new(points)?,
        labels,
    })
}
