//! Variance-weighted model ensembling: assembles per-bootstrap anomaly
//! probabilities into out-of-bag margins, estimates each model's decision
//! variance by threshold sampling, and combines per-model votes under the
//! derived weights.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosted::{fit_boosted_points, BoostedModel, EmbeddingSpec};
use crate::bootstrap::{complement, credibility, draw_plan, CredibilityWeights};
use crate::error::{Error, Result};
use crate::gmm::{fit_em, EmConfig, Gmm1d};
use crate::mat::Mat;
use crate::timeseries::{format_timestamp, TimePoint, TimeSeries};
use crate::util::{component_rng, standard_normal, stream};

pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

/// Anomaly probabilities of every training sample under every bootstrap of
/// one model. Column 0 belongs to the full-data fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub p: Mat<f64>,
    pub model_id: usize,
}

/// Out-of-bag aggregation per training sample: weighted mean probability z
/// and margin r against the full-data model.
#[derive(Debug, Clone, PartialEq)]
pub struct OobSummary {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
}

/// Monte-Carlo threshold-sampling parameters for the variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub samples_per_point: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples_per_point: 1000,
            epsilon: 0.05,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.samples_per_point == 0 {
            return Err(Error::invalid("samples_per_point", "must be positive"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Full pipeline configuration: model variety, bootstrap family, and the
/// per-stage fitting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub specs: Vec<EmbeddingSpec>,
    pub alpha: f64,
    pub bootstraps: usize,
    pub termination_eps: f64,
    pub em: EmConfig,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            specs: EmbeddingSpec::default_ensemble(),
            alpha: 0.8,
            bootstraps: 20,
            termination_eps: 1e-6,
            em: EmConfig::default(),
            sampling: SamplingConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Reseeds every stage from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.em.seed = seed;
        self.sampling.seed = seed;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::invalid("specs", "need at least one model"));
        }
        if self.bootstraps == 0 {
            return Err(Error::invalid("bootstraps", "must be positive"));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0.5, 1]"));
        }
        if !(self.termination_eps > 0.0) {
            return Err(Error::invalid("termination_eps", "must be positive"));
        }
        self.em.validate()?;
        self.sampling.validate()
    }
}

/// Per-model variance estimates and the weights they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVarianceReport {
    pub mu_sigma: Vec<f64>,
    pub weights: Vec<f64>,
    /// mu of the threshold-sampling Gaussian per (model, validation point).
    pub per_val_mean: Vec<Vec<f64>>,
    /// sigma of the threshold-sampling Gaussian per (model, validation point).
    pub per_val_sigma: Vec<Vec<f64>>,
}

/// Final call on one sample: the per-model votes, their weighted score, and
/// the thresholded decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub votes: Vec<u8>,
    pub combined_score: f64,
    pub decision: u8,
}

/// z_i = sum over bootstrap columns of p_ij * w_ij; r_i = |z_i - p_i0|.
pub fn oob_summary(p: &ProbMatrix, w: &CredibilityWeights) -> Result<OobSummary> {
    let n = p.p.rows();
    if w.w.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{n} probability rows but {} weight rows",
            w.w.len()
        )));
    }
    if p.p.cols() < 2 {
        return Err(Error::invalid(
            "p",
            "probability matrix needs the full-data column plus bootstraps",
        ));
    }
    let b = p.p.cols() - 1;
    let mut z = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let row = p.p.row(i);
        let weights = &w.w[i];
        if weights.len() != b {
            return Err(Error::LengthMismatch(format!(
                "row {i}: {b} bootstrap columns but {} weights",
                weights.len()
            )));
        }
        let zi: f64 = row[1..].iter().zip(weights).map(|(p, w)| p * w).sum();
        z.push(zi);
        r.push((zi - row[0]).abs());
    }
    Ok(OobSummary { z, r })
}

/// Center and spread of the jackknife-style interval set {z_val ± r_i}:
/// the mean is z_val itself, the spread is the root mean square margin.
pub fn val_stats(z_val: f64, margins: &[f64]) -> Result<(f64, f64)> {
    if margins.is_empty() {
        return Err(Error::invalid("margins", "margin vector is empty"));
    }
    let mean_sq = margins.iter().map(|r| r * r).sum::<f64>() / margins.len() as f64;
    Ok((z_val, mean_sq.sqrt()))
}

/// Draws `samples_per_point` Gaussians with mean `mu` and standard deviation
/// `sigma + epsilon`, deterministically for a given (seed, model, point).
pub fn sample_probs(
    mu: f64,
    sigma: f64,
    config: &SamplingConfig,
    model: usize,
    point: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma", "spread must be nonnegative"));
    }
    let std = sigma + config.epsilon;
    let mut rng = component_rng(
        config.seed,
        stream::PROB_SAMPLING,
        model as u64,
        point as u64,
    );
    Ok((0..config.samples_per_point)
        .map(|_| mu + std * standard_normal(&mut rng))
        .collect())
}

/// Estimated decision variance: mean over validation points of
/// v̄_k (1 - v̄_k), where v̄_k is the fraction of threshold samples above 0.5.
pub fn estimate_model_variance(samples_per_val: &[Vec<f64>]) -> Result<f64> {
    if samples_per_val.is_empty() {
        return Err(Error::invalid("samples_per_val", "no validation points"));
    }
    let mut total = 0.0;
    for (k, samples) in samples_per_val.iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::invalid(
                "samples_per_val",
                format!("validation point {k} has no samples"),
            ));
        }
        let above = samples.iter().filter(|&&p| p > 0.5).count();
        let v_bar = above as f64 / samples.len() as f64;
        total += v_bar * (1.0 - v_bar);
    }
    Ok(total / samples_per_val.len() as f64)
}

/// Ensemble weights (1 - 4 mu) / sum(1 - 4 mu). A model at the maximal
/// variance 0.25 is weighted out entirely.
pub fn ensemble_weights(mu_sigma: &[f64]) -> Result<Vec<f64>> {
    if mu_sigma.is_empty() {
        return Err(Error::invalid("mu_sigma", "no models"));
    }
    for (m, &mu) in mu_sigma.iter().enumerate() {
        if !(0.0..=0.25).contains(&mu) {
            return Err(Error::invalid(
                "mu_sigma",
                format!("model {m}: variance estimate {mu} outside [0, 0.25]"),
            ));
        }
    }
    let terms: Vec<f64> = mu_sigma.iter().map(|mu| 1.0 - 4.0 * mu).collect();
    let denom: f64 = terms.iter().sum();
    if denom <= 0.0 {
        return Err(Error::NoUsableModel);
    }
    Ok(terms.into_iter().map(|t| t / denom).collect())
}

/// Weighted vote combination; anomalous iff the score strictly exceeds 0.5.
pub fn ensemble_decide(votes: &[u8], weights: &[f64]) -> Result<EnsembleVerdict> {
    if votes.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} votes for {} weights",
            votes.len(),
            weights.len()
        )));
    }
    if votes.is_empty() {
        return Err(Error::invalid("votes", "no models"));
    }
    for &v in votes {
        if v > 1 {
            return Err(Error::invalid("votes", format!("vote {v} is not binary")));
        }
    }
    let weight_sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "weights",
            format!("weights must be a distribution, sum {weight_sum}"),
        ));
    }
    let combined_score: f64 = votes.iter().zip(weights).map(|(&v, &w)| v as f64 * w).sum();
    Ok(EnsembleVerdict {
        votes: votes.to_vec(),
        combined_score,
        decision: (combined_score > 0.5) as u8,
    })
}

/// One model's frozen fit family: the full-data fit at index 0 plus one
/// (boosted model, mixture) pair per bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: EmbeddingSpec,
    pub boosted: Vec<BoostedModel>,
    pub gmms: Vec<Gmm1d>,
}

/// Persistable ensemble: everything needed to score new samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEnsemble {
    pub schema_version: u32,
    pub bootstraps: usize,
    pub alpha: f64,
    pub models: Vec<FittedModel>,
    pub mu_sigma: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FittedEnsemble {
    /// Per-model aggregated anomaly probability of one sample: the uniform
    /// mean of the bootstrap posteriors (new samples are out-of-bag
    /// everywhere, so credibility weights degenerate to uniform).
    pub fn model_probabilities(&self, point: &TimePoint) -> Vec<f64> {
        self.models
            .iter()
            .map(|fm| {
                let total: f64 = (1..=self.bootstraps)
                    .map(|j| fm.gmms[j].anomaly_probability(fm.boosted[j].anomaly_distance(point)))
                    .sum();
                total / self.bootstraps as f64
            })
            .collect()
    }

    pub fn score_point(&self, point: &TimePoint) -> Result<EnsembleVerdict> {
        let votes: Vec<u8> = self
            .model_probabilities(point)
            .iter()
            .map(|&z| (z > 0.5) as u8)
            .collect();
        ensemble_decide(&votes, &self.weights)
    }

    pub fn score_series(&self, series: &TimeSeries) -> Result<Vec<EnsembleVerdict>> {
        series
            .points()
            .iter()
            .map(|p| self.score_point(p))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fitted: FittedEnsemble = serde_json::from_str(&text)?;
        if fitted.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: fitted.schema_version,
                expected: ENSEMBLE_SCHEMA_VERSION,
            });
        }
        Ok(fitted)
    }
}

/// Everything `run_pipeline` produces: the variance report, per-validation
/// verdicts, and the reusable fitted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub report: ModelVarianceReport,
    pub verdicts: Vec<EnsembleVerdict>,
    pub timestamps: Vec<chrono::NaiveDateTime>,
    pub fitted: FittedEnsemble,
}

/// JSON-facing summary of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDoc {
    pub schema_version: u32,
    pub model_specs: Vec<String>,
    pub mu_sigma: Vec<f64>,
    pub weights: Vec<f64>,
    pub samples: Vec<SampleVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub timestamp: String,
    pub combined_score: f64,
    pub decision: u8,
}

impl PipelineOutput {
    pub fn document(&self) -> PipelineDoc {
        PipelineDoc {
            schema_version: ENSEMBLE_SCHEMA_VERSION,
            model_specs: self.fitted.models.iter().map(|m| m.spec.name()).collect(),
            mu_sigma: self.report.mu_sigma.clone(),
            weights: self.report.weights.clone(),
            samples: self
                .timestamps
                .iter()
                .zip(&self.verdicts)
                .map(|(t, v)| SampleVerdict {
                    timestamp: format_timestamp(*t),
                    combined_score: v.combined_score,
                    decision: v.decision,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.document())?)
    }
}

struct CellFit {
    boosted: BoostedModel,
    gmm: Gmm1d,
    probs: Vec<f64>,
}

fn fit_cell(
    train: &[TimePoint],
    in_bag: &[TimePoint],
    spec: &EmbeddingSpec,
    cfg: &PipelineConfig,
) -> Result<CellFit> {
    let boosted = fit_boosted_points(in_bag, spec, cfg.termination_eps)?;
    let distances: Vec<f64> = train.iter().map(|p| boosted.anomaly_distance(p)).collect();
    let gmm = fit_em(&distances, &cfg.em)?;
    let probs = distances
        .iter()
        .map(|&d| gmm.anomaly_probability(d))
        .collect();
    Ok(CellFit {
        boosted,
        gmm,
        probs,
    })
}

/// Runs the full pipeline: bootstrap the training data, fit every
/// (model, bootstrap) cell, aggregate out-of-bag margins, estimate each
/// model's decision variance on the validation points, and emit weighted
/// verdicts. Deterministic for fixed seeds regardless of thread count.
pub fn run_pipeline(
    train: &TimeSeries,
    val: &TimeSeries,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if val.is_empty() {
        return Err(Error::TooFewPoints {
            context: "run_pipeline validation set",
            needed: 1,
            got: 0,
        });
    }
    let train_pts = train.points();
    let n = train_pts.len();
    if n < 8 {
        return Err(Error::TooFewPoints {
            context: "run_pipeline training set",
            needed: 8,
            got: n,
        });
    }
    let train_end = train_pts[n - 1].timestamp;
    let val_start = val.points()[0].timestamp;
    if train_end >= val_start {
        return Err(Error::invalid(
            "val",
            format!(
                "validation must start after training ends ({} >= {})",
                train_end, val_start
            ),
        ));
    }

    let b = cfg.bootstraps;
    let m_count = cfg.specs.len();
    let plan = draw_plan(n, b, cfg.alpha, cfg.seed)?;
    let cred = credibility(&complement(&plan))?;
    let in_bag: Vec<Vec<TimePoint>> = (0..=b)
        .map(|j| {
            plan.in_bag_indices(j)
                .into_iter()
                .map(|i| train_pts[i])
                .collect()
        })
        .collect();

    // The (model, bootstrap) grid is embarrassingly parallel; ordered
    // collection keeps the output independent of scheduling.
    let grid: Vec<(usize, usize)> = (0..m_count)
        .flat_map(|m| (0..=b).map(move |j| (m, j)))
        .collect();
    let cells: Vec<Result<CellFit>> = grid
        .par_iter()
        .map(|&(m, j)| {
            fit_cell(train_pts, &in_bag[j], &cfg.specs[m], cfg).map_err(|e| e.at_stage(m, j))
        })
        .collect();
    let mut by_model: Vec<Vec<CellFit>> = (0..m_count).map(|_| Vec::with_capacity(b + 1)).collect();
    for ((m, _), cell) in grid.into_iter().zip(cells) {
        by_model[m].push(cell?);
    }

    let mut models = Vec::with_capacity(m_count);
    let mut margins = Vec::with_capacity(m_count);
    for (m, cells) in by_model.into_iter().enumerate() {
        let mut p = Mat::zeros(n, b + 1);
        let mut boosted = Vec::with_capacity(b + 1);
        let mut gmms = Vec::with_capacity(b + 1);
        for (j, cell) in cells.into_iter().enumerate() {
            for i in 0..n {
                p.set(i, j, cell.probs[i]);
            }
            boosted.push(cell.boosted);
            gmms.push(cell.gmm);
        }
        let summary = oob_summary(&ProbMatrix { p, model_id: m }, &cred)?;
        margins.push(summary.r);
        models.push(FittedModel {
            spec: cfg.specs[m].clone(),
            boosted,
            gmms,
        });
    }

    let mut fitted = FittedEnsemble {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        bootstraps: b,
        alpha: cfg.alpha,
        models,
        mu_sigma: Vec::new(),
        weights: Vec::new(),
    };

    let k_count = val.len();
    let mut per_val_mean = vec![Vec::with_capacity(k_count); m_count];
    let mut per_val_sigma = vec![Vec::with_capacity(k_count); m_count];
    let mut samples_per_val = vec![Vec::with_capacity(k_count); m_count];
    for (k, point) in val.points().iter().enumerate() {
        let z_vals = fitted.model_probabilities(point);
        for (m, &z_val) in z_vals.iter().enumerate() {
            let (mu, sigma) = val_stats(z_val, &margins[m])?;
            per_val_mean[m].push(mu);
            per_val_sigma[m].push(sigma);
            samples_per_val[m].push(sample_probs(mu, sigma, &cfg.sampling, m, k)?);
        }
    }

    let mu_sigma: Vec<f64> = samples_per_val
        .iter()
        .map(|s| estimate_model_variance(s))
        .collect::<Result<_>>()?;
    let weights = ensemble_weights(&mu_sigma)?;
    fitted.mu_sigma = mu_sigma.clone();
    fitted.weights = weights.clone();

    let verdicts = fitted.score_series(val)?;
    Ok(PipelineOutput {
        report: ModelVarianceReport {
            mu_sigma,
            weights,
            per_val_mean,
            per_val_sigma,
        },
        verdicts,
        timestamps: val.timestamps(),
        fitted,
    })
}
