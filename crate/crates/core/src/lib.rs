//! Label-free anomaly detection for univariate time series.
//!
//! The pipeline fits an ensemble of boosted calendar-embedding models on
//! bootstrap subsamples, converts per-model prediction distances into anomaly
//! probabilities with a two-component Gaussian mixture, estimates each
//! model's decision variance by Monte-Carlo sampling around the 0.5
//! threshold, and combines per-model votes with variance-derived weights.
//!
//! Modules follow the data flow: [`timeseries`] (containers, CSV, splits),
//! [`synth`] (benchmark generator), [`boosted`] (embedding models),
//! [`bootstrap`] (subsampling plans), [`gmm`] (distance scoring),
//! [`ensemble`] (variance estimation and verdicts), [`eval`] (AUC, KNN
//! baseline, experiment harness).

// Validation guards use the negated form `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boosted;
pub mod bootstrap;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod mat;
pub mod synth;
pub mod timeseries;
pub mod util;

pub use error::{Error, Result};

pub use boosted::{
    fit_boosted, fit_weak, BoostedModel, CalendarFeature, EmbeddingSpec, WeakLearner,
};
pub use bootstrap::{complement, credibility, draw_plan, BootstrapPlan, CredibilityWeights};
pub use ensemble::{
    ensemble_decide, ensemble_weights, estimate_model_variance, oob_summary, run_pipeline,
    sample_probs, val_stats, EnsembleVerdict, FittedEnsemble, ModelVarianceReport, OobSummary,
    PipelineConfig, PipelineOutput, ProbMatrix, SamplingConfig,
};
pub use eval::{
    auc, config_fingerprint, emit_report, knn_score, run_experiment, AucResult, ExperimentReport,
    KnnConfig, Method, MethodResult, ReportFormat,
};
pub use gmm::{fit_em, fit_em_trace, EmConfig, Gmm1d};
pub use synth::{
    default_config, gen_arma, generate, inject_anomalies, signal_at, SynthConfig, SynthOutput,
};
pub use timeseries::{
    apply_label_windows, extract_calendar, load_label_windows, load_nab_csv, make_windows,
    ordered_split, write_label_windows, write_nab_csv, CalendarFeatures, SplitSpec, TimePoint,
    TimeSeries, WindowedSample,
};
