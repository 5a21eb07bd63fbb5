//! Boosted calendar embeddings: additive chains of per-category mean-lookup
//! learners fit stage by stage on the running residual.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{extract_calendar, CalendarFeatures, TimePoint, TimeSeries};

/// Calendar field a weak learner keys on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalendarFeature {
    HourOfDay,
    DayOfWeek,
    MonthOfYear,
    IsWeekend,
}

impl CalendarFeature {
    pub const ALL: [CalendarFeature; 4] = [
        CalendarFeature::HourOfDay,
        CalendarFeature::DayOfWeek,
        CalendarFeature::MonthOfYear,
        CalendarFeature::IsWeekend,
    ];

    pub fn cardinality(self) -> usize {
        match self {
            CalendarFeature::HourOfDay => 24,
            CalendarFeature::DayOfWeek => 7,
            CalendarFeature::MonthOfYear => 12,
            CalendarFeature::IsWeekend => 2,
        }
    }

    /// Category index of a calendar position under this feature.
    pub fn category(self, cal: &CalendarFeatures) -> usize {
        match self {
            CalendarFeature::HourOfDay => cal.hour_of_day as usize,
            CalendarFeature::DayOfWeek => cal.day_of_week as usize,
            CalendarFeature::MonthOfYear => cal.month_of_year as usize - 1,
            CalendarFeature::IsWeekend => cal.is_weekend as usize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CalendarFeature::HourOfDay => "hour_of_day",
            CalendarFeature::DayOfWeek => "day_of_week",
            CalendarFeature::MonthOfYear => "month_of_year",
            CalendarFeature::IsWeekend => "is_weekend",
        }
    }
}

impl std::str::FromStr for CalendarFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CalendarFeature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("calendar_feature", format!("unknown feature '{s}'")))
    }
}

impl std::fmt::Display for CalendarFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered stage list for one boosted model: at most one learner per listed
/// feature, fitted in order, capped at `max_stages`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    stages: Vec<CalendarFeature>,
    max_stages: usize,
}

impl EmbeddingSpec {
    pub fn new(stages: Vec<CalendarFeature>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::invalid("stages", "must list at least one feature"));
        }
        for (i, f) in stages.iter().enumerate() {
            if stages[..i].contains(f) {
                return Err(Error::invalid(
                    "stages",
                    format!("feature '{f}' listed more than once"),
                ));
            }
        }
        let max_stages = stages.len();
        Ok(EmbeddingSpec { stages, max_stages })
    }

    pub fn with_max_stages(mut self, max_stages: usize) -> Result<Self> {
        if max_stages == 0 {
            return Err(Error::invalid("max_stages", "must be positive"));
        }
        self.max_stages = max_stages;
        Ok(self)
    }

    pub fn stages(&self) -> &[CalendarFeature] {
        &self.stages
    }

    pub fn max_stages(&self) -> usize {
        self.max_stages
    }

    /// Stable human-readable identifier, e.g. `hour_of_day+day_of_week`.
    pub fn name(&self) -> String {
        self.stages
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Default model variety for the ensemble: single-feature models plus
    /// progressively richer combinations.
    pub fn default_ensemble() -> Vec<EmbeddingSpec> {
        use CalendarFeature::*;
        [
            vec![HourOfDay],
            vec![DayOfWeek],
            vec![HourOfDay, DayOfWeek],
            vec![HourOfDay, DayOfWeek, MonthOfYear],
            vec![HourOfDay, IsWeekend],
        ]
        .into_iter()
        .map(|stages| EmbeddingSpec::new(stages).expect("static stage lists are valid"))
        .collect()
    }
}

impl std::str::FromStr for EmbeddingSpec {
    type Err = Error;

    /// Parses `feature+feature+...`.
    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split('+')
            .map(|part| part.trim().parse())
            .collect::<Result<Vec<_>>>()?;
        EmbeddingSpec::new(stages)
    }
}

/// Per-category mean table for one calendar feature. Categories unseen
/// during fit fall back to the global residual mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub feature: CalendarFeature,
    /// Indexed by category; `None` marks categories absent from training.
    pub table: Vec<Option<f64>>,
    pub fallback: f64,
}

impl WeakLearner {
    #[inline]
    pub fn predict_category(&self, category: usize) -> f64 {
        self.table
            .get(category)
            .copied()
            .flatten()
            .unwrap_or(self.fallback)
    }
}

/// Fits one weak learner: least-squares per-category means of the residuals.
pub fn fit_weak(
    feature: CalendarFeature,
    categories: &[usize],
    residuals: &[f64],
) -> Result<WeakLearner> {
    if categories.is_empty() {
        return Err(Error::TooFewPoints {
            context: "fit_weak",
            needed: 1,
            got: 0,
        });
    }
    if categories.len() != residuals.len() {
        return Err(Error::LengthMismatch(format!(
            "{} categories for {} residuals",
            categories.len(),
            residuals.len()
        )));
    }
    let cardinality = feature.cardinality();
    let mut sums = vec![0.0f64; cardinality];
    let mut counts = vec![0usize; cardinality];
    for (&c, &r) in categories.iter().zip(residuals) {
        if c >= cardinality {
            return Err(Error::invalid(
                "categories",
                format!("category {c} out of range for {feature}"),
            ));
        }
        sums[c] += r;
        counts[c] += 1;
    }
    let fallback = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let table = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(WeakLearner {
        feature,
        table,
        fallback,
    })
}

/// Additive chain of weak learners; prediction is the sum of stage outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    learners: Vec<WeakLearner>,
    termination_eps: f64,
    spec: EmbeddingSpec,
    fitted_on: usize,
}

impl BoostedModel {
    pub fn learners(&self) -> &[WeakLearner] {
        &self.learners
    }

    pub fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    pub fn termination_eps(&self) -> f64 {
        self.termination_eps
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn predict_at(&self, t: NaiveDateTime) -> f64 {
        let cal = extract_calendar(t);
        self.learners
            .iter()
            .map(|l| l.predict_category(l.feature.category(&cal)))
            .sum()
    }

    pub fn predict(&self, timestamps: &[NaiveDateTime]) -> Vec<f64> {
        timestamps.iter().map(|&t| self.predict_at(t)).collect()
    }

    /// Anomaly distance of one observation: |prediction - value|.
    pub fn anomaly_distance(&self, point: &TimePoint) -> f64 {
        (self.predict_at(point.timestamp) - point.value).abs()
    }
}

/// Fits the boosted chain. Stage l fits the running residual; a stage whose
/// prediction RMS falls below `eps` is discarded and fitting stops, except
/// that the first stage is always kept so the model is never empty.
pub fn fit_boosted(series: &TimeSeries, spec: &EmbeddingSpec, eps: f64) -> Result<BoostedModel> {
    fit_boosted_points(series.points(), spec, eps)
}

pub(crate) fn fit_boosted_points(
    points: &[TimePoint],
    spec: &EmbeddingSpec,
    eps: f64,
) -> Result<BoostedModel> {
    if !(eps > 0.0) {
        return Err(Error::invalid(
            "eps",
            "termination threshold must be positive",
        ));
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints {
            context: "fit_boosted",
            needed: 2,
            got: n,
        });
    }
    let calendars: Vec<CalendarFeatures> = points
        .iter()
        .map(|p| extract_calendar(p.timestamp))
        .collect();
    let mut residual: Vec<f64> = points.iter().map(|p| p.value).collect();
    let mut learners = Vec::new();
    for &feature in spec.stages().iter().take(spec.max_stages()) {
        let categories: Vec<usize> = calendars.iter().map(|c| feature.category(c)).collect();
        let learner = fit_weak(feature, &categories, &residual)?;
        let preds: Vec<f64> = categories
            .iter()
            .map(|&c| learner.predict_category(c))
            .collect();
        let delta_rms = (preds.iter().map(|p| p * p).sum::<f64>() / n as f64).sqrt();
        let negligible = delta_rms < eps;
        if negligible && !learners.is_empty() {
            break;
        }
        for (r, p) in residual.iter_mut().zip(&preds) {
            *r -= p;
        }
        learners.push(learner);
        if negligible {
            break;
        }
    }
    Ok(BoostedModel {
        learners,
        termination_eps: eps,
        spec: spec.clone(),
        fitted_on: n,
    })
}
