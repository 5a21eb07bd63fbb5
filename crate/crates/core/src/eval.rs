//! Evaluation harness: rank-based AUC, the nearest-neighbor distance
//! baseline, the repeated-split experiment protocol, and report rendering.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{run_pipeline, PipelineConfig};
use crate::error::{Error, Result};
use crate::timeseries::{make_windows, ordered_split, SplitSpec, TimeSeries, WindowedSample};
use crate::util::{mean, population_variance};

/// AUC of a score sequence against binary labels, with class counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Rank-based (Mann-Whitney) AUC. Tied scores contribute 1/2 per pair,
/// implemented by average ranks over groups of exactly equal scores.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<AucResult> {
    let n = scores.len();
    if n != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{n} scores for {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("scores", "empty input"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores", "contains nonfinite values"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels", "labels must be 0 or 1"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = n - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassLabels);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &s in &idx[i..=j] {
            if labels[s] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (positives * (positives + 1)) as f64 / 2.0;
    Ok(AucResult {
        auc: u / (positives as f64 * negatives as f64),
        positives,
        negatives,
    })
}

/// Nearest-neighbor baseline parameters: neighbor count and the rolling
/// window used to build feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub neighbors: usize,
    pub window: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            neighbors: 5,
            window: 5,
        }
    }
}

/// Mean Euclidean distance from each sample to its k nearest neighbors
/// among the other samples.
pub fn knn_score(samples: &[WindowedSample], config: &KnnConfig) -> Result<Vec<f64>> {
    let k = config.neighbors;
    if k == 0 {
        return Err(Error::invalid("neighbors", "must be positive"));
    }
    let n = samples.len();
    if n <= k {
        return Err(Error::TooFewPoints {
            context: "knn_score",
            needed: k + 1,
            got: n,
        });
    }
    let dim = samples[0].features.len();
    if samples.iter().any(|s| s.features.len() != dim) {
        return Err(Error::LengthMismatch(
            "samples have inconsistent feature lengths".into(),
        ));
    }
    let mut scores = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2: f64 = samples[i]
                .features
                .iter()
                .zip(&samples[j].features)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        scores.push(dists[..k].iter().sum::<f64>() / k as f64);
    }
    Ok(scores)
}

/// Scoring method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LafAd,
    Knn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LafAd => "laf_ad",
            Method::Knn => "knn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laf_ad" => Ok(Method::LafAd),
            "knn" => Ok(Method::Knn),
            other => Err(Error::invalid(
                "method",
                format!("unknown method '{other}' (expected laf_ad or knn)"),
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-method aggregate over the split repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub per_repeat: Vec<AucResult>,
    pub mean_auc: f64,
    /// Population variance of the repeat AUCs.
    pub variance: f64,
}

/// Full experiment record, reproducible from its config fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub window: usize,
    pub fingerprint: String,
    pub methods: Vec<MethodResult>,
}

/// SHA-256 hex digest of the canonical JSON form of any config bundle.
pub fn config_fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(value)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    dataset: &'a str,
    methods: &'a [Method],
    split: &'a SplitSpec,
    window: usize,
    pipeline: &'a PipelineConfig,
    knn: &'a KnnConfig,
}

/// Runs every method over every ordered split repeat and aggregates
/// validation AUCs. The label sequence is the ground truth; the pipeline
/// itself never sees it. Nearest-neighbor features are rebuilt from the full
/// series with the experiment-level window, so both methods score the same
/// validation points. Each repeat reseeds the pipeline deterministically.
pub fn run_experiment(
    series: &TimeSeries,
    methods: &[Method],
    split: &SplitSpec,
    window: usize,
    pipeline: &PipelineConfig,
    knn: &KnnConfig,
    dataset: &str,
) -> Result<ExperimentReport> {
    let labels = series
        .labels()
        .ok_or_else(|| Error::LabelsMissing(format!("dataset '{dataset}' carries no labels")))?
        .to_vec();
    if methods.is_empty() {
        return Err(Error::invalid("methods", "need at least one method"));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::invalid("methods", format!("method '{m}' repeated")));
        }
    }
    if window == 0 {
        return Err(Error::invalid("window", "must be positive"));
    }
    let knn_used = KnnConfig { window, ..*knn };
    let fingerprint = config_fingerprint(&FingerprintInput {
        dataset,
        methods,
        split,
        window,
        pipeline,
        knn: &knn_used,
    })?;

    let knn_samples = if methods.contains(&Method::Knn) {
        make_windows(series, window)?
    } else {
        Vec::new()
    };

    let splits = ordered_split(series, split)?;
    let mut per_method: Vec<Vec<AucResult>> = vec![Vec::new(); methods.len()];
    for (rep, (train, val)) in splits.iter().enumerate() {
        let boundary = train.len();
        let val_labels = &labels[boundary..];
        for (mi, method) in methods.iter().enumerate() {
            let result = match method {
                Method::LafAd => {
                    let cfg = pipeline
                        .clone()
                        .with_seed(pipeline.seed.wrapping_add(rep as u64));
                    let out = run_pipeline(train, val, &cfg)?;
                    let scores: Vec<f64> = out.verdicts.iter().map(|v| v.combined_score).collect();
                    auc(&scores, val_labels)?
                }
                Method::Knn => {
                    if boundary <= window {
                        return Err(Error::invalid(
                            "window",
                            format!("window {window} leaves no room before split at {boundary}"),
                        ));
                    }
                    let val_samples = &knn_samples[boundary - window..];
                    let scores = knn_score(val_samples, &knn_used)?;
                    auc(&scores, val_labels)?
                }
            };
            per_method[mi].push(result);
        }
    }

    let methods = methods
        .iter()
        .zip(per_method)
        .map(|(&method, per_repeat)| {
            let aucs: Vec<f64> = per_repeat.iter().map(|r| r.auc).collect();
            MethodResult {
                method,
                mean_auc: mean(&aucs),
                variance: population_variance(&aucs),
                per_repeat,
            }
        })
        .collect();
    Ok(ExperimentReport {
        dataset: dataset.to_string(),
        window,
        fingerprint,
        methods,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::invalid(
                "format",
                format!("unknown report format '{other}'"),
            )),
        }
    }
}

/// Renders a report deterministically in the requested format.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => Ok(render_csv(report)),
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("method,repeat,auc,positives,negatives\n");
    for m in &report.methods {
        for (rep, r) in m.per_repeat.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.method, rep, r.auc, r.positives, r.negatives
            ));
        }
    }
    out
}

fn render_markdown(report: &ExperimentReport) -> String {
    let mut out = format!(
        "AUC summary for `{}` (window {}, config {})\n\n",
        report.dataset,
        report.window,
        &report.fingerprint[..12.min(report.fingerprint.len())]
    );
    let mut header = String::from("| dataset |");
    let mut rule = String::from("| --- |");
    let mut mean_row = format!("| {} |", report.dataset);
    let mut var_row = String::from("| variance |");
    for m in &report.methods {
        header.push_str(&format!(" {} |", m.method));
        rule.push_str(" --- |");
        mean_row.push_str(&format!(" {:.4} |", m.mean_auc));
        var_row.push_str(&format!(" {:.4} |", m.variance));
    }
    out.push_str(&header);
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    out.push_str(&mean_row);
    out.push('\n');
    out.push_str(&var_row);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_config, generate};
    use crate::util::component_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn oracle_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, (&sp, &lp)) in scores.iter().zip(labels).enumerate() {
            if lp != 1 {
                continue;
            }
            for (j, (&sn, &ln)) in scores.iter().zip(labels).enumerate() {
                if ln != 0 || i == j {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let r = auc(&[0.9, 0.1], &[1, 0]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!((r.positives, r.negatives), (1, 1));
        let r = auc(&[0.1, 0.9], &[1, 0]).unwrap();
        assert_eq!(r.auc, 0.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let r = auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn hand_computed_example() {
        let r = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-15, "got {}", r.auc);
    }

    #[test]
    fn auc_rejects_bad_input() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::SingleClassLabels)
        ));
        assert!(matches!(
            auc(&[0.1, 0.2], &[0, 0]),
            Err(Error::SingleClassLabels)
        ));
        assert!(auc(&[0.1], &[1, 0]).is_err());
        assert!(auc(&[], &[]).is_err());
        assert!(auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
        assert!(auc(&[0.1, 0.2], &[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_oracle(
            // Scores on a coarse grid so exact ties actually occur.
            pairs in proptest::collection::vec((0u8..8, 0u8..2), 5..120)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
            let positives = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(positives >= 1 && positives < labels.len());
            let fast = auc(&scores, &labels).unwrap().auc;
            let slow = oracle_auc(&scores, &labels);
            prop_assert_eq!(fast, slow, "rank AUC diverged from pairwise oracle");
        }

        #[test]
        fn auc_inverts_under_score_negation(
            pairs in proptest::collection::vec((0u8..8, 0u8..2), 5..80)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
            let positives = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(positives >= 1 && positives < labels.len());
            let plain = auc(&scores, &labels).unwrap().auc;
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            let flipped = auc(&negated, &labels).unwrap().auc;
            // Up to rounding in the final division by positives*negatives.
            prop_assert!((plain - (1.0 - flipped)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_affine_transform(
            pairs in proptest::collection::vec((0u8..8, 0u8..2), 5..80)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
            let positives = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(positives >= 1 && positives < labels.len());
            let plain = auc(&scores, &labels).unwrap().auc;
            let scaled: Vec<f64> = scores.iter().map(|s| 3.0 * s + 11.0).collect();
            prop_assert_eq!(plain, auc(&scaled, &labels).unwrap().auc);
        }
    }

    /// One-dimensional samples: each value is its own feature vector.
    fn flat_samples(values: &[f64]) -> Vec<WindowedSample> {
        let series = crate::timeseries::tests::series_of(values);
        series
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| WindowedSample {
                features: vec![p.value],
                target: p.value,
                timestamp: p.timestamp,
                index: i,
            })
            .collect()
    }

    #[test]
    fn knn_identical_points_score_zero() {
        let samples = flat_samples(&[4.0, 4.0, 4.0]);
        let cfg = KnnConfig {
            neighbors: 1,
            window: 1,
        };
        assert_eq!(knn_score(&samples, &cfg).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn knn_line_example() {
        let samples = flat_samples(&[0.0, 1.0, 10.0]);
        let cfg = KnnConfig {
            neighbors: 1,
            window: 1,
        };
        assert_eq!(knn_score(&samples, &cfg).unwrap(), vec![1.0, 1.0, 9.0]);
    }

    #[test]
    fn knn_rejects_small_datasets() {
        let samples = flat_samples(&[0.0, 1.0, 2.0]);
        let cfg = KnnConfig {
            neighbors: 3,
            window: 1,
        };
        assert!(knn_score(&samples, &cfg).is_err());
        let cfg = KnnConfig {
            neighbors: 0,
            window: 1,
        };
        assert!(knn_score(&samples, &cfg).is_err());
    }

    #[test]
    fn knn_matches_distance_matrix_oracle() {
        let mut rng = component_rng(31, 10, 0, 0);
        let values: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 50.0).collect();
        let series = crate::timeseries::tests::series_of(&values);
        let samples = make_windows(&series, 4).unwrap();
        let cfg = KnnConfig {
            neighbors: 5,
            window: 4,
        };
        let scores = knn_score(&samples, &cfg).unwrap();
        for (i, &score) in scores.iter().enumerate() {
            let mut dists: Vec<f64> = (0..samples.len())
                .filter(|&j| j != i)
                .map(|j| {
                    samples[i]
                        .features
                        .iter()
                        .zip(&samples[j].features)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            dists.sort_by(f64::total_cmp);
            let oracle = dists[..5].iter().sum::<f64>() / 5.0;
            assert!((score - oracle).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn knn_is_permutation_equivariant() {
        let values = [3.0, 9.0, 1.0, 4.5, 7.0, 2.2, 8.8];
        let samples = flat_samples(&values);
        let cfg = KnnConfig {
            neighbors: 2,
            window: 1,
        };
        let scores = knn_score(&samples, &cfg).unwrap();
        let perm = [4usize, 0, 6, 2, 5, 1, 3];
        let permuted: Vec<WindowedSample> = perm.iter().map(|&i| samples[i].clone()).collect();
        let permuted_scores = knn_score(&permuted, &cfg).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            assert_eq!(permuted_scores[slot], scores[src]);
        }
    }

    fn labeled_series(n: usize, seed: u64) -> TimeSeries {
        let mut cfg = default_config(10.0);
        cfg.len = n;
        cfg.seed = seed;
        // A high anomaly rate keeps both classes present in small splits.
        cfg.normal_prob = 0.95;
        generate(&cfg).unwrap().labeled_series()
    }

    fn small_experiment(seed: u64) -> Result<ExperimentReport> {
        let series = labeled_series(1500, seed);
        let split = SplitSpec::new(0.8, 2, seed).unwrap();
        let mut pipeline = PipelineConfig::default().with_seed(seed);
        pipeline.specs.truncate(2);
        pipeline.bootstraps = 4;
        pipeline.sampling.samples_per_point = 100;
        run_experiment(
            &series,
            &[Method::LafAd, Method::Knn],
            &split,
            5,
            &pipeline,
            &KnnConfig::default(),
            "synthetic-small",
        )
    }

    #[test]
    fn experiment_report_shape_and_aggregates() {
        let report = small_experiment(3).unwrap();
        assert_eq!(report.methods.len(), 2);
        for m in &report.methods {
            assert_eq!(m.per_repeat.len(), 2);
            let aucs: Vec<f64> = m.per_repeat.iter().map(|r| r.auc).collect();
            let lo = aucs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = aucs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(m.mean_auc >= lo && m.mean_auc <= hi);
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / aucs.len() as f64;
            assert!((m.variance - var).abs() < 1e-15);
        }
        assert_eq!(report.window, 5);
        assert_eq!(report.fingerprint.len(), 64);
    }

    #[test]
    fn experiment_requires_labels_and_methods() {
        let series = labeled_series(1500, 4);
        let unlabeled = TimeSeries::new(series.points().to_vec()).unwrap();
        let split = SplitSpec::new(0.8, 1, 0).unwrap();
        let pipeline = PipelineConfig::default();
        let knn = KnnConfig::default();
        assert!(matches!(
            run_experiment(&unlabeled, &[Method::Knn], &split, 5, &pipeline, &knn, "x"),
            Err(Error::LabelsMissing(_))
        ));
        assert!(run_experiment(&series, &[], &split, 5, &pipeline, &knn, "x").is_err());
        assert!(run_experiment(
            &series,
            &[Method::Knn, Method::Knn],
            &split,
            5,
            &pipeline,
            &knn,
            "x"
        )
        .is_err());
    }

    #[test]
    fn identical_configs_reproduce_identical_reports() {
        let a = small_experiment(5).unwrap();
        let b = small_experiment(5).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(
            emit_report(&a, ReportFormat::Json).unwrap(),
            emit_report(&b, ReportFormat::Json).unwrap()
        );
    }

    #[test]
    fn fingerprint_tracks_config_changes() {
        let split = SplitSpec::new(0.8, 5, 0).unwrap();
        let a = config_fingerprint(&split).unwrap();
        let b = config_fingerprint(&split).unwrap();
        assert_eq!(a, b);
        let other = SplitSpec::new(0.8, 5, 1).unwrap();
        assert_ne!(a, config_fingerprint(&other).unwrap());
    }

    #[test]
    fn json_report_round_trips() {
        let report = small_experiment(6).unwrap();
        let json = emit_report(&report, ReportFormat::Json).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn csv_report_has_one_row_per_method_repeat() {
        let report = small_experiment(7).unwrap();
        let csv = emit_report(&report, ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "method,repeat,auc,positives,negatives");
        assert_eq!(lines.len(), 1 + 2 * 2, "2 methods x 2 repeats");
        assert!(lines[1].starts_with("laf_ad,0,"));
        assert!(lines[3].starts_with("knn,0,"));
    }

    #[test]
    fn markdown_report_lists_methods_and_variance() {
        let report = small_experiment(8).unwrap();
        let md = emit_report(&report, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| dataset | laf_ad | knn |"), "{md}");
        assert!(md.contains("| synthetic-small |"), "{md}");
        assert!(md.contains("| variance |"), "{md}");
    }

    #[test]
    fn method_and_format_parse_from_strings() {
        assert_eq!("laf_ad".parse::<Method>().unwrap(), Method::LafAd);
        assert_eq!("knn".parse::<Method>().unwrap(), Method::Knn);
        assert!("lofi".parse::<Method>().is_err());
        assert!(matches!(
            "md".parse::<ReportFormat>().unwrap(),
            ReportFormat::Markdown
        ));
        assert!("yaml".parse::<ReportFormat>().is_err());
    }
}
