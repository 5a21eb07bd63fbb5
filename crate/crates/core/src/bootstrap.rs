//! Bootstrap resampling plans over training indices, stored as membership
//! masks, plus the credibility weights derived from out-of-bag structure.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mat::BinMat;
use crate::util::{ceil_frac, component_rng, stream};

/// Membership masks for a family of bootstrap samples. Column 0 is the
/// full-data pseudo-sample (all ones); columns 1..=B are genuine bootstraps.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    h: BinMat,
    alpha: f64,
    bootstraps: usize,
    seed: u64,
}

impl BootstrapPlan {
    pub fn mask(&self) -> &BinMat {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    pub fn bootstraps(&self) -> usize {
        self.bootstraps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Indices present in column `j` (0 = full data).
    pub fn in_bag_indices(&self, j: usize) -> Vec<usize> {
        (0..self.h.rows()).filter(|&i| self.h.get(i, j)).collect()
    }

    /// Compact text form: header line, then one 0/1 row per training index.
    pub fn write_text(&self) -> String {
        let mut out = format!(
            "bootstrap_plan n={} b={} alpha={} seed={}\n",
            self.h.rows(),
            self.bootstraps,
            self.alpha,
            self.seed
        );
        for i in 0..self.h.rows() {
            let row: String = self
                .h
                .row(i)
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("plan", "empty plan text"))?;
        let mut n = None;
        let mut b = None;
        let mut alpha = None;
        let mut seed = None;
        for field in header.split_whitespace().skip(1) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::invalid("plan", format!("malformed field '{field}'")))?;
            match key {
                "n" => n = value.parse::<usize>().ok(),
                "b" => b = value.parse::<usize>().ok(),
                "alpha" => alpha = value.parse::<f64>().ok(),
                "seed" => seed = value.parse::<u64>().ok(),
                _ => return Err(Error::invalid("plan", format!("unknown field '{key}'"))),
            }
        }
        let (n, b, alpha, seed) = match (n, b, alpha, seed) {
            (Some(n), Some(b), Some(alpha), Some(seed)) => (n, b, alpha, seed),
            _ => return Err(Error::invalid("plan", "header missing n/b/alpha/seed")),
        };
        let mut h = BinMat::falses(n, b + 1);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if i >= n {
                return Err(Error::invalid("plan", "more rows than header declares"));
            }
            if line.len() != b + 1 {
                return Err(Error::invalid(
                    "plan",
                    format!("row {i} has {} cells, expected {}", line.len(), b + 1),
                ));
            }
            for (j, ch) in line.chars().enumerate() {
                match ch {
                    '1' => h.set(i, j, true),
                    '0' => {}
                    other => {
                        return Err(Error::invalid(
                            "plan",
                            format!("row {i} contains '{other}'"),
                        ))
                    }
                }
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::invalid(
                "plan",
                format!("{rows} rows for declared n={n}"),
            ));
        }
        Ok(BootstrapPlan {
            h,
            alpha,
            bootstraps: b,
            seed,
        })
    }
}

/// Draws `bootstraps` samples of ceil(alpha * n) indices with replacement and
/// records the deduplicated membership masks.
pub fn draw_plan(n: usize, bootstraps: usize, alpha: f64, seed: u64) -> Result<BootstrapPlan> {
    if n < 2 {
        return Err(Error::TooFewPoints {
            context: "draw_plan",
            needed: 2,
            got: n,
        });
    }
    if bootstraps == 0 {
        return Err(Error::invalid(
            "bootstraps",
            "must draw at least one sample",
        ));
    }
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::invalid(
            "alpha",
            format!("sample fraction must lie in (0.5, 1], got {alpha}"),
        ));
    }
    let draws = ceil_frac(alpha, n);
    let mut h = BinMat::falses(n, bootstraps + 1);
    for i in 0..n {
        h.set(i, 0, true);
    }
    for j in 1..=bootstraps {
        let mut rng = component_rng(seed, stream::BOOTSTRAP_COLUMN, 0, j as u64);
        for _ in 0..draws {
            let idx = rng.gen_range(0..n);
            h.set(idx, j, true);
        }
    }
    Ok(BootstrapPlan {
        h,
        alpha,
        bootstraps,
        seed,
    })
}

/// Complement mask: flips every cell, marking out-of-bag membership.
pub fn complement(plan: &BootstrapPlan) -> BinMat {
    let mut out = BinMat::falses(plan.h.rows(), plan.h.cols());
    for i in 0..plan.h.rows() {
        for j in 0..plan.h.cols() {
            out.set(i, j, !plan.h.get(i, j));
        }
    }
    out
}

/// Row-normalized out-of-bag weights over the genuine bootstrap columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityWeights {
    /// `w[i][j]` weights bootstrap j+1 for training index i; each row sums
    /// to one.
    pub w: Vec<Vec<f64>>,
    /// Rows that were in-bag everywhere and fell back to uniform weights.
    pub coverage_fallback_rows: BTreeSet<usize>,
}

/// Normalizes each out-of-bag row over columns 1..=B. An index that every
/// bootstrap happened to include gets uniform weights instead, since it has
/// no out-of-bag evidence to prefer one column over another.
pub fn credibility(oob: &BinMat) -> Result<CredibilityWeights> {
    if oob.cols() < 2 {
        return Err(Error::invalid(
            "oob",
            "mask needs the full-data column plus at least one bootstrap",
        ));
    }
    let b = oob.cols() - 1;
    let mut w = Vec::with_capacity(oob.rows());
    let mut coverage_fallback_rows = BTreeSet::new();
    for i in 0..oob.rows() {
        let row = &oob.row(i)[1..];
        let count = row.iter().filter(|&&x| x).count();
        if count == 0 {
            coverage_fallback_rows.insert(i);
            w.push(vec![1.0 / b as f64; b]);
        } else {
            let share = 1.0 / count as f64;
            w.push(row.iter().map(|&x| if x { share } else { 0.0 }).collect());
        }
    }
    Ok(CredibilityWeights {
        w,
        coverage_fallback_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_data_column_contains_everything() {
        let plan = draw_plan(50, 8, 0.8, 3).unwrap();
        assert_eq!(plan.in_bag_indices(0), (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn masks_match_redrawn_sample_sets() {
        // The mask must equal the set of drawn indices, duplicates collapsed.
        let (n, b, alpha, seed) = (40, 6, 0.8, 11);
        let plan = draw_plan(n, b, alpha, seed).unwrap();
        let draws = ceil_frac(alpha, n);
        for j in 1..=b {
            let mut rng = component_rng(seed, stream::BOOTSTRAP_COLUMN, 0, j as u64);
            let mut expected = BTreeSet::new();
            for _ in 0..draws {
                expected.insert(rng.gen_range(0..n));
            }
            let got: BTreeSet<usize> = plan.in_bag_indices(j).into_iter().collect();
            assert_eq!(got, expected, "column {j} diverged from its rng stream");
        }
    }

    #[test]
    fn draws_use_ceiling_of_fraction() {
        // 0.8 * 45 = 36 exactly; 0.77 * 45 = 34.65 rounds up to 35.
        assert_eq!(ceil_frac(0.8, 45), 36);
        assert_eq!(ceil_frac(0.77, 45), 35);
        let plan = draw_plan(45, 3, 0.77, 0).unwrap();
        for j in 1..=3 {
            assert!(plan.in_bag_indices(j).len() <= 35);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(draw_plan(1, 5, 0.8, 0).is_err());
        assert!(draw_plan(50, 0, 0.8, 0).is_err());
        assert!(draw_plan(50, 5, 0.5, 0).is_err());
        assert!(draw_plan(50, 5, 1.1, 0).is_err());
        assert!(draw_plan(50, 5, f64::NAN, 0).is_err());
    }

    #[test]
    fn complement_flips_every_cell() {
        let plan = draw_plan(30, 5, 0.8, 7).unwrap();
        let oob = complement(&plan);
        for i in 0..30 {
            for j in 0..6 {
                assert_ne!(plan.mask().get(i, j), oob.get(i, j));
            }
        }
        // Column 0 is all in-bag, so its complement is empty.
        assert!((0..30).all(|i| !oob.get(i, 0)));
    }

    #[test]
    fn credibility_rows_sum_to_one() {
        let plan = draw_plan(200, 10, 0.8, 5).unwrap();
        let weights = credibility(&complement(&plan)).unwrap();
        for (i, row) in weights.w.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
            assert_eq!(row.len(), 10);
        }
    }

    #[test]
    fn credibility_weight_values_follow_oob_counts() {
        let plan = draw_plan(200, 10, 0.8, 5).unwrap();
        let oob = complement(&plan);
        let weights = credibility(&oob).unwrap();
        for i in 0..200 {
            let count = (1..=10).filter(|&j| oob.get(i, j)).count();
            for j in 0..10 {
                let expect = if count == 0 {
                    0.1
                } else if oob.get(i, j + 1) {
                    1.0 / count as f64
                } else {
                    0.0
                };
                assert_eq!(weights.w[i][j], expect);
            }
        }
    }

    #[test]
    fn always_in_bag_rows_get_uniform_fallback() {
        // Hand-build a mask where row 0 is in-bag in every bootstrap.
        let mut h = BinMat::falses(3, 4);
        for j in 0..4 {
            h.set(0, j, true);
            h.set(1, 0, true);
            h.set(2, 0, true);
        }
        h.set(1, 1, true);
        h.set(2, 2, true);
        h.set(2, 3, true);
        let plan = BootstrapPlan {
            h,
            alpha: 0.8,
            bootstraps: 3,
            seed: 0,
        };
        let weights = credibility(&complement(&plan)).unwrap();
        assert_eq!(
            weights.coverage_fallback_rows,
            BTreeSet::from([0]),
            "only the fully covered row falls back"
        );
        assert_eq!(weights.w[0], vec![1.0 / 3.0; 3]);
        assert_eq!(weights.w[1], vec![0.0, 0.5, 0.5]);
        assert_eq!(weights.w[2], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn in_bag_fraction_tracks_sampling_with_replacement() {
        // Drawing ceil(alpha n) times with replacement marks each index with
        // probability 1 - (1 - 1/n)^draws, about 1 - exp(-alpha) for large n.
        let (n, b) = (500, 200);
        let alpha = 0.8;
        let plan = draw_plan(n, b, alpha, 42).unwrap();
        let total: usize = (1..=b).map(|j| plan.in_bag_indices(j).len()).sum();
        let frac = total as f64 / (n * b) as f64;
        let draws = ceil_frac(alpha, n) as f64;
        let p = 1.0 - (1.0 - 1.0 / n as f64).powf(draws);
        let se = (p * (1.0 - p) / (n * b) as f64).sqrt();
        // Bootstrap cells within a column are correlated; 6 nominal SEs
        // leaves generous room while still catching gross rate bugs.
        assert!(
            (frac - p).abs() < 6.0 * se.max(1e-4),
            "in-bag fraction {frac} vs expected {p}"
        );
    }

    #[test]
    fn plans_are_deterministic_per_seed() {
        let a = draw_plan(100, 12, 0.8, 9).unwrap();
        let b = draw_plan(100, 12, 0.8, 9).unwrap();
        let c = draw_plan(100, 12, 0.8, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn text_round_trip_preserves_plan() {
        let plan = draw_plan(33, 4, 0.9, 17).unwrap();
        let text = plan.write_text();
        let back = BootstrapPlan::from_text(&text).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn from_text_rejects_malformed_input() {
        assert!(BootstrapPlan::from_text("").is_err());
        assert!(BootstrapPlan::from_text("bootstrap_plan n=2 b=1 alpha=0.8\n11\n11\n").is_err());
        let bad_cell = "bootstrap_plan n=2 b=1 alpha=0.8 seed=0\n1x\n11\n";
        assert!(BootstrapPlan::from_text(bad_cell).is_err());
        let short_row = "bootstrap_plan n=2 b=1 alpha=0.8 seed=0\n1\n11\n";
        assert!(BootstrapPlan::from_text(short_row).is_err());
        let missing_row = "bootstrap_plan n=3 b=1 alpha=0.8 seed=0\n11\n11\n";
        assert!(BootstrapPlan::from_text(missing_row).is_err());
    }
}
