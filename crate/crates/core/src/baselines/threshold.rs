//! Point-count thresholds for blockage occurrence and severity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1 iff `count > theta`.
pub fn predict_occurrence(count: u64, theta: u64) -> u8 {
    u8::from(count > theta)
}

/// Sweeps `theta` over `1..=max(count)` and keeps the most accurate value,
/// the smallest one on ties.
pub fn fit_threshold(samples: &[(u64, u8)]) -> Result<u64> {
    let positives = samples.iter().filter(|s| s.1 == 1).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::invalid(
            "threshold fitting needs both positive and negative windows",
        ));
    }
    if let Some(s) = samples.iter().find(|s| s.1 > 1) {
        return Err(Error::invalid(format!("occurrence label {} is not 0 or 1", s.1)));
    }
    let max = samples.iter().map(|s| s.0).max().unwrap_or(0).max(1) as usize;

    // hist[c] = (negatives, positives) with count c.
    let mut hist = vec![(0usize, 0usize); max + 1];
    for &(c, y) in samples {
        if y == 1 {
            hist[c as usize].1 += 1;
        } else {
            hist[c as usize].0 += 1;
        }
    }
    // Correct at theta: negatives with count <= theta plus positives above it.
    let mut neg_le = hist[0].0;
    let mut pos_le = hist[0].1;
    let mut best = (0usize, 1u64);
    for theta in 1..=max {
        neg_le += hist[theta].0;
        pos_le += hist[theta].1;
        let correct = neg_le + (positives - pos_le);
        if correct > best.0 {
            best = (correct, theta as u64);
        }
    }
    Ok(best.1)
}

/// Fitted severity thresholds over the levels seen in training.
///
/// A count `c` maps to `levels[i]` where `thresholds[i-1] < c <= thresholds[i]`,
/// with open ends below the first and above the last threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityThresholds {
    pub levels: Vec<u8>,
    pub thresholds: Vec<u64>,
}

impl SeverityThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::invalid("severity thresholds need at least one level"));
        }
        if self.thresholds.len() + 1 != self.levels.len() {
            return Err(Error::invalid(format!(
                "{} thresholds for {} levels",
                self.thresholds.len(),
                self.levels.len()
            )));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("severity thresholds must be strictly increasing"));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("severity levels must be strictly increasing"));
        }
        Ok(())
    }

    pub fn predict(&self, count: u64) -> Result<u8> {
        self.validate()?;
        let i = self.thresholds.iter().take_while(|&&t| count > t).count();
        Ok(self.levels[i])
    }
}

/// Exhaustive search over strictly increasing integer thresholds in
/// `0..=max(count)` maximizing training accuracy; ties go to the
/// lexicographically smallest threshold vector.
pub fn fit_severity_thresholds(samples: &[(u64, u8)]) -> Result<SeverityThresholds> {
    if samples.is_empty() {
        return Err(Error::invalid("severity fitting needs at least one window"));
    }
    let mut levels: Vec<u8> = samples.iter().map(|s| s.1).collect();
    levels.sort_unstable();
    levels.dedup();
    let k = levels.len();
    let m = k - 1;
    let max = samples.iter().map(|s| s.0).max().unwrap_or(0) as usize;
    if m > max + 1 {
        return Err(Error::invalid(format!(
            "{k} severity levels cannot be separated with counts up to {max}"
        )));
    }
    if m == 0 {
        return Ok(SeverityThresholds {
            levels,
            thresholds: vec![],
        });
    }

    // prefix[j][c] = windows of level j with count <= c.
    let mut prefix = vec![vec![0i64; max + 1]; k];
    for &(c, level) in samples {
        let j = levels.binary_search(&level).expect("level collected above");
        prefix[j][c as usize] += 1;
    }
    for row in &mut prefix {
        for c in 1..=max {
            row[c] += row[c - 1];
        }
    }
    let total = |j: usize| prefix[j][max];

    // h[j][a]: best correct count from levels j..=m given thresholds[j-1] = a.
    const NONE: i64 = i64::MIN / 4;
    let mut h = vec![vec![NONE; max + 1]; m + 1];
    for a in 0..=max {
        h[m][a] = total(m) - prefix[m][a];
    }
    for j in (1..m).rev() {
        // Suffix maxima of prefix[j][b] + h[j+1][b] over b > a.
        let mut best = NONE;
        for a in (0..=max).rev() {
            if best > NONE {
                h[j][a] = best - prefix[j][a];
            }
            best = best.max(prefix[j][a] + h[j + 1][a]);
        }
    }

    let score = |a: usize| prefix[0][a] + h[1][a];
    let target = (0..=max).map(score).max().expect("non-empty range");
    let mut thresholds = Vec::with_capacity(m);
    let mut a = (0..=max).find(|&a| score(a) == target).expect("maximum attained");
    thresholds.push(a as u64);
    for j in 1..m {
        let need = h[j][a] + prefix[j][a];
        a = (a + 1..=max)
            .find(|&b| prefix[j][b] + h[j + 1][b] == need)
            .expect("maximum attained");
        thresholds.push(a as u64);
    }
    Ok(SeverityThresholds { levels, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strict_occurrence_rule() {
        assert_eq!(predict_occurrence(15, 14), 1);
        assert_eq!(predict_occurrence(0, 1), 0);
        assert_eq!(predict_occurrence(14, 14), 0);
    }

    #[test]
    fn separable_counts_pick_smallest_threshold() {
        let samples = [(0, 0), (3, 0), (5, 0), (9, 1), (12, 1)];
        assert_eq!(fit_threshold(&samples).unwrap(), 5);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(fit_threshold(&[(1, 0), (2, 0)]).is_err());
        assert!(fit_threshold(&[(1, 1)]).is_err());
        assert!(fit_threshold(&[]).is_err());
    }

    #[test]
    fn severity_prediction_boundaries() {
        let t = SeverityThresholds {
            levels: vec![1, 2],
            thresholds: vec![50],
        };
        assert_eq!(t.predict(10).unwrap(), 1);
        assert_eq!(t.predict(50).unwrap(), 1);
        assert_eq!(t.predict(51).unwrap(), 2);
        let bad = SeverityThresholds {
            levels: vec![1, 2, 3],
            thresholds: vec![50, 50],
        };
        assert!(bad.predict(3).is_err());
    }

    #[test]
    fn severity_fit_on_separable_data() {
        let samples = [(3, 2), (7, 2), (20, 3), (25, 3), (40, 4)];
        let t = fit_severity_thresholds(&samples).unwrap();
        assert_eq!(t.levels, vec![2, 3, 4]);
        assert_eq!(t.thresholds, vec![7, 25]);
        for (c, l) in samples {
            assert_eq!(t.predict(c).unwrap(), l);
        }
    }

    #[test]
    fn single_severity_level_needs_no_threshold() {
        let t = fit_severity_thresholds(&[(4, 3), (9, 3)]).unwrap();
        assert!(t.thresholds.is_empty());
        assert_eq!(t.predict(1000).unwrap(), 3);
    }

    fn accuracy_occ(samples: &[(u64, u8)], theta: u64) -> usize {
        samples
            .iter()
            .filter(|s| predict_occurrence(s.0, theta) == s.1)
            .count()
    }

    fn severity_brute(samples: &[(u64, u8)], levels: &[u8], max: u64) -> (usize, Vec<u64>) {
        fn rec(
            samples: &[(u64, u8)],
            levels: &[u8],
            max: u64,
            prefix: &mut Vec<u64>,
            best: &mut (usize, Vec<u64>),
        ) {
            if prefix.len() + 1 == levels.len() {
                let t = SeverityThresholds {
                    levels: levels.to_vec(),
                    thresholds: prefix.clone(),
                };
                let correct = samples
                    .iter()
                    .filter(|s| t.predict(s.0).unwrap() == s.1)
                    .count();
                if correct > best.0 {
                    *best = (correct, prefix.clone());
                }
                return;
            }
            let lo = prefix.last().map_or(0, |&p| p + 1);
            for v in lo..=max {
                prefix.push(v);
                rec(samples, levels, max, prefix, best);
                prefix.pop();
            }
        }
        let mut best = (0, vec![]);
        rec(samples, levels, max, &mut vec![], &mut best);
        best
    }

    proptest! {
        #[test]
        fn occurrence_fit_matches_brute_force(
            samples in prop::collection::vec((0u64..30, 0u8..2), 2..40)
        ) {
            let pos = samples.iter().filter(|s| s.1 == 1).count();
            prop_assume!(pos > 0 && pos < samples.len());
            let theta = fit_threshold(&samples).unwrap();
            let max = samples.iter().map(|s| s.0).max().unwrap().max(1);
            let best = (1..=max).map(|t| accuracy_occ(&samples, t)).max().unwrap();
            let first = (1..=max).find(|&t| accuracy_occ(&samples, t) == best).unwrap();
            prop_assert_eq!(theta, first);
        }

        #[test]
        fn raising_theta_never_adds_positives(count in 0u64..1000, a in 1u64..500, b in 1u64..500) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(predict_occurrence(count, hi) <= predict_occurrence(count, lo));
        }

        #[test]
        fn severity_fit_matches_brute_force(
            samples in prop::collection::vec((0u64..12, 1u8..4), 1..25)
        ) {
            let mut levels: Vec<u8> = samples.iter().map(|s| s.1).collect();
            levels.sort_unstable();
            levels.dedup();
            let max = samples.iter().map(|s| s.0).max().unwrap();
            let fitted = fit_severity_thresholds(&samples);
            if levels.len() - 1 > max as usize + 1 {
                prop_assert!(fitted.is_err());
                return Ok(());
            }
            let fitted = fitted.unwrap();
            let (best, thresholds) = severity_brute(&samples, &levels, max);
            let correct = samples.iter().filter(|s| fitted.predict(s.0).unwrap() == s.1).count();
            prop_assert_eq!(correct, best);
            if levels.len() > 1 {
                prop_assert_eq!(fitted.thresholds, thresholds);
            }
        }

        #[test]
        fn every_count_maps_to_one_level(count in 0u64..10_000, mut t in prop::collection::btree_set(0u64..5000, 0..4)) {
            let thresholds: Vec<u64> = std::mem::take(&mut t).into_iter().collect();
            let levels: Vec<u8> = (1..=thresholds.len() as u8 + 1).collect();
            let s = SeverityThresholds { levels: levels.clone(), thresholds: thresholds.clone() };
            let level = s.predict(count).unwrap();
            let i = levels.iter().position(|&l| l == level).unwrap();
            prop_assert!(i == 0 || count > thresholds[i - 1]);
            prop_assert!(i == thresholds.len() || count <= thresholds[i]);
        }
    }
}
