//! Field-of-view filtering and static cluster removal (SCR).
//!
//! SCR turns each scan into at most one return per angle level and drops
//! every return whose `(angle level, distance level)` pair was seen in a set
//! of object-free reference frames:
//!
//! 1. sort returns by angle, moving no-return points to the end;
//! 2. quantize angles over `[phi1, phi2]` into `angle_levels` buckets,
//!    keeping the median-index return of each bucket;
//! 3. quantize distances in steps of `distance_step_m`;
//! 4. collect the quantized pairs of the reference frames into a dictionary;
//! 5. drop every return whose pair is in the dictionary.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_6, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{LidarPoint, LidarScan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScrConfig {
    pub phi1: f64,
    pub phi2: f64,
    pub angle_levels: usize,
    pub distance_levels: usize,
    pub distance_step_m: f64,
    /// Maximum number of reference frames used to build the dictionary.
    pub dict_frames: usize,
}

impl Default for ScrConfig {
    fn default() -> Self {
        Self {
            phi1: -FRAC_PI_6,
            phi2: PI,
            angle_levels: 216,
            distance_levels: 500,
            distance_step_m: 0.034,
            dict_frames: 5000,
        }
    }
}

impl ScrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi1 < self.phi2) {
            return Err(Error::config("scr.phi1", "must be below phi2"));
        }
        if self.angle_levels < 1 {
            return Err(Error::config("scr.angle_levels", "must be >= 1"));
        }
        if self.distance_levels < 1 {
            return Err(Error::config("scr.distance_levels", "must be >= 1"));
        }
        if !(self.distance_step_m > 0.0) {
            return Err(Error::config("scr.distance_step_m", "must be > 0"));
        }
        if self.dict_frames < 1 {
            return Err(Error::config("scr.dict_frames", "must be >= 1"));
        }
        Ok(())
    }

    pub fn angle_step(&self) -> f64 {
        (self.phi2 - self.phi1) / self.angle_levels as f64
    }

    pub fn angle_level(&self, angle: f64) -> usize {
        let level = ((angle - self.phi1) / self.angle_step()).floor();
        (level.max(0.0) as usize).min(self.angle_levels - 1)
    }

    pub fn level_center(&self, level: usize) -> f64 {
        self.phi1 + (level as f64 + 0.5) * self.angle_step()
    }
}

/// One surviving return of a quantized scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizedEntry {
    pub level: usize,
    pub distance_level: usize,
    pub angle_rad: f64,
    pub distance_m: f64,
}

/// A scan reduced to at most one return per angle level, ascending by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedScan {
    pub instance: usize,
    pub angle_levels: usize,
    pub distance_levels: usize,
    pub entries: Vec<QuantizedEntry>,
}

impl QuantizedScan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The surviving returns as a plain scan.
    pub fn to_scan(&self) -> LidarScan {
        LidarScan {
            instance: self.instance,
            points: self
                .entries
                .iter()
                .map(|e| LidarPoint::new(e.angle_rad, e.distance_m))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticDictionary {
    pub angle_levels: usize,
    pub distance_levels: usize,
    pub entries: BTreeSet<(usize, usize)>,
    pub source_frame_count: usize,
}

impl StaticDictionary {
    pub fn empty(cfg: &ScrConfig) -> Self {
        Self {
            angle_levels: cfg.angle_levels,
            distance_levels: cfg.distance_levels,
            entries: BTreeSet::new(),
            source_frame_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, level: usize, distance_level: usize) -> bool {
        self.entries.contains(&(level, distance_level))
    }
}

/// Keeps the points with `phi1 <= angle <= phi2`, in their original order.
pub fn fov_filter(scan: &LidarScan, phi1: f64, phi2: f64) -> LidarScan {
    LidarScan {
        instance: scan.instance,
        points: scan
            .points
            .iter()
            .filter(|p| p.angle_rad >= phi1 && p.angle_rad <= phi2)
            .copied()
            .collect(),
    }
}

/// Returns sorted by ascending angle, followed by the no-return points in
/// their original relative order.
pub fn sort_scan(scan: &LidarScan) -> LidarScan {
    let (mut returns, misses): (Vec<LidarPoint>, Vec<LidarPoint>) =
        scan.points.iter().partition(|p| p.is_return());
    returns.sort_by(|a, b| a.angle_rad.total_cmp(&b.angle_rad));
    returns.extend(misses);
    LidarScan {
        instance: scan.instance,
        points: returns,
    }
}

pub fn quantize_distance(distance_m: f64, cfg: &ScrConfig) -> usize {
    let level = (distance_m / cfg.distance_step_m).floor().max(0.0) as usize;
    level.min(cfg.distance_levels - 1)
}

/// Buckets an angle-sorted scan into angle levels.
///
/// Where several returns share a level, the one at the median index (lower
/// median for even counts) is kept. No-return points and returns outside
/// `[phi1, phi2]` are dropped.
pub fn quantize_angles(sorted: &LidarScan, cfg: &ScrConfig) -> QuantizedScan {
    let mut entries = Vec::new();
    let mut group: Vec<&LidarPoint> = Vec::new();
    let mut group_level = usize::MAX;

    let mut flush = |group: &mut Vec<&LidarPoint>, level: usize| {
        if let Some(p) = group.get((group.len().max(1) - 1) / 2) {
            entries.push(QuantizedEntry {
                level,
                distance_level: quantize_distance(p.distance_m, cfg),
                angle_rad: p.angle_rad,
                distance_m: p.distance_m,
            });
        }
        group.clear();
    };

    for p in sorted
        .points
        .iter()
        .filter(|p| p.is_return() && p.angle_rad >= cfg.phi1 && p.angle_rad <= cfg.phi2)
    {
        let level = cfg.angle_level(p.angle_rad);
        if level != group_level {
            flush(&mut group, group_level);
            group_level = level;
        }
        group.push(p);
    }
    flush(&mut group, group_level);

    QuantizedScan {
        instance: sorted.instance,
        angle_levels: cfg.angle_levels,
        distance_levels: cfg.distance_levels,
        entries,
    }
}

/// Field-of-view filter, sort and quantization of one raw scan.
pub fn quantize_scan(scan: &LidarScan, cfg: &ScrConfig) -> QuantizedScan {
    quantize_angles(&sort_scan(&fov_filter(scan, cfg.phi1, cfg.phi2)), cfg)
}

/// Union of the quantized pairs of the first `dict_frames` reference frames.
///
/// The frames must not contain moving objects.
pub fn build_dictionary(frames: &[LidarScan], cfg: &ScrConfig) -> Result<StaticDictionary> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("dictionary needs at least one reference frame"));
    }
    let used = &frames[..frames.len().min(cfg.dict_frames)];
    let mut dict = StaticDictionary::empty(cfg);
    for frame in used {
        let q = quantize_scan(frame, cfg);
        dict.entries
            .extend(q.entries.iter().map(|e| (e.level, e.distance_level)));
    }
    dict.source_frame_count = used.len();
    Ok(dict)
}

/// Drops every entry whose quantized pair is in the dictionary.
pub fn remove_static(scan: &QuantizedScan, dict: &StaticDictionary) -> Result<QuantizedScan> {
    if scan.angle_levels != dict.angle_levels || scan.distance_levels != dict.distance_levels {
        return Err(Error::invalid(format!(
            "scan quantized with {}x{} levels but dictionary uses {}x{}",
            scan.angle_levels, scan.distance_levels, dict.angle_levels, dict.distance_levels
        )));
    }
    Ok(QuantizedScan {
        entries: scan
            .entries
            .iter()
            .filter(|e| !dict.contains(e.level, e.distance_level))
            .copied()
            .collect(),
        ..scan.clone()
    })
}

/// Fraction of points eliminated: `(before - after) / before`.
pub fn scr_rate(before_total: usize, after_total: usize) -> Result<f64> {
    if before_total == 0 {
        return Err(Error::invalid("SCR rate undefined for an empty dataset"));
    }
    if after_total > before_total {
        return Err(Error::invalid(format!(
            "retained {after_total} points out of {before_total}"
        )));
    }
    Ok((before_total - after_total) as f64 / before_total as f64)
}

/// Runs the full per-instance SCR chain over a trajectory's scans.
pub fn preprocess_trajectory(
    scans: &[LidarScan],
    dict: &StaticDictionary,
    cfg: &ScrConfig,
) -> Result<Vec<QuantizedScan>> {
    cfg.validate()?;
    scans
        .iter()
        .map(|scan| remove_static(&quantize_scan(scan, cfg), dict))
        .collect()
}

/// Point totals before and after SCR. "Before" counts the returns that pass
/// the field-of-view filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScrCounts {
    pub before: usize,
    pub after: usize,
}

impl ScrCounts {
    pub fn tally(raw: &[LidarScan], processed: &[QuantizedScan], cfg: &ScrConfig) -> Self {
        let before = raw
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|p| p.is_return() && p.angle_rad >= cfg.phi1 && p.angle_rad <= cfg.phi2)
                    .count()
            })
            .sum();
        let after = processed.iter().map(QuantizedScan::len).sum();
        Self { before, after }
    }

    pub fn rate(&self) -> Result<f64> {
        scr_rate(self.before, self.after)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn scan(points: &[(f64, f64)]) -> LidarScan {
        LidarScan {
            instance: 0,
            points: points.iter().map(|&(a, d)| LidarPoint::new(a, d)).collect(),
        }
    }

    fn pairs(s: &LidarScan) -> Vec<(f64, f64)> {
        s.points.iter().map(|p| (p.angle_rad, p.distance_m)).collect()
    }

    #[test]
    fn fov_keeps_inside_points_in_order() {
        let cfg = ScrConfig::default();
        let s = scan(&[(-FRAC_PI_4, 1.0), (0.0, 2.0), (FRAC_PI_2, 3.0), (-3.0 * FRAC_PI_4, 4.0)]);
        let out = fov_filter(&s, cfg.phi1, cfg.phi2);
        assert_eq!(pairs(&out), vec![(0.0, 2.0), (FRAC_PI_2, 3.0)]);
        assert!(fov_filter(&scan(&[]), cfg.phi1, cfg.phi2).points.is_empty());
        let edge = scan(&[(cfg.phi1, 1.0), (cfg.phi1, 2.0)]);
        assert_eq!(fov_filter(&edge, cfg.phi1, cfg.phi2).points.len(), 2);
    }

    #[test]
    fn sort_moves_misses_to_the_end() {
        let s = scan(&[(0.5, 2.0), (0.1, 3.0), (0.3, 0.0)]);
        assert_eq!(pairs(&sort_scan(&s)), vec![(0.1, 3.0), (0.5, 2.0), (0.3, 0.0)]);
        let sorted = scan(&[(0.1, 1.0), (0.2, 1.0), (0.3, 1.0)]);
        assert_eq!(sort_scan(&sorted), sorted);
        let misses = scan(&[(0.9, 0.0), (0.1, 0.0), (0.5, 0.0)]);
        assert_eq!(sort_scan(&misses), misses);
    }

    #[test]
    fn angle_levels_at_the_bounds() {
        let cfg = ScrConfig::default();
        let lo = quantize_angles(&scan(&[(cfg.phi1, 1.0)]), &cfg);
        assert_eq!(lo.entries[0].level, 0);
        let hi = quantize_angles(&scan(&[(cfg.phi2, 1.0)]), &cfg);
        assert_eq!(hi.entries[0].level, cfg.angle_levels - 1);
    }

    #[test]
    fn median_index_wins_within_a_level() {
        let cfg = ScrConfig::default();
        let base = cfg.phi1 + 10.0 * cfg.angle_step();
        let w = cfg.angle_step();
        let s = scan(&[(base + 0.1 * w, 4.0), (base + 0.5 * w, 7.0), (base + 0.9 * w, 2.0)]);
        let q = quantize_angles(&s, &cfg);
        assert_eq!(q.entries.len(), 1);
        assert_eq!(q.entries[0].distance_m, 7.0);
        // Even count: lower median.
        let s = scan(&[(base + 0.1 * w, 4.0), (base + 0.9 * w, 2.0)]);
        assert_eq!(quantize_angles(&s, &cfg).entries[0].distance_m, 4.0);
    }

    #[test]
    fn distance_levels() {
        let cfg = ScrConfig::default();
        assert_eq!(quantize_distance(0.0, &cfg), 0);
        assert_eq!(quantize_distance(0.034, &cfg), 1);
        assert_eq!(quantize_distance(1.0, &cfg), 29);
        assert_eq!(quantize_distance(1e6, &cfg), cfg.distance_levels - 1);
    }

    #[test]
    fn dictionary_is_a_set_union() {
        let cfg = ScrConfig::default();
        let frame = scan(&[(0.1, 2.0), (0.5, 3.0), (1.0, 4.0)]);
        let one = build_dictionary(std::slice::from_ref(&frame), &cfg).unwrap();
        let five = build_dictionary(&vec![frame.clone(); 5], &cfg).unwrap();
        assert_eq!(one.entries, five.entries);
        assert_eq!(five.source_frame_count, 5);

        let other = scan(&[(2.0, 5.0), (2.5, 6.0)]);
        let both = build_dictionary(&[frame, other], &cfg).unwrap();
        assert_eq!(both.len(), 5);

        assert!(build_dictionary(&[], &cfg).is_err());
    }

    #[test]
    fn removal_against_full_and_empty_dictionaries() {
        let cfg = ScrConfig::default();
        let frame = scan(&[(0.1, 2.0), (0.5, 3.0), (1.0, 4.0)]);
        let dict = build_dictionary(std::slice::from_ref(&frame), &cfg).unwrap();
        let q = quantize_scan(&frame, &cfg);
        assert!(remove_static(&q, &dict).unwrap().is_empty());
        let empty = StaticDictionary::empty(&cfg);
        assert_eq!(remove_static(&q, &empty).unwrap(), q);

        let other_cfg = ScrConfig {
            angle_levels: 100,
            ..cfg.clone()
        };
        let q_other = quantize_scan(&frame, &other_cfg);
        assert!(remove_static(&q_other, &dict).is_err());
    }

    #[test]
    fn scr_rate_values() {
        assert_eq!(scr_rate(100, 0).unwrap(), 1.0);
        assert_eq!(scr_rate(100, 100).unwrap(), 0.0);
        assert!((scr_rate(460, 216).unwrap() - 244.0 / 460.0).abs() < 1e-15);
        assert!(scr_rate(0, 0).is_err());
    }

    fn arb_scan() -> impl Strategy<Value = LidarScan> {
        prop::collection::vec((-PI..PI, prop_oneof![Just(0.0), 0.01f64..16.0]), 0..300)
            .prop_map(|pts| scan(&pts))
    }

    proptest! {
        #[test]
        fn quantized_scans_are_strictly_ascending(s in arb_scan()) {
            let cfg = ScrConfig::default();
            let q = quantize_scan(&s, &cfg);
            prop_assert!(q.entries.len() <= cfg.angle_levels);
            prop_assert!(q.entries.windows(2).all(|w| w[0].level < w[1].level));
            for e in &q.entries {
                prop_assert!(e.angle_rad >= cfg.phi1 && e.angle_rad <= cfg.phi2);
                prop_assert!(e.distance_level < cfg.distance_levels);
            }
        }

        #[test]
        fn removal_is_sound_and_idempotent(s in arb_scan(), d in arb_scan()) {
            let cfg = ScrConfig::default();
            let dict = build_dictionary(&[d], &cfg).unwrap();
            let once = remove_static(&quantize_scan(&s, &cfg), &dict).unwrap();
            let twice = remove_static(&once, &dict).unwrap();
            prop_assert_eq!(&once, &twice);
            for e in &once.entries {
                prop_assert!(!dict.contains(e.level, e.distance_level));
            }
        }

        #[test]
        fn bigger_dictionary_never_lowers_the_rate(
            s in prop::collection::vec(arb_scan(), 1..4),
            d1 in arb_scan(),
            d2 in arb_scan(),
        ) {
            let cfg = ScrConfig::default();
            let small = build_dictionary(std::slice::from_ref(&d1), &cfg).unwrap();
            let large = build_dictionary(&[d1, d2], &cfg).unwrap();
            prop_assert!(small.entries.is_subset(&large.entries));
            let a = preprocess_trajectory(&s, &small, &cfg).unwrap();
            let b = preprocess_trajectory(&s, &large, &cfg).unwrap();
            let ca = ScrCounts::tally(&s, &a, &cfg);
            let cb = ScrCounts::tally(&s, &b, &cfg);
            if ca.before > 0 {
                prop_assert!(cb.rate().unwrap() >= ca.rate().unwrap());
            }
        }
    }
}
