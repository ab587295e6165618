//! Non-learned LiDAR predictors.
//!
//! * occurrence: the window's return count against a fitted threshold;
//! * blockage time: DBSCAN over the window, target selection, and a
//!   constant-velocity least-squares fit;
//! * severity: the return count against fitted per-level thresholds;
//! * direction: first versus last populated instance.

pub mod dbscan;
pub mod motion;
pub mod threshold;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan, DbscanParams, NOISE};
pub use motion::{
    cluster_tracks, estimate_blockage_time, ls_fit, predict_blockage_time, select_target,
    ClusterTrack, LineFit, MotionEstimate, TrackPosition,
};
pub use threshold::{
    fit_severity_thresholds, fit_threshold, predict_occurrence, SeverityThresholds,
};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::simulator::LidarPoint;
use crate::windowing::ObservationWindow;

/// The four prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Problem {
    Occurrence = 1,
    Time = 2,
    Severity = 3,
    Direction = 4,
}

impl Problem {
    pub const ALL: [Problem; 4] = [
        Problem::Occurrence,
        Problem::Time,
        Problem::Severity,
        Problem::Direction,
    ];

    /// Whether the problem is posed only on windows followed by a blockage.
    pub fn positives_only(self) -> bool {
        self != Problem::Occurrence
    }

    pub fn is_regression(self) -> bool {
        self == Problem::Time
    }

    pub fn name(self) -> &'static str {
        match self {
            Problem::Occurrence => "occurrence",
            Problem::Time => "time",
            Problem::Severity => "severity",
            Problem::Direction => "direction",
        }
    }

    /// Ground truth of `window` for this problem, if it is posed there.
    pub fn target(self, window: &ObservationWindow) -> Option<f64> {
        let l = &window.labels;
        match self {
            Problem::Occurrence => Some(f64::from(l.occurrence)),
            Problem::Time => l.instance.map(|n| n as f64),
            Problem::Severity => l.severity.map(f64::from),
            Problem::Direction => l.direction.map(f64::from),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

impl From<Problem> for u8 {
    fn from(p: Problem) -> u8 {
        p as u8
    }
}

impl TryFrom<u8> for Problem {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Problem::Occurrence),
            2 => Ok(Problem::Time),
            3 => Ok(Problem::Severity),
            4 => Ok(Problem::Direction),
            other => Err(format!("problem must be 1..=4, got {other}")),
        }
    }
}

/// A LiDAR return tagged with its 1-based instance within the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub instance: usize,
    pub position: Point2,
}

/// Every return of the window in Cartesian coordinates.
pub fn window_points(window: &ObservationWindow) -> Vec<TimedPoint> {
    window
        .lidar
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter().filter(|s| s[1] != 0.0).map(move |s| TimedPoint {
                instance: i + 1,
                position: LidarPoint::new(s[0], s[1]).to_cartesian(),
            })
        })
        .collect()
}

/// Number of non-zero-distance slots over all instances of the window.
pub fn count_points(window: &ObservationWindow) -> u64 {
    window
        .lidar
        .iter()
        .map(|row| row.iter().filter(|s| s[1] != 0.0).count() as u64)
        .sum()
}

/// 0 when the mean x grows from the first to the last instance considered,
/// 1 otherwise.
///
/// Without `pinned`, the first and last instances holding returns are used;
/// `pinned` names two 1-based instances instead.
pub fn predict_direction(window: &ObservationWindow, pinned: Option<[usize; 2]>) -> Result<u8> {
    let points = window_points(window);
    let (first, last) = match pinned {
        Some([a, b]) => (a, b),
        None => {
            let first = points.iter().map(|p| p.instance).min();
            let last = points.iter().map(|p| p.instance).max();
            match (first, last) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::invalid(format!("window {} has no returns", window.id))),
            }
        }
    };
    let mean_at = |t: usize| {
        let xs: Vec<f64> = points
            .iter()
            .filter(|p| p.instance == t)
            .map(|p| p.position.x)
            .collect();
        if xs.is_empty() {
            Err(Error::invalid(format!(
                "window {} has no returns at instance {t}",
                window.id
            )))
        } else {
            Ok(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    Ok(if mean_at(last)? > mean_at(first)? { 0 } else { 1 })
}

/// User-facing knobs of the baselines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub track_position: TrackPosition,
    pub direction_instances: Option<[usize; 2]>,
}

/// Everything needed to run the baselines, as persisted after fitting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    /// Occurrence threshold per horizon.
    pub occurrence: BTreeMap<usize, u64>,
    /// Severity thresholds per horizon.
    pub severity: BTreeMap<usize, SeverityThresholds>,
    pub dbscan: DbscanParams,
    pub options: BaselineConfig,
}

impl BaselineParams {
    pub fn new(dbscan: DbscanParams, options: BaselineConfig) -> Self {
        Self {
            dbscan,
            options,
            ..Self::default()
        }
    }

    /// Fits the parameters of `problem` for `horizon` on `windows`.
    /// Problems without trainable parameters only validate their inputs.
    pub fn fit(&mut self, problem: Problem, horizon: usize, windows: &[ObservationWindow]) -> Result<()> {
        match problem {
            Problem::Occurrence => {
                let samples: Vec<(u64, u8)> = windows
                    .iter()
                    .map(|w| (count_points(w), w.labels.occurrence))
                    .collect();
                let theta = fit_threshold(&samples)?;
                log::info!("occurrence threshold for horizon {horizon}: {theta}");
                self.occurrence.insert(horizon, theta);
            }
            Problem::Severity => {
                let samples: Vec<(u64, u8)> = windows
                    .iter()
                    .filter_map(|w| w.labels.severity.map(|s| (count_points(w), s)))
                    .collect();
                let t = fit_severity_thresholds(&samples)?;
                log::info!("severity thresholds for horizon {horizon}: {:?}", t.thresholds);
                self.severity.insert(horizon, t);
            }
            Problem::Time => self.dbscan.validate()?,
            Problem::Direction => {
                if let Some([a, b]) = self.options.direction_instances {
                    if a == 0 || b == 0 || a == b {
                        return Err(Error::config(
                            "baseline.direction_instances",
                            "must be two distinct 1-based instances",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Prediction for one window. Blockage-time windows without a usable
    /// target fall back to the middle of the horizon.
    pub fn predict(&self, problem: Problem, horizon: usize, window: &ObservationWindow) -> Result<f64> {
        match problem {
            Problem::Occurrence => {
                let theta = self.occurrence.get(&horizon).ok_or_else(|| {
                    Error::invalid(format!("no occurrence threshold fitted for horizon {horizon}"))
                })?;
                Ok(f64::from(predict_occurrence(count_points(window), *theta)))
            }
            Problem::Time => {
                match estimate_blockage_time(window, &self.dbscan, self.options.track_position) {
                    Ok(est) => Ok(est.predicted_instance),
                    Err(Error::NoCrossing(msg)) => {
                        log::debug!("window {}: {msg}; using horizon midpoint", window.id);
                        Ok((1.0 + horizon as f64) / 2.0)
                    }
                    Err(Error::InvalidInput(msg)) => {
                        log::debug!("window {}: {msg}; using horizon midpoint", window.id);
                        Ok((1.0 + horizon as f64) / 2.0)
                    }
                    Err(e) => Err(e),
                }
            }
            Problem::Severity => {
                let t = self.severity.get(&horizon).ok_or_else(|| {
                    Error::invalid(format!("no severity thresholds fitted for horizon {horizon}"))
                })?;
                Ok(f64::from(t.predict(count_points(window))?))
            }
            Problem::Direction => match predict_direction(window, self.options.direction_instances) {
                Ok(d) => Ok(f64::from(d)),
                // No returns at all: the rule's "otherwise" branch.
                Err(Error::InvalidInput(_)) => Ok(1.0),
                Err(e) => Err(e),
            },
        }
    }
}

/// One row of `preds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub window_id: usize,
    pub problem: Problem,
    pub prediction: f64,
}

/// Predictions for every window on which `problem` is posed.
pub fn predict_all(
    params: &BaselineParams,
    problem: Problem,
    horizon: usize,
    windows: &[ObservationWindow],
) -> Result<Vec<Prediction>> {
    windows
        .iter()
        .filter(|w| problem.target(w).is_some())
        .map(|w| {
            Ok(Prediction {
                window_id: w.id,
                problem,
                prediction: params.predict(problem, horizon, w)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::{Labels, WindowSource};
    use std::f64::consts::FRAC_PI_2;

    fn window(rows: Vec<Vec<[f64; 2]>>) -> ObservationWindow {
        ObservationWindow {
            id: 0,
            source: WindowSource {
                trajectory: "t".into(),
                start: 0,
            },
            labels: Labels::negative(),
            power: vec![vec![]; rows.len()],
            lidar: rows,
        }
    }

    /// Rows with one return per x-position, all at y = 3.
    fn window_at(xs: &[&[f64]]) -> ObservationWindow {
        window(
            xs.iter()
                .map(|row| {
                    row.iter()
                        .map(|&x: &f64| [3.0f64.atan2(x), x.hypot(3.0)])
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn counting() {
        assert_eq!(count_points(&window(vec![])), 0);
        assert_eq!(count_points(&window(vec![vec![[0.3, 0.0]; 216]; 16])), 0);
        let mut rows = vec![vec![[0.0, 0.0]; 10]; 3];
        for (i, slot) in [(0, 1), (0, 4), (1, 0), (1, 9), (2, 2), (2, 3), (2, 5)] {
            rows[i][slot][1] = 1.5;
        }
        assert_eq!(count_points(&window(rows)), 7);
    }

    #[test]
    fn points_are_projected_on_the_street() {
        let w = window(vec![vec![[FRAC_PI_2, 4.0], [0.0, 2.0], [1.0, 0.0]]]);
        let pts = window_points(&w);
        assert_eq!(pts.len(), 2);
        assert!(pts[0].position.x.abs() < 1e-12 && (pts[0].position.y - 4.0).abs() < 1e-12);
        assert_eq!(pts[1].position, Point2::new(2.0, 0.0));
    }

    #[test]
    fn direction_rule() {
        assert_eq!(predict_direction(&window_at(&[&[-5.0], &[-2.0], &[0.0]]), None).unwrap(), 0);
        assert_eq!(predict_direction(&window_at(&[&[4.0], &[1.0], &[1.0]]), None).unwrap(), 1);
        assert_eq!(predict_direction(&window_at(&[&[2.0], &[5.0], &[2.0]]), None).unwrap(), 1);
        assert_eq!(
            predict_direction(&window_at(&[&[], &[-3.0, -1.0], &[], &[0.5], &[]]), None).unwrap(),
            0
        );
        assert!(predict_direction(&window_at(&[&[], &[]]), None).is_err());
    }

    #[test]
    fn pinned_direction_instances() {
        let w = window_at(&[&[-5.0], &[3.0], &[-9.0]]);
        assert_eq!(predict_direction(&w, Some([1, 2])).unwrap(), 0);
        assert_eq!(predict_direction(&w, None).unwrap(), 1);
        assert!(predict_direction(&window_at(&[&[1.0], &[]]), Some([1, 2])).is_err());
    }

    #[test]
    fn reversed_windows_flip_direction() {
        let rows: &[&[f64]] = &[&[-6.0, -5.5], &[-4.0], &[-1.0, -0.5, 0.0]];
        let fwd = predict_direction(&window_at(rows), None).unwrap();
        let rev: Vec<&[f64]> = rows.iter().rev().copied().collect();
        let back = predict_direction(&window_at(&rev), None).unwrap();
        assert_eq!(fwd + back, 1);
    }

    #[test]
    fn missing_fit_is_an_error() {
        let params = BaselineParams::default();
        let w = window_at(&[&[1.0]]);
        assert!(params.predict(Problem::Occurrence, 1, &w).is_err());
        assert!(params.predict(Problem::Severity, 1, &w).is_err());
    }

    #[test]
    fn time_falls_back_to_horizon_midpoint() {
        let params = BaselineParams::default();
        let w = window_at(&[&[1.0], &[2.0]]);
        assert_eq!(params.predict(Problem::Time, 10, &w).unwrap(), 5.5);
    }

    #[test]
    fn problem_codes_round_trip() {
        for p in Problem::ALL {
            assert_eq!(Problem::try_from(u8::from(p)).unwrap(), p);
        }
        assert!(Problem::try_from(0).is_err());
        assert!(Problem::try_from(5).is_err());
    }
}
