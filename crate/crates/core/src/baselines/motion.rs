//! Target selection and constant-velocity time-to-blockage estimation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan, DbscanParams, NOISE};
use super::{window_points, TimedPoint};
use crate::error::{Error, Result};
use crate::windowing::ObservationWindow;

/// Which per-instance position of the target is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackPosition {
    /// Arithmetic mean of the target's points.
    Mean,
    /// The target's point furthest along its direction of travel.
    #[default]
    LeadingEdge,
}

/// A cluster followed through the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrack {
    pub label: i32,
    /// Populated instances (1-based within the window), ascending.
    pub instances: Vec<usize>,
    pub mean_x: Vec<f64>,
    pub min_x: Vec<f64>,
    pub max_x: Vec<f64>,
}

impl ClusterTrack {
    /// +1 when the mean moved toward +x, -1 toward -x, 0 otherwise.
    pub fn direction(&self) -> f64 {
        let (first, last) = (self.mean_x[0], self.mean_x[self.mean_x.len() - 1]);
        if last > first {
            1.0
        } else if last < first {
            -1.0
        } else {
            0.0
        }
    }

    pub fn latest_x(&self) -> f64 {
        self.mean_x[self.mean_x.len() - 1]
    }

    /// Left of the link moving right, or right of it moving left.
    pub fn is_approaching(&self) -> bool {
        let (x, dir) = (self.latest_x(), self.direction());
        (x < 0.0 && dir > 0.0) || (x > 0.0 && dir < 0.0)
    }

    pub fn positions(&self, position: TrackPosition) -> Vec<f64> {
        match position {
            TrackPosition::Mean => self.mean_x.clone(),
            TrackPosition::LeadingEdge => {
                if self.direction() >= 0.0 {
                    self.max_x.clone()
                } else {
                    self.min_x.clone()
                }
            }
        }
    }
}

/// Groups clustered points into per-cluster tracks ordered by label.
pub fn cluster_tracks(points: &[TimedPoint], labels: &[i32]) -> Vec<ClusterTrack> {
    // label -> instance -> (sum, n, min, max)
    let mut acc: BTreeMap<i32, BTreeMap<usize, (f64, usize, f64, f64)>> = BTreeMap::new();
    for (p, &l) in points.iter().zip(labels) {
        if l == NOISE {
            continue;
        }
        let e = acc
            .entry(l)
            .or_default()
            .entry(p.instance)
            .or_insert((0.0, 0, f64::INFINITY, f64::NEG_INFINITY));
        e.0 += p.position.x;
        e.1 += 1;
        e.2 = e.2.min(p.position.x);
        e.3 = e.3.max(p.position.x);
    }
    acc.into_iter()
        .map(|(label, per)| {
            let mut track = ClusterTrack {
                label,
                instances: Vec::new(),
                mean_x: Vec::new(),
                min_x: Vec::new(),
                max_x: Vec::new(),
            };
            for (t, (sum, n, lo, hi)) in per {
                track.instances.push(t);
                track.mean_x.push(sum / n as f64);
                track.min_x.push(lo);
                track.max_x.push(hi);
            }
            track
        })
        .collect()
}

/// The approaching track closest to the link, if any.
pub fn select_target(tracks: &[ClusterTrack]) -> Option<&ClusterTrack> {
    tracks
        .iter()
        .filter(|t| t.is_approaching())
        .min_by(|a, b| a.latest_x().abs().total_cmp(&b.latest_x().abs()))
}

/// Least-squares line `x = v t + b` through `(t, x)` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    /// Metres per instance.
    pub v: f64,
    pub b: f64,
}

pub fn ls_fit(samples: &[(f64, f64)]) -> Result<LineFit> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "least-squares fit needs 2 instances, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_x = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut stt, mut stx) = (0.0, 0.0);
    for &(t, x) in samples {
        stt += (t - mean_t) * (t - mean_t);
        stx += (t - mean_t) * (x - mean_x);
    }
    if stt == 0.0 {
        return Err(Error::invalid("least-squares fit with a single distinct instance"));
    }
    let v = stx / stt;
    Ok(LineFit {
        v,
        b: mean_x - v * mean_t,
    })
}

/// Instances after the window's last instance until the tracked position
/// reaches the link.
///
/// `x_last` is observed at instance `t_last` of a window of `obs_len`
/// instances; `v` is in metres per instance. The result is clamped at 0.
pub fn predict_blockage_time(v: f64, x_last: f64, t_last: usize, obs_len: usize) -> Result<f64> {
    if v.abs() < 1e-9 {
        return Err(Error::NoCrossing(format!("speed {v} m/instance is ~0")));
    }
    if x_last != 0.0 && x_last.signum() == v.signum() {
        return Err(Error::NoCrossing(format!(
            "object at x={x_last} is receding with v={v}"
        )));
    }
    let lag = obs_len.saturating_sub(t_last) as f64;
    Ok((x_last.abs() / v.abs() - lag).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEstimate {
    /// Metres per instance, signed along x.
    pub v_hat: f64,
    /// Tracked position extrapolated to instance 0 of the window.
    pub b_hat: f64,
    pub predicted_instance: f64,
}

/// Full pipeline for one window: cluster, pick the target, fit, extrapolate.
pub fn estimate_blockage_time(
    window: &ObservationWindow,
    params: &DbscanParams,
    position: TrackPosition,
) -> Result<MotionEstimate> {
    let points = window_points(window);
    let positions: Vec<_> = points.iter().map(|p| p.position).collect();
    let labels = dbscan(&positions, params)?;
    let tracks = cluster_tracks(&points, &labels);
    let target = select_target(&tracks)
        .ok_or_else(|| Error::NoCrossing(format!("window {} has no approaching target", window.id)))?;
    estimate_track(target, position, window.obs_len())
}

pub fn estimate_track(
    track: &ClusterTrack,
    position: TrackPosition,
    obs_len: usize,
) -> Result<MotionEstimate> {
    let xs = track.positions(position);
    let samples: Vec<(f64, f64)> = track
        .instances
        .iter()
        .zip(&xs)
        .map(|(&t, &x)| (t as f64, x))
        .collect();
    let fit = ls_fit(&samples)?;
    let t_last = *track.instances.last().expect("tracks are non-empty");
    let x_last = *xs.last().expect("tracks are non-empty");
    Ok(MotionEstimate {
        v_hat: fit.v,
        b_hat: fit.b,
        predicted_instance: predict_blockage_time(fit.v, x_last, t_last, obs_len)?,
    })
}
