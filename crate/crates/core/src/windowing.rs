//! Observation windows and their labels.
//!
//! A window covers `obs_len` consecutive instances ending at the current
//! instance `t`. Its labels describe the `horizon` instances that follow:
//! whether the link gets blocked, after how many instances, how severe the
//! blocker is, and which way it is travelling.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::{QuantizedScan, ScrConfig};
use crate::simulator::{MovingObject, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub obs_len: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Edges of the severity intervals in milliseconds. Level `i` (1-based)
    /// covers `[bounds[i-1], bounds[i])`.
    pub severity_bounds_ms: Vec<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            obs_len: 16,
            horizon: 1,
            stride: 1,
            severity_bounds_ms: vec![0.0, 300.0, 600.0, 3000.0],
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obs_len < 1 {
            return Err(Error::config("window.obs_len", "must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(Error::config("window.horizon", "must be >= 1"));
        }
        if self.stride < 1 {
            return Err(Error::config("window.stride", "must be >= 1"));
        }
        SeverityPartition::new(self.severity_bounds_ms.clone())
            .map_err(|e| Error::config("window.severity_bounds_ms", e.to_string()))?;
        Ok(())
    }

    pub fn partition(&self) -> Result<SeverityPartition> {
        SeverityPartition::new(self.severity_bounds_ms.clone())
    }
}

/// Consecutive half-open duration intervals, one per severity level.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityPartition {
    bounds_ms: Vec<f64>,
}

impl SeverityPartition {
    pub fn new(bounds_ms: Vec<f64>) -> Result<Self> {
        if bounds_ms.len() < 2 {
            return Err(Error::invalid("severity partition needs at least two bounds"));
        }
        if bounds_ms[0] != 0.0 {
            return Err(Error::invalid("severity partition must start at 0 ms"));
        }
        if !bounds_ms.windows(2).all(|w| w[0] < w[1]) || !bounds_ms.iter().all(|b| b.is_finite()) {
            return Err(Error::invalid("severity bounds must be finite and strictly increasing"));
        }
        Ok(Self { bounds_ms })
    }

    pub fn levels(&self) -> usize {
        self.bounds_ms.len() - 1
    }

    pub fn upper_ms(&self) -> f64 {
        *self.bounds_ms.last().expect("non-empty")
    }

    /// 1-based level of the interval containing `duration_ms`.
    pub fn level_of(&self, duration_ms: f64) -> Result<u8> {
        self.bounds_ms
            .windows(2)
            .position(|w| duration_ms >= w[0] && duration_ms < w[1])
            .map(|i| (i + 1) as u8)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "duration {duration_ms} ms lies outside every severity interval"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub occurrence: u8,
    pub instance: Option<usize>,
    pub severity: Option<u8>,
    pub direction: Option<u8>,
}

impl Labels {
    pub fn negative() -> Self {
        Self {
            occurrence: 0,
            instance: None,
            severity: None,
            direction: None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        match self.occurrence {
            0 => self.instance.is_none() && self.severity.is_none() && self.direction.is_none(),
            1 => self.instance.is_some() && self.severity.is_some() && self.direction.is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSource {
    pub trajectory: String,
    pub start: usize,
}

/// One training/evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub id: usize,
    pub source: WindowSource,
    pub labels: Labels,
    /// `obs_len` rows of `(angle, distance)` slots.
    pub lidar: Vec<Vec<[f64; 2]>>,
    /// `obs_len` rows of per-beam power.
    pub power: Vec<Vec<f64>>,
}

impl ObservationWindow {
    pub fn obs_len(&self) -> usize {
        self.lidar.len()
    }
}

fn check_horizon(x: &[u8], t: usize, horizon: usize) -> Result<()> {
    if horizon == 0 || t + horizon >= x.len() {
        return Err(Error::invalid(format!(
            "horizon {horizon} from instance {t} exceeds trace of length {}",
            x.len()
        )));
    }
    Ok(())
}

/// 1 iff the link is blocked at some instance in `t+1 ..= t+horizon`.
pub fn make_occurrence_label(x: &[u8], t: usize, horizon: usize) -> Result<u8> {
    check_horizon(x, t, horizon)?;
    Ok(u8::from(x[t + 1..=t + horizon].contains(&1)))
}

/// Offset (1-based) of the first blocked instance after `t`.
pub fn make_instance_label(x: &[u8], t: usize, horizon: usize) -> Result<usize> {
    check_horizon(x, t, horizon)?;
    x[t + 1..=t + horizon]
        .iter()
        .position(|&v| v == 1)
        .map(|i| i + 1)
        .ok_or_else(|| Error::invalid(format!("no blockage within {horizon} instances of {t}")))
}

pub fn make_severity_label(object: &MovingObject, partition: &SeverityPartition) -> Result<u8> {
    partition.level_of(object.class.mean_block_duration_ms)
}

/// 0 for travel toward +x, 1 toward -x.
pub fn make_direction_label(object: &MovingObject) -> Result<u8> {
    let vx = object.velocity_x();
    if vx > 0.0 {
        Ok(0)
    } else if vx < 0.0 {
        Ok(1)
    } else {
        Err(Error::invalid(format!("object {} is not moving", object.id)))
    }
}

/// Dense `width x 2` row of a quantized scan: slot `i` holds the centre angle
/// of level `i` and the retained distance, or 0 when the level is empty.
pub fn densify(scan: &QuantizedScan, cfg: &ScrConfig, width: usize) -> Vec<[f64; 2]> {
    debug_assert!(width >= cfg.angle_levels);
    let mut row: Vec<[f64; 2]> = (0..width)
        .map(|i| {
            if i < cfg.angle_levels {
                [cfg.level_center(i), 0.0]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    for e in &scan.entries {
        row[e.level][1] = e.distance_m;
    }
    row
}

/// Inverse of [`densify`] on the occupied slots: `(level, distance)` pairs.
pub fn sparsify(row: &[[f64; 2]]) -> Vec<(usize, f64)> {
    row.iter()
        .enumerate()
        .filter(|(_, s)| s[1] != 0.0)
        .map(|(i, s)| (i, s[1]))
        .collect()
}

/// Which LiDAR representation to place in the windows.
#[derive(Debug, Clone, Copy)]
pub enum LidarInput<'a> {
    /// Raw scans, `P` slots per row in acquisition order.
    Raw,
    /// SCR output densified to `angle_levels` slots per row.
    Scr(&'a [QuantizedScan], &'a ScrConfig),
}

/// Start instance and labels of a window, before its data is gathered.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub start: usize,
    pub labels: Labels,
}

/// Labels every window position of a trajectory.
///
/// Windows start every `stride` instances, need their full horizon inside the
/// trajectory, and are skipped when the current instance is blocked.
pub fn plan_windows(traj: &Trajectory, cfg: &WindowConfig) -> Result<Vec<WindowPlan>> {
    cfg.validate()?;
    let partition = cfg.partition()?;
    let x = &traj.link_status;
    let mut plans = Vec::new();
    let mut start = 0;
    while start + cfg.obs_len + cfg.horizon <= x.len() {
        let t = start + cfg.obs_len - 1;
        if x[t] == 0 {
            plans.push(WindowPlan {
                start,
                labels: window_labels(traj, t, cfg.horizon, &partition)?,
            });
        }
        start += cfg.stride;
    }
    Ok(plans)
}

/// Gathers the LiDAR and power rows of planned windows. Ids are assigned in
/// plan order starting at 0.
pub fn materialize(
    traj: &Trajectory,
    lidar: LidarInput<'_>,
    obs_len: usize,
    plans: &[WindowPlan],
    trajectory_id: &str,
) -> Result<Vec<ObservationWindow>> {
    if let LidarInput::Scr(scans, _) = lidar {
        if scans.len() != traj.len() {
            return Err(Error::invalid(format!(
                "{} preprocessed scans for a trajectory of {} instances",
                scans.len(),
                traj.len()
            )));
        }
    }
    plans
        .iter()
        .enumerate()
        .map(|(id, plan)| {
            let rows = plan.start..plan.start + obs_len;
            if rows.end > traj.len() {
                return Err(Error::invalid(format!(
                    "window at {} runs past the trajectory end",
                    plan.start
                )));
            }
            let lidar_rows = match lidar {
                LidarInput::Raw => rows
                    .clone()
                    .map(|i| {
                        traj.scans[i]
                            .points
                            .iter()
                            .map(|p| [p.angle_rad, p.distance_m])
                            .collect()
                    })
                    .collect(),
                LidarInput::Scr(scans, scr) => rows
                    .clone()
                    .map(|i| densify(&scans[i], scr, scr.angle_levels))
                    .collect(),
            };
            Ok(ObservationWindow {
                id,
                source: WindowSource {
                    trajectory: trajectory_id.to_string(),
                    start: plan.start,
                },
                labels: plan.labels.clone(),
                lidar: lidar_rows,
                power: rows.map(|i| traj.powers[i].powers.clone()).collect(),
            })
        })
        .collect()
}

/// Plans and materializes every window of a trajectory.
pub fn slide_windows(
    traj: &Trajectory,
    lidar: LidarInput<'_>,
    cfg: &WindowConfig,
    trajectory_id: &str,
) -> Result<Vec<ObservationWindow>> {
    let plans = plan_windows(traj, cfg)?;
    materialize(traj, lidar, cfg.obs_len, &plans, trajectory_id)
}

fn window_labels(
    traj: &Trajectory,
    t: usize,
    horizon: usize,
    partition: &SeverityPartition,
) -> Result<Labels> {
    let x = &traj.link_status;
    if make_occurrence_label(x, t, horizon)? == 0 {
        return Ok(Labels::negative());
    }
    let n_p = make_instance_label(x, t, horizon)?;
    let blocker = traj.blocker_at(t + n_p).ok_or_else(|| {
        Error::Internal(format!("instance {} is blocked but has no blocker", t + n_p))
    })?;
    Ok(Labels {
        occurrence: 1,
        instance: Some(n_p),
        severity: Some(make_severity_label(blocker, partition)?),
        direction: Some(make_direction_label(blocker)?),
    })
}

/// Re-assigns ids `0..n` in the current order.
pub fn renumber(windows: &mut [ObservationWindow]) {
    for (i, w) in windows.iter_mut().enumerate() {
        w.id = i;
    }
}

/// Subsamples the majority occurrence class down to the minority count,
/// keeping the original order.
pub fn balance<T>(items: Vec<T>, seed: u64, is_positive: impl Fn(&T) -> bool) -> Vec<T> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|&i| is_positive(&items[i]));
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|i| majority[i])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    let mut keep_iter = keep.into_iter().peekable();
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, w)| {
            if keep_iter.peek() == Some(&i) {
                keep_iter.next();
                Some(w)
            } else {
                None
            }
        })
        .collect()
}

/// Summary written next to a window dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
    pub instance_counts: BTreeMap<usize, usize>,
    pub severity_counts: BTreeMap<u8, usize>,
    pub direction_counts: BTreeMap<u8, usize>,
    pub input: String,
    pub lidar_width: usize,
    pub num_beams: usize,
    pub window: WindowConfig,
}

impl DatasetManifest {
    pub fn summarize(windows: &[ObservationWindow], cfg: &WindowConfig, input: &str) -> Self {
        let mut m = Self {
            total: windows.len(),
            positives: 0,
            negatives: 0,
            instance_counts: BTreeMap::new(),
            severity_counts: BTreeMap::new(),
            direction_counts: BTreeMap::new(),
            input: input.to_string(),
            lidar_width: windows
                .first()
                .and_then(|w| w.lidar.first())
                .map_or(0, Vec::len),
            num_beams: windows
                .first()
                .and_then(|w| w.power.first())
                .map_or(0, Vec::len),
            window: cfg.clone(),
        };
        for w in windows {
            if w.labels.occurrence == 1 {
                m.positives += 1;
            } else {
                m.negatives += 1;
            }
            if let Some(n) = w.labels.instance {
                *m.instance_counts.entry(n).or_default() += 1;
            }
            if let Some(s) = w.labels.severity {
                *m.severity_counts.entry(s).or_default() += 1;
            }
            if let Some(d) = w.labels.direction {
                *m.direction_counts.entry(d).or_default() += 1;
            }
        }
        m
    }
}
