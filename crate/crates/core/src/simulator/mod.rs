//! Seeded street-scene simulator.
//!
//! A scene is a straight street along the x-axis. The receiver, co-located
//! with a 2-D LiDAR, sits at the origin; the transmitter sits at
//! `(0, tx_distance_m)`. Moving objects are axis-aligned rectangles driving
//! along one of two lanes at constant speed. Each instance the simulator
//! renders one LiDAR revolution, one receive-power vector over the beam
//! codebook, and the binary link status.
//!
//! LiDAR angles are measured counter-clockwise from +x, so the link lies at
//! angle π/2 and the street side of the sensor spans `[0, π]`.

mod catalog;
mod channel;
mod lidar;

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect, Segment2D};

pub use catalog::ObjectClass;
pub use channel::{beam_angles, render_power_vector};
pub use lidar::{render_lidar_scan, RenderedScan};

const STREAM_TRAFFIC: u64 = 0;
const STREAM_LIDAR: u64 = 1;
const STREAM_CHANNEL: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_instances: usize,
    /// Length of one instance; also the block-fading duration.
    pub instance_dt_s: f64,
    pub lidar_points_per_rev: usize,
    pub lidar_max_range_m: f64,
    pub range_noise_std_m: f64,
    pub angle_noise_std_rad: f64,
    pub num_beams: usize,
    pub beam_fov: [f64; 2],
    pub array_elements: usize,
    /// Standard deviation of the additive per-beam power noise.
    pub noise_std: f64,
    pub blockage_attenuation_db: f64,
    /// Power of a reflection off an object's link-facing face, relative to
    /// the unobstructed line-of-sight power at equal path length.
    pub reflection_gain: f64,
    /// Objects farther than this from the link produce no reflection.
    pub reflection_range_m: f64,
    pub tx_distance_m: f64,
    /// Lane centre (y) for direction 0 and direction 1 traffic.
    pub lane_offsets_m: [f64; 2],
    pub static_objects: Vec<Segment2D>,
    /// Expected phantom returns per scan.
    pub phantom_rate: f64,
    /// Angular sector in which phantom returns appear.
    pub phantom_fov: [f64; 2],
    /// Poisson arrival rate of new objects, per second.
    pub arrival_rate: f64,
    /// Minimum number of instances between two objects' blockage intervals.
    pub min_gap_instances: usize,
    pub object_catalog: Vec<ObjectClass>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_instances: 1000,
            instance_dt_s: 0.1,
            lidar_points_per_rev: 460,
            lidar_max_range_m: 16.0,
            range_noise_std_m: 0.02,
            angle_noise_std_rad: 0.002,
            num_beams: 64,
            beam_fov: [-FRAC_PI_4, FRAC_PI_4],
            array_elements: 64,
            noise_std: 1e-3,
            blockage_attenuation_db: 20.0,
            reflection_gain: 0.3,
            reflection_range_m: 12.0,
            tx_distance_m: 10.0,
            lane_offsets_m: [3.5, 6.5],
            static_objects: default_street(),
            phantom_rate: 2.0,
            phantom_fov: [-FRAC_PI_6, PI],
            arrival_rate: 0.05,
            min_gap_instances: 2,
            object_catalog: ObjectClass::default_catalog(),
        }
    }
}

/// Building facade, transmitter housing, poles and sidewalk furniture.
pub fn default_street() -> Vec<Segment2D> {
    let seg = |ax, ay, bx, by| Segment2D::new(Point2::new(ax, ay), Point2::new(bx, by));
    vec![
        seg(-25.0, 13.0, 25.0, 13.0),
        seg(-0.3, 10.3, 0.3, 10.3),
        seg(-8.15, 11.0, -7.85, 11.0),
        seg(8.85, 11.0, 9.15, 11.0),
        seg(-25.0, -1.5, 25.0, -1.5),
        seg(5.0, 0.8, 6.5, 0.8),
        seg(-4.0, 1.2, -4.0, 0.6),
    ]
}

impl ScenarioConfig {
    /// An empty street: no clutter, no traffic, no sensor noise.
    pub fn empty() -> Self {
        Self {
            static_objects: Vec::new(),
            phantom_rate: 0.0,
            arrival_rate: 0.0,
            range_noise_std_m: 0.0,
            angle_noise_std_rad: 0.0,
            noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be >= 0, got {v}")))
            }
        }
        if self.duration_instances < 1 {
            return Err(Error::config("duration_instances", "must be >= 1"));
        }
        if self.lidar_points_per_rev < 1 {
            return Err(Error::config("lidar_points_per_rev", "must be >= 1"));
        }
        if self.num_beams < 1 {
            return Err(Error::config("num_beams", "must be >= 1"));
        }
        if self.array_elements < 1 {
            return Err(Error::config("array_elements", "must be >= 1"));
        }
        positive("instance_dt_s", self.instance_dt_s)?;
        positive("lidar_max_range_m", self.lidar_max_range_m)?;
        positive("tx_distance_m", self.tx_distance_m)?;
        non_negative("range_noise_std_m", self.range_noise_std_m)?;
        non_negative("angle_noise_std_rad", self.angle_noise_std_rad)?;
        non_negative("noise_std", self.noise_std)?;
        non_negative("blockage_attenuation_db", self.blockage_attenuation_db)?;
        non_negative("reflection_gain", self.reflection_gain)?;
        non_negative("reflection_range_m", self.reflection_range_m)?;
        non_negative("phantom_rate", self.phantom_rate)?;
        non_negative("arrival_rate", self.arrival_rate)?;
        if !(self.beam_fov[0] <= self.beam_fov[1]) {
            return Err(Error::config("beam_fov", "lower bound exceeds upper bound"));
        }
        if !(self.phantom_fov[0] < self.phantom_fov[1]) {
            return Err(Error::config("phantom_fov", "lower bound must be below upper bound"));
        }
        for (i, lane) in self.lane_offsets_m.iter().enumerate() {
            if !(*lane > 0.0 && *lane < self.tx_distance_m) {
                return Err(Error::config(
                    format!("lane_offsets_m[{i}]"),
                    "lane must lie strictly between receiver and transmitter",
                ));
            }
        }
        if self.arrival_rate > 0.0 && self.object_catalog.is_empty() {
            return Err(Error::config(
                "object_catalog",
                "must not be empty when arrival_rate > 0",
            ));
        }
        for (i, class) in self.object_catalog.iter().enumerate() {
            class.validate(&format!("object_catalog[{i}]"), self.instance_dt_s)?;
        }
        Ok(())
    }

    /// The line-of-sight segment from receiver to transmitter.
    pub fn link(&self) -> Segment2D {
        Segment2D::new(Point2::new(0.0, 0.0), Point2::new(0.0, self.tx_distance_m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Direction {
    LeftToRight = 0,
    RightToLeft = 1,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::LeftToRight => 1.0,
            Direction::RightToLeft => -1.0,
        }
    }
}

impl From<Direction> for u8 {
    fn from(d: Direction) -> u8 {
        d as u8
    }
}

impl TryFrom<u8> for Direction {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Direction::LeftToRight),
            1 => Ok(Direction::RightToLeft),
            other => Err(format!("direction must be 0 or 1, got {other}")),
        }
    }
}

/// Ground truth for one moving object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObject {
    pub id: usize,
    pub class: ObjectClass,
    pub direction: Direction,
    pub speed_mps: f64,
    pub lane_offset_m: f64,
    pub spawn_instance: usize,
    /// Last instance at which the object is part of the scene.
    pub despawn_instance: usize,
    /// Centre x-coordinate at `spawn_instance`.
    pub start_x_m: f64,
}

impl MovingObject {
    pub fn velocity_x(&self) -> f64 {
        self.direction.sign() * self.speed_mps
    }

    pub fn is_present(&self, instance: usize) -> bool {
        instance >= self.spawn_instance && instance <= self.despawn_instance
    }

    /// Centre x-coordinate at a (possibly fractional) instance.
    pub fn center_x_at(&self, instance: f64, dt_s: f64) -> f64 {
        self.start_x_m + self.velocity_x() * (instance - self.spawn_instance as f64) * dt_s
    }

    pub fn footprint_at(&self, instance: usize, dt_s: f64) -> Rect {
        Rect::centered(
            self.center_x_at(instance as f64, dt_s),
            self.lane_offset_m,
            self.class.length_m,
            self.class.width_m,
        )
    }

    /// Continuous interval, in instances, during which the footprint's
    /// x-extent contains the link.
    pub fn blocking_interval(&self, dt_s: f64) -> (f64, f64) {
        let half = self.class.length_m / 2.0;
        let to_go = self.start_x_m.abs();
        let rate = self.speed_mps * dt_s;
        let spawn = self.spawn_instance as f64;
        (spawn + (to_go - half) / rate, spawn + (to_go + half) / rate)
    }

    /// Fractional instance at which the centre crosses x = 0.
    pub fn center_crossing_instance(&self, dt_s: f64) -> f64 {
        self.spawn_instance as f64 + self.start_x_m.abs() / (self.speed_mps * dt_s)
    }
}

/// Where a rendered LiDAR return came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    NoReturn,
    Static(usize),
    Object(usize),
    Phantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub angle_rad: f64,
    pub distance_m: f64,
}

impl LidarPoint {
    pub const fn new(angle_rad: f64, distance_m: f64) -> Self {
        Self {
            angle_rad,
            distance_m,
        }
    }

    pub fn is_return(&self) -> bool {
        self.distance_m != 0.0
    }

    /// Cartesian position in the sensor frame.
    pub fn to_cartesian(&self) -> Point2 {
        Point2::new(
            self.distance_m * self.angle_rad.cos(),
            self.distance_m * self.angle_rad.sin(),
        )
    }
}

/// One LiDAR revolution. A distance of zero means "no return".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub instance: usize,
    pub points: Vec<LidarPoint>,
}

/// Per-beam receive power for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector {
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPose {
    pub id: usize,
    pub footprint: Rect,
}

/// Geometry of the scene at one instance.
#[derive(Debug, Clone)]
pub struct SceneState<'a> {
    pub instance: usize,
    pub statics: &'a [Segment2D],
    pub objects: Vec<ObjectPose>,
}

impl<'a> SceneState<'a> {
    pub fn new(config: &'a ScenarioConfig, objects: &[MovingObject], instance: usize) -> Self {
        let objects = objects
            .iter()
            .filter(|o| o.is_present(instance))
            .map(|o| ObjectPose {
                id: o.id,
                footprint: o.footprint_at(instance, config.instance_dt_s),
            })
            .collect();
        Self {
            instance,
            statics: &config.static_objects,
            objects,
        }
    }
}

/// 1 iff any object footprint touches the transmitter-receiver segment.
pub fn link_status(scene: &SceneState<'_>, link: &Segment2D) -> u8 {
    u8::from(
        scene
            .objects
            .iter()
            .any(|o| o.footprint.intersects_segment(link)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: ScenarioConfig,
    pub scans: Vec<LidarScan>,
    pub powers: Vec<PowerVector>,
    pub link_status: Vec<u8>,
    pub objects: Vec<MovingObject>,
    /// Provenance of every scan point. Not serialized.
    #[serde(skip)]
    pub sources: Vec<Vec<PointSource>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.link_status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.link_status.is_empty()
    }

    pub fn scene_at(&self, instance: usize) -> SceneState<'_> {
        SceneState::new(&self.config, &self.objects, instance)
    }

    /// The object whose footprint blocks the link at `instance`, if any.
    pub fn blocker_at(&self, instance: usize) -> Option<&MovingObject> {
        let link = self.config.link();
        self.objects.iter().find(|o| {
            o.is_present(instance)
                && o
                    .footprint_at(instance, self.config.instance_dt_s)
                    .intersects_segment(&link)
        })
    }

    /// Instances at which no moving object is part of the scene.
    pub fn object_free_instances(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&t| !self.objects.iter().any(|o| o.is_present(t)))
            .collect()
    }
}

/// Runs the scenario and returns every per-instance observation.
pub fn simulate(config: &ScenarioConfig) -> Result<Trajectory> {
    config.validate()?;
    let objects = spawn_objects(config)?;
    let link = config.link();

    let mut lidar_rng = stream_rng(config.seed, STREAM_LIDAR);
    let mut channel_rng = stream_rng(config.seed, STREAM_CHANNEL);

    let n = config.duration_instances;
    let mut scans = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut powers = Vec::with_capacity(n);
    let mut link_trace = Vec::with_capacity(n);
    for t in 0..n {
        let scene = SceneState::new(config, &objects, t);
        let rendered = render_lidar_scan(&scene, config, &mut lidar_rng);
        scans.push(rendered.scan);
        sources.push(rendered.sources);
        powers.push(render_power_vector(&scene, config, &mut channel_rng));
        link_trace.push(link_status(&scene, &link));
    }

    Ok(Trajectory {
        config: config.clone(),
        scans,
        powers,
        link_status: link_trace,
        objects,
        sources,
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws Poisson arrivals and admits those whose blockage interval keeps the
/// configured gap from every admitted object.
fn spawn_objects(config: &ScenarioConfig) -> Result<Vec<MovingObject>> {
    let mut rng = stream_rng(config.seed, STREAM_TRAFFIC);
    let dt = config.instance_dt_s;
    let lambda = config.arrival_rate * dt;
    let arrivals = if lambda > 0.0 {
        Some(Poisson::new(lambda).map_err(|e| Error::config("arrival_rate", e.to_string()))?)
    } else {
        None
    };
    let range = config.lidar_max_range_m;
    let gap = config.min_gap_instances as f64;

    let mut objects: Vec<MovingObject> = Vec::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let Some(arrivals) = arrivals else {
        return Ok(objects);
    };
    for t in 0..config.duration_instances {
        let count = arrivals.sample(&mut rng) as usize;
        for _ in 0..count {
            let class = config.object_catalog[rng.random_range(0..config.object_catalog.len())].clone();
            let direction = if rng.random_bool(0.5) {
                Direction::RightToLeft
            } else {
                Direction::LeftToRight
            };
            let [lo, hi] = class.speed_range_mps;
            let speed = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let phase: f64 = rng.random();
            let half = class.length_m / 2.0;
            // Start with the front just beyond sensor range; the random phase
            // decorrelates the crossing from the sampling grid.
            let to_go = range + half + phase * speed * dt;
            let start_x = -direction.sign() * to_go;
            let travel = 2.0 * (range + half) + phase * speed * dt;
            let lifetime = (travel / (speed * dt)).floor() as usize;
            let candidate = MovingObject {
                id: objects.len(),
                lane_offset_m: config.lane_offsets_m[direction as usize],
                class,
                direction,
                speed_mps: speed,
                spawn_instance: t,
                despawn_instance: t + lifetime,
                start_x_m: start_x,
            };
            let (a, b) = candidate.blocking_interval(dt);
            let clear = intervals
                .iter()
                .all(|&(a0, b0)| a > b0 + gap || b < a0 - gap);
            if clear {
                intervals.push((a, b));
                objects.push(candidate);
            }
        }
    }
    Ok(objects)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object(class: ObjectClass, direction: Direction, speed: f64) -> (ScenarioConfig, MovingObject) {
        let config = ScenarioConfig {
            duration_instances: 60,
            ..ScenarioConfig::empty()
        };
        let half = class.length_m / 2.0;
        let obj = MovingObject {
            id: 0,
            lane_offset_m: config.lane_offsets_m[direction as usize],
            class,
            direction,
            speed_mps: speed,
            spawn_instance: 0,
            despawn_instance: 59,
            start_x_m: -direction.sign() * (config.lidar_max_range_m + half + 0.37),
        };
        (config, obj)
    }

    #[test]
    fn empty_scene_has_no_blockage_and_no_returns() {
        let config = ScenarioConfig {
            duration_instances: 20,
            ..ScenarioConfig::empty()
        };
        let traj = simulate(&config).unwrap();
        assert!(traj.link_status.iter().all(|&x| x == 0));
        for scan in &traj.scans {
            assert_eq!(scan.points.len(), config.lidar_points_per_rev);
            assert!(scan.points.iter().all(|p| p.distance_m == 0.0));
        }
    }

    #[test]
    fn invalid_config_names_the_field() {
        let config = ScenarioConfig {
            lidar_max_range_m: 0.0,
            ..ScenarioConfig::default()
        };
        match simulate(&config) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "lidar_max_range_m"),
            other => panic!("unexpected {other:?}"),
        }
        let config = ScenarioConfig {
            duration_instances: 0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(simulate(&config), Err(Error::Config { field, .. }) if field == "duration_instances"));
    }

    #[test]
    fn sedan_run_length_matches_chord_crossing() {
        let (config, obj) = one_object(ObjectClass::sedan(), Direction::LeftToRight, 10.0);
        let scene_objects = vec![obj.clone()];
        let link = config.link();
        let blocked: Vec<usize> = (0..config.duration_instances)
            .filter(|&t| link_status(&SceneState::new(&config, &scene_objects, t), &link) == 1)
            .collect();
        // Analytic interval: front reaches x = 0 until rear leaves it.
        let v = 10.0 * config.instance_dt_s;
        let to_go = obj.start_x_m.abs();
        let enter = (to_go - 2.3) / v;
        let exit = (to_go + 2.3) / v;
        let expected: Vec<usize> = (0..config.duration_instances)
            .filter(|&t| (t as f64) >= enter && (t as f64) <= exit)
            .collect();
        assert_eq!(blocked, expected);
        // Crossing time 0.46 s covers four or five sampling instants.
        assert!((blocked.len() as f64 - 4.6).abs() < 1.0);
        assert!(blocked.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn direction_ground_truth_is_monotone() {
        for direction in [Direction::LeftToRight, Direction::RightToLeft] {
            let (config, obj) = one_object(ObjectClass::suv(), direction, 12.0);
            let xs: Vec<f64> = (0..30)
                .map(|t| obj.center_x_at(t as f64, config.instance_dt_s))
                .collect();
            let increasing = xs.windows(2).all(|w| w[1] > w[0]);
            let decreasing = xs.windows(2).all(|w| w[1] < w[0]);
            match direction {
                Direction::LeftToRight => assert!(increasing),
                Direction::RightToLeft => assert!(decreasing),
            }
        }
    }

    #[test]
    fn object_far_and_centred() {
        let (config, mut obj) = one_object(ObjectClass::sedan(), Direction::LeftToRight, 10.0);
        let link = config.link();
        obj.start_x_m = -12.0;
        let far = SceneState::new(&config, std::slice::from_ref(&obj), 0);
        assert_eq!(link_status(&far, &link), 0);
        obj.start_x_m = 0.0;
        let centred = SceneState::new(&config, std::slice::from_ref(&obj), 0);
        assert_eq!(link_status(&centred, &link), 1);
    }

    #[test]
    fn admitted_objects_keep_their_gap() {
        let config = ScenarioConfig {
            duration_instances: 3000,
            arrival_rate: 1.0,
            ..ScenarioConfig::default()
        };
        let objects = spawn_objects(&config).unwrap();
        assert!(objects.len() > 10);
        let mut iv: Vec<(f64, f64)> = objects.iter().map(|o| o.blocking_interval(0.1)).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in iv.windows(2) {
            assert!(w[1].0 > w[0].1 + config.min_gap_instances as f64);
        }
    }
}
