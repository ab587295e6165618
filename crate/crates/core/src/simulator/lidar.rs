use std::f64::consts::TAU;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{LidarPoint, LidarScan, PointSource, ScenarioConfig, SceneState};
use crate::geometry::{ray_segment_hit, wrap_angle, Point2};

/// A scan together with the provenance of each of its points.
#[derive(Debug, Clone)]
pub struct RenderedScan {
    pub scan: LidarScan,
    pub sources: Vec<PointSource>,
}

/// Ray-casts one revolution of `lidar_points_per_rev` evenly spaced rays.
///
/// The revolution starts at a random ray, so the returned points are not in
/// angle order. Returns carry Gaussian range jitter; a Poisson number of rays
/// inside `phantom_fov` are replaced by phantom returns at a uniform range.
pub fn render_lidar_scan<R: Rng + ?Sized>(
    scene: &SceneState<'_>,
    config: &ScenarioConfig,
    rng: &mut R,
) -> RenderedScan {
    let n = config.lidar_points_per_rev;
    let max_range = config.lidar_max_range_m;
    let origin = Point2::new(0.0, 0.0);
    let step = TAU / n as f64;
    let start = rng.random_range(0..n);
    let angle_noise = Normal::new(0.0, config.angle_noise_std_rad).ok();
    let range_noise = Normal::new(0.0, config.range_noise_std_m).ok();

    let mut points = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    for k in 0..n {
        let ray = (start + k) % n;
        let mut angle = ray as f64 * step;
        if config.angle_noise_std_rad > 0.0 {
            if let Some(noise) = angle_noise {
                angle += noise.sample(rng);
            }
        }
        let angle = wrap_angle(angle);
        let dir = Point2::new(angle.cos(), angle.sin());

        let mut best = f64::INFINITY;
        let mut source = PointSource::NoReturn;
        for (i, seg) in scene.statics.iter().enumerate() {
            if let Some(t) = ray_segment_hit(origin, dir, seg) {
                if t < best {
                    best = t;
                    source = PointSource::Static(i);
                }
            }
        }
        for obj in &scene.objects {
            if let Some(t) = obj.footprint.ray_hit(origin, dir) {
                if t < best {
                    best = t;
                    source = PointSource::Object(obj.id);
                }
            }
        }

        let distance = if best <= max_range {
            let mut d = best;
            if config.range_noise_std_m > 0.0 {
                if let Some(noise) = range_noise {
                    d += noise.sample(rng);
                }
            }
            d.clamp(1e-3, max_range)
        } else {
            source = PointSource::NoReturn;
            0.0
        };
        points.push(LidarPoint::new(angle, distance));
        sources.push(source);
    }

    if config.phantom_rate > 0.0 {
        let [lo, hi] = config.phantom_fov;
        let eligible: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.angle_rad >= lo && p.angle_rad <= hi)
            .map(|(i, _)| i)
            .collect();
        let count = Poisson::new(config.phantom_rate)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0)
            .min(eligible.len());
        for pick in index::sample(rng, eligible.len(), count) {
            let i = eligible[pick];
            points[i].distance_m = rng.random_range(0.05..max_range);
            sources[i] = PointSource::Phantom;
        }
    }

    RenderedScan {
        scan: LidarScan {
            instance: scene.instance,
            points,
        },
        sources,
    }
}
