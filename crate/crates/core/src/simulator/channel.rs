//! Flat two-path beam-power model.
//!
//! The receiver sweeps a codebook of `num_beams` steering directions spread
//! evenly over `beam_fov` (bearings from the link, positive toward +x). Each
//! beam collects the line-of-sight power plus one specular-like reflection
//! off every nearby object, weighted by a uniform linear array pattern. Path
//! powers are normalized so that the beam closest to the transmitter sees
//! exactly 1.0 on an unobstructed link.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{PowerVector, ScenarioConfig, SceneState};
use crate::geometry::Point2;

/// Steering bearing of every beam in the codebook.
pub fn beam_angles(config: &ScenarioConfig) -> Vec<f64> {
    let [lo, hi] = config.beam_fov;
    let m = config.num_beams;
    if m == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..m)
        .map(|i| lo + i as f64 * (hi - lo) / (m - 1) as f64)
        .collect()
}

/// Normalized ULA power pattern of a beam steered to `steer` for a plane
/// wave arriving from `arrival`. Equals 1 when the two coincide.
fn array_gain(elements: usize, steer: f64, arrival: f64) -> f64 {
    let psi = PI * (arrival.sin() - steer.sin());
    let half = psi / 2.0;
    let denom = elements as f64 * half.sin();
    if denom.abs() < 1e-12 {
        return 1.0;
    }
    let af = (elements as f64 * half).sin() / denom;
    af * af
}

/// Index of the beam whose bearing is nearest `bearing` (lowest index on ties).
pub(crate) fn nearest_beam(beams: &[f64], bearing: f64) -> usize {
    let mut best = 0;
    for (i, b) in beams.iter().enumerate() {
        if (b - bearing).abs() < (beams[best] - bearing).abs() {
            best = i;
        }
    }
    best
}

pub fn render_power_vector<R: Rng + ?Sized>(
    scene: &SceneState<'_>,
    config: &ScenarioConfig,
    rng: &mut R,
) -> PowerVector {
    let beams = beam_angles(config);
    let n_el = config.array_elements;
    let link = config.link();
    let d_link = config.tx_distance_m;
    let tx = link.b;

    let tx_bearing = 0.0;
    let los_beam = nearest_beam(&beams, tx_bearing);
    let norm = array_gain(n_el, beams[los_beam], tx_bearing);

    let blocked = scene
        .objects
        .iter()
        .any(|o| o.footprint.intersects_segment(&link));
    let los_power = if blocked {
        10f64.powf(-config.blockage_attenuation_db / 10.0)
    } else {
        1.0
    };

    // (bearing, power) of every reflected path.
    let mut reflections = Vec::new();
    for obj in &scene.objects {
        let r = obj.footprint;
        if r.intersects_segment(&link) {
            continue;
        }
        let cy = (r.min_y + r.max_y) / 2.0;
        let face_x = if r.max_x < 0.0 { r.max_x } else { r.min_x };
        if face_x.abs() > config.reflection_range_m {
            continue;
        }
        let p = Point2::new(face_x, cy);
        let path = p.norm() + p.distance(tx);
        let power = config.reflection_gain * (d_link / path).powi(2);
        reflections.push((p.x.atan2(p.y), power));
    }

    let noise = Normal::new(0.0, config.noise_std).ok();
    let powers = beams
        .iter()
        .map(|&steer| {
            let mut p = los_power * array_gain(n_el, steer, tx_bearing) / norm;
            for &(bearing, power) in &reflections {
                p += power * array_gain(n_el, steer, bearing) / norm;
            }
            if config.noise_std > 0.0 {
                if let Some(n) = noise {
                    p += n.sample(rng);
                }
            }
            p.max(0.0)
        })
        .collect();
    PowerVector { powers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::simulator::ObjectPose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene_with(config: &ScenarioConfig, rects: &[Rect]) -> SceneState<'static> {
        let _ = config;
        SceneState {
            instance: 0,
            statics: &[],
            objects: rects
                .iter()
                .enumerate()
                .map(|(id, &footprint)| ObjectPose { id, footprint })
                .collect(),
        }
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0
    }

    #[test]
    fn unblocked_link_peaks_on_nearest_beam() {
        let config = ScenarioConfig::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pv = render_power_vector(&scene_with(&config, &[]), &config, &mut rng);
        let beams = beam_angles(&config);
        let los = nearest_beam(&beams, 0.0);
        assert_eq!(pv.powers.len(), 64);
        assert_eq!(argmax(&pv.powers), los);
        assert!((pv.powers[los] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blocked_link_is_attenuated_by_configured_db() {
        let config = ScenarioConfig::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blocker = Rect::centered(0.0, 3.5, 4.6, 1.8);
        let pv = render_power_vector(&scene_with(&config, &[blocker]), &config, &mut rng);
        let los = nearest_beam(&beam_angles(&config), 0.0);
        assert!((pv.powers[los] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn approaching_object_raises_off_link_beams() {
        let config = ScenarioConfig::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clear = render_power_vector(&scene_with(&config, &[]), &config, &mut rng);
        // Front face 1 m short of the link: one instance before blockage at 10 m/s.
        let near = Rect::centered(-1.0 - 2.3, 3.5, 4.6, 1.8);
        let pv = render_power_vector(&scene_with(&config, &[near]), &config, &mut rng);
        let los = nearest_beam(&beam_angles(&config), 0.0);
        let raised = pv
            .powers
            .iter()
            .zip(&clear.powers)
            .enumerate()
            .any(|(i, (p, base))| i != los && p > base);
        assert!(raised);
    }

    #[test]
    fn noise_never_makes_power_negative() {
        let config = ScenarioConfig {
            noise_std: 0.5,
            ..ScenarioConfig::empty()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let pv = render_power_vector(&scene_with(&config, &[]), &config, &mut rng);
            assert!(pv.powers.iter().all(|&p| p >= 0.0));
        }
    }
}
