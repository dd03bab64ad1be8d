use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use super::{spherical_to_pose, Particle, SphericalPose};
use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::rng::{derive, Stream};
use crate::scene_data::PoseRange;

/// Floor on per-parameter CEM variance.
pub const CEM_MIN_VARIANCE: f64 = 1e-6;

/// Indices sorted by descending weight; ties keep the lower index first.
pub fn rank_by_weight(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    // keep +π rather than −π so values already in range pass unchanged
    if w == -PI && a > 0.0 {
        PI
    } else {
        w
    }
}

/// Mean resultant angle and mean squared wrapped deviation from it.
pub fn circular_mean_var(angles: &[f64]) -> (f64, f64) {
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let mean = s.atan2(c);
    let var = angles
        .iter()
        .map(|a| wrap_angle(a - mean).powi(2))
        .sum::<f64>()
        / angles.len() as f64;
    (mean, var)
}

fn linear_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn uniform_particles(poses: Vec<(CameraPose, Option<SphericalPose>)>) -> Vec<Particle> {
    let w = 1.0 / poses.len() as f64;
    poses
        .into_iter()
        .map(|(pose, spherical)| Particle {
            pose,
            spherical,
            weight: w,
            last_error: 0.0,
        })
        .collect()
}

/// Cross-entropy step: fit independent Gaussians over (θ, φ, r) of the
/// top-weighted particles and redraw `n_poses` particles from them.
pub fn resample_cem(
    particles: &[Particle],
    weights: &[f64],
    elite_frac: f64,
    n_poses: usize,
    range: &PoseRange,
    seed: u64,
    iteration: usize,
) -> Result<Vec<Particle>> {
    let PoseRange::Object { theta, phi, r } = range else {
        return Err(Error::Config("CEM resampling needs an object-centric range".into()));
    };
    let n_elite = ((elite_frac * particles.len() as f64).ceil() as usize).clamp(1, particles.len());
    let elites = rank_by_weight(weights)
        .into_iter()
        .take(n_elite)
        .map(|i| {
            particles[i].spherical.ok_or_else(|| {
                Error::Config("CEM resampling needs particles with spherical parameters".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let thetas: Vec<f64> = elites.iter().map(|s| s.theta).collect();
    let phis: Vec<f64> = elites.iter().map(|s| s.phi).collect();
    let radii: Vec<f64> = elites.iter().map(|s| s.r).collect();
    let (mt, vt) = circular_mean_var(&thetas);
    let (mp, vp) = linear_mean_var(&phis);
    let (mr, vr) = linear_mean_var(&radii);
    let normal = |m: f64, v: f64| Normal::new(m, v.max(CEM_MIN_VARIANCE).sqrt()).expect("finite");
    let (nt, np, nr) = (normal(mt, vt), normal(mp, vp), normal(mr, vr));
    let wraps = range.theta_wraps();

    let mut rng = derive(seed, Stream::Resample, iteration as u64, 0);
    let mut poses = Vec::with_capacity(n_poses);
    for _ in 0..n_poses {
        let t = nt.sample(&mut rng);
        let s = SphericalPose {
            theta: if wraps { wrap_angle(t) } else { theta.clamp(t) },
            phi: phi.clamp(np.sample(&mut rng)),
            r: r.clamp(nr.sample(&mut rng)),
        };
        poses.push((spherical_to_pose(&s)?, Some(s)));
    }
    Ok(uniform_particles(poses))
}

/// Random rigid perturbation: rotation about a uniform axis by an angle in
/// `[0, max_rot]` (applied in the camera frame), translation uniform in the
/// cube of half-side `max_trans`.
pub fn perturb_pose(pose: &CameraPose, max_rot: f64, max_trans: f64, rng: &mut impl Rng) -> CameraPose {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = if max_rot > 0.0 { rng.random_range(0.0..=max_rot) } else { 0.0 };
    let mut shift = Vector3::zeros();
    for v in shift.iter_mut() {
        *v = if max_trans > 0.0 {
            rng.random_range(-max_trans..=max_trans)
        } else {
            0.0
        };
    }
    let delta = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
    CameraPose::from_parts(
        &(pose.rotation() * delta.matrix()),
        &(pose.translation() + shift),
    )
}

/// Keeps the top `floor(keep_frac · n_poses)` particles and fills the rest
/// with perturbed copies of uniformly chosen kept poses.
#[allow(clippy::too_many_arguments)]
pub fn resample_pick_perturb(
    particles: &[Particle],
    weights: &[f64],
    keep_frac: f64,
    perturb_rot: f64,
    perturb_trans: f64,
    n_poses: usize,
    seed: u64,
    iteration: usize,
) -> Result<Vec<Particle>> {
    let n_keep = ((keep_frac * n_poses as f64).floor() as usize).min(particles.len());
    if n_keep == 0 {
        return Err(Error::Config(format!(
            "keep fraction {keep_frac} of {n_poses} poses keeps nothing"
        )));
    }
    let kept: Vec<&Particle> = rank_by_weight(weights)
        .into_iter()
        .take(n_keep)
        .map(|i| &particles[i])
        .collect();
    let mut poses: Vec<(CameraPose, Option<SphericalPose>)> =
        kept.iter().map(|p| (p.pose, p.spherical)).collect();
    for slot in n_keep..n_poses {
        let mut rng = derive(seed, Stream::Perturb, iteration as u64, slot as u64);
        let src = kept[rng.random_range(0..n_keep)];
        if perturb_rot == 0.0 && perturb_trans == 0.0 {
            poses.push((src.pose, src.spherical));
        } else {
            poses.push((perturb_pose(&src.pose, perturb_rot, perturb_trans, &mut rng), None));
        }
    }
    Ok(uniform_particles(poses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_data::Interval;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn particle(theta: f64, phi: f64, r: f64) -> Particle {
        let s = SphericalPose::new(theta, phi, r).unwrap();
        Particle {
            pose: spherical_to_pose(&s).unwrap(),
            spherical: Some(s),
            weight: 0.0,
            last_error: 0.0,
        }
    }

    fn range() -> PoseRange {
        PoseRange::Object {
            theta: Interval::new(-PI, PI).unwrap(),
            phi: Interval::new(-1.0, 1.0).unwrap(),
            r: Interval::new(2.0, 6.0).unwrap(),
        }
    }

    #[test]
    fn circular_mean_straddles_pi() {
        let (m, v) = circular_mean_var(&[3.1, -3.1]);
        assert_relative_eq!(m.abs(), PI, epsilon = 1e-9);
        assert!(v < 0.01);
    }

    #[test]
    fn identical_elites_collapse() {
        let ps = vec![particle(0.5, 0.3, 4.0); 8];
        let w = vec![0.125; 8];
        let out = resample_cem(&ps, &w, 0.25, 20, &range(), 1, 0).unwrap();
        assert_eq!(out.len(), 20);
        let tol = 6.0 * CEM_MIN_VARIANCE.sqrt();
        for p in &out {
            let s = p.spherical.unwrap();
            assert!((s.theta - 0.5).abs() < tol && (s.phi - 0.3).abs() < tol);
            assert!((s.r - 4.0).abs() < tol);
            assert_relative_eq!(p.weight, 0.05);
        }
    }

    #[test]
    fn cem_centers_on_dominant_particle() {
        let ps: Vec<Particle> = (0..10).map(|i| particle(-2.0 + 0.4 * i as f64, 0.2, 4.0)).collect();
        let mut w = vec![1e-6; 10];
        w[7] = 1.0;
        let out = resample_cem(&ps, &w, 0.1, 50, &range(), 3, 0).unwrap();
        let mean_theta: f64 =
            out.iter().map(|p| p.spherical.unwrap().theta).sum::<f64>() / out.len() as f64;
        assert!((mean_theta - ps[7].spherical.unwrap().theta).abs() < 0.01);
    }

    #[test]
    fn cem_rejects_scene_range() {
        let ps = vec![particle(0.5, 0.3, 4.0)];
        let scene = PoseRange::Scene {
            anchors: vec![ps[0].pose],
            rotation: 0.1,
            translation: 0.1,
        };
        assert!(resample_cem(&ps, &[1.0], 0.5, 4, &scene, 0, 0).is_err());
    }

    #[test]
    fn pick_perturb_keeps_a_third() {
        let ps: Vec<Particle> = (0..30).map(|i| particle(0.1 * i as f64, 0.2, 4.0)).collect();
        let w: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let out = resample_pick_perturb(&ps, &w, 1.0 / 3.0, 0.1, 0.05, 30, 9, 0).unwrap();
        assert_eq!(out.len(), 30);
        for k in 0..10 {
            assert_eq!(out[k].pose, ps[29 - k].pose);
        }
        assert!(out[10..].iter().all(|p| p.spherical.is_none()));
    }

    #[test]
    fn zero_perturbation_copies_kept_poses() {
        let ps: Vec<Particle> = (0..9).map(|i| particle(0.1 * i as f64, 0.2, 4.0)).collect();
        let w: Vec<f64> = (0..9).map(|i| (i as f64).sin() + 2.0).collect();
        let out = resample_pick_perturb(&ps, &w, 1.0 / 3.0, 0.0, 0.0, 9, 2, 0).unwrap();
        let kept: Vec<CameraPose> = out[..3].iter().map(|p| p.pose).collect();
        assert!(out.iter().all(|p| kept.contains(&p.pose)));
    }

    #[test]
    fn selection_depends_only_on_ranking() {
        let ps: Vec<Particle> = (0..12).map(|i| particle(0.2 * i as f64, 0.1, 4.0)).collect();
        let w: Vec<f64> = (0..12).map(|i| ((i * 5) % 12) as f64 * 0.01 + 0.01).collect();
        let scaled: Vec<f64> = w.iter().map(|v| v * 37.5).collect();
        let warped: Vec<f64> = w.iter().map(|v| v.powi(3).ln()).collect();
        let a = resample_pick_perturb(&ps, &w, 1.0 / 3.0, 0.1, 0.1, 12, 4, 1).unwrap();
        let b = resample_pick_perturb(&ps, &scaled, 1.0 / 3.0, 0.1, 0.1, 12, 4, 1).unwrap();
        let c = resample_pick_perturb(&ps, &warped, 1.0 / 3.0, 0.1, 0.1, 12, 4, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let a = resample_cem(&ps, &w, 0.25, 12, &range(), 4, 1).unwrap();
        let c = resample_cem(&ps, &warped, 0.25, 12, &range(), 4, 1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn keep_nothing_is_an_error() {
        let ps = vec![particle(0.0, 0.0, 4.0); 2];
        assert!(resample_pick_perturb(&ps, &[0.5, 0.5], 0.3, 0.1, 0.1, 2, 0, 0).is_err());
    }

    #[test]
    fn wrap_keeps_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI / 4.0), -PI / 4.0);
    }
}
