//! Simulated LiDAR scans: spin a sensor profile through one rotation and
//! cast every (channel, azimuth) ray against a BVH.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{compose, pose_to_transform, PointCloud, Pose6D, Vec3};
use crate::lidar::bvh::Bvh;
use crate::lidar::{beam_pattern, spherical_to_point, SensorProfile};
use crate::rng::item_rng;

/// One simulated sweep. Points are in world coordinates with per-point
/// beam id, azimuth and (noisy) range; the geometric identity
/// `point = origin + range * direction` holds exactly.
#[derive(Debug, Clone)]
pub struct SimulatedScan {
    pub cloud: PointCloud,
    /// Returns discarded by the drop-rate model.
    pub dropped_count: usize,
    /// Rays that hit nothing within range.
    pub miss_count: usize,
    /// Total rays cast (channels x azimuth steps).
    pub rays_cast: usize,
    /// Sensor origin in world coordinates.
    pub sensor_origin: Vec3,
}

/// Cast one full rotation.
///
/// `vehicle_pose_world` places the vehicle; the profile's mount pose then
/// places the sensor. All channels fire simultaneously at each azimuth
/// step; output is ordered by (channel, azimuth step). Range noise is
/// applied before the drop decision, both from per-ray counter-seeded
/// streams, so results are reproducible across runs and thread counts.
pub fn cast_scan(
    bvh: &Bvh,
    profile: &SensorProfile,
    vehicle_pose_world: &Pose6D,
    seed: u64,
) -> Result<SimulatedScan> {
    profile.validate()?;
    let elevations = beam_pattern(profile)?;
    let steps = profile.azimuth_steps();
    let sensor_to_world = compose(
        &pose_to_transform(vehicle_pose_world)?,
        &pose_to_transform(&profile.mount)?,
    );
    let origin = sensor_to_world.apply(Vec3::ZERO);

    let hfov_span = (profile.hfov_max - profile.hfov_min).to_radians();
    let hfov_lo = profile.hfov_min.to_radians();

    struct RayOut {
        point: Vec3,
        range: f64,
        azimuth: f64,
        beam: i32,
        dropped: bool,
    }

    let total = profile.channels * steps;
    let results: Vec<Option<RayOut>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let channel = flat / steps;
            let step = flat % steps;
            let azimuth = hfov_lo + (step as f64 + 0.5) * hfov_span / steps as f64;
            let dir_sensor = spherical_to_point(elevations[channel], azimuth, 1.0);
            let dir = sensor_to_world.rotate(dir_sensor);

            let hit = bvh.intersect(origin, dir, profile.max_range)?;
            let mut rng = item_rng(seed, flat as u64);
            let mut range = hit.distance;
            if profile.range_noise_sigma > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                range += profile.range_noise_sigma * n;
                if range <= 0.0 || range > profile.max_range {
                    return None;
                }
            }
            let dropped = profile.drop_rate > 0.0 && rng.random_range(0.0..1.0) < profile.drop_rate;
            Some(RayOut {
                point: origin + range * dir,
                range,
                azimuth,
                beam: channel as i32,
                dropped,
            })
        })
        .collect();

    let mut cloud = PointCloud {
        points: Vec::new(),
        beam_id: Some(Vec::new()),
        range: Some(Vec::new()),
        azimuth: Some(Vec::new()),
        ..Default::default()
    };
    let mut dropped_count = 0usize;
    let mut miss_count = 0usize;
    for r in results {
        match r {
            None => miss_count += 1,
            Some(r) if r.dropped => dropped_count += 1,
            Some(r) => {
                cloud.points.push(r.point);
                cloud.beam_id.as_mut().unwrap().push(r.beam);
                cloud.range.as_mut().unwrap().push(r.range);
                cloud.azimuth.as_mut().unwrap().push(r.azimuth);
            }
        }
    }

    Ok(SimulatedScan {
        cloud,
        dropped_count,
        miss_count,
        rays_cast: total,
        sensor_origin: origin,
    })
}
