//! Virtual LiDAR sensors: beam patterns, dataset presets, and ray-cast
//! scan simulation against triangle meshes.

pub mod bvh;
pub mod scan;

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{Pose6D, Vec3};

/// Virtual spinning-LiDAR description.
///
/// Angles are stored in degrees (as sensor datasheets quote them); the
/// beam pattern converts to radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorProfile {
    pub name: String,
    pub channels: usize,
    pub vfov_min: f64,
    pub vfov_max: f64,
    pub hfov_min: f64,
    pub hfov_max: f64,
    /// Rotations per second.
    pub rotation_rate: f64,
    pub points_per_second: u64,
    pub max_range: f64,
    /// Probability a return is discarded, in [0, 1).
    pub drop_rate: f64,
    /// Gaussian range noise sigma, meters.
    pub range_noise_sigma: f64,
    /// Sensor pose in the vehicle frame.
    pub mount: Pose6D,
    /// Explicit per-channel elevations (degrees); overrides the uniform
    /// pattern when present.
    pub elevation_override: Option<Vec<f64>>,
}

impl SensorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 1 {
            return Err(Error::invalid("profile needs at least one channel"));
        }
        if !(self.vfov_min < self.vfov_max) {
            return Err(Error::invalid(format!(
                "need vfov_min < vfov_max, got [{}, {}]",
                self.vfov_min, self.vfov_max
            )));
        }
        if !(self.hfov_min < self.hfov_max) {
            return Err(Error::invalid("need hfov_min < hfov_max"));
        }
        if !(self.rotation_rate > 0.0) {
            return Err(Error::invalid("rotation_rate must be positive"));
        }
        if self.points_per_second == 0 {
            return Err(Error::invalid("points_per_second must be positive"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("max_range must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::invalid("drop_rate must lie in [0, 1)"));
        }
        if self.range_noise_sigma < 0.0 {
            return Err(Error::invalid("range_noise_sigma must be non-negative"));
        }
        if let Some(el) = &self.elevation_override {
            if el.len() != self.channels {
                return Err(Error::invalid(format!(
                    "elevation_override has {} entries for {} channels",
                    el.len(),
                    self.channels
                )));
            }
            for &e in el {
                if e < self.vfov_min - 1e-9 || e > self.vfov_max + 1e-9 {
                    return Err(Error::invalid(format!(
                        "override elevation {e} outside vFoV [{}, {}]",
                        self.vfov_min, self.vfov_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// Azimuth steps per rotation: points per rotation spread over the
    /// channels, all channels firing together at each step.
    pub fn azimuth_steps(&self) -> usize {
        let per_rotation = self.points_per_second as f64 / self.rotation_rate;
        ((per_rotation / self.channels as f64).round() as usize).max(1)
    }

    pub fn rays_per_scan(&self) -> usize {
        self.channels * self.azimuth_steps()
    }
}

/// Per-channel elevation angles in radians.
///
/// Uses the explicit override when present, otherwise `channels` values
/// evenly spaced inclusive of both vFoV endpoints (midpoint for a single
/// channel).
pub fn beam_pattern(profile: &SensorProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    let deg = |d: f64| d.to_radians();
    if let Some(el) = &profile.elevation_override {
        return Ok(el.iter().map(|&e| deg(e)).collect());
    }
    let n = profile.channels;
    if n == 1 {
        return Ok(vec![deg(0.5 * (profile.vfov_min + profile.vfov_max))]);
    }
    let step = (profile.vfov_max - profile.vfov_min) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| deg(profile.vfov_min + i as f64 * step))
        .collect())
}

/// Spherical-to-Cartesian with elevation measured from the horizontal
/// plane: `(r cos(theta) cos(phi), r cos(theta) sin(phi), r sin(theta))`.
pub fn spherical_to_point(theta: f64, phi: f64, r: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(r * ct * cp, r * ct * sp, r * st)
}

pub const PRESET_NAMES: [&str; 9] = [
    "waymo-top",
    "waymo-side",
    "waymo-side-front",
    "waymo-side-rear",
    "waymo-side-left",
    "waymo-side-right",
    "kitti",
    "nuscenes",
    "carla-default-32",
];

fn base_profile(name: &str) -> SensorProfile {
    SensorProfile {
        name: name.to_string(),
        channels: 64,
        vfov_min: -30.0,
        vfov_max: 10.0,
        hfov_min: -180.0,
        hfov_max: 180.0,
        rotation_rate: 10.0,
        points_per_second: 1_280_000,
        max_range: 100.0,
        drop_rate: 0.0,
        range_noise_sigma: 0.0,
        mount: Pose6D::identity(),
        elevation_override: None,
    }
}

fn waymo_side(name: &str, mount: Pose6D) -> SensorProfile {
    SensorProfile {
        channels: 64,
        vfov_min: -90.0,
        vfov_max: 30.0,
        points_per_second: 640_000,
        max_range: 30.0,
        mount,
        ..base_profile(name)
    }
}

/// Sensor presets. vFoV bounds are dataset values; channel counts and the
/// remaining physicals are documented defaults except carla-default-32,
/// whose 32-channel uniform layout is part of the preset definition.
pub fn preset(name: &str) -> Result<SensorProfile> {
    let p = match name {
        "waymo-top" => SensorProfile {
            vfov_min: -17.6,
            vfov_max: 2.4,
            points_per_second: 1_536_000,
            max_range: 75.0,
            mount: Pose6D::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0),
            ..base_profile(name)
        },
        "waymo-side" | "waymo-side-front" => waymo_side(
            name,
            Pose6D::new(3.0, 0.0, 0.8, 0.0, 0.0, 0.0),
        ),
        "waymo-side-rear" => waymo_side(
            name,
            Pose6D::new(-1.0, 0.0, 0.8, 0.0, std::f64::consts::PI, 0.0),
        ),
        "waymo-side-left" => waymo_side(
            name,
            Pose6D::new(0.0, 1.0, 0.8, 0.0, std::f64::consts::FRAC_PI_2, 0.0),
        ),
        "waymo-side-right" => waymo_side(
            name,
            Pose6D::new(0.0, -1.0, 0.8, 0.0, -std::f64::consts::FRAC_PI_2, 0.0),
        ),
        "kitti" => SensorProfile {
            vfov_min: -24.9,
            vfov_max: 2.0,
            max_range: 120.0,
            mount: Pose6D::new(0.0, 0.0, 1.73, 0.0, 0.0, 0.0),
            ..base_profile(name)
        },
        "nuscenes" => SensorProfile {
            channels: 32,
            vfov_min: -30.67,
            vfov_max: 10.67,
            rotation_rate: 20.0,
            points_per_second: 640_000,
            max_range: 70.0,
            mount: Pose6D::new(0.0, 0.0, 1.84, 0.0, 0.0, 0.0),
            ..base_profile(name)
        },
        "carla-default-32" => SensorProfile {
            channels: 32,
            vfov_min: -30.0,
            vfov_max: 10.0,
            points_per_second: 320_000,
            mount: Pose6D::new(0.0, 0.0, 2.4, 0.0, 0.0, 0.0),
            ..base_profile(name)
        },
        other => {
            return Err(Error::NotFound(format!(
                "unknown sensor preset '{other}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    p.validate()?;
    Ok(p)
}

/// The four side units, front/rear/left/right.
pub fn waymo_side_profiles() -> [SensorProfile; 4] {
    [
        preset("waymo-side-front").unwrap(),
        preset("waymo-side-rear").unwrap(),
        preset("waymo-side-left").unwrap(),
        preset("waymo-side-right").unwrap(),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: String,
    channels: usize,
    vfov_min: f64,
    vfov_max: f64,
    #[serde(default = "default_hfov_min")]
    hfov_min: f64,
    #[serde(default = "default_hfov_max")]
    hfov_max: f64,
    #[serde(default = "default_rotation_rate")]
    rotation_rate: f64,
    #[serde(default = "default_pps")]
    points_per_second: u64,
    #[serde(default = "default_max_range")]
    max_range: f64,
    #[serde(default)]
    drop_rate: f64,
    #[serde(default)]
    range_noise_sigma: f64,
    /// x y z roll yaw pitch
    #[serde(default)]
    mount: Option<[f64; 6]>,
    #[serde(default)]
    elevation_override: Option<Vec<f64>>,
}

fn default_hfov_min() -> f64 {
    -180.0
}
fn default_hfov_max() -> f64 {
    180.0
}
fn default_rotation_rate() -> f64 {
    10.0
}
fn default_pps() -> u64 {
    640_000
}
fn default_max_range() -> f64 {
    100.0
}

impl SensorProfile {
    /// Load a profile from a key/value config file (TOML syntax).
    pub fn load(path: impl AsRef<Path>) -> Result<SensorProfile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: ProfileFile = toml::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("profile parse error: {e}")))?;
        let mount = file
            .mount
            .map(|m| Pose6D::new(m[0], m[1], m[2], m[3], m[4], m[5]))
            .unwrap_or_else(Pose6D::identity);
        let profile = SensorProfile {
            name: file.name,
            channels: file.channels,
            vfov_min: file.vfov_min,
            vfov_max: file.vfov_max,
            hfov_min: file.hfov_min,
            hfov_max: file.hfov_max,
            rotation_rate: file.rotation_rate,
            points_per_second: file.points_per_second,
            max_range: file.max_range,
            drop_rate: file.drop_rate,
            range_noise_sigma: file.range_noise_sigma,
            mount,
            elevation_override: file.elevation_override,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Resolve a preset name or a profile file path.
    pub fn resolve(name_or_path: &str) -> Result<SensorProfile> {
        match preset(name_or_path) {
            Ok(p) => Ok(p),
            Err(preset_err) => {
                let path = Path::new(name_or_path);
                if path.exists() {
                    SensorProfile::load(path)
                } else {
                    Err(preset_err)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_channels_hit_both_endpoints() {
        let p = SensorProfile {
            channels: 2,
            vfov_min: -30.0,
            vfov_max: 10.0,
            ..base_profile("test")
        };
        let beams = beam_pattern(&p).unwrap();
        assert_eq!(beams.len(), 2);
        assert!((beams[0] - (-30.0f64).to_radians()).abs() < 1e-12);
        assert!((beams[1] - 10.0f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn default_32_spacing_matches_vfov() {
        let p = preset("carla-default-32").unwrap();
        let beams = beam_pattern(&p).unwrap();
        assert_eq!(beams.len(), 32);
        let spacing = (40.0 / 31.0f64).to_radians();
        for w in beams.windows(2) {
            assert!((w[1] - w[0] - spacing).abs() < 1e-12);
        }
    }

    #[test]
    fn kitti_beams_stay_in_table_bounds() {
        let p = preset("kitti").unwrap();
        for b in beam_pattern(&p).unwrap() {
            let deg = b.to_degrees();
            assert!((-24.9..=2.0).contains(&deg));
        }
    }

    #[test]
    fn preset_vfov_values() {
        assert_eq!(preset("kitti").unwrap().vfov_min, -24.9);
        assert_eq!(preset("kitti").unwrap().vfov_max, 2.0);
        assert_eq!(preset("nuscenes").unwrap().vfov_min, -30.67);
        assert_eq!(preset("nuscenes").unwrap().vfov_max, 10.67);
        assert_eq!(preset("waymo-top").unwrap().vfov_min, -17.6);
        assert_eq!(preset("waymo-top").unwrap().vfov_max, 2.4);
        let side = preset("waymo-side").unwrap();
        assert_eq!((side.vfov_min, side.vfov_max), (-90.0, 30.0));
        let carla = preset("carla-default-32").unwrap();
        assert_eq!(carla.channels, 32);
        assert_eq!((carla.vfov_min, carla.vfov_max), (-30.0, 10.0));
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        match preset("hdl-128") {
            Err(Error::NotFound(msg)) => assert!(msg.contains("kitti") && msg.contains("waymo-top")),
            other => panic!("expected not-found, got {other:?}"),
        }
    }

    #[test]
    fn override_length_mismatch_rejected() {
        let p = SensorProfile {
            channels: 4,
            elevation_override: Some(vec![-10.0, 0.0]),
            ..base_profile("bad")
        };
        assert!(beam_pattern(&p).is_err());
    }

    #[test]
    fn single_channel_uses_midpoint() {
        let p = SensorProfile {
            channels: 1,
            vfov_min: -20.0,
            vfov_max: 10.0,
            ..base_profile("one")
        };
        let beams = beam_pattern(&p).unwrap();
        assert!((beams[0] - (-5.0f64).to_radians()).abs() < 1e-12);
    }

    #[test]
    fn spherical_axes() {
        assert!((spherical_to_point(0.0, 0.0, 5.0) - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
        let zenith = spherical_to_point(std::f64::consts::FRAC_PI_2, 1.234, 2.0);
        assert!((zenith - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn spherical_scalar_example() {
        let p = spherical_to_point(std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_4, 1.0);
        let c30 = (std::f64::consts::PI / 6.0).cos();
        let c45 = (std::f64::consts::PI / 4.0).cos();
        assert!((p.x - c30 * c45).abs() < 1e-9);
        assert!((p.y - c30 * c45).abs() < 1e-9);
        assert!((p.z - 0.5).abs() < 1e-9);
    }

    #[test]
    fn profile_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sensor.toml");
        std::fs::write(
            &path,
            "name = \"custom\"\nchannels = 16\nvfov_min = -20.0\nvfov_max = 5.0\ndrop_rate = 0.1\nmount = [0.0, 0.0, 1.5, 0.0, 0.0, 0.0]\nelevation_override = [-20.0, -18.0, -16.0, -14.0, -12.0, -10.0, -8.0, -6.0, -4.0, -2.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0]\n",
        )
        .unwrap();
        let p = SensorProfile::load(&path).unwrap();
        assert_eq!(p.channels, 16);
        assert_eq!(p.elevation_override.as_ref().unwrap().len(), 16);
        assert_eq!(p.mount.z, 1.5);
        // Defaults fill in.
        assert_eq!(p.hfov_min, -180.0);
    }

    #[test]
    fn azimuth_step_arithmetic() {
        let p = preset("carla-default-32").unwrap();
        // 320k pts/s at 10 Hz over 32 channels -> 1000 steps.
        assert_eq!(p.azimuth_steps(), 1000);
        assert_eq!(p.rays_per_scan(), 32_000);
    }
}
