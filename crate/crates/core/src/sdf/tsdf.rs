//! Truncated signed distance fusion: the explicit-reconstruction baseline
//! next to the volume-rendered fit.

use rayon::prelude::*;

use crate::error::Result;
use crate::ingest::{build_ray_bundle, Frame, LidarRay};
use crate::sdf::{GridSpec, SdfGrid};

/// Fusion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdfConfig {
    pub truncation_distance: f64,
    pub max_weight: f64,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        TsdfConfig {
            truncation_distance: 0.3,
            max_weight: 100.0,
        }
    }
}

const RAY_CHUNK: usize = 1024;

/// Fuse per-frame scans into a truncated SDF grid.
///
/// Each observed ray updates the voxel nodes within `truncation_distance`
/// of its endpoint along the ray with a weighted running average of the
/// range difference (positive in front of the surface, negative behind).
/// Unobserved voxels keep `+truncation_distance`.
pub fn tsdf_fuse(frames: &[Frame], spec: &GridSpec, cfg: &TsdfConfig) -> Result<SdfGrid> {
    spec.validate()?;
    if cfg.truncation_distance < 2.0 * spec.voxel_size {
        log::warn!(
            "TSDF truncation {} below 2 voxels ({}); expect holes",
            cfg.truncation_distance,
            2.0 * spec.voxel_size
        );
    }
    if frames.is_empty() {
        return SdfGrid::new(spec, cfg.truncation_distance);
    }
    let bundle = build_ray_bundle(frames, 1.0)?;
    tsdf_fuse_rays(&bundle.rays, spec, cfg)
}

/// Fusion over an explicit ray set (origins already in grid coordinates).
pub fn tsdf_fuse_rays(rays: &[LidarRay], spec: &GridSpec, cfg: &TsdfConfig) -> Result<SdfGrid> {
    spec.validate()?;
    let mut grid = SdfGrid::new(spec, cfg.truncation_distance)?;
    let mut weights = vec![0.0f64; grid.values.len()];
    let (nx, ny, nz) = spec.dims;
    let h = spec.voxel_size;
    let trunc = cfg.truncation_distance;

    // Gather (node, signed distance) observations in fixed chunk order so
    // the running averages merge deterministically.
    let updates: Vec<Vec<(u32, f64)>> = rays
        .par_chunks(RAY_CHUNK)
        .map(|chunk| {
            let mut out = Vec::new();
            for ray in chunk {
                let step = h * 0.5;
                let t_start = (ray.measured_depth - trunc).max(0.0);
                let t_end = ray.measured_depth + trunc;
                let steps = ((t_end - t_start) / step).ceil() as usize;
                let mut last_node = u32::MAX;
                for si in 0..=steps {
                    let t = (t_start + si as f64 * step).min(t_end);
                    let p = ray.origin + t * ray.direction;
                    let gx = ((p.x - spec.origin.x) / h).round();
                    let gy = ((p.y - spec.origin.y) / h).round();
                    let gz = ((p.z - spec.origin.z) / h).round();
                    if gx < 0.0
                        || gy < 0.0
                        || gz < 0.0
                        || gx >= nx as f64
                        || gy >= ny as f64
                        || gz >= nz as f64
                    {
                        continue;
                    }
                    let node = (gx as usize + nx * (gy as usize + ny * gz as usize)) as u32;
                    if node == last_node {
                        continue;
                    }
                    last_node = node;
                    // Range difference along the ray, measured at the node
                    // itself rather than the step position.
                    let node_pos = spec.origin
                        + crate::geometry::Vec3::new(gx, gy, gz) * h;
                    let sd = (ray.measured_depth - (node_pos - ray.origin).norm())
                        .clamp(-trunc, trunc);
                    out.push((node, sd));
                }
            }
            out
        })
        .collect();

    for chunk in updates {
        for (node, sd) in chunk {
            let i = node as usize;
            let w = weights[i];
            if w == 0.0 {
                grid.values[i] = sd;
            } else {
                grid.values[i] = (grid.values[i] * w + sd) / (w + 1.0);
            }
            weights[i] = (w + 1.0).min(cfg.max_weight);
        }
    }

    Ok(grid)
}
