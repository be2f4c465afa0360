//! `rescan reconstruct`: ingest -> (TSDF | volume fit | both) -> mesh.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use rescan_core::ingest::consolidate_sequence;
use rescan_core::metrics::chamfer;
use rescan_core::geometry::PointCloud;
use rescan_core::ply::{write_ply_mesh, PlyEncoding};
use rescan_core::rng::{stage_seed, Stage};
use rescan_core::sdf::fit::fit_sdf;
use rescan_core::sdf::marching::extract_mesh;
use rescan_core::sdf::tsdf::tsdf_fuse_rays;
use rescan_core::sdf::{GridSpec, SdfGrid};

use crate::config::{Method, PipelineConfig};

pub fn run(
    config_path: &Path,
    method_flag: Option<&str>,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<()> {
    let mut cfg = PipelineConfig::load(config_path)?;
    if let Some(m) = method_flag {
        cfg.method = Method::parse(m)?;
    }
    if let Some(s) = seed_flag {
        cfg.seed = s;
        cfg.optimizer.seed = s;
    }
    let out_dir = super::resolve_out_dir(out_flag, cfg.output_dir.as_deref(), "out");

    // Load and validate everything before creating any output.
    let (frames, labels) = super::load_sequence(&cfg.manifest_path)?;
    let consolidated = consolidate_sequence(&frames, &labels, &cfg.ingest)?;
    if consolidated.cloud.is_empty() {
        anyhow::bail!("sequence produced an empty consolidated cloud");
    }

    let spec = match cfg.explicit_grid {
        Some(spec) => spec,
        None => {
            let (lo, hi) = consolidated.cloud.bounds().expect("non-empty cloud");
            GridSpec::from_bounds(lo, hi, cfg.voxel_size, cfg.padding)?
        }
    };
    let mut render = cfg.render;
    if cfg.t_far_override <= 0.0 {
        render.t_far = spec.diagonal();
    }
    render.validate()?;

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    if let Some(source) = &cfg.source_profile {
        println!("source profile: {source}");
    }
    println!(
        "ingest: {} frames, {} points after cleanup ({} dynamic, {} outliers removed), {} rays",
        frames.len(),
        consolidated.cloud.len(),
        consolidated.dynamic_points_removed,
        consolidated.outliers_removed,
        consolidated.rays.rays.len(),
    );
    println!(
        "grid: origin ({:.2}, {:.2}, {:.2}), voxel {}, dims {}x{}x{}",
        spec.origin.x,
        spec.origin.y,
        spec.origin.z,
        spec.voxel_size,
        spec.dims.0,
        spec.dims.1,
        spec.dims.2
    );

    let mut meshes: Vec<(String, rescan_core::geometry::TriangleMesh)> = Vec::new();

    if cfg.method.runs_tsdf() {
        let grid = tsdf_fuse_rays(&consolidated.rays.rays, &spec, &cfg.tsdf)?;
        let mesh = extract_mesh(&grid, 0.0)?;
        grid.save(out_dir.join("grid-tsdf.sdf"))?;
        write_ply_mesh(&mesh, out_dir.join("mesh-tsdf.ply"), PlyEncoding::BinaryLittleEndian)?;
        println!(
            "tsdf: {} vertices, {} triangles -> mesh-tsdf.ply",
            mesh.vertices.len(),
            mesh.triangles.len()
        );
        meshes.push(("tsdf".to_string(), mesh));
    }

    if cfg.method.runs_fit() {
        let init = SdfGrid::new(&spec, cfg.tsdf.truncation_distance)?;
        let mut opt = cfg.optimizer.clone();
        opt.seed = stage_seed(cfg.seed, Stage::Reconstruct);
        let outcome = fit_sdf(&consolidated.rays.rays, &init, &render, &opt)?;
        let mesh = extract_mesh(&outcome.grid, 0.0)?;
        outcome.grid.save(out_dir.join("grid-volume-fit.sdf"))?;
        write_ply_mesh(
            &mesh,
            out_dir.join("mesh-volume-fit.ply"),
            PlyEncoding::BinaryLittleEndian,
        )?;

        let mut trace = String::from("epoch,data_loss,total_loss,scale\n");
        for e in &outcome.trace {
            trace.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.data_loss, e.total_loss, e.scale
            ));
        }
        std::fs::File::create(out_dir.join("loss-trace.csv"))?.write_all(trace.as_bytes())?;
        println!(
            "volume-fit: data loss {:.6} -> {:.6} over {} epochs (final scale {:.2}) -> mesh-volume-fit.ply",
            outcome.initial_data_loss,
            outcome.final_data_loss,
            outcome.trace.len(),
            outcome.scale
        );
        meshes.push(("volume-fit".to_string(), mesh));
    }

    if meshes.len() == 2 {
        let a = PointCloud::from_points(meshes[0].1.vertices.clone());
        let b = PointCloud::from_points(meshes[1].1.vertices.clone());
        if !a.is_empty() && !b.is_empty() {
            let cd = chamfer(&a, &b, 0.97)?;
            println!(
                "comparison: truncated CD({}, {}) = {:.6} m^2",
                meshes[0].0, meshes[1].0, cd.total
            );
            std::fs::write(
                out_dir.join("comparison.csv"),
                format!("method_a,method_b,truncated_cd\n{},{},{}\n", meshes[0].0, meshes[1].0, cd.total),
            )?;
        }
    }

    Ok(())
}
