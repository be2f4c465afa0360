//! `rescan simulate`: compose per-frame scenes and cast virtual scans.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use rescan_core::geometry::{compose, pose_to_transform, transform_to_pose, Pose6D, TriangleMesh};
use rescan_core::ingest::SequenceManifest;
use rescan_core::lidar::bvh::Bvh;
use rescan_core::lidar::scan::cast_scan;
use rescan_core::lidar::SensorProfile;
use rescan_core::ply::{read_ply, write_ply_cloud, PlyContent, PlyEncoding};
use rescan_core::replay::{
    builtin_library, compose_frame, export_labels, load_asset_manifest, load_ego_track,
    load_object_tracks, map_size, match_asset, target_pose_at, target_pose_at_rigid, Placement,
    PoseUpdateMode, SizeMap,
};
use rescan_core::rng::{mix, stage_seed, Stage};

use crate::config::PipelineConfig;

pub fn run(
    config_path: &Path,
    mesh_flag: Option<&Path>,
    profile_flag: Option<&str>,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<()> {
    let mut cfg = PipelineConfig::load(config_path)?;
    if let Some(s) = seed_flag {
        cfg.seed = s;
    }
    let out_dir = super::resolve_out_dir(out_flag, cfg.output_dir.as_deref(), "out");

    let mesh_path = resolve_mesh_path(mesh_flag, &out_dir)?;
    let background = match read_ply(&mesh_path)
        .with_context(|| format!("loading mesh {}", mesh_path.display()))?
    {
        PlyContent::Mesh(m) => m,
        PlyContent::Cloud(_) => anyhow::bail!("{} is a point cloud, not a mesh", mesh_path.display()),
    };

    let profile_names: Vec<String> = match profile_flag {
        Some(p) => vec![p.to_string()],
        None if !cfg.target_profiles.is_empty() => cfg.target_profiles.clone(),
        None => anyhow::bail!("no sensor profile: pass --profile or set simulate.target_profiles"),
    };
    let profiles: Vec<SensorProfile> = profile_names
        .iter()
        .map(|name| SensorProfile::resolve(name))
        .collect::<rescan_core::Result<_>>()?;

    // Per-frame vehicle poses: the replay ego track when present,
    // otherwise the sequence manifest. Manifest poses are sensor poses,
    // so the profile mount is compensated to re-raycast from the exact
    // recorded sensor positions.
    let replay = load_replay(&cfg)?;
    let frame_poses: Vec<(usize, Pose6D, bool)> = match &replay {
        Some(r) => r
            .ego
            .poses
            .iter()
            .map(|(&t, &pose)| (t, pose, false))
            .collect(),
        None => {
            let manifest = SequenceManifest::load(&cfg.manifest_path)?;
            manifest
                .frames
                .iter()
                .map(|f| (f.frame_index, f.pose, true))
                .collect()
        }
    };

    std::fs::create_dir_all(&out_dir)?;
    let sim_seed = stage_seed(cfg.seed, Stage::Simulate);

    for (profile_idx, profile) in profiles.iter().enumerate() {
        let dir = out_dir.join(format!("sim-{}", sanitize(&profile.name)));
        std::fs::create_dir_all(&dir)?;
        let mut summary = String::from("frame,points,dropped,missed,rays_cast\n");
        let mut manifest = String::from("# simulated sequence\n");
        println!(
            "profile {}: {} channels, vFoV [{}, {}], {} rays/scan",
            profile.name,
            profile.channels,
            profile.vfov_min,
            profile.vfov_max,
            profile.rays_per_scan()
        );

        for &(frame_index, pose, pose_is_sensor) in &frame_poses {
            let (scene, placements) = compose_scene(&background, &replay, frame_index)?;
            let bvh = Bvh::build(scene)?;

            let vehicle_pose = if pose_is_sensor {
                let sensor = pose_to_transform(&pose)?;
                let mount = pose_to_transform(&profile.mount)?;
                transform_to_pose(&compose(&sensor, &mount.inverse()))
            } else {
                pose
            };

            let seed = mix(sim_seed, &[profile_idx as u64, frame_index as u64]);
            let scan = cast_scan(&bvh, profile, &vehicle_pose, seed)?;

            let sensor_pose = if pose_is_sensor {
                pose
            } else {
                transform_to_pose(&compose(
                    &pose_to_transform(&vehicle_pose)?,
                    &pose_to_transform(&profile.mount)?,
                ))
            };
            // Scans are stored in sensor coordinates, the way datasets
            // deliver per-frame clouds; poses live in the manifest.
            let world_to_sensor = pose_to_transform(&sensor_pose)?.inverse();
            let local_cloud = scan.cloud.transformed(&world_to_sensor);
            let scan_path = dir.join(format!("scan-{frame_index:04}.ply"));
            write_ply_cloud(&local_cloud, &scan_path, PlyEncoding::BinaryLittleEndian)?;

            let labels = export_labels(&placements, &sensor_pose)?;
            std::fs::write(dir.join(format!("labels-{frame_index:04}.txt")), labels)?;

            summary.push_str(&format!(
                "{},{},{},{},{}\n",
                frame_index,
                scan.cloud.len(),
                scan.dropped_count,
                scan.miss_count,
                scan.rays_cast
            ));
            manifest.push_str(&format!(
                "frame {frame_index}\ncloud scan-{frame_index:04}.ply\npose {} {} {} {} {} {}\nlabels labels-{frame_index:04}.txt\n",
                sensor_pose.x, sensor_pose.y, sensor_pose.z,
                sensor_pose.roll, sensor_pose.yaw, sensor_pose.pitch
            ));
            println!(
                "  frame {frame_index:4}: {} points, {} dropped, {} missed",
                scan.cloud.len(),
                scan.dropped_count,
                scan.miss_count
            );
        }
        std::fs::File::create(dir.join("summary.csv"))?.write_all(summary.as_bytes())?;
        std::fs::File::create(dir.join("manifest.txt"))?.write_all(manifest.as_bytes())?;
    }

    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

fn resolve_mesh_path(flag: Option<&Path>, out_dir: &Path) -> Result<PathBuf> {
    if let Some(p) = flag {
        if !p.exists() {
            anyhow::bail!("mesh {} does not exist", p.display());
        }
        return Ok(p.to_path_buf());
    }
    for candidate in ["mesh-tsdf.ply", "mesh-volume-fit.ply"] {
        let p = out_dir.join(candidate);
        if p.exists() {
            return Ok(p);
        }
    }
    anyhow::bail!(
        "no mesh found in {} (run `rescan reconstruct` first or pass --mesh)",
        out_dir.display()
    )
}

struct ReplayInputs {
    ego: rescan_core::replay::EgoTrack,
    objects: Vec<rescan_core::replay::TrackedObject>,
    assets: Vec<rescan_core::replay::Asset>,
    size_map: SizeMap,
    mode: PoseUpdateMode,
}

fn load_replay(cfg: &PipelineConfig) -> Result<Option<ReplayInputs>> {
    let Some(paths) = &cfg.replay else {
        return Ok(None);
    };
    let ego = load_ego_track(&paths.ego_track)?;
    let objects = load_object_tracks(&paths.object_tracks)?;
    let assets = match &paths.asset_manifest {
        Some(p) => load_asset_manifest(p)?,
        None => builtin_library(),
    };
    let size_map = match &paths.size_map {
        Some(p) => SizeMap::load(p)?,
        None => SizeMap::default(),
    };
    Ok(Some(ReplayInputs {
        ego,
        objects,
        assets,
        size_map,
        mode: paths.pose_update,
    }))
}

fn compose_scene(
    background: &TriangleMesh,
    replay: &Option<ReplayInputs>,
    frame_index: usize,
) -> Result<(TriangleMesh, Vec<Placement>)> {
    let Some(replay) = replay else {
        return Ok((background.clone(), Vec::new()));
    };
    let mut placements = Vec::new();
    for obj in &replay.objects {
        if !obj.relative_poses.contains_key(&frame_index) {
            continue;
        }
        let pose = match replay.mode {
            PoseUpdateMode::Componentwise => target_pose_at(obj, &replay.ego, frame_index)?,
            PoseUpdateMode::RigidCompose => target_pose_at_rigid(obj, &replay.ego, frame_index)?,
        };
        let size = map_size(obj.size, obj.class_name, &replay.size_map);
        let asset = match_asset(&replay.assets, obj.class_name, size)?;
        placements.push(Placement {
            object_id: obj.object_id.clone(),
            class_name: obj.class_name,
            asset_id: asset.asset_id.clone(),
            pose,
            size,
            mesh: asset.mesh.clone(),
            asset_size: asset.size,
        });
    }
    let scene = compose_frame(background, &placements)?;
    Ok((scene, placements))
}
