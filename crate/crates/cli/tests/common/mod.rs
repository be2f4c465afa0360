//! Shared fixtures for the acceptance and CLI integration suites: an
//! analytic closed-loop scene (ground plane, three boxes, one sphere),
//! scan synthesis, and dataset writers.

#![allow(dead_code)]

use std::path::Path;

use rescan_core::geometry::{compose, pose_to_transform, Pose6D, TriangleMesh, Vec3};
use rescan_core::ingest::Frame;
use rescan_core::lidar::bvh::Bvh;
use rescan_core::lidar::scan::{cast_scan, SimulatedScan};
use rescan_core::lidar::SensorProfile;
use rescan_core::ply::{write_ply_cloud, PlyEncoding};
use rescan_core::shapes::{box_mesh, plane_mesh, sphere_mesh};

/// Ground plane 20x20 m plus three boxes and one sphere.
pub fn closed_loop_scene() -> TriangleMesh {
    let mut scene = plane_mesh(10.0, 10.0, 0.0, 24);
    let boxes = [
        (box_mesh(4.0, 2.0, 1.5), Pose6D::new(5.0, 3.0, 0.0, 0.0, 0.4, 0.0)),
        (box_mesh(2.0, 2.0, 2.0), Pose6D::new(-4.0, -5.0, 0.0, 0.0, -0.7, 0.0)),
        (box_mesh(1.0, 1.0, 2.5), Pose6D::new(3.0, -6.0, 0.0, 0.0, 0.0, 0.0)),
    ];
    for (mesh, pose) in boxes {
        let t = pose_to_transform(&pose).unwrap();
        let mut m = mesh;
        for v in &mut m.vertices {
            *v = t.apply(*v);
        }
        scene.merge(&m);
    }
    scene.merge(&sphere_mesh(Vec3::new(-5.0, 5.0, 1.2), 1.2, 32, 64));
    scene
}

/// 64-beam scanner looking down from 2 m, wide enough to sweep the whole
/// ground patch.
pub fn closed_loop_profile(azimuth_steps: usize) -> SensorProfile {
    SensorProfile {
        name: "closed-loop-64".into(),
        channels: 64,
        vfov_min: -70.0,
        vfov_max: 5.0,
        hfov_min: -180.0,
        hfov_max: 180.0,
        rotation_rate: 10.0,
        points_per_second: (64 * azimuth_steps * 10) as u64,
        max_range: 60.0,
        drop_rate: 0.0,
        range_noise_sigma: 0.0,
        mount: Pose6D::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0),
        elevation_override: None,
    }
}

/// Five vehicle poses along a short pass through the scene.
pub fn closed_loop_poses() -> Vec<Pose6D> {
    (0..5)
        .map(|i| Pose6D::new(-2.0 + i as f64, 0.2 * i as f64, 0.0, 0.0, 0.05 * i as f64, 0.0))
        .collect()
}

/// Effective sensor pose (vehicle pose plus mount).
pub fn sensor_pose(vehicle: &Pose6D, profile: &SensorProfile) -> Pose6D {
    rescan_core::geometry::transform_to_pose(&compose(
        &pose_to_transform(vehicle).unwrap(),
        &pose_to_transform(&profile.mount).unwrap(),
    ))
}

/// Cast one scan per pose and package them as sensor-frame ingest frames.
pub fn scan_frames(
    mesh: &TriangleMesh,
    profile: &SensorProfile,
    poses: &[Pose6D],
    seed: u64,
) -> Vec<(Frame, SimulatedScan)> {
    let bvh = Bvh::build(mesh.clone()).unwrap();
    poses
        .iter()
        .enumerate()
        .map(|(i, vehicle)| {
            let scan = cast_scan(&bvh, profile, vehicle, seed.wrapping_add(i as u64)).unwrap();
            let spose = sensor_pose(vehicle, profile);
            let world_to_sensor = pose_to_transform(&spose).unwrap().inverse();
            let cloud = scan.cloud.transformed(&world_to_sensor);
            (
                Frame {
                    cloud,
                    sensor_pose: spose,
                    timestamp: i as f64 * 0.1,
                    frame_index: i,
                },
                scan,
            )
        })
        .collect()
}

/// Write frames as a PLY + manifest dataset under `dir`.
pub fn write_dataset(dir: &Path, frames: &[Frame]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut manifest = String::from("# synthetic sequence\n");
    for frame in frames {
        let name = format!("scan-{:04}.ply", frame.frame_index);
        write_ply_cloud(&frame.cloud, dir.join(&name), PlyEncoding::BinaryLittleEndian).unwrap();
        let p = frame.sensor_pose;
        manifest.push_str(&format!(
            "frame {}\ncloud {}\npose {} {} {} {} {} {}\n",
            frame.frame_index, name, p.x, p.y, p.z, p.roll, p.yaw, p.pitch
        ));
    }
    std::fs::write(dir.join("manifest.txt"), manifest).unwrap();
}

/// Recursively collect relative paths and file bytes under a directory.
pub fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

/// Assert two output trees are byte-identical.
pub fn assert_identical_trees(a: &Path, b: &Path) {
    let sa = dir_snapshot(a);
    let sb = dir_snapshot(b);
    let names_a: Vec<&str> = sa.iter().map(|(n, _)| n.as_str()).collect();
    let names_b: Vec<&str> = sb.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names_a, names_b, "output trees list different files");
    for ((name, bytes_a), (_, bytes_b)) in sa.iter().zip(&sb) {
        assert_eq!(
            bytes_a, bytes_b,
            "file {name} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
}
