//! Replay dynamic traffic participants into a reconstructed scene.
//!
//! Object motion follows the componentwise 6D pose-update rule: the ego
//! delta `P_ego(t) = L_ego(t) - L_ego(0)` is added to each object's
//! ego-relative pose, with angles wrapped. This is deliberately plain
//! per-component arithmetic over labels, not rigid-transform composition;
//! [`PoseUpdateMode::RigidCompose`] offers the composition variant for
//! callers that want strict SE(3) semantics under ego rotation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{
    compose, pose_to_transform, transform_to_pose, wrap_angle, Pose6D, TriangleMesh, Vec3,
};
use crate::ingest::ObjectClass;
use crate::ply::{read_ply, PlyContent};
use crate::shapes::box_mesh;

/// How object world poses are derived from ego and relative poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoseUpdateMode {
    /// Componentwise 6D add/subtract with angle wrapping.
    #[default]
    Componentwise,
    /// Rigid-transform composition of the same quantities.
    RigidCompose,
}

/// A replayable mesh asset. Meshes are unit-posed: centered in x/y with
/// ground contact at z = 0, matching `size` before any per-axis scaling.
#[derive(Debug, Clone)]
pub struct Asset {
    pub asset_id: String,
    pub class_name: ObjectClass,
    pub size: (f64, f64, f64),
    pub mesh: TriangleMesh,
}

impl Asset {
    /// Declared size must match the mesh bounding box within 5%.
    pub fn validate(&self) -> Result<()> {
        let (l, w, h) = self.size;
        if l <= 0.0 || w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!(
                "asset {} has non-positive size",
                self.asset_id
            )));
        }
        let (lo, hi) = self
            .mesh
            .bounds()
            .ok_or_else(|| Error::invalid(format!("asset {} mesh is empty", self.asset_id)))?;
        let extents = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
        for (got, want) in extents.iter().zip([l, w, h]) {
            if (got - want).abs() > 0.05 * want {
                return Err(Error::invalid(format!(
                    "asset {}: mesh extent {got:.3} vs declared {want:.3}",
                    self.asset_id
                )));
            }
        }
        Ok(())
    }
}

/// Ego-relative track of one dynamic object.
#[derive(Debug, Clone)]
pub struct TrackedObject {
    pub object_id: String,
    pub class_name: ObjectClass,
    pub size: (f64, f64, f64),
    /// Per-frame pose relative to the ego vehicle.
    pub relative_poses: BTreeMap<usize, Pose6D>,
}

impl TrackedObject {
    /// Poses must cover every frame of the span.
    pub fn validate(&self) -> Result<()> {
        let Some((&first, _)) = self.relative_poses.first_key_value() else {
            return Err(Error::invalid(format!(
                "object {} has no poses",
                self.object_id
            )));
        };
        let (&last, _) = self.relative_poses.last_key_value().unwrap();
        for t in first..=last {
            if !self.relative_poses.contains_key(&t) {
                return Err(Error::invalid(format!(
                    "object {} missing frame {t} inside its span {first}..={last}",
                    self.object_id
                )));
            }
        }
        Ok(())
    }
}

/// Absolute ego poses per frame; frame 0 defines the scene origin.
#[derive(Debug, Clone, Default)]
pub struct EgoTrack {
    pub poses: BTreeMap<usize, Pose6D>,
}

impl EgoTrack {
    pub fn validate(&self) -> Result<()> {
        if !self.poses.contains_key(&0) {
            return Err(Error::invalid("ego track must include frame 0"));
        }
        Ok(())
    }
}

fn pose_sub(a: &Pose6D, b: &Pose6D) -> Pose6D {
    Pose6D::new(
        a.x - b.x,
        a.y - b.y,
        a.z - b.z,
        wrap_angle(a.roll - b.roll),
        wrap_angle(a.yaw - b.yaw),
        wrap_angle(a.pitch - b.pitch),
    )
}

fn pose_add(a: &Pose6D, b: &Pose6D) -> Pose6D {
    Pose6D::new(
        a.x + b.x,
        a.y + b.y,
        a.z + b.z,
        wrap_angle(a.roll + b.roll),
        wrap_angle(a.yaw + b.yaw),
        wrap_angle(a.pitch + b.pitch),
    )
}

/// Ego pose delta at frame `t`: componentwise `L(t) - L(0)`, wrapped.
pub fn ego_pose_at(track: &EgoTrack, t: usize) -> Result<Pose6D> {
    let l0 = track
        .poses
        .get(&0)
        .ok_or_else(|| Error::NotFound("ego track frame 0".to_string()))?;
    let lt = track
        .poses
        .get(&t)
        .ok_or_else(|| Error::NotFound(format!("ego track frame {t}")))?;
    Ok(pose_sub(lt, l0))
}

/// Object pose at frame `t`: relative pose plus the ego delta,
/// componentwise with wrapping.
pub fn target_pose_at(obj: &TrackedObject, ego: &EgoTrack, t: usize) -> Result<Pose6D> {
    let rel = obj
        .relative_poses
        .get(&t)
        .ok_or_else(|| Error::NotFound(format!("object {} frame {t}", obj.object_id)))?;
    let ego_delta = ego_pose_at(ego, t)?;
    Ok(pose_add(rel, &ego_delta))
}

/// Rigid-composition variant of [`target_pose_at`].
pub fn target_pose_at_rigid(obj: &TrackedObject, ego: &EgoTrack, t: usize) -> Result<Pose6D> {
    let rel = obj
        .relative_poses
        .get(&t)
        .ok_or_else(|| Error::NotFound(format!("object {} frame {t}", obj.object_id)))?;
    let ego_delta = ego_pose_at(ego, t)?;
    let composed = compose(&pose_to_transform(&ego_delta)?, &pose_to_transform(rel)?);
    Ok(transform_to_pose(&composed))
}

/// Per-class affine size mapping, one (scale, offset) pair per dimension.
#[derive(Debug, Clone, Default)]
pub struct SizeMap {
    pub per_class: BTreeMap<ObjectClass, [(f64, f64); 3]>,
}

impl SizeMap {
    pub fn validate(&self) -> Result<()> {
        for (class, dims) in &self.per_class {
            for (a, _) in dims {
                if !(*a > 0.0) {
                    return Err(Error::invalid(format!(
                        "size map scale for {class} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Load from TOML: `[vehicle] length = [a, b] ...` sections.
    pub fn load(path: impl AsRef<Path>) -> Result<SizeMap> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let raw: BTreeMap<String, BTreeMap<String, [f64; 2]>> = toml::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("size map parse error: {e}")))?;
        let mut map = SizeMap::default();
        for (class_name, dims) in raw {
            let class = ObjectClass::parse(&class_name)?;
            let mut entry = [(1.0, 0.0); 3];
            for (dim_name, [a, b]) in dims {
                let slot = match dim_name.as_str() {
                    "length" => 0,
                    "width" => 1,
                    "height" => 2,
                    other => {
                        return Err(Error::invalid(format!(
                            "unknown size-map dimension '{other}'"
                        )))
                    }
                };
                entry[slot] = (a, b);
            }
            map.per_class.insert(class, entry);
        }
        map.validate()?;
        Ok(map)
    }
}

const MIN_MAPPED_SIZE: f64 = 0.1;

/// Apply the per-class affine map to a size triple; classes absent from
/// the map pass through unchanged (with a warning).
pub fn map_size(size: (f64, f64, f64), class_name: ObjectClass, map: &SizeMap) -> (f64, f64, f64) {
    let Some(dims) = map.per_class.get(&class_name) else {
        log::warn!("size map has no entry for {class_name}; passing size through");
        return size;
    };
    let apply = |(a, b): (f64, f64), x: f64| (a * x + b).max(MIN_MAPPED_SIZE);
    (
        apply(dims[0], size.0),
        apply(dims[1], size.1),
        apply(dims[2], size.2),
    )
}

/// Fit a per-class, per-dimension moment-matching map so that mapped
/// source sizes reproduce the target's mean and standard deviation.
pub fn fit_size_map(
    source: &[crate::ingest::BoxLabel],
    target: &[crate::ingest::BoxLabel],
) -> SizeMap {
    let classes: std::collections::BTreeSet<ObjectClass> = source
        .iter()
        .map(|l| l.class_name)
        .filter(|c| target.iter().any(|t| t.class_name == *c))
        .collect();
    let mut map = SizeMap::default();
    for class in classes {
        let pick = |labels: &[crate::ingest::BoxLabel], dim: usize| -> Vec<f64> {
            labels
                .iter()
                .filter(|l| l.class_name == class)
                .map(|l| match dim {
                    0 => l.size.0,
                    1 => l.size.1,
                    _ => l.size.2,
                })
                .collect()
        };
        let mut dims = [(1.0, 0.0); 3];
        for (d, slot) in dims.iter_mut().enumerate() {
            let s = pick(source, d);
            let t = pick(target, d);
            let stats = |v: &[f64]| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
                (mean, var.sqrt())
            };
            let (ms, ss) = stats(&s);
            let (mt, st) = stats(&t);
            let a = if ss > 1e-12 { st / ss } else { 1.0 };
            let b = mt - a * ms;
            *slot = (a, b);
        }
        map.per_class.insert(class, dims);
    }
    map
}

/// Closest same-class asset in (length, width, height) Euclidean
/// distance; exact ties break toward the lexicographically smaller id.
pub fn match_asset<'a>(
    library: &'a [Asset],
    class_name: ObjectClass,
    size: (f64, f64, f64),
) -> Result<&'a Asset> {
    let mut best: Option<(&Asset, f64)> = None;
    for asset in library.iter().filter(|a| a.class_name == class_name) {
        let d = ((asset.size.0 - size.0).powi(2)
            + (asset.size.1 - size.1).powi(2)
            + (asset.size.2 - size.2).powi(2))
        .sqrt();
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && asset.asset_id < b.asset_id),
        };
        if better {
            best = Some((asset, d));
        }
    }
    best.map(|(a, _)| a).ok_or_else(|| {
        let available: std::collections::BTreeSet<&str> =
            library.iter().map(|a| a.class_name.name()).collect();
        Error::NotFound(format!(
            "no {class_name} assets in library (available classes: {})",
            available.into_iter().collect::<Vec<_>>().join(", ")
        ))
    })
}

/// One object placed in a frame.
#[derive(Debug, Clone)]
pub struct Placement {
    pub object_id: String,
    pub class_name: ObjectClass,
    pub asset_id: String,
    /// World pose of the object.
    pub pose: Pose6D,
    /// Size after the size map, meters.
    pub size: (f64, f64, f64),
    pub mesh: TriangleMesh,
    /// Declared size of the source asset (scaling reference).
    pub asset_size: (f64, f64, f64),
}

/// Merge scaled, posed asset meshes with the background. Vertex and
/// triangle counts add up exactly.
pub fn compose_frame(background: &TriangleMesh, placements: &[Placement]) -> Result<TriangleMesh> {
    let mut out = background.clone();
    for p in placements {
        let scale = Vec3::new(
            p.size.0 / p.asset_size.0,
            p.size.1 / p.asset_size.1,
            p.size.2 / p.asset_size.2,
        );
        let transform = pose_to_transform(&p.pose)?;
        let mut mesh = p.mesh.clone();
        for v in &mut mesh.vertices {
            let scaled = Vec3::new(v.x * scale.x, v.y * scale.y, v.z * scale.z);
            *v = transform.apply(scaled);
        }
        out.merge(&mesh);
    }
    Ok(out)
}

/// Serialize placements as target-style label lines in the sensor frame:
/// `class length width height cx cy cz yaw`, six decimals, ordered by
/// object id. Always starts with a header comment.
pub fn export_labels(placements: &[Placement], sensor_pose: &Pose6D) -> Result<String> {
    let world_to_sensor = pose_to_transform(sensor_pose)?.inverse();
    let mut rows: Vec<(&Placement, Pose6D)> = Vec::with_capacity(placements.len());
    for p in placements {
        let in_sensor = compose(&world_to_sensor, &pose_to_transform(&p.pose)?);
        rows.push((p, transform_to_pose(&in_sensor)));
    }
    rows.sort_by(|a, b| a.0.object_id.cmp(&b.0.object_id));

    let mut out = String::from("# class length width height cx cy cz yaw\n");
    for (p, pose) in rows {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            p.class_name, p.size.0, p.size.1, p.size.2, pose.x, pose.y, pose.z, pose.yaw
        ));
    }
    Ok(out)
}

/// Built-in primitive assets so the pipeline runs without model files:
/// a few box variants per class, ground-contact posed.
pub fn builtin_library() -> Vec<Asset> {
    let mut lib = Vec::new();
    let mut add = |id: &str, class: ObjectClass, l: f64, w: f64, h: f64| {
        lib.push(Asset {
            asset_id: id.to_string(),
            class_name: class,
            size: (l, w, h),
            mesh: box_mesh(l, w, h),
        });
    };
    add("box-car-compact", ObjectClass::Vehicle, 4.2, 1.8, 1.5);
    add("box-car-sedan", ObjectClass::Vehicle, 4.8, 1.9, 1.6);
    add("box-car-suv", ObjectClass::Vehicle, 5.1, 2.0, 1.9);
    add("box-truck", ObjectClass::Vehicle, 7.5, 2.5, 3.2);
    add("box-pedestrian-adult", ObjectClass::Pedestrian, 0.6, 0.6, 1.75);
    add("box-pedestrian-child", ObjectClass::Pedestrian, 0.5, 0.5, 1.2);
    add("box-cyclist", ObjectClass::Cyclist, 1.8, 0.6, 1.7);
    add("box-other", ObjectClass::Other, 1.0, 1.0, 1.0);
    lib
}

/// Parse an asset manifest: `asset <id> <class> <l> <w> <h> <mesh.ply>`
/// per line, paths relative to the manifest.
pub fn load_asset_manifest(path: impl AsRef<Path>) -> Result<Vec<Asset>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut assets = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 7 || tok[0] != "asset" {
            return Err(Error::parse(
                path,
                line_no,
                "expected: asset <id> <class> <l> <w> <h> <mesh.ply>",
            ));
        }
        let class = ObjectClass::parse(tok[1 + 1])
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let nums: Vec<f64> = tok[3..6]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, line_no, "bad size field"))?;
        let mesh_path: PathBuf = dir.join(tok[6]);
        let mesh = match read_ply(&mesh_path)? {
            PlyContent::Mesh(m) => m,
            PlyContent::Cloud(_) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("{} is a point cloud, not a mesh", mesh_path.display()),
                ))
            }
        };
        let asset = Asset {
            asset_id: tok[1].to_string(),
            class_name: class,
            size: (nums[0], nums[1], nums[2]),
            mesh,
        };
        asset
            .validate()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        assets.push(asset);
    }
    Ok(assets)
}

/// Parse an ego track file: `t x y z roll yaw pitch` per line.
pub fn load_ego_track(path: impl AsRef<Path>) -> Result<EgoTrack> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut track = EgoTrack::default();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, no + 1, "expected: t x y z roll yaw pitch"))?;
        if vals.len() != 7 {
            return Err(Error::parse(path, no + 1, "expected 7 fields"));
        }
        track.poses.insert(
            vals[0] as usize,
            Pose6D::new(vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]),
        );
    }
    track.validate()?;
    Ok(track)
}

/// Parse object tracks: `object <id> <class> <l> <w> <h>` headers
/// followed by `t x y z roll yaw pitch` pose lines.
pub fn load_object_tracks(path: impl AsRef<Path>) -> Result<Vec<TrackedObject>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut tracks: Vec<TrackedObject> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok[0] == "object" {
            if tok.len() != 6 {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected: object <id> <class> <l> <w> <h>",
                ));
            }
            let class = ObjectClass::parse(tok[2])
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            let nums: Vec<f64> = tok[3..6]
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line_no, "bad size field"))?;
            tracks.push(TrackedObject {
                object_id: tok[1].to_string(),
                class_name: class,
                size: (nums[0], nums[1], nums[2]),
                relative_poses: BTreeMap::new(),
            });
        } else {
            let track = tracks
                .last_mut()
                .ok_or_else(|| Error::parse(path, line_no, "pose line before any object line"))?;
            let vals: Vec<f64> = tok
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line_no, "expected: t x y z roll yaw pitch"))?;
            if vals.len() != 7 {
                return Err(Error::parse(path, line_no, "expected 7 fields"));
            }
            track.relative_poses.insert(
                vals[0] as usize,
                Pose6D::new(vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]),
            );
        }
    }
    for t in &tracks {
        t.validate()?;
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LabelFrame;
    use rand::{Rng, SeedableRng};

    fn ego(poses: &[(usize, Pose6D)]) -> EgoTrack {
        EgoTrack {
            poses: poses.iter().cloned().collect(),
        }
    }

    #[test]
    fn ego_delta_at_frame_zero_is_zero() {
        let track = ego(&[(0, Pose6D::new(5.0, 2.0, 0.0, 0.1, 0.2, 0.0))]);
        let p = ego_pose_at(&track, 0).unwrap();
        assert_eq!(p, Pose6D::identity());
    }

    #[test]
    fn ego_delta_componentwise() {
        let track = ego(&[
            (0, Pose6D::new(1.0, 2.0, 0.0, 0.0, 0.1, 0.0)),
            (5, Pose6D::new(4.0, 6.0, 0.0, 0.0, 0.4, 0.0)),
        ]);
        let p = ego_pose_at(&track, 5).unwrap();
        assert!((p.x - 3.0).abs() < 1e-12);
        assert!((p.y - 4.0).abs() < 1e-12);
        assert!((p.yaw - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ego_delta_wraps_angles() {
        let track = ego(&[
            (0, Pose6D::new(0.0, 0.0, 0.0, 0.0, 3.0, 0.0)),
            (1, Pose6D::new(0.0, 0.0, 0.0, 0.0, -3.0, 0.0)),
        ]);
        let p = ego_pose_at(&track, 1).unwrap();
        let expect = 2.0 * std::f64::consts::PI - 6.0;
        assert!((p.yaw - expect).abs() < 1e-9, "yaw {}", p.yaw);
    }

    #[test]
    fn missing_frame_is_not_found() {
        let track = ego(&[(0, Pose6D::identity())]);
        assert!(matches!(ego_pose_at(&track, 3), Err(Error::NotFound(_))));
    }

    fn object(id: &str, poses: &[(usize, Pose6D)]) -> TrackedObject {
        TrackedObject {
            object_id: id.into(),
            class_name: ObjectClass::Vehicle,
            size: (4.5, 1.9, 1.6),
            relative_poses: poses.iter().cloned().collect(),
        }
    }

    #[test]
    fn stationary_ego_returns_relative_pose() {
        let track = ego(&[(0, Pose6D::identity()), (1, Pose6D::identity())]);
        let rel = Pose6D::new(10.0, -3.0, 0.0, 0.0, 0.7, 0.0);
        let obj = object("a", &[(1, rel)]);
        assert_eq!(target_pose_at(&obj, &track, 1).unwrap(), rel);
    }

    #[test]
    fn target_pose_componentwise_sum() {
        let track = ego(&[
            (0, Pose6D::identity()),
            (2, Pose6D::new(3.0, 4.0, 0.0, 0.0, 0.3, 0.0)),
        ]);
        let obj = object("a", &[(2, Pose6D::new(10.0, 0.0, 0.0, 0.0, 0.0, 0.0))]);
        let p = target_pose_at(&obj, &track, 2).unwrap();
        assert!((p.x - 13.0).abs() < 1e-12);
        assert!((p.y - 4.0).abs() < 1e-12);
        assert!((p.yaw - 0.3).abs() < 1e-12);
    }

    #[test]
    fn random_tracks_match_scalar_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut ego_poses = Vec::new();
        let mut obj_poses = Vec::new();
        for t in 0..50 {
            ego_poses.push((
                t,
                Pose6D::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.5..1.5),
                ),
            ));
            obj_poses.push((
                t,
                Pose6D::new(
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-30.0..30.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.5..1.5),
                ),
            ));
        }
        let track = ego(&ego_poses);
        let obj = object("a", &obj_poses);
        for t in 0..50 {
            let got = target_pose_at(&obj, &track, t).unwrap();
            // Independent scalar recomputation.
            let l0 = track.poses[&0];
            let lt = track.poses[&t];
            let rel = obj.relative_poses[&t];
            assert_eq!(got.x, rel.x + (lt.x - l0.x));
            assert_eq!(got.y, rel.y + (lt.y - l0.y));
            assert_eq!(got.z, rel.z + (lt.z - l0.z));
            assert_eq!(got.yaw, wrap_angle(rel.yaw + wrap_angle(lt.yaw - l0.yaw)));
            assert_eq!(got.roll, wrap_angle(rel.roll + wrap_angle(lt.roll - l0.roll)));
            assert_eq!(
                got.pitch,
                wrap_angle(rel.pitch + wrap_angle(lt.pitch - l0.pitch))
            );
        }
    }

    #[test]
    fn pose_round_trip_recovers_world_pose() {
        let track = ego(&[
            (0, Pose6D::new(1.0, 1.0, 0.0, 0.0, 0.5, 0.0)),
            (3, Pose6D::new(7.0, -2.0, 0.0, 0.0, 1.5, 0.0)),
        ]);
        let want = Pose6D::new(12.0, 3.0, 0.5, 0.1, -2.0, 0.2);
        let delta = ego_pose_at(&track, 3).unwrap();
        let rel = pose_sub(&want, &delta);
        let obj = object("a", &[(3, rel)]);
        let got = target_pose_at(&obj, &track, 3).unwrap();
        assert!((got.x - want.x).abs() < 1e-12);
        assert!((got.yaw - want.yaw).abs() < 1e-12);
    }

    #[test]
    fn identity_size_map_is_noop() {
        let mut map = SizeMap::default();
        map.per_class
            .insert(ObjectClass::Vehicle, [(1.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let s = map_size((4.0, 1.8, 1.5), ObjectClass::Vehicle, &map);
        assert_eq!(s, (4.0, 1.8, 1.5));
        // Missing class passes through.
        let s2 = map_size((0.6, 0.6, 1.8), ObjectClass::Pedestrian, &map);
        assert_eq!(s2, (0.6, 0.6, 1.8));
    }

    #[test]
    fn affine_size_map_arithmetic() {
        let mut map = SizeMap::default();
        map.per_class
            .insert(ObjectClass::Vehicle, [(1.1, 0.2), (1.0, 0.0), (1.0, 0.0)]);
        let s = map_size((4.0, 1.8, 1.5), ObjectClass::Vehicle, &map);
        assert!((s.0 - 4.6).abs() < 1e-12);
    }

    #[test]
    fn fitted_map_reproduces_target_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let label = |size: (f64, f64, f64)| crate::ingest::BoxLabel {
            class_name: ObjectClass::Vehicle,
            center: Vec3::ZERO,
            size,
            yaw: 0.0,
            frame_index: 0,
            is_dynamic: false,
            coordinate_frame: LabelFrame::World,
        };
        let source: Vec<_> = (0..500)
            .map(|_| {
                label((
                    rng.random_range(3.5..5.0),
                    rng.random_range(1.6..2.0),
                    rng.random_range(1.4..1.8),
                ))
            })
            .collect();
        // Target = affine-shifted source statistics.
        let target: Vec<_> = source
            .iter()
            .map(|l| label((1.2 * l.size.0 - 0.5, 0.9 * l.size.1 + 0.1, l.size.2)))
            .collect();
        let map = fit_size_map(&source, &target);
        let mapped: Vec<_> = source
            .iter()
            .map(|l| map_size(l.size, ObjectClass::Vehicle, &map))
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let std = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let got_l: Vec<f64> = mapped.iter().map(|s| s.0).collect();
        let want_l: Vec<f64> = target.iter().map(|l| l.size.0).collect();
        let (gm, wm) = (mean(&got_l), mean(&want_l));
        assert!((gm - wm).abs() < 1e-6);
        assert!((std(&got_l, gm) - std(&want_l, wm)).abs() < 1e-6);
    }

    #[test]
    fn asset_matching_distance_and_ties() {
        let lib = vec![
            Asset {
                asset_id: "a-small".into(),
                class_name: ObjectClass::Vehicle,
                size: (4.2, 1.8, 1.5),
                mesh: box_mesh(4.2, 1.8, 1.5),
            },
            Asset {
                asset_id: "b-large".into(),
                class_name: ObjectClass::Vehicle,
                size: (5.2, 2.0, 1.9),
                mesh: box_mesh(5.2, 2.0, 1.9),
            },
        ];
        // Exact match wins outright.
        let exact = match_asset(&lib, ObjectClass::Vehicle, (5.2, 2.0, 1.9)).unwrap();
        assert_eq!(exact.asset_id, "b-large");
        // Distance arithmetic: (4.5,1.9,1.6) is 0.331 from the first and
        // 0.762 from the second.
        let near = match_asset(&lib, ObjectClass::Vehicle, (4.5, 1.9, 1.6)).unwrap();
        assert_eq!(near.asset_id, "a-small");
        // Missing class reports what exists.
        match match_asset(&lib, ObjectClass::Pedestrian, (0.6, 0.6, 1.8)) {
            Err(Error::NotFound(msg)) => assert!(msg.contains("Vehicle")),
            other => panic!("expected not-found, got {other:?}"),
        }
    }

    #[test]
    fn equidistant_assets_break_by_id() {
        let lib = vec![
            Asset {
                asset_id: "zeta".into(),
                class_name: ObjectClass::Vehicle,
                size: (4.0, 2.0, 1.5),
                mesh: box_mesh(4.0, 2.0, 1.5),
            },
            Asset {
                asset_id: "alpha".into(),
                class_name: ObjectClass::Vehicle,
                size: (5.0, 2.0, 1.5),
                mesh: box_mesh(5.0, 2.0, 1.5),
            },
        ];
        let got = match_asset(&lib, ObjectClass::Vehicle, (4.5, 2.0, 1.5)).unwrap();
        assert_eq!(got.asset_id, "alpha");
    }

    fn unit_cube_placement(id: &str, pose: Pose6D) -> Placement {
        Placement {
            object_id: id.into(),
            class_name: ObjectClass::Vehicle,
            asset_id: "cube".into(),
            pose,
            size: (1.0, 1.0, 1.0),
            mesh: box_mesh(1.0, 1.0, 1.0),
            asset_size: (1.0, 1.0, 1.0),
        }
    }

    #[test]
    fn compose_frame_counts_and_offsets() {
        let bg = box_mesh(20.0, 20.0, 0.1);
        let out = compose_frame(&bg, &[]).unwrap();
        assert_eq!(out.vertices.len(), bg.vertices.len());

        let p = unit_cube_placement("a", Pose6D::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let out = compose_frame(&bg, &[p.clone()]).unwrap();
        assert_eq!(out.vertices.len(), bg.vertices.len() + 8);
        assert_eq!(out.triangles.len(), bg.triangles.len() + 12);
        // The 8 appended vertices are the unit cube offset by (1,0,0).
        for (v, orig) in out.vertices[bg.vertices.len()..].iter().zip(&p.mesh.vertices) {
            assert!((*v - (*orig + Vec3::new(1.0, 0.0, 0.0))).norm() < 1e-12);
        }
        out.validate().unwrap();
    }

    #[test]
    fn compose_frame_scales_per_axis() {
        let bg = TriangleMesh::default();
        let mut p = unit_cube_placement("a", Pose6D::identity());
        p.size = (2.0, 3.0, 4.0);
        let out = compose_frame(&bg, &[p]).unwrap();
        let (lo, hi) = out.bounds().unwrap();
        assert!((hi.x - lo.x - 2.0).abs() < 1e-12);
        assert!((hi.y - lo.y - 3.0).abs() < 1e-12);
        assert!((hi.z - lo.z - 4.0).abs() < 1e-12);
    }

    #[test]
    fn labels_in_sensor_frame() {
        let p = unit_cube_placement("obj-1", Pose6D::new(10.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        // Sensor yawed 90 degrees: a point 10 m ahead in world lands at
        // (0, -10) in the sensor frame.
        let sensor = Pose6D::new(0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let text = export_labels(&[p], &sensor).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split_whitespace().collect();
        let cx: f64 = fields[4].parse().unwrap();
        let cy: f64 = fields[5].parse().unwrap();
        assert!(cx.abs() < 1e-6, "cx {cx}");
        assert!((cy + 10.0).abs() < 1e-6, "cy {cy}");
    }

    #[test]
    fn labels_empty_and_deterministic() {
        let empty = export_labels(&[], &Pose6D::identity()).unwrap();
        assert!(empty.starts_with('#'));
        assert_eq!(empty.lines().count(), 1);

        let a = unit_cube_placement("b", Pose6D::new(1.0, 2.0, 0.0, 0.0, 0.3, 0.0));
        let b = unit_cube_placement("a", Pose6D::new(-1.0, 4.0, 0.0, 0.0, -0.3, 0.0));
        let t1 = export_labels(&[a.clone(), b.clone()], &Pose6D::identity()).unwrap();
        let t2 = export_labels(&[b, a], &Pose6D::identity()).unwrap();
        assert_eq!(t1, t2);
        // Ordered by object id.
        assert!(t1.lines().nth(1).unwrap().starts_with("Vehicle"));
    }

    #[test]
    fn builtin_assets_validate() {
        for asset in builtin_library() {
            asset.validate().unwrap();
        }
    }

    #[test]
    fn track_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ego_path = dir.path().join("ego.txt");
        std::fs::write(&ego_path, "# ego\n0 0 0 0 0 0 0\n1 1.0 0 0 0 0.1 0\n").unwrap();
        let track = load_ego_track(&ego_path).unwrap();
        assert_eq!(track.poses.len(), 2);

        let obj_path = dir.path().join("objects.txt");
        std::fs::write(
            &obj_path,
            "object car-1 Vehicle 4.5 1.9 1.6\n0 10 0 0 0 0 0\n1 11 0 0 0 0 0\nobject ped-1 Pedestrian 0.6 0.6 1.8\n0 -3 2 0 0 0 0\n",
        )
        .unwrap();
        let objs = load_object_tracks(&obj_path).unwrap();
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0].relative_poses.len(), 2);
        assert_eq!(objs[1].class_name, ObjectClass::Pedestrian);
    }

    #[test]
    fn gappy_track_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let obj_path = dir.path().join("objects.txt");
        std::fs::write(
            &obj_path,
            "object car-1 Vehicle 4.5 1.9 1.6\n0 10 0 0 0 0 0\n2 12 0 0 0 0 0\n",
        )
        .unwrap();
        assert!(load_object_tracks(&obj_path).is_err());
    }

    #[test]
    fn rigid_mode_agrees_under_pure_translation() {
        let track = ego(&[
            (0, Pose6D::new(1.0, 2.0, 0.0, 0.0, 0.0, 0.0)),
            (1, Pose6D::new(4.0, 2.0, 0.0, 0.0, 0.0, 0.0)),
        ]);
        let obj = object("a", &[(1, Pose6D::new(10.0, 5.0, 0.0, 0.0, 0.4, 0.0))]);
        let a = target_pose_at(&obj, &track, 1).unwrap();
        let b = target_pose_at_rigid(&obj, &track, 1).unwrap();
        assert!((a.x - b.x).abs() < 1e-12);
        assert!((a.y - b.y).abs() < 1e-12);
        assert!((a.yaw - b.yaw).abs() < 1e-12);
    }
}
