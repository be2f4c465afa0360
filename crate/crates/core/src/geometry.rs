//! Foundational geometric types and rigid-motion math.
//!
//! Coordinate convention throughout the crate: right-handed, x-forward,
//! y-left, z-up; yaw rotates about +z. Euler angles compose intrinsically
//! as Z-Y-X (yaw, then pitch, then roll). Pose replay depends on this
//! order, so it is fixed here and nowhere else.

use crate::error::{Error, Result};

/// 3D vector / point, in meters (unitless when used as a direction).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const UNIT_NORM_TOL: f64 = 1e-9;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Normalized copy, or `None` for a (near-)zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-15 {
            None
        } else {
            Some(self / n)
        }
    }

    #[inline]
    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn min_by_component(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max_by_component(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    #[inline]
    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wrap an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    // In-range values pass through untouched so repeated wrapping of
    // pose arithmetic never erodes precision.
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi); // [0, 2*pi)
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// 6D pose: translation in meters, angles in radians wrapped to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub yaw: f64,
    pub pitch: f64,
}

impl Pose6D {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, yaw: f64, pitch: f64) -> Self {
        Pose6D {
            x,
            y,
            z,
            roll: wrap_angle(roll),
            yaw: wrap_angle(yaw),
            pitch: wrap_angle(pitch),
        }
    }

    pub fn identity() -> Self {
        Pose6D::default()
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.roll, self.yaw, self.pitch]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat3 { m: r }
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let rrt = self.mul_mat(&self.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rrt.m[i][j] - expect).abs() > tol {
                    return false;
                }
            }
        }
        (self.det() - 1.0).abs() <= tol
    }

    pub fn rot_x(a: f64) -> Mat3 {
        let (s, c) = a.sin_cos();
        Mat3 {
            m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    pub fn rot_y(a: f64) -> Mat3 {
        let (s, c) = a.sin_cos();
        Mat3 {
            m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    pub fn rot_z(a: f64) -> Mat3 {
        let (s, c) = a.sin_cos();
        Mat3 {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }
}

/// Rigid motion: `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::IDENTITY,
            translation: Vec3::ZERO,
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Rotate a free vector (ignores translation).
    #[inline]
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }
}

/// Build the rigid transform realizing a 6D pose.
///
/// Rotation is intrinsic Z-Y-X: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn pose_to_transform(pose: &Pose6D) -> Result<RigidTransform> {
    if !pose.is_finite() {
        return Err(Error::invalid("pose components must be finite"));
    }
    let rotation = Mat3::rot_z(pose.yaw)
        .mul_mat(&Mat3::rot_y(pose.pitch))
        .mul_mat(&Mat3::rot_x(pose.roll));
    Ok(RigidTransform {
        rotation,
        translation: pose.translation(),
    })
}

/// Recover the Z-Y-X Euler pose of a rigid transform.
///
/// At the pitch singularity (|pitch| = pi/2) roll is fixed to zero and yaw
/// absorbs the remaining rotation.
pub fn transform_to_pose(t: &RigidTransform) -> Pose6D {
    let m = &t.rotation.m;
    let sin_pitch = (-m[2][0]).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let (roll, yaw) = if sin_pitch.abs() > 1.0 - 1e-12 {
        (0.0, (-m[0][1]).atan2(m[1][1]))
    } else {
        (m[2][1].atan2(m[2][2]), m[1][0].atan2(m[0][0]))
    };
    Pose6D::new(t.translation.x, t.translation.y, t.translation.z, roll, yaw, pitch)
}

/// `compose(a, b)` applies `b` first: `(a o b)(p) = a(b(p))`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation.mul_mat(&b.rotation),
        translation: a.rotation.mul_vec(b.translation) + a.translation,
    }
}

/// Which LiDAR a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Top,
    Side,
}

impl PointSource {
    pub fn as_u8(self) -> u8 {
        match self {
            PointSource::Top => 0,
            PointSource::Side => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(PointSource::Top),
            1 => Ok(PointSource::Side),
            other => Err(Error::invalid(format!("unknown point source tag {other}"))),
        }
    }
}

/// Point cloud with optional per-point attributes.
///
/// Every attribute array present must have the same length as `points`;
/// [`PointCloud::validate`] checks this.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub intensity: Option<Vec<f32>>,
    pub beam_id: Option<Vec<i32>>,
    pub range: Option<Vec<f64>>,
    /// Azimuth step angle in radians; written by the simulator so scans can
    /// be re-paired ray-by-ray after a PLY round trip.
    pub azimuth: Option<Vec<f64>>,
    pub source: Option<Vec<PointSource>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let check = |len: Option<usize>, name: &str| -> Result<()> {
            match len {
                Some(l) if l != n => Err(Error::invalid(format!(
                    "attribute {name} has {l} entries for {n} points"
                ))),
                _ => Ok(()),
            }
        };
        check(self.intensity.as_ref().map(Vec::len), "intensity")?;
        check(self.beam_id.as_ref().map(Vec::len), "beam_id")?;
        check(self.range.as_ref().map(Vec::len), "range")?;
        check(self.azimuth.as_ref().map(Vec::len), "azimuth")?;
        check(self.source.as_ref().map(Vec::len), "source")?;
        Ok(())
    }

    /// Keep only the points at indices where `keep` is true, preserving
    /// every attribute present.
    pub fn filtered(&self, keep: &[bool]) -> PointCloud {
        assert_eq!(keep.len(), self.points.len());
        fn pick<T: Clone>(v: &Option<Vec<T>>, keep: &[bool]) -> Option<Vec<T>> {
            v.as_ref().map(|v| {
                v.iter()
                    .zip(keep)
                    .filter(|(_, &k)| k)
                    .map(|(x, _)| x.clone())
                    .collect()
            })
        }
        PointCloud {
            points: self
                .points
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(p, _)| *p)
                .collect(),
            intensity: pick(&self.intensity, keep),
            beam_id: pick(&self.beam_id, keep),
            range: pick(&self.range, keep),
            azimuth: pick(&self.azimuth, keep),
            source: pick(&self.source, keep),
        }
    }

    /// Transform every point; attributes are carried through unchanged.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = t.apply(*p);
        }
        out
    }

    /// Append another cloud. An attribute survives only if both sides carry
    /// it (or the receiving side is empty).
    pub fn extend(&mut self, other: &PointCloud) {
        fn merge<T: Clone>(
            a: &mut Option<Vec<T>>,
            b: &Option<Vec<T>>,
            self_empty: bool,
            other_len: usize,
        ) {
            match (a.as_mut(), b) {
                (Some(av), Some(bv)) => av.extend(bv.iter().cloned()),
                (None, Some(bv)) if self_empty => *a = Some(bv.clone()),
                (Some(_), None) if other_len > 0 => *a = None,
                _ => {}
            }
        }
        let was_empty = self.points.is_empty();
        let other_len = other.points.len();
        merge(&mut self.intensity, &other.intensity, was_empty, other_len);
        merge(&mut self.beam_id, &other.beam_id, was_empty, other_len);
        merge(&mut self.range, &other.range, was_empty, other_len);
        merge(&mut self.azimuth, &other.azimuth, was_empty, other_len);
        merge(&mut self.source, &other.source, was_empty, other_len);
        self.points.extend_from_slice(&other.points);
    }

    /// Axis-aligned bounds, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.points.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for &p in it {
            lo = lo.min_by_component(p);
            hi = hi.max_by_component(p);
        }
        Some((lo, hi))
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!(
                    "triangle {i} references vertex out of range (vertex count {n})"
                )));
            }
        }
        Ok(())
    }

    pub fn triangle_vertices(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(i);
        (b - a).cross(c - a).norm() * 0.5
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for &v in it {
            lo = lo.min_by_component(v);
            hi = hi.max_by_component(v);
        }
        Some((lo, hi))
    }

    /// Concatenate `other` onto this mesh, remapping its indices.
    pub fn merge(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
}
