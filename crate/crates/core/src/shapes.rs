//! Parameterized mesh primitives: analytic scenes for closed-loop tests
//! and the built-in replay asset shapes.

use crate::geometry::{TriangleMesh, Vec3};

/// Axis-aligned box of the given size, centered in x/y, resting on z = 0
/// (ground-contact origin).
pub fn box_mesh(length: f64, width: f64, height: f64) -> TriangleMesh {
    let (hl, hw) = (length / 2.0, width / 2.0);
    let v = vec![
        Vec3::new(-hl, -hw, 0.0),
        Vec3::new(hl, -hw, 0.0),
        Vec3::new(hl, hw, 0.0),
        Vec3::new(-hl, hw, 0.0),
        Vec3::new(-hl, -hw, height),
        Vec3::new(hl, -hw, height),
        Vec3::new(hl, hw, height),
        Vec3::new(-hl, hw, height),
    ];
    // Outward-facing windings.
    let t = vec![
        [0, 2, 1],
        [0, 3, 2], // bottom (-z)
        [4, 5, 6],
        [4, 6, 7], // top (+z)
        [0, 1, 5],
        [0, 5, 4], // -y
        [2, 3, 7],
        [2, 7, 6], // +y
        [1, 2, 6],
        [1, 6, 5], // +x
        [3, 0, 4],
        [3, 4, 7], // -x
    ];
    TriangleMesh {
        vertices: v,
        triangles: t,
    }
}

/// Latitude/longitude sphere.
pub fn sphere_mesh(center: Vec3, radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    let rings = rings.max(3);
    let segments = segments.max(3);
    let mut vertices = Vec::with_capacity((rings - 1) * segments + 2);
    vertices.push(center + Vec3::new(0.0, 0.0, radius)); // north pole
    for r in 1..rings {
        let polar = std::f64::consts::PI * r as f64 / rings as f64;
        let (sp, cp) = polar.sin_cos();
        for s in 0..segments {
            let az = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(
                center + Vec3::new(radius * sp * az.cos(), radius * sp * az.sin(), radius * cp),
            );
        }
    }
    let south = vertices.len() as u32;
    vertices.push(center + Vec3::new(0.0, 0.0, -radius));

    let mut triangles = Vec::new();
    let ring_start = |r: usize| 1 + (r - 1) * segments;
    for s in 0..segments {
        let next = (s + 1) % segments;
        triangles.push([0, (ring_start(1) + s) as u32, (ring_start(1) + next) as u32]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let next = (s + 1) % segments;
            let (a, b) = ((ring_start(r) + s) as u32, (ring_start(r) + next) as u32);
            let (c, d) = ((ring_start(r + 1) + s) as u32, (ring_start(r + 1) + next) as u32);
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    let last = rings - 1;
    for s in 0..segments {
        let next = (s + 1) % segments;
        triangles.push([
            south,
            (ring_start(last) + next) as u32,
            (ring_start(last) + s) as u32,
        ]);
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Rectangular patch of the z = `z` plane, triangulated on a grid so the
/// BVH can split it.
pub fn plane_mesh(x_half: f64, y_half: f64, z: f64, subdivisions: usize) -> TriangleMesh {
    let n = subdivisions.max(1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec3::new(
                -x_half + 2.0 * x_half * i as f64 / n as f64,
                -y_half + 2.0 * y_half * j as f64 / n as f64,
                z,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    let at = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    for j in 0..n {
        for i in 0..n {
            triangles.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}
