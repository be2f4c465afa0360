//! Marching-cubes isosurface extraction from an SDF grid.

use std::collections::HashMap;

use crate::error::Result;
use crate::geometry::{TriangleMesh, Vec3};
use crate::sdf::mc_tables::TRIANGLE_TABLE;
use crate::sdf::SdfGrid;

/// Corner offsets in table order.
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Edge -> (corner, corner) in table order.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Extract the `iso` level set as a welded triangle mesh.
///
/// Edge crossings are linearly interpolated; triangles are wound so that
/// normals point toward positive SDF (outward under the
/// positive-outside convention). A grid without any sign change yields an
/// empty mesh with a warning rather than an error.
pub fn extract_mesh(grid: &SdfGrid, iso: f64) -> Result<TriangleMesh> {
    grid.validate()?;
    let (nx, ny, nz) = grid.dims;

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Weld vertices through their canonical grid edge so shared cell
    // faces reuse crossings exactly.
    let mut edge_vertex: HashMap<(u32, u32), u32> = HashMap::new();

    let mut corner_idx = [0usize; 8];
    let mut corner_val = [0.0f64; 8];

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                for (c, &(dx, dy, dz)) in CORNERS.iter().enumerate() {
                    let idx = grid.node_index(x + dx, y + dy, z + dz);
                    corner_idx[c] = idx;
                    corner_val[c] = grid.values[idx];
                }
                let mut cube = 0usize;
                for (c, &v) in corner_val.iter().enumerate() {
                    if v < iso {
                        cube |= 1 << c;
                    }
                }
                if cube == 0 || cube == 255 {
                    continue;
                }

                let row = &TRIANGLE_TABLE[cube];
                let mut i = 0;
                while row[i] >= 0 {
                    let mut tri = [0u32; 3];
                    // Table order winds toward the negative side; reverse
                    // so normals face positive SDF (outward).
                    for (slot, &e) in tri.iter_mut().zip([row[i], row[i + 2], row[i + 1]].iter()) {
                        let (ca, cb) = EDGES[e as usize];
                        let (ia, ib) = (corner_idx[ca] as u32, corner_idx[cb] as u32);
                        let key = if ia < ib { (ia, ib) } else { (ib, ia) };
                        let next_id = vertices.len() as u32;
                        let id = *edge_vertex.entry(key).or_insert_with(|| {
                            let (va, vb) = (corner_val[ca], corner_val[cb]);
                            let denom = vb - va;
                            let t = if denom.abs() < 1e-300 {
                                0.5
                            } else {
                                ((iso - va) / denom).clamp(0.0, 1.0)
                            };
                            let (oa, ob) = (CORNERS[ca], CORNERS[cb]);
                            let pa = grid.node_position(x + oa.0, y + oa.1, z + oa.2);
                            let pb = grid.node_position(x + ob.0, y + ob.1, z + ob.2);
                            vertices.push(pa + t * (pb - pa));
                            next_id
                        });
                        *slot = id;
                    }
                    if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                        triangles.push(tri);
                    }
                    i += 3;
                }
            }
        }
    }

    if triangles.is_empty() {
        log::warn!("no iso-crossing at level {iso}; returning empty mesh");
        return Ok(TriangleMesh::default());
    }

    Ok(cleanup(vertices, triangles, grid.voxel_size))
}

/// Drop zero-area triangles and unreferenced vertices.
fn cleanup(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, voxel_size: f64) -> TriangleMesh {
    let area_floor = 1e-12 * voxel_size * voxel_size;
    let kept: Vec<[u32; 3]> = triangles
        .into_iter()
        .filter(|t| {
            let a = vertices[t[0] as usize];
            let b = vertices[t[1] as usize];
            let c = vertices[t[2] as usize];
            (b - a).cross(c - a).norm() * 0.5 > area_floor
        })
        .collect();

    let mut remap = vec![u32::MAX; vertices.len()];
    let mut out_vertices = Vec::new();
    let mut out_triangles = Vec::with_capacity(kept.len());
    for t in kept {
        let mut nt = [0u32; 3];
        for (slot, &v) in nt.iter_mut().zip(&t) {
            if remap[v as usize] == u32::MAX {
                remap[v as usize] = out_vertices.len() as u32;
                out_vertices.push(vertices[v as usize]);
            }
            *slot = remap[v as usize];
        }
        out_triangles.push(nt);
    }

    TriangleMesh {
        vertices: out_vertices,
        triangles: out_triangles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::GridSpec;

    fn sphere_grid(radius: f64, voxel: f64) -> SdfGrid {
        let half = radius + 5.0 * voxel;
        let spec = GridSpec::from_bounds(
            Vec3::new(-half, -half, -half),
            Vec3::new(half, half, half),
            voxel,
            0.0,
        )
        .unwrap();
        SdfGrid::from_fn(&spec, |p| p.norm() - radius).unwrap()
    }

    #[test]
    fn sphere_vertices_lie_near_radius() {
        let grid = sphere_grid(3.0, 0.1);
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        assert!(mesh.triangles.len() > 1000);
        for v in &mesh.vertices {
            let r = v.norm();
            assert!((2.8..=3.2).contains(&r), "vertex radius {r}");
        }
    }

    #[test]
    fn sphere_normals_point_outward() {
        let grid = sphere_grid(2.0, 0.2);
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        let mut outward = 0usize;
        for i in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle_vertices(i);
            let normal = (b - a).cross(c - a);
            let centroid = (a + b + c) / 3.0;
            if normal.dot(centroid) > 0.0 {
                outward += 1;
            }
        }
        assert_eq!(
            outward,
            mesh.triangles.len(),
            "{} of {} triangles point outward",
            outward,
            mesh.triangles.len()
        );
    }

    #[test]
    fn uniformly_positive_grid_gives_empty_mesh() {
        let spec = GridSpec {
            origin: Vec3::ZERO,
            voxel_size: 0.5,
            dims: (8, 8, 8),
        };
        let grid = SdfGrid::new(&spec, 1.0).unwrap();
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        assert!(mesh.vertices.is_empty() && mesh.triangles.is_empty());
    }

    #[test]
    fn plane_mesh_flat_and_area_close() {
        let spec = GridSpec {
            origin: Vec3::new(-5.0, -5.0, -1.05),
            voxel_size: 0.1,
            dims: (101, 101, 21),
        };
        let grid = SdfGrid::from_fn(&spec, |p| p.z).unwrap();
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        for v in &mesh.vertices {
            assert!(v.z.abs() <= grid.voxel_size, "vertex z {}", v.z);
        }
        let expected = 10.0 * 10.0;
        let area = mesh.area();
        assert!(
            (area - expected).abs() / expected < 0.05,
            "area {area} vs {expected}"
        );
    }

    #[test]
    fn vertices_sample_back_to_iso() {
        let grid = sphere_grid(1.5, 0.25);
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        for v in &mesh.vertices {
            assert!(grid.sample(*v).abs() < grid.voxel_size);
        }
    }

    #[test]
    fn no_degenerate_triangles_after_cleanup() {
        let grid = sphere_grid(1.0, 0.3);
        let mesh = extract_mesh(&grid, 0.0).unwrap();
        for i in 0..mesh.triangles.len() {
            assert!(mesh.triangle_area(i) > 0.0);
        }
        mesh.validate().unwrap();
    }

    #[test]
    fn nonzero_iso_shifts_the_surface() {
        let grid = sphere_grid(2.0, 0.1);
        let mesh = extract_mesh(&grid, 0.5).unwrap();
        for v in &mesh.vertices {
            let r = v.norm();
            assert!((2.3..=2.7).contains(&r), "vertex radius {r}");
        }
    }
}
