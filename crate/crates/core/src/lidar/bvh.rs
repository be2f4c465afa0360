//! Median-split bounding volume hierarchy for ray-mesh intersection.

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

/// Barycentric epsilon for the triangle test; hits this close to an edge
/// still count, so shared edges never leak rays.
const BARY_EPS: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range into `triangle_order`. Inner: child node indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

/// Immutable acceleration structure over one mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    triangle_order: Vec<u32>,
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle: usize,
}

/// Möller-Trumbore intersection; returns the ray parameter of the hit.
pub fn ray_triangle_intersect(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let ab = b - a;
    let ac = c - a;
    let pvec = dir.cross(ac);
    let det = ab.dot(pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(pvec) * inv_det;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(ab);
    let v = dir.dot(qvec) * inv_det;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = ac.dot(qvec) * inv_det;
    (t > 1e-12).then_some(t)
}

fn triangle_bounds(mesh: &TriangleMesh, i: usize) -> (Vec3, Vec3) {
    let [a, b, c] = mesh.triangle_vertices(i);
    (
        a.min_by_component(b).min_by_component(c),
        a.max_by_component(b).max_by_component(c),
    )
}

/// Slab test returning the entry distance, or None when the ray misses
/// the box or the box lies entirely beyond `t_max`.
fn ray_aabb(origin: Vec3, inv_dir: Vec3, lo: Vec3, hi: Vec3, t_max: f64) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for axis in 0..3 {
        let (o, inv, l, h) = (
            origin.component(axis),
            inv_dir.component(axis),
            lo.component(axis),
            hi.component(axis),
        );
        let (mut near, mut far) = ((l - o) * inv, (h - o) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

impl Bvh {
    /// Median-split build over triangle centroids.
    pub fn build(mesh: TriangleMesh) -> Result<Bvh> {
        mesh.validate()?;
        if mesh.triangles.is_empty() {
            return Err(Error::invalid("cannot build a BVH over an empty mesh"));
        }
        let n = mesh.triangles.len();
        let centroids: Vec<Vec3> = (0..n)
            .map(|i| {
                let [a, b, c] = mesh.triangle_vertices(i);
                (a + b + c) / 3.0
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        build_node(&mesh, &centroids, &mut order, 0, n, &mut nodes);
        Ok(Bvh {
            mesh,
            nodes,
            triangle_order: order,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Nearest hit within `t_max`. Exact distance ties break toward the
    /// lower triangle index.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let limit = best.map(|h| h.distance).unwrap_or(t_max);
            if ray_aabb(origin, inv_dir, node.lo, node.hi, limit).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &ti in &self.triangle_order[start..start + count] {
                        let [a, b, c] = self.mesh.triangle_vertices(ti as usize);
                        if let Some(t) = ray_triangle_intersect(origin, dir, a, b, c) {
                            if t <= t_max {
                                let better = match best {
                                    None => true,
                                    Some(h) => {
                                        t < h.distance
                                            || (t == h.distance && (ti as usize) < h.triangle)
                                    }
                                };
                                if better {
                                    best = Some(Hit {
                                        distance: t,
                                        triangle: ti as usize,
                                    });
                                }
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    // Visit the nearer child first for earlier pruning.
                    let dl = ray_aabb(origin, inv_dir, self.nodes[left].lo, self.nodes[left].hi, limit);
                    let dr =
                        ray_aabb(origin, inv_dir, self.nodes[right].lo, self.nodes[right].hi, limit);
                    match (dl, dr) {
                        (Some(a), Some(b)) if a <= b => {
                            stack.push(right);
                            stack.push(left);
                        }
                        (Some(_), Some(_)) => {
                            stack.push(left);
                            stack.push(right);
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slice = &order[start..start + count];
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &ti in slice {
        let (tlo, thi) = triangle_bounds(mesh, ti as usize);
        lo = lo.min_by_component(tlo);
        hi = hi.max_by_component(thi);
    }

    let index = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        kind: NodeKind::Leaf { start, count },
    });
    if count <= LEAF_SIZE {
        return index;
    }

    // Split on the widest centroid axis at the median triangle.
    let mut clo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut chi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &ti in &order[start..start + count] {
        let c = centroids[ti as usize];
        clo = clo.min_by_component(c);
        chi = chi.max_by_component(c);
    }
    let extent = chi - clo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize]
            .component(axis)
            .partial_cmp(&centroids[b as usize].component(axis))
            .unwrap()
            .then(a.cmp(&b))
    });

    let left = build_node(mesh, centroids, order, start, mid, nodes);
    let right = build_node(mesh, centroids, order, start + mid, count - mid, nodes);
    nodes[index].kind = NodeKind::Inner { left, right };
    index
}
