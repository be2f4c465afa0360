//! Balanced k-d tree over a point set for exact nearest-neighbor queries.

use crate::geometry::Vec3;

/// Nearest-neighbor index backing the Chamfer metric and the outlier
/// filter. Construction reorders a copy of the points into an implicit
/// median-split layout; queries are read-only and therefore freely
/// parallel.
#[derive(Debug, Clone)]
pub struct NearestNeighborIndex {
    points: Vec<Vec3>,
    original: Vec<u32>,
}

const LEAF_SIZE: usize = 8;

fn axis_for_depth(depth: usize) -> usize {
    depth % 3
}

impl NearestNeighborIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let mut idx = NearestNeighborIndex {
            points: points.to_vec(),
            original: (0..points.len() as u32).collect(),
        };
        if !idx.points.is_empty() {
            let n = idx.points.len();
            idx.build_range(0, n, 0);
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_range(&mut self, lo: usize, hi: usize, depth: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = axis_for_depth(depth);
        let mid = lo + (hi - lo) / 2;
        // Median split; ties broken by original index so the layout is
        // deterministic regardless of input order quirks.
        let (points, original) = (&mut self.points, &mut self.original);
        let mut perm: Vec<usize> = (lo..hi).collect();
        perm.select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a]
                .component(axis)
                .partial_cmp(&points[b].component(axis))
                .unwrap()
                .then(original[a].cmp(&original[b]))
        });
        apply_permutation(points, original, lo, &perm);
        self.build_range(lo, mid, depth + 1);
        self.build_range(mid + 1, hi, depth + 1);
    }

    /// Index (into the original point slice) and squared distance of the
    /// nearest neighbor of `q`.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, self.points.len(), 0, q, &mut best);
        Some((best.0, best.1))
    }

    fn nearest_in(&self, lo: usize, hi: usize, depth: usize, q: Vec3, best: &mut (usize, f64)) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                let d = (self.points[i] - q).norm_squared();
                if d < best.1 {
                    *best = (self.original[i] as usize, d);
                }
            }
            return;
        }
        let axis = axis_for_depth(depth);
        let mid = lo + (hi - lo) / 2;
        let d = (self.points[mid] - q).norm_squared();
        if d < best.1 {
            *best = (self.original[mid] as usize, d);
        }
        let delta = q.component(axis) - self.points[mid].component(axis);
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(near.0, near.1, depth + 1, q, best);
        if delta * delta < best.1 {
            self.nearest_in(far.0, far.1, depth + 1, q, best);
        }
    }

    /// The `k` nearest neighbors of `q`, sorted by ascending squared
    /// distance (ties by original index). Returns fewer when the index
    /// holds fewer points.
    pub fn k_nearest(&self, q: Vec3, k: usize) -> Vec<(usize, f64)> {
        if self.points.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = KnnHeap::new(k);
        self.k_nearest_in(0, self.points.len(), 0, q, &mut heap);
        heap.into_sorted()
    }

    fn k_nearest_in(&self, lo: usize, hi: usize, depth: usize, q: Vec3, heap: &mut KnnHeap) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                heap.offer(self.original[i] as usize, (self.points[i] - q).norm_squared());
            }
            return;
        }
        let axis = axis_for_depth(depth);
        let mid = lo + (hi - lo) / 2;
        heap.offer(self.original[mid] as usize, (self.points[mid] - q).norm_squared());
        let delta = q.component(axis) - self.points[mid].component(axis);
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.k_nearest_in(near.0, near.1, depth + 1, q, heap);
        if !heap.full() || delta * delta < heap.worst() {
            self.k_nearest_in(far.0, far.1, depth + 1, q, heap);
        }
    }
}

fn apply_permutation(points: &mut [Vec3], original: &mut [u32], lo: usize, perm: &[usize]) {
    let tmp_p: Vec<Vec3> = perm.iter().map(|&i| points[i]).collect();
    let tmp_o: Vec<u32> = perm.iter().map(|&i| original[i]).collect();
    points[lo..lo + perm.len()].copy_from_slice(&tmp_p);
    original[lo..lo + perm.len()].copy_from_slice(&tmp_o);
}

/// Bounded max-heap of (squared distance, index) candidates.
struct KnnHeap {
    k: usize,
    entries: Vec<(f64, usize)>,
}

impl KnnHeap {
    fn new(k: usize) -> Self {
        KnnHeap {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.entries.len() >= self.k
    }

    fn worst(&self) -> f64 {
        self.entries.first().map(|e| e.0).unwrap_or(f64::INFINITY)
    }

    fn offer(&mut self, idx: usize, dist: f64) {
        if self.full() && (dist, idx) >= (self.entries[0].0, self.entries[0].1) {
            return;
        }
        self.entries.push((dist, idx));
        self.sift_up(self.entries.len() - 1);
        if self.entries.len() > self.k {
            self.pop_max();
        }
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.entries[i] > self.entries[parent] {
                self.entries.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn pop_max(&mut self) {
        let last = self.entries.len() - 1;
        self.entries.swap(0, last);
        self.entries.pop();
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < self.entries.len() && self.entries[l] > self.entries[largest] {
                largest = l;
            }
            if r < self.entries.len() && self.entries[r] > self.entries[largest] {
                largest = r;
            }
            if largest == i {
                break;
            }
            self.entries.swap(i, largest);
            i = largest;
        }
    }

    fn into_sorted(self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.entries.into_iter().map(|(d, i)| (i, d)).collect();
        v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }
}
