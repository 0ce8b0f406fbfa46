//! Sampled symmetric Hausdorff distance between two meshes, used as the
//! decimation-quality oracle. Deterministic for a given seed.

use crate::error::{Error, Result};
use crate::warp::GridMesh;
use glam::DVec3;

/// SplitMix64: tiny deterministic RNG, stable across platforms.
pub(crate) struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Closest point on a triangle to p (Ericson).
pub(crate) fn closest_point_on_triangle(p: DVec3, a: DVec3, b: DVec3, c: DVec3) -> DVec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn point_triangle_distance_sq(p: DVec3, a: DVec3, b: DVec3, c: DVec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).length_squared()
}

struct BvhNode {
    lo: DVec3,
    hi: DVec3,
    // leaf: range into tri_order; inner: child indices
    left: u32,
    right: u32,
    start: u32,
    count: u32,
}

pub(crate) struct TriBvh<'a> {
    mesh: &'a GridMesh,
    nodes: Vec<BvhNode>,
    tri_order: Vec<u32>,
}

impl<'a> TriBvh<'a> {
    pub(crate) fn build(mesh: &'a GridMesh) -> Self {
        let n = mesh.indices.len();
        let mut tri_order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<DVec3> = mesh
            .indices
            .iter()
            .map(|t| {
                (mesh.positions[t[0] as usize]
                    + mesh.positions[t[1] as usize]
                    + mesh.positions[t[2] as usize])
                    / 3.0
            })
            .collect();
        let mut bvh = TriBvh {
            mesh,
            nodes: Vec::new(),
            tri_order: Vec::new(),
        };
        bvh.split(&mut tri_order, 0, n, &centroids);
        bvh.tri_order = tri_order;
        bvh
    }

    fn tri_bounds(&self, ti: u32) -> (DVec3, DVec3) {
        let t = self.mesh.indices[ti as usize];
        let (a, b, c) = (
            self.mesh.positions[t[0] as usize],
            self.mesh.positions[t[1] as usize],
            self.mesh.positions[t[2] as usize],
        );
        (a.min(b).min(c), a.max(b).max(c))
    }

    fn split(&mut self, order: &mut [u32], start: usize, count: usize, centroids: &[DVec3]) -> u32 {
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for &t in &order[start..start + count] {
            let (tl, th) = self.tri_bounds(t);
            lo = lo.min(tl);
            hi = hi.max(th);
        }
        let node_index = self.nodes.len() as u32;
        self.nodes.push(BvhNode {
            lo,
            hi,
            left: u32::MAX,
            right: u32::MAX,
            start: start as u32,
            count: count as u32,
        });
        if count <= 8 {
            return node_index;
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let slice = &mut order[start..start + count];
        slice.sort_by(|&p, &q| {
            let cp = centroids[p as usize][axis];
            let cq = centroids[q as usize][axis];
            cp.total_cmp(&cq).then(p.cmp(&q))
        });
        let half = count / 2;
        let left = self.split(order, start, half, centroids);
        let right = self.split(order, start + half, count - half, centroids);
        self.nodes[node_index as usize].left = left;
        self.nodes[node_index as usize].right = right;
        self.nodes[node_index as usize].count = 0;
        node_index
    }

    fn aabb_dist_sq(p: DVec3, lo: DVec3, hi: DVec3) -> f64 {
        let d = (lo - p).max(DVec3::ZERO).max(p - hi);
        d.length_squared()
    }

    fn closest_sq(&self, p: DVec3) -> f64 {
        self.closest(p).0
    }

    /// Squared distance plus the closest triangle index.
    pub(crate) fn closest(&self, p: DVec3) -> (f64, u32) {
        let mut best = f64::INFINITY;
        let mut best_tri = u32::MAX;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if Self::aabb_dist_sq(p, node.lo, node.hi) >= best {
                continue;
            }
            if node.count > 0 {
                for k in node.start..node.start + node.count {
                    let ti = self.tri_order[k as usize];
                    let t = self.mesh.indices[ti as usize];
                    let d = point_triangle_distance_sq(
                        p,
                        self.mesh.positions[t[0] as usize],
                        self.mesh.positions[t[1] as usize],
                        self.mesh.positions[t[2] as usize],
                    );
                    if d < best {
                        best = d;
                        best_tri = ti;
                    }
                }
            } else {
                // visit the nearer child first
                let (l, r) = (node.left, node.right);
                let dl = Self::aabb_dist_sq(p, self.nodes[l as usize].lo, self.nodes[l as usize].hi);
                let dr = Self::aabb_dist_sq(p, self.nodes[r as usize].lo, self.nodes[r as usize].hi);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        (best, best_tri)
    }
}

fn sample_surface(mesh: &GridMesh, samples: usize, rng: &mut SplitMix64) -> Vec<DVec3> {
    let mut cumulative = Vec::with_capacity(mesh.indices.len());
    let mut total = 0.0f64;
    for t in &mesh.indices {
        let (a, b, c) = (
            mesh.positions[t[0] as usize],
            mesh.positions[t[1] as usize],
            mesh.positions[t[2] as usize],
        );
        total += 0.5 * (b - a).cross(c - a).length();
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let r = rng.next_f64() * total;
        let ti = cumulative.partition_point(|&c| c < r).min(mesh.indices.len() - 1);
        let t = mesh.indices[ti];
        let (a, b, c) = (
            mesh.positions[t[0] as usize],
            mesh.positions[t[1] as usize],
            mesh.positions[t[2] as usize],
        );
        let r1 = rng.next_f64().sqrt();
        let r2 = rng.next_f64();
        out.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    out
}

/// Symmetric sampled Hausdorff estimate: max over sampled surface points of
/// the distance to the other mesh, both directions.
pub fn hausdorff(a: &GridMesh, b: &GridMesh, samples: usize, seed: u64) -> Result<f64> {
    if samples < 1000 {
        return Err(Error::invalid("need at least 1000 samples"));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cannot measure an empty mesh"));
    }
    let mut rng = SplitMix64::new(seed);
    let bvh_a = TriBvh::build(a);
    let bvh_b = TriBvh::build(b);
    let mut worst = 0.0f64;
    for p in sample_surface(a, samples, &mut rng) {
        worst = worst.max(bvh_b.closest_sq(p));
    }
    for p in sample_surface(b, samples, &mut rng) {
        worst = worst.max(bvh_a.closest_sq(p));
    }
    Ok(worst.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshopt::qem::tests::icosphere;

    #[test]
    fn identical_meshes_distance_zero() {
        let m = icosphere(2, 1.0);
        let d = hausdorff(&m, &m, 2000, 1).unwrap();
        assert!(d < 1e-9, "d = {d}");
    }

    #[test]
    fn concentric_spheres_analytic_gap() {
        // fine tessellation keeps the facet sag well under the 10% window
        let a = icosphere(5, 1.0);
        let b = icosphere(5, 1.01);
        let d = hausdorff(&a, &b, 1500, 42).unwrap();
        assert!((d - 0.01).abs() < 0.001, "d = {d}");
    }

    #[test]
    fn translation_lower_bound() {
        let a = icosphere(2, 1.0);
        let mut b = a.clone();
        for p in &mut b.positions {
            p.x += 0.35;
        }
        let d = hausdorff(&a, &b, 2000, 3).unwrap();
        assert!(d >= 0.35 - 0.02, "d = {d}");
        assert!(d <= 0.36);
    }

    #[test]
    fn rejects_bad_input() {
        let m = icosphere(1, 1.0);
        assert!(hausdorff(&m, &m, 10, 0).is_err());
        let empty = GridMesh::empty(0, "x");
        assert!(hausdorff(&m, &empty, 2000, 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let a = icosphere(2, 1.0);
        let b = icosphere(1, 1.0);
        let d1 = hausdorff(&a, &b, 2000, 9).unwrap();
        let d2 = hausdorff(&a, &b, 2000, 9).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn point_triangle_distance_cases() {
        let a = DVec3::new(0.0, 0.0, 0.0);
        let b = DVec3::new(1.0, 0.0, 0.0);
        let c = DVec3::new(0.0, 1.0, 0.0);
        // above the interior
        let d = point_triangle_distance_sq(DVec3::new(0.2, 0.2, 0.5), a, b, c);
        assert!((d - 0.25).abs() < 1e-12);
        // closest to vertex a
        let d = point_triangle_distance_sq(DVec3::new(-1.0, -1.0, 0.0), a, b, c);
        assert!((d - 2.0).abs() < 1e-12);
        // closest to edge ab
        let d = point_triangle_distance_sq(DVec3::new(0.5, -2.0, 0.0), a, b, c);
        assert!((d - 4.0).abs() < 1e-12);
        // closest to edge bc
        let d = point_triangle_distance_sq(DVec3::new(1.0, 1.0, 0.0), a, b, c);
        assert!((d - 0.5).abs() < 1e-12);
    }
}
