//! Quadric-error-metric edge-collapse decimation.
//!
//! Classic Garland–Heckbert: each vertex accumulates the squared-distance
//! quadric of its incident planes; collapses run through a min-heap keyed
//! by (cost, v0, v1) so equal costs break ties on the lowest vertex index
//! pair. Seam-pair and open-boundary vertices can be pinned: they never
//! move and never disappear.

use crate::error::{Error, Result};
use crate::warp::GridMesh;
use glam::DVec3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
pub struct PreserveFlags {
    pub seam: bool,
    pub boundary: bool,
}

impl Default for PreserveFlags {
    fn default() -> Self {
        PreserveFlags {
            seam: true,
            boundary: true,
        }
    }
}

/// Symmetric 4x4 quadric stored as its 10 unique coefficients.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric {
    m: [f64; 10],
}

impl Quadric {
    fn from_plane(n: DVec3, d: f64) -> Self {
        Quadric {
            m: [
                n.x * n.x,
                n.x * n.y,
                n.x * n.z,
                n.x * d,
                n.y * n.y,
                n.y * n.z,
                n.y * d,
                n.z * n.z,
                n.z * d,
                d * d,
            ],
        }
    }

    fn add(&mut self, o: &Quadric) {
        for i in 0..10 {
            self.m[i] += o.m[i];
        }
    }

    fn plus(&self, o: &Quadric) -> Quadric {
        let mut q = *self;
        q.add(o);
        q
    }

    fn eval(&self, p: DVec3) -> f64 {
        let m = &self.m;
        m[0] * p.x * p.x
            + 2.0 * m[1] * p.x * p.y
            + 2.0 * m[2] * p.x * p.z
            + 2.0 * m[3] * p.x
            + m[4] * p.y * p.y
            + 2.0 * m[5] * p.y * p.z
            + 2.0 * m[6] * p.y
            + m[7] * p.z * p.z
            + 2.0 * m[8] * p.z
            + m[9]
    }

    /// Minimizer of the quadric, when the 3x3 block is invertible.
    fn optimal_point(&self) -> Option<DVec3> {
        let m = &self.m;
        let a = [
            [m[0], m[1], m[2]],
            [m[1], m[4], m[5]],
            [m[2], m[5], m[7]],
        ];
        let b = DVec3::new(-m[3], -m[6], -m[8]);
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        if det.abs() < 1e-12 {
            return None;
        }
        let inv_det = 1.0 / det;
        let inv = [
            [
                (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det,
                (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det,
                (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det,
            ],
            [
                (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det,
                (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det,
                (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det,
            ],
            [
                (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det,
                (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det,
                (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det,
            ],
        ];
        let p = DVec3::new(
            inv[0][0] * b.x + inv[0][1] * b.y + inv[0][2] * b.z,
            inv[1][0] * b.x + inv[1][1] * b.y + inv[1][2] * b.z,
            inv[2][0] * b.x + inv[2][1] * b.y + inv[2][2] * b.z,
        );
        if p.is_finite() {
            Some(p)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    v0: u32,
    v1: u32,
    target: DVec3,
    version: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.v0 == other.v0 && self.v1 == other.v1
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the smallest cost pops first,
        // with (v0, v1) as the deterministic tie-break.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.v0.cmp(&self.v0))
            .then_with(|| other.v1.cmp(&self.v1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct MeshState {
    positions: Vec<DVec3>,
    uv: Vec<[f64; 2]>,
    alpha: Vec<f32>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
    vertex_alive: Vec<bool>,
    quadrics: Vec<Quadric>,
    versions: Vec<u64>,
    pinned: Vec<bool>,
    alive_faces: usize,
}

impl MeshState {
    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &f in &self.vertex_faces[v as usize] {
            if !self.face_alive[f as usize] {
                continue;
            }
            for &c in &self.faces[f as usize] {
                if c != v && !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn edge_face_count(&self, a: u32, b: u32) -> usize {
        self.vertex_faces[a as usize]
            .iter()
            .filter(|&&f| {
                self.face_alive[f as usize] && self.faces[f as usize].contains(&b)
            })
            .count()
    }
}

enum CollapseMode<'a> {
    /// Minimum accumulated quadric error with optimal placement.
    QuadricError,
    /// Shortest edge first with the target seated on the input surface;
    /// used by the uniformity remesh rounds.
    EdgeLength(&'a super::hausdorff::TriBvh<'a>, &'a GridMesh),
}

fn make_candidate(state: &MeshState, a: u32, b: u32, mode: &CollapseMode) -> Option<Candidate> {
    let (v0, v1) = (a.min(b), a.max(b));
    if state.pinned[v0 as usize] && state.pinned[v1 as usize] {
        return None;
    }
    let q = state.quadrics[v0 as usize].plus(&state.quadrics[v1 as usize]);
    let p0 = state.positions[v0 as usize];
    let p1 = state.positions[v1 as usize];
    let free_target = |mode: &CollapseMode| -> DVec3 {
        match mode {
            CollapseMode::QuadricError => match q.optimal_point() {
                Some(p) if (p - 0.5 * (p0 + p1)).length() <= 2.0 * (p1 - p0).length().max(1e-12) => p,
                _ => {
                    let mid = 0.5 * (p0 + p1);
                    let (e0, e1, em) = (q.eval(p0), q.eval(p1), q.eval(mid));
                    if e0 <= e1 && e0 <= em {
                        p0
                    } else if e1 <= em {
                        p1
                    } else {
                        mid
                    }
                }
            },
            CollapseMode::EdgeLength(bvh, original) => {
                let offset = |p: DVec3| {
                    surface_offset(p, bvh, original).map(|(_, _, d)| d).unwrap_or(0.0)
                };
                let delta = 0.5 * (offset(p0) + offset(p1));
                let mid = 0.5 * (p0 + p1);
                match surface_offset(mid, bvh, original) {
                    Some((qpt, n, _)) => qpt + n * delta,
                    None => mid,
                }
            }
        }
    };
    let target = if state.pinned[v0 as usize] {
        p0
    } else if state.pinned[v1 as usize] {
        p1
    } else {
        free_target(mode)
    };
    let cost = match mode {
        CollapseMode::QuadricError => q.eval(target).max(0.0),
        CollapseMode::EdgeLength(_, _) => (p1 - p0).length(),
    };
    Some(Candidate {
        cost,
        v0,
        v1,
        target,
        version: state.versions[v0 as usize] + state.versions[v1 as usize],
    })
}

/// One deterministic pass of valence-balancing edge flips (target valence
/// 6). Flips never touch pinned vertices, never create duplicate edges and
/// never flip normals. Returns the number of flips applied.
fn flip_pass(state: &mut MeshState) -> usize {
    use std::collections::BTreeMap;
    let mut valence: Vec<i64> = vec![0; state.positions.len()];
    let mut edge_faces: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for (fi, f) in state.faces.iter().enumerate() {
        if !state.face_alive[fi] {
            continue;
        }
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi as u32);
        }
    }
    for (&(a, b), _) in &edge_faces {
        valence[a as usize] += 1;
        valence[b as usize] += 1;
    }

    let mut flips = 0usize;
    for (&(a, b), faces) in &edge_faces {
        if faces.len() != 2 {
            continue;
        }
        if state.pinned[a as usize] || state.pinned[b as usize] {
            continue;
        }
        let (f0, f1) = (faces[0] as usize, faces[1] as usize);
        if !state.face_alive[f0] || !state.face_alive[f1] {
            continue;
        }
        // the faces may have been rewritten by an earlier flip this pass
        let has_edge = |t: &[u32; 3]| t.contains(&a) && t.contains(&b);
        if !has_edge(&state.faces[f0]) || !has_edge(&state.faces[f1]) {
            continue;
        }
        let opposite = |t: &[u32; 3]| *t.iter().find(|&&v| v != a && v != b).unwrap();
        let c = opposite(&state.faces[f0]);
        let d = opposite(&state.faces[f1]);
        if c == d || state.pinned[c as usize] || state.pinned[d as usize] {
            continue;
        }
        // valence objective: edge (a,b) -> (c,d)
        let dev = |v: i64| (v - 6) * (v - 6);
        let before = dev(valence[a as usize])
            + dev(valence[b as usize])
            + dev(valence[c as usize])
            + dev(valence[d as usize]);
        let after = dev(valence[a as usize] - 1)
            + dev(valence[b as usize] - 1)
            + dev(valence[c as usize] + 1)
            + dev(valence[d as usize] + 1);
        if after >= before {
            continue;
        }
        // no duplicate edge (c,d)
        if edge_faces.contains_key(&(c.min(d), c.max(d))) {
            continue;
        }
        // orientation bookkeeping: identify the face where the shared edge
        // runs a -> b; the other must run b -> a
        let runs_ab = |t: &[u32; 3]| (0..3).any(|k| t[k] == a && t[(k + 1) % 3] == b);
        let (fab, fba) = if runs_ab(&state.faces[f0]) {
            (f0, f1)
        } else if runs_ab(&state.faces[f1]) {
            (f1, f0)
        } else {
            continue; // inconsistent winding; leave alone
        };
        let c_ab = opposite(&state.faces[fab]);
        let d_ba = opposite(&state.faces[fba]);
        let new0 = [a, d_ba, c_ab];
        let new1 = [d_ba, b, c_ab];
        // geometric guards: area and normal agreement
        let tri_ok = |t: &[u32; 3], reference: &[u32; 3]| -> bool {
            let p = |i: u32| state.positions[i as usize];
            let n_new = (p(t[1]) - p(t[0])).cross(p(t[2]) - p(t[0]));
            let n_ref = (p(reference[1]) - p(reference[0])).cross(p(reference[2]) - p(reference[0]));
            n_new.length() > 1e-12 && n_new.dot(n_ref) > 0.0
        };
        if !tri_ok(&new0, &state.faces[fab]) || !tri_ok(&new1, &state.faces[fab]) {
            continue;
        }
        // rewrite faces and adjacency
        state.faces[fab] = new0;
        state.faces[fba] = new1;
        state.vertex_faces[b as usize].retain(|&f| f as usize != fab);
        state.vertex_faces[a as usize].retain(|&f| f as usize != fba);
        state.vertex_faces[d_ba as usize].push(fab as u32);
        state.vertex_faces[c_ab as usize].push(fba as u32);
        valence[a as usize] -= 1;
        valence[b as usize] -= 1;
        valence[c as usize] += 1;
        valence[d as usize] += 1;
        flips += 1;
    }
    flips
}

fn seed_heap(state: &MeshState, mode: &CollapseMode) -> BinaryHeap<Candidate> {
    let mut heap = BinaryHeap::new();
    let mut seen: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    for (fi, f) in state.faces.iter().enumerate() {
        if !state.face_alive[fi] {
            continue;
        }
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let e = (a.min(b), a.max(b));
            if seen.insert(e) {
                if let Some(c) = make_candidate(state, e.0, e.1, mode) {
                    heap.push(c);
                }
            }
        }
    }
    heap
}

/// Greedy minimum-cost collapses until the alive triangle count reaches
/// `target`; returns a warning when the heap runs dry first.
fn run_collapse(state: &mut MeshState, target: usize, mode: &CollapseMode) -> Option<String> {
    for v in state.versions.iter_mut() {
        *v += 1;
    }
    let mut heap = seed_heap(state, mode);
    while state.alive_faces > target {
        let Some(cand) = heap.pop() else {
            return Some(format!(
                "no more collapsible edges at {} triangles (target {target})",
                state.alive_faces
            ));
        };
        let (v0, v1) = (cand.v0, cand.v1);
        if !state.vertex_alive[v0 as usize] || !state.vertex_alive[v1 as usize] {
            continue;
        }
        if cand.version != state.versions[v0 as usize] + state.versions[v1 as usize] {
            continue; // stale entry
        }
        if state.pinned[v0 as usize] && state.pinned[v1 as usize] {
            continue;
        }
        let shared = state.edge_face_count(v0, v1);
        if shared == 0 || shared > 2 {
            continue; // disconnected pair or non-manifold edge
        }
        // link condition: common neighbors must be exactly the opposite
        // vertices of the shared faces
        let n0 = state.neighbors(v0);
        let n1 = state.neighbors(v1);
        let common = n0.iter().filter(|v| n1.contains(v)).count();
        if common != shared {
            continue;
        }
        // reject collapses that flip surviving face normals
        let mut flips = false;
        for &v in &[v0, v1] {
            for &f in &state.vertex_faces[v as usize] {
                let fi = f as usize;
                if !state.face_alive[fi] {
                    continue;
                }
                let t = state.faces[fi];
                if t.contains(&v0) && t.contains(&v1) {
                    continue; // retired by the collapse
                }
                let old: [DVec3; 3] = [
                    state.positions[t[0] as usize],
                    state.positions[t[1] as usize],
                    state.positions[t[2] as usize],
                ];
                let mut new = old;
                for (k, &c) in t.iter().enumerate() {
                    if c == v0 || c == v1 {
                        new[k] = cand.target;
                    }
                }
                let n_old = (old[1] - old[0]).cross(old[2] - old[0]);
                let n_new = (new[1] - new[0]).cross(new[2] - new[0]);
                if n_old.dot(n_new) <= 0.0 {
                    flips = true;
                    break;
                }
            }
            if flips {
                break;
            }
        }
        if flips {
            continue;
        }
        // collapse: the free endpoint folds into the pinned one, otherwise
        // v1 folds into v0
        let keep = if state.pinned[v1 as usize] { v1 } else { v0 };
        let drop_v = if keep == v0 { v1 } else { v0 };
        let p_keep = state.positions[keep as usize];
        let p_drop = state.positions[drop_v as usize];
        let edge = p_drop - p_keep;
        let t = if edge.length_squared() < 1e-24 {
            0.0
        } else {
            ((cand.target - p_keep).dot(edge) / edge.length_squared()).clamp(0.0, 1.0)
        };
        let ku = state.uv[keep as usize];
        let du = state.uv[drop_v as usize];
        state.positions[keep as usize] = cand.target;
        state.uv[keep as usize] = [ku[0] + (du[0] - ku[0]) * t, ku[1] + (du[1] - ku[1]) * t];
        state.alpha[keep as usize] = state.alpha[keep as usize]
            + (state.alpha[drop_v as usize] - state.alpha[keep as usize]) * t as f32;
        state.quadrics[keep as usize] = state.quadrics[v0 as usize].plus(&state.quadrics[v1 as usize]);
        state.vertex_alive[drop_v as usize] = false;
        state.versions[keep as usize] += 1;

        // retire faces on the collapsed edge, rewrite the rest
        let drop_faces = std::mem::take(&mut state.vertex_faces[drop_v as usize]);
        for &f in &drop_faces {
            let fi = f as usize;
            if !state.face_alive[fi] {
                continue;
            }
            if state.faces[fi].contains(&keep) {
                state.face_alive[fi] = false;
                state.alive_faces -= 1;
            } else {
                for c in state.faces[fi].iter_mut() {
                    if *c == drop_v {
                        *c = keep;
                    }
                }
                state.vertex_faces[keep as usize].push(f);
            }
        }
        // drop faces that became degenerate by index
        let keep_faces = std::mem::take(&mut state.vertex_faces[keep as usize]);
        let mut rebuilt = Vec::with_capacity(keep_faces.len());
        for f in keep_faces {
            let fi = f as usize;
            if !state.face_alive[fi] {
                continue;
            }
            let t = state.faces[fi];
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                state.face_alive[fi] = false;
                state.alive_faces -= 1;
            } else {
                rebuilt.push(f);
            }
        }
        rebuilt.sort_unstable();
        rebuilt.dedup();
        state.vertex_faces[keep as usize] = rebuilt;

        for n in state.neighbors(keep) {
            if let Some(c) = make_candidate(state, keep, n, mode) {
                heap.push(c);
            }
        }
    }
    None
}

/// Splits every alive edge longer than `ratio` times the mean edge length,
/// seating the new vertex on the input surface at the interpolated offset.
/// Returns the number of splits.
fn split_long_edges(
    state: &mut MeshState,
    bvh: &super::hausdorff::TriBvh,
    original: &GridMesh,
    ratio: f64,
) -> usize {
    let mut edges: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    for (fi, f) in state.faces.iter().enumerate() {
        if !state.face_alive[fi] {
            continue;
        }
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    if edges.is_empty() {
        return 0;
    }
    let mut lens: Vec<(f64, u32, u32)> = edges
        .iter()
        .map(|&(a, b)| {
            (
                (state.positions[a as usize] - state.positions[b as usize]).length(),
                a,
                b,
            )
        })
        .collect();
    let mean: f64 = lens.iter().map(|e| e.0).sum::<f64>() / lens.len() as f64;
    let threshold = ratio * mean;
    lens.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));

    let mut splits = 0usize;
    for &(len, a, b) in &lens {
        if len <= threshold {
            break;
        }
        if state.pinned[a as usize] || state.pinned[b as usize] {
            continue;
        }
        // current faces sharing the edge (may have changed since collection)
        let mut shared: Vec<u32> = state.vertex_faces[a as usize]
            .iter()
            .copied()
            .filter(|&f| state.face_alive[f as usize] && state.faces[f as usize].contains(&b))
            .collect();
        shared.sort_unstable();
        shared.dedup();
        if shared.is_empty() || shared.len() > 2 {
            continue;
        }
        let pa = state.positions[a as usize];
        let pb = state.positions[b as usize];
        let offset = |p: DVec3| surface_offset(p, bvh, original).map(|(_, _, d)| d).unwrap_or(0.0);
        let delta = 0.5 * (offset(pa) + offset(pb));
        let mid = 0.5 * (pa + pb);
        let seat = match surface_offset(mid, bvh, original) {
            Some((q, n, _)) => q + n * delta,
            None => mid,
        };
        let m = state.positions.len() as u32;
        state.positions.push(seat);
        state.uv.push([
            0.5 * (state.uv[a as usize][0] + state.uv[b as usize][0]),
            0.5 * (state.uv[a as usize][1] + state.uv[b as usize][1]),
        ]);
        state
            .alpha
            .push(0.5 * (state.alpha[a as usize] + state.alpha[b as usize]));
        let mut q = state.quadrics[a as usize].plus(&state.quadrics[b as usize]);
        for v in q.m.iter_mut() {
            *v *= 0.5;
        }
        state.quadrics.push(q);
        state.versions.push(0);
        state.pinned.push(false);
        state.vertex_alive.push(true);
        state.vertex_faces.push(Vec::new());

        for &f in &shared {
            let fi = f as usize;
            let tri = state.faces[fi];
            // cyclic position of the split edge inside this face
            let Some(k) = (0..3).find(|&k| {
                (tri[k] == a && tri[(k + 1) % 3] == b) || (tri[k] == b && tri[(k + 1) % 3] == a)
            }) else {
                continue;
            };
            let (e0, e1, opp) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            // (e0, e1, opp) -> (e0, m, opp) + (m, e1, opp)
            state.faces[fi] = [e0, m, opp];
            let nf = state.faces.len() as u32;
            state.faces.push([m, e1, opp]);
            state.face_alive.push(true);
            state.alive_faces += 1;
            // adjacency updates
            state.vertex_faces[e1 as usize].retain(|&g| g != f);
            state.vertex_faces[e1 as usize].push(nf);
            state.vertex_faces[m as usize].push(f);
            state.vertex_faces[m as usize].push(nf);
            state.vertex_faces[opp as usize].push(nf);
        }
        state.versions[a as usize] += 1;
        state.versions[b as usize] += 1;
        splits += 1;
    }
    splits
}

/// Signed offset of a point from the input surface along the closest
/// triangle's normal.
fn surface_offset(p: DVec3, bvh: &super::hausdorff::TriBvh, original: &GridMesh) -> Option<(DVec3, DVec3, f64)> {
    let (_, tri_id) = bvh.closest(p);
    if tri_id == u32::MAX {
        return None;
    }
    let tri = original.indices[tri_id as usize];
    let (a, b, c) = (
        original.positions[tri[0] as usize],
        original.positions[tri[1] as usize],
        original.positions[tri[2] as usize],
    );
    let q = super::hausdorff::closest_point_on_triangle(p, a, b, c);
    let n = (b - a).cross(c - a);
    if n.length() < 1e-15 {
        return None;
    }
    let n = n.normalize();
    Some((q, n, (p - q).dot(n)))
}

/// Valence flips plus offset-preserving Lloyd relaxation.
fn smooth_mesh(
    state: &mut MeshState,
    bvh: &super::hausdorff::TriBvh,
    original: &GridMesh,
    rounds: usize,
    passes_per_round: usize,
) {
    let offsets: Vec<f64> = (0..state.positions.len())
        .map(|v| {
            if !state.vertex_alive[v] {
                return 0.0;
            }
            surface_offset(state.positions[v], bvh, original)
                .map(|(_, _, d)| d)
                .unwrap_or(0.0)
        })
        .collect();
    for round in 0..rounds {
        let flips = flip_pass(state);
        if flips == 0 && round > 0 {
            break;
        }
        relax_vertices(state, passes_per_round, 0.5, bvh, original, &offsets);
    }
}

/// Shifts each free vertex along its seat normal so the error band
/// (vertex offset vs incident facet-centroid offset) straddles the input
/// surface symmetrically, halving the worst-case deviation.
fn recenter_offsets(state: &mut MeshState, bvh: &super::hausdorff::TriBvh, original: &GridMesh) {
    let snapshot = state.positions.clone();
    let mut updates: Vec<(usize, DVec3)> = Vec::new();
    for v in 0..snapshot.len() {
        if !state.vertex_alive[v] || state.pinned[v] {
            continue;
        }
        let Some((q, n, delta)) = surface_offset(snapshot[v], bvh, original) else {
            continue;
        };
        // deepest signed offset among the incident facet centroids
        let mut c_min = f64::INFINITY;
        for &f in &state.vertex_faces[v] {
            if !state.face_alive[f as usize] {
                continue;
            }
            let t = state.faces[f as usize];
            let centroid = (snapshot[t[0] as usize] + snapshot[t[1] as usize] + snapshot[t[2] as usize]) / 3.0;
            if let Some((_, _, d)) = surface_offset(centroid, bvh, original) {
                c_min = c_min.min(d);
            }
        }
        if !c_min.is_finite() {
            continue;
        }
        // place the vertex so it balances its deepest incident facet
        let target = (delta - c_min) * 0.5;
        updates.push((v, q + n * target));
    }
    for (v, p) in updates {
        state.positions[v] = p;
    }
}

/// Gradient steps on the facet-area variance: shrinks oversized facets
/// directly, with moves clamped and vertices re-seated at their surface
/// offset. Attacks the residual area spread that Lloyd equilibria keep
/// around irregular-valence vertices.
fn area_equalize(
    state: &mut MeshState,
    bvh: &super::hausdorff::TriBvh,
    original: &GridMesh,
    iters: usize,
) {
    let offsets: Vec<f64> = (0..state.positions.len())
        .map(|v| {
            if !state.vertex_alive[v] {
                return 0.0;
            }
            surface_offset(state.positions[v], bvh, original)
                .map(|(_, _, d)| d)
                .unwrap_or(0.0)
        })
        .collect();
    for _ in 0..iters {
        let snapshot = state.positions.clone();
        let mut total_area = 0.0f64;
        let mut alive = 0usize;
        let mut edge_sum = 0.0f64;
        for (fi, f) in state.faces.iter().enumerate() {
            if !state.face_alive[fi] {
                continue;
            }
            let (a, b, c) = (
                snapshot[f[0] as usize],
                snapshot[f[1] as usize],
                snapshot[f[2] as usize],
            );
            total_area += 0.5 * (b - a).cross(c - a).length();
            edge_sum += (b - a).length();
            alive += 1;
        }
        if alive == 0 {
            break;
        }
        let mean_area = total_area / alive as f64;
        let mean_edge = edge_sum / alive as f64;
        let max_step = 0.12 * mean_edge;

        let mut updates: Vec<(usize, DVec3)> = Vec::new();
        for v in 0..snapshot.len() {
            if !state.vertex_alive[v] || state.pinned[v] {
                continue;
            }
            let mut grad = DVec3::ZERO;
            let mut touched = false;
            for &f in &state.vertex_faces[v] {
                if !state.face_alive[f as usize] {
                    continue;
                }
                let t = state.faces[f as usize];
                let (i0, i1, i2) = if t[0] as usize == v {
                    (t[0], t[1], t[2])
                } else if t[1] as usize == v {
                    (t[1], t[2], t[0])
                } else {
                    (t[2], t[0], t[1])
                };
                let (pv, p, q) = (
                    snapshot[i0 as usize],
                    snapshot[i1 as usize],
                    snapshot[i2 as usize],
                );
                let n = (p - pv).cross(q - pv);
                let len = n.length();
                if len < 1e-15 {
                    continue;
                }
                let area = 0.5 * len;
                grad += (p - q).cross(n / len) * 0.5 * (area - mean_area);
                touched = true;
            }
            if !touched {
                continue;
            }
            let mut step = -grad * 2.0;
            if step.length() > max_step {
                step = step.normalize() * max_step;
            }
            let x1 = snapshot[v] + step;
            let seated = match surface_offset(x1, bvh, original) {
                Some((qpt, n, _)) => qpt + n * offsets[v],
                None => x1,
            };
            updates.push((v, seated));
        }
        for (v, p) in updates {
            state.positions[v] = p;
        }
    }
}

/// Re-derives UV and alpha for every free vertex by interpolating the
/// input mesh at the closest surface point, keeping texture coordinates
/// consistent with positions after all smoothing moves.
fn resolve_attributes(state: &mut MeshState, bvh: &super::hausdorff::TriBvh, original: &GridMesh) {
    for v in 0..state.positions.len() {
        if !state.vertex_alive[v] || state.pinned[v] {
            continue;
        }
        let p = state.positions[v];
        let (_, tri_id) = bvh.closest(p);
        if tri_id == u32::MAX {
            continue;
        }
        let t = original.indices[tri_id as usize];
        let (a, b, c) = (
            original.positions[t[0] as usize],
            original.positions[t[1] as usize],
            original.positions[t[2] as usize],
        );
        let q = super::hausdorff::closest_point_on_triangle(p, a, b, c);
        // barycentric coordinates of q
        let v0 = b - a;
        let v1 = c - a;
        let v2 = q - a;
        let d00 = v0.dot(v0);
        let d01 = v0.dot(v1);
        let d11 = v1.dot(v1);
        let d20 = v2.dot(v0);
        let d21 = v2.dot(v1);
        let denom = d00 * d11 - d01 * d01;
        if denom.abs() < 1e-20 {
            continue;
        }
        let wb = ((d11 * d20 - d01 * d21) / denom).clamp(0.0, 1.0);
        let wc = ((d00 * d21 - d01 * d20) / denom).clamp(0.0, 1.0);
        let wa = (1.0 - wb - wc).clamp(0.0, 1.0);
        let uv = [
            wa * original.uv[t[0] as usize][0] + wb * original.uv[t[1] as usize][0] + wc * original.uv[t[2] as usize][0],
            wa * original.uv[t[0] as usize][1] + wb * original.uv[t[1] as usize][1] + wc * original.uv[t[2] as usize][1],
        ];
        let alpha = wa as f32 * original.alpha[t[0] as usize]
            + wb as f32 * original.alpha[t[1] as usize]
            + wc as f32 * original.alpha[t[2] as usize];
        state.uv[v] = uv;
        state.alpha[v] = alpha;
    }
}

/// Lloyd-style relaxation: each free vertex moves a fraction `t` toward
/// the area-weighted centroid of its incident face barycenters (equalizing
/// facet areas), then is re-seated on the input surface at its original
/// signed normal offset so the straddle profile chosen by the collapses is
/// preserved. UV and alpha follow the same blend.
fn relax_vertices(
    state: &mut MeshState,
    passes: usize,
    t: f64,
    bvh: &super::hausdorff::TriBvh,
    original: &GridMesh,
    offsets: &[f64],
) {
    for _ in 0..passes {
        let snapshot = state.positions.clone();
        let uv_snapshot = state.uv.clone();
        let alpha_snapshot = state.alpha.clone();
        let mut updates: Vec<(u32, DVec3, [f64; 2], f32)> = Vec::new();
        for v in 0..state.positions.len() as u32 {
            if !state.vertex_alive[v as usize] || state.pinned[v as usize] {
                continue;
            }
            let ring = state.neighbors(v);
            if ring.len() < 3 {
                continue;
            }
            let mut m = DVec3::ZERO;
            let mut uv_m = [0.0f64; 2];
            let mut alpha_m = 0.0f64;
            let mut wsum = 0.0f64;
            for &f in &state.vertex_faces[v as usize] {
                if !state.face_alive[f as usize] {
                    continue;
                }
                let tri = state.faces[f as usize];
                let (pa, pb, pc) = (
                    snapshot[tri[0] as usize],
                    snapshot[tri[1] as usize],
                    snapshot[tri[2] as usize],
                );
                let area = 0.5 * (pb - pa).cross(pc - pa).length();
                if area <= 1e-15 {
                    continue;
                }
                m += (pa + pb + pc) / 3.0 * area;
                for &c in &tri {
                    uv_m[0] += uv_snapshot[c as usize][0] * area / 3.0;
                    uv_m[1] += uv_snapshot[c as usize][1] * area / 3.0;
                    alpha_m += alpha_snapshot[c as usize] as f64 * area / 3.0;
                }
                wsum += area;
            }
            if wsum <= 1e-15 {
                continue;
            }
            m /= wsum;
            let uv_m = [uv_m[0] / wsum, uv_m[1] / wsum];
            let alpha_m = (alpha_m / wsum) as f32;

            let p = snapshot[v as usize];
            let x1 = p.lerp(m, t);
            let (_, tri_id) = bvh.closest(x1);
            if tri_id == u32::MAX {
                continue;
            }
            let tri = original.indices[tri_id as usize];
            let (oa, ob, oc) = (
                original.positions[tri[0] as usize],
                original.positions[tri[1] as usize],
                original.positions[tri[2] as usize],
            );
            let q = super::hausdorff::closest_point_on_triangle(x1, oa, ob, oc);
            let n = (ob - oa).cross(oc - oa);
            if n.length() < 1e-15 {
                continue;
            }
            let x2 = q + n.normalize() * offsets[v as usize];
            let uv1 = [
                uv_snapshot[v as usize][0] + (uv_m[0] - uv_snapshot[v as usize][0]) * t,
                uv_snapshot[v as usize][1] + (uv_m[1] - uv_snapshot[v as usize][1]) * t,
            ];
            let alpha1 =
                alpha_snapshot[v as usize] + (alpha_m - alpha_snapshot[v as usize]) * t as f32;
            updates.push((v, x2, uv1, alpha1));
        }
        for (v, p, uv, alpha) in updates {
            state.positions[v as usize] = p;
            state.uv[v as usize] = uv;
            state.alpha[v as usize] = alpha;
        }
    }
}

/// Iterative minimum-cost edge collapse down to
/// `target_ratio × original triangle count` (clamped to at least 4, with a
/// warning). Returns the decimated mesh and any warnings.
pub fn decimate_qem(
    mesh: &GridMesh,
    target_ratio: f64,
    preserve: PreserveFlags,
) -> Result<(GridMesh, Vec<String>)> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::invalid("target ratio must lie in (0, 1)"));
    }
    mesh.validate()?;
    let mut warnings = Vec::new();
    let original = mesh.triangle_count();
    let mut target = (target_ratio * original as f64).floor() as usize;
    if target < 4 {
        warnings.push(format!("target {target} triangles clamped to 4"));
        target = 4;
    }
    if original <= target {
        return Ok((mesh.clone(), warnings));
    }

    let nv = mesh.vertex_count();
    let mut state = MeshState {
        positions: mesh.positions.clone(),
        uv: mesh.uv.clone(),
        alpha: mesh.alpha.clone(),
        faces: mesh.indices.clone(),
        face_alive: vec![true; mesh.indices.len()],
        vertex_faces: vec![Vec::new(); nv],
        vertex_alive: vec![true; nv],
        quadrics: vec![Quadric::default(); nv],
        versions: vec![0; nv],
        pinned: vec![false; nv],
        alive_faces: mesh.indices.len(),
    };
    for (fi, f) in mesh.indices.iter().enumerate() {
        for &c in f {
            state.vertex_faces[c as usize].push(fi as u32);
        }
        let (a, b, c) = (
            mesh.positions[f[0] as usize],
            mesh.positions[f[1] as usize],
            mesh.positions[f[2] as usize],
        );
        let n = (b - a).cross(c - a);
        let len = n.length();
        if len < 1e-15 {
            continue;
        }
        let n = n / len;
        let q = Quadric::from_plane(n, -n.dot(a));
        for &cvi in f {
            state.quadrics[cvi as usize].add(&q);
        }
    }
    if preserve.seam {
        for &(a, b) in &mesh.seam_pairs {
            state.pinned[a as usize] = true;
            state.pinned[b as usize] = true;
        }
    }
    if preserve.boundary {
        // boundary = edge with exactly one incident face
        let mut edge_count: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
        for f in &mesh.indices {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let e = (a.min(b), a.max(b));
                *edge_count.entry(e).or_insert(0) += 1;
            }
        }
        for ((a, b), count) in edge_count {
            if count == 1 {
                state.pinned[a as usize] = true;
                state.pinned[b as usize] = true;
            }
        }
    }

    let bvh = super::hausdorff::TriBvh::build(mesh);
    if let Some(w) = run_collapse(&mut state, target, &CollapseMode::QuadricError) {
        warnings.push(w);
    }

    // isotropic remesh rounds: smooth, split oversized edges, then collapse
    // the shortest edges back to the target so the triangle budget is spent
    // uniformly over the surface. Tiny meshes skip the quality passes.
    if state.alive_faces >= 64 {
        for _ in 0..5 {
            smooth_mesh(&mut state, &bvh, mesh, 2, 10);
            let splits = split_long_edges(&mut state, &bvh, mesh, 1.1);
            if splits == 0 {
                break;
            }
            let _ = run_collapse(&mut state, target, &CollapseMode::EdgeLength(&bvh, mesh));
        }

        // even out facets, equalize areas directly, then recenter the error
        // band and re-derive attributes from the input
        smooth_mesh(&mut state, &bvh, mesh, 4, 12);
        area_equalize(&mut state, &bvh, mesh, 30);
        recenter_offsets(&mut state, &bvh, mesh);
        resolve_attributes(&mut state, &bvh, mesh);
    }

    // compact surviving vertices and faces, preserving order
    let nv_now = state.positions.len();
    let mut used = vec![false; nv_now];
    for (fi, f) in state.faces.iter().enumerate() {
        if state.face_alive[fi] {
            for &c in f {
                used[c as usize] = true;
            }
        }
    }
    // pinned seam vertices survive even if isolated, keeping pairs intact
    if preserve.seam {
        for &(a, b) in &mesh.seam_pairs {
            if state.vertex_alive[a as usize] && state.vertex_alive[b as usize] {
                used[a as usize] = true;
                used[b as usize] = true;
            }
        }
    }
    let mut remap = vec![u32::MAX; nv_now];
    let mut out = GridMesh::empty(mesh.layer_id, &mesh.texture_ref);
    for v in 0..nv_now {
        if used[v] && state.vertex_alive[v] {
            remap[v] = out.positions.len() as u32;
            out.positions.push(state.positions[v]);
            out.uv.push(state.uv[v]);
            out.alpha.push(state.alpha[v]);
        }
    }
    for (fi, f) in state.faces.iter().enumerate() {
        if !state.face_alive[fi] {
            continue;
        }
        let t = [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]];
        // degenerate-area faces are dropped
        let (a, b, c) = (
            out.positions[t[0] as usize],
            out.positions[t[1] as usize],
            out.positions[t[2] as usize],
        );
        if 0.5 * (b - a).cross(c - a).length() <= 1e-12 {
            continue;
        }
        out.indices.push(t);
    }
    for &(a, b) in &mesh.seam_pairs {
        let (ra, rb) = (remap[a as usize], remap[b as usize]);
        if ra != u32::MAX && rb != u32::MAX {
            out.seam_pairs.push((ra, rb));
        }
    }
    out.validate()?;
    Ok((out, warnings))
}
