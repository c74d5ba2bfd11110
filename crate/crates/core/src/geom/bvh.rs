//! Axis-aligned bounding-volume hierarchy over the triangles of a mesh.
//!
//! The tree owns a copy of the triangle corners and normals so that queries
//! need no reference to the source mesh. Every query is exact with respect to
//! brute-force iteration over all triangles: node boxes are padded slightly
//! so that floating-point rounding can only make traversal more permissive.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use super::mesh::TriangleMesh;
use super::triangle::{closest_point_on_triangle, ray_triangle};
use super::{UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min.add_scalar(-margin),
            max: self.max.add_scalar(margin),
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.max[a] && o.min[a] <= self.max[a])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Parametric interval where the ray is inside the closed box, clipped to
    /// `[lo, hi]`.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3, mut lo: f64, mut hi: f64) -> Option<(f64, f64)> {
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let t1 = (self.min[a] - origin[a]) * inv;
            let t2 = (self.max[a] - origin[a]) * inv;
            let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            lo = lo.max(near);
            hi = hi.min(far);
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter; distance along the ray when the direction is unit.
    pub t: f64,
    pub point: Vec3,
    /// Outward normal of the hit triangle.
    pub normal: UnitVec3,
    pub triangle: usize,
}

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    /// Leaf: first index into `order`. Inner: left child.
    first: u32,
    /// Leaf: triangle count (> 0). Inner: 0.
    count: u32,
    /// Inner: right child.
    right: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    normals: Vec<UnitVec3>,
    nodes: Vec<Node>,
    order: Vec<u32>,
    closed: bool,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let tris: Vec<[Vec3; 3]> = (0..mesh.num_triangles()).map(|i| mesh.triangle(i)).collect();
        let normals = mesh.normals().to_vec();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t.iter())).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &centroids, &boxes);
        Bvh {
            tris,
            normals,
            nodes,
            order,
            closed: mesh.is_watertight(),
        }
    }

    pub fn num_triangles(&self) -> usize {
        self.tris.len()
    }

    pub fn triangle(&self, i: usize) -> &[Vec3; 3] {
        &self.tris[i]
    }

    pub fn normal(&self, i: usize) -> &UnitVec3 {
        &self.normals[i]
    }

    pub fn aabb(&self) -> Aabb {
        self.nodes[0].aabb
    }

    /// The source mesh was watertight, so inside tests are meaningful.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Nearest hit with `t` in `(t_min, t_max]`; ties go to the lowest
    /// triangle index.
    pub fn raycast(&self, origin: &Vec3, dir: &UnitVec3, t_min: f64, t_max: f64) -> Option<Hit> {
        let d = dir.as_ref();
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let limit = best.map_or(t_max, |b| b.0);
            if node.aabb.ray_interval(origin, d, t_min, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let ti = ti as usize;
                    if let Some(t) = ray_triangle(origin, d, &self.tris[ti]) {
                        if t > t_min && t <= t_max && is_better(t, ti, best) {
                            best = Some((t, ti));
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.first);
            }
        }
        best.map(|(t, ti)| self.make_hit(origin, d, t, ti))
    }

    /// All hits with `t` in `(t_min, t_max]`, sorted by `(t, triangle)`.
    pub fn raycast_all(&self, origin: &Vec3, dir: &UnitVec3, t_min: f64, t_max: f64) -> Vec<Hit> {
        let d = dir.as_ref();
        let mut hits = Vec::new();
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.aabb.ray_interval(origin, d, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let ti = ti as usize;
                    if let Some(t) = ray_triangle(origin, d, &self.tris[ti]) {
                        if t > t_min && t <= t_max {
                            hits.push(self.make_hit(origin, d, t, ti));
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.first);
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.triangle.cmp(&b.triangle)));
        hits
    }

    /// Calls `visit` with every triangle whose leaf box overlaps `query`
    /// (a superset of the triangles that intersect it).
    pub fn query_aabb(&self, query: &Aabb, mut visit: impl FnMut(usize)) {
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if !node.aabb.overlaps(query) {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    visit(ti as usize);
                }
            } else {
                stack.push(node.right);
                stack.push(node.first);
            }
        }
    }

    /// Closest surface point within `max_dist`, as `(distance, point, triangle)`.
    pub fn closest_point(&self, p: &Vec3, max_dist: f64) -> Option<(f64, Vec3, usize)> {
        #[derive(PartialEq)]
        struct Entry(f64, u32);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        let mut best_d2 = max_dist * max_dist;
        let mut best: Option<(Vec3, usize)> = None;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(self.nodes[0].aabb.distance_squared(p), 0));
        while let Some(Entry(d2, ni)) = heap.pop() {
            if d2 > best_d2 {
                break;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                for &ti in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let ti = ti as usize;
                    let q = closest_point_on_triangle(p, &self.tris[ti]);
                    let dq = (q - p).norm_squared();
                    let better = match best {
                        None => dq <= best_d2,
                        Some((_, bi)) => dq < best_d2 || (dq == best_d2 && ti < bi),
                    };
                    if better {
                        best_d2 = dq;
                        best = Some((q, ti));
                    }
                }
            } else {
                for c in [node.first, node.right] {
                    let dc = self.nodes[c as usize].aabb.distance_squared(p);
                    if dc <= best_d2 {
                        heap.push(Entry(dc, c));
                    }
                }
            }
        }
        best.map(|(q, ti)| (best_d2.sqrt(), q, ti))
    }

    /// Inside test for closed meshes by majority vote of crossing parity
    /// along three fixed skew directions.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        if !self.aabb().contains(p) {
            return false;
        }
        const DIRS: [[f64; 3]; 3] = [
            [0.577_215_664_9, 0.318_309_886_2, 0.751_988_392_1],
            [-0.402_398_741_2, 0.812_743_210_3, -0.421_356_237_3],
            [0.236_067_977_5, -0.506_178_143_2, -0.829_457_114_2],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| {
                let d = nalgebra::Unit::new_normalize(Vector3::new(d[0], d[1], d[2]));
                self.raycast_all(p, &d, 0.0, f64::INFINITY).len() % 2 == 1
            })
            .count();
        votes >= 2
    }

    fn make_hit(&self, origin: &Vec3, dir: &Vec3, t: f64, ti: usize) -> Hit {
        Hit {
            t,
            point: origin + dir * t,
            normal: self.normals[ti],
            triangle: ti,
        }
    }
}

#[inline]
fn is_better(t: f64, ti: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bt, bi)) => t < bt || (t == bt && ti < bi),
    }
}

fn build_node(nodes: &mut Vec<Node>, order: &mut [u32], offset: u32, centroids: &[Vec3], boxes: &[Aabb]) -> u32 {
    let mut aabb = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in order.iter() {
        aabb = aabb.union(&boxes[i as usize]);
        cbounds.grow(&centroids[i as usize]);
    }
    let pad = 1e-9 * aabb.extent().amax() + 1e-12;
    let aabb = aabb.expanded(pad);
    let index = nodes.len() as u32;
    nodes.push(Node {
        aabb,
        first: offset,
        count: order.len() as u32,
        right: 0,
    });
    if order.len() <= LEAF_SIZE {
        return index;
    }
    let axis = cbounds.extent().imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, centroids, boxes);
    let right = build_node(nodes, hi, offset + mid as u32, centroids, boxes);
    let n = &mut nodes[index as usize];
    n.first = left;
    n.count = 0;
    n.right = right;
    index
}
