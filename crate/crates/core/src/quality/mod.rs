//! Contact wrenches and the Ferrari-Canny quality: the radius of the largest
//! origin-centered ball inside the convex hull of the grasp wrenches.
//!
//! The radius is `min_{‖d‖=1} h(d)` with `h(d) = max_j d·w_j`. It is found by
//! evaluating `h` on a fixed quasi-random direction set and polishing the
//! best directions with a vertex walk on the polar polytope
//! `{x : w_j·x ≤ 1}`, whose vertex of largest norm `x*` gives `Q = 1/‖x*‖`.
//! Interiority of the origin is decided first by a linear program.

pub mod lp;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geom::{orthonormal_basis, UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench6 {
    pub force: Vec3,
    /// Already multiplied by the torque scale.
    pub torque: Vec3,
}

impl Wrench6 {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    /// Friction-cone edges per contact.
    pub cone_edges: usize,
    /// Torque scale λ in 1/m; set per object to the inverse bounding radius.
    pub torque_scale: f64,
    pub direction_samples: usize,
    /// Best sampled directions refined by the vertex walk.
    pub polish_seeds: usize,
    pub tol: f64,
    /// Soft-finger contact radius in meters; 0 gives hard point contacts.
    pub torsion_radius: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            cone_edges: 8,
            torque_scale: 1.0,
            direction_samples: 2048,
            polish_seeds: 32,
            tol: 1e-6,
            torsion_radius: 0.005,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.cone_edges < 3 {
            return Err(format!("cone_edges must be >= 3, got {}", self.cone_edges));
        }
        if !(self.torque_scale > 0.0 && self.torque_scale.is_finite()) {
            return Err(format!("torque_scale must be > 0, got {}", self.torque_scale));
        }
        if !(self.tol > 0.0) {
            return Err(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.torsion_radius >= 0.0) {
            return Err(format!("torsion_radius must be >= 0, got {}", self.torsion_radius));
        }
        if self.polish_seeds == 0 && self.direction_samples == 0 {
            return Err("need direction samples or polish seeds".into());
        }
        Ok(())
    }

    pub fn with_torque_scale(mut self, lambda: f64) -> Self {
        self.torque_scale = lambda;
        self
    }
}

/// Unit edge forces of the inscribed friction pyramid about the inward
/// normal `−n`, each at angle `atan(γ)` from it.
pub fn cone_edges(outward_normal: &UnitVec3, gamma: f64, m: usize) -> Vec<Vec3> {
    let inward = -outward_normal.into_inner();
    if gamma == 0.0 {
        return vec![inward];
    }
    let (u, v) = orthonormal_basis(outward_normal);
    (0..m)
        .map(|j| {
            let phi = std::f64::consts::TAU * j as f64 / m as f64;
            (inward + (u * phi.cos() + v * phi.sin()) * gamma).normalize()
        })
        .collect()
}

/// Hard point-contact wrenches `(f_j, λ·(c − centroid) × f_j)`.
pub fn contact_wrenches(c: &Vec3, outward_normal: &UnitVec3, centroid: &Vec3, gamma: f64, cfg: &QualityConfig) -> Vec<Wrench6> {
    let arm = c - centroid;
    cone_edges(outward_normal, gamma, cfg.cone_edges)
        .into_iter()
        .map(|f| Wrench6 {
            force: f,
            torque: arm.cross(&f) * cfg.torque_scale,
        })
        .collect()
}

/// Soft-finger wrenches: every hard edge wrench paired with torsional
/// friction `±λ·γ·ρ·f_n` about the contact normal.
pub fn soft_contact_wrenches(c: &Vec3, outward_normal: &UnitVec3, centroid: &Vec3, gamma: f64, cfg: &QualityConfig) -> Vec<Wrench6> {
    let hard = contact_wrenches(c, outward_normal, centroid, gamma, cfg);
    let kappa = gamma * cfg.torsion_radius * cfg.torque_scale;
    if kappa == 0.0 {
        return hard;
    }
    let inward = -outward_normal.into_inner();
    hard.into_iter()
        .flat_map(|w| {
            let t = inward * (kappa * w.force.dot(&inward));
            [
                Wrench6 {
                    force: w.force,
                    torque: w.torque + t,
                },
                Wrench6 {
                    force: w.force,
                    torque: w.torque - t,
                },
            ]
        })
        .collect()
}

/// All wrenches of a multi-contact grasp under the soft-finger model.
pub fn grasp_wrenches(contacts: &[(Vec3, UnitVec3)], centroid: &Vec3, gamma: f64, cfg: &QualityConfig) -> Vec<Wrench6> {
    contacts
        .iter()
        .flat_map(|(c, n)| soft_contact_wrenches(c, n, centroid, gamma, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q: f64,
    pub origin_interior: bool,
    /// Minimum of `h` over the sampled directions alone; `sampled_q − q` is
    /// the improvement contributed by the vertex walk.
    pub sampled_q: f64,
}

pub fn ferrari_canny(wrenches: &[Wrench6], cfg: &QualityConfig) -> f64 {
    ferrari_canny_report(wrenches, cfg).q
}

pub fn ferrari_canny_report(wrenches: &[Wrench6], cfg: &QualityConfig) -> QualityReport {
    let flat: Vec<f64> = wrenches.iter().flat_map(|w| w.to_array()).collect();
    ferrari_canny_nd(&DMatrix::from_row_slice(wrenches.len(), 6, &flat), cfg)
}

pub fn is_force_closure(wrenches: &[Wrench6], cfg: &QualityConfig) -> bool {
    ferrari_canny(wrenches, cfg) > cfg.tol
}

/// Ferrari-Canny radius for points given as the rows of `w`, in any
/// dimension.
pub fn ferrari_canny_nd(w: &DMatrix<f64>, cfg: &QualityConfig) -> QualityReport {
    let zero = QualityReport {
        q: 0.0,
        origin_interior: false,
        sampled_q: 0.0,
    };
    let (n, dim) = w.shape();
    if n <= dim || dim == 0 || w.iter().any(|v| !v.is_finite()) || !origin_interior(w) {
        return zero;
    }
    let dirs = direction_set(dim, cfg.direction_samples);
    let h = &*dirs * w.transpose();
    let support: Vec<f64> = h.row_iter().map(|r| r.max()).collect();
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| support[a].total_cmp(&support[b]).then(a.cmp(&b)));
    let sampled_q = support[order[0]];
    if !(sampled_q > 0.0) {
        return zero;
    }
    let mut best_norm = 1.0 / sampled_q;
    for &k in order.iter().take(cfg.polish_seeds.max(1)) {
        let x0 = dirs.row(k).transpose() / support[k];
        best_norm = best_norm.max(polish(w, x0));
    }
    QualityReport {
        q: 1.0 / best_norm,
        origin_interior: true,
        sampled_q,
    }
}

/// Full rank and a strictly positive convex combination equal to the origin.
fn origin_interior(w: &DMatrix<f64>) -> bool {
    let (n, dim) = w.shape();
    let sv = w.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-9 * smax) {
        return false;
    }
    // max t  s.t.  Σν_j w_j + t·Σw_j = 0,  Σν_j + n·t = 1,  ν, t ≥ 0.
    let mut a = DMatrix::zeros(dim + 1, n + 1);
    for j in 0..n {
        for d in 0..dim {
            a[(d, j)] = w[(j, d)];
            a[(d, n)] += w[(j, d)];
        }
        a[(dim, j)] = 1.0;
    }
    a[(dim, n)] = n as f64;
    let mut b = DVector::zeros(dim + 1);
    b[dim] = 1.0;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    match lp::maximize(&a, &b, &c) {
        lp::LpOutcome::Optimal { value, .. } => value * n as f64 > 1e-9,
        _ => false,
    }
}

type DirCache = Mutex<HashMap<(usize, usize), Arc<DMatrix<f64>>>>;

/// Fixed unit directions: `±e_i` followed by `count` Gaussian-normalized
/// samples from a constant-seeded generator.
fn direction_set(dim: usize, count: usize) -> Arc<DMatrix<f64>> {
    static CACHE: OnceLock<DirCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap();
    guard
        .entry((dim, count))
        .or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_D1EC);
            let rows = 2 * dim + count;
            let mut m = DMatrix::zeros(rows, dim);
            for i in 0..dim {
                m[(2 * i, i)] = 1.0;
                m[(2 * i + 1, i)] = -1.0;
            }
            let mut r = 2 * dim;
            while r < rows {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    for (d, x) in v.iter().enumerate() {
                        m[(r, d)] = x / norm;
                    }
                    r += 1;
                }
            }
            Arc::new(m)
        })
        .clone()
}

const WALK_LIMIT: usize = 200;

/// Climbs from the boundary point `x` of `{x : w_j·x ≤ 1}` to a vertex and
/// then moves to better adjacent vertices until none is farther from the
/// origin. Returns the final norm.
fn polish(w: &DMatrix<f64>, mut x: DVector<f64>) -> f64 {
    let (n, dim) = w.shape();
    let dot = |j: usize, v: &DVector<f64>| -> f64 { (0..dim).map(|d| w[(j, d)] * v[d]).sum() };
    let slack = |j: usize, x: &DVector<f64>| (1.0 - dot(j, x)).max(0.0);
    // Largest step along `p` before some constraint outside `active` binds.
    let ratio = |x: &DVector<f64>, p: &DVector<f64>, active: &[usize]| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if active.contains(&j) {
                continue;
            }
            let a = dot(j, p);
            if a > 1e-14 {
                let t = slack(j, x) / a;
                if best.is_none_or(|(_, bt)| t < bt) {
                    best = Some((j, t));
                }
            }
        }
        best
    };
    let first = (0..n)
        .max_by(|&a, &b| dot(a, &x).total_cmp(&dot(b, &x)).then(b.cmp(&a)))
        .unwrap();
    let mut active = vec![first];
    let rows = |active: &[usize]| -> DMatrix<f64> { DMatrix::from_fn(active.len(), dim, |i, d| w[(active[i], d)]) };

    // Climb: follow the projected gradient within the current face.
    let mut iters = 0;
    while active.len() < dim && iters < WALK_LIMIT {
        iters += 1;
        let wa = rows(&active);
        let Some(ginv) = (&wa * wa.transpose()).try_inverse() else {
            break;
        };
        let proj = |v: &DVector<f64>| v - wa.transpose() * (&ginv * (&wa * v));
        let mut p = proj(&x);
        if p.norm() <= 1e-12 * x.norm() {
            // Stationary on this face: any nullspace direction increases ‖x‖.
            let e = (0..dim)
                .map(|i| proj(&DVector::from_fn(dim, |d, _| if d == i { 1.0 } else { 0.0 })))
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap();
            if e.norm() < 1e-12 {
                break;
            }
            let fwd = ratio(&x, &e, &active).map(|(j, t)| (j, &x + &e * t));
            let back = ratio(&x, &-&e, &active).map(|(j, t)| (j, &x - &e * t));
            let pick = match (fwd, back) {
                (Some(a), Some(b)) => Some(if b.1.norm() > a.1.norm() { b } else { a }),
                (a, b) => a.or(b),
            };
            let Some((j, nx)) = pick else { break };
            x = nx;
            active.push(j);
            continue;
        }
        p /= p.norm();
        let Some((j, t)) = ratio(&x, &p, &active) else {
            break;
        };
        x += p * t;
        active.push(j);
    }

    // Walk: move to the farthest adjacent vertex while it improves.
    if active.len() == dim {
        for _ in 0..WALK_LIMIT {
            let Some(inv) = rows(&active).try_inverse() else {
                break;
            };
            let base = x.norm_squared();
            let mut best: Option<(usize, usize, DVector<f64>, f64)> = None;
            for i in 0..dim {
                let e = -inv.column(i).into_owned();
                if let Some((j, t)) = ratio(&x, &e, &active) {
                    let nx = &x + e * t;
                    let nn = nx.norm_squared();
                    if nn > base * (1.0 + 1e-12) && best.as_ref().is_none_or(|b| nn > b.3) {
                        best = Some((i, j, nx, nn));
                    }
                }
            }
            match best {
                Some((i, j, nx, _)) => {
                    active[i] = j;
                    x = nx;
                }
                None => break,
            }
        }
    }
    x.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::angle_between;
    use nalgebra::{Unit, Vector3};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn cross_polytope(dim: usize) -> DMatrix<f64> {
        DMatrix::from_fn(2 * dim, dim, |r, c| {
            if r / 2 == c {
                if r % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        })
    }

    /// Exact radius by enumerating every `dim`-subset as a candidate facet.
    fn facet_oracle(w: &DMatrix<f64>) -> f64 {
        let (n, dim) = w.shape();
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..dim).collect();
        loop {
            let m = DMatrix::from_fn(dim, dim, |i, d| w[(idx[i], d)]);
            if let Some(a) = m.clone().lu().solve(&DVector::from_element(dim, 1.0)) {
                if (&m * &a - DVector::from_element(dim, 1.0)).amax() < 1e-9 && (0..n).all(|j| w.row(j).dot(&a.transpose()) <= 1.0 + 1e-9) {
                    best = best.min(1.0 / a.norm());
                }
            }
            // next combination
            let mut i = dim;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < n - dim + i {
                    idx[i] += 1;
                    for k in i + 1..dim {
                        idx[k] = idx[k - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn dense_oracle(w: &DMatrix<f64>, samples: usize) -> f64 {
        let dim = w.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut best = f64::INFINITY;
        for _ in 0..samples {
            let d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            let h = (w * &d).max();
            best = best.min(h);
        }
        best
    }

    fn random_interior(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> DMatrix<f64> {
        loop {
            let w = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0));
            if origin_interior(&w) {
                return w;
            }
        }
    }

    #[test]
    fn cross_polytope_radius() {
        let q = ferrari_canny_nd(&cross_polytope(6), &QualityConfig::default()).q;
        assert!((q - 1.0 / 6f64.sqrt()).abs() < 1e-3, "{q}");
    }

    #[test]
    fn half_space_sets_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let d = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            let w = DMatrix::from_fn(20, 6, |_, _| rng.random_range(-1.0..1.0));
            let w = DMatrix::from_fn(20, 6, |r, c| {
                let row = w.row(r).transpose();
                let s = row.dot(&d);
                let row = if s < 0.0 { -row } else { row };
                row[c] + 0.01 * d[c]
            });
            assert_eq!(ferrari_canny_nd(&w, &QualityConfig::default()).q, 0.0);
        }
    }

    #[test]
    fn matches_dense_sampling_in_low_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = QualityConfig::default();
        for dim in 2..=3 {
            let mut done = 0;
            while done < 5 {
                let n = rng.random_range(dim + 2..=20);
                let w = random_interior(&mut rng, dim, n);
                let q = ferrari_canny_nd(&w, &cfg).q;
                // The sampled minimum overshoots linearly in the angular gap,
                // so relative agreement is only meaningful away from Q ≈ 0.
                if q < 0.1 {
                    continue;
                }
                done += 1;
                let o = dense_oracle(&w, 1_000_000);
                assert!(((q - o) / o).abs() < 0.02, "dim {dim}: {q} vs {o}");
            }
        }
    }

    #[test]
    fn matches_facet_enumeration_up_to_six_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = QualityConfig::default();
        for dim in 2..=6 {
            for _ in 0..8 {
                let n = rng.random_range(dim + 2..=(dim + 10).min(20));
                let w = random_interior(&mut rng, dim, n);
                let q = ferrari_canny_nd(&w, &cfg).q;
                let o = facet_oracle(&w);
                assert!(((q - o) / o).abs() < 1e-6, "dim {dim}, n {n}: {q} vs {o}");
            }
        }
    }

    #[test]
    fn contact_wrench_shapes() {
        let cfg = QualityConfig::default();
        let n = Unit::new_normalize(Vector3::new(0.3, -0.2, 0.9));
        let c = Vector3::new(0.01, 0.02, 0.03);
        let single = contact_wrenches(&c, &n, &Vector3::zeros(), 0.0, &cfg);
        assert_eq!(single.len(), 1);
        assert!((single[0].force + n.into_inner()).norm() < 1e-15);

        let w = contact_wrenches(&c, &n, &Vector3::zeros(), 0.3, &cfg);
        assert_eq!(w.len(), 8);
        let (u, _) = orthonormal_basis(&n);
        for (j, wr) in w.iter().enumerate() {
            let a = angle_between(&wr.force, &-n.into_inner());
            assert!((a - 0.3f64.atan()).abs() < 1e-12);
            let tangential = wr.force + n.into_inner() * n.dot(&-wr.force);
            let az = angle_between(&tangential, &u);
            let expect = std::f64::consts::TAU * j as f64 / 8.0;
            let expect = expect.min(std::f64::consts::TAU - expect);
            assert!((az - expect).abs() < 1e-9);
        }
        for wr in contact_wrenches(&c, &n, &c, 0.3, &cfg) {
            assert_eq!(wr.torque, Vector3::zeros());
        }
    }

    #[test]
    fn force_closure_examples() {
        let cfg = QualityConfig::default().with_torque_scale(1.0 / 0.015);
        let x = Vector3::x_axis();
        let single = contact_wrenches(&Vector3::new(0.015, 0.0, 0.0), &x, &Vector3::zeros(), 0.0, &cfg);
        assert!(!is_force_closure(&single, &cfg));
        let pair = grasp_wrenches(
            &[
                (Vector3::new(0.015, 0.0, 0.0), x),
                (Vector3::new(-0.015, 0.0, 0.0), -x),
            ],
            &Vector3::zeros(),
            0.3,
            &cfg,
        );
        assert!(is_force_closure(&pair, &cfg));
        let cp = cross_polytope(6);
        let ws: Vec<Wrench6> = cp
            .row_iter()
            .map(|r| Wrench6 {
                force: Vector3::new(r[0], r[1], r[2]),
                torque: Vector3::new(r[3], r[4], r[5]),
            })
            .collect();
        assert!(is_force_closure(&ws, &cfg));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_interior(&mut rng, 6, 16);
            let cfg = QualityConfig::default();
            let q = ferrari_canny_nd(&w, &cfg).q;
            let mut perm: Vec<usize> = (0..16).collect();
            for i in (1..16).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pw = DMatrix::from_fn(16, 6, |r, c| w[(perm[r], c)]);
            let pq = ferrari_canny_nd(&pw, &cfg).q;
            prop_assert!((q - pq).abs() <= 1e-9 * q, "{} vs {}", q, pq);
        }

        #[test]
        fn scales_linearly(seed in any::<u64>(), s in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_interior(&mut rng, 6, 14);
            let cfg = QualityConfig::default();
            let q = ferrari_canny_nd(&w, &cfg).q;
            let sq = ferrari_canny_nd(&(&w * s), &cfg).q;
            prop_assert!((sq - s * q).abs() <= 1e-9 * s * q);
        }

        #[test]
        fn adding_a_wrench_never_decreases(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_interior(&mut rng, 6, 14);
            let extra = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let mut w2 = w.clone().insert_row(14, 0.0);
            w2.set_row(14, &extra.transpose());
            let cfg = QualityConfig::default();
            let (q, q2) = (ferrari_canny_nd(&w, &cfg).q, ferrari_canny_nd(&w2, &cfg).q);
            prop_assert!(q2 >= q * (1.0 - 1e-9), "{} -> {}", q, q2);
        }
    }
}
