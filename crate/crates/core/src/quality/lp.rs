//! Dense two-phase simplex for small linear programs, Bland's rule.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 10_000;

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let mut r = self.t.row(row).into_owned();
        r /= p;
        self.t.set_row(row, &r);
        for i in 0..self.t.nrows() {
            if i != row {
                let f = self.t[(i, col)];
                if f != 0.0 {
                    let ri = self.t.row(i) - r.clone() * f;
                    self.t.set_row(i, &ri);
                    self.t[(i, col)] = 0.0;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `cost·x` over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        for _ in 0..MAX_PIVOTS {
            let rhs = self.rhs();
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..self.t.nrows()).map(|i| cost[self.basis[i]] * self.t[(i, j)]).sum();
                cost[j] - z > EPS
            });
            let Some(j) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, j)];
                if a > EPS {
                    let ratio = self.t[(i, rhs)] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((i, _)) => self.pivot(i, j),
                None => return false,
            }
        }
        log::warn!("simplex pivot limit reached");
        true
    }
}

/// Maximizes `c·x` subject to `a·x = b`, `x ≥ 0`.
pub fn maximize(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> LpOutcome {
    let (m, n) = a.shape();
    let mut t = DMatrix::zeros(m, n + m + 1);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = s * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, n + m)] = s * b[i];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
    };
    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = -1.0;
    }
    tab.optimize(&phase1, n + m);
    let rhs = tab.rhs();
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.t[(i, rhs)]).sum();
    let scale = 1.0 + b.amax();
    if infeas > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < tab.t.nrows() {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                tab.pivot(i, j);
            } else {
                tab.t = tab.t.clone().remove_row(i);
                tab.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    let mut cost = vec![0.0; n + m];
    cost[..n].copy_from_slice(c.as_slice());
    if !tab.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let rhs = tab.rhs();
    let mut x = DVector::zeros(n);
    for (i, &bj) in tab.basis.iter().enumerate() {
        if bj < n {
            x[bj] = tab.t[(i, rhs)].max(0.0);
        }
    }
    let value = c.dot(&x);
    LpOutcome::Optimal { x, value }
}
