//! Convex QP with elastic inequality rows, solved by a Mehrotra
//! predictor-corrector interior-point method.
//!
//! ```text
//! min  ½ dᵀH d + gᵀd + ρ Σ tᵢ
//! s.t. aᵢᵀd − tᵢ ≤ bᵢ,  tᵢ ≥ 0
//!      lo ≤ d ≤ hi
//! ```
//!
//! Rows are stored sparsely: a dense leading block plus at most one extra
//! column, which matches the single-shooting structure (a state at knot
//! `k` depends on the first `2k` controls, a soft row on one slack).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRow {
    pub lead: Vec<f64>,
    pub extra: Option<(usize, f64)>,
}

impl SparseRow {
    fn dot(&self, x: &DVector<f64>) -> f64 {
        let mut acc: f64 = self.lead.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        if let Some((c, w)) = self.extra {
            acc += w * x[c];
        }
        acc
    }

    fn axpy_into(&self, alpha: f64, out: &mut DVector<f64>) {
        for (o, a) in out.iter_mut().zip(&self.lead) {
            *o += alpha * a;
        }
        if let Some((c, w)) = self.extra {
            out[c] += alpha * w;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Qp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub rows: Vec<SparseRow>,
    pub rhs: Vec<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub d: DVector<f64>,
    pub lambda: Vec<f64>,
    pub elastic: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITER: usize = 80;
const TOL: f64 = 1e-9;
const STEP_TO_BOUNDARY: f64 = 0.995;

struct Iterate {
    d: DVector<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    t: Vec<f64>,
    mu: Vec<f64>,
    p: Vec<f64>,
    pi: Vec<f64>,
    q: Vec<f64>,
    om: Vec<f64>,
}

struct Direction {
    d: DVector<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    t: Vec<f64>,
    mu: Vec<f64>,
    p: Vec<f64>,
    pi: Vec<f64>,
    q: Vec<f64>,
    om: Vec<f64>,
}

struct Residuals {
    dual: DVector<f64>,
    row: Vec<f64>,
    mult: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Qp {
    fn lower_set(&self) -> Vec<usize> {
        (0..self.lo.len()).filter(|&j| self.lo[j].is_finite()).collect()
    }

    fn upper_set(&self) -> Vec<usize> {
        (0..self.hi.len()).filter(|&j| self.hi[j].is_finite()).collect()
    }

    pub fn solve(&self) -> QpSolution {
        let n = self.g.len();
        let m = self.rows.len();
        let lset = self.lower_set();
        let uset = self.upper_set();

        let mut it = Iterate {
            d: DVector::zeros(n),
            s: vec![0.0; m],
            lam: vec![1.0; m],
            t: vec![0.0; m],
            mu: vec![(self.rho - 1.0).max(1.0); m],
            p: lset.iter().map(|&j| (-self.lo[j]).max(1.0)).collect(),
            pi: vec![1.0; lset.len()],
            q: uset.iter().map(|&j| self.hi[j].max(1.0)).collect(),
            om: vec![1.0; uset.len()],
        };
        for i in 0..m {
            it.t[i] = 1.0 / it.mu[i];
            it.s[i] = (self.rhs[i] + it.t[i]).max(1.0);
        }

        let count = (2 * m + lset.len() + uset.len()).max(1) as f64;
        let scale = 1.0 + self.g.amax().max(self.rhs.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
        let mut converged = false;
        let mut iterations = 0;

        for k in 0..MAX_ITER {
            iterations = k + 1;
            let res = self.residuals(&it, &lset, &uset);
            let gap = complementarity(&it) / count;
            let primal = res
                .row
                .iter()
                .chain(&res.lower)
                .chain(&res.upper)
                .chain(&res.mult)
                .fold(0.0, |a: f64, b| a.max(b.abs()));
            if res.dual.amax() <= TOL * scale && primal <= TOL * scale && gap <= TOL * scale {
                converged = true;
                iterations = k;
                break;
            }

            let Some(factor) = self.factor(&it, &lset, &uset) else {
                break;
            };

            // Predictor.
            let cs: Vec<f64> = (0..m).map(|i| it.s[i] * it.lam[i]).collect();
            let ct: Vec<f64> = (0..m).map(|i| it.t[i] * it.mu[i]).collect();
            let cp: Vec<f64> = (0..lset.len()).map(|i| it.p[i] * it.pi[i]).collect();
            let cq: Vec<f64> = (0..uset.len()).map(|i| it.q[i] * it.om[i]).collect();
            let aff = self.direction(&it, &res, &factor, &lset, &uset, &cs, &ct, &cp, &cq);
            let alpha_aff = max_step(&it, &aff);
            let mu_aff = complementarity_after(&it, &aff, alpha_aff) / count;
            let sigma = (mu_aff / gap.max(f64::MIN_POSITIVE)).powi(3).min(1.0);
            let target = sigma * gap;

            // Corrector.
            let cs: Vec<f64> = (0..m).map(|i| it.s[i] * it.lam[i] + aff.s[i] * aff.lam[i] - target).collect();
            let ct: Vec<f64> = (0..m).map(|i| it.t[i] * it.mu[i] + aff.t[i] * aff.mu[i] - target).collect();
            let cp: Vec<f64> = (0..lset.len()).map(|i| it.p[i] * it.pi[i] + aff.p[i] * aff.pi[i] - target).collect();
            let cq: Vec<f64> = (0..uset.len()).map(|i| it.q[i] * it.om[i] + aff.q[i] * aff.om[i] - target).collect();
            let dir = self.direction(&it, &res, &factor, &lset, &uset, &cs, &ct, &cp, &cq);
            let alpha = (STEP_TO_BOUNDARY * max_step(&it, &dir)).min(1.0);
            apply(&mut it, &dir, alpha);
        }

        QpSolution {
            d: it.d,
            lambda: it.lam,
            elastic: it.t,
            iterations,
            converged,
        }
    }

    fn residuals(&self, it: &Iterate, lset: &[usize], uset: &[usize]) -> Residuals {
        let mut dual = &self.h * &it.d + &self.g;
        for (row, &l) in self.rows.iter().zip(&it.lam) {
            row.axpy_into(l, &mut dual);
        }
        for (i, &j) in lset.iter().enumerate() {
            dual[j] -= it.pi[i];
        }
        for (i, &j) in uset.iter().enumerate() {
            dual[j] += it.om[i];
        }
        let row = (0..self.rows.len())
            .map(|i| self.rows[i].dot(&it.d) + it.s[i] - it.t[i] - self.rhs[i])
            .collect();
        let mult = (0..self.rows.len()).map(|i| it.lam[i] + it.mu[i] - self.rho).collect();
        let lower = lset.iter().enumerate().map(|(i, &j)| -it.d[j] + it.p[i] + self.lo[j]).collect();
        let upper = uset.iter().enumerate().map(|(i, &j)| it.d[j] + it.q[i] - self.hi[j]).collect();
        Residuals {
            dual,
            row,
            mult,
            lower,
            upper,
        }
    }

    /// Cholesky factor of `H + Aᵀ D⁻¹ A + bound terms`, with `D` the
    /// condensed row weight `s/λ + t/μ`.
    fn factor(&self, it: &Iterate, lset: &[usize], uset: &[usize]) -> Option<Factor> {
        let n = self.g.len();
        let mut k = self.h.clone();
        let weights: Vec<f64> = (0..self.rows.len())
            .map(|i| 1.0 / (it.s[i] / it.lam[i] + it.t[i] / it.mu[i]))
            .collect();
        {
            let data = k.as_mut_slice();
            for (row, &w) in self.rows.iter().zip(&weights) {
                let lead = &row.lead;
                for (b, &lb) in lead.iter().enumerate() {
                    let vb = w * lb;
                    if vb == 0.0 {
                        continue;
                    }
                    let col = &mut data[b * n..(b + 1) * n];
                    for (a, &la) in lead.iter().enumerate().skip(b) {
                        col[a] += vb * la;
                    }
                }
                if let Some((c, coef)) = row.extra {
                    let vc = w * coef;
                    let col = &mut data[..];
                    for (a, &la) in lead.iter().enumerate() {
                        // Lower triangle: row c > a in column a.
                        col[a * n + c] += vc * la;
                    }
                    col[c * n + c] += vc * coef;
                }
            }
        }
        for (i, &j) in lset.iter().enumerate() {
            k[(j, j)] += it.pi[i] / it.p[i];
        }
        for (i, &j) in uset.iter().enumerate() {
            k[(j, j)] += it.om[i] / it.q[i];
        }
        for b in 0..n {
            for a in (b + 1)..n {
                k[(b, a)] = k[(a, b)];
            }
        }
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut trial = k.clone();
            if reg > 0.0 {
                for j in 0..n {
                    trial[(j, j)] += reg;
                }
            }
            if let Some(chol) = trial.cholesky() {
                return Some(Factor { chol, weights });
            }
            reg = if reg == 0.0 { 1e-10 * (1.0 + k.diagonal().amax()) } else { reg * 100.0 };
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        res: &Residuals,
        factor: &Factor,
        lset: &[usize],
        uset: &[usize],
        cs: &[f64],
        ct: &[f64],
        cp: &[f64],
        cq: &[f64],
    ) -> Direction {
        let m = self.rows.len();
        // e = −r_row + c_s/λ + (−c_t + t r_mult)/μ
        let e: Vec<f64> = (0..m)
            .map(|i| -res.row[i] + cs[i] / it.lam[i] + (-ct[i] + it.t[i] * res.mult[i]) / it.mu[i])
            .collect();
        let mut rhs = -res.dual.clone();
        for i in 0..m {
            self.rows[i].axpy_into(factor.weights[i] * e[i], &mut rhs);
        }
        for (i, &j) in lset.iter().enumerate() {
            rhs[j] += (-cp[i] + it.pi[i] * res.lower[i]) / it.p[i];
        }
        for (i, &j) in uset.iter().enumerate() {
            rhs[j] -= (-cq[i] + it.om[i] * res.upper[i]) / it.q[i];
        }
        let d = factor.chol.solve(&rhs);

        let mut lam = vec![0.0; m];
        let mut s = vec![0.0; m];
        let mut mu = vec![0.0; m];
        let mut t = vec![0.0; m];
        for i in 0..m {
            lam[i] = factor.weights[i] * (self.rows[i].dot(&d) - e[i]);
            s[i] = (-cs[i] - it.s[i] * lam[i]) / it.lam[i];
            mu[i] = -res.mult[i] - lam[i];
            t[i] = (-ct[i] - it.t[i] * mu[i]) / it.mu[i];
        }
        let mut p = vec![0.0; lset.len()];
        let mut pi = vec![0.0; lset.len()];
        for (i, &j) in lset.iter().enumerate() {
            p[i] = -res.lower[i] + d[j];
            pi[i] = (-cp[i] - it.pi[i] * p[i]) / it.p[i];
        }
        let mut q = vec![0.0; uset.len()];
        let mut om = vec![0.0; uset.len()];
        for (i, &j) in uset.iter().enumerate() {
            q[i] = -res.upper[i] - d[j];
            om[i] = (-cq[i] - it.om[i] * q[i]) / it.q[i];
        }
        Direction {
            d,
            s,
            lam,
            t,
            mu,
            p,
            pi,
            q,
            om,
        }
    }
}

struct Factor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    weights: Vec<f64>,
}

fn complementarity(it: &Iterate) -> f64 {
    dot(&it.s, &it.lam) + dot(&it.t, &it.mu) + dot(&it.p, &it.pi) + dot(&it.q, &it.om)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn complementarity_after(it: &Iterate, dir: &Direction, alpha: f64) -> f64 {
    let pair = |x: &[f64], dx: &[f64], y: &[f64], dy: &[f64]| -> f64 {
        (0..x.len()).map(|i| (x[i] + alpha * dx[i]) * (y[i] + alpha * dy[i])).sum()
    };
    pair(&it.s, &dir.s, &it.lam, &dir.lam)
        + pair(&it.t, &dir.t, &it.mu, &dir.mu)
        + pair(&it.p, &dir.p, &it.pi, &dir.pi)
        + pair(&it.q, &dir.q, &it.om, &dir.om)
}

fn max_step(it: &Iterate, dir: &Direction) -> f64 {
    let mut alpha: f64 = 1.0;
    let mut limit = |x: &[f64], dx: &[f64]| {
        for (v, dv) in x.iter().zip(dx) {
            if *dv < 0.0 {
                alpha = alpha.min(-v / dv);
            }
        }
    };
    limit(&it.s, &dir.s);
    limit(&it.lam, &dir.lam);
    limit(&it.t, &dir.t);
    limit(&it.mu, &dir.mu);
    limit(&it.p, &dir.p);
    limit(&it.pi, &dir.pi);
    limit(&it.q, &dir.q);
    limit(&it.om, &dir.om);
    alpha
}

fn apply(it: &mut Iterate, dir: &Direction, alpha: f64) {
    it.d.axpy(alpha, &dir.d, 1.0);
    let upd = |x: &mut [f64], dx: &[f64]| {
        for (v, dv) in x.iter_mut().zip(dx) {
            *v += alpha * dv;
        }
    };
    upd(&mut it.s, &dir.s);
    upd(&mut it.lam, &dir.lam);
    upd(&mut it.t, &dir.t);
    upd(&mut it.mu, &dir.mu);
    upd(&mut it.p, &dir.p);
    upd(&mut it.pi, &dir.pi);
    upd(&mut it.q, &dir.q);
    upd(&mut it.om, &dir.om);
}
