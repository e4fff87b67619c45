//! L2-regularized binary logistic regression by truncated Newton-CG.
//!
//! Objective: `(1/n) Σ log(1 + exp(-y_i (w·x_i + b))) + (λ/2)(|w|² + b²)`.
//! The loss is averaged, so duplicating every example leaves the optimum
//! unchanged.

/// Row-major sparse matrix over a compact (per-problem) feature space.
#[derive(Clone, Debug, Default)]
pub(crate) struct LocalCsr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f32>,
    pub n_cols: usize,
}

impl LocalCsr {
    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    /// `X v + v_b`
    fn mul(&self, v: &[f64], vb: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (c, x) = self.row(i);
            *o = c.iter().zip(x).map(|(&j, &xv)| v[j as usize] * xv as f64).sum::<f64>() + vb;
        }
    }

    /// `Xᵀ u` into `out` (cleared first); returns `Σ u`.
    fn tmul(&self, u: &[f64], out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let (c, x) = self.row(i);
            for (&j, &xv) in c.iter().zip(x) {
                out[j as usize] += ui * xv as f64;
            }
        }
        u.iter().sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SolverParams {
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub w: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MAX_CG: usize = 100;
const CG_REL_TOL: f64 = 0.1;
const ARMIJO: f64 = 1e-4;

pub(crate) fn train_logistic(x: &LocalCsr, y: &[bool], p: &SolverParams) -> Solution {
    let n = x.n_rows();
    let d = x.n_cols;
    assert_eq!(y.len(), n);
    assert!(n > 0);
    let inv_n = 1.0 / n as f64;
    let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let mut g = vec![0.0; d];
    let mut coef = vec![0.0; n];
    let mut dcoef = vec![0.0; n];
    let (mut s, mut r, mut pv, mut hp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut xp = vec![0.0; n];
    let mut dz = vec![0.0; n];

    let objective = |z: &[f64], w: &[f64], b: f64| -> f64 {
        let loss: f64 = z.iter().zip(&ys).map(|(zi, yi)| softplus(-yi * zi)).sum();
        loss * inv_n + 0.5 * p.reg * (dot(w, w) + b * b)
    };

    let mut iterations = 0;
    let mut grad_norm;
    let mut f = objective(&z, &w, b);
    loop {
        for i in 0..n {
            let sg = sigmoid(ys[i] * z[i]);
            coef[i] = (sg - 1.0) * ys[i] * inv_n;
            dcoef[i] = sg * (1.0 - sg) * inv_n;
        }
        let gb = x.tmul(&coef, &mut g) + p.reg * b;
        g.iter_mut().zip(&w).for_each(|(gi, wi)| *gi += p.reg * wi);
        grad_norm = (dot(&g, &g) + gb * gb).sqrt();
        if grad_norm <= p.tol || iterations >= p.max_iter {
            break;
        }
        iterations += 1;

        // Conjugate gradient on (Xᵀ D X + λI) s = -g, bias as an extra coordinate.
        s.iter_mut().for_each(|v| *v = 0.0);
        let mut sb = 0.0;
        r.iter_mut().zip(&g).for_each(|(ri, gi)| *ri = -gi);
        let mut rb = -gb;
        pv.copy_from_slice(&r);
        let mut pb = rb;
        let mut rr = dot(&r, &r) + rb * rb;
        let cg_tol = CG_REL_TOL * grad_norm;
        for _ in 0..MAX_CG {
            if rr.sqrt() <= cg_tol {
                break;
            }
            x.mul(&pv, pb, &mut xp);
            xp.iter_mut().zip(&dcoef).for_each(|(v, di)| *v *= di);
            let hpb = x.tmul(&xp, &mut hp) + p.reg * pb;
            hp.iter_mut().zip(&pv).for_each(|(h, pi)| *h += p.reg * pi);
            let php = dot(&pv, &hp) + pb * hpb;
            if php <= 0.0 {
                break;
            }
            let alpha = rr / php;
            s.iter_mut().zip(&pv).for_each(|(si, pi)| *si += alpha * pi);
            sb += alpha * pb;
            r.iter_mut().zip(&hp).for_each(|(ri, h)| *ri -= alpha * h);
            rb -= alpha * hpb;
            let rr_new = dot(&r, &r) + rb * rb;
            let beta = rr_new / rr;
            pv.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            pb = rb + beta * pb;
            rr = rr_new;
        }

        // Backtracking line search along s.
        let slope = dot(&g, &s) + gb * sb;
        if slope >= 0.0 {
            break;
        }
        x.mul(&s, sb, &mut dz);
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial_w = w.clone();
        let mut trial_z = z.clone();
        for _ in 0..30 {
            trial_w.iter_mut().zip(w.iter().zip(&s)).for_each(|(tw, (wi, si))| *tw = wi + t * si);
            trial_z.iter_mut().zip(z.iter().zip(&dz)).for_each(|(tz, (zi, di))| *tz = zi + t * di);
            let tb = b + t * sb;
            let f_new = objective(&trial_z, &trial_w, tb);
            if f_new <= f + ARMIJO * t * slope {
                std::mem::swap(&mut w, &mut trial_w);
                std::mem::swap(&mut z, &mut trial_z);
                b = tb;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Solution {
        w,
        bias: b,
        iterations,
        grad_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csr(rows: &[Vec<(u32, f32)>], n_cols: usize) -> LocalCsr {
        let mut m = LocalCsr {
            row_ptr: vec![0],
            n_cols,
            ..Default::default()
        };
        for r in rows {
            for &(c, v) in r {
                m.cols.push(c);
                m.vals.push(v);
            }
            m.row_ptr.push(m.cols.len());
        }
        m
    }

    const P: SolverParams = SolverParams {
        reg: 1e-3,
        tol: 1e-4,
        max_iter: 100,
    };

    #[test]
    fn converges_on_separable_data() {
        let x = csr(
            &[vec![(0, 1.0)], vec![(0, 0.9), (2, 0.1)], vec![(1, 1.0)], vec![(1, 0.8), (2, 0.2)]],
            3,
        );
        let y = [true, true, false, false];
        let sol = train_logistic(&x, &y, &P);
        assert!(sol.grad_norm <= 1e-4, "{}", sol.grad_norm);
        assert!(sol.w[0] > 0.0 && sol.w[1] < 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences_at_optimum() {
        // At the returned optimum the objective must not decrease along any axis.
        let x = csr(&[vec![(0, 1.0)], vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]], 2);
        let y = [true, false, false];
        let sol = train_logistic(&x, &y, &P);
        let obj = |w: &[f64], b: f64| {
            let mut z = vec![0.0; 3];
            x.mul(w, b, &mut z);
            z.iter().zip(&y).map(|(zi, &yi)| softplus(if yi { -zi } else { *zi })).sum::<f64>() / 3.0
                + 0.5 * P.reg * (dot(w, w) + b * b)
        };
        let f0 = obj(&sol.w, sol.bias);
        for k in 0..2 {
            for h in [1e-3, -1e-3] {
                let mut w = sol.w.clone();
                w[k] += h;
                assert!(obj(&w, sol.bias) >= f0 - 1e-9);
            }
        }
    }

    #[test]
    fn duplication_invariance() {
        let rows = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 0.6), (1, 0.8)]];
        let y = [true, false, true];
        let a = train_logistic(&csr(&rows, 2), &y, &P);
        let rows2: Vec<_> = rows.iter().chain(rows.iter()).cloned().collect();
        let y2: Vec<bool> = y.iter().chain(y.iter()).copied().collect();
        let b = train_logistic(&csr(&rows2, 2), &y2, &P);
        for (u, v) in a.w.iter().zip(&b.w) {
            assert!((u - v).abs() < 1e-3, "{u} vs {v}");
        }
    }
}
