//! Levenberg–Marquardt for small, dense problems.

/// A least-squares model `r(p) = model(p) - data`.
pub(crate) trait Residuals {
    fn n_obs(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Euclidean norm of the observations; sets the gradient scale.
    fn data_norm(&self) -> f64;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `n_obs x n_params`.
    fn jacobian(&self, p: &[f64], out: &mut [f64]);
    fn feasible(&self, _p: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Bound on `|J_a . r| / (|J_a| |y|)` over Jacobian columns `J_a`.
    pub gtol: f64,
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-10,
            xtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub n_iter: usize,
    pub converged: bool,
}

struct Linearization {
    cost: f64,
    jtj: Vec<f64>,
    jtr: Vec<f64>,
}

fn linearize<M: Residuals>(m: &M, p: &[f64], r: &mut [f64], j: &mut [f64]) -> Linearization {
    let (n, k) = (m.n_obs(), m.n_params());
    m.residuals(p, r);
    m.jacobian(p, j);
    let mut jtj = vec![0.0; k * k];
    let mut jtr = vec![0.0; k];
    for i in 0..n {
        let row = &j[i * k..(i + 1) * k];
        for a in 0..k {
            jtr[a] += row[a] * r[i];
            for b in 0..k {
                jtj[a * k + b] += row[a] * row[b];
            }
        }
    }
    Linearization {
        cost: r.iter().map(|x| x * x).sum(),
        jtj,
        jtr,
    }
}

fn scaled_gradient(lin: &Linearization, k: usize, data_norm: f64) -> f64 {
    let rn = data_norm.max(f64::MIN_POSITIVE);
    (0..k)
        .map(|a| {
            let col = lin.jtj[a * k + a].sqrt();
            if col == 0.0 {
                0.0
            } else {
                lin.jtr[a].abs() / (col * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Solves `a x = b` for a small dense system; `None` if singular.
pub(crate) fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x * k + col].abs().total_cmp(&a[y * k + col].abs()))?;
        if a[piv * k + col] == 0.0 || !a[piv * k + col].is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
            }
            b.swap(piv, col);
        }
        for row in col + 1..k {
            let f = a[row * k + col] / a[col * k + col];
            for c in col..k {
                a[row * k + c] -= f * a[col * k + c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| a[row * k + c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row * k + row];
    }
    Some(x)
}

fn inverse_diag(jtj: &[f64], k: usize) -> Option<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            solve(jtj.to_vec(), e).map(|col| col[i])
        })
        .collect()
}

pub(crate) fn levenberg_marquardt<M: Residuals>(m: &M, p0: &[f64], opts: LmOptions) -> LmOutcome {
    let (n, k) = (m.n_obs(), m.n_params());
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n];
    let mut j = vec![0.0; n * k];
    let mut trial_r = vec![0.0; n];
    let mut lin = linearize(m, &p, &mut r, &mut j);
    let mut lambda = 1e-3;
    let mut n_iter = 0;

    while n_iter < opts.max_iter {
        if scaled_gradient(&lin, k, m.data_norm()) < opts.gtol {
            break;
        }
        n_iter += 1;
        let mut accepted = false;
        let mut tiny_step = false;
        while lambda < 1e16 {
            let mut a = lin.jtj.clone();
            for d in 0..k {
                a[d * k + d] += lambda * lin.jtj[d * k + d].max(f64::MIN_POSITIVE);
            }
            let step = solve(a, lin.jtr.iter().map(|g| -g).collect());
            let Some(step) = step else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(x, s)| x + s).collect();
            if m.feasible(&trial) {
                m.residuals(&trial, &mut trial_r);
                let cost: f64 = trial_r.iter().map(|x| x * x).sum();
                if cost.is_finite() && cost <= lin.cost {
                    tiny_step = step
                        .iter()
                        .zip(&p)
                        .all(|(s, x)| s.abs() <= opts.xtol * (x.abs() + opts.xtol));
                    p = trial;
                    lin = linearize(m, &p, &mut r, &mut j);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted || tiny_step {
            break;
        }
    }

    let gradient = scaled_gradient(&lin, k, m.data_norm());
    let dof = n.saturating_sub(k);
    let s2 = if dof > 0 { lin.cost / dof as f64 } else { f64::NAN };
    let std_errors = match inverse_diag(&lin.jtj, k) {
        Some(d) => d.iter().map(|v| (s2 * v).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; k],
    };
    LmOutcome {
        params: p,
        std_errors,
        residual_norm: lin.cost.sqrt(),
        n_iter,
        converged: gradient < opts.gtol,
    }
}
