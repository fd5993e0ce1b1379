//! Levenberg-Marquardt nonlinear least squares with a caller-supplied Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative decrease of the cost falls below this.
    pub ftol: f64,
    /// Stop when the relative parameter step falls below this.
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, ftol: 1e-14, xtol: 1e-12, initial_lambda: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct LmFit {
    pub params: DVector<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    /// `s^2 (J^T J)^-1` with `s^2 = ssr / (n - p)`.
    pub covariance: DMatrix<f64>,
    pub trace: Vec<f64>,
    pub n_data: usize,
}

impl LmFit {
    pub fn std_error(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

/// Minimize `|r(p)|^2`; `model(p)` returns the residual vector and its Jacobian.
pub fn levenberg_marquardt<F>(mut model: F, p0: DVector<f64>, opts: &LmOptions) -> Result<LmFit>
where
    F: FnMut(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let np = p0.len();
    let (mut r, mut j) = model(&p0);
    let n = r.len();
    if n <= np {
        return Err(Error::RankDeficient(format!("{n} residuals for {np} parameters")));
    }
    check_rank(&j)?;
    let mut p = p0;
    let mut ssr = r.norm_squared();
    let mut trace = vec![ssr];
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut converged = ssr == 0.0;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = a.clone();
            for i in 0..np {
                m[(i, i)] += lambda * a[(i, i)].max(1e-300);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial = &p + &step;
            let (rt, jt_new) = model(&trial);
            let ssr_t = rt.norm_squared();
            if ssr_t.is_finite() && ssr_t <= ssr {
                let rel_f = (ssr - ssr_t) / ssr.max(1e-300);
                let rel_x = step.norm() / (p.norm() + opts.xtol);
                p = trial;
                r = rt;
                j = jt_new;
                ssr = ssr_t;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel_f < opts.ftol || rel_x < opts.xtol || ssr == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        trace.push(ssr);
        if !accepted {
            // no downhill step at any damping: we sit at a minimum to round-off
            converged = true;
        }
    }
    if !converged {
        return Err(Error::FitNotConverged { iterations, trace });
    }
    let dof = (n - np) as f64;
    let jt = j.transpose();
    let covariance = (&jt * &j)
        .try_inverse()
        .map(|inv| inv * (ssr / dof))
        .unwrap_or_else(|| DMatrix::from_element(np, np, f64::NAN));
    Ok(LmFit { params: p, ssr, iterations, covariance, trace, n_data: n })
}

/// Reject Jacobians whose column-normalized condition number is hopeless.
fn check_rank(j: &DMatrix<f64>) -> Result<()> {
    let mut jn = j.clone();
    for mut col in jn.column_iter_mut() {
        let nrm = col.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::RankDeficient("a parameter has no influence on the residuals".into()));
        }
        col /= nrm;
    }
    let sv = jn.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 1e-10 * max {
        return Err(Error::RankDeficient(format!("singular values span {max:e} .. {min:e}")));
    }
    Ok(())
}
