//! Box-constrained Levenberg-Marquardt with finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidInput("bound vectors differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidInput(
                "each lower bound must not exceed its upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= *l && *x <= *u)
    }

    pub(crate) fn project(&self, p: &mut [f64]) {
        for (x, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllsOptions {
    pub max_iterations: usize,
    /// Relative step-size tolerance.
    pub xtol: f64,
    /// Relative cost-reduction tolerance. Zero disables the test, which
    /// otherwise stops at parameter precision near `sqrt(ftol)`.
    pub ftol: f64,
    /// Tolerance on the cosine between residuals and Jacobian columns.
    pub gtol: f64,
    /// Relative finite-difference step. Central differences are used where
    /// both sides lie inside the bounds.
    pub fd_step: f64,
    /// Typical magnitude of each parameter, used for finite-difference steps
    /// when a parameter is near zero. Defaults to `max(|p0|, 1)`.
    pub parameter_scale: Option<Vec<f64>>,
    /// Multiply `(JᵀJ)⁻¹` by `cost / (m - n)`. Disable when residuals are
    /// already normalized by their standard deviations.
    pub scale_covariance: bool,
    /// Condition number of the column-normalized `J` above which the fit is
    /// flagged ill-conditioned.
    pub condition_limit: f64,
}

impl Default for NllsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-13,
            ftol: 0.0,
            gtol: 1e-13,
            fd_step: f64::EPSILON.cbrt(),
            parameter_scale: None,
            scale_covariance: true,
            condition_limit: 1e8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ZeroResidual,
    SmallGradient,
    SmallStep,
    SmallCostChange,
    /// Damping grew without finding a lower cost; the point is a local minimum
    /// to working precision.
    NoFurtherReduction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllsResult {
    pub params: Vec<f64>,
    /// Row-major parameter covariance; `None` when ill-conditioned.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub ill_conditioned: bool,
    pub condition_number: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl NllsResult {
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect())
    }
}

struct Problem<'a, F> {
    f: F,
    bounds: &'a Bounds,
    scale: Vec<f64>,
    fd_step: f64,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Problem<'_, F> {
    fn eval(&mut self, p: &[f64]) -> Option<(Vec<f64>, f64)> {
        self.evaluations += 1;
        let r = (self.f)(p);
        let cost: f64 = r.iter().map(|x| x * x).sum();
        cost.is_finite().then_some((r, cost))
    }

    fn jacobian(&mut self, p: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
        let m = r.len();
        let n = p.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut q = p.to_vec();
        for j in 0..n {
            let h = self.fd_step * p[j].abs().max(self.scale[j]);
            let up = (p[j] + h <= self.bounds.upper[j]).then_some(p[j] + h);
            let down = (p[j] - h >= self.bounds.lower[j]).then_some(p[j] - h);
            let (hi, lo) = match (up, down) {
                (Some(a), Some(b)) => (a, b),
                (Some(a), None) => (a, p[j]),
                (None, Some(b)) => (p[j], b),
                (None, None) => (self.bounds.upper[j], self.bounds.lower[j]),
            };
            let f_at = |prob: &mut Self, q: &mut Vec<f64>, x: f64| -> Result<Vec<f64>> {
                if x == p[j] {
                    return Ok(r.to_vec());
                }
                q[j] = x;
                let out = prob
                    .eval(q)
                    .map(|(v, _)| v)
                    .ok_or(Error::NonFinite("residuals during differencing"));
                q[j] = p[j];
                out
            };
            let rh = f_at(self, &mut q, hi)?;
            let rl = f_at(self, &mut q, lo)?;
            let span = hi - lo;
            if span > 0.0 {
                for i in 0..m {
                    jac[(i, j)] = (rh[i] - rl[i]) / span;
                }
            }
        }
        Ok(jac)
    }
}

/// Minimizes `Σ r_i(p)²` from `initial` inside `bounds`.
///
/// Returns [`Error::NotConverged`] with the best parameters found when
/// `max_iterations` is exhausted.
pub fn nlls_fit<F>(residuals: F, initial: &[f64], bounds: Option<&Bounds>, options: &NllsOptions) -> Result<NllsResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = initial.len();
    if n == 0 {
        return Err(Error::InvalidInput("no parameters to fit".into()));
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial parameters"));
    }
    let unbounded = Bounds::unbounded(n);
    let bounds = bounds.unwrap_or(&unbounded);
    if bounds.lower.len() != n {
        return Err(Error::InvalidInput("bounds do not match the parameter count".into()));
    }
    if !bounds.contains(initial) {
        return Err(Error::InvalidInput("initial parameters lie outside the bounds".into()));
    }
    let scale = match &options.parameter_scale {
        Some(s) if s.len() == n => s.iter().map(|x| x.abs()).collect(),
        Some(_) => {
            return Err(Error::InvalidInput(
                "parameter_scale does not match the parameter count".into(),
            ))
        }
        None => initial.iter().map(|x| x.abs().max(1.0)).collect(),
    };
    let mut prob = Problem {
        f: residuals,
        bounds,
        scale,
        fd_step: options.fd_step,
        evaluations: 0,
    };

    let mut p = initial.to_vec();
    let (mut r, mut cost) = prob
        .eval(&p)
        .ok_or(Error::NonFinite("residuals at the initial point"))?;
    if r.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let termination = 'outer: loop {
        if cost == 0.0 {
            break Termination::ZeroResidual;
        }
        if iterations >= options.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                cost,
                best: p,
            });
        }
        iterations += 1;
        let jac = prob.jacobian(&p, &r)?;
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let a = jac.tr_mul(&jac);
        // Parameters held on a bound by the descent direction stay fixed.
        let free: Vec<bool> = (0..n)
            .map(|j| !((p[j] <= bounds.lower[j] && g[j] > 0.0) || (p[j] >= bounds.upper[j] && g[j] < 0.0)))
            .collect();
        let rnorm = cost.sqrt();
        let cosine = (0..n)
            .filter(|j| free[*j])
            .map(|j| {
                let cn = jac.column(j).norm();
                if cn > 0.0 {
                    g[j].abs() / (cn * rnorm)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        if cosine <= options.gtol {
            break Termination::SmallGradient;
        }
        let dmax = (0..n).map(|j| a[(j, j)]).fold(0.0, f64::max);
        let floor = if dmax > 0.0 { dmax * 1e-12 } else { 1.0 };
        loop {
            let mut lhs = a.clone();
            let mut rhs = -&g;
            for j in 0..n {
                if free[j] {
                    lhs[(j, j)] += lambda * a[(j, j)].max(floor);
                } else {
                    for k in 0..n {
                        lhs[(j, k)] = 0.0;
                        lhs[(k, j)] = 0.0;
                    }
                    lhs[(j, j)] = 1.0;
                    rhs[j] = 0.0;
                }
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break 'outer Termination::NoFurtherReduction;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            bounds.project(&mut trial);
            match prob.eval(&trial) {
                Some((rt, ct)) if ct < cost => {
                    let decrease = cost - ct;
                    let moved: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let size: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    p = trial;
                    r = rt;
                    cost = ct;
                    history.push(cost);
                    lambda = (lambda / 3.0).max(1e-15);
                    if moved <= options.xtol * (size + options.xtol) {
                        break 'outer Termination::SmallStep;
                    }
                    if options.ftol > 0.0 && decrease <= options.ftol * history[history.len() - 2] {
                        break 'outer Termination::SmallCostChange;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > 1e20 {
                        break 'outer Termination::NoFurtherReduction;
                    }
                }
            }
        }
    };

    let jac = prob.jacobian(&p, &r)?;
    let m = r.len();
    let svd = jac.clone().svd(false, true);
    let mut normalized = jac.clone();
    for mut col in normalized.column_iter_mut() {
        let c = col.norm();
        if c > 0.0 {
            col /= c;
        }
    }
    let sv = normalized.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let ill_conditioned = m < n || !(condition_number <= options.condition_limit);
    let covariance = (!ill_conditioned).then(|| {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let factor = if options.scale_covariance && m > n {
            cost / (m - n) as f64
        } else {
            1.0
        };
        let mut cov = vec![vec![0.0; n]; n];
        for (k, s) in svd.singular_values.iter().enumerate() {
            let w = factor / (s * s);
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += w * v_t[(k, i)] * v_t[(k, j)];
                }
            }
        }
        cov
    });
    Ok(NllsResult {
        params: p,
        covariance,
        cost,
        residuals: r,
        iterations,
        evaluations: prob.evaluations,
        termination,
        ill_conditioned,
        condition_number,
        cost_history: history,
    })
}
