//! Multi-equation least squares with exact linear equality restrictions and
//! (iterated) feasible GLS weighting.
//!
//! Every equation shares the same `T x k` design. Coefficients are stacked by
//! equation: `vec(B)[i * k + c]` is the coefficient of column `c` in equation
//! `i`. Restrictions `R vec(B) = c` are imposed exactly by solving in the null
//! space of `R` around a particular solution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{AidsError, Result};

/// Residual covariances whose largest diagonal falls below this fraction of the
/// mean squared response are treated as an exact fit.
const EXACT_FIT_RATIO: f64 = 1e-20;
/// Smallest eigenvalue ratio accepted for a weighting matrix.
const MIN_RECIPROCAL_CONDITION: f64 = 1e-14;
/// Relative eigenvalue cut separating the null space of `R'R`.
const RANK_TOL: f64 = 1e-10;
/// Largest accepted condition number of the equilibrated, unweighted normal matrix.
const MAX_DESIGN_CONDITION: f64 = 1e13;

/// Responses sharing a common set of regressors.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    responses: DMatrix<f64>,
    design: DMatrix<f64>,
    equation_labels: Vec<String>,
    column_labels: Vec<String>,
}

impl LinearSystem {
    pub fn new(
        responses: DMatrix<f64>,
        design: DMatrix<f64>,
        equation_labels: Vec<String>,
        column_labels: Vec<String>,
    ) -> Result<Self> {
        let (t, k) = design.shape();
        if responses.nrows() != t {
            return Err(AidsError::dimension("response rows", t, responses.nrows()));
        }
        if equation_labels.len() != responses.ncols() {
            return Err(AidsError::dimension("equation labels", responses.ncols(), equation_labels.len()));
        }
        if column_labels.len() != k {
            return Err(AidsError::dimension("column labels", k, column_labels.len()));
        }
        if responses.ncols() == 0 {
            return Err(AidsError::Specification("system has no equations".into()));
        }
        if t <= k {
            return Err(AidsError::InsufficientData(format!(
                "{t} observations cannot identify {k} regressors"
            )));
        }
        for (c, label) in column_labels.iter().enumerate() {
            let col = design.column(c);
            if col.iter().all(|&v| v == 0.0) {
                return Err(AidsError::Identification(format!("design column '{label}' is all zero")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(AidsError::Numerical {
                    message: format!("design column '{label}' has non-finite entries"),
                    condition: f64::INFINITY,
                });
            }
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(AidsError::Numerical {
                message: "responses contain non-finite values".into(),
                condition: f64::INFINITY,
            });
        }
        Ok(Self {
            responses,
            design,
            equation_labels,
            column_labels,
        })
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn equation_labels(&self) -> &[String] {
        &self.equation_labels
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_equations(&self) -> usize {
        self.responses.ncols()
    }

    pub fn n_columns(&self) -> usize {
        self.design.ncols()
    }
}

/// `R vec(B) = c`.
#[derive(Clone, Debug)]
pub struct RestrictionSet {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl RestrictionSet {
    /// Checks that `matrix` has full row rank and fewer rows than columns.
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let (r, p) = matrix.shape();
        if rhs.len() != r {
            return Err(AidsError::dimension("restriction right-hand side", r, rhs.len()));
        }
        if r >= p && r > 0 {
            return Err(AidsError::Specification(format!(
                "{r} restrictions leave no free parameters among {p}"
            )));
        }
        if r > 0 {
            let gram = &matrix * matrix.transpose();
            let eig = SymmetricEigen::new(gram);
            let max = eig.eigenvalues.max();
            let rank = eig.eigenvalues.iter().filter(|&&v| v > RANK_TOL * max).count();
            if max <= 0.0 || rank < r {
                return Err(AidsError::Specification(format!(
                    "restriction matrix has rank {rank} < {r} rows"
                )));
            }
        }
        Ok(Self { matrix, rhs })
    }

    /// No restrictions on `n_params` coefficients.
    pub fn none(n_params: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, n_params),
            rhs: DVector::zeros(0),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `max |R b - c|`.
    pub fn max_violation(&self, coefficients: &DVector<f64>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (&self.matrix * coefficients - &self.rhs).amax()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// Ordinary (restricted) least squares.
    Identity,
    /// One FGLS step from the least-squares residual covariance.
    FglsOnce,
    /// Alternate residual covariance and coefficients until the coefficients settle.
    FglsIterated,
}

#[derive(Clone, Debug)]
pub struct LinearFit {
    /// `m x k`, one row per equation.
    pub coefficients: DMatrix<f64>,
    /// Covariance of `vec(B)` (equation-major), `(m k) x (m k)`.
    pub coefficient_covariance: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// `E'E / T`.
    pub residual_covariance: DMatrix<f64>,
    /// `None` when the residuals vanish (the likelihood is unbounded).
    pub log_likelihood: Option<f64>,
    /// Number of weighted solves performed.
    pub iterations: usize,
    /// Max absolute coefficient change per FGLS update.
    pub trace: Vec<f64>,
    /// `m k - r`.
    pub n_free: usize,
    pub exact_fit: bool,
}

impl LinearFit {
    /// Equation-major stacking of the coefficient matrix.
    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.coefficients)
    }
}

pub(crate) fn stack(b: &DMatrix<f64>) -> DVector<f64> {
    let (m, k) = b.shape();
    DVector::from_fn(m * k, |idx, _| b[(idx / k, idx % k)])
}

fn unstack(v: &DVector<f64>, m: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |i, c| v[i * k + c])
}

/// Block matrix `W (x) M` for an `m x m` weight and `k x k` block.
fn kron(w: &DMatrix<f64>, block: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = (w.nrows(), block.nrows());
    DMatrix::from_fn(m * k, m * k, |r, c| w[(r / k, c / k)] * block[(r % k, c % k)])
}

/// Null-space form of the restricted problem in the equilibrated coordinates.
struct Reparam {
    particular: DVector<f64>,
    basis: DMatrix<f64>,
}

fn reparameterize(r: &DMatrix<f64>, c: &DVector<f64>) -> Result<Reparam> {
    let p = r.ncols();
    if r.nrows() == 0 {
        return Ok(Reparam {
            particular: DVector::zeros(p),
            basis: DMatrix::identity(p, p),
        });
    }
    let gram = r * r.transpose();
    let chol = gram.clone().cholesky().ok_or_else(|| {
        AidsError::Specification("restriction matrix is rank deficient".into())
    })?;
    let particular = r.transpose() * chol.solve(c);
    let eig = SymmetricEigen::new(r.transpose() * r);
    let max = eig.eigenvalues.max();
    let cols: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] <= RANK_TOL * max).collect();
    if cols.len() != p - r.nrows() {
        return Err(AidsError::Specification(format!(
            "restriction null space has dimension {} but {} was expected",
            cols.len(),
            p - r.nrows()
        )));
    }
    let basis = DMatrix::from_fn(p, cols.len(), |row, j| eig.eigenvectors[(row, cols[j])]);
    Ok(Reparam { particular, basis })
}

fn condition_number(sym: &DMatrix<f64>) -> (f64, f64, f64) {
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    (max / min, min, max)
}

/// Rejects designs whose restricted, unweighted normal matrix is
/// numerically singular.
fn check_identified(xtx: &DMatrix<f64>, basis: &DMatrix<f64>, m: usize) -> Result<()> {
    let h = basis.transpose() * kron(&DMatrix::identity(m, m), xtx) * basis;
    let (cond, _, _) = condition_number(&h);
    if !(cond.is_finite() && cond > 0.0 && cond < MAX_DESIGN_CONDITION) {
        return Err(AidsError::Identification(format!(
            "restricted normal equations are numerically singular (condition number {cond:.3e})"
        )));
    }
    Ok(())
}

struct Problem<'a> {
    y: &'a DMatrix<f64>,
    xs: DMatrix<f64>,
    scale: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DMatrix<f64>,
    reparam: Reparam,
    m: usize,
    k: usize,
}

struct Solve {
    /// Original-scale coefficients, `m x k`.
    coefficients: DMatrix<f64>,
    residuals: DMatrix<f64>,
    /// `(N'AN)^{-1}` in equilibrated coordinates.
    h_inv: DMatrix<f64>,
}

impl Problem<'_> {
    fn solve(&self, weight_inv: &DMatrix<f64>) -> Result<Solve> {
        let (m, k) = (self.m, self.k);
        let a = kron(weight_inv, &self.xtx);
        let mut g = DVector::zeros(m * k);
        for i in 0..m {
            for j in 0..m {
                let wij = weight_inv[(i, j)];
                for c in 0..k {
                    g[i * k + c] += wij * self.xty[(c, j)];
                }
            }
        }
        let n = &self.reparam.basis;
        let h = n.transpose() * &a * n;
        let rhs = n.transpose() * (g - &a * &self.reparam.particular);
        // Jacobi scaling keeps the weight's spread out of the pivots
        let d = DVector::from_fn(h.nrows(), |i, _| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt());
        let h_eq = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| h[(r, c)] * d[r] * d[c]);
        // the unweighted problem is known to be identified, so a failure here
        // comes from the weight
        let chol = h_eq.cholesky().ok_or_else(|| {
            let (cond, _, _) = condition_number(&h);
            AidsError::Numerical {
                message: "weighted normal equations are not positive definite".into(),
                condition: cond,
            }
        })?;
        let theta = chol.solve(&rhs.component_mul(&d)).component_mul(&d);
        let h_inv = {
            let inv = chol.inverse();
            DMatrix::from_fn(inv.nrows(), inv.ncols(), |r, c| inv[(r, c)] * d[r] * d[c])
        };
        let bs = &self.reparam.particular + n * theta;
        let coefficients = DMatrix::from_fn(m, k, |i, c| bs[i * k + c] / self.scale[c]);
        let fitted = &self.xs * unstack(&bs, m, k).transpose();
        Ok(Solve {
            coefficients,
            residuals: self.y - fitted,
            h_inv,
        })
    }

    /// Sandwich covariance of `vec(B)` given the weight used and the residual covariance.
    fn covariance(&self, solve: &Solve, weight_inv: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, k) = (self.m, self.k);
        let n = &self.reparam.basis;
        let omega = kron(&(weight_inv * sigma * weight_inv), &self.xtx);
        let cov_theta = &solve.h_inv * (n.transpose() * omega * n) * &solve.h_inv;
        let cov_scaled = n * cov_theta * n.transpose();
        let cov = DMatrix::from_fn(m * k, m * k, |r, c| {
            cov_scaled[(r, c)] / (self.scale[r % k] * self.scale[c % k])
        });
        (&cov + cov.transpose()) * 0.5
    }
}

fn residual_covariance(residuals: &DMatrix<f64>) -> DMatrix<f64> {
    let t = residuals.nrows() as f64;
    let s = residuals.transpose() * residuals / t;
    (&s + s.transpose()) * 0.5
}

/// Restricted (F)GLS estimate of a [`LinearSystem`].
pub fn fit_restricted(
    system: &LinearSystem,
    restrictions: &RestrictionSet,
    weighting: Weighting,
    tol: f64,
    max_iter: usize,
) -> Result<LinearFit> {
    let (m, k) = (system.n_equations(), system.n_columns());
    if restrictions.matrix.ncols() != m * k {
        return Err(AidsError::dimension(
            "restriction columns",
            m * k,
            restrictions.matrix.ncols(),
        ));
    }
    let t = system.n_obs();
    let x = &system.design;
    let scale = DVector::from_fn(k, |c, _| (x.column(c).norm_squared() / t as f64).sqrt());
    let xs = DMatrix::from_fn(t, k, |r, c| x[(r, c)] / scale[c]);
    let r_scaled = DMatrix::from_fn(restrictions.len(), m * k, |row, col| {
        restrictions.matrix[(row, col)] / scale[col % k]
    });
    let reparam = reparameterize(&r_scaled, &restrictions.rhs)?;
    let xtx = xs.transpose() * &xs;
    check_identified(&xtx, &reparam.basis, m)?;
    let problem = Problem {
        y: &system.responses,
        xtx,
        xty: xs.transpose() * &system.responses,
        xs,
        scale,
        reparam,
        m,
        k,
    };
    let response_scale = system
        .responses
        .column_iter()
        .map(|c| c.norm_squared() / t as f64)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let identity = DMatrix::identity(m, m);
    let mut weight_inv = identity.clone();
    let mut current = problem.solve(&weight_inv)?;
    let mut iterations = 1;
    let mut trace = Vec::new();
    let mut exact_fit = false;

    let is_exact = |sigma: &DMatrix<f64>| sigma.diagonal().max() <= EXACT_FIT_RATIO * response_scale;
    let invert_sigma = |sigma: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let (cond, min, _) = condition_number(sigma);
        if !(min > 0.0 && 1.0 / cond > MIN_RECIPROCAL_CONDITION) {
            return Err(AidsError::Numerical {
                message: "residual covariance used as FGLS weight is singular".into(),
                condition: if min > 0.0 { cond } else { f64::INFINITY },
            });
        }
        let inv = sigma.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| AidsError::Numerical {
            message: "residual covariance used as FGLS weight is not positive definite".into(),
            condition: cond,
        })?;
        Ok((&inv + inv.transpose()) * 0.5)
    };

    match weighting {
        Weighting::Identity => {}
        Weighting::FglsOnce => {
            let sigma = residual_covariance(&current.residuals);
            if is_exact(&sigma) {
                exact_fit = true;
            } else {
                weight_inv = invert_sigma(&sigma)?;
                let next = problem.solve(&weight_inv)?;
                trace.push((&next.coefficients - &current.coefficients).amax());
                current = next;
                iterations += 1;
            }
        }
        Weighting::FglsIterated => {
            let mut converged = false;
            while iterations <= max_iter {
                let sigma = residual_covariance(&current.residuals);
                if is_exact(&sigma) {
                    exact_fit = true;
                    converged = true;
                    break;
                }
                weight_inv = invert_sigma(&sigma)?;
                let next = problem.solve(&weight_inv)?;
                let delta = (&next.coefficients - &current.coefficients).amax();
                trace.push(delta);
                current = next;
                iterations += 1;
                if delta < tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(AidsError::NotConverged {
                    iterations: iterations - 1,
                    last_delta: trace.last().copied().unwrap_or(f64::NAN),
                    trace,
                });
            }
        }
    }

    let sigma = residual_covariance(&current.residuals);
    exact_fit = exact_fit || is_exact(&sigma);
    let coefficient_covariance = if exact_fit {
        DMatrix::zeros(m * k, m * k)
    } else {
        problem.covariance(&current, &weight_inv, &sigma)
    };
    let log_likelihood = if exact_fit {
        None
    } else {
        Some(gaussian_log_likelihood(&current.residuals)?)
    };
    Ok(LinearFit {
        coefficients: current.coefficients,
        coefficient_covariance,
        residuals: current.residuals,
        residual_covariance: sigma,
        log_likelihood,
        iterations,
        trace,
        n_free: m * k - restrictions.len(),
        exact_fit,
    })
}

/// Concentrated multivariate-normal log-likelihood
/// `-(T/2) (m ln 2pi + ln det S + m)` with `S = E'E / T`.
pub fn gaussian_log_likelihood(residuals: &DMatrix<f64>) -> Result<f64> {
    let (t, m) = residuals.shape();
    if t <= m {
        return Err(AidsError::InsufficientData(format!(
            "log-likelihood needs more observations ({t}) than equations ({m})"
        )));
    }
    let sigma = residual_covariance(residuals);
    let chol = sigma.clone().cholesky().ok_or_else(|| AidsError::Numerical {
        message: "residual covariance is singular".into(),
        condition: condition_number(&sigma).0.abs(),
    })?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(AidsError::Numerical {
            message: "residual covariance is singular".into(),
            condition: f64::INFINITY,
        });
    }
    let (t, m) = (t as f64, m as f64);
    Ok(-0.5 * t * (m * (2.0 * std::f64::consts::PI).ln() + log_det + m))
}
