//! Geometric exponential-tilting maximum likelihood.
//!
//! Cells are geometric with tilting parameter `theta > 0`, cell mass
//! `e^{-k theta}(1 - e^{-theta})`, mean `1/(e^theta - 1)`, and log-partition
//! `psi(theta) = -log(1 - e^{-theta})`. Under the rank-1 field
//! `theta_ijk = alpha_i + beta_j + gamma_k` the log-likelihood of a table
//! with margins `(a, b, c)` is
//!
//! ```text
//!   l(alpha, beta, gamma) = -sum_i a_i alpha_i - sum_j b_j beta_j - sum_k c_k gamma_k
//!                           - sum_ijk psi(alpha_i + beta_j + gamma_k)
//! ```
//!
//! (the exponent of the cell mass is `-y theta`, so the margin terms enter
//! with a minus sign), which is strictly concave since `psi'' > 0`. Its
//! stationary points are exactly the tiltings whose expected table
//! `Z_ijk = 1/(e^{theta_ijk} - 1)` reproduces the margins — the gradient per
//! axis is `margins(Z) - target` — so [`solve_mle`] runs a damped Newton
//! iteration on the margin residuals. The parameterization has a
//! 2-dimensional gauge kernel (shift one axis up, another down); we fix the
//! gauge by equalizing the axis means, which leaves `Z` untouched.
//!
//! For the heavy-corner margins `(B n^2, n^2, ..., n^2)` the solution is
//! symmetric with only two distinct parameter values, and the full system
//! collapses to two equations in `P = e^{alpha_1}`, `Q = e^{alpha_2}`:
//!
//! ```text
//!   1/(P^3-1) + 2(n-1)/(P^2 Q-1) + (n-1)^2/(P Q^2-1) = B n^2
//!   1/(P^2 Q-1) + 2(n-1)/(P Q^2-1) + (n-1)^2/(Q^3-1) = n^2
//! ```
//!
//! [`barvinok_solve`] solves these in `(log(P-1), log(Q-1))`, which keeps full
//! precision when the supercritical regime pushes `P` within 1e-9 of 1.

use serde::{Deserialize, Serialize};

use crate::tensor::{MarginSpec, RealTable};
use crate::{Error, Result};

/// Log-partition of the tilted geometric: `psi(theta) = -log(1 - e^{-theta})`.
pub fn psi(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(psi_raw(theta))
}

/// Mean of the tilted geometric cell: `1/(e^theta - 1)`.
pub fn psi_prime(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(psi_prime_raw(theta))
}

/// Variance of the tilted geometric cell: `e^theta/(e^theta - 1)^2`,
/// strictly positive, which makes the likelihood strictly concave.
pub fn psi_double(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(psi_double_raw(theta))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(Error::NonPositiveTheta(theta));
    }
    Ok(())
}

#[inline]
pub(crate) fn psi_raw(theta: f64) -> f64 {
    // 1 - e^{-theta} evaluated as -expm1(-theta) to survive theta -> 0
    -(-(-theta).exp_m1()).ln()
}

#[inline]
pub(crate) fn psi_prime_raw(theta: f64) -> f64 {
    theta.exp_m1().recip()
}

#[inline]
pub(crate) fn psi_double_raw(theta: f64) -> f64 {
    // e^theta/(e^theta-1)^2 = psi' * (1 + psi')
    let m = psi_prime_raw(theta);
    m * (1.0 + m)
}

/// Inverse of `psi'`: the tilting with a prescribed cell mean.
pub fn theta_for_mean(mean: f64) -> Result<f64> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::InvalidParameter("cell mean must be positive"));
    }
    Ok(mean.recip().ln_1p())
}

/// Exponential tilting parameters, one vector per axis; the cell parameter is
/// the sum of its axis components and must be positive everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTilting")]
pub struct Tilting {
    axes: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawTilting {
    axes: Vec<Vec<f64>>,
}

impl TryFrom<RawTilting> for Tilting {
    type Error = Error;
    fn try_from(raw: RawTilting) -> Result<Self> {
        Tilting::new(raw.axes)
    }
}

impl Tilting {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() < 2 || axes.len() > 3 {
            return Err(Error::UnsupportedRank(axes.len()));
        }
        if axes.iter().any(|a| a.is_empty()) {
            return Err(Error::EmptyAxis);
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tilting entries must be finite"));
        }
        let min_theta: f64 = axes
            .iter()
            .map(|a| a.iter().cloned().fold(f64::INFINITY, f64::min))
            .sum();
        if min_theta.is_nan() || min_theta <= 0.0 {
            return Err(Error::NonPositiveTheta(min_theta));
        }
        Ok(Tilting { axes })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn theta(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis[i])
            .sum()
    }

    /// Smallest cell parameter (sum of per-axis minima).
    pub fn min_theta(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.iter().cloned().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// The full cell-parameter field as a real table.
    pub fn theta_table(&self) -> RealTable {
        let dims = self.dims();
        RealTable::from_fn(dims, |idx| self.theta(idx)).expect("theta > 0 by construction")
    }

    /// Gauge representative with equal axis means; leaves every cell
    /// parameter (hence the expected table) unchanged.
    pub fn gauge_normalized(&self) -> Tilting {
        let means: Vec<f64> = self
            .axes
            .iter()
            .map(|a| a.iter().sum::<f64>() / a.len() as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let axes = self
            .axes
            .iter()
            .zip(&means)
            .map(|(a, m)| a.iter().map(|v| v - m + grand).collect())
            .collect();
        Tilting { axes }
    }
}

/// Expected table of the tilted model: `Z = E[Y]`, entrywise `psi'(theta)`.
pub fn expected_table(t: &Tilting) -> Result<RealTable> {
    check_theta(t.min_theta())?;
    Ok(RealTable::from_fn(t.dims(), |idx| psi_prime_raw(t.theta(idx))).expect("means are positive"))
}

/// Log-likelihood of a margin spec under a tilting, with its gradient
/// (per axis: `margins(Z) - target`).
#[derive(Debug, Clone)]
pub struct LogLik {
    pub value: f64,
    pub gradient: Vec<Vec<f64>>,
}

pub fn log_likelihood(spec: &MarginSpec, t: &Tilting) -> Result<LogLik> {
    if spec.dims() != t.dims() {
        return Err(Error::MoveShapeMismatch);
    }
    check_theta(t.min_theta())?;
    let dims = spec.dims();
    let mut value = 0.0;
    for (axis, sums) in spec.axis_sums().iter().enumerate() {
        for (i, &s) in sums.iter().enumerate() {
            value -= s as f64 * t.axes()[axis][i];
        }
    }
    let mut gradient: Vec<Vec<f64>> = spec
        .axis_sums()
        .iter()
        .map(|s| s.iter().map(|&v| -(v as f64)).collect())
        .collect();
    for_each_cell(&dims, |idx| {
        let theta = t.theta(idx);
        value -= psi_raw(theta);
        let z = psi_prime_raw(theta);
        for (axis, &i) in idx.iter().enumerate() {
            gradient[axis][i] += z;
        }
    });
    Ok(LogLik { value, gradient })
}

fn for_each_cell(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Options for the Newton MLE solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Convergence threshold on the margin residual, relative to each target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

/// Converged (or best-effort) MLE: tilting, expected table, and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub tilting: Tilting,
    pub expected: RealTable,
    /// Largest margin error relative to its target entry.
    pub residual_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

const THETA_FLOOR: f64 = 1e-14;

/// Maximizes the strictly concave likelihood for `spec` by damped Newton with
/// an Armijo line search, in the equal-axis-means gauge.
///
/// Margins must be strictly positive: a zero margin puts the MLE on the
/// boundary (the whole slice is zero) and is rejected with `ZeroMargin`.
pub fn solve_mle(spec: &MarginSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let total = spec.validate()?;
    for (axis, sums) in spec.axis_sums().iter().enumerate() {
        if let Some(index) = sums.iter().position(|&v| v == 0) {
            return Err(Error::ZeroMargin { axis, index });
        }
    }
    let dims = spec.dims();
    let rank = dims.len();
    let cells: usize = dims.iter().product();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let dim_total: usize = dims.iter().sum();

    // constant-margin exact solution as the starting point
    let theta0 = (1.0 + cells as f64 / total as f64).ln();
    let mut tilting = Tilting::new(
        dims.iter()
            .map(|&d| vec![theta0 / rank as f64; d])
            .collect(),
    )
    .expect("uniform positive start");

    let targets: Vec<Vec<f64>> = spec
        .axis_sums()
        .iter()
        .map(|s| s.iter().map(|&v| v as f64).collect())
        .collect();

    let mut lik = log_likelihood(spec, &tilting)?;
    let mut best: Option<SolveReport> = None;

    for iteration in 0..=opts.max_iter {
        let residual_inf = rel_residual(&lik.gradient, &targets);

        let report_now = |converged: bool| -> Result<SolveReport> {
            Ok(SolveReport {
                tilting: tilting.clone().gauge_normalized(),
                expected: expected_table(&tilting)?,
                residual_inf,
                iterations: iteration,
                converged,
            })
        };
        if residual_inf <= opts.tol {
            return report_now(true);
        }
        if best
            .as_ref()
            .is_none_or(|b| residual_inf < b.residual_inf)
        {
            best = Some(report_now(false)?);
        }
        if iteration == opts.max_iter {
            break;
        }

        // Newton system on the negative Hessian J (positive semidefinite with
        // the 2-dim gauge kernel), regularized along the kernel only.
        let mut j = vec![0.0f64; dim_total * dim_total];
        for_each_cell(&dims, |idx| {
            let w = psi_double_raw(tilting.theta(idx));
            for a in 0..rank {
                let ra = offsets[a] + idx[a];
                for b in a..rank {
                    let cb = offsets[b] + idx[b];
                    j[ra * dim_total + cb] += w;
                    if ra != cb {
                        j[cb * dim_total + ra] += w;
                    }
                }
            }
        });
        let scale = (0..dim_total).map(|i| j[i * dim_total + i]).sum::<f64>() / dim_total as f64;
        let mut kernel: Vec<Vec<f64>> = Vec::new();
        for other in 1..rank {
            let mut v = vec![0.0; dim_total];
            v[offsets[0]..offsets[0] + dims[0]].fill(1.0);
            v[offsets[other]..offsets[other] + dims[other]].fill(-1.0);
            kernel.push(v);
        }
        for v in &kernel {
            for r in 0..dim_total {
                if v[r] == 0.0 {
                    continue;
                }
                for c in 0..dim_total {
                    j[r * dim_total + c] += scale * v[r] * v[c];
                }
            }
        }

        let grad_flat: Vec<f64> = lik.gradient.iter().flatten().copied().collect();
        let direction = cholesky_solve(&j, dim_total, &grad_flat)?;
        let slope: f64 = grad_flat.iter().zip(&direction).map(|(g, d)| g * d).sum();
        // fall back to steepest ascent if the factorization lost positivity
        let (direction, slope) = if slope > 0.0 {
            (direction, slope)
        } else {
            let s: f64 = grad_flat.iter().map(|g| g * g).sum();
            (grad_flat.clone(), s)
        };

        // keep every cell parameter above the floor
        let mut t_max = f64::INFINITY;
        for_each_cell(&dims, |idx| {
            let mut dtheta = 0.0;
            for (a, &i) in idx.iter().enumerate() {
                dtheta += direction[offsets[a] + i];
            }
            if dtheta < 0.0 {
                let theta = tilting.theta(idx);
                t_max = t_max.min((theta - THETA_FLOOR) / -dtheta);
            }
        });
        let mut step = (0.995 * t_max).min(1.0);

        // Armijo backtracking on the likelihood; near the optimum the
        // likelihood improvement falls below rounding, so a strict decrease
        // of the margin residual also accepts (Newton contracts it there).
        let mut accepted = None;
        for _ in 0..70 {
            let trial_axes: Vec<Vec<f64>> = tilting
                .axes()
                .iter()
                .enumerate()
                .map(|(a, axis)| {
                    axis.iter()
                        .enumerate()
                        .map(|(i, v)| v + step * direction[offsets[a] + i])
                        .collect()
                })
                .collect();
            if let Ok(trial) = Tilting::new(trial_axes) {
                if let Ok(trial_lik) = log_likelihood(spec, &trial) {
                    let trial_res = rel_residual(&trial_lik.gradient, &targets);
                    let armijo = trial_lik.value >= lik.value + 1e-4 * step * slope;
                    if trial_lik.value.is_finite() && (armijo || trial_res < 0.9 * residual_inf)
                    {
                        accepted = Some((trial, trial_lik));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_lik)) => {
                tilting = trial.gauge_normalized();
                lik = trial_lik;
            }
            None => break, // line search exhausted; report best iterate below
        }
    }

    Err(Error::NotConverged {
        report: Box::new(best.expect("at least one iterate evaluated")),
    })
}

/// Worst margin error relative to its target, from a likelihood gradient.
fn rel_residual(gradient: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    gradient
        .iter()
        .zip(targets)
        .flat_map(|(g, t)| g.iter().zip(t).map(|(gi, ti)| (gi / ti).abs()))
        .fold(0.0, f64::max)
}

/// Solves `J x = b` for symmetric positive definite `J`.
fn cholesky_solve(j: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    // small diagonal lift retried a few times if a pivot degenerates
    let base = (0..n).map(|i| j[i * n + i]).fold(0.0, f64::max);
    for attempt in 0..4 {
        let mut l = j.to_vec();
        let ridge = if attempt == 0 {
            0.0
        } else {
            base * 1e-14 * 10f64.powi(attempt)
        };
        if factor(&mut l, n, ridge) {
            return Ok(solve_factored(&l, n, b));
        }
    }
    Err(Error::InvalidParameter(
        "Newton system is numerically singular",
    ))
}

fn factor(l: &mut [f64], n: usize, ridge: f64) -> bool {
    for i in 0..n {
        l[i * n + i] += ridge;
    }
    for c in 0..n {
        for r in c..n {
            let mut sum = l[r * n + c];
            for k in 0..c {
                sum -= l[r * n + k] * l[c * n + k];
            }
            if r == c {
                if sum <= 0.0 || !sum.is_finite() {
                    return false;
                }
                l[c * n + c] = sum.sqrt();
            } else {
                l[r * n + c] = sum / l[c * n + c];
            }
        }
    }
    true
}

fn solve_factored(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for r in 0..n {
        for k in 0..r {
            y[r] -= l[r * n + k] * y[k];
        }
        y[r] /= l[r * n + r];
    }
    for r in (0..n).rev() {
        for k in r + 1..n {
            y[r] -= l[k * n + r] * y[k];
        }
        y[r] /= l[r * n + r];
    }
    y
}

/// Phase classification of a heavy-corner margin ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    NearCritical,
    Supercritical,
}

/// Critical ratio for 3-way heavy-corner margins: `1/(2^(2/3) - 1)`.
pub fn critical_ratio_3way() -> f64 {
    (2f64.powf(2.0 / 3.0) - 1.0).recip()
}

/// Band `|B - B_c| < 0.05` where finite-n limits are unreliable.
pub const NEAR_CRITICAL_BAND: f64 = 0.05;

impl Regime {
    /// Strict classification: subcritical iff `B < B_c`.
    pub fn classify(b: f64) -> Regime {
        let bc = critical_ratio_3way();
        if b < bc {
            Regime::Subcritical
        } else if b > bc {
            Regime::Supercritical
        } else {
            Regime::NearCritical
        }
    }
}

pub fn in_near_critical_band(b: f64) -> bool {
    (b - critical_ratio_3way()).abs() < NEAR_CRITICAL_BAND
}

/// Solution of the reduced two-variable system for margins
/// `(B n^2, n^2, ..., n^2)`.
#[derive(Debug, Clone, Serialize)]
pub struct BarvinokSolution {
    pub n: usize,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    /// `P - 1` and `Q - 1` carried at full precision; in the supercritical
    /// regime `P - 1` is of order `1/n^2` and would lose digits through `p`.
    pub p_minus_one: f64,
    pub q_minus_one: f64,
    pub z111: f64,
    pub z121: f64,
    pub z221: f64,
    pub z222: f64,
    pub regime: Regime,
    pub near_critical: bool,
    /// Largest equation residual relative to its right-hand side.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `P^a Q^b - 1` from `(u, v) = (log(P-1), log(Q-1))`, cancellation-free.
#[inline]
fn pq_term(a: f64, bq: f64, lp: f64, lq: f64) -> f64 {
    (a * lp + bq * lq).exp_m1()
}

struct PqEval {
    f1: f64,
    f2: f64,
    z: [f64; 4],
}

fn pq_system(n: f64, b: f64, u: f64, v: f64) -> PqEval {
    let lp = u.exp().ln_1p(); // log P
    let lq = v.exp().ln_1p(); // log Q
    let z111 = pq_term(3.0, 0.0, lp, lq).recip();
    let z121 = pq_term(2.0, 1.0, lp, lq).recip();
    let z221 = pq_term(1.0, 2.0, lp, lq).recip();
    let z222 = pq_term(0.0, 3.0, lp, lq).recip();
    let m = n - 1.0;
    PqEval {
        f1: z111 + 2.0 * m * z121 + m * m * z221 - b * n * n,
        f2: z121 + 2.0 * m * z221 + m * m * z222 - n * n,
        z: [z111, z121, z221, z222],
    }
}

fn pq_residual(n: f64, b: f64, e: &PqEval) -> f64 {
    (e.f1.abs() / (b * n * n)).max(e.f2.abs() / (n * n))
}

/// Solves the reduced system by safeguarded 2-D Newton in
/// `(log(P-1), log(Q-1))` with an analytic Jacobian, initialized from the
/// closed-form limits; falls back to continuation in `B` from the exactly
/// solvable `B = 1`.
pub fn barvinok_solve(n: usize, b: f64) -> Result<BarvinokSolution> {
    barvinok_solve_with(n, b, 1e-10, 200)
}

pub fn barvinok_solve_with(
    n: usize,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BarvinokSolution> {
    if n < 2 {
        return Err(Error::DegenerateAxis);
    }
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::InvalidParameter("margin ratio B must be positive"));
    }
    let (uv, iterations, residual) = match pq_newton(n, b, initial_uv(n, b), tol, max_iter) {
        Ok(done) => done,
        Err(partial) => {
            // continuation from the symmetric point P = Q = 2^{1/3}
            let w = (2f64.cbrt() - 1.0).ln();
            let mut uv = (w, w);
            let mut total_iters = 0;
            let steps = 64;
            let mut ok = true;
            for s in 1..=steps {
                let bs = 1.0 + (b - 1.0) * s as f64 / steps as f64;
                match pq_newton(n, bs, uv, tol, max_iter) {
                    Ok((x, it, _)) => {
                        uv = x;
                        total_iters += it;
                    }
                    Err((x, it, _)) => {
                        uv = x;
                        total_iters += it;
                        ok = false;
                    }
                }
            }
            let e = pq_system(n as f64, b, uv.0, uv.1);
            let r = pq_residual(n as f64, b, &e);
            if ok && r <= tol {
                (uv, total_iters, r)
            } else {
                let best = solution_from(n, b, partial.0, partial.2, partial.1, false);
                return Err(Error::PqNotConverged {
                    best: Box::new(best),
                });
            }
        }
    };
    Ok(solution_from(n, b, uv, residual, iterations, true))
}

fn solution_from(
    n: usize,
    b: f64,
    (u, v): (f64, f64),
    residual: f64,
    iterations: usize,
    converged: bool,
) -> BarvinokSolution {
    let e = pq_system(n as f64, b, u, v);
    let p_minus_one = u.exp();
    let q_minus_one = v.exp();
    BarvinokSolution {
        n,
        b,
        p: 1.0 + p_minus_one,
        q: 1.0 + q_minus_one,
        p_minus_one,
        q_minus_one,
        z111: e.z[0],
        z121: e.z[1],
        z221: e.z[2],
        z222: e.z[3],
        regime: Regime::classify(b),
        near_critical: in_near_critical_band(b),
        residual,
        iterations,
        converged,
    }
}

fn initial_uv(n: usize, b: f64) -> (f64, f64) {
    let bc = critical_ratio_3way();
    let v = (2f64.cbrt() - 1.0).ln();
    let u = if b < bc - NEAR_CRITICAL_BAND {
        // P -> (B^{-1} + 1) / 2^{2/3}
        ((b.recip() + 1.0) / 2f64.powf(2.0 / 3.0) - 1.0).ln()
    } else if b > bc + NEAR_CRITICAL_BAND {
        // P^3 -> 1 + 1/(n^2 (B - B_c)); cbrt via expm1/ln_1p keeps precision
        (((n as f64).powi(-2) / (b - bc)).ln_1p() / 3.0).exp_m1().ln()
    } else {
        // near-critical: between the two scales
        (1.0 / n as f64).ln()
    };
    (u, v)
}

type PqState = ((f64, f64), usize, f64);

fn pq_newton(
    n: usize,
    b: f64,
    (mut u, mut v): (f64, f64),
    tol: f64,
    max_iter: usize,
) -> std::result::Result<PqState, PqState> {
    let nf = n as f64;
    let m = nf - 1.0;
    let mut eval = pq_system(nf, b, u, v);
    let mut res = pq_residual(nf, b, &eval);
    for iter in 0..max_iter {
        if res <= tol {
            return Ok(((u, v), iter, res));
        }
        // d/du of 1/(P^a Q^b - 1) = -(D+1) * a * sigma_u / D^2,
        // sigma_u = e^u / (1 + e^u)
        let su = u.exp() / (1.0 + u.exp());
        let sv = v.exp() / (1.0 + v.exp());
        let lp = u.exp().ln_1p();
        let lq = v.exp().ln_1p();
        let dz = |a: f64, bq: f64, s: f64, along_p: bool| -> f64 {
            let d = pq_term(a, bq, lp, lq);
            let expo = if along_p { a } else { bq };
            -(d + 1.0) * expo * s / (d * d)
        };
        let j11 = dz(3.0, 0.0, su, true) + 2.0 * m * dz(2.0, 1.0, su, true)
            + m * m * dz(1.0, 2.0, su, true);
        let j12 = dz(3.0, 0.0, sv, false) + 2.0 * m * dz(2.0, 1.0, sv, false)
            + m * m * dz(1.0, 2.0, sv, false);
        let j21 = dz(2.0, 1.0, su, true) + 2.0 * m * dz(1.0, 2.0, su, true)
            + m * m * dz(0.0, 3.0, su, true);
        let j22 = dz(2.0, 1.0, sv, false) + 2.0 * m * dz(1.0, 2.0, sv, false)
            + m * m * dz(0.0, 3.0, sv, false);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return Err(((u, v), iter, res));
        }
        let mut du = -(eval.f1 * j22 - eval.f2 * j12) / det;
        let mut dv = -(eval.f2 * j11 - eval.f1 * j21) / det;
        // cap wild steps in log space
        let cap = 30.0;
        let norm = du.abs().max(dv.abs());
        if norm > cap {
            du *= cap / norm;
            dv *= cap / norm;
        }
        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let trial = pq_system(nf, b, u + t * du, v + t * dv);
            let trial_res = pq_residual(nf, b, &trial);
            if trial_res.is_finite() && trial_res < res {
                u += t * du;
                v += t * dv;
                eval = trial;
                res = trial_res;
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced {
            return Err(((u, v), iter, res));
        }
    }
    if res <= tol {
        Ok(((u, v), max_iter, res))
    } else {
        Err(((u, v), max_iter, res))
    }
}

/// The 2-way typical table: the margin-feasible real table maximizing
/// `g(X) = sum f(X_ij)` with `f(x) = (x+1) log(x+1) - x log x`, computed via
/// the dual geometric-tilting solve (`Z_ij = psi'(alpha_i + beta_j)`).
#[derive(Debug, Clone, Serialize)]
pub struct TypicalTable {
    pub solve: SolveReport,
    /// `g` evaluated at the maximizer.
    pub objective: f64,
}

pub fn typical_table_2way(
    rows: Vec<i64>,
    cols: Vec<i64>,
    opts: &SolveOptions,
) -> Result<TypicalTable> {
    let spec = MarginSpec::new(vec![rows, cols])?;
    let solve = solve_mle(&spec, opts)?;
    let objective = typical_objective(&solve.expected);
    Ok(TypicalTable { solve, objective })
}

/// `g(X) = sum_cells (x+1) log(x+1) - x log x`, with `0 log 0 = 0`.
pub fn typical_objective(z: &RealTable) -> f64 {
    z.data()
        .iter()
        .map(|&x| {
            let xlogx = if x == 0.0 { 0.0 } else { x * x.ln() };
            (x + 1.0) * x.ln_1p() - xlogx
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    const LOG2: f64 = std::f64::consts::LN_2;

    #[test]
    fn psi_values() {
        // psi'(log 2) = 1/(2-1) = 1
        assert!((psi_prime(LOG2).unwrap() - 1.0).abs() < 1e-15);
        // psi'(theta) ~ 1/theta as theta -> 0+
        let m = psi_prime(1e-8).unwrap();
        assert!(m > 0.99e8 && m < 1.01e8);
        // psi(theta) = -log(1 - e^{-theta})
        assert!((psi(LOG2).unwrap() - LOG2).abs() < 1e-15);
        // variance positive across a wide grid
        let mut theta = 1e-6;
        while theta <= 20.0 {
            assert!(psi_double(theta).unwrap() > 0.0, "theta = {theta}");
            theta *= 1.7;
        }
        assert!(matches!(psi(0.0), Err(Error::NonPositiveTheta(_))));
        assert!(matches!(psi_prime(-1.0), Err(Error::NonPositiveTheta(_))));
    }

    #[test]
    fn theta_for_mean_inverts_psi_prime() {
        for mean in [0.01, 0.5, 1.0, 7.3, 1e4] {
            let theta = theta_for_mean(mean).unwrap();
            assert!((psi_prime(theta).unwrap() - mean).abs() / mean < 1e-12);
        }
    }

    #[test]
    fn expected_table_examples() {
        // alpha = beta = gamma = log2/3 everywhere -> theta = log 2, Z = 1
        let axes = vec![vec![LOG2 / 3.0; 2]; 3];
        let t = Tilting::new(axes).unwrap();
        let z = expected_table(&t).unwrap();
        assert!(z.data().iter().all(|&v| (v - 1.0).abs() < 1e-14));

        // corner cell equals 1/(P^3 - 1) when alpha_1 = beta_1 = gamma_1
        let a1 = 0.4;
        let t = Tilting::new(vec![vec![a1, 0.9], vec![a1, 0.8], vec![a1, 1.1]]).unwrap();
        let z = expected_table(&t).unwrap();
        let p = a1.exp();
        assert!((z.get(&[0, 0, 0]) - (p.powi(3) - 1.0).recip()).abs() < 1e-14);

        // raising one alpha strictly lowers every cell in that slice
        let bumped = Tilting::new(vec![vec![a1 + 0.1, 0.9], vec![a1, 0.8], vec![a1, 1.1]]).unwrap();
        let zb = expected_table(&bumped).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                assert!(zb.get(&[0, j, k]) < z.get(&[0, j, k]));
                assert_eq!(zb.get(&[1, j, k]), z.get(&[1, j, k]));
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_the_symmetric_solution() {
        let spec = MarginSpec::new(vec![vec![4, 4], vec![4, 4], vec![4, 4]]).unwrap();
        let t = Tilting::new(vec![vec![LOG2 / 3.0; 2]; 3]).unwrap();
        let lik = log_likelihood(&spec, &t).unwrap();
        for axis in &lik.gradient {
            for g in axis {
                assert!(g.abs() < 1e-10, "gradient {g}");
            }
        }
    }

    fn random_tilting(rng: &mut SplitMix64, dims: &[usize]) -> Tilting {
        loop {
            let axes: Vec<Vec<f64>> = dims
                .iter()
                .map(|&d| (0..d).map(|_| rng.next_f64() * 1.5 - 0.2).collect())
                .collect();
            if let Ok(t) = Tilting::new(axes) {
                return t;
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let spec = MarginSpec::new(vec![vec![5, 3], vec![2, 4, 2], vec![6, 2]]).unwrap();
        let mut rng = SplitMix64::new(2024);
        let h = 1e-6;
        for _ in 0..50 {
            let t = random_tilting(&mut rng, &[2, 3, 2]);
            let lik = log_likelihood(&spec, &t).unwrap();
            for axis in 0..3 {
                for i in 0..t.axes()[axis].len() {
                    let mut up = t.axes().to_vec();
                    up[axis][i] += h;
                    let mut dn = t.axes().to_vec();
                    dn[axis][i] -= h;
                    let fu = log_likelihood(&spec, &Tilting::new(up).unwrap())
                        .unwrap()
                        .value;
                    let fd = log_likelihood(&spec, &Tilting::new(dn).unwrap())
                        .unwrap()
                        .value;
                    let fd_grad = (fu - fd) / (2.0 * h);
                    let g = lik.gradient[axis][i];
                    let denom = g.abs().max(1.0);
                    assert!(
                        (fd_grad - g).abs() / denom < 1e-5,
                        "axis {axis} i {i}: {fd_grad} vs {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn likelihood_is_concave_along_random_segments() {
        let spec = MarginSpec::new(vec![vec![5, 3], vec![4, 4], vec![6, 2]]).unwrap();
        let mut rng = SplitMix64::new(7);
        for _ in 0..100 {
            let a = random_tilting(&mut rng, &[2, 2, 2]);
            let b = random_tilting(&mut rng, &[2, 2, 2]);
            let mid = Tilting::new(
                a.axes()
                    .iter()
                    .zip(b.axes())
                    .map(|(x, y)| x.iter().zip(y).map(|(u, v)| 0.5 * (u + v)).collect())
                    .collect(),
            )
            .unwrap();
            let fa = log_likelihood(&spec, &a).unwrap().value;
            let fb = log_likelihood(&spec, &b).unwrap().value;
            let fm = log_likelihood(&spec, &mid).unwrap().value;
            assert!(fm >= 0.5 * (fa + fb) - 1e-12);
        }
    }

    #[test]
    fn solve_mle_symmetric_cases() {
        // constant 3-way margins force Z = 1, theta = log 2
        let spec = MarginSpec::new(vec![vec![4, 4], vec![4, 4], vec![4, 4]]).unwrap();
        let report = solve_mle(&spec, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.residual_inf <= 1e-10);
        for &z in report.expected.data() {
            assert!((z - 1.0).abs() < 1e-9);
        }
        let t = report.tilting.theta_table();
        for &theta in t.data() {
            assert!((theta - LOG2).abs() < 1e-9);
        }

        // constant 2-way margins: Z = 1
        let spec = MarginSpec::new(vec![vec![3, 3, 3], vec![3, 3, 3]]).unwrap();
        let report = solve_mle(&spec, &SolveOptions::default()).unwrap();
        for &z in report.expected.data() {
            assert!((z - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_mle_rejects_zero_margins() {
        let spec = MarginSpec::new(vec![vec![4, 0], vec![2, 2]]).unwrap();
        assert!(matches!(
            solve_mle(&spec, &SolveOptions::default()),
            Err(Error::ZeroMargin { axis: 0, index: 1 })
        ));
    }

    #[test]
    fn solve_mle_matches_margins_on_skewed_specs() {
        for axis_sums in [
            vec![vec![7, 2], vec![5, 4]],
            vec![vec![12, 2, 5], vec![9, 10], vec![11, 8]],
            vec![vec![30, 1], vec![16, 15], vec![29, 2]],
        ] {
            let spec = MarginSpec::new(axis_sums).unwrap();
            let report = solve_mle(&spec, &SolveOptions::default()).unwrap();
            assert!(report.converged, "residual {}", report.residual_inf);
            for axis in 0..spec.rank() {
                let margins = report.expected.plane_margins(axis).unwrap();
                for (m, &t) in margins.iter().zip(&spec.axis_sums()[axis]) {
                    assert!((m - t as f64).abs() / t as f64 <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn gauge_shift_leaves_expected_table_unchanged() {
        let t = Tilting::new(vec![vec![0.5, 0.9], vec![0.4, 0.7], vec![0.3, 0.8]]).unwrap();
        let z = expected_table(&t).unwrap();
        // shift alpha up by s, beta down by s; gamma up by w, alpha down by w
        let (s, w) = (0.07, -0.11);
        let shifted = Tilting::new(vec![
            t.axes()[0].iter().map(|v| v + s - w).collect(),
            t.axes()[1].iter().map(|v| v - s).collect(),
            t.axes()[2].iter().map(|v| v + w).collect(),
        ])
        .unwrap();
        let zs = expected_table(&shifted).unwrap();
        for (a, b) in z.data().iter().zip(zs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // and gauge normalization is itself a theta-preserving shift
        let norm = shifted.gauge_normalized();
        let means: Vec<f64> = norm
            .axes()
            .iter()
            .map(|a| a.iter().sum::<f64>() / a.len() as f64)
            .collect();
        assert!((means[0] - means[1]).abs() < 1e-12);
        assert!((means[1] - means[2]).abs() < 1e-12);
        for (a, b) in expected_table(&norm).unwrap().data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_permutation_equivariance() {
        let spec = MarginSpec::new(vec![vec![9, 3], vec![7, 5], vec![8, 4]]).unwrap();
        let report = solve_mle(&spec, &SolveOptions::default()).unwrap();
        // permuted margins (swap axes 0 and 2) solve to the transposed Z
        let pspec = MarginSpec::new(vec![vec![8, 4], vec![7, 5], vec![9, 3]]).unwrap();
        let preport = solve_mle(&pspec, &SolveOptions::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let a = report.expected.get(&[i, j, k]);
                    let b = preport.expected.get(&[k, j, i]);
                    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn barvinok_b1_is_exactly_symmetric() {
        for n in [2usize, 17, 123, 800] {
            let s = barvinok_solve(n, 1.0).unwrap();
            assert!(s.converged);
            assert!((s.p - 2f64.cbrt()).abs() < 1e-12, "n = {n}: P = {}", s.p);
            assert!((s.q - 2f64.cbrt()).abs() < 1e-12);
            assert_eq!(s.regime, Regime::Subcritical);
        }
    }

    #[test]
    fn barvinok_subcritical_approaches_the_limit() {
        let s = barvinok_solve(400, 1.2).unwrap();
        let limit = (1.2f64.recip() + 1.0) / 2f64.powf(2.0 / 3.0);
        // P = limit + O(1/n)
        assert!((s.p - limit).abs() < 10.0 / 400.0, "P = {}", s.p);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn barvinok_supercritical_scale() {
        let s = barvinok_solve(400, 2.5).unwrap();
        let bc = critical_ratio_3way();
        let predicted = (400f64).powi(-2) / (2.5 - bc);
        // P^3 - 1 = n^{-2}/(B - B_c) + O(n^{-3})
        let p3m1 = (3.0 * s.p_minus_one.ln_1p()).exp_m1();
        assert!((p3m1 / predicted - 1.0).abs() < 0.02, "P^3-1 = {p3m1}");
        assert_eq!(s.regime, Regime::Supercritical);
        // Z111 carries the supercritical mass
        assert!(s.z111 > 0.7 * 400.0 * 400.0);
    }

    #[test]
    fn barvinok_near_critical_still_converges() {
        let bc = critical_ratio_3way();
        for n in [50usize, 400] {
            for db in [-0.04, -0.01, 0.0, 0.01, 0.04] {
                let s = barvinok_solve(n, bc + db).unwrap();
                assert!(s.converged, "n={n} db={db}");
                assert!(s.near_critical);
            }
        }
    }

    #[test]
    fn barvinok_rejects_bad_input() {
        assert!(matches!(barvinok_solve(1, 1.0), Err(Error::DegenerateAxis)));
        assert!(barvinok_solve(4, 0.0).is_err());
        assert!(barvinok_solve(4, -2.0).is_err());
    }

    #[test]
    fn cross_solver_agreement() {
        // explicit margins (B n^2, n^2, ...) solved by full Newton match the
        // reduced system after reading P, Q off gauge-invariant cell params
        for (n, b) in [(4usize, 1.2f64), (8, 1.2), (8, 2.5)] {
            let heavy = (b * (n * n) as f64).round() as i64;
            let mut sums = vec![(n * n) as i64; n];
            sums[0] = heavy;
            let b_eff = heavy as f64 / (n * n) as f64;
            let spec = MarginSpec::new(vec![sums.clone(), sums.clone(), sums]).unwrap();
            let report = solve_mle(&spec, &SolveOptions::default()).unwrap();
            let reduced = barvinok_solve(n, b_eff).unwrap();
            let theta = report.tilting.theta_table();
            let p_hat = (theta.get(&[0, 0, 0]) / 3.0).exp();
            let last = n - 1;
            let q_hat = (theta.get(&[last, last, last]) / 3.0).exp();
            assert!((p_hat - reduced.p).abs() < 1e-8, "P {p_hat} vs {}", reduced.p);
            assert!((q_hat - reduced.q).abs() < 1e-8, "Q {q_hat} vs {}", reduced.q);
        }
    }

    #[test]
    fn typical_table_constant_margins() {
        let n = 5usize;
        let t = typical_table_2way(vec![n as i64; n], vec![n as i64; n], &SolveOptions::default())
            .unwrap();
        for &z in t.solve.expected.data() {
            assert!((z - 1.0).abs() < 1e-9);
        }
        let expect = (n * n) as f64 * 2.0 * LOG2;
        assert!((t.objective - expect).abs() < 1e-8);
    }

    #[test]
    fn typical_table_matches_projected_gradient_oracle() {
        // primal oracle: project the gradient ascent of g onto the affine
        // margin subspace (doubly-centered correction), small steps
        let rows = vec![7i64, 3, 5, 9];
        let cols = vec![6i64, 6, 4, 8];
        let t = typical_table_2way(rows.clone(), cols.clone(), &SolveOptions::default()).unwrap();

        let (m, n) = (rows.len(), cols.len());
        let mut x = vec![vec![0.0f64; n]; m];
        let total: i64 = rows.iter().sum();
        for (i, row) in x.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = rows[i] as f64 * cols[j] as f64 / total as f64;
            }
        }
        let project = |x: &mut Vec<Vec<f64>>| {
            let row_sums: Vec<f64> = x.iter().map(|r| r.iter().sum()).collect();
            let col_sums: Vec<f64> =
                (0..n).map(|j| x.iter().map(|r| r[j]).sum()).collect();
            let excess_r: Vec<f64> = row_sums
                .iter()
                .zip(&rows)
                .map(|(s, &t)| s - t as f64)
                .collect();
            let excess_c: Vec<f64> = col_sums
                .iter()
                .zip(&cols)
                .map(|(s, &t)| s - t as f64)
                .collect();
            let total_excess: f64 = excess_r.iter().sum();
            for i in 0..m {
                for j in 0..n {
                    x[i][j] -= excess_r[i] / n as f64 + excess_c[j] / m as f64
                        - total_excess / (m * n) as f64;
                }
            }
        };
        let step = 0.05;
        for _ in 0..200_000 {
            let mut moved = x.clone();
            for row in &mut moved {
                for cell in row.iter_mut() {
                    // f'(x) = log(1 + 1/x)
                    *cell += step * (cell.recip()).ln_1p();
                }
            }
            project(&mut moved);
            let delta: f64 = moved
                .iter()
                .flatten()
                .zip(x.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = moved;
            if delta < 1e-12 {
                break;
            }
        }
        for (i, row) in x.iter().enumerate() {
            for (j, &primal) in row.iter().enumerate() {
                let dual = t.solve.expected.get(&[i, j]);
                assert!(
                    (primal - dual).abs() < 1e-6,
                    "cell ({i},{j}): primal {primal} vs dual {dual}"
                );
            }
        }
    }
}
