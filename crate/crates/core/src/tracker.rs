//! Inverse Wronski map by continuation.
//!
//! A class is represented in a [`Chart`] with real base point `z0`:
//! `q1 = z^{d-1} + c_{d-2} z^{d-2} + ... + c_0` and
//! `q2 = (z - z0)(z^{d-1} + h_{d-2} z^{d-2} + ... + h_0)`, which leaves
//! `2d - 2` free coefficients and makes `W(q1, q2)` monic of degree `2d - 2`.
//!
//! [`track`] follows one inverse branch while the Wronskian roots move
//! linearly between two sorted lists. Step lengths are measured against the
//! local time scale `min_j sep_j / |dr_j/dt|`, so roots spread over many
//! orders of magnitude (as in the seeds) are handled uniformly.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::combinat::{ballot_sequences, catalan, BallotSequence, CombinatError};
use crate::poly::{
    from_roots, roots, span_equivalent, wronskian, Complex, ComplexPoly, PolyError, PolyPair, Real,
};
use crate::thorn::{seed_from_ballot, Seed, SeedError, SeedSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("chart with base point {0} cannot represent this class")]
    ChartDegenerate(Real),
    #[error("Newton iteration did not converge in {0} steps")]
    NewtonDiverged(usize),
    #[error("Jacobian is numerically singular (condition estimate {0:.3e})")]
    SingularJacobian(Real),
    #[error("path stuck at t = {t} after {chart_switches} chart switches")]
    PathStuck { t: Real, chart_switches: usize },
    #[error("interpolated roots collide")]
    CollisionDetected,
    #[error("start roots do not match the class (relative error {0:.3e})")]
    StartMismatch(Real),
    #[error("expected {expected} classes, found {found}")]
    CountMismatch { expected: usize, found: usize, logs: Vec<String> },
    #[error("invalid points: {0}")]
    InvalidPoints(String),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Combinat(#[from] CombinatError),
}

/// Normalization `q2(base_point) = 0` with `q1`, `q2` monic of degrees
/// `d - 1`, `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Chart {
    pub base_point: Real,
    pub d: usize,
}

/// One class of rational functions, stored in a chart.
#[derive(Clone, PartialEq, Serialize)]
pub struct PairClass {
    pub chart: Chart,
    pub q1: ComplexPoly,
    pub q2: ComplexPoly,
    pub ballot: Option<BallotSequence>,
}

impl fmt::Debug for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairClass")
            .field("z0", &self.chart.base_point)
            .field("q1", &self.q1)
            .field("q2", &self.q2)
            .field("ballot", &self.ballot)
            .finish()
    }
}

fn c(x: Real) -> Complex {
    Complex::new(x, 0.0)
}

impl PairClass {
    pub fn d(&self) -> usize {
        self.chart.d
    }

    /// Free coefficients `(c_0..c_{d-2}, h_0..h_{d-2})`.
    pub fn theta(&self) -> Vec<Complex> {
        let d = self.d();
        let (h, _) = self
            .q2
            .div_rem(&ComplexPoly::new_exact(vec![c(-self.chart.base_point), c(1.0)]))
            .expect("divisor is monic");
        let mut t: Vec<Complex> = (0..d - 1).map(|k| self.q1.coeff(k)).collect();
        t.extend((0..d - 1).map(|k| h.coeff(k)));
        t
    }

    pub fn from_theta(chart: Chart, theta: &[Complex], ballot: Option<BallotSequence>) -> Self {
        let d = chart.d;
        let mut q1: Vec<Complex> = theta[..d - 1].to_vec();
        q1.push(c(1.0));
        let mut h: Vec<Complex> = theta[d - 1..].to_vec();
        h.push(c(1.0));
        let lin = ComplexPoly::new_exact(vec![c(-chart.base_point), c(1.0)]);
        PairClass {
            chart,
            q1: ComplexPoly::new_exact(q1),
            q2: &ComplexPoly::new_exact(h) * &lin,
            ballot,
        }
    }

    /// Normalizes an arbitrary basis of the class into `chart`.
    pub fn from_pair(pair: &PolyPair, chart: Chart, ballot: Option<BallotSequence>) -> Result<Self, TrackError> {
        let d = chart.d;
        let z0 = c(chart.base_point);
        let (f1, f2) = (&pair.first, &pair.second);
        let (t1, t2) = (f1.coeff(d), f2.coeff(d));
        let scale = f1.max_coeff().max(f2.max_coeff());
        if t1.norm().max(t2.norm()) <= 1e-10 * scale {
            return Err(TrackError::ChartDegenerate(chart.base_point));
        }
        // element without a z^d term
        let low = &f1.scale(t2) - &f2.scale(t1);
        let lead = low.coeff(d - 1);
        if lead.norm() <= 1e-10 * low.max_coeff().max(1e-300) || low.coeff(d).norm() > 1e-8 * lead.norm() {
            return Err(TrackError::ChartDegenerate(chart.base_point));
        }
        let q1 = ComplexPoly::new_exact((0..d).map(|k| low.coeff(k) / lead).collect());
        let top = if t1.norm() >= t2.norm() { f1.scale(c(1.0) / t1) } else { f2.scale(c(1.0) / t2) };
        let q1z = q1.eval(z0);
        let q1_scale: Real = q1
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, a)| a.norm() * chart.base_point.abs().powi(k as i32))
            .sum();
        if q1z.norm() <= 1e-12 * q1_scale {
            return Err(TrackError::ChartDegenerate(chart.base_point));
        }
        let q2 = &top - &q1.scale(top.eval(z0) / q1z);
        let mut q2c: Vec<Complex> = (0..=d).map(|k| q2.coeff(k)).collect();
        q2c[d] = c(1.0);
        let q2 = ComplexPoly::new_exact(q2c);
        let pc = PairClass { chart, q1, q2, ballot };
        // rebuild from theta so q2(z0) = 0 holds exactly
        let theta = pc.theta();
        Ok(PairClass::from_theta(chart, &theta, pc.ballot))
    }

    pub fn from_seed(seed: &Seed) -> Self {
        let d = seed.pair.d;
        PairClass {
            chart: Chart { base_point: 0.0, d },
            q1: seed.pair.q1.to_complex(),
            q2: seed.pair.q2.to_complex(),
            ballot: Some(seed.ballot.clone()),
        }
    }

    pub fn pair(&self) -> PolyPair {
        PolyPair::new(self.q1.clone(), self.q2.clone())
    }

    pub fn wronskian(&self) -> ComplexPoly {
        wronskian(&self.q1, &self.q2)
    }

    /// Largest imaginary part over both polynomials, relative to each
    /// polynomial's coefficient scale.
    pub fn max_imag(&self) -> Real {
        self.q1.relative_imag().max(self.q2.relative_imag())
    }

    /// Largest coefficient of the chart representative.
    pub fn coefficient_size(&self) -> Real {
        self.q1.max_coeff().max(self.q2.max_coeff())
    }

    /// Sorted real parts of the Wronskian roots.
    pub fn critical_points(&self) -> Result<Vec<Real>, TrackError> {
        let mut r: Vec<Real> = roots(&self.wronskian(), 0.0)?.into_iter().map(|z| z.re).collect();
        r.sort_by(|a, b| a.total_cmp(b));
        Ok(r)
    }

    /// The class after the substitution `z -> alpha z + beta`, in `chart`.
    pub fn substitute(&self, alpha: Real, beta: Real, chart: Chart) -> Result<Self, TrackError> {
        let pair = PolyPair::new(
            self.q1.compose_affine(c(alpha), c(beta)),
            self.q2.compose_affine(c(alpha), c(beta)),
        );
        PairClass::from_pair(&pair, chart, self.ballot.clone())
    }

    /// Normalized resultant of `q1` and `q2`; near zero on the common-factor
    /// locus.
    pub fn resultant_magnitude(&self) -> Real {
        let a: Vec<Complex> = self.q1.coeffs().iter().map(|x| x / self.q1.max_coeff()).collect();
        let b: Vec<Complex> = self.q2.coeffs().iter().map(|x| x / self.q2.max_coeff()).collect();
        let (m, n) = (a.len() - 1, b.len() - 1);
        let size = m + n;
        if size == 0 {
            return 1.0;
        }
        let mut s = DMatrix::<Complex>::zeros(size, size);
        for row in 0..n {
            for (k, &v) in a.iter().rev().enumerate() {
                s[(row, row + k)] = v;
            }
        }
        for row in 0..m {
            for (k, &v) in b.iter().rev().enumerate() {
                s[(n + row, row + k)] = v;
            }
        }
        s.determinant().norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrackOptions {
    /// Relative residual accepted by [`newton_polish`].
    pub newton_tol: Real,
    pub max_newton: usize,
    /// Largest step, as a fraction of the local time scale.
    pub dt_init: Real,
    /// Smallest step before a chart switch, same units as `dt_init`.
    pub dt_min: Real,
    pub chart_retries: usize,
    pub rng_seed: u64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            newton_tol: 1e-12,
            max_newton: 8,
            dt_init: 0.05,
            dt_min: 1e-9,
            chart_retries: 5,
            rng_seed: 0,
        }
    }
}

/// Coefficientwise `W(pair) - prod (z - r_j)` for degrees `0..2d-3`.
pub fn wronski_residual(pc: &PairClass, target_roots: &[Real]) -> Result<Vec<Complex>, TrackError> {
    let d = pc.d();
    let w = pc.wronskian();
    if w.coeff(2 * d - 2).norm() < 1e-10 {
        return Err(TrackError::ChartDegenerate(pc.chart.base_point));
    }
    let target = target_poly(target_roots);
    Ok((0..2 * d - 2).map(|k| w.coeff(k) - target.coeff(k)).collect())
}

fn target_poly(target_roots: &[Real]) -> ComplexPoly {
    let r: Vec<Complex> = target_roots.iter().map(|&x| c(x)).collect();
    from_roots(&r)
}

/// Jacobian of [`wronski_residual`] with respect to [`PairClass::theta`]:
/// column `i` holds the coefficients of `W(z^i, q2)` or `W(q1, (z - z0) z^i)`.
pub fn residual_jacobian(pc: &PairClass) -> DMatrix<Complex> {
    let d = pc.d();
    let n = 2 * d - 2;
    let lin = ComplexPoly::new_exact(vec![c(-pc.chart.base_point), c(1.0)]);
    let mut jac = DMatrix::<Complex>::zeros(n, n);
    for i in 0..d - 1 {
        let col = wronskian(&ComplexPoly::monomial(i, c(1.0)), &pc.q2);
        for k in 0..n {
            jac[(k, i)] = col.coeff(k);
        }
        let col = wronskian(&pc.q1, &(&ComplexPoly::monomial(i, c(1.0)) * &lin));
        for k in 0..n {
            jac[(k, d - 1 + i)] = col.coeff(k);
        }
    }
    jac
}

/// Values and first two derivatives of a polynomial at `z`.
fn eval3(p: &ComplexPoly, z: Complex) -> [Complex; 3] {
    let mut v = [c(0.0); 3];
    for &a in p.coeffs().iter().rev() {
        v[2] = v[2] * z + v[1];
        v[1] = v[1] * z + v[0];
        v[0] = v[0] * z + a;
    }
    v[2] = v[2] * 2.0;
    v
}

/// [`eval3`] for the polynomial with coefficients `|a_k|` at `x >= 0`.
fn eval3_abs(p: &ComplexPoly, x: Real) -> [Real; 3] {
    let mut v = [0.0; 3];
    for a in p.coeffs().iter().rev() {
        v[2] = v[2] * x + v[1];
        v[1] = v[1] * x + v[0];
        v[0] = v[0] * x + a.norm();
    }
    v[2] *= 2.0;
    v
}

/// Pointwise Wronskian system at the nodes `r`: rows are `W(r_j)` together
/// with its gradient in theta, scaled to relative root displacements.
struct NodeSystem {
    jac: DMatrix<Complex>,
    /// `W(r_j) / (W'(r_j) sep_j)`
    rhs: DVector<Complex>,
    /// Rounding error estimate for each entry of `rhs`.
    noise: Vec<Real>,
}

impl NodeSystem {
    fn rho(&self) -> Real {
        max_norm(&self.rhs)
    }

    /// Every row is below `tol` or within `factor` times its rounding noise.
    fn within(&self, tol: Real, factor: Real) -> bool {
        self.rhs
            .iter()
            .zip(&self.noise)
            .all(|(g, e)| g.norm() <= tol.max((factor * e).min(MAX_NOISE_TOL)))
    }
}

fn separations(r: &[Real]) -> Vec<Real> {
    let n = r.len();
    (0..n)
        .map(|j| {
            let mut s = Real::INFINITY;
            if j > 0 {
                s = s.min((r[j] - r[j - 1]).abs());
            }
            if j + 1 < n {
                s = s.min((r[j + 1] - r[j]).abs());
            }
            if n == 1 {
                s = r[0].abs().max(1.0);
            }
            s
        })
        .collect()
}

fn node_system(pc: &PairClass, r: &[Real], sep: &[Real]) -> NodeSystem {
    let d = pc.d();
    let n = 2 * d - 2;
    let z0 = c(pc.chart.base_point);
    let mut jac = DMatrix::<Complex>::zeros(n, n);
    let mut rhs = DVector::<Complex>::zeros(n);
    let mut noise = Vec::with_capacity(n);
    for (j, &rj) in r.iter().enumerate() {
        let z = c(rj);
        let [p1, dp1, ddp1] = eval3(&pc.q1, z);
        let [p2, dp2, ddp2] = eval3(&pc.q2, z);
        let w = p1 * dp2 - dp1 * p2;
        let dw = p1 * ddp2 - ddp1 * p2;
        let mut scale = dw * sep[j];
        if scale.norm() == 0.0 {
            scale = c(1.0);
        }
        rhs[j] = w / scale;
        let [a1, da1, _] = eval3_abs(&pc.q1, rj.abs());
        let [a2, da2, _] = eval3_abs(&pc.q2, rj.abs());
        let deg = (2 * d) as Real;
        noise.push(deg * Real::EPSILON * (a1 * da2 + da1 * a2) / scale.norm());
        let mut zi = c(1.0);
        let mut zim1 = c(0.0);
        for i in 0..d - 1 {
            // d/dc_i: W(z^i, q2)
            let dz = zim1 * (i as Real);
            jac[(j, i)] = (zi * dp2 - dz * p2) / scale;
            // d/dh_i: W(q1, (z - z0) z^i)
            let e = (z - z0) * zi;
            let de = zi * ((i + 1) as Real) - z0 * dz;
            jac[(j, d - 1 + i)] = (p1 * de - dp1 * e) / scale;
            zim1 = zi;
            zi *= z;
        }
    }
    NodeSystem { jac, rhs, noise }
}

/// Solves `jac x = b` after column equilibration.
fn solve_scaled(jac: &DMatrix<Complex>, b: &DVector<Complex>) -> Option<DVector<Complex>> {
    let n = jac.ncols();
    let col_scale: Vec<Real> = (0..n)
        .map(|i| jac.column(i).iter().map(|x| x.norm()).fold(0.0, Real::max))
        .collect();
    if col_scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return None;
    }
    let mut a = jac.clone();
    for i in 0..n {
        a.column_mut(i).scale_mut(1.0 / col_scale[i]);
    }
    let x = a.full_piv_lu().solve(b)?;
    let out = DVector::from_iterator(n, (0..n).map(|i| x[i] / col_scale[i]));
    if out.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(out)
    } else {
        None
    }
}

fn max_norm(v: &DVector<Complex>) -> Real {
    v.iter().map(|x| x.norm()).fold(0.0, Real::max)
}

#[derive(Debug)]
enum CorrectorFailure {
    Rejected,
    Singular,
}

/// Newton at fixed nodes; returns the converged class and the number of
/// iterations.
fn correct(
    pc: &PairClass,
    r: &[Real],
    tol: Real,
    max_iter: usize,
    strict: bool,
) -> Result<(PairClass, usize), CorrectorFailure> {
    let sep = separations(r);
    let mut cur = pc.clone();
    let mut theta = DVector::from_vec(cur.theta());
    let mut sys = node_system(&cur, r, &sep);
    let mut rho = sys.rho();
    if strict && rho > 0.25 {
        return Err(CorrectorFailure::Rejected);
    }
    for it in 0..=max_iter {
        if sys.within(tol, 16.0) {
            return Ok((cur, it));
        }
        if it == max_iter {
            break;
        }
        let delta = solve_scaled(&sys.jac, &sys.rhs).ok_or(CorrectorFailure::Singular)?;
        theta -= delta;
        let next = PairClass::from_theta(cur.chart, theta.as_slice(), cur.ballot.clone());
        let next_sys = node_system(&next, r, &sep);
        let next_rho = next_sys.rho();
        if !next_rho.is_finite() {
            return Err(CorrectorFailure::Rejected);
        }
        if strict && next_rho > 0.5 * rho && next_rho > tol {
            // stalled at rounding level
            if sys.within(NOISE_FLOOR, 1e3) {
                return Ok((if next_rho < rho { next } else { cur }, it + 1));
            }
            return Err(CorrectorFailure::Rejected);
        }
        cur = next;
        sys = next_sys;
        rho = next_rho;
    }
    if strict {
        Err(CorrectorFailure::Rejected)
    } else {
        Ok((cur, max_iter))
    }
}

/// Relative root displacement of `pc` against sorted `r`.
fn root_mismatch(pc: &PairClass, r: &[Real]) -> Real {
    let sep = separations(r);
    node_system(pc, r, &sep).rho()
}

const TRACK_TOL: Real = 1e-11;
const POLISH_TOL: Real = 1e-13;
/// Corrector residuals below this count as converged once Newton stops
/// contracting.
const NOISE_FLOOR: Real = 1e-8;
/// Cap on noise-based tolerances, so badly conditioned rows still fail.
const MAX_NOISE_TOL: Real = 1e-5;
/// Chart representatives with coefficients beyond this (times the root
/// scale) trigger a chart switch.
const CHART_BLOWUP: Real = 1e3;

/// Local Newton inversion of the Wronski map at `target_roots`.
pub fn newton_polish(pc: &PairClass, target_roots: &[Real], opts: &TrackOptions) -> Result<PairClass, TrackError> {
    let r = sorted_checked(target_roots)?;
    if pc.wronskian().coeff(2 * pc.d() - 2).norm() < 1e-10 {
        return Err(TrackError::ChartDegenerate(pc.chart.base_point));
    }
    let sep = separations(&r);
    let cond = condition_estimate(&node_system(pc, &r, &sep).jac);
    if cond > 1e12 {
        return Err(TrackError::SingularJacobian(cond));
    }
    // node Newton pins the roots, coefficient Newton then settles the
    // coefficientwise residual
    let mut cur = match correct(pc, &r, POLISH_TOL, opts.max_newton, false) {
        Ok((next, _)) => next,
        Err(CorrectorFailure::Singular) => return Err(TrackError::SingularJacobian(Real::INFINITY)),
        Err(CorrectorFailure::Rejected) => return Err(TrackError::NewtonDiverged(opts.max_newton)),
    };
    let mut best = (relative_residual(&cur, &r)?, cur.clone());
    for _ in 0..opts.max_newton {
        if best.0 <= 0.01 * opts.newton_tol {
            break;
        }
        let res = DVector::from_vec(wronski_residual(&cur, &r)?);
        let Some(delta) = solve_scaled(&residual_jacobian(&cur), &res) else {
            break;
        };
        let theta: Vec<Complex> = cur.theta().iter().zip(delta.iter()).map(|(a, b)| a - b).collect();
        cur = PairClass::from_theta(cur.chart, &theta, cur.ballot.clone());
        let res = relative_residual(&cur, &r)?;
        if !(res < 0.5 * best.0) {
            if res < best.0 {
                best = (res, cur.clone());
            }
            break;
        }
        best = (res, cur.clone());
    }
    if best.0 <= opts.newton_tol {
        Ok(best.1)
    } else {
        Err(TrackError::NewtonDiverged(opts.max_newton))
    }
}

/// Rounding scale of the coefficients of `W(q1, q2)`: the coefficients of
/// `|q1| |q2'| + |q1'| |q2|`, together with the target's.
fn wronskian_scale(pc: &PairClass, target: &ComplexPoly) -> Real {
    let abs = |p: &ComplexPoly| ComplexPoly::new_exact(p.coeffs().iter().map(|x| c(x.norm())).collect());
    let (a1, a2) = (abs(&pc.q1), abs(&pc.q2));
    let w = &(&a1 * &a2.derivative()) + &(&a1.derivative() * &a2);
    w.max_coeff().max(target.max_coeff())
}

/// Coefficientwise Wronski residual over [`wronskian_scale`].
pub fn relative_residual(pc: &PairClass, target_roots: &[Real]) -> Result<Real, TrackError> {
    let res = wronski_residual(pc, target_roots)?
        .iter()
        .map(|x| x.norm())
        .fold(0.0, Real::max);
    Ok(res / wronskian_scale(pc, &target_poly(target_roots)))
}

/// Condition number of the equilibrated matrix.
fn condition_estimate(jac: &DMatrix<Complex>) -> Real {
    let n = jac.ncols();
    let mut a = jac.clone();
    for i in 0..n {
        let s = a.column(i).iter().map(|x| x.norm()).fold(0.0, Real::max);
        if s == 0.0 {
            return Real::INFINITY;
        }
        a.column_mut(i).scale_mut(1.0 / s);
    }
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, Real::max);
    let min = sv.iter().copied().fold(Real::INFINITY, Real::min);
    if min == 0.0 {
        Real::INFINITY
    } else {
        max / min
    }
}

fn sorted_checked(r: &[Real]) -> Result<Vec<Real>, TrackError> {
    if r.iter().any(|x| !x.is_finite()) {
        return Err(TrackError::InvalidPoints("non-finite root".into()));
    }
    if r.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TrackError::CollisionDetected);
    }
    if r.windows(2).any(|w| (w[1] - w[0]) <= 1e-10 * (w[0].abs() + w[1].abs())) {
        return Err(TrackError::CollisionDetected);
    }
    Ok(r.to_vec())
}

/// Statistics of one [`track`] call.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrackReport {
    pub steps: usize,
    pub rejected: usize,
    pub chart_switches: usize,
}

/// Picks the chart among random base points in `[lo, hi]` whose
/// representative has the smallest coefficients.
fn best_chart(
    pc: &PairClass,
    avoid: &[Real],
    lo: Real,
    hi: Real,
    rng: &mut ChaCha8Rng,
) -> Option<PairClass> {
    let pair = pc.pair();
    let gap = 1e-2 * (hi - lo) / 6.0;
    let mut best: Option<PairClass> = None;
    let mut tried = 0;
    while tried < 16 {
        let z0: Real = rng.random_range(lo..hi);
        if avoid.iter().any(|&a| (a - z0).abs() < gap) {
            continue;
        }
        tried += 1;
        if let Ok(cand) = PairClass::from_pair(&pair, Chart { base_point: z0, d: pc.d() }, pc.ballot.clone()) {
            if best.as_ref().is_none_or(|b| cand.coefficient_size() < b.coefficient_size()) {
                best = Some(cand);
            }
        }
    }
    best
}

fn chart_bound(r: &[Real], z0: Real, d: usize) -> Real {
    let rad = r.iter().fold(z0.abs(), |m, x| m.max(x.abs()));
    CHART_BLOWUP * (1.0 + rad).powi(d as i32)
}

/// Follows the branch through `pc` while the Wronskian roots move linearly
/// from `roots_start` to `roots_end`.
pub fn track(
    pc: &PairClass,
    roots_start: &[Real],
    roots_end: &[Real],
    opts: &TrackOptions,
) -> Result<(PairClass, TrackReport), TrackError> {
    let start = sorted_checked(roots_start)?;
    let end = sorted_checked(roots_end)?;
    let d = pc.d();
    if start.len() != 2 * d - 2 || end.len() != start.len() {
        return Err(TrackError::InvalidPoints(format!(
            "expected {} roots, got {} and {}",
            2 * d - 2,
            start.len(),
            end.len()
        )));
    }
    let mismatch = root_mismatch(pc, &start);
    if !(mismatch <= 1e-6) {
        return Err(TrackError::StartMismatch(mismatch));
    }
    let velocity: Vec<Real> = start.iter().zip(&end).map(|(a, b)| b - a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let mut report = TrackReport::default();
    let (lo, hi) = {
        let all = start.iter().chain(&end);
        let lo = all.clone().fold(Real::INFINITY, |m, &x| m.min(x));
        let hi = all.fold(Real::NEG_INFINITY, |m, &x| m.max(x));
        let mid = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(1.0);
        (mid - 3.0 * half, mid + 3.0 * half)
    };

    let mut cur = pc.clone();
    if velocity.iter().all(|&v| v == 0.0) {
        return Ok((newton_polish(&cur, &end, opts)?, report));
    }
    let mut t = 0.0;
    let mut eta = opts.dt_init;
    let mut failed_switches = 0;
    let at = |t: Real| -> Vec<Real> {
        if t >= 1.0 {
            end.clone()
        } else {
            start.iter().zip(&velocity).map(|(a, v)| a + t * v).collect()
        }
    };
    while t < 1.0 {
        let r = at(t);
        let sep = separations(&r);
        let time_scale = sep
            .iter()
            .zip(&velocity)
            .filter(|(_, v)| **v != 0.0)
            .map(|(s, v)| s / v.abs())
            .fold(Real::INFINITY, Real::min);
        let dt = (eta * time_scale).min(1.0 - t);
        let t_next = if t + dt >= 1.0 - 1e-15 { 1.0 } else { t + dt };
        let r_next = at(t_next);

        // Euler predictor: grad W(r_j) . theta' = -W'(r_j) r_j'
        let sys = node_system(&cur, &r, &sep);
        let mut drift = DVector::<Complex>::zeros(r.len());
        for j in 0..r.len() {
            // rows are divided by W'(r_j) sep_j
            drift[j] = c(-velocity[j] / sep[j]);
        }
        let mut outcome = None;
        if let Some(theta_dot) = solve_scaled(&sys.jac, &drift) {
            let theta: Vec<Complex> = cur
                .theta()
                .iter()
                .zip(theta_dot.iter())
                .map(|(a, b)| a + b * (t_next - t))
                .collect();
            let pred = PairClass::from_theta(cur.chart, &theta, cur.ballot.clone());
            if let Ok((next, _)) = correct(&pred, &r_next, TRACK_TOL, opts.max_newton, true) {
                outcome = Some(next);
            }
        }
        match outcome {
            Some(next) => {
                cur = next;
                t = t_next;
                report.steps += 1;
                eta = (2.0 * eta).min(opts.dt_init);
                if cur.coefficient_size() > chart_bound(&r_next, cur.chart.base_point, d) {
                    if let Some(better) = best_chart(&cur, &r_next, lo, hi, &mut rng) {
                        if better.coefficient_size() < cur.coefficient_size() {
                            cur = better;
                            report.chart_switches += 1;
                        }
                    }
                }
            }
            None => {
                report.rejected += 1;
                eta *= 0.5;
                if eta < opts.dt_min {
                    if failed_switches >= opts.chart_retries {
                        return Err(TrackError::PathStuck { t, chart_switches: report.chart_switches });
                    }
                    failed_switches += 1;
                    let better = best_chart(&cur, &r, lo, hi, &mut rng)
                        .ok_or(TrackError::PathStuck { t, chart_switches: report.chart_switches })?;
                    cur = better;
                    report.chart_switches += 1;
                    eta = opts.dt_init;
                }
            }
        }
    }
    let polished = newton_polish(&cur, &end, opts).or_else(|_| {
        let better = best_chart(&cur, &end, lo, hi, &mut rng).ok_or(TrackError::ChartDegenerate(cur.chart.base_point))?;
        newton_polish(&better, &end, opts)
    })?;
    Ok((polished, report))
}

/// Per-branch record from [`solve_all`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchLog {
    pub ballot: BallotSequence,
    pub steps: usize,
    pub rejected: usize,
    pub chart_switches: usize,
    pub max_imag: Real,
    /// See [`relative_residual`].
    pub residual: Real,
    /// Largest root mismatch between `W` and the targets.
    pub root_error: Real,
    pub resultant: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub points: Vec<Real>,
    pub d: usize,
    pub classes: Vec<PairClass>,
    pub logs: Vec<BranchLog>,
}

/// Order-preserving affine map of `points` into `[-0.9, -0.1]`, as
/// `(scale, shift)` with `mapped = scale * t + shift`.
pub fn thorn_map(points: &[Real]) -> (Real, Real) {
    let lo = points.iter().copied().fold(Real::INFINITY, Real::min);
    let hi = points.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let scale = 0.8 / (hi - lo);
    (scale, -0.9 - scale * lo)
}

fn validate_points(points: &[Real], d: usize) -> Result<Vec<Real>, TrackError> {
    if d < 2 {
        return Err(TrackError::InvalidPoints(format!("degree {d} < 2")));
    }
    if points.len() != 2 * d - 2 {
        return Err(TrackError::InvalidPoints(format!(
            "degree {d} needs {} points, got {}",
            2 * d - 2,
            points.len()
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(TrackError::InvalidPoints("points must be finite".into()));
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.total_cmp(b));
    let span = (p[p.len() - 1] - p[0]).max(Real::MIN_POSITIVE);
    if p.windows(2).any(|w| w[1] - w[0] <= 1e-12 * span.max(w[0].abs())) {
        return Err(TrackError::InvalidPoints("points must be distinct".into()));
    }
    Ok(p)
}

fn branch_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Tracks the seed for `sigma` to `points` (sorted) and returns the class
/// in original coordinates.
pub fn solve_branch(
    sigma: &BallotSequence,
    points: &[Real],
    opts: &TrackOptions,
    schedule: &SeedSchedule,
) -> Result<(PairClass, BranchLog), TrackError> {
    let d = sigma.degree();
    let seed = seed_from_ballot(sigma, d, schedule)?;
    let (alpha, beta) = thorn_map(points);
    let mapped: Vec<Real> = points.iter().map(|&x| alpha * x + beta).collect();
    let (tracked, report) = track(&PairClass::from_seed(&seed), &seed.roots, &mapped, opts)?;

    let lo = points[0];
    let hi = points[points.len() - 1];
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let template = tracked.substitute(alpha, beta, Chart { base_point: mid + 1.7 * half, d })?;
    let class = best_chart(&template, points, mid - 3.0 * half, mid + 3.0 * half, &mut rng)
        .unwrap_or(template);
    let class = newton_polish(&class, points, opts)?;

    let residual = relative_residual(&class, points)?;
    let crit = class.critical_points()?;
    let root_error = crit
        .iter()
        .zip(points)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, Real::max);
    let log = BranchLog {
        ballot: sigma.clone(),
        steps: report.steps,
        rejected: report.rejected,
        chart_switches: report.chart_switches,
        max_imag: class.max_imag(),
        residual,
        root_error,
        resultant: class.resultant_magnitude(),
    };
    Ok((class, log))
}

/// All classes with critical points `points`, one per ballot sequence.
pub fn solve_all(points: &[Real], d: usize, opts: &TrackOptions) -> Result<Solution, TrackError> {
    let points = validate_points(points, d)?;
    let expected = catalan(d)? as usize;
    let sigmas = ballot_sequences(d)?;
    let schedule = SeedSchedule::default();

    let run = |branch_opts: &TrackOptions, idx: &[usize]| -> Vec<(usize, Result<(PairClass, BranchLog), TrackError>)> {
        idx.par_iter()
            .map(|&i| {
                let o = TrackOptions { rng_seed: branch_seed(branch_opts.rng_seed, i), ..*branch_opts };
                (i, solve_branch(&sigmas[i], &points, &o, &schedule))
            })
            .collect()
    };

    let all: Vec<usize> = (0..sigmas.len()).collect();
    let mut results: Vec<Option<Result<(PairClass, BranchLog), TrackError>>> = vec![None; sigmas.len()];
    for (i, r) in run(opts, &all) {
        results[i] = Some(r);
    }

    // Re-run failed or duplicated branches with shorter steps.
    let mut cautious = *opts;
    for _ in 0..2 {
        let bad = suspicious(&results);
        if bad.is_empty() {
            break;
        }
        cautious.dt_init *= 0.25;
        cautious.rng_seed = cautious.rng_seed.wrapping_add(0x5851_f42d_4c95_7f2d);
        for (i, r) in run(&cautious, &bad) {
            results[i] = Some(r);
        }
    }

    let mut classes = Vec::new();
    let mut logs = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.expect("every branch ran") {
            Ok((cls, log)) => {
                classes.push(cls);
                logs.push(log);
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if let Some((_, e)) = failures.first() {
        if failures.len() == sigmas.len() || !matches!(e, TrackError::PathStuck { .. }) {
            return Err(e.clone());
        }
    }
    let distinct = count_distinct(&classes);
    if distinct != expected || !failures.is_empty() {
        let mut lines: Vec<String> = logs.iter().map(|l| format!("{l:?}")).collect();
        lines.extend(failures.iter().map(|(i, e)| format!("{}: {e}", sigmas[*i])));
        return Err(TrackError::CountMismatch { expected, found: distinct, logs: lines });
    }
    Ok(Solution { points, d, classes, logs })
}

/// Branches that failed or landed on the same class as an earlier branch.
fn suspicious(results: &[Option<Result<(PairClass, BranchLog), TrackError>>]) -> Vec<usize> {
    let mut bad = Vec::new();
    let mut kept: Vec<&PairClass> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Some(Ok((cls, _))) => {
                let dup = kept
                    .iter()
                    .any(|k| span_equivalent(&k.pair(), &cls.pair(), 1e-6).unwrap_or(true));
                if dup {
                    bad.push(i);
                } else {
                    kept.push(cls);
                }
            }
            _ => bad.push(i),
        }
    }
    bad
}

fn count_distinct(classes: &[PairClass]) -> usize {
    let mut kept: Vec<&PairClass> = Vec::new();
    for cls in classes {
        if !kept
            .iter()
            .any(|k| span_equivalent(&k.pair(), &cls.pair(), 1e-6).unwrap_or(true))
        {
            kept.push(cls);
        }
    }
    kept.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::RealPoly;

    fn cp(c: &[Real]) -> ComplexPoly {
        RealPoly::new(c.to_vec()).to_complex()
    }

    fn seed_class(s: &str) -> (PairClass, Vec<Real>) {
        let sigma: BallotSequence = s.parse().unwrap();
        let seed = seed_from_ballot(&sigma, sigma.degree(), &SeedSchedule::default()).unwrap();
        (PairClass::from_seed(&seed), seed.roots.clone())
    }

    #[test]
    fn chart_round_trip() {
        let chart = Chart { base_point: 2.0, d: 2 };
        let pc = PairClass::from_pair(&PolyPair::new(cp(&[0.0, 1.0]), cp(&[1.0, 0.0, 1.0])), chart, None).unwrap();
        // z^2 + 1 - 2.5 z vanishes at 2
        assert!((pc.q2.coeff(1) - c(-2.5)).norm() < 1e-14);
        assert!((pc.q1.coeff(0)).norm() < 1e-14);
        let back = PairClass::from_theta(chart, &pc.theta(), None);
        assert_eq!(back, pc);
        let r = wronski_residual(&pc, &[-1.0, 1.0]).unwrap();
        assert!(r.iter().all(|x| x.norm() < 1e-14));
    }

    #[test]
    fn chart_degenerate_at_excluded_base() {
        let pair = PolyPair::new(cp(&[0.0, 1.0]), cp(&[1.0, 0.0, 1.0]));
        assert_eq!(
            PairClass::from_pair(&pair, Chart { base_point: 0.0, d: 2 }, None),
            Err(TrackError::ChartDegenerate(0.0))
        );
    }

    #[test]
    fn residual_examples() {
        let (pc, roots) = seed_class("12");
        assert!(wronski_residual(&pc, &roots).unwrap().iter().all(|x| x.norm() < 1e-15));
        let pc = PairClass {
            chart: Chart { base_point: 0.0, d: 2 },
            q1: cp(&[0.1, 1.0]),
            q2: cp(&[0.0, 0.01, 1.0]),
            ballot: None,
        };
        let r = wronski_residual(&pc, &[-1.0, 1.0]).unwrap();
        assert!((r[1] - c(0.2)).norm() < 1e-15);
        assert!((r[0] - c(1.001)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (pc, roots) = seed_class("1212");
        let jac = residual_jacobian(&pc);
        let theta = pc.theta();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let rp = wronski_residual(&PairClass::from_theta(pc.chart, &tp, None), &roots).unwrap();
            let rm = wronski_residual(&PairClass::from_theta(pc.chart, &tm, None), &roots).unwrap();
            for k in 0..theta.len() {
                let fd = (rp[k] - rm[k]) / (2.0 * h);
                assert!((fd - jac[(k, i)]).norm() <= 1e-6 * (1.0 + jac[(k, i)].norm()));
            }
        }
    }

    #[test]
    fn polish_fixed_point_and_recovery() {
        let (pc, roots) = seed_class("12");
        let opts = TrackOptions::default();
        let same = newton_polish(&pc, &roots, &opts).unwrap();
        assert_eq!(same.theta(), pc.theta());
        let bumped: Vec<Complex> = pc.theta().iter().map(|x| x + 1e-3).collect();
        let start = PairClass::from_theta(pc.chart, &bumped, None);
        let back = newton_polish(&start, &roots, &opts).unwrap();
        for (a, b) in back.theta().iter().zip(pc.theta()) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn polish_at_degenerate_chart_fails() {
        let pc = PairClass {
            chart: Chart { base_point: 0.0, d: 2 },
            q1: cp(&[0.0, 1e-12]),
            q2: cp(&[0.0, 1.0, 1.0]),
            ballot: None,
        };
        assert!(matches!(
            newton_polish(&pc, &[-1.0, 1.0], &TrackOptions::default()),
            Err(TrackError::ChartDegenerate(_))
        ));
    }

    #[test]
    fn track_degree_two() {
        let (pc, roots) = seed_class("12");
        let (out, _) = track(&pc, &roots, &[-0.9, -0.1], &TrackOptions::default()).unwrap();
        // unique class with critical points m -+ h: span{z - m, (z - m)^2 + h^2}
        let (m, h) = (-0.5, 0.4);
        let want = PolyPair::new(cp(&[-m, 1.0]), cp(&[m * m + h * h, -2.0 * m, 1.0]));
        assert!(span_equivalent(&out.pair(), &want, 1e-8).unwrap());
    }

    #[test]
    fn identity_path_returns_input() {
        let (pc, roots) = seed_class("1212");
        let (out, report) = track(&pc, &roots, &roots, &TrackOptions::default()).unwrap();
        assert_eq!(report.steps, 0);
        for (a, b) in out.theta().iter().zip(pc.theta()) {
            assert!((a - b).norm() <= 1e-14 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn collision_is_detected() {
        let (pc, roots) = seed_class("1212");
        let end = [-0.9, -0.5, -0.5, -0.1];
        assert_eq!(track(&pc, &roots, &end, &TrackOptions::default()).unwrap_err(), TrackError::CollisionDetected);
    }

    #[test]
    fn solve_degree_two_closed_form() {
        let sol = solve_all(&[-1.0, 1.0], 2, &TrackOptions::default()).unwrap();
        assert_eq!(sol.classes.len(), 1);
        let want = PolyPair::new(cp(&[0.0, 1.0]), cp(&[1.0, 0.0, 1.0]));
        assert!(span_equivalent(&sol.classes[0].pair(), &want, 1e-8).unwrap());
    }

    #[test]
    fn solve_degree_three() {
        let sol = solve_all(&[-2.0, -1.0, 1.0, 2.0], 3, &TrackOptions::default()).unwrap();
        assert_eq!(sol.classes.len(), 2);
        for l in &sol.logs {
            assert!(l.max_imag <= 1e-8 && l.root_error <= 1e-8 && l.residual <= 1e-10, "{l:?}");
        }
    }

    #[test]
    fn rejects_duplicate_points() {
        assert!(matches!(solve_all(&[-1.0, -1.0], 2, &TrackOptions::default()), Err(TrackError::InvalidPoints(_))));
        assert!(matches!(solve_all(&[-1.0, 0.0, 1.0], 3, &TrackOptions::default()), Err(TrackError::InvalidPoints(_))));
    }
}
