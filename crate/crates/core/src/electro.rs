//! Point charges on the line: fixed unit charges at real `a_j`, mobile
//! charges `-2` at complex `z_k`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fuchs::{bethe_solve, polynomial_solutions, FuchsError};
use crate::poly::{root_clusters, roots, Complex, ComplexPoly, Real, RealPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectroError {
    #[error("two charges are closer than 1e-12")]
    Collision,
    #[error("nonzero residue {0:.3e} in the integrand")]
    NonzeroResidue(Real),
    #[error("y1 shares a root with A")]
    SharedRoot,
    #[error("y1 has a multiple root")]
    MultipleRoot,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Fuchs(#[from] FuchsError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChargeConfig {
    pub fixed: Vec<Real>,
    pub mobile: Vec<Complex>,
}

const COLLISION: Real = 1e-12;
const ISOLATION_COND: Real = 1e10;

impl ChargeConfig {
    pub fn new(fixed: Vec<Real>, mobile: Vec<Complex>) -> Self {
        ChargeConfig { fixed, mobile }
    }

    fn check(&self) -> Result<(), ElectroError> {
        let m = self.mobile.len();
        for k in 0..m {
            let z = self.mobile[k];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(ElectroError::InvalidInput("non-finite charge".into()));
            }
            if self.fixed.iter().any(|&a| (z - a).norm() < COLLISION)
                || self.mobile[k + 1..].iter().any(|w| (z - w).norm() < COLLISION)
            {
                return Err(ElectroError::Collision);
            }
        }
        Ok(())
    }

    /// Mobile charges sorted by `(re, im)`.
    pub fn sorted(mut self) -> Self {
        self.mobile.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));
        self
    }

    /// Whether the mobile set is closed under conjugation within `tol`.
    pub fn is_conjugation_closed(&self, tol: Real) -> bool {
        let mut used = vec![false; self.mobile.len()];
        for z in &self.mobile {
            let c = z.conj();
            let best = (0..self.mobile.len())
                .filter(|&j| !used[j])
                .min_by(|&i, &j| (self.mobile[i] - c).norm().total_cmp(&(self.mobile[j] - c).norm()));
            match best {
                Some(j) if (self.mobile[j] - c).norm() <= tol => used[j] = true,
                _ => return false,
            }
        }
        true
    }
}

fn residual_unchecked(fixed: &[Real], z: &[Complex]) -> Vec<Complex> {
    (0..z.len())
        .map(|k| {
            let mutual: Complex = (0..z.len()).filter(|&j| j != k).map(|j| (z[k] - z[j]).inv()).sum();
            let attract: Complex = fixed.iter().map(|&a| (z[k] - a).inv()).sum();
            mutual * 2.0 - attract
        })
        .collect()
}

/// `R_k = 2 Σ_{j≠k} 1/(z_k - z_j) - Σ_j 1/(z_k - a_j)`.
pub fn equilibrium_residual(c: &ChargeConfig) -> Result<Vec<Complex>, ElectroError> {
    c.check()?;
    Ok(residual_unchecked(&c.fixed, &c.mobile))
}

pub fn residual_norm(c: &ChargeConfig) -> Result<Real, ElectroError> {
    Ok(equilibrium_residual(c)?.iter().fold(0.0, |m: Real, r| m.max(r.norm())))
}

/// `E = Σ_{j<k} 2 log|z_k - z_j| - Σ_{k,j} log|z_k - a_j|`, so that
/// `∂E/∂x_k = Re R_k` and `∂E/∂y_k = -Im R_k`.
pub fn energy(c: &ChargeConfig) -> Result<Real, ElectroError> {
    c.check()?;
    let z = &c.mobile;
    let mut e = 0.0;
    for k in 0..z.len() {
        for j in 0..k {
            e += 2.0 * (z[k] - z[j]).norm().ln();
        }
        for &a in &c.fixed {
            e -= (z[k] - a).norm().ln();
        }
    }
    Ok(e)
}

/// Real gradient of the energy in coordinates `(x_1, y_1, x_2, y_2, ...)`.
fn energy_gradient(fixed: &[Real], z: &[Complex]) -> Vec<Real> {
    residual_unchecked(fixed, z).iter().flat_map(|r| [r.re, -r.im]).collect()
}

fn from_coords(v: &[Real]) -> Vec<Complex> {
    v.chunks(2).map(|p| Complex::new(p[0], p[1])).collect()
}

/// Central-difference Hessian of the energy over the `2m` real coordinates.
pub fn energy_hessian(c: &ChargeConfig, h: Real) -> Result<DMatrix<Real>, ElectroError> {
    c.check()?;
    let coords: Vec<Real> = c.mobile.iter().flat_map(|z| [z.re, z.im]).collect();
    let n = coords.len();
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let (mut p, mut q) = (coords.clone(), coords.clone());
        p[j] += h;
        q[j] -= h;
        let (gp, gq) = (energy_gradient(&c.fixed, &from_coords(&p)), energy_gradient(&c.fixed, &from_coords(&q)));
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gq[i]) / (2.0 * h);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

pub fn min_hessian_eigenvalue(c: &ChargeConfig) -> Result<Real, ElectroError> {
    let h = energy_hessian(c, 1e-5)?;
    if h.is_empty() {
        return Ok(0.0);
    }
    Ok(SymmetricEigen::new(h).eigenvalues.min())
}

fn residual_jacobian(fixed: &[Real], z: &[Complex]) -> DMatrix<Complex> {
    let m = z.len();
    DMatrix::from_fn(m, m, |k, j| {
        if j == k {
            let mutual: Complex = (0..m).filter(|&i| i != k).map(|i| (z[k] - z[i]).powi(-2)).sum();
            let attract: Complex = fixed.iter().map(|&a| (z[k] - a).powi(-2)).sum();
            attract - mutual * 2.0
        } else {
            (z[k] - z[j]).powi(-2) * 2.0
        }
    })
}

fn condition(j: &DMatrix<Complex>) -> Real {
    if j.is_empty() {
        return 1.0;
    }
    let sv = j.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        Real::INFINITY
    }
}

fn newton(fixed: &[Real], mut z: Vec<Complex>) -> Option<Vec<Complex>> {
    let scale = 1.0 + fixed.iter().fold(0.0, |m: Real, a| m.max(a.abs()));
    for _ in 0..80 {
        let r = DVector::from_vec(residual_unchecked(fixed, &z));
        if !r.iter().all(|v| v.re.is_finite() && v.im.is_finite()) || z.iter().any(|v| v.norm() > 1e6 * scale) {
            return None;
        }
        let dz = residual_jacobian(fixed, &z).lu().solve(&r)?;
        for (v, d) in z.iter_mut().zip(dz.iter()) {
            *v -= d;
        }
        if dz.iter().all(|d| d.norm() <= 1e-15 * scale) {
            break;
        }
    }
    Some(z)
}

/// An accepted equilibrium: residual, isolation and conjugation checks.
fn accept(fixed: &[Real], z: Vec<Complex>) -> Option<ChargeConfig> {
    let c = ChargeConfig::new(fixed.to_vec(), z).sorted();
    if !(residual_norm(&c).ok()? <= 1e-9) {
        return None;
    }
    if condition(&residual_jacobian(fixed, &c.mobile)) >= ISOLATION_COND {
        return None;
    }
    c.is_conjugation_closed(1e-8).then(|| symmetrize(c))
}

/// Puts near-real charges on the axis and makes conjugate partners exact
/// mirror images, so that sorting is canonical.
fn symmetrize(c: ChargeConfig) -> ChargeConfig {
    let mut z = c.mobile.clone();
    let mut done = vec![false; z.len()];
    for k in 0..z.len() {
        if done[k] {
            continue;
        }
        done[k] = true;
        if z[k].im.abs() <= 1e-8 {
            z[k].im = 0.0;
            continue;
        }
        let target = z[k].conj();
        let partner = (0..z.len())
            .filter(|&j| !done[j])
            .min_by(|&i, &j| (z[i] - target).norm().total_cmp(&(z[j] - target).norm()));
        if let Some(j) = partner {
            done[j] = true;
            let mid = (z[k] + z[j].conj()) * 0.5;
            z[k] = mid;
            z[j] = mid.conj();
        }
    }
    ChargeConfig::new(c.fixed, z).sorted()
}

fn same_config(p: &ChargeConfig, q: &ChargeConfig) -> bool {
    p.mobile.len() == q.mobile.len()
        && p.mobile.iter().all(|u| q.mobile.iter().any(|v| (u - v).norm() <= 1e-6))
        && q.mobile.iter().all(|u| p.mobile.iter().any(|v| (u - v).norm() <= 1e-6))
}

/// Isolated equilibria of `m` mobile charges, from the low-degree
/// polynomial solutions of the Bethe system and from multistart Newton.
pub fn solve_equilibrium(fixed: &[Real], m: usize, budget: usize, seed: u64) -> Result<Vec<ChargeConfig>, ElectroError> {
    let n = fixed.len();
    if n == 0 || fixed.iter().any(|a| !a.is_finite()) {
        return Err(ElectroError::InvalidInput("fixed charges must be finite and nonempty".into()));
    }
    if 2 * m > n {
        return Err(ElectroError::InvalidInput(format!("m = {m} exceeds n/2 for n = {n}")));
    }
    if m == 0 {
        return Ok(vec![ChargeConfig::new(fixed.to_vec(), Vec::new())]);
    }

    let mut found = Vec::new();
    for sol in bethe_solve(fixed, budget, seed)? {
        if sol.degrees.1 != m {
            continue;
        }
        let basis = polynomial_solutions(fixed, &sol.x)?;
        if let Ok(r) = roots(&basis.low, 0.0) {
            if let Some(z) = newton(fixed, r) {
                found.extend(accept(fixed, z));
            }
        }
    }

    let (lo, hi) = fixed.iter().fold((Real::INFINITY, Real::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let w = 0.5 * (hi - lo) + 1.0;
    let starts: Vec<ChargeConfig> = (0..budget)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z0 = (0..m)
                .map(|_| Complex::new(rng.random_range(lo - w..hi + w), rng.random_range(-w..w)))
                .collect();
            accept(fixed, newton(fixed, z0)?)
        })
        .collect();
    found.extend(starts);

    let mut out: Vec<ChargeConfig> = Vec::new();
    for c in found {
        if !out.iter().any(|o| same_config(o, &c)) {
            out.push(c);
        }
    }
    out.sort_by(|p, q| {
        p.mobile
            .iter()
            .zip(&q.mobile)
            .map(|(u, v)| u.re.total_cmp(&v.re).then(u.im.total_cmp(&v.im)))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

fn antiderivative(p: &RealPoly) -> RealPoly {
    let mut c = vec![0.0];
    c.extend(p.coeffs().iter().enumerate().map(|(k, v)| v / (k + 1) as Real));
    RealPoly::new(c)
}

/// `y2 = y1 ∫ A / y1²`, normalized monic.
pub fn second_solution(a_poly: &RealPoly, y1: &RealPoly) -> Result<RealPoly, ElectroError> {
    if y1.is_zero() || a_poly.is_zero() {
        return Err(ElectroError::InvalidInput("zero polynomial".into()));
    }
    let y1sq = y1 * y1;
    let (quot, _) = a_poly.div_rem(&y1sq).map_err(|_| ElectroError::InvalidInput("division failed".into()))?;
    let mut y2 = (y1 * &antiderivative(&quot)).to_complex();
    if y1.degree().unwrap_or(0) > 0 {
        let zeta = roots(y1, 0.0).map_err(|_| ElectroError::InvalidInput("root finding failed".into()))?;
        if root_clusters(&zeta, 1e-8).iter().any(|(_, k)| *k > 1) {
            return Err(ElectroError::MultipleRoot);
        }
        let (d1, d2) = (y1.derivative(), y1.derivative().derivative());
        let da = a_poly.derivative();
        let a_scale = a_poly.max_coeff();
        let y1c = y1.to_complex();
        for &z in &zeta {
            let (av, dav) = (a_poly.eval_complex(z), da.eval_complex(z));
            if av.norm() <= 1e-10 * a_scale * (1.0 + z.norm()).powi(a_poly.degree().unwrap_or(0) as i32) {
                return Err(ElectroError::SharedRoot);
            }
            let (p1, p2) = (d1.eval_complex(z), d2.eval_complex(z));
            let alpha = av / (p1 * p1);
            let beta = (dav * p1 - av * p2) / (p1 * p1 * p1);
            if beta.norm() > 1e-8 * (1.0 + alpha.norm()) {
                return Err(ElectroError::NonzeroResidue(beta.norm()));
            }
            let (cof, _) = y1c
                .div_rem(&ComplexPoly::new(vec![-z, Complex::new(1.0, 0.0)]))
                .map_err(|_| ElectroError::InvalidInput("division failed".into()))?;
            y2 = &y2 - &cof.scale(alpha);
        }
    }
    Ok(y2.real_part().monic())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{span_equivalent, wronskian, PolyPair};

    fn c(re: Real, im: Real) -> Complex {
        Complex::new(re, im)
    }

    fn rp(v: &[Real]) -> RealPoly {
        RealPoly::new(v.to_vec())
    }

    #[test]
    fn residual_examples() {
        let fixed = vec![-1.0, 1.0];
        assert_eq!(equilibrium_residual(&ChargeConfig::new(fixed.clone(), vec![c(0.0, 0.0)])).unwrap(), vec![c(0.0, 0.0)]);
        assert!(equilibrium_residual(&ChargeConfig::new(fixed.clone(), vec![])).unwrap().is_empty());
        let r = equilibrium_residual(&ChargeConfig::new(fixed.clone(), vec![c(0.0, 1.0)])).unwrap();
        assert!((r[0] - c(0.0, 1.0)).norm() < 1e-15);
        let hit = ChargeConfig::new(fixed, vec![c(1.0, 0.0)]);
        assert_eq!(equilibrium_residual(&hit), Err(ElectroError::Collision));
    }

    #[test]
    fn energy_examples() {
        let fixed = vec![-1.0, 1.0];
        assert_eq!(energy(&ChargeConfig::new(fixed.clone(), vec![c(0.0, 0.0)])).unwrap(), 0.0);
        let e = energy(&ChargeConfig::new(fixed.clone(), vec![c(3.0, 0.0)])).unwrap();
        assert!((e + 8.0f64.ln()).abs() < 1e-14);
        assert_eq!(energy(&ChargeConfig::new(fixed, vec![])).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_energy_differences() {
        let fixed = vec![-2.0, -0.3, 0.8, 2.1];
        let cfg = ChargeConfig::new(fixed.clone(), vec![c(0.2, 0.7), c(0.2, -0.7), c(1.5, 0.0)]);
        let r = equilibrium_residual(&cfg).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for (dir, expect) in [(c(1.0, 0.0), r[k].re), (c(0.0, 1.0), -r[k].im)] {
                let shift = |s: Real| {
                    let mut z = cfg.mobile.clone();
                    z[k] += dir * s;
                    energy(&ChargeConfig::new(fixed.clone(), z)).unwrap()
                };
                assert!(((shift(h) - shift(-h)) / (2.0 * h) - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn solve_two_fixed() {
        let one = solve_equilibrium(&[-1.0, 1.0], 1, 200, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].mobile[0].norm() < 1e-10);
        assert!(min_hessian_eigenvalue(&one[0]).unwrap() < -1e-8);
        let zero = solve_equilibrium(&[-1.0, 1.0], 0, 200, 1).unwrap();
        assert_eq!(zero.len(), 1);
        assert!(zero[0].mobile.is_empty());
    }

    #[test]
    fn four_fixed_two_mobile() {
        let a = [-2.5, -0.4, 0.9, 2.2];
        let eq = solve_equilibrium(&a, 2, 2000, 9).unwrap();
        assert_eq!(eq.len(), 2);
        for cfg in &eq {
            assert!(cfg.is_conjugation_closed(1e-8));
            assert!(residual_norm(cfg).unwrap() <= 1e-9);
            assert!(min_hessian_eigenvalue(cfg).unwrap() < -1e-8);
        }
    }

    #[test]
    fn second_solution_examples() {
        let a = rp(&[-1.0, 0.0, 1.0]);
        let y2 = second_solution(&a, &rp(&[0.0, 1.0])).unwrap();
        assert!((&y2 - &rp(&[1.0, 0.0, 1.0])).max_coeff() < 1e-12);
        let y2 = second_solution(&a, &rp(&[0.0, -3.0, 0.0, 1.0])).unwrap();
        assert_eq!(y2.degree(), Some(0));
        assert!(matches!(second_solution(&a, &rp(&[-0.5, 1.0])), Err(ElectroError::NonzeroResidue(_))));
        assert_eq!(second_solution(&a, &rp(&[-1.0, 1.0])), Err(ElectroError::SharedRoot));
    }

    #[test]
    fn second_solution_wronskian_is_proportional_to_a() {
        let a = rp(&[-1.0, 0.0, 1.0]);
        let y1 = rp(&[0.0, 1.0]);
        let y2 = second_solution(&a, &y1).unwrap();
        let w = wronskian(&y2, &y1);
        assert!((&w.monic() - &a).max_coeff() < 1e-12);
        let pair = PolyPair::from_real(&y1, &y2);
        assert!(span_equivalent(&pair, &PolyPair::from_real(&y1, &rp(&[1.0, 0.0, 1.0])), 1e-10).unwrap());
    }

    #[test]
    fn conjugation_check() {
        let cfg = ChargeConfig::new(vec![0.0], vec![c(1.0, 2.0), c(1.0, -2.0), c(3.0, 0.0)]);
        assert!(cfg.is_conjugation_closed(1e-12));
        let cfg = ChargeConfig::new(vec![0.0], vec![c(1.0, 2.0), c(1.0, -2.1)]);
        assert!(!cfg.is_conjugation_closed(1e-8));
    }
}
