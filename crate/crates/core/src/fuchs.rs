//! Fuchsian equations `A y'' + B y' + C y = 0` with polynomial solutions and
//! the Bethe system satisfied by their residues.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{from_roots, root_clusters, roots, wronskian, PolyPair, Real, RealPoly};
use crate::tracker::{solve_all, TrackOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuchsError {
    #[error("the pair is linearly dependent")]
    DependentPair,
    #[error("the Wronskian has a multiple root")]
    MultipleRoot,
    #[error("the Wronskian has non-real roots")]
    NonRealRoots,
    #[error("singular points must be distinct")]
    DuplicatePoints,
    #[error("singular points do not match the Wronskian roots")]
    PointMismatch,
    #[error("{got} residues for {expected} singular points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("negative discriminant {0:.3e} in the degree formula")]
    NegativeDiscriminant(Real),
    #[error("no two-dimensional space of polynomial solutions: {0}")]
    NotASolution(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FuchsianData {
    pub a_poly: RealPoly,
    pub b_poly: RealPoly,
    pub c_poly: RealPoly,
    pub a: Vec<Real>,
    pub x: Vec<Real>,
    /// `p_k = Σ_{j≠k} 1/(a_j - a_k)`
    pub p_loc: Vec<Real>,
    /// `q_k = -Σ_{j≠k} x_j/(a_j - a_k)`
    pub q_loc: Vec<Real>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetheSolution {
    pub a: Vec<Real>,
    pub x: Vec<Real>,
    pub s: i64,
    pub qstar: Real,
    /// Degrees of the two polynomial solutions, larger first.
    pub degrees: (usize, usize),
}

/// The two polynomial solutions, of degrees `(n+1-s)/2` and `(n+1+s)/2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolynomialBasis {
    pub low: RealPoly,
    pub high: RealPoly,
    pub s: i64,
}

impl PolynomialBasis {
    pub fn pair(&self) -> PolyPair {
        PolyPair::from_real(&self.low, &self.high)
    }
}

fn real_part_pair(pair: &PolyPair) -> (RealPoly, RealPoly) {
    (pair.first.real_part(), pair.second.real_part())
}

fn check_distinct(a: &[Real]) -> Result<(), FuchsError> {
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if (a[i] - a[j]).abs() <= 1e-12 * (1.0 + a[i].abs()) {
                return Err(FuchsError::DuplicatePoints);
            }
        }
    }
    Ok(())
}

fn local_data(a: &[Real], x: &[Real]) -> (Vec<Real>, Vec<Real>) {
    let n = a.len();
    let p = (0..n)
        .map(|k| (0..n).filter(|&j| j != k).map(|j| 1.0 / (a[j] - a[k])).sum())
        .collect();
    let q = (0..n)
        .map(|k| -(0..n).filter(|&j| j != k).map(|j| x[j] / (a[j] - a[k])).sum::<Real>())
        .collect();
    (p, q)
}

/// Sorted simple real roots of `w`.
fn simple_real_roots(w: &RealPoly) -> Result<Vec<Real>, FuchsError> {
    let r = roots(w, 0.0).map_err(|_| FuchsError::DependentPair)?;
    let scale = r.iter().fold(1.0, |m: Real, z| m.max(z.norm()));
    if root_clusters(&r, 1e-8).iter().any(|(_, k)| *k > 1) {
        return Err(FuchsError::MultipleRoot);
    }
    if r.iter().any(|z| z.im.abs() > 1e-8 * scale) {
        return Err(FuchsError::NonRealRoots);
    }
    let mut v: Vec<Real> = r.iter().map(|z| z.re).collect();
    v.sort_by(|p, q| p.total_cmp(q));
    Ok(v)
}

/// Fuchsian equation satisfied by both members of `pair`: `A = W(y1, y2)`,
/// `B = -A'`, `C = W(y1', y2')`, scaled so that `A` is monic.
pub fn ode_from_pair(pair: &PolyPair) -> Result<FuchsianData, FuchsError> {
    if !pair.is_independent() {
        return Err(FuchsError::DependentPair);
    }
    let (y1, y2) = real_part_pair(pair);
    let w = wronskian(&y1, &y2);
    if w.is_zero() {
        return Err(FuchsError::DependentPair);
    }
    let lead = w.leading();
    let a_poly = w.scale(1.0 / lead);
    let b_poly = -&a_poly.derivative();
    let c_poly = wronskian(&y1.derivative(), &y2.derivative()).scale(1.0 / lead);
    let a = simple_real_roots(&a_poly)?;
    let da = a_poly.derivative();
    for &ak in &a {
        let res = b_poly.eval(ak) / da.eval(ak);
        debug_assert!((res + 1.0).abs() < 1e-8);
    }
    let x: Vec<Real> = a.iter().map(|&ak| c_poly.eval(ak) / da.eval(ak)).collect();
    let (p_loc, q_loc) = local_data(&a, &x);
    Ok(FuchsianData { a_poly, b_poly, c_poly, a, x, p_loc, q_loc })
}

/// Residues `x_k = C(a_k) / A'(a_k)` of `Q = C/A`.
pub fn residues(pair: &PolyPair, a: &[Real]) -> Result<Vec<Real>, FuchsError> {
    let data = ode_from_pair(pair)?;
    if data.a.len() != a.len() {
        return Err(FuchsError::PointMismatch);
    }
    let mut sorted = a.to_vec();
    sorted.sort_by(|p, q| p.total_cmp(q));
    if sorted.iter().zip(&data.a).any(|(p, q)| (p - q).abs() > 1e-8 * (1.0 + p.abs())) {
        return Err(FuchsError::PointMismatch);
    }
    // report in the caller's order
    Ok(a
        .iter()
        .map(|&ak| {
            let k = (0..sorted.len())
                .min_by(|&i, &j| (data.a[i] - ak).abs().total_cmp(&(data.a[j] - ak).abs()))
                .expect("nonempty");
            data.x[k]
        })
        .collect())
}

pub fn bethe_residual(x: &[Real], a: &[Real]) -> Result<Vec<Real>, FuchsError> {
    if x.len() != a.len() {
        return Err(FuchsError::LengthMismatch { expected: a.len(), got: x.len() });
    }
    check_distinct(a)?;
    Ok(residual_unchecked(x, a))
}

fn residual_unchecked(x: &[Real], a: &[Real]) -> Vec<Real> {
    let n = a.len();
    (0..n)
        .map(|k| {
            let rhs: Real = (0..n).filter(|&j| j != k).map(|j| (x[j] - x[k]) / (a[j] - a[k])).sum();
            x[k] * x[k] - rhs
        })
        .collect()
}

fn bethe_jacobian(x: &[Real], a: &[Real]) -> DMatrix<Real> {
    let n = a.len();
    DMatrix::from_fn(n, n, |k, j| {
        if j == k {
            2.0 * x[k] + (0..n).filter(|&i| i != k).map(|i| 1.0 / (a[i] - a[k])).sum::<Real>()
        } else {
            -1.0 / (a[j] - a[k])
        }
    })
}

/// `(Σ x_k, q* = Σ x_k a_k, s = sqrt((n+1)^2 - 4 q*))`.
pub fn exponent_check(x: &[Real], a: &[Real]) -> Result<(Real, Real, Real), FuchsError> {
    if x.len() != a.len() {
        return Err(FuchsError::LengthMismatch { expected: a.len(), got: x.len() });
    }
    let n = a.len() as Real;
    let sum: Real = x.iter().sum();
    let qstar: Real = x.iter().zip(a).map(|(p, q)| p * q).sum();
    let disc = (n + 1.0).powi(2) - 4.0 * qstar;
    if disc < -1e-9 {
        return Err(FuchsError::NegativeDiscriminant(disc));
    }
    Ok((sum, qstar, disc.max(0.0).sqrt()))
}

/// Validates a candidate and packages it.
fn classify(x: &[Real], a: &[Real]) -> Option<BetheSolution> {
    let n = a.len();
    let res = residual_unchecked(x, a);
    if res.iter().any(|r| !(r.abs() <= 1e-9)) {
        return None;
    }
    let (sum, qstar, s) = exponent_check(x, a).ok()?;
    let si = s.round();
    if sum.abs() > 1e-9 || (s - si).abs() > 1e-6 || si < 1.0 || si > (n + 1) as Real {
        return None;
    }
    let si = si as i64;
    if (n as i64 + si) % 2 == 0 {
        return None;
    }
    let n1 = n as i64 + 1;
    Some(BetheSolution {
        a: a.to_vec(),
        x: x.to_vec(),
        s: si,
        qstar,
        degrees: (((n1 + si) / 2) as usize, ((n1 - si) / 2) as usize),
    })
}

/// Gauss-Newton on the Bethe system augmented by `Σ x_k = 0`. The square
/// system alone is singular along a direction at genuine solutions, which
/// leaves plain Newton linearly convergent.
fn newton_bethe(mut x: Vec<Real>, a: &[Real]) -> Option<Vec<Real>> {
    let n = a.len();
    let scale = 1.0 + a.iter().fold(0.0, |m: Real, v| m.max(v.abs()));
    for _ in 0..60 {
        let mut f = residual_unchecked(&x, a);
        f.push(x.iter().sum());
        let f = DVector::from_vec(f);
        if !f.amax().is_finite() || x.iter().any(|v| v.abs() > 1e6 * scale) {
            return None;
        }
        let j = bethe_jacobian(&x, a).insert_row(n, 1.0);
        let dx = j.svd(true, true).solve(&f, 1e-14).ok()?;
        for (v, d) in x.iter_mut().zip(dx.iter()) {
            *v -= d;
        }
        if dx.amax() <= 1e-14 * (1.0 + x.iter().fold(0.0, |m: Real, v| m.max(v.abs()))) {
            break;
        }
    }
    Some(x)
}

fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Keeps the first of each cluster, so exact candidates inserted early win.
fn dedupe(found: Vec<BetheSolution>) -> Vec<BetheSolution> {
    let mut out: Vec<BetheSolution> = Vec::new();
    for sol in found {
        let dup = out.iter().any(|o| o.x.iter().zip(&sol.x).all(|(u, v)| (u - v).abs() <= 1e-6));
        if !dup {
            out.push(sol);
        }
    }
    out.sort_by(|p, q| {
        p.s.cmp(&q.s).then_with(|| {
            p.x.iter()
                .zip(&q.x)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    out
}

/// Real solutions of the Bethe system at the points `a`, sorted by `s` then
/// by `x`.
pub fn bethe_solve(a: &[Real], budget: usize, seed: u64) -> Result<Vec<BetheSolution>, FuchsError> {
    check_distinct(a)?;
    let n = a.len();
    let mut found = Vec::new();
    found.extend(classify(&vec![0.0; n], a));
    if n >= 2 && n % 2 == 0 {
        let opts = TrackOptions { rng_seed: seed, ..TrackOptions::default() };
        if let Ok(sol) = solve_all(a, n / 2 + 1, &opts) {
            for class in &sol.classes {
                if let Ok(x) = residues(&class.pair(), a) {
                    if let Some(x) = newton_bethe(x, a) {
                        found.extend(classify(&x, a));
                    }
                }
            }
        }
    }
    let box_size = n as Real;
    let starts: Vec<BetheSolution> = (0..budget)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = start_rng(seed, i);
            let x0: Vec<Real> = (0..n).map(|_| rng.random_range(-box_size..=box_size)).collect();
            classify(&newton_bethe(x0, a)?, a)
        })
        .collect();
    found.extend(starts);

    // residues of a low-degree solution with roots t_i are Σ 1/(a_k - t_i);
    // these starts reach solutions far outside the box when points are close
    let (lo, hi) = (a[0].min(a[n - 1]), a[0].max(a[n - 1]));
    let (lo, hi) = (lo - 0.5 * (hi - lo) - 1.0, hi + 0.5 * (hi - lo) + 1.0);
    let structured: Vec<BetheSolution> = (0..budget / 4)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = start_rng(seed ^ 0x5eed, i);
            let m = rng.random_range(1..=(n / 2).max(1));
            let t: Vec<Real> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
            let x0 = a.iter().map(|&ak| t.iter().map(|&ti| 1.0 / (ak - ti)).sum()).collect();
            classify(&newton_bethe(x0, a)?, a)
        })
        .collect();
    found.extend(structured);
    Ok(dedupe(found))
}

/// The space of polynomial solutions of the Fuchsian equation with
/// singular points `a` and residues `x`.
pub fn polynomial_solutions(a: &[Real], x: &[Real]) -> Result<PolynomialBasis, FuchsError> {
    if x.len() != a.len() {
        return Err(FuchsError::LengthMismatch { expected: a.len(), got: x.len() });
    }
    check_distinct(a)?;
    let n = a.len();
    let a_poly = from_roots(a);
    let b_poly = -&a_poly.derivative();
    let mut c_poly = RealPoly::zero();
    for (k, &xk) in x.iter().enumerate() {
        let others: Vec<Real> = a.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &v)| v).collect();
        c_poly = &c_poly + &from_roots(&others).scale(xk);
    }

    // columns: images of z^k for k = 0..=n+1, scaled by the size of the
    // terms (not of the image, which may be pure cancellation)
    let abs = |p: &RealPoly| RealPoly::new_exact(p.coeffs().iter().map(|v| v.abs()).collect());
    let (aa, ab, ac) = (abs(&a_poly), abs(&b_poly), abs(&c_poly));
    let cols = n + 2;
    let rows = 2 * n + 1;
    let mut m = DMatrix::<Real>::zeros(rows, cols);
    let mut col_scale = vec![0.0; cols];
    for k in 0..cols {
        let y = RealPoly::monomial(k, 1.0);
        let (dy, ddy) = (y.derivative(), y.derivative().derivative());
        let img = &(&(&a_poly * &ddy) + &(&b_poly * &dy)) + &(&c_poly * &y);
        let size = &(&(&aa * &ddy) + &(&ab * &dy)) + &(&ac * &y);
        for (r, v) in img.coeffs().iter().enumerate() {
            m[(r, k)] = *v;
        }
        let norm = size.coeffs().iter().map(|v| v * v).sum::<Real>().sqrt();
        col_scale[k] = if norm > 0.0 { norm } else { 1.0 };
        m.column_mut(k).scale_mut(1.0 / col_scale[k]);
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sv = |i: usize| svd.singular_values[order[i]];
    let top = sv(cols - 1);
    if !(sv(1) <= 1e-8 * top && sv(2) >= 1e6 * sv(1)) {
        return Err(FuchsError::NotASolution(format!(
            "singular values {:.3e}, {:.3e}, {:.3e} (largest {:.3e})",
            sv(0),
            sv(1),
            sv(2),
            top
        )));
    }
    let null: Vec<Vec<Real>> = (0..2)
        .map(|i| (0..cols).map(|k| v_t[(order[i], k)] / col_scale[k]).collect())
        .collect();

    let (_, _, s) = exponent_check(x, a)?;
    let s = s.round() as i64;
    let d_high = ((n as i64 + 1 + s) / 2) as usize;
    let d_low = ((n as i64 + 1 - s) / 2) as usize;
    let (u, v) = (&null[0], &null[1]);
    let high_vec = if u[d_high].abs() >= v[d_high].abs() { u } else { v };
    let low_vec: Vec<Real> = (0..cols).map(|k| v[d_high] * u[k] - u[d_high] * v[k]).collect();
    let trim = |c: &[Real], deg: usize| -> Result<RealPoly, FuchsError> {
        let size = c.iter().fold(0.0, |m: Real, t| m.max(t.abs()));
        if c[deg].abs() <= 1e-8 * size || c[deg + 1..].iter().any(|t| t.abs() > 1e-6 * size) {
            return Err(FuchsError::NotASolution(format!("solution degrees differ from ({d_high}, {d_low})")));
        }
        Ok(RealPoly::new(c[..=deg].iter().map(|t| t / c[deg]).collect()))
    };
    Ok(PolynomialBasis { low: trim(&low_vec, d_low)?, high: trim(high_vec, d_high)?, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::span_equivalent;

    fn rp(c: &[Real]) -> RealPoly {
        RealPoly::new(c.to_vec())
    }

    fn pair(p: &[Real], q: &[Real]) -> PolyPair {
        PolyPair::from_real(&rp(p), &rp(q))
    }

    #[test]
    fn ode_examples() {
        let f = ode_from_pair(&pair(&[0.0, 1.0], &[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(f.a_poly, rp(&[-1.0, 0.0, 1.0]));
        assert_eq!(f.b_poly, rp(&[0.0, -2.0]));
        assert_eq!(f.c_poly, rp(&[2.0]));
        assert_eq!(f.a, vec![-1.0, 1.0]);
        let f = ode_from_pair(&pair(&[0.0, -3.0, 0.0, 1.0], &[1.0])).unwrap();
        assert_eq!(f.a_poly, rp(&[-1.0, 0.0, 1.0]));
        assert!(f.c_poly.is_zero());
        assert_eq!(ode_from_pair(&pair(&[0.0, 1.0], &[0.0, 2.0])), Err(FuchsError::DependentPair));
    }

    #[test]
    fn residue_examples() {
        let a = [-1.0, 1.0];
        assert_eq!(residues(&pair(&[0.0, 1.0], &[1.0, 0.0, 1.0]), &a).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(residues(&pair(&[0.0, -3.0, 0.0, 1.0], &[1.0]), &a).unwrap(), vec![0.0, 0.0]);
        assert_eq!(residues(&pair(&[0.0, 5.0], &[1.0, 0.0, 1.0]), &a).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn residues_are_invariant_under_recombination() {
        let p = pair(&[0.0, 1.0], &[1.0, 0.0, 1.0]);
        let q = PolyPair::new(&p.first.scale(2.0.into()) + &p.second, &p.first - &p.second.scale(3.0.into()));
        let x = residues(&q, &[-1.0, 1.0]).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bethe_residual_examples() {
        let a = [-1.0, 1.0];
        assert_eq!(bethe_residual(&[-1.0, 1.0], &a).unwrap(), vec![0.0, 0.0]);
        assert_eq!(bethe_residual(&[0.0, 0.0], &[0.3, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(bethe_residual(&[1.0, 1.0], &a).unwrap(), vec![1.0, 1.0]);
        assert_eq!(bethe_residual(&[0.0, 0.0], &[1.0, 1.0]), Err(FuchsError::DuplicatePoints));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let a = [-1.3, 0.2, 0.9, 2.5];
        let x = [0.3, -0.7, 1.1, 0.4];
        let j = bethe_jacobian(&x, &a);
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x;
            xp[c] += h;
            let mut xm = x;
            xm[c] -= h;
            let (fp, fm) = (residual_unchecked(&xp, &a), residual_unchecked(&xm, &a));
            for r in 0..4 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - j[(r, c)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn exponent_check_examples() {
        let (sum, q, s) = exponent_check(&[-1.0, 1.0], &[-1.0, 1.0]).unwrap();
        assert_eq!((sum, q, s), (0.0, 2.0, 1.0));
        assert_eq!(exponent_check(&[0.0, 0.0], &[-1.0, 1.0]).unwrap(), (0.0, 0.0, 3.0));
        assert!(matches!(exponent_check(&[2.0, 2.0], &[1.0, 2.0]), Err(FuchsError::NegativeDiscriminant(_))));
    }

    #[test]
    fn bethe_two_points() {
        let sols = bethe_solve(&[-1.0, 1.0], 2000, 3).unwrap();
        let xs: Vec<(Vec<Real>, i64)> = sols.iter().map(|s| (s.x.clone(), s.s)).collect();
        assert_eq!(xs.len(), 2);
        assert_eq!(xs[0].1, 1);
        assert!((xs[0].0[0] + 1.0).abs() < 1e-12 && (xs[0].0[1] - 1.0).abs() < 1e-12);
        assert_eq!(xs[1], (vec![0.0, 0.0], 3));
        assert_eq!(sols[0].degrees, (2, 1));
    }

    #[test]
    fn bethe_four_points_counts() {
        let sols = bethe_solve(&[-2.0, -0.5, 1.0, 3.0], 2000, 5).unwrap();
        let s: Vec<i64> = sols.iter().map(|v| v.s).collect();
        assert_eq!(s, vec![1, 1, 3, 3, 3, 5]);
    }

    #[test]
    fn polynomial_solution_examples() {
        let a = [-1.0, 1.0];
        let b = polynomial_solutions(&a, &[-1.0, 1.0]).unwrap();
        assert!(span_equivalent(&b.pair(), &pair(&[0.0, 1.0], &[1.0, 0.0, 1.0]), 1e-10).unwrap());
        assert_eq!((b.low.degree(), b.high.degree()), (Some(1), Some(2)));
        let b = polynomial_solutions(&a, &[0.0, 0.0]).unwrap();
        assert_eq!((b.low.degree(), b.high.degree()), (Some(0), Some(3)));
        assert!(span_equivalent(&b.pair(), &pair(&[1.0], &[0.0, -3.0, 0.0, 1.0]), 1e-10).unwrap());
        assert!(matches!(polynomial_solutions(&a, &[1.0, 1.0]), Err(FuchsError::NotASolution(_))));
    }

    #[test]
    fn local_exponent_matches_residue() {
        let a = [-2.0, -0.5, 1.0, 3.0];
        for sol in bethe_solve(&a, 3000, 11).unwrap() {
            let basis = polynomial_solutions(&a, &sol.x).unwrap();
            for y in [&basis.low, &basis.high] {
                let dy = y.derivative();
                for (k, &ak) in a.iter().enumerate() {
                    if y.eval(ak).abs() > 1e-6 {
                        assert!((dy.eval(ak) / y.eval(ak) - sol.x[k]).abs() < 1e-7);
                    }
                }
            }
        }
    }
}
