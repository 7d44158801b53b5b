//! Dense univariate polynomials over real and complex scalars.
//!
//! Coefficients are stored in ascending-degree order. Every constructor
//! normalizes: trailing coefficients whose magnitude is below
//! [`DROP_TOLERANCE`] times the largest coefficient magnitude are removed,
//! so the stored degree is always the index of the last coefficient.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use thiserror::Error;

/// Floating point type used throughout the crate.
pub type Real = f64;
/// Complex scalar built on [`Real`].
pub type Complex = num_complex::Complex<Real>;

/// Relative magnitude below which a leading coefficient is treated as zero.
pub const DROP_TOLERANCE: Real = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("pair is linearly dependent")]
    DegeneratePair,
    #[error("root finder did not converge after {0} iterations")]
    RootsDidNotConverge(usize),
}

/// Scalar field a [`Poly`] can be built over.
pub trait Scalar:
    Copy
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: Real) -> Self;
    fn modulus(self) -> Real;
    fn to_complex(self) -> Complex;
    fn is_finite(self) -> bool;
}

impl Scalar for Real {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: Real) -> Self {
        x
    }
    fn modulus(self) -> Real {
        self.abs()
    }
    fn to_complex(self) -> Complex {
        Complex::new(self, 0.0)
    }
    fn is_finite(self) -> bool {
        Real::is_finite(self)
    }
}

impl Scalar for Complex {
    fn zero() -> Self {
        Complex::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex::new(1.0, 0.0)
    }
    fn from_real(x: Real) -> Self {
        Complex::new(x, 0.0)
    }
    fn modulus(self) -> Real {
        self.norm()
    }
    fn to_complex(self) -> Complex {
        self
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

pub type RealPoly = Poly<Real>;
pub type ComplexPoly = Poly<Complex>;

impl<T: Scalar> Poly<T> {
    /// Builds a polynomial from ascending coefficients and normalizes it.
    pub fn new(coeffs: Vec<T>) -> Self {
        let mut p = Poly { coeffs };
        p.normalize();
        p
    }

    /// Builds a polynomial without stripping small leading terms; only exact
    /// zeros at the top are removed.
    pub fn new_exact(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(|c| *c == T::zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Poly::new(vec![c])
    }

    /// `c * z^k`
    pub fn monomial(k: usize, c: T) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = c;
        Poly::new(coeffs)
    }

    fn normalize(&mut self) {
        let scale = self.max_coeff();
        if scale == 0.0 || !scale.is_finite() {
            if scale == 0.0 {
                self.coeffs.clear();
            }
            return;
        }
        while let Some(c) = self.coeffs.last() {
            if c.modulus() <= DROP_TOLERANCE * scale {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of `z^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading(&self) -> T {
        self.coeffs.last().copied().unwrap_or_else(T::zero)
    }

    pub fn max_coeff(&self) -> Real {
        self.coeffs.iter().map(|c| c.modulus()).fold(0.0, Real::max)
    }

    /// Multiplicity of the root at the origin.
    pub fn order_at_zero(&self) -> usize {
        self.coeffs
            .iter()
            .position(|c| *c != T::zero())
            .unwrap_or(0)
    }

    pub fn eval(&self, z: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * z + c)
    }

    pub fn eval_complex(&self, z: Complex) -> Complex {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c.to_complex())
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_real(k as Real))
            .collect();
        Poly::new_exact(coeffs)
    }

    pub fn scale(&self, c: T) -> Self {
        Poly::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    /// Divides by the leading coefficient.
    pub fn monic(&self) -> Self {
        match self.coeffs.last() {
            Some(&lc) => Poly::new(self.coeffs.iter().map(|&a| a / lc).collect()),
            None => Poly::zero(),
        }
    }

    /// `p(alpha * z + beta)`
    pub fn compose_affine(&self, alpha: T, beta: T) -> Self {
        let lin = Poly::new_exact(vec![beta, alpha]);
        let mut out = Poly::zero();
        for &c in self.coeffs.iter().rev() {
            out = &(&out * &lin) + &Poly::new_exact(vec![c]);
        }
        Poly::new(out.coeffs)
    }

    /// Euclidean division `self = q * divisor + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Self) -> Result<(Self, Self), PolyError> {
        let dd = divisor.degree().ok_or(PolyError::ZeroPolynomial)?;
        let lc = divisor.leading();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return Ok((Poly::zero(), self.clone()));
        }
        let mut quot = vec![T::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = rem[k + dd] / lc;
            quot[k] = c;
            for (j, &dc) in divisor.coeffs.iter().enumerate() {
                rem[k + j] = rem[k + j] - c * dc;
            }
        }
        rem.truncate(dd);
        Ok((Poly::new_exact(quot), Poly::new_exact(rem)))
    }

    pub fn to_complex(&self) -> ComplexPoly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c.to_complex()).collect(),
        }
    }
}

impl ComplexPoly {
    /// Real parts of the coefficients.
    pub fn real_part(&self) -> RealPoly {
        Poly::new(self.coeffs.iter().map(|c| c.re).collect())
    }

    /// Largest imaginary part relative to the largest coefficient magnitude.
    pub fn relative_imag(&self) -> Real {
        let scale = self.max_coeff();
        if scale == 0.0 {
            return 0.0;
        }
        self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, Real::max) / scale
    }
}

impl<T: Scalar> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl<T: Scalar> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<T: Scalar> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = out[i + j] + a * b;
            }
        }
        Poly::new_exact(out)
    }
}

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        Poly::new_exact(self.coeffs.iter().map(|&c| -c).collect())
    }
}

/// `f g' - f' g`, computed coefficientwise.
pub fn wronskian<T: Scalar>(f: &Poly<T>, g: &Poly<T>) -> Poly<T> {
    if f.is_zero() || g.is_zero() {
        return Poly::zero();
    }
    let n = f.coeffs.len() + g.coeffs.len();
    let mut out = vec![T::zero(); n.saturating_sub(2).max(1)];
    // coefficient of z^(i+j-1) in f_i z^i * j g_j z^(j-1) - i f_i z^(i-1) * g_j z^j
    for (i, &a) in f.coeffs.iter().enumerate() {
        for (j, &b) in g.coeffs.iter().enumerate() {
            if i + j == 0 || i == j {
                continue;
            }
            let w = T::from_real(j as Real - i as Real);
            out[i + j - 1] = out[i + j - 1] + a * b * w;
        }
    }
    Poly::new(out)
}

/// Monic polynomial with the given roots.
pub fn from_roots<T: Scalar>(roots: &[T]) -> Poly<T> {
    let mut coeffs = vec![T::one()];
    for &r in roots {
        coeffs.push(T::zero());
        for k in (1..coeffs.len()).rev() {
            coeffs[k] = coeffs[k - 1] - r * coeffs[k];
        }
        coeffs[0] = -r * coeffs[0];
    }
    Poly::new_exact(coeffs)
}

const ABERTH_MAX_ITER: usize = 1000;

/// All complex roots of `p`, repeated by multiplicity.
///
/// Roots closer than `tol` (scaled by `max(1, |root|)`) are merged into a
/// cluster and reported as the cluster mean, repeated. Exact zero roots are
/// factored out before iterating.
pub fn roots<T: Scalar>(p: &Poly<T>, tol: Real) -> Result<Vec<Complex>, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let p = p.to_complex();
    let zeros_at_origin = p.order_at_zero();
    let reduced = Poly::new_exact(p.coeffs[zeros_at_origin..].to_vec());
    let mut found = aberth(&reduced)?;
    for z in found.iter_mut() {
        *z = newton_polish(&reduced, *z);
    }
    let mut all = vec![Complex::new(0.0, 0.0); zeros_at_origin];
    all.extend(found);
    Ok(cluster(all, tol))
}

/// Groups `roots` into clusters of mutual distance below `tol`, returning
/// each cluster's mean together with its size.
pub fn root_clusters(roots: &[Complex], tol: Real) -> Vec<(Complex, usize)> {
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = roots[i].norm().max(roots[j].norm()).max(1.0);
            if (roots[i] - roots[j]).norm() < tol * scale {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Complex, usize)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1 += roots[i];
                g.2 += 1;
            }
            None => groups.push((r, roots[i], 1)),
        }
    }
    groups
        .into_iter()
        .map(|(_, sum, m)| (sum / m as Real, m))
        .collect()
}

fn cluster(roots: Vec<Complex>, tol: Real) -> Vec<Complex> {
    let mut out = Vec::with_capacity(roots.len());
    for (z, m) in root_clusters(&roots, tol) {
        out.extend(std::iter::repeat_n(z, m));
    }
    out
}

/// Initial radii from the upper convex hull of `(k, log|a_k|)`.
fn newton_polygon_guesses(p: &ComplexPoly) -> Vec<Complex> {
    let n = p.coeffs.len() - 1;
    let pts: Vec<(usize, Real)> = p
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, Real)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as Real - a.0 as Real) * (pt.1 - a.1)
                - (b.1 - a.1) * (pt.0 as Real - a.0 as Real);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    let mut guesses = Vec::with_capacity(n);
    let mut offset = 0.0;
    for w in hull.windows(2) {
        let (i, li) = w[0];
        let (j, lj) = w[1];
        let m = j - i;
        let r = ((li - lj) / m as Real).exp();
        for k in 0..m {
            let theta = 2.0 * std::f64::consts::PI * (k as Real) / (m as Real) + offset + 0.4;
            guesses.push(Complex::from_polar(r, theta));
        }
        offset += 1.1;
    }
    guesses
}

fn aberth(p: &ComplexPoly) -> Result<Vec<Complex>, PolyError> {
    let n = match p.degree() {
        Some(0) | None => return Ok(Vec::new()),
        Some(n) => n,
    };
    if n == 1 {
        return Ok(vec![-p.coeffs[0] / p.coeffs[1]]);
    }
    let dp = p.derivative();
    let mut z = newton_polygon_guesses(p);
    for _ in 0..ABERTH_MAX_ITER {
        let mut done = true;
        for k in 0..n {
            let pv = p.eval(z[k]);
            if pv.norm() == 0.0 {
                continue;
            }
            let ratio = pv / dp.eval(z[k]);
            let repulsion: Complex = (0..n)
                .filter(|&j| j != k)
                .map(|j| Complex::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let w = ratio / (Complex::new(1.0, 0.0) - ratio * repulsion);
            if !(w.re.is_finite() && w.im.is_finite()) {
                continue;
            }
            z[k] -= w;
            if w.norm() > 4.0 * Real::EPSILON * z[k].norm() {
                done = false;
            }
        }
        if done {
            return Ok(z);
        }
    }
    // Multiple roots stall at sqrt(eps) accuracy; accept if residuals are small.
    let scale = |x: Complex| {
        p.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm() * x.norm().powi(k as i32))
            .sum::<Real>()
    };
    if z.iter().all(|&x| p.eval(x).norm() <= 1e-8 * scale(x)) {
        Ok(z)
    } else {
        Err(PolyError::RootsDidNotConverge(ABERTH_MAX_ITER))
    }
}

fn newton_polish(p: &ComplexPoly, mut z: Complex) -> Complex {
    let dp = p.derivative();
    for _ in 0..3 {
        let d = dp.eval(z);
        if d.norm() == 0.0 {
            break;
        }
        let step = p.eval(z) / d;
        let next = z - step;
        if !(next.re.is_finite() && next.im.is_finite()) || p.eval(next).norm() >= p.eval(z).norm() {
            break;
        }
        z = next;
    }
    z
}

/// Two polynomials spanning a point of the Grassmannian.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyPair {
    pub first: ComplexPoly,
    pub second: ComplexPoly,
}

impl PolyPair {
    pub fn new(first: ComplexPoly, second: ComplexPoly) -> Self {
        PolyPair { first, second }
    }

    pub fn from_real(first: &RealPoly, second: &RealPoly) -> Self {
        PolyPair::new(first.to_complex(), second.to_complex())
    }

    pub fn wronskian(&self) -> ComplexPoly {
        wronskian(&self.first, &self.second)
    }

    pub fn max_degree(&self) -> usize {
        self.first
            .degree()
            .unwrap_or(0)
            .max(self.second.degree().unwrap_or(0))
    }

    pub fn is_independent(&self) -> bool {
        let cols = self.max_degree() + 1;
        let s = singular_values(&[&self.first, &self.second], cols);
        s.len() == 2 && s[1] > 1e-12 * s[0]
    }
}

/// Singular values of the row-normalized stacked coefficient matrix, in
/// decreasing order.
fn singular_values(rows: &[&ComplexPoly], cols: usize) -> Vec<Real> {
    let m = DMatrix::<Complex>::from_fn(rows.len(), cols, |i, j| {
        let norm = rows[i].coeffs().iter().map(|c| c.norm_sqr()).sum::<Real>().sqrt();
        if norm == 0.0 {
            Complex::new(0.0, 0.0)
        } else {
            rows[i].coeff(j) / norm
        }
    });
    let mut s: Vec<Real> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Whether two independent pairs span the same subspace: the stacked
/// 4-row coefficient matrix has numerical rank at most two.
pub fn span_equivalent(p1: &PolyPair, p2: &PolyPair, tol: Real) -> Result<bool, PolyError> {
    if !p1.is_independent() || !p2.is_independent() {
        return Err(PolyError::DegeneratePair);
    }
    let cols = p1.max_degree().max(p2.max_degree()) + 1;
    let s = singular_values(&[&p1.first, &p1.second, &p2.first, &p2.second], cols);
    Ok(s.len() < 3 || s[2] <= tol * s[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(c: &[Real]) -> RealPoly {
        Poly::new(c.to_vec())
    }

    fn sorted_re(mut v: Vec<Complex>) -> Vec<Real> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re));
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn wronskian_examples() {
        // (z, z^2+1) -> z^2 - 1
        assert_eq!(wronskian(&rp(&[0.0, 1.0]), &rp(&[1.0, 0.0, 1.0])), rp(&[-1.0, 0.0, 1.0]));
        let f = rp(&[0.3, -1.0, 2.0]);
        assert!(wronskian(&f, &f).is_zero());
        for d in 2..8 {
            let w = wronskian(&Poly::monomial(d - 1, 1.0), &Poly::monomial(d, 1.0));
            assert_eq!(w, Poly::monomial(2 * d - 2, 1.0));
        }
    }

    #[test]
    fn wronskian_with_constant() {
        let f = rp(&[1.0, 2.0, -3.0, 0.5]);
        let c = 2.5;
        let w = wronskian(&f, &Poly::constant(c));
        assert_eq!(w, f.derivative().scale(-c));
    }

    #[test]
    fn roots_examples() {
        let r = sorted_re(roots(&rp(&[-1.0, 0.0, 1.0]), 1e-10).unwrap());
        assert!((r[0] + 1.0).abs() < 1e-14 && (r[1] - 1.0).abs() < 1e-14);

        let r = roots(&rp(&[1.0, 2.0, 1.0]), 1e-6).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], r[1]);
        assert!((r[0] + 1.0).norm() < 1e-8);
        assert_eq!(root_clusters(&r, 1e-6).len(), 1);

        // quadratic formula: -0.1 -+ sqrt(0.009)
        let r = sorted_re(roots(&rp(&[0.001, 0.2, 1.0]), 1e-10).unwrap());
        let s = 0.009f64.sqrt();
        assert!((r[0] - (-0.1 - s)).abs() < 1e-14);
        assert!((r[1] - (-0.1 + s)).abs() < 1e-14);
        assert!((r[1] + 0.005132).abs() < 1e-6);
    }

    #[test]
    fn roots_of_zero_fails() {
        assert_eq!(roots(&RealPoly::zero(), 1e-10), Err(PolyError::ZeroPolynomial));
    }

    #[test]
    fn roots_at_origin_are_exact() {
        let p = from_roots(&[0.0, 0.0, -0.3, -1e-7]);
        let r = sorted_re(roots(&p, 1e-12).unwrap());
        assert_eq!(&r[2..], &[0.0, 0.0]);
        assert!((r[1] + 1e-7).abs() < 1e-20);
    }

    #[test]
    fn geometric_roots_resolve() {
        let rs: Vec<Real> = (0..10).map(|k| -(0.07f64.powi(k))).collect();
        let got = sorted_re(roots(&from_roots(&rs), 1e-14).unwrap());
        let mut want = rs.clone();
        want.sort_by(|a, b| a.total_cmp(b));
        for (g, w) in got.iter().zip(&want) {
            assert!(((g - w) / w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn from_roots_examples() {
        assert_eq!(from_roots::<Real>(&[]), Poly::constant(1.0));
        assert_eq!(from_roots(&[-1.0, 1.0]), rp(&[-1.0, 0.0, 1.0]));
        let x = 0.37;
        assert_eq!(from_roots(&[0.0, 0.0, -x]), rp(&[0.0, 0.0, x, 1.0]));
    }

    #[test]
    fn span_examples() {
        let z = rp(&[0.0, 1.0]);
        let z2p1 = rp(&[1.0, 0.0, 1.0]);
        let a = PolyPair::from_real(&z, &z2p1);
        let b = PolyPair::from_real(&z2p1, &z);
        assert!(span_equivalent(&a, &b, 1e-10).unwrap());
        let c = PolyPair::from_real(&rp(&[0.0, 2.0]), &rp(&[1.0, 3.0, 1.0]));
        assert!(span_equivalent(&a, &c, 1e-10).unwrap());
        let e = PolyPair::from_real(&z, &rp(&[0.0, 0.0, 1.0]));
        assert!(!span_equivalent(&a, &e, 1e-6).unwrap());
        let dep = PolyPair::from_real(&z, &rp(&[0.0, 2.0]));
        assert_eq!(span_equivalent(&a, &dep, 1e-6), Err(PolyError::DegeneratePair));
    }

    #[test]
    fn normalization_drops_tiny_leading_terms() {
        let p = rp(&[1.0, 2.0, 1e-14]);
        assert_eq!(p.degree(), Some(1));
        assert_eq!(rp(&[0.0, 0.0]).degree(), None);
    }

    #[test]
    fn compose_and_divide() {
        let p = rp(&[1.0, -2.0, 3.0]);
        let q = p.compose_affine(2.0, -1.0);
        for &t in &[-1.3, 0.0, 0.7, 2.0] {
            assert!((q.eval(t) - p.eval(2.0 * t - 1.0)).abs() < 1e-12);
        }
        let d = rp(&[-0.5, 1.0]);
        let (quot, rem) = p.div_rem(&d).unwrap();
        let back = &(&quot * &d) + &rem;
        assert_eq!(back, p);
    }
}
