//! Seed solutions near the pair `(z^{d-1}, z^d)`.
//!
//! Starting from `b(d-1, d)` every step adds one small positive term to one
//! polynomial of the pair. The order of the steps is a ballot sequence and
//! each step splits one new simple negative root of the Wronskian off the
//! origin. After `2d - 2` steps the pair lies in `b(0, 1)` and its Wronskian
//! has `2d - 2` simple roots in `(-1, 0)`.

use serde::Serialize;
use thiserror::Error;

use crate::combinat::{BallotSequence, CombinatError};
use crate::poly::{roots, wronskian, Real, RealPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeedError {
    #[error("operation F{0} is not permitted on b({1}, {2})")]
    NotPermitted(u8, usize, usize),
    #[error("parameter must be positive, got {0}")]
    NonPositiveParameter(Real),
    #[error(transparent)]
    InvalidBallot(#[from] CombinatError),
    #[error("ballot sequence has length {len}, expected {expected} for degree {d}")]
    LengthMismatch { len: usize, expected: usize, d: usize },
    #[error("no admissible parameter for step {step} after {retries} shrinks")]
    ScheduleExhausted { step: usize, retries: usize },
    #[error("degree must be at least 2, got {0}")]
    InvalidDegree(usize),
}

/// A pair `q1 = z^{d-1} + ... + a_{1,k1} z^{k1}`,
/// `q2 = z^d + ... + a_{2,k2} z^{k2}` with positive coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalPair {
    pub d: usize,
    pub k1: usize,
    pub k2: usize,
    pub q1: RealPoly,
    pub q2: RealPoly,
    /// Parameters in order of insertion, with the index of the polynomial
    /// each went into.
    pub inserted: Vec<(u8, Real)>,
}

impl CanonicalPair {
    /// Multiplicity of the Wronskian's root at the origin: `k1 + k2 - 1`.
    pub fn zero_order(&self) -> usize {
        self.k1 + self.k2 - 1
    }

    pub fn wronskian(&self) -> RealPoly {
        wronskian(&self.q1, &self.q2)
    }

    /// Sorted negative roots of the Wronskian (the root at the origin is
    /// excluded).
    pub fn negative_roots(&self) -> Vec<Real> {
        let w = self.wronskian();
        let k = self.zero_order();
        let reduced = RealPoly::new(w.coeffs()[k..].to_vec());
        let mut r: Vec<Real> = roots(&reduced, 0.0)
            .map(|v| v.into_iter().map(|z| z.re).collect())
            .unwrap_or_default();
        r.sort_by(|a, b| a.total_cmp(b));
        r
    }

    /// Lowest Wronskian coefficient predicted from the lowest terms of the
    /// pair: `(k2 - k1) a_{2,k2} a_{1,k1}`.
    pub fn predicted_lowest_coefficient(&self) -> Real {
        (self.k2 - self.k1) as Real * self.q2.coeff(self.k2) * self.q1.coeff(self.k1)
    }
}

/// The single element of `b(d-1, d)`.
pub fn initial_pair(d: usize) -> Result<CanonicalPair, SeedError> {
    if d < 2 {
        return Err(SeedError::InvalidDegree(d));
    }
    Ok(CanonicalPair {
        d,
        k1: d - 1,
        k2: d,
        q1: RealPoly::monomial(d - 1, 1.0),
        q2: RealPoly::monomial(d, 1.0),
        inserted: Vec::new(),
    })
}

/// `F1` needs `k1 > 0`, `F2` needs `k2 > k1 + 1`.
pub fn permitted(i: u8, pair: &CanonicalPair) -> bool {
    match i {
        1 => pair.k1 > 0,
        2 => pair.k2 > pair.k1 + 1,
        _ => false,
    }
}

/// Adds `a z^{k_i - 1}` to `q_i`.
pub fn apply_f(i: u8, a: Real, pair: &CanonicalPair) -> Result<CanonicalPair, SeedError> {
    if !permitted(i, pair) {
        return Err(SeedError::NotPermitted(i, pair.k1, pair.k2));
    }
    if !(a > 0.0) {
        return Err(SeedError::NonPositiveParameter(a));
    }
    let mut out = pair.clone();
    let (poly, k) = if i == 1 {
        out.k1 -= 1;
        (&mut out.q1, out.k1)
    } else {
        out.k2 -= 1;
        (&mut out.q2, out.k2)
    };
    let mut c = poly.coeffs().to_vec();
    c[k] += a;
    *poly = RealPoly::new_exact(c);
    out.inserted.push((i, a));
    Ok(out)
}

/// Geometric parameter schedule: the m-th parameter is `ratio^m`, shrunk by
/// `ratio` on each failed root check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeedSchedule {
    pub ratio: Real,
    pub max_retries: usize,
}

impl Default for SeedSchedule {
    fn default() -> Self {
        SeedSchedule { ratio: 0.05, max_retries: 40 }
    }
}

/// Minimum magnitude ratio between consecutive negative roots.
pub const ROOT_SEPARATION_FACTOR: Real = 10.0;

/// A seed in `b(0, 1)` together with the ballot sequence that built it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seed {
    pub ballot: BallotSequence,
    pub pair: CanonicalPair,
    pub roots: Vec<Real>,
}

fn admissible(previous: &[Real], cand: &CanonicalPair) -> Option<Vec<Real>> {
    let w = cand.wronskian();
    let k = cand.zero_order();
    if w.order_at_zero() != k {
        return None;
    }
    let reduced = RealPoly::new(w.coeffs()[k..].to_vec());
    let found = roots(&reduced, 0.0).ok()?;
    if found.iter().any(|z| z.im.abs() > 1e-9 * z.norm()) {
        return None;
    }
    let mut r: Vec<Real> = found.iter().map(|z| z.re).collect();
    r.sort_by(|a, b| a.total_cmp(b));
    if r.len() != previous.len() + 1 || r.iter().any(|&x| !(x > -1.0 && x < 0.0)) {
        return None;
    }
    // the new root must be nearest zero and well separated from the others
    if r.windows(2).any(|w| w[0].abs() < ROOT_SEPARATION_FACTOR * w[1].abs()) {
        return None;
    }
    // old roots move only slightly
    for (old, new) in previous.iter().zip(&r) {
        if (old - new).abs() > 0.5 * (old.abs() - old.abs() / ROOT_SEPARATION_FACTOR) {
            return None;
        }
    }
    Some(r)
}

/// Builds the `b(0, 1)` seed for `sigma`.
pub fn seed_from_ballot(sigma: &BallotSequence, d: usize, schedule: &SeedSchedule) -> Result<Seed, SeedError> {
    if sigma.len() != 2 * d - 2 {
        return Err(SeedError::LengthMismatch { len: sigma.len(), expected: 2 * d - 2, d });
    }
    let mut pair = initial_pair(d)?;
    let mut current: Vec<Real> = Vec::new();
    let mut a = 1.0;
    for (step, &i) in sigma.entries().iter().enumerate() {
        a *= schedule.ratio;
        let mut accepted = None;
        for _ in 0..=schedule.max_retries {
            let cand = apply_f(i, a, &pair)?;
            if let Some(r) = admissible(&current, &cand) {
                accepted = Some((cand, r));
                break;
            }
            a *= schedule.ratio;
        }
        let (next, r) = accepted.ok_or(SeedError::ScheduleExhausted { step, retries: schedule.max_retries })?;
        pair = next;
        current = r;
    }
    Ok(Seed { ballot: sigma.clone(), pair, roots: current })
}

/// Every maximal sequence of permitted operations from `b(d-1, d)`,
/// found by walking the rule directly.
pub fn rule_sequences(d: usize) -> Vec<Vec<u8>> {
    fn go(k1: usize, k2: usize, word: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        let mut moved = false;
        if k1 > 0 {
            moved = true;
            word.push(1);
            go(k1 - 1, k2, word, out);
            word.pop();
        }
        if k2 > k1 + 1 {
            moved = true;
            word.push(2);
            go(k1, k2 - 1, word, out);
            word.pop();
        }
        if !moved {
            out.push(word.clone());
        }
    }
    let mut out = Vec::new();
    go(d - 1, d, &mut Vec::new(), &mut out);
    out
}
