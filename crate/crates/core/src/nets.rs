//! Nets: the preimage of the real line under a real rational function with
//! real critical points, recorded as the matching cut out in the upper
//! half-plane.
//!
//! Vertex indices are 0-based positions in the sorted vertex list.

use serde::Serialize;
use thiserror::Error;

use crate::combinat::{ballot_to_matching, BallotSequence, Matching};
use crate::poly::{roots, Complex, RealPoly, Real};
use crate::tracker::PairClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("trace from vertex {vertex} was lost: {reason}")]
    TraceLost { vertex: usize, reason: String },
    #[error("input is not real (relative imaginary part {0:.3e})")]
    NonRealInput(Real),
    #[error("ballot of length {ballot} for {vertices} vertices")]
    LengthMismatch { ballot: usize, vertices: usize },
    #[error("vertex index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("traced arcs do not form a perfect non-crossing matching: {0:?}")]
    NotAMatching(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcPath {
    pub from: usize,
    pub to: usize,
    pub points: Vec<[Real; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Net {
    pub vertices: Vec<Real>,
    pub matching: Matching,
    pub distinguished: usize,
    /// Traced upper arcs; empty for nets built combinatorially.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub arcs: Vec<ArcPath>,
}

impl Net {
    pub fn new(vertices: Vec<Real>, matching: Matching) -> Self {
        let distinguished = vertices.len().saturating_sub(1);
        Net { vertices, matching, distinguished, arcs: Vec::new() }
    }

    pub fn same_matching(&self, other: &Net) -> bool {
        self.matching == other.matching
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceOptions {
    /// Initial arclength step.
    pub step: Real,
    pub shrink: Real,
    pub vertex_capture_radius: Real,
    pub max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { step: 1e-2, shrink: 0.5, vertex_capture_radius: 1e-4, max_steps: 100_000 }
    }
}

/// Which half-plane to trace in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Upper,
    Lower,
}

/// `F = Im(q1 conj(q2)) / (|q1|^2 + |q2|^2)`, whose zero set is
/// `g^{-1}(R ∪ ∞)`. The normalization keeps `F` bounded and scale-free.
struct LevelFunction {
    q1: RealPoly,
    q2: RealPoly,
    dq1: RealPoly,
    dq2: RealPoly,
    abs1: RealPoly,
    abs2: RealPoly,
}

impl LevelFunction {
    /// Each polynomial is scaled to unit largest coefficient. The pair is
    /// not recombined: mixing destroys tiny coefficients that carry the
    /// structure of multiscale seeds.
    fn new(q1: &RealPoly, q2: &RealPoly) -> Self {
        let (q1, q2) = (q1.scale(1.0 / q1.max_coeff()), q2.scale(1.0 / q2.max_coeff()));
        let abs = |p: &RealPoly| RealPoly::new_exact(p.coeffs().iter().map(|t| t.abs()).collect());
        LevelFunction { dq1: q1.derivative(), dq2: q2.derivative(), abs1: abs(&q1), abs2: abs(&q2), q1, q2 }
    }

    fn value_grad(&self, z: Complex) -> (Real, [Real; 2]) {
        let a = self.q1.eval_complex(z);
        let b = self.q2.eval_complex(z);
        let da = self.dq1.eval_complex(z);
        let db = self.dq2.eval_complex(z);
        let f = (a * b.conj()).im;
        let fx = (da * b.conj() + a * db.conj()).im;
        let fy = (da * b.conj() - a * db.conj()).re;
        let n = a.norm_sqr() + b.norm_sqr();
        let nx = 2.0 * ((da * a.conj()).re + (db * b.conj()).re);
        let ny = -2.0 * ((da * a.conj()).im + (db * b.conj()).im);
        let g = f / n;
        (g, [(fx - g * nx) / n, (fy - g * ny) / n])
    }

    /// Rounding level of `F` at `z`.
    fn noise(&self, z: Complex) -> Real {
        let r = z.norm();
        let (a, b) = (self.q1.eval_complex(z), self.q2.eval_complex(z));
        let size = self.abs1.eval(r) * self.abs2.eval(r);
        4.0 * (self.q1.coeffs().len() + self.q2.coeffs().len()) as Real * Real::EPSILON * size
            / (a.norm_sqr() + b.norm_sqr())
    }

    /// Newton along the gradient onto `F = 0`.
    fn project(&self, mut z: Complex, tol: Real) -> Option<Complex> {
        for _ in 0..20 {
            let (f, g) = self.value_grad(z);
            let n2 = g[0] * g[0] + g[1] * g[1];
            if n2 == 0.0 || !n2.is_finite() {
                return None;
            }
            let dz = Complex::new(-f * g[0] / n2, -f * g[1] / n2);
            if f.abs() <= self.noise(z) {
                return Some(z);
            }
            z += dz;
            if dz.norm() <= tol {
                return Some(z);
            }
        }
        None
    }

    fn tangent(&self, z: Complex) -> Option<Complex> {
        let (_, g) = self.value_grad(z);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Complex::new(-g[1] / n, g[0] / n))
    }
}

fn real_pair(pc: &PairClass) -> Result<(RealPoly, RealPoly), NetError> {
    let imag = pc.max_imag();
    if imag > 1e-8 {
        return Err(NetError::NonRealInput(imag));
    }
    Ok((pc.q1.real_part(), pc.q2.real_part()))
}

/// Sorted real critical points of `q1 / q2`.
fn real_vertices(q1: &RealPoly, q2: &RealPoly) -> Result<Vec<Real>, NetError> {
    let w = crate::poly::wronskian(q1, q2);
    let found = roots(&w, 0.0).map_err(|_| NetError::NonRealInput(Real::INFINITY))?;
    let scale = found.iter().fold(1.0, |m: Real, z| m.max(z.norm()));
    if let Some(z) = found.iter().find(|z| z.im.abs() > 1e-8 * scale) {
        return Err(NetError::NonRealInput(z.im.abs() / scale));
    }
    let mut v: Vec<Real> = found.iter().map(|z| z.re).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

fn gaps(v: &[Real]) -> Vec<Real> {
    (0..v.len())
        .map(|j| {
            let left = if j > 0 { v[j] - v[j - 1] } else { Real::INFINITY };
            let right = if j + 1 < v.len() { v[j + 1] - v[j] } else { Real::INFINITY };
            let g = left.min(right);
            if g.is_finite() { g } else { 1.0 }
        })
        .collect()
}

struct Tracer<'a> {
    level: &'a LevelFunction,
    vertices: &'a [Real],
    gaps: Vec<Real>,
    bound: Real,
    opts: TraceOptions,
}

impl Tracer<'_> {
    fn nearest(&self, z: Complex) -> (usize, Real) {
        self.vertices
            .iter()
            .enumerate()
            .map(|(k, &v)| (k, (z - Complex::new(v, 0.0)).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one vertex")
    }

    fn capture_radius(&self, k: usize) -> Real {
        self.opts.vertex_capture_radius.min(0.01 * self.gaps[k])
    }

    fn trace(&self, j: usize, half: Half) -> Result<ArcPath, NetError> {
        let lost = |reason: &str| NetError::TraceLost { vertex: j, reason: reason.to_string() };
        let sign = if half == Half::Upper { 1.0 } else { -1.0 };
        let v = self.vertices[j];
        let h = 0.1 * self.gaps[j];
        let mut z = self
            .level
            .project(Complex::new(v, sign * h), (1e-12 * h).max(8.0 * Real::EPSILON * v.abs()))
            .ok_or_else(|| lost("no level curve above the vertex"))?;
        let mut t = self.level.tangent(z).ok_or_else(|| lost("singular gradient at start"))?;
        if t.im * sign < 0.0 {
            t = -t;
        }
        let mut points = vec![[v, 0.0], [z.re, z.im]];
        let mut step = self.opts.step;
        for _ in 0..self.opts.max_steps {
            let (_, dist) = self.nearest(z);
            let s = step.min(0.25 * dist);
            let tol = (1e-10 * s).max(8.0 * Real::EPSILON * z.norm());
            let accepted = self.level.project(z + t * s, tol).and_then(|zc| {
                let moved = (zc - z).norm();
                let tc = self.level.tangent(zc)?;
                let tc = if (tc * t.conj()).re < 0.0 { -tc } else { tc };
                let drift = (zc - (z + t * s)).norm();
                let turn = (tc * t.conj()).re;
                (drift <= 0.5 * s && turn >= 0.8 && moved > 0.0).then_some((zc, tc))
            });
            match accepted {
                Some((zc, tc)) => {
                    if zc.im * sign <= 0.0 {
                        return Err(lost("crossed the real axis away from a vertex"));
                    }
                    let toward_axis = zc.im.abs() < z.im.abs();
                    z = zc;
                    t = tc;
                    points.push([z.re, z.im]);
                    if z.norm() > self.bound {
                        return Err(lost("left the bounding box"));
                    }
                    let (k, dk) = self.nearest(z);
                    if toward_axis && dk <= self.capture_radius(k) {
                        if k == j {
                            return Err(lost("returned to its own vertex"));
                        }
                        points.push([self.vertices[k], 0.0]);
                        return Ok(ArcPath { from: j, to: k, points });
                    }
                    step = (step / self.opts.shrink).min(self.opts.step);
                }
                None => {
                    step = s * self.opts.shrink;
                    if step < 1e-7 * dist {
                        return Err(lost("step underflow"));
                    }
                }
            }
        }
        Err(lost("step budget exhausted"))
    }
}

/// Traces the arcs leaving each vertex into one half-plane.
pub fn trace_arcs(pc: &PairClass, opts: &TraceOptions, half: Half) -> Result<(Vec<Real>, Vec<ArcPath>), NetError> {
    let (q1, q2) = real_pair(pc)?;
    let vertices = real_vertices(&q1, &q2)?;
    let level = LevelFunction::new(&q1, &q2);
    let max_v = vertices.iter().fold(0.0, |m: Real, v| m.max(v.abs()));
    let tracer = Tracer {
        level: &level,
        vertices: &vertices,
        gaps: gaps(&vertices),
        bound: 10.0 * (1.0 + max_v),
        opts: *opts,
    };
    let arcs = (0..vertices.len())
        .map(|j| tracer.trace(j, half))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((vertices, arcs))
}

fn matching_from_arcs(n: usize, arcs: &[ArcPath]) -> Result<Matching, NetError> {
    let pairs: Vec<(usize, usize)> = arcs.iter().map(|a| (a.from.min(a.to), a.from.max(a.to))).collect();
    let mut partner = vec![None; n];
    for a in arcs {
        partner[a.from] = Some(a.to);
    }
    let consistent = (0..n).all(|j| partner[j].is_some_and(|k| partner[k] == Some(j)));
    let matching = Matching::new(arcs.iter().filter(|a| a.from < a.to).map(|a| (a.from, a.to)));
    if !consistent || !matching.is_perfect(n) || !matching.is_non_crossing() {
        return Err(NetError::NotAMatching(pairs));
    }
    Ok(matching)
}

/// The net of a real class, from its upper arcs.
pub fn trace_net(pc: &PairClass, opts: &TraceOptions) -> Result<Net, NetError> {
    let (vertices, arcs) = trace_arcs(pc, opts, Half::Upper)?;
    let matching = matching_from_arcs(vertices.len(), &arcs)?;
    let mut net = Net::new(vertices, matching);
    // keep one polyline per arc, traced from its left end
    net.arcs = arcs.into_iter().filter(|a| a.from < a.to).collect();
    Ok(net)
}

/// The matching traced in the lower half-plane, which should be the
/// mirror image of the upper one.
pub fn trace_lower_matching(pc: &PairClass, opts: &TraceOptions) -> Result<Matching, NetError> {
    let (vertices, arcs) = trace_arcs(pc, opts, Half::Lower)?;
    matching_from_arcs(vertices.len(), &arcs)
}

/// Whether ballot position `m` labels the `m`-th vertex from the left
/// (`true`) or from the right. Fixed by tracing seeds of degree 3 and 4.
pub const BALLOT_LEFT_TO_RIGHT: bool = true;

pub fn net_from_ballot(sigma: &BallotSequence, vertices: &[Real]) -> Result<Net, NetError> {
    let n = vertices.len();
    if sigma.len() != n {
        return Err(NetError::LengthMismatch { ballot: sigma.len(), vertices: n });
    }
    let m = ballot_to_matching(sigma).expect("validated ballot");
    let matching = if BALLOT_LEFT_TO_RIGHT { m } else { m.reversed(n) };
    Ok(Net::new(vertices.to_vec(), matching))
}

/// Whether vertices `m` and `m + 1` are joined by an arc, so that merging
/// them lowers the degree.
pub fn degree_drop_edge(net: &Net, m: usize) -> Result<bool, NetError> {
    if m + 1 >= net.vertices.len() {
        return Err(NetError::IndexOutOfRange(m));
    }
    Ok(net.matching.contains(m, m + 1))
}
