//! Exact counting: Catalan numbers, ballot sequences, non-crossing
//! matchings and two-row Kostka numbers.
//!
//! Everything here is enumerated in lexicographic order so outputs can be
//! used as fixtures.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombinatError {
    #[error("degree must be at least 2, got {0}")]
    InvalidDegree(usize),
    #[error("integer overflow computing {0}")]
    Overflow(&'static str),
    #[error("invalid ballot sequence: {0}")]
    InvalidBallot(String),
    #[error("invalid content vector: {0}")]
    InvalidContent(String),
}

/// `binomial(2d-2, d-1) / d`, the number of classes for `2d-2` simple
/// critical points.
pub fn catalan(d: usize) -> Result<u64, CombinatError> {
    if d < 2 {
        return Err(CombinatError::InvalidDegree(d));
    }
    let n = 2 * d - 2;
    let k = d - 1;
    // C(n, i) stays integral at every step of the running product.
    let mut c: u128 = 1;
    for i in 0..k {
        c = c
            .checked_mul((n - i) as u128)
            .ok_or(CombinatError::Overflow("catalan"))?
            / (i as u128 + 1);
    }
    u64::try_from(c / d as u128).map_err(|_| CombinatError::Overflow("catalan"))
}

/// Word over `{1, 2}` with equal counts and every prefix holding at least as
/// many 1's as 2's.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "String")]
pub struct BallotSequence(Vec<u8>);

impl BallotSequence {
    pub fn new(entries: Vec<u8>) -> Result<Self, CombinatError> {
        let s = || entries.iter().map(|e| e.to_string()).collect::<String>();
        if entries.is_empty() || entries.len() % 2 != 0 {
            return Err(CombinatError::InvalidBallot(format!("{} has odd or zero length", s())));
        }
        let mut balance = 0i64;
        for &e in &entries {
            match e {
                1 => balance += 1,
                2 => balance -= 1,
                _ => return Err(CombinatError::InvalidBallot(format!("{} has entry {e}", s()))),
            }
            if balance < 0 {
                return Err(CombinatError::InvalidBallot(format!("{} violates the prefix condition", s())));
            }
        }
        if balance != 0 {
            return Err(CombinatError::InvalidBallot(format!("{} is unbalanced", s())));
        }
        Ok(BallotSequence(entries))
    }

    pub fn entries(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree `d` with `len = 2d - 2`.
    pub fn degree(&self) -> usize {
        self.0.len() / 2 + 1
    }
}

impl fmt::Display for BallotSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BallotSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ballot({self})")
    }
}

impl From<BallotSequence> for String {
    fn from(b: BallotSequence) -> String {
        b.to_string()
    }
}

impl FromStr for BallotSequence {
    type Err = CombinatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let entries = s
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '2' => Ok(2),
                _ => Err(CombinatError::InvalidBallot(format!("{s} contains {c:?}"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        BallotSequence::new(entries)
    }
}

/// All ballot sequences of length `2d - 2`, lexicographic.
pub fn ballot_sequences(d: usize) -> Result<Vec<BallotSequence>, CombinatError> {
    if d < 2 {
        return Err(CombinatError::InvalidDegree(d));
    }
    let half = d - 1;
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(2 * half);
    fn go(word: &mut Vec<u8>, ones: usize, twos: usize, half: usize, out: &mut Vec<BallotSequence>) {
        if ones == half && twos == half {
            out.push(BallotSequence(word.clone()));
            return;
        }
        if ones < half {
            word.push(1);
            go(word, ones + 1, twos, half, out);
            word.pop();
        }
        if twos < ones {
            word.push(2);
            go(word, ones, twos + 1, half, out);
            word.pop();
        }
    }
    go(&mut word, 0, 0, half, &mut out);
    Ok(out)
}

/// Perfect matching on `0..n` stored as sorted arcs `(i, j)` with `i < j`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
#[serde(transparent)]
pub struct Matching {
    arcs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn new(arcs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut arcs: Vec<(usize, usize)> = arcs
            .into_iter()
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        arcs.sort_unstable();
        Matching { arcs }
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.arcs.binary_search(&key).is_ok()
    }

    pub fn partner(&self, i: usize) -> Option<usize> {
        self.arcs.iter().find_map(|&(a, b)| match () {
            _ if a == i => Some(b),
            _ if b == i => Some(a),
            _ => None,
        })
    }

    /// Every index of `0..n` lies on exactly one arc and no arc is a loop.
    pub fn is_perfect(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &(i, j) in &self.arcs {
            if i == j || j >= n || seen[i] || seen[j] {
                return false;
            }
            seen[i] = true;
            seen[j] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_non_crossing(&self) -> bool {
        self.arcs.iter().all(|&(i, j)| {
            self.arcs
                .iter()
                .all(|&(k, l)| !(i < k && k < j && j < l))
        })
    }

    /// Arcs under the reflection `i -> n - 1 - i`.
    pub fn reversed(&self, n: usize) -> Matching {
        Matching::new(self.arcs.iter().map(|&(i, j)| (n - 1 - j, n - 1 - i)))
    }
}

/// Parenthesis matching: each 2 closes the most recent open 1.
pub fn ballot_to_matching(sigma: &BallotSequence) -> Result<Matching, CombinatError> {
    let mut open = Vec::new();
    let mut arcs = Vec::with_capacity(sigma.len() / 2);
    for (pos, &e) in sigma.entries().iter().enumerate() {
        if e == 1 {
            open.push(pos);
        } else {
            let i = open
                .pop()
                .ok_or_else(|| CombinatError::InvalidBallot(sigma.to_string()))?;
            arcs.push((i, pos));
        }
    }
    if !open.is_empty() {
        return Err(CombinatError::InvalidBallot(sigma.to_string()));
    }
    Ok(Matching::new(arcs))
}

/// All non-crossing perfect matchings of `0..n`, lexicographic.
pub fn noncrossing_matchings(n: usize) -> Vec<Matching> {
    fn go(lo: usize, hi: usize) -> Vec<Vec<(usize, usize)>> {
        if lo >= hi {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for j in (lo + 1..hi).step_by(2) {
            for inner in go(lo + 1, j) {
                for outer in go(j + 1, hi) {
                    let mut arcs = vec![(lo, j)];
                    arcs.extend(inner.iter().copied());
                    arcs.extend(outer.iter().copied());
                    out.push(arcs);
                }
            }
        }
        out
    }
    if n % 2 != 0 {
        return Vec::new();
    }
    let mut all: Vec<Matching> = go(0, n).into_iter().map(Matching::new).collect();
    all.sort();
    all
}

/// Multiplicities `(a_1, ..., a_q)` with `1 <= a_j <= d - 1` and
/// `sum a_j = 2d - 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContentVector {
    a: Vec<usize>,
    d: usize,
}

impl ContentVector {
    pub fn new(a: Vec<usize>, d: usize) -> Result<Self, CombinatError> {
        if d < 2 {
            return Err(CombinatError::InvalidContent(format!("degree {d} < 2")));
        }
        if a.is_empty() {
            return Err(CombinatError::InvalidContent("empty content".into()));
        }
        if let Some(&x) = a.iter().find(|&&x| x == 0 || x > d - 1) {
            return Err(CombinatError::InvalidContent(format!(
                "entry {x} outside 1..={}",
                d - 1
            )));
        }
        let sum: usize = a.iter().sum();
        if sum != 2 * d - 2 {
            return Err(CombinatError::InvalidContent(format!(
                "entries sum to {sum}, expected {}",
                2 * d - 2
            )));
        }
        Ok(ContentVector { a, d })
    }

    /// Degree inferred from `sum a_j = 2d - 2`.
    pub fn from_entries(a: Vec<usize>) -> Result<Self, CombinatError> {
        let sum: usize = a.iter().sum();
        if sum % 2 != 0 {
            return Err(CombinatError::InvalidContent(format!("odd total {sum}")));
        }
        Self::new(a, sum / 2 + 1)
    }

    pub fn entries(&self) -> &[usize] {
        &self.a
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    /// Every valid content vector of degree `d` (all compositions of
    /// `2d - 2` with parts at most `d - 1`), lexicographic.
    pub fn all(d: usize) -> Vec<ContentVector> {
        fn go(rest: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest == 0 {
                out.push(cur.clone());
                return;
            }
            for x in 1..=cap.min(rest) {
                cur.push(x);
                go(rest - x, cap, cur, out);
                cur.pop();
            }
        }
        if d < 2 {
            return Vec::new();
        }
        let mut out = Vec::new();
        go(2 * d - 2, d - 1, &mut Vec::new(), &mut out);
        out.into_iter().map(|a| ContentVector { a, d }).collect()
    }
}

/// Two-row semi-standard tableau with entries `1..=q`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Tableau {
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
}

impl Tableau {
    pub fn is_semistandard(&self) -> bool {
        self.top.len() == self.bottom.len()
            && self.top.windows(2).all(|w| w[0] <= w[1])
            && self.bottom.windows(2).all(|w| w[0] <= w[1])
            && self.top.iter().zip(&self.bottom).all(|(t, b)| t < b)
    }

    pub fn content(&self, q: usize) -> Vec<usize> {
        let mut c = vec![0; q];
        for &v in self.top.iter().chain(&self.bottom) {
            c[v - 1] += 1;
        }
        c
    }
}

/// Semi-standard tableaux of shape `2 x (d-1)` with content `c`, by
/// backtracking over how many copies of each value go into the top row.
pub fn enumerate_ssyt(c: &ContentVector) -> Vec<Tableau> {
    let width = c.d - 1;
    let mut out = Vec::new();
    fn go(k: usize, a: &[usize], width: usize, t: &mut Tableau, out: &mut Vec<Tableau>) {
        if k == a.len() {
            out.push(t.clone());
            return;
        }
        let (l1, l2) = (t.top.len(), t.bottom.len());
        for in_top in (0..=a[k]).rev() {
            let in_bottom = a[k] - in_top;
            // new bottom cells must sit under strictly smaller top entries
            if l1 + in_top > width || l2 + in_bottom > l1 {
                continue;
            }
            t.top.extend(std::iter::repeat_n(k + 1, in_top));
            t.bottom.extend(std::iter::repeat_n(k + 1, in_bottom));
            go(k + 1, a, width, t, out);
            t.top.truncate(l1);
            t.bottom.truncate(l2);
        }
    }
    let mut t = Tableau { top: Vec::new(), bottom: Vec::new() };
    go(0, &c.a, width, &mut t, &mut out);
    out.sort();
    out
}

pub fn kostka(c: &ContentVector) -> u64 {
    enumerate_ssyt(c).len() as u64
}

/// Non-crossing perfect matchings of `2d-2` ordered points split into
/// consecutive groups of sizes `a_j`, with no arc inside a group.
pub fn count_nets_multiplicity(c: &ContentVector) -> u64 {
    let group: Vec<usize> = c
        .a
        .iter()
        .enumerate()
        .flat_map(|(g, &size)| std::iter::repeat_n(g, size))
        .collect();
    let n = group.len();
    // memo[lo][hi]: admissible matchings of the interval lo..hi
    let mut memo = vec![vec![None::<u64>; n + 1]; n + 1];
    fn go(lo: usize, hi: usize, group: &[usize], memo: &mut [Vec<Option<u64>>]) -> u64 {
        if lo >= hi {
            return 1;
        }
        if let Some(v) = memo[lo][hi] {
            return v;
        }
        let mut total = 0;
        for j in (lo + 1..hi).step_by(2) {
            if group[j] == group[lo] {
                continue;
            }
            let inner = go(lo + 1, j, group, memo);
            if inner > 0 {
                total += inner * go(j + 1, hi, group, memo);
            }
        }
        memo[lo][hi] = Some(total);
        total
    }
    go(0, n, &group, &mut memo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> BallotSequence {
        s.parse().unwrap()
    }

    fn cv(a: &[usize], d: usize) -> ContentVector {
        ContentVector::new(a.to_vec(), d).unwrap()
    }

    #[test]
    fn catalan_values() {
        assert_eq!(catalan(2), Ok(1));
        assert_eq!(catalan(3), Ok(2));
        assert_eq!(catalan(4), Ok(5));
        assert_eq!(catalan(5), Ok(14));
        assert_eq!(catalan(16), Ok(9_694_845));
        assert_eq!(catalan(1), Err(CombinatError::InvalidDegree(1)));
        assert_eq!(catalan(60), Err(CombinatError::Overflow("catalan")));
    }

    #[test]
    fn ballot_examples() {
        assert_eq!(ballot_sequences(2).unwrap(), vec![b("12")]);
        assert_eq!(ballot_sequences(3).unwrap(), vec![b("1122"), b("1212")]);
        assert_eq!(ballot_sequences(5).unwrap().len(), 14);
        assert!("21".parse::<BallotSequence>().is_err());
        assert!("1112".parse::<BallotSequence>().is_err());
        assert!("1a".parse::<BallotSequence>().is_err());
    }

    #[test]
    fn ballot_matching_examples() {
        assert_eq!(ballot_to_matching(&b("12")).unwrap(), Matching::new([(0, 1)]));
        assert_eq!(ballot_to_matching(&b("1212")).unwrap(), Matching::new([(0, 1), (2, 3)]));
        assert_eq!(ballot_to_matching(&b("1122")).unwrap(), Matching::new([(0, 3), (1, 2)]));
    }

    #[test]
    fn ballot_matching_contains_adjacent_12_pairs() {
        for d in 2..=6 {
            for s in ballot_sequences(d).unwrap() {
                let m = ballot_to_matching(&s).unwrap();
                for (pos, w) in s.entries().windows(2).enumerate() {
                    if w == [1, 2] {
                        assert!(m.contains(pos, pos + 1));
                    }
                }
            }
        }
    }

    #[test]
    fn counts_agree_with_catalan() {
        for d in 2..=8 {
            let seqs = ballot_sequences(d).unwrap();
            let u = catalan(d).unwrap() as usize;
            assert_eq!(seqs.len(), u);
            let all = noncrossing_matchings(2 * d - 2);
            assert_eq!(all.len(), u);
            let mut images: Vec<Matching> =
                seqs.iter().map(|s| ballot_to_matching(s).unwrap()).collect();
            for m in &images {
                assert!(m.is_perfect(2 * d - 2) && m.is_non_crossing());
            }
            images.sort();
            images.dedup();
            assert_eq!(images, all, "injective and onto for d={d}");
        }
    }

    #[test]
    fn matching_predicates() {
        let crossing = Matching::new([(0, 2), (1, 3)]);
        assert!(crossing.is_perfect(4));
        assert!(!crossing.is_non_crossing());
        assert!(!Matching::new([(0, 1)]).is_perfect(4));
        assert_eq!(Matching::new([(0, 1), (2, 5), (3, 4)]).reversed(6), Matching::new([(0, 3), (1, 2), (4, 5)]));
    }

    #[test]
    fn content_validation() {
        assert!(ContentVector::new(vec![2, 1], 2).is_err());
        assert!(ContentVector::new(vec![1, 1, 1], 3).is_err());
        assert!(ContentVector::new(vec![3, 1], 3).is_err());
        assert_eq!(ContentVector::from_entries(vec![1, 1, 1, 1, 2]).unwrap().degree(), 4);
    }

    #[test]
    fn ssyt_examples() {
        let t = |top: &[usize], bottom: &[usize]| Tableau { top: top.to_vec(), bottom: bottom.to_vec() };
        assert_eq!(enumerate_ssyt(&cv(&[1, 1], 2)), vec![t(&[1], &[2])]);
        assert_eq!(enumerate_ssyt(&cv(&[2, 2], 3)), vec![t(&[1, 1], &[2, 2])]);
        assert_eq!(
            enumerate_ssyt(&cv(&[1, 1, 1, 1], 3)),
            vec![t(&[1, 2], &[3, 4]), t(&[1, 3], &[2, 4])]
        );
        assert_eq!(kostka(&cv(&[1, 1, 1, 1, 2], 4)), 3);
    }

    #[test]
    fn net_count_examples() {
        assert_eq!(count_nets_multiplicity(&cv(&[1, 1, 1, 1], 3)), 2);
        assert_eq!(count_nets_multiplicity(&cv(&[2, 2], 3)), 1);
        assert_eq!(count_nets_multiplicity(&cv(&[1, 1], 2)), 1);
    }

    #[test]
    fn all_contents_are_valid() {
        for d in 2..=5 {
            for c in ContentVector::all(d) {
                assert!(ContentVector::new(c.entries().to_vec(), d).is_ok());
            }
        }
        assert_eq!(ContentVector::all(3).len(), 5);
    }
}
