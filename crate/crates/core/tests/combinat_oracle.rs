//! Combinatorial counts against brute-force oracles.

use proptest::prelude::*;
use wronski_core::combinat::{
    ballot_sequences, ballot_to_matching, catalan, count_nets_multiplicity, enumerate_ssyt, kostka,
    noncrossing_matchings, ContentVector,
};

/// Counts fillings of a 2 x (d-1) grid with values 1..=q that have the
/// given content, rows weakly increasing and columns strictly increasing.
fn brute_force_kostka(a: &[usize], d: usize) -> u64 {
    let w = d - 1;
    let cells = 2 * w;
    let q = a.len();
    let mut count = 0;
    let mut fill = vec![0usize; cells];
    loop {
        let mut content = vec![0; q];
        fill.iter().for_each(|&v| content[v] += 1);
        let (top, bottom) = fill.split_at(w);
        if content == a
            && top.windows(2).all(|p| p[0] <= p[1])
            && bottom.windows(2).all(|p| p[0] <= p[1])
            && top.iter().zip(bottom).all(|(t, b)| t < b)
        {
            count += 1;
        }
        let mut i = 0;
        while i < cells {
            fill[i] += 1;
            if fill[i] < q {
                break;
            }
            fill[i] = 0;
            i += 1;
        }
        if i == cells {
            return count;
        }
    }
}

/// Catalan numbers by the convolution recurrence.
fn catalan_recurrence(k: usize) -> u64 {
    let mut c = vec![1u64; k + 1];
    for n in 1..=k {
        c[n] = (0..n).map(|i| c[i] * c[n - 1 - i]).sum();
    }
    c[k]
}

#[test]
fn kostka_matches_brute_force() {
    for d in 2..=4 {
        for c in ContentVector::all(d) {
            assert_eq!(kostka(&c), brute_force_kostka(c.entries(), d), "content {:?}", c.entries());
        }
    }
}

#[test]
fn reference_kostka_values() {
    assert_eq!(brute_force_kostka(&[2, 2], 3), 1);
    assert_eq!(brute_force_kostka(&[1, 1, 1, 1, 2], 4), 3);
    assert_eq!(kostka(&ContentVector::new(vec![2, 2], 3).unwrap()), 1);
    assert_eq!(kostka(&ContentVector::new(vec![1, 1, 1, 1, 2], 4).unwrap()), 3);
}

#[test]
fn catalan_matches_recurrence_and_enumerations() {
    for d in 2..=9 {
        assert_eq!(catalan(d).unwrap(), catalan_recurrence(d - 1));
    }
    for d in 2..=7 {
        let u = catalan(d).unwrap() as usize;
        assert_eq!(ballot_sequences(d).unwrap().len(), u);
        assert_eq!(noncrossing_matchings(2 * d - 2).len(), u);
    }
}

#[test]
fn ballot_dictionary_is_a_bijection() {
    for d in 2..=6 {
        let mut m: Vec<_> = ballot_sequences(d).unwrap().iter().map(|s| ballot_to_matching(s).unwrap()).collect();
        m.sort();
        assert_eq!(m, noncrossing_matchings(2 * d - 2));
    }
}

fn content_strategy() -> impl Strategy<Value = (Vec<usize>, usize)> {
    (2usize..=5).prop_flat_map(|d| {
        let all: Vec<Vec<usize>> = ContentVector::all(d).iter().map(|c| c.entries().to_vec()).collect();
        (proptest::sample::select(all), Just(d))
    })
}

proptest! {
    #[test]
    fn kostka_is_permutation_invariant((a, d) in content_strategy(), seed in any::<u64>()) {
        let mut p = a.clone();
        let n = p.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            p.swap(i, (s >> 33) as usize % (i + 1));
        }
        let c = ContentVector::new(a, d).unwrap();
        let q = ContentVector::new(p, d).unwrap();
        prop_assert_eq!(kostka(&c), kostka(&q));
    }

    #[test]
    fn tableaux_are_semistandard_with_the_content((a, d) in content_strategy()) {
        let c = ContentVector::new(a.clone(), d).unwrap();
        let t = enumerate_ssyt(&c);
        prop_assert_eq!(t.len() as u64, count_nets_multiplicity(&c));
        for tab in t {
            prop_assert!(tab.is_semistandard());
            prop_assert_eq!(tab.content(a.len()), a.clone());
        }
    }
}
