//! Counting primitives: multinomial coefficients, compositions, multiset
//! permutations and multinomial point masses.

use num_bigint::BigUint;
use num_traits::One;

use crate::weight::Weight;

/// `(sum x)! / prod(x_i!)` in arbitrary precision. A matrix is passed as the
/// flat list of its entries.
pub fn multinomial_coefficient(x: &[u32]) -> BigUint {
    // Product of binomials C(s_1, x_1) C(s_2, x_2) ... with running sums s_k.
    let mut result = BigUint::one();
    let mut running: u64 = 0;
    for &xi in x {
        for step in 1..=u64::from(xi) {
            running += 1;
            result *= running;
            result /= step;
        }
    }
    result
}

/// Every vector of length `parts` with nonnegative entries summing to `n`,
/// skipping vectors that put anything into a part whose `allowed` flag is false.
/// Lexicographically decreasing in the first coordinate.
pub fn compositions(n: u32, allowed: &[bool]) -> Vec<Vec<u32>> {
    let parts = allowed.len();
    let mut out = Vec::new();
    if parts == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut current = vec![0u32; parts];
    fill(n, 0, allowed, &mut current, &mut out);
    out
}

fn fill(remaining: u32, idx: usize, allowed: &[bool], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let parts = allowed.len();
    if idx + 1 == parts {
        if remaining == 0 || allowed[idx] {
            cur[idx] = remaining;
            out.push(cur.clone());
            cur[idx] = 0;
        }
        return;
    }
    let hi = if allowed[idx] { remaining } else { 0 };
    for v in (0..=hi).rev() {
        cur[idx] = v;
        fill(remaining - v, idx + 1, allowed, cur, out);
    }
    cur[idx] = 0;
}

/// Rearranges `v` into the next lexicographic permutation; false at the last one.
pub fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All distinct orderings of a multiset, starting from its sorted form.
pub fn distinct_permutations<T: Ord + Clone>(items: &[T]) -> Vec<Vec<T>> {
    let mut v = items.to_vec();
    v.sort();
    let mut out = vec![v.clone()];
    while next_permutation(&mut v) {
        out.push(v.clone());
    }
    out
}

/// Point mass of `Multi(sum(counts), probs)` at `counts`.
pub fn multinomial_pmf<W: Weight>(counts: &[u32], probs: &[W]) -> W {
    let mut mass = W::from_count(&multinomial_coefficient(counts));
    for (&c, q) in counts.iter().zip(probs) {
        if c > 0 {
            mass = mass * q.powu(c);
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn multinomial_examples() {
        assert_eq!(multinomial_coefficient(&[0, 0]), big(1));
        assert_eq!(multinomial_coefficient(&[2, 1]), big(3));
        // 2x2 matrix [[1,1],[0,1]] flattened
        assert_eq!(multinomial_coefficient(&[1, 1, 0, 1]), big(6));
        assert_eq!(multinomial_coefficient(&[]), big(1));
    }

    #[test]
    fn multinomial_does_not_overflow() {
        // 40! / (20! 20!) = C(40, 20)
        assert_eq!(
            multinomial_coefficient(&[20, 20]),
            big(137_846_528_820)
        );
        let huge = multinomial_coefficient(&[30, 30, 30]);
        assert!(huge.bits() > 64);
    }

    #[test]
    fn compositions_enumerate_and_respect_mask() {
        let all = compositions(3, &[true, true, true]);
        assert_eq!(all.len(), 10);
        assert!(all.iter().all(|c| c.iter().sum::<u32>() == 3));
        let masked = compositions(2, &[true, false, true]);
        assert_eq!(masked, vec![vec![2, 0, 0], vec![1, 0, 1], vec![0, 0, 2]]);
        assert_eq!(compositions(0, &[false, false]), vec![vec![0, 0]]);
        assert!(compositions(1, &[false, false]).is_empty());
    }

    #[test]
    fn permutations_of_multiset() {
        let p = distinct_permutations(&[1, 1, 2]);
        assert_eq!(p, vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]);
        assert_eq!(distinct_permutations::<u8>(&[]).len(), 1);
    }

    #[test]
    fn multinomial_pmf_sums_to_one() {
        let q = [0.2, 0.5, 0.3];
        let total: f64 = compositions(4, &[true; 3])
            .iter()
            .map(|c| multinomial_pmf(c, &q))
            .sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn permutation_count_is_multinomial(counts in prop::collection::vec(0u32..4, 1..4)) {
            let items: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(j, &c)| std::iter::repeat_n(j, c as usize))
                .collect();
            let n = distinct_permutations(&items).len();
            prop_assert_eq!(BigUint::from(n), multinomial_coefficient(&counts));
        }

        #[test]
        fn coefficient_is_symmetric(mut counts in prop::collection::vec(0u32..6, 0..5)) {
            let a = multinomial_coefficient(&counts);
            counts.reverse();
            prop_assert_eq!(a, multinomial_coefficient(&counts));
        }
    }
}
