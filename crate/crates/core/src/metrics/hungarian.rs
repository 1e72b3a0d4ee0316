//! Exact minimum-cost assignment on square matrices.
//!
//! Shortest augmenting paths with row and column potentials, O(n³).

/// Result of [`hungarian_assign`]: `permutation[row] = column`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub permutation: Vec<usize>,
    /// `Σ cost[i][permutation[i]]`, summed in row order.
    pub total_cost: f64,
}

/// Solves the linear assignment problem for an `n × n` cost matrix given as
/// rows. Costs must be finite.
///
/// ```
/// use boxdiff::metrics::hungarian_assign;
///
/// let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
/// let a = hungarian_assign(&cost);
/// assert_eq!(a.permutation, vec![1, 0, 2]);
/// assert_eq!(a.total_cost, 5.0);
/// ```
pub fn hungarian_assign<R: AsRef<[f64]>>(cost: &[R]) -> Assignment {
    let n = cost.len();
    debug_assert!(
        cost.iter().all(|r| r.as_ref().len() == n),
        "cost matrix must be square"
    );
    if n == 0 {
        return Assignment {
            permutation: Vec::new(),
            total_cost: 0.0,
        };
    }
    // 1-based indices; column 0 is the virtual source of each augmentation.
    let mut row_pot = vec![0.0f64; n + 1];
    let mut col_pot = vec![0.0f64; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_match[0] = row;
        let mut col0 = 0usize;
        min_slack.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[col0] = true;
            let r0 = col_match[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            let cost_row = cost[r0 - 1].as_ref();
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost_row[col - 1] - row_pot[r0] - col_pot[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    row_pot[col_match[col]] += delta;
                    col_pot[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if col_match[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            col_match[col0] = col_match[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut permutation = vec![0usize; n];
    for col in 1..=n {
        permutation[col_match[col] - 1] = col - 1;
    }
    let total_cost = assignment_cost(cost, &permutation);
    Assignment {
        permutation,
        total_cost,
    }
}

/// `Σ cost[i][perm[i]]` in row order.
pub fn assignment_cost<R: AsRef<[f64]>>(cost: &[R], perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .fold(0.0, |acc, (i, &j)| acc + cost[i].as_ref()[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over all permutations (Heap's algorithm).
    fn brute_force(cost: &[[f64; 8]; 8]) -> f64 {
        let mut perm: Vec<usize> = (0..8).collect();
        let mut best = assignment_cost(cost, &perm);
        let mut c = [0usize; 8];
        let mut i = 0;
        while i < 8 {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(assignment_cost(cost, &perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    #[test]
    fn identity_dominant() {
        let cost: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..8).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        let a = hungarian_assign(&cost);
        assert_eq!(a.permutation, (0..8).collect::<Vec<_>>());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn reversal() {
        let cost: Vec<Vec<f64>> = (0..8)
            .map(|i: i32| (0..8).map(|j: i32| (i - (7 - j)).abs() as f64).collect())
            .collect();
        let a = hungarian_assign(&cost);
        assert_eq!(a.permutation, (0..8).rev().collect::<Vec<_>>());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(hungarian_assign::<Vec<f64>>(&[]).total_cost, 0.0);
        let a = hungarian_assign(&[vec![3.5]]);
        assert_eq!(a.permutation, vec![0]);
        assert_eq!(a.total_cost, 3.5);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut cost = [[0.0; 8]; 8];
            for row in cost.iter_mut() {
                for c in row.iter_mut() {
                    *c = rng.random_range(0.0..10.0);
                }
            }
            let a = hungarian_assign(&cost);
            assert_eq!(a.total_cost, brute_force(&cost));
            let identity: Vec<usize> = (0..8).collect();
            assert!(a.total_cost <= assignment_cost(&cost, &identity));
            let mut seen = a.permutation.clone();
            seen.sort_unstable();
            assert_eq!(seen, identity);
        }
    }

    #[test]
    fn integer_costs_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut cost = [[0.0; 8]; 8];
            for row in cost.iter_mut() {
                for c in row.iter_mut() {
                    *c = rng.random_range(0..4) as f64;
                }
            }
            assert_eq!(hungarian_assign(&cost).total_cost, brute_force(&cost));
        }
    }
}
