//! Minimum-cost perfect matching on a square cost matrix (Hungarian method,
//! shortest augmenting paths with row/column potentials, O(n³)).

use crate::{Result, TrackingError};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

pub fn hungarian_assign(matrix: &[Vec<f64>]) -> Result<Assignment> {
    let n = matrix.len();
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(TrackingError::BadMatrix(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(TrackingError::BadMatrix(format!("row {i} has a non-finite entry")));
        }
    }
    if n == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), cost: 0.0 });
    }

    // 1-based arrays; index 0 is the virtual root of each augmenting search.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = matrix[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let cost = row_to_col.iter().enumerate().map(|(i, &j)| matrix[i][j]).sum();
    Ok(Assignment { row_to_col, cost })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all permutations (Heap's algorithm).
    pub(crate) fn brute_force_min(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[i][j]).sum::<f64>();
        let mut best = cost(&perm);
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(cost(&perm));
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
    fn identity_favoring_matrix() {
        let m: Vec<Vec<f64>> =
            (0..4).map(|i| (0..4).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        let a = hungarian_assign(&m).unwrap();
        assert_eq!(a.row_to_col, vec![0, 1, 2, 3]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn single_entry() {
        let a = hungarian_assign(&[vec![2.5]]).unwrap();
        assert_eq!(a.row_to_col, vec![0]);
        assert_eq!(a.cost, 2.5);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(hungarian_assign(&[vec![1.0, 2.0]]).is_err());
        assert!(hungarian_assign(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn brute_force_oracle_counts_all_720_permutations() {
        // Sanity check of the oracle itself on a 6x6 matrix where only one
        // permutation has zero cost.
        let m: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| if j == (i + 2) % 6 { 0.0 } else { 1.0 + (i * j) as f64 }).collect())
            .collect();
        assert_eq!(brute_force_min(&m), 0.0);
        assert_eq!(hungarian_assign(&m).unwrap().row_to_col, vec![2, 3, 4, 5, 0, 1]);
    }

    proptest! {
        #[test]
        fn matches_permutation_brute_force(
            n in 1usize..=7,
            seed in proptest::collection::vec(-10.0f64..10.0, 49),
        ) {
            let m: Vec<Vec<f64>> = (0..n).map(|i| seed[i * 7..i * 7 + n].to_vec()).collect();
            let a = hungarian_assign(&m).unwrap();
            let mut cols = a.row_to_col.clone();
            cols.sort_unstable();
            prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
            prop_assert!((a.cost - brute_force_min(&m)).abs() < 1e-9);
        }
    }
}
