//! Kuhn–Munkres assignment on a similarity matrix.
//!
//! The solver itself runs the O(n³) shortest-augmenting-path formulation on
//! a square cost matrix; rectangular inputs are padded with zero-similarity
//! rows or columns.

/// Maximum-similarity one-to-one assignment.
///
/// `sim[i][j]` is the similarity of row `i` to column `j` (any finite
/// values). Returns the total similarity of the best assignment and, per
/// row, the matched column (`None` for padded matches).
pub fn max_assignment(sim: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    let n = rows.max(cols);

    // Convert to min-cost over a padded square matrix.
    let mut max_sim = f64::NEG_INFINITY;
    for row in sim {
        assert_eq!(row.len(), cols, "similarity matrix is ragged");
        for &v in row {
            assert!(v.is_finite(), "non-finite similarity {v}");
            max_sim = max_sim.max(v);
        }
    }
    let max_sim = max_sim.max(0.0);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_sim - sim[i][j]
        } else {
            max_sim // similarity 0 for padding
        }
    };

    // Shortest augmenting path with potentials; 1-based helper arrays.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = matched_row[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assignment[i - 1] = Some(j - 1);
            total += sim[i - 1][j - 1];
        }
    }
    (total, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Factorial search over all row-to-column injections.
    pub(crate) fn brute_force_max(sim: &[Vec<f64>]) -> f64 {
        let rows = sim.len();
        let cols = sim.first().map_or(0, Vec::len);
        fn recurse(sim: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == sim.len() {
                return 0.0;
            }
            // Option: leave this row unmatched.
            let mut best = recurse(sim, row + 1, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    let v = sim[row][j] + recurse(sim, row + 1, used);
                    used[j] = false;
                    best = best.max(v);
                }
            }
            best
        }
        if rows == 0 || cols == 0 {
            return 0.0;
        }
        recurse(sim, 0, &mut vec![false; cols])
    }

    #[test]
    fn diagonal_preferred() {
        let sim = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let (total, assignment) = max_assignment(&sim);
        assert_eq!(total, 3.0);
        assert_eq!(assignment, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn rectangular_padding() {
        let sim = vec![vec![0.2, 0.9, 0.1]];
        let (total, assignment) = max_assignment(&sim);
        assert!((total - 0.9).abs() < 1e-12);
        assert_eq!(assignment, vec![Some(1)]);
    }

    #[test]
    fn greedy_is_suboptimal_here() {
        // Greedy picks (0,0)=0.9 then (1,1)=0.1 = 1.0; optimal crosses: 1.5.
        let sim = vec![vec![0.9, 0.8], vec![0.7, 0.1]];
        let (total, _) = max_assignment(&sim);
        assert!((total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=5);
            let sim: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let (total, _) = max_assignment(&sim);
            let expected = brute_force_max(&sim);
            assert!(
                (total - expected).abs() < 1e-9,
                "hungarian {total} vs brute force {expected} on {sim:?}"
            );
        }
    }
}
