/// Solution of a (possibly singular) Gram system.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSolution {
    /// Zero at dropped indices.
    pub coefficients: Vec<f64>,
    pub dropped: Vec<usize>,
}

/// Solves `G t = rhs` for a symmetric positive semidefinite `n x n` matrix
/// stored row-major.
///
/// Cholesky without pivoting, visiting indices in ascending order: an index
/// whose Schur-complement pivot falls below `rank_tol * ||G||_F` is dropped,
/// so the kept set is the lexicographically first maximal independent subset.
pub fn solve_gram(gram: &[f64], n: usize, rhs: &[f64], rank_tol: f64) -> GramSolution {
    assert_eq!(gram.len(), n * n);
    assert_eq!(rhs.len(), n);
    let frob = gram.iter().map(|g| g * g).sum::<f64>().sqrt();
    let threshold = rank_tol * frob;

    let mut kept: Vec<usize> = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    // Lower factor over the kept indices, row k has k+1 entries.
    let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (k, &j) in kept.iter().enumerate() {
            let s: f64 = (0..k).map(|m| row[m] * l[k][m]).sum();
            row.push((gram[i * n + j] - s) / l[k][k]);
        }
        let pivot = gram[i * n + i] - row.iter().map(|v| v * v).sum::<f64>();
        if pivot <= threshold || !pivot.is_finite() {
            dropped.push(i);
            continue;
        }
        row.push(pivot.sqrt());
        l.push(row);
        kept.push(i);
    }

    let m = kept.len();
    let mut z = vec![0.0; m];
    for k in 0..m {
        let s: f64 = (0..k).map(|j| l[k][j] * z[j]).sum();
        z[k] = (rhs[kept[k]] - s) / l[k][k];
    }
    let mut t = vec![0.0; m];
    for k in (0..m).rev() {
        let s: f64 = (k + 1..m).map(|j| l[j][k] * t[j]).sum();
        t[k] = (z[k] - s) / l[k][k];
    }

    let mut coefficients = vec![0.0; n];
    for (k, &i) in kept.iter().enumerate() {
        coefficients[i] = t[k];
    }
    GramSolution {
        coefficients,
        dropped,
    }
}
