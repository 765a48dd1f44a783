//! Dense complex matrix helpers shared by the operator modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn diag(entries: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(entries))
}

pub fn real_diag(entries: &[f64]) -> CMatrix {
    let e: Vec<Complex64> = entries.iter().map(|&x| c(x, 0.0)).collect();
    diag(&e)
}

/// Submatrix on the given rows and columns.
pub fn select(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Spectral norm. The matrix is split into the connected components of its
/// nonzero pattern first, so diagonal and block-diagonal inputs are handled
/// block by block (and 1x1 blocks exactly).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let (r, cdim) = m.shape();
    if r == 0 || cdim == 0 {
        return 0.0;
    }
    // Bipartite components: rows 0..r, columns r..r+c.
    let mut parent: Vec<usize> = (0..r + cdim).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while p[root] != root {
            root = p[root];
        }
        let mut cur = x;
        while p[cur] != root {
            let next = p[cur];
            p[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..r {
        for j in 0..cdim {
            if m[(i, j)] != ZERO {
                let (a, b) = (find(&mut parent, i), find(&mut parent, r + j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for x in 0..r + cdim {
        let root = find(&mut parent, x);
        let pos = match groups.iter().position(|g| g.0 == root) {
            Some(p) => p,
            None => {
                groups.push((root, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        if x < r {
            groups[pos].1.push(x);
        } else {
            groups[pos].2.push(x - r);
        }
    }
    groups
        .iter()
        .filter(|g| !g.1.is_empty() && !g.2.is_empty())
        .map(|(_, rows, cols)| {
            if rows.len() == 1 && cols.len() == 1 {
                m[(rows[0], cols[0])].norm()
            } else {
                let block = select(m, rows, cols);
                block.singular_values().max()
            }
        })
        .fold(0.0, f64::max)
}

/// Column-major vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// `tr(A* B)`.
pub fn trace_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_norm_is_exact() {
        for n in 1..=8 {
            let d: Vec<f64> = (1..=n).map(|k| k as f64).collect();
            assert_eq!(spectral_norm(&real_diag(&d)), n as f64);
        }
    }

    #[test]
    fn dense_norm_matches_svd() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let expected = m.clone().singular_values().max();
        assert!((spectral_norm(&m) - expected).abs() < 1e-12);
        assert_eq!(spectral_norm(&CMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn vectorize_round_trip() {
        let m = CMatrix::from_fn(3, 3, |i, j| c(i as f64, j as f64));
        assert_eq!(unvectorize(&vectorize(&m), 3), m);
    }
}
