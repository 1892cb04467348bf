//! Dense Hermitian eigensolver for the small (≤ 16×16) matrices produced by
//! the spin Hamiltonians.
//!
//! Cyclic Jacobi with complex rotations. Convergence is declared when the
//! off-diagonal Frobenius norm falls below 1e-12·‖H‖_F.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const CONVERGENCE_FACTOR: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Largest relative deviation from Hermiticity, max|a_ij - conj(a_ji)| / ‖H‖_F.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let norm = frobenius(m).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / norm
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn off_diagonal_norm(m: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                s += m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
///
/// Rejects inputs whose Hermiticity defect exceeds `1e-10` relative.
pub fn eigh(m: &CMatrix) -> Result<(DVector<f64>, CMatrix)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let defect = hermiticity_defect(m);
    if defect > 1e-10 {
        return Err(Error::NotHermitian {
            asymmetry: defect,
            tolerance: 1e-10,
        });
    }

    let mut a = m.clone();
    // Work on the exactly Hermitian average so roundoff in the input cannot
    // leak into complex diagonal entries.
    for i in 0..n {
        for j in 0..n {
            let avg = 0.5 * (a[(i, j)] + m[(j, i)].conj());
            a[(i, j)] = avg;
        }
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }

    let mut v = CMatrix::identity(n, n);
    let norm = frobenius(&a).max(f64::MIN_POSITIVE);
    let threshold = CONVERGENCE_FACTOR * norm;

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > threshold {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::EigensolverDidNotConverge {
                residual: off_diagonal_norm(&a) / norm,
                sweeps,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    // Sort ascending and fix the eigenvector phase: largest-magnitude
    // component made real and positive.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());

    let mut values = DVector::zeros(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[(src, src)].re;
        let col = v.column(src);
        let (kmax, _) = col
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.norm_sqr().partial_cmp(&y.norm_sqr()).unwrap())
            .unwrap();
        let pivot = col[kmax];
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for r in 0..n {
            vectors[(r, dst)] = col[r] * phase;
        }
    }
    Ok((values, vectors))
}

/// One complex Jacobi rotation zeroing a[(p, q)].
fn jacobi_rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // theta diagonalises the 2x2 block [[app, r],[r, aqq]] after the phase
    // is absorbed into column q.
    let theta = 0.5 * (2.0 * r).atan2(aqq - app);
    let c = theta.cos();
    let s_mag = theta.sin();
    let s = phase * s_mag;

    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * s.conj();
        a[(k, q)] = akp * s + akq * c;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * s;
        a[(q, k)] = apk * s.conj() + aqk * c;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * s.conj();
        v[(k, q)] = vkp * s + vkq * c;
    }
}

/// Max residual ‖H·v − λ·v‖ over all eigenpairs.
pub fn residual(m: &CMatrix, values: &DVector<f64>, vectors: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..values.len() {
        let v = vectors.column(k);
        let hv = m * v;
        let mut s = 0.0;
        for r in 0..m.nrows() {
            s += (hv[r] - v[r] * Complex64::new(values[k], 0.0)).norm_sqr();
        }
        worst = worst.max(s.sqrt());
    }
    worst
}

/// Max deviation of Vᴴ·V from the identity.
pub fn orthonormality_defect(vectors: &CMatrix) -> f64 {
    let n = vectors.ncols();
    let gram = vectors.adjoint() * vectors;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(expect, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(n: usize, f: impl Fn(usize, usize) -> Complex64) -> CMatrix {
        CMatrix::from_fn(n, n, f)
    }

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let diag = [1e9, 2e9, 3e9];
        let m = cm(3, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let (w, v) = eigh(&m).unwrap();
        for k in 0..3 {
            assert!((w[k] - diag[k]).abs() < 1e-3);
        }
        assert!(orthonormality_defect(&v) < 1e-12);
    }

    #[test]
    fn symmetric_off_diagonal_pair() {
        // [[0, a],[a, 0]] -> eigenvalues ±a, eigenvectors (1, ∓1)/√2.
        let a = 7.5e8;
        let m = cm(2, |i, j| {
            if i != j {
                Complex64::new(a, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let (w, v) = eigh(&m).unwrap();
        assert!((w[0] + a).abs() < 1e-3);
        assert!((w[1] - a).abs() < 1e-3);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[(0, 1)].re - inv_sqrt2).abs() < 1e-10);
        assert!((v[(1, 1)].re - inv_sqrt2).abs() < 1e-10);
        assert!((v[(0, 0)].norm() - inv_sqrt2).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = cm(2, |i, j| Complex64::new((i + 2 * j) as f64, 0.0));
        assert!(matches!(eigh(&m), Err(Error::NotHermitian { .. })));
    }

    /// Characteristic-polynomial/bisection oracle for small Hermitian
    /// matrices, independent of the Jacobi path: eigenvalues are the roots of
    /// det(H − λI), located by sign changes of the determinant and refined by
    /// bisection.
    fn charpoly_eigenvalues(m: &CMatrix, lo: f64, hi: f64) -> Vec<f64> {
        let n = m.nrows();
        let det = |lambda: f64| -> f64 {
            let shifted = m - CMatrix::identity(n, n) * Complex64::new(lambda, 0.0);
            shifted.determinant().re
        };
        let grid = 20_000;
        let mut roots = Vec::new();
        let mut prev = det(lo);
        for k in 1..=grid {
            let x = lo + (hi - lo) * k as f64 / grid as f64;
            let cur = det(x);
            if prev == 0.0 {
                roots.push(lo + (hi - lo) * (k - 1) as f64 / grid as f64);
            } else if prev * cur < 0.0 {
                let (mut a, mut b) = (lo + (hi - lo) * (k - 1) as f64 / grid as f64, x);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if det(a) * det(mid) <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = cur;
        }
        roots
    }

    #[test]
    fn matches_charpoly_bisection_oracle_on_4x4() {
        // Deterministic pseudo-random Hermitian 4x4 matrices.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..10 {
            let mut m = CMatrix::zeros(4, 4);
            for i in 0..4 {
                m[(i, i)] = Complex64::new(4.0 * next(), 0.0);
                for j in (i + 1)..4 {
                    let z = Complex64::new(next(), next());
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let (w, v) = eigh(&m).unwrap();
            let bound = frobenius(&m) + 1.0;
            let oracle = charpoly_eigenvalues(&m, -bound, bound);
            assert_eq!(oracle.len(), 4, "oracle must isolate all four roots");
            for k in 0..4 {
                assert!(
                    (w[k] - oracle[k]).abs() < 1e-6 * bound,
                    "eigenvalue {k}: jacobi {} vs oracle {}",
                    w[k],
                    oracle[k]
                );
            }
            assert!(residual(&m, &w, &v) < 1e-9 * frobenius(&m).max(1.0));
            assert!(orthonormality_defect(&v) < 1e-10);
        }
    }

    #[test]
    fn trace_is_preserved() {
        let m = cm(5, |i, j| {
            if i == j {
                Complex64::new(i as f64 + 1.0, 0.0)
            } else {
                Complex64::new(0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64))
            }
        });
        let (w, _) = eigh(&m).unwrap();
        let trace: f64 = (0..5).map(|i| m[(i, i)].re).sum();
        let sum: f64 = w.iter().sum();
        assert!((trace - sum).abs() <= 1e-9 * trace.abs().max(1.0));
    }
}
