//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here is deterministic: single-threaded pure-Rust kernels with a
//! fixed operation order, so repeated runs produce bit-identical results.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Symmetrizes a square matrix: `(A + A^T) / 2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    let d = a.nrows();
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    out
}

/// Frobenius norm.
pub fn frob(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Returns `None` when the factorization fails (matrix not SPD).
pub fn inv_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.clone().cholesky()?;
    Some(chol.inverse())
}

/// Log-determinant of an SPD matrix via Cholesky.
pub fn logdet_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let v = l[(i, i)];
        if v <= 0.0 || !v.is_finite() {
            return None;
        }
        acc += v.ln();
    }
    Some(2.0 * acc)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (ties broken by original position, so the output is
/// reproducible). Returns `(values, vectors)` with eigenvectors as columns.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = a.nrows();
    let eig = sym_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(d, d);
    for (k, &idx) in order.iter().enumerate() {
        let v = eig.eigenvalues[idx];
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite eigenvalue".into()));
        }
        values[k] = v;
        vectors.set_column(k, &eig.eigenvectors.column(idx));
    }
    Ok((values, vectors))
}

// Padé-13 coefficients for the scaling-and-squaring matrix exponential
// (Higham 2005). Degree 13 is used unconditionally; the scaling step brings
// the 1-norm under `THETA_13` first.
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA_13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::Parameter(format!(
            "expm needs a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "expm input contains non-finite entries".into(),
        ));
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);

    let ident = DMatrix::<f64>::identity(d, d);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE_13;

    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &ident;
    let u = &scaled * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &ident;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut exp = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("expm Padé solve failed".into()))?;
    for _ in 0..s {
        exp = &exp * &exp;
    }
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        let e = expm(&z).unwrap();
        assert_abs_diff_eq!(e, DMatrix::identity(4, 4), epsilon = 1e-14);
    }

    #[test]
    fn expm_diagonal_matches_scalar_exp() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -1.7, 2.5]));
        let e = expm(&a).unwrap();
        for (i, x) in [0.3f64, -1.7, 2.5].iter().enumerate() {
            assert_abs_diff_eq!(e[(i, i)], x.exp(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(e[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_nilpotent_truncates_series() {
        // For N strictly upper triangular 2x2, exp(N) = I + N exactly.
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&n).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]);
        assert_abs_diff_eq!(e, expected, epsilon = 1e-13);
    }

    #[test]
    fn expm_symmetric_matches_eigen_reconstruction() {
        // Closed form for [[0,1],[1,0]]: [[cosh 1, sinh 1], [sinh 1, cosh 1]].
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = expm(&a).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], 1f64.cosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(e[(0, 1)], 1f64.sinh(), epsilon = 1e-12);

        // Larger symmetric case against Q exp(Λ) Q^T.
        let m = sym_part(&DMatrix::from_fn(6, 6, |i, j| {
            ((i * 7 + j * 3) % 11) as f64 / 3.0
        }));
        let (vals, vecs) = sym_eigen_sorted(&m).unwrap();
        let recon = &vecs * DMatrix::from_diagonal(&vals.map(f64::exp)) * vecs.transpose();
        assert_abs_diff_eq!(expm(&m).unwrap(), recon, epsilon = 1e-9);
    }

    #[test]
    fn expm_inverse_property() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i as f64) - (j as f64)) / 4.0);
        let e = expm(&a).unwrap();
        let e_neg = expm(&(-&a)).unwrap();
        assert_abs_diff_eq!(&e * &e_neg, DMatrix::identity(5, 5), epsilon = 1e-11);
    }

    #[test]
    fn eigen_sorted_descending_and_reconstructs() {
        let m = sym_part(&DMatrix::from_fn(5, 5, |i, j| ((i + 2 * j) % 7) as f64));
        let (vals, vecs) = sym_eigen_sorted(&m).unwrap();
        for k in 1..vals.len() {
            assert!(vals[k - 1] >= vals[k]);
        }
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_abs_diff_eq!(recon, m, epsilon = 1e-10);
    }

    #[test]
    fn spd_helpers_roundtrip() {
        let m = {
            let b = DMatrix::from_fn(4, 4, |i, j| ((i * 3 + j) % 5) as f64 / 5.0);
            &b * b.transpose() + DMatrix::identity(4, 4)
        };
        let inv = inv_spd(&m).unwrap();
        assert_abs_diff_eq!(&m * &inv, DMatrix::identity(4, 4), epsilon = 1e-12);
        let ld = logdet_spd(&m).unwrap();
        assert_abs_diff_eq!(ld, m.determinant().ln(), epsilon = 1e-10);
        assert!(inv_spd(&DMatrix::zeros(3, 3)).is_none());
    }
}
