//! Dense linear-algebra helpers shared by the kernel and MGF engines.
//!
//! Everything here operates on `nalgebra::DMatrix<f64>` at desk scale
//! (state spaces of at most a few hundred states), so plain LU and full
//! eigendecompositions are the right tools; no sparsity is exploited.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest real part among eigenvalues of a general real matrix.
///
/// Used for the transience check: a killed generator is transient iff its
/// spectral abscissa is strictly negative.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue modulus of a general real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solve `a x = I`, i.e. a dense inverse via LU with partial pivoting.
pub fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix in inversion".into()))
}

/// Matrix exponential `exp(a)` by Padé(13) scaling and squaring.
///
/// Constants are the degree-13 coefficients from Higham's 2005 algorithm;
/// no lower-degree selection is attempted because inputs here are small and
/// well scaled (generators at moderate times).
pub fn expm_pade(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];

    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &id;
    let u = &a * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;

    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Pade denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Matrix exponential `exp(a)` where `d^{1/2} a d^{-1/2}` is symmetric for the
/// given positive diagonal `d` (detailed balance). Exact spectral route.
pub fn expm_reversible(a: &DMatrix<f64>, d: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let sqrt_d: Vec<f64> = d.iter().map(|&x| x.sqrt()).collect();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = sqrt_d[i] * a[(i, j)] / sqrt_d[j];
        }
    }
    // Enforce exact symmetry before the symmetric eigensolver; detailed
    // balance holds to 1e-12 so this averages away only rounding noise.
    let s_sym = (&s + s.transpose()) * 0.5;
    let eig = s_sym.symmetric_eigen();
    let mut out = DMatrix::<f64>::zeros(n, n);
    let v = &eig.eigenvectors;
    let exp_l: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.exp()).collect();
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[(i, k)] * exp_l[k] * v[(j, k)];
            }
            out[(i, j)] = acc * sqrt_d[j] / sqrt_d[i];
        }
    }
    Ok(out)
}

/// Symmetric positive-semidefinite square root.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything below `-tol` is a
/// genuine failure of positive semidefiniteness and is reported as such.
pub fn psd_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut lam = eig.eigenvalues.clone();
    for l in lam.iter_mut() {
        if *l < -tol {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite: eigenvalue {l:.3e} < -{tol:.1e}"
            )));
        }
        *l = l.max(0.0).sqrt();
    }
    let n = a.nrows();
    let v = &eig.eigenvectors;
    let mut out = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[(i, k)] * lam[k] * v[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Maximum absolute column sum (induced 1-norm).
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|x| x.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Largest absolute entry, used by the exact-equality test helpers.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().map(|x| x.abs()).fold(0.0, f64::max)
}
