//! Determinant-based generating functionals: the second analytic engine.
//!
//! Everything here is linear algebra over the full state space. For a kernel
//! matrix `C` and a diagonal load `Lambda = diag(lambda)`, the master formula
//! for a Gaussian field `G` with covariance `C` is
//!
//! ```text
//! E exp( sum_j lambda_j u_j G_j + lambda_j G_j^2 / 2 )
//!   = det(I - Lambda C)^{-1/2} exp( (u, Lambda Cbar Lambda u) / 2 ),
//! Cbar = (I - C Lambda)^{-1} C,
//! ```
//!
//! valid when the spectral radius of `C Lambda` is below one. The shifted
//! variant `E exp(sum lambda_j (G_j + u_j)^2 / 2)` carries an extra factor
//! `exp((u, Lambda u)/2)`. Bridge and started local-time transforms, the
//! inverse-local-time horizon transform, the excursion exponent, and the
//! interlacement ratio all reduce to entries or quadratic forms of the same
//! resolvent, or to the scalar series
//!
//! ```text
//! h(k) = (1, Lambda (C Lambda)^{k-1} 1),
//! ```
//!
//! summed with a rigorous geometric tail bound. None of this shares code
//! with the enumeration engines in [`crate::moments`], which is the point:
//! agreement between the two is a real check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{invert, one_norm, spectral_radius};
use crate::tol;

/// Per-state load vector `lambda`, forming `Lambda = diag(lambda)`.
#[derive(Debug, Clone)]
pub struct DiagonalLoad {
    lambda: DVector<f64>,
}

impl DiagonalLoad {
    pub fn new(lambda: DVector<f64>) -> Result<Self> {
        if lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("load entries must be finite".into()));
        }
        Ok(DiagonalLoad { lambda })
    }

    /// Uniform load `lambda` on every state.
    pub fn uniform(n: usize, lambda: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lambda))
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.len() == 0
    }

    /// `C Lambda` (columns of `C` scaled by the load).
    pub fn right_product(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = c.clone();
        for j in 0..out.ncols() {
            let s = self.lambda[j];
            for i in 0..out.nrows() {
                out[(i, j)] *= s;
            }
        }
        out
    }

    /// Ensure the series/determinant regime: spectral radius of `C Lambda`
    /// strictly below `1 - margin`.
    pub fn check_against(&self, c: &Kernel) -> Result<()> {
        if self.lambda.len() != c.len() {
            return Err(Error::Domain(format!(
                "load has {} entries for a kernel over {} states",
                self.lambda.len(),
                c.len()
            )));
        }
        let rho = spectral_radius(&self.right_product(c.matrix()));
        if rho >= 1.0 - tol::SPECTRAL_MARGIN {
            return Err(Error::Domain(format!(
                "load is not small enough: spectral radius of C*Lambda is {rho:.6}, needs < 1"
            )));
        }
        Ok(())
    }
}

/// The resolvent kernel `Cbar = (I - C Lambda)^{-1} C`.
pub fn cbar(c: &Kernel, load: &DiagonalLoad) -> Result<DMatrix<f64>> {
    load.check_against(c)?;
    let n = c.len();
    let cl = load.right_product(c.matrix());
    let inv = invert(&(DMatrix::identity(n, n) - cl))?;
    Ok(inv * c.matrix())
}

/// `E exp(sum_j lambda_j u_j G_j + lambda_j G_j^2/2)` (master formula).
/// `shift` is the vector `u`; pass zeros for the pure square transform.
pub fn gauss_square_mgf(c: &Kernel, load: &DiagonalLoad, shift: &DVector<f64>) -> Result<f64> {
    load.check_against(c)?;
    let n = c.len();
    if shift.len() != n {
        return Err(Error::Domain("shift dimension mismatch".into()));
    }
    let lam_c = left_product(load, c.matrix());
    let det = (DMatrix::<f64>::identity(n, n) - &lam_c).determinant();
    if det <= 0.0 {
        return Err(Error::Numerical(format!(
            "det(I - Lambda C) = {det:.3e} is not positive inside the admissible region"
        )));
    }
    let cb = cbar(c, load)?;
    let w = DVector::from_fn(n, |i, _| load.lambda()[i] * shift[i]);
    let quad = (w.transpose() * &cb * &w)[(0, 0)];
    Ok(det.powf(-0.5) * (quad / 2.0).exp())
}

/// `E exp(sum_j lambda_j (G_j + u_j)^2 / 2)`: the shifted-square transform,
/// the master formula times `exp((u, Lambda u)/2)`.
pub fn shifted_square_mgf(c: &Kernel, load: &DiagonalLoad, shift: &DVector<f64>) -> Result<f64> {
    let base = gauss_square_mgf(c, load, shift)?;
    let extra: f64 = (0..c.len())
        .map(|i| load.lambda()[i] * shift[i] * shift[i])
        .sum::<f64>()
        / 2.0;
    Ok(base * extra.exp())
}

/// Bridge transform `Q^{x1,x2}[exp(sum lambda_j L^j)] = Cbar(x1,x2)`.
/// Unnormalized: at zero load this is the total mass `u(x1,x2)`.
pub fn bridge_mgf(c: &Kernel, load: &DiagonalLoad, x1: usize, x2: usize) -> Result<f64> {
    Ok(cbar(c, load)?[(x1, x2)])
}

/// Started transform `P^{x1}[exp(sum lambda_j L^j)]`: the `x1` row sum of
/// `(I - C Lambda)^{-1}`.
pub fn start_mgf(c: &Kernel, load: &DiagonalLoad, x1: usize) -> Result<f64> {
    load.check_against(c)?;
    let n = c.len();
    let cl = load.right_product(c.matrix());
    let inv = invert(&(DMatrix::identity(n, n) - cl))?;
    Ok((0..n).map(|j| inv[(x1, j)]).sum())
}

/// Series term `((C Lambda)^k C)_{x1,x2}`: the order-`k` bridge moment
/// divided by `k!`. Used by the harness to compare the moment engine against
/// the resolvent term by term.
pub fn bridge_series_term(c: &Kernel, load: &DiagonalLoad, x1: usize, x2: usize, k: usize) -> f64 {
    let cl = load.right_product(c.matrix());
    let mut v: DVector<f64> = c.matrix().column(x2).into();
    for _ in 0..k {
        v = &cl * v;
    }
    v[x1]
}

/// Series term `sum_j ((C Lambda)^k)_{x1,j}`: the order-`k` started moment
/// divided by `k!`.
pub fn start_series_term(c: &Kernel, load: &DiagonalLoad, x1: usize, k: usize) -> f64 {
    let cl = load.right_product(c.matrix());
    let mut v = DVector::<f64>::from_element(c.len(), 1.0);
    for _ in 0..k {
        v = &cl * v;
    }
    v[x1]
}

/// `sum_{k>=0} w^T P^k v` with a rigorous geometric tail bound: once some
/// power satisfies `||P^r||_1 = q < 1`, the tail after the current term is at
/// most `||w||_inf ||P^N v||_1 (sum_{i<r} ||P^i||_1) / (1 - q)`; summation
/// stops when that drops below the series tolerance.
fn vector_series(p: &DMatrix<f64>, w: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let rho = spectral_radius(p);
    if rho >= 1.0 - tol::SPECTRAL_MARGIN {
        return Err(Error::Domain(format!(
            "series does not converge: spectral radius {rho:.6}"
        )));
    }
    // Find a contracting power and the norm partial sums for the bound.
    let mut pow = DMatrix::<f64>::identity(p.nrows(), p.ncols());
    let mut norm_sum = 0.0;
    let mut q = 1.0;
    for _ in 0..512 {
        norm_sum += one_norm(&pow);
        pow *= p;
        q = one_norm(&pow);
        if q < 1.0 {
            break;
        }
    }
    if q >= 1.0 {
        return Err(Error::Numerical(
            "no contracting power found within 512 steps".into(),
        ));
    }
    let w_inf = w.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    let mut cur = v.clone();
    let mut total = 0.0;
    for _ in 0..100_000 {
        total += w.dot(&cur);
        cur = p * cur;
        let cur_l1: f64 = cur.iter().map(|x| x.abs()).sum();
        if w_inf * cur_l1 * norm_sum / (1.0 - q) < tol::SERIES_TAIL {
            total += w.dot(&cur);
            return Ok(total);
        }
    }
    Err(Error::Numerical("series failed to meet tail bound".into()))
}

/// The scalar series `sum_{k>=1} h(k)` with
/// `h(k) = (1, Lambda (C Lambda)^{k-1} 1)`, summed to the series tolerance.
pub fn h_series_sum(c: &Kernel, load: &DiagonalLoad) -> Result<f64> {
    load.check_against(c)?;
    let cl = load.right_product(c.matrix());
    let w = load.lambda().clone();
    let ones = DVector::from_element(c.len(), 1.0);
    vector_series(&cl, &w, &ones)
}

/// Single series term `h(k)`, `k >= 1`.
pub fn h_term(c: &Kernel, load: &DiagonalLoad, k: usize) -> f64 {
    assert!(k >= 1);
    let cl = load.right_product(c.matrix());
    let mut v = DVector::<f64>::from_element(c.len(), 1.0);
    for _ in 0..k - 1 {
        v = &cl * v;
    }
    load.lambda().dot(&v)
}

/// Inverse-local-time horizon transform, resolvent form:
/// `E^{z0} exp(sum lambda_j L^j_{tau(t)})
///   = exp( t [ (1, Lambda 1) + (1, Lambda Cbar0 Lambda 1) ] )`
/// over the hitting kernel `C0 = u_{T0}`.
pub fn rayknight_mgf(c0: &Kernel, load: &DiagonalLoad, t: f64) -> Result<f64> {
    load.check_against(c0)?;
    let cb = cbar(c0, load)?;
    let lam1 = load.lambda().clone();
    let linear: f64 = lam1.sum();
    let quad = (lam1.transpose() * &cb * &lam1)[(0, 0)];
    Ok((t * (linear + quad)).exp())
}

/// Same transform through the `h`-series: `exp(t sum_{j>=1} h(j))`.
pub fn rayknight_mgf_series(c0: &Kernel, load: &DiagonalLoad, t: f64) -> Result<f64> {
    Ok((t * h_series_sum(c0, load)?).exp())
}

/// Excursion-measure exponent `n(exp(int L dnu) - 1) = sum_{j>=1} h(j)` for
/// an already-scaled load. Exponentiating `t` times this value reassembles
/// the inverse-local-time transform.
pub fn excursion_mgf_exponent(c0: &Kernel, load: &DiagonalLoad) -> Result<f64> {
    h_series_sum(c0, load)
}

/// Interlacement transform check: both sides of
/// `E exp(delta * occupation(nu))` for the level-`t` interlacement field.
///
/// Left: the Gaussian ratio, a shifted Wick-square transform over centered
/// squares, numerator with drift `sqrt(2t)`, denominator without. The Wick
/// centering constant `exp(-tr(Lambda C)/2)` is applied to both explicitly
/// and cancels in the ratio by construction, never by hand.
///
/// Right: `exp(t sum_{n>=1} (1, Lambda (C Lambda)^{n-1} 1))` with
/// `Lambda = delta * diag(nu)`, summed as a power series.
pub fn interlacement_mgf_check(
    u: &Kernel,
    nu: &DVector<f64>,
    t: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if nu.len() != u.len() {
        return Err(Error::Domain("nu dimension mismatch".into()));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("level t = {t} must be finite and >= 0")));
    }
    let load = DiagonalLoad::new(nu * delta)?;
    load.check_against(u)?;

    let n = u.len();
    let centering: f64 = (-(0..n)
        .map(|j| load.lambda()[j] * u.value(j, j))
        .sum::<f64>()
        / 2.0)
        .exp();
    let drift = DVector::from_element(n, (2.0 * t).sqrt());
    let zeros = DVector::zeros(n);
    let numerator = centering * shifted_square_mgf(u, &load, &drift)?;
    let denominator = centering * gauss_square_mgf(u, &load, &zeros)?;
    let lhs = numerator / denominator;

    let rhs = (t * h_series_sum(u, &load)?).exp();
    Ok((lhs, rhs))
}

/// `Lambda C` (rows of `C` scaled by the load).
fn left_product(load: &DiagonalLoad, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = c.clone();
    for i in 0..out.nrows() {
        let s = load.lambda()[i];
        for j in 0..out.ncols() {
            out[(i, j)] *= s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{killed_potential, potential, KernelKind};
    use crate::model::ChainModel;
    use crate::moments;
    use approx::assert_abs_diff_eq;

    fn fixture(name: &str) -> ChainModel {
        ChainModel::load(format!(
            "{}/../../fixtures/{name}",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap()
    }

    fn k2_u() -> Kernel {
        potential(&fixture("k2.json")).unwrap()
    }

    #[test]
    fn scalar_kernel_closed_forms() {
        let c = Kernel::from_matrix(
            KernelKind::AlphaPotential { alpha: 0.0 },
            vec!["s".into()],
            DMatrix::from_element(1, 1, 0.8),
        );
        let load = DiagonalLoad::uniform(1, 0.5).unwrap();
        let zero = DVector::zeros(1);
        // det form (1 - lambda c)^{-1/2}.
        assert_abs_diff_eq!(
            gauss_square_mgf(&c, &load, &zero).unwrap(),
            (1.0 - 0.5 * 0.8f64).powf(-0.5),
            epsilon = 1e-14
        );
        // Exponential-law transform 1/(1 - c lambda).
        assert_abs_diff_eq!(
            start_mgf(&c, &load, 0).unwrap(),
            1.0 / (1.0 - 0.8 * 0.5),
            epsilon = 1e-14
        );
    }

    #[test]
    fn all_engines_are_one_at_zero_load() {
        let u = k2_u();
        let load = DiagonalLoad::uniform(2, 0.0).unwrap();
        let zero = DVector::zeros(2);
        assert_eq!(gauss_square_mgf(&u, &load, &zero).unwrap(), 1.0);
        assert_eq!(start_mgf(&u, &load, 0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            bridge_mgf(&u, &load, 0, 1).unwrap(),
            u.value(0, 1),
            epsilon = 1e-14
        );
        let model = fixture("c3.json");
        let u0 = killed_potential(&model, 0).unwrap();
        let load3 = DiagonalLoad::uniform(3, 0.0).unwrap();
        assert_eq!(rayknight_mgf(&u0, &load3, 1.0).unwrap(), 1.0);
        assert_eq!(rayknight_mgf_series(&u0, &load3, 1.0).unwrap(), 1.0);
        assert_eq!(excursion_mgf_exponent(&u0, &load3).unwrap(), 0.0);
    }

    #[test]
    fn oversized_load_is_rejected() {
        let u = k2_u();
        // Largest eigenvalue of u is 1, so lambda = 1 sits on the boundary.
        let load = DiagonalLoad::uniform(2, 1.0).unwrap();
        assert!(load.check_against(&u).is_err());
        let load = DiagonalLoad::uniform(2, 0.9).unwrap();
        assert!(load.check_against(&u).is_ok());
    }

    #[test]
    fn determinant_matches_square_moment_taylor_series() {
        // Taylor in the load: E exp(sum lambda_j G_j^2/2) =
        // sum over multisets of prod lambda^m / prod m_i! * square moment.
        // Degree 10 keeps the truncation tail below 1e-6 relative at this
        // radius (0.3); degree 8 would leave ~4e-6.
        let u = k2_u();
        let load = DiagonalLoad::uniform(2, 0.3).unwrap();
        let zero = DVector::zeros(2);
        let exact = gauss_square_mgf(&u, &load, &zero).unwrap();
        let taylor = square_moment_taylor(&u, load.lambda(), 10);
        assert!(
            ((exact - taylor) / exact).abs() < 1e-6,
            "exact {exact}, taylor {taylor}"
        );
    }

    /// Truncated Taylor series of the square transform from the moment
    /// engine, by multiset enumeration over states.
    fn square_moment_taylor(u: &Kernel, lambda: &DVector<f64>, max_degree: usize) -> f64 {
        let n = u.len();
        let mut total = 0.0;
        // Multisets encoded as multiplicity vectors summing to <= max_degree.
        let mut mult = vec![0usize; n];
        loop {
            let degree: usize = mult.iter().sum();
            if degree <= max_degree {
                let mut coef = 1.0;
                let mut pts = Vec::new();
                for (j, &m) in mult.iter().enumerate() {
                    for i in 0..m {
                        coef *= lambda[j] / (i + 1) as f64;
                        pts.push(j);
                    }
                }
                if coef != 0.0 {
                    total += coef * moments::gauss_square_moment(u, &pts).unwrap();
                }
            }
            // Odometer with pruning: skip overfull prefixes quickly.
            let mut pos = 0;
            loop {
                if pos == n {
                    return total;
                }
                mult[pos] += 1;
                if mult.iter().sum::<usize>() <= max_degree {
                    break;
                }
                mult[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn bridge_series_terms_match_moment_engine() {
        let u = k2_u();
        let load = DiagonalLoad::new(DVector::from_vec(vec![0.2, 0.1])).unwrap();
        // Order-k moment of the loaded local time integral under the bridge,
        // via tuples of states, must equal k! * ((C Lambda)^k C)(x1,x2).
        for k in 0..=4usize {
            let mut moment = 0.0;
            let mut tuple = vec![0usize; k];
            loop {
                let mut w = 1.0;
                for &j in &tuple {
                    w *= load.lambda()[j];
                }
                moment += w * moments::lt_moment_bridge(&u, 0, 1, &tuple).unwrap();
                let mut pos = 0;
                loop {
                    if pos == k {
                        break;
                    }
                    tuple[pos] += 1;
                    if tuple[pos] < 2 {
                        break;
                    }
                    tuple[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let term = bridge_series_term(&u, &load, 0, 1, k);
            assert_abs_diff_eq!(moment / fact, term, epsilon = 1e-12);
        }
    }

    #[test]
    fn bridge_mgf_is_series_sum_and_symmetric() {
        let u = k2_u();
        let load = DiagonalLoad::new(DVector::from_vec(vec![0.2, 0.1])).unwrap();
        let closed = bridge_mgf(&u, &load, 0, 1).unwrap();
        let series: f64 = (0..60).map(|k| bridge_series_term(&u, &load, 0, 1, k)).sum();
        assert_abs_diff_eq!(closed, series, epsilon = 1e-12);
        assert_abs_diff_eq!(
            closed,
            bridge_mgf(&u, &load, 1, 0).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn start_mgf_matches_moment_series_terms() {
        let u = k2_u();
        let load = DiagonalLoad::new(DVector::from_vec(vec![0.2, 0.1])).unwrap();
        // Term-by-term: tuple sum of started moments / k! equals the series
        // term; then the closed form equals the summed series.
        for k in 0..=4usize {
            let mut moment = 0.0;
            let mut tuple = vec![0usize; k];
            loop {
                let mut w = 1.0;
                for &j in &tuple {
                    w *= load.lambda()[j];
                }
                moment += w * moments::lt_moment_start(&u, 0, &tuple).unwrap();
                let mut pos = 0;
                loop {
                    if pos == k {
                        break;
                    }
                    tuple[pos] += 1;
                    if tuple[pos] < 2 {
                        break;
                    }
                    tuple[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            assert_abs_diff_eq!(
                moment / fact,
                start_series_term(&u, &load, 0, k),
                epsilon = 1e-12
            );
        }
        let closed = start_mgf(&u, &load, 0).unwrap();
        let series: f64 = (0..60).map(|k| start_series_term(&u, &load, 0, k)).sum();
        assert_abs_diff_eq!(closed, series, epsilon = 1e-12);
    }

    #[test]
    fn rayknight_forms_agree() {
        let model = fixture("c3.json");
        let u0 = killed_potential(&model, 0).unwrap();
        let load = DiagonalLoad::new(DVector::from_vec(vec![0.0, 0.3, 0.3])).unwrap();
        for t in [0.0, 0.5, 1.0, 2.3] {
            let det_form = rayknight_mgf(&u0, &load, t).unwrap();
            let series_form = rayknight_mgf_series(&u0, &load, t).unwrap();
            assert_abs_diff_eq!(det_form, series_form, epsilon = 1e-10);
            // Excursion exponent reassembly.
            let exponent = excursion_mgf_exponent(&u0, &load).unwrap();
            assert_abs_diff_eq!(det_form, (t * exponent).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn log_determinant_equals_trace_series() {
        // -(1/2) log det(I - Lambda C) = (1/2) sum_k tr((C Lambda)^k) / k:
        // the determinant is the exponential of the loop trace series.
        let u = k2_u();
        let load = DiagonalLoad::new(DVector::from_vec(vec![0.3, 0.2])).unwrap();
        let zero = DVector::zeros(2);
        let log_mgf = gauss_square_mgf(&u, &load, &zero).unwrap().ln();
        let cl = load.right_product(u.matrix());
        let mut pow = cl.clone();
        let mut series = 0.0;
        for k in 1..200 {
            series += pow.trace() / k as f64;
            pow *= &cl;
        }
        assert_abs_diff_eq!(log_mgf, series / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn interlacement_sides_agree() {
        let u = k2_u();
        let nu = DVector::from_vec(vec![1.0, 1.0]);
        let (lhs, rhs) = interlacement_mgf_check(&u, &nu, 0.5, 0.2).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        // Degenerate parameters give 1 on both sides.
        let (l0, r0) = interlacement_mgf_check(&u, &nu, 0.0, 0.2).unwrap();
        assert_abs_diff_eq!(l0, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r0, 1.0, epsilon = 1e-14);
        let (l1, r1) = interlacement_mgf_check(&u, &nu, 0.7, 0.0).unwrap();
        assert_abs_diff_eq!(l1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r1, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_square_mgf_matches_shifted_moment_taylor() {
        // Low-order Taylor of E exp(lambda (G+s)^2/2-type loads) against the
        // shifted moment engine, scalar case for transparency.
        let c = Kernel::from_matrix(
            KernelKind::AlphaPotential { alpha: 0.0 },
            vec!["s".into()],
            DMatrix::from_element(1, 1, 2.0 / 3.0),
        );
        let s = 0.7;
        let lam = 0.15;
        let load = DiagonalLoad::uniform(1, lam).unwrap();
        let shift = DVector::from_element(1, s);
        let exact = shifted_square_mgf(&c, &load, &shift).unwrap();
        let mut taylor = 0.0;
        let mut factk = 1.0;
        for k in 0..=10usize {
            if k > 0 {
                factk *= k as f64;
            }
            let pts = vec![0usize; k];
            taylor +=
                lam.powi(k as i32) / factk * moments::shifted_square_moment(&c, s, &pts).unwrap();
        }
        assert!(
            ((exact - taylor) / exact).abs() < 1e-7,
            "exact {exact}, taylor {taylor}"
        );
    }
}
