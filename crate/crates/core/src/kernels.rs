//! Transition densities and potential kernels.
//!
//! All kernels are densities with respect to the reference measure `m`: the
//! transition matrix `exp(tQ)` gives probabilities, and dividing column `y`
//! by `m(y)` gives the density `p_t(x,y)`. Integrating out time yields the
//! alpha-potential
//!
//! ```text
//! u^alpha(x,y) = int_0^infty e^{-alpha t} p_t(x,y) dt
//!              = [(alpha I - Q)^{-1}](x,y) / m(y),
//! ```
//!
//! finite whenever `alpha` exceeds the generator's spectral abscissa. On
//! transient chains `alpha = 0` gives the potential `u`, which is the
//! covariance of the associated Gaussian field when the chain is reversible.
//! Killing the chain at its first hit of a distinguished state `z0` gives the
//! hitting kernel `u_{T0}`: the same construction on the generator restricted
//! to the complement of `z0`, padded with zeros at `z0`. Adding a constant
//! `alpha` to every entry of `u_{T0}` gives the kernel of the chain run up to
//! an independent exponential inverse-local-time horizon.
//!
//! The Brownian closed forms at the bottom serve as external test vectors:
//! they are not used by any engine, only compared against.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ChainModel;
use crate::tol;

/// What a kernel matrix represents.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// Density of `exp(tQ)` with respect to `m`.
    Transition { t: f64 },
    /// Resolvent density `u^alpha`; `alpha = 0` is the potential `u`.
    AlphaPotential { alpha: f64 },
    /// Hitting kernel `u_{T0}` for the chain killed at `z0` (state index).
    Killed { z0: usize },
    /// `u_{T0} + alpha` in every entry: inverse-local-time horizon kernel.
    Tau { z0: usize, alpha: f64 },
}

/// A kernel matrix over the model's state indices, tagged with its meaning.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    states: Vec<String>,
    entries: DMatrix<f64>,
}

impl Kernel {
    /// Wrap an explicit matrix (used by verification harnesses that build
    /// synthetic covariances). No validation beyond shape.
    pub fn from_matrix(kind: KernelKind, states: Vec<String>, entries: DMatrix<f64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols());
        assert_eq!(entries.nrows(), states.len());
        Kernel {
            kind,
            states,
            entries,
        }
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// State identifiers indexing rows and columns.
    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        linalg::max_abs_diff(&self.entries, &self.entries.transpose()) / 2.0
    }
}

/// Transition density `p_t(x,y) = exp(tQ)(x,y) / m(y)` for `t >= 0`.
///
/// Reversible models go through the exact spectral route; general models use
/// Pade scaling and squaring.
pub fn transition_density(model: &ChainModel, t: f64) -> Result<Kernel> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time t = {t} must be finite and >= 0")));
    }
    let q = model.generator() * t;
    let p = if model.is_symmetric() {
        linalg::expm_reversible(&q, model.m())?
    } else {
        linalg::expm_pade(&q)
    };
    let mut entries = p;
    for j in 0..model.len() {
        let scale = 1.0 / model.m()[j];
        for i in 0..model.len() {
            entries[(i, j)] *= scale;
        }
    }
    Ok(Kernel {
        kind: KernelKind::Transition { t },
        states: model.state_names().to_vec(),
        entries,
    })
}

/// Resolvent density `u^alpha = (alpha I - Q)^{-1} diag(1/m)`.
///
/// Requires `alpha` strictly above the generator's spectral abscissa, so
/// `alpha = 0` is allowed exactly on transient models.
pub fn alpha_potential(model: &ChainModel, alpha: f64) -> Result<Kernel> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!("alpha = {alpha} must be finite and >= 0")));
    }
    if alpha == 0.0 && model.is_recurrent() {
        return Err(Error::Domain(
            "potential at alpha = 0 diverges on a recurrent model; use alpha > 0".into(),
        ));
    }
    let n = model.len();
    let a = DMatrix::<f64>::identity(n, n) * alpha - model.generator();
    let inv = linalg::invert(&a)?;
    let mut entries = inv;
    for j in 0..n {
        let scale = 1.0 / model.m()[j];
        for i in 0..n {
            entries[(i, j)] *= scale;
        }
    }
    Ok(Kernel {
        kind: KernelKind::AlphaPotential { alpha },
        states: model.state_names().to_vec(),
        entries,
    })
}

/// The potential `u = u^0` on a transient model.
pub fn potential(model: &ChainModel) -> Result<Kernel> {
    alpha_potential(model, 0.0)
}

/// Hitting kernel `u_{T0}(x,y)`: expected local time at `y` before the first
/// hit of `z0`, started at `x`. Row and column `z0` are identically zero.
///
/// Defined whenever every other state reaches `z0` with positive probability,
/// which is checked via the spectral abscissa of the restricted generator.
pub fn killed_potential(model: &ChainModel, z0: usize) -> Result<Kernel> {
    let n = model.len();
    if z0 >= n {
        return Err(Error::Domain(format!("state index {z0} out of range")));
    }
    if n == 1 {
        return Ok(Kernel {
            kind: KernelKind::Killed { z0 },
            states: model.state_names().to_vec(),
            entries: DMatrix::zeros(1, 1),
        });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != z0).collect();
    let q = model.generator();
    let mut q_sub = DMatrix::<f64>::zeros(n - 1, n - 1);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            q_sub[(a, b)] = q[(i, j)];
        }
    }
    let abscissa = linalg::spectral_abscissa(&q_sub);
    if abscissa >= -tol::TRANSIENCE {
        return Err(Error::Domain(format!(
            "chain killed at {:?} is not transient (abscissa {abscissa:.3e}); \
             some state cannot reach it",
            model.state_names()[z0]
        )));
    }
    let inv = linalg::invert(&(-q_sub))?;
    let mut entries = DMatrix::<f64>::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            entries[(i, j)] = inv[(a, b)] / model.m()[j];
        }
    }
    Ok(Kernel {
        kind: KernelKind::Killed { z0 },
        states: model.state_names().to_vec(),
        entries,
    })
}

/// Inverse-local-time horizon kernel `u_{T0} + alpha` (every entry, including
/// the `z0` row and column, where `u_{T0}` vanishes).
pub fn tau_potential(model: &ChainModel, z0: usize, alpha: f64) -> Result<Kernel> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be finite and > 0")));
    }
    let killed = killed_potential(model, z0)?;
    let entries = killed.entries.map(|v| v + alpha);
    Ok(Kernel {
        kind: KernelKind::Tau { z0, alpha },
        states: killed.states,
        entries,
    })
}

/// Resolvent-limit construction of the hitting kernel:
/// `u^alpha(x,y) - u^alpha(x,z0) u^alpha(z0,y) / u^alpha(z0,z0)` at small
/// `alpha`. Used only as a cross-check against [`killed_potential`].
pub fn killed_potential_via_limit(model: &ChainModel, z0: usize, alpha: f64) -> Result<DMatrix<f64>> {
    let u = alpha_potential(model, alpha)?;
    let n = model.len();
    let mut out = DMatrix::<f64>::zeros(n, n);
    let uzz = u.value(z0, z0);
    for x in 0..n {
        for y in 0..n {
            out[(x, y)] = u.value(x, y) - u.value(x, z0) * u.value(z0, y) / uzz;
        }
    }
    Ok(out)
}

/// Laplace transform of the inverse local time at `z0`, level `t`:
/// `E^{z0}[exp(-beta tau(t))] = exp(-t / u^beta(z0,z0))`.
pub fn inverse_lt_laplace(model: &ChainModel, z0: usize, t: f64, beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must be finite and > 0")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("level t = {t} must be finite and >= 0")));
    }
    let u = alpha_potential(model, beta)?;
    Ok((-t / u.value(z0, z0)).exp())
}

/// Brownian closed forms, used as external test vectors.
pub mod brownian {
    /// `u^alpha(x,y) = exp(-sqrt(2 alpha) |x-y|) / sqrt(2 alpha)` for
    /// Brownian motion killed at an independent exponential time.
    pub fn alpha_potential(alpha: f64, x: f64, y: f64) -> f64 {
        let s = (2.0 * alpha).sqrt();
        (-s * (x - y).abs()).exp() / s
    }

    /// Hitting kernel of Brownian motion killed at its first zero:
    /// `u_{T0}(x,y) = |x| + |y| - |x-y|`.
    pub fn hitting_potential(x: f64, y: f64) -> f64 {
        x.abs() + y.abs() - (x - y).abs()
    }

    /// Laplace transform of the Brownian inverse local time at zero:
    /// `E^0[exp(-beta tau(t))] = exp(-t sqrt(2 beta))`.
    pub fn inverse_lt_laplace(t: f64, beta: f64) -> f64 {
        (-t * (2.0 * beta).sqrt()).exp()
    }
}
