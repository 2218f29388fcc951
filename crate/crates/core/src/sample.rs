//! Seeded Monte Carlo samplers: the stochastic third engine.
//!
//! Every sampler is a pure function of its inputs and an [`RngStream`], so a
//! fixed (seed, purpose, trial) triple reproduces a sample bit for bit, and
//! trials can be distributed across threads with disjoint streams without
//! changing any result.
//!
//! The samplers simulate the actual probabilistic objects (chain paths with
//! exponential holding times, conditioned bridge dynamics, fields stopped at
//! an inverse local time, Gaussian vectors, Poisson counts) and never consult
//! the analytic engines; agreement with [`crate::moments`] and [`crate::mgf`]
//! is established by the verification harness, not assumed here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{potential, Kernel};
use crate::linalg::psd_sqrt;
use crate::model::ChainModel;
use crate::tol;

/// Step cap guarding against a non-terminating walk on inputs that slipped
/// past validation (a genuinely transient or recurrent chain never hits it).
const MAX_STEPS: usize = 50_000_000;

/// A reproducible random stream: a 64-bit seed shared by a whole run and a
/// substream derived from a purpose tag and a trial index.
///
/// Identical (seed, purpose, trial) gives an identical sample sequence;
/// distinct purposes or trials give statistically independent streams.
#[derive(Debug, Clone, Copy)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, purpose: &str, trial: u64) -> Self {
        // FNV-1a over the purpose tag then the trial index.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in purpose.as_bytes().iter().chain(trial.to_le_bytes().iter()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        RngStream { seed, stream: h }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Instantiate the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Why a sampled path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalCause {
    /// Died through a kill rate.
    Killed,
    /// Bridge dynamics terminated at the target state.
    Absorbed,
    /// Clock stopped when the marked state's local time reached its level.
    StoppedAtTau,
}

/// One sampled chain trajectory: visited states with their holding times,
/// the terminal cause, and the total lifetime.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub steps: Vec<(usize, f64)>,
    pub cause: TerminalCause,
    pub lifetime: f64,
}

/// Accumulated local times, one entry per state: occupation time at `y`
/// divided by `m(y)`. Additive over path concatenation by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeField {
    values: DVector<f64>,
}

impl LocalTimeField {
    pub fn zero(n: usize) -> Self {
        LocalTimeField {
            values: DVector::zeros(n),
        }
    }

    pub fn from_path(model: &ChainModel, path: &SamplePath) -> Self {
        let mut field = Self::zero(model.len());
        for &(state, holding) in &path.steps {
            field.values[state] += holding / model.m()[state];
        }
        field
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn add(&mut self, other: &LocalTimeField) {
        self.values += &other.values;
    }
}

/// Draw `count` centered Gaussian vectors with covariance `C` through the
/// symmetric square root of the kernel matrix.
pub fn sample_gaussian(c: &Kernel, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
    if c.asymmetry() > tol::KERNEL_SYMMETRY {
        return Err(Error::Domain(format!(
            "kernel is not symmetric (asymmetry {:.3e}); no Gaussian field exists",
            c.asymmetry()
        )));
    }
    let sym = (c.matrix() + c.matrix().transpose()) * 0.5;
    let root = psd_sqrt(&sym, tol::PSD)?;
    let n = c.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        out.push(&root * z);
    }
    Ok(out)
}

/// Run the chain from `x0` until it dies, recording the trajectory and the
/// accumulated local times. Requires a transient model (the walk must die
/// with probability one).
pub fn sample_path(
    model: &ChainModel,
    x0: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(SamplePath, LocalTimeField)> {
    if model.is_recurrent() {
        return Err(Error::Domain(
            "path sampling needs a transient model; a recurrent walk never dies".into(),
        ));
    }
    check_state(model, x0)?;
    let jump = model.jump_rates();
    let kill = model.kill_rates();
    let mut field = LocalTimeField::zero(model.len());
    let mut steps = Vec::new();
    let mut lifetime = 0.0;
    let mut x = x0;
    for _ in 0..MAX_STEPS {
        let total = row_rate(jump, kill, x);
        let holding = draw_exp(rng, total)?;
        steps.push((x, holding));
        lifetime += holding;
        field.values[x] += holding / model.m()[x];
        match next_event(jump, kill, x, rng) {
            None => {
                return Ok((
                    SamplePath {
                        steps,
                        cause: TerminalCause::Killed,
                        lifetime,
                    },
                    field,
                ))
            }
            Some(y) => x = y,
        }
    }
    Err(Error::Numerical("path did not terminate within the step cap".into()))
}

/// Sample the normalized bridge from `x` to `y`: the chain reweighted by
/// `h(z) = u(z,y)`, under which jumps `z -> w` occur at rate
/// `jump(z,w) h(w)/h(z)` and the only killing is at `y`, at rate
/// `1/(m(y) u(y,y))`. Every path therefore terminates at `y`; holding rates
/// agree with the original chain state by state.
pub fn sample_bridge(
    model: &ChainModel,
    x: usize,
    y: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(SamplePath, LocalTimeField)> {
    if model.is_recurrent() {
        return Err(Error::Domain(
            "bridge sampling needs a transient model".into(),
        ));
    }
    check_state(model, x)?;
    check_state(model, y)?;
    let u = potential(model)?;
    let h: DVector<f64> = u.matrix().column(y).into();
    if u.value(x, y) <= 0.0 {
        return Err(Error::Domain(format!(
            "state {} cannot reach state {}; the bridge measure is empty",
            model.state_names()[x], model.state_names()[y]
        )));
    }
    let n = model.len();
    // Transformed rates; terminal rate folded in as a pseudo-kill at y.
    let mut jump_h = DMatrix::<f64>::zeros(n, n);
    for z in 0..n {
        if h[z] <= 0.0 {
            continue;
        }
        for w in 0..n {
            if w != z {
                jump_h[(z, w)] = model.jump_rates()[(z, w)] * h[w] / h[z];
            }
        }
    }
    let mut kill_h = DVector::<f64>::zeros(n);
    kill_h[y] = 1.0 / (model.m()[y] * u.value(y, y));

    let mut field = LocalTimeField::zero(n);
    let mut steps = Vec::new();
    let mut lifetime = 0.0;
    let mut z = x;
    for _ in 0..MAX_STEPS {
        let total = row_rate(&jump_h, &kill_h, z);
        let holding = draw_exp(rng, total)?;
        steps.push((z, holding));
        lifetime += holding;
        field.values[z] += holding / model.m()[z];
        match next_event(&jump_h, &kill_h, z, rng) {
            None => {
                // Termination is only possible at the target.
                assert_eq!(z, y, "bridge path terminated away from its target");
                return Ok((
                    SamplePath {
                        steps,
                        cause: TerminalCause::Absorbed,
                        lifetime,
                    },
                    field,
                ));
            }
            Some(w) => z = w,
        }
    }
    Err(Error::Numerical("bridge did not terminate within the step cap".into()))
}

/// Run the recurrent chain from `z0` and stop the clock exactly when the
/// local time at `z0` reaches `t`, truncating the final holding interval.
/// The returned field has `L^{z0} = t` identically.
pub fn sample_inverse_lt_field(
    model: &ChainModel,
    z0: usize,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(SamplePath, LocalTimeField)> {
    if !model.is_recurrent() {
        return Err(Error::Domain(
            "inverse-local-time sampling needs a recurrent model; a transient walk may never return".into(),
        ));
    }
    check_state(model, z0)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("level t = {t} must be finite and >= 0")));
    }
    let jump = model.jump_rates();
    let kill = model.kill_rates();
    let m_z0 = model.m()[z0];
    let mut field = LocalTimeField::zero(model.len());
    let mut steps = Vec::new();
    let mut lifetime = 0.0;
    let mut x = z0;
    for _ in 0..MAX_STEPS {
        if x == z0 {
            // Remaining local time to accumulate before the stop.
            let remaining = t - field.values[z0];
            let total = row_rate(jump, kill, x);
            let holding = draw_exp(rng, total)?;
            if holding / m_z0 >= remaining {
                let truncated = remaining * m_z0;
                if truncated > 0.0 {
                    steps.push((x, truncated));
                }
                lifetime += truncated;
                field.values[z0] = t;
                return Ok((
                    SamplePath {
                        steps,
                        cause: TerminalCause::StoppedAtTau,
                        lifetime,
                    },
                    field,
                ));
            }
            steps.push((x, holding));
            lifetime += holding;
            field.values[x] += holding / m_z0;
            match next_event(jump, kill, x, rng) {
                None => return Err(Error::Domain("recurrent model killed a path".into())),
                Some(y) => x = y,
            }
        } else {
            let total = row_rate(jump, kill, x);
            let holding = draw_exp(rng, total)?;
            steps.push((x, holding));
            lifetime += holding;
            field.values[x] += holding / model.m()[x];
            match next_event(jump, kill, x, rng) {
                None => return Err(Error::Domain("recurrent model killed a path".into())),
                Some(y) => x = y,
            }
        }
    }
    Err(Error::Numerical(
        "inverse-local-time walk did not reach its level within the step cap".into(),
    ))
}

/// Occupation field of the half-integer soup: the sum of `k` independent
/// squared-Gaussian fields `G^2/2` over a symmetric PSD kernel, matching the
/// soup intensity `alpha = k/2`.
pub fn sample_halfint_soup_field(
    u: &Kernel,
    half_units: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LocalTimeField> {
    if half_units == 0 {
        return Err(Error::Domain("need at least one half-unit".into()));
    }
    let copies = sample_gaussian(u, half_units, rng)?;
    let mut field = LocalTimeField::zero(u.len());
    for g in copies {
        for i in 0..g.len() {
            field.values[i] += g[i] * g[i] / 2.0;
        }
    }
    Ok(field)
}

/// Independent Poisson counts per atom: `N_i ~ Poisson(intensity * weight_i)`.
pub fn sample_poisson_counts(
    weights: &[f64],
    intensity: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u64>> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::Domain(format!(
            "intensity {intensity} must be finite and >= 0"
        )));
    }
    let mut out = Vec::with_capacity(weights.len());
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Domain(format!("atom mass {w} must be finite and >= 0")));
        }
        let mean = intensity * w;
        if mean == 0.0 {
            out.push(0);
            continue;
        }
        let dist = Poisson::new(mean)
            .map_err(|e| Error::Domain(format!("invalid Poisson mean {mean}: {e}")))?;
        out.push(dist.sample(rng) as u64);
    }
    Ok(out)
}

fn check_state(model: &ChainModel, x: usize) -> Result<()> {
    if x >= model.len() {
        return Err(Error::Domain(format!(
            "state index {x} out of range for {} states",
            model.len()
        )));
    }
    Ok(())
}

fn row_rate(jump: &DMatrix<f64>, kill: &DVector<f64>, x: usize) -> f64 {
    let jumps: f64 = (0..jump.ncols()).map(|y| jump[(x, y)]).sum();
    jumps + kill[x]
}

fn draw_exp(rng: &mut ChaCha8Rng, rate: f64) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Numerical(format!(
            "holding rate {rate} is not positive; state cannot be left"
        )));
    }
    let dist = Exp::new(rate).map_err(|e| Error::Numerical(format!("exp({rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Pick the next event from state `x`: `Some(y)` for a jump, `None` for
/// death. The caller guarantees a positive total rate.
fn next_event(
    jump: &DMatrix<f64>,
    kill: &DVector<f64>,
    x: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let total = row_rate(jump, kill, x);
    let mut pick = rng.random::<f64>() * total;
    for y in 0..jump.ncols() {
        let r = jump[(x, y)];
        if r > 0.0 {
            if pick < r {
                return Some(y);
            }
            pick -= r;
        }
    }
    None
}
