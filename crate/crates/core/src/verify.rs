//! The theorem harness: each identity is checked by pairing engines that
//! share no code path below the enumeration primitives: moment assemblies
//! against pairing oracles, closed determinant forms against term series,
//! analytic values against seeded Monte Carlo.
//!
//! Every check produces a [`VerificationReport`]; exact checks pass when the
//! absolute error is within `tol::EXACT_ABS` or the relative error within
//! `tol::EXACT_REL`, Monte Carlo checks when the analytic value lies within
//! three standard errors of the empirical mean. Reports are deterministic
//! given (model, parameters, seed): trials draw from per-trial streams and
//! are reduced in trial order, so thread count never changes a digit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::kernels::{killed_potential, potential, Kernel, KernelKind};
use crate::linalg::spectral_radius;
use crate::mgf::{self, DiagonalLoad};
use crate::model::ChainModel;
use crate::moments::{self, oracle, split_by_mask};
use crate::sample::{self, RngStream};
use crate::tol;

/// Schema tag stamped on serialized report collections.
pub const REPORT_SCHEMA: &str = "isokit-report/1";

/// Outcome of one check: two values, their errors, the gate that was applied,
/// and the verdict. Serialization omits the runtime so report files are
/// byte-identical across machines and runs.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub identity: String,
    pub params: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_standard_error: Option<f64>,
    pub pass: bool,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

fn rel_err(lhs: f64, rhs: f64) -> f64 {
    let abs = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        abs / scale
    }
}

impl VerificationReport {
    /// Exact-identity report with the standard gates.
    pub fn exact(identity: &str, params: serde_json::Value, lhs: f64, rhs: f64) -> Self {
        Self::exact_with_tol(identity, params, lhs, rhs, tol::EXACT_ABS, tol::EXACT_REL)
    }

    pub fn exact_with_tol(
        identity: &str,
        params: serde_json::Value,
        lhs: f64,
        rhs: f64,
        tol_abs: f64,
        tol_rel: f64,
    ) -> Self {
        let abs_err = (lhs - rhs).abs();
        let rel = rel_err(lhs, rhs);
        VerificationReport {
            identity: identity.to_string(),
            params,
            lhs,
            rhs,
            abs_err,
            rel_err: rel,
            tol_abs,
            tol_rel,
            mc_standard_error: None,
            pass: lhs.is_finite() && rhs.is_finite() && (abs_err <= tol_abs || rel <= tol_rel),
            runtime_seconds: 0.0,
        }
    }

    /// Monte Carlo report: `lhs` analytic, `rhs` empirical mean, gate 3 SE.
    pub fn monte_carlo(identity: &str, params: serde_json::Value, lhs: f64, rhs: f64, se: f64) -> Self {
        let abs_err = (lhs - rhs).abs();
        VerificationReport {
            identity: identity.to_string(),
            params,
            lhs,
            rhs,
            abs_err,
            rel_err: rel_err(lhs, rhs),
            tol_abs: tol::MC_SIGMA * se,
            tol_rel: 0.0,
            mc_standard_error: Some(se),
            pass: lhs.is_finite() && rhs.is_finite() && abs_err <= tol::MC_SIGMA * se,
            runtime_seconds: 0.0,
        }
    }
}

/// True when every report passed.
pub fn all_pass(reports: &[VerificationReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

/// All multisets over `0..n_values` of size `0..=max_size`, each listed as a
/// nondecreasing index sequence, ordered by size then lexicographically.
pub fn multisets(n_values: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v, n, left - 1, cur, out);
            cur.pop();
        }
    }
    for size in 0..=max_size {
        rec(0, n_values, size, &mut Vec::new(), &mut out);
    }
    out
}

/// Truncated Taylor expansion of `E exp(sum_j lambda_j G_j^2/2)` in the load,
/// assembled from the square-moment engine over state multisets:
/// `sum_multisets prod_j lambda_j^{m_j}/m_j! * square_moment(multiset)`.
pub fn square_moment_taylor(c: &Kernel, lambda: &DVector<f64>, max_degree: usize) -> Result<f64> {
    let n = c.len();
    let mut total = 0.0;
    for pts in multisets(n, max_degree) {
        let mut coef = 1.0;
        let mut mult = vec![0usize; n];
        for &p in &pts {
            mult[p] += 1;
            coef *= lambda[p] / mult[p] as f64;
        }
        if coef != 0.0 {
            total += coef * moments::gauss_square_moment(c, &pts)?;
        }
    }
    Ok(total)
}

fn require_symmetric_transient(model: &ChainModel, what: &str) -> Result<()> {
    if !model.is_symmetric() {
        return Err(Error::Domain(format!(
            "{what} needs a symmetric model (no associated Gaussian field otherwise)"
        )));
    }
    if model.is_recurrent() {
        return Err(Error::Domain(format!(
            "{what} needs a transient model (total local times must be finite)"
        )));
    }
    Ok(())
}

fn state_names(model: &ChainModel, pts: &[usize]) -> Vec<String> {
    pts.iter()
        .map(|&p| model.state_names()[p].clone())
        .collect()
}

/// A moderate diagonal load for MGF routes: uniform at `target_radius` over
/// the kernel's spectral radius, zeroed at `skip`, so the resolvent regime
/// holds with a wide margin on any admissible model.
fn standard_load(c: &Kernel, target_radius: f64, skip: Option<usize>) -> Result<DiagonalLoad> {
    let rho = spectral_radius(c.matrix()).max(1e-12);
    let mut lambda = DVector::from_element(c.len(), target_radius / rho);
    if let Some(z) = skip {
        lambda[z] = 0.0;
    }
    let load = DiagonalLoad::new(lambda)?;
    load.check_against(c)?;
    Ok(load)
}

/// Compare the order-`k` coefficient of the loaded local-time transform,
/// summed over state tuples from the moment engine, against the matrix
/// series term. `moment_of_tuple` must return the k-point moment.
fn tuple_coefficient(
    n: usize,
    k: usize,
    load: &DiagonalLoad,
    mut moment_of_tuple: impl FnMut(&[usize]) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut tuple = vec![0usize; k];
    loop {
        let mut w = 1.0;
        for &j in &tuple {
            w *= load.lambda()[j];
        }
        if w != 0.0 {
            total += w * moment_of_tuple(&tuple)?;
        }
        // Odometer over state tuples.
        let mut pos = 0;
        loop {
            if pos == k {
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                return Ok(total / fact);
            }
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

/// Dynkin isomorphism: for every point multiset up to `max_order`, the
/// subset convolution of bridge local-time moments with Gaussian square
/// moments must equal the pairing-oracle value of
/// `E[G_x G_y prod G^2/2]`, and the bridge transform must match its own
/// moment series term by term.
pub fn verify_dynkin(
    model: &ChainModel,
    x: usize,
    y: usize,
    max_order: usize,
) -> Result<Vec<VerificationReport>> {
    require_symmetric_transient(model, "the Dynkin identity")?;
    let u = potential(model)?;
    let n = model.len();
    let mut reports = Vec::new();

    for pts in multisets(n, max_order) {
        let mut lhs = 0.0;
        for mask in 0u32..(1 << pts.len()) {
            let (inside, outside) = split_by_mask(&pts, mask);
            lhs += moments::lt_moment_bridge(&u, x, y, &inside)?
                * moments::gauss_square_moment(&u, &outside)?;
        }
        let rhs = oracle::pair_square_moment(&u, x, y, &pts)?;
        reports.push(VerificationReport::exact(
            "dynkin-moment",
            json!({
                "x": model.state_names()[x],
                "y": model.state_names()[y],
                "points": state_names(model, &pts),
            }),
            lhs,
            rhs,
        ));
    }

    // MGF route: bridge transform against its moment series.
    let load = standard_load(&u, 0.25, None)?;
    for k in 0..=max_order {
        let lhs = tuple_coefficient(n, k, &load, |tuple| {
            moments::lt_moment_bridge(&u, x, y, tuple)
        })?;
        let rhs = mgf::bridge_series_term(&u, &load, x, y, k);
        reports.push(VerificationReport::exact(
            "dynkin-mgf-term",
            json!({
                "x": model.state_names()[x],
                "y": model.state_names()[y],
                "order": k,
            }),
            lhs,
            rhs,
        ));
    }
    let closed = mgf::bridge_mgf(&u, &load, x, y)?;
    let series: f64 = (0..80)
        .map(|k| mgf::bridge_series_term(&u, &load, x, y, k))
        .sum();
    reports.push(VerificationReport::exact(
        "dynkin-mgf-closed",
        json!({
            "x": model.state_names()[x],
            "y": model.state_names()[y],
        }),
        closed,
        series,
    ));
    Ok(reports)
}

/// Eisenbaum isomorphism at shift `s`: subset convolution of started
/// local-time moments with shifted square moments against the expansion
/// oracle `E[(1 + G_x/s) prod (G+s)^2/2]`, plus the started transform
/// against its moment series.
pub fn verify_eisenbaum(
    model: &ChainModel,
    x: usize,
    s: f64,
    max_order: usize,
) -> Result<Vec<VerificationReport>> {
    require_symmetric_transient(model, "the Eisenbaum identity")?;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Domain(
            "the Eisenbaum identity needs a nonzero finite shift s".into(),
        ));
    }
    let u = potential(model)?;
    let n = model.len();
    let mut reports = Vec::new();

    for pts in multisets(n, max_order) {
        let mut lhs = 0.0;
        for mask in 0u32..(1 << pts.len()) {
            let (inside, outside) = split_by_mask(&pts, mask);
            lhs += moments::lt_moment_start(&u, x, &inside)?
                * moments::shifted_square_moment(&u, s, &outside)?;
        }
        let rhs = oracle::shifted_square_moment(&u, s, &pts)?
            + oracle::gx_shifted_square_moment(&u, x, s, &pts)? / s;
        reports.push(VerificationReport::exact(
            "eisenbaum-moment",
            json!({
                "x": model.state_names()[x],
                "s": s,
                "points": state_names(model, &pts),
            }),
            lhs,
            rhs,
        ));
    }

    let load = standard_load(&u, 0.25, None)?;
    for k in 0..=max_order {
        let lhs = tuple_coefficient(n, k, &load, |tuple| moments::lt_moment_start(&u, x, tuple))?;
        let rhs = mgf::start_series_term(&u, &load, x, k);
        reports.push(VerificationReport::exact(
            "eisenbaum-mgf-term",
            json!({ "x": model.state_names()[x], "order": k }),
            lhs,
            rhs,
        ));
    }
    let closed = mgf::start_mgf(&u, &load, x)?;
    let series: f64 = (0..80).map(|k| mgf::start_series_term(&u, &load, x, k)).sum();
    reports.push(VerificationReport::exact(
        "eisenbaum-mgf-closed",
        json!({ "x": model.state_names()[x] }),
        closed,
        series,
    ));
    Ok(reports)
}

/// Monte Carlo controls for [`verify_rayknight`].
#[derive(Debug, Clone, Copy)]
pub struct McRun {
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,
}

/// Ray-Knight theorem at level `t` around `z0`, four routes:
/// moment convolution vs the shifted square engine, determinant form vs the
/// excursion series, its exponent reassembly, and (optionally) seeded
/// trajectories of the inverse-local-time field against analytic moments and
/// one exponential functional.
pub fn verify_rayknight(
    model: &ChainModel,
    z0: usize,
    t: f64,
    max_order: usize,
    mc: Option<McRun>,
) -> Result<Vec<VerificationReport>> {
    if !model.is_recurrent() {
        return Err(Error::Domain(
            "the Ray-Knight identity needs a recurrent model".into(),
        ));
    }
    if !model.is_symmetric() {
        return Err(Error::Domain(
            "the Ray-Knight identity needs a symmetric model".into(),
        ));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("level t = {t} must be finite and >= 0")));
    }
    let u0 = killed_potential(model, z0)?;
    let n = model.len();
    let s2t = (2.0 * t).sqrt();
    let mut reports = Vec::new();

    // Moment route over multisets avoiding the pinned state.
    let others: Vec<usize> = (0..n).filter(|&i| i != z0).collect();
    for sel in multisets(others.len(), max_order) {
        let pts: Vec<usize> = sel.iter().map(|&i| others[i]).collect();
        let mut lhs = 0.0;
        for mask in 0u32..(1 << pts.len()) {
            let (inside, outside) = split_by_mask(&pts, mask);
            lhs += moments::rayknight_lhs_moment(&u0, t, &inside)?
                * moments::gauss_square_moment(&u0, &outside)?;
        }
        let rhs = moments::shifted_square_moment(&u0, s2t, &pts)?;
        reports.push(VerificationReport::exact(
            "rayknight-moment",
            json!({
                "z0": model.state_names()[z0],
                "t": t,
                "points": state_names(model, &pts),
            }),
            lhs,
            rhs,
        ));
    }

    // MGF routes: closed resolvent form, explicit term series, exponent.
    let load = standard_load(&u0, 0.3, Some(z0))?;
    let closed = mgf::rayknight_mgf(&u0, &load, t)?;
    let mut series_exponent = 0.0;
    for j in 1..400 {
        let h = mgf::h_term(&u0, &load, j);
        series_exponent += h;
        if h.abs() < 1e-16 {
            break;
        }
    }
    let series = (t * series_exponent).exp();
    reports.push(VerificationReport::exact(
        "rayknight-mgf",
        json!({ "z0": model.state_names()[z0], "t": t }),
        closed,
        series,
    ));
    let excursion = (t * mgf::excursion_mgf_exponent(&u0, &load)?).exp();
    reports.push(VerificationReport::exact(
        "rayknight-excursion",
        json!({ "z0": model.state_names()[z0], "t": t }),
        excursion,
        closed,
    ));

    if let Some(run) = mc {
        reports.extend(rayknight_mc(model, z0, t, &u0, &load, run)?);
    }
    Ok(reports)
}

fn rayknight_mc(
    model: &ChainModel,
    z0: usize,
    t: f64,
    u0: &Kernel,
    load: &DiagonalLoad,
    run: McRun,
) -> Result<Vec<VerificationReport>> {
    let n = model.len();
    let others: Vec<usize> = (0..n).filter(|&i| i != z0).collect();
    let s2t = (2.0 * t).sqrt();

    // Statistics per trial: each first moment, each second moment over
    // unordered pairs, and the exponential functional (with an independent
    // Gaussian field on the hitting kernel).
    let mut pairs = Vec::new();
    for (a, &i) in others.iter().enumerate() {
        for &j in &others[a..] {
            pairs.push((i, j));
        }
    }
    let stats = others.len() + pairs.len() + 1;
    let root = psd_root(u0)?;
    let model_ref = &model;
    let others_ref = &others;
    let pairs_ref = &pairs;
    let lambda = load.lambda();
    let values = per_trial_stats(run, "rayknight-mc", stats, move |rng, out| {
        let (_, field) = sample::sample_inverse_lt_field(model_ref, z0, t, rng)
            .expect("validated model cannot fail to sample");
        for (k, &i) in others_ref.iter().enumerate() {
            out[k] = field.value(i);
        }
        for (k, &(i, j)) in pairs_ref.iter().enumerate() {
            out[others_ref.len() + k] = field.value(i) * field.value(j);
        }
        let z = DVector::from_fn(model_ref.len(), |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let eta = &root * z;
        let mut exponent = 0.0;
        for i in 0..model_ref.len() {
            exponent += lambda[i] * (field.value(i) + eta[i] * eta[i] / 2.0);
        }
        out[stats - 1] = exponent.exp();
    });

    let mut reports = Vec::new();
    for (k, &i) in others.iter().enumerate() {
        let (mean, se) = column_mean_se(&values, stats, k);
        let analytic = moments::rayknight_lhs_moment(u0, t, &[i])?;
        reports.push(VerificationReport::monte_carlo(
            "rayknight-mc-moment1",
            json!({
                "z0": model.state_names()[z0],
                "t": t,
                "state": model.state_names()[i],
                "trials": run.trials,
                "seed": run.seed,
            }),
            analytic,
            mean,
            se,
        ));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (mean, se) = column_mean_se(&values, stats, others.len() + k);
        let analytic = moments::rayknight_lhs_moment(u0, t, &[i, j])?;
        reports.push(VerificationReport::monte_carlo(
            "rayknight-mc-moment2",
            json!({
                "z0": model.state_names()[z0],
                "t": t,
                "states": [model.state_names()[i], model.state_names()[j]],
                "trials": run.trials,
                "seed": run.seed,
            }),
            analytic,
            mean,
            se,
        ));
    }
    let (mean, se) = column_mean_se(&values, stats, stats - 1);
    let shift = DVector::from_element(n, s2t);
    let analytic = mgf::shifted_square_mgf(u0, load, &shift)?;
    reports.push(VerificationReport::monte_carlo(
        "rayknight-mc-exponential",
        json!({
            "z0": model.state_names()[z0],
            "t": t,
            "trials": run.trials,
            "seed": run.seed,
        }),
        analytic,
        mean,
        se,
    ));
    Ok(reports)
}

/// Loop-soup occupation field isomorphism at intensity `alpha`: extracting
/// the marked factor through the based-loop decomposition,
/// `E[hat L^{x0} prod hat L^{x_i}] = alpha sum_A ch(x0,x0;A) E[prod_{A^c}]`,
/// checked against the partition engine, which itself must equal the
/// alpha-permanent on the same points.
pub fn verify_soup_isomorphism(
    model: &ChainModel,
    alpha: f64,
    x0: usize,
    max_order: usize,
) -> Result<Vec<VerificationReport>> {
    if model.is_recurrent() {
        return Err(Error::Domain(
            "the soup isomorphism needs a transient model".into(),
        ));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be finite and > 0")));
    }
    let u = potential(model)?;
    let n = model.len();
    let mut reports = Vec::new();
    for pts in multisets(n, max_order) {
        let mut with_base = vec![x0];
        with_base.extend(&pts);
        let lhs = moments::soup_field_moment(&u, alpha, &with_base)?;
        let mut rhs = 0.0;
        for mask in 0u32..(1 << pts.len()) {
            let (inside, outside) = split_by_mask(&pts, mask);
            rhs += alpha
                * crate::combinat::chain_value(u.matrix(), x0, x0, &inside)
                * moments::soup_field_moment(&u, alpha, &outside)?;
        }
        reports.push(VerificationReport::exact(
            "soup-moment",
            json!({
                "alpha": alpha,
                "x0": model.state_names()[x0],
                "points": state_names(model, &pts),
            }),
            lhs,
            rhs,
        ));
        let permanent = crate::combinat::alpha_permanent(u.matrix(), &with_base, alpha)?;
        reports.push(VerificationReport::exact(
            "soup-permanent",
            json!({
                "alpha": alpha,
                "x0": model.state_names()[x0],
                "points": state_names(model, &pts),
            }),
            lhs,
            permanent,
        ));
    }
    Ok(reports)
}

/// Bivariate permanental moments at `alpha = 1/2` against the paired 2x2
/// Gaussian field with cross-covariance `sqrt(u(x,y) u(y,x))`, all orders
/// `j + k <= max_total`.
pub fn verify_permanental_pairing(
    model: &ChainModel,
    x: usize,
    y: usize,
    max_total: usize,
) -> Result<Vec<VerificationReport>> {
    if model.is_recurrent() {
        return Err(Error::Domain(
            "the permanental pairing needs a transient model".into(),
        ));
    }
    let u = potential(model)?;
    let cross = u.value(x, y) * u.value(y, x);
    if cross < 0.0 {
        return Err(Error::Domain(format!(
            "u(x,y) u(y,x) = {cross:.6e} < 0; no paired Gaussian field exists"
        )));
    }
    let s = cross.sqrt();
    let paired = Kernel::from_matrix(
        KernelKind::AlphaPotential { alpha: 0.0 },
        vec![
            model.state_names()[x].clone(),
            model.state_names()[y].clone(),
        ],
        DMatrix::from_row_slice(2, 2, &[u.value(x, x), s, s, u.value(y, y)]),
    );
    let mut reports = Vec::new();
    for j in 0..=max_total {
        for k in 0..=(max_total - j) {
            if j + k == 0 {
                continue;
            }
            let mut orig_pts = vec![x; j];
            orig_pts.extend(vec![y; k]);
            let mut pair_pts = vec![0usize; j];
            pair_pts.extend(vec![1usize; k]);
            let lhs = moments::soup_field_moment(&u, 0.5, &orig_pts)?;
            let rhs = moments::gauss_square_moment(&paired, &pair_pts)?;
            reports.push(VerificationReport::exact(
                "permanental-bivariate",
                json!({
                    "x": model.state_names()[x],
                    "y": model.state_names()[y],
                    "j": j,
                    "k": k,
                }),
                lhs,
                rhs,
            ));
        }
    }
    Ok(reports)
}

/// Symmetric identification of the half-intensity soup field: sampled
/// `G^2/2` moments up to order 2 against `alpha = 1/2` permanental moments.
pub fn verify_permanental_sampled(
    model: &ChainModel,
    run: McRun,
) -> Result<Vec<VerificationReport>> {
    require_symmetric_transient(model, "the sampled permanental identification")?;
    let u = potential(model)?;
    let n = model.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            pairs.push((i, j));
        }
    }
    let stats = n + pairs.len();
    let u_ref = &u;
    let pairs_ref = &pairs;
    let values = per_trial_stats(run, "permanental-sample", stats, move |rng, out| {
        let field = sample::sample_halfint_soup_field(u_ref, 1, rng)
            .expect("symmetric PSD kernel cannot fail to sample");
        for i in 0..n {
            out[i] = field.value(i);
        }
        for (k, &(i, j)) in pairs_ref.iter().enumerate() {
            out[n + k] = field.value(i) * field.value(j);
        }
    });
    let mut reports = Vec::new();
    for i in 0..n {
        let (mean, se) = column_mean_se(&values, stats, i);
        let analytic = moments::soup_field_moment(&u, 0.5, &[i])?;
        reports.push(VerificationReport::monte_carlo(
            "permanental-sampled-moment1",
            json!({
                "state": model.state_names()[i],
                "trials": run.trials,
                "seed": run.seed,
            }),
            analytic,
            mean,
            se,
        ));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (mean, se) = column_mean_se(&values, stats, n + k);
        let analytic = moments::soup_field_moment(&u, 0.5, &[i, j])?;
        reports.push(VerificationReport::monte_carlo(
            "permanental-sampled-moment2",
            json!({
                "states": [model.state_names()[i], model.state_names()[j]],
                "trials": run.trials,
                "seed": run.seed,
            }),
            analytic,
            mean,
            se,
        ));
    }
    Ok(reports)
}

/// Random interlacement identity at level `t`, tilt `delta`, measure `nu`:
/// the determinant-ratio transform against the trajectory series, and the
/// occupation-field moment convolution against the mixed engine for
/// `k <= max_order` copies of `nu`.
pub fn verify_interlacement(
    model: &ChainModel,
    nu: &DVector<f64>,
    t: f64,
    delta: f64,
    max_order: usize,
) -> Result<Vec<VerificationReport>> {
    require_symmetric_transient(model, "the interlacement identity")?;
    let u = potential(model)?;
    let (lhs, rhs) = mgf::interlacement_mgf_check(&u, nu, t, delta)?;
    let mut reports = vec![VerificationReport::exact(
        "interlacement-mgf",
        json!({
            "nu": nu.iter().copied().collect::<Vec<f64>>(),
            "t": t,
            "delta": delta,
        }),
        lhs,
        rhs,
    )];
    for k in 1..=max_order {
        let measures: Vec<&DVector<f64>> = (0..k).map(|_| nu).collect();
        let mut conv = 0.0;
        for mask in 0u32..(1 << k) {
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            for (i, &m) in measures.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    inside.push(m);
                } else {
                    outside.push(m);
                }
            }
            conv += moments::interlacement_field_moment(&u, &inside, t)?
                * moments::wick_square_moment(&u, &outside)?;
        }
        let mixed = moments::wick_shifted_square_moment(&u, &measures, t)?;
        reports.push(VerificationReport::exact(
            "interlacement-moment",
            json!({
                "nu": nu.iter().copied().collect::<Vec<f64>>(),
                "t": t,
                "order": k,
            }),
            conv,
            mixed,
        ));
    }
    Ok(reports)
}

/// Poisson process facts on a finite atomic intensity: the master formula
/// `E e^{N(f)} = exp(alpha sum (e^f - 1) mu)`, the order-2 moment formula,
/// and the Palm formula with `G(N) = e^{N(g)}`, each against seeded counts.
pub fn verify_poisson_facts(
    weights: &[f64],
    intensity: f64,
    f: &[f64],
    g: &[f64],
    run: McRun,
) -> Result<Vec<VerificationReport>> {
    if f.len() != weights.len() || g.len() != weights.len() {
        return Err(Error::Domain(
            "f and g must assign a value to every atom".into(),
        ));
    }
    let weights_v = weights.to_vec();
    let f_v = f.to_vec();
    let g_v = g.to_vec();
    let values = per_trial_stats(run, "poisson", 3, move |rng, out| {
        let counts = sample::sample_poisson_counts(&weights_v, intensity, rng)
            .expect("validated intensity cannot fail to sample");
        let nf: f64 = counts.iter().zip(&f_v).map(|(&c, &fi)| c as f64 * fi).sum();
        let ng: f64 = counts.iter().zip(&g_v).map(|(&c, &gi)| c as f64 * gi).sum();
        out[0] = nf.exp();
        out[1] = nf * nf;
        out[2] = nf * ng.exp();
    });

    let master: f64 = (intensity
        * weights
            .iter()
            .zip(f)
            .map(|(&w, &fi)| (fi.exp() - 1.0) * w)
            .sum::<f64>())
    .exp();
    let mean_nf: f64 = intensity * weights.iter().zip(f).map(|(&w, &fi)| w * fi).sum::<f64>();
    let moment2 = mean_nf * mean_nf
        + intensity
            * weights
                .iter()
                .zip(f)
                .map(|(&w, &fi)| w * fi * fi)
                .sum::<f64>();
    let master_g: f64 = (intensity
        * weights
            .iter()
            .zip(g)
            .map(|(&w, &gi)| (gi.exp() - 1.0) * w)
            .sum::<f64>())
    .exp();
    // Palm formula: adding a point at atom i multiplies e^{N(g)} by e^{g_i}.
    let palm: f64 = intensity
        * weights
            .iter()
            .zip(f)
            .zip(g)
            .map(|((&w, &fi), &gi)| w * fi * gi.exp())
            .sum::<f64>()
        * master_g;

    let labels = ["poisson-master", "poisson-moment2", "poisson-palm"];
    let analytic = [master, moment2, palm];
    let mut reports = Vec::new();
    for (k, (label, value)) in labels.iter().zip(analytic).enumerate() {
        let (mean, se) = column_mean_se(&values, 3, k);
        reports.push(VerificationReport::monte_carlo(
            label,
            json!({
                "weights": weights,
                "intensity": intensity,
                "trials": run.trials,
                "seed": run.seed,
            }),
            value,
            mean,
            se,
        ));
    }
    Ok(reports)
}

/// Symmetric square root of a kernel for Gaussian draws inside MC loops.
fn psd_root(u: &Kernel) -> Result<DMatrix<f64>> {
    let sym = (u.matrix() + u.matrix().transpose()) * 0.5;
    crate::linalg::psd_sqrt(&sym, tol::PSD)
}

/// Run `trials` independent evaluations, each writing `stats` statistics,
/// with per-trial random streams. The result vector is trial-major and is
/// identical for every thread count: trial `i` always draws from stream
/// `(seed, purpose, i)` and lands in slot `i`.
fn per_trial_stats(
    run: McRun,
    purpose: &str,
    stats: usize,
    f: impl Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
) -> Vec<f64> {
    let trials = run.trials;
    let threads = run.threads.max(1);
    let mut values = vec![0.0f64; trials * stats];
    if threads == 1 {
        for (trial, chunk) in values.chunks_mut(stats).enumerate() {
            let mut rng = RngStream::new(run.seed, purpose, trial as u64).rng();
            f(&mut rng, chunk);
        }
        return values;
    }
    let per = trials.div_ceil(threads);
    std::thread::scope(|scope| {
        for (block, chunk) in values.chunks_mut(per * stats).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (offset, slot) in chunk.chunks_mut(stats).enumerate() {
                    let trial = (block * per + offset) as u64;
                    let mut rng = RngStream::new(run.seed, purpose, trial).rng();
                    f(&mut rng, slot);
                }
            });
        }
    });
    values
}

/// Mean and standard error of one statistic column in a trial-major buffer.
fn column_mean_se(values: &[f64], stats: usize, col: usize) -> (f64, f64) {
    let n = values.len() / stats;
    let mut sum = 0.0;
    for t in 0..n {
        sum += values[t * stats + col];
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for t in 0..n {
        let d = values[t * stats + col] - mean;
        ss += d * d;
    }
    let var = ss / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Random reversible transient model: complete conductance graph with
/// conductances in [0.1, 2], reference masses in [0.8, 1.25], killing in
/// [0.2, 1]. Detailed balance holds by construction.
pub fn random_reversible_model(
    rng: &mut ChaCha8Rng,
    min_states: usize,
    max_states: usize,
) -> ChainModel {
    let n = rng.random_range(min_states..=max_states);
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let m = DVector::from_fn(n, |_, _| rng.random_range(0.8..1.25));
    let mut jump = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = rng.random_range(0.1..2.0);
            jump[(i, j)] = c / m[i];
            jump[(j, i)] = c / m[j];
        }
    }
    let kill = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.0));
    ChainModel::from_parts(names, m, jump, kill, true, false)
        .expect("conductance construction always validates")
}

/// Random reversible recurrent cycle: ring conductances in [0.1, 2], masses
/// in [0.8, 1.25], no killing.
pub fn random_recurrent_cycle(
    rng: &mut ChaCha8Rng,
    min_states: usize,
    max_states: usize,
) -> ChainModel {
    let n = rng.random_range(min_states..=max_states);
    let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let m = DVector::from_fn(n, |_, _| rng.random_range(0.8..1.25));
    let mut jump = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        let c = rng.random_range(0.1..2.0);
        jump[(i, j)] += c / m[i];
        jump[(j, i)] += c / m[j];
    }
    let kill = DVector::zeros(n);
    ChainModel::from_parts(names, m, jump, kill, true, true)
        .expect("ring construction always validates")
}
