//! `isokit`: verify isomorphism identities on finite-state chain models,
//! export kernels, and dump seeded sampler trials.
//!
//! Exit codes: 0 all selected checks pass, 1 at least one check failed,
//! 2 usage or validation error. Every file the tool writes ends with a
//! `#` metadata footer line carrying the tool version, the seed (or `none`),
//! and the SHA-256 of the model file.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use sha2::{Digest, Sha256};

use isokit_core::sample::{
    sample_bridge, sample_gaussian, sample_halfint_soup_field, sample_inverse_lt_field,
    sample_path, RngStream,
};
use isokit_core::verify::{
    verify_dynkin, verify_eisenbaum, verify_interlacement, verify_permanental_pairing,
    verify_permanental_sampled, verify_poisson_facts, verify_rayknight, verify_soup_isomorphism,
    McRun,
};
use isokit_core::{kernels, ChainModel, Error, Kernel, VerificationReport, REPORT_SCHEMA};

#[derive(Parser)]
#[command(
    name = "isokit",
    version,
    about = "Isomorphism identities on finite-state Markov chains: verify, export kernels, sample"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify one identity, or every identity the model satisfies the
    /// preconditions for, and report pass/fail per check
    Verify(Box<VerifyArgs>),
    /// Export a kernel matrix as CSV (header row and column of state names)
    Kernel(KernelArgs),
    /// Draw seeded sampler trials, one CSV row per trial
    Sample(SampleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Identity {
    Dynkin,
    Eisenbaum,
    Rayknight,
    Soup,
    Permanental,
    Interlacement,
    Poisson,
    All,
}

#[derive(Parser)]
struct VerifyArgs {
    /// Model JSON file (schema isokit-model/1)
    #[arg(long)]
    model: PathBuf,
    /// Identity to check; `all` runs every identity whose preconditions the
    /// model meets (plus the model-free Poisson checks)
    #[arg(long, value_enum)]
    identity: Identity,
    /// Base state for Dynkin / Eisenbaum / soup / permanental (default: first state)
    #[arg(long)]
    x: Option<String>,
    /// Second state for Dynkin / permanental (default: same as --x)
    #[arg(long)]
    y: Option<String>,
    /// Shift for the Eisenbaum identity (nonzero)
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Recurrence center for Ray-Knight (default: first state)
    #[arg(long)]
    z0: Option<String>,
    /// Local-time level for Ray-Knight / intensity for interlacements
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Maximum moment order to check
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Soup / permanent order parameter; omit to sweep 0.5, 1, 2.5
    #[arg(long)]
    alpha: Option<f64>,
    /// Interlacement weight vector, comma-separated, one entry per state
    /// (default: all ones)
    #[arg(long)]
    nu: Option<String>,
    /// Interlacement load scale (spectral radius of delta * u * diag(nu)
    /// must stay below 1)
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Atom weights for the Poisson checks, comma-separated
    #[arg(long, default_value = "1.0,0.5")]
    weights: String,
    /// Poisson intensity multiplier
    #[arg(long, default_value_t = 1.5)]
    intensity: f64,
    /// Test function f on the Poisson atoms, comma-separated
    #[arg(long, default_value = "0.4,0.2")]
    f: String,
    /// Test function g on the Poisson atoms, comma-separated
    #[arg(long, default_value = "0.3,0.15")]
    g: String,
    /// Monte Carlo trial count for the stochastic checks
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// RNG seed; required whenever a stochastic check runs
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo reduction (results are identical for
    /// any thread count)
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write the full report array as JSON (schema isokit-report/1)
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write a one-line-per-check CSV summary
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the absolute error gate for exact checks (>= machine epsilon)
    #[arg(long)]
    tol_abs: Option<f64>,
    /// Override the relative error gate for exact checks (>= machine epsilon)
    #[arg(long)]
    tol_rel: Option<f64>,
}

#[derive(Parser)]
struct KernelArgs {
    /// Model JSON file (schema isokit-model/1)
    #[arg(long)]
    model: PathBuf,
    /// Kernel kind: `potential`, `alpha:A`, `killed:STATE`, or `tau:STATE:A`
    #[arg(long)]
    kind: String,
    /// Output CSV path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplerKind {
    /// Chain path until killing; row = local-time field
    Path,
    /// Conditioned path from x to y; row = local-time field
    Bridge,
    /// Local times at the inverse local time of level t (recurrent models)
    TauField,
    /// Gaussian vector with the potential kernel as covariance
    Gaussian,
    /// Half-integer loop soup occupation field (sum of k squared Gaussians over 2)
    SoupHalfint,
}

#[derive(Parser)]
struct SampleArgs {
    /// Model JSON file (schema isokit-model/1)
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    sampler: SamplerKind,
    /// Start state for `path` (default: first state)
    #[arg(long)]
    x0: Option<String>,
    /// Bridge start state (default: first state)
    #[arg(long)]
    x: Option<String>,
    /// Bridge end state (default: same as --x)
    #[arg(long)]
    y: Option<String>,
    /// Recurrence center for `tau-field` (default: first state)
    #[arg(long)]
    z0: Option<String>,
    /// Local-time level for `tau-field`
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Half-units for `soup-halfint` (k copies of G^2/2)
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// RNG seed (sampling is always stochastic, so this is mandatory)
    #[arg(long)]
    seed: u64,
    /// Output CSV path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Verify(args) => cmd_verify(&args),
        Cmd::Kernel(args) => cmd_kernel(&args),
        Cmd::Sample(args) => cmd_sample(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

/// Reads the model file once so the reported hash covers exactly the bytes
/// that were parsed.
fn load_model(path: &PathBuf) -> Result<(ChainModel, String), Error> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Schema(format!("cannot read model file {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Schema(format!("model file {} is not UTF-8", path.display())))?;
    let model = ChainModel::from_json_str(&text)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok((model, format!("{:x}", hasher.finalize())))
}

fn footer(seed: Option<u64>, model_hash: &str) -> String {
    let seed = match seed {
        Some(s) => s.to_string(),
        None => "none".into(),
    };
    format!(
        "# isokit {} seed={seed} model_sha256={model_hash}",
        env!("CARGO_PKG_VERSION")
    )
}

fn write_output(path: Option<&PathBuf>, body: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, body)
            .map_err(|e| Error::Schema(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn resolve_state(model: &ChainModel, name: Option<&String>, default: usize) -> Result<usize, Error> {
    match name {
        Some(n) => model.index_of(n),
        None => Ok(default),
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("{what}: cannot parse {part:?} as a number")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// verify

fn cmd_verify(args: &VerifyArgs) -> Result<u8, Error> {
    for (flag, value) in [("--tol-abs", args.tol_abs), ("--tol-rel", args.tol_rel)] {
        if let Some(v) = value {
            if !(v.is_finite() && v >= f64::EPSILON) {
                return Err(Error::Domain(format!(
                    "{flag} must be finite and >= machine epsilon ({:e})",
                    f64::EPSILON
                )));
            }
        }
    }
    let (model, model_hash) = load_model(&args.model)?;

    let selected: Vec<Identity> = match args.identity {
        Identity::All => applicable_identities(&model),
        one => vec![one],
    };
    if selected.is_empty() {
        return Err(Error::Domain(
            "no identity is applicable to this model".into(),
        ));
    }
    let stochastic = selected
        .iter()
        .any(|id| matches!(id, Identity::Rayknight | Identity::Poisson));
    if stochastic && args.seed.is_none() {
        return Err(Error::Domain(
            "--seed is required: the selected checks include Monte Carlo runs".into(),
        ));
    }

    let mut groups: Vec<(&'static str, Vec<VerificationReport>)> = Vec::new();
    for id in &selected {
        groups.push(run_identity(&model, *id, args)?);
    }
    if args.tol_abs.is_some() || args.tol_rel.is_some() {
        for (_, reports) in &mut groups {
            for r in reports.iter_mut() {
                // Overrides re-gate exact checks only; Monte Carlo checks keep
                // their standard-error gate.
                if r.mc_standard_error.is_none() {
                    if let Some(ta) = args.tol_abs {
                        r.tol_abs = ta;
                    }
                    if let Some(tr) = args.tol_rel {
                        r.tol_rel = tr;
                    }
                    r.pass = r.abs_err <= r.tol_abs || r.rel_err <= r.tol_rel;
                }
            }
        }
    }

    let mut total = 0usize;
    let mut failed = 0usize;
    for (name, reports) in &groups {
        let bad: Vec<&VerificationReport> = reports.iter().filter(|r| !r.pass).collect();
        total += reports.len();
        failed += bad.len();
        if bad.is_empty() {
            println!("{name}: {} checks, all pass", reports.len());
        } else {
            println!(
                "{name}: {}/{} checks pass",
                reports.len() - bad.len(),
                reports.len()
            );
            for r in bad {
                println!(
                    "  FAIL {} lhs={} rhs={} abs_err={:.3e} rel_err={:.3e} params={}",
                    r.identity, r.lhs, r.rhs, r.abs_err, r.rel_err, r.params
                );
            }
        }
    }
    let verdict = if failed == 0 { "PASS" } else { "FAIL" };
    println!("{verdict}: {}/{total} checks pass", total - failed);

    let all: Vec<&VerificationReport> = groups.iter().flat_map(|(_, r)| r.iter()).collect();
    let foot = footer(args.seed, &model_hash);
    if let Some(path) = &args.json {
        let body = json_report(&all, args, &model_hash, &foot)?;
        write_output(Some(path), &body)?;
    }
    if let Some(path) = &args.csv {
        let body = csv_report(&all, &foot);
        write_output(Some(path), &body)?;
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

/// The identities whose preconditions the model meets. Poisson checks are
/// model-free and always included.
fn applicable_identities(model: &ChainModel) -> Vec<Identity> {
    let mut out = Vec::new();
    let sym = model.is_symmetric();
    let transient = !model.is_recurrent();
    if sym && transient {
        out.push(Identity::Dynkin);
        out.push(Identity::Eisenbaum);
    }
    if sym && !transient {
        out.push(Identity::Rayknight);
    }
    if transient {
        out.push(Identity::Soup);
        out.push(Identity::Permanental);
    }
    if sym && transient {
        out.push(Identity::Interlacement);
    }
    out.push(Identity::Poisson);
    out
}

fn run_identity(
    model: &ChainModel,
    id: Identity,
    args: &VerifyArgs,
) -> Result<(&'static str, Vec<VerificationReport>), Error> {
    let n = model.len();
    let x = resolve_state(model, args.x.as_ref(), 0)?;
    let y = resolve_state(model, args.y.as_ref(), x)?;
    let z0 = resolve_state(model, args.z0.as_ref(), 0)?;
    let mc = |purpose_seed: Option<u64>| -> Option<McRun> {
        purpose_seed.map(|seed| McRun {
            trials: args.trials,
            seed,
            threads: args.threads,
        })
    };
    match id {
        Identity::Dynkin => Ok(("dynkin", verify_dynkin(model, x, y, args.order)?)),
        Identity::Eisenbaum => Ok(("eisenbaum", verify_eisenbaum(model, x, args.s, args.order)?)),
        Identity::Rayknight => {
            let run = mc(args.seed).ok_or_else(|| {
                Error::Domain("--seed is required for the Ray-Knight Monte Carlo check".into())
            })?;
            Ok((
                "rayknight",
                verify_rayknight(model, z0, args.t, args.order, Some(run))?,
            ))
        }
        Identity::Soup => {
            let alphas = match args.alpha {
                Some(a) => vec![a],
                None => vec![0.5, 1.0, 2.5],
            };
            let mut reports = Vec::new();
            for a in alphas {
                reports.extend(verify_soup_isomorphism(model, a, x, args.order)?);
            }
            Ok(("soup", reports))
        }
        Identity::Permanental => {
            let mut reports = verify_permanental_pairing(model, x, y, 2 * args.order)?;
            // The sampled identification is stochastic; it runs only when a
            // seed was given and the model supports Gaussian sampling.
            if model.is_symmetric() {
                if let Some(run) = mc(args.seed) {
                    reports.extend(verify_permanental_sampled(model, run)?);
                }
            }
            Ok(("permanental", reports))
        }
        Identity::Interlacement => {
            let nu = match &args.nu {
                Some(text) => {
                    let vals = parse_f64_list(text, "--nu")?;
                    if vals.len() != n {
                        return Err(Error::Domain(format!(
                            "--nu needs {n} entries, got {}",
                            vals.len()
                        )));
                    }
                    DVector::from_vec(vals)
                }
                None => DVector::from_element(n, 1.0),
            };
            Ok((
                "interlacement",
                verify_interlacement(model, &nu, args.t, args.delta, args.order)?,
            ))
        }
        Identity::Poisson => {
            let weights = parse_f64_list(&args.weights, "--weights")?;
            let f = parse_f64_list(&args.f, "--f")?;
            let g = parse_f64_list(&args.g, "--g")?;
            let run = mc(args.seed).ok_or_else(|| {
                Error::Domain("--seed is required for the Poisson Monte Carlo checks".into())
            })?;
            Ok((
                "poisson",
                verify_poisson_facts(&weights, args.intensity, &f, &g, run)?,
            ))
        }
        Identity::All => unreachable!("expanded before dispatch"),
    }
}

fn json_report(
    reports: &[&VerificationReport],
    args: &VerifyArgs,
    model_hash: &str,
    foot: &str,
) -> Result<String, Error> {
    let mut meta = serde_json::Map::new();
    meta.insert(
        "tool_version".into(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    meta.insert(
        "model_sha256".into(),
        serde_json::Value::String(model_hash.into()),
    );
    if let Some(seed) = args.seed {
        meta.insert("seed".into(), serde_json::Value::from(seed));
    }
    let doc = serde_json::json!({
        "schema": REPORT_SCHEMA,
        "meta": serde_json::Value::Object(meta),
        "reports": reports,
    });
    let body = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Numerical(format!("serialize report: {e}")))?;
    Ok(format!("{body}\n{foot}\n"))
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn csv_report(reports: &[&VerificationReport], foot: &str) -> String {
    let mut out = String::from(
        "identity,lhs,rhs,abs_err,rel_err,tol_abs,tol_rel,mc_standard_error,pass,params\n",
    );
    for r in reports {
        let se = match r.mc_standard_error {
            Some(v) => v.to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.identity),
            r.lhs,
            r.rhs,
            r.abs_err,
            r.rel_err,
            r.tol_abs,
            r.tol_rel,
            se,
            r.pass,
            csv_field(&r.params.to_string()),
        ));
    }
    out.push_str(foot);
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// kernel

fn cmd_kernel(args: &KernelArgs) -> Result<u8, Error> {
    let (model, model_hash) = load_model(&args.model)?;
    let kernel = build_kernel(&model, &args.kind)?;
    let mut out = String::from("state");
    for name in kernel.states() {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for (i, name) in kernel.states().iter().enumerate() {
        out.push_str(&csv_field(name));
        for j in 0..kernel.len() {
            out.push(',');
            out.push_str(&kernel.value(i, j).to_string());
        }
        out.push('\n');
    }
    out.push_str(&footer(None, &model_hash));
    out.push('\n');
    write_output(args.out.as_ref(), &out)?;
    Ok(0)
}

fn build_kernel(model: &ChainModel, kind: &str) -> Result<Kernel, Error> {
    let parts: Vec<&str> = kind.split(':').collect();
    let parse_alpha = |text: &str| -> Result<f64, Error> {
        text.parse::<f64>()
            .map_err(|_| Error::Schema(format!("kernel kind: cannot parse alpha {text:?}")))
    };
    match parts.as_slice() {
        ["potential"] => kernels::potential(model),
        ["alpha", a] => kernels::alpha_potential(model, parse_alpha(a)?),
        ["killed", state] => kernels::killed_potential(model, model.index_of(state)?),
        ["tau", state, a] => {
            kernels::tau_potential(model, model.index_of(state)?, parse_alpha(a)?)
        }
        _ => Err(Error::Schema(format!(
            "unknown kernel kind {kind:?}; expected potential, alpha:A, killed:STATE, or tau:STATE:A"
        ))),
    }
}

// ---------------------------------------------------------------------------
// sample

fn cmd_sample(args: &SampleArgs) -> Result<u8, Error> {
    let (model, model_hash) = load_model(&args.model)?;
    let n = model.len();
    let mut out = String::from("trial");
    for name in model.state_names() {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');

    // One independent stream per trial, keyed by sampler name, so output is
    // bit-identical for a fixed seed regardless of batching.
    let purpose = match args.sampler {
        SamplerKind::Path => "cli-path",
        SamplerKind::Bridge => "cli-bridge",
        SamplerKind::TauField => "cli-tau-field",
        SamplerKind::Gaussian => "cli-gaussian",
        SamplerKind::SoupHalfint => "cli-soup-halfint",
    };
    let x0 = resolve_state(&model, args.x0.as_ref(), 0)?;
    let x = resolve_state(&model, args.x.as_ref(), 0)?;
    let y = resolve_state(&model, args.y.as_ref(), x)?;
    let z0 = resolve_state(&model, args.z0.as_ref(), 0)?;
    let kernel = match args.sampler {
        SamplerKind::Gaussian | SamplerKind::SoupHalfint => Some(kernels::potential(&model)?),
        _ => None,
    };

    for trial in 0..args.trials {
        let mut rng = RngStream::new(args.seed, purpose, trial as u64).rng();
        let row: DVector<f64> = match args.sampler {
            SamplerKind::Path => sample_path(&model, x0, &mut rng)?.1.values().clone(),
            SamplerKind::Bridge => sample_bridge(&model, x, y, &mut rng)?.1.values().clone(),
            SamplerKind::TauField => sample_inverse_lt_field(&model, z0, args.t, &mut rng)?
                .1
                .values()
                .clone(),
            SamplerKind::Gaussian => {
                let kernel = kernel.as_ref().expect("kernel built above");
                sample_gaussian(kernel, 1, &mut rng)?.remove(0)
            }
            SamplerKind::SoupHalfint => {
                let kernel = kernel.as_ref().expect("kernel built above");
                sample_halfint_soup_field(kernel, args.k, &mut rng)?
                    .values()
                    .clone()
            }
        };
        out.push_str(&trial.to_string());
        for i in 0..n {
            out.push(',');
            out.push_str(&row[i].to_string());
        }
        out.push('\n');
    }
    out.push_str(&footer(Some(args.seed), &model_hash));
    out.push('\n');
    write_output(args.out.as_ref(), &out)?;
    Ok(0)
}
