//! Command-line front end for the `mzt` binary.
//!
//! A `--config FILE` of `key=value` lines is expanded into `--key value`
//! flags ahead of the command line, so explicit flags win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::analytic::{budget_coherent, budget_twinfock, chi, chi0_zeros, theta_single_pass, BudgetReport, PhysicalParams};
use crate::error::{invalid, Result, SimError};
use crate::joint::InteractionSettings;
use crate::protocol::{
    settings_at_chi0_zero, GhzBuilder, InputField, ProtocolTranscript, Swapper, TeleportSetup, TeleportSummary,
    Teleporter,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Header of the sweep CSV for the default coherent photon numbers.
pub const SWEEP_HEADER_DEFAULT: &str = "Ntheta,eta,eps_N100,eps_N1000";

#[derive(Debug, Parser)]
#[command(name = "mzt", version, about = "Interferometric atomic-qubit entanglement and teleportation simulator")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intrinsic false-null error versus N*theta as CSV.
    Sweep(SweepArgs),
    /// Monte Carlo teleportation.
    Teleport(TeleportArgs),
    /// Experimental parameter budget.
    Budget(BudgetArgs),
    /// Zeros of chi_0.
    Zeros(ZerosArgs),
    /// Three-qubit GHZ preparation.
    Ghz(GhzArgs),
    /// Entanglement swapping.
    Swap(SwapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    Coherent,
    Twinfock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetKind {
    Coherent,
    Twinfock,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.0)]
    pub ntheta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub ntheta_max: f64,
    /// Number of grid points, endpoints included.
    #[arg(long, default_value_t = 301)]
    pub steps: usize,
    /// Twin-Fock N used for the eta column.
    #[arg(long = "ref-N", alias = "ref-n", default_value_t = 100)]
    pub ref_n: usize,
    /// Coherent photon numbers, one eps column each.
    #[arg(long, value_delimiter = ',', default_values_t = [100.0, 1000.0])]
    pub coherent_n: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FieldArgs {
    #[arg(long, value_enum)]
    pub input: InputKind,
    /// Mean photon number (coherent) or N of |N,N> (twin-Fock).
    #[arg(long)]
    pub photons: f64,
    /// Single-pass phase in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub waist: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Operate at the first zero of chi_0 (twin-Fock only).
    #[arg(long)]
    pub at_zero: bool,
    #[arg(long, default_value_t = 1)]
    pub passes: u32,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-trial JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AmplitudeArgs {
    /// Amplitude of |0>, as `re` or `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    pub c0: Option<String>,
    /// Amplitude of |1>, as `re` or `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    pub c1: Option<String>,
    /// Bloch polar angle; `c0 = cos(t/2)`, `c1 = e^{i phi} sin(t/2)`.
    #[arg(long, allow_hyphen_values = true)]
    pub bloch_theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub bloch_phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TeleportArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub amplitudes: AmplitudeArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GhzArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SwapArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub amplitudes: AmplitudeArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long, value_enum)]
    pub mode: BudgetKind,
    /// Target false-null probability (coherent).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Target spontaneous-emission probability (coherent).
    #[arg(long)]
    pub p_sp: Option<f64>,
    /// Target fidelity (twin-Fock).
    #[arg(long)]
    pub fidelity: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub w_over_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub passes: u32,
    /// Machine-readable key=value report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZerosArgs {
    #[arg(long)]
    pub photons: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl CliError {
    fn invalid(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: msg.into(),
        }
    }
}

/// Text produced by a command: `stdout` is printed, `file` goes to `--out`.
#[derive(Debug, Default, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub file: Option<(PathBuf, String)>,
}

/// `%.12g`-style formatting.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, e) = sci.split_once('e').expect("exponent present");
    let exp: i32 = e.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn fmt_label(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        fmt_g12(n)
    }
}

/// Sweep CSV: `Ntheta,eta,eps_N{..}` with `eta = chi_0(Ntheta/refN)^2`
/// and `eps = exp(-(Ntheta)^2/N)`.
pub fn sweep_csv(ntheta_min: f64, ntheta_max: f64, steps: usize, ref_n: usize, coherent_n: &[f64]) -> Result<String> {
    if steps == 0 {
        return Err(invalid("sweep grid is empty"));
    }
    if !(ntheta_min >= 0.0 && ntheta_max <= 3.0 && ntheta_min <= ntheta_max) {
        return Err(invalid(format!("Ntheta grid [{ntheta_min}, {ntheta_max}] must lie within [0, 3]")));
    }
    if steps == 1 && ntheta_min != ntheta_max {
        return Err(invalid("a single-point grid needs ntheta-min = ntheta-max"));
    }
    if ref_n == 0 {
        return Err(invalid("reference N must be at least 1"));
    }
    if coherent_n.iter().any(|&n| !(n >= 1.0 && n.is_finite())) {
        return Err(invalid("coherent photon numbers must be at least 1"));
    }
    let mut s = String::from("Ntheta,eta");
    for &n in coherent_n {
        let _ = write!(s, ",eps_N{}", fmt_label(n));
    }
    s.push('\n');
    for i in 0..steps {
        let x = if steps == 1 {
            ntheta_min
        } else {
            ntheta_min + (ntheta_max - ntheta_min) * i as f64 / (steps - 1) as f64
        };
        let c0 = chi(0, ref_n, x / ref_n as f64)?;
        let _ = write!(s, "{},{}", fmt_g12(x), fmt_g12(c0 * c0));
        for &n in coherent_n {
            let _ = write!(s, ",{}", fmt_g12((-x * x / n).exp()));
        }
        s.push('\n');
    }
    Ok(s)
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| {
        p.parse::<f64>()
            .map_err(|_| CliError::invalid(format!("cannot parse amplitude component '{p}'")))
    };
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(CliError::invalid(format!("amplitude '{s}' must be 're' or 're,im'"))),
    }
}

fn amplitudes(a: &AmplitudeArgs) -> std::result::Result<(Complex64, Complex64), CliError> {
    match (&a.c0, &a.c1, a.bloch_theta) {
        (Some(c0), Some(c1), None) => Ok((parse_complex(c0)?, parse_complex(c1)?)),
        (None, None, Some(t)) => {
            let phi = a.bloch_phi.unwrap_or(0.0);
            Ok((
                Complex64::new((t / 2.0).cos(), 0.0),
                Complex64::from_polar((t / 2.0).sin(), phi),
            ))
        }
        (None, None, None) => Err(CliError::invalid("give --c0 and --c1, or --bloch-theta")),
        _ => Err(CliError::invalid("--c0/--c1 and --bloch-theta are mutually exclusive")),
    }
}

/// Field, interaction settings and (when physical parameters are given) `Gamma/Delta`.
pub fn resolve_field(f: &FieldArgs) -> std::result::Result<(InputField, InteractionSettings, Option<f64>), CliError> {
    let field = match f.input {
        InputKind::Coherent => {
            if !(f.photons > 0.0 && f.photons.is_finite()) {
                return Err(CliError::invalid("--photons must be positive"));
            }
            InputField::Coherent { mean_photons: f.photons }
        }
        InputKind::Twinfock => {
            if !(f.photons >= 1.0 && f.photons.fract() == 0.0) {
                return Err(CliError::invalid("--photons must be a positive integer for twin-Fock input"));
            }
            InputField::TwinFock { n: f.photons as usize }
        }
    };
    let physical = [f.lambda, f.waist, f.gamma, f.delta];
    let n_physical = physical.iter().filter(|v| v.is_some()).count();
    if n_physical != 0 && n_physical != 4 {
        return Err(CliError::invalid("--lambda, --waist, --gamma and --delta must be given together"));
    }
    let sources = f.theta.is_some() as u8 + (n_physical == 4) as u8 + f.at_zero as u8;
    if sources != 1 {
        return Err(CliError::invalid(
            "give exactly one of --theta, the physical parameters, or --at-zero",
        ));
    }
    if f.passes == 0 {
        return Err(CliError::invalid("--passes must be at least 1"));
    }
    let mut gamma_over_delta = None;
    let settings = if let Some(theta) = f.theta {
        InteractionSettings::new(theta, f.passes)?
    } else if f.at_zero {
        match field {
            InputField::TwinFock { n } => settings_at_chi0_zero(n, f.passes)?,
            InputField::Coherent { .. } => return Err(CliError::invalid("--at-zero requires twin-Fock input")),
        }
    } else {
        let p = PhysicalParams::new(
            f.lambda.unwrap_or_default(),
            f.waist.unwrap_or_default(),
            f.gamma.unwrap_or_default(),
            f.delta.unwrap_or_default(),
            f.passes,
        )?;
        for w in p.warnings() {
            eprintln!("warning: {w}");
        }
        gamma_over_delta = Some(p.gamma_over_delta());
        InteractionSettings::new(theta_single_pass(&p), f.passes)?
    };
    Ok((field, settings, gamma_over_delta))
}

fn kv_lines(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_g12).unwrap_or_else(|| "none".into())
}

fn teleport_summary_kv(seed: u64, s: &TeleportSummary) -> Vec<(String, String)> {
    vec![
        ("seed".into(), seed.to_string()),
        ("trials".into(), s.trials.to_string()),
        ("null_count".into(), s.null_count.to_string()),
        ("null_fraction".into(), fmt_g12(s.null_fraction)),
        ("mean_fidelity".into(), fmt_g12(s.mean_fidelity)),
        ("mean_fidelity_null".into(), opt_num(s.mean_fidelity_null)),
        ("mean_fidelity_non_null".into(), opt_num(s.mean_fidelity_non_null)),
        ("min_fidelity_non_null".into(), opt_num(s.min_fidelity_non_null)),
        ("verified_fraction_null".into(), opt_num(s.verified_fraction_null)),
        ("verified_sigma_null".into(), opt_num(s.verified_sigma_null)),
        ("verified_fraction".into(), fmt_g12(s.verified_fraction)),
    ]
}

/// Teleportation Monte Carlo: summary and JSON-lines transcripts.
pub fn teleport_run(
    setup: TeleportSetup,
    seed: u64,
    trials: u64,
) -> Result<(String, TeleportSummary)> {
    if trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let mut tp = Teleporter::new(setup)?;
    let mut lines = String::new();
    let mut records: Vec<ProtocolTranscript> = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let rec = tp.trial(seed, t)?;
        lines.push_str(&serde_json::to_string(&rec).expect("transcript serialises"));
        lines.push('\n');
        records.push(rec);
    }
    Ok((lines, TeleportSummary::from_transcripts(&records)))
}

fn report_text(r: &BudgetReport) -> String {
    let mut s = String::new();
    for (k, v) in r.key_values() {
        let v = v.parse::<f64>().map(fmt_g12).unwrap_or(v);
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

fn human_budget(r: &BudgetReport) -> String {
    let mut s = String::new();
    let line = |s: &mut String, label: &str, v: Option<f64>| {
        if let Some(v) = v {
            let _ = writeln!(s, "{label:<40} {}", fmt_g12(v));
        }
    };
    match r.mode {
        crate::analytic::BudgetMode::Coherent => {
            let _ = writeln!(s, "coherent budget (W/lambda = {})", fmt_g12(r.w_over_lambda));
            line(&mut s, "false-null probability epsilon", Some(r.false_null));
            line(&mut s, "spontaneous emission P_sp", Some(r.p_sp));
            line(&mut s, "passes M (exact constant 16pi/3)", r.passes_required_exact);
            line(&mut s, "passes M (rounded constant 16)", r.passes_required_rounded);
            line(&mut s, "N (Gamma/Delta)^2 (exact)", r.n_gamma_ratio_sq);
            line(&mut s, "N (Gamma/Delta)^2 (rounded formula)", r.n_gamma_ratio_sq_rounded);
            line(&mut s, "mean upper-port count", r.mean_upper_count);
        }
        crate::analytic::BudgetMode::TwinFock => {
            let _ = writeln!(
                s,
                "twin-Fock budget (W/lambda = {}, M = {})",
                fmt_g12(r.w_over_lambda),
                r.passes.unwrap_or(1)
            );
            line(&mut s, "target fidelity", Some(r.fidelity_target));
            line(&mut s, "N (rounded constant)", r.n_required.map(|n| n as f64));
            line(&mut s, "N (exact constant)", r.n_required_exact_constant.map(|n| n as f64));
            line(&mut s, "N (~200/N scaling)", r.n_required_quoted_scaling.map(|n| n as f64));
            line(&mut s, "P_sp", Some(r.p_sp));
            line(&mut s, "theta_eff", r.theta_eff);
            line(&mut s, "N theta at the located zero", r.x0_at_n_required);
        }
    }
    line(&mut s, "composite fidelity estimate", Some(r.fidelity_estimate));
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

/// Runs a parsed command, producing output text without touching the filesystem.
pub fn execute(cmd: &Command) -> std::result::Result<Output, CliError> {
    match cmd {
        Command::Sweep(a) => {
            let csv = sweep_csv(a.ntheta_min, a.ntheta_max, a.steps, a.ref_n, &a.coherent_n)?;
            Ok(match &a.out {
                Some(p) => Output {
                    stdout: String::new(),
                    file: Some((p.clone(), csv)),
                },
                None => Output {
                    stdout: csv,
                    file: None,
                },
            })
        }
        Command::Teleport(a) => {
            let (field, settings, gamma_over_delta) = resolve_field(&a.field)?;
            let (c0, c1) = amplitudes(&a.amplitudes)?;
            let mut setup = TeleportSetup::new(c0, c1, field, settings);
            setup.gamma_over_delta = gamma_over_delta;
            let (lines, summary) = teleport_run(setup, a.run.seed, a.run.trials)?;
            let mut kv = teleport_summary_kv(a.run.seed, &summary);
            kv.insert(1, ("theta_eff".into(), fmt_g12(settings.theta_eff())));
            kv.insert(2, ("false_null".into(), fmt_g12(field.false_null(settings.theta_eff())?)));
            Ok(Output {
                stdout: kv_lines(&kv),
                file: a.run.out.clone().map(|p| (p, lines)),
            })
        }
        Command::Ghz(a) => {
            let (field, settings, _) = resolve_field(&a.field)?;
            if a.run.trials == 0 {
                return Err(CliError::invalid("--trials must be at least 1"));
            }
            let mut g = GhzBuilder::new(field, settings)?;
            let mut lines = String::new();
            let mut total = 0.0;
            let mut worst = f64::INFINITY;
            for t in 0..a.run.trials {
                let r = g.trial(a.run.seed, t)?;
                total += r.fidelity;
                worst = worst.min(r.fidelity);
                let rec = serde_json::json!({
                    "seed": a.run.seed,
                    "trial": t,
                    "outcomes": r.outcomes,
                    "probability": r.probability,
                    "corrections": r.corrections,
                    "first_round_fidelity": r.first_round_fidelity,
                    "fidelity": r.fidelity,
                    "purity": r.state.purity(),
                });
                lines.push_str(&rec.to_string());
                lines.push('\n');
            }
            let kv = vec![
                ("seed".to_string(), a.run.seed.to_string()),
                ("trials".into(), a.run.trials.to_string()),
                ("mean_fidelity".into(), fmt_g12(total / a.run.trials as f64)),
                ("min_fidelity".into(), fmt_g12(worst)),
            ];
            Ok(Output {
                stdout: kv_lines(&kv),
                file: a.run.out.clone().map(|p| (p, lines)),
            })
        }
        Command::Swap(a) => {
            let (field, settings, _) = resolve_field(&a.field)?;
            let (c0, c1) = amplitudes(&a.amplitudes)?;
            if a.run.trials == 0 {
                return Err(CliError::invalid("--trials must be at least 1"));
            }
            let mut s = Swapper::new(c0, c1, field, settings)?;
            let mut lines = String::new();
            let mut total = 0.0;
            let mut worst = f64::INFINITY;
            for t in 0..a.run.trials {
                let r = s.trial(a.run.seed, t)?;
                total += r.fidelity;
                worst = worst.min(r.fidelity);
                let rec = serde_json::json!({
                    "seed": a.run.seed,
                    "trial": t,
                    "outcome": r.outcome,
                    "probability": r.probability,
                    "source_result": r.source_result,
                    "corrections": r.corrections,
                    "fidelity": r.fidelity,
                    "purity": r.state.purity(),
                });
                lines.push_str(&rec.to_string());
                lines.push('\n');
            }
            let kv = vec![
                ("seed".to_string(), a.run.seed.to_string()),
                ("trials".into(), a.run.trials.to_string()),
                ("mean_fidelity".into(), fmt_g12(total / a.run.trials as f64)),
                ("min_fidelity".into(), fmt_g12(worst)),
            ];
            Ok(Output {
                stdout: kv_lines(&kv),
                file: a.run.out.clone().map(|p| (p, lines)),
            })
        }
        Command::Budget(a) => {
            let report = match a.mode {
                BudgetKind::Coherent => {
                    let eps = a.epsilon.ok_or_else(|| CliError::invalid("--epsilon is required"))?;
                    let p = a.p_sp.unwrap_or(eps);
                    budget_coherent(eps, p, a.w_over_lambda)?
                }
                BudgetKind::Twinfock => {
                    let f = a.fidelity.ok_or_else(|| CliError::invalid("--fidelity is required"))?;
                    budget_twinfock(f, a.w_over_lambda, a.passes)?
                }
            };
            let kv = report_text(&report);
            let mut stdout = human_budget(&report);
            stdout.push('\n');
            stdout.push_str(&kv);
            Ok(Output {
                stdout,
                file: a.out.clone().map(|p| (p, kv)),
            })
        }
        Command::Zeros(a) => {
            let zs = chi0_zeros(a.photons, a.count)?;
            let mut s = String::from("k,theta,Ntheta\n");
            for (i, z) in zs.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", i + 1, fmt_g12(z.theta), fmt_g12(z.n_theta));
            }
            Ok(match &a.out {
                Some(p) => Output {
                    stdout: String::new(),
                    file: Some((p.clone(), s)),
                },
                None => Output { stdout: s, file: None },
            })
        }
    }
}

/// Expands `key=value` lines into `--key value` arguments.
pub fn config_args(text: &str) -> std::result::Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::invalid(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::invalid(format!("config line {}: invalid key '{}'", i + 1, k.trim())));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

fn find_config(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Parses the full argument vector (program name first), merging `--config`.
pub fn parse_args(args: Vec<String>) -> std::result::Result<Cli, clap::Error> {
    let Some(path) = find_config(&args) else {
        return Cli::try_parse_from(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        clap::Error::raw(clap::error::ErrorKind::Io, format!("cannot read config '{path}': {e}\n"))
    })?;
    let extra = config_args(&text)
        .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{}\n", e.message)))?;
    // subcommand flags must follow the subcommand name
    let sub_pos = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| ["sweep", "teleport", "budget", "zeros", "ghz", "swap"].contains(&a.as_str()))
        .map(|(i, _)| i + 1)
        .unwrap_or(args.len());
    let mut merged = args[..sub_pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[sub_pos..]);
    Cli::try_parse_from(merged)
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            if let Some((path, contents)) = &out.file {
                if let Err(e) = write_atomic(path, contents) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return EXIT_INVALID;
                }
            }
            print!("{}", out.stdout);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
