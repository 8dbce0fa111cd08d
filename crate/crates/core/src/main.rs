use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use tikhonov::config::ExperimentConfig;
use tikhonov::experiment;
use tikhonov::iterations::CsvOptions;
use tikhonov::moduli::{self, QuantitativeModuli, Schedule};
use tikhonov::nat::{BoundedNat, Cap};
use tikhonov::natfn::NatFunction;
use tikhonov::rates::{self, MuVariant};
use tikhonov::verify::Status;

/// Exit code for configuration and parse errors.
const EXIT_CONFIG: u8 = 2;
/// Exit code when a check or validation fails.
const EXIT_FAILED: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "tikhonov", version, about = "Tikhonov-regularized fixed-point iterations with certified rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment config and write <name>.csv and <name>.json.
    Run(RunArgs),
    /// Print ν₁, ν₂, G and the μ family at one k.
    Rates(RatesArgs),
    /// Check (Q₁)–(Q₆) for the schedule and moduli on a finite grid.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the random starting point (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Saturation cap, e.g. 1e18 or a decimal.
    #[arg(long, default_value = "1e18")]
    cap: Cap,
    /// Write every STRIDE-th iterate to the CSV (the last one always).
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Write ‖x_n‖ instead of the coordinates.
    #[arg(long)]
    norms_only: bool,
}

/// Where the schedule and moduli come from.
#[derive(Args, Debug)]
struct Source {
    /// Experiment config supplying schedule and moduli.
    config: Option<PathBuf>,
    /// Stock instance instead of a config: harmonic, sqrt or quarter-sqrt.
    #[arg(long, conflicts_with = "config")]
    instance: Option<String>,
    /// N for --instance.
    #[arg(long, default_value_t = 1, requires = "instance")]
    bound: u64,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[command(flatten)]
    source: Source,
    #[arg(short, long, default_value_t = 0)]
    k: u64,
    /// Counterexample function: identity, affine(a,b), poly(c0,..), table[v0,..], ...
    #[arg(short, long, default_value = "identity")]
    f: String,
    /// a in μ₁ (α ≥ 1/a); defaults to the scheme's factor, or 1.
    #[arg(long)]
    a: Option<u64>,
    #[arg(long, default_value = "1e18")]
    cap: Cap,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
    #[arg(long, default_value_t = 8)]
    k_max: u64,
}

/// Schedule, raw moduli, λ upper end and the ℓ factor of the scheme.
struct Resolved {
    schedule: Schedule,
    moduli: QuantitativeModuli,
    lambda_max: f64,
    ell_factor: u64,
}

fn resolve_source(src: &Source) -> anyhow::Result<Resolved> {
    if let Some(name) = &src.instance {
        let inst = moduli::stock_instance(name, src.bound).with_context(|| format!("unknown instance {name:?}"))?;
        return Ok(Resolved {
            schedule: inst.schedule,
            moduli: inst.moduli,
            lambda_max: inst.lambda_max,
            ell_factor: 1,
        });
    }
    let Some(path) = &src.config else {
        bail!("give a config path or --instance");
    };
    let cfg = ExperimentConfig::load(path)?;
    let (schedule, moduli) = cfg.schedule_and_moduli()?;
    let scheme = cfg.problem.scheme(cfg.scheme)?;
    Ok(Resolved {
        schedule,
        moduli,
        lambda_max: scheme.lambda_max(),
        ell_factor: scheme.km_form()?.ell_factor,
    })
}

fn write_outputs(out: &Path, name: &str, outcome: &experiment::Outcome, opts: CsvOptions) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join(format!("{name}.csv"));
    let mut w = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    outcome.trajectory.write_csv(&mut w, opts)?;
    w.flush()?;
    let json_path = out.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&outcome.report)?;
    text.push('\n');
    fs::write(&json_path, text).with_context(|| format!("writing {}", json_path.display()))?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<u8> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let exp = cfg.resolve(args.seed)?;
    let outcome = experiment::execute(&exp, &args.cap)?;
    let opts = CsvOptions {
        norms_only: args.norms_only,
        thin: args.thin,
    };
    write_outputs(&args.out, &cfg.name, &outcome, opts)?;
    for c in &outcome.report.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Unverifiable => "UNVERIFIABLE",
        };
        println!("{tag:<13}{}", c.name);
    }
    Ok(if outcome.report.passed() { 0 } else { EXIT_FAILED })
}

fn cmd_rates(args: &RatesArgs) -> anyhow::Result<u8> {
    let r = resolve_source(&args.source)?;
    let f: NatFunction = args.f.parse()?;
    let cap = &args.cap;
    let m = &r.moduli;
    let k = BoundedNat::from(args.k);
    let a = args.a.unwrap_or(r.ell_factor);
    println!("k = {}  f = {}  N = {}  ell = {}  cap = {}", args.k, args.f, m.bound, m.ell, cap);
    println!("nu1 = {}", cap.render(&rates::nu1(m, &k, cap)));
    println!("nu2 = {}", cap.render(&rates::nu2(m, &k, cap)));
    let g = rates::rate_g(m.bound, &m.beta_cauchy, &m.lambda_cauchy, &k, cap);
    println!("G = {}", cap.render(&g));
    for v in [
        MuVariant::Mu,
        MuVariant::Mu1(a),
        MuVariant::Mu2,
        MuVariant::Mu3,
        MuVariant::Mu4,
        MuVariant::Mu5,
    ] {
        let label = match v {
            MuVariant::Mu1(a) => format!("mu1[a={a}]"),
            _ => v.name().to_string(),
        };
        println!("{label} = {}", cap.render(&v.eval(m, &k, &f, cap)));
    }
    Ok(0)
}

fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<u8> {
    let r = resolve_source(&args.source)?;
    let report = moduli::validate_q(&r.schedule, &r.moduli, args.horizon, args.k_max, r.lambda_max);
    println!("horizon = {}  k_max = {}", report.horizon, report.k_max);
    for c in &report.conditions {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        print!("{tag:<6}{:<10}checked={}", c.name, c.checked);
        if let Some(v) = c.violations.first() {
            match v.k {
                Some(k) => print!("  first violation at k={k}, n={}: {}", v.n, v.detail),
                None => print!("  first violation at n={}: {}", v.n, v.detail),
            }
        }
        println!();
    }
    Ok(if report.passed() { 0 } else { EXIT_FAILED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
