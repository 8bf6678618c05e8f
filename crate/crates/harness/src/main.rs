use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sparsegreedy_harness::instances::{gen_compressed_sensing, gen_low_rank, gen_lp_approx, InstanceCertificate};
use sparsegreedy_harness::io::{write_dictionary_csv, write_vector_csv};
use sparsegreedy_harness::verify::{run_verify, VerifyOptions};
use sparsegreedy_harness::{run_experiment, ExperimentConfig, HarnessError, InvariantTolerances, Summary};

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "sparsegreedy", version, about = "Greedy sparse minimization experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for traces, summaries and generated instances.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Slack for invariant checks.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Overrides the config iteration cap.
    #[arg(long = "max-m", global = true)]
    max_m: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment.
    Run { config: PathBuf },
    /// Run the invariant suite.
    Verify,
    /// Report the fitted slope and envelope ratio of an experiment.
    Rates {
        config: PathBuf,
        /// Exit 1 unless the slope is at most this value.
        #[arg(long, default_value_t = -0.4, allow_hyphen_values = true)]
        max_slope: f64,
    },
    /// Write a generated instance to files.
    Gen {
        kind: GenKind,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        s: usize,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0.0)]
        min_coef: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Cs,
    LowRank,
    Lp,
}

fn load_config(path: &Path, g: &Global) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = g.max_m {
        cfg.max_m = m;
    }
    if g.out.is_some() {
        cfg.trace_csv.get_or_insert_with(|| "trace.csv".into());
        cfg.summary_json.get_or_insert_with(|| "summary.json".into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn tolerances(g: &Global) -> InvariantTolerances {
    InvariantTolerances { monotone: g.tol, weakness: g.tol, ..Default::default() }
}

fn run_cmd(g: &Global, path: &Path) -> Result<(Summary, u8), HarnessError> {
    let cfg = load_config(path, g)?;
    let out = run_experiment(&cfg, g.out.as_deref(), &tolerances(g))?;
    let code = if out.summary.all_pass() { 0 } else { EXIT_VIOLATION };
    Ok((out.summary, code))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

fn rates_cmd(g: &Global, path: &Path, max_slope: f64) -> Result<u8, HarnessError> {
    let (summary, code) = run_cmd(g, path)?;
    println!("slope {}", fmt_opt(summary.slope));
    println!("envelope_ratio {}", fmt_opt(summary.envelope_ratio));
    if !g.quiet {
        println!("iterations {} stopping_reason {}", summary.iterations, summary.stopping_reason);
    }
    let slope_ok = summary.slope.is_some_and(|s| s <= max_slope);
    Ok(if slope_ok && code == 0 { 0 } else { EXIT_VIOLATION })
}

fn verify_cmd(g: &Global) -> u8 {
    let opts = VerifyOptions { seed: g.seed.unwrap_or(1), tol: g.tol, ..Default::default() };
    let report = run_verify(&opts);
    for c in &report.checks {
        if !g.quiet || !c.passed {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if report.passed() {
        0
    } else {
        EXIT_VIOLATION
    }
}

#[derive(Serialize)]
struct CertificateFile {
    l1_mass: f64,
    reference: Option<f64>,
    /// `(atom id or -1, sign, coefficient)`
    terms: Vec<(i64, i8, f64)>,
    /// Rank-one factors `(u, v)` in term order; empty for finite dictionaries.
    factors: Vec<(Vec<f64>, Vec<f64>)>,
}

impl From<&InstanceCertificate> for CertificateFile {
    fn from(c: &InstanceCertificate) -> Self {
        let mut factors = Vec::new();
        let terms = c
            .terms
            .iter()
            .map(|(a, coef)| {
                if let sparsegreedy::Atom::RankOne { u, v, .. } = a {
                    factors.push((u.clone(), v.clone()));
                }
                (a.id().map_or(-1, |i| i as i64), a.sign().as_i8(), *coef)
            })
            .collect();
        Self { l1_mass: c.l1_mass, reference: c.reference, terms, factors }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).map_err(|e| HarnessError::io(&p, e))
}

#[allow(clippy::too_many_arguments)]
fn gen_cmd(
    g: &Global,
    kind: GenKind,
    k: usize,
    n: usize,
    s: usize,
    mass: f64,
    rank: usize,
    r: f64,
    q: f64,
    min_coef: f64,
) -> Result<(), HarnessError> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let seed = g.seed.unwrap_or(1);
    let (target, cert) = match kind {
        GenKind::Cs => {
            let inst = gen_compressed_sensing(k, n, s, mass, seed, min_coef)?;
            write_dictionary_csv(&inst.dictionary, create(&dir, "dictionary.csv")?)?;
            (inst.target, inst.certificate)
        }
        GenKind::Lp => {
            let inst = gen_lp_approx(n, r, q, seed)?;
            write_dictionary_csv(&inst.dictionary, create(&dir, "dictionary.csv")?)?;
            (inst.target, inst.certificate)
        }
        GenKind::LowRank => {
            let inst = gen_low_rank(n, rank, mass, seed)?;
            (inst.target, inst.certificate)
        }
    };
    write_vector_csv(&target, create(&dir, "target.csv")?)?;
    let json = serde_json::to_string_pretty(&CertificateFile::from(&cert)).expect("certificate serializes");
    let p = dir.join("certificate.json");
    fs::write(&p, json + "\n").map_err(|e| HarnessError::io(&p, e))?;
    if !g.quiet {
        println!("wrote instance to {}", dir.display());
    }
    Ok(())
}

fn report_error(e: &HarnessError) -> u8 {
    eprintln!("error: {e}");
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_VIOLATION
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let code = match &cli.command {
        Command::Run { config } => match run_cmd(g, config) {
            Ok((summary, code)) => {
                if !g.quiet {
                    println!("{}", summary.to_json());
                }
                code
            }
            Err(e) => report_error(&e),
        },
        Command::Verify => verify_cmd(g),
        Command::Rates { config, max_slope } => rates_cmd(g, config, *max_slope).unwrap_or_else(|e| report_error(&e)),
        Command::Gen { kind, k, n, s, mass, rank, r, q, min_coef } => {
            match gen_cmd(g, *kind, *k, *n, *s, *mass, *rank, *r, *q, *min_coef) {
                Ok(()) => 0,
                Err(e) => report_error(&e),
            }
        }
    };
    ExitCode::from(code)
}
