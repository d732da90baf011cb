use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use modsym_cli::commands::{self, VERSION};
use modsym_cli::config::RunConfig;
use modsym_cli::{exit_code, verify, EXIT_GATE};

#[derive(Parser)]
#[command(name = "modsym", version, about = "Modular symbols of weight-2 newforms and their statistics")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` configuration file, applied before the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Conductor (squarefree).
    #[arg(long, global = true)]
    q: Option<u64>,
    /// Weierstrass coefficients a1,a2,a3,a4,a6.
    #[arg(long, global = true, allow_hyphen_values = true)]
    curve: Option<String>,
    /// Denominator bound.
    #[arg(long = "M", global = true)]
    m: Option<u64>,
    /// Cusp class `gcd(c, q)`, or `all`.
    #[arg(long, global = true)]
    d: Option<String>,
    /// Interval `x0:x1` inside [0, 1).
    #[arg(long, global = true)]
    interval: Option<String>,
    /// Absolute tolerance of the period table.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true)]
    shards: Option<usize>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Directory for CSV reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// L-value fixture with lines `L1 <v>` and `L1p <v>`.
    #[arg(long, global = true)]
    fixture: Option<PathBuf>,
    /// Seed for sampled checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Fourier coefficients.
    #[arg(long, global = true)]
    coeffs: Option<usize>,
    /// `theory` (c_f log c) or `fitted` (free fit) standardization.
    #[arg(long, global = true)]
    normalization: Option<String>,
    /// Flip the Atkin–Lehner sign at this prime (negative testing).
    #[arg(long, global = true)]
    flip_sign: Option<u64>,
    /// Print summaries in the imaginary convention <r> = i*m.
    #[arg(long, global = true)]
    paper_sign: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute or refresh the coefficient cache.
    Coeffs,
    /// Build the period table and report Manin relation residuals.
    Table,
    /// Evaluate one symbol a/c.
    Symbol {
        #[arg(allow_hyphen_values = true)]
        a: i64,
        c: i64,
    },
    /// Per-denominator moment aggregates (aggregates.csv).
    Scan,
    /// Variance slope and shift fits per cusp class (fit.csv).
    Fit,
    /// Standardized value distribution (dist.csv).
    Dist,
    /// Contiguous sums against the limit profile (contig.csv).
    Contig,
    /// Weyl sums of the scanned fractions (weyl.csv).
    Weyl,
    /// Closed-form constants as JSON.
    Theory,
    /// Run every invariant gate and print a JSON verdict.
    Verify,
}

fn build_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags: [(&str, Option<String>); 14] = [
        ("curve", o.curve.clone()),
        ("q", o.q.map(|v| v.to_string())),
        ("M", o.m.map(|v| v.to_string())),
        ("d", o.d.clone()),
        ("interval", o.interval.clone()),
        ("tol", o.tol.map(|v| v.to_string())),
        ("shards", o.shards.map(|v| v.to_string())),
        ("cache_dir", o.cache_dir.as_ref().map(|p| p.display().to_string())),
        ("out_dir", o.out_dir.as_ref().map(|p| p.display().to_string())),
        ("fixture", o.fixture.as_ref().map(|p| p.display().to_string())),
        ("seed", o.seed.map(|v| v.to_string())),
        ("coeffs", o.coeffs.map(|v| v.to_string())),
        ("normalization", o.normalization.clone()),
        ("flip_sign", o.flip_sign.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if o.paper_sign {
        cfg.paper_sign = true;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = build_config(&cli.opts)?;
    let paper = cfg.paper_sign;
    let fp = cfg.fingerprint();
    match &cli.command {
        Command::Coeffs => {
            let out = commands::cmd_coeffs(&cfg)?;
            println!("wrote {} coefficients to {}", out.n, out.path.display());
            println!("a(1..{}) = {:?}", out.first.len(), out.first);
            println!("sha256 {}", out.sha256);
        }
        Command::Table => {
            let out = commands::cmd_table(&cfg)?;
            println!("{} entries in {}", out.entries, out.path.display());
            println!(
                "two-term residual {:e}, three-term residual {:e}",
                out.residuals.two_term, out.residuals.three_term
            );
        }
        Command::Symbol { a, c } => {
            let out = commands::cmd_symbol(&cfg, *a, *c)?;
            let v = out.value;
            if out.reduced {
                println!("note: {}/{} reduced to {}", a, c, v.r);
            }
            println!("r = {}  d = {}  c(r) = {:.12}", v.r, v.d, out.c_r);
            let real = format!("m_minus = {:.15e}  m_plus = {:.15e}", v.m_minus, v.m_plus);
            let paper_line = format!("<r> = {:.15e}i  <r>^+ = {:.15e}", v.m_minus, v.m_plus);
            if paper {
                println!("imag: {paper_line}\nreal: {real}");
            } else {
                println!("real: {real}\nimag: {paper_line}");
            }
        }
        Command::Scan => {
            let out = commands::cmd_scan(&cfg)?;
            println!("{} rows written to {} (fingerprint {fp})", out.rows.len(), out.path.display());
            for (lo, hi, m) in &out.mean_decay.dyadic_max {
                println!("c in ({lo}, {hi}]: max |E[f,c]|*sqrt(c) = {m:.3e}");
            }
        }
        Command::Fit => {
            let out = commands::cmd_fit(&cfg)?;
            let th = &out.theory;
            println!("fit written to {} (fingerprint {fp})", out.path.display());
            let s = if paper { -1.0 } else { 1.0 };
            let conv = if paper { "imaginary" } else { "real" };
            println!("convention: {conv}; C_f = {:.6}", th.big_c_f);
            for f in &out.fits {
                let d = f.d.unwrap_or(0);
                let pred =
                    th.class(d).and_then(|c| c.d_shift).map_or("unavailable".into(), |x| format!("{:.6}", -s * x));
                println!(
                    "d = {d:>3}: fixed-slope shift {:.6} (theory {pred}), free slope {:.6}, free shift {:.6}",
                    s * f.fixed_slope_shift_real,
                    s * f.slope_real,
                    s * f.shift_real
                );
            }
            println!("pooled free slope {:.6}", s * out.pooled.slope_real);
        }
        Command::Dist => {
            let out = commands::cmd_dist(&cfg)?;
            let r = &out.report;
            println!("dist written to {} (fingerprint {fp})", out.path.display());
            println!(
                "n = {}  KS = {:.4}  moments = {:?}  normalization = {:?}",
                r.samples,
                r.ks,
                r.moments.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
                out.mode
            );
        }
        Command::Contig => {
            let out = commands::cmd_contig(&cfg)?;
            println!("contig written to {} (fingerprint {fp})", out.path.display());
            println!(
                "sup|A_M - ghat| = {:.3e}, sup|ghat| = {:.3e}, ratio = {:.4}, certified ghat tail {:.2e}",
                out.sup_err,
                out.sup_ghat,
                out.sup_err / out.sup_ghat,
                out.tail_bound
            );
        }
        Command::Weyl => {
            let out = commands::cmd_weyl(&cfg)?;
            println!("weyl written to {} (fingerprint {fp})", out.path.display());
            for e in &out.entries {
                println!("n = {:>3}: |sum|/count = {:.3e} (count {})", e.n, e.ratio, e.count);
            }
        }
        Command::Theory => {
            let (th, pet) = commands::cmd_theory(&cfg)?;
            let json = serde_json::json!({
                "version": VERSION,
                "fingerprint": fp,
                "constants": th,
                "petersson": pet,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Verify => {
            let verdict = verify::cmd_verify(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            if !verdict.pass {
                return Ok(EXIT_GATE);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let is_verify = matches!(cli.command, Command::Verify);
    let code = match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            if is_verify {
                let json = serde_json::json!({ "version": VERSION, "pass": false, "error": format!("{err:#}") });
                println!("{json}");
            }
            code
        }
    };
    ExitCode::from(code as u8)
}
