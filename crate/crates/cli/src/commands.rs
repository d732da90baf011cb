//! Subcommand implementations. Each returns a structured outcome; printing
//! lives in the binary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use modsym_core::eigenform::Eigenform;
use modsym_core::exactmath::Fraction;
use modsym_core::periods::{PeriodTable, RelationResiduals, SymbolValue};
use modsym_core::scanstats::{
    self, AggregateRow, DFilter, DistributionReport, FitResult, MeanDecay, Normalization, SymbolStore, WeylEntry,
};
use modsym_core::theory::{self, LValues, LimitProfile, PeterssonResult, TheoryConstants};
use sha2::{Digest, Sha256};

use crate::cache;
use crate::config::{NormalizationMode, RunConfig};
use crate::GateFailure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative tolerance of the Petersson quadrature behind derived L-values.
pub const PETERSSON_TOL: f64 = 1e-8;

/// Validated configuration with its form and gated period table.
pub struct Context {
    pub cfg: RunConfig,
    pub f: Eigenform,
    pub table: PeriodTable,
    pub residuals: RelationResiduals,
}

/// Loads coefficients and the period table, failing the gate when the
/// Manin relations exceed `10·tol`.
pub fn prepare(cfg: &RunConfig) -> Result<Context> {
    cfg.validate()?;
    let f = cache::coefficients(cfg)?;
    let (table, residuals) = cache::period_table(cfg, &f)?;
    if !cache::relations_ok(&residuals, cfg.tol) {
        return Err(GateFailure(format!(
            "period table fails the Manin relations: two-term {:e}, three-term {:e} (limit {:e})",
            residuals.two_term,
            residuals.three_term,
            10.0 * cfg.tol
        ))
        .into());
    }
    Ok(Context { cfg: cfg.clone(), f, table, residuals })
}

/// `# modsym <version> fingerprint=<fp>`, the canonical config and notes.
pub fn report_header(cfg: &RunConfig, notes: &[&str]) -> String {
    let mut s = format!("# modsym {VERSION} fingerprint={}\n# config {}\n", cfg.fingerprint(), cfg.canonical());
    for n in notes {
        s.push_str("# ");
        s.push_str(n);
        s.push('\n');
    }
    s
}

fn write_report(
    cfg: &RunConfig,
    name: &str,
    notes: &[&str],
    body: impl FnOnce(&mut BufWriter<fs::File>) -> modsym_core::Result<()>,
) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(report_header(cfg, notes).as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(path)
}

pub struct CoeffsOutcome {
    pub path: PathBuf,
    pub n: usize,
    pub first: Vec<i64>,
    pub sha256: String,
}

pub fn cmd_coeffs(cfg: &RunConfig) -> Result<CoeffsOutcome> {
    cfg.validate()?;
    let f = cache::coefficients(cfg)?;
    let path = cache::coeff_path(cfg);
    let bytes = fs::read(&path)?;
    Ok(CoeffsOutcome {
        path,
        n: f.len(),
        first: (1..=12.min(f.len())).map(|n| f.coeff(n)).collect(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

pub struct TableOutcome {
    pub path: PathBuf,
    pub entries: usize,
    pub residuals: RelationResiduals,
}

pub fn cmd_table(cfg: &RunConfig) -> Result<TableOutcome> {
    let ctx = prepare(cfg)?;
    Ok(TableOutcome { path: cache::table_path(cfg), entries: ctx.table.len(), residuals: ctx.residuals })
}

pub struct SymbolOutcome {
    pub input: (i64, i64),
    pub reduced: bool,
    pub value: SymbolValue,
    pub c_r: f64,
}

pub fn cmd_symbol(cfg: &RunConfig, a: i64, c: i64) -> Result<SymbolOutcome> {
    if c == 0 {
        return Err(modsym_core::Error::InvalidInput("denominator must be nonzero".into()).into());
    }
    let ctx = prepare(cfg)?;
    let r = Fraction::new(a, c)?;
    let value = ctx.table.symbol(r);
    Ok(SymbolOutcome {
        input: (a, c),
        reduced: (r.a, r.c) != (a, c),
        c_r: value.normalized_denominator(cfg.q()),
        value,
    })
}

/// L-values from the fixture, or `L1` from the Petersson norm without one.
pub fn theory_constants(cfg: &RunConfig, f: &Eigenform) -> Result<(TheoryConstants, PeterssonResult)> {
    let pet = theory::petersson_quadrature(f, PETERSSON_TOL)?;
    let lv = match &cfg.fixture {
        Some(path) => {
            theory::load_lvalue_fixture(path).with_context(|| format!("reading fixture {}", path.display()))?
        }
        None => LValues { l1: theory::l1_from_petersson(cfg.q(), pet.norm_sq)?, l1p: None },
    };
    let mut th = TheoryConstants::new(cfg.q(), &lv)?;
    th.petersson = Some(pet.norm_sq);
    Ok((th, pet))
}

pub fn cmd_theory(cfg: &RunConfig) -> Result<(TheoryConstants, PeterssonResult)> {
    cfg.validate()?;
    let f = cache::coefficients(cfg)?;
    theory_constants(cfg, &f)
}

pub struct ScanOutcome {
    pub path: PathBuf,
    pub rows: Vec<AggregateRow>,
    pub mean_decay: MeanDecay,
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<ScanOutcome> {
    let ctx = prepare(cfg)?;
    let rows = scanstats::scan(&cfg.scan_spec(), &ctx.table, cfg.shards)?;
    let path = write_report(
        cfg,
        "aggregates.csv",
        &["real convention m = m_minus; imaginary convention <r> = i*m, so S_k(imag) = i^k * S_k"],
        |w| scanstats::write_aggregates_csv(&rows, cfg.moment_depth, w),
    )?;
    Ok(ScanOutcome { path, mean_decay: scanstats::mean_decay_report(&rows), rows })
}

pub struct FitOutcome {
    pub path: PathBuf,
    pub fits: Vec<FitResult>,
    pub pooled: FitResult,
    pub theory: TheoryConstants,
}

/// Variance fits for every class `d | q` over `c <= M`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    let ctx = prepare(cfg)?;
    let (th, _) = theory_constants(cfg, &ctx.f)?;
    let mut spec = cfg.scan_spec();
    spec.d_filter = DFilter::All;
    let rows: Vec<AggregateRow> =
        scanstats::scan(&spec, &ctx.table, cfg.shards)?.into_iter().filter(|r| r.c >= 2).collect();
    let fits = scanstats::fit_by_class(&rows, cfg.q(), th.c_f)?;
    let pooled = scanstats::variance_fit(&rows, th.c_f)?;
    let path = write_report(
        cfg,
        "fit.csv",
        &[
            "Var_paper = -Var_real; *_paper columns and fixed_slope_shift use the imaginary convention",
            &format!("c_f = {:.16e} (C_f = {:.16e})", th.c_f, th.big_c_f),
        ],
        |w| scanstats::write_fit_csv(&fits, w),
    )?;
    Ok(FitOutcome { path, fits, pooled, theory: th })
}

pub struct DistOutcome {
    pub path: PathBuf,
    pub report: DistributionReport,
    pub mode: NormalizationMode,
}

pub fn normalization(ctx: &Context, mode: NormalizationMode) -> Result<Normalization> {
    Ok(match mode {
        NormalizationMode::Theory => Normalization::theory(theory_constants(&ctx.cfg, &ctx.f)?.0.c_f),
        NormalizationMode::Fitted => {
            let mut spec = ctx.cfg.scan_spec();
            spec.interval = scanstats::Interval::FULL;
            let rows: Vec<AggregateRow> =
                scanstats::scan(&spec, &ctx.table, ctx.cfg.shards)?.into_iter().filter(|r| r.c >= 2).collect();
            let fit = scanstats::variance_fit(&rows, 0.0)?;
            Normalization { slope: fit.slope_real, shift: fit.shift_real }
        }
    })
}

pub fn cmd_dist(cfg: &RunConfig) -> Result<DistOutcome> {
    let ctx = prepare(cfg)?;
    let norm = normalization(&ctx, cfg.normalization)?;
    let report = scanstats::distribution_report(&cfg.scan_spec(), &ctx.table, norm, cfg.shards)?;
    let note = format!("z = m/sqrt({:.16e}*log c + {:.16e}); identical in both conventions", norm.slope, norm.shift);
    let path = write_report(cfg, "dist.csv", &[&note], |w| scanstats::write_dist_csv(&report, w))?;
    Ok(DistOutcome { path, report, mode: cfg.normalization })
}

pub struct ContigOutcome {
    pub path: PathBuf,
    pub grid: Vec<f64>,
    pub avg: Vec<f64>,
    pub ghat: Vec<f64>,
    pub sup_err: f64,
    pub sup_ghat: f64,
    pub tail_bound: f64,
}

pub fn contig_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

pub fn cmd_contig(cfg: &RunConfig) -> Result<ContigOutcome> {
    let ctx = prepare(cfg)?;
    let grid = contig_grid();
    let store = SymbolStore::build(&ctx.table, cfg.memo_threshold.min(cfg.m_max));
    let avg = scanstats::contiguous_avg(&store, cfg.m_max, &grid, cfg.shards)?;
    let profile = LimitProfile::new(&ctx.f, ctx.f.len())?;
    let ghat: Vec<f64> = grid.iter().map(|&x| profile.ghat(x)).collect();
    let sup_ghat = ghat.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let sup_err = avg.iter().zip(&ghat).fold(0.0f64, |m, (a, g)| m.max((a - g).abs()));
    let path =
        write_report(cfg, "contig.csv", &["imaginary convention: A_M(x) = i*A_M_real and g(x) = i*ghat"], |w| {
            scanstats::write_contig_csv(&grid, &avg, &ghat, w)
        })?;
    Ok(ContigOutcome { path, grid, avg, ghat, sup_err, sup_ghat, tail_bound: profile.tail_bound() })
}

pub struct WeylOutcome {
    pub path: PathBuf,
    pub entries: Vec<WeylEntry>,
}

pub fn cmd_weyl(cfg: &RunConfig) -> Result<WeylOutcome> {
    let ctx = prepare(cfg)?;
    let spec = cfg.scan_spec();
    let rows = scanstats::scan(&spec, &ctx.table, cfg.shards)?;
    let entries = scanstats::weyl_report(&rows, &spec.weyl_modes);
    let path = write_report(cfg, "weyl.csv", &[], |w| scanstats::write_weyl_csv(&entries, w))?;
    Ok(WeylOutcome { path, entries })
}
