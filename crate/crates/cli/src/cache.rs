//! Coefficient and period-table caches under `cache_dir`.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use modsym_core::eigenform::Eigenform;
use modsym_core::periods::{PeriodTable, RelationResiduals};

use crate::config::RunConfig;

pub fn coeff_path(cfg: &RunConfig) -> PathBuf {
    cfg.cache_dir.join(format!("coeffs-{}-N{}.txt", cfg.curve_key(), cfg.coeffs))
}

pub fn table_path(cfg: &RunConfig) -> PathBuf {
    let flip = cfg.flip_sign.map_or(String::new(), |p| format!("-flip{p}"));
    cfg.cache_dir.join(format!("table-{}-tol{:e}{flip}.txt", cfg.curve_key(), cfg.tol))
}

/// Writes through a temporary file so readers never see a partial cache.
fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
    body(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_coeffs(path: &Path, cfg: &RunConfig) -> Result<Eigenform> {
    let f = Eigenform::read_cache(BufReader::new(fs::File::open(path)?))?;
    anyhow::ensure!(f.level() == cfg.q() && f.len() == cfg.coeffs, "cache does not match the configuration");
    Ok(f)
}

/// Loads `a(1..=N)` from the cache, regenerating a missing or unreadable
/// file. The sign flip of the configuration is applied after loading.
pub fn coefficients(cfg: &RunConfig) -> Result<Eigenform> {
    let path = coeff_path(cfg);
    let f = match path.exists().then(|| read_coeffs(&path, cfg)) {
        Some(Ok(f)) => f,
        found => {
            if let Some(Err(e)) = found {
                warn!("coefficient cache {} is unusable ({e:#}); regenerating", path.display());
            }
            info!("computing {} coefficients of {}", cfg.coeffs, cfg.label);
            let f = Eigenform::from_curve(&cfg.curve, cfg.coeffs)?;
            write_atomic(&path, |w| Ok(f.write_cache(w)?))?;
            f
        }
    };
    Ok(match cfg.flip_sign {
        Some(p) => f.with_flipped_sign(p)?,
        None => f,
    })
}

/// Whether Manin relation residuals stay within `10·tol`.
pub fn relations_ok(res: &RelationResiduals, tol: f64) -> bool {
    res.two_term <= 10.0 * tol && res.three_term <= 10.0 * tol
}

/// Loads or builds the period table; a fresh table is persisted only when
/// its relation residuals pass. The residuals are returned for gating.
pub fn period_table(cfg: &RunConfig, f: &Eigenform) -> Result<(PeriodTable, RelationResiduals)> {
    let path = table_path(cfg);
    if path.exists() {
        let loaded = fs::File::open(&path)
            .map_err(anyhow::Error::from)
            .and_then(|file| Ok(PeriodTable::read_cache(BufReader::new(file))?));
        match loaded {
            Ok(t) if t.level() == cfg.q() && t.tol() == cfg.tol => {
                let res = t.relation_residuals()?;
                return Ok((t, res));
            }
            Ok(_) => warn!("table cache {} does not match the configuration; rebuilding", path.display()),
            Err(e) => warn!("table cache {} is unusable ({e:#}); rebuilding", path.display()),
        }
    }
    info!("building period table for q = {} at tol = {:e}", cfg.q(), cfg.tol);
    let t = PeriodTable::build(f, cfg.tol)?;
    let res = t.relation_residuals()?;
    if relations_ok(&res, cfg.tol) {
        write_atomic(&path, |w| Ok(t.write_cache(w)?))?;
    } else {
        warn!("not persisting period table: relation residuals {:e}, {:e}", res.two_term, res.three_term);
    }
    Ok((t, res))
}
