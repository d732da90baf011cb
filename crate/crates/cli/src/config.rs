//! Run configuration: a flat `key = value` file plus flag overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use modsym_core::eigenform::CurveSpec;
use modsym_core::exactmath::{is_squarefree, prime_factors};
use modsym_core::scanstats::{DFilter, Interval, ScanSpec};
use modsym_core::Error;
use sha2::{Digest, Sha256};

/// Standardization used by `dist`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationMode {
    Theory,
    Fitted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub curve: CurveSpec,
    pub m_max: u64,
    pub d_filter: DFilter,
    pub interval: Interval,
    pub moment_depth: usize,
    pub weyl_modes: Vec<i64>,
    pub tol: f64,
    pub memo_threshold: u64,
    pub shards: usize,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub fixture: Option<PathBuf>,
    pub seed: u64,
    pub coeffs: usize,
    pub paper_sign: bool,
    pub normalization: NormalizationMode,
    /// Flip `e_{f,p}` after loading coefficients (negative testing).
    pub flip_sign: Option<u64>,
    q_explicit: bool,
}

pub const DEFAULT_SEED: u64 = 20_240_917;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            label: "15.a1".into(),
            curve: CurveSpec::CURVE_15A1,
            m_max: 1000,
            d_filter: DFilter::All,
            interval: Interval::FULL,
            moment_depth: 6,
            weyl_modes: (0..=5).collect(),
            tol: 1e-12,
            memo_threshold: 4096,
            shards: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cache_dir: PathBuf::from(".modsym-cache"),
            out_dir: PathBuf::from("."),
            fixture: None,
            seed: DEFAULT_SEED,
            coeffs: 1 << 16,
            paper_sign: false,
            normalization: NormalizationMode::Theory,
            flip_sign: None,
            q_explicit: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn radical(n: i128) -> u64 {
    prime_factors(n.unsigned_abs() as u64).iter().product()
}

impl RunConfig {
    /// Reads a config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), Error> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| invalid(format!("config line {}: expected key = value", no + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key; flags and config files share this path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        match key {
            "label" => self.label = value.to_string(),
            "curve" => {
                let a: Vec<i64> = value.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_, _>>()?;
                let [a1, a2, a3, a4, a6] = a[..] else {
                    return Err(invalid("curve takes five coefficients a1,a2,a3,a4,a6"));
                };
                let q = if self.q_explicit { self.curve.q } else { 0 };
                self.curve = CurveSpec { a1, a2, a3, a4, a6, q };
                if !self.q_explicit {
                    self.curve.q = radical(self.curve.discriminant());
                }
                if self.curve != CurveSpec::CURVE_15A1 && self.label == "15.a1" {
                    self.label = "custom".into();
                }
            }
            "q" => {
                self.curve.q = parse_num(key, value)?;
                self.q_explicit = true;
            }
            "M" => self.m_max = parse_num(key, value)?,
            "d" => self.d_filter = if value == "all" { DFilter::All } else { DFilter::Divisor(parse_num(key, value)?) },
            "interval" => {
                let (a, b) = value.split_once(':').ok_or_else(|| invalid("interval takes x0:x1"))?;
                self.interval = Interval::new(parse_num(key, a)?, parse_num(key, b)?)?;
            }
            "moment_depth" => self.moment_depth = parse_num(key, value)?,
            "weyl" => self.weyl_modes = value.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_, _>>()?,
            "tol" => self.tol = parse_num(key, value)?,
            "memo_threshold" => self.memo_threshold = parse_num(key, value)?,
            "shards" => self.shards = parse_num(key, value)?,
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "fixture" => self.fixture = (!value.is_empty()).then(|| PathBuf::from(value)),
            "seed" => self.seed = parse_num(key, value)?,
            "coeffs" => self.coeffs = parse_num(key, value)?,
            "paper_sign" => self.paper_sign = parse_num(key, value)?,
            "normalization" => {
                self.normalization = match value {
                    "theory" => NormalizationMode::Theory,
                    "fitted" => NormalizationMode::Fitted,
                    _ => return Err(invalid(format!("normalization must be theory or fitted, got {value:?}"))),
                }
            }
            "flip_sign" => self.flip_sign = Some(parse_num(key, value)?),
            _ => return Err(invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Checks every precondition that does not need computation.
    pub fn validate(&self) -> Result<(), Error> {
        let q = self.curve.q;
        if q < 2 || !is_squarefree(q) {
            return Err(Error::NotSquarefree(q));
        }
        self.curve.validate()?;
        self.scan_spec().validate()?;
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid(format!("tol = {} outside (0, 1)", self.tol)));
        }
        if self.shards == 0 {
            return Err(invalid("shards must be positive"));
        }
        if self.coeffs < 64 {
            return Err(invalid("at least 64 coefficients are required"));
        }
        if let Some(p) = self.flip_sign {
            if !prime_factors(q).contains(&p) {
                return Err(invalid(format!("flip_sign = {p} is not a prime factor of {q}")));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> u64 {
        self.curve.q
    }

    pub fn scan_spec(&self) -> ScanSpec {
        ScanSpec {
            q: self.curve.q,
            m_max: self.m_max,
            d_filter: self.d_filter,
            interval: self.interval,
            moment_depth: self.moment_depth,
            weyl_modes: self.weyl_modes.clone(),
        }
    }

    /// Every key that can change a result, in a fixed order.
    pub fn canonical(&self) -> String {
        let c = &self.curve;
        let mut s = String::new();
        let d = match self.d_filter {
            DFilter::All => "all".to_string(),
            DFilter::Divisor(d) => d.to_string(),
        };
        let modes: Vec<String> = self.weyl_modes.iter().map(|m| m.to_string()).collect();
        let _ = write!(
            s,
            "label={};curve={},{},{},{},{};q={};M={};d={d};interval={:?}:{:?};moment_depth={};weyl={};tol={:e};coeffs={};seed={};normalization={:?};fixture={};flip_sign={}",
            self.label,
            c.a1,
            c.a2,
            c.a3,
            c.a4,
            c.a6,
            c.q,
            self.m_max,
            self.interval.x0,
            self.interval.x1,
            self.moment_depth,
            modes.join(","),
            self.tol,
            self.coeffs,
            self.seed,
            self.normalization,
            self.fixture.as_deref().map_or("none".into(), |p| p.display().to_string()),
            self.flip_sign.map_or("none".into(), |p| p.to_string()),
        );
        s
    }

    /// First 16 hex digits of SHA-256 over [`canonical`](Self::canonical).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Cache file stem shared by the coefficient and table caches.
    pub fn curve_key(&self) -> String {
        let c = &self.curve;
        format!("q{}_{}_{}_{}_{}_{}", c.q, c.a1, c.a2, c.a3, c.a4, c.a6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.q(), 15);
        assert_eq!(cfg.fingerprint().len(), 16);
    }

    #[test]
    fn file_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# run\nM = 200\nd = 3\ninterval = 0.1:0.35\nweyl = 0,1\n").unwrap();
        assert_eq!(cfg.m_max, 200);
        assert_eq!(cfg.d_filter, DFilter::Divisor(3));
        assert_eq!(cfg.weyl_modes, vec![0, 1]);
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("interval = 0.5:0.2").is_err());
        assert!(cfg.apply_text("M").is_err());
    }

    #[test]
    fn curve_infers_conductor() {
        let mut cfg = RunConfig::default();
        cfg.set("curve", "0,-1,1,-10,-20").unwrap();
        assert_eq!(cfg.q(), 11);
        assert_eq!(cfg.label, "custom");
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_errors() {
        let mut cfg = RunConfig::default();
        cfg.set("q", "12").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::NotSquarefree(12))));
        let mut cfg = RunConfig::default();
        cfg.set("q", "21").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("d", "2").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_parallelism() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        a.shards = 1;
        b.shards = 7;
        b.cache_dir = "elsewhere".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.m_max += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
