//! Scans over `T(M) = {a/c : c <= M, (c, q) = d, gcd(a, c) = 1}` ordered by
//! `c`, then `a`, with per-denominator moment aggregates and the reports
//! built from them (mean decay, variance fits, Weyl sums, value
//! distribution, contiguous sums).
//!
//! Every row is computed by one task in a fixed `a` order with a fixed
//! pairwise reduction over chunks, so results do not depend on the number of
//! worker threads.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exactmath::{divisors, gcd_u64};
use crate::periods::PeriodTable;

/// Which denominators enter a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DFilter {
    All,
    Divisor(u64),
}

impl DFilter {
    pub fn admits(&self, c: u64, q: u64) -> bool {
        match *self {
            DFilter::All => true,
            DFilter::Divisor(d) => gcd_u64(c, q) == d,
        }
    }
}

/// Half-open interval `[x0, x1) ⊆ [0, 1)` on `R/Z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub x0: f64,
    pub x1: f64,
}

impl Interval {
    pub const FULL: Interval = Interval { x0: 0.0, x1: 1.0 };

    pub fn new(x0: f64, x1: f64) -> Result<Self> {
        if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0) {
            return Err(Error::InvalidInput(format!("interval [{x0}, {x1}) is not inside [0, 1)")));
        }
        Ok(Interval { x0, x1 })
    }

    #[inline]
    pub fn contains(&self, a: u64, c: u64) -> bool {
        let x = a as f64 / c as f64;
        self.x0 <= x && x < self.x1
    }

    pub fn is_full(&self) -> bool {
        *self == Self::FULL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub q: u64,
    pub m_max: u64,
    pub d_filter: DFilter,
    pub interval: Interval,
    pub moment_depth: usize,
    pub weyl_modes: Vec<i64>,
}

impl ScanSpec {
    pub const MAX_DEPTH: usize = 8;

    pub fn new(q: u64, m_max: u64) -> Self {
        ScanSpec {
            q,
            m_max,
            d_filter: DFilter::All,
            interval: Interval::FULL,
            moment_depth: 6,
            weyl_modes: (0..=5).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_max < 1 {
            return Err(Error::InvalidInput("M must be at least 1".into()));
        }
        if self.m_max > 1 << 31 {
            return Err(Error::InvalidInput("M above 2^31".into()));
        }
        if self.moment_depth > Self::MAX_DEPTH {
            return Err(Error::InvalidInput(format!("moment depth above {}", Self::MAX_DEPTH)));
        }
        if let DFilter::Divisor(d) = self.d_filter {
            if d == 0 || !self.q.is_multiple_of(d) {
                return Err(Error::InvalidInput(format!("{d} does not divide {}", self.q)));
            }
        }
        Interval::new(self.interval.x0, self.interval.x1)?;
        Ok(())
    }

    pub fn denominators(&self) -> Vec<u64> {
        (1..=self.m_max).filter(|&c| self.d_filter.admits(c, self.q)).collect()
    }
}

/// All `(c, a)` of the scan, `c` ascending then `a` ascending.
pub fn enumerate(spec: &ScanSpec) -> impl Iterator<Item = (u64, u64)> + '_ {
    spec.denominators().into_iter().flat_map(|c| (0..c).filter(move |&a| gcd_u64(a, c) == 1).map(move |a| (c, a)))
}

/// Streaming aggregates of `m(a/c)` for one denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub c: u64,
    pub d: u64,
    pub count: u64,
    /// `S_k = Σ m^k`, `k = 0..=depth`.
    pub sums: Vec<f64>,
    pub interval_count: u64,
    pub interval_sums: Vec<f64>,
    /// `Σ e(n·a/c)` per Weyl mode.
    pub weyl: Vec<Complex64>,
}

impl AggregateRow {
    pub fn empty(c: u64, d: u64, depth: usize, modes: usize) -> Self {
        AggregateRow {
            c,
            d,
            count: 0,
            sums: vec![0.0; depth + 1],
            interval_count: 0,
            interval_sums: vec![0.0; depth + 1],
            weyl: vec![Complex64::new(0.0, 0.0); modes],
        }
    }

    #[inline]
    fn push(&mut self, a: u64, value: f64, inside: bool, modes: &[i64]) {
        self.count += 1;
        let mut pow = 1.0;
        for s in self.sums.iter_mut() {
            *s += pow;
            pow *= value;
        }
        if inside {
            self.interval_count += 1;
            let mut pow = 1.0;
            for s in self.interval_sums.iter_mut() {
                *s += pow;
                pow *= value;
            }
        }
        for (acc, &n) in self.weyl.iter_mut().zip(modes) {
            let phase = 2.0 * PI * ((n as i128 * a as i128).rem_euclid(self.c as i128) as f64 / self.c as f64);
            *acc += Complex64::from_polar(1.0, phase);
        }
    }

    /// Combines aggregates over disjoint `a`-ranges of the same denominator.
    pub fn merge(&self, other: &AggregateRow) -> AggregateRow {
        assert_eq!(self.c, other.c, "merging rows of different denominators");
        let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + b).collect();
        AggregateRow {
            c: self.c,
            d: self.d,
            count: self.count + other.count,
            sums: add(&self.sums, &other.sums),
            interval_count: self.interval_count + other.interval_count,
            interval_sums: add(&self.interval_sums, &other.interval_sums),
            weyl: self.weyl.iter().zip(&other.weyl).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sums[1] / self.count as f64
    }

    /// `Var_real(c) = S_2/φ − (S_1/φ)²`.
    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        self.sums[2] / n - (self.sums[1] / n).powi(2)
    }

    /// Mean of `⟨r⟩ = i·m` as `(re, im) = (0, mean_real)`.
    pub fn mean_paper(&self) -> Complex64 {
        Complex64::new(0.0, self.mean())
    }

    /// `Var_paper(c) = E[⟨r⟩²] − E[⟨r⟩]² = −Var_real(c)`.
    pub fn variance_paper(&self) -> f64 {
        let m = self.mean_paper();
        let second = -self.sums[2] / self.count as f64;
        (Complex64::new(second, 0.0) - m * m).re
    }
}

const CHUNK: u64 = 2048;

/// Pairwise reduction in a fixed tree shape.
fn tree_reduce(mut parts: Vec<AggregateRow>) -> AggregateRow {
    while parts.len() > 1 {
        parts = parts.chunks(2).map(|p| if p.len() == 2 { p[0].merge(&p[1]) } else { p[0].clone() }).collect();
    }
    parts.pop().expect("at least one part")
}

fn scan_row(spec: &ScanSpec, table: &PeriodTable, c: u64) -> AggregateRow {
    let d = gcd_u64(c, spec.q);
    let depth = spec.moment_depth.max(2);
    let modes = &spec.weyl_modes;
    let parts: Vec<AggregateRow> = (0..c.div_ceil(CHUNK))
        .map(|k| {
            let mut row = AggregateRow::empty(c, d, depth, modes.len());
            for a in k * CHUNK..((k + 1) * CHUNK).min(c) {
                if gcd_u64(a, c) != 1 {
                    continue;
                }
                let m = table.m_minus(a as i64, c as i64);
                row.push(a, m, spec.interval.contains(a, c), modes);
            }
            row
        })
        .collect();
    let row = tree_reduce(parts);
    assert!(row.sums.iter().all(|s| s.is_finite()), "non-finite moment at c = {c}");
    row
}

/// One row per admitted denominator, computed on `shards` worker threads.
pub fn scan(spec: &ScanSpec, table: &PeriodTable, shards: usize) -> Result<Vec<AggregateRow>> {
    spec.validate()?;
    if table.level() != spec.q {
        return Err(Error::InvalidInput(format!("table level {} != scan level {}", table.level(), spec.q)));
    }
    let cs = spec.denominators();
    with_pool(shards, || cs.par_iter().map(|&c| scan_row(spec, table, c)).collect())
}

fn with_pool<T: Send>(shards: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(shards.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// `(c, |E[f,c]|·√c)` per row and the maximum over dyadic blocks `(2^k, 2^{k+1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanDecay {
    pub normalized: Vec<(u64, f64)>,
    pub dyadic_max: Vec<(u64, u64, f64)>,
}

pub fn mean_decay_report(rows: &[AggregateRow]) -> MeanDecay {
    let normalized: Vec<(u64, f64)> = rows.iter().map(|r| (r.c, r.mean().abs() * (r.c as f64).sqrt())).collect();
    let mut dyadic_max = Vec::new();
    let mut lo = 1u64;
    let top = normalized.last().map_or(0, |x| x.0);
    while lo < top.max(1) {
        let hi = lo * 2;
        let best = normalized.iter().filter(|(c, _)| *c > lo && *c <= hi).map(|x| x.1).fold(f64::NAN, f64::max);
        if !best.is_nan() {
            dyadic_max.push((lo, hi, best));
        }
        lo = hi;
    }
    MeanDecay { normalized, dyadic_max }
}

/// Values `m(a/c)` for `0 <= a < c`, reduced or not, stored up to a
/// threshold and recomputed above it.
#[derive(Clone, Debug)]
pub struct SymbolStore<'t> {
    table: &'t PeriodTable,
    rows: Vec<Vec<f64>>,
}

impl<'t> SymbolStore<'t> {
    pub const DEFAULT_THRESHOLD: u64 = 4096;

    pub fn build(table: &'t PeriodTable, threshold: u64) -> Self {
        let mut rows: Vec<Vec<f64>> = vec![Vec::new()];
        for c in 1..=threshold {
            let row: Vec<f64> = (0..c)
                .map(|a| {
                    let g = gcd_u64(a, c);
                    if g == 1 {
                        table.m_minus(a as i64, c as i64)
                    } else {
                        rows[(c / g) as usize][(a / g) as usize]
                    }
                })
                .collect();
            rows.push(row);
        }
        SymbolStore { table, rows }
    }

    pub fn threshold(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    /// `m(a/c)` for any `a` (reduced through `gcd(a, c)` and mod 1).
    pub fn value(&self, a: u64, c: u64) -> f64 {
        let a = a % c;
        if let Some(row) = self.rows.get(c as usize).filter(|r| !r.is_empty()) {
            return row[a as usize];
        }
        let g = gcd_u64(a, c);
        self.table.m_minus((a / g) as i64, (c / g) as i64)
    }
}

/// `A_M(x) = (1/M) Σ_{c<=M} (1/c) Σ_{0<=a<=cx} m(a/c)` for each `x` in the grid.
/// `a <= cx` is decided as `a <= floor(cx + 1e-9)` so grid points such as
/// `0.07` include the endpoint `a = cx` when it is an integer.
pub fn contiguous_avg(store: &SymbolStore<'_>, m_max: u64, x_grid: &[f64], shards: usize) -> Result<Vec<f64>> {
    if x_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidInput("contiguous grid must lie in [0, 1]".into()));
    }
    let per_c: Vec<Vec<f64>> = with_pool(shards, || {
        (1..=m_max)
            .into_par_iter()
            .map(|c| {
                let mut prefix = Vec::with_capacity(c as usize + 1);
                let mut acc = 0.0;
                for a in 0..=c {
                    acc += store.value(a, c);
                    prefix.push(acc);
                }
                x_grid
                    .iter()
                    .map(|&x| {
                        let top = ((c as f64) * x + 1e-9).floor() as usize;
                        prefix[top.min(c as usize)] / c as f64
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut out = vec![0.0; x_grid.len()];
    for row in &per_c {
        for (o, g) in out.iter_mut().zip(row) {
            *o += g;
        }
    }
    Ok(out.into_iter().map(|s| s / m_max as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeylEntry {
    pub n: i64,
    pub sum: Complex64,
    pub count: u64,
    pub ratio: f64,
}

/// `Σ_{r ∈ T(M)} e(n·r)` per mode, with `|sum|/count`.
pub fn weyl_report(rows: &[AggregateRow], modes: &[i64]) -> Vec<WeylEntry> {
    let count: u64 = rows.iter().map(|r| r.count).sum();
    modes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let sum = if n == 0 {
                Complex64::new(count as f64, 0.0)
            } else {
                rows.iter().fold(Complex64::new(0.0, 0.0), |acc, r| acc + r.weyl[i])
            };
            WeylEntry { n, sum, count, ratio: sum.norm() / count as f64 }
        })
        .collect()
}

/// Variance law fit for one cusp class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub d: Option<u64>,
    /// `Σφ(c)(Var_real(c) − c_f log c) / Σφ(c)`.
    pub fixed_slope_shift_real: f64,
    /// Weighted least squares `Var_real(c) ≈ slope·log c + shift`.
    pub slope_real: f64,
    pub shift_real: f64,
    pub residual_rms: f64,
    pub rows: usize,
    pub weight: f64,
}

impl FitResult {
    pub fn slope_paper(&self) -> f64 {
        -self.slope_real
    }

    pub fn shift_paper(&self) -> f64 {
        -self.shift_real
    }

    pub fn fixed_slope_shift_paper(&self) -> f64 {
        -self.fixed_slope_shift_real
    }
}

/// Fits `(log c, Var_real(c))` with weights `φ(c)` over the given rows.
pub fn variance_fit(rows: &[AggregateRow], c_f: f64) -> Result<FitResult> {
    let rows: Vec<&AggregateRow> = rows.iter().filter(|r| r.count > 0).collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    let d = rows[0].d;
    let d = rows.iter().all(|r| r.d == d).then_some(d);
    let mut w_sum = 0.0;
    let mut fixed = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        let w = r.count as f64;
        let x = (r.c as f64).ln();
        let y = r.variance();
        w_sum += w;
        fixed += w * (y - c_f * x);
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let (mx, my) = (sx / w_sum, sy / w_sum);
    let cov = sxy / w_sum - mx * my;
    let var = sxx / w_sum - mx * mx;
    let (slope, shift) = if var > 0.0 { (cov / var, my - cov / var * mx) } else { (f64::NAN, my) };
    let rss: f64 = rows
        .iter()
        .map(|r| {
            let e = r.variance() - slope * (r.c as f64).ln() - shift;
            r.count as f64 * e * e
        })
        .sum();
    Ok(FitResult {
        d,
        fixed_slope_shift_real: fixed / w_sum,
        slope_real: slope,
        shift_real: shift,
        residual_rms: (rss / w_sum).sqrt(),
        rows: rows.len(),
        weight: w_sum,
    })
}

/// One fit per divisor of `q` from an unfiltered scan.
pub fn fit_by_class(rows: &[AggregateRow], q: u64, c_f: f64) -> Result<Vec<FitResult>> {
    divisors(q)
        .into_iter()
        .map(|d| {
            let class: Vec<AggregateRow> = rows.iter().filter(|r| r.d == d).cloned().collect();
            variance_fit(&class, c_f)
        })
        .collect()
}

/// Standardization `m/√(slope·log c + shift)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub slope: f64,
    pub shift: f64,
}

impl Normalization {
    /// `m/√(c_f log c)`.
    pub fn theory(c_f: f64) -> Self {
        Normalization { slope: c_f, shift: 0.0 }
    }

    #[inline]
    pub fn scale(&self, c: u64) -> f64 {
        (self.slope * (c as f64).ln() + self.shift).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// `Φ(hi)`.
    pub phi_cdf: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionReport {
    pub d_filter: DFilter,
    pub interval: Interval,
    pub c_range: (u64, u64),
    pub normalization: Normalization,
    pub samples: usize,
    /// Raw moments `E[z^k]`, `k = 1..=6`.
    pub moments: [f64; 6],
    pub ks: f64,
    pub histogram: Vec<HistogramBin>,
}

impl DistributionReport {
    /// `k!/((k/2)! 2^{k/2})` for even `k`, 0 for odd `k`.
    pub fn gaussian_moment(k: usize) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (1..k).step_by(2).map(|j| j as f64).product()
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov–Smirnov distance of sorted data to `Φ`.
pub fn ks_distance(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = std_normal_cdf(x);
            ((i + 1) as f64 / n - p).max(p - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Standardized values over the spec's class and interval, `c >= 2`.
pub fn standardized_sample(
    spec: &ScanSpec,
    table: &PeriodTable,
    norm: Normalization,
    shards: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let cs: Vec<u64> = spec.denominators().into_iter().filter(|&c| c >= 2).collect();
    let per_c: Vec<Vec<f64>> = with_pool(shards, || {
        cs.par_iter()
            .map(|&c| {
                let s = norm.scale(c);
                (0..c)
                    .filter(|&a| gcd_u64(a, c) == 1 && spec.interval.contains(a, c))
                    .map(|a| table.m_minus(a as i64, c as i64) / s)
                    .collect()
            })
            .collect()
    })?;
    let out: Vec<f64> = per_c.into_iter().flatten().collect();
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput("normalization is not positive on the sample".into()));
    }
    Ok(out)
}

pub fn distribution_report(
    spec: &ScanSpec,
    table: &PeriodTable,
    norm: Normalization,
    shards: usize,
) -> Result<DistributionReport> {
    let mut z = standardized_sample(spec, table, norm, shards)?;
    if z.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let n = z.len() as f64;
    let mut moments = [0.0; 6];
    for &x in &z {
        let mut p = 1.0;
        for m in moments.iter_mut() {
            p *= x;
            *m += p;
        }
    }
    moments.iter_mut().for_each(|m| *m /= n);
    z.sort_by(f64::total_cmp);
    let ks = ks_distance(&z);
    let histogram = histogram(&z, -5.0, 5.0, 40);
    Ok(DistributionReport {
        d_filter: spec.d_filter,
        interval: spec.interval,
        c_range: (2, spec.m_max),
        normalization: norm,
        samples: z.len(),
        moments,
        ks,
        histogram,
    })
}

fn histogram(sorted: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
    let width = (hi - lo) / bins as f64;
    (0..bins)
        .map(|i| {
            let b_lo = lo + i as f64 * width;
            let b_hi = b_lo + width;
            let from = sorted.partition_point(|&x| x < b_lo);
            let to = sorted.partition_point(|&x| x < b_hi);
            HistogramBin { lo: b_lo, hi: b_hi, count: (to - from) as u64, phi_cdf: std_normal_cdf(b_hi) }
        })
        .collect()
}

/// Floats in CSV outputs: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `c,d,phi,S1..Sk,count_I,S1_I..Sk_I`.
pub fn write_aggregates_csv<W: Write>(rows: &[AggregateRow], depth: usize, mut w: W) -> Result<()> {
    let mut header = vec!["c".to_string(), "d".into(), "phi".into()];
    header.extend((1..=depth).map(|k| format!("S{k}")));
    header.push("count_I".into());
    header.extend((1..=depth).map(|k| format!("S{k}_I")));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut f = vec![r.c.to_string(), r.d.to_string(), r.count.to_string()];
        f.extend(r.sums[1..=depth].iter().map(|&x| fmt_f64(x)));
        f.push(r.interval_count.to_string());
        f.extend(r.interval_sums[1..=depth].iter().map(|&x| fmt_f64(x)));
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// `d,slope_real,shift_real,slope_paper,shift_paper,fixed_slope_shift`; the
/// last column is in the paper (imaginary-symbol) convention.
pub fn write_fit_csv<W: Write>(fits: &[FitResult], mut w: W) -> Result<()> {
    writeln!(w, "d,slope_real,shift_real,slope_paper,shift_paper,fixed_slope_shift")?;
    for f in fits {
        let d = f.d.map_or("all".to_string(), |d| d.to_string());
        writeln!(
            w,
            "{d},{},{},{},{},{}",
            fmt_f64(f.slope_real),
            fmt_f64(f.shift_real),
            fmt_f64(f.slope_paper()),
            fmt_f64(f.shift_paper()),
            fmt_f64(f.fixed_slope_shift_paper())
        )?;
    }
    Ok(())
}

pub fn write_dist_csv<W: Write>(report: &DistributionReport, mut w: W) -> Result<()> {
    writeln!(w, "bin_lo,bin_hi,count,phi_cdf")?;
    for b in &report.histogram {
        writeln!(w, "{},{},{},{}", fmt_f64(b.lo), fmt_f64(b.hi), b.count, fmt_f64(b.phi_cdf))?;
    }
    Ok(())
}

pub fn write_weyl_csv<W: Write>(entries: &[WeylEntry], mut w: W) -> Result<()> {
    writeln!(w, "n,re,im,ratio")?;
    for e in entries {
        writeln!(w, "{},{},{},{}", e.n, fmt_f64(e.sum.re), fmt_f64(e.sum.im), fmt_f64(e.ratio))?;
    }
    Ok(())
}

pub fn write_contig_csv<W: Write>(x: &[f64], avg: &[f64], ghat: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "x,A_M_real,ghat")?;
    for ((x, a), g) in x.iter().zip(avg).zip(ghat) {
        writeln!(w, "{},{},{}", fmt_f64(*x), fmt_f64(*a), fmt_f64(*g))?;
    }
    Ok(())
}
