//! Closed-form constants of the variance law, the first-moment limit
//! profile `ĝ`, Petersson-norm quadrature and L-value fixtures.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigenform::{Eigenform, TruncationPlan};
use crate::error::{Error, Result};
use crate::exactmath::{divisors, is_squarefree, lift_class, prime_factors};
use crate::periods::cusp_shift;

/// `ζ′(2)`.
pub const ZETA_PRIME_2: f64 = -0.937548254315844;

fn check_level(q: u64) -> Result<()> {
    if q == 0 || !is_squarefree(q) {
        return Err(Error::NotSquarefree(q));
    }
    Ok(())
}

/// `Π_{p|q} (1 + 1/p)`.
pub fn index_factor(q: u64) -> f64 {
    prime_factors(q).iter().map(|&p| 1.0 + 1.0 / p as f64).product()
}

/// `vol(Γ₀(q)\H) = (π/3)·q·Π(1 + 1/p)`.
pub fn volume(q: u64) -> Result<f64> {
    check_level(q)?;
    Ok(PI / 3.0 * q as f64 * index_factor(q))
}

/// `(C_f, c_f)` with `C_f = −(6/π²)Π(1 + 1/p)⁻¹ L(sym²f, 1)` and `c_f = −C_f`.
pub fn slope_from_l(q: u64, l1: f64) -> Result<(f64, f64)> {
    check_level(q)?;
    let big = -6.0 / (PI * PI) / index_factor(q) * l1;
    Ok((big, -big))
}

/// Inverse of [`slope_from_l`] composed with `C_f = −16π²‖f‖²/vol`.
pub fn l1_from_petersson(q: u64, norm_sq: f64) -> Result<f64> {
    let big = -16.0 * PI * PI * norm_sq / volume(q)?;
    Ok(-big * PI * PI * index_factor(q) / 6.0)
}

/// `(A_{d,q}, B_q)`.
pub fn shift_coefficients(q: u64, d: u64) -> Result<(f64, f64)> {
    check_level(q)?;
    if d == 0 || !q.is_multiple_of(d) {
        return Err(Error::InvalidInput(format!("{d} does not divide {q}")));
    }
    let denom = PI * PI * index_factor(q);
    let local: f64 = prime_factors(q).iter().map(|&p| (p as f64).ln() / (p as f64 + 1.0)).sum();
    let inner = -0.5 * (q as f64 / d as f64).ln() - local + 12.0 / (PI * PI) * ZETA_PRIME_2 + (2.0 * PI).ln();
    Ok((6.0 * inner / denom, -6.0 / denom))
}

/// Values read from an L-value fixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LValues {
    pub l1: f64,
    pub l1p: Option<f64>,
}

/// Lines `L1 <value>` and `L1p <value>`; `#` starts a comment.
pub fn parse_lvalue_fixture(text: &str) -> Result<LValues> {
    let (mut l1, mut l1p) = (None, None);
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let value: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Parse(format!("fixture line {}: {raw:?}", no + 1)))?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!("fixture line {}: trailing fields", no + 1)));
        }
        let slot = match key {
            "L1" => &mut l1,
            "L1p" => &mut l1p,
            _ => return Err(Error::Parse(format!("fixture line {}: unknown key {key:?}", no + 1))),
        };
        if slot.replace(value).is_some() {
            return Err(Error::Parse(format!("fixture line {}: duplicate {key}", no + 1)));
        }
    }
    let l1 = l1.ok_or_else(|| Error::Parse("fixture has no L1 line".into()))?;
    if l1.is_nan() || l1 <= 0.0 {
        return Err(Error::Parse(format!("L1 = {l1} is not positive")));
    }
    Ok(LValues { l1, l1p })
}

pub fn load_lvalue_fixture(path: &Path) -> Result<LValues> {
    parse_lvalue_fixture(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassShift {
    pub d: u64,
    pub a_dq: f64,
    pub b_q: f64,
    /// `D_{f,d} = A·L1 + B·L1p`, absent without `L1p`.
    pub d_shift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub q: u64,
    pub vol: f64,
    pub l1: f64,
    pub l1p: Option<f64>,
    pub big_c_f: f64,
    pub c_f: f64,
    pub zeta_p2: f64,
    pub classes: Vec<ClassShift>,
    pub petersson: Option<f64>,
}

impl TheoryConstants {
    pub fn new(q: u64, lv: &LValues) -> Result<Self> {
        let (big_c_f, c_f) = slope_from_l(q, lv.l1)?;
        let classes = divisors(q)
            .into_iter()
            .map(|d| {
                let (a, b) = shift_coefficients(q, d)?;
                Ok(ClassShift { d, a_dq: a, b_q: b, d_shift: lv.l1p.map(|l1p| a * lv.l1 + b * l1p) })
            })
            .collect::<Result<_>>()?;
        Ok(TheoryConstants {
            q,
            vol: volume(q)?,
            l1: lv.l1,
            l1p: lv.l1p,
            big_c_f,
            c_f,
            zeta_p2: ZETA_PRIME_2,
            classes,
            petersson: None,
        })
    }

    pub fn class(&self, d: u64) -> Option<&ClassShift> {
        self.classes.iter().find(|c| c.d == d)
    }

    /// `C_f` through `−16π²‖f‖²/vol`, when a norm is attached.
    pub fn petersson_slope(&self) -> Option<f64> {
        self.petersson.map(|n| -16.0 * PI * PI * n / self.vol)
    }
}

/// `ĝ(x) = −(1/2π) Σ_{n<=N} Re(a(n)(e(nx) − 1))/n²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitProfile {
    coeffs: Vec<f64>,
}

impl LimitProfile {
    /// Uses `a(1..=n)` of `f`.
    pub fn new(f: &Eigenform, n: usize) -> Result<Self> {
        if n == 0 || n >= f.coeffs().len() {
            return Err(Error::InsufficientCoefficients { needed: n, available: f.len() });
        }
        Ok(LimitProfile { coeffs: f.coeffs()[..=n].iter().map(|&a| a as f64).collect() })
    }

    pub fn terms(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn ghat(&self, x: f64) -> f64 {
        let step = Complex64::from_polar(1.0, 2.0 * PI * x);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut s = 0.0;
        for (n, &a) in self.coeffs.iter().enumerate().skip(1) {
            // re-anchor to keep the phase exact
            pow = if n % 256 == 0 { Complex64::from_polar(1.0, 2.0 * PI * (n as f64 * x).fract()) } else { pow * step };
            if a != 0.0 {
                s += a * (pow.re - 1.0) / (n * n) as f64;
            }
        }
        -s / (2.0 * PI)
    }

    /// Certified bound on the omitted terms, from `|a(n)| <= d(n)√n` and
    /// `Σ_{n<=t} d(n) <= t(log t + 1)`: `3(log N + 3)/(π√N)`.
    pub fn tail_bound(&self) -> f64 {
        let n = self.terms() as f64;
        3.0 * (n.ln() + 3.0) / (PI * n.sqrt())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeterssonResult {
    pub norm_sq: f64,
    /// `|I_L − I_{L−1}|` between the last two refinement levels.
    pub error_estimate: f64,
    pub level: u32,
    pub min_sample: f64,
}

/// Cutoff height in units of the width `k2/k1`: `e^{−4π·2} ≈ 1e-11`.
const Y_CUTOFF_WIDTHS: f64 = 2.0;
const Y_NODES: usize = 8;

fn coset_integral(f: &Eigenform, shift: &crate::periods::ExpansionShift, level: u32) -> Result<(f64, f64)> {
    let width = shift.k2 as f64 / shift.k1 as f64;
    let y_top = (Y_CUTOFF_WIDTHS * width).max(1.5);
    let plan = TruncationPlan::new(1e-13, 3f64.sqrt() / 2.0 / width)?;
    let nx = 32usize << level;
    let panel = 0.1 * width / (1u32 << level) as f64;
    let (gx, wx) = gauss_legendre(nx);
    let (gy, wy) = gauss_legendre(Y_NODES);
    let mut total = 0.0;
    let mut min_sample = f64::INFINITY;
    for (&u, &wu) in gx.iter().zip(&wx) {
        let x = 0.5 * u;
        let y0 = (1.0 - x * x).sqrt();
        let panels = ((y_top - y0) / panel).ceil().max(1.0) as usize;
        let h = (y_top - y0) / panels as f64;
        let mut col = 0.0;
        for p in 0..panels {
            let lo = y0 + p as f64 * h;
            for (&v, &wv) in gy.iter().zip(&wy) {
                let y = lo + 0.5 * h * (v + 1.0);
                let val = shift.eval(f, Complex64::new(x, y), &plan)?.norm_sqr();
                min_sample = min_sample.min(val);
                col += 0.5 * h * wv * val;
            }
        }
        total += 0.5 * wu * col;
    }
    Ok((total, min_sample))
}

/// `‖f‖² = Σ_j ∫_F |(f|g_j)(w)|² dx dy` over lifts `g_j` of `P¹(Z/q)`,
/// refined until two successive levels agree to `tol` (relative).
pub fn petersson_quadrature(f: &Eigenform, tol: f64) -> Result<PeterssonResult> {
    let p1 = crate::exactmath::P1List::new(f.level())?;
    let shifts = p1.classes().iter().map(|k| cusp_shift(&lift_class(k), f)).collect::<Result<Vec<_>>>()?;
    let at_level = |level: u32| -> Result<(f64, f64)> {
        let parts = shifts.par_iter().map(|s| coset_integral(f, s, level)).collect::<Result<Vec<_>>>()?;
        Ok(parts.iter().fold((0.0, f64::INFINITY), |(t, m), &(v, s)| (t + v, m.min(s))))
    };
    let (mut prev, mut min_sample) = at_level(0)?;
    for level in 1..=4 {
        let (cur, m) = at_level(level)?;
        min_sample = min_sample.min(m);
        let err = (cur - prev).abs();
        if err <= tol * cur.abs() {
            return Ok(PeterssonResult { norm_sq: cur, error_estimate: err, level, min_sample });
        }
        prev = cur;
    }
    Err(Error::Infeasible(format!("Petersson quadrature did not reach relative tolerance {tol:e}")))
}
