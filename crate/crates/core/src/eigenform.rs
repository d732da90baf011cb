//! The newform attached to an elliptic curve of squarefree conductor.
//!
//! Coefficients come from naive point counts `a_p = p + 1 − #E(F_p)` and
//! the Hecke recursions; the Atkin–Lehner sign at `p ‖ q` is `−a_p`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exactmath::{gcd_u64, is_squarefree, prime_factors};

/// Weierstrass model `y² + a1·xy + a3·y = x³ + a2·x² + a4·x + a6` with its
/// declared conductor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CurveSpec {
    pub a1: i64,
    pub a2: i64,
    pub a3: i64,
    pub a4: i64,
    pub a6: i64,
    pub q: u64,
}

impl CurveSpec {
    /// LMFDB 15.a1, `[1, 1, 1, -10, -10]`.
    pub const CURVE_15A1: CurveSpec = CurveSpec { a1: 1, a2: 1, a3: 1, a4: -10, a6: -10, q: 15 };

    pub fn discriminant(&self) -> i128 {
        let (a1, a2, a3, a4, a6) =
            (self.a1 as i128, self.a2 as i128, self.a3 as i128, self.a4 as i128, self.a6 as i128);
        let b2 = a1 * a1 + 4 * a2;
        let b4 = 2 * a4 + a1 * a3;
        let b6 = a3 * a3 + 4 * a6;
        let b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4;
        -b2 * b2 * b8 - 8 * b4 * b4 * b4 - 27 * b6 * b6 + 9 * b2 * b4 * b6
    }

    /// Checks the declared conductor: squarefree, every `p | q` divides the
    /// discriminant with multiplicative reduction, and no other prime does.
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 || !is_squarefree(self.q) {
            return Err(Error::NotSquarefree(self.q));
        }
        let disc = self.discriminant();
        if disc == 0 {
            return Err(Error::InvalidInput("singular Weierstrass model".into()));
        }
        for p in prime_factors(self.q) {
            if disc % p as i128 != 0 {
                return Err(Error::ConductorMismatch(format!("p = {p} divides q but not the discriminant")));
            }
            let ap = count_points(self, p)?;
            if ap.abs() != 1 {
                return Err(Error::ConductorMismatch(format!("a_{p} = {ap}, expected ±1 at p | q")));
            }
        }
        let mut rest = disc.unsigned_abs();
        for p in prime_factors(self.q) {
            while rest.is_multiple_of(p as u128) {
                rest /= p as u128;
            }
        }
        if rest != 1 {
            return Err(Error::ConductorMismatch(format!(
                "discriminant {disc} has prime factors outside q = {} (non-minimal model or wrong conductor)",
                self.q
            )));
        }
        Ok(())
    }
}

/// `a_p = p + 1 − #W(F_p)`, counting every projective point of the model
/// (the singular point included). Rejects additive reduction at `p | q`.
pub fn count_points(curve: &CurveSpec, p: u64) -> Result<i64> {
    if p < 2 || prime_factors(p) != [p] {
        return Err(Error::InvalidInput(format!("{p} is not prime")));
    }
    let affine = if p == 2 { count_affine_brute(curve, p) } else { count_affine_odd(curve, p) };
    let ap = p as i64 + 1 - (affine as i64 + 1);
    if curve.q.is_multiple_of(p) && ap == 0 {
        return Err(Error::ConductorMismatch(format!("additive reduction at p = {p}")));
    }
    Ok(ap)
}

fn residue(x: i64, p: u64) -> u64 {
    x.rem_euclid(p as i64) as u64
}

fn count_affine_brute(curve: &CurveSpec, p: u64) -> u64 {
    let (a1, a2, a3, a4, a6) =
        (residue(curve.a1, p), residue(curve.a2, p), residue(curve.a3, p), residue(curve.a4, p), residue(curve.a6, p));
    let mut n = 0;
    for x in 0..p {
        for y in 0..p {
            let lhs = (y * y + a1 * x * y + a3 * y) % p;
            let rhs = (x * x * x + a2 * x * x + a4 * x + a6) % p;
            n += (lhs == rhs) as u64;
        }
    }
    n
}

/// Completes the square: `(2y + a1x + a3)² = 4x³ + b2x² + 2b4x + b6`.
fn count_affine_odd(curve: &CurveSpec, p: u64) -> u64 {
    let r = |x: i64| residue(x, p);
    let b2 = r(curve.a1 * curve.a1 % p as i64 + 4 * curve.a2);
    let b4 = r(2 * curve.a4 + curve.a1 * curve.a3 % p as i64);
    let b6 = r(curve.a3 * curve.a3 % p as i64 + 4 * curve.a6);
    // 0 → 0, residues → 1, non-residues → -1
    let mut chi = vec![-1i8; p as usize];
    chi[0] = 0;
    for y in 1..p {
        chi[((y * y) % p) as usize] = 1;
    }
    let mut n: i64 = 0;
    for x in 0..p {
        let v = (((4 * x + b2) % p * x + 2 * b4) % p * x + b6) % p;
        n += 1 + chi[v as usize] as i64;
    }
    n as u64
}

/// Primes up to `n` by the sieve of Eratosthenes.
pub fn primes_up_to(n: usize) -> Vec<u64> {
    let mut is = vec![true; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if is[i] {
            out.push(i as u64);
            let mut k = i * i;
            while k <= n {
                is[k] = false;
                k += i;
            }
        }
    }
    out
}

/// Extends `a_p` (keyed by prime) to `a(1..=n_max)`; index 0 holds 0.
pub fn hecke_extend(ap: &BTreeMap<u64, i64>, q: u64, n_max: usize) -> Result<Vec<i64>> {
    let mut spf = vec![0u32; n_max + 1];
    for i in 2..=n_max {
        if spf[i] == 0 {
            let mut k = i;
            while k <= n_max {
                if spf[k] == 0 {
                    spf[k] = i as u32;
                }
                k += i;
            }
        }
    }
    let mut a = vec![0i64; n_max + 1];
    if n_max >= 1 {
        a[1] = 1;
    }
    for n in 2..=n_max {
        let p = spf[n] as usize;
        let mut m = n;
        let mut k = 0;
        while m % p == 0 {
            m /= p;
            k += 1;
        }
        if m > 1 {
            a[n] = a[n / m] * a[m];
            continue;
        }
        // n = p^k
        let a_p = *ap.get(&(p as u64)).ok_or_else(|| Error::InvalidInput(format!("missing a_p for p = {p}")))?;
        a[n] = if k == 1 {
            a_p
        } else if q.is_multiple_of(p as u64) {
            a_p * a[n / p]
        } else {
            a_p * a[n / p] - p as i64 * a[n / (p * p)]
        };
    }
    Ok(a)
}

/// Tail control for `Σ_{n>N} 2n·e^{−2πny} < tol`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPlan {
    pub tol: f64,
    pub y_min: f64,
}

impl TruncationPlan {
    pub const DEFAULT_TOL: f64 = 1e-12;

    pub fn new(tol: f64, y_min: f64) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 || y_min.is_nan() || y_min <= 0.0 {
            return Err(Error::InvalidInput(format!("tol = {tol}, y_min = {y_min}")));
        }
        let plan = TruncationPlan { tol, y_min };
        plan.terms(y_min)?;
        Ok(plan)
    }

    /// Closed form of `Σ_{n>N} 2n xⁿ`, `x = e^{−2πy}`.
    pub fn tail_bound(n: usize, y: f64) -> f64 {
        let x = (-2.0 * PI * y).exp();
        let nf = n as f64;
        2.0 * x.powf(nf + 1.0) * ((nf + 1.0) - nf * x) / ((1.0 - x) * (1.0 - x))
    }

    /// Bound on the floating-point error of summing `N` terms whose absolute
    /// values total at most `x/(π(1−x))`.
    pub fn rounding_bound(n: usize, y: f64) -> f64 {
        let x = (-2.0 * PI * y).exp();
        n as f64 * f64::EPSILON * (1.0 + x / (PI * (1.0 - x)))
    }

    /// Smallest term count meeting `tol` at height `y`.
    pub fn terms(&self, y: f64) -> Result<usize> {
        if y < self.y_min {
            return Err(Error::BelowFloor { im: y, floor: self.y_min });
        }
        // doubling then bisection on the monotone bound
        let mut hi = 1usize;
        while Self::tail_bound(hi, y) >= self.tol {
            hi *= 2;
            if hi > 1 << 40 {
                return Err(Error::Infeasible(format!("tail bound at y = {y}")));
            }
        }
        let mut lo = hi / 2;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if Self::tail_bound(mid, y) < self.tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let n = hi.max(1);
        if Self::rounding_bound(n, y) > 0.5 * self.tol {
            return Err(Error::Infeasible(format!(
                "tol = {:e} is below the rounding floor {:e} at y = {y}",
                self.tol,
                Self::rounding_bound(n, y)
            )));
        }
        Ok(n)
    }
}

/// Hecke eigenform `f = Σ a(n) qⁿ` of level `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenform {
    q: u64,
    coeffs: Vec<i64>,
    al_signs: BTreeMap<u64, i8>,
}

impl Eigenform {
    /// Point counts every prime up to `n_max` (in parallel) and extends.
    pub fn from_curve(curve: &CurveSpec, n_max: usize) -> Result<Self> {
        curve.validate()?;
        let primes = primes_up_to(n_max.max(2));
        let ap: Result<BTreeMap<u64, i64>> =
            primes.par_iter().map(|&p| count_points(curve, p).map(|a| (p, a))).collect();
        let coeffs = hecke_extend(&ap?, curve.q, n_max)?;
        Self::from_coeffs(curve.q, coeffs)
    }

    /// Wraps a coefficient array `a(0..=N)` (with `a(0)` ignored).
    pub fn from_coeffs(q: u64, mut coeffs: Vec<i64>) -> Result<Self> {
        if q < 2 || !is_squarefree(q) {
            return Err(Error::NotSquarefree(q));
        }
        if coeffs.len() < 2 || coeffs[1] != 1 {
            return Err(Error::InvalidInput("a(1) must be 1".into()));
        }
        coeffs[0] = 0;
        let mut al_signs = BTreeMap::new();
        for p in prime_factors(q) {
            let ap = *coeffs
                .get(p as usize)
                .ok_or(Error::InsufficientCoefficients { needed: p as usize, available: coeffs.len() - 1 })?;
            if ap.abs() != 1 {
                return Err(Error::ConductorMismatch(format!("a_{p} = {ap}, expected ±1 at p | q")));
            }
            al_signs.insert(p, -ap as i8);
        }
        Ok(Eigenform { q, coeffs, al_signs })
    }

    pub fn level(&self) -> u64 {
        self.q
    }

    /// Number of known coefficients `N_max`.
    pub fn len(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `a(n)` for `1 <= n <= N_max`.
    pub fn coeff(&self, n: usize) -> i64 {
        self.coeffs[n]
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn al_signs(&self) -> &BTreeMap<u64, i8> {
        &self.al_signs
    }

    /// `e_{f,d} = Π_{p|d} e_{f,p}`.
    pub fn al_sign(&self, d: u64) -> Result<i8> {
        if d == 0 || !self.q.is_multiple_of(d) {
            return Err(Error::InvalidInput(format!("{d} does not divide {}", self.q)));
        }
        Ok(prime_factors(d).iter().map(|p| self.al_signs[p]).product())
    }

    /// Copy with the local sign at `p` inverted. Only useful for negative tests
    /// of the verification gates.
    pub fn with_flipped_sign(&self, p: u64) -> Result<Self> {
        let mut out = self.clone();
        let s =
            out.al_signs.get_mut(&p).ok_or_else(|| Error::InvalidInput(format!("{p} does not divide {}", self.q)))?;
        *s = -*s;
        Ok(out)
    }

    fn term_count(&self, z: Complex64, plan: &TruncationPlan) -> Result<usize> {
        if z.im < plan.y_min {
            return Err(Error::BelowFloor { im: z.im, floor: plan.y_min });
        }
        let n = plan.terms(z.im)?;
        if n > self.len() {
            return Err(Error::InsufficientCoefficients { needed: n, available: self.len() });
        }
        Ok(n)
    }

    /// `Σ_{n≤N} w(n)·e(nz)` with `e(nz)` re-anchored every 128 terms.
    fn weighted_sum(&self, z: Complex64, n: usize, weight: impl Fn(usize, i64) -> f64) -> Complex64 {
        let step = Complex64::from_polar((-2.0 * PI * z.im).exp(), 2.0 * PI * z.re);
        let mut pow = Complex64::new(0.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 1..=n {
            pow = if k % 128 == 1 {
                let kf = k as f64;
                Complex64::from_polar((-2.0 * PI * kf * z.im).exp(), 2.0 * PI * (kf * z.re).rem_euclid(1.0))
            } else {
                pow * step
            };
            let a = self.coeffs[k];
            if a != 0 {
                sum += pow * weight(k, a);
            }
        }
        sum
    }

    /// `f(z) = Σ a(n) e(nz)`.
    pub fn eval(&self, z: Complex64, plan: &TruncationPlan) -> Result<Complex64> {
        let n = self.term_count(z, plan)?;
        Ok(self.weighted_sum(z, n, |_, a| a as f64))
    }

    /// `F(z) = Σ a(n)/(2πin) e(nz)`, the antiderivative of `f` vanishing at `i∞`.
    pub fn antiderivative(&self, z: Complex64, plan: &TruncationPlan) -> Result<Complex64> {
        let n = self.term_count(z, plan)?;
        let s = self.weighted_sum(z, n, |k, a| a as f64 / (2.0 * PI * k as f64));
        // divide by i
        Ok(Complex64::new(s.im, -s.re))
    }

    /// Same as [`antiderivative`](Self::antiderivative) with an explicit term count.
    pub fn antiderivative_terms(&self, z: Complex64, n: usize) -> Complex64 {
        let n = n.min(self.len());
        let s = self.weighted_sum(z, n, |k, a| a as f64 / (2.0 * PI * k as f64));
        Complex64::new(s.im, -s.re)
    }

    /// `L(f, 1) = (1 − e_{f,q}) Σ a(n)/n · e^{−2πn/√q}`, truncated once the
    /// tail `Σ 2·e^{−2πn/√q}` is below `1e-16`.
    pub fn lfun1(&self) -> Result<f64> {
        let n = self.lfun1_terms()?;
        Ok(self.lfun1_with_terms(n))
    }

    pub fn lfun1_terms(&self) -> Result<usize> {
        let x = (-2.0 * PI / (self.q as f64).sqrt()).exp();
        // Σ_{n>N} 2xⁿ = 2x^{N+1}/(1-x)
        let mut n = 1usize;
        while 2.0 * x.powf(n as f64 + 1.0) / (1.0 - x) > 1e-16 {
            n += 1;
        }
        if n > self.len() {
            return Err(Error::InsufficientCoefficients { needed: n, available: self.len() });
        }
        Ok(n)
    }

    pub fn lfun1_with_terms(&self, n: usize) -> f64 {
        let e = self.al_sign(self.q).expect("q | q");
        if e == 1 {
            return 0.0;
        }
        let x = (-2.0 * PI / (self.q as f64).sqrt()).exp();
        let s: f64 = (1..=n.min(self.len())).map(|k| self.coeffs[k] as f64 / k as f64 * x.powi(k as i32)).sum();
        (1.0 - e as f64) * s
    }

    /// Writes the coefficient cache: header `modsym-coeffs v1 q=<q> N=<N>`,
    /// then `<n> <a(n)>` per line.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "modsym-coeffs v1 q={} N={}", self.q, self.len())?;
        for (n, a) in self.coeffs.iter().enumerate().skip(1) {
            writeln!(w, "{n} {a}")?;
        }
        Ok(())
    }

    pub fn read_cache<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty coefficient cache".into()))??;
        let (q, n) = parse_coeff_header(&header)?;
        let mut coeffs = vec![0i64; n + 1];
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let (Some(k), Some(a), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad coefficient line {line:?}")));
            };
            let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad index {k:?}")))?;
            let a: i64 = a.parse().map_err(|_| Error::Parse(format!("bad value {a:?}")))?;
            if k != seen + 1 || k > n {
                return Err(Error::Parse(format!("unexpected index {k}")));
            }
            coeffs[k] = a;
            seen = k;
        }
        if seen != n {
            return Err(Error::Parse(format!("cache truncated at n = {seen} of {n}")));
        }
        Self::from_coeffs(q, coeffs)
    }
}

fn parse_coeff_header(header: &str) -> Result<(u64, usize)> {
    let bad = || Error::Parse(format!("bad coefficient cache header {header:?}"));
    let mut it = header.split_whitespace();
    if it.next() != Some("modsym-coeffs") || it.next() != Some("v1") {
        return Err(bad());
    }
    let q = it.next().and_then(|s| s.strip_prefix("q=")).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let n = it.next().and_then(|s| s.strip_prefix("N=")).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok((q, n))
}

/// Divisor count, used for the Deligne bound `|a(n)| <= d(n)√n`.
pub fn divisor_count(n: u64) -> u64 {
    let mut m = n;
    let mut total = 1;
    let mut p = 2;
    while p * p <= m {
        let mut e = 0;
        while m.is_multiple_of(p) {
            m /= p;
            e += 1;
        }
        total *= e + 1;
        p += 1;
    }
    if m > 1 {
        total *= 2;
    }
    total
}

/// `gcd`-free check that `d | q`.
pub fn divides(d: u64, q: u64) -> bool {
    d != 0 && gcd_u64(d, q) == d
}
