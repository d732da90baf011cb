//! Exact integer arithmetic for the symbol engine.
//!
//! This module provides:
//! - [`Fraction`]: a reduced rational `a/c` with `c >= 1`
//! - [`Mat2`]: 2x2 integer matrices with overflow-checked 128-bit entries
//! - [`cf_decompose`]: Manin's continued-fraction splitting of the path `{i∞, a/c}`
//! - [`P1List`]: the projective line over `Z/q`, i.e. the right cosets of
//!   `Γ₀(q)` in `SL₂(Z)`, with canonical representatives and a dense lookup
//! - [`solve_gamma_tilde`] and [`atkin_lehner_matrix`]: the Bezout/CRT
//!   solvers used to move a cusp `α/γ` back to its representative `1/d`

use std::fmt;

use crate::error::{Error, Result};

/// Greatest common divisor, always non-negative.
pub fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Extended Euclid: returns `(g, s, t)` with `a*s + b*t = g = gcd(a, b) >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let quot = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - quot * r);
        (old_s, s) = (s, old_s - quot * s);
        (old_t, t) = (t, old_t - quot * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

/// Inverse of `a` modulo `m`, in `[0, m)`. `m = 1` yields 0.
pub fn mod_inv(a: i128, m: i128) -> Option<i128> {
    if m == 1 {
        return Some(0);
    }
    let (g, s, _) = ext_gcd(a.rem_euclid(m), m);
    (g == 1).then(|| s.rem_euclid(m))
}

/// Chinese remainder for coprime moduli: the unique `x` in `[0, m1*m2)` with
/// `x ≡ r1 (mod m1)` and `x ≡ r2 (mod m2)`.
pub fn crt(r1: i128, m1: i128, r2: i128, m2: i128) -> Option<i128> {
    let inv = mod_inv(m1, m2)?;
    let r1 = r1.rem_euclid(m1);
    let k = ((r2 - r1).rem_euclid(m2) * inv).rem_euclid(m2);
    Some((r1 + k * m1).rem_euclid(m1 * m2))
}

/// Distinct prime factors in increasing order, by trial division.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            out.push(p);
            while n.is_multiple_of(p) {
                n /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn is_squarefree(mut n: u64) -> bool {
    if n == 0 {
        return false;
    }
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return false;
            }
        }
        p += 1;
    }
    true
}

/// Positive divisors in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut k = 1u64;
    while k * k <= n {
        if n.is_multiple_of(k) {
            small.push(k);
            if k * k != n {
                large.push(n / k);
            }
        }
        k += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Euler's totient for every `n <= max`, index 0 holds 0.
pub fn totient_table(max: usize) -> Vec<u64> {
    let mut phi: Vec<u64> = (0..=max as u64).collect();
    for p in 2..=max {
        if phi[p] == p as u64 {
            for k in (p..=max).step_by(p) {
                phi[k] -= phi[k] / p as u64;
            }
        }
    }
    phi
}

/// Reduced fraction `a/c`, `c >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub a: i64,
    pub c: i64,
}

impl Fraction {
    /// Builds `a/c` reduced to lowest terms with a positive denominator.
    pub fn new(a: i64, c: i64) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        let g = gcd(a as i128, c as i128) as i64;
        let s = c.signum();
        Ok(Fraction { a: s * a / g, c: s * c / g })
    }

    /// Representative with `0 <= a < c`.
    pub fn mod_one(self) -> Self {
        Fraction { a: self.a.rem_euclid(self.c), c: self.c }
    }

    pub fn to_f64(self) -> f64 {
        self.a as f64 / self.c as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.a, self.c)
    }
}

/// Integer matrix `(a, b; c, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mat2 {
    pub a: i128,
    pub b: i128,
    pub c: i128,
    pub d: i128,
}

fn ck(v: Option<i128>) -> Result<i128> {
    v.ok_or(Error::Overflow)
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1, 0, 0, 1);
    pub const S: Mat2 = Mat2::new(0, -1, 1, 0);
    /// Order-3 element `z ↦ (z - 1)/z`.
    pub const U: Mat2 = Mat2::new(1, -1, 1, 0);

    pub const fn new(a: i128, b: i128, c: i128, d: i128) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn det(&self) -> Result<i128> {
        ck(ck(self.a.checked_mul(self.d))?.checked_sub(ck(self.b.checked_mul(self.c))?))
    }

    pub fn mul(&self, o: &Mat2) -> Result<Mat2> {
        let dot = |x: i128, y: i128, z: i128, w: i128| -> Result<i128> {
            ck(ck(x.checked_mul(y))?.checked_add(ck(z.checked_mul(w))?))
        };
        Ok(Mat2 {
            a: dot(self.a, o.a, self.b, o.c)?,
            b: dot(self.a, o.b, self.b, o.d)?,
            c: dot(self.c, o.a, self.d, o.c)?,
            d: dot(self.c, o.b, self.d, o.d)?,
        })
    }

    /// Adjugate `(d, -b; -c, a)`; the inverse when `det = 1`.
    pub fn adjugate(&self) -> Mat2 {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn neg(&self) -> Mat2 {
        Mat2::new(-self.a, -self.b, -self.c, -self.d)
    }

    /// Image of the cusp `num/den` (`den = 0` is ∞), as a reduced pair with
    /// non-negative denominator.
    pub fn act_cusp(&self, num: i128, den: i128) -> Result<(i128, i128)> {
        let n = ck(ck(self.a.checked_mul(num))?.checked_add(ck(self.b.checked_mul(den))?))?;
        let m = ck(ck(self.c.checked_mul(num))?.checked_add(ck(self.d.checked_mul(den))?))?;
        let g = gcd(n, m);
        if g == 0 {
            return Err(Error::InvalidInput("degenerate cusp image".into()));
        }
        let (n, m) = (n / g, m / g);
        Ok(if m < 0 || (m == 0 && n < 0) { (-n, -m) } else { (n, m) })
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}; {}, {})", self.a, self.b, self.c, self.d)
    }
}

/// Bottom rows `(q_j, (-1)^{j-1} q_{j-1})` of the Manin matrices of `a/c`,
/// generated without allocation. Requires `0 <= a < c`.
#[derive(Clone, Debug)]
pub struct ManinRows {
    num: i64,
    den: i64,
    q_prev: i64,
    q_cur: i64,
    sign: i64,
    started: bool,
}

impl ManinRows {
    pub fn new(a: i64, c: i64) -> Self {
        debug_assert!(c >= 1 && 0 <= a && a < c);
        ManinRows { num: c, den: a, q_prev: 0, q_cur: 1, sign: -1, started: false }
    }
}

impl Iterator for ManinRows {
    type Item = (i64, i64);

    #[inline]
    fn next(&mut self) -> Option<(i64, i64)> {
        if !self.started {
            // a_0 = 0, so q_0 = 1 and q_{-1} = 0
            self.started = true;
            return Some((1, 0));
        }
        if self.den == 0 {
            return None;
        }
        let quot = self.num / self.den;
        (self.num, self.den) = (self.den, self.num - quot * self.den);
        let q_next = quot * self.q_cur + self.q_prev;
        self.q_prev = self.q_cur;
        self.q_cur = q_next;
        self.sign = -self.sign;
        Some((self.q_cur, self.sign * self.q_prev))
    }
}

/// Manin decomposition of the path from `i∞` to `r`.
///
/// Returns `g_0, …, g_n` with `g_j = (p_j, (-1)^{j-1} p_{j-1}; q_j, (-1)^{j-1} q_{j-1})`
/// built from the convergents of `r` (with `p_{-1}/q_{-1} = 1/0`), so that
/// `g_0(0) = ∞`, `g_j(∞) = g_{j+1}(0)` and `g_n(∞) = r`.
pub fn cf_decompose(r: Fraction) -> Result<Vec<Mat2>> {
    if r.c < 1 {
        return Err(Error::InvalidInput(format!("denominator of {r} must be positive")));
    }
    let r = Fraction::new(r.a, r.c)?;
    let (mut num, mut den) = (r.a as i128, r.c as i128);
    let (mut p_prev, mut q_prev) = (1i128, 0i128);
    let a0 = num.div_euclid(den);
    (num, den) = (den, num - a0 * den);
    let (mut p_cur, mut q_cur) = (a0, 1i128);
    let mut sign = -1i128;
    let mut out = vec![Mat2::new(p_cur, sign * p_prev, q_cur, sign * q_prev)];
    while den != 0 {
        let quot = num / den;
        (num, den) = (den, num - quot * den);
        let p_next = ck(ck(quot.checked_mul(p_cur))?.checked_add(p_prev))?;
        let q_next = ck(ck(quot.checked_mul(q_cur))?.checked_add(q_prev))?;
        (p_prev, p_cur) = (p_cur, p_next);
        (q_prev, q_cur) = (q_cur, q_next);
        sign = -sign;
        out.push(Mat2::new(p_cur, sign * p_prev, q_cur, sign * q_prev));
    }
    Ok(out)
}

/// A point `(c : d)` of `P¹(Z/q)` in canonical form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct P1Class {
    pub q: u64,
    pub c: u64,
    pub d: u64,
}

impl fmt::Display for P1Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.c, self.d)
    }
}

fn units_mod(q: u64) -> Vec<u64> {
    (0..q.max(1)).filter(|&l| gcd_u64(l, q) == 1 || q == 1).collect()
}

/// Canonical representative of `(c : d)`: the lexicographically smallest
/// `(λc mod q, λd mod q)` over units `λ`.
pub fn normalize_p1(c: i64, d: i64, q: u64) -> Result<P1Class> {
    if q == 0 {
        return Err(Error::InvalidInput("level must be positive".into()));
    }
    let qi = q as i128;
    let (c, d) = ((c as i128).rem_euclid(qi) as u64, (d as i128).rem_euclid(qi) as u64);
    if gcd_u64(gcd_u64(c, d), q) != 1 && q != 1 {
        return Err(Error::InvalidInput(format!("gcd({c}, {d}, {q}) != 1")));
    }
    let best = units_mod(q)
        .into_iter()
        .map(|l| (((l as u128 * c as u128) % q as u128) as u64, ((l as u128 * d as u128) % q as u128) as u64))
        .min()
        .unwrap_or((0, 0));
    Ok(P1Class { q, c: best.0, d: best.1 })
}

/// All classes of `P¹(Z/q)` with a dense `(c mod q, d mod q) → index` table.
#[derive(Clone, Debug)]
pub struct P1List {
    q: u64,
    classes: Vec<P1Class>,
    index: Vec<u32>,
}

impl P1List {
    pub const NONE: u32 = u32::MAX;

    /// Enumerates the classes by orbit sweeping in lexicographic order; the
    /// first unvisited pair of an orbit is its canonical representative.
    pub fn new(q: u64) -> Result<Self> {
        if q == 0 || q > 1 << 15 {
            return Err(Error::InvalidInput(format!("level {q} outside supported range")));
        }
        let qs = q as usize;
        let units = units_mod(q);
        let mut index = vec![Self::NONE; qs * qs];
        let mut classes = Vec::new();
        for c in 0..q {
            for d in 0..q {
                let slot = c as usize * qs + d as usize;
                if index[slot] != Self::NONE {
                    continue;
                }
                if q != 1 && gcd_u64(gcd_u64(c, d), q) != 1 {
                    continue;
                }
                let id = classes.len() as u32;
                classes.push(P1Class { q, c, d });
                for &l in &units {
                    let (lc, ld) = ((l * c) % q, (l * d) % q);
                    index[lc as usize * qs + ld as usize] = id;
                }
            }
        }
        Ok(P1List { q, classes, index })
    }

    pub fn level(&self) -> u64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[P1Class] {
        &self.classes
    }

    /// Index of the class of `(c : d)`; `None` if `gcd(c, d, q) != 1`.
    #[inline]
    pub fn index_of(&self, c: i64, d: i64) -> Option<usize> {
        let q = self.q as i64;
        let slot = c.rem_euclid(q) as usize * self.q as usize + d.rem_euclid(q) as usize;
        let id = self.index[slot];
        (id != Self::NONE).then_some(id as usize)
    }

    /// Raw dense table, row-major over `(c mod q, d mod q)`.
    pub fn dense_index(&self) -> &[u32] {
        &self.index
    }

    /// Index of the coset `Γ₀(q) g`.
    pub fn index_of_matrix(&self, g: &Mat2) -> Option<usize> {
        let q = self.q as i128;
        self.index_of(g.c.rem_euclid(q) as i64, g.d.rem_euclid(q) as i64)
    }
}

/// Expected size of `P¹(Z/q)` for squarefree `q`: `q Π_{p|q} (1 + 1/p)`.
pub fn p1_size(q: u64) -> u64 {
    prime_factors(q).into_iter().fold(q, |acc, p| acc / p * (p + 1))
}

/// Lifts a class to `SL₂(Z)`.
///
/// Bottom rows `(C, D)` are scanned by height `max(|C|, |D|) = 0, 1, 2, …`,
/// within a height by `C` ascending (`C >= 0`), then `|D|` ascending with the
/// positive sign first; the first coprime row in the class is completed with
/// the top row `(A, B)` of smallest `|A|` (ties to positive `A`).
pub fn lift_class(k: &P1Class) -> Mat2 {
    let q = k.q as i64;
    let target = normalize_p1(k.c as i64, k.d as i64, k.q).expect("valid class");
    for h in 1i64.. {
        for cc in 0..=h {
            let d_candidates: Vec<i64> = if cc == h {
                (0..=h).flat_map(|x| if x == 0 { vec![0] } else { vec![x, -x] }).collect()
            } else {
                vec![h, -h]
            };
            for dd in d_candidates {
                if gcd(cc as i128, dd as i128) != 1 {
                    continue;
                }
                if cc == 0 && dd != 1 {
                    continue;
                }
                if normalize_p1(cc.rem_euclid(q), dd.rem_euclid(q), k.q).ok() != Some(target) {
                    continue;
                }
                return complete_row(cc as i128, dd as i128);
            }
        }
    }
    unreachable!()
}

/// Completes a coprime bottom row `(c, d)` to an element of `SL₂(Z)`.
fn complete_row(c: i128, d: i128) -> Mat2 {
    if c == 0 {
        return Mat2::new(d, 0, 0, d);
    }
    // a*d - b*c = 1  ⇔  a ≡ d⁻¹ (mod c)
    let cm = c.abs();
    let base = mod_inv(d, cm).expect("coprime row");
    let a = [base, base - cm].into_iter().min_by_key(|&a| (a.abs(), a < 0)).unwrap();
    let b = (a * d - 1) / c;
    Mat2::new(a, b, c, d)
}

/// Cusp representative `1/d` with width data `v = q/d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CuspClass {
    pub d: u64,
    pub v: u64,
}

impl CuspClass {
    pub fn new(d: u64, q: u64) -> Result<Self> {
        if d == 0 || !q.is_multiple_of(d) {
            return Err(Error::InvalidInput(format!("{d} does not divide {q}")));
        }
        let v = q / d;
        if gcd_u64(d, v) != 1 {
            return Err(Error::NotSquarefree(q));
        }
        Ok(CuspClass { d, v })
    }

    /// The class of a denominator: `d = gcd(c, q)`.
    pub fn of_denominator(c: u64, q: u64) -> Result<Self> {
        Self::new(gcd_u64(c, q), q)
    }
}

/// Element `γ̃ = (A, B; C, D) ∈ Γ₀(q)` with `γ̃(1/d) = α/γ`, `d = gcd(γ, q)`.
pub fn solve_gamma_tilde(alpha: i128, gamma: i128, q: u64) -> Result<Mat2> {
    if gamma < 1 || gcd(alpha, gamma) != 1 {
        return Err(Error::InvalidInput(format!("need gcd(α, γ) = 1 and γ >= 1, got {alpha}/{gamma}")));
    }
    let qi = q as i128;
    let d = gcd(gamma, qi);
    let v = qi / d;
    let gamma_red = gamma / d;
    let inv_alpha = mod_inv(alpha, gamma).expect("coprime");
    let big_d = crt(gamma_red, v, inv_alpha, gamma)
        .ok_or_else(|| Error::Infeasible(format!("CRT for γ̃ at {alpha}/{gamma}, q = {q}")))?;
    let big_b = (ck(alpha.checked_mul(big_d))? - 1) / gamma;
    let big_a = alpha - ck(big_b.checked_mul(d))?;
    let big_c = gamma - ck(d.checked_mul(big_d))?;
    let m = Mat2::new(big_a, big_b, big_c, big_d);
    debug_assert_eq!(m.det()?, 1);
    debug_assert_eq!(big_c.rem_euclid(qi), 0);
    Ok(m)
}

/// Atkin–Lehner matrix `W_v = (v, y; q, v·w')` with `v·w' − y·d = 1`,
/// `d = q/v`; `w'` is taken in `[0, d)`. Determinant `v`.
pub fn atkin_lehner_matrix(q: u64, v: u64) -> Result<Mat2> {
    let cusp = CuspClass::new(q / v.max(1), q)?;
    if cusp.v != v {
        return Err(Error::InvalidInput(format!("{v} does not divide {q}")));
    }
    let (vi, di) = (v as i128, cusp.d as i128);
    let w = mod_inv(vi, di).expect("gcd(v, d) = 1");
    let y = (vi * w - 1) / di;
    Ok(Mat2::new(vi, y, q as i128, vi * w))
}
