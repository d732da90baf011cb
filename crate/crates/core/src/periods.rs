//! The symbol engine.
//!
//! For `h ∈ SL₂(Z)` the slash `f|h` is rewritten through an Atkin–Lehner
//! involution as `e·(k1/k2)·f((k1·w + m)/k2)`, so every period
//! `W(g) = ∫_{g(0)}^{g(∞)} f(z) dz` becomes a difference of two values of the
//! antiderivative `F` at height at least `1/q`. `W` only depends on the coset
//! `Γ₀(q)g`, so one complex number per class of `P¹(Z/q)` suffices, and a
//! symbol `⟨a/c⟩` is the sum of `W` over the Manin matrices of `a/c`.
//!
//! Only `⟨r⟩` itself is modelled. The symbol attached to the cusp pair
//! `(∞, 1/d)` differs from it by the constant `2πi∫_{1/d}^{i∞} Re(f dz)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigenform::{Eigenform, TruncationPlan};
use crate::error::{Error, Result};
use crate::exactmath::{
    atkin_lehner_matrix, crt, gcd, lift_class, mod_inv, solve_gamma_tilde, Fraction, ManinRows, Mat2, P1List,
};

/// `(f|₂h)(w) = sign·(k1/k2)·f((k1·w + m)/k2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpansionShift {
    pub sign: i8,
    pub k1: i64,
    pub k2: i64,
    pub m: i64,
    pub d: u64,
    pub v: u64,
}

impl ExpansionShift {
    pub fn argument(&self, w: Complex64) -> Complex64 {
        (w * self.k1 as f64 + self.m as f64) / self.k2 as f64
    }

    /// `∫_i^{i∞} (f|h)(w) dw = −sign·F((k1·i + m)/k2)`.
    pub fn tail_integral(&self, f: &Eigenform, plan: &TruncationPlan) -> Result<Complex64> {
        let arg = self.argument(Complex64::i());
        Ok(-(self.sign as f64) * f.antiderivative(arg, plan)?)
    }

    /// `(f|h)(w)`.
    pub fn eval(&self, f: &Eigenform, w: Complex64, plan: &TruncationPlan) -> Result<Complex64> {
        let scale = self.sign as f64 * self.k1 as f64 / self.k2 as f64;
        Ok(f.eval(self.argument(w), plan)? * scale)
    }
}

/// Expansion of `f|h` for unimodular `h`.
pub fn cusp_shift(h: &Mat2, f: &Eigenform) -> Result<ExpansionShift> {
    if h.det()? != 1 {
        return Err(Error::InvalidInput(format!("{h} is not unimodular")));
    }
    let q = f.level();
    // f|(−I) = f
    let h = if h.c < 0 { h.neg() } else { *h };
    if h.c == 0 {
        return Ok(ExpansionShift { sign: 1, k1: 1, k2: 1, m: 0, d: q, v: 1 });
    }
    let d = gcd(h.c, q as i128) as u64;
    let v = q / d;
    let gamma_tilde = solve_gamma_tilde(h.a, h.c, q)?;
    let w = atkin_lehner_matrix(q, v)?;
    let k = w.adjugate().mul(&gamma_tilde.adjugate())?.mul(&h)?;
    assert_eq!(k.c, 0, "K = {k} not upper triangular for h = {h}");
    let k = if k.a < 0 { k.neg() } else { k };
    assert_eq!(k.a * k.d, v as i128, "diagonal of {k} does not multiply to v = {v}");
    Ok(ExpansionShift { sign: f.al_sign(v)?, k1: k.a as i64, k2: k.d as i64, m: k.b.rem_euclid(k.d) as i64, d, v })
}

/// Real-convention value of a symbol: `⟨r⟩ = i·m_minus`, `⟨r⟩⁺ = m_plus`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolValue {
    pub m_minus: f64,
    pub m_plus: f64,
    pub r: Fraction,
    pub d: u64,
}

impl SymbolValue {
    /// `c(r) = c·√(q/d)`.
    pub fn normalized_denominator(&self, q: u64) -> f64 {
        self.r.c as f64 * ((q / self.d) as f64).sqrt()
    }
}

/// One period per class of `P¹(Z/q)`.
#[derive(Clone, Debug)]
pub struct PeriodTable {
    q: u64,
    p1: P1List,
    periods: Vec<Complex64>,
    tol: f64,
    n_terms: usize,
    re_by_pair: Vec<f64>,
    im_by_pair: Vec<f64>,
}

/// Residuals of the two- and three-term Manin relations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationResiduals {
    pub two_term: f64,
    pub three_term: f64,
}

impl PeriodTable {
    /// `W(g) = I(g) − I(gS)` with `I(h) = ∫_i^{i∞} (f|h)`, split at `g(i)`.
    /// Each `F` value is certified to `tol/4`.
    pub fn build(f: &Eigenform, tol: f64) -> Result<Self> {
        let q = f.level();
        let plan = TruncationPlan::new(tol / 4.0, 1.0 / q as f64)?;
        let p1 = P1List::new(q)?;
        let entries: Result<Vec<(Complex64, usize)>> = p1
            .classes()
            .par_iter()
            .map(|k| {
                let g = lift_class(k);
                let top = cusp_shift(&g, f)?;
                let bottom = cusp_shift(&g.mul(&Mat2::S)?, f)?;
                let n = [top, bottom]
                    .iter()
                    .map(|s| plan.terms(s.k1 as f64 / s.k2 as f64))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(0);
                Ok((top.tail_integral(f, &plan)? - bottom.tail_integral(f, &plan)?, n))
            })
            .collect();
        let entries = entries?;
        let n_terms = entries.iter().map(|e| e.1).max().unwrap_or(0);
        let periods = entries.into_iter().map(|e| e.0).collect();
        Ok(Self::assemble(q, p1, periods, tol, n_terms))
    }

    /// Table from stored periods in class order.
    pub fn from_periods(q: u64, periods: Vec<Complex64>, tol: f64) -> Result<Self> {
        let p1 = P1List::new(q)?;
        if periods.len() != p1.len() {
            return Err(Error::InvalidInput(format!("{} periods for {} classes", periods.len(), p1.len())));
        }
        Ok(Self::assemble(q, p1, periods, tol, 0))
    }

    fn assemble(q: u64, p1: P1List, periods: Vec<Complex64>, tol: f64, n_terms: usize) -> Self {
        let lookup = |part: fn(&Complex64) -> f64| -> Vec<f64> {
            p1.dense_index()
                .iter()
                .map(|&id| if id == P1List::NONE { f64::NAN } else { part(&periods[id as usize]) })
                .collect()
        };
        let re_by_pair = lookup(|z| z.re);
        let im_by_pair = lookup(|z| z.im);
        PeriodTable { q, p1, periods, tol, n_terms, re_by_pair, im_by_pair }
    }

    pub fn level(&self) -> u64 {
        self.q
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Largest truncation used during the build (0 for a reloaded table).
    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn p1(&self) -> &P1List {
        &self.p1
    }

    pub fn periods(&self) -> &[Complex64] {
        &self.periods
    }

    /// `W` of the coset of `g`.
    pub fn period_of(&self, g: &Mat2) -> Complex64 {
        let id = self.p1.index_of_matrix(g).expect("unimodular bottom row");
        self.periods[id]
    }

    pub fn relation_residuals(&self) -> Result<RelationResiduals> {
        let mut two_term = 0.0f64;
        let mut three_term = 0.0f64;
        for k in self.p1.classes() {
            let g = lift_class(k);
            let w = self.period_of(&g);
            two_term = two_term.max((w + self.period_of(&g.mul(&Mat2::S)?)).norm());
            let gu = g.mul(&Mat2::U)?;
            let guu = gu.mul(&Mat2::U)?;
            three_term = three_term.max((w + self.period_of(&gu) + self.period_of(&guu)).norm());
        }
        Ok(RelationResiduals { two_term, three_term })
    }

    #[inline]
    fn slot(&self, c: i64, d: i64) -> usize {
        let q = self.q as i64;
        (c.rem_euclid(q) * q + d.rem_euclid(q)) as usize
    }

    /// `P(a/c) = ∫_{i∞}^{a/c} f(z) dz`, with `0 <= a < c` and `gcd(a, c) = 1`.
    #[inline]
    pub fn period_sum(&self, a: i64, c: i64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (cc, dd) in ManinRows::new(a, c) {
            let s = self.slot(cc, dd);
            re += self.re_by_pair[s];
            im += self.im_by_pair[s];
        }
        Complex64::new(re, im)
    }

    /// `m(a/c) = 2π·Re P(a/c)` for `0 <= a < c`, `gcd(a, c) = 1`.
    #[inline]
    pub fn m_minus(&self, a: i64, c: i64) -> f64 {
        let mut re = 0.0;
        for (cc, dd) in ManinRows::new(a, c) {
            re += self.re_by_pair[self.slot(cc, dd)];
        }
        2.0 * PI * re
    }

    /// Period to an arbitrary rational, reduced mod 1.
    pub fn period(&self, r: Fraction) -> Complex64 {
        let r = Fraction::new(r.a, r.c).expect("nonzero denominator").mod_one();
        self.period_sum(r.a, r.c)
    }

    pub fn symbol(&self, r: Fraction) -> SymbolValue {
        let r = Fraction::new(r.a, r.c).expect("nonzero denominator").mod_one();
        let p = self.period_sum(r.a, r.c);
        SymbolValue {
            m_minus: 2.0 * PI * p.re,
            m_plus: -2.0 * PI * p.im,
            r,
            d: gcd(r.c as i128, self.q as i128) as u64,
        }
    }

    /// Header `modsym-table v1 q=<q> tol=<tol>`, then `<c>:<d> <Re W> <Im W>`
    /// with 17 significant digits.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "modsym-table v1 q={} tol={:e}", self.q, self.tol)?;
        for (k, z) in self.p1.classes().iter().zip(&self.periods) {
            writeln!(w, "{}:{} {:.16e} {:.16e}", k.c, k.d, z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_cache<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty table cache".into()))??;
        let bad = || Error::Parse(format!("bad table header {header:?}"));
        let mut it = header.split_whitespace();
        if it.next() != Some("modsym-table") || it.next() != Some("v1") {
            return Err(bad());
        }
        let q: u64 = it.next().and_then(|s| s.strip_prefix("q=")).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let tol: f64 = it.next().and_then(|s| s.strip_prefix("tol=")).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let p1 = P1List::new(q)?;
        let mut periods = Vec::with_capacity(p1.len());
        for (k, line) in p1.classes().iter().zip(lines.by_ref()) {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != format!("{}:{}", k.c, k.d) {
                return Err(Error::Parse(format!("expected class {}:{}, got {line:?}", k.c, k.d)));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad float {s:?}")));
            periods.push(Complex64::new(parse(fields[1])?, parse(fields[2])?));
        }
        if periods.len() != p1.len() || lines.next().is_some() {
            return Err(Error::Parse("table cache has the wrong number of entries".into()));
        }
        Ok(Self::assemble(q, p1, periods, tol, 0))
    }
}

/// Period to `r` by a single split point, independent of the table.
///
/// With `d = gcd(c, q)`, `v = q/d` and `g = (a, B; c, D) = γ̃·(1, 0; d, 1)`,
/// `γ̃ ∈ Γ₀(q)`, the path `i∞ → a/c` is split at `g(z₀)`:
/// `P(r) = F(g z₀) − e_{f,v}·F((z₀ − y)/v)`, `y` from `W_v`. Taking
/// `z₀ = −D/c + i√v/c` puts both arguments at height `1/(c√v)`.
pub fn direct_symbol_oracle(r: Fraction, f: &Eigenform, tol: f64) -> Result<Complex64> {
    const MAX_DENOMINATOR: i64 = 200;
    let r = Fraction::new(r.a, r.c)?.mod_one();
    if r.c > MAX_DENOMINATOR {
        return Err(Error::Infeasible(format!("oracle limited to c <= {MAX_DENOMINATOR}, got {r}")));
    }
    let q = f.level();
    let (a, c) = (r.a as i128, r.c as i128);
    let d = gcd(c, q as i128);
    let v = q as i128 / d;
    let inv_a = mod_inv(a, c).expect("reduced");
    let target = (mod_inv(d, v).expect("squarefree level") * c).rem_euclid(v);
    let big_d = crt(inv_a, c, target, v).ok_or_else(|| Error::Infeasible(format!("CRT at {r}")))?;
    let big_b = (a * big_d - 1) / c;
    let g = Mat2::new(a, big_b, c, big_d);
    debug_assert_eq!(g.det()?, 1);
    let y = atkin_lehner_matrix(q, v as u64)?.b;

    let (vf, cf) = (v as f64, c as f64);
    let height = 1.0 / (cf * vf.sqrt());
    let plan = TruncationPlan::new(tol / 2.0, height * (1.0 - 1e-9))?;
    let z0 = Complex64::new(-(big_d as f64) / cf, vf.sqrt() / cf);
    let gz0 = (z0 * a as f64 + big_b as f64) / (z0 * cf + big_d as f64);
    let gz0 = Complex64::new(gz0.re, gz0.im.max(height));
    let second = (z0 - y as f64) / vf;
    let e = f.al_sign(v as u64)? as f64;
    Ok(f.antiderivative(gz0, &plan)? - e * f.antiderivative(second, &plan)?)
}

/// `|a(p)P(r) − P(pr) − Σ_{0<=b<p} P((r+b)/p)|` for a prime `p ∤ q`.
pub fn hecke_residual(table: &PeriodTable, f: &Eigenform, p: u64, r: Fraction) -> Result<f64> {
    if f.level().is_multiple_of(p) {
        return Err(Error::InvalidInput(format!("p = {p} divides the level")));
    }
    let pi = p as i64;
    let lhs = table.period(r) * f.coeff(p as usize) as f64;
    let mut rhs = table.period(Fraction::new(pi * r.a, r.c)?);
    for b in 0..pi {
        rhs += table.period(Fraction::new(r.a + b * r.c, pi * r.c)?);
    }
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenform::CurveSpec;
    use crate::exactmath::normalize_p1;

    fn setup() -> (Eigenform, PeriodTable) {
        let f = Eigenform::from_curve(&CurveSpec::CURVE_15A1, 6000).unwrap();
        let t = PeriodTable::build(&f, 1e-12).unwrap();
        (f, t)
    }

    #[test]
    fn shift_of_identity_and_s() {
        let (f, _) = setup();
        let id = cusp_shift(&Mat2::IDENTITY, &f).unwrap();
        assert_eq!((id.sign, id.k1, id.k2, id.m), (1, 1, 1, 0));
        let s = cusp_shift(&Mat2::S, &f).unwrap();
        assert_eq!((s.sign, s.k1, s.k2, s.m), (f.al_sign(15).unwrap(), 1, 15, 0));
    }

    #[test]
    fn fricke_identity_matches_shift_of_s() {
        // f(−1/w)·w⁻² = e_q·(1/q)·f(w/q) at a sample point
        let (f, _) = setup();
        let plan = TruncationPlan::new(1e-13, 0.05).unwrap();
        let w = Complex64::new(0.2, 1.3);
        let lhs = f.eval(-w.inv(), &plan).unwrap() / (w * w);
        let rhs = cusp_shift(&Mat2::S, &f).unwrap().eval(&f, w, &plan).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1e-3), "{lhs} vs {rhs}");
    }

    #[test]
    fn widths_of_all_lifts() {
        let (f, t) = setup();
        for k in t.p1().classes() {
            let g = lift_class(k);
            let s = cusp_shift(&g, &f).unwrap();
            let c = if g.c < 0 { -g.c } else { g.c };
            let d = if c == 0 { 15 } else { gcd(c, 15) as i64 };
            assert_eq!(s.k1 * s.k2, 15 / d, "class {k}");
        }
    }

    #[test]
    fn slash_expansion_is_exact_pointwise() {
        // (f|h)(w) = f(hw)·j(h, w)⁻² for every lift and its S-translate
        let (f, t) = setup();
        let plan = TruncationPlan::new(1e-11, 0.01).unwrap();
        let w = Complex64::new(0.11, 1.7);
        for k in t.p1().classes() {
            for h in [lift_class(k), lift_class(k).mul(&Mat2::S).unwrap()] {
                let hw = (w * h.a as f64 + h.b as f64) / (w * h.c as f64 + h.d as f64);
                let j = w * h.c as f64 + h.d as f64;
                let direct = f.eval(hw, &plan).unwrap() / (j * j);
                let via = cusp_shift(&h, &f).unwrap().eval(&f, w, &plan).unwrap();
                assert!((direct - via).norm() < 1e-9, "h = {h}: {direct} vs {via}");
            }
        }
    }

    #[test]
    fn table_relations() {
        let (_, t) = setup();
        assert_eq!(t.len(), 24);
        let r = t.relation_residuals().unwrap();
        assert!(r.two_term < 2e-12, "{r:?}");
        assert!(r.three_term < 3e-12, "{r:?}");
    }

    #[test]
    fn zero_symbol_is_l_value() {
        let (f, t) = setup();
        let s = t.symbol(Fraction::new(0, 1).unwrap());
        assert!(s.m_minus.abs() < 1e-12);
        assert!((s.m_plus - f.lfun1().unwrap()).abs() < 1e-8, "{} vs {}", s.m_plus, f.lfun1().unwrap());
    }

    #[test]
    fn periodicity() {
        let (_, t) = setup();
        let a = t.symbol(Fraction::new(1, 2).unwrap());
        let b = t.symbol(Fraction::new(3, 2).unwrap());
        assert_eq!(a, b);
        let x = t.symbol(Fraction::new(7, 30).unwrap());
        let y = t.symbol(Fraction::new(37 - 60, 30).unwrap());
        assert!((x.m_minus - y.m_minus).abs() < 1e-12);
    }

    #[test]
    fn oracle_agrees_on_small_denominators() {
        let (f, t) = setup();
        for (a, c) in [(0, 1), (1, 3), (2, 5), (4, 15), (7, 30), (1, 7), (11, 45), (13, 97)] {
            let r = Fraction::new(a, c).unwrap();
            let o = direct_symbol_oracle(r, &f, 1e-10).unwrap();
            let m = t.period(r);
            assert!((o - m).norm() < 1e-8, "{r}: oracle {o} vs table {m}");
        }
        assert!(direct_symbol_oracle(Fraction::new(1, 201).unwrap(), &f, 1e-10).is_err());
    }

    #[test]
    fn hecke_relation_small() {
        let (f, t) = setup();
        for (a, c) in [(1, 4), (3, 10), (2, 9), (5, 12)] {
            for p in [2, 7] {
                let res = hecke_residual(&t, &f, p, Fraction::new(a, c).unwrap()).unwrap();
                assert!(res < 1e-10, "p = {p}, {a}/{c}: {res}");
            }
        }
    }

    #[test]
    fn cache_is_bit_exact() {
        let (_, t) = setup();
        let mut buf = Vec::new();
        t.write_cache(&mut buf).unwrap();
        let u = PeriodTable::read_cache(&buf[..]).unwrap();
        assert_eq!(t.periods(), u.periods());
        assert_eq!(t.tol(), u.tol());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("modsym-table v1 q=15 tol=1e-12\n"));
        let class = normalize_p1(0, 1, 15).unwrap();
        assert!(text.contains(&format!("\n{}:{} ", class.c, class.d)));
    }
}
