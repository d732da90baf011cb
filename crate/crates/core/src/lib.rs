//! Numerical modular symbols `⟨a/c⟩` for the weight-2 newform of an elliptic
//! curve with squarefree conductor `q`, and the moment statistics of their
//! values ordered by denominator.
//!
//! The pipeline is:
//! 1. [`eigenform`]: Hecke eigenvalues from point counts, Atkin–Lehner signs,
//!    and the antiderivative `F(z)` of `f(z) dz` vanishing at `i∞`.
//! 2. [`periods`]: one period per coset of `Γ₀(q)` in `SL₂(Z)`, so that any
//!    symbol is an `O(log c)` sum over the Manin decomposition.
//! 3. [`scanstats`]: streaming aggregates over `{a/c : (c, q) = d}`.
//! 4. [`theory`]: the closed-form constants the aggregates are compared with.
//!
//! Symbols are stored in the real convention `⟨r⟩ = i·m(r)`.

pub mod eigenform;
pub mod error;
pub mod exactmath;
pub mod periods;
pub mod scanstats;
pub mod theory;

pub use error::{Error, Result};
