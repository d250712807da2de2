//! Numerical toolkit for Gevrey-class semiclassical analysis.
//!
//! Symbols are expression trees ([`expr::Expr`]) differentiated exactly through
//! truncated power series ([`tps::Tps`]). The modules build on each other:
//! `symbol_core` (quasinorms, Gevrey constants, resummation), `oscillatory`
//! (oscillatory integrals and stationary phase), `calculus` (quantization and
//! composition), `geometry` (Hamiltonian flows), `wkb` (eikonal and transport),
//! `egorov` (Fourier integral operators and conjugation), `fbi` (Bargmann-type
//! transforms) and `fit` (decay-law regression).

pub mod calculus;
pub mod cheb;
pub mod egorov;
pub mod error;
pub mod expr;
pub mod fbi;
pub mod fit;
pub mod geometry;
pub mod oscillatory;
pub mod quad;
pub mod symbol_core;
pub mod tps;
pub mod wkb;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
