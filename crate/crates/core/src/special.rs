//! Gamma-type functions on the cone: generalized Pochhammer symbols and the
//! multivariate gamma and beta functions. Everything is accumulated in log
//! space with an explicit sign.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Real parameter vector `(a_1, ..., a_r)`; a scalar `a` is the constant vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VecParam(pub Vec<f64>);

impl VecParam {
    pub fn scalar(a: f64, rank: usize) -> Self {
        Self(vec![a; rank])
    }

    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Entry `i` shifted by `-(i-1)/2` (1-based `i`); this is the argument of
    /// the `i`-th classical factor in `(a)_m` and `Gamma_Omega(a)`.
    #[inline]
    pub fn shifted(&self, i: usize) -> f64 {
        self.0[i] - 0.5 * i as f64
    }

    /// `self + other` entrywise.
    pub fn plus(&self, other: &VecParam) -> VecParam {
        VecParam(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &VecParam) -> VecParam {
        VecParam(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add_scalar(&self, c: f64) -> VecParam {
        VecParam(self.0.iter().map(|a| a + c).collect())
    }

    pub fn neg(&self) -> VecParam {
        VecParam(self.0.iter().map(|a| -a).collect())
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// A real number stored as `sign * exp(log_abs)`; `sign == 0` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: i8,
    pub log_abs: f64,
}

impl SignedLog {
    pub const ONE: SignedLog = SignedLog {
        sign: 1,
        log_abs: 0.0,
    };
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: if x > 0.0 { 1 } else { -1 },
                log_abs: x.abs().ln(),
            }
        }
    }

    pub fn value(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_abs.exp()
        }
    }

    pub fn mul(self, other: SignedLog) -> SignedLog {
        if self.sign == 0 || other.sign == 0 {
            Self::ZERO
        } else {
            SignedLog {
                sign: self.sign * other.sign,
                log_abs: self.log_abs + other.log_abs,
            }
        }
    }

    pub fn div(self, other: SignedLog) -> SignedLog {
        debug_assert!(other.sign != 0);
        SignedLog {
            sign: self.sign * other.sign,
            log_abs: self.log_abs - other.log_abs,
        }
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// `ln|Gamma(x)|` and the sign of `Gamma(x)`; `None` at poles.
pub fn ln_gamma_signed(x: f64) -> Option<(f64, i8)> {
    if is_nonpositive_integer(x) || !x.is_finite() {
        return None;
    }
    let (lg, sign) = libm::lgamma_r(x);
    Some((lg, if sign < 0 { -1 } else { 1 }))
}

/// Classical rising factorial `(c)_n` in signed-log form.
pub fn rising_factorial(c: f64, n: usize) -> SignedLog {
    let mut acc = SignedLog::ONE;
    for j in 0..n {
        acc = acc.mul(SignedLog::from_f64(c + j as f64));
        if acc.sign == 0 {
            break;
        }
    }
    acc
}

/// Generalized Pochhammer symbol `(a)_m = prod_i (a_i - (i-1)/2)_{m_i}`.
pub fn gpoch(a: &VecParam, m: &Partition) -> Result<f64> {
    Ok(log_gpoch(a, m)?.value())
}

pub fn log_gpoch(a: &VecParam, m: &Partition) -> Result<SignedLog> {
    if a.rank() != m.len() {
        return Err(Error::RankMismatch {
            expected: m.len(),
            got: a.rank(),
        });
    }
    let mut acc = SignedLog::ONE;
    for (i, &mi) in m.parts().iter().enumerate() {
        acc = acc.mul(rising_factorial(a.shifted(i), mi as usize));
    }
    Ok(acc)
}

/// `ln Gamma_Omega(s)` in signed form:
/// `Gamma_Omega(s) = (2 pi)^{r(r-1)/4} prod_k Gamma(s_k - (k-1)/2)`.
pub fn log_gamma_omega(s: &VecParam) -> Result<SignedLog> {
    let r = s.rank() as f64;
    let mut acc = SignedLog {
        sign: 1,
        log_abs: r * (r - 1.0) / 4.0 * (2.0 * PI).ln(),
    };
    for k in 0..s.rank() {
        let arg = s.shifted(k);
        let (lg, sign) = ln_gamma_signed(arg).ok_or(Error::PoleError {
            index: k + 1,
            argument: arg,
        })?;
        acc = acc.mul(SignedLog { sign, log_abs: lg });
    }
    Ok(acc)
}

pub fn gamma_omega(s: &VecParam) -> Result<f64> {
    Ok(log_gamma_omega(s)?.value())
}

/// Scalar-argument convenience for `Gamma_Omega(p)` at rank `r`.
pub fn log_gamma_omega_scalar(p: f64, rank: usize) -> Result<SignedLog> {
    log_gamma_omega(&VecParam::scalar(p, rank))
}

/// Multivariate beta function `Gamma_Omega(p) Gamma_Omega(q) / Gamma_Omega(p+q)`.
pub fn beta_omega(p: f64, q: f64, rank: usize) -> Result<f64> {
    Ok(log_beta_omega(p, q, rank)?.exp())
}

pub fn log_beta_omega(p: f64, q: f64, rank: usize) -> Result<f64> {
    let bound = 0.5 * (rank as f64 - 1.0);
    if !(p > bound && q > bound) {
        return Err(Error::DomainError(format!(
            "beta_omega requires p, q > (r-1)/2 = {bound}, got p = {p}, q = {q}"
        )));
    }
    let gp = log_gamma_omega_scalar(p, rank)?;
    let gq = log_gamma_omega_scalar(q, rank)?;
    let gpq = log_gamma_omega_scalar(p + q, rank)?;
    Ok(gp.log_abs + gq.log_abs - gpq.log_abs)
}

/// Log of a ratio of `Gamma_Omega` products, `prod num / prod den`, requiring a
/// positive result.
pub fn log_gamma_omega_ratio(num: &[VecParam], den: &[VecParam]) -> Result<f64> {
    let mut acc = SignedLog::ONE;
    for s in num {
        acc = acc.mul(log_gamma_omega(s)?);
    }
    for s in den {
        acc = acc.div(log_gamma_omega(s)?);
    }
    if acc.sign <= 0 {
        return Err(Error::DomainError("gamma ratio is not positive".into()));
    }
    Ok(acc.log_abs)
}
