//! Levin u-transform for slowly converging series, in double-double
//! arithmetic.
//!
//! Used on the layer partial sums of series evaluated at the identity, whose
//! tails decay like a power of the degree. The transform amplifies rounding
//! noise in the partial sums by many orders of magnitude, so both the sums and
//! the transform weights are carried in double-double.

use twofloat::TwoFloat;

/// Extrapolated limit of a sequence of partial sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Distance between the selected transform and the previous order.
    pub error: f64,
    /// Order `k` of the selected transform.
    pub order: usize,
    /// First partial sum index used.
    pub anchor: usize,
}

const BETA: f64 = 1.0;

/// Double-double quotient by long division; `TwoFloat / TwoFloat` itself is
/// only accurate to about one double.
pub(crate) fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::from(q1) + TwoFloat::from(q2) + TwoFloat::from(q3)
}

/// Offset of the second, earlier window used to cross-check an estimate.
const WINDOW_SHIFT: usize = 5;

fn dd_from_u64(x: u64) -> TwoFloat {
    let hi = x as f64;
    let lo = (x as i128 - hi as i128) as f64;
    TwoFloat::from(hi) + TwoFloat::from(lo)
}

/// Binomial coefficients `C(k, 0..=k)`, exact while they fit in 64 bits.
fn binomials(k: usize) -> Vec<TwoFloat> {
    let mut row = vec![1u128];
    for _ in 0..k {
        let mut next = vec![1u128; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row.into_iter().map(|c| dd_from_u64(c as u64)).collect()
}

/// Levin u-transform of order `k` anchored at `n`, using `s[n..=n+k]`.
fn levin_u_single(
    s: &[TwoFloat],
    terms: &[TwoFloat],
    n: usize,
    k: usize,
    binom: &[TwoFloat],
) -> Option<TwoFloat> {
    let mut num = TwoFloat::from(0.0);
    let mut den = TwoFloat::from(0.0);
    let top = BETA + (n + k) as f64;
    for j in 0..=k {
        let idx = n + j;
        let bn = TwoFloat::from(BETA + idx as f64);
        let omega = bn * terms[idx];
        if omega.hi() == 0.0 || !omega.hi().is_finite() {
            return None;
        }
        let pow = if k <= 1 {
            TwoFloat::from(1.0)
        } else {
            (bn / top).powi(k as i32 - 1)
        };
        let mut w = dd_div(binom[j] * pow, omega);
        if j % 2 == 1 {
            w = -w;
        }
        num += w * s[idx];
        den += w;
    }
    if den.hi() == 0.0 || !den.hi().is_finite() {
        return None;
    }
    let v = dd_div(num, den);
    v.hi().is_finite().then_some(v)
}

/// Best Levin u estimate from `partial_sums`.
///
/// The transform of order `k` uses the last `k + 1` partial sums. Its error
/// is the larger of the change from order `k - 1` and the change when the
/// window ends [`WINDOW_SHIFT`] sums earlier; the order with the smallest
/// error is returned.
pub fn levin_u(partial_sums: &[TwoFloat], max_order: usize) -> Option<Extrapolation> {
    let len = partial_sums.len();
    if len < 4 + WINDOW_SHIFT {
        return None;
    }
    let terms: Vec<TwoFloat> = (0..len)
        .map(|j| {
            if j == 0 {
                partial_sums[0]
            } else {
                partial_sums[j] - partial_sums[j - 1]
            }
        })
        .collect();
    let kmax = max_order.min(len - 1 - WINDOW_SHIFT).min(62);
    let mut best: Option<Extrapolation> = None;
    let mut prev: Option<TwoFloat> = None;
    for k in 1..=kmax {
        let binom = binomials(k);
        let n = len - 1 - k;
        let v = levin_u_single(partial_sums, &terms, n, k, &binom);
        let shifted = levin_u_single(partial_sums, &terms, n - WINDOW_SHIFT, k, &binom);
        if let (Some(v), Some(p), Some(w)) = (v, prev, shifted) {
            let err = f64::from(v - p).abs().max(f64::from(v - w).abs());
            if best.is_none_or(|b| err < b.error) {
                best = Some(Extrapolation {
                    value: f64::from(v),
                    error: err,
                    order: k,
                    anchor: n,
                });
            }
        }
        prev = v;
    }
    best
}

/// [`levin_u`] on `f64` partial sums.
pub fn levin_u_f64(partial_sums: &[f64], max_order: usize) -> Option<Extrapolation> {
    let dd: Vec<TwoFloat> = partial_sums.iter().map(|&v| TwoFloat::from(v)).collect();
    levin_u(&dd, max_order)
}
