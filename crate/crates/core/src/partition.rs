//! Integer partitions with at most `r` parts, and the hook-length products of
//! their Young diagrams at Jack parameter 2.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Jack parameter of the zonal family.
pub const ALPHA: f64 = 2.0;

/// Nonincreasing tuple `m_1 >= ... >= m_r >= 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Malformed(
                "a partition needs at least one slot".into(),
            ));
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Malformed(format!("{parts:?} is not nonincreasing")));
        }
        Ok(Self(parts))
    }

    pub fn zero(r: usize) -> Self {
        Self(vec![0; r])
    }

    /// Number of slots `r` (zeros included).
    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&p| p as usize).sum()
    }

    /// Number of nonzero parts.
    pub fn length(&self) -> usize {
        self.0.iter().take_while(|&&p| p > 0).count()
    }

    /// Conjugate partition `m'_j = #{i : m_i >= j}` for `j = 1..=m_1`.
    pub fn conjugate(&self) -> Vec<u32> {
        let first = self.0.first().copied().unwrap_or(0);
        (1..=first)
            .map(|j| self.0.iter().filter(|&&p| p >= j).count() as u32)
            .collect()
    }

    /// `m + e_i` if still a partition.
    pub fn add_box(&self, i: usize) -> Option<Partition> {
        if i >= self.0.len() || (i > 0 && self.0[i - 1] == self.0[i]) {
            return None;
        }
        let mut p = self.0.clone();
        p[i] += 1;
        Some(Partition(p))
    }

    /// `m - e_i` if still a partition.
    pub fn remove_box(&self, i: usize) -> Option<Partition> {
        if i >= self.0.len()
            || self.0[i] == 0
            || (i + 1 < self.0.len() && self.0[i + 1] == self.0[i])
        {
            return None;
        }
        let mut p = self.0.clone();
        p[i] -= 1;
        Some(Partition(p))
    }

    /// Same parts padded (or truncated, if the dropped parts are zero) to `r` slots.
    pub fn with_len(&self, r: usize) -> Option<Partition> {
        if self.length() > r {
            return None;
        }
        let mut p = self.0.clone();
        p.resize(r, 0);
        Some(Partition(p))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// All partitions of `k` into at most `r` parts, reverse-lexicographic.
pub fn partitions_of_degree(k: usize, r: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(r);
    fill(k as u32, k as u32, r, &mut buf, &mut out);
    out
}

fn fill(remaining: u32, max_part: u32, slots: usize, buf: &mut Vec<u32>, out: &mut Vec<Partition>) {
    if slots == 0 {
        if remaining == 0 {
            out.push(Partition(buf.clone()));
        }
        return;
    }
    // the remaining slots can absorb at most slots * max_part
    if (remaining as u64) > slots as u64 * max_part as u64 {
        return;
    }
    let hi = remaining.min(max_part);
    for p in (0..=hi).rev() {
        buf.push(p);
        fill(remaining - p, p, slots - 1, buf, out);
        buf.pop();
    }
}

fn ln_gamma_pos(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `ln prod_{s} h^*(s)` with upper hook `h^*(s) = leg(s) + ALPHA (arm(s) + 1)`.
///
/// Boxes of row `i` lying in columns of equal height are grouped, so the cost
/// is `O(r^2)` gamma evaluations regardless of the degree.
pub fn log_upper_hooks(m: &Partition) -> f64 {
    hook_sum(m, HookKind::Upper)
}

/// `ln prod_{s} h_*(s)` with lower hook `h_*(s) = leg(s) + 1 + ALPHA arm(s)`.
pub fn log_lower_hooks(m: &Partition) -> f64 {
    hook_sum(m, HookKind::Lower)
}

#[derive(Clone, Copy)]
enum HookKind {
    Upper,
    Lower,
}

fn hook_sum(m: &Partition, kind: HookKind) -> f64 {
    let parts = m.parts();
    let r = m.length();
    let at = |l: usize| if l < r { parts[l] as f64 } else { 0.0 };
    let ln_alpha = ALPHA.ln();
    let mut total = 0.0;
    for i in 0..r {
        let ki = at(i);
        // columns j in (m_{l+1}, m_l] have height l+1 (0-based row l)
        for l in i..r {
            let hi = at(l);
            let lo = at(l + 1);
            if hi == lo {
                continue;
            }
            let width = hi - lo;
            let leg = (l - i) as f64;
            total += width * ln_alpha
                + match kind {
                    // prod_{j} (leg/ALPHA + ki - j + 1) over j = lo+1..=hi
                    HookKind::Upper => {
                        let x0 = leg / ALPHA;
                        ln_gamma_pos(x0 + ki - lo + 1.0) - ln_gamma_pos(x0 + ki - hi + 1.0)
                    }
                    // prod_{j} ((leg+1)/ALPHA + ki - j)
                    HookKind::Lower => {
                        let x1 = (leg + 1.0) / ALPHA;
                        ln_gamma_pos(x1 + ki - lo) - ln_gamma_pos(x1 + ki - hi)
                    }
                };
        }
    }
    total
}

/// Direct box-by-box hook products; reference for the grouped formulas.
pub fn log_hooks_direct(m: &Partition) -> (f64, f64) {
    let conj = m.conjugate();
    let mut upper = 0.0;
    let mut lower = 0.0;
    for (i, &mi) in m.parts().iter().enumerate() {
        for j in 0..mi as usize {
            let arm = (mi as usize - j - 1) as f64;
            let leg = (conj[j] as usize - i - 1) as f64;
            upper += (leg + ALPHA * (arm + 1.0)).ln();
            lower += (leg + 1.0 + ALPHA * arm).ln();
        }
    }
    (upper, lower)
}
