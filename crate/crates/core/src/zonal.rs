//! Zonal polynomials evaluated at eigenvalues.
//!
//! Values are built from the Jack `P` polynomials (parameter 2) through the
//! branching rule over the last variable,
//!
//! ```text
//! P_k(x_1..x_n) = sum_{mu} psi_{k/mu} x_n^{|k|-|mu|} P_mu(x_1..x_{n-1})
//! ```
//!
//! where `mu` runs over the partitions such that `k/mu` is a horizontal strip.
//! The zonal polynomial normalized by `sum_{|k|=d} C_k(x) = (tr x)^d` is
//! `C_k = d! 2^d / prod_s h^*(s) * P_k`.
//!
//! Single values go through a memoized top-down recursion. Series evaluation
//! uses [`BranchTables`], which precompute every `(k, mu, psi)` triple once per
//! rank and grow with the degree actually requested. The tables live in a
//! process-wide cache guarded by a mutex; they only depend on the rank, so
//! concurrent callers see identical values.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::partition::{log_lower_hooks, log_upper_hooks, partitions_of_degree, Partition, ALPHA};
use crate::special::{log_gpoch, VecParam};

/// Default cap on `|m|` for single zonal evaluations.
pub const DEFAULT_DEGREE_CAP: usize = 100;

/// Growth step (in degrees) of the cached branching tables.
const TABLE_CHUNK: usize = 16;

/// Branching coefficient `psi_{kappa/mu}` of the Jack `P` polynomials.
///
/// `kappa` and `mu` have the same number of slots and `kappa/mu` must be a
/// horizontal strip.
pub fn branching_coefficient(kappa: &[u32], mu: &[u32]) -> f64 {
    let n = kappa.len();
    debug_assert_eq!(mu.len(), n);
    let first = mu.first().copied().unwrap_or(0) as usize;
    if first == 0 {
        return 1.0;
    }
    // column classification for columns 1..=mu_1
    let mut strip_col = vec![false; first + 1];
    let mut mu_conj = vec![0u32; first + 1];
    for l in 0..n {
        for j in (mu[l] as usize + 1)..=(kappa[l] as usize).min(first) {
            strip_col[j] = true;
        }
        for c in mu_conj.iter_mut().take(mu[l] as usize + 1).skip(1) {
            *c += 1;
        }
    }
    let mut psi = 1.0;
    for i in 0..n {
        if kappa[i] == mu[i] {
            continue;
        }
        for j in 1..=mu[i] as usize {
            if strip_col[j] {
                continue;
            }
            let leg = (mu_conj[j] as usize - i - 1) as f64;
            let arm_mu = (mu[i] as usize - j) as f64;
            let arm_ka = (kappa[i] as usize - j) as f64;
            let b_mu = (ALPHA * arm_mu + leg + 1.0) / (ALPHA * arm_mu + leg + ALPHA);
            let b_ka = (ALPHA * arm_ka + leg + 1.0) / (ALPHA * arm_ka + leg + ALPHA);
            psi *= b_mu / b_ka;
        }
    }
    psi
}

/// Calls `f(mu)` for every `mu` with `n-1` slots such that `kappa/mu` is a
/// horizontal strip (`kappa` has `n` slots).
fn for_each_strip_parent(kappa: &[u32], mut f: impl FnMut(&[u32])) {
    let n = kappa.len();
    if n == 1 {
        f(&[]);
        return;
    }
    let mut mu: Vec<u32> = (0..n - 1).map(|i| kappa[i + 1]).collect();
    loop {
        f(&mu);
        // odometer over mu_i in [kappa_{i+1}, kappa_i]
        let mut pos = n - 1;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if mu[pos] < kappa[pos] {
                mu[pos] += 1;
                for (q, slot) in mu.iter_mut().enumerate().skip(pos + 1) {
                    *slot = kappa[q + 1];
                }
                break;
            }
        }
    }
}

fn padded(mu: &[u32], n: usize) -> Vec<u32> {
    let mut out = mu.to_vec();
    out.resize(n, 0);
    out
}

/// Jack `P_kappa(x_1..x_n)` through memoized recursion.
struct JackRecursion<'a> {
    x: &'a [f64],
    memo: HashMap<(Vec<u32>, usize), f64>,
}

impl JackRecursion<'_> {
    fn eval(&mut self, kappa: &[u32], n: usize) -> f64 {
        let len = kappa.iter().take_while(|&&p| p > 0).count();
        if len > n {
            return 0.0;
        }
        if n == 0 {
            return 1.0;
        }
        let kappa = padded(&kappa[..len], n);
        if n == 1 {
            return self.x[0].powi(kappa[0] as i32);
        }
        if let Some(v) = self.memo.get(&(kappa.clone(), n)) {
            return *v;
        }
        let total_k: u32 = kappa.iter().sum();
        let xn = self.x[n - 1];
        let mut parents = Vec::new();
        for_each_strip_parent(&kappa, |mu| parents.push(mu.to_vec()));
        let mut acc = 0.0;
        for mu in parents {
            let strip = total_k - mu.iter().sum::<u32>();
            let coeff = branching_coefficient(&kappa, &padded(&mu, n));
            let sub = self.eval(&mu, n - 1);
            acc += coeff * xn.powi(strip as i32) * sub;
        }
        self.memo.insert((kappa, n), acc);
        acc
    }
}

fn check_args(m: &Partition, eigs: &[f64], cap: usize) -> Result<()> {
    if eigs.len() != m.len() {
        return Err(Error::RankMismatch {
            expected: m.len(),
            got: eigs.len(),
        });
    }
    if eigs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed("non-finite eigenvalue".into()));
    }
    if m.degree() > cap {
        return Err(Error::DegreeCapExceeded {
            degree: m.degree(),
            cap,
        });
    }
    Ok(())
}

/// Jack `P_m` (parameter 2) at the given eigenvalues.
pub fn jack_p(m: &Partition, eigs: &[f64]) -> Result<f64> {
    check_args(m, eigs, usize::MAX)?;
    let mut rec = JackRecursion {
        x: eigs,
        memo: HashMap::new(),
    };
    Ok(rec.eval(m.parts(), eigs.len()))
}

/// `ln(2^k / prod h^*)`: the factor turning `P_m` into `C_m / k!`.
pub fn log_p_to_zonal_over_factorial(m: &Partition) -> f64 {
    m.degree() as f64 * ALPHA.ln() - log_upper_hooks(m)
}

/// Zonal polynomial `C_m` at the given eigenvalues.
pub fn zonal(m: &Partition, eigs: &[f64]) -> Result<f64> {
    zonal_with_cap(m, eigs, DEFAULT_DEGREE_CAP)
}

pub fn zonal_with_cap(m: &Partition, eigs: &[f64], cap: usize) -> Result<f64> {
    check_args(m, eigs, cap)?;
    let k = m.degree();
    let p = jack_p(m, eigs)?;
    let log_scale = libm::lgamma_r(k as f64 + 1.0).0 + log_p_to_zonal_over_factorial(m);
    Ok(p * log_scale.exp())
}

/// `ln(C_m(e) / |m|!) = ln(4^k (r/2)_m / j_m)`, closed form at the identity.
pub fn log_zonal_at_identity_over_factorial(m: &Partition) -> f64 {
    let r = m.len();
    let k = m.degree() as f64;
    let half_rank = VecParam::scalar(0.5 * r as f64, r);
    let poch = log_gpoch(&half_rank, m).expect("rank matches by construction");
    k * (2.0 * ALPHA).ln() + poch.log_abs - log_upper_hooks(m) - log_lower_hooks(m)
}

/// `C_m(e)` for the `r x r` identity, `r = m.len()`.
pub fn zonal_at_identity(m: &Partition) -> f64 {
    let k = m.degree() as f64;
    (libm::lgamma_r(k + 1.0).0 + log_zonal_at_identity_over_factorial(m)).exp()
}

/// Spherical polynomial `phi_m = C_m(x) / C_m(e)`.
pub fn spherical(m: &Partition, eigs: &[f64]) -> Result<f64> {
    check_args(m, eigs, DEFAULT_DEGREE_CAP)?;
    let denom = log_zonal_at_identity_over_factorial(m);
    if !denom.is_finite() {
        return Err(Error::DegenerateNormalizer(m.to_string()));
    }
    let p = jack_p(m, eigs)?;
    Ok(p * (log_p_to_zonal_over_factorial(m) - denom).exp())
}

/// Dimension bridge `d_m = ((r+1)/2)_m C_m(e) / |m|!`.
pub fn dimension_bridge(m: &Partition) -> f64 {
    let r = m.len();
    let nr = VecParam::scalar(0.5 * (r as f64 + 1.0), r);
    let poch = log_gpoch(&nr, m).expect("rank matches by construction");
    (poch.log_abs + log_zonal_at_identity_over_factorial(m)).exp()
}

/// Partitions with at most `n` parts, grouped by degree, stored flat.
#[derive(Debug, Clone)]
pub struct Catalog {
    n: usize,
    degree: usize,
    parts: Vec<u32>,
    offsets: Vec<usize>,
    log_upper: Vec<f64>,
    log_lower: Vec<f64>,
    /// `(index of m - e_l, l)` with `l` the last nonzero row of `m`.
    parent: Vec<(u32, u32)>,
}

impl Catalog {
    fn empty(n: usize) -> Self {
        Self {
            n,
            degree: 0,
            parts: Vec::new(),
            offsets: vec![0],
            log_upper: Vec::new(),
            log_lower: Vec::new(),
            parent: Vec::new(),
        }
    }

    fn extend_to(&mut self, degree: usize) {
        let start = if self.parts.is_empty() {
            0
        } else {
            self.degree + 1
        };
        for k in start..=degree {
            let prev: HashMap<&[u32], u32> = if k == 0 {
                HashMap::new()
            } else {
                self.layer(k - 1)
                    .map(|i| (self.parts(i), i as u32))
                    .collect()
            };
            let mut parents = Vec::new();
            let mut fresh = Vec::new();
            for p in partitions_of_degree(k, self.n) {
                if k == 0 {
                    parents.push((0, 0));
                } else {
                    let l = p.length() - 1;
                    let mut q = p.parts().to_vec();
                    q[l] -= 1;
                    parents.push((prev[q.as_slice()], l as u32));
                }
                fresh.push(p);
            }
            drop(prev);
            for p in fresh {
                self.log_upper.push(log_upper_hooks(&p));
                self.log_lower.push(log_lower_hooks(&p));
                self.parts.extend_from_slice(p.parts());
            }
            self.parent.extend(parents);
            self.offsets.push(self.parts.len() / self.n.max(1));
        }
        self.degree = degree;
    }

    /// Index of `m - e_l` and the row `l` (last nonzero row of `m`); the zero
    /// partition maps to itself.
    pub fn parent(&self, idx: usize) -> (usize, usize) {
        let (p, l) = self.parent[idx];
        (p as usize, l as usize)
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.log_upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_upper.is_empty()
    }

    /// Index range of the partitions of degree `k`.
    pub fn layer(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn parts(&self, idx: usize) -> &[u32] {
        &self.parts[idx * self.n..(idx + 1) * self.n]
    }

    pub fn log_upper_hooks(&self, idx: usize) -> f64 {
        self.log_upper[idx]
    }

    pub fn log_lower_hooks(&self, idx: usize) -> f64 {
        self.log_lower[idx]
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    parent: u32,
    strip: u32,
    psi: f64,
}

#[derive(Debug, Clone)]
struct BranchLevel {
    /// `branch_offsets[i]..branch_offsets[i+1]` indexes `entries` for partition `i`.
    branch_offsets: Vec<usize>,
    entries: Vec<Branch>,
}

/// Precomputed branching data for ranks `1..=r` up to a degree.
#[derive(Debug, Clone)]
pub struct BranchTables {
    rank: usize,
    degree: usize,
    catalogs: Vec<Catalog>,
    /// `levels[n-2]` maps rank-`n` partitions onto rank-`(n-1)` parents.
    levels: Vec<BranchLevel>,
    lookup: Vec<HashMap<Vec<u32>, u32>>,
}

impl BranchTables {
    fn new(rank: usize) -> Self {
        Self {
            rank,
            degree: 0,
            catalogs: (1..=rank).map(Catalog::empty).collect(),
            levels: (2..=rank)
                .map(|_| BranchLevel {
                    branch_offsets: vec![0],
                    entries: Vec::new(),
                })
                .collect(),
            lookup: (1..rank).map(|_| HashMap::new()).collect(),
        }
    }

    fn extend_to(&mut self, degree: usize) {
        let fresh = self.catalogs[0].is_empty();
        if !fresh && degree <= self.degree {
            return;
        }
        let old_len: Vec<usize> = self.catalogs.iter().map(Catalog::len).collect();
        for cat in &mut self.catalogs {
            cat.extend_to(degree);
        }
        for n in 1..self.rank {
            let cat = &self.catalogs[n - 1];
            for idx in old_len[n - 1]..cat.len() {
                self.lookup[n - 1].insert(cat.parts(idx).to_vec(), idx as u32);
            }
        }
        for n in 2..=self.rank {
            let cat = &self.catalogs[n - 1];
            let lookup = &self.lookup[n - 2];
            let level = &mut self.levels[n - 2];
            for idx in old_len[n - 1]..cat.len() {
                let kappa = cat.parts(idx);
                let total: u32 = kappa.iter().sum();
                for_each_strip_parent(kappa, |mu| {
                    let parent = lookup[mu];
                    let strip = total - mu.iter().sum::<u32>();
                    let psi = branching_coefficient(kappa, &padded(mu, n));
                    level.entries.push(Branch { parent, strip, psi });
                });
                level.branch_offsets.push(level.entries.len());
            }
        }
        self.degree = degree;
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Catalog of the top rank.
    pub fn catalog(&self) -> &Catalog {
        &self.catalogs[self.rank - 1]
    }

    /// Shared tables for `rank` covering at least `degree`.
    pub fn shared(rank: usize, degree: usize) -> Arc<BranchTables> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<BranchTables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        if let Some(t) = guard.get(&rank) {
            if t.degree >= degree {
                return Arc::clone(t);
            }
        }
        let target = degree.div_ceil(TABLE_CHUNK).max(1) * TABLE_CHUNK;
        let mut tables = match guard.get(&rank) {
            Some(t) => (**t).clone(),
            None => BranchTables::new(rank),
        };
        tables.extend_to(target);
        let shared = Arc::new(tables);
        guard.insert(rank, Arc::clone(&shared));
        shared
    }
}

/// Shared partition catalog for `rank` covering at least `degree`.
pub fn shared_catalog(rank: usize, degree: usize) -> Arc<Catalog> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Catalog>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner());
    if let Some(c) = guard.get(&rank) {
        if c.degree >= degree && !c.is_empty() {
            return Arc::clone(c);
        }
    }
    let target = degree.div_ceil(TABLE_CHUNK).max(1) * TABLE_CHUNK;
    let mut cat = match guard.get(&rank) {
        Some(c) => (**c).clone(),
        None => Catalog::empty(rank),
    };
    cat.extend_to(target);
    let shared = Arc::new(cat);
    guard.insert(rank, Arc::clone(&shared));
    shared
}

/// Layer-by-layer evaluation of every `P_kappa` at a fixed point.
///
/// The point is rescaled by its largest absolute eigenvalue `s`; layer `k`
/// values are returned for `x / s` and [`JackLayers::log_scale`] gives `ln s`.
pub struct JackLayers {
    tables: Arc<BranchTables>,
    x: Vec<f64>,
    log_scale: f64,
    /// `values[n-1][idx]` is `P` at the first `n` scaled eigenvalues.
    values: Vec<Vec<f64>>,
    powers: Vec<Vec<f64>>,
    next_degree: usize,
    cap: usize,
}

impl JackLayers {
    pub fn new(eigs: &[f64], cap: usize) -> Self {
        let rank = eigs.len();
        let s = eigs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let (x, log_scale) = if s > 0.0 {
            (eigs.iter().map(|v| v / s).collect(), s.ln())
        } else {
            (eigs.to_vec(), 0.0)
        };
        let tables = BranchTables::shared(rank, cap.min(TABLE_CHUNK));
        Self {
            tables,
            powers: x.iter().map(|_| vec![1.0]).collect(),
            x,
            log_scale,
            values: (0..rank).map(|_| Vec::new()).collect(),
            next_degree: 0,
            cap,
        }
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn tables(&self) -> &BranchTables {
        &self.tables
    }

    /// Computes the next layer (layers come in order) and returns its degree.
    pub fn next_layer(&mut self) -> Result<usize> {
        let k = self.next_degree;
        if k > self.cap {
            return Err(Error::DegreeCapExceeded {
                degree: k,
                cap: self.cap,
            });
        }
        if k > self.tables.degree() {
            self.tables =
                BranchTables::shared(self.tables.rank(), (k + TABLE_CHUNK).min(self.cap.max(k)));
        }
        for (pw, &xn) in self.powers.iter_mut().zip(&self.x) {
            while pw.len() <= k {
                let last = *pw.last().unwrap();
                pw.push(last * xn);
            }
        }
        let rank = self.x.len();
        for n in 1..=rank {
            let cat = &self.tables.catalogs[n - 1];
            let range = cat.layer(k);
            if n == 1 {
                for _ in range {
                    self.values[0].push(self.powers[0][k]);
                }
                continue;
            }
            let level = &self.tables.levels[n - 2];
            let (lower, upper) = self.values.split_at_mut(n - 1);
            let parent_vals = &lower[n - 2];
            let own = &mut upper[0];
            let pw = &self.powers[n - 1];
            for idx in range {
                let mut acc = 0.0;
                for b in &level.entries[level.branch_offsets[idx]..level.branch_offsets[idx + 1]] {
                    acc += b.psi * pw[b.strip as usize] * parent_vals[b.parent as usize];
                }
                own.push(acc);
            }
        }
        self.next_degree += 1;
        Ok(k)
    }

    /// Scaled values of the top-rank partitions of degree `k` (computed).
    pub fn values(&self, k: usize) -> &[f64] {
        let range = self.tables.catalog().layer(k);
        &self.values[self.x.len() - 1][range]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(parts: &[u32]) -> Partition {
        Partition::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn degree_one_is_trace() {
        let eigs = [0.3, -1.2, 2.5];
        let z = zonal(&p(&[1, 0, 0]), &eigs).unwrap();
        assert!((z - eigs.iter().sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn degree_two_at_identity() {
        let s = zonal(&p(&[2, 0]), &[1.0, 1.0]).unwrap() + zonal(&p(&[1, 1]), &[1.0, 1.0]).unwrap();
        assert!((s - 4.0).abs() < 1e-13);
    }

    #[test]
    fn explicit_two_variable_jack() {
        // P_(2) = x1^2 + x2^2 + (2/3) x1 x2 at parameter 2
        let (a, b) = (0.7, -0.4);
        let got = jack_p(&p(&[2, 0]), &[a, b]).unwrap();
        assert!((got - (a * a + b * b + 2.0 / 3.0 * a * b)).abs() < 1e-15);
        let got = jack_p(&p(&[1, 1]), &[a, b]).unwrap();
        assert!((got - a * b).abs() < 1e-15);
    }

    #[test]
    fn normalization_sums_to_trace_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for r in 1..=4 {
            let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..1.5)).collect();
            let tr: f64 = eigs.iter().sum();
            for k in 0..=10 {
                let s: f64 = partitions_of_degree(k, r)
                    .iter()
                    .map(|m| zonal(m, &eigs).unwrap())
                    .sum();
                let want = tr.powi(k as i32);
                assert!((s / want - 1.0).abs() < 1e-10, "r={r} k={k}: {s} vs {want}");
            }
        }
    }

    #[test]
    fn identity_closed_form_matches_recursion() {
        for r in 1..=4 {
            let ones = vec![1.0; r];
            for k in 0..=8 {
                for m in partitions_of_degree(k, r) {
                    let rec = zonal(&m, &ones).unwrap();
                    let closed = zonal_at_identity(&m);
                    assert!((rec / closed - 1.0).abs() < 1e-11, "{m}: {rec} vs {closed}");
                }
            }
        }
    }

    #[test]
    fn symmetry_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for r in 2..=4 {
            let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut rev = eigs.clone();
            rev.reverse();
            let c = 1.7_f64;
            let scaled: Vec<f64> = eigs.iter().map(|v| c * v).collect();
            for m in partitions_of_degree(5, r) {
                let a = zonal(&m, &eigs).unwrap();
                let b = zonal(&m, &rev).unwrap();
                assert!((a - b).abs() < 1e-12 * a.abs().max(1e-3));
                let h = zonal(&m, &scaled).unwrap();
                assert!((h - c.powi(5) * a).abs() < 1e-11 * h.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn spherical_examples() {
        for r in 1..=4 {
            for m in partitions_of_degree(4, r) {
                assert!((spherical(&m, &vec![1.0; r]).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let (x1, x2) = (0.3, 1.1);
        let got = spherical(&p(&[1, 0]), &[x1, x2]).unwrap();
        assert!((got - (x1 + x2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn degree_cap_enforced() {
        let m = p(&[101]);
        assert!(matches!(
            zonal(&m, &[0.5]),
            Err(Error::DegreeCapExceeded {
                degree: 101,
                cap: 100
            })
        ));
    }

    #[test]
    fn dimension_bridge_small_cases() {
        // r = 1: every layer is one-dimensional
        for k in 0..6 {
            assert!((dimension_bridge(&p(&[k])) - 1.0).abs() < 1e-12);
        }
        assert!((dimension_bridge(&Partition::zero(3)) - 1.0).abs() < 1e-15);
        // degree-one harmonics of symmetric matrices: the linear forms, dim n = r(r+1)/2
        for r in 1..=5 {
            let mut parts = vec![0; r];
            parts[0] = 1;
            let d = dimension_bridge(&p(&parts));
            assert!((d - (r * (r + 1) / 2) as f64).abs() < 1e-10, "r={r}: {d}");
        }
    }

    #[test]
    fn dimension_growth_is_polynomial() {
        // d_m against prod_{i<j} (1 + m_i - m_j): the ratio stays within a
        // bounded band
        for r in 2..=3 {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for k in 0..=40 {
                for m in partitions_of_degree(k, r) {
                    let parts = m.parts();
                    let mut asym = 1.0;
                    for i in 0..r {
                        for j in (i + 1)..r {
                            asym *= 1.0 + (parts[i] - parts[j]) as f64;
                        }
                    }
                    let ratio = dimension_bridge(&m) / asym;
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
            assert!(lo > 0.0 && hi / lo < 1e3, "r={r}: ratio band [{lo}, {hi}]");
        }
    }

    #[test]
    fn layered_tables_match_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 1..=4 {
            let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(-0.9..0.9)).collect();
            let mut layers = JackLayers::new(&eigs, 12);
            for k in 0..=12 {
                let deg = layers.next_layer().unwrap();
                assert_eq!(deg, k);
                let vals = layers.values(k).to_vec();
                let scale = (layers.log_scale() * k as f64).exp();
                let cat = layers.tables().catalog();
                for (off, idx) in cat.layer(k).enumerate() {
                    let m = Partition::new(cat.parts(idx).to_vec()).unwrap();
                    let direct = jack_p(&m, &eigs).unwrap();
                    let tab = vals[off] * scale;
                    assert!(
                        (tab - direct).abs() <= 1e-12 * direct.abs().max(1e-6),
                        "{m}: {tab} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn concurrent_table_access_is_consistent() {
        let eigs = [0.4, 0.25, -0.1];
        let serial: Vec<f64> = {
            let mut l = JackLayers::new(&eigs, 30);
            (0..=30)
                .flat_map(|_| {
                    let k = l.next_layer().unwrap();
                    l.values(k).to_vec()
                })
                .collect()
        };
        let handles: Vec<_> = (0..4)
            .map(|_| {
                std::thread::spawn(move || {
                    let mut l = JackLayers::new(&eigs, 30);
                    (0..=30)
                        .flat_map(|_| {
                            let k = l.next_layer().unwrap();
                            l.values(k).to_vec()
                        })
                        .collect::<Vec<f64>>()
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), serial);
        }
    }
}
