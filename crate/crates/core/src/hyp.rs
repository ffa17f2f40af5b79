//! Hypergeometric functions `pFq` of a symmetric matrix argument.
//!
//! The series is summed degree layer by degree layer,
//!
//! ```text
//! pFq(a; b; x) = sum_k sum_{|m|=k} prod (a_i)_m / prod (b_j)_m * C_m(x) / k!
//! ```
//!
//! and depends on `x` only through its eigenvalues. At the identity the
//! zonal factor has a closed form and the Levin u-transform is applied to the
//! layer partial sums when the degree cap is reached before the layers
//! stabilize.

use serde::Serialize;

use std::sync::Arc;

use twofloat::TwoFloat;

use crate::accel::{dd_div, levin_u, levin_u_f64, Extrapolation};
use crate::cone::{eigenvalues, SymMatrix};
use crate::error::{Error, Result};
use crate::partition::{Partition, ALPHA};
use crate::special::{log_gamma_omega, SignedLog, VecParam};
use crate::zonal::{shared_catalog, Catalog, JackLayers};

/// Default relative error estimate under which an accelerated value is
/// accepted as reliable. The Levin estimate is optimistic by up to about a
/// hundred on power-law tails, so this corresponds to roughly `1e-6` actual
/// accuracy at worst.
pub const ACCEL_ACCEPT: f64 = 1e-8;

/// Highest Levin order tried.
const ACCEL_MAX_ORDER: usize = 30;

/// Spectral radius above which `2F1` may be routed through the Euler relation.
const EULER_ROUTING_RADIUS: f64 = 0.9;

/// Parameters `(a_1..a_p; b_1..b_q)` of a `pFq`, all of the same rank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypParams {
    upper: Vec<VecParam>,
    lower: Vec<VecParam>,
    rank: usize,
}

impl HypParams {
    pub fn new(upper: Vec<VecParam>, lower: Vec<VecParam>, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Malformed("rank must be at least 1".into()));
        }
        for v in upper.iter().chain(&lower) {
            if v.rank() != rank {
                return Err(Error::RankMismatch {
                    expected: rank,
                    got: v.rank(),
                });
            }
            if v.values().iter().any(|x| !x.is_finite()) {
                return Err(Error::Malformed("non-finite parameter".into()));
            }
        }
        if upper.len() > lower.len() + 1 {
            return Err(Error::TooManyUpper {
                upper: upper.len(),
                lower: lower.len(),
            });
        }
        for v in &lower {
            for i in 0..rank {
                let s = v.shifted(i);
                if s <= 0.0 && s == s.round() {
                    return Err(Error::PoleError {
                        index: i + 1,
                        argument: s,
                    });
                }
            }
        }
        Ok(Self { upper, lower, rank })
    }

    /// Scalar parameters, each broadcast to the constant vector.
    pub fn scalar(upper: &[f64], lower: &[f64], rank: usize) -> Result<Self> {
        Self::new(
            upper.iter().map(|&a| VecParam::scalar(a, rank)).collect(),
            lower.iter().map(|&b| VecParam::scalar(b, rank)).collect(),
            rank,
        )
    }

    pub fn p(&self) -> usize {
        self.upper.len()
    }

    pub fn q(&self) -> usize {
        self.lower.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn upper(&self) -> &[VecParam] {
        &self.upper
    }

    pub fn lower(&self) -> &[VecParam] {
        &self.lower
    }

    /// Removes upper/lower pairs that are equal entrywise.
    pub fn cancelled(&self) -> HypParams {
        let mut upper = self.upper.clone();
        let mut lower = Vec::new();
        for b in &self.lower {
            if let Some(pos) = upper.iter().position(|a| a == b) {
                upper.remove(pos);
            } else {
                lower.push(b.clone());
            }
        }
        HypParams {
            upper,
            lower,
            rank: self.rank,
        }
    }

    fn scalar_values(list: &[VecParam]) -> Option<Vec<f64>> {
        list.iter()
            .map(|v| v.is_constant().then(|| v.values()[0]))
            .collect()
    }
}

/// Truncation policy of the layer summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesOptions {
    pub degree_cap: usize,
    pub rel_tol: f64,
    pub stable_layers: usize,
    /// Largest accepted error estimate of an extrapolated value.
    pub accel_tol: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            degree_cap: 120,
            rel_tol: 1e-12,
            stable_layers: 3,
            accel_tol: ACCEL_ACCEPT,
        }
    }
}

impl SeriesOptions {
    pub fn validate(&self) -> Result<()> {
        if self.degree_cap < 1 {
            return Err(Error::ConfigError("degree_cap must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::ConfigError("rel_tol must be positive".into()));
        }
        if self.stable_layers < 1 {
            return Err(Error::ConfigError(
                "stable_layers must be at least 1".into(),
            ));
        }
        if !(self.accel_tol > 0.0) {
            return Err(Error::ConfigError("accel_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn with_degree_cap(mut self, cap: usize) -> Self {
        self.degree_cap = cap;
        self
    }

    pub fn with_accel_tol(mut self, tol: f64) -> Self {
        self.accel_tol = tol;
        self
    }
}

/// How a value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Layers stabilized below the tolerance.
    Series,
    /// Degree cap reached; value extrapolated with the Levin u-transform.
    Accelerated,
    /// `2F1` evaluated through the Euler relation.
    EulerRouted,
    /// Closed form (Gauss formula) after cancelling parameters.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub method: Method,
    /// Plain partial sum through `degree_used`.
    pub partial_sum: f64,
    /// Relative error estimate of the extrapolation, when attempted.
    pub extrapolation_error: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    pub degree_used: usize,
    pub last_layer_rel: f64,
    /// The last `stable_layers` layers were each below `rel_tol`.
    pub converged_flag: bool,
    /// Relative error estimate of `value`.
    pub error_estimate: f64,
    /// Converged, or extrapolated with an error estimate within the
    /// requested `accel_tol`.
    pub reliable: bool,
    pub diagnostics: SeriesDiagnostics,
}

impl SeriesResult {
    fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            degree_used: 0,
            last_layer_rel: 0.0,
            converged_flag: true,
            error_estimate: 0.0,
            reliable: true,
            diagnostics: SeriesDiagnostics {
                method,
                partial_sum: value,
                extrapolation_error: None,
                warnings: Vec::new(),
            },
        }
    }

    pub fn is_reliable(&self) -> bool {
        self.reliable
    }

    /// Turns an unreliable result into [`Error::NotConverged`].
    pub fn require_reliable(self) -> Result<Self> {
        if self.is_reliable() {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                degree_used: self.degree_used,
                last_layer_rel: self.last_layer_rel,
            })
        }
    }
}

/// `(c)_n` for `n = 0, 1, ...` as signed logs, grown on demand.
#[derive(Debug, Clone)]
struct PochTable {
    base: f64,
    values: Vec<SignedLog>,
}

impl PochTable {
    fn new(base: f64) -> Self {
        Self {
            base,
            values: vec![SignedLog::ONE],
        }
    }

    fn get(&mut self, n: usize) -> SignedLog {
        while self.values.len() <= n {
            let j = self.values.len() - 1;
            let next = self.values[j].mul(SignedLog::from_f64(self.base + j as f64));
            self.values.push(next);
        }
        self.values[n]
    }
}

/// Pairwise (tree) summation in the given order.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// A `pFq` prepared for repeated evaluation: Pochhammer tables and
/// per-partition coefficients are cached across calls.
#[derive(Debug, Clone)]
pub struct HypSeries {
    params: HypParams,
    opts: SeriesOptions,
    upper: Vec<Vec<PochTable>>,
    lower: Vec<Vec<PochTable>>,
    /// `prod (a)_m / prod (b)_m` by catalog index.
    coef: Vec<SignedLog>,
}

impl HypSeries {
    pub fn new(params: HypParams, opts: SeriesOptions) -> Result<Self> {
        opts.validate()?;
        let r = params.rank;
        let tables = |list: &[VecParam]| -> Vec<Vec<PochTable>> {
            list.iter()
                .map(|v| (0..r).map(|i| PochTable::new(v.shifted(i))).collect())
                .collect()
        };
        Ok(Self {
            upper: tables(&params.upper),
            lower: tables(&params.lower),
            params,
            opts,
            coef: Vec::new(),
        })
    }

    pub fn params(&self) -> &HypParams {
        &self.params
    }

    pub fn options(&self) -> &SeriesOptions {
        &self.opts
    }

    fn ensure_coef(&mut self, cat: &Catalog, upto: usize) {
        while self.coef.len() < upto {
            let idx = self.coef.len();
            let parts = cat.parts(idx);
            let mut acc = SignedLog::ONE;
            for tab in &mut self.upper {
                for (i, &mi) in parts.iter().enumerate() {
                    acc = acc.mul(tab[i].get(mi as usize));
                }
            }
            for tab in &mut self.lower {
                for (i, &mi) in parts.iter().enumerate() {
                    acc = acc.div(tab[i].get(mi as usize));
                }
            }
            self.coef.push(acc);
        }
    }

    /// Series at a point given by its eigenvalues; no domain check or routing.
    pub fn eval_eigs(&mut self, eigs: &[f64]) -> Result<SeriesResult> {
        if eigs.len() != self.params.rank {
            return Err(Error::RankMismatch {
                expected: self.params.rank,
                got: eigs.len(),
            });
        }
        let mut layers = JackLayers::new(eigs, self.opts.degree_cap);
        let log_scale = layers.log_scale();
        let ln_alpha = ALPHA.ln();
        let mut buf = Vec::new();
        let mut layer_fn = |this: &mut Self, k: usize| -> Result<f64> {
            layers.next_layer()?;
            let vals = layers.values(k);
            let cat = layers.tables().catalog();
            let range = cat.layer(k);
            this.ensure_coef(cat, range.end);
            buf.clear();
            for (off, idx) in range.enumerate() {
                let c = this.coef[idx];
                let v = vals[off];
                if c.sign == 0 || v == 0.0 {
                    buf.push(0.0);
                    continue;
                }
                let log_mag =
                    c.log_abs + k as f64 * (ln_alpha + log_scale) - cat.log_upper_hooks(idx);
                buf.push(f64::from(c.sign) * v * log_mag.exp());
            }
            Ok(pairwise_sum(&buf))
        };
        self.run(&mut layer_fn)
    }

    /// Series at the identity. Terms are built box by box from exact ratio
    /// recurrences in double-double, so the Levin transform applied at the
    /// degree cap sees smooth partial sums.
    pub fn eval_identity(&mut self) -> Result<SeriesResult> {
        let mut terms = IdentityTerms::new(&self.params, self.opts.degree_cap);
        let mut partial = TwoFloat::from(0.0);
        let mut sums = Vec::new();
        let mut layer_fn = |_: &mut Self, k: usize| -> Result<f64> {
            let layer = terms.layer(k);
            partial += layer;
            sums.push(partial);
            Ok(f64::from(layer))
        };
        let mut res = self.run(&mut layer_fn)?;
        if !res.converged_flag {
            // redo the extrapolation on the double-double partial sums
            res.diagnostics.method = Method::Series;
            res.value = f64::from(partial);
            res.error_estimate = res.last_layer_rel;
            res.diagnostics.warnings.clear();
            self.accelerate(&mut res, levin_u(&sums, ACCEL_MAX_ORDER));
        }
        Ok(res)
    }

    /// Layer sums at the identity for degrees `0..=degree`.
    pub fn identity_layers(&self, degree: usize) -> Vec<f64> {
        let mut terms = IdentityTerms::new(&self.params, degree);
        (0..=degree).map(|k| f64::from(terms.layer(k))).collect()
    }

    fn run(
        &mut self,
        layer_fn: &mut dyn FnMut(&mut Self, usize) -> Result<f64>,
    ) -> Result<SeriesResult> {
        let opts = self.opts;
        let mut partial = 0.0;
        let mut sums = Vec::new();
        let mut stable = 0;
        let mut last_rel = f64::INFINITY;
        let mut degree_used = 0;
        for k in 0..=opts.degree_cap {
            let layer = layer_fn(self, k)?;
            partial += layer;
            if !partial.is_finite() {
                return Err(Error::NotConverged {
                    degree_used: k,
                    last_layer_rel: f64::INFINITY,
                });
            }
            sums.push(partial);
            degree_used = k;
            last_rel = if layer == 0.0 {
                0.0
            } else if partial == 0.0 {
                f64::INFINITY
            } else {
                (layer / partial).abs()
            };
            if k > 0 && last_rel < opts.rel_tol {
                stable += 1;
            } else {
                stable = 0;
            }
            if stable >= opts.stable_layers {
                return Ok(SeriesResult {
                    value: partial,
                    degree_used,
                    last_layer_rel: last_rel,
                    converged_flag: true,
                    error_estimate: last_rel,
                    reliable: true,
                    diagnostics: SeriesDiagnostics {
                        method: Method::Series,
                        partial_sum: partial,
                        extrapolation_error: None,
                        warnings: Vec::new(),
                    },
                });
            }
        }
        let mut res = SeriesResult {
            value: partial,
            degree_used,
            last_layer_rel: last_rel,
            converged_flag: false,
            error_estimate: last_rel,
            reliable: false,
            diagnostics: SeriesDiagnostics {
                method: Method::Series,
                partial_sum: partial,
                extrapolation_error: None,
                warnings: Vec::new(),
            },
        };
        self.accelerate(&mut res, levin_u_f64(&sums, ACCEL_MAX_ORDER));
        Ok(res)
    }

    fn accelerate(&self, res: &mut SeriesResult, ex: Option<Extrapolation>) {
        if let Some(ex) = ex {
            let rel = ex.error / ex.value.abs().max(f64::MIN_POSITIVE);
            res.diagnostics.extrapolation_error = Some(rel);
            if rel.is_finite() && rel < res.error_estimate {
                res.value = ex.value;
                res.error_estimate = rel;
                res.diagnostics.method = Method::Accelerated;
            }
        }
        res.reliable = res.diagnostics.method == Method::Accelerated
            && res.error_estimate <= self.opts.accel_tol;
        if !res.is_reliable() {
            res.diagnostics.warnings.push(format!(
                "degree cap {} reached with last layer ratio {:.3e}",
                self.opts.degree_cap, res.last_layer_rel
            ));
        }
    }
}

/// Identity-series terms by catalog index, in double-double.
struct IdentityTerms {
    rank: usize,
    upper: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    cat: Arc<Catalog>,
    terms: Vec<TwoFloat>,
}

impl IdentityTerms {
    fn new(params: &HypParams, degree: usize) -> Self {
        let vals = |list: &[VecParam]| list.iter().map(|v| v.values().to_vec()).collect();
        Self {
            rank: params.rank,
            upper: vals(&params.upper),
            lower: vals(&params.lower),
            cat: shared_catalog(params.rank, degree),
            terms: Vec::new(),
        }
    }

    /// Ratio `term(m + e_i) / term(m)`.
    fn ratio(&self, m: &[u32], i: usize) -> TwoFloat {
        let shift = m[i] as f64 - 0.5 * i as f64;
        let mut ratio = TwoFloat::from(2.0 * ALPHA) * (0.5 * self.rank as f64 + shift) / ALPHA;
        for a in &self.upper {
            ratio *= TwoFloat::from(a[i]) + shift;
        }
        for b in &self.lower {
            ratio = dd_div(ratio, TwoFloat::from(b[i]) + shift);
        }
        // hook products change by exact small-integer factors; divide as we
        // go so nothing overflows at high degree
        let mut apply = |leg: f64, arm: f64, leg_step: f64, arm_step: f64| {
            let old = (leg + ALPHA * (arm + 1.0)) * (leg + 1.0 + ALPHA * arm);
            let (l2, a2) = (leg + leg_step, arm + arm_step);
            let new = (l2 + ALPHA * (a2 + 1.0)) * (l2 + 1.0 + ALPHA * a2);
            ratio = ratio * old / new;
        };
        // boxes of row i gain one unit of arm
        for c in 1..=m[i] {
            let conj = m.iter().filter(|&&p| p >= c).count();
            apply((conj - i - 1) as f64, (m[i] - c) as f64, 0.0, 1.0);
        }
        // boxes above the new one gain one unit of leg
        let j = m[i] + 1;
        for (q, &mq) in m.iter().enumerate().take(i) {
            apply((i - q - 1) as f64, (mq - j) as f64, 1.0, 0.0);
        }
        ratio
    }

    /// Sum of the terms of degree `k`; degrees must be requested in order.
    fn layer(&mut self, k: usize) -> TwoFloat {
        if k > self.cat.degree() {
            self.cat = shared_catalog(self.rank, k + 32);
        }
        let range = self.cat.layer(k);
        let mut sum = TwoFloat::from(0.0);
        for idx in range {
            let t = if k == 0 {
                TwoFloat::from(1.0)
            } else {
                let (parent, row) = self.cat.parent(idx);
                let pt = self.terms[parent];
                if pt.hi() == 0.0 {
                    pt
                } else {
                    pt * self.ratio(self.cat.parts(parent), row)
                }
            };
            self.terms.push(t);
            sum += t;
        }
        sum
    }
}

/// Convergence verdict of the series at the identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCheck {
    pub converges: bool,
    /// `sum_{i<=k} c_i - (1 + k(r-k) - k(r+1)/2)` for `k = 1..=r`; empty when
    /// `p <= q`.
    pub margins: Vec<f64>,
    /// Largest `k` entering the verdict (smaller than `r` when an upper
    /// parameter has a vanishing Pochhammer factor).
    pub checked_up_to: usize,
    pub warnings: Vec<String>,
}

/// Bound `1 + k(r-k) - k(r+1)/2` of the convergence criterion at the identity.
pub fn identity_bound(k: usize, r: usize) -> f64 {
    let (k, r) = (k as f64, r as f64);
    1.0 + k * (r - k) - k * (r + 1.0) / 2.0
}

pub fn converges_at_identity(params: &HypParams) -> ConvergenceCheck {
    let r = params.rank;
    if params.p() <= params.q() {
        return ConvergenceCheck {
            converges: true,
            margins: Vec::new(),
            checked_up_to: 0,
            warnings: Vec::new(),
        };
    }
    let mut margins = Vec::with_capacity(r);
    let mut partial = 0.0;
    for i in 0..r {
        let c: f64 = params.lower.iter().map(|b| b.values()[i]).sum::<f64>()
            - params.upper.iter().map(|a| a.values()[i]).sum::<f64>();
        partial += c;
        margins.push(partial - identity_bound(i + 1, r));
    }
    // a slot with (a_i - (i-1)/2) a nonpositive integer bounds m_i and
    // truncates the criterion to k <= i - 1
    let mut degenerate: Vec<usize> = Vec::new();
    for a in &params.upper {
        for i in 0..r {
            let s = a.shifted(i);
            if s <= 0.0 && s == s.round() && !degenerate.contains(&(i + 1)) {
                degenerate.push(i + 1);
            }
        }
    }
    let mut warnings = Vec::new();
    let checked_up_to = match degenerate.iter().min() {
        Some(&i) => {
            if degenerate.len() > 1 {
                degenerate.sort_unstable();
                warnings.push(format!(
                    "DegenerateParameter: vanishing Pochhammer factors at indices {degenerate:?}; criterion truncated at the smallest"
                ));
            }
            i - 1
        }
        None => r,
    };
    let converges = margins[..checked_up_to].iter().all(|&m| m > 0.0);
    ConvergenceCheck {
        converges,
        margins,
        checked_up_to,
        warnings,
    }
}

/// `pFq(params; x)` for a symmetric `x`.
///
/// For `p = q + 1` the spectral radius of `x` must be below 1. Scalar `2F1`
/// evaluations are routed through the Euler relation when that form
/// terminates, or when the spectral radius exceeds 0.9 and the Euler form has
/// the smaller upper-parameter sum.
pub fn pfq(params: &HypParams, x: &SymMatrix, opts: &SeriesOptions) -> Result<SeriesResult> {
    if x.rank() != params.rank {
        return Err(Error::RankMismatch {
            expected: params.rank,
            got: x.rank(),
        });
    }
    let eigs = eigenvalues(x)?;
    pfq_eigs(params, &eigs, opts)
}

/// [`pfq`] from the eigenvalues of the argument.
pub fn pfq_eigs(params: &HypParams, eigs: &[f64], opts: &SeriesOptions) -> Result<SeriesResult> {
    let mut series = HypSeries::new(params.clone(), *opts)?;
    eval_routed(&mut series, None, eigs)
}

/// Evaluation with an optional prepared Euler-form series.
fn eval_routed(
    series: &mut HypSeries,
    euler: Option<&mut HypSeries>,
    eigs: &[f64],
) -> Result<SeriesResult> {
    let params = &series.params;
    if eigs.len() != params.rank {
        return Err(Error::RankMismatch {
            expected: params.rank,
            got: eigs.len(),
        });
    }
    let radius = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if params.p() == params.q() + 1 && !(radius < 1.0) {
        return Err(Error::OutOfDomain {
            spectral_radius: radius,
        });
    }
    if let Some((a, b, c)) = euler_candidate(params, radius) {
        let log_det: f64 = eigs.iter().map(|v| (1.0 - v).ln()).sum();
        let factor = ((c - a - b) * log_det).exp();
        let mut res = match euler {
            Some(s) => s.eval_eigs(eigs)?,
            None => {
                let p = HypParams::scalar(&[c - a, c - b], &[c], params.rank)?;
                HypSeries::new(p, series.opts)?.eval_eigs(eigs)?
            }
        };
        res.value *= factor;
        res.diagnostics.partial_sum *= factor;
        res.diagnostics.method = Method::EulerRouted;
        return Ok(res);
    }
    series.eval_eigs(eigs)
}

fn scalar_2f1(params: &HypParams) -> Option<(f64, f64, f64)> {
    if params.p() != 2 || params.q() != 1 {
        return None;
    }
    let up = HypParams::scalar_values(&params.upper)?;
    let lo = HypParams::scalar_values(&params.lower)?;
    Some((up[0], up[1], lo[0]))
}

fn terminates(a: f64) -> bool {
    a <= 0.0 && a == a.round()
}

/// `(a, b, c)` when a scalar `2F1(a, b; c)` should use its Euler form.
fn euler_candidate(params: &HypParams, radius: f64) -> Option<(f64, f64, f64)> {
    let (a, b, c) = scalar_2f1(params)?;
    let orig_terminates = terminates(a) || terminates(b);
    let euler_terminates = terminates(c - a) || terminates(c - b);
    if euler_terminates && !orig_terminates {
        return Some((a, b, c));
    }
    if radius > EULER_ROUTING_RADIUS && !orig_terminates && (c - a) + (c - b) < a + b {
        return Some((a, b, c));
    }
    None
}

/// Repeated evaluation of one `pFq` at many points, with Euler routing.
#[derive(Debug, Clone)]
pub struct PreparedPfq {
    direct: HypSeries,
    euler: Option<HypSeries>,
}

impl PreparedPfq {
    pub fn new(params: HypParams, opts: SeriesOptions) -> Result<Self> {
        let euler = match scalar_2f1(&params) {
            Some((a, b, c)) => Some(HypSeries::new(
                HypParams::scalar(&[c - a, c - b], &[c], params.rank)?,
                opts,
            )?),
            None => None,
        };
        Ok(Self {
            direct: HypSeries::new(params, opts)?,
            euler,
        })
    }

    pub fn eval_eigs(&mut self, eigs: &[f64]) -> Result<SeriesResult> {
        let radius = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let use_euler = euler_candidate(&self.direct.params, radius).is_some();
        if use_euler {
            eval_routed(&mut self.direct, self.euler.as_mut(), eigs)
        } else {
            eval_routed(&mut self.direct, None, eigs)
        }
    }

    pub fn eval(&mut self, x: &SymMatrix) -> Result<SeriesResult> {
        self.eval_eigs(&eigenvalues(x)?)
    }
}

/// Raw series at the identity (with Levin acceleration at the degree cap).
pub fn pfq_at_identity(params: &HypParams, opts: &SeriesOptions) -> Result<SeriesResult> {
    let check = converges_at_identity(params);
    if !check.converges {
        return Err(Error::DivergentAtIdentity {
            margins: check.margins,
        });
    }
    let mut res = HypSeries::new(params.clone(), *opts)?.eval_identity()?;
    res.diagnostics.warnings.extend(check.warnings);
    Ok(res)
}

/// Value at the identity using closed forms where they apply: equal
/// upper/lower pairs are cancelled and a remaining scalar `2F1` uses the
/// Gauss formula. Falls back to [`pfq_at_identity`].
pub fn hyp_at_identity(params: &HypParams, opts: &SeriesOptions) -> Result<SeriesResult> {
    let reduced = params.cancelled();
    if reduced.p() == 0 && reduced.q() == 0 {
        // 0F0 at e is exp(tr e)
        return Ok(SeriesResult::exact(
            (reduced.rank as f64).exp(),
            Method::ClosedForm,
        ));
    }
    if reduced.p() == 2 && reduced.q() == 1 {
        if let (Some(up), Some(lo)) = (
            HypParams::scalar_values(&reduced.upper),
            HypParams::scalar_values(&reduced.lower),
        ) {
            let check = converges_at_identity(&reduced);
            if !check.converges {
                return Err(Error::DivergentAtIdentity {
                    margins: check.margins,
                });
            }
            if let Ok(v) = gauss_2f1_identity(up[0], up[1], lo[0], reduced.rank) {
                return Ok(SeriesResult::exact(v, Method::ClosedForm));
            }
        }
    }
    pfq_at_identity(&reduced, opts)
}

/// Gauss formula `Gamma(c) Gamma(c-a-b) / (Gamma(c-a) Gamma(c-b))` with the
/// multivariate gamma of rank `r`.
pub fn gauss_2f1_identity(alpha: f64, beta: f64, gamma: f64, r: usize) -> Result<f64> {
    let margin = gamma - alpha - beta - 0.5 * (r as f64 - 1.0);
    if !(margin > 0.0) {
        let params = HypParams::scalar(&[alpha, beta], &[gamma], r)?;
        return Err(Error::DivergentAtIdentity {
            margins: converges_at_identity(&params).margins,
        });
    }
    let g = |s: f64| log_gamma_omega(&VecParam::scalar(s, r));
    let v = g(gamma)?
        .mul(g(gamma - alpha - beta)?)
        .div(g(gamma - beta)?)
        .div(g(gamma - alpha)?);
    Ok(v.value())
}

/// Exponent `s` of a fit `ln|L_k| = A + s ln k + B/k` to the identity layer
/// sums over `k` in `[degree/2, degree]`; the series converges when `s < -1`.
pub fn identity_layer_exponent(params: &HypParams, degree: usize) -> Result<f64> {
    let series = HypSeries::new(
        params.clone(),
        SeriesOptions::default().with_degree_cap(degree.max(1)),
    )?;
    let layers = series.identity_layers(degree);
    let lo = (degree / 2).max(1);
    let mut rows = Vec::new();
    for (k, &l) in layers.iter().enumerate().skip(lo) {
        if l != 0.0 {
            let kf = k as f64;
            rows.push(([1.0, kf.ln(), 1.0 / kf], l.abs().ln()));
        }
    }
    if rows.len() < 3 {
        return Err(Error::DomainError("too few nonzero layers to fit".into()));
    }
    // normal equations of the 3-parameter least squares fit
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (row, y) in &rows {
        for i in 0..3 {
            atb[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let sol = solve3(ata, atb).ok_or_else(|| Error::DomainError("singular layer fit".into()))?;
    Ok(sol[1])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in (row + 1)..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Single series term `prod (a)_m / prod (b)_m * C_m(x) / |m|!`.
pub fn series_term(params: &HypParams, m: &Partition, eigs: &[f64]) -> Result<f64> {
    let mut acc = SignedLog::ONE;
    for a in &params.upper {
        acc = acc.mul(crate::special::log_gpoch(a, m)?);
    }
    for b in &params.lower {
        acc = acc.div(crate::special::log_gpoch(b, m)?);
    }
    let z = crate::zonal::zonal(m, eigs)?;
    let k = m.degree() as f64;
    Ok(acc.value() * z / (libm::lgamma_r(k + 1.0).0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_argument() {
        let p = HypParams::scalar(&[1.3, 0.7], &[2.2], 3).unwrap();
        let r = pfq(&p, &SymMatrix::zeros(3), &SeriesOptions::default()).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.converged_flag);
    }

    #[test]
    fn scalar_2f1_against_power_series() {
        let (a, b, c) = (1.3, 0.8, 2.1);
        for &x in &[-0.5, -0.2, 0.1, 0.3, 0.5] {
            let mut term = 1.0;
            let mut sum = 1.0;
            for n in 0..200 {
                let nf = n as f64;
                term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * x;
                sum += term;
            }
            let p = HypParams::scalar(&[a, b], &[c], 1).unwrap();
            let got = pfq_eigs(&p, &[x], &SeriesOptions::default()).unwrap();
            assert!(
                (got.value / sum - 1.0).abs() < 1e-12,
                "x={x}: {} vs {sum}",
                got.value
            );
        }
    }

    #[test]
    fn gauss_examples() {
        assert!((gauss_2f1_identity(1.0, 1.0, 3.0, 1).unwrap() - 2.0).abs() < 1e-14);
        assert!((gauss_2f1_identity(0.0, 1.3, 4.0, 3).unwrap() - 1.0).abs() < 1e-13);
        assert!(matches!(
            gauss_2f1_identity(2.0, 2.0, 4.2, 2),
            Err(Error::DivergentAtIdentity { .. })
        ));
    }

    #[test]
    fn convergence_check_examples() {
        let p = HypParams::scalar(&[1.0, 1.0], &[2.5], 1).unwrap();
        assert!(converges_at_identity(&p).converges);
        let p = HypParams::scalar(&[1.0, 1.0], &[2.0], 1).unwrap();
        assert!(!converges_at_identity(&p).converges);
        // r = 2, c = 0.5 sits on the bound
        let p = HypParams::scalar(&[1.0, 1.0], &[2.5], 2).unwrap();
        let chk = converges_at_identity(&p);
        assert!(!chk.converges);
        assert!(chk.margins[0].abs() < 1e-15);
        let p = HypParams::scalar(&[1.0, 1.0], &[2.5001], 2).unwrap();
        assert!(converges_at_identity(&p).converges);
    }

    #[test]
    fn telescoping_divergence() {
        let p = HypParams::scalar(&[1.5, 2.0], &[2.0], 2).unwrap();
        assert!(matches!(
            pfq_at_identity(&p, &SeriesOptions::default()),
            Err(Error::DivergentAtIdentity { .. })
        ));
    }

    #[test]
    fn too_many_upper() {
        assert!(matches!(
            HypParams::scalar(&[1.0, 1.0, 1.0], &[2.0], 1),
            Err(Error::TooManyUpper { .. })
        ));
    }

    #[test]
    fn out_of_domain() {
        let p = HypParams::scalar(&[1.0], &[], 2).unwrap();
        let x = SymMatrix::diag(&[1.0, 0.2]);
        assert!(matches!(
            pfq(&p, &x, &SeriesOptions::default()),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn degenerate_upper_truncates_criterion() {
        // second slot of the upper parameter vanishes: only m_2 = 0 survives
        let a = VecParam::new(vec![1.0, 0.5]);
        let p = HypParams::new(
            vec![a, VecParam::scalar(1.0, 2)],
            vec![VecParam::scalar(2.6, 2)],
            2,
        )
        .unwrap();
        let chk = converges_at_identity(&p);
        assert_eq!(chk.checked_up_to, 1);
        assert!(chk.converges);
    }

    #[test]
    fn gauss_identity_series_r2() {
        let p = HypParams::scalar(&[1.5, 2.0], &[5.0], 2).unwrap();
        let res = pfq_at_identity(&p, &SeriesOptions::default()).unwrap();
        assert!(res.is_reliable());
        let want = gauss_2f1_identity(1.5, 2.0, 5.0, 2).unwrap();
        assert!(
            (res.value / want - 1.0).abs() < 1e-6,
            "{} vs {want} ({:?})",
            res.value,
            res.diagnostics
        );
    }
}
