//! Wishart, matrix beta and beta-hypergeometric distributions on the cone:
//! samplers, density, normalizing constant, generalized-power moments and
//! parameter recovery.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{
    in_unit_interval, log_det, pi_apply, pi_inv_apply, sqrt_apply, sqrt_inv_apply, LowerTriangular,
    SymMatrix,
};
use crate::error::{Error, Result};
use crate::hyp::{
    hyp_at_identity, identity_bound, HypParams, PreparedPfq, SeriesOptions, SeriesResult,
};
use crate::rng::RngStream;
use crate::special::{log_gamma_omega, VecParam};

fn lower_bound(rank: usize) -> f64 {
    0.5 * (rank as f64 - 1.0)
}

fn check_shape(name: &str, p: f64, rank: usize) -> Result<()> {
    let bound = lower_bound(rank);
    if p > bound && p.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!(
            "{name} > (r-1)/2 = {bound} violated: {name} = {p}"
        )))
    }
}

/// Parameters `(a, a', b)` of the beta-hypergeometric law `mu_{a,a',b}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaHypParams {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub rank: usize,
}

impl BetaHypParams {
    pub fn new(a: f64, a_prime: f64, b: f64, rank: usize) -> Result<Self> {
        let p = Self {
            a,
            a_prime,
            b,
            rank,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Malformed("rank must be at least 1".into()));
        }
        check_shape("a", self.a, self.rank)?;
        check_shape("a'", self.a_prime, self.rank)?;
        check_shape("b", self.b, self.rank)
    }

    /// `c = a + a'`.
    pub fn c(&self) -> f64 {
        self.a + self.a_prime
    }

    /// `(a', a, b)`.
    pub fn swapped(&self) -> Self {
        Self {
            a: self.a_prime,
            a_prime: self.a,
            ..*self
        }
    }

    /// True when `b = a + a'`, where the law is `beta1_{a,a'}`.
    pub fn is_beta1(&self) -> bool {
        (self.b - self.c()).abs() <= 1e-14 * self.b.abs().max(1.0)
    }
}

// ---------------------------------------------------------------- samplers

/// Lower-triangular `t` with `t_ii^2 ~ Gamma(p - (i-1)/2, 1)` and
/// `t_ij ~ N(0, 1/2)` below the diagonal; `t t*` is Wishart of shape `p` and
/// scale `e` for the density `Delta(x)^{p-(r+1)/2} exp(-tr x)`.
fn bartlett_factor<R: Rng + ?Sized>(p: f64, rank: usize, rng: &mut R) -> Result<LowerTriangular> {
    check_shape("p", p, rank)?;
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    let mut data = vec![0.0; rank * rank];
    for i in 0..rank {
        let shape = p - 0.5 * i as f64;
        let g = Gamma::new(shape, 1.0)
            .map_err(|e| Error::DomainError(format!("gamma shape {shape}: {e}")))?;
        // a draw of exactly zero is possible only through underflow
        let d: f64 = g.sample(rng).max(f64::MIN_POSITIVE);
        data[i * rank + i] = d.sqrt();
        for j in 0..i {
            data[i * rank + j] = normal.sample(rng);
        }
    }
    LowerTriangular::from_row_major(rank, data)
}

fn bartlett<R: Rng + ?Sized>(p: f64, rank: usize, rng: &mut R) -> Result<SymMatrix> {
    Ok(bartlett_factor(p, rank, rng)?.gram())
}

/// Wishart sample of shape `p` and scale `sigma`: `pi(sigma)(t t*)`.
pub fn wishart_sample<R: Rng + ?Sized>(
    p: f64,
    sigma: &SymMatrix,
    rng: &mut R,
) -> Result<SymMatrix> {
    let w = bartlett(p, sigma.rank(), rng)?;
    pi_apply(sigma, &w)
}

/// Wishart sample with identity scale.
pub fn wishart_identity_sample<R: Rng + ?Sized>(
    p: f64,
    rank: usize,
    rng: &mut R,
) -> Result<SymMatrix> {
    bartlett(p, rank, rng)
}

/// `pi^{-1}(U + V)(U)` with `U ~ W_{p,e}`, `V ~ W_{q,e}` independent.
pub fn beta1_sample<R: Rng + ?Sized>(
    p: f64,
    q: f64,
    rank: usize,
    rng: &mut R,
) -> Result<SymMatrix> {
    let u = bartlett(p, rank, rng)?;
    let v = bartlett(q, rank, rng)?;
    pi_inv_apply(&u.add(&v)?, &u)
}

/// Division algorithm `x -> pi(y)(x)` used by the maps and the continued
/// fraction.
///
/// The Cholesky division is not equivariant under rotations, so laws built
/// with it need not be rotation invariant; the square-root division is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Division {
    /// `t x t*` with `y = t t*`, `t` lower triangular.
    #[default]
    Cholesky,
    /// `y^{1/2} x y^{1/2}`.
    SquareRoot,
}

impl Division {
    pub fn apply(self, y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
        match self {
            Division::Cholesky => pi_apply(y, x),
            Division::SquareRoot => sqrt_apply(y, x),
        }
    }

    pub fn inv_apply(self, y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
        match self {
            Division::Cholesky => pi_inv_apply(y, x),
            Division::SquareRoot => sqrt_inv_apply(y, x),
        }
    }
}

/// `pi^{-1}(V)(U)` with `U ~ W_{p,e}`, `V ~ W_{q,e}` independent.
pub fn beta2_sample<R: Rng + ?Sized>(
    p: f64,
    q: f64,
    rank: usize,
    rng: &mut R,
) -> Result<SymMatrix> {
    beta2_sample_with(Division::Cholesky, p, q, rank, rng)
}

/// `beta2_{p,q}` draw as the quotient of `U ~ W_{p,e}` by `V ~ W_{q,e}` under
/// `division`.
pub fn beta2_sample_with<R: Rng + ?Sized>(
    division: Division,
    p: f64,
    q: f64,
    rank: usize,
    rng: &mut R,
) -> Result<SymMatrix> {
    let u = bartlett(p, rank, rng)?;
    match division {
        // the Bartlett factor is the Cholesky factor of V
        Division::Cholesky => bartlett_factor(q, rank, rng)?.inv_apply(&u),
        Division::SquareRoot => sqrt_inv_apply(&bartlett(q, rank, rng)?, &u),
    }
}

/// One step `pi^{-1}(e + pi^{-1}(e + pi(z)(w'))(w))(e)` of the random
/// continued fraction.
pub fn onestep_map(z: &SymMatrix, w: &SymMatrix, w_prime: &SymMatrix) -> Result<SymMatrix> {
    onestep_map_with(Division::Cholesky, z, w, w_prime)
}

pub fn onestep_map_with(
    division: Division,
    z: &SymMatrix,
    w: &SymMatrix,
    w_prime: &SymMatrix,
) -> Result<SymMatrix> {
    let mid = halfstep_map_with(division, z, w_prime)?;
    halfstep_map_with(division, &mid, w)
}

/// Half step `pi^{-1}(e + pi(z)(w))(e)`.
pub fn halfstep_map(z: &SymMatrix, w: &SymMatrix) -> Result<SymMatrix> {
    halfstep_map_with(Division::Cholesky, z, w)
}

pub fn halfstep_map_with(division: Division, z: &SymMatrix, w: &SymMatrix) -> Result<SymMatrix> {
    let inner = division.apply(z, w)?.identity_plus();
    division.inv_apply(&inner, &SymMatrix::identity(z.rank()))
}

/// Stopping rule of the continued-fraction sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfOptions {
    pub max_iters: usize,
    pub coupling_tol: f64,
    pub division: Division,
}

impl Default for CfOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            coupling_tol: 1e-10,
            division: Division::Cholesky,
        }
    }
}

impl CfOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::ConfigError("max_iters >= 1 violated".into()));
        }
        if !(self.coupling_tol > 0.0) {
            return Err(Error::ConfigError("coupling_tol > 0 violated".into()));
        }
        Ok(())
    }
}

/// A continued-fraction draw with its coupling certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CfDraw {
    pub x: SymMatrix,
    /// Depth `n` of the composition `F_1 o ... o F_n` at which the chains met.
    pub iterations: usize,
    pub gap: f64,
}

/// Draw from `mu_{a,a',b}` as the limit of `F_1 o ... o F_n(z)`, with
/// `F_n` built from `W_n ~ beta2_{b,a}` and `W'_n ~ beta2_{b,a'}`, all under
/// `opts.division`.
///
/// The composition is evaluated from the innermost map outwards for the two
/// starting points `e/4` and `3e/4` on the same draws; the depth is doubled
/// until the two values agree within `coupling_tol` (max-entry distance).
pub fn betahyp_sample_traced<R: Rng + ?Sized>(
    params: &BetaHypParams,
    rng: &mut R,
    opts: &CfOptions,
) -> Result<CfDraw> {
    params.validate()?;
    opts.validate()?;
    let r = params.rank;
    let low = SymMatrix::scaled_identity(r, 0.25);
    let high = SymMatrix::scaled_identity(r, 0.75);
    let mut draws: Vec<(SymMatrix, SymMatrix)> = Vec::new();
    let mut depth = 4.min(opts.max_iters);
    let div = opts.division;
    loop {
        while draws.len() < depth {
            let w = beta2_sample_with(div, params.b, params.a, r, rng)?;
            let w_prime = beta2_sample_with(div, params.b, params.a_prime, r, rng)?;
            draws.push((w, w_prime));
        }
        let mut z0 = low.clone();
        let mut z1 = high.clone();
        for (w, w_prime) in draws[..depth].iter().rev() {
            z0 = onestep_map_with(div, &z0, w, w_prime)?;
            z1 = onestep_map_with(div, &z1, w, w_prime)?;
        }
        let gap = z0.max_abs_diff(&z1);
        if gap <= opts.coupling_tol {
            return Ok(CfDraw {
                x: z0,
                iterations: depth,
                gap,
            });
        }
        if depth >= opts.max_iters {
            return Err(Error::NotCoupled {
                iterations: depth,
                gap,
            });
        }
        depth = (2 * depth).min(opts.max_iters);
    }
}

pub fn betahyp_sample<R: Rng + ?Sized>(
    params: &BetaHypParams,
    rng: &mut R,
    opts: &CfOptions,
) -> Result<SymMatrix> {
    betahyp_sample_traced(params, rng, opts).map(|d| d.x)
}

/// Named sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Point mass at the identity.
    Identity {
        rank: usize,
    },
    Wishart {
        p: f64,
        rank: usize,
    },
    Beta1 {
        p: f64,
        q: f64,
        rank: usize,
    },
    Beta2 {
        p: f64,
        q: f64,
        rank: usize,
        #[serde(default)]
        division: Division,
    },
    BetaHyp {
        params: BetaHypParams,
        #[serde(default)]
        cf: CfOptions,
    },
}

impl SamplerSpec {
    pub fn rank(&self) -> usize {
        match self {
            SamplerSpec::Identity { rank }
            | SamplerSpec::Wishart { rank, .. }
            | SamplerSpec::Beta1 { rank, .. }
            | SamplerSpec::Beta2 { rank, .. } => *rank,
            SamplerSpec::BetaHyp { params, .. } => params.rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rank = self.rank();
        if rank == 0 {
            return Err(Error::Malformed("rank must be at least 1".into()));
        }
        match self {
            SamplerSpec::Identity { .. } => Ok(()),
            SamplerSpec::Wishart { p, .. } => check_shape("p", *p, rank),
            SamplerSpec::Beta1 { p, q, .. } | SamplerSpec::Beta2 { p, q, .. } => {
                check_shape("p", *p, rank)?;
                check_shape("q", *q, rank)
            }
            SamplerSpec::BetaHyp { params, cf } => {
                params.validate()?;
                cf.validate()
            }
        }
    }

    /// `n` draws; draw `i` uses `RngStream::new(seed, 0).at(i)`, so the batch
    /// does not depend on the number of worker threads.
    pub fn sample_batch(&self, n: usize, seed: u64) -> Result<Vec<SymMatrix>> {
        self.validate()?;
        let stream = RngStream::new(seed, 0);
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw(&mut stream.at(i)))
            .collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SymMatrix> {
        match self {
            SamplerSpec::Identity { rank } => Ok(SymMatrix::identity(*rank)),
            SamplerSpec::Wishart { p, rank } => wishart_identity_sample(*p, *rank, rng),
            SamplerSpec::Beta1 { p, q, rank } => beta1_sample(*p, *q, *rank, rng),
            SamplerSpec::Beta2 {
                p,
                q,
                rank,
                division,
            } => beta2_sample_with(*division, *p, *q, *rank, rng),
            SamplerSpec::BetaHyp { params, cf } => betahyp_sample(params, rng, cf),
        }
    }

    /// Closed-form `E[Delta_t(X)]` of the named law.
    pub fn moment(&self, t: &[f64], opts: &SeriesOptions) -> Result<f64> {
        check_vector("t", t, self.rank())?;
        match self {
            SamplerSpec::Identity { .. } => Ok(1.0),
            SamplerSpec::Wishart { p, .. } => wishart_moment(*p, t),
            SamplerSpec::Beta1 { p, q, .. } => beta1_moment(*p, *q, t),
            SamplerSpec::Beta2 { p, q, division, .. } => beta2_moment_with(*division, *p, *q, t),
            SamplerSpec::BetaHyp { params, .. } => betahyp_moment(params, t, opts).map(|m| m.value),
        }
    }
}

// ---------------------------------------------------- closed-form moments

fn scalar(a: f64, r: usize) -> VecParam {
    VecParam::scalar(a, r)
}

fn lg(s: &VecParam) -> Result<f64> {
    let v = log_gamma_omega(s)?;
    if v.sign <= 0 {
        return Err(Error::DomainError(format!(
            "Gamma_Omega{:?} is not positive",
            s.values()
        )));
    }
    Ok(v.log_abs)
}

fn check_vector(name: &str, v: &[f64], rank: usize) -> Result<()> {
    if v.len() != rank {
        return Err(Error::RankMismatch {
            expected: rank,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Malformed(format!("{name} has a non-finite entry")));
    }
    Ok(())
}

/// `pFq` at the identity, closed forms first, required to be reliable.
fn hyp_identity(
    upper: Vec<VecParam>,
    lower: Vec<VecParam>,
    rank: usize,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    let params = HypParams::new(upper, lower, rank)?;
    hyp_at_identity(&params, opts)?.require_reliable()
}

/// `3F2(a, a, b; a+b, a+a'; e)`.
pub fn norm_series(params: &BetaHypParams, opts: &SeriesOptions) -> Result<SeriesResult> {
    params.validate()?;
    let r = params.rank;
    let (a, b) = (scalar(params.a, r), scalar(params.b, r));
    hyp_identity(
        vec![a.clone(), a, b],
        vec![scalar(params.a + params.b, r), scalar(params.c(), r)],
        r,
        opts,
    )
}

/// `ln C(a, a', b)` with
/// `C = Gamma_Omega(a+b) / (Gamma_Omega(a) Gamma_Omega(b) 3F2(a,a,b; a+b,a+a'; e))`.
pub fn betahyp_log_norm_const(params: &BetaHypParams, opts: &SeriesOptions) -> Result<f64> {
    let f = norm_series(params, opts)?;
    if !(f.value > 0.0) {
        return Err(Error::DomainError(format!(
            "normalizing series is not positive: {}",
            f.value
        )));
    }
    let r = params.rank;
    Ok(lg(&scalar(params.a + params.b, r))?
        - lg(&scalar(params.a, r))?
        - lg(&scalar(params.b, r))?
        - f.value.ln())
}

pub fn betahyp_norm_const(params: &BetaHypParams, opts: &SeriesOptions) -> Result<f64> {
    betahyp_log_norm_const(params, opts).map(f64::exp)
}

/// `E[Delta_t(X)]` for `X ~ W_{p,e}`: `Gamma_Omega(p+t) / Gamma_Omega(p)`.
pub fn wishart_moment(p: f64, t: &[f64]) -> Result<f64> {
    let r = t.len();
    check_shape("p", p, r)?;
    let pt = scalar(p, r).plus(&VecParam::new(t.to_vec()));
    Ok((lg(&pt)? - lg(&scalar(p, r))?).exp())
}

/// `E[Delta_t(X)]` for `X ~ beta1_{p,q}`:
/// `Gamma_Omega(p+t) Gamma_Omega(p+q) / (Gamma_Omega(p) Gamma_Omega(p+q+t))`.
pub fn beta1_moment(p: f64, q: f64, t: &[f64]) -> Result<f64> {
    let r = t.len();
    check_shape("p", p, r)?;
    check_shape("q", q, r)?;
    let tv = VecParam::new(t.to_vec());
    for (i, ti) in t.iter().enumerate() {
        if !(p + ti > 0.5 * i as f64) {
            return Err(Error::DomainError(format!(
                "t_{} + p > {} violated",
                i + 1,
                0.5 * i as f64
            )));
        }
    }
    let v = lg(&scalar(p, r).plus(&tv))? + lg(&scalar(p + q, r))?
        - lg(&scalar(p, r))?
        - lg(&scalar(p + q, r).plus(&tv))?;
    Ok(v.exp())
}

/// `E[Delta_t(W)]` for `W ~ beta2_{p,q}`:
/// `Gamma_Omega(p+t) Gamma_Omega(q-t) / (Gamma_Omega(p) Gamma_Omega(q))`.
pub fn beta2_moment(p: f64, q: f64, t: &[f64]) -> Result<f64> {
    let r = t.len();
    check_shape("p", p, r)?;
    check_shape("q", q, r)?;
    for (i, ti) in t.iter().enumerate() {
        let h = 0.5 * i as f64;
        if !(p + ti > h && q - ti > h) {
            return Err(Error::DomainError(format!(
                "{h} - p < t_{} < q - {h} violated",
                i + 1
            )));
        }
    }
    let tv = VecParam::new(t.to_vec());
    let v = lg(&scalar(p, r).plus(&tv))? + lg(&scalar(q, r).minus(&tv))?
        - lg(&scalar(p, r))?
        - lg(&scalar(q, r))?;
    Ok(v.exp())
}

/// `E[Delta_t(W)]` for `W ~ beta2_{p,q}` built with `division`. The
/// square-root quotient is rotation invariant and has
/// `Gamma_Omega(p+t) Gamma_Omega(q-t*) / (Gamma_Omega(p) Gamma_Omega(q))`
/// with `t* = (t_r, ..., t_1)`.
pub fn beta2_moment_with(division: Division, p: f64, q: f64, t: &[f64]) -> Result<f64> {
    match division {
        Division::Cholesky => beta2_moment(p, q, t),
        Division::SquareRoot => {
            let r = t.len();
            check_shape("p", p, r)?;
            check_shape("q", q, r)?;
            let rev: Vec<f64> = t.iter().rev().copied().collect();
            for i in 0..r {
                let h = 0.5 * i as f64;
                if !(p + t[i] > h && q - rev[i] > h) {
                    return Err(Error::DomainError(format!(
                        "t_{} + p > {h} and q - t_{} > {h} violated",
                        i + 1,
                        r - i
                    )));
                }
            }
            let v = lg(&scalar(p, r).plus(&VecParam::new(t.to_vec())))?
                + lg(&scalar(q, r).minus(&VecParam::new(rev)))?
                - lg(&scalar(p, r))?
                - lg(&scalar(q, r))?;
            Ok(v.exp())
        }
    }
}

/// Which closed form produced a moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentForm {
    /// Ratio of `3F2(a, b, a+t; a+a', t+a+b; e)` to the normalizing series.
    Delta,
    /// Ratio of `3F2(a', a'-t, b; a'+b, a+a'; e)` to `3F2(a', a', b; a'+b, a+a'; e)`.
    Dual,
    /// Gamma ratio of `beta1_{a,a'}`, used when `b = a + a'`.
    Beta1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentValue {
    pub value: f64,
    pub form: MomentForm,
    /// Largest relative error estimate of the series involved.
    pub error_estimate: f64,
}

/// Checks `sum_{i<=k} v_i + k s > 1 + k(r-k) - k(r+1)/2` for all `k`.
fn check_partial_sums(v: &[f64], s: f64, vname: &str, sname: &str) -> Result<()> {
    let r = v.len();
    let mut acc = 0.0;
    for k in 1..=r {
        acc += v[k - 1];
        let bound = identity_bound(k, r);
        if !(acc + k as f64 * s > bound) {
            return Err(Error::DomainError(format!(
                "sum_(i<={k}) {vname}_i + {k} {sname} > {bound} violated (left side {})",
                acc + k as f64 * s
            )));
        }
    }
    Ok(())
}

/// Checks `v_i + s > (i-1)/2` for all `i`.
fn check_entrywise(v: &[f64], s: f64, vname: &str, sname: &str) -> Result<()> {
    for (i, vi) in v.iter().enumerate() {
        let h = 0.5 * i as f64;
        if !(vi + s > h) {
            return Err(Error::DomainError(format!(
                "{vname}_{} + {sname} > {h} violated (left side {})",
                i + 1,
                vi + s
            )));
        }
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn require_constant(name: &str, v: &[f64]) -> Result<()> {
    if is_constant(v) {
        Ok(())
    } else {
        Err(Error::DomainError(format!(
            "{name} = (c, ..., c) violated: closed-form moments of mu_(a,a',b) with b != a + a' need a constant exponent, got {v:?}"
        )))
    }
}

fn exact(value: f64) -> MomentValue {
    MomentValue {
        value,
        form: MomentForm::Beta1,
        error_estimate: 0.0,
    }
}

/// The `Delta` form of the moment; requires `t_i + a > (i-1)/2`.
///
/// Equal to `E[Delta_t(X)]` when `t` is constant. For other `t` the value of
/// the expression is returned as is; it is not a moment of `mu_{a,a',b}`.
pub fn betahyp_moment_delta(
    params: &BetaHypParams,
    t: &[f64],
    opts: &SeriesOptions,
) -> Result<MomentValue> {
    params.validate()?;
    let r = params.rank;
    check_vector("t", t, r)?;
    check_entrywise(t, params.a, "t", "a")?;
    let tv = VecParam::new(t.to_vec());
    let (a, b) = (scalar(params.a, r), scalar(params.b, r));
    let at = a.plus(&tv);
    let abt = at.add_scalar(params.b);
    let num = hyp_identity(
        vec![a.clone(), b.clone(), at.clone()],
        vec![scalar(params.c(), r), abt.clone()],
        r,
        opts,
    )?;
    let den = norm_series(params, opts)?;
    let log_g = lg(&scalar(params.a + params.b, r))? - lg(&a)? + lg(&at)? - lg(&abt)?;
    Ok(MomentValue {
        value: log_g.exp() * num.value / den.value,
        form: MomentForm::Delta,
        error_estimate: num.error_estimate.max(den.error_estimate),
    })
}

/// The dual form of the moment; requires
/// `sum_{i<=k} t_i + k a > 1 + k(r-k) - k(r+1)/2`.
///
/// Equal to `E[Delta_t(X)]` when `t` is constant, like [`betahyp_moment_delta`].
pub fn betahyp_moment_dual(
    params: &BetaHypParams,
    t: &[f64],
    opts: &SeriesOptions,
) -> Result<MomentValue> {
    params.validate()?;
    let r = params.rank;
    check_vector("t", t, r)?;
    check_partial_sums(t, params.a, "t", "a")?;
    let tv = VecParam::new(t.to_vec());
    let ap = scalar(params.a_prime, r);
    let b = scalar(params.b, r);
    let lower = vec![scalar(params.a_prime + params.b, r), scalar(params.c(), r)];
    let num = hyp_identity(
        vec![ap.clone(), ap.minus(&tv), b.clone()],
        lower.clone(),
        r,
        opts,
    )?;
    let den = hyp_identity(vec![ap.clone(), ap, b], lower, r, opts)?;
    Ok(MomentValue {
        value: num.value / den.value,
        form: MomentForm::Dual,
        error_estimate: num.error_estimate.max(den.error_estimate),
    })
}

/// `E[Delta_t(X)]` for `X ~ mu_{a,a',b}`.
///
/// For `b = a + a'` the `beta1_{a,a'}` Gamma ratio is used and any `t` in its
/// domain is accepted. Otherwise `t` must be constant; the dual form is used
/// where its condition holds and its series is reliable, else the `Delta`
/// form.
pub fn betahyp_moment(
    params: &BetaHypParams,
    t: &[f64],
    opts: &SeriesOptions,
) -> Result<MomentValue> {
    params.validate()?;
    check_vector("t", t, params.rank)?;
    if t.iter().all(|&v| v == 0.0) {
        return Ok(exact(1.0));
    }
    if params.is_beta1() {
        return beta1_moment(params.a, params.a_prime, t).map(exact);
    }
    require_constant("t", t)?;
    match betahyp_moment_dual(params, t, opts) {
        Ok(v) => Ok(v),
        Err(first) => match betahyp_moment_delta(params, t, opts) {
            Ok(v) => Ok(v),
            Err(Error::DomainError(_)) if !matches!(first, Error::DomainError(_)) => Err(first),
            Err(second) => Err(match (&first, &second) {
                (Error::DomainError(a), Error::DomainError(b)) => {
                    Error::DomainError(format!("{a}; {b}"))
                }
                _ => second,
            }),
        },
    }
}

/// `E[Delta_t(X) Delta_s(e - X)]` for `X ~ mu_{a,a',b}`; `t` and `s` must be
/// constant unless `b = a + a'` and one of them vanishes.
pub fn betahyp_joint_moment(
    params: &BetaHypParams,
    t: &[f64],
    s: &[f64],
    opts: &SeriesOptions,
) -> Result<MomentValue> {
    params.validate()?;
    let r = params.rank;
    check_vector("t", t, r)?;
    check_vector("s", s, r)?;
    let t_zero = t.iter().all(|&v| v == 0.0);
    let s_zero = s.iter().all(|&v| v == 0.0);
    if params.is_beta1() && s_zero {
        return beta1_moment(params.a, params.a_prime, t).map(exact);
    }
    if params.is_beta1() && t_zero {
        return beta1_moment(params.a_prime, params.a, s).map(exact);
    }
    require_constant("t", t)?;
    require_constant("s", s)?;
    check_entrywise(t, params.a, "t", "a")?;
    check_entrywise(s, params.b, "s", "b")?;
    check_partial_sums(s, params.a_prime, "s", "a'")?;
    if t_zero && s_zero {
        return Ok(exact(1.0));
    }
    let (tv, sv) = (VecParam::new(t.to_vec()), VecParam::new(s.to_vec()));
    let (a, b) = (scalar(params.a, r), scalar(params.b, r));
    let at = a.plus(&tv);
    let bs = b.plus(&sv);
    let abts = at.plus(&sv).add_scalar(params.b);
    let num = hyp_identity(
        vec![at.clone(), a.clone(), b.clone()],
        vec![abts.clone(), scalar(params.c(), r)],
        r,
        opts,
    )?;
    let den = norm_series(params, opts)?;
    let log_g =
        lg(&scalar(params.a + params.b, r))? + lg(&at)? + lg(&bs)? - lg(&a)? - lg(&b)? - lg(&abts)?;
    Ok(MomentValue {
        value: log_g.exp() * num.value / den.value,
        form: MomentForm::Delta,
        error_estimate: num.error_estimate.max(den.error_estimate),
    })
}

/// `E[Delta_t(e - X)]` for `X ~ mu_{a,a',b}`.
pub fn betahyp_complement_moment(
    params: &BetaHypParams,
    t: &[f64],
    opts: &SeriesOptions,
) -> Result<MomentValue> {
    betahyp_joint_moment(params, &vec![0.0; params.rank], t, opts)
}

// ----------------------------------------------------------------- density

/// `ln` of the `beta1_{p,q}` density at `x`.
pub fn beta1_log_density(p: f64, q: f64, x: &SymMatrix) -> Result<f64> {
    let r = x.rank();
    check_shape("p", p, r)?;
    check_shape("q", q, r)?;
    if !in_unit_interval(x) {
        return Err(Error::OutOfSupport);
    }
    let nr = 0.5 * (r as f64 + 1.0);
    let norm = lg(&scalar(p + q, r))? - lg(&scalar(p, r))? - lg(&scalar(q, r))?;
    Ok(norm + (p - nr) * log_det(x)? + (q - nr) * log_det(&x.identity_minus())?)
}

/// Density of `mu_{a,a',b}` prepared for evaluation at many points.
#[derive(Debug, Clone)]
pub struct BetaHypDensity {
    params: BetaHypParams,
    log_c: f64,
    hyp: PreparedPfq,
}

impl BetaHypDensity {
    pub fn new(params: BetaHypParams, opts: &SeriesOptions) -> Result<Self> {
        let log_c = betahyp_log_norm_const(&params, opts)?;
        let r = params.rank;
        let hyp = PreparedPfq::new(
            HypParams::scalar(&[params.a, params.b], &[params.c()], r)?,
            *opts,
        )?;
        Ok(Self { params, log_c, hyp })
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_c
    }

    /// `ln C + (a - (r+1)/2) ln Delta(x) + (b - (r+1)/2) ln Delta(e - x) + ln 2F1(a, b; a+a'; x)`.
    pub fn log_density(&mut self, x: &SymMatrix) -> Result<f64> {
        let r = self.params.rank;
        if x.rank() != r {
            return Err(Error::RankMismatch {
                expected: r,
                got: x.rank(),
            });
        }
        if !in_unit_interval(x) {
            return Err(Error::OutOfSupport);
        }
        let f = self.hyp.eval(x)?.require_reliable()?;
        if !(f.value > 0.0) {
            return Err(Error::DomainError(format!(
                "2F1 value {} is not positive",
                f.value
            )));
        }
        let nr = 0.5 * (r as f64 + 1.0);
        Ok(self.log_c
            + (self.params.a - nr) * log_det(x)?
            + (self.params.b - nr) * log_det(&x.identity_minus())?
            + f.value.ln())
    }
}

pub fn betahyp_log_density(
    params: &BetaHypParams,
    x: &SymMatrix,
    opts: &SeriesOptions,
) -> Result<f64> {
    BetaHypDensity::new(*params, opts)?.log_density(x)
}

// ---------------------------------------------------- parameter recovery

/// `(a' b / c, (a'-1/2)(b-1/2)/(c-1/2), (a'-1)(b-1)/(c-1))`.
pub fn identifiability_moments(a_prime: f64, b: f64, c: f64) -> (f64, f64, f64) {
    (
        a_prime * b / c,
        (a_prime - 0.5) * (b - 0.5) / (c - 0.5),
        (a_prime - 1.0) * (b - 1.0) / (c - 1.0),
    )
}

/// Solution of the identifiability system; `{a', b}` is unordered and
/// reported as `low <= high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Recovered {
    pub pair: (f64, f64),
    pub c: f64,
}

/// Inverts [`identifiability_moments`]: `c` from
/// `c(l2 + l0 - 2 l1) + l1 - l2 - 1/2 = 0`, then `a' b = c l0` and
/// `a' + b = 2 c l0 - 2 (c - 1/2) l1 + 1/2`.
pub fn recover_params(lambda0: f64, lambda1: f64, lambda2: f64) -> Result<Recovered> {
    if ![lambda0, lambda1, lambda2].iter().all(|v| v.is_finite()) {
        return Err(Error::Malformed("non-finite moment".into()));
    }
    let coef = lambda2 + lambda0 - 2.0 * lambda1;
    let scale = lambda0.abs().max(lambda1.abs()).max(lambda2.abs()).max(1.0);
    if coef.abs() <= 64.0 * f64::EPSILON * scale {
        return Err(Error::DegenerateSystem(format!(
            "l2 + l0 - 2 l1 = {coef:e} vanishes"
        )));
    }
    let c = (lambda2 - lambda1 + 0.5) / coef;
    for bad in [0.5, 1.0] {
        if (c - bad).abs() <= 1e-12 * c.abs().max(1.0) {
            return Err(Error::DegenerateSystem(format!(
                "recovered c = {c} is a pole of the system"
            )));
        }
    }
    let sum = 2.0 * c * lambda0 - 2.0 * (c - 0.5) * lambda1 + 0.5;
    let prod = c * lambda0;
    let mut disc = sum * sum - 4.0 * prod;
    if disc < 0.0 {
        // rounding can push a double root slightly negative
        if disc >= -1e-9 * sum * sum {
            disc = 0.0;
        } else {
            return Err(Error::ComplexRoots { discriminant: disc });
        }
    }
    let root = disc.sqrt();
    // the larger root by addition, the smaller through the product
    let high = 0.5 * (sum + sum.signum() * root);
    let low = if high != 0.0 {
        prod / high
    } else {
        0.5 * (sum - root)
    };
    let pair = if low <= high {
        (low, high)
    } else {
        (high, low)
    };
    Ok(Recovered { pair, c })
}
