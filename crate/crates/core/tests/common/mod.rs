#![allow(dead_code)]

use std::collections::HashMap;

use conehyp::cone::{from_spectrum, random_orthogonal, SymMatrix};
use rand::Rng;

/// SPD matrix with eigenvalues drawn from `[lo, hi]` and a Haar rotation.
pub fn random_spd<R: Rng>(rng: &mut R, r: usize, lo: f64, hi: f64) -> SymMatrix {
    let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(lo..hi)).collect();
    from_spectrum(&random_orthogonal(r, rng), &eigs).unwrap()
}

/// Partitions of `k` with at most `max_len` parts, lexicographically
/// decreasing.
pub fn partitions(k: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn rec(
        k: usize,
        max_part: usize,
        max_len: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        if cur.len() == max_len {
            return;
        }
        for p in (1..=max_part.min(k)).rev() {
            cur.push(p);
            rec(k - p, p, max_len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, max_len, &mut Vec::new(), &mut out);
    out
}

fn dominated(lambda: &[usize], kappa: &[usize]) -> bool {
    let (mut sl, mut sk) = (0, 0);
    for i in 0..lambda.len().max(kappa.len()) {
        sl += lambda.get(i).copied().unwrap_or(0);
        sk += kappa.get(i).copied().unwrap_or(0);
        if sl > sk {
            return false;
        }
    }
    true
}

fn rho(kappa: &[usize]) -> f64 {
    kappa
        .iter()
        .enumerate()
        .map(|(i, &k)| k as f64 * (k as f64 - (i + 1) as f64))
        .sum()
}

/// Monomial coefficients of the monic zonal polynomial `Y_kappa` from the
/// eigen-operator recurrence
/// `c_{kappa,lambda} = sum (lambda_i - lambda_j + 2t) c_{kappa,mu} / (rho_kappa - rho_lambda)`,
/// `mu` running over the partitions obtained from `lambda` by moving `t`
/// boxes from row `j` to row `i < j`.
fn monic_coefficients(kappa: &[usize]) -> HashMap<Vec<usize>, f64> {
    let k: usize = kappa.iter().sum();
    let mut c: HashMap<Vec<usize>, f64> = HashMap::new();
    c.insert(kappa.to_vec(), 1.0);
    let rk = rho(kappa);
    for lambda in partitions(k, k) {
        if lambda == kappa || !dominated(&lambda, kappa) {
            continue;
        }
        let mut acc = 0.0;
        for i in 0..lambda.len() {
            for j in (i + 1)..lambda.len() {
                for t in 1..=lambda[j] {
                    let mut mu = lambda.clone();
                    mu[i] += t;
                    mu[j] -= t;
                    mu.sort_unstable_by(|a, b| b.cmp(a));
                    while mu.last() == Some(&0) {
                        mu.pop();
                    }
                    if let Some(v) = c.get(&mu) {
                        acc += (lambda[i] as f64 - lambda[j] as f64 + 2.0 * t as f64) * v;
                    }
                }
            }
        }
        c.insert(lambda.clone(), acc / (rk - rho(&lambda)));
    }
    c
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Monomial coefficients of every `C_kappa`, `|kappa| = k`, scaled so that
/// `sum_kappa C_kappa = (tr x)^k`: the coefficient of `M_lambda` in the
/// trace power is the multinomial `k! / prod lambda_i!`.
pub fn zonal_coefficients(k: usize) -> HashMap<Vec<usize>, HashMap<Vec<usize>, f64>> {
    let parts = partitions(k, k);
    let monic: Vec<HashMap<Vec<usize>, f64>> =
        parts.iter().map(|p| monic_coefficients(p)).collect();
    let mut scale: Vec<f64> = Vec::with_capacity(parts.len());
    for (idx, kappa) in parts.iter().enumerate() {
        let multinomial = factorial(k) / kappa.iter().map(|&v| factorial(v)).product::<f64>();
        let above: f64 = (0..idx)
            .map(|j| scale[j] * monic[j].get(kappa).copied().unwrap_or(0.0))
            .sum();
        scale.push(multinomial - above);
    }
    parts
        .into_iter()
        .zip(monic)
        .zip(scale)
        .map(|((p, m), s)| (p, m.into_iter().map(|(l, v)| (l, v * s)).collect()))
        .collect()
}

/// Monomial symmetric polynomial `M_lambda` at `x`.
pub fn monomial(lambda: &[usize], x: &[f64]) -> f64 {
    if lambda.len() > x.len() {
        return 0.0;
    }
    let mut exps: Vec<usize> = lambda.to_vec();
    exps.resize(x.len(), 0);
    exps.sort_unstable();
    let mut total = 0.0;
    loop {
        total += exps
            .iter()
            .zip(x)
            .map(|(&e, &v)| v.powi(e as i32))
            .product::<f64>();
        if !next_permutation(&mut exps) {
            break;
        }
    }
    total
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `C_kappa(x)` from its monomial expansion.
pub fn zonal_oracle(coeffs: &HashMap<Vec<usize>, f64>, x: &[f64]) -> f64 {
    coeffs
        .iter()
        .map(|(lambda, c)| c * monomial(lambda, x))
        .sum()
}
