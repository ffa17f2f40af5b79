mod common;

use std::time::Instant;

use common::{partitions, random_spd, zonal_coefficients, zonal_oracle};
use conehyp::cone::{from_spectrum, random_orthogonal};
use conehyp::dist::{
    beta1_log_density, betahyp_log_density, betahyp_moment_delta, betahyp_moment_dual,
    betahyp_norm_const, betahyp_sample_traced, identifiability_moments, recover_params, CfOptions,
    Division,
};
use conehyp::hyp::{
    converges_at_identity, gauss_2f1_identity, identity_layer_exponent, pfq, pfq_at_identity,
    HypParams, SeriesOptions,
};
use conehyp::partition::{partitions_of_degree, Partition};
use conehyp::special::{beta_omega, log_gamma_omega_scalar};
use conehyp::verify::{run_suite, SuiteConfig, SuiteName, SuiteReport};
use conehyp::zonal::zonal;
use conehyp::{BetaHypParams, RngStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion; `known` marks failures that the square-root
/// division resolves, as described in the README.
struct Outcome {
    pass: bool,
    detail: String,
    known: bool,
}

fn ok(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        known: false,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn worst_z(rep: &SuiteReport) -> f64 {
    rep.checks
        .iter()
        .filter_map(|c| c.z_score)
        .fold(0.0, |m, z| m.max(z.abs()))
}

fn z_list(rep: &SuiteReport) -> String {
    let zs: Vec<String> = rep
        .checks
        .iter()
        .map(|c| match (c.z_score, c.p_value) {
            (Some(z), _) => format!("{z:.2}"),
            (None, Some(p)) => format!("KS p={p:.3}"),
            _ => "-".into(),
        })
        .collect();
    format!("[{}]", zs.join(", "))
}

fn suite(
    name: SuiteName,
    params: BetaHypParams,
    ts: Vec<Vec<f64>>,
    n: usize,
    division: Division,
) -> SuiteReport {
    let cfg = SuiteConfig {
        n,
        seed: 2024,
        division,
        ..SuiteConfig::new(name, params, ts)
    };
    run_suite(&cfg).unwrap_or_else(|e| panic!("{} failed to run: {e}", name.as_str()))
}

fn gauss_formula() -> Outcome {
    let start = Instant::now();
    let opts = SeriesOptions::default().with_degree_cap(120);
    let mut worst = 0.0_f64;
    let mut check = |a: f64, b: f64, c: f64, r: usize| {
        let got = pfq_at_identity(&HypParams::scalar(&[a, b], &[c], r).unwrap(), &opts)
            .unwrap()
            .value;
        worst = worst.max(rel(got, gauss_2f1_identity(a, b, c, r).unwrap()));
    };
    check(1.5, 2.0, 5.0, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for r in 1..=3 {
        let h = 0.5 * (r as f64 - 1.0);
        for _ in 0..10 {
            let a = h + rng.random_range(0.3..3.0);
            let b = h + rng.random_range(0.3..3.0);
            let c = a + b + h + rng.random_range(1.0..2.5);
            check(a, b, c, r);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok(
        worst <= 1e-6 && secs < 10.0,
        format!("worst relative error {worst:.2e}, {secs:.1} s"),
    )
}

fn determinant_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let r = 1 + i % 3;
        let a = rng.random_range(0.5..4.0);
        let x = random_spd(&mut rng, r, 0.0, 0.5);
        let got = pfq(
            &HypParams::scalar(&[a], &[], r).unwrap(),
            &x,
            &SeriesOptions::default(),
        )
        .unwrap()
        .value;
        worst = worst.max(rel(got, x.identity_minus().det().powf(-a)));
    }
    ok(
        worst <= 1e-9,
        format!("worst relative error {worst:.2e} over 20 matrices"),
    )
}

fn zonal_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0_f64;
    for r in 1..=4 {
        for k in 0..=10 {
            let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..1.5)).collect();
            let total: f64 = partitions_of_degree(k, r)
                .iter()
                .map(|m| zonal(m, &eigs).unwrap())
                .sum();
            worst_sum = worst_sum.max(rel(total, eigs.iter().sum::<f64>().powi(k as i32)));
        }
    }
    let mut worst_oracle = 0.0_f64;
    for k in 1..=5 {
        let coeffs = zonal_coefficients(k);
        for r in 1..=4 {
            let x: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..1.5)).collect();
            for p in partitions(k, r) {
                let mut parts: Vec<u32> = p.iter().map(|&v| v as u32).collect();
                parts.resize(r, 0);
                let got = zonal(&Partition::new(parts).unwrap(), &x).unwrap();
                worst_oracle = worst_oracle.max(rel(got, zonal_oracle(&coeffs[&p], &x)));
            }
        }
    }
    ok(
        worst_sum <= 1e-10 && worst_oracle <= 1e-10,
        format!("trace-power error {worst_sum:.2e}, monomial-oracle error {worst_oracle:.2e}"),
    )
}

fn beta1_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = SeriesOptions::default().with_degree_cap(200);
    let (mut worst_density, mut worst_const) = (0.0_f64, 0.0_f64);
    for r in 1..=3 {
        let h = 0.5 * (r as f64 - 1.0);
        let (a, ap) = (
            h + rng.random_range(0.5..3.0),
            h + rng.random_range(0.5..3.0),
        );
        let params = BetaHypParams::new(a, ap, a + ap, r).unwrap();
        let c = betahyp_norm_const(&params, &opts).unwrap();
        worst_const = worst_const.max(rel(c, 1.0 / beta_omega(a, ap, r).unwrap()));
        for _ in 0..50 {
            let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(0.02..0.98)).collect();
            let x = from_spectrum(&random_orthogonal(r, &mut rng), &eigs).unwrap();
            let got = betahyp_log_density(&params, &x, &opts).unwrap();
            worst_density = worst_density.max((got - beta1_log_density(a, ap, &x).unwrap()).abs());
        }
    }
    ok(
        worst_density <= 1e-8 && worst_const <= 1e-8,
        format!(
            "log-density error {worst_density:.2e} at 150 points, constant error {worst_const:.2e}"
        ),
    )
}

fn symmetry_and_moment_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = SeriesOptions::default().with_degree_cap(300);
    let lg = |s: f64, r: usize| log_gamma_omega_scalar(s, r).unwrap().log_abs;
    let (mut worst_sym, mut worst_forms, mut errors) = (0.0_f64, 0.0_f64, 0);
    for i in 0..20 {
        let r = 1 + i % 3;
        let h = 0.5 * (r as f64 - 1.0);
        let a = h + rng.random_range(1.5..3.0);
        let ap = h + rng.random_range(1.5..3.0);
        let b = h + rng.random_range(0.8..3.0);
        let t = vec![rng.random_range(0.25..1.5); r];
        let p = BetaHypParams::new(a, ap, b, r).unwrap();
        let f = |x: f64, y: f64| {
            let up = HypParams::scalar(&[x, x, b], &[x + b, a + ap], r).unwrap();
            pfq_at_identity(&up, &opts)
                .ok()
                .filter(|s| s.is_reliable())
                .map(|s| s.value.ln() - lg(y, r) - lg(x + b, r))
        };
        match (f(a, ap), f(ap, a)) {
            (Some(lhs), Some(rhs)) => worst_sym = worst_sym.max((lhs - rhs).abs()),
            _ => errors += 1,
        }
        let c1 = betahyp_norm_const(&p, &opts);
        let c2 = betahyp_norm_const(&p.swapped(), &opts);
        match (c1, c2) {
            (Ok(c1), Ok(c2)) => worst_sym = worst_sym.max(rel(c1, c2)),
            _ => errors += 1,
        }
        match (
            betahyp_moment_delta(&p, &t, &opts),
            betahyp_moment_dual(&p, &t, &opts),
        ) {
            (Ok(d), Ok(u)) => worst_forms = worst_forms.max(rel(d.value, u.value)),
            _ => errors += 1,
        }
    }
    ok(
        worst_sym <= 1e-6 && worst_forms <= 1e-6 && errors == 0,
        format!("symmetry error {worst_sym:.2e}, moment-form error {worst_forms:.2e}, {errors} unreliable evaluations"),
    )
}

fn normalization() -> Outcome {
    let start = Instant::now();
    let rep = suite(
        SuiteName::Normalization,
        BetaHypParams::new(2.0, 2.5, 3.0, 2).unwrap(),
        Vec::new(),
        200_000,
        Division::Cholesky,
    );
    let secs = start.elapsed().as_secs_f64();
    let c = &rep.checks[0];
    ok(
        rep.pass && secs < 60.0,
        format!(
            "estimate {:.6} vs {:.6}, z = {:.2}, {secs:.1} s",
            c.estimate,
            c.target,
            c.z_score.unwrap()
        ),
    )
}

fn thm31_map() -> Outcome {
    let ts = vec![vec![0.5, 0.0], vec![1.0, 0.5]];
    let generic = SuiteConfig {
        n: 100_000,
        ..SuiteConfig::new(
            SuiteName::Thm31,
            BetaHypParams::new(2.0, 2.5, 3.0, 2).unwrap(),
            ts.clone(),
        )
    };
    let no_target = match run_suite(&generic) {
        Err(e) => e.to_string(),
        Ok(rep) => return ok(rep.pass, format!("z = {}", z_list(&rep))),
    };
    let beta1 = BetaHypParams::new(2.0, 2.5, 4.5, 2).unwrap();
    let chol = suite(
        SuiteName::Thm31,
        beta1,
        ts.clone(),
        100_000,
        Division::Cholesky,
    );
    let sqrt = suite(SuiteName::Thm31, beta1, ts, 100_000, Division::SquareRoot);
    Outcome {
        pass: false,
        detail: format!(
            "(2, 2.5, 3): no closed-form target at these t ({no_target}); at b = a + a' = 4.5 the Cholesky map gives z = {}, the square-root map z = {}",
            z_list(&chol),
            z_list(&sqrt)
        ),
        known: sqrt.pass,
    }
}

fn fixed_point() -> Outcome {
    let mut details = Vec::new();
    let (mut laws, mut coupling, mut explained) = (true, true, true);
    for r in 1..=3 {
        let h = 0.5 * (r as f64 - 1.0);
        let p = BetaHypParams::new(h + 1.5, h + 2.0, h + 1.0, r).unwrap();
        let ts = vec![vec![0.5; r], vec![1.0; r]];
        let rep = suite(
            SuiteName::Thm32Fixedpoint,
            p,
            ts.clone(),
            100_000,
            Division::Cholesky,
        );
        let mut line = format!("r = {r}: z = {}", z_list(&rep));
        if !rep.pass {
            laws = false;
            let alt = suite(
                SuiteName::Thm32Fixedpoint,
                p,
                ts,
                100_000,
                Division::SquareRoot,
            );
            explained &= alt.pass;
            line.push_str(&format!(
                " (square-root division: z = {}, pass = {})",
                z_list(&alt),
                alt.pass
            ));
        }
        let stream = RngStream::new(77, r as u64);
        let cf = CfOptions::default();
        let coupled = (0..10_000u64)
            .filter(|&i| {
                betahyp_sample_traced(&p, &mut stream.at(i), &cf)
                    .is_ok_and(|d| d.iterations < cf.max_iters)
            })
            .count();
        let frac = coupled as f64 / 1e4;
        coupling &= frac >= 0.999;
        details.push(format!("{line}, coupled below 200 in {:.2}%", 100.0 * frac));
    }
    let mut detail = details.join("; ");
    if !laws {
        detail = format!("Cholesky maps move determinant moments at r >= 2: {detail}");
    }
    Outcome {
        pass: laws && coupling,
        detail,
        known: !laws && coupling && explained,
    }
}

fn beta1_suites() -> Outcome {
    let ts = |r: usize| -> Vec<Vec<f64>> {
        match r {
            1 => vec![vec![0.5], vec![1.0], vec![2.0]],
            2 => vec![vec![0.5, 0.0], vec![1.0, 0.5], vec![0.5, 0.5]],
            _ => vec![
                vec![0.5, 0.0, 0.0],
                vec![1.0, 0.5, 0.25],
                vec![0.5, 0.5, 0.5],
            ],
        }
    };
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    let mut explained = true;
    for r in 1..=3 {
        let h = 0.5 * (r as f64 - 1.0);
        let p = BetaHypParams::new(h + 1.5, h + 2.0, 2.0 * h + 3.5, r).unwrap();
        for name in [SuiteName::Prop21, SuiteName::Thm21i, SuiteName::Thm21ii] {
            let rep = suite(name, p, ts(r), 100_000, Division::Cholesky);
            if rep.pass {
                lines.push(format!(
                    "{} r = {r}: max |z| {:.2}",
                    name.as_str(),
                    worst_z(&rep)
                ));
            } else {
                let alt = suite(name, p, ts(r), 100_000, Division::SquareRoot);
                explained &= alt.pass;
                failures.push(format!(
                    "{} r = {r}: z = {} (square-root division: z = {}, pass = {})",
                    name.as_str(),
                    z_list(&rep),
                    z_list(&alt),
                    alt.pass
                ));
            }
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        lines.join("; ")
    } else {
        format!(
            "Cholesky maps break the laws when the last exponent is nonzero: {}; passing: {}",
            failures.join("; "),
            lines.join("; ")
        )
    };
    Outcome {
        pass,
        detail,
        known: !pass && explained,
    }
}

fn convergence_checker() -> Outcome {
    let (mut agree, mut disagree, mut banded) = (0, 0, 0);
    for r in 1..=2 {
        let h = 0.5 * (r as f64 - 1.0);
        for i in 0..25 {
            let margin = -0.6 + 1.2 * i as f64 / 24.0;
            let (a, b) = (h + 1.2, h + 0.9);
            let c = a + b + h + margin;
            let params = HypParams::scalar(&[a, b], &[c], r).unwrap();
            let check = converges_at_identity(&params);
            let slope = identity_layer_exponent(&params, 300).unwrap();
            let empirical = slope < -1.0;
            let distance = check.margins[..check.checked_up_to]
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v));
            if distance.abs() <= 0.05 {
                banded += 1;
            } else if empirical == check.converges {
                agree += 1;
            } else {
                disagree += 1;
            }
        }
    }
    ok(
        disagree == 0,
        format!("{agree} agree, {disagree} disagree, {banded} inside the margin band"),
    )
}

fn recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let ap: f64 = rng.random_range(1.2..6.0);
        let b = rng.random_range(1.2..6.0);
        let c = ap.max(b) + rng.random_range(0.3..4.0);
        let (l0, l1, l2) = identifiability_moments(ap, b, c);
        let rec = recover_params(l0, l1, l2).unwrap();
        let (lo, hi) = if ap <= b { (ap, b) } else { (b, ap) };
        worst = worst
            .max((rec.c - c).abs())
            .max((rec.pair.0 - lo).abs())
            .max((rec.pair.1 - hi).abs());
    }
    ok(
        worst <= 1e-6,
        format!("worst absolute error {worst:.2e} over 100 triples"),
    )
}

fn limits() -> Outcome {
    let rep = suite(
        SuiteName::Limits,
        BetaHypParams::new(2.0, 2.5, 3.0, 2).unwrap(),
        vec![vec![1.0], vec![2.0]],
        0,
        Division::Cholesky,
    );
    let worst = rep
        .checks
        .iter()
        .fold(0.0_f64, |m, c| m.max((c.estimate - c.target).abs()));
    ok(
        rep.pass,
        format!(
            "{} trajectories, worst endpoint distance {worst:.2e}",
            rep.checks.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Gauss formula", gauss_formula),
        ("1F0 determinant identity", determinant_identity),
        ("zonal normalization", zonal_normalization),
        ("beta1 reduction", beta1_reduction),
        (
            "constant symmetry and moment forms",
            symmetry_and_moment_forms,
        ),
        ("normalization by importance sampling", normalization),
        ("half-step map law", thm31_map),
        ("continued-fraction fixed point and coupling", fixed_point),
        ("beta1 map suites", beta1_suites),
        ("convergence checker", convergence_checker),
        ("parameter recovery", recovery),
        ("limit trajectories", limits),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {name} ({:.1} s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
        if !out.pass && !out.known {
            unexpected.push(i + 1);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
