use std::path::{Path, PathBuf};
use std::time::Instant;

use conehyp::dist::{
    betahyp_joint_moment, betahyp_log_norm_const, betahyp_moment, BetaHypDensity, Division,
    SamplerSpec,
};
use conehyp::hyp::{converges_at_identity, hyp_at_identity, HypParams, PreparedPfq, SeriesResult};
use conehyp::partition::partitions_of_degree;
use conehyp::special::{gpoch, VecParam};
use conehyp::verify::{run_suite, SuiteConfig, SuiteName};
use conehyp::zonal::zonal_at_identity;
use serde_json::{json, Value};

use crate::config::{missing, read_json, DistName, Format, RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::output::{document, fmt_f64, pretty, samples_csv, single_row_csv, to_value, write_text};

/// Default number of samples of `sample`.
const DEFAULT_SAMPLES: usize = 1000;
/// Default largest degree of `partitions-table`.
const DEFAULT_TABLE_DEGREE: usize = 5;

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Writes a scalar result as JSON or as a one-row CSV.
fn emit_scalar(
    command: &str,
    cfg: &RunConfig,
    value: f64,
    diagnostics: Value,
    start: Instant,
) -> CliResult<()> {
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => pretty(&document(
            command,
            cfg,
            json!({ "value": value, "diagnostics": diagnostics }),
            elapsed_ms(start),
        )),
        Format::Csv => single_row_csv(&[("value", fmt_f64(value))]),
    };
    write_text(cfg.out.as_deref(), &text)
}

fn vec_param(v: &[f64], rank: usize) -> CliResult<VecParam> {
    match v.len() {
        1 => Ok(VecParam::scalar(v[0], rank)),
        n if n == rank => Ok(VecParam::new(v.to_vec())),
        n => Err(conehyp::Error::RankMismatch {
            expected: rank,
            got: n,
        }
        .into()),
    }
}

pub fn eval_hyp(cfg: RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let r = cfg.require_rank()?;
    let opts = cfg.series_options();
    let to_params = |list: &Option<Vec<Vec<f64>>>| -> CliResult<Vec<VecParam>> {
        list.iter().flatten().map(|v| vec_param(v, r)).collect()
    };
    let params = HypParams::new(to_params(&cfg.upper)?, to_params(&cfg.lower)?, r)?;
    let at_identity = cfg.at_identity.unwrap_or(false);
    let res: SeriesResult = match (&cfg.matrix, at_identity) {
        (Some(_), true) => {
            return Err(CliError::Usage(
                "give either --matrix or --at-identity, not both".into(),
            ))
        }
        (None, false) => {
            return Err(CliError::Usage(
                "one of --matrix or --at-identity is required".into(),
            ))
        }
        (None, true) => hyp_at_identity(&params, &opts)?,
        (Some(m), false) => PreparedPfq::new(params.clone(), opts)?.eval(&m.load()?)?,
    };
    let check = converges_at_identity(&params);
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => pretty(&document(
            "eval-hyp",
            &cfg,
            json!({
                "value": res.value,
                "degree_used": res.degree_used,
                "converged": res.reliable,
                "margins": check.margins,
                "diagnostics": {
                    "method": res.diagnostics.method,
                    "error_estimate": res.error_estimate,
                    "last_layer_rel": res.last_layer_rel,
                    "partial_sum": res.diagnostics.partial_sum,
                    "extrapolation_error": res.diagnostics.extrapolation_error,
                    "warnings": res.diagnostics.warnings,
                    "converges_at_identity": check.converges,
                },
            }),
            elapsed_ms(start),
        )),
        Format::Csv => single_row_csv(&[
            ("value", fmt_f64(res.value)),
            ("degree_used", res.degree_used.to_string()),
            ("converged", res.reliable.to_string()),
        ]),
    };
    write_text(cfg.out.as_deref(), &text)?;
    Ok(if res.reliable { 0 } else { 2 })
}

pub fn density(cfg: RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let params = cfg.betahyp_params()?;
    let x = cfg
        .matrix
        .as_ref()
        .ok_or_else(|| missing("matrix"))?
        .load()?;
    let mut dens = BetaHypDensity::new(params, &cfg.series_options())?;
    let log_density = dens.log_density(&x)?;
    let value = if cfg.log.unwrap_or(false) {
        log_density
    } else {
        log_density.exp()
    };
    let diag = json!({ "log_density": log_density, "log_norm_const": dens.log_norm_const() });
    emit_scalar("density", &cfg, value, diag, start)?;
    Ok(0)
}

pub fn constant(cfg: RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let params = cfg.betahyp_params()?;
    let log_c = betahyp_log_norm_const(&params, &cfg.series_options())?;
    emit_scalar(
        "constant",
        &cfg,
        log_c.exp(),
        json!({ "log_value": log_c }),
        start,
    )?;
    Ok(0)
}

pub fn moment(cfg: RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let params = cfg.betahyp_params()?;
    let t = cfg.t.as_deref().ok_or_else(|| missing("t"))?;
    let opts = cfg.series_options();
    let m = match &cfg.s {
        Some(s) => betahyp_joint_moment(&params, t, s, &opts)?,
        None => betahyp_moment(&params, t, &opts)?,
    };
    let diag = json!({ "form": m.form, "error_estimate": m.error_estimate });
    emit_scalar("moment", &cfg, m.value, diag, start)?;
    Ok(0)
}

fn sampler_spec(cfg: &RunConfig) -> CliResult<SamplerSpec> {
    let rank = cfg.require_rank()?;
    let dist = cfg.dist.ok_or_else(|| missing("dist"))?;
    Ok(match dist {
        DistName::Wishart => SamplerSpec::Wishart {
            p: cfg.param_list(1)?[0],
            rank,
        },
        DistName::Beta1 => {
            let p = cfg.param_list(2)?;
            SamplerSpec::Beta1 {
                p: p[0],
                q: p[1],
                rank,
            }
        }
        DistName::Beta2 => {
            let p = cfg.param_list(2)?;
            SamplerSpec::Beta2 {
                p: p[0],
                q: p[1],
                rank,
                division: cfg.division.unwrap_or_default(),
            }
        }
        DistName::Betahyp => SamplerSpec::BetaHyp {
            params: cfg.betahyp_params()?,
            cf: cfg.cf_options(),
        },
    })
}

pub fn sample(mut cfg: RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    cfg.resolve_seed()?;
    let spec = sampler_spec(&cfg)?;
    let n = *cfg.n.get_or_insert(DEFAULT_SAMPLES);
    let seed = cfg.seed.unwrap_or(0);
    let samples = spec.sample_batch(n, seed)?;
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            write_text(cfg.out.as_deref(), &samples_csv(spec.rank(), &samples))?;
            if let Some(out) = &cfg.out {
                // the resolved configuration goes next to the CSV file
                let echo = document(
                    "sample",
                    &cfg,
                    json!({ "sampler": spec, "n": n }),
                    elapsed_ms(start),
                );
                write_text(Some(&sidecar(out)), &pretty(&echo))?;
            }
        }
        Format::Json => {
            let rows: Vec<Vec<Vec<f64>>> = samples.iter().map(|x| x.rows()).collect();
            let doc = document(
                "sample",
                &cfg,
                json!({ "sampler": spec, "samples": rows }),
                elapsed_ms(start),
            );
            write_text(cfg.out.as_deref(), &pretty(&doc))?;
        }
    }
    Ok(0)
}

/// `samples.csv` -> `samples.csv.json`.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub struct VerifyRequest {
    pub suite: Option<String>,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub division: Option<Division>,
}

/// Suite configurations of a request: the file, with `suite`, `seed`, `n`
/// and `division` replaced by flags, and the seed taken from the environment
/// when neither gives one.
fn suite_configs(req: &VerifyRequest) -> CliResult<Vec<SuiteConfig>> {
    let mut base: Value = read_json(&req.config)?;
    let obj = base.as_object_mut().ok_or_else(|| {
        conehyp::Error::ConfigError("suite configuration must be a JSON object".into())
    })?;
    if let Some(seed) = req.seed {
        obj.insert("seed".into(), json!(seed));
    } else if !obj.contains_key("seed") {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v.trim().parse().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
            })?;
            obj.insert("seed".into(), json!(seed));
        }
    }
    if let Some(n) = req.n {
        obj.insert("n".into(), json!(n));
    }
    if let Some(d) = req.division {
        obj.insert("division".into(), to_value(&d));
    }
    let names: Vec<Option<SuiteName>> = match req.suite.as_deref() {
        Some("all") => SuiteName::ALL.into_iter().map(Some).collect(),
        Some(name) => vec![Some(name.parse()?)],
        None => vec![None],
    };
    names
        .into_iter()
        .map(|name| {
            let mut v = base.clone();
            if let Some(name) = name {
                v["suite"] = to_value(&name);
            }
            serde_json::from_value(v).map_err(|e| conehyp::Error::ConfigError(e.to_string()).into())
        })
        .collect()
}

pub fn verify(req: VerifyRequest) -> CliResult<i32> {
    let configs = suite_configs(&req)?;
    let mut reports = Vec::new();
    let mut pass = true;
    for cfg in &configs {
        let rep = run_suite(cfg)?;
        pass &= rep.pass;
        let mut v = to_value(&rep);
        v["config"] = to_value(cfg);
        reports.push(v);
    }
    let doc = if reports.len() == 1 {
        reports.pop().expect("one report")
    } else {
        json!({ "suites": reports, "pass": pass })
    };
    write_text(req.out.as_deref(), &pretty(&doc))?;
    Ok(if pass { 0 } else { 1 })
}

pub fn partitions_table(cfg: RunConfig) -> CliResult<i32> {
    let a = cfg.a.ok_or_else(|| missing("a"))?;
    let r = cfg.require_rank()?;
    let max_degree = cfg.max_degree.unwrap_or(DEFAULT_TABLE_DEGREE);
    let av = VecParam::scalar(a, r);
    let mut rows = Vec::new();
    for k in 0..=max_degree {
        for m in partitions_of_degree(k, r) {
            rows.push((
                k,
                m.parts().to_vec(),
                gpoch(&av, &m)?,
                zonal_at_identity(&m),
            ));
        }
    }
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("degree,partition,gpoch,zonal_at_identity\n");
            for (k, parts, g, z) in &rows {
                let p: Vec<String> = parts.iter().map(u32::to_string).collect();
                s.push_str(&format!(
                    "{k},{},{},{}\n",
                    p.join(" "),
                    fmt_f64(*g),
                    fmt_f64(*z)
                ));
            }
            s
        }
        Format::Json => {
            let table: Vec<Value> = rows
                .iter()
                .map(|(k, parts, g, z)| json!({ "degree": k, "partition": parts, "gpoch": g, "zonal_at_identity": z }))
                .collect();
            pretty(&document(
                "partitions-table",
                &cfg,
                json!({ "rows": table }),
                0,
            ))
        }
    };
    write_text(cfg.out.as_deref(), &text)?;
    Ok(0)
}
