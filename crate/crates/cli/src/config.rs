//! Run configuration: JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use conehyp::cone::SymMatrix;
use conehyp::dist::{BetaHypParams, CfOptions, Division};
use conehyp::hyp::SeriesOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable read when no seed is given.
pub const SEED_ENV: &str = "CONEHYP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DistName {
    Wishart,
    Beta1,
    Beta2,
    Betahyp,
}

/// A matrix given inline as rows or as the path of a JSON file holding the
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    Path(PathBuf),
}

impl MatrixSource {
    pub fn load(&self) -> CliResult<SymMatrix> {
        let rows = match self {
            MatrixSource::Rows(rows) => rows.clone(),
            MatrixSource::Path(path) => read_json(path)?,
        };
        Ok(SymMatrix::from_rows(&rows)?)
    }
}

/// Every setting of a run. Fields left out of the file and the flags keep
/// their defaults; flags override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_identity: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub division: Option<Division>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf: Option<CfOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesOptions>,
    /// Scalar `a` of `partitions-table`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        read_json(path)
    }

    /// `self` with every field set in `flags` replaced.
    pub fn merged(mut self, flags: RunConfig) -> Self {
        overlay!(self, flags; rank, params, upper, lower, matrix, at_identity, log, t, s, dist, n, seed,
            division, cf, series, a, max_degree, out, format);
        self
    }

    /// Seed from the config, else from the environment, else zero.
    pub fn resolve_seed(&mut self) -> CliResult<()> {
        if self.seed.is_none() {
            self.seed = Some(match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
                })?,
                Err(_) => 0,
            });
        }
        Ok(())
    }

    pub fn require_rank(&self) -> CliResult<usize> {
        match self.rank {
            Some(r) if r >= 1 => Ok(r),
            Some(r) => Err(CliError::Usage(format!("rank >= 1 violated: rank = {r}"))),
            None => Err(missing("rank")),
        }
    }

    pub fn series_options(&self) -> SeriesOptions {
        self.series.unwrap_or_default()
    }

    pub fn cf_options(&self) -> CfOptions {
        let cf = self.cf.unwrap_or_default();
        CfOptions {
            division: self.division.unwrap_or(cf.division),
            ..cf
        }
    }

    /// `(a, a', b)` at the configured rank.
    pub fn betahyp_params(&self) -> CliResult<BetaHypParams> {
        let p = self.param_list(3)?;
        Ok(BetaHypParams::new(p[0], p[1], p[2], self.require_rank()?)?)
    }

    /// The `params` list, which must have `len` entries.
    pub fn param_list(&self, len: usize) -> CliResult<&[f64]> {
        let p = self.params.as_deref().ok_or_else(|| missing("params"))?;
        if p.len() != len {
            return Err(CliError::Usage(format!(
                "params must have {len} entries, got {}",
                p.len()
            )));
        }
        Ok(p)
    }
}

pub fn missing(name: &str) -> CliError {
    CliError::Usage(format!("missing required setting `{name}`"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Comma-separated scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

/// Comma-separated parameters, each a scalar or an r-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamList(pub Vec<Vec<f64>>);

pub fn parse_list(s: &str) -> Result<FloatList, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {v:?}"))
        })
        .collect::<Result<_, _>>()
        .map(FloatList)
}

/// Comma-separated parameters, each a scalar or an r-vector with components
/// joined by `:`.
pub fn parse_param_list(s: &str) -> Result<ParamList, String> {
    if s.trim().is_empty() {
        return Ok(ParamList(Vec::new()));
    }
    s.split(',')
        .map(|p| {
            p.split(':')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("not a number: {v:?}"))
                })
                .collect()
        })
        .collect::<Result<_, _>>()
        .map(ParamList)
}
