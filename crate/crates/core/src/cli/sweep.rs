//! Parameter sweeps: one run directory per value plus a `summary.json`.

use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::{bang_limits, decay_fits, decay_series, energy_growth_fit};
use crate::error::{Error, Result};

use super::config::{BackgroundConfig, GaugeConfig, RunConfig};
use super::run::{execute, write_artifacts, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    Lambda,
    Kmax,
    SigmaStar,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepParam::Sigma),
            "lambda" => Ok(SweepParam::Lambda),
            "kmax" | "k_max" => Ok(SweepParam::Kmax),
            "sigma_star" => Ok(SweepParam::SigmaStar),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}` (sigma, lambda, kmax, sigma_star)"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Lambda => "lambda",
            SweepParam::Kmax => "kmax",
            SweepParam::SigmaStar => "sigma_star",
        }
    }

    /// Copy of `base` with the parameter set to `value`; the output directory is left to the caller.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let bad = || Error::Config(format!("invalid {} value `{value}`", self.name()));
        let mut cfg = base.clone();
        match self {
            SweepParam::Kmax => cfg.k_max = value.parse().map_err(|_| bad())?,
            _ => {
                let x: f64 = value.parse().map_err(|_| bad())?;
                match self {
                    SweepParam::Sigma => {
                        let strict_positive = match base.background {
                            BackgroundConfig::Exponents { strict_positive, .. }
                            | BackgroundConfig::Anisotropy { strict_positive, .. } => strict_positive,
                            BackgroundConfig::Named(_) => true,
                        };
                        cfg.background = BackgroundConfig::Anisotropy { sigma: x, strict_positive };
                    }
                    SweepParam::Lambda => cfg.gauge = GaugeConfig::parabolic(x),
                    SweepParam::SigmaStar => cfg.sigma_star = x,
                    SweepParam::Kmax => unreachable!(),
                }
            }
        }
        cfg.resolve()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub value: String,
    pub dir: PathBuf,
    pub t: f64,
    pub sigma: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub exponents: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub entries: Vec<SweepEntry>,
}

fn exponents(cfg: &RunConfig, traj: &crate::integrator::Trajectory) -> Result<Value> {
    let decay = match decay_series(traj, cfg.order).and_then(|s| decay_fits(&s, cfg.fit_window())) {
        Ok(fits) => fits.into_iter().map(|f| (f.quantity.clone(), json!(f.exponent))).collect(),
        Err(Error::InsufficientSpan { .. }) => serde_json::Map::new(),
        Err(e) => return Err(e),
    };
    let g = energy_growth_fit(traj, cfg.sigma_star, cfg.order)?;
    let rates = match bang_limits(traj) {
        Ok(b) => b.rates.into_iter().map(|r| (r.quantity, json!(r.rate))).collect(),
        Err(Error::InsufficientDepth { .. }) => serde_json::Map::new(),
        Err(e) => return Err(e),
    };
    Ok(json!({
        "decay": decay,
        "energy_holdout": g.exponent_holdout,
        "energy_c_sigma": g.c_sigma,
        "energy_bound_holds": g.bound_holds,
        "cauchy_rates": rates,
    }))
}

/// Runs every value (in parallel), writes `<dir>/<param>_<value>/` and `<dir>/summary.json`.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[String]) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let root = base.output.dir.clone();
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|v| {
            let mut c = param.apply(base, v)?;
            c.output.dir = root.join(format!("{}_{v}", param.name()));
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<SweepEntry> = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| {
            let out = execute(cfg)?;
            write_artifacts(&out, &cfg.output.dir)?;
            let p = out.provenance();
            Ok(SweepEntry {
                value: v.clone(),
                dir: cfg.output.dir.clone(),
                t: out.trajectory.t_end(),
                sigma: p.sigma,
                lambda: p.lambda,
                seed: p.seed,
                exponents: exponents(cfg, &out.trajectory)?,
            })
        })
        .collect::<Result<_>>()?;
    let summary = SweepSummary { param, entries };
    write_json(&root.join("summary.json"), &summary)?;
    Ok(summary)
}
