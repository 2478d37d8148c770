//! Run configuration: JSON schema, defaults and cross-field checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::KasnerBackground;
use crate::error::{Error, Result};
use crate::initial::{DataKind, DataSpec};
use crate::integrator::IntegratorOptions;
use crate::parabolic::ParabolicParams;
use crate::spectral::Gauge;

/// Largest accepted `k_max`; the lattice has `(2 k_max + 1)^3` modes.
pub const MAX_K_MAX: i32 = 32;
/// Largest accepted Sobolev order.
pub const MAX_ORDER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackgroundConfig {
    Named(NamedBackground),
    Exponents {
        q1: f64,
        q2: f64,
        #[serde(default = "yes")]
        strict_positive: bool,
    },
    /// One-parameter family `q = (1/3 + sigma/sqrt 2, 1/3, 1/3 - sigma/sqrt 2)`.
    Anisotropy {
        sigma: f64,
        #[serde(default = "yes")]
        strict_positive: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedBackground {
    Flrw,
}

fn yes() -> bool {
    true
}

impl BackgroundConfig {
    pub fn build(&self) -> Result<KasnerBackground> {
        match *self {
            BackgroundConfig::Named(NamedBackground::Flrw) => Ok(KasnerBackground::flrw()),
            BackgroundConfig::Exponents { q1, q2, strict_positive } => {
                KasnerBackground::from_exponents(q1, q2, strict_positive)
            }
            BackgroundConfig::Anisotropy { sigma, strict_positive } => {
                KasnerBackground::with_anisotropy(sigma, strict_positive)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeKind {
    Cmc,
    Parabolic,
}

/// Kept flat so that a stray `lambda` under `cmc` is caught rather than ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub kind: GaugeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl GaugeConfig {
    pub fn cmc() -> Self {
        Self { kind: GaugeKind::Cmc, lambda: None }
    }

    pub fn parabolic(lambda: f64) -> Self {
        Self { kind: GaugeKind::Parabolic, lambda: Some(lambda) }
    }

    pub fn build(&self) -> Result<Gauge> {
        match (self.kind, self.lambda) {
            (GaugeKind::Cmc, None) => Ok(Gauge::Cmc),
            (GaugeKind::Cmc, Some(_)) => Err(Error::Config("lambda is only allowed with the parabolic gauge".into())),
            (GaugeKind::Parabolic, Some(l)) => Ok(ParabolicParams::new(l)?.gauge()),
            (GaugeKind::Parabolic, None) => Err(Error::Config("parabolic gauge requires lambda".into())),
        }
    }
}

/// Reports beyond the always-written time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Identities,
    Monotonicity,
    Comparison,
    Decay,
    Bang,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] =
        [ReportKind::Identities, ReportKind::Monotonicity, ReportKind::Comparison, ReportKind::Decay, ReportKind::Bang];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub background: BackgroundConfig,
    pub gauge: GaugeConfig,
    pub k_max: i32,
    pub seed: u64,
    #[serde(default = "default_spectrum")]
    pub spectrum_exponent: f64,
    #[serde(default)]
    pub data: DataKind,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default = "default_reports")]
    pub diagnostics: Vec<ReportKind>,
    #[serde(default = "default_sigma_star")]
    pub sigma_star: f64,
    /// Sobolev order of norms and energies.
    #[serde(rename = "N", default = "default_order")]
    pub order: u32,
    /// Window for exponent fits; defaults to `[max(t_min, 1e-7), 1e-3]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_spectrum() -> f64 {
    2.0
}

fn default_reports() -> Vec<ReportKind> {
    ReportKind::ALL.to_vec()
}

fn default_sigma_star() -> f64 {
    crate::diagnostics::SIGMA_STAR
}

fn default_order() -> u32 {
    4
}

/// Everything a run needs, after validation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub bg: KasnerBackground,
    pub gauge: Gauge,
    pub data: DataSpec,
    pub options: IntegratorOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Minimal default: FLRW, CMC, `k_max = 2`, seed 7.
    pub fn example() -> Self {
        Self::from_json(r#"{"background": "flrw", "gauge": {"kind": "cmc"}, "k_max": 2, "seed": 7}"#).unwrap()
    }

    pub fn fit_window(&self) -> (f64, f64) {
        match self.fit_window {
            Some([a, b]) => (a.min(b), a.max(b)),
            None => (self.integrator.t_min.max(1e-7), 1e-3),
        }
    }

    pub fn wants(&self, kind: ReportKind) -> bool {
        self.diagnostics.contains(&kind)
    }

    /// Schema-level and cross-field checks; every failure is a configuration error.
    pub fn resolve(&self) -> Result<Resolved> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(0..=MAX_K_MAX).contains(&self.k_max) {
            return cfg(format!("k_max must lie in 0..={MAX_K_MAX}, got {}", self.k_max));
        }
        if !self.spectrum_exponent.is_finite() {
            return cfg("spectrum_exponent must be finite".into());
        }
        if !(self.sigma_star > 0.0 && self.sigma_star.is_finite()) {
            return cfg(format!("sigma_star must be positive, got {}", self.sigma_star));
        }
        if self.order > MAX_ORDER {
            return cfg(format!("N must be at most {MAX_ORDER}, got {}", self.order));
        }
        if let Some([a, b]) = self.fit_window {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && a != b) {
                return cfg("fit_window needs two distinct positive times".into());
            }
        }
        let mut seen = self.diagnostics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.diagnostics.len() {
            return cfg("diagnostics lists a report twice".into());
        }
        let bg = self.background.build()?;
        let gauge = self.gauge.build()?;
        self.integrator.validate(1.0, gauge)?;
        if bg.a() == 0.0 && self.data != DataKind::Zero {
            return Err(Error::ZeroScalarAmplitude);
        }
        let data =
            DataSpec { seed: self.seed, k_max: self.k_max, spectrum_exponent: self.spectrum_exponent, kind: self.data };
        Ok(Resolved { bg, gauge, data, options: self.integrator })
    }
}
