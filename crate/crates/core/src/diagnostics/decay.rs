//! Norms whose small-`t` exponents are compared against the lower-derivative estimates.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::ModeFrame;
use crate::integrator::Trajectory;
use crate::spectral::{sobolev_from_mode_sq, sobolev_norm_frame, Field, FieldState};
use crate::system::mode_rhs;

use super::fits::{decay_fit, DecayFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayNorms {
    pub t: f64,
    /// `||nu||_{H^{N-1}}`.
    pub nu_n1: f64,
    /// `||nu||_{H^{N-2}}`.
    pub nu_n2: f64,
    /// `||t d_t Psi||_{H^{N-1}}`.
    pub pi_n1: f64,
    /// `||d_t K||_{H^{N-1}}`.
    pub dtk_n1: f64,
    /// `||d Psi||_{H^{N-2}}`.
    pub dpsi_n2: f64,
}

/// Expected exponent, tolerance and whether a log factor may be fitted, per quantity.
pub const DECAY_TARGETS: [(&str, f64, f64, bool); 4] = [
    ("nu_n1", 2.0 / 3.0, 0.05, false),
    ("nu_n2", 4.0 / 3.0, 0.05, true),
    ("pi_n1", 0.0, 0.03, false),
    ("dtk_n1", -1.0 / 3.0, 0.05, false),
];

pub fn decay_norms(state: &FieldState, n: u32) -> Result<DecayNorms> {
    let n1 = n.saturating_sub(1);
    let n2 = n.saturating_sub(2);
    let tau = state.tau();
    let dtk_sq: Vec<f64> = state
        .iter()
        .map(|(k, m)| {
            let f = ModeFrame::at_log(k, &state.bg, tau);
            let (d, _) = mode_rhs(m, &f, &state.bg, state.gauge);
            d.kmix.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / (state.t * state.t)
        })
        .collect();
    Ok(DecayNorms {
        t: state.t,
        nu_n1: sobolev_norm_frame(Field::Nu, n1, state),
        nu_n2: sobolev_norm_frame(Field::Nu, n2, state),
        pi_n1: sobolev_norm_frame(Field::Pi, n1, state),
        dtk_n1: sobolev_from_mode_sq(&state.lattice, &dtk_sq, n1),
        dpsi_n2: sobolev_norm_frame(Field::GradPsi, n2, state),
    })
}

impl DecayNorms {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "nu_n1" => self.nu_n1,
            "nu_n2" => self.nu_n2,
            "pi_n1" => self.pi_n1,
            "dtk_n1" => self.dtk_n1,
            "dpsi_n2" => self.dpsi_n2,
            _ => return None,
        })
    }
}

pub fn decay_series(traj: &Trajectory, n: u32) -> Result<Vec<DecayNorms>> {
    traj.states.iter().map(|s| decay_norms(s, n)).collect()
}

/// One fit per quantity over `window`; `dpsi_n2` is fitted with the log model.
pub fn decay_fits(series: &[DecayNorms], window: (f64, f64)) -> Result<Vec<DecayFit>> {
    let mut out = Vec::new();
    for (name, _, _, with_log) in DECAY_TARGETS.iter().copied().chain([("dpsi_n2", 0.0, 0.0, true)]) {
        let pts: Vec<(f64, f64)> = series.iter().map(|d| (d.t, d.get(name).unwrap())).collect();
        out.push(decay_fit(name, &pts, window, with_log)?);
    }
    Ok(out)
}

/// Minimum growth of the fitted model across the window for a log factor to count.
pub const MIN_LOG_GROWTH: f64 = 0.1;

/// `||d Psi||` grows like `a + b |ln t|`: log factor preferred, near-zero power, and the fitted
/// model increases by at least [`MIN_LOG_GROWTH`] from the top of the window to the bottom.
pub fn pure_log_growth(fit: &DecayFit) -> bool {
    match fit.log_model {
        Some((p, a, b)) => {
            let (lo, hi) = fit.window;
            let model = |t: f64| t.powf(p) * (a + b * t.ln());
            fit.log_factor_detected && p.abs() < 0.05 && b < 0.0 && model(lo) / model(hi) > 1.0 + MIN_LOG_GROWTH
        }
        None => false,
    }
}
