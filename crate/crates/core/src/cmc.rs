//! Constant-mean-curvature gauge: the lapse is recomputed from `gamma` at every time.

use crate::background::KasnerBackground;
use crate::error::{Error, Result};
use crate::geometry::{curvature, scalar_curv_with_tau_derivative, ModeFrame};
use crate::initial::{make_data, DataKind, DataSpec};
use crate::spectral::{solution_norm, FieldState, Gauge, ModeState, C64};
use crate::system::{self, ConstraintSummary, ModeConstraints};

/// Relative slack allowed between a stored lapse and the one solved from `gamma`.
pub const LAPSE_SLACK: f64 = 1e-10;

pub use crate::system::cmc_lapse as solve_lapse_mode;

/// Fills every mode's `nu` from its `gamma`.
pub fn solve_lapse(state: &mut FieldState) {
    let tau = state.tau();
    let bg = state.bg;
    let lat = state.lattice;
    for (i, m) in state.modes.iter_mut().enumerate() {
        let f = ModeFrame::at_log(lat.mode(i), &bg, tau);
        m.nu = system::cmc_lapse(&m.gamma, &f);
    }
    state.lapse_populated = true;
}

/// `d nu / d tau` along the flow, given `d gamma / d tau`.
pub fn lapse_time_derivative(gamma: &[C64; 6], dgamma: &[C64; 6], f: &ModeFrame, bg: &KasnerBackground) -> C64 {
    let q = bg.q();
    let (r, r_tau) = scalar_curv_with_tau_derivative(gamma, f, &q);
    let r_dot = curvature(dgamma, f).scalar + r_tau;
    let mu_tau: f64 = (0..3).map(|a| -2.0 * q[a] * f.ginv[a] * f.k[a] * f.k[a]).sum();
    let den = 1.0 + f.t2 * f.mu;
    let den_tau = f.t2 * (2.0 * f.mu + mu_tau);
    -(r * (2.0 * f.t2) + r_dot * f.t2) / den + r * f.t2 * den_tau / (den * den)
}

fn check_lapse(state: &FieldState) -> Result<()> {
    if !state.lapse_populated {
        return Err(Error::MissingLapse);
    }
    let tau = state.tau();
    for (k, m) in state.iter() {
        let f = ModeFrame::at_log(k, &state.bg, tau);
        let solved = system::cmc_lapse(&m.gamma, &f);
        let diff = (solved - m.nu).norm();
        if diff > LAPSE_SLACK * (1.0 + solved.norm()) {
            return Err(Error::StaleLapse { k: k.k, diff });
        }
    }
    Ok(())
}

fn require_cmc(state: &FieldState) -> Result<()> {
    match state.gauge {
        Gauge::Cmc => Ok(()),
        _ => Err(Error::WrongGauge { expected: "cmc" }),
    }
}

/// Time derivative of every mode; `nu` slots carry `d nu / d tau` from the elliptic equation.
pub fn evolution_rhs(state: &FieldState) -> Result<Vec<ModeState>> {
    require_cmc(state)?;
    check_lapse(state)?;
    let tau = state.tau();
    Ok(state
        .iter()
        .map(|(k, m)| {
            let f = ModeFrame::at_log(k, &state.bg, tau);
            let (mut d, _) = system::mode_rhs(m, &f, &state.bg, Gauge::Cmc);
            d.nu = lapse_time_derivative(&m.gamma, &d.gamma, &f, &state.bg);
            d
        })
        .collect())
}

pub fn constraint_residuals(state: &FieldState) -> Result<Vec<ModeConstraints>> {
    require_cmc(state)?;
    check_lapse(state)?;
    let tau = state.tau();
    Ok(state
        .iter()
        .map(|(k, m)| system::mode_constraints(k, m, &ModeFrame::at_log(k, &state.bg, tau), &state.bg, Gauge::Cmc))
        .collect())
}

pub fn constraint_summary(state: &FieldState) -> Result<ConstraintSummary> {
    Ok(ConstraintSummary::from_modes(&constraint_residuals(state)?).with_solution_norm(solution_norm(state, 0)?))
}

pub fn make_initial_data(bg: &KasnerBackground, seed: u64, k_max: i32, spectrum_exponent: f64) -> Result<FieldState> {
    make_data(bg, Gauge::Cmc, &DataSpec { seed, k_max, spectrum_exponent, kind: DataKind::Random })
}
