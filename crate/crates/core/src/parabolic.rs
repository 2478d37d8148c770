//! Parabolic gauge: the lapse obeys `d nu / d tau = lambda ((t^2 mu + 1 - 1/lambda) nu + t^2 R)`.

use serde::{Deserialize, Serialize};

use crate::background::KasnerBackground;
use crate::error::{Error, Result};
use crate::geometry::{curvature, ModeFrame};
use crate::initial::{make_data, DataKind, DataSpec};
use crate::spectral::{solution_norm, FieldState, Gauge, ModeState, C64};
use crate::system::{self, ConstraintSummary, ModeConstraints};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicParams {
    pub lambda: f64,
    /// `lambda > 1`, where `1 - 1/lambda > 0` and the lapse energy is past-favorable.
    pub monotone_regime: bool,
}

impl ParabolicParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(Self { lambda, monotone_regime: lambda > 1.0 })
    }

    pub fn gauge(&self) -> Gauge {
        Gauge::Parabolic { lambda: self.lambda }
    }
}

/// `d nu / d tau` for one mode.
pub fn lapse_rhs(m: &ModeState, f: &ModeFrame, lambda: f64) -> C64 {
    let r = curvature(&m.gamma, f).scalar;
    let il = 1.0 / lambda;
    (m.nu * (f.t2 * f.mu + 1.0 - il) + r * f.t2) * lambda
}

/// `int_{tau0}^{tau1} (t^2 mu + 1 - 1/lambda) dtau`, the exponent of the lapse propagator.
pub fn self_coupling_integral(k: [f64; 3], q: &[f64; 3], il: f64, tau0: f64, tau1: f64) -> f64 {
    let mut c = (1.0 - il) * (tau1 - tau0);
    for a in 0..3 {
        if k[a] == 0.0 {
            continue;
        }
        let e = 2.0 - 2.0 * q[a];
        let k2 = k[a] * k[a];
        if e.abs() < 1e-12 {
            c += k2 * (tau1 - tau0);
        } else {
            // (exp(e tau1) - exp(e tau0)) / e, written to avoid cancellation.
            c += k2 * (e * tau0).exp() * (e * (tau1 - tau0)).exp_m1() / e;
        }
    }
    c
}

fn require_parabolic(state: &FieldState) -> Result<f64> {
    if !state.lapse_populated {
        return Err(Error::MissingLapse);
    }
    state.gauge.lambda().ok_or(Error::WrongGauge { expected: "parabolic" })
}

pub fn evolution_rhs(state: &FieldState) -> Result<Vec<ModeState>> {
    require_parabolic(state)?;
    let tau = state.tau();
    Ok(state
        .iter()
        .map(|(k, m)| system::mode_rhs(m, &ModeFrame::at_log(k, &state.bg, tau), &state.bg, state.gauge).0)
        .collect())
}

pub fn constraint_residuals(state: &FieldState) -> Result<Vec<ModeConstraints>> {
    require_parabolic(state)?;
    let tau = state.tau();
    Ok(state
        .iter()
        .map(|(k, m)| system::mode_constraints(k, m, &ModeFrame::at_log(k, &state.bg, tau), &state.bg, state.gauge))
        .collect())
}

pub fn constraint_summary(state: &FieldState) -> Result<ConstraintSummary> {
    Ok(ConstraintSummary::from_modes(&constraint_residuals(state)?).with_solution_norm(solution_norm(state, 0)?))
}

pub fn make_initial_data(
    bg: &KasnerBackground,
    params: &ParabolicParams,
    seed: u64,
    k_max: i32,
    spectrum_exponent: f64,
) -> Result<FieldState> {
    make_data(bg, params.gauge(), &DataSpec { seed, k_max, spectrum_exponent, kind: DataKind::Random })
}

/// Homogeneous lapse solution `nu(t) = nu(1) t^(lambda - 1)` when every other field vanishes.
pub fn homogeneous_lapse(nu1: C64, lambda: f64, t: f64) -> C64 {
    nu1 * t.powf(lambda - 1.0)
}
