use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{curvature, ModeFrame};
use crate::spectral::{order_weight, FieldState, VOLUME};

use super::forms::mode_forms;

/// Default weight of the metric energy in the total.
pub const SIGMA_STAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `int |K|^2 + 1/4 |t d gamma|^2`.
    pub e_metric_sq: f64,
    /// `int (t d_t Psi)^2 + |t d Psi|^2`.
    pub e_scalar_sq: f64,
    pub e_dlapse_sq: f64,
    pub e_lapse_sq: f64,
    pub sigma_star: f64,
    pub e_total_sq: f64,
    /// Sobolev order of [`e_total_order_sq`](Self::e_total_order_sq).
    pub order: u32,
    /// Total energy summed over all derivatives up to `order`.
    pub e_total_order_sq: f64,
}

pub fn energies(state: &FieldState, sigma_star: f64, order: u32) -> Result<EnergyReport> {
    if !state.lapse_populated {
        return Err(Error::MissingLapse);
    }
    let tau = state.tau();
    let (mut em, mut es, mut ed, mut el, mut tot_n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, m) in state.iter() {
        let f = ModeFrame::at_log(k, &state.bg, tau);
        let fm = mode_forms(m, &f, &state.bg, &curvature(&m.gamma, &f));
        let metric = fm.k2() + 0.25 * fm.dgam2();
        let scalar = fm.pi2() + fm.dpsi2();
        em += metric;
        es += scalar;
        ed += fm.dnu2();
        el += fm.nu2();
        tot_n += order_weight(k, order) * (sigma_star * metric + scalar + fm.dnu2() + fm.nu2());
    }
    let (em, es, ed, el) = (em * VOLUME, es * VOLUME, ed * VOLUME, el * VOLUME);
    Ok(EnergyReport {
        t: state.t,
        e_metric_sq: em,
        e_scalar_sq: es,
        e_dlapse_sq: ed,
        e_lapse_sq: el,
        sigma_star,
        e_total_sq: sigma_star * em + es + ed + el,
        order,
        e_total_order_sq: tot_n * VOLUME,
    })
}
