//! Limits of rescaled fields as `t -> 0`, and the velocity-dominance indicator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModeFrame;
use crate::integrator::Trajectory;
use crate::spectral::{FieldState, C64, SYM, VOLUME};

use super::fits::log_slope;

/// Deepest allowed final time for limit extraction.
pub const MAX_T_END: f64 = 1e-4;
/// Cauchy differences below this fraction of the field norm count as converged to roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;
/// Fitted rates at or below this are not used for extrapolation.
pub const MIN_EXTRAPOLATION_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyRate {
    pub quantity: String,
    /// Fitted exponent `p` of `||X(t_j) - X(t_{j+1})|| ~ t^p`; `None` when differences sit at roundoff.
    pub rate: Option<f64>,
    pub last_difference: f64,
    pub norm: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangLimits {
    /// The two smallest checkpoints used for extrapolation.
    pub t_used: (f64, f64),
    /// Per-mode limit of `K^i_j`, in lattice order.
    pub k_bang: Vec<[[C64; 3]; 3]>,
    /// Per-mode limit of `t d_t Psi`.
    pub psi_bang: Vec<C64>,
    /// Per-mode limit of the rescaled metric combination, symmetric storage.
    pub h_bang: Vec<[C64; 6]>,
    pub rates: Vec<CauchyRate>,
    pub max_trace_k_bang: f64,
    pub k_bang_norm: f64,
}

impl BangLimits {
    pub fn rate(&self, quantity: &str) -> Option<&CauchyRate> {
        self.rates.iter().find(|r| r.quantity == quantity)
    }
}

/// Flattened per-checkpoint sample of one quantity.
type Sample = Vec<C64>;

fn sample_k(s: &FieldState) -> Sample {
    s.modes.iter().flat_map(|m| m.kmix.iter().flatten().copied()).collect()
}

fn sample_psi(s: &FieldState) -> Sample {
    let a = s.bg.a();
    s.modes.iter().map(|m| m.pi(a)).collect()
}

/// `t^{-2 q_j} gamma_ij` plus the correction that removes the drift driven by `K_B`.
fn sample_metric(s: &FieldState, k_bang: &[[[C64; 3]; 3]]) -> Sample {
    let q = s.bg.q();
    let tau = s.tau();
    let mut out = Vec::with_capacity(6 * s.modes.len());
    for (m, kb) in s.modes.iter().zip(k_bang) {
        for &(i, j) in SYM.iter() {
            let g = m.gamma_at(i, j);
            let d = q[i] - q[j];
            let v = if d.abs() < 1e-12 {
                g * (-2.0 * q[i] * tau).exp() + (kb[i][j] + kb[j][i]) * tau
            } else {
                let (hi, lo) = if d > 0.0 { (i, j) } else { (j, i) };
                let d = d.abs();
                g * (-2.0 * q[lo] * tau).exp() + kb[hi][lo] * ((2.0 * d * tau).exp() / d)
            };
            out.push(v);
        }
    }
    out
}

fn norm(x: &[C64]) -> f64 {
    (VOLUME * x.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

fn diff_norm(x: &[C64], y: &[C64]) -> f64 {
    (VOLUME * x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()).sqrt()
}

/// Cauchy rate on the second half of the run, then Richardson extrapolation from the two
/// smallest checkpoints.
fn extrapolate(name: &str, times: &[f64], samples: &[Sample], t_mid: f64) -> (Sample, CauchyRate) {
    let n = samples.len();
    let x1 = &samples[n - 1];
    let x2 = &samples[n - 2];
    let scale = samples.iter().map(|s| norm(s)).fold(0.0, f64::max);
    let diffs: Vec<(f64, f64)> = (0..n - 1)
        .filter(|&j| times[j + 1] <= t_mid)
        .map(|j| (times[j + 1], diff_norm(&samples[j], &samples[j + 1])))
        .collect();
    let last = diff_norm(x1, x2);
    let max_diff = diffs.iter().map(|d| d.1).fold(0.0, f64::max);
    let rate = if max_diff <= ROUNDOFF_FLOOR * scale || diffs.len() < 2 { None } else { log_slope(&diffs).ok() };
    let mut out = x1.clone();
    let mut extrapolated = false;
    if let Some(p) = rate.filter(|&p| p > MIN_EXTRAPOLATION_RATE) {
        let (t1, t2) = (times[n - 1], times[n - 2]);
        let w = t1.powf(p) / (t1.powf(p) - t2.powf(p));
        for (o, (a, b)) in out.iter_mut().zip(x1.iter().zip(x2)) {
            *o = a - (a - b) * w;
        }
        extrapolated = true;
    }
    let report = CauchyRate { quantity: name.to_string(), rate, last_difference: last, norm: scale, extrapolated };
    (out, report)
}

pub fn bang_limits(traj: &Trajectory) -> Result<BangLimits> {
    let t_end = traj.t_end();
    if t_end > MAX_T_END || traj.states.len() < 3 {
        return Err(Error::InsufficientDepth { t_min: t_end });
    }
    let n = traj.states.len();
    let times = &traj.times;
    let t_mid = (traj.t_start() * t_end).sqrt();

    let ks: Vec<Sample> = traj.states.iter().map(sample_k).collect();
    let (kb_flat, k_rate) = extrapolate("K", times, &ks, t_mid);
    let k_bang: Vec<[[C64; 3]; 3]> =
        kb_flat.chunks_exact(9).map(|c| std::array::from_fn(|i| std::array::from_fn(|j| c[3 * i + j]))).collect();

    let ps: Vec<Sample> = traj.states.iter().map(sample_psi).collect();
    let (psi_bang, psi_rate) = extrapolate("t_dt_psi", times, &ps, t_mid);

    let hs: Vec<Sample> = traj.states.iter().map(|s| sample_metric(s, &k_bang)).collect();
    let (hb_flat, h_rate) = extrapolate("metric", times, &hs, t_mid);
    let h_bang = hb_flat.chunks_exact(6).map(|c| std::array::from_fn(|i| c[i])).collect();

    let max_trace_k_bang = k_bang.iter().map(|k| (k[0][0] + k[1][1] + k[2][2]).norm()).fold(0.0, f64::max);
    Ok(BangLimits {
        t_used: (times[n - 1], times[n - 2]),
        k_bang_norm: norm(&kb_flat),
        k_bang,
        psi_bang,
        h_bang,
        rates: vec![k_rate, psi_rate, h_rate],
        max_trace_k_bang,
    })
}

/// `||t^2 g^{ab} k_a k_b Psi|| / ||t d_t Psi||`; spatial against time-derivative terms of the wave equation.
pub fn vtd_ratio(state: &FieldState) -> f64 {
    let a = state.bg.a();
    let tau = state.tau();
    let (mut num, mut den) = (0.0, 0.0);
    for (k, m) in state.iter() {
        let f = ModeFrame::at_log(k, &state.bg, tau);
        num += (m.psi * (f.t2 * f.mu)).norm_sqr();
        den += m.pi(a).norm_sqr();
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::KasnerBackground;
    use crate::initial::{make_data, DataKind, DataSpec};
    use crate::integrator::{integrate, IntegratorOptions};
    use crate::spectral::{Gauge, ModeIndex};

    fn opts(t_min: f64) -> IntegratorOptions {
        IntegratorOptions { t_min, rel_tol: 1e-12, ..Default::default() }
    }

    #[test]
    fn requires_depth() {
        let s = FieldState::zero(KasnerBackground::flrw(), Gauge::Cmc, 1, 1.0);
        let traj = integrate(&s, &opts(1e-3)).unwrap();
        assert!(matches!(bang_limits(&traj), Err(Error::InsufficientDepth { .. })));
    }

    #[test]
    fn zero_run() {
        let s = FieldState::zero(KasnerBackground::flrw(), Gauge::Cmc, 1, 1.0);
        let traj = integrate(&s, &opts(1e-6)).unwrap();
        let b = bang_limits(&traj).unwrap();
        assert_eq!(b.k_bang_norm, 0.0);
        assert!(b.psi_bang.iter().all(|z| *z == C64::default()));
        assert!(b.h_bang.iter().flatten().all(|z| *z == C64::default()));
        assert!(b.rates.iter().all(|r| r.rate.is_none()));
    }

    #[test]
    fn homogeneous_limits() {
        for sigma in [0.0, 0.2] {
            let bg = KasnerBackground::with_anisotropy(sigma, true).unwrap();
            let spec = DataSpec { kind: DataKind::Homogeneous, ..DataSpec::random(4, 1) };
            let s = make_data(&bg, Gauge::Cmc, &spec).unwrap();
            let traj = integrate(&s, &opts(1e-6)).unwrap();
            let b = bang_limits(&traj).unwrap();
            let z = s.lattice.index_of(ModeIndex::new([0, 0, 0])).unwrap();
            let m0 = &s.modes[z];
            let scale: f64 = m0.kmix.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((b.k_bang[z][i][j] - m0.kmix[i][j]).norm() <= 1e-10 * scale);
                }
            }
            assert!((b.psi_bang[z] - m0.chi).norm() <= 1e-10 * m0.chi.norm());
            assert!(b.max_trace_k_bang <= 1e-10 * scale);
        }
    }

    #[test]
    fn vtd_of_homogeneous_and_zero() {
        let s = FieldState::zero(KasnerBackground::flrw(), Gauge::Cmc, 1, 1.0);
        assert_eq!(vtd_ratio(&s), 0.0);
        let bg = KasnerBackground::flrw();
        let spec = DataSpec { kind: DataKind::Homogeneous, ..DataSpec::random(4, 1) };
        assert_eq!(vtd_ratio(&make_data(&bg, Gauge::Cmc, &spec).unwrap()), 0.0);
    }
}
