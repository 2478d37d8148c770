//! Energy identities along trajectories: boundary values at `t` and at the initial time
//! against the accumulated spacetime integrals.
//!
//! Every identity has the form `L(t) = L(t0) - int_tau^{tau0} I dtau'`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::spectral::{solution_norm, Gauge};

use super::energies::energies;
use super::forms::{form_index, Forms, FORM_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParabolicIdentity {
    ScalarLapse,
    Metric,
    LapseEnergyEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub id: String,
    pub t: f64,
    pub lhs_value: f64,
    pub rhs_value: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub terms: BTreeMap<String, f64>,
}

fn eval(fm: &Forms, combo: &[(&str, f64)]) -> Result<(f64, f64)> {
    let mut v = 0.0;
    let mut s = 0.0;
    for (name, c) in combo {
        let x = fm.get(name).ok_or_else(|| Error::MissingAccumulator(name.to_string()))?;
        v += c * x;
        s += (c * x).abs();
    }
    Ok((v, s))
}

fn build(
    id: &str,
    traj: &Trajectory,
    t: f64,
    boundary: &[(&str, f64)],
    integrand: &[(&str, f64)],
) -> Result<IdentityResidual> {
    let idx = traj.index_of(t)?;
    let at_t = traj.spatial_forms(idx);
    let at_0 = traj.spatial_forms(0);
    let acc = &traj.integrals[idx];
    let (l_t, s_t) = eval(&at_t, boundary)?;
    let (l_0, s_0) = eval(&at_0, boundary)?;
    let (j, s_j) = eval(acc, integrand)?;
    let mut terms = BTreeMap::new();
    for (name, c) in integrand {
        terms.insert(format!("int_{name}"), c * acc.0[form_index(name).unwrap()]);
    }
    for (name, c) in boundary {
        terms.insert(format!("{name}(t)"), c * at_t.0[form_index(name).unwrap()]);
        terms.insert(format!("{name}(t0)"), c * at_0.0[form_index(name).unwrap()]);
    }
    let lhs = l_t;
    let rhs = l_0 - j;
    let scale = s_t + s_0 + s_j;
    Ok(IdentityResidual {
        id: id.to_string(),
        t,
        lhs_value: lhs,
        rhs_value: rhs,
        residual: lhs - rhs,
        relative_residual: if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 },
        terms,
    })
}

fn require_cmc(traj: &Trajectory) -> Result<()> {
    match traj.gauge {
        Gauge::Cmc => Ok(()),
        _ => Err(Error::WrongGauge { expected: "cmc" }),
    }
}

/// Returns `1/lambda`.
fn require_parabolic(traj: &Trajectory) -> Result<f64> {
    traj.gauge.lambda().map(|l| 1.0 / l).ok_or(Error::WrongGauge { expected: "parabolic" })
}

/// CMC identity for the scalar field with lapse control.
pub fn identity_scalar_lapse(traj: &Trajectory, t: f64) -> Result<IdentityResidual> {
    require_cmc(traj)?;
    let a = traj.bg.a();
    let boundary = [("pi2", 1.0), ("dpsi2", 1.0), ("dnu2", 1.0), ("nu2", 1.0 - a * a), ("c1", 1.0)];
    let integrand = [("dpsi2", 2.0), ("c2", 2.0), ("dnu2", 1.0), ("q1", a), ("nu2", 1.0), ("c1", 1.0)];
    build("scalar-lapse", traj, t, &boundary, &integrand)
}

/// CMC identity for the metric variables.
pub fn identity_metric(traj: &Trajectory, t: f64) -> Result<IdentityResidual> {
    require_cmc(traj)?;
    let a = traj.bg.a();
    let boundary = [("k2", 1.0), ("dgam2", 0.25)];
    let integrand =
        [("dgam2", 0.5), ("c3", 0.5), ("c4", -1.0), ("c5", -1.0), ("c6", -1.0), ("c7", -1.0), ("q1", -a), ("q3", a)];
    build("metric", traj, t, &boundary, &integrand)
}

/// Parabolic-gauge identities; the lapse estimate is checked as an inequality with the
/// constant fitted by [`lapse_estimate_check`].
pub fn identity_parabolic(traj: &Trajectory, t: f64, which: ParabolicIdentity) -> Result<IdentityResidual> {
    let il = require_parabolic(traj)?;
    let a = traj.bg.a();
    match which {
        ParabolicIdentity::ScalarLapse => {
            let boundary = [("pi2", 1.0), ("dpsi2", 1.0), ("nu2", a * a + 0.5 * il * (1.0 - il)), ("q4", -a)];
            let integrand = [
                ("dpsi2", 2.0),
                ("c2", 2.0),
                ("dnu2", 1.0 - il),
                ("nu2", (1.0 - il) * (1.0 + il / 3.0)),
                ("q1", a),
                ("c1", 1.0 - il),
            ];
            build("parabolic-scalar-lapse", traj, t, &boundary, &integrand)
        }
        ParabolicIdentity::Metric => {
            let boundary = [("k2", 1.0), ("dgam2", 0.25)];
            let integrand = [
                ("dgam2", 0.5),
                ("c3", 0.5),
                ("dnu2", 2.0 * il),
                ("c4", -1.0),
                ("c5", -1.0),
                ("c6", -1.0),
                ("c7", -(1.0 - il)),
                ("q1", -a),
                ("q3", a),
                ("q3nu", -il),
                ("nu2", 2.0 / 3.0 * il * (1.0 - il)),
            ];
            build("parabolic-metric", traj, t, &boundary, &integrand)
        }
        ParabolicIdentity::LapseEnergyEstimate => {
            let check = lapse_estimate_check(traj)?;
            let idx = traj.index_of(t)?;
            let p = &check.points[idx];
            let mut terms = BTreeMap::new();
            terms.insert("explicit".to_string(), p.explicit);
            terms.insert("controlled_integral".to_string(), p.controlled);
            terms.insert("c_fit".to_string(), check.c_fit);
            let rhs = p.explicit + check.c_fit * p.controlled;
            let scale = p.lhs.abs() + p.explicit.abs() + (check.c_fit * p.controlled).abs();
            Ok(IdentityResidual {
                id: "parabolic-lapse-estimate".to_string(),
                t,
                lhs_value: p.lhs,
                rhs_value: rhs,
                residual: p.lhs - rhs,
                relative_residual: if scale > 0.0 { (p.lhs - rhs).abs() / scale } else { 0.0 },
                terms,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapsePoint {
    pub t: f64,
    /// `il |t d nu|^2 (t)`.
    pub lhs: f64,
    /// Terms with explicit coefficients.
    pub explicit: f64,
    /// `int (k_hat:K)^2 + pi^2 + nu^2`, multiplied by the fitted constant.
    pub controlled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapseEstimateCheck {
    pub t_mid: f64,
    pub c_fit: f64,
    /// Largest `(lhs - explicit - c_fit controlled) / scale` on the hold-out window.
    pub holdout_max_violation: f64,
    pub passed: bool,
    pub points: Vec<LapsePoint>,
}

/// Relative slack for inequality checks on the hold-out window.
pub const HOLDOUT_SLACK: f64 = 1e-9;

/// Geometric midpoint of a trajectory's time span.
pub fn t_mid(traj: &Trajectory) -> f64 {
    (traj.t_start() * traj.t_end()).sqrt()
}

pub fn lapse_estimate_check(traj: &Trajectory) -> Result<LapseEstimateCheck> {
    let il = require_parabolic(traj)?;
    let sigma = traj.bg.sigma();
    let d0 = traj.spatial_forms(0).dnu2();
    let points: Vec<LapsePoint> = (0..traj.times.len())
        .map(|i| {
            let fm = traj.spatial_forms(i);
            let acc = &traj.integrals[i];
            LapsePoint {
                t: traj.times[i],
                lhs: il * fm.dnu2(),
                explicit: il * d0 - acc.d2nu2() - il * (4.0 / 3.0 - 2.0 * sigma) * acc.dnu2(),
                controlled: acc.khk2() + acc.pi2() + acc.nu2(),
            }
        })
        .collect();
    let tm = t_mid(traj);
    let mut c_fit: f64 = 0.0;
    for p in points.iter().filter(|p| p.t >= tm) {
        if p.lhs > p.explicit && p.controlled > 0.0 {
            c_fit = c_fit.max((p.lhs - p.explicit) / p.controlled);
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for p in points.iter().filter(|p| p.t < tm) {
        let scale = p.lhs.abs() + p.explicit.abs() + c_fit * p.controlled;
        let v = if scale > 0.0 { (p.lhs - p.explicit - c_fit * p.controlled) / scale } else { 0.0 };
        worst = worst.max(v);
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    Ok(LapseEstimateCheck { t_mid: tm, c_fit, holdout_max_violation: worst, passed: worst <= HOLDOUT_SLACK, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavorableTerm {
    pub name: String,
    pub value: f64,
    /// Smallest normalized integrand value seen by the sign audit.
    pub integrand_min_ratio: f64,
}

/// Fit of `E(t) <= C E(t0) (t/t0)^{-c sigma}` on `[t_mid, t0]`, checked on `[t_end, t_mid]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub t_mid: f64,
    /// Least-squares slope of `ln E` against `ln t` on the fit window.
    pub exponent_fit_window: f64,
    /// `c sigma`: the largest growth rate `-d ln E / d ln t` between neighbouring checkpoints of the fit window.
    pub c_sigma: f64,
    /// `c` itself when `sigma > 0`.
    pub c_fit: Option<f64>,
    #[serde(rename = "C_fit")]
    pub big_c_fit: f64,
    /// Least-squares slope on the hold-out window.
    pub exponent_holdout: f64,
    /// Largest `E(t) / (C E(t0) (t/t0)^{-c sigma})` on the hold-out window.
    pub holdout_max_ratio: f64,
    pub bound_holds: bool,
    /// `|exponent_holdout| <= c sigma + EXPONENT_SLACK`.
    pub exponent_ok: bool,
    /// Smallest `c sigma >= 0` for which `C` fitted on the first window bounds the hold-out window.
    pub min_holdout_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub t: f64,
    pub sigma_star: f64,
    pub e_total_t: f64,
    pub e_total_0: f64,
    pub past_favorable: Vec<FavorableTerm>,
    /// `E(t) - E(t0)` plus every past-favorable integral: the part that can create growth.
    pub growth_integral: f64,
    pub fit: GrowthFit,
}

/// Slack on the fitted exponent for the energy growth bound.
pub const EXPONENT_SLACK: f64 = 0.03;

/// `E^2_total` at every checkpoint; `order > 0` selects the sum over derivatives up to `order`.
pub fn total_energy_series(traj: &Trajectory, sigma_star: f64, order: u32) -> Result<Vec<(f64, f64)>> {
    traj.states
        .iter()
        .map(|s| {
            energies(s, sigma_star, order).map(|e| (s.t, if order == 0 { e.e_total_sq } else { e.e_total_order_sq }))
        })
        .collect()
}

/// Fit-then-hold-out check of `E(t) <= C E(t0) (t/t0)^{-c sigma}` for a positive series ordered from `t0` down.
pub fn growth_fit(series: &[(f64, f64)], sigma: f64) -> Result<GrowthFit> {
    let t0 = series[0].0;
    let tm = (t0 * series.last().unwrap().0).sqrt();
    let e0 = series[0].1;
    let w1: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= tm).collect();
    let w2: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 <= tm).collect();
    if e0 == 0.0 {
        return Ok(GrowthFit {
            t_mid: tm,
            exponent_fit_window: 0.0,
            c_sigma: 0.0,
            c_fit: (sigma > 0.0).then_some(0.0),
            big_c_fit: 0.0,
            exponent_holdout: 0.0,
            holdout_max_ratio: 0.0,
            bound_holds: true,
            exponent_ok: true,
            min_holdout_exponent: 0.0,
        });
    }
    let p1 = super::fits::log_slope(&w1)?;
    let p2 = super::fits::log_slope(&w2)?;
    let c_sigma = w1.windows(2).map(|w| -(w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln()).fold(0.0, f64::max);
    let envelope = |t: f64| e0 * (t / t0).powf(-c_sigma);
    let big_c = w1.iter().map(|&(t, e)| e / envelope(t)).fold(0.0, f64::max);
    let ratio = w2.iter().map(|&(t, e)| e / (big_c * envelope(t))).fold(0.0, f64::max);
    Ok(GrowthFit {
        t_mid: tm,
        exponent_fit_window: p1,
        c_sigma,
        c_fit: (sigma > 0.0).then(|| c_sigma / sigma),
        big_c_fit: big_c,
        exponent_holdout: p2,
        holdout_max_ratio: ratio,
        bound_holds: ratio <= 1.0 + HOLDOUT_SLACK,
        exponent_ok: p2.abs() <= c_sigma + EXPONENT_SLACK,
        min_holdout_exponent: min_holdout_exponent(&w1, &w2),
    })
}

/// Bisection for the least `c` with `E(t2) <= max_{t1} E(t1) (t1/t2)^c` for all `t2` in `w2`.
fn min_holdout_exponent(w1: &[(f64, f64)], w2: &[(f64, f64)]) -> f64 {
    let holds = |c: f64| {
        w2.iter().all(|&(t2, e2)| {
            let bound = w1.iter().map(|&(t1, e1)| e1 * (t1 / t2).powf(c)).fold(0.0, f64::max);
            e2 <= bound * (1.0 + HOLDOUT_SLACK)
        })
    };
    if holds(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e3 {
            return f64::INFINITY;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// [`growth_fit`] applied to `E_total` (not squared) up to `order` derivatives.
pub fn energy_growth_fit(traj: &Trajectory, sigma_star: f64, order: u32) -> Result<GrowthFit> {
    let series: Vec<(f64, f64)> =
        total_energy_series(traj, sigma_star, order)?.into_iter().map(|(t, e2)| (t, e2.sqrt())).collect();
    growth_fit(&series, traj.bg.sigma())
}

/// Two-sided comparison of `E_total` (order `N`) with the solution norm of the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormComparison {
    pub order: u32,
    /// Fit of `E / S_N`.
    pub energy_over_norm: GrowthFit,
    /// Fit of `S_N / E`.
    pub norm_over_energy: GrowthFit,
    /// Both hold-out bounds hold.
    pub passed: bool,
}

/// Fit-then-hold-out comparison `E <= C t^{-c sigma} S_N` and conversely.
pub fn energy_norm_comparison(traj: &Trajectory, sigma_star: f64, order: u32) -> Result<NormComparison> {
    let e = total_energy_series(traj, sigma_star, order)?;
    let mut up = Vec::with_capacity(e.len());
    let mut down = Vec::with_capacity(e.len());
    for (s, &(t, e2)) in traj.states.iter().zip(&e) {
        let (en, sn) = (e2.sqrt(), solution_norm(s, order)?);
        let (u, d) = if en == 0.0 && sn == 0.0 { (0.0, 0.0) } else { (en / sn, sn / en) };
        up.push((t, u));
        down.push((t, d));
    }
    let sigma = traj.bg.sigma();
    let energy_over_norm = growth_fit(&up, sigma)?;
    let norm_over_energy = growth_fit(&down, sigma)?;
    let passed = energy_over_norm.bound_holds && norm_over_energy.bound_holds;
    Ok(NormComparison { order, energy_over_norm, norm_over_energy, passed })
}

pub fn monotonicity_report(traj: &Trajectory, sigma_star: f64, t: f64) -> Result<MonotonicityReport> {
    let idx = traj.index_of(t)?;
    let series = total_energy_series(traj, sigma_star, 0)?;
    let acc = &traj.integrals[idx];
    let il = traj.gauge.inv_lambda();
    let audit =
        |name: &str| traj.audit.names.iter().position(|n| n == name).map(|i| traj.audit.min_ratio[i]).unwrap_or(0.0);
    let mut past_favorable = vec![
        FavorableTerm {
            name: "2 int (dpsi2 + c2)".into(),
            value: 2.0 * (acc.dpsi2() + acc.c2()),
            integrand_min_ratio: audit("dpsi2+c2"),
        },
        FavorableTerm { name: "int dnu2".into(), value: acc.dnu2(), integrand_min_ratio: audit("dnu2") },
        FavorableTerm { name: "int nu2".into(), value: acc.nu2(), integrand_min_ratio: audit("nu2") },
        FavorableTerm {
            name: "sigma_star/2 int (dgam2 + c3)".into(),
            value: 0.5 * sigma_star * (acc.dgam2() + acc.c3()),
            integrand_min_ratio: audit("dgam2+c3"),
        },
    ];
    if traj.gauge.is_parabolic() {
        past_favorable.push(FavorableTerm {
            name: "int d2nu2".into(),
            value: acc.d2nu2(),
            integrand_min_ratio: audit("d2nu2"),
        });
        past_favorable[1].value *= 1.0 - il;
    }
    let favorable: f64 = past_favorable.iter().map(|f| f.value).sum();
    let (e_t, e_0) = (series[idx].1, series[0].1);
    Ok(MonotonicityReport {
        t,
        sigma_star,
        e_total_t: e_t,
        e_total_0: e_0,
        past_favorable,
        growth_integral: e_t - e_0 + favorable,
        fit: energy_growth_fit(traj, sigma_star, 0)?,
    })
}

/// All form names, for reports that list accumulators.
pub fn accumulator_names() -> &'static [&'static str] {
    &FORM_NAMES
}
