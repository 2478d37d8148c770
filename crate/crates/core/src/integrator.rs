//! Backward integration in `tau = ln t` with a Dormand-Prince 5(4) pair.
//!
//! Modes never couple, so each canonical mode is stepped on its own adaptive sequence that
//! lands exactly on the shared log-spaced checkpoints; `-k` partners are filled by
//! conjugation. The spacetime integrals of the energy identities ride along as extra
//! components excluded from error control.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::KasnerBackground;
use crate::diagnostics::forms::{audit_ratios, mode_forms, Forms, AUDIT_NAMES};
use crate::error::{Error, Result};
use crate::geometry::{curvature, ModeFrame};
use crate::parabolic::self_coupling_integral;
use crate::spectral::{FieldState, Gauge, Lattice, ModeIndex, ModeState, C64, NV, VOLUME};
use crate::system::rhs_with_curvature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain explicit pair for every component.
    Rk45,
    /// The parabolic lapse self-coupling is integrated exactly; ignored in CMC gauge.
    Rk45ExpLapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Accumulators are extra ODE components advanced by the Runge-Kutta weights.
    Stage,
    /// Trapezoid rule on step endpoints.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_min: f64,
    pub checkpoints_per_decade: u32,
    pub scheme: Scheme,
    /// Per-mode cap on attempted steps.
    pub max_steps: usize,
    pub quadrature: Quadrature,
    /// Constant `|d tau|` instead of adaptive control; steps are shortened to hit checkpoints.
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            t_min: 1e-8,
            checkpoints_per_decade: 5,
            scheme: Scheme::Rk45ExpLapse,
            max_steps: 2_000_000,
            quadrature: Quadrature::Stage,
            fixed_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self, t_start: f64, gauge: Gauge) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptions(m.to_string()));
        if !(self.t_min > 0.0 && self.t_min.is_finite()) {
            return bad("t_min must be positive");
        }
        if self.t_min >= t_start {
            return match gauge {
                Gauge::Parabolic { .. } => Err(Error::ForwardParabolic { t_start, t_min: self.t_min }),
                Gauge::Cmc => bad("t_min must lie below the initial time"),
            };
        }
        if self.rel_tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.abs_tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return bad("tolerances must be positive");
        }
        if self.checkpoints_per_decade == 0 {
            return bad("checkpoints_per_decade must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad("fixed_step must be positive");
            }
        }
        Ok(())
    }

    /// `t_start 10^(-j/n)` for `j = 0, 1, ...`, ending exactly at `t_min`.
    pub fn checkpoint_times(&self, t_start: f64) -> Vec<f64> {
        let n = f64::from(self.checkpoints_per_decade);
        let span = (t_start / self.t_min).log10() * n;
        let last = (span - 1e-9).ceil() as i64;
        let mut out: Vec<f64> = (0..last).map(|j| t_start * 10f64.powf(-(j as f64) / n)).collect();
        out.push(self.t_min);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAudit {
    pub names: Vec<String>,
    /// Smallest `value / sum |parts|` seen at any stage of any mode.
    pub min_ratio: Vec<f64>,
    pub stages_checked: u64,
}

impl SignAudit {
    pub const SLACK: f64 = -1e-14;

    pub fn passed(&self) -> bool {
        self.min_ratio.iter().all(|&r| r >= Self::SLACK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

impl StepStats {
    fn merge(&mut self, o: &StepStats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub bg: KasnerBackground,
    pub gauge: Gauge,
    pub lattice: Lattice,
    pub options: IntegratorOptions,
    /// Strictly decreasing, starting at the initial time.
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    /// `int_tau^{tau_0} int_T3 (form) dx dtau'` for every form at every checkpoint.
    pub integrals: Vec<Forms>,
    pub audit: SignAudit,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index of the checkpoint at `t` (relative match 1e-9).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&c| (c - t).abs() <= 1e-9 * t.abs())
            .ok_or_else(|| Error::InvalidOptions(format!("no checkpoint at t = {t:e}")))
    }

    pub fn state_at(&self, t: f64) -> Result<&FieldState> {
        Ok(&self.states[self.index_of(t)?])
    }

    /// Spatial integrals of every form at checkpoint `idx`.
    pub fn spatial_forms(&self, idx: usize) -> Forms {
        spatial_forms(&self.states[idx])
    }
}

/// Sums the per-mode forms of a state over the torus.
pub fn spatial_forms(state: &FieldState) -> Forms {
    let tau = state.tau();
    let mut out = Forms::default();
    for (k, m) in state.iter() {
        let f = ModeFrame::at_log(k, &state.bg, tau);
        let cv = curvature(&m.gamma, &f);
        out.add_scaled(&mode_forms(m, &f, &state.bg, &cv), VOLUME);
    }
    out
}

// Dormand-Prince 5(4).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
/// Largest `|lambda * Delta C|` allowed within one step of the exponential scheme.
const MAX_EXPONENT: f64 = 200.0;

/// Advances accumulators `J` with `dJ/dtau = -forms` over a step of size `h`, given
/// integrand values and quadrature weights.
pub fn accumulate_spacetime_integrals(acc: &mut Forms, h: f64, weights: &[f64], integrands: &[Forms]) {
    for (w, fm) in weights.iter().zip(integrands) {
        if *w != 0.0 {
            acc.add_scaled(fm, -h * w);
        }
    }
}

#[derive(Clone, Copy)]
struct Stage {
    /// Physical state at the stage.
    y: [C64; NV],
    /// Physical derivative; for the exponential scheme slot 17 holds only the curvature source.
    d: [C64; NV],
    forms: Forms,
    audit: [f64; 7],
}

struct ModeProblem {
    k: ModeIndex,
    bg: KasnerBackground,
    gauge: Gauge,
    exp_lapse: bool,
    lambda: f64,
    il: f64,
}

/// Result of one mode over all checkpoints.
struct ModeTrack {
    states: Vec<[C64; NV]>,
    integrals: Vec<Forms>,
    audit: [f64; 7],
    audited: u64,
    stats: StepStats,
}

impl ModeProblem {
    fn new(k: ModeIndex, bg: KasnerBackground, gauge: Gauge, scheme: Scheme) -> Self {
        let lambda = gauge.lambda().unwrap_or(0.0);
        Self {
            k,
            bg,
            gauge,
            exp_lapse: gauge.is_parabolic() && scheme == Scheme::Rk45ExpLapse,
            lambda,
            il: gauge.inv_lambda(),
        }
    }

    /// `lambda * int_{base}^{tau} (t^2 mu + 1 - il)`.
    fn lapse_exponent(&self, base: f64, tau: f64) -> f64 {
        if !self.exp_lapse || tau == base {
            return 0.0;
        }
        self.lambda * self_coupling_integral(self.k.as_f64(), &self.bg.q(), self.il, base, tau)
    }

    /// Evaluates a stage from the integration variable `z` relative to the step base.
    fn eval(&self, tau: f64, base: f64, z: &[C64; NV]) -> Stage {
        let f = ModeFrame::at_log(self.k, &self.bg, tau);
        let mut m = ModeState::from_array(z);
        let cv = curvature(&m.gamma, &f);
        match self.gauge {
            Gauge::Cmc => m.nu = -cv.scalar * f.t2 / (1.0 + f.t2 * f.mu),
            Gauge::Parabolic { .. } => {
                if self.exp_lapse {
                    m.nu = z[17] * self.lapse_exponent(base, tau).exp();
                }
            }
        }
        let mut d = rhs_with_curvature(&m, &f, &self.bg, self.gauge, &cv);
        if self.exp_lapse {
            d.nu = cv.scalar * (f.t2 * self.lambda);
        }
        let forms = mode_forms(&m, &f, &self.bg, &cv);
        Stage { y: m.to_array(), d: d.to_array(), audit: audit_ratios(&forms), forms }
    }

    /// Derivative of the integration variable at a stage.
    fn dz(&self, s: &Stage, base: f64, tau: f64) -> [C64; NV] {
        let mut dz = s.d;
        if self.exp_lapse {
            dz[17] = s.d[17] * (-self.lapse_exponent(base, tau)).exp();
        }
        dz
    }

    fn controlled_slots(&self) -> usize {
        if self.gauge.is_parabolic() {
            NV
        } else {
            NV - 1
        }
    }

    /// Resets `tr K` to its gauge value by a diagonal shift.
    fn project_trace(&self, y: &mut [C64; NV]) {
        let tr = y[6] + y[10] + y[14];
        let shift = (tr - y[17] * self.il) / 3.0;
        y[6] -= shift;
        y[10] -= shift;
        y[14] -= shift;
    }

    fn integrate(&self, y0: [C64; NV], taus: &[f64], opts: &IntegratorOptions) -> Result<ModeTrack> {
        let mut tau = taus[0];
        let mut y = y0;
        let mut acc = Forms::default();
        let mut track = ModeTrack {
            states: Vec::with_capacity(taus.len()),
            integrals: Vec::with_capacity(taus.len()),
            audit: [f64::INFINITY; 7],
            audited: 0,
            stats: StepStats::default(),
        };
        let mut first = self.eval(tau, tau, &y);
        y = first.y;
        track.stats.rhs_evals += 1;
        let note = |tr: &mut ModeTrack, s: &Stage| {
            for (m, r) in tr.audit.iter_mut().zip(s.audit) {
                *m = m.min(r);
            }
            tr.audited += 1;
        };
        note(&mut track, &first);
        track.states.push(y);
        track.integrals.push(acc);

        let mut h_prop = match opts.fixed_step {
            Some(h) => -h,
            None => -1e-3,
        };
        let mut attempts = 0usize;
        let nc = self.controlled_slots();

        for &target in &taus[1..] {
            while tau > target {
                attempts += 1;
                if attempts > opts.max_steps {
                    return Err(Error::StepLimitExceeded { k: self.k.k, t: tau.exp(), max_steps: opts.max_steps });
                }
                let mut h = h_prop;
                if self.exp_lapse {
                    let f = ModeFrame::at_log(self.k, &self.bg, tau);
                    let rate = self.lambda.abs() * (1.0 + f.t2 * f.mu);
                    h = h.max(-MAX_EXPONENT / rate);
                }
                let clipped = h < target - tau;
                if clipped {
                    h = target - tau;
                }

                let mut stages = [first; 7];
                let mut dzs = [[C64::default(); NV]; 7];
                let mut stage_tau = [0.0; 7];
                dzs[0] = self.dz(&first, tau, tau);
                stage_tau[0] = tau;
                for s in 1..7 {
                    let ts = if s == 6 { tau + h } else { tau + C[s] * h };
                    let mut z = y;
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            for i in 0..NV {
                                z[i] += dzs[j][i] * (h * a);
                            }
                        }
                    }
                    stages[s] = self.eval(ts, tau, &z);
                    dzs[s] = self.dz(&stages[s], tau, ts);
                    stage_tau[s] = ts;
                }
                track.stats.rhs_evals += 6;

                let t_new = tau + h;
                let grow = self.lapse_exponent(tau, t_new).exp();
                // The last stage sits at y + h sum b_j dz_j, so it already holds the new state.
                let y_new = stages[6].y;
                let mut err = [C64::default(); NV];
                for (i, e) in err.iter_mut().enumerate() {
                    *e = (0..7).map(|s| dzs[s][i] * E[s]).sum::<C64>() * h;
                }
                if self.exp_lapse {
                    err[17] *= grow;
                }

                let err_norm = if opts.fixed_step.is_some() {
                    0.0
                } else {
                    let mut s2 = 0.0;
                    for i in 0..nc {
                        let sc = opts.abs_tol + opts.rel_tol * y[i].norm().max(y_new[i].norm());
                        s2 += (err[i].norm() / sc).powi(2);
                    }
                    (s2 / nc as f64).sqrt()
                };

                if err_norm <= 1.0 || opts.fixed_step.is_some() {
                    for s in 0..7 {
                        note(&mut track, &stages[s]);
                    }
                    match opts.quadrature {
                        Quadrature::Stage => {
                            let fs: Vec<Forms> = stages.iter().map(|s| s.forms).collect();
                            accumulate_spacetime_integrals(&mut acc, h, &B, &fs);
                        }
                        Quadrature::Trapezoid => {
                            accumulate_spacetime_integrals(
                                &mut acc,
                                h,
                                &[0.5, 0.5],
                                &[stages[0].forms, stages[6].forms],
                            );
                        }
                    }
                    let mut next = y_new;
                    self.project_trace(&mut next);
                    if next.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                        return Err(Error::NonFiniteState { k: self.k.k, t: t_new.exp() });
                    }
                    tau = if (t_new - target).abs() < 1e-13 { target } else { t_new };
                    y = next;
                    first = stages[6];
                    first.y = y;
                    track.stats.accepted += 1;
                    if opts.fixed_step.is_none() {
                        let fac = if err_norm == 0.0 {
                            FAC_MAX
                        } else {
                            (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                        };
                        let suggested = h * fac;
                        h_prop = if clipped { h_prop.min(suggested) } else { suggested };
                    }
                } else {
                    track.stats.rejected += 1;
                    let fac = (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, 1.0);
                    h_prop = h * fac;
                }
            }
            track.states.push(y);
            track.integrals.push(acc);
        }
        Ok(track)
    }
}

/// Integrates a state backward from its time to `opts.t_min`.
pub fn integrate(initial: &FieldState, opts: &IntegratorOptions) -> Result<Trajectory> {
    if !initial.lapse_populated {
        return Err(Error::MissingLapse);
    }
    if let Gauge::Parabolic { lambda } = initial.gauge {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidLambda(lambda));
        }
    }
    opts.validate(initial.t, initial.gauge)?;
    let times = opts.checkpoint_times(initial.t);
    let taus: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let lat = initial.lattice;
    let canon = lat.canonical();

    let tracks: Vec<Result<ModeTrack>> = canon
        .par_iter()
        .map(|&idx| {
            let k = lat.mode(idx);
            let p = ModeProblem::new(k, initial.bg, initial.gauge, opts.scheme);
            p.integrate(initial.modes[idx].to_array(), &taus, opts)
        })
        .collect();

    let mut states: Vec<FieldState> =
        times.iter().map(|&t| FieldState { t, ..FieldState::zero(initial.bg, initial.gauge, lat.k_max, t) }).collect();
    let mut integrals = vec![Forms::default(); times.len()];
    let mut audit_min = [f64::INFINITY; 7];
    let mut audited = 0;
    let mut stats = StepStats::default();
    for (&idx, track) in canon.iter().zip(tracks) {
        let track = track?;
        let k = lat.mode(idx);
        let partner = lat.index_of(-k).unwrap();
        let weight = if k.is_zero() { VOLUME } else { 2.0 * VOLUME };
        for (c, st) in states.iter_mut().enumerate() {
            let m = ModeState::from_array(&track.states[c]);
            st.modes[idx] = m;
            if !k.is_zero() {
                st.modes[partner] = m.conj();
            }
            integrals[c].add_scaled(&track.integrals[c], weight);
        }
        for (a, b) in audit_min.iter_mut().zip(track.audit) {
            *a = a.min(b);
        }
        audited += track.audited;
        stats.merge(&track.stats);
    }
    for st in states.iter_mut() {
        st.lapse_populated = true;
        st.enforce_hermitian();
    }
    let audit = SignAudit {
        names: AUDIT_NAMES.iter().map(|s| s.to_string()).collect(),
        min_ratio: audit_min.iter().map(|&r| if r.is_finite() { r } else { 0.0 }).collect(),
        stages_checked: audited,
    };
    Ok(Trajectory {
        bg: initial.bg,
        gauge: initial.gauge,
        lattice: lat,
        options: *opts,
        times,
        states,
        integrals,
        audit,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{make_data, DataKind, DataSpec};
    use approx::assert_relative_eq;

    fn opts(t_min: f64) -> IntegratorOptions {
        IntegratorOptions { t_min, ..Default::default() }
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn checkpoint_grid() {
        let t = opts(1e-2).checkpoint_times(1.0);
        assert_eq!(t.len(), 11);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[10], 1e-2);
        assert_relative_eq!(t[5], 0.1, max_relative = 1e-15);
        assert!(t.windows(2).all(|w| w[1] < w[0]));
        let odd =
            IntegratorOptions { t_min: 0.05, checkpoints_per_decade: 2, ..Default::default() }.checkpoint_times(1.0);
        assert_eq!(odd.len(), 4);
        assert_eq!(*odd.last().unwrap(), 0.05);
    }

    #[test]
    fn option_errors() {
        let bg = KasnerBackground::flrw();
        let p = make_data(&bg, Gauge::Parabolic { lambda: 3.0 }, &DataSpec::random(1, 1)).unwrap();
        assert_eq!(integrate(&p, &opts(2.0)).unwrap_err(), Error::ForwardParabolic { t_start: 1.0, t_min: 2.0 });
        let c = make_data(&bg, Gauge::Cmc, &DataSpec::random(1, 1)).unwrap();
        assert!(matches!(integrate(&c, &opts(1.0)), Err(Error::InvalidOptions(_))));
        assert!(matches!(
            integrate(&c, &IntegratorOptions { rel_tol: 0.0, ..opts(0.1) }),
            Err(Error::InvalidOptions(_))
        ));
        let tight = IntegratorOptions { max_steps: 3, ..opts(1e-3) };
        assert!(matches!(integrate(&c, &tight), Err(Error::StepLimitExceeded { .. })));
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let bg = KasnerBackground::with_anisotropy(0.05, true).unwrap();
        for gauge in [Gauge::Cmc, Gauge::Parabolic { lambda: 3.0 }] {
            let s = make_data(&bg, gauge, &DataSpec { kind: DataKind::Zero, ..DataSpec::random(0, 2) }).unwrap();
            let tr = integrate(&s, &opts(1e-4)).unwrap();
            assert!(tr.states.iter().all(|st| st.modes.iter().all(|m| *m == ModeState::zero())));
            assert!(tr.integrals.iter().all(|f| f.0.iter().all(|&v| v == 0.0)));
            assert!(tr.audit.passed());
        }
    }

    #[test]
    fn constant_integrand_quadrature() {
        let mut acc = Forms::default();
        let mut c = Forms::default();
        c.0[3] = 2.5;
        let tau_end = (1e-3f64).ln();
        let n = 7;
        let h = tau_end / n as f64;
        for _ in 0..n {
            accumulate_spacetime_integrals(&mut acc, h, &B, &[c; 7]);
        }
        assert_relative_eq!(acc.0[3], 2.5 * (1e3f64).ln(), max_relative = 1e-14);
        let mut trap = Forms::default();
        accumulate_spacetime_integrals(&mut trap, tau_end, &[0.5, 0.5], &[c, c]);
        assert_relative_eq!(trap.0[3], acc.0[3], max_relative = 1e-14);
    }

    /// Closed-form solution of the `k = 0` CMC mode: `nu = 0`, `K`, `chi` constant.
    fn homogeneous_oracle(m0: &ModeState, q: [f64; 3], tau: f64) -> ModeState {
        let mut m = *m0;
        m.psi = m0.psi + m0.chi * tau;
        for (n, &(i, j)) in crate::spectral::SYM.iter().enumerate() {
            let d = q[i] - q[j];
            let int = |e: f64| if e == 0.0 { tau } else { (e * tau).exp_m1() / e };
            let u = m0.gamma[n] - m0.kmix[i][j] * int(d) - m0.kmix[j][i] * int(-d);
            m.gamma[n] = u * ((q[i] + q[j]) * tau).exp();
        }
        m
    }

    #[test]
    fn homogeneous_cmc_matches_closed_form() {
        for sigma in [0.0, 0.2] {
            let bg = KasnerBackground::with_anisotropy(sigma, true).unwrap();
            let s = make_data(&bg, Gauge::Cmc, &DataSpec { kind: DataKind::Homogeneous, ..DataSpec::random(11, 1) })
                .unwrap();
            let tr = integrate(&s, &IntegratorOptions { rel_tol: 1e-12, ..opts(1e-6) }).unwrap();
            let z = ModeIndex::new([0, 0, 0]);
            let m0 = *s.mode(z).unwrap();
            let got = tr.state_at(1e-6).unwrap().mode(z).unwrap();
            let want = homogeneous_oracle(&m0, bg.q(), (1e-6f64).ln());
            let (a, b) = (got.to_array(), want.to_array());
            for i in 0..NV {
                assert!(rel(a[i], b[i]) < 1e-10 || (a[i] - b[i]).norm() < 1e-14, "slot {i}: {} vs {}", a[i], b[i]);
            }
        }
    }

    #[test]
    fn homogeneous_parabolic_lapse() {
        let bg = KasnerBackground::flrw();
        for (lambda, scheme, tol) in
            [(3.0, Scheme::Rk45ExpLapse, 1e-10), (3.0, Scheme::Rk45, 1e-6), (1.5, Scheme::Rk45ExpLapse, 1e-10)]
        {
            let mut s = FieldState::zero(bg, Gauge::Parabolic { lambda }, 1, 1.0);
            s.mode_mut(ModeIndex::new([0, 0, 0])).unwrap().nu = C64::new(0.7, 0.0);
            // Keep the data on the constraint surface: tr K = nu / lambda, Hamiltonian fixes chi.
            let m = s.mode_mut(ModeIndex::new([0, 0, 0])).unwrap();
            for i in 0..3 {
                m.kmix[i][i] = C64::new(0.7 / lambda / 3.0, 0.0);
            }
            let a = bg.a();
            let pi = (m.nu * (2.0 * (a * a - 1.0 / lambda))) / (2.0 * a);
            m.chi = pi - m.nu * a;
            let tr = integrate(&s, &IntegratorOptions { scheme, rel_tol: 1e-12, ..opts(1e-6) }).unwrap();
            for (c, &t) in tr.times.iter().enumerate() {
                let nu = tr.states[c].mode(ModeIndex::new([0, 0, 0])).unwrap().nu;
                let want = crate::parabolic::homogeneous_lapse(C64::new(0.7, 0.0), lambda, t);
                assert!(rel(nu, want) < tol, "{scheme:?} {lambda} t={t} {nu} {want}");
            }
        }
    }

    #[test]
    fn modes_are_independent_and_thread_count_irrelevant() {
        let bg = KasnerBackground::with_anisotropy(0.05, true).unwrap();
        let s = make_data(&bg, Gauge::Parabolic { lambda: 3.0 }, &DataSpec::random(5, 2)).unwrap();
        let o = opts(1e-3);
        let full = integrate(&s, &o).unwrap();
        let k = ModeIndex::new([1, -2, 1]);
        let mut lone = FieldState::zero(bg, s.gauge, 2, 1.0);
        *lone.mode_mut(k).unwrap() = *s.mode(k).unwrap();
        *lone.mode_mut(-k).unwrap() = *s.mode(-k).unwrap();
        let part = integrate(&lone, &o).unwrap();
        for c in 0..full.times.len() {
            assert_eq!(full.states[c].mode(k), part.states[c].mode(k));
        }
        let single =
            rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| integrate(&s, &o).unwrap());
        assert_eq!(single, full);
    }

    #[test]
    fn hermitian_and_gauge_condition_along_run() {
        let bg = KasnerBackground::with_anisotropy(0.1, true).unwrap();
        for gauge in [Gauge::Cmc, Gauge::Parabolic { lambda: 3.0 }] {
            let s = make_data(&bg, gauge, &DataSpec::random(8, 2)).unwrap();
            let tr = integrate(&s, &opts(1e-4)).unwrap();
            for st in &tr.states {
                assert_eq!(st.hermitian_defect(), 0.0);
                for m in &st.modes {
                    let scale = 1.0 + m.nu.norm() + m.kmix.iter().flatten().map(|z| z.norm()).sum::<f64>();
                    assert!((m.trace_k() - m.nu * gauge.inv_lambda()).norm() < 10.0 * 1e-10 * scale);
                }
            }
            assert!(tr.audit.passed(), "{:?}", tr.audit);
            assert!(tr.audit.stages_checked > 0);
        }
    }

    #[test]
    fn fixed_step_order() {
        let bg = KasnerBackground::with_anisotropy(0.05, true).unwrap();
        let s = make_data(&bg, Gauge::Cmc, &DataSpec::random(2, 1)).unwrap();
        let reference = integrate(&s, &IntegratorOptions { rel_tol: 1e-13, abs_tol: 1e-16, ..opts(1e-2) }).unwrap();
        let err = |h: f64| {
            let tr = integrate(&s, &IntegratorOptions { fixed_step: Some(h), ..opts(1e-2) }).unwrap();
            let (a, b) = (&tr.states.last().unwrap().modes, &reference.states.last().unwrap().modes);
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.to_array().into_iter().zip(y.to_array()).map(|(p, q)| (p - q).norm()))
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.04), err(0.02));
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "observed order {order} ({e1:e}, {e2:e})");
    }
}
