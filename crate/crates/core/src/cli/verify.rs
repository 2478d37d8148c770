//! Pass/fail suites over a configured run.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::decay::{pure_log_growth, DECAY_TARGETS};
use crate::diagnostics::{
    bang_limits, decay_fits, decay_series, energy_growth_fit, energy_norm_comparison, identity_metric,
    identity_parabolic, identity_scalar_lapse, lapse_estimate_check, IdentityResidual, ParabolicIdentity,
};
use crate::error::{Error, Result};
use crate::initial::{make_data, DataKind};
use crate::integrator::{integrate, IntegratorOptions, Trajectory};
use crate::spectral::{Gauge, ModeIndex};

use super::config::RunConfig;
use super::run::{constraint_summary, execute, write_json, Provenance, RunOutcome};

pub const CONSTRAINT_TOL: f64 = 1e-7;
pub const IDENTITY_TOL: f64 = 1e-6;
pub const IDENTITY_TIMES: [f64; 3] = [1e-2, 1e-4, 1e-6];
pub const REFINEMENT_FACTOR: f64 = 4.0;
/// Step of the coarse run in the refinement study when the config has none.
pub const REFINEMENT_STEP: f64 = 0.1;
/// Identity residuals below this fraction of their scale are treated as exact.
pub const RESIDUAL_FLOOR: f64 = 1e-13;
pub const MIN_CAUCHY_RATE: f64 = 0.6;
pub const CAUCHY_RATE_MAX_SIGMA: f64 = 0.02;
pub const TRACE_TOL: f64 = 1e-10;
pub const HOMOGENEOUS_TOL: f64 = 1e-10;
pub const COMPARISON_FLRW_EXPONENT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identities,
    Constraints,
    Exponents,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identities" => Ok(Suite::Identities),
            "constraints" => Ok(Suite::Constraints),
            "exponents" => Ok(Suite::Exponents),
            "all" => Ok(Suite::All),
            _ => Err(Error::Config(format!("unknown suite `{s}` (identities, constraints, exponents, all)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub measured: Value,
}

impl CriterionResult {
    fn new(id: &str, name: &str, pass: bool, detail: String, measured: Value) -> Self {
        let status = if pass { Status::Pass } else { Status::Fail };
        Self { id: id.into(), name: name.into(), status, detail, measured }
    }

    fn not_applicable(id: &str, name: &str, reason: impl Into<String>) -> Self {
        let detail = reason.into();
        Self {
            id: id.into(),
            name: name.into(),
            status: Status::NotApplicable,
            measured: json!({"reason": detail}),
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub t: f64,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            s += &format!("{} criterion {} ({}): {}\n", c.status, c.id, c.name, c.detail);
        }
        let fails = self.criteria.iter().filter(|c| c.status == Status::Fail).count();
        s += &format!(
            "{}: {} criteria, {} failed\n",
            if self.passed { "PASSED" } else { "FAILED" },
            self.criteria.len(),
            fails
        );
        s
    }
}

fn constraints(run: &RunOutcome) -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    let mut at = run.trajectory.t_start();
    for s in &run.trajectory.states {
        let v = constraint_summary(s)?.max_vs_solution();
        if v > worst {
            worst = v;
            at = s.t;
        }
    }
    Ok(CriterionResult::new(
        "1",
        "constraint propagation",
        worst < CONSTRAINT_TOL,
        format!(
            "max residual / solution norm {worst:.2e} at t = {at:.1e} (< {CONSTRAINT_TOL:e}); wall time {:.2} s",
            run.wall_time_s
        ),
        json!({"max_relative_residual": worst, "t": at, "wall_time_s": run.wall_time_s}),
    ))
}

fn identity_times(traj: &Trajectory) -> Vec<f64> {
    let mut ts: Vec<f64> = IDENTITY_TIMES.iter().copied().filter(|&t| traj.index_of(t).is_ok()).collect();
    if ts.is_empty() {
        ts.push(traj.t_end());
    }
    ts
}

type IdentityFn = dyn Fn(&Trajectory, f64) -> Result<IdentityResidual>;

fn scale(r: &IdentityResidual) -> f64 {
    if r.relative_residual > 0.0 {
        r.residual.abs() / r.relative_residual
    } else {
        0.0
    }
}

/// Relative residuals at the identity times, plus the coarse/fine residual ratios.
fn identity_check(
    id: &str,
    name: &str,
    f: &IdentityFn,
    run: &Trajectory,
    pair: Option<&(Trajectory, Trajectory)>,
) -> Result<CriterionResult> {
    let times = identity_times(run);
    let mut worst: f64 = 0.0;
    for &t in &times {
        worst = worst.max(f(run, t)?.relative_residual);
    }
    let mut ratios = Vec::new();
    let mut refined = true;
    if let Some((coarse, fine)) = pair {
        for &t in &times {
            let (c, fi) = (f(coarse, t)?, f(fine, t)?);
            let floor = RESIDUAL_FLOOR * scale(&c).max(scale(&fi));
            if c.residual.abs() <= floor {
                ratios.push(None);
                continue;
            }
            let r = c.residual.abs() / fi.residual.abs().max(f64::MIN_POSITIVE);
            refined &= r >= REFINEMENT_FACTOR;
            ratios.push(Some(r));
        }
    }
    let min_ratio = ratios.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mut detail = format!("max relative residual {worst:.2e} (< {IDENTITY_TOL:e})");
    if pair.is_some() {
        let r = if ratios.iter().all(Option::is_none) { "at roundoff".to_string() } else { format!("{min_ratio:.1}x") };
        detail += &format!("; step-halving reduction {r} (>= {REFINEMENT_FACTOR}x)");
    }
    Ok(CriterionResult::new(
        id,
        name,
        worst < IDENTITY_TOL && refined,
        detail,
        json!({"times": times, "max_relative_residual": worst, "refinement_ratios": ratios}),
    ))
}

fn refinement_pair(run: &RunOutcome) -> Result<(Trajectory, Trajectory)> {
    let r = &run.resolved;
    let data = make_data(&r.bg, r.gauge, &r.data)?;
    let h = r.options.fixed_step.unwrap_or(REFINEMENT_STEP);
    let o = |h: f64| IntegratorOptions { fixed_step: Some(h), ..r.options };
    Ok((integrate(&data, &o(h))?, integrate(&data, &o(h / 2.0))?))
}

fn sign_audit(runs: &[&Trajectory]) -> CriterionResult {
    let min = runs.iter().flat_map(|r| r.audit.min_ratio.iter().copied()).fold(f64::INFINITY, f64::min);
    let stages: u64 = runs.iter().map(|r| r.audit.stages_checked).sum();
    let min = if min.is_finite() { min } else { 0.0 };
    CriterionResult::new(
        "5",
        "sign audit",
        runs.iter().all(|r| r.audit.passed()),
        format!("{stages} stage evaluations over {} runs, smallest normalized integrand {min:.2e}", runs.len()),
        json!({"stages": stages, "min_ratio": min}),
    )
}

fn identity_suite(run: &RunOutcome) -> Result<Vec<CriterionResult>> {
    let traj = &run.trajectory;
    let pair = refinement_pair(run)?;
    let mut out = Vec::new();
    match traj.gauge {
        Gauge::Cmc => {
            out.push(identity_check("2", "scalar-lapse identity", &identity_scalar_lapse, traj, Some(&pair))?);
            out.push(identity_check("3", "metric identity", &identity_metric, traj, Some(&pair))?);
        }
        Gauge::Parabolic { .. } => {
            let sl = |t: &Trajectory, s| identity_parabolic(t, s, ParabolicIdentity::ScalarLapse);
            let me = |t: &Trajectory, s| identity_parabolic(t, s, ParabolicIdentity::Metric);
            let a = identity_check("4", "parabolic scalar-lapse identity", &sl, traj, None)?;
            let b = identity_check("4", "parabolic metric identity", &me, traj, None)?;
            let lemma = lapse_estimate_check(traj)?;
            let lemma_r = CriterionResult::new(
                "4",
                "parabolic lapse estimate",
                lemma.passed,
                format!(
                    "C_fit {:.3} on [t_mid, 1], hold-out max violation {:.2e}",
                    lemma.c_fit, lemma.holdout_max_violation
                ),
                json!({"c_fit": lemma.c_fit, "holdout_max_violation": lemma.holdout_max_violation, "t_mid": lemma.t_mid}),
            );
            out.extend([a, b, lemma_r]);
        }
    }
    out.push(sign_audit(&[traj, &pair.0, &pair.1]));
    Ok(out)
}

fn decay_criterion(cfg: &RunConfig, traj: &Trajectory) -> Result<CriterionResult> {
    const NAME: &str = "decay exponents";
    if traj.gauge != Gauge::Cmc || traj.bg.sigma() != 0.0 {
        return Ok(CriterionResult::not_applicable("6", NAME, "targets are stated for the CMC gauge at FLRW"));
    }
    let series = decay_series(traj, cfg.order)?;
    if series.iter().all(|d| d.nu_n1 == 0.0 && d.pi_n1 == 0.0 && d.dtk_n1 == 0.0 && d.dpsi_n2 == 0.0) {
        return Ok(CriterionResult::new("6", NAME, true, "zero solution".into(), json!({})));
    }
    let fits = match decay_fits(&series, cfg.fit_window()) {
        Ok(f) => f,
        Err(e @ Error::InsufficientSpan { .. }) => {
            return Ok(CriterionResult::not_applicable("6", NAME, e.to_string()))
        }
        Err(e) => return Err(e),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    let mut measured = serde_json::Map::new();
    for (fit, &(name, target, tol, _)) in fits.iter().zip(DECAY_TARGETS.iter()) {
        pass &= (fit.exponent - target).abs() <= tol;
        parts.push(format!("{name} {:.3} (target {target:.3} +- {tol})", fit.exponent));
        measured.insert(name.into(), json!({"exponent": fit.exponent, "target": target, "tol": tol}));
    }
    let log = pure_log_growth(fits.last().unwrap());
    pass &= log;
    parts.push(format!("dpsi_n2 pure-log growth {}", if log { "detected" } else { "not detected" }));
    measured.insert("dpsi_n2_pure_log_growth".into(), json!(log));
    Ok(CriterionResult::new("6", NAME, pass, parts.join("; "), Value::Object(measured)))
}

fn bang_criterion(run: &RunOutcome) -> Result<CriterionResult> {
    const NAME: &str = "convergence limits";
    let traj = &run.trajectory;
    let b = match bang_limits(traj) {
        Ok(b) => b,
        Err(e @ Error::InsufficientDepth { .. }) => {
            return Ok(CriterionResult::not_applicable("7", NAME, e.to_string()))
        }
        Err(e) => return Err(e),
    };
    let sigma = traj.bg.sigma();
    let mut pass = true;
    let mut parts = Vec::new();
    let rates: Vec<Option<f64>> = b.rates.iter().map(|r| r.rate).collect();
    let min_rate = rates.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if sigma <= CAUCHY_RATE_MAX_SIGMA {
        pass &= rates.iter().flatten().all(|&r| r >= MIN_CAUCHY_RATE);
        parts.push(if min_rate.is_finite() {
            format!("min Cauchy rate {min_rate:.3} (>= {MIN_CAUCHY_RATE})")
        } else {
            "differences at roundoff".into()
        });
    } else {
        parts.push(format!("min Cauchy rate {min_rate:.3} (no threshold above sigma {CAUCHY_RATE_MAX_SIGMA})"));
    }
    let trace = if b.k_bang_norm > 0.0 { b.max_trace_k_bang / b.k_bang_norm } else { 0.0 };
    if traj.gauge == Gauge::Cmc {
        pass &= trace <= TRACE_TOL;
        parts.push(format!("|tr K_B| / |K_B| {trace:.1e} (<= {TRACE_TOL:e})"));
    }
    let mut homog = None;
    if run.resolved.data.kind == DataKind::Homogeneous {
        let z = traj.lattice.index_of(ModeIndex::new([0, 0, 0])).unwrap();
        let m0 = &traj.states[0].modes[z];
        let ks = m0.kmix.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((b.k_bang[z][i][j] - m0.kmix[i][j]).norm() / ks);
            }
        }
        err = err.max((b.psi_bang[z] - m0.chi).norm() / m0.chi.norm().max(f64::MIN_POSITIVE));
        pass &= err <= HOMOGENEOUS_TOL;
        parts.push(format!("homogeneous limits error {err:.1e} (<= {HOMOGENEOUS_TOL:e})"));
        homog = Some(err);
    }
    Ok(CriterionResult::new(
        "7",
        NAME,
        pass,
        parts.join("; "),
        json!({"rates": rates, "trace_ratio": trace, "homogeneous_error": homog, "t_used": b.t_used}),
    ))
}

fn growth_criterion(cfg: &RunConfig, traj: &Trajectory) -> Result<CriterionResult> {
    let g = energy_growth_fit(traj, cfg.sigma_star, cfg.order)?;
    Ok(CriterionResult::new(
        "10",
        "growth bound",
        g.bound_holds && g.exponent_ok,
        format!(
            "hold-out exponent {:.4}, c sigma {:.4}, C_fit {:.3}, hold-out envelope ratio {:.3}",
            g.exponent_holdout, g.c_sigma, g.big_c_fit, g.holdout_max_ratio
        ),
        serde_json::to_value(&g).unwrap(),
    ))
}

fn comparison_criterion(cfg: &RunConfig, traj: &Trajectory) -> Result<CriterionResult> {
    let c = energy_norm_comparison(traj, cfg.sigma_star, cfg.order)?;
    let mut pass = c.passed;
    let slope = c.energy_over_norm.exponent_holdout;
    let exponent = c.energy_over_norm.min_holdout_exponent.max(c.norm_over_energy.min_holdout_exponent);
    if traj.bg.sigma() == 0.0 {
        pass &= exponent < COMPARISON_FLRW_EXPONENT;
    }
    Ok(CriterionResult::new(
        "comparison",
        "energy-norm comparison",
        pass,
        format!(
            "E/S hold-out ratio {:.3}, S/E hold-out ratio {:.3}, least bounding exponent {exponent:.4}, hold-out slope {slope:.4}",
            c.energy_over_norm.holdout_max_ratio, c.norm_over_energy.holdout_max_ratio
        ),
        serde_json::to_value(&c).unwrap(),
    ))
}

fn exponent_suite(run: &RunOutcome) -> Result<Vec<CriterionResult>> {
    let traj = &run.trajectory;
    Ok(vec![
        decay_criterion(&run.config, traj)?,
        bang_criterion(run)?,
        growth_criterion(&run.config, traj)?,
        comparison_criterion(&run.config, traj)?,
    ])
}

pub fn evaluate(run: &RunOutcome, suite: Suite) -> Result<VerifyReport> {
    let mut criteria = Vec::new();
    if matches!(suite, Suite::Constraints | Suite::All) {
        criteria.push(constraints(run)?);
    }
    if matches!(suite, Suite::Identities | Suite::All) {
        criteria.extend(identity_suite(run)?);
    }
    if matches!(suite, Suite::Exponents | Suite::All) {
        criteria.extend(exponent_suite(run)?);
    }
    let passed = criteria.iter().all(|c| c.status != Status::Fail);
    Ok(VerifyReport { suite, t: run.trajectory.t_end(), provenance: run.provenance(), passed, criteria })
}

/// `verify` subcommand: run, evaluate and write `verify.json` to the output directory.
pub fn verify(cfg: &RunConfig, suite: Suite) -> Result<VerifyReport> {
    let run = execute(cfg)?;
    let report = evaluate(&run, suite)?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    write_json(&cfg.output.dir.join("verify.json"), &report)?;
    Ok(report)
}
