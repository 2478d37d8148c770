//! Single run: integrate, evaluate diagnostics, write artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::decay::{decay_norms, pure_log_growth};
use crate::diagnostics::{
    bang_limits, decay_fits, decay_series, energies, energy_growth_fit, energy_norm_comparison, identity_metric,
    identity_parabolic, identity_scalar_lapse, lapse_estimate_check, monotonicity_report, vtd_ratio, IdentityResidual,
    ParabolicIdentity,
};
use crate::error::{Error, Result};
use crate::initial::make_data;
use crate::integrator::{integrate, Trajectory};
use crate::spectral::{sobolev_norm_frame, solution_norm, Field, FieldState, Gauge, ModeIndex};
use crate::system::ConstraintSummary;
use crate::{cmc, parabolic};

use super::config::{ReportKind, Resolved, RunConfig};

/// Provenance carried by every output row and record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub gauge: &'static str,
    pub sigma: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
}

impl Provenance {
    pub fn of(r: &Resolved) -> Self {
        Self { gauge: r.gauge.name(), sigma: r.bg.sigma(), lambda: r.gauge.lambda(), seed: r.data.seed }
    }
}

/// A JSON record tagged with `t` and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct Record<T> {
    pub t: f64,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub record: T,
}

impl Provenance {
    pub fn tag<T>(&self, t: f64, record: T) -> Record<T> {
        Record { t, provenance: *self, record }
    }
}

pub fn constraint_summary(state: &FieldState) -> Result<ConstraintSummary> {
    match state.gauge {
        Gauge::Cmc => cmc::constraint_summary(state),
        Gauge::Parabolic { .. } => parabolic::constraint_summary(state),
    }
}

/// Numeric time-series columns after the provenance block, in output order. Norms are
/// frame Sobolev norms of order `N`; `sn_*` are the weighted pieces of the order-`N`
/// solution norm not already listed. New columns go at the end.
pub const SERIES_COLUMNS: [&str; 39] = [
    "norm_gamma",
    "norm_dgamma",
    "norm_k",
    "norm_psi",
    "norm_dpsi",
    "norm_pi",
    "norm_chi",
    "norm_nu",
    "norm_dnu",
    "sn_t23_dpsi",
    "sn_t23_nu1",
    "sn_t43_nu2",
    "solution_norm_n",
    "solution_norm_0",
    "nu_n1",
    "nu_n2",
    "pi_n1",
    "dtk_n1",
    "dpsi_n2",
    "e_metric_sq",
    "e_scalar_sq",
    "e_dlapse_sq",
    "e_lapse_sq",
    "e_total_sq",
    "e_total_n_sq",
    "ham",
    "mom",
    "mom_up",
    "sym",
    "trace",
    "ham_l2",
    "mom_l2",
    "mom_up_l2",
    "ham_vs_solution",
    "mom_vs_solution",
    "mom_up_vs_solution",
    "vtd",
    "hermitian_defect",
    "k00_trace",
];

pub const PROVENANCE_COLUMNS: [&str; 5] = ["t", "gauge", "sigma", "lambda", "seed"];

/// One checkpoint's values, aligned with [`SERIES_COLUMNS`]; `None` where a column does not apply.
pub fn series_row(state: &FieldState, order: u32, sigma_star: f64) -> Result<Vec<Option<f64>>> {
    let n = order;
    let fr = |f: Field, m: u32| sobolev_norm_frame(f, m, state);
    let t23 = state.t.powf(2.0 / 3.0);
    let parabolic = state.gauge.is_parabolic();
    let dn = decay_norms(state, n)?;
    let e = energies(state, sigma_star, n)?;
    let c = constraint_summary(state)?;
    let k00 = state.mode(ModeIndex::new([0, 0, 0])).map(|m| m.trace_k().norm());
    let v = vec![
        Some(fr(Field::Gamma, n)),
        Some(fr(Field::GradGamma, n)),
        Some(fr(Field::Kmix, n)),
        Some(fr(Field::Psi, n)),
        Some(fr(Field::GradPsi, n)),
        Some(fr(Field::Pi, n)),
        Some(fr(Field::Chi, n)),
        Some(fr(Field::Nu, n)),
        Some(fr(Field::GradNu, n)),
        Some(t23 * fr(Field::GradPsi, n)),
        Some(t23 * fr(Field::Nu, n + 1)),
        (!parabolic).then(|| t23 * t23 * fr(Field::Nu, n + 2)),
        Some(solution_norm(state, n)?),
        Some(solution_norm(state, 0)?),
        Some(dn.nu_n1),
        Some(dn.nu_n2),
        Some(dn.pi_n1),
        Some(dn.dtk_n1),
        Some(dn.dpsi_n2),
        Some(e.e_metric_sq),
        Some(e.e_scalar_sq),
        Some(e.e_dlapse_sq),
        Some(e.e_lapse_sq),
        Some(e.e_total_sq),
        Some(e.e_total_order_sq),
        Some(c.ham),
        Some(c.mom),
        Some(c.mom_up),
        Some(c.sym),
        Some(c.trace),
        Some(c.ham_l2),
        Some(c.mom_l2),
        Some(c.mom_up_l2),
        Some(c.ham_vs_solution),
        Some(c.mom_vs_solution),
        Some(c.mom_up_vs_solution),
        Some(vtd_ratio(state)),
        Some(state.hermitian_defect()),
        k00,
    ];
    debug_assert_eq!(v.len(), SERIES_COLUMNS.len());
    Ok(v)
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_timeseries(path: &Path, traj: &Trajectory, prov: &Provenance, order: u32, sigma_star: f64) -> Result<()> {
    let rows: Vec<Vec<Option<f64>>> =
        traj.states.par_iter().map(|s| series_row(s, order, sigma_star)).collect::<Result<_>>()?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PROVENANCE_COLUMNS.iter().chain(SERIES_COLUMNS.iter()))?;
    for (s, row) in traj.states.iter().zip(rows) {
        let mut rec = vec![
            s.t.to_string(),
            prov.gauge.to_string(),
            prov.sigma.to_string(),
            fmt(prov.lambda),
            prov.seed.to_string(),
        ];
        rec.extend(row.into_iter().map(fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Identity records at every checkpoint after the first.
pub fn identity_records(traj: &Trajectory) -> Result<Vec<IdentityResidual>> {
    let mut out = Vec::new();
    for &t in &traj.times[1..] {
        match traj.gauge {
            Gauge::Cmc => {
                out.push(identity_scalar_lapse(traj, t)?);
                out.push(identity_metric(traj, t)?);
            }
            Gauge::Parabolic { .. } => {
                for which in
                    [ParabolicIdentity::ScalarLapse, ParabolicIdentity::Metric, ParabolicIdentity::LapseEnergyEstimate]
                {
                    out.push(identity_parabolic(traj, t, which)?);
                }
            }
        }
    }
    Ok(out)
}

/// Errors that only mean "this run cannot support the report", recorded instead of raised.
fn skippable(e: &Error) -> bool {
    matches!(e, Error::InsufficientDepth { .. } | Error::InsufficientSpan { .. })
}

fn section<T: Serialize>(r: Result<T>) -> Result<Value> {
    match r {
        Ok(v) => Ok(json!({"status": "ok", "value": v})),
        Err(e) if skippable(&e) => Ok(json!({"status": "skipped", "reason": e.to_string()})),
        Err(e) => Err(e),
    }
}

/// Fits, growth and comparison reports, and bang limits, as selected by the config.
pub fn fit_report(cfg: &RunConfig, traj: &Trajectory) -> Result<Value> {
    let mut out = serde_json::Map::new();
    let window = cfg.fit_window();
    if cfg.wants(ReportKind::Decay) {
        let fits = decay_series(traj, cfg.order).and_then(|s| decay_fits(&s, window));
        let log = fits.as_ref().ok().and_then(|f| f.last()).map(pure_log_growth);
        out.insert("decay".into(), section(fits)?);
        out.insert("dpsi_pure_log_growth".into(), json!(log));
    }
    if cfg.wants(ReportKind::Monotonicity) {
        out.insert("growth".into(), section(energy_growth_fit(traj, cfg.sigma_star, cfg.order))?);
        out.insert("monotonicity".into(), section(monotonicity_report(traj, cfg.sigma_star, traj.t_end()))?);
    }
    if cfg.wants(ReportKind::Comparison) {
        out.insert("energy_norm_comparison".into(), section(energy_norm_comparison(traj, cfg.sigma_star, cfg.order))?);
    }
    if cfg.wants(ReportKind::Identities) && traj.gauge.is_parabolic() {
        out.insert("lapse_estimate".into(), section(lapse_estimate_check(traj))?);
    }
    if cfg.wants(ReportKind::Bang) {
        let b = bang_limits(traj).map(|b| {
            let z = traj.lattice.index_of(ModeIndex::new([0, 0, 0])).unwrap();
            json!({
                "t_used": b.t_used,
                "rates": b.rates,
                "max_trace_k_bang": b.max_trace_k_bang,
                "k_bang_norm": b.k_bang_norm,
                "k_bang_k0": b.k_bang[z],
                "psi_bang_k0": b.psi_bang[z],
                "h_bang_k0": b.h_bang[z],
            })
        });
        out.insert("bang".into(), section(b)?);
    }
    out.insert("window".into(), json!(window));
    Ok(Value::Object(out))
}

/// Result of a run held in memory.
pub struct RunOutcome {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub trajectory: Trajectory,
    pub wall_time_s: f64,
}

impl RunOutcome {
    pub fn provenance(&self) -> Provenance {
        Provenance::of(&self.resolved)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let resolved = cfg.resolve()?;
    let start = Instant::now();
    let data = make_data(&resolved.bg, resolved.gauge, &resolved.data)?;
    let trajectory = integrate(&data, &resolved.options)?;
    Ok(RunOutcome { config: cfg.clone(), resolved, trajectory, wall_time_s: start.elapsed().as_secs_f64() })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `timeseries.csv`, `identities.json`, `fits.json` and `meta.json` into `dir`.
pub fn write_artifacts(out: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &out.config;
    let traj = &out.trajectory;
    let prov = out.provenance();
    write_timeseries(&dir.join("timeseries.csv"), traj, &prov, cfg.order, cfg.sigma_star)?;
    let ids = if cfg.wants(ReportKind::Identities) { identity_records(traj)? } else { Vec::new() };
    let ids: Vec<_> = ids.into_iter().map(|r| prov.tag(r.t, r)).collect();
    write_json(&dir.join("identities.json"), &ids)?;
    write_json(&dir.join("fits.json"), &prov.tag(traj.t_end(), fit_report(cfg, traj)?))?;
    let meta = json!({
        "config": cfg,
        "code_version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": out.wall_time_s,
        "threads": rayon::current_num_threads(),
        "provenance": prov,
        "t_start": traj.t_start(),
        "t_end": traj.t_end(),
        "checkpoints": traj.times.len(),
        "modes": traj.lattice.len(),
        "steps": traj.stats,
        "sign_audit": traj.audit,
    });
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(())
}

/// `run` subcommand: execute and write artifacts to the configured directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let out = execute(cfg)?;
    write_artifacts(&out, &cfg.output.dir)?;
    Ok(out)
}
