//! Per-mode linearized Einstein-scalar system in `tau = ln t`, shared by both gauges.
//!
//! State per mode: `gamma_ij`, `K^i_j` (perturbation of `t K`), `Psi`, `chi = pi - A nu`
//! and the lapse perturbation `nu`. The gauges differ only through `il = 1/lambda`
//! (zero in CMC) and through how `nu` is obtained.

use crate::background::KasnerBackground;
use crate::geometry::{curvature, Curvature, ModeFrame};
use crate::spectral::{Gauge, ModeIndex, ModeState, C64, VOLUME};

/// CMC lapse `nu = -t^2 R / (1 + t^2 mu)`.
pub fn cmc_lapse(gamma: &[C64; 6], f: &ModeFrame) -> C64 {
    let r = curvature(gamma, f).scalar;
    -r * f.t2 / (1.0 + f.t2 * f.mu)
}

/// `d/dtau` of every field. In CMC gauge `nu` is slaved to `gamma` and its slot is zero.
pub fn mode_rhs(m: &ModeState, f: &ModeFrame, bg: &KasnerBackground, gauge: Gauge) -> (ModeState, Curvature) {
    let cv = curvature(&m.gamma, f);
    (rhs_with_curvature(m, f, bg, gauge, &cv), cv)
}

pub fn rhs_with_curvature(
    m: &ModeState,
    f: &ModeFrame,
    bg: &KasnerBackground,
    gauge: Gauge,
    cv: &Curvature,
) -> ModeState {
    let q = bg.q();
    let a = bg.a();
    let il = gauge.inv_lambda();
    let nu = m.nu;
    let mut d = ModeState::zero();
    for (n, &(i, j)) in crate::spectral::SYM.iter().enumerate() {
        let mut v = m.gamma[n] * (q[i] + q[j]) - (m.kmix[i][j] * f.g[i] + m.kmix[j][i] * f.g[j]);
        if i == j {
            v += nu * (2.0 * q[i] * f.g[i]);
        }
        d.gamma[n] = v;
    }
    for i in 0..3 {
        for j in 0..3 {
            let mut v = nu * (f.t2 * f.ginv[i] * f.k[i] * f.k[j]) + cv.ricci[i][j] * f.t2;
            if i == j {
                v += nu * ((1.0 - il) * q[i]);
            }
            d.kmix[i][j] = v;
        }
    }
    d.psi = m.chi + nu * a;
    d.chi = -m.psi * (f.t2 * f.mu) - nu * (a * (1.0 - il));
    if let Gauge::Parabolic { lambda } = gauge {
        d.nu = (nu * (f.t2 * f.mu + 1.0 - il) + cv.scalar * f.t2) * lambda;
    }
    d
}

/// Residual of one constraint together with the magnitude scale of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<const N: usize> {
    pub value: [C64; N],
    pub scale: [f64; N],
}

impl<const N: usize> Default for Residual<N> {
    fn default() -> Self {
        Self { value: [C64::default(); N], scale: [0.0; N] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConstraints {
    pub k: ModeIndex,
    pub ham: Residual<1>,
    /// Momentum constraint with a lowered free index.
    pub mom: Residual<3>,
    /// Momentum constraint with a raised free index.
    pub mom_up: Residual<3>,
    /// Symmetry of the lowered second fundamental form, pairs `(0,1), (0,2), (1,2)`.
    pub sym: Residual<3>,
    /// `tr K - nu / lambda`.
    pub trace: Residual<1>,
}

struct Acc {
    v: C64,
    s: f64,
}

impl Acc {
    fn new() -> Self {
        Self { v: C64::default(), s: 0.0 }
    }
    fn add(&mut self, z: C64) {
        self.v += z;
        self.s += z.norm();
    }
}

pub fn mode_constraints(
    k: ModeIndex,
    m: &ModeState,
    f: &ModeFrame,
    bg: &KasnerBackground,
    gauge: Gauge,
) -> ModeConstraints {
    let cv = curvature(&m.gamma, f);
    constraints_with_curvature(k, m, f, bg, gauge, &cv)
}

pub fn constraints_with_curvature(
    k: ModeIndex,
    m: &ModeState,
    f: &ModeFrame,
    bg: &KasnerBackground,
    gauge: Gauge,
    cv: &Curvature,
) -> ModeConstraints {
    let q = bg.q();
    let (_, kh) = bg.rescaled_secfund();
    let a = bg.a();
    let il = gauge.inv_lambda();
    let nu = m.nu;
    let pi = m.pi(a);

    let mut h = Acc::new();
    h.add(cv.scalar * f.t2);
    h.add(-khk(m, &kh) * 2.0);
    h.add(-pi * (2.0 * a));
    h.add(nu * ham_lapse_coeff(a, il));

    let mut mom = Residual::<3>::default();
    let mut mom_up = Residual::<3>::default();
    for i in 0..3 {
        let mut lo = Acc::new();
        let mut up = Acc::new();
        for b in 0..3 {
            lo.add(f.ik(b) * m.kmix[b][i]);
            up.add(f.ik(b) * m.kmix[i][b] * f.ginv[b]);
        }
        lo.add(f.ik(i) * m.psi * a);
        up.add(f.ik(i) * m.psi * (a * f.ginv[i]));
        lo.add(cv.s[i] * kh[i]);
        for b in 0..3 {
            lo.add(-cv.christ[b][b][i] * kh[b]);
            up.add(cv.christ[b][i][b] * (f.ginv[b] * (kh[b] - kh[i])));
        }
        lo.add(-f.ik(i) * nu * il);
        up.add(-f.ik(i) * nu * (il * f.ginv[i]));
        mom.value[i] = lo.v;
        mom.scale[i] = lo.s;
        mom_up.value[i] = up.v;
        mom_up.scale[i] = up.s;
    }

    let mut sym = Residual::<3>::default();
    for (n, &(i, j)) in [(0usize, 1usize), (0, 2), (1, 2)].iter().enumerate() {
        let mut s = Acc::new();
        s.add(m.kmix[i][j] * f.g[i]);
        s.add(-m.kmix[j][i] * f.g[j]);
        s.add(-m.gamma_at(i, j) * (q[j] - q[i]));
        sym.value[n] = s.v;
        sym.scale[n] = s.s;
    }

    let mut tr = Acc::new();
    for i in 0..3 {
        tr.add(m.kmix[i][i]);
    }
    tr.add(-nu * il);

    ModeConstraints {
        k,
        ham: Residual { value: [h.v], scale: [h.s] },
        mom,
        mom_up,
        sym,
        trace: Residual { value: [tr.v], scale: [tr.s] },
    }
}

/// Coefficient of `nu` in the Hamiltonian constraint written with `k_hat`.
///
/// `tr K = nu / lambda` off CMC, so `k_hat : K` carries `nu / (3 lambda)`; with the `-2 nu / lambda`
/// from the mean curvature this leaves `-4/3`.
pub fn ham_lapse_coeff(a: f64, il: f64) -> f64 {
    2.0 * a * a - 4.0 / 3.0 * il
}

/// `k_hat : K = sum_a khat_a K^a_a`.
pub fn khk(m: &ModeState, kh: &[f64; 3]) -> C64 {
    (0..3).map(|a| m.kmix[a][a] * kh[a]).sum()
}

/// Constraint residuals of an assembled field.
///
/// `ham`, `mom`, ... are normalized by the magnitudes of the terms in each constraint;
/// the `*_vs_solution` values divide the `L^2` residual by the order-0 solution norm.
/// The solution norm uses coordinate components, which matches the lower-index momentum form;
/// the raised form carries extra `t^{-2q}` factors and is reported but not compared.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ConstraintSummary {
    pub ham: f64,
    pub mom: f64,
    pub mom_up: f64,
    pub sym: f64,
    pub trace: f64,
    pub ham_l2: f64,
    pub mom_l2: f64,
    pub mom_up_l2: f64,
    pub solution_norm: f64,
    pub ham_vs_solution: f64,
    pub mom_vs_solution: f64,
    pub mom_up_vs_solution: f64,
}

impl ConstraintSummary {
    /// Largest term-normalized residual.
    pub fn max(&self) -> f64 {
        [self.ham, self.mom, self.mom_up, self.sym, self.trace].into_iter().fold(0.0, f64::max)
    }

    /// Largest Hamiltonian or momentum residual relative to the solution norm.
    pub fn max_vs_solution(&self) -> f64 {
        self.ham_vs_solution.max(self.mom_vs_solution)
    }

    pub fn from_modes(modes: &[ModeConstraints]) -> Self {
        fn rel<const N: usize>(it: impl Iterator<Item = Residual<N>>) -> (f64, f64) {
            let (mut num, mut den) = (0.0, 0.0);
            for r in it {
                for n in 0..N {
                    num += r.value[n].norm_sqr();
                    den += r.scale[n] * r.scale[n];
                }
            }
            let l2 = (VOLUME * num).sqrt();
            (if den > 0.0 { (num / den).sqrt() } else { 0.0 }, l2)
        }
        let (ham, ham_l2) = rel(modes.iter().map(|m| m.ham));
        let (mom, mom_l2) = rel(modes.iter().map(|m| m.mom));
        let (mom_up, mom_up_l2) = rel(modes.iter().map(|m| m.mom_up));
        Self {
            ham,
            mom,
            mom_up,
            sym: rel(modes.iter().map(|m| m.sym)).0,
            trace: rel(modes.iter().map(|m| m.trace)).0,
            ham_l2,
            mom_l2,
            mom_up_l2,
            ..Default::default()
        }
    }

    pub fn with_solution_norm(mut self, norm: f64) -> Self {
        let rel = |x: f64| if norm > 0.0 { x / norm } else { 0.0 };
        self.solution_norm = norm;
        self.ham_vs_solution = rel(self.ham_l2);
        self.mom_vs_solution = rel(self.mom_l2);
        self.mom_up_vs_solution = rel(self.mom_up_l2);
        self
    }
}
