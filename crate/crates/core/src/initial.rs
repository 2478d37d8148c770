//! Constraint-satisfying random data at a single time.

use nalgebra::{SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::background::KasnerBackground;
use crate::error::{Error, Result};
use crate::geometry::{curvature, ModeFrame};
use crate::spectral::{FieldState, Gauge, ModeIndex, ModeState, C64, SYM};
use crate::system::{self, cmc_lapse, khk, mode_constraints};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    #[default]
    Random,
    Zero,
    /// Only the `k = 0` mode is drawn.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub seed: u64,
    pub k_max: i32,
    /// Amplitudes scale like `(1 + |k|^2)^(-p)`.
    pub spectrum_exponent: f64,
    pub kind: DataKind,
}

impl DataSpec {
    pub fn random(seed: u64, k_max: i32) -> Self {
        Self { seed, k_max, spectrum_exponent: 2.0, kind: DataKind::Random }
    }
}

/// Free data of one mode before the constraints are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeData {
    pub gamma: [C64; 6],
    /// Symmetric part of the lowered second fundamental form.
    pub s: [C64; 6],
    pub psi: C64,
    /// Used only in parabolic gauge.
    pub nu: C64,
}

/// Builds data at `t = 1` in the given gauge.
pub fn make_data(bg: &KasnerBackground, gauge: Gauge, spec: &DataSpec) -> Result<FieldState> {
    make_data_at(bg, gauge, spec, 1.0)
}

pub fn make_data_at(bg: &KasnerBackground, gauge: Gauge, spec: &DataSpec, t: f64) -> Result<FieldState> {
    if bg.a() == 0.0 {
        return Err(Error::ZeroScalarAmplitude);
    }
    if spec.k_max < 0 {
        return Err(Error::Config(format!("k_max must be nonnegative, got {}", spec.k_max)));
    }
    bg.metric_at(t)?;
    let mut state = FieldState::zero(*bg, gauge, spec.k_max, t);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for idx in state.lattice.canonical() {
        let k = state.lattice.mode(idx);
        let draw = match spec.kind {
            DataKind::Zero => false,
            DataKind::Homogeneous => k.is_zero(),
            DataKind::Random => true,
        };
        if !draw {
            continue;
        }
        let amp = (1.0 + k.norm_sq()).powf(-spec.spectrum_exponent);
        let mut sample = || -> C64 {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if k.is_zero() {
                C64::new(re * amp, 0.0)
            } else {
                C64::new(re * amp, im * amp)
            }
        };
        let mut free = FreeData::default();
        for z in free.gamma.iter_mut() {
            *z = sample();
        }
        for z in free.s.iter_mut() {
            *z = sample();
        }
        free.psi = sample();
        if gauge.is_parabolic() {
            free.nu = sample();
        }
        let f = ModeFrame::at_log(k, bg, state.tau());
        state.modes[idx] = constrain_mode(k, &free, &f, bg, gauge)?;
    }
    state.enforce_hermitian();
    state.lapse_populated = true;
    Ok(state)
}

/// Completes free data into a solution of all constraints at one mode.
pub fn constrain_mode(
    k: ModeIndex,
    free: &FreeData,
    f: &ModeFrame,
    bg: &KasnerBackground,
    gauge: Gauge,
) -> Result<ModeState> {
    let q = bg.q();
    let a = bg.a();
    if a == 0.0 {
        return Err(Error::ZeroScalarAmplitude);
    }
    let il = gauge.inv_lambda();
    let mut m = ModeState { gamma: free.gamma, psi: free.psi, ..ModeState::zero() };
    m.nu = match gauge {
        Gauge::Cmc => cmc_lapse(&m.gamma, f),
        Gauge::Parabolic { .. } => free.nu,
    };
    let kmix_of = |s: &[C64; 6], gamma: &[C64; 6]| {
        let mut km = [[C64::default(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let sij = s[crate::spectral::sym_index(i, j)];
                let gij = gamma[crate::spectral::sym_index(i, j)];
                km[i][j] = (sij + gij * (0.5 * (q[j] - q[i]))) * f.ginv[i];
            }
        }
        km
    };
    m.kmix = kmix_of(&free.s, &m.gamma);

    // Least-Frame-norm correction of S from the trace row and the three lowered momentum rows.
    let c = mode_constraints(k, &m, f, bg, gauge);
    let mut r = SVector::<C64, 4>::zeros();
    r[0] = -c.trace.value[0];
    for i in 0..3 {
        r[1 + i] = -c.mom.value[i];
    }
    let mut mat = SMatrix::<C64, 4, 6>::zeros();
    let mut w = [0.0; 6];
    for (n, &(p, s)) in SYM.iter().enumerate() {
        if p == s {
            mat[(0, n)] = C64::new(f.ginv[p], 0.0);
            mat[(1 + p, n)] = f.ik(p) * f.ginv[p];
            w[n] = f.ginv[p] * f.ginv[p];
        } else {
            mat[(1 + s, n)] = f.ik(p) * f.ginv[p];
            mat[(1 + p, n)] = f.ik(s) * f.ginv[s];
            w[n] = f.ginv[p] * f.ginv[p] + f.ginv[s] * f.ginv[s];
        }
    }
    for (n, wn) in w.iter().enumerate() {
        let scale = 1.0 / wn.sqrt();
        for row in 0..4 {
            mat[(row, n)] *= scale;
        }
    }
    let y: SVector<C64, 6> = if k.is_zero() {
        let row = mat.row(0).transpose();
        let nn: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        row.map(|z| z.conj()) * (r[0] / nn)
    } else {
        let gram = mat * mat.adjoint();
        let chol = gram.cholesky().ok_or(Error::SolveFailure { k: k.k })?;
        mat.adjoint() * chol.solve(&r)
    };
    let mut s = free.s;
    for n in 0..6 {
        s[n] += y[n] / w[n].sqrt();
    }
    m.kmix = kmix_of(&s, &m.gamma);

    let (_, kh) = bg.rescaled_secfund();
    let r = curvature(&m.gamma, f).scalar;
    let pi = (r * f.t2 - khk(&m, &kh) * 2.0 + m.nu * system::ham_lapse_coeff(a, il)) / (2.0 * a);
    m.chi = pi - m.nu * a;
    if !m.is_finite() {
        return Err(Error::SolveFailure { k: k.k });
    }
    Ok(m)
}
