//! Band-limited Fourier representation on the torus `[0, 2 pi)^3` and Parseval norms.
//!
//! Every real field `f` is stored through its coefficients `f_k`, `|k_j| <= k_max`,
//! with `f_{-k} = conj(f_k)`. Derivatives act as `d_j -> i k_j`, and
//! `int f g dx = (2 pi)^3 sum_k f_k conj(g_k)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::background::KasnerBackground;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// `(2 pi)^3`, the torus volume.
pub const VOLUME: f64 = 248.05021344239853;

/// Storage order of the six independent components of a symmetric 3x3 tensor.
pub const SYM: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Number of complex slots in a flattened [`ModeState`].
pub const NV: usize = 18;

pub fn sym_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => unreachable!("index out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub k: [i32; 3],
}

impl ModeIndex {
    pub fn new(k: [i32; 3]) -> Self {
        Self { k }
    }

    pub fn is_zero(self) -> bool {
        self.k == [0, 0, 0]
    }

    /// One representative per `{k, -k}` pair: first nonzero component positive.
    pub fn is_canonical(self) -> bool {
        match self.k.iter().find(|&&x| x != 0) {
            None => true,
            Some(&x) => x > 0,
        }
    }

    pub fn as_f64(self) -> [f64; 3] {
        self.k.map(f64::from)
    }

    pub fn norm_sq(self) -> f64 {
        self.k.iter().map(|&x| f64::from(x * x)).sum()
    }
}

impl std::ops::Neg for ModeIndex {
    type Output = Self;

    fn neg(self) -> Self {
        Self { k: self.k.map(|x| -x) }
    }
}

/// The cube `|k_j| <= k_max`, enumerated lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub k_max: i32,
}

impl Lattice {
    pub fn new(k_max: i32) -> Self {
        assert!(k_max >= 0, "k_max must be nonnegative");
        Self { k_max }
    }

    pub fn side(&self) -> usize {
        (2 * self.k_max + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, m: ModeIndex) -> Option<usize> {
        let n = self.side() as i32;
        let off = |x: i32| {
            let v = x + self.k_max;
            (0..n).contains(&v).then_some(v as usize)
        };
        let (a, b, c) = (off(m.k[0])?, off(m.k[1])?, off(m.k[2])?);
        let s = self.side();
        Some((a * s + b) * s + c)
    }

    pub fn mode(&self, idx: usize) -> ModeIndex {
        let s = self.side();
        let km = self.k_max;
        let c = (idx % s) as i32 - km;
        let b = ((idx / s) % s) as i32 - km;
        let a = (idx / (s * s)) as i32 - km;
        ModeIndex::new([a, b, c])
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Indices of canonical modes, in lattice order.
    pub fn canonical(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mode(i).is_canonical()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeState {
    pub gamma: [C64; 6],
    pub kmix: [[C64; 3]; 3],
    pub psi: C64,
    pub chi: C64,
    pub nu: C64,
}

impl ModeState {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn gamma_at(&self, i: usize, j: usize) -> C64 {
        self.gamma[sym_index(i, j)]
    }

    pub fn gamma_mat(&self) -> [[C64; 3]; 3] {
        let mut m = [[C64::default(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.gamma_at(i, j);
            }
        }
        m
    }

    pub fn trace_k(&self) -> C64 {
        self.kmix[0][0] + self.kmix[1][1] + self.kmix[2][2]
    }

    /// `t d_t Psi = chi + A nu`.
    pub fn pi(&self, a: f64) -> C64 {
        self.chi + self.nu * a
    }

    pub fn conj(&self) -> Self {
        Self {
            gamma: self.gamma.map(|z| z.conj()),
            kmix: self.kmix.map(|r| r.map(|z| z.conj())),
            psi: self.psi.conj(),
            chi: self.chi.conj(),
            nu: self.nu.conj(),
        }
    }

    pub fn to_array(&self) -> [C64; NV] {
        let mut y = [C64::default(); NV];
        y[..6].copy_from_slice(&self.gamma);
        for i in 0..3 {
            y[6 + 3 * i..9 + 3 * i].copy_from_slice(&self.kmix[i]);
        }
        y[15] = self.psi;
        y[16] = self.chi;
        y[17] = self.nu;
        y
    }

    pub fn from_array(y: &[C64; NV]) -> Self {
        let mut s = Self::zero();
        s.gamma.copy_from_slice(&y[..6]);
        for i in 0..3 {
            s.kmix[i].copy_from_slice(&y[6 + 3 * i..9 + 3 * i]);
        }
        s.psi = y[15];
        s.chi = y[16];
        s.nu = y[17];
        s
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gauge {
    Cmc,
    Parabolic { lambda: f64 },
}

impl Gauge {
    /// `1/lambda`, zero in CMC gauge.
    pub fn inv_lambda(&self) -> f64 {
        match *self {
            Gauge::Cmc => 0.0,
            Gauge::Parabolic { lambda } => 1.0 / lambda,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            Gauge::Cmc => None,
            Gauge::Parabolic { lambda } => Some(lambda),
        }
    }

    pub fn is_parabolic(&self) -> bool {
        matches!(self, Gauge::Parabolic { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gauge::Cmc => "cmc",
            Gauge::Parabolic { .. } => "parabolic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub bg: KasnerBackground,
    pub gauge: Gauge,
    pub lattice: Lattice,
    pub modes: Vec<ModeState>,
    /// Set once `nu` holds the gauge's lapse (solved in CMC, evolved in parabolic gauge).
    pub lapse_populated: bool,
}

impl FieldState {
    pub fn zero(bg: KasnerBackground, gauge: Gauge, k_max: i32, t: f64) -> Self {
        let lattice = Lattice::new(k_max);
        Self { t, bg, gauge, lattice, modes: vec![ModeState::zero(); lattice.len()], lapse_populated: true }
    }

    pub fn tau(&self) -> f64 {
        self.t.ln()
    }

    pub fn k_max(&self) -> i32 {
        self.lattice.k_max
    }

    pub fn mode(&self, k: ModeIndex) -> Option<&ModeState> {
        self.lattice.index_of(k).map(|i| &self.modes[i])
    }

    pub fn mode_mut(&mut self, k: ModeIndex) -> Option<&mut ModeState> {
        self.lattice.index_of(k).map(move |i| &mut self.modes[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, &ModeState)> {
        self.modes.iter().enumerate().map(move |(i, m)| (self.lattice.mode(i), m))
    }

    /// Largest `|f_{-k} - conj(f_k)|` over every stored coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, m) in self.iter() {
            let partner = self.mode(-k).expect("lattice closed under negation");
            let a = m.to_array();
            let b = partner.conj().to_array();
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        worst
    }

    /// Overwrites every non-canonical mode with the conjugate of its partner.
    pub fn enforce_hermitian(&mut self) {
        for i in 0..self.modes.len() {
            let k = self.lattice.mode(i);
            if k.is_zero() {
                let m = &mut self.modes[i];
                let re = |z: C64| C64::new(z.re, 0.0);
                m.gamma = m.gamma.map(re);
                m.kmix = m.kmix.map(|r| r.map(re));
                m.psi = re(m.psi);
                m.chi = re(m.chi);
                m.nu = re(m.nu);
            } else if !k.is_canonical() {
                let j = self.lattice.index_of(-k).unwrap();
                self.modes[i] = self.modes[j].conj();
            }
        }
    }
}

/// Components of a field at one mode, with their `g_K` contraction weights.
#[derive(Debug, Clone, Copy)]
pub struct Components {
    pub n: usize,
    pub v: [C64; 27],
    pub w: [f64; 27],
}

impl Components {
    fn new() -> Self {
        Self { n: 0, v: [C64::default(); 27], w: [0.0; 27] }
    }

    fn push(&mut self, v: C64, w: f64) {
        self.v[self.n] = v;
        self.w[self.n] = w;
        self.n += 1;
    }

    pub fn frame_sq(&self) -> f64 {
        self.v[..self.n].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn gk_sq(&self) -> f64 {
        self.v[..self.n].iter().zip(&self.w[..self.n]).map(|(z, w)| w * z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    /// `gamma_ij`, all nine components.
    Gamma,
    /// `d_e gamma_ij`.
    GradGamma,
    /// `K^i_j`.
    Kmix,
    Psi,
    GradPsi,
    /// `t d_t Psi`.
    Pi,
    Chi,
    Nu,
    GradNu,
}

impl Field {
    pub fn components(&self, k: ModeIndex, m: &ModeState, a: f64, ginv: &[f64; 3]) -> Components {
        let kf = k.as_f64();
        let ik = kf.map(|x| C64::new(0.0, x));
        let g = ginv.map(|x| 1.0 / x);
        let mut c = Components::new();
        match self {
            Field::Gamma => {
                for i in 0..3 {
                    for j in 0..3 {
                        c.push(m.gamma_at(i, j), ginv[i] * ginv[j]);
                    }
                }
            }
            Field::GradGamma => {
                for e in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            c.push(ik[e] * m.gamma_at(i, j), ginv[e] * ginv[i] * ginv[j]);
                        }
                    }
                }
            }
            Field::Kmix => {
                for i in 0..3 {
                    for j in 0..3 {
                        c.push(m.kmix[i][j], g[i] * ginv[j]);
                    }
                }
            }
            Field::Psi => c.push(m.psi, 1.0),
            Field::Pi => c.push(m.pi(a), 1.0),
            Field::Chi => c.push(m.chi, 1.0),
            Field::Nu => c.push(m.nu, 1.0),
            Field::GradPsi => {
                for e in 0..3 {
                    c.push(ik[e] * m.psi, ginv[e]);
                }
            }
            Field::GradNu => {
                for e in 0..3 {
                    c.push(ik[e] * m.nu, ginv[e]);
                }
            }
        }
        c
    }
}

/// Multi-indices `(n1, n2, n3)` with `n1 + n2 + n3 <= m`.
pub fn multi_indices(m: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=m {
        for n1 in 0..=total {
            for n2 in 0..=(total - n1) {
                out.push([n1, n2, total - n1 - n2]);
            }
        }
    }
    out
}

fn k_power_sq(k: [f64; 3], idx: [u32; 3]) -> f64 {
    (0..3).map(|j| k[j].powi(2 * idx[j] as i32)).product()
}

/// `sum_{|I| <= m} sqrt((2 pi)^3 sum_k |k^I|^2 s_k)` for per-mode squared magnitudes `s_k`.
pub fn sobolev_from_mode_sq(lattice: &Lattice, per_mode_sq: &[f64], m: u32) -> f64 {
    multi_indices(m)
        .into_iter()
        .map(|idx| {
            let s: f64 =
                per_mode_sq.iter().enumerate().map(|(i, &v)| k_power_sq(lattice.mode(i).as_f64(), idx) * v).sum();
            (VOLUME * s).sqrt()
        })
        .sum()
}

/// `sum_{|I| <= m} |k^I|^2`, the weight turning a mode's energy density into its order-`m` sum.
pub fn order_weight(k: ModeIndex, m: u32) -> f64 {
    let kf = k.as_f64();
    multi_indices(m).into_iter().map(|idx| k_power_sq(kf, idx)).sum()
}

fn per_mode<F: Fn(&Components) -> f64>(field: Field, state: &FieldState, f: F) -> Vec<f64> {
    let (_, ginv) = state.bg.metric_at_log(state.tau());
    state.iter().map(|(k, m)| f(&field.components(k, m, state.bg.a(), &ginv))).collect()
}

pub fn l2_norm(field: Field, state: &FieldState) -> f64 {
    sobolev_norm_frame(field, 0, state)
}

pub fn sobolev_norm_frame(field: Field, m: u32, state: &FieldState) -> f64 {
    let sq = per_mode(field, state, Components::frame_sq);
    sobolev_from_mode_sq(&state.lattice, &sq, m)
}

pub fn sobolev_norm_gk(field: Field, m: u32, state: &FieldState) -> f64 {
    let sq = per_mode(field, state, Components::gk_sq);
    sobolev_from_mode_sq(&state.lattice, &sq, m)
}

/// High solution norm: CMC sums the lapse over three orders, parabolic gauge over two.
pub fn solution_norm(state: &FieldState, m: u32) -> Result<f64> {
    if !state.lapse_populated {
        return Err(Error::MissingLapse);
    }
    let t23 = (2.0 / 3.0 * state.tau()).exp();
    let lapse_orders = if state.gauge.is_parabolic() { 1 } else { 2 };
    let mut total = sobolev_norm_frame(Field::Kmix, m, state)
        + sobolev_norm_frame(Field::GradGamma, m, state)
        + sobolev_norm_frame(Field::Pi, m, state)
        + t23 * sobolev_norm_frame(Field::GradPsi, m, state);
    for p in 0..=lapse_orders {
        total += t23.powi(p as i32) * sobolev_norm_frame(Field::Nu, m + p, state);
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotBackground {
    pub q: [f64; 3],
    #[serde(rename = "A")]
    pub a: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotMode {
    pub k: [i32; 3],
    pub gamma: [[f64; 2]; 6],
    pub kmix: [[f64; 2]; 9],
    pub psi: [f64; 2],
    pub chi: [f64; 2],
    pub nu: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub gauge: Gauge,
    pub bg: SnapshotBackground,
    pub modes: Vec<SnapshotMode>,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

impl Snapshot {
    pub fn from_state(state: &FieldState) -> Self {
        let modes = state
            .iter()
            .map(|(k, m)| {
                let mut kmix = [[0.0; 2]; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        kmix[3 * i + j] = pair(m.kmix[i][j]);
                    }
                }
                SnapshotMode {
                    k: k.k,
                    gamma: m.gamma.map(pair),
                    kmix,
                    psi: pair(m.psi),
                    chi: pair(m.chi),
                    nu: pair(m.nu),
                }
            })
            .collect();
        Self {
            t: state.t,
            gauge: state.gauge,
            bg: SnapshotBackground { q: state.bg.q(), a: state.bg.a(), sigma: state.bg.sigma() },
            modes,
        }
    }

    /// Rebuilds a state; `bg` must be the background the snapshot was taken on.
    pub fn to_state(&self, bg: KasnerBackground) -> Result<FieldState> {
        let k_max = self.modes.iter().flat_map(|m| m.k.iter().map(|x| x.abs())).max().unwrap_or(0);
        let mut state = FieldState::zero(bg, self.gauge, k_max, self.t);
        for sm in &self.modes {
            let m = state
                .mode_mut(ModeIndex::new(sm.k))
                .ok_or_else(|| Error::Config(format!("mode {:?} outside lattice", sm.k)))?;
            m.gamma = sm.gamma.map(unpair);
            for i in 0..3 {
                for j in 0..3 {
                    m.kmix[i][j] = unpair(sm.kmix[3 * i + j]);
                }
            }
            m.psi = unpair(sm.psi);
            m.chi = unpair(sm.chi);
            m.nu = unpair(sm.nu);
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn flrw_state(k_max: i32, t: f64) -> FieldState {
        FieldState::zero(KasnerBackground::flrw(), Gauge::Cmc, k_max, t)
    }

    /// `sin(x . k)` has coefficients `-i/2` at `k` and `i/2` at `-k`.
    fn set_sine(state: &mut FieldState, k: [i32; 3], f: impl Fn(&mut ModeState, C64)) {
        f(state.mode_mut(ModeIndex::new(k)).unwrap(), C64::new(0.0, -0.5));
        f(state.mode_mut(-ModeIndex::new(k)).unwrap(), C64::new(0.0, 0.5));
    }

    #[test]
    fn volume_constant() {
        assert_relative_eq!(VOLUME, (2.0 * PI).powi(3), max_relative = 1e-15);
    }

    #[test]
    fn lattice_roundtrip() {
        let lat = Lattice::new(4);
        assert_eq!(lat.len(), 729);
        for i in 0..lat.len() {
            assert_eq!(lat.index_of(lat.mode(i)), Some(i));
        }
        assert_eq!(lat.canonical().len(), 365);
        assert_eq!(lat.index_of(ModeIndex::new([5, 0, 0])), None);
    }

    #[test]
    fn l2_examples() {
        let mut s = flrw_state(2, 1.0);
        assert_eq!(l2_norm(Field::Psi, &s), 0.0);
        set_sine(&mut s, [1, 0, 0], |m, z| m.psi = z);
        assert_relative_eq!(l2_norm(Field::Psi, &s), 2.0 * PI.powf(1.5), max_relative = 1e-14);
        assert_relative_eq!(l2_norm(Field::Psi, &s), 11.136_650_000, max_relative = 1e-6);

        let mut c = flrw_state(1, 1.0);
        c.mode_mut(ModeIndex::new([0, 0, 0])).unwrap().psi = C64::new(-3.0, 0.0);
        assert_relative_eq!(l2_norm(Field::Psi, &c), 3.0 * (2.0 * PI).powf(1.5), max_relative = 1e-14);
    }

    #[test]
    fn sobolev_examples() {
        let mut s = flrw_state(2, 1.0);
        set_sine(&mut s, [1, 0, 0], |m, z| m.psi = z);
        let base = 2.0 * PI.powf(1.5);
        assert_relative_eq!(sobolev_norm_frame(Field::Psi, 0, &s), base, max_relative = 1e-14);
        assert_relative_eq!(sobolev_norm_frame(Field::Psi, 1, &s), 2.0 * base, max_relative = 1e-14);

        let mut p = flrw_state(2, 1.0);
        p.mode_mut(ModeIndex::new([1, 2, 0])).unwrap().psi = C64::new(0.5, 0.0);
        p.mode_mut(ModeIndex::new([-1, -2, 0])).unwrap().psi = C64::new(0.5, 0.0);
        let l2 = l2_norm(Field::Psi, &p);
        // (0,0,0),(1,0,0),(0,1,0),(2,0,0),(1,1,0),(0,2,0) contribute 1,1,2,1,2,4.
        assert_relative_eq!(sobolev_norm_frame(Field::Psi, 2, &p), 11.0 * l2, max_relative = 1e-14);
    }

    #[test]
    fn gk_examples() {
        let mut s = flrw_state(2, 1.0);
        set_sine(&mut s, [1, 0, 0], |m, z| m.gamma[3] = z);
        for f in [Field::Gamma, Field::GradGamma, Field::Kmix, Field::Psi] {
            assert_relative_eq!(sobolev_norm_gk(f, 2, &s), sobolev_norm_frame(f, 2, &s), max_relative = 1e-14);
        }
        // One-form with first component sin x^1: psi = -cos x^1 has d_1 psi = sin x^1.
        let t = 0.3;
        let mut one = flrw_state(2, t);
        one.mode_mut(ModeIndex::new([1, 0, 0])).unwrap().psi = C64::new(-0.5, 0.0);
        one.mode_mut(ModeIndex::new([-1, 0, 0])).unwrap().psi = C64::new(-0.5, 0.0);
        assert_relative_eq!(
            sobolev_norm_gk(Field::GradPsi, 0, &one),
            t.powf(-1.0 / 3.0) * 2.0 * PI.powf(1.5),
            max_relative = 1e-13
        );
    }

    #[test]
    fn mixed_background_tensor_norm_is_time_independent() {
        let bg = KasnerBackground::from_exponents(0.5, 0.3, true).unwrap();
        let (_, kh) = bg.rescaled_secfund();
        let norm_at = |t: f64| {
            let mut s = FieldState::zero(bg, Gauge::Cmc, 0, t);
            for i in 0..3 {
                s.modes[0].kmix[i][i] = C64::new(kh[i], 0.0);
            }
            sobolev_norm_gk(Field::Kmix, 0, &s)
        };
        assert_relative_eq!(norm_at(1.0), norm_at(1e-6), max_relative = 1e-13);
        assert_relative_eq!(norm_at(1.0), bg.sigma() * VOLUME.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn solution_norm_examples() {
        let mut z = flrw_state(1, 0.5);
        assert_eq!(solution_norm(&z, 2).unwrap(), 0.0);
        z.modes[z.lattice.index_of(ModeIndex::new([0, 0, 0])).unwrap()].chi = C64::new(1.0, 0.0);
        assert_relative_eq!(solution_norm(&z, 3).unwrap(), VOLUME.sqrt(), max_relative = 1e-14);
        z.lapse_populated = false;
        assert_eq!(solution_norm(&z, 0), Err(Error::MissingLapse));

        let mut one = flrw_state(1, 1.0);
        set_sine(&mut one, [0, 1, 0], |m, v| {
            m.nu = v;
            m.psi = v;
            m.kmix[0][1] = v;
        });
        let sum = sobolev_norm_frame(Field::Kmix, 1, &one)
            + sobolev_norm_frame(Field::GradGamma, 1, &one)
            + sobolev_norm_frame(Field::Pi, 1, &one)
            + sobolev_norm_frame(Field::GradPsi, 1, &one)
            + sobolev_norm_frame(Field::Nu, 1, &one)
            + sobolev_norm_frame(Field::Nu, 2, &one)
            + sobolev_norm_frame(Field::Nu, 3, &one);
        assert_relative_eq!(solution_norm(&one, 1).unwrap(), sum, max_relative = 1e-14);
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(0).len(), 1);
        assert_eq!(multi_indices(2).len(), 10);
        assert_eq!(multi_indices(4).len(), 35);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut s = flrw_state(1, 0.25);
        set_sine(&mut s, [1, -1, 0], |m, z| {
            m.gamma[4] = z;
            m.kmix[2][1] = z * 3.0;
            m.nu = z;
        });
        let json = serde_json::to_string(&Snapshot::from_state(&s)).unwrap();
        let back: Snapshot = serde_json::from_str(&json).unwrap();
        let r = back.to_state(s.bg).unwrap();
        assert_eq!(r.modes, s.modes);
        assert_eq!(r.t, s.t);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["gauge"]["kind"], "cmc");
        assert!(v["bg"]["A"].is_number());
        assert_eq!(v["modes"][0]["kmix"].as_array().unwrap().len(), 9);
    }

    proptest! {
        /// Mode-space norms against direct quadrature on a `2(2 k_max + 1)` grid per axis.
        #[test]
        fn parseval_matches_quadrature(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k_max = 2;
            let mut s = flrw_state(k_max, 1.0);
            for i in s.lattice.canonical() {
                s.modes[i].psi = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            s.enforce_hermitian();
            let n = 2 * (2 * k_max as usize + 1);
            let h = 2.0 * PI / n as f64;
            let mut quad = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let x = [a as f64 * h, b as f64 * h, c as f64 * h];
                        let mut f = C64::default();
                        for (k, m) in s.iter() {
                            let ph: f64 = (0..3).map(|j| k.as_f64()[j] * x[j]).sum();
                            f += m.psi * C64::from_polar(1.0, ph);
                        }
                        prop_assert!(f.im.abs() < 1e-12);
                        quad += f.re * f.re;
                    }
                }
            }
            quad *= h.powi(3);
            let spectral = l2_norm(Field::Psi, &s).powi(2);
            prop_assert!((quad - spectral).abs() <= 1e-10 * spectral);
        }

        #[test]
        fn derivative_commutation(seed in 0u64..1000, m in 0u32..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = flrw_state(2, 0.7);
            for i in s.lattice.canonical() {
                s.modes[i].psi = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            s.enforce_hermitian();
            prop_assert!(s.hermitian_defect() == 0.0);
            // || d_1 psi ||_{H^m} built by hand equals the k-weighted sums.
            let mut d1 = s.clone();
            for (i, md) in d1.modes.iter_mut().enumerate() {
                md.psi *= C64::new(0.0, f64::from(s.lattice.mode(i).k[0]));
            }
            let direct = sobolev_norm_frame(Field::Psi, m, &d1);
            let sq: Vec<f64> = s.iter().map(|(k, md)| f64::from(k.k[0] * k.k[0]) * md.psi.norm_sqr()).collect();
            let weighted = sobolev_from_mode_sq(&s.lattice, &sq, m);
            prop_assert!((direct - weighted).abs() <= 1e-13 * weighted.max(1e-300));
        }
    }
}
