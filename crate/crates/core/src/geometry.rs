//! Linearized spatial curvature of `g_K + gamma` for a single Fourier mode.
//!
//! With diagonal `g_K`, every contraction collapses to a weighted sum; `ginv[a]` is `g^{aa}`.

use crate::background::KasnerBackground;
use crate::error::Result;
use crate::spectral::{ModeIndex, C64};

/// Background quantities shared by every per-mode computation at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFrame {
    pub k: [f64; 3],
    pub g: [f64; 3],
    pub ginv: [f64; 3],
    pub t: f64,
    pub t2: f64,
    /// `g^{ab} k_a k_b`.
    pub mu: f64,
}

impl ModeFrame {
    pub fn new(k: ModeIndex, bg: &KasnerBackground, t: f64) -> Result<Self> {
        bg.metric_at(t)?;
        Ok(Self::at_log(k, bg, t.ln()))
    }

    pub fn at_log(k: ModeIndex, bg: &KasnerBackground, tau: f64) -> Self {
        let (g, ginv) = bg.metric_at_log(tau);
        let k = k.as_f64();
        let mu = (0..3).map(|a| ginv[a] * k[a] * k[a]).sum();
        Self { k, g, ginv, t: tau.exp(), t2: (2.0 * tau).exp(), mu }
    }

    pub fn ik(&self, a: usize) -> C64 {
        C64::new(0.0, self.k[a])
    }
}

/// `christ[a][i][b] = Gamma^i_{ab}`.
pub type Christoffel = [[[C64; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub christ: Christoffel,
    /// `V^i = g^{ee} Gamma^i_{ee}`.
    pub v: [C64; 3],
    /// `S_b = Gamma^a_{ab}`.
    pub s: [C64; 3],
    pub scalar: C64,
    /// `Ric^i_j`, first index raised.
    pub ricci: [[C64; 3]; 3],
}

fn gam(gamma: &[C64; 6], i: usize, j: usize) -> C64 {
    gamma[crate::spectral::sym_index(i, j)]
}

pub fn christoffel_lin(gamma: &[C64; 6], f: &ModeFrame) -> Christoffel {
    let mut c = [[[C64::default(); 3]; 3]; 3];
    for a in 0..3 {
        for i in 0..3 {
            for b in 0..3 {
                let t = f.ik(a) * gam(gamma, i, b) + f.ik(b) * gam(gamma, a, i) - f.ik(i) * gam(gamma, a, b);
                c[a][i][b] = t * (0.5 * f.ginv[i]);
            }
        }
    }
    c
}

pub fn scalar_curv_lin(gamma: &[C64; 6], f: &ModeFrame) -> C64 {
    curvature(gamma, f).scalar
}

pub fn ricci_lin(gamma: &[C64; 6], f: &ModeFrame) -> [[C64; 3]; 3] {
    curvature(gamma, f).ricci
}

pub fn curvature(gamma: &[C64; 6], f: &ModeFrame) -> Curvature {
    let christ = christoffel_lin(gamma, f);
    let mut v = [C64::default(); 3];
    let mut s = [C64::default(); 3];
    for i in 0..3 {
        for e in 0..3 {
            v[i] += christ[e][i][e] * f.ginv[e];
            s[i] += christ[e][e][i];
        }
    }
    let tr: C64 = (0..3).map(|a| gam(gamma, a, a) * f.ginv[a]).sum();
    let div: C64 = (0..3).map(|a| f.ik(a) * v[a]).sum();
    let scalar = tr * (0.5 * f.mu) + div;
    let mut ricci = [[C64::default(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ricci[i][j] = gam(gamma, j, i) * (0.5 * f.ginv[i] * f.mu)
                + f.ik(j) * v[i] * 0.5
                + f.ik(i) * v[j] * (0.5 * f.ginv[i] * f.g[j]);
        }
    }
    Curvature { christ, v, s, scalar, ricci }
}

/// `R` and its explicit `tau`-derivative at fixed `gamma`, from `R = mu tr_g gamma - k^a k^b gamma_ab`.
pub fn scalar_curv_with_tau_derivative(gamma: &[C64; 6], f: &ModeFrame, q: &[f64; 3]) -> (C64, C64) {
    let mut r = C64::default();
    let mut dr = C64::default();
    let dmu: f64 = (0..3).map(|a| -2.0 * q[a] * f.ginv[a] * f.k[a] * f.k[a]).sum();
    for a in 0..3 {
        let w = f.ginv[a];
        r += gam(gamma, a, a) * (f.mu * w);
        dr += gam(gamma, a, a) * (dmu * w - 2.0 * q[a] * f.mu * w);
        for e in 0..3 {
            let we = f.ginv[a] * f.ginv[e] * f.k[a] * f.k[e];
            r -= gam(gamma, a, e) * we;
            dr += gam(gamma, a, e) * (2.0 * (q[a] + q[e]) * we);
        }
    }
    (r, dr)
}
