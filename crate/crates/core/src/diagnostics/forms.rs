//! Per-mode quadratic forms entering the energy identities.
//!
//! Each form is the integrand over the torus of one named term, divided by `(2 pi)^3`.
//! Spatial values are sums over all lattice modes times [`VOLUME`](crate::spectral::VOLUME).

use crate::background::KasnerBackground;
use crate::geometry::{Curvature, ModeFrame};
use crate::spectral::{ModeState, C64};
use crate::system::khk;

pub const NFORMS: usize = 19;

/// Names in storage order.
pub const FORM_NAMES: [&str; NFORMS] = [
    "pi2", "dpsi2", "dnu2", "nu2", "c1", "c2", "q1", "k2", "dgam2", "c3", "c4", "c5", "c6", "c7", "q3", "q3nu", "q4",
    "d2nu2", "khk2",
];

pub fn form_index(name: &str) -> Option<usize> {
    FORM_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Forms(pub [f64; NFORMS]);

macro_rules! accessors {
    ($($name:ident = $i:expr),* $(,)?) => {
        impl Forms {
            $(pub fn $name(&self) -> f64 { self.0[$i] })*
        }
    };
}

accessors!(
    pi2 = 0,
    dpsi2 = 1,
    dnu2 = 2,
    nu2 = 3,
    c1 = 4,
    c2 = 5,
    q1 = 6,
    k2 = 7,
    dgam2 = 8,
    c3 = 9,
    c4 = 10,
    c5 = 11,
    c6 = 12,
    c7 = 13,
    q3 = 14,
    q3nu = 15,
    q4 = 16,
    d2nu2 = 17,
    khk2 = 18,
);

impl Forms {
    pub fn get(&self, name: &str) -> Option<f64> {
        form_index(name).map(|i| self.0[i])
    }

    pub fn add_scaled(&mut self, other: &Forms, w: f64) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += w * b;
        }
    }
}

fn ip(a: C64, b: C64) -> f64 {
    (a * b.conj()).re
}

pub fn mode_forms(m: &ModeState, f: &ModeFrame, bg: &KasnerBackground, cv: &Curvature) -> Forms {
    let q = bg.q();
    let a = bg.a();
    let (_, kh) = bg.rescaled_secfund();
    let t2 = f.t2;
    let pi = m.pi(a);
    let nu = m.nu;
    let psi = m.psi;
    let mut out = [0.0; NFORMS];

    let gsq: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| f.ginv[i] * f.ginv[j] * m.gamma_at(i, j).norm_sqr())
        .sum();
    let khk_v = khk(m, &kh);
    let mu_q: f64 = (0..3).map(|e| -q[e] * f.ginv[e] * f.k[e] * f.k[e]).sum();

    out[0] = pi.norm_sqr();
    out[1] = t2 * f.mu * psi.norm_sqr();
    out[2] = t2 * f.mu * nu.norm_sqr();
    out[3] = nu.norm_sqr();
    out[4] = 2.0 * ip(khk_v, nu);
    out[5] = t2 * mu_q * psi.norm_sqr();
    out[6] = 2.0 * t2 * f.mu * ip(psi, nu);

    let mut k2 = 0.0;
    let mut c4 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let w = f.g[i] * f.ginv[j] * m.kmix[i][j].norm_sqr();
            k2 += w;
            c4 += 2.0 * w * (kh[i] - kh[j]);
        }
    }
    out[7] = k2;
    out[8] = t2 * f.mu * gsq;
    out[9] = t2 * mu_q * gsq;
    out[10] = c4;

    let mut c5 = 0.0;
    for b in 0..3 {
        let mut w = cv.v[b] * (f.g[b] * kh[b]) - cv.s[b] * kh[b];
        for i in 0..3 {
            w -= cv.christ[i][b][i] * (f.g[b] * f.ginv[i] * kh[i]);
            w += cv.christ[i][i][b] * kh[i];
        }
        c5 += ip(w, cv.v[b]);
    }
    out[11] = t2 * c5;

    let mut c6 = 0.0;
    let mut trq = C64::default();
    for j in 0..3 {
        let dnu = f.ik(j) * nu;
        let mut w = cv.s[j] * (f.ginv[j] * kh[j]);
        for i in 0..3 {
            w -= cv.christ[i][i][j] * (f.ginv[j] * kh[i]);
        }
        c6 += 2.0 * ip(w, dnu);
        trq -= m.gamma_at(j, j) * (q[j] * f.ginv[j]);
    }
    out[12] = t2 * (c6 + f.mu * ip(trq, nu));
    out[13] = out[4];

    let (mut q3, mut q3nu) = (0.0, 0.0);
    for e in 0..3 {
        q3 += ip(cv.v[e], f.ik(e) * psi);
        q3nu += ip(cv.v[e], f.ik(e) * nu);
    }
    out[14] = 2.0 * t2 * q3;
    out[15] = 2.0 * t2 * q3nu;
    out[16] = 2.0 * ip(pi, nu);
    out[17] = t2 * t2 * f.mu * f.mu * nu.norm_sqr();
    out[18] = khk_v.norm_sqr();
    Forms(out)
}

/// Sign audits: integrands claimed nonnegative, each given as (value, sum of |parts|).
pub const AUDIT_NAMES: [&str; 7] = ["dgam2", "dpsi2", "dnu2", "nu2", "d2nu2", "dpsi2+c2", "dgam2+c3"];

pub fn audit_ratios(fm: &Forms) -> [f64; 7] {
    let ratio = |v: f64, s: f64| if s > 0.0 { v / s } else { 0.0 };
    [
        ratio(fm.dgam2(), fm.dgam2().abs()),
        ratio(fm.dpsi2(), fm.dpsi2().abs()),
        ratio(fm.dnu2(), fm.dnu2().abs()),
        ratio(fm.nu2(), fm.nu2().abs()),
        ratio(fm.d2nu2(), fm.d2nu2().abs()),
        ratio(fm.dpsi2() + fm.c2(), fm.dpsi2().abs() + fm.c2().abs()),
        ratio(fm.dgam2() + fm.c3(), fm.dgam2().abs() + fm.c3().abs()),
    ]
}
