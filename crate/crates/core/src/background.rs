//! Kasner backgrounds `-dt^2 + sum_i t^{2 q_i} (dx^i)^2` with scalar field `A ln t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONSTRAINT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KasnerBackground {
    q: [f64; 3],
    #[serde(rename = "A")]
    a: f64,
    sigma: f64,
    q_max: f64,
    strict_positive: bool,
}

impl KasnerBackground {
    /// Builds the background from the first two exponents; `q3 = 1 - q1 - q2`.
    pub fn from_exponents(q1: f64, q2: f64, strict_positive: bool) -> Result<Self> {
        let q = [q1, q2, 1.0 - q1 - q2];
        let sum_sq: f64 = q.iter().map(|x| x * x).sum();
        if sum_sq > 1.0 + CONSTRAINT_SLACK || !sum_sq.is_finite() {
            return Err(Error::ExponentDomain { sum_sq });
        }
        if strict_positive && q.iter().any(|&x| x <= 0.0) {
            return Err(Error::ExponentSign { q });
        }
        let a = (1.0 - sum_sq).max(0.0).sqrt();
        let third = 1.0 / 3.0;
        let sigma = q.iter().map(|x| (x - third) * (x - third)).sum::<f64>().sqrt();
        let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { q, a, sigma, q_max, strict_positive })
    }

    pub fn flrw() -> Self {
        let third = 1.0 / 3.0;
        Self { q: [third; 3], a: (2.0f64 / 3.0).sqrt(), sigma: 0.0, q_max: third, strict_positive: true }
    }

    /// Member of the family at anisotropy `sigma` along the fixed direction
    /// `(1, 0, -1)/sqrt 2` in exponent space; all three exponents are distinct for `sigma > 0`.
    pub fn with_anisotropy(sigma: f64, strict_positive: bool) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(Self { strict_positive, ..Self::flrw() });
        }
        let d = sigma / std::f64::consts::SQRT_2;
        let third = 1.0 / 3.0;
        Self::from_exponents(third + d, third, strict_positive)
    }

    pub fn q(&self) -> [f64; 3] {
        self.q
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn strict_positive(&self) -> bool {
        self.strict_positive
    }

    /// Diagonal of `g_K(t)` and of its inverse.
    pub fn metric_at(&self, t: f64) -> Result<([f64; 3], [f64; 3])> {
        check_time(t)?;
        Ok(self.metric_at_log(t.ln()))
    }

    /// Same as [`metric_at`](Self::metric_at) from `tau = ln t`; powers are `exp(2 q_i tau)`.
    pub fn metric_at_log(&self, tau: f64) -> ([f64; 3], [f64; 3]) {
        let mut g = [0.0; 3];
        let mut ginv = [0.0; 3];
        for i in 0..3 {
            g[i] = (2.0 * self.q[i] * tau).exp();
            ginv[i] = (-2.0 * self.q[i] * tau).exp();
        }
        (g, ginv)
    }

    pub fn kretschmann(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let q = self.q;
        let s2: f64 = q.iter().map(|x| x * x).sum();
        let s3: f64 = q.iter().map(|x| x * x * x).sum();
        let s4: f64 = q.iter().map(|x| x.powi(4)).sum();
        let cross = q[0] * q[0] * q[1] * q[1] + q[0] * q[0] * q[2] * q[2] + q[1] * q[1] * q[2] * q[2];
        let t4 = (-4.0 * t.ln()).exp();
        Ok(4.0 * t4 * (s4 + cross + s2 - 2.0 * s3))
    }

    /// Diagonals of `t K_K = diag(-q_i)` and its trace-free part `diag(1/3 - q_i)`.
    pub fn rescaled_secfund(&self) -> ([f64; 3], [f64; 3]) {
        let k = self.q.map(|x| -x);
        let kh = self.q.map(|x| 1.0 / 3.0 - x);
        (k, kh)
    }

    /// `|k_hat|_{g_K}`, evaluated by the full mixed-index contraction at time `t`.
    pub fn secfund_norm_at(&self, t: f64) -> Result<f64> {
        let (g, ginv) = self.metric_at(t)?;
        let (_, kh) = self.rescaled_secfund();
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let kij = if i == j { kh[i] } else { 0.0 };
                s += g[i] * ginv[j] * kij * kij;
            }
        }
        Ok(s.sqrt())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveTime(t))
    }
}
