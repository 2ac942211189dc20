//! Mass statistics: rate factors γ_m, β-weighted averages, the partition
//! function Z(β, Θ) and the Gaussian moment formulas.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KinexError, Result};

/// Truncated mass law: masses 1..=M_max with rate factors γ_m and velocity
/// dimension n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLaw {
    gamma: Vec<f64>,
    n: usize,
}

/// Weights w_m = m e^{βm}/γ_m, kept in log form so extreme β stays finite.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaWeights {
    pub beta: f64,
    /// log w_m, index m-1.
    pub log_w: Vec<f64>,
    /// log W = log Σ_m w_m.
    pub log_big_w: f64,
    /// Normalised weights w_m / W.
    pub p: Vec<f64>,
}

impl BetaWeights {
    pub fn w(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    pub fn big_w(&self) -> f64 {
        self.log_big_w.exp()
    }

    /// ⟨a_m⟩_β for `a` indexed by m-1.
    pub fn average(&self, a: &[f64]) -> f64 {
        self.p.iter().zip(a).map(|(p, a)| p * a).sum()
    }

    /// ⟨m^k⟩_β.
    pub fn mass_power_mean(&self, k: i32) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(i, p)| p * ((i + 1) as f64).powi(k))
            .sum()
    }
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(KinexError::Validation(format!("velocity dimension {n} not in 1..=3")))
    }
}

impl MassLaw {
    /// Explicit table γ_1..γ_{M_max}.
    pub fn new(gamma: Vec<f64>, n: usize) -> Result<Self> {
        check_dim(n)?;
        if gamma.is_empty() {
            return Err(KinexError::Validation("M_max must be at least 1".into()));
        }
        if let Some((i, g)) = gamma.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
            return Err(KinexError::Validation(format!(
                "gamma_{} = {g} must be strictly positive and finite",
                i + 1
            )));
        }
        Ok(Self { gamma, n })
    }

    /// γ_m ≡ 1.
    pub fn uniform(m_max: usize, n: usize) -> Result<Self> {
        Self::new(vec![1.0; m_max], n)
    }

    /// γ_m = c m^a e^{bm}.
    pub fn family(m_max: usize, a: f64, b: f64, c: f64, n: usize) -> Result<Self> {
        let gamma = (1..=m_max)
            .map(|m| {
                let m = m as f64;
                c * m.powf(a) * (b * m).exp()
            })
            .collect();
        Self::new(gamma, n)
    }

    pub fn with_dim(&self, n: usize) -> Result<Self> {
        Self::new(self.gamma.clone(), n)
    }

    pub fn m_max(&self) -> usize {
        self.gamma.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// γ_m for 1-based mass `m`.
    pub fn gamma(&self, m: usize) -> f64 {
        self.gamma[m - 1]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().cloned().fold(0.0, f64::max)
    }

    pub fn weights(&self, beta: f64) -> BetaWeights {
        let log_w: Vec<f64> = self
            .gamma
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let m = (i + 1) as f64;
                m.ln() + beta * m - g.ln()
            })
            .collect();
        let shift = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = log_w.iter().map(|l| (l - shift).exp()).collect();
        let sum: f64 = scaled.iter().sum();
        let p = scaled.iter().map(|s| s / sum).collect();
        BetaWeights {
            beta,
            log_w,
            log_big_w: shift + sum.ln(),
            p,
        }
    }

    /// log Z(β, Θ); finite for any finite β.
    pub fn log_partition_z(&self, beta: f64, theta: f64) -> f64 {
        let n = self.n as f64;
        0.5 * n * (2.0 * std::f64::consts::PI * theta).ln() + self.weights(beta).log_big_w
    }

    /// Z(β, Θ) = (2πΘ)^{n/2} Σ_m m e^{βm}/γ_m.
    pub fn partition_z(&self, beta: f64, theta: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(KinexError::Domain(format!("Theta = {theta} must be positive")));
        }
        let z = self.log_partition_z(beta, theta).exp();
        if z.is_finite() && z > 0.0 {
            Ok(z)
        } else {
            Err(KinexError::Range { beta })
        }
    }

    pub fn beta_average(&self, beta: f64, a: &[f64]) -> Result<f64> {
        if a.len() != self.m_max() {
            return Err(KinexError::Validation(format!(
                "sequence length {} differs from M_max = {}",
                a.len(),
                self.m_max()
            )));
        }
        let v = self.weights(beta).average(a);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(KinexError::Range { beta })
        }
    }

    pub fn inv_mass_mean(&self, beta: f64) -> f64 {
        self.weights(beta).mass_power_mean(-1)
    }

    pub fn mass_mean(&self, beta: f64) -> f64 {
        self.weights(beta).mass_power_mean(1)
    }

    pub fn inv_mass_sq_mean(&self, beta: f64) -> f64 {
        self.weights(beta).mass_power_mean(-2)
    }

    /// ∂⟨m⁻¹⟩_β/∂β = 1 − ⟨m⁻¹⟩_β⟨m⟩_β.
    pub fn d_inv_mass_mean_d_beta(&self, beta: f64) -> f64 {
        if self.m_max() == 1 {
            return 0.0;
        }
        let w = self.weights(beta);
        1.0 - w.mass_power_mean(-1) * w.mass_power_mean(1)
    }

    /// Inverts β ↦ ⟨m⁻¹⟩_β.
    ///
    /// The map decreases strictly from 1 (β → −∞) to 1/M_max (β → +∞), so a
    /// bracket always exists; Newton steps are taken when they stay inside it.
    pub fn beta_from_inv_mass_mean(&self, target: f64, tol: f64) -> Result<f64> {
        let mm = self.m_max() as f64;
        if self.m_max() == 1 {
            return if (target - 1.0).abs() <= tol.max(1e-12) {
                Ok(0.0)
            } else {
                Err(KinexError::Domain(format!(
                    "mean inverse mass {target} must equal 1 for a single-mass law"
                )))
            };
        }
        if !(target > 1.0 / mm && target < 1.0) {
            return Err(KinexError::Domain(format!(
                "mean inverse mass {target} outside the open interval (1/{mm}, 1)"
            )));
        }
        let f = |b: f64| self.inv_mass_mean(b) - target;
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut expand = 0;
        while f(lo) < 0.0 {
            lo *= 2.0;
            expand += 1;
            if expand > 60 {
                return Err(KinexError::Convergence("could not bracket beta from below".into()));
            }
        }
        while f(hi) > 0.0 {
            hi *= 2.0;
            expand += 1;
            if expand > 120 {
                return Err(KinexError::Convergence("could not bracket beta from above".into()));
            }
        }
        // f(lo) >= 0 >= f(hi)
        let mut beta = 0.0_f64.clamp(lo, hi);
        for _ in 0..200 {
            let r = f(beta);
            if r.abs() <= tol {
                return Ok(beta);
            }
            if r > 0.0 {
                lo = beta;
            } else {
                hi = beta;
            }
            let d = self.d_inv_mass_mean_d_beta(beta);
            let newton = beta - r / d;
            beta = if d < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + beta.abs()) {
                return Ok(beta);
            }
        }
        Err(KinexError::Convergence(format!(
            "beta inversion for target {target} did not converge in 200 iterations"
        )))
    }
}

/// Which tensor the Gaussian moment formula returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentKind {
    Scalar,
    Tensor2,
    Tensor4,
}

/// Value of a Gaussian moment.
#[derive(Debug, Clone, PartialEq)]
pub enum GaussianMoment {
    Scalar(f64),
    Tensor2(DMatrix<f64>),
    /// Row-major n⁴ array indexed (i, j, k, l).
    Tensor4 { n: usize, data: Vec<f64> },
}

/// Closed-form moments of exp(−m|v|²/2Θ) over ℝⁿ:
/// scalar ∫|v|^{2p}, tensor2 ∫|v|^{2p} v⊗v, tensor4 ∫v⊗v⊗v⊗v.
pub fn gaussian_moment(m: u32, theta: f64, n: usize, p: u32, kind: MomentKind) -> Result<GaussianMoment> {
    check_dim(n)?;
    if m == 0 || !(theta > 0.0) {
        return Err(KinexError::Domain("mass and Theta must be positive".into()));
    }
    let nf = n as f64;
    let s = theta / m as f64;
    let norm = (2.0 * std::f64::consts::PI * s).powf(0.5 * nf);
    Ok(match kind {
        MomentKind::Scalar => {
            let prod: f64 = (0..p).map(|k| nf + 2.0 * k as f64).product();
            GaussianMoment::Scalar(norm * prod * s.powi(p as i32))
        }
        MomentKind::Tensor2 => {
            let prod: f64 = (1..=p).map(|k| nf + 2.0 * k as f64).product();
            let c = norm * prod * s.powi(p as i32 + 1);
            GaussianMoment::Tensor2(DMatrix::identity(n, n) * c)
        }
        MomentKind::Tensor4 => {
            if p != 0 {
                return Err(KinexError::Validation("tensor4 moment is only defined for p = 0".into()));
            }
            let c = norm * s * s;
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            let mut data = Vec::with_capacity(n.pow(4));
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            data.push(c * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k)));
                        }
                    }
                }
            }
            GaussianMoment::Tensor4 { n, data }
        }
    })
}
