//! Two-particle collision kinematics with mass exchange.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{KinexError, Result};
use crate::mass_law::MassLaw;

/// Velocity in ℝⁿ stored in three slots; components beyond n stay zero.
pub type Velocity = Vector3<f64>;

/// Builds a velocity from up to three components.
pub fn velocity(c: &[f64]) -> Velocity {
    let mut v = Velocity::zeros();
    for (i, x) in c.iter().take(3).enumerate() {
        v[i] = *x;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub m: u32,
    pub v: Velocity,
}

impl Particle {
    pub fn new(m: u32, v: &[f64]) -> Self {
        Self { m, v: velocity(v) }
    }
}

/// Outgoing mass of the first particle and the deflection direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionChannel {
    pub m_out: u32,
    pub omega: Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Maxwell,
    PowerLaw,
}

/// Scattering kernel 𝐁(E_red, cosine), isotropic in the cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub c_b: f64,
    pub omega_exp: f64,
}

impl Kernel {
    pub fn maxwell(c_b: f64) -> Self {
        Self { kind: KernelKind::Maxwell, c_b, omega_exp: 0.0 }
    }

    pub fn power_law(c_b: f64, omega_exp: f64) -> Result<Self> {
        let k = Self { kind: KernelKind::PowerLaw, c_b, omega_exp };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_b >= 0.0 && self.c_b.is_finite()) {
            return Err(KinexError::Validation(format!("kernel amplitude {} must be finite and >= 0", self.c_b)));
        }
        if self.kind == KernelKind::PowerLaw && !(0.0..=0.5).contains(&self.omega_exp) {
            return Err(KinexError::Validation(format!(
                "power-law exponent {} outside [0, 1/2]",
                self.omega_exp
            )));
        }
        Ok(())
    }

    pub fn eval(&self, e_red: f64, _cosine: f64) -> f64 {
        match self.kind {
            KernelKind::Maxwell => self.c_b,
            KernelKind::PowerLaw => {
                if self.omega_exp == 0.0 {
                    self.c_b
                } else {
                    self.c_b * e_red.powf(self.omega_exp)
                }
            }
        }
    }
}

pub fn kernel_b(k: &Kernel, e_red: f64, cosine: f64) -> f64 {
    k.eval(e_red, cosine)
}

/// E_red = m m1/(m+m1) |g|².
pub fn reduced_energy(m: u32, m1: u32, g: &Velocity) -> f64 {
    let (a, b) = (m as f64, m1 as f64);
    a * b / (a + b) * g.norm_squared()
}

pub fn com_velocity(p: &Particle, q: &Particle) -> Velocity {
    let (a, b) = (p.m as f64, q.m as f64);
    (p.v * a + q.v * b) / (a + b)
}

/// Outgoing velocities of the collision law without any validation.
#[inline]
pub fn post_velocities(m: u32, m1: u32, v: &Velocity, v1: &Velocity, m_out: u32, omega: &Velocity) -> (Velocity, Velocity) {
    let (a, b) = (m as f64, m1 as f64);
    let mo = m_out as f64;
    let mo1 = a + b - mo;
    let vcm = (v * a + v1 * b) / (a + b);
    let g = v - v1;
    let gr = g - omega * (2.0 * g.dot(omega));
    let s = (a * b).sqrt() / (a + b);
    let vp = vcm + gr * (s * (mo1 / mo).sqrt());
    let v1p = vcm - gr * (s * (mo / mo1).sqrt());
    (vp, v1p)
}

fn check_channel(p: &Particle, q: &Particle, ch: &CollisionChannel) -> Result<()> {
    if p.m == 0 || q.m == 0 {
        return Err(KinexError::Domain("particle masses must be at least 1".into()));
    }
    let total = p.m + q.m;
    if ch.m_out < 1 || ch.m_out >= total {
        return Err(KinexError::Domain(format!(
            "outgoing mass {} outside 1..={}",
            ch.m_out,
            total - 1
        )));
    }
    let norm = ch.omega.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(KinexError::Validation(format!("|omega| = {norm} is not 1")));
    }
    let g = p.v - q.v;
    if ch.omega.dot(&g) > 1e-12 * g.norm() {
        return Err(KinexError::Validation("omega must satisfy omega.(v - v1) <= 0".into()));
    }
    Ok(())
}

/// Applies the collision law: (m, v), (m1, v1) → (m′, v′), (m+m1−m′, v′₁).
pub fn collide_forward(p: &Particle, q: &Particle, ch: &CollisionChannel) -> Result<(Particle, Particle)> {
    check_channel(p, q, ch)?;
    let (vp, v1p) = post_velocities(p.m, q.m, &p.v, &q.v, ch.m_out, &ch.omega);
    Ok((
        Particle { m: ch.m_out, v: vp },
        Particle { m: p.m + q.m - ch.m_out, v: v1p },
    ))
}

/// Inverse law: given the outgoing pair, `ch.m_out` the original first mass
/// and `ch.omega` the direction used in the forward collision, recovers the
/// incoming pair by applying the law with Ω′ = −Ω.
pub fn collide_inverse(p: &Particle, q: &Particle, ch: &CollisionChannel) -> Result<(Particle, Particle)> {
    let reversed = CollisionChannel { m_out: ch.m_out, omega: -ch.omega };
    collide_forward(p, q, &reversed)
}

/// J = (m′ m′₁/(m m1))^{n/2}, the Jacobian of (v′, v′₁) ↦ (v, v1).
pub fn velocity_jacobian(m: u32, m1: u32, m_out: u32, n: usize) -> f64 {
    let mo1 = (m + m1 - m_out) as f64;
    ((m_out as f64 * mo1) / (m as f64 * m1 as f64)).powf(0.5 * n as f64)
}

/// Outgoing masses m′ keeping both fragments inside 1..=M_max.
pub fn allowed_channels(law: &MassLaw, m: u32, m1: u32) -> std::ops::RangeInclusive<u32> {
    let mm = law.m_max() as u32;
    let total = m + m1;
    let lo = if total > mm { total - mm } else { 1 }.max(1);
    let hi = mm.min(total - 1);
    lo..=hi
}

pub fn channel_count(law: &MassLaw, m: u32, m1: u32) -> usize {
    let r = allowed_channels(law, m, m1);
    if r.is_empty() {
        0
    } else {
        (r.end() - r.start() + 1) as usize
    }
}

/// A_{m,m1;m′} = γ_m γ_{m1} on allowed channels, 0 elsewhere.
pub fn channel_rate_a(law: &MassLaw, m: u32, m1: u32, m_out: u32) -> f64 {
    let mm = law.m_max() as u32;
    if m == 0 || m1 == 0 || m > mm || m1 > mm || !allowed_channels(law, m, m1).contains(&m_out) {
        return 0.0;
    }
    law.gamma(m as usize) * law.gamma(m1 as usize)
}
