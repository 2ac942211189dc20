//! 1-D slab finite-volume solvers for the Euler (EME) and Navier-Stokes
//! (NSME) systems with mass exchange, plus the exact ideal-gas Riemann
//! solution used as a reference for the single-mass case.
//!
//! Energy follows the convention E = ρ|u|² + nρΘ⟨m⁻¹⟩_β (twice the usual
//! total energy).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::Velocity;
use crate::error::{KinexError, Result};
use crate::kinetic::{RawMoments, BETA_TOL};
use crate::mass_law::MassLaw;

/// Fluid fields (ρ, u, Θ, β).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: Velocity,
    pub theta: f64,
    pub beta: f64,
}

/// Conserved densities (N, ρ, P, E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedState {
    pub pop: f64,
    pub rho: f64,
    pub p: Velocity,
    pub e: f64,
}

impl ConservedState {
    pub fn to_raw(&self) -> RawMoments {
        RawMoments { n_raw: self.pop, rho: self.rho, p: self.p, e: self.e }
    }

    pub fn from_raw(r: &RawMoments) -> Self {
        Self { pop: r.n_raw, rho: r.rho, p: r.p, e: r.e }
    }

    fn to_array(self) -> [f64; 6] {
        [self.pop, self.rho, self.p[0], self.p[1], self.p[2], self.e]
    }

    fn from_array(a: &[f64; 6]) -> Self {
        Self { pop: a[0], rho: a[1], p: Velocity::new(a[2], a[3], a[4]), e: a[5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Periodic,
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub cells: usize,
    pub dx: f64,
    pub bc: BoundaryCondition,
    pub eps: f64,
}

impl Grid1D {
    pub fn new(cells: usize, length: f64, bc: BoundaryCondition, eps: f64) -> Result<Self> {
        if cells < 2 || !(length > 0.0) || !(eps >= 0.0) {
            return Err(KinexError::Validation("need >= 2 cells, positive length and eps >= 0".into()));
        }
        Ok(Self { cells, dx: length / cells as f64, bc, eps })
    }

    /// Cell-centre coordinate on [0, cells·dx].
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    FirstOrder,
    Minmod,
}

/// Spatial order and CFL number of the finite-volume steppers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvScheme {
    pub reconstruction: Reconstruction,
    pub cfl: f64,
}

impl Default for FvScheme {
    fn default() -> Self {
        Self { reconstruction: Reconstruction::Minmod, cfl: 0.45 }
    }
}

fn check_prim(p: &PrimitiveState) -> Result<()> {
    if !(p.rho > 0.0) {
        return Err(KinexError::Domain(format!("rho = {} must be positive", p.rho)));
    }
    if !(p.theta > 0.0) {
        return Err(KinexError::Domain(format!("Theta = {} must be positive", p.theta)));
    }
    if !p.beta.is_finite() {
        return Err(KinexError::Domain("beta must be finite".into()));
    }
    Ok(())
}

pub fn prim_to_cons(law: &MassLaw, p: &PrimitiveState) -> Result<ConservedState> {
    check_prim(p)?;
    let y = law.inv_mass_mean(p.beta);
    let n = law.dim() as f64;
    Ok(ConservedState {
        pop: p.rho * y,
        rho: p.rho,
        p: p.u * p.rho,
        e: p.rho * p.u.norm_squared() + n * p.rho * p.theta * y,
    })
}

pub fn cons_to_prim(law: &MassLaw, c: &ConservedState) -> Result<PrimitiveState> {
    let n = law.dim() as f64;
    if !(c.rho > 0.0) {
        return Err(KinexError::Domain(format!("rho = {} must be positive", c.rho)));
    }
    if !(c.pop > 0.0) {
        return Err(KinexError::Domain(format!("N = {} must be positive", c.pop)));
    }
    let u = c.p / c.rho;
    let theta_t = (c.e / c.rho - u.norm_squared()) / n;
    if !(theta_t > 0.0) {
        return Err(KinexError::Domain(format!(
            "E - |P|^2/rho = {} must be positive",
            c.e - c.p.norm_squared() / c.rho
        )));
    }
    let y = c.pop / c.rho;
    let beta = law.beta_from_inv_mass_mean(y, BETA_TOL).map_err(|e| match e {
        KinexError::Domain(_) => KinexError::Domain(format!(
            "N/rho = {y} outside the admissible range (1/{}, 1]",
            law.m_max()
        )),
        other => other,
    })?;
    Ok(PrimitiveState { rho: c.rho, u, theta: theta_t / law.inv_mass_mean(beta), beta })
}

/// x-direction Euler flux (N u_x, ρ u_x, ρ u_x u + p̃ e_x, (ρ|u|² + (n+2)p̃) u_x).
pub fn euler_flux(law: &MassLaw, p: &PrimitiveState) -> ConservedState {
    let y = law.inv_mass_mean(p.beta);
    let n = law.dim() as f64;
    let pt = p.rho * p.theta * y;
    let ux = p.u[0];
    let mut mom = p.u * (p.rho * ux);
    mom[0] += pt;
    ConservedState {
        pop: p.rho * y * ux,
        rho: p.rho * ux,
        p: mom,
        e: (p.rho * p.u.norm_squared() + (n + 2.0) * pt) * ux,
    }
}

/// |u| + c with c² = (n+2)/n · Θ⟨m⁻¹⟩_β.
pub fn max_wave_speed(law: &MassLaw, p: &PrimitiveState) -> f64 {
    let n = law.dim() as f64;
    p.u.norm() + ((n + 2.0) / n * p.theta * law.inv_mass_mean(p.beta)).sqrt()
}

/// Reconstruction variables (ρ, u, p̃, y = N/ρ); enough for the Euler flux.
#[derive(Debug, Clone, Copy)]
struct Wvar {
    rho: f64,
    u: Velocity,
    pt: f64,
    y: f64,
}

impl Wvar {
    fn from_cons(c: &[f64; 6], n: f64) -> Self {
        let rho = c[1];
        let u = Velocity::new(c[2], c[3], c[4]) / rho;
        Self { rho, u, pt: (c[5] - rho * u.norm_squared()) / n, y: c[0] / rho }
    }

    fn admissible(&self, m_max: usize) -> bool {
        let lo = 1.0 / m_max as f64;
        self.rho > 0.0
            && self.pt > 0.0
            && self.rho.is_finite()
            && self.pt.is_finite()
            && if m_max == 1 { (self.y - 1.0).abs() < 1e-9 } else { self.y > lo && self.y < 1.0 }
    }

    fn to_vec(self) -> [f64; 6] {
        [self.rho, self.u[0], self.u[1], self.u[2], self.pt, self.y]
    }

    fn from_vec(a: &[f64; 6]) -> Self {
        Self { rho: a[0], u: Velocity::new(a[1], a[2], a[3]), pt: a[4], y: a[5] }
    }

    fn cons(&self, n: f64) -> [f64; 6] {
        let e = self.rho * self.u.norm_squared() + n * self.pt;
        [self.rho * self.y, self.rho, self.rho * self.u[0], self.rho * self.u[1], self.rho * self.u[2], e]
    }

    fn flux(&self, n: f64) -> [f64; 6] {
        let ux = self.u[0];
        let e = self.rho * self.u.norm_squared() + n * self.pt;
        [
            self.rho * self.y * ux,
            self.rho * ux,
            self.rho * self.u[0] * ux + self.pt,
            self.rho * self.u[1] * ux,
            self.rho * self.u[2] * ux,
            (e + 2.0 * self.pt) * ux,
        ]
    }

    fn sound(&self, n: f64) -> f64 {
        ((n + 2.0) / n * self.pt / self.rho).sqrt()
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// HLL flux with Davis wave-speed bounds.
fn hll(l: &Wvar, r: &Wvar, n: f64) -> [f64; 6] {
    let (cl, cr) = (l.sound(n), r.sound(n));
    let sl = (l.u[0] - cl).min(r.u[0] - cr);
    let sr = (l.u[0] + cl).max(r.u[0] + cr);
    let fl = l.flux(n);
    let fr = r.flux(n);
    if sl >= 0.0 {
        return fl;
    }
    if sr <= 0.0 {
        return fr;
    }
    let ul = l.cons(n);
    let ur = r.cons(n);
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[k] = (sr * fl[k] - sl * fr[k] + sl * sr * (ur[k] - ul[k])) / (sr - sl);
    }
    out
}

fn ghost(i: isize, cells: usize, bc: BoundaryCondition) -> usize {
    match bc {
        BoundaryCondition::Periodic => i.rem_euclid(cells as isize) as usize,
        BoundaryCondition::Outflow => i.clamp(0, cells as isize - 1) as usize,
    }
}

/// −∂_x F by HLL fluxes; entry i of the result is the rate of change of cell i.
fn hyperbolic_rhs(law: &MassLaw, u: &[[f64; 6]], grid: &Grid1D, rec: Reconstruction) -> Result<Vec<[f64; 6]>> {
    let n = law.dim() as f64;
    let cells = grid.cells;
    let w: Vec<Wvar> = u.iter().map(|c| Wvar::from_cons(c, n)).collect();
    if let Some(i) = w.iter().position(|x| !x.admissible(law.m_max())) {
        return Err(KinexError::Step(format!("cell {i} left the admissible set")));
    }
    let at = |i: isize| w[ghost(i, cells, grid.bc)];
    let slopes: Vec<[f64; 6]> = (0..cells as isize)
        .map(|i| {
            if rec == Reconstruction::FirstOrder {
                return [0.0; 6];
            }
            let (a, b, c) = (at(i - 1).to_vec(), at(i).to_vec(), at(i + 1).to_vec());
            let mut s = [0.0; 6];
            for k in 0..6 {
                s[k] = minmod(b[k] - a[k], c[k] - b[k]);
            }
            let mut lo = b;
            let mut hi = b;
            for k in 0..6 {
                lo[k] -= 0.5 * s[k];
                hi[k] += 0.5 * s[k];
            }
            if Wvar::from_vec(&lo).admissible(law.m_max()) && Wvar::from_vec(&hi).admissible(law.m_max()) {
                s
            } else {
                [0.0; 6]
            }
        })
        .collect();
    let face_state = |i: isize, side: f64| -> Wvar {
        let j = ghost(i, cells, grid.bc);
        let mut b = w[j].to_vec();
        for k in 0..6 {
            b[k] += side * 0.5 * slopes[j][k];
        }
        Wvar::from_vec(&b)
    };
    // flux[k] sits at the left face of cell k
    let flux: Vec<[f64; 6]> = (0..=cells as isize)
        .map(|k| hll(&face_state(k - 1, 1.0), &face_state(k, -1.0), n))
        .collect();
    Ok((0..cells)
        .map(|i| {
            let mut r = [0.0; 6];
            for k in 0..6 {
                r[k] = -(flux[i + 1][k] - flux[i][k]) / grid.dx;
            }
            r
        })
        .collect())
}

/// Transport coefficients (μ, κ, ν).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportCoeffs {
    pub mu: f64,
    pub kappa: f64,
    pub nu: f64,
}

pub fn transport_coeffs(law: &MassLaw, p: &PrimitiveState) -> TransportCoeffs {
    let w = law.weights(p.beta);
    let (a1, a2) = (w.mass_power_mean(-1), w.mass_power_mean(-2));
    let n = law.dim() as f64;
    let rt = p.rho * p.theta;
    let nu = if law.m_max() == 1 { 0.0 } else { rt * (a2 - a1 * a1) };
    TransportCoeffs { mu: rt * a1, kappa: 0.5 * (n + 2.0) * rt * a2, nu }
}

/// χ = log(ρΘ / Σ_m m e^{βm}/γ_m).
pub fn population_potential_chi(law: &MassLaw, p: &PrimitiveState) -> f64 {
    (p.rho * p.theta).ln() - law.weights(p.beta).log_big_w
}

/// χ = log((2π)^{n/2} ρ Θ^{(n+2)/2} / Z(β, Θ)).
pub fn population_potential_chi_alt(law: &MassLaw, p: &PrimitiveState) -> f64 {
    let n = law.dim() as f64;
    0.5 * n * (2.0 * std::f64::consts::PI).ln() + p.rho.ln() + 0.5 * (n + 2.0) * p.theta.ln()
        - law.log_partition_z(p.beta, p.theta)
}

/// Rate-of-strain σ(u) for a slab where only ∂_x is nonzero.
pub fn slab_sigma(n: usize, du: &Velocity) -> nalgebra::DMatrix<f64> {
    let nf = n as f64;
    nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let grad = |a: usize, b: usize| if a == 0 { du[b] } else { 0.0 };
        let trace = if i == j { 2.0 / nf * du[0] } else { 0.0 };
        grad(i, j) + grad(j, i) - trace
    })
}

/// State, coefficients and two-point gradients at a cell interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceData {
    pub state: PrimitiveState,
    pub coeffs: TransportCoeffs,
    pub d_rho: f64,
    pub d_u: Velocity,
    pub d_theta: f64,
    pub d_beta: f64,
    /// ⟨m⟩ at the face β.
    pub mass_mean: f64,
}

impl FaceData {
    /// ∂_x χ by the chain rule at the face state.
    pub fn d_chi(&self) -> f64 {
        self.d_rho / self.state.rho + self.d_theta / self.state.theta - self.mass_mean * self.d_beta
    }
}

/// Face data between cells `l` and `r`.
pub fn face_data(law: &MassLaw, l: &PrimitiveState, r: &PrimitiveState, cl: &TransportCoeffs, cr: &TransportCoeffs, dx: f64) -> FaceData {
    let state = PrimitiveState {
        rho: 0.5 * (l.rho + r.rho),
        u: (l.u + r.u) * 0.5,
        theta: 0.5 * (l.theta + r.theta),
        beta: 0.5 * (l.beta + r.beta),
    };
    FaceData {
        state,
        coeffs: TransportCoeffs {
            mu: 0.5 * (cl.mu + cr.mu),
            kappa: 0.5 * (cl.kappa + cr.kappa),
            nu: 0.5 * (cl.nu + cr.nu),
        },
        d_rho: (r.rho - l.rho) / dx,
        d_u: (r.u - l.u) / dx,
        d_theta: (r.theta - l.theta) / dx,
        d_beta: (r.beta - l.beta) / dx,
        mass_mean: law.mass_mean(state.beta),
    }
}

/// Face data for every interface; entry k is the left face of cell k, and
/// the last entry the right face of the last cell.
pub fn all_faces(law: &MassLaw, prims: &[PrimitiveState], grid: &Grid1D) -> Vec<FaceData> {
    let cells = grid.cells;
    let coeffs: Vec<TransportCoeffs> = prims.iter().map(|p| transport_coeffs(law, p)).collect();
    (0..=cells as isize)
        .map(|k| {
            let a = ghost(k - 1, cells, grid.bc);
            let b = ghost(k, cells, grid.bc);
            face_data(law, &prims[a], &prims[b], &coeffs[a], &coeffs[b], grid.dx)
        })
        .collect()
}

/// Physical NSME diffusive flux (x-component) for (N, ρ, P, E) at a face.
pub fn physical_face_flux(n: usize, f: &FaceData, eps: f64) -> ConservedState {
    let nf = n as f64;
    let c = &f.coeffs;
    let dchi = f.d_chi();
    let mut sig = Velocity::zeros();
    sig[0] = 2.0 * (nf - 1.0) / nf * f.d_u[0];
    for j in 1..n {
        sig[j] = f.d_u[j];
    }
    let su: f64 = (0..n).map(|j| sig[j] * f.state.u[j]).sum();
    ConservedState {
        pop: eps * c.nu * dchi,
        rho: 0.0,
        p: sig * (eps * c.mu),
        e: eps * ((nf + 2.0) * c.nu * f.state.theta * dchi + 2.0 * c.kappa * f.d_theta + 2.0 * c.mu * su),
    }
}

/// Diffusive fluxes at every interface (see [`all_faces`] for indexing).
pub fn nsme_diffusive_fluxes(law: &MassLaw, prims: &[PrimitiveState], grid: &Grid1D, eps: f64) -> Vec<ConservedState> {
    all_faces(law, prims, grid)
        .iter()
        .map(|f| physical_face_flux(law.dim(), f, eps))
        .collect()
}

/// Per-cell diffusive rate of change (F_{i+1/2} − F_{i−1/2})/dx.
pub fn nsme_diffusive_rhs(law: &MassLaw, prims: &[PrimitiveState], grid: &Grid1D, eps: f64) -> Vec<ConservedState> {
    let fl = nsme_diffusive_fluxes(law, prims, grid, eps);
    (0..grid.cells)
        .map(|i| {
            let (a, b) = (fl[i].to_array(), fl[i + 1].to_array());
            let mut r = [0.0; 6];
            for k in 0..6 {
                r[k] = (b[k] - a[k]) / grid.dx;
            }
            ConservedState::from_array(&r)
        })
        .collect()
}

/// Largest diffusivity governing the explicit step limit.
pub fn max_diffusivity(law: &MassLaw, prims: &[PrimitiveState]) -> f64 {
    let n = law.dim() as f64;
    prims
        .iter()
        .map(|p| {
            let c = transport_coeffs(law, p);
            let w = law.weights(p.beta);
            let (y, mm) = (w.mass_power_mean(-1), w.mass_power_mean(1));
            let visc = 2.0 * c.mu / p.rho;
            let heat = 2.0 * c.kappa / (n * p.rho * y);
            let pop = if law.m_max() > 1 { c.nu * mm / (p.rho * (y * mm - 1.0)) } else { 0.0 };
            let coupled = (n + 2.0) * c.nu * p.theta / (n * p.rho * y);
            visc.max(heat + coupled).max(pop + coupled)
        })
        .fold(0.0, f64::max)
}

/// Largest stable step for [`nsme_step`] (or [`eme_step`] when ε = 0).
pub fn stable_dt(law: &MassLaw, states: &[ConservedState], grid: &Grid1D, eps: f64, cfl: f64) -> Result<f64> {
    let prims: Vec<PrimitiveState> = states.iter().map(|c| cons_to_prim(law, c)).collect::<Result<_>>()?;
    let lam = prims.iter().map(|p| max_wave_speed(law, p)).fold(0.0, f64::max);
    let mut dt = cfl * grid.dx / lam;
    if eps > 0.0 {
        dt = dt.min(0.4 * grid.dx * grid.dx / (eps * max_diffusivity(law, &prims)));
    }
    Ok(dt)
}

fn rhs(law: &MassLaw, u: &[[f64; 6]], grid: &Grid1D, rec: Reconstruction, eps: f64) -> Result<Vec<[f64; 6]>> {
    let mut r = hyperbolic_rhs(law, u, grid, rec)?;
    if eps > 0.0 {
        let prims: Vec<PrimitiveState> = u
            .par_iter()
            .map(|c| cons_to_prim(law, &ConservedState::from_array(c)))
            .collect::<Result<_>>()
            .map_err(|e| KinexError::Step(format!("inadmissible state in diffusive update: {e}")))?;
        let d = nsme_diffusive_rhs(law, &prims, grid, eps);
        for (ri, di) in r.iter_mut().zip(&d) {
            let a = di.to_array();
            for k in 0..6 {
                ri[k] += a[k];
            }
        }
    }
    Ok(r)
}

fn advance(law: &MassLaw, states: &[ConservedState], grid: &Grid1D, dt: f64, eps: f64, scheme: &FvScheme) -> Result<Vec<ConservedState>> {
    if states.len() != grid.cells {
        return Err(KinexError::Validation("state count differs from grid cells".into()));
    }
    let prims: Vec<PrimitiveState> = states.iter().map(|c| cons_to_prim(law, c)).collect::<Result<_>>()?;
    let lam = prims.iter().map(|p| max_wave_speed(law, p)).fold(0.0, f64::max);
    if dt * lam > scheme.cfl * grid.dx * (1.0 + 1e-12) {
        return Err(KinexError::Step(format!("CFL violated: dt = {dt}, limit {}", scheme.cfl * grid.dx / lam)));
    }
    if eps > 0.0 {
        let lim = 0.4 * grid.dx * grid.dx / (eps * max_diffusivity(law, &prims));
        if dt > lim * (1.0 + 1e-12) {
            return Err(KinexError::Step(format!("diffusive step limit violated: dt = {dt}, limit {lim}")));
        }
    }
    let u0: Vec<[f64; 6]> = states.iter().map(|c| c.to_array()).collect();
    let euler = |u: &[[f64; 6]], r: &[[f64; 6]]| -> Vec<[f64; 6]> {
        u.iter()
            .zip(r)
            .map(|(a, b)| {
                let mut o = *a;
                for k in 0..6 {
                    o[k] += dt * b[k];
                }
                o
            })
            .collect()
    };
    let r0 = rhs(law, &u0, grid, scheme.reconstruction, eps)?;
    let u1 = euler(&u0, &r0);
    let out = match scheme.reconstruction {
        Reconstruction::FirstOrder => u1,
        Reconstruction::Minmod => {
            let r1 = rhs(law, &u1, grid, scheme.reconstruction, eps)?;
            let u2 = euler(&u1, &r1);
            u0.iter()
                .zip(&u2)
                .map(|(a, b)| {
                    let mut o = [0.0; 6];
                    for k in 0..6 {
                        o[k] = 0.5 * a[k] + 0.5 * b[k];
                    }
                    o
                })
                .collect()
        }
    };
    let n = law.dim() as f64;
    if let Some(i) = out.iter().position(|c| !Wvar::from_cons(c, n).admissible(law.m_max())) {
        return Err(KinexError::Step(format!("cell {i} became inadmissible")));
    }
    Ok(out.iter().map(ConservedState::from_array).collect())
}

/// One EME step (HLL, MUSCL-minmod with SSP-RK2, or first order with
/// forward Euler).
pub fn eme_step(law: &MassLaw, states: &[ConservedState], grid: &Grid1D, dt: f64, scheme: &FvScheme) -> Result<Vec<ConservedState>> {
    advance(law, states, grid, dt, 0.0, scheme)
}

/// One NSME step: HLL hyperbolic part plus explicit diffusive fluxes.
pub fn nsme_step(law: &MassLaw, states: &[ConservedState], grid: &Grid1D, dt: f64, eps: f64, scheme: &FvScheme) -> Result<Vec<ConservedState>> {
    if !(eps >= 0.0) {
        return Err(KinexError::Validation(format!("eps = {eps} must be >= 0")));
    }
    advance(law, states, grid, dt, eps, scheme)
}

/// Semi-discrete NSME right-hand side per cell (hyperbolic plus diffusive).
pub fn nsme_rhs(law: &MassLaw, states: &[ConservedState], grid: &Grid1D, eps: f64, rec: Reconstruction) -> Result<Vec<ConservedState>> {
    let u: Vec<[f64; 6]> = states.iter().map(|c| c.to_array()).collect();
    Ok(rhs(law, &u, grid, rec, eps)?.iter().map(ConservedState::from_array).collect())
}

/// Sum of cell values times dx.
pub fn totals(states: &[ConservedState], dx: f64) -> ConservedState {
    let mut t = [0.0; 6];
    for c in states {
        let a = c.to_array();
        for k in 0..6 {
            t[k] += a[k];
        }
    }
    for v in t.iter_mut() {
        *v *= dx;
    }
    ConservedState::from_array(&t)
}

/// (ρ, u, p) of a single-mass gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiemannState {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

/// Exact solution of the ideal-gas Riemann problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannSolution {
    pub left: RiemannState,
    pub right: RiemannState,
    pub gamma: f64,
    pub p_star: f64,
    pub u_star: f64,
}

fn pressure_fn(p: f64, s: &RiemannState, g: f64) -> (f64, f64) {
    let c = (g * s.p / s.rho).sqrt();
    if p > s.p {
        let a = 2.0 / ((g + 1.0) * s.rho);
        let b = (g - 1.0) / (g + 1.0) * s.p;
        let q = (a / (p + b)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (b + p)))
    } else {
        let r = p / s.p;
        let e = (g - 1.0) / (2.0 * g);
        (2.0 * c / (g - 1.0) * (r.powf(e) - 1.0), r.powf(-(g + 1.0) / (2.0 * g)) / (s.rho * c))
    }
}

/// Pressure-function Newton iteration for the star state (tolerance 1e-12).
pub fn exact_riemann_single_mass(left: RiemannState, right: RiemannState, gamma: f64) -> Result<RiemannSolution> {
    for s in [&left, &right] {
        if !(s.rho > 0.0 && s.p > 0.0) {
            return Err(KinexError::Domain("Riemann states need positive density and pressure".into()));
        }
    }
    let g = gamma;
    let cl = (g * left.p / left.rho).sqrt();
    let cr = (g * right.p / right.rho).sqrt();
    let du = right.u - left.u;
    if 2.0 / (g - 1.0) * (cl + cr) <= du {
        return Err(KinexError::Domain("initial data generate vacuum".into()));
    }
    let pv = 0.5 * (left.p + right.p) - 0.125 * du * (left.rho + right.rho) * (cl + cr);
    let mut p = pv.max(1e-8 * (left.p + right.p));
    for _ in 0..100 {
        let (fl, dl) = pressure_fn(p, &left, g);
        let (fr, dr) = pressure_fn(p, &right, g);
        let mut next = p - (fl + fr + du) / (dl + dr);
        if next <= 0.0 {
            next = 0.5 * p;
        }
        let change = 2.0 * (next - p).abs() / (next + p);
        p = next;
        if change <= 1e-12 {
            let (fl, _) = pressure_fn(p, &left, g);
            let (fr, _) = pressure_fn(p, &right, g);
            let u_star = 0.5 * (left.u + right.u) + 0.5 * (fr - fl);
            return Ok(RiemannSolution { left, right, gamma, p_star: p, u_star });
        }
    }
    Err(KinexError::Convergence("Riemann pressure iteration did not converge".into()))
}

impl RiemannSolution {
    /// Solution at similarity coordinate ξ = x/t.
    pub fn sample(&self, xi: f64) -> RiemannState {
        let g = self.gamma;
        let (ps, us) = (self.p_star, self.u_star);
        let side = |s: &RiemannState, dir: f64| -> RiemannState {
            // dir = −1 for the left wave, +1 for the right wave
            let c = (g * s.p / s.rho).sqrt();
            if ps > s.p {
                let ratio = ps / s.p;
                let shock = s.u + dir * c * ((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g)).sqrt();
                if dir * (xi - shock) >= 0.0 {
                    *s
                } else {
                    let gm = (g - 1.0) / (g + 1.0);
                    RiemannState { rho: s.rho * (ratio + gm) / (gm * ratio + 1.0), u: us, p: ps }
                }
            } else {
                let cs = c * (ps / s.p).powf((g - 1.0) / (2.0 * g));
                let head = s.u + dir * c;
                let tail = us + dir * cs;
                if dir * (xi - head) >= 0.0 {
                    *s
                } else if dir * (xi - tail) <= 0.0 {
                    RiemannState { rho: s.rho * (ps / s.p).powf(1.0 / g), u: us, p: ps }
                } else {
                    let k = 2.0 / (g + 1.0);
                    let c_fan = k * (c - dir * (g - 1.0) / 2.0 * (s.u - xi));
                    let u = k * (-dir * c + (g - 1.0) / 2.0 * s.u + xi);
                    let rho = s.rho * (c_fan / c).powf(2.0 / (g - 1.0));
                    RiemannState { rho, u, p: s.p * (c_fan / c).powf(2.0 * g / (g - 1.0)) }
                }
            }
        };
        if xi <= us {
            side(&self.left, -1.0)
        } else {
            side(&self.right, 1.0)
        }
    }
}
