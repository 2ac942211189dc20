//! Discrete-velocity kinetic model: moments, discrete Maxwellians, the
//! mass-exchange collision operator, BGK relaxation and entropy.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{allowed_channels, post_velocities, reduced_energy, Kernel, Velocity};
use crate::error::{KinexError, Result};
use crate::mass_law::MassLaw;
use crate::thermo;

pub use crate::fluid::PrimitiveState as MacroFields;

/// Uniform Cartesian midpoint grid on [−v_max, v_max]ⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    n: usize,
    v_max: f64,
    n_v: usize,
    h: f64,
    #[serde(skip)]
    nodes: Vec<Velocity>,
}

/// Quadratic Lagrange stencil (3ⁿ nodes) around an off-grid velocity.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 27],
    pub w: [f64; 27],
    pub len: usize,
}

impl VelocityGrid {
    /// Grid with an even number of points per axis.
    pub fn new(n: usize, v_max: f64, n_v: usize) -> Result<Self> {
        if n_v % 2 != 0 {
            return Err(KinexError::Validation(format!(
                "N_v = {n_v} must be even (use new_any_parity to override)"
            )));
        }
        Self::new_any_parity(n, v_max, n_v)
    }

    pub fn new_any_parity(n: usize, v_max: f64, n_v: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(KinexError::Validation(format!("velocity dimension {n} not in 1..=3")));
        }
        if !(v_max > 0.0) || n_v < 3 {
            return Err(KinexError::Validation("need v_max > 0 and at least 3 points per axis".into()));
        }
        let h = 2.0 * v_max / n_v as f64;
        let count = n_v.pow(n as u32);
        let nodes = (0..count)
            .map(|k| {
                let mut v = Velocity::zeros();
                let mut r = k;
                for d in 0..n {
                    v[d] = -v_max + (r % n_v) as f64 * h + 0.5 * h;
                    r /= n_v;
                }
                v
            })
            .collect();
        Ok(Self { n, v_max, n_v, h, nodes })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn points_per_axis(&self) -> usize {
        self.n_v
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[Velocity] {
        &self.nodes
    }
    /// Midpoint quadrature weight hⁿ.
    pub fn weight(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Per-axis indices of a flattened node index.
    pub fn axis_indices(&self, k: usize) -> Vec<usize> {
        let mut r = k;
        (0..self.n)
            .map(|_| {
                let i = r % self.n_v;
                r /= self.n_v;
                i
            })
            .collect()
    }

    /// Quadratic interpolation stencil; `None` when `v` lies outside the
    /// node hull in some axis.
    pub fn stencil(&self, v: &Velocity) -> Option<Stencil> {
        let mut ax_idx = [[0usize; 3]; 3];
        let mut ax_w = [[0.0f64; 3]; 3];
        let last = (self.n_v - 1) as f64;
        for d in 0..self.n {
            let s = (v[d] + self.v_max) / self.h - 0.5;
            if !(s >= 0.0 && s <= last) {
                return None;
            }
            let c = (s.round() as usize).clamp(1, self.n_v - 2);
            let t = s - c as f64;
            ax_idx[d] = [c - 1, c, c + 1];
            ax_w[d] = [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)];
        }
        let mut st = Stencil { idx: [0; 27], w: [0.0; 27], len: 3usize.pow(self.n as u32) };
        for k in 0..st.len {
            let mut r = k;
            let mut flat = 0usize;
            let mut stride = 1usize;
            let mut w = 1.0;
            for d in 0..self.n {
                let a = r % 3;
                r /= 3;
                flat += ax_idx[d][a] * stride;
                stride *= self.n_v;
                w *= ax_w[d][a];
            }
            st.idx[k] = flat;
            st.w[k] = w;
        }
        Some(st)
    }
}

/// Distribution f_m(v) over cells, masses and velocity nodes, laid out as
/// `f[(cell * M_max + m - 1) * nodes + node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub law: MassLaw,
    pub grid: VelocityGrid,
    pub cells: usize,
    pub f: Vec<f64>,
}

impl KineticState {
    pub fn zeros(law: MassLaw, grid: VelocityGrid, cells: usize) -> Self {
        let len = cells * law.m_max() * grid.node_count();
        Self { law, grid, cells, f: vec![0.0; len] }
    }

    pub fn cell_len(&self) -> usize {
        self.law.m_max() * self.grid.node_count()
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let l = self.cell_len();
        &self.f[c * l..(c + 1) * l]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        let l = self.cell_len();
        &mut self.f[c * l..(c + 1) * l]
    }

    pub fn raw_moments(&self) -> Vec<RawMoments> {
        (0..self.cells).map(|c| raw_moments(&self.law, &self.grid, self.cell(c))).collect()
    }
}

/// Moments of f against (1, m, m v, m|v|²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMoments {
    pub n_raw: f64,
    pub rho: f64,
    pub p: Velocity,
    pub e: f64,
}

impl RawMoments {
    pub fn zero() -> Self {
        Self { n_raw: 0.0, rho: 0.0, p: Velocity::zeros(), e: 0.0 }
    }

    /// Entries in the canonical order (P_1..P_n, N, ρ, E).
    pub fn to_vector(&self, n: usize) -> Vec<f64> {
        let mut out: Vec<f64> = (0..n).map(|i| self.p[i]).collect();
        out.extend([self.n_raw, self.rho, self.e]);
        out
    }

    pub fn from_vector(x: &[f64], n: usize) -> Self {
        let mut p = Velocity::zeros();
        for i in 0..n {
            p[i] = x[i];
        }
        Self { n_raw: x[n], rho: x[n + 1], p, e: x[n + 2] }
    }
}

pub fn raw_moments(law: &MassLaw, grid: &VelocityGrid, f: &[f64]) -> RawMoments {
    let nodes = grid.nodes();
    let mut r = RawMoments::zero();
    for m in 1..=law.m_max() {
        let mf = m as f64;
        let fm = &f[(m - 1) * nodes.len()..m * nodes.len()];
        let (mut s0, mut s2, mut s1) = (0.0, 0.0, Velocity::zeros());
        for (v, &x) in nodes.iter().zip(fm) {
            s0 += x;
            s1 += v * x;
            s2 += x * v.norm_squared();
        }
        r.n_raw += s0;
        r.rho += mf * s0;
        r.p += s1 * mf;
        r.e += mf * s2;
    }
    let w = grid.weight();
    r.n_raw *= w;
    r.rho *= w;
    r.p *= w;
    r.e *= w;
    r
}

/// Tolerance used when inverting ⟨m⁻¹⟩_β inside moment conversions.
pub const BETA_TOL: f64 = 1e-15;

/// (N, ρ, P, E) → (ρ, u, Θ, β).
pub fn macro_from_moments(law: &MassLaw, raw: &RawMoments) -> Result<MacroFields> {
    let n = law.dim() as f64;
    if !(raw.rho > 0.0) {
        return Err(KinexError::Domain(format!("rho = {} must be positive", raw.rho)));
    }
    if !(raw.n_raw > 0.0) {
        return Err(KinexError::Domain(format!("N = {} must be positive", raw.n_raw)));
    }
    let u = raw.p / raw.rho;
    let internal = raw.e - raw.p.norm_squared() / raw.rho;
    if !(internal > 0.0) {
        return Err(KinexError::Domain(format!(
            "E - |P|^2/rho = {internal} must be positive"
        )));
    }
    let y = raw.n_raw / raw.rho;
    let beta = law.beta_from_inv_mass_mean(y, BETA_TOL).map_err(|e| match e {
        KinexError::Domain(_) => KinexError::Domain(format!(
            "N/rho = {y} outside the admissible range (1/{}, 1)",
            law.m_max()
        )),
        other => other,
    })?;
    Ok(MacroFields { rho: raw.rho, u, theta: internal / (n * raw.n_raw), beta })
}

fn moment_scales(t: &RawMoments) -> (f64, f64, f64, f64) {
    let pscale = (t.rho * t.e).sqrt();
    (t.n_raw.abs(), t.rho.abs(), pscale, t.e.abs())
}

/// Features μ = (m v, 1, m, m|v|²) and log prefactor log(m^{n/2}/γ_m) per
/// (mass, node).
fn features(law: &MassLaw, grid: &VelocityGrid) -> (Vec<[f64; 6]>, Vec<f64>) {
    let n = grid.dim();
    let mut mu = Vec::with_capacity(law.m_max() * grid.node_count());
    let mut pre = Vec::with_capacity(mu.capacity());
    for m in 1..=law.m_max() {
        let mf = m as f64;
        let lp = 0.5 * n as f64 * mf.ln() - law.gamma(m).ln();
        for v in grid.nodes() {
            let mut x = [0.0; 6];
            for d in 0..n {
                x[d] = mf * v[d];
            }
            x[n] = 1.0;
            x[n + 1] = mf;
            x[n + 2] = mf * v.norm_squared();
            mu.push(x);
            pre.push(lp);
        }
    }
    (mu, pre)
}

/// Evaluates f = exp(log prefactor + 𝒜·μ) on the grid.
fn exp_family(mu: &[[f64; 6]], pre: &[f64], a: &[f64]) -> Vec<f64> {
    let k = a.len();
    mu.iter()
        .zip(pre)
        .map(|(x, p)| {
            let mut s = *p;
            for i in 0..k {
                s += a[i] * x[i];
            }
            s.exp()
        })
        .collect()
}

/// Discrete Maxwellian and its entropic parameters (D, A, B, C).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMaxwellian {
    pub f: Vec<f64>,
    pub entropic: Vec<f64>,
    pub iterations: usize,
}

/// Moment-matched equilibrium on the discrete grid.
pub fn discrete_maxwellian(law: &MassLaw, grid: &VelocityGrid, target: &RawMoments) -> Result<Vec<f64>> {
    Ok(match_maxwellian(law, grid, target)?.f)
}

pub fn match_maxwellian(law: &MassLaw, grid: &VelocityGrid, target: &RawMoments) -> Result<DiscreteMaxwellian> {
    let n = grid.dim();
    let k = n + 3;
    let guess = macro_from_moments(law, target)?;
    let mut a = thermo::entropic_from_prim(law, &guess)?.to_vector(n);
    let (mu, pre) = features(law, grid);
    let w = grid.weight();
    let t = target.to_vector(n);
    let (sn, sr, sp, se) = moment_scales(target);
    let scale: Vec<f64> = (0..k)
        .map(|i| if i < n { sp } else if i == n { sn } else if i == n + 1 { sr } else { se })
        .collect();

    let eval = |a: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
        let f = exp_family(&mu, &pre, a);
        let mut mom = vec![0.0; k];
        let mut mass = 0.0;
        for (x, fi) in mu.iter().zip(&f) {
            mass += fi;
            for i in 0..k {
                mom[i] += fi * x[i];
            }
        }
        for v in mom.iter_mut() {
            *v *= w;
        }
        (f, mom, mass * w)
    };

    let (mut f, mut mom, mut mass) = eval(&a);
    for it in 0..50 {
        let res: Vec<f64> = (0..k).map(|i| mom[i] - t[i]).collect();
        let worst = (0..k).map(|i| res[i].abs() / scale[i]).fold(0.0, f64::max);
        if worst <= 1e-14 {
            return Ok(DiscreteMaxwellian { f, entropic: a, iterations: it });
        }
        if !worst.is_finite() {
            break;
        }
        let mut hmat = DMatrix::<f64>::zeros(k, k);
        for (x, fi) in mu.iter().zip(&f) {
            for i in 0..k {
                let c = fi * x[i];
                for j in i..k {
                    hmat[(i, j)] += c * x[j];
                }
            }
        }
        for i in 0..k {
            for j in i..k {
                hmat[(i, j)] *= w;
                hmat[(j, i)] = hmat[(i, j)];
            }
        }
        // Jacobi scaling keeps the solve well conditioned across moment magnitudes.
        let d: Vec<f64> = (0..k).map(|i| hmat[(i, i)].sqrt().max(1e-300)).collect();
        let hs = DMatrix::from_fn(k, k, |i, j| hmat[(i, j)] / (d[i] * d[j]));
        let rs = DVector::from_fn(k, |i, _| -res[i] / d[i]);
        let step = match hs.clone().cholesky() {
            Some(ch) => ch.solve(&rs),
            None => match hs.lu().solve(&rs) {
                Some(s) => s,
                None => break,
            },
        };
        let dir: Vec<f64> = (0..k).map(|i| step[i] / d[i]).collect();
        let obj = |mass: f64, a: &[f64]| mass - (0..k).map(|i| a[i] * t[i]).sum::<f64>();
        let cur = obj(mass, &a);
        let slope: f64 = (0..k).map(|i| res[i] * dir[i]).sum();
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..k).map(|i| a[i] + lam * dir[i]).collect();
            let (ft, mt, masst) = eval(&trial);
            let val = obj(masst, &trial);
            if val.is_finite() && val <= cur + 1e-4 * lam * slope + 1e-15 * cur.abs() {
                a = trial;
                f = ft;
                mom = mt;
                mass = masst;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            // Round-off floor: take the full step if it improves the residual.
            let trial: Vec<f64> = (0..k).map(|i| a[i] + dir[i]).collect();
            let (ft, mt, masst) = eval(&trial);
            let worst_t = (0..k).map(|i| (mt[i] - t[i]).abs() / scale[i]).fold(0.0, f64::max);
            if worst_t < worst {
                a = trial;
                f = ft;
                mom = mt;
                mass = masst;
            } else if worst <= 1e-12 {
                return Ok(DiscreteMaxwellian { f, entropic: a, iterations: it });
            } else {
                break;
            }
        }
    }
    let worst = (0..k).map(|i| (mom[i] - t[i]).abs() / scale[i]).fold(0.0, f64::max);
    if worst <= 1e-12 {
        return Ok(DiscreteMaxwellian { f, entropic: a, iterations: 50 });
    }
    Err(KinexError::Convergence(format!(
        "discrete Maxwellian matching stalled at relative residual {worst:e}; the velocity grid may not resolve the target state"
    )))
}

/// Discrete Maxwellian matched to the continuum moments of `p`.
pub fn maxwellian_from_prim(law: &MassLaw, grid: &VelocityGrid, p: &MacroFields) -> Result<Vec<f64>> {
    let c = crate::fluid::prim_to_cons(law, p)?;
    discrete_maxwellian(law, grid, &c.to_raw())
}

/// How f is evaluated at off-grid post-collision velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// exp of the interpolated log f; exact for discrete Maxwellians.
    Geometric,
    /// Plain quadratic interpolation of f.
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmeConfig {
    /// Angular nodes on the half circle (n = 2) or azimuthal nodes (n = 3).
    pub n_omega: usize,
    pub interpolation: Interpolation,
}

impl Default for BmeConfig {
    fn default() -> Self {
        Self { n_omega: 16, interpolation: Interpolation::Geometric }
    }
}

/// Q(f) together with the gain-type inflow used to normalise residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionTerm {
    pub q: Vec<f64>,
    pub gain: Vec<f64>,
}

/// Unit vectors Ω with Ω·ĝ ≤ 0 and their weights.
pub(crate) struct HalfSphere {
    n: usize,
    /// (cos, sin) pairs for n = 2; (cos θ, sin θ) for n = 3.
    polar: Vec<(f64, f64, f64)>,
    azimuth: Vec<(f64, f64)>,
}

impl HalfSphere {
    pub(crate) fn new(n: usize, n_omega: usize) -> Self {
        let pi = std::f64::consts::PI;
        match n {
            1 => Self { n, polar: vec![(-1.0, 0.0, 1.0)], azimuth: vec![] },
            2 => {
                let k = n_omega.max(1);
                let polar = (0..k)
                    .map(|i| {
                        let th = 0.5 * pi + (i as f64 + 0.5) * pi / k as f64;
                        (th.cos(), th.sin(), pi / k as f64)
                    })
                    .collect();
                Self { n, polar, azimuth: vec![] }
            }
            _ => {
                let kphi = n_omega.max(4);
                let kth = (n_omega / 4).max(2);
                let (x, w) = crate::quadrature::gauss_legendre(kth);
                let polar = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| {
                        let c = 0.5 * (x - 1.0);
                        (c, (1.0 - c * c).sqrt(), 0.5 * w * 2.0 * pi / kphi as f64)
                    })
                    .collect();
                let azimuth = (0..kphi)
                    .map(|i| {
                        let ph = 2.0 * pi * i as f64 / kphi as f64;
                        (ph.cos(), ph.sin())
                    })
                    .collect();
                Self { n, polar, azimuth }
            }
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self.n {
            3 => self.polar.len() * self.azimuth.len(),
            _ => self.polar.len(),
        }
    }

    /// Fills `out` with (Ω, weight) for relative velocity `g`.
    pub(crate) fn directions(&self, g: &Velocity, out: &mut Vec<(Velocity, f64)>) {
        out.clear();
        let gn = g.norm();
        let gh = if gn > 0.0 { g / gn } else { Velocity::new(1.0, 0.0, 0.0) };
        match self.n {
            1 => {
                let s = if gh[0] >= 0.0 { 1.0 } else { -1.0 };
                out.push((Velocity::new(-s, 0.0, 0.0), 1.0));
            }
            2 => {
                let perp = Velocity::new(-gh[1], gh[0], 0.0);
                for &(c, s, w) in &self.polar {
                    out.push((gh * c + perp * s, w));
                }
            }
            _ => {
                let helper = if gh[0].abs() < 0.9 { Velocity::new(1.0, 0.0, 0.0) } else { Velocity::new(0.0, 1.0, 0.0) };
                let e1 = (helper - gh * gh.dot(&helper)).normalize();
                let e2 = gh.cross(&e1);
                for &(c, s, w) in &self.polar {
                    for &(cp, sp) in &self.azimuth {
                        out.push((gh * c + (e1 * cp + e2 * sp) * s, w));
                    }
                }
            }
        }
    }
}

/// Upper bound on inner iterations accepted by [`q_bme`].
pub const WORK_LIMIT: f64 = 1e9;

struct PairSweep<'a> {
    law: &'a MassLaw,
    grid: &'a VelocityGrid,
    f: &'a [f64],
    log_f: Vec<f64>,
    kernel: &'a Kernel,
    sphere: HalfSphere,
    mode: Interpolation,
}

impl<'a> PairSweep<'a> {
    fn new(law: &'a MassLaw, grid: &'a VelocityGrid, f: &'a [f64], kernel: &'a Kernel, cfg: &BmeConfig) -> Result<Self> {
        let nodes = grid.node_count();
        if f.len() != law.m_max() * nodes {
            return Err(KinexError::Validation(format!(
                "distribution length {} does not match M_max x nodes = {}",
                f.len(),
                law.m_max() * nodes
            )));
        }
        let sphere = HalfSphere::new(grid.dim(), cfg.n_omega);
        let max_ch = (1..=law.m_max() as u32)
            .flat_map(|m| (1..=law.m_max() as u32).map(move |m1| (m, m1)))
            .map(|(m, m1)| crate::collision::channel_count(law, m, m1))
            .max()
            .unwrap_or(0) as f64;
        let predicted = (f.len() as f64).powi(2) * max_ch * sphere.len() as f64;
        if predicted > WORK_LIMIT {
            return Err(KinexError::CostGuard { predicted, limit: WORK_LIMIT });
        }
        let log_f = f.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NAN }).collect();
        Ok(Self { law, grid, f, log_f, kernel, sphere, mode: cfg.interpolation })
    }

    /// f_m at an off-grid point.
    #[inline]
    fn interp(&self, m: u32, st: &Stencil) -> f64 {
        let base = (m as usize - 1) * self.grid.node_count();
        if self.mode == Interpolation::Geometric {
            let mut s = 0.0;
            let mut ok = true;
            for k in 0..st.len {
                let l = self.log_f[base + st.idx[k]];
                if l.is_nan() {
                    ok = false;
                    break;
                }
                s += st.w[k] * l;
            }
            if ok {
                return s.exp();
            }
        }
        (0..st.len).map(|k| st.w[k] * self.f[base + st.idx[k]]).sum()
    }

    /// Visits every quadrature term with a post-collision pair inside the grid.
    /// The callback receives (first-pair flat indices, outgoing masses,
    /// stencils, base weight B·w_Ω·w_v²/4, loss product, gain product).
    fn sweep<F>(&self, first: std::ops::Range<usize>, mut visit: F)
    where
        F: FnMut(usize, usize, u32, u32, &Stencil, &Stencil, f64, f64, f64),
    {
        let nodes = self.grid.node_count();
        let n = self.grid.dim() as f64;
        let wv = self.grid.weight();
        let vs = self.grid.nodes();
        let mut dirs = Vec::with_capacity(self.sphere.len());
        for ia in first {
            let m = (ia / nodes + 1) as u32;
            let v = &vs[ia % nodes];
            let fa = self.f[ia];
            for m1 in 1..=self.law.m_max() as u32 {
                let chans = allowed_channels(self.law, m, m1);
                let loss_rate = self.law.gamma(m as usize) * self.law.gamma(m1 as usize);
                let mm = (m as f64 * m1 as f64).powf(0.5 * n);
                for j in 0..nodes {
                    let ib = (m1 as usize - 1) * nodes + j;
                    let v1 = &vs[j];
                    let g = v - v1;
                    let b = self.kernel.eval(reduced_energy(m, m1, &g), 0.0);
                    if b == 0.0 {
                        continue;
                    }
                    let loss = loss_rate * fa * self.f[ib];
                    self.sphere.directions(&g, &mut dirs);
                    for (omega, wo) in &dirs {
                        let base = 0.25 * b * wo * wv * wv;
                        for mo in chans.clone() {
                            let mo1 = m + m1 - mo;
                            let (vp, v1p) = post_velocities(m, m1, v, v1, mo, omega);
                            let (Some(s1), Some(s2)) = (self.grid.stencil(&vp), self.grid.stencil(&v1p)) else {
                                continue;
                            };
                            let fp = self.interp(mo, &s1);
                            let fp1 = self.interp(mo1, &s2);
                            let gain_rate = self.law.gamma(mo as usize) * self.law.gamma(mo1 as usize);
                            let jac = mm / (mo as f64 * mo1 as f64).powf(0.5 * n);
                            let gain = jac * gain_rate * fp * fp1;
                            visit(ia, ib, mo, mo1, &s1, &s2, base, loss, gain);
                        }
                    }
                }
            }
        }
    }
}

const PAIR_BLOCK: usize = 32;

/// Deterministic discrete BME operator for one cell.
///
/// Each quadrature term of the symmetrised weak form moves weight between
/// the grid pair and quadratic stencils around the post-collision
/// velocities; the stencils reproduce 1, v and |v|² exactly, so every term
/// conserves the collision invariants.
pub fn q_bme(law: &MassLaw, grid: &VelocityGrid, f: &[f64], kernel: &Kernel, cfg: &BmeConfig) -> Result<CollisionTerm> {
    let sweep = PairSweep::new(law, grid, f, kernel, cfg)?;
    let nodes = grid.node_count();
    let len = f.len();
    let wv = grid.weight();
    let blocks: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(PAIR_BLOCK)
        .map(|s| s..(s + PAIR_BLOCK).min(len))
        .collect();
    let partial: Vec<(Vec<f64>, Vec<f64>)> = blocks
        .into_par_iter()
        .map(|r| {
            let mut q = vec![0.0; len];
            let mut gain = vec![0.0; len];
            sweep.sweep(r, |ia, ib, mo, mo1, s1, s2, base, loss, gp| {
                let c = base * (gp - loss) / wv;
                q[ia] += c;
                q[ib] += c;
                let o1 = (mo as usize - 1) * nodes;
                let o2 = (mo1 as usize - 1) * nodes;
                let cg = base * gp / wv;
                let cl = base * loss / wv;
                gain[ia] += cg;
                gain[ib] += cg;
                for k in 0..s1.len {
                    q[o1 + s1.idx[k]] -= c * s1.w[k];
                    gain[o1 + s1.idx[k]] += cl * s1.w[k];
                }
                for k in 0..s2.len {
                    q[o2 + s2.idx[k]] -= c * s2.w[k];
                    gain[o2 + s2.idx[k]] += cl * s2.w[k];
                }
            });
            (q, gain)
        })
        .collect();
    let mut q = vec![0.0; len];
    let mut gain = vec![0.0; len];
    for (pq, pg) in partial {
        for i in 0..len {
            q[i] += pq[i];
            gain[i] += pg[i];
        }
    }
    Ok(CollisionTerm { q, gain })
}

/// Σ_m ∫ Q_m(f) log(γ_m f_m / m^{n/2}) dv assembled term by term as
/// −¼ Σ W (log a′ − log a)(a′ − a) with geometric interpolation at the
/// post-collision points.
pub fn entropy_production(law: &MassLaw, grid: &VelocityGrid, f: &[f64], kernel: &Kernel, cfg: &BmeConfig) -> Result<f64> {
    if let Some(i) = f.iter().position(|&x| !(x > 0.0)) {
        return Err(KinexError::Domain(format!(
            "entropy production needs f > 0; entry {i} is {}",
            f[i]
        )));
    }
    let cfg = BmeConfig { interpolation: Interpolation::Geometric, ..*cfg };
    let sweep = PairSweep::new(law, grid, f, kernel, &cfg)?;
    let len = f.len();
    let blocks: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(PAIR_BLOCK)
        .map(|s| s..(s + PAIR_BLOCK).min(len))
        .collect();
    let parts: Vec<f64> = blocks
        .into_par_iter()
        .map(|r| {
            let mut acc = 0.0;
            sweep.sweep(r, |_, _, _, _, _, _, base, loss, gain| {
                acc -= base * (gain.ln() - loss.ln()) * (gain - loss);
            });
            acc
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Σ_m ∫ f (log(γ_m f/m^{n/2}) − 1) dv with 0 log 0 = 0.
pub fn kinetic_entropy(law: &MassLaw, grid: &VelocityGrid, f: &[f64]) -> f64 {
    let nodes = grid.node_count();
    let n = grid.dim() as f64;
    let mut s = 0.0;
    for m in 1..=law.m_max() {
        let c = law.gamma(m).ln() - 0.5 * n * (m as f64).ln();
        for &x in &f[(m - 1) * nodes..m * nodes] {
            if x > 0.0 {
                s += x * (x.ln() + c - 1.0);
            }
        }
    }
    s * grid.weight()
}

pub fn kinetic_entropy_flux(law: &MassLaw, grid: &VelocityGrid, f: &[f64]) -> Velocity {
    let nodes = grid.node_count();
    let n = grid.dim() as f64;
    let mut s = Velocity::zeros();
    for m in 1..=law.m_max() {
        let c = law.gamma(m).ln() - 0.5 * n * (m as f64).ln();
        for (v, &x) in grid.nodes().iter().zip(&f[(m - 1) * nodes..m * nodes]) {
            if x > 0.0 {
                s += v * (x * (x.ln() + c - 1.0));
            }
        }
    }
    s * grid.weight()
}

/// Exact relaxation f ← M* + (f − M*) e^{−dt/ε} toward the matched Maxwellian.
pub fn bgk_step_homogeneous(law: &MassLaw, grid: &VelocityGrid, f: &[f64], dt: f64, eps: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(eps > 0.0) {
        return Err(KinexError::Step(format!("need dt > 0 and eps > 0 (dt = {dt}, eps = {eps})")));
    }
    let target = raw_moments(law, grid, f);
    let mstar = discrete_maxwellian(law, grid, &target)?;
    let decay = (-dt / eps).exp();
    Ok(mstar.iter().zip(f).map(|(m, x)| m + (x - m) * decay).collect())
}

/// Spatial advection scheme for the 1-D BGK stepper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    Upwind,
    Minmod,
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

/// Periodic conservative advection of each (mass, node) column by v_x.
fn advect(state: &mut KineticState, dt: f64, dx: f64, scheme: Advection) {
    let nodes = state.grid.node_count();
    let cl = state.cell_len();
    let cells = state.cells;
    let vx: Vec<f64> = state.grid.nodes().iter().map(|v| v[0]).collect();
    let columns: Vec<Vec<f64>> = (0..cl)
        .into_par_iter()
        .map(|col| {
            let a = vx[col % nodes];
            let nu = a * dt / dx;
            let q: Vec<f64> = (0..cells).map(|c| state.f[c * cl + col]).collect();
            let at = |i: isize| q[i.rem_euclid(cells as isize) as usize];
            let slope = |i: isize| match scheme {
                Advection::Upwind => 0.0,
                Advection::Minmod => minmod(at(i) - at(i - 1), at(i + 1) - at(i)),
            };
            // flux through the right face of cell i
            let flux: Vec<f64> = (0..cells as isize)
                .map(|i| {
                    if a >= 0.0 {
                        a * (at(i) + 0.5 * (1.0 - nu) * slope(i))
                    } else {
                        a * (at(i + 1) - 0.5 * (1.0 + nu) * slope(i + 1))
                    }
                })
                .collect();
            (0..cells)
                .map(|i| {
                    let left = flux[(i + cells - 1) % cells];
                    q[i] - dt / dx * (flux[i] - left)
                })
                .collect()
        })
        .collect();
    for (col, vals) in columns.into_iter().enumerate() {
        for (c, x) in vals.into_iter().enumerate() {
            state.f[c * cl + col] = x;
        }
    }
}

/// One Strang step of the periodic 1-D BGK model: half advection, full
/// relaxation, half advection.
pub fn bgkme_step_1d(state: &KineticState, dx: f64, dt: f64, eps: f64, scheme: Advection) -> Result<KineticState> {
    if !(dt > 0.0) || !(dx > 0.0) {
        return Err(KinexError::Step("need dt > 0 and dx > 0".into()));
    }
    let vmax = state.grid.nodes().iter().map(|v| v[0].abs()).fold(0.0, f64::max);
    if dt * vmax > dx * (1.0 + 1e-12) {
        return Err(KinexError::Step(format!(
            "CFL violated: dt = {dt} exceeds dx/v_max = {}",
            dx / vmax
        )));
    }
    let mut next = state.clone();
    advect(&mut next, 0.5 * dt, dx, scheme);
    if eps.is_finite() {
        let law = &state.law;
        let grid = &state.grid;
        let cl = next.cell_len();
        let relaxed: Result<Vec<Vec<f64>>> = next
            .f
            .par_chunks(cl)
            .map(|cell| bgk_step_homogeneous(law, grid, cell, dt, eps))
            .collect();
        for (c, vals) in relaxed?.into_iter().enumerate() {
            next.cell_mut(c).copy_from_slice(&vals);
        }
    }
    advect(&mut next, 0.5 * dt, dx, scheme);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::prim_to_cons;

    fn prim(rho: f64, u: &[f64], theta: f64, beta: f64) -> MacroFields {
        MacroFields { rho, u: crate::collision::velocity(u), theta, beta }
    }

    #[test]
    fn grid_layout() {
        let g = VelocityGrid::new(2, 4.0, 8).unwrap();
        assert_eq!(g.node_count(), 64);
        assert!((g.weight() - 1.0).abs() < 1e-15);
        assert!((g.nodes()[0][0] + 3.5).abs() < 1e-15);
        assert_eq!(g.axis_indices(9), vec![1, 1]);
        assert!(VelocityGrid::new(2, 4.0, 7).is_err());
        assert!(VelocityGrid::new_any_parity(2, 4.0, 7).is_ok());
    }

    #[test]
    fn stencil_reproduces_quadratics() {
        let g = VelocityGrid::new(2, 3.0, 10).unwrap();
        let v = crate::collision::velocity(&[0.37, -2.61]);
        let st = g.stencil(&v).unwrap();
        let sum = |h: &dyn Fn(&Velocity) -> f64| -> f64 {
            (0..st.len).map(|k| st.w[k] * h(&g.nodes()[st.idx[k]])).sum()
        };
        assert!((sum(&|_| 1.0) - 1.0).abs() < 1e-14);
        assert!((sum(&|x| x[0]) - v[0]).abs() < 1e-14);
        assert!((sum(&|x| x[1]) - v[1]).abs() < 1e-14);
        assert!((sum(&|x| x.norm_squared()) - v.norm_squared()).abs() < 1e-13);
        assert!(g.stencil(&crate::collision::velocity(&[2.99, 0.0])).is_none());
    }

    #[test]
    fn zero_distribution() {
        let law = MassLaw::uniform(2, 1).unwrap();
        let g = VelocityGrid::new(1, 5.0, 16).unwrap();
        let f = vec![0.0; 32];
        assert_eq!(raw_moments(&law, &g, &f), RawMoments::zero());
        assert_eq!(kinetic_entropy(&law, &g, &f), 0.0);
    }

    #[test]
    fn macro_conversions() {
        let law = MassLaw::uniform(3, 1).unwrap();
        let p = prim(2.0, &[0.3], 0.7, 0.5);
        let raw = prim_to_cons(&law, &p).unwrap().to_raw();
        let back = macro_from_moments(&law, &raw).unwrap();
        assert!((back.rho - 2.0).abs() < 1e-12);
        assert!((back.u[0] - 0.3).abs() < 1e-12);
        assert!((back.theta - 0.7).abs() < 1e-10);
        assert!((back.beta - 0.5).abs() < 1e-10);

        let single = MassLaw::uniform(1, 2).unwrap();
        let raw = RawMoments { n_raw: 1.5, rho: 1.5, p: Velocity::zeros(), e: 2.4 };
        let f = macro_from_moments(&single, &raw).unwrap();
        assert_eq!(f.beta, 0.0);
        assert!((f.theta - 2.4 / (2.0 * 1.5)).abs() < 1e-15);

        let cold = RawMoments { n_raw: 0.8, rho: 1.0, p: crate::collision::velocity(&[2.0]), e: 4.0 };
        assert!(matches!(macro_from_moments(&MassLaw::uniform(2, 1).unwrap(), &cold), Err(KinexError::Domain(_))));
    }

    #[test]
    fn maxwellian_moments_and_marginal() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let grid = VelocityGrid::new(2, 8.0, 32).unwrap();
        let p = prim(1.0, &[0.0, 0.0], 1.0, 0.3);
        let f = maxwellian_from_prim(&law, &grid, &p).unwrap();
        let raw = raw_moments(&law, &grid, &f);
        let y = law.inv_mass_mean(0.3);
        assert!((raw.n_raw - y).abs() < 1e-12);
        assert!((raw.rho - 1.0).abs() < 1e-12);
        assert!(raw.p.norm() < 1e-12);
        assert!((raw.e - 2.0 * y).abs() < 1e-12);
        // number marginal per mass ∝ e^{βm}/γ_m
        let nodes = grid.node_count();
        let ratios: Vec<f64> = (1..=3)
            .map(|m| {
                let s: f64 = f[(m - 1) * nodes..m * nodes].iter().sum::<f64>() * grid.weight();
                s / (0.3 * m as f64).exp()
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_mass_gaussian_variance() {
        let law = MassLaw::uniform(1, 1).unwrap();
        let grid = VelocityGrid::new(1, 7.0, 40).unwrap();
        let target = RawMoments { n_raw: 1.0, rho: 1.0, p: Velocity::zeros(), e: 0.8 };
        let f = discrete_maxwellian(&law, &grid, &target).unwrap();
        let var: f64 = grid.nodes().iter().zip(&f).map(|(v, x)| x * v[0] * v[0]).sum::<f64>() * grid.weight();
        assert!((var - 0.8).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_maxwellian_matches_closed_form() {
        let law = MassLaw::new(vec![1.0, 1.5], 2).unwrap();
        let grid = VelocityGrid::new(2, 9.0, 40).unwrap();
        let p = prim(1.3, &[0.4, -0.2], 0.9, -0.3);
        let f = maxwellian_from_prim(&law, &grid, &p).unwrap();
        let s = kinetic_entropy(&law, &grid, &f);
        let s_eq = thermo::equilibrium_entropy(&law, &p);
        assert!((s - s_eq).abs() < 1e-6 * s_eq.abs().max(1.0));
        let phi = kinetic_entropy_flux(&law, &grid, &f);
        assert!((phi - p.u * s_eq).norm() < 1e-6);
    }

    #[test]
    fn bgk_fixed_point_and_full_relaxation() {
        let law = MassLaw::uniform(2, 1).unwrap();
        let grid = VelocityGrid::new(1, 7.0, 32).unwrap();
        let m = maxwellian_from_prim(&law, &grid, &prim(1.0, &[0.2], 1.1, 0.1)).unwrap();
        let next = bgk_step_homogeneous(&law, &grid, &m, 0.1, 1.0).unwrap();
        for (a, b) in next.iter().zip(&m) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut f = m.clone();
        for (i, x) in f.iter_mut().enumerate() {
            *x *= 1.0 + 0.3 * ((i as f64) * 0.7).sin();
        }
        let relaxed = bgk_step_homogeneous(&law, &grid, &f, 1e3, 1e-3).unwrap();
        let mstar = discrete_maxwellian(&law, &grid, &raw_moments(&law, &grid, &f)).unwrap();
        for (a, b) in relaxed.iter().zip(&mstar) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn half_sphere_weights() {
        let pi = std::f64::consts::PI;
        let g = crate::collision::velocity(&[0.3, -1.0, 0.5]);
        for (n, measure) in [(1, 1.0), (2, pi), (3, 2.0 * pi)] {
            let hs = HalfSphere::new(n, 16);
            let mut dirs = Vec::new();
            let mut gg = g;
            for d in n..3 {
                gg[d] = 0.0;
            }
            hs.directions(&gg, &mut dirs);
            let total: f64 = dirs.iter().map(|d| d.1).sum();
            assert!((total - measure).abs() < 1e-12);
            for (o, _) in &dirs {
                assert!((o.norm() - 1.0).abs() < 1e-14);
                assert!(o.dot(&gg) <= 0.0);
            }
        }
    }
}
