//! Entropy structure: entropic variables, the Massieu-Planck potential and
//! its Legendre transform, the Onsager matrix of the diffusive fluxes and
//! the linearized energy estimate.
//!
//! Vectors of entropic variables, conserved quantities and Onsager blocks
//! share the ordering (momentum components, population, mass, energy).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::Velocity;
use crate::error::{KinexError, Result};
use crate::fluid::{self, ConservedState, FaceData, Grid1D, PrimitiveState, TransportCoeffs};
use crate::mass_law::MassLaw;

/// Entropic variables 𝒜 = (D, A, B, C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropicState {
    pub d: Velocity,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EntropicState {
    pub fn to_vector(&self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| self.d[i]).collect();
        v.extend([self.a, self.b, self.c]);
        v
    }

    pub fn from_vector(x: &[f64], n: usize) -> Self {
        let mut d = Velocity::zeros();
        for i in 0..n {
            d[i] = x[i];
        }
        Self { d, a: x[n], b: x[n + 1], c: x[n + 2] }
    }
}

pub fn entropic_from_prim(law: &MassLaw, p: &PrimitiveState) -> Result<EntropicState> {
    if !(p.rho > 0.0 && p.theta > 0.0) {
        return Err(KinexError::Domain("entropic variables need rho > 0 and Theta > 0".into()));
    }
    Ok(EntropicState {
        d: p.u / p.theta,
        a: p.rho.ln() - law.log_partition_z(p.beta, p.theta),
        b: p.beta - p.u.norm_squared() / (2.0 * p.theta),
        c: -1.0 / (2.0 * p.theta),
    })
}

pub fn prim_from_entropic(law: &MassLaw, a: &EntropicState) -> Result<PrimitiveState> {
    if !(a.c < 0.0) {
        return Err(KinexError::Domain(format!("C = {} must be negative", a.c)));
    }
    let theta = -1.0 / (2.0 * a.c);
    let beta = a.b - a.d.norm_squared() / (4.0 * a.c);
    Ok(PrimitiveState {
        rho: (a.a + law.log_partition_z(beta, theta)).exp(),
        u: -a.d / (2.0 * a.c),
        theta,
        beta,
    })
}

/// Σ(𝒜) = ρ⟨m⁻¹⟩_β.
pub fn massieu_sigma(law: &MassLaw, a: &EntropicState) -> Result<f64> {
    let p = prim_from_entropic(law, a)?;
    Ok(p.rho * law.inv_mass_mean(p.beta))
}

/// Φ(𝒜) = Σ u.
pub fn flux_potential_phi(law: &MassLaw, a: &EntropicState) -> Result<Velocity> {
    let p = prim_from_entropic(law, a)?;
    Ok(p.u * (p.rho * law.inv_mass_mean(p.beta)))
}

/// ℳ = (P, N, ρ, E) as a vector.
pub fn conserved_vector(law: &MassLaw, c: &ConservedState) -> Vec<f64> {
    c.to_raw().to_vector(law.dim())
}

/// ρ(⟨m⁻¹⟩(log ρ − log Z − 1 − n/2) + β).
pub fn equilibrium_entropy(law: &MassLaw, p: &PrimitiveState) -> f64 {
    let n = law.dim() as f64;
    let y = law.inv_mass_mean(p.beta);
    p.rho * (y * (p.rho.ln() - law.log_partition_z(p.beta, p.theta) - 1.0 - 0.5 * n) + p.beta)
}

/// Entropy of a conserved state via the closed equilibrium form.
pub fn thermo_entropy(law: &MassLaw, c: &ConservedState) -> Result<f64> {
    Ok(equilibrium_entropy(law, &fluid::cons_to_prim(law, c)?))
}

/// Legendre evaluation S = 𝒜·ℳ − Σ(𝒜).
pub fn legendre_entropy(law: &MassLaw, c: &ConservedState) -> Result<f64> {
    let p = fluid::cons_to_prim(law, c)?;
    let a = entropic_from_prim(law, &p)?;
    let n = law.dim();
    let av = a.to_vector(n);
    let mv = conserved_vector(law, c);
    let dot: f64 = av.iter().zip(&mv).map(|(x, y)| x * y).sum();
    Ok(dot - massieu_sigma(law, &a)?)
}

/// Closed-form ∇²_𝒜 Σ.
pub fn hessian_sigma(law: &MassLaw, a: &EntropicState) -> Result<DMatrix<f64>> {
    let p = prim_from_entropic(law, a)?;
    Ok(hessian_sigma_prim(law, &p))
}

pub fn hessian_sigma_prim(law: &MassLaw, p: &PrimitiveState) -> DMatrix<f64> {
    let n = law.dim();
    let nf = n as f64;
    let w = law.weights(p.beta);
    let (am, bm) = (w.mass_power_mean(-1), w.mass_power_mean(1));
    let t = p.theta;
    let u = p.u;
    let u2 = u.norm_squared();
    let k = n + 3;
    let (ia, ib, ic) = (n, n + 1, n + 2);
    let mut h = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = bm * u[i] * u[j] + if i == j { t } else { 0.0 };
        }
        h[(i, ia)] = u[i];
        h[(i, ib)] = bm * u[i];
        h[(i, ic)] = ((nf + 2.0) * t + bm * u2) * u[i];
    }
    h[(ia, ia)] = am;
    h[(ia, ib)] = 1.0;
    h[(ia, ic)] = u2 + nf * am * t;
    h[(ib, ib)] = bm;
    h[(ib, ic)] = u2 * bm + nf * t;
    h[(ic, ic)] = (nf + 2.0) * t * (nf * t * am + 2.0 * u2) + bm * u2 * u2;
    for i in 0..k {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    h * p.rho
}

/// Reduced 5×5 quadratic-form matrix 𝕊 in (|ζ⊥|, ζ∥, φ, ξ, η).
pub fn reduced_form_matrix(law: &MassLaw, p: &PrimitiveState) -> DMatrix<f64> {
    let nf = law.dim() as f64;
    let w = law.weights(p.beta);
    let (am, bm) = (w.mass_power_mean(-1), w.mass_power_mean(1));
    let t = p.theta;
    let un = p.u.norm();
    let u2 = un * un;
    let upper = [
        [t, 0.0, 0.0, 0.0, 0.0],
        [0.0, bm * u2 + t, un, bm * un, ((nf + 2.0) * t + bm * u2) * un],
        [0.0, 0.0, am, 1.0, u2 + nf * am * t],
        [0.0, 0.0, 0.0, bm, u2 * bm + nf * t],
        [0.0, 0.0, 0.0, 0.0, (nf + 2.0) * t * (nf * t * am + 2.0 * u2) + bm * u2 * u2],
    ];
    DMatrix::from_fn(5, 5, |i, j| if i <= j { upper[i][j] } else { upper[j][i] })
}

/// 4×4 matrix 𝕊̃ in (|ζ|, φ, ξ, η) used when u = 0.
pub fn reduced_form_matrix_at_rest(law: &MassLaw, p: &PrimitiveState) -> DMatrix<f64> {
    let nf = law.dim() as f64;
    let w = law.weights(p.beta);
    let (am, bm) = (w.mass_power_mean(-1), w.mass_power_mean(1));
    let t = p.theta;
    let upper = [
        [t, 0.0, 0.0, 0.0],
        [0.0, am, 1.0, nf * am * t],
        [0.0, 0.0, bm, nf * t],
        [0.0, 0.0, 0.0, nf * (nf + 2.0) * t * t * am],
    ];
    DMatrix::from_fn(4, 4, |i, j| if i <= j { upper[i][j] } else { upper[j][i] })
}

/// Closed-form leading minors D₁..D₅ of 𝕊.
pub fn principal_minors(law: &MassLaw, p: &PrimitiveState) -> [f64; 5] {
    let nf = law.dim() as f64;
    let w = law.weights(p.beta);
    let (am, bm) = (w.mass_power_mean(-1), w.mass_power_mean(1));
    let t = p.theta;
    let u2 = p.u.norm_squared();
    let gap = am * bm - 1.0;
    [
        t,
        t * (bm * u2 + t),
        t * (gap * u2 + t * am),
        t * t * gap,
        2.0 * nf * t.powi(4) * am * gap,
    ]
}

/// Onsager matrix as (n+3)² blocks of size n×n; block (α, β) at
/// `blocks[α * (n + 3) + β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsagerMatrix {
    pub n: usize,
    pub eps: f64,
    pub blocks: Vec<DMatrix<f64>>,
}

impl OnsagerMatrix {
    pub fn block(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.blocks[a * (self.n + 3) + b]
    }

    /// Dense n(n+3) square matrix with row index α·n + i.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.n;
        let k = n + 3;
        DMatrix::from_fn(n * k, n * k, |r, c| self.block(r / n, c / n)[(r % n, c % n)])
    }

    /// (n+3)×(n+3) matrix of the xx entries, the slab diffusion matrix.
    pub fn xx(&self) -> DMatrix<f64> {
        let k = self.n + 3;
        DMatrix::from_fn(k, k, |a, b| self.block(a, b)[(0, 0)])
    }
}

pub fn onsager_x(law: &MassLaw, p: &PrimitiveState, eps: f64) -> OnsagerMatrix {
    onsager_from_coeffs(law.dim(), &fluid::transport_coeffs(law, p), p.theta, &p.u, eps)
}

/// Onsager matrix from explicit coefficients and state.
pub fn onsager_from_coeffs(n: usize, c: &TransportCoeffs, theta: f64, u: &Velocity, eps: f64) -> OnsagerMatrix {
    let nf = n as f64;
    let k = n + 3;
    let (ia, ib, ic) = (n, n + 1, n + 2);
    let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let c1 = eps * c.mu * theta;
    let c2 = 2.0 * eps * c.mu * theta;
    let two_n = 2.0 / nf;
    let mut blocks = vec![DMatrix::<f64>::zeros(n, n); k * k];
    for al in 0..k {
        for be in 0..k {
            let blk = &mut blocks[al * k + be];
            if al < n && be < n {
                for i in 0..n {
                    for j in 0..n {
                        blk[(i, j)] = c1 * (dl(i, j) * dl(al, be) + dl(i, be) * dl(j, al) - two_n * dl(i, al) * dl(j, be));
                    }
                }
            } else if al < n && be == ic {
                for i in 0..n {
                    for j in 0..n {
                        blk[(i, j)] = c2 * (u[al] * dl(i, j) + u[i] * dl(j, al) - two_n * dl(i, al) * u[j]);
                    }
                }
            } else if al == ic && be < n {
                for i in 0..n {
                    for j in 0..n {
                        blk[(i, j)] = c2 * (u[be] * dl(i, j) + dl(i, be) * u[j] - two_n * u[i] * dl(j, be));
                    }
                }
            } else if al == ia && be == ia {
                for i in 0..n {
                    blk[(i, i)] = eps * c.nu;
                }
            } else if (al == ia && be == ic) || (al == ic && be == ia) {
                for i in 0..n {
                    blk[(i, i)] = (nf + 2.0) * eps * c.nu * theta;
                }
            } else if al == ic && be == ic {
                let diag = (nf + 2.0) * (nf + 2.0) * c.nu * theta + 4.0 * c.kappa * theta + 4.0 * c.mu * u.norm_squared();
                let off = 4.0 * ((nf - 2.0) / nf) * c.mu;
                for i in 0..n {
                    for j in 0..n {
                        blk[(i, j)] = eps * theta * (diag * dl(i, j) + off * (u[i] * u[j]));
                    }
                }
            }
            let _ = ib;
        }
    }
    OnsagerMatrix { n, eps, blocks }
}

/// Σ_{αβ} (Yᵅ)ᵀ 𝕏^{αβ} Yᵝ by direct contraction and by the
/// sum-of-squares identity, in that order.
pub fn x_quadratic_form(law: &MassLaw, p: &PrimitiveState, eps: f64, y: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = law.dim();
    let k = n + 3;
    if y.len() != k || y.iter().any(|v| v.len() != n) {
        return Err(KinexError::Validation(format!("expected {k} vectors of length {n}")));
    }
    let x = onsager_x(law, p, eps);
    let mut direct = 0.0;
    for a in 0..k {
        for b in 0..k {
            let blk = x.block(a, b);
            for i in 0..n {
                for j in 0..n {
                    direct += y[a][i] * blk[(i, j)] * y[b][j];
                }
            }
        }
    }
    let c = fluid::transport_coeffs(law, p);
    let nf = n as f64;
    let t = p.theta;
    let (ya, ye) = (&y[n], &y[n + 2]);
    let pop: f64 = (0..n).map(|i| (ya[i] + (nf + 2.0) * t * ye[i]).powi(2)).sum();
    let heat: f64 = (0..n).map(|i| ye[i] * ye[i]).sum();
    let tr: f64 = (0..n).map(|j| y[j][j]).sum();
    let uy: f64 = (0..n).map(|j| p.u[j] * ye[j]).sum();
    let mut shear = 0.0;
    for i in 0..n {
        for al in 0..n {
            let d = if i == al { 1.0 } else { 0.0 };
            let s = y[al][i] + y[i][al] - 2.0 / nf * tr * d + 2.0 * (p.u[i] * ye[al] + p.u[al] * ye[i] - 2.0 / nf * uy * d);
            shear += s * s;
        }
    }
    let sos = eps * c.nu * pop + 4.0 * eps * c.kappa * t * t * heat + 0.5 * eps * c.mu * t * shear;
    Ok((direct, sos))
}

/// x-derivatives of the entropic variables at a face, from the face
/// gradients of (ρ, u, Θ, β) by the chain rule.
pub fn entropic_gradient(n: usize, f: &FaceData) -> Vec<f64> {
    let s = &f.state;
    let t = s.theta;
    let nf = n as f64;
    let dc = f.d_theta / (2.0 * t * t);
    let mut g: Vec<f64> = (0..n).map(|j| f.d_u[j] / t - s.u[j] * f.d_theta / (t * t)).collect();
    let udu: f64 = (0..n).map(|j| s.u[j] * f.d_u[j]).sum();
    let da = f.d_rho / s.rho - f.mass_mean * f.d_beta - nf * f.d_theta / (2.0 * t);
    let db = f.d_beta - udu / t + s.u.norm_squared() * f.d_theta / (2.0 * t * t);
    g.extend([da, db, dc]);
    g
}

/// Σ_β 𝕏^{αβ}_{xx} ∂_x 𝒜^β at a face.
pub fn entropic_face_flux(n: usize, f: &FaceData, eps: f64) -> Vec<f64> {
    let x = onsager_from_coeffs(n, &f.coeffs, f.state.theta, &f.state.u, eps).xx();
    let g = DVector::from_vec(entropic_gradient(n, f));
    (x * g).iter().cloned().collect()
}

/// Diffusive right-hand side ∂_x(Σ_β 𝕏^{αβ} ∂_x 𝒜^β) per cell.
pub fn entropic_rhs(law: &MassLaw, prims: &[PrimitiveState], grid: &Grid1D, eps: f64) -> Vec<Vec<f64>> {
    let n = law.dim();
    let faces = fluid::all_faces(law, prims, grid);
    let fl: Vec<Vec<f64>> = faces.iter().map(|f| entropic_face_flux(n, f, eps)).collect();
    (0..grid.cells)
        .map(|i| (0..n + 3).map(|k| (fl[i + 1][k] - fl[i][k]) / grid.dx).collect())
        .collect()
}

/// −ε{ν|∇χ|² + κ|∇Θ/Θ|² + (μ/2Θ) σ:σ}.
pub fn dissipation_rate(law: &MassLaw, p: &PrimitiveState, grad_chi: &Velocity, grad_theta: &Velocity, sigma: &DMatrix<f64>, eps: f64) -> f64 {
    let c = fluid::transport_coeffs(law, p);
    let ss: f64 = sigma.iter().map(|x| x * x).sum();
    -eps * (c.nu * grad_chi.norm_squared() + c.kappa * grad_theta.norm_squared() / (p.theta * p.theta) + c.mu / (2.0 * p.theta) * ss)
}

/// φ̃ = S u + ε{−ν(log ρ − log Z − 1 − n/2)∇χ + κ∇Θ/Θ}.
pub fn entropy_flux_tilde(law: &MassLaw, p: &PrimitiveState, grad_chi: &Velocity, grad_theta: &Velocity, eps: f64) -> Velocity {
    let c = fluid::transport_coeffs(law, p);
    let n = law.dim() as f64;
    let s = equilibrium_entropy(law, p);
    let g = p.rho.ln() - law.log_partition_z(p.beta, p.theta) - 1.0 - 0.5 * n;
    p.u * s + (grad_chi * (-c.nu * g) + grad_theta * (c.kappa / p.theta)) * eps
}

/// Moments Σ_m ∫ ρM_m μ μᵀ g(v) dv of the local equilibrium, evaluated with
/// a tensor Gauss-Hermite rule (exact for polynomial g up to degree 5).
pub fn equilibrium_moment_matrix(law: &MassLaw, p: &PrimitiveState, g: impl Fn(&Velocity) -> f64) -> DMatrix<f64> {
    let n = law.dim();
    let k = n + 3;
    let (x, w) = crate::quadrature::gauss_hermite_normal(6);
    let weights = law.weights(p.beta);
    let mut out = DMatrix::<f64>::zeros(k, k);
    let q = x.len();
    for m in 1..=law.m_max() {
        let mf = m as f64;
        let dens = p.rho * weights.p[m - 1] / mf;
        let sd = (p.theta / mf).sqrt();
        for idx in 0..q.pow(n as u32) {
            let mut v = p.u;
            let mut wt = dens;
            let mut r = idx;
            for d in 0..n {
                v[d] += sd * x[r % q];
                wt *= w[r % q];
                r /= q;
            }
            let mut mu = vec![0.0; k];
            for d in 0..n {
                mu[d] = mf * v[d];
            }
            mu[n] = 1.0;
            mu[n + 1] = mf;
            mu[n + 2] = mf * v.norm_squared();
            let c = wt * g(&v);
            for i in 0..k {
                for j in 0..k {
                    out[(i, j)] += c * mu[i] * mu[j];
                }
            }
        }
    }
    out
}

/// Boundary treatment for the linearized energy check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearBc {
    Periodic,
    DirichletZero,
}

/// Linearized NSME about a uniform state 𝒜₀:
/// H₀ ∂_t 𝒜 + K ∂_x 𝒜 = X ∂²_x 𝒜 on a uniform grid, advanced by the
/// implicit midpoint rule.
#[derive(Debug, Clone)]
pub struct LinearizedNsme {
    pub h0: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub cells: usize,
    pub dx: f64,
    pub bc: LinearBc,
}

impl LinearizedNsme {
    pub fn new(law: &MassLaw, a0: &EntropicState, cells: usize, dx: f64, eps: f64, bc: LinearBc) -> Result<Self> {
        let p0 = prim_from_entropic(law, a0)?;
        let h0 = hessian_sigma_prim(law, &p0);
        let k = equilibrium_moment_matrix(law, &p0, |v| v[0]);
        let x = onsager_x(law, &p0, eps).xx();
        Ok(Self { h0, k, x, cells, dx, bc })
    }

    fn dim(&self) -> usize {
        self.h0.nrows()
    }

    /// Spatial operator L with H₀ d𝒜/dt = L 𝒜 (block layout cell-major).
    fn operator(&self) -> DMatrix<f64> {
        let d = self.dim();
        let nc = self.cells;
        let mut l = DMatrix::<f64>::zeros(d * nc, d * nc);
        let neighbour = |i: usize, off: isize| -> Option<usize> {
            let j = i as isize + off;
            match self.bc {
                LinearBc::Periodic => Some(j.rem_euclid(nc as isize) as usize),
                LinearBc::DirichletZero => (j >= 0 && j < nc as isize).then_some(j as usize),
            }
        };
        let dx = self.dx;
        for i in 0..nc {
            for a in 0..d {
                for b in 0..d {
                    l[(i * d + a, i * d + b)] += -2.0 * self.x[(a, b)] / (dx * dx);
                }
            }
            for (off, sign) in [(1isize, 1.0), (-1isize, -1.0)] {
                if let Some(j) = neighbour(i, off) {
                    for a in 0..d {
                        for b in 0..d {
                            l[(i * d + a, j * d + b)] += self.x[(a, b)] / (dx * dx) - sign * self.k[(a, b)] / (2.0 * dx);
                        }
                    }
                }
            }
        }
        l
    }

    /// ½ Σ_i 𝒜_iᵀ H₀ 𝒜_i dx.
    pub fn energy(&self, a: &[Vec<f64>]) -> f64 {
        a.iter()
            .map(|ai| {
                let v = DVector::from_column_slice(ai);
                0.5 * (v.transpose() * &self.h0 * &v)[(0, 0)]
            })
            .sum::<f64>()
            * self.dx
    }

    /// Runs `steps` implicit-midpoint steps; returns the energy after each
    /// step (first entry is the initial energy) and the final perturbation.
    pub fn run(&self, init: &[Vec<f64>], dt: f64, steps: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.dim();
        let nc = self.cells;
        if init.len() != nc || init.iter().any(|v| v.len() != d) {
            return Err(KinexError::Validation("perturbation shape does not match the grid".into()));
        }
        let l = self.operator();
        let mut hb = DMatrix::<f64>::zeros(d * nc, d * nc);
        for i in 0..nc {
            hb.view_mut((i * d, i * d), (d, d)).copy_from(&self.h0);
        }
        let lhs = &hb - &l * (0.5 * dt);
        let rhs_m = &hb + &l * (0.5 * dt);
        let lu = lhs.lu();
        let mut state = DVector::from_iterator(d * nc, init.iter().flatten().cloned());
        let unpack = |s: &DVector<f64>| -> Vec<Vec<f64>> { (0..nc).map(|i| s.rows(i * d, d).iter().cloned().collect()).collect() };
        let mut energies = vec![self.energy(init)];
        for _ in 0..steps {
            let b = &rhs_m * &state;
            state = lu
                .solve(&b)
                .ok_or_else(|| KinexError::Convergence("singular implicit-midpoint system".into()))?;
            energies.push(self.energy(&unpack(&state)));
        }
        Ok((energies, unpack(&state)))
    }
}

/// Energy series ½∫(∇²Σ(𝒜₀)𝒜)·𝒜 dx along linearized NSME steps.
pub fn linearized_energy_check(law: &MassLaw, a0: &EntropicState, states: &[Vec<f64>], dx: f64, eps: f64, bc: LinearBc, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let sys = LinearizedNsme::new(law, a0, states.len(), dx, eps, bc)?;
    Ok(sys.run(states, dt, steps)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{euler_flux, prim_to_cons, BoundaryCondition};

    fn law2(n: usize) -> MassLaw {
        MassLaw::uniform(2, n).unwrap()
    }

    fn state(rho: f64, u: [f64; 3], theta: f64, beta: f64) -> PrimitiveState {
        PrimitiveState { rho, u: Velocity::new(u[0], u[1], u[2]), theta, beta }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn entropic_variables_at_rest() {
        let law = law2(2);
        let a = entropic_from_prim(&law, &state(1.0, [0.0; 3], 0.5, 0.3)).unwrap();
        assert_eq!(a.c, -1.0);
        assert_eq!(a.d, Velocity::zeros());
        assert_eq!(a.b, 0.3);
        let bad = EntropicState { c: 0.0, ..a };
        assert!(matches!(prim_from_entropic(&law, &bad), Err(KinexError::Domain(_))));
    }

    #[test]
    fn entropic_roundtrip_and_density_identity() {
        let law = MassLaw::family(3, 0.5, -0.2, 1.3, 3).unwrap();
        let p = state(0.7, [0.3, -0.4, 0.1], 1.7, -0.6);
        let a = entropic_from_prim(&law, &p).unwrap();
        let q = prim_from_entropic(&law, &a).unwrap();
        assert!(rel(q.rho, p.rho) < 1e-12 && rel(q.theta, p.theta) < 1e-12);
        assert!((q.beta - p.beta).abs() < 1e-12 && (q.u - p.u).norm() < 1e-12);
        let z = law.partition_z(p.beta, p.theta).unwrap();
        assert!(rel(a.a.exp() * z, p.rho) < 1e-12);
    }

    #[test]
    fn gradients_of_potentials() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let p = state(1.2, [0.4, -0.3, 0.0], 0.9, 0.2);
        let a = entropic_from_prim(&law, &p).unwrap().to_vector(2);
        let cons = conserved_vector(&law, &prim_to_cons(&law, &p).unwrap());
        let flux = euler_flux(&law, &p).to_raw().to_vector(2);
        let eval = |x: &[f64]| {
            let e = EntropicState::from_vector(x, 2);
            (massieu_sigma(&law, &e).unwrap(), flux_potential_phi(&law, &e).unwrap()[0])
        };
        for k in 0..5 {
            let h = 1e-5 * (1.0 + a[k].abs());
            let (mut up, mut dn) = (a.clone(), a.clone());
            up[k] += h;
            dn[k] -= h;
            let (su, fu) = eval(&up);
            let (sd, fd) = eval(&dn);
            assert!(rel((su - sd) / (2.0 * h), cons[k]) < 1e-7, "dSigma {k}");
            assert!(((fu - fd) / (2.0 * h) - flux[k]).abs() < 1e-7 * flux[k].abs().max(1.0), "dPhi {k}");
        }
    }

    #[test]
    fn hessian_structure_and_minors() {
        let law = law2(2);
        let p = state(1.0, [0.0; 3], 1.0, 0.0);
        let h = hessian_sigma_prim(&law, &p);
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h[(0, 1)], 0.0);
        let d = principal_minors(&law, &p);
        assert!((d[3] - 1.0 / 9.0).abs() < 1e-15);
        let q = state(0.8, [0.5, -0.7, 0.0], 1.3, 0.4);
        let s = reduced_form_matrix(&law, &q);
        let d = principal_minors(&law, &q);
        for k in 1..=5 {
            let det = s.view((0, 0), (k, k)).into_owned().determinant();
            assert!(rel(det, d[k - 1]) < 1e-8, "minor {k}: {det} vs {}", d[k - 1]);
        }
        let r = reduced_form_matrix_at_rest(&law, &p);
        let d = principal_minors(&law, &p);
        // leading minors of the at-rest matrix are D1 and D3..D5 divided by Θ
        let expect = [d[0], d[2], d[3], d[4]];
        for k in 1..=4 {
            let det = r.view((0, 0), (k, k)).into_owned().determinant();
            let target = if k == 1 { expect[0] } else { expect[k - 1] / p.theta };
            assert!(rel(det, target) < 1e-12, "at-rest minor {k}");
        }
    }

    #[test]
    fn entropy_value_and_legendre() {
        let law = law2(2);
        let p = state(1.0, [0.0; 3], 1.0 / (2.0 * std::f64::consts::PI), 0.0);
        let c = prim_to_cons(&law, &p).unwrap();
        let s = thermo_entropy(&law, &c).unwrap();
        assert!((s - (-2.0657415257787397)).abs() < 1e-12);
        assert!((legendre_entropy(&law, &c).unwrap() - s).abs() < 1e-10);
    }

    #[test]
    fn onsager_blocks() {
        let law = MassLaw::uniform(3, 3).unwrap();
        let x = onsager_x(&law, &state(1.0, [0.0; 3], 1.2, 0.1), 0.5);
        for a in 0..3 {
            assert!(x.block(a, 5).iter().all(|v| *v == 0.0));
            assert!(x.block(5, a).iter().all(|v| *v == 0.0));
        }
        let law2d = law2(2);
        let p = state(1.0, [0.3, 0.9, 0.0], 1.2, 0.1);
        let x = onsager_x(&law2d, &p, 0.5);
        let c = fluid::transport_coeffs(&law2d, &p);
        let e = x.block(4, 4);
        let expect = 0.5 * p.theta * (16.0 * c.nu * p.theta + 4.0 * c.kappa * p.theta + 4.0 * c.mu * p.u.norm_squared());
        assert!((e[(0, 1)]).abs() == 0.0 && rel(e[(0, 0)], expect) < 1e-14);
        let f = x.full();
        assert_eq!(f, f.transpose());
        for k in 0..f.nrows() {
            assert_eq!(f[(k, 3 * 2)], 0.0);
            assert_eq!(f[(3 * 2, k)], 0.0);
        }
    }

    #[test]
    fn quadratic_form_special_inputs() {
        let law = law2(2);
        let p = state(1.1, [0.0; 3], 0.9, -0.3);
        let mut y = vec![vec![0.0; 2]; 5];
        y[3] = vec![3.0, -2.0];
        let (d, s) = x_quadratic_form(&law, &p, 0.1, &y).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(s, 0.0);
        let mut y = vec![vec![0.0; 2]; 5];
        y[4] = vec![0.7, -1.3];
        let (d, s) = x_quadratic_form(&law, &p, 0.1, &y).unwrap();
        let c = fluid::transport_coeffs(&law, &p);
        let expect = 0.1 * p.theta * p.theta * (16.0 * c.nu + 4.0 * c.kappa) * (0.49 + 1.69);
        assert!(rel(d, expect) < 1e-13 && rel(s, expect) < 1e-13);
    }

    #[test]
    fn entropic_and_physical_rhs_agree() {
        let law = law2(2);
        let grid = Grid1D::new(24, 1.0, BoundaryCondition::Periodic, 0.0).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let prims: Vec<PrimitiveState> = (0..24)
            .map(|i| {
                let x = grid.x(i);
                state(1.0 + 0.2 * (tau * x).sin(), [0.3 * (tau * x).cos(), 0.1 * (2.0 * tau * x).sin(), 0.0], 1.0 + 0.1 * (tau * x + 1.0).sin(), 0.2 * (tau * x).cos())
            })
            .collect();
        let phys = fluid::nsme_diffusive_rhs(&law, &prims, &grid, 0.05);
        let ent = entropic_rhs(&law, &prims, &grid, 0.05);
        for (a, b) in phys.iter().zip(&ent) {
            let v = conserved_vector(&law, a);
            for k in 0..5 {
                assert!((v[k] - b[k]).abs() <= 1e-10 * v[k].abs().max(1e-3), "component {k}: {} vs {}", v[k], b[k]);
            }
        }
        assert!(entropic_rhs(&law, &prims, &grid, 0.0).iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn dissipation_and_flux() {
        let law = law2(3);
        let p = state(1.0, [0.2, 0.0, 0.1], 1.0, 0.0);
        let z = Velocity::zeros();
        let sig = DMatrix::zeros(3, 3);
        assert_eq!(dissipation_rate(&law, &p, &z, &z, &sig, 0.1), 0.0);
        let phi = entropy_flux_tilde(&law, &p, &z, &z, 0.1);
        assert_eq!(phi, p.u * equilibrium_entropy(&law, &p));
        let g = Velocity::new(0.1, 0.0, 0.0);
        assert!(dissipation_rate(&law, &p, &g, &z, &sig, 0.1) < 0.0);
        assert!(dissipation_rate(&law, &p, &z, &g, &sig, 0.1) < 0.0);
        assert!(dissipation_rate(&law, &p, &z, &z, &fluid::slab_sigma(3, &g), 0.1) < 0.0);
    }

    #[test]
    fn moment_matrix_is_hessian() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let p = state(0.9, [0.4, -0.2, 0.0], 1.1, 0.3);
        let h = hessian_sigma_prim(&law, &p);
        let q = equilibrium_moment_matrix(&law, &p, |_| 1.0);
        assert!((h - q).abs().max() < 1e-12);
    }

    #[test]
    fn linearized_energy() {
        let law = law2(2);
        let a0 = entropic_from_prim(&law, &state(1.0, [0.2, 0.0, 0.0], 1.0, 0.0)).unwrap();
        let zero = vec![vec![0.0; 5]; 16];
        let e = linearized_energy_check(&law, &a0, &zero, 1.0 / 16.0, 0.05, LinearBc::Periodic, 0.01, 5).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
        let tau = 2.0 * std::f64::consts::PI;
        let mode: Vec<Vec<f64>> = (0..16).map(|i| (0..5).map(|k| 1e-3 * (tau * i as f64 / 16.0 + k as f64).sin()).collect()).collect();
        for bc in [LinearBc::Periodic, LinearBc::DirichletZero] {
            let e = linearized_energy_check(&law, &a0, &mode, 1.0 / 16.0, 0.05, bc, 0.01, 50).unwrap();
            for w in e.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            assert!(e[50] < e[0]);
        }
    }
}
