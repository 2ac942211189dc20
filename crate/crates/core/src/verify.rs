//! Self-contained verification suites. Each check compares two independent
//! evaluations of the same quantity and records the worst discrepancy seen.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{self, CollisionChannel, Kernel, Particle, Velocity};
use crate::error::Result;
use crate::fluid::{self, BoundaryCondition, ConservedState, Grid1D, PrimitiveState};
use crate::kinetic::{self, BmeConfig, Interpolation, VelocityGrid};
use crate::mass_law::MassLaw;
use crate::thermo::{self, EntropicState, LinearBc};

/// Outcome of one check: `measured` must not exceed `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub measured: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, tolerance: f64, measured: f64) -> Self {
        Self { name: name.to_string(), tolerance, measured, pass: measured.is_finite() && measured <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Uniformly drawn admissible state with velocity components in [-1, 1].
pub fn random_prim(rng: &mut ChaCha8Rng, n: usize) -> PrimitiveState {
    let mut u = Velocity::zeros();
    for i in 0..n {
        u[i] = rng.gen_range(-1.0..1.0);
    }
    PrimitiveState { rho: rng.gen_range(0.3..3.0), u, theta: rng.gen_range(0.3..3.0), beta: rng.gen_range(-1.5..1.5) }
}

/// Random law with M_max ≥ 2 and rates from the power/exponential family.
pub fn random_law(rng: &mut ChaCha8Rng, n: usize) -> MassLaw {
    let m_max = rng.gen_range(2..=5);
    MassLaw::family(m_max, rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(0.5..2.0), n).unwrap()
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

fn sigma_gradient(law: &MassLaw, x: &[f64], n: usize) -> Result<Vec<f64>> {
    let p = thermo::prim_from_entropic(law, &EntropicState::from_vector(x, n))?;
    Ok(thermo::conserved_vector(law, &fluid::prim_to_cons(law, &p)?))
}

fn cons_from_vector(x: &[f64], n: usize) -> ConservedState {
    let mut p = Velocity::zeros();
    for i in 0..n {
        p[i] = x[i];
    }
    ConservedState { p, pop: x[n], rho: x[n + 1], e: x[n + 2] }
}

/// Max relative deviation between the closed-form Hessian of Σ and a
/// central difference of ∇Σ = ℳ.
pub fn hessian_fd_error(law: &MassLaw, p: &PrimitiveState) -> Result<f64> {
    let n = law.dim();
    let a = thermo::entropic_from_prim(law, p)?;
    let h = thermo::hessian_sigma(law, &a)?;
    let x = a.to_vector(n);
    let scale = h.abs().max();
    let mut worst: f64 = 0.0;
    for k in 0..n + 3 {
        let s = fd_step(x[k]);
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[k] += s;
        dn[k] -= s;
        let gu = sigma_gradient(law, &up, n)?;
        let gd = sigma_gradient(law, &dn, n)?;
        for i in 0..n + 3 {
            let fd = (gu[i] - gd[i]) / (2.0 * s);
            worst = worst.max((fd - h[(i, k)]).abs() / h[(i, k)].abs().max(1e-3 * scale));
        }
    }
    Ok(worst)
}

/// Max relative deviation between the closed-form minors and leading
/// determinants of the assembled reduced matrix.
pub fn minor_error(law: &MassLaw, p: &PrimitiveState) -> f64 {
    let s = thermo::reduced_form_matrix(law, p);
    let d = thermo::principal_minors(law, p);
    (1..=5).map(|k| rel(s.view((0, 0), (k, k)).into_owned().determinant(), d[k - 1])).fold(0.0, f64::max)
}

/// Max relative deviation of a central difference of S(ℳ) from 𝒜.
pub fn entropy_gradient_error(law: &MassLaw, p: &PrimitiveState) -> Result<f64> {
    let n = law.dim();
    let c = fluid::prim_to_cons(law, p)?;
    let m = thermo::conserved_vector(law, &c);
    let a = thermo::entropic_from_prim(law, p)?.to_vector(n);
    let amax = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut worst: f64 = 0.0;
    for k in 0..n + 3 {
        let s = fd_step(m[k]) * 1e-1;
        let (mut up, mut dn) = (m.clone(), m.clone());
        up[k] += s;
        dn[k] -= s;
        let su = thermo::thermo_entropy(law, &cons_from_vector(&up, n))?;
        let sd = thermo::thermo_entropy(law, &cons_from_vector(&dn, n))?;
        let fd = (su - sd) / (2.0 * s);
        worst = worst.max((fd - a[k]).abs() / a[k].abs().max(1e-3 * amax));
    }
    Ok(worst)
}

/// ‖∇²Σ · ∇²S − I‖_max with ∇²S from differences of the entropy gradient.
pub fn duality_error(law: &MassLaw, p: &PrimitiveState) -> Result<f64> {
    let n = law.dim();
    let a = thermo::entropic_from_prim(law, p)?;
    let hs = thermo::hessian_sigma(law, &a)?;
    let m = thermo::conserved_vector(law, &fluid::prim_to_cons(law, p)?);
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let q = fluid::cons_to_prim(law, &cons_from_vector(x, n))?;
        Ok(thermo::entropic_from_prim(law, &q)?.to_vector(n))
    };
    let mut he = DMatrix::zeros(n + 3, n + 3);
    for k in 0..n + 3 {
        let s = fd_step(m[k]) * 1e-1;
        let (mut up, mut dn) = (m.clone(), m.clone());
        up[k] += s;
        dn[k] -= s;
        let (gu, gd) = (grad(&up)?, grad(&dn)?);
        for i in 0..n + 3 {
            he[(i, k)] = (gu[i] - gd[i]) / (2.0 * s);
        }
    }
    Ok((hs * he - DMatrix::identity(n + 3, n + 3)).abs().max())
}

/// Smooth periodic profile used by the diffusive-assembly checks.
pub fn smooth_profile(grid: &Grid1D, n: usize, phase: f64) -> Vec<PrimitiveState> {
    let tau = 2.0 * std::f64::consts::PI / (grid.dx * grid.cells as f64);
    (0..grid.cells)
        .map(|i| {
            let x = grid.x(i);
            let mut u = Velocity::zeros();
            for k in 0..n {
                u[k] = 0.3 * (tau * (k + 1) as f64 * x + phase).cos();
            }
            PrimitiveState {
                rho: 1.0 + 0.2 * (tau * x + phase).sin(),
                u,
                theta: 1.0 + 0.15 * (tau * x + 1.0 + phase).sin(),
                beta: 0.3 * (tau * x - phase).cos(),
            }
        })
        .collect()
}

/// Max deviation between the physical and entropic diffusive right sides,
/// relative to the largest entry of the physical one.
pub fn entropic_physical_gap(law: &MassLaw, prims: &[PrimitiveState], grid: &Grid1D, eps: f64) -> f64 {
    let phys = fluid::nsme_diffusive_rhs(law, prims, grid, eps);
    let ent = thermo::entropic_rhs(law, prims, grid, eps);
    let mut scale: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for (a, b) in phys.iter().zip(&ent) {
        let v = thermo::conserved_vector(law, a);
        for k in 0..v.len() {
            scale = scale.max(v[k].abs());
            gap = gap.max((v[k] - b[k]).abs());
        }
    }
    gap / scale.max(1e-300)
}

/// Checks of the entropy structure on random states.
pub fn thermo_suite(seed: u64, samples: usize) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sym, mut qf_gap, mut qf_min) = (0.0f64, 0.0f64, f64::INFINITY);
    let (mut hess, mut chol_fail, mut minors, mut min_minor) = (0.0f64, 0.0, 0.0f64, f64::INFINITY);
    let (mut legendre, mut grad_s, mut dual) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let n = rng.gen_range(1..=3);
        let law = random_law(&mut rng, n);
        let p = random_prim(&mut rng, n);
        let eps = rng.gen_range(0.01..1.0);
        let x = thermo::onsager_x(&law, &p, eps).full();
        sym = sym.max((&x - x.transpose()).abs().max());
        let y: Vec<Vec<f64>> = (0..n + 3).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let (direct, sos) = thermo::x_quadratic_form(&law, &p, eps, &y)?;
        qf_gap = qf_gap.max((direct - sos).abs() / sos.abs().max(1e-300));
        qf_min = qf_min.min(direct.min(sos));
        hess = hess.max(hessian_fd_error(&law, &p)?);
        if thermo::hessian_sigma_prim(&law, &p).cholesky().is_none() {
            chol_fail += 1.0;
        }
        minors = minors.max(minor_error(&law, &p));
        min_minor = min_minor.min(thermo::principal_minors(&law, &p).into_iter().fold(f64::INFINITY, f64::min));
        let c = fluid::prim_to_cons(&law, &p)?;
        legendre = legendre.max((thermo::legendre_entropy(&law, &c)? - thermo::thermo_entropy(&law, &c)?).abs());
        grad_s = grad_s.max(entropy_gradient_error(&law, &p)?);
        dual = dual.max(duality_error(&law, &p)?);
    }

    let law = MassLaw::uniform(2, 2)?;
    let grid = Grid1D::new(32, 1.0, BoundaryCondition::Periodic, 0.0)?;
    let mut assembly: f64 = 0.0;
    for k in 0..5 {
        let prims = smooth_profile(&grid, 2, 0.7 * k as f64);
        assembly = assembly.max(entropic_physical_gap(&law, &prims, &grid, 0.05));
    }

    let a0 = thermo::entropic_from_prim(&law, &PrimitiveState { rho: 1.0, u: Velocity::new(0.2, 0.1, 0.0), theta: 1.0, beta: 0.1 })?;
    let cells = 24;
    let tau = 2.0 * std::f64::consts::PI;
    let init: Vec<Vec<f64>> = (0..cells)
        .map(|i| (0..5).map(|k| 1e-2 * (tau * i as f64 / cells as f64 + k as f64).sin()).collect())
        .collect();
    let energy = thermo::linearized_energy_check(&law, &a0, &init, 1.0 / cells as f64, 0.05, LinearBc::Periodic, 0.01, 100)?;
    let growth = energy.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300)).fold(f64::NEG_INFINITY, f64::max);

    Ok(Report {
        suite: "thermo".into(),
        checks: vec![
            Check::new("onsager_symmetry_abs", 0.0, sym),
            Check::new("quadratic_form_dual_rel", 1e-12, qf_gap),
            Check::new("quadratic_form_negative_part", 0.0, (-qf_min).max(0.0)),
            Check::new("hessian_vs_fd_rel", 1e-6, hess),
            Check::new("hessian_cholesky_failures", 0.0, chol_fail),
            Check::new("minors_vs_determinants_rel", 1e-8, minors),
            Check::new("minors_nonpositive_part", 0.0, (-min_minor).max(0.0)),
            Check::new("legendre_vs_closed_entropy_abs", 1e-10, legendre),
            Check::new("entropy_gradient_vs_fd_rel", 1e-6, grad_s),
            Check::new("hessian_duality_abs", 1e-5, dual),
            Check::new("entropic_vs_physical_rhs_rel", 1e-10, assembly),
            Check::new("linearized_energy_growth_rel", 1e-12, growth.max(0.0)),
        ],
    })
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Velocity {
    loop {
        let mut v = Velocity::zeros();
        for i in 0..n {
            v[i] = rng.gen_range(-1.0..1.0);
        }
        let r = v.norm();
        if r > 1e-3 && r <= 1.0 {
            return v / r;
        }
    }
}

/// Max relative error of |det ∂(v′,v′₁)/∂(v,v1)| · J against 1, with the
/// derivative taken by central differences of the forward map.
pub fn jacobian_error(m: u32, m1: u32, m_out: u32, n: usize, omega: &Velocity) -> f64 {
    let d = 2 * n;
    let map = |z: &[f64]| -> Vec<f64> {
        let mut v = Velocity::zeros();
        let mut v1 = Velocity::zeros();
        for i in 0..n {
            v[i] = z[i];
            v1[i] = z[n + i];
        }
        let (a, b) = collision::post_velocities(m, m1, &v, &v1, m_out, omega);
        (0..n).map(|i| a[i]).chain((0..n).map(|i| b[i])).collect()
    };
    let z0: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 0.5).collect();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let (mut up, mut dn) = (z0.clone(), z0.clone());
        up[k] += 1e-6;
        dn[k] -= 1e-6;
        let (a, b) = (map(&up), map(&dn));
        for i in 0..d {
            jac[(i, k)] = (a[i] - b[i]) / 2e-6;
        }
    }
    (jac.determinant().abs() * collision::velocity_jacobian(m, m1, m_out, n) - 1.0).abs()
}

/// Microscopic conservation and reversibility on random collisions.
pub fn collision_suite(seed: u64, collisions: usize) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mass, mut mom, mut energy, mut inverse) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..collisions {
        let n = rng.gen_range(1..=3);
        let law = MassLaw::uniform(rng.gen_range(2..=6), n)?;
        let mm = law.m_max() as u32;
        let (m, m1) = (rng.gen_range(1..=mm), rng.gen_range(1..=mm));
        let channels = collision::allowed_channels(&law, m, m1);
        if channels.is_empty() {
            continue;
        }
        let m_out = rng.gen_range(channels);
        let mut v = Velocity::zeros();
        let mut v1 = Velocity::zeros();
        for i in 0..n {
            v[i] = rng.gen_range(-3.0..3.0);
            v1[i] = rng.gen_range(-3.0..3.0);
        }
        let g = v - v1;
        let mut omega = random_unit(&mut rng, n);
        if omega.dot(&g) > 0.0 {
            omega = -omega;
        }
        let (p, q) = (Particle { m, v }, Particle { m: m1, v: v1 });
        let (a, b) = collision::collide_forward(&p, &q, &CollisionChannel { m_out, omega })?;
        mass = mass.max(((a.m + b.m) as f64 - (m + m1) as f64).abs());
        let p0 = p.v * m as f64 + q.v * m1 as f64;
        let p1 = a.v * a.m as f64 + b.v * b.m as f64;
        let ps = (p.v.norm() * m as f64 + q.v.norm() * m1 as f64).max(1e-300);
        mom = mom.max((p1 - p0).norm() / ps);
        let e0 = m as f64 * p.v.norm_squared() + m1 as f64 * q.v.norm_squared();
        let e1 = a.m as f64 * a.v.norm_squared() + b.m as f64 * b.v.norm_squared();
        energy = energy.max(rel(e1, e0.max(1e-300)));
        let (c, d) = collision::collide_inverse(&a, &b, &CollisionChannel { m_out: m, omega })?;
        inverse = inverse.max(((c.v - p.v).norm() + (d.v - q.v).norm()) / (1.0 + p.v.norm() + q.v.norm()));
        if c.m != m || d.m != m1 {
            inverse = f64::INFINITY;
        }
    }
    let mut jac: f64 = 0.0;
    for n in 1..=3 {
        for (m, m1, mo) in [(1, 3, 2), (2, 2, 1), (1, 1, 1), (3, 4, 5)] {
            jac = jac.max(jacobian_error(m, m1, mo, n, &random_unit(&mut rng, n)));
        }
    }
    Ok(Report {
        suite: "collision".into(),
        checks: vec![
            Check::new("mass_abs", 0.0, mass),
            Check::new("momentum_rel", 1e-12, mom),
            Check::new("energy_rel", 1e-12, energy),
            Check::new("inverse_roundtrip_rel", 1e-12, inverse),
            Check::new("jacobian_times_det_minus_one", 1e-6, jac),
        ],
    })
}

/// Worst conservation residual of `q` relative to the gain term.
pub fn collision_moment_residual(law: &MassLaw, grid: &VelocityGrid, t: &kinetic::CollisionTerm) -> f64 {
    let q = kinetic::raw_moments(law, grid, &t.q);
    let g = kinetic::raw_moments(law, grid, &t.gain);
    let s = |a: f64| a.abs().max(1e-300);
    [q.n_raw.abs() / s(g.n_raw), q.rho.abs() / s(g.rho), q.p.norm() / s((g.rho * g.e).sqrt()), q.e.abs() / s(g.e)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Largest relative one-step entropy increase along homogeneous BGK steps.
pub fn bgk_entropy_growth(law: &MassLaw, grid: &VelocityGrid, f0: &[f64], dt: f64, eps: f64, steps: usize) -> Result<(f64, Vec<f64>)> {
    let mut f = f0.to_vec();
    let mut series = vec![kinetic::kinetic_entropy(law, grid, &f)];
    let mut growth = f64::NEG_INFINITY;
    for _ in 0..steps {
        f = kinetic::bgk_step_homogeneous(law, grid, &f, dt, eps)?;
        let s = kinetic::kinetic_entropy(law, grid, &f);
        let last = *series.last().unwrap();
        growth = growth.max((s - last) / last.abs().max(1e-300));
        series.push(s);
    }
    Ok((growth, series))
}

/// Positive random distribution on every (mass, node) pair.
pub fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| 0.05 + rng.gen::<f64>()).collect()
}

/// Checks of the discrete collision operator and the BGK relaxation.
pub fn kinetic_suite(seed: u64) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = MassLaw::uniform(2, 2)?;
    let grid = VelocityGrid::new(2, 4.0, 16)?;
    let kernel = Kernel::maxwell(1.0);
    let f = random_distribution(&mut rng, 2 * grid.node_count());
    let mut cons: f64 = 0.0;
    for interpolation in [Interpolation::Geometric, Interpolation::Arithmetic] {
        let t = kinetic::q_bme(&law, &grid, &f, &kernel, &BmeConfig { n_omega: 16, interpolation })?;
        cons = cons.max(collision_moment_residual(&law, &grid, &t));
    }

    let prod = kinetic::entropy_production(&law, &grid, &f, &kernel, &BmeConfig::default())?;
    let eq = kinetic::maxwellian_from_prim(
        &law,
        &grid,
        &kinetic::MacroFields { rho: 1.0, u: Velocity::new(0.3, -0.1, 0.0), theta: 1.0, beta: 0.2 },
    )?;
    let t = kinetic::q_bme(&law, &grid, &eq, &kernel, &BmeConfig::default())?;
    let fixed = t.q.iter().map(|x| x.abs()).sum::<f64>() / t.gain.iter().map(|x| x.abs()).sum::<f64>();

    let law3 = MassLaw::uniform(3, 2)?;
    let g3 = VelocityGrid::new(2, 5.0, 16)?;
    let mut growth = f64::NEG_INFINITY;
    for _ in 0..5 {
        let f0 = random_distribution(&mut rng, 3 * g3.node_count());
        let (gr, _) = bgk_entropy_growth(&law3, &g3, &f0, 0.05, 0.1, 100)?;
        growth = growth.max(gr);
    }
    Ok(Report {
        suite: "kinetic".into(),
        checks: vec![
            Check::new("q_bme_conservation_rel", 1e-12, cons),
            Check::new("entropy_production_positive_part", 0.0, prod.max(0.0)),
            Check::new("maxwellian_residual_rel", 1e-12, fixed),
            Check::new("bgk_entropy_growth_rel", 1e-12, growth.max(0.0)),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for r in [thermo_suite(1, 50).unwrap(), collision_suite(2, 2000).unwrap(), kinetic_suite(3).unwrap()] {
            for c in &r.checks {
                assert!(c.pass, "{}::{} measured {} > {}", r.suite, c.name, c.measured, c.tolerance);
            }
        }
    }

    #[test]
    fn check_rejects_nan() {
        assert!(!Check::new("x", 1.0, f64::NAN).pass);
        assert!(Check::new("x", 0.0, 0.0).pass);
    }
}
