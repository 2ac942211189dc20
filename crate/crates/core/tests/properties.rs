use kinex_core::collision::{self, CollisionChannel, Particle, Velocity};
use kinex_core::dsmc::{self, MajorantConfig, ParticleEnsemble, RoundOptions};
use kinex_core::fluid::{self, PrimitiveState};
use kinex_core::kinetic::{self, VelocityGrid};
use kinex_core::thermo;
use kinex_core::{Kernel, MassLaw};
use proptest::prelude::*;

fn law_strategy() -> impl Strategy<Value = MassLaw> {
    (2usize..=5, -1.0f64..1.0, -0.5f64..0.5, 0.5f64..2.0, 1usize..=3)
        .prop_map(|(m, a, b, c, n)| MassLaw::family(m, a, b, c, n).unwrap())
}

fn prim_strategy() -> impl Strategy<Value = PrimitiveState> {
    (0.3f64..3.0, prop::array::uniform3(-1.0f64..1.0), 0.3f64..3.0, -1.5f64..1.5)
        .prop_map(|(rho, u, theta, beta)| PrimitiveState { rho, u: Velocity::new(u[0], u[1], u[2]), theta, beta })
}

/// Truncates the velocity to the law's dimension.
fn fit(p: PrimitiveState, n: usize) -> PrimitiveState {
    let mut u = Velocity::zeros();
    for i in 0..n {
        u[i] = p.u[i];
    }
    PrimitiveState { u, ..p }
}

fn unit(raw: [f64; 3], n: usize) -> Option<Velocity> {
    let mut v = Velocity::zeros();
    for i in 0..n {
        v[i] = raw[i];
    }
    let r = v.norm();
    (r > 1e-2).then(|| v / r)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverse_mass_mean_decreases_in_beta(law in law_strategy(), beta in -5.0f64..5.0) {
        prop_assert!(law.d_inv_mass_mean_d_beta(beta) < 0.0);
        let h = 1e-6;
        let fd = (law.inv_mass_mean(beta + h) - law.inv_mass_mean(beta - h)) / (2.0 * h);
        prop_assert!((fd - law.d_inv_mass_mean_d_beta(beta)).abs() < 1e-8);
    }

    #[test]
    fn beta_inversion_roundtrip(law in law_strategy(), beta in -2.0f64..2.0) {
        let target = law.inv_mass_mean(beta);
        let back = law.beta_from_inv_mass_mean(target, 1e-14).unwrap();
        prop_assert!((back - beta).abs() < 1e-10, "{back} vs {beta}");
    }

    #[test]
    fn log_partition_derivatives(law in law_strategy(), beta in -2.0f64..2.0, theta in 0.2f64..4.0) {
        let n = law.dim() as f64;
        let hb = 1e-5 * (1.0 + beta.abs());
        let ht = 1e-5 * theta;
        let db = (law.log_partition_z(beta + hb, theta) - law.log_partition_z(beta - hb, theta)) / (2.0 * hb);
        let dt = (law.log_partition_z(beta, theta + ht) - law.log_partition_z(beta, theta - ht)) / (2.0 * ht);
        prop_assert!(rel(db, law.mass_mean(beta)) < 1e-7);
        prop_assert!(rel(dt, n / (2.0 * theta)) < 1e-7);
    }

    #[test]
    fn collisions_conserve_and_invert(
        mm in 2u32..=6,
        n in 1usize..=3,
        pick in (any::<u32>(), any::<u32>(), any::<u32>()),
        v in prop::array::uniform3(-3.0f64..3.0),
        v1 in prop::array::uniform3(-3.0f64..3.0),
        w in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let law = MassLaw::uniform(mm as usize, n).unwrap();
        let (m, m1) = (1 + pick.0 % mm, 1 + pick.1 % mm);
        let ch = collision::allowed_channels(&law, m, m1);
        prop_assume!(!ch.is_empty());
        let m_out = ch.start() + pick.2 % (ch.end() - ch.start() + 1);
        let p = Particle { m, v: fit(PrimitiveState { rho: 1.0, u: Velocity::from(v), theta: 1.0, beta: 0.0 }, n).u };
        let q = Particle { m: m1, v: fit(PrimitiveState { rho: 1.0, u: Velocity::from(v1), theta: 1.0, beta: 0.0 }, n).u };
        let Some(mut omega) = unit(w, n) else { return Ok(()); };
        if omega.dot(&(p.v - q.v)) > 0.0 {
            omega = -omega;
        }
        let (a, b) = collision::collide_forward(&p, &q, &CollisionChannel { m_out, omega }).unwrap();
        prop_assert_eq!(a.m + b.m, m + m1);
        let scale = m as f64 * p.v.norm() + m1 as f64 * q.v.norm() + 1e-300;
        let dp = (a.v * a.m as f64 + b.v * b.m as f64) - (p.v * m as f64 + q.v * m1 as f64);
        prop_assert!(dp.norm() <= 1e-12 * scale);
        let e0 = m as f64 * p.v.norm_squared() + m1 as f64 * q.v.norm_squared();
        let e1 = a.m as f64 * a.v.norm_squared() + b.m as f64 * b.v.norm_squared();
        prop_assert!((e1 - e0).abs() <= 1e-12 * e0.max(1e-300));
        let g0 = ((m * m1) as f64).sqrt() * (p.v - q.v).norm();
        let g1 = ((a.m * b.m) as f64).sqrt() * (a.v - b.v).norm();
        prop_assert!((g1 - g0).abs() <= 1e-12 * g0.max(1.0));
        let (c, d) = collision::collide_inverse(&a, &b, &CollisionChannel { m_out: m, omega }).unwrap();
        prop_assert_eq!((c.m, d.m), (m, m1));
        prop_assert!((c.v - p.v).norm() + (d.v - q.v).norm() <= 1e-10 * (1.0 + p.v.norm() + q.v.norm()));
    }

    #[test]
    fn jacobian_matches_numerical_determinant(m in 1u32..=4, m1 in 1u32..=4, k in any::<u32>(), n in 1usize..=3, w in prop::array::uniform3(-1.0f64..1.0)) {
        let m_out = 1 + k % (m + m1 - 1);
        let Some(omega) = unit(w, n) else { return Ok(()); };
        prop_assert!(kinex_core::verify::jacobian_error(m, m1, m_out, n, &omega) < 1e-6);
    }

    #[test]
    fn primitive_conserved_roundtrip(law in law_strategy(), p in prim_strategy()) {
        let p = fit(p, law.dim());
        let c = fluid::prim_to_cons(&law, &p).unwrap();
        let q = fluid::cons_to_prim(&law, &c).unwrap();
        prop_assert!(rel(q.rho, p.rho) < 1e-12 && rel(q.theta, p.theta) < 1e-10);
        prop_assert!((q.beta - p.beta).abs() < 1e-9 && (q.u - p.u).norm() < 1e-12);
    }

    #[test]
    fn transport_coefficients_positive(law in law_strategy(), p in prim_strategy()) {
        let c = fluid::transport_coeffs(&law, &fit(p, law.dim()));
        prop_assert!(c.mu > 0.0 && c.kappa > 0.0 && c.nu > 0.0);
    }

    #[test]
    fn onsager_symmetric_and_nonnegative(law in law_strategy(), p in prim_strategy(), eps in 0.01f64..1.0, y in prop::collection::vec(-1.0f64..1.0, 18)) {
        let n = law.dim();
        let p = fit(p, n);
        let x = thermo::onsager_x(&law, &p, eps).full();
        prop_assert_eq!(&x, &x.transpose());
        let y: Vec<Vec<f64>> = (0..n + 3).map(|a| y[a * 3..a * 3 + n].to_vec()).collect();
        let (direct, sos) = thermo::x_quadratic_form(&law, &p, eps, &y).unwrap();
        prop_assert!(sos >= 0.0 && direct >= -1e-14 * sos.max(1.0));
        prop_assert!((direct - sos).abs() <= 1e-12 * sos.max(1e-300));
    }

    #[test]
    fn massieu_hessian_is_positive_definite(law in law_strategy(), p in prim_strategy()) {
        let p = fit(p, law.dim());
        prop_assert!(thermo::hessian_sigma_prim(&law, &p).cholesky().is_some());
        let d = thermo::principal_minors(&law, &p);
        prop_assert!(d.iter().all(|v| *v > 0.0), "{d:?}");
        prop_assert!(kinex_core::verify::minor_error(&law, &p) < 1e-8);
    }

    #[test]
    fn entropic_roundtrip_and_legendre(law in law_strategy(), p in prim_strategy()) {
        let p = fit(p, law.dim());
        let a = thermo::entropic_from_prim(&law, &p).unwrap();
        let q = thermo::prim_from_entropic(&law, &a).unwrap();
        prop_assert!(rel(q.rho, p.rho) < 1e-12 && (q.u - p.u).norm() < 1e-12);
        let c = fluid::prim_to_cons(&law, &p).unwrap();
        let s = thermo::thermo_entropy(&law, &c).unwrap();
        prop_assert!((thermo::legendre_entropy(&law, &c).unwrap() - s).abs() < 1e-10 * s.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bgk_relaxation_conserves_and_dissipates(seed in any::<u64>(), eps in 0.05f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let law = MassLaw::uniform(3, 1).unwrap();
        let grid = VelocityGrid::new(1, 5.0, 24).unwrap();
        let mut f: Vec<f64> = (0..3 * grid.node_count()).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let m0 = kinetic::raw_moments(&law, &grid, &f);
        let mut s = kinetic::kinetic_entropy(&law, &grid, &f);
        for _ in 0..20 {
            f = kinetic::bgk_step_homogeneous(&law, &grid, &f, 0.1, eps).unwrap();
            let next = kinetic::kinetic_entropy(&law, &grid, &f);
            prop_assert!(next <= s + 1e-12 * s.abs());
            s = next;
        }
        let m1 = kinetic::raw_moments(&law, &grid, &f);
        prop_assert!(dsmc::conservation_drift(&m0, &m1) < 1e-12);
    }

    #[test]
    fn dsmc_rounds_conserve_totals(seed in any::<u64>(), shards in 1usize..=3) {
        let law = MassLaw::uniform(3, 3).unwrap();
        let p = PrimitiveState { rho: 1.0, u: Velocity::new(0.2, 0.0, -0.1), theta: 1.0, beta: 0.3 };
        let mut ens = ParticleEnsemble::sample_equilibrium(&law, &p, 600, seed).unwrap();
        let kernel = Kernel::power_law(1.0, 0.3).unwrap();
        let mut maj = MajorantConfig::for_ensemble(&law, &kernel, &ens);
        let before = ens.raw_moments();
        let opts = RoundOptions { shards, audit_limit: 0 };
        for _ in 0..5 {
            dsmc::collide_round(&mut ens, &law, &kernel, &mut maj, 0.002, &opts).unwrap();
        }
        prop_assert!(dsmc::conservation_drift(&before, &ens.raw_moments()) < 1e-10);
    }
}

#[test]
fn inverse_mass_mean_limits() {
    for m_max in 1..=5 {
        let law = MassLaw::uniform(m_max, 2).unwrap();
        assert!((law.inv_mass_mean(-50.0) - 1.0).abs() < 1e-6);
        assert!((law.inv_mass_mean(50.0) - 1.0 / m_max as f64).abs() < 1e-6);
    }
}
