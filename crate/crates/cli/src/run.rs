//! Experiment dispatch. Every experiment writes its CSV/JSON files into the
//! scenario's output directory followed by `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kinex_core::collision::{self, CollisionChannel, Particle};
use kinex_core::dsmc::{self, MajorantConfig, ParticleEnsemble, RoundOptions};
use kinex_core::fluid::{self, ConservedState, FvScheme, Grid1D, PrimitiveState};
use kinex_core::kinetic::{self, Advection, BmeConfig, KineticState, VelocityGrid};
use kinex_core::{thermo, verify, KinexError, MassLaw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scenario::{velocity_from, Experiment, Scenario};
use crate::CliError;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Scenario,
    seed: u64,
    threads: usize,
    wall_time_s: f64,
    outputs: Vec<String>,
    summary: serde_json::Value,
}

/// Writer that records every file it produces.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format_value(*v))).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Integral values print as integers, everything else in shortest
/// round-trip scientific notation.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

fn num(stage: &str) -> impl Fn(KinexError) -> CliError + '_ {
    move |e| CliError::Numerical { stage: stage.to_string(), message: e.to_string() }
}

/// Runs a validated scenario and writes all artifacts. On a numerical
/// failure a `diagnostic.json` is written before the error is returned.
pub fn run(scn: &Scenario, threads: usize) -> Result<serde_json::Value, CliError> {
    let start = Instant::now();
    let mut out = Outputs::new(&scn.output_dir)?;
    let result = match scn.experiment {
        Experiment::CollideDemo => collide_demo(scn, &mut out),
        Experiment::Qeval => qeval(scn, &mut out),
        Experiment::RelaxDsmc => relax_dsmc(scn, &mut out),
        Experiment::RelaxBgk => relax_bgk(scn, &mut out),
        Experiment::Euler1d => fluid_run(scn, &mut out, 0.0),
        Experiment::Nsme1d => fluid_run(scn, &mut out, scn.eps),
        Experiment::ChapmanEnskog => chapman_enskog(scn, &mut out),
        Experiment::ThermoVerify => thermo_verify(scn, &mut out),
    };
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            if let CliError::Numerical { stage, message } = &e {
                let diag = serde_json::json!({ "experiment": scn.experiment, "stage": stage, "error": message });
                let _ = out.json("diagnostic.json", &diag);
            }
            return Err(e);
        }
    };
    let manifest = Manifest {
        tool: "kinex",
        version: env!("CARGO_PKG_VERSION"),
        config: scn,
        seed: scn.seed,
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
        summary: summary.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(summary)
}

/// Single collision; rows are (stage, particle, m, v_x, v_y, v_z) with
/// stage 0 = incoming, 1 = outgoing.
pub fn collide_once(law: &MassLaw, c: &crate::scenario::CollideSpec) -> Result<(Particle, Particle, Particle, Particle), CliError> {
    let n = law.dim();
    if c.v.len() > n || c.v1.len() > n || c.omega.len() > n {
        return Err(CliError::Validation(format!("collide vectors must have at most n = {n} components")));
    }
    let mm = law.m_max() as u32;
    if c.m == 0 || c.m1 == 0 || c.m > mm || c.m1 > mm {
        return Err(CliError::Validation(format!("masses must lie in 1..={mm}")));
    }
    if !collision::allowed_channels(law, c.m, c.m1).contains(&c.m_out) {
        return Err(CliError::Validation(format!("m_out = {} is not an allowed channel for ({}, {})", c.m_out, c.m, c.m1)));
    }
    let p = Particle { m: c.m, v: velocity_from(&c.v) };
    let q = Particle { m: c.m1, v: velocity_from(&c.v1) };
    let ch = CollisionChannel { m_out: c.m_out, omega: velocity_from(&c.omega) };
    let (a, b) = collision::collide_forward(&p, &q, &ch).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((p, q, a, b))
}

fn conservation_summary(p: &Particle, q: &Particle, a: &Particle, b: &Particle) -> serde_json::Value {
    let mom = |x: &Particle| x.v * x.m as f64;
    let en = |x: &Particle| x.m as f64 * x.v.norm_squared();
    serde_json::json!({
        "mass_in": p.m + q.m,
        "mass_out": a.m + b.m,
        "momentum_error": (mom(a) + mom(b) - mom(p) - mom(q)).norm(),
        "energy_error": (en(a) + en(b) - en(p) - en(q)).abs(),
        "outgoing": [[a.m, a.v[0], a.v[1], a.v[2]], [b.m, b.v[0], b.v[1], b.v[2]]],
    })
}

fn collide_demo(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let law = scn.law();
    let (p, q, a, b) = collide_once(&law, scn.collide.as_ref().expect("validated"))?;
    let rows: Vec<Vec<f64>> = [(0.0, 0.0, p), (0.0, 1.0, q), (1.0, 0.0, a), (1.0, 1.0, b)]
        .iter()
        .map(|(s, k, x)| vec![*s, *k, x.m as f64, x.v[0], x.v[1], x.v[2]])
        .collect();
    out.csv("collide.csv", &["stage", "particle", "m", "v_x", "v_y", "v_z"], &rows)?;
    Ok(conservation_summary(&p, &q, &a, &b))
}

/// Equilibrium at the base state perturbed by a seeded multiplicative noise.
fn perturbed_distribution(scn: &Scenario, law: &MassLaw, grid: &VelocityGrid) -> Result<Vec<f64>, CliError> {
    let f = kinetic::maxwellian_from_prim(law, grid, &scn.base_state()).map_err(num("initial distribution"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    Ok(f.into_iter().map(|v| v * (0.5 + rng.gen::<f64>())).collect())
}

fn velocity_grid(scn: &Scenario) -> Result<VelocityGrid, CliError> {
    VelocityGrid::new(scn.n, scn.velocity.v_max, scn.velocity.n_v).map_err(|e| CliError::Validation(e.to_string()))
}

fn qeval(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let law = scn.law();
    let grid = velocity_grid(scn)?;
    let f = perturbed_distribution(scn, &law, &grid)?;
    let cfg = BmeConfig { n_omega: scn.velocity.n_omega, interpolation: scn.velocity.interpolation };
    let kernel = scn.kernel_value();
    let t = kinetic::q_bme(&law, &grid, &f, &kernel, &cfg).map_err(num("q_bme"))?;
    let prod = kinetic::entropy_production(&law, &grid, &f, &kernel, &cfg).map_err(num("entropy production"))?;
    let nodes = grid.node_count();
    let rows: Vec<Vec<f64>> = (0..f.len())
        .map(|k| {
            let v = grid.nodes()[k % nodes];
            vec![(k / nodes + 1) as f64, v[0], v[1], v[2], f[k], t.q[k]]
        })
        .collect();
    out.csv("qeval.csv", &["m", "v_x", "v_y", "v_z", "f", "q"], &rows)?;
    Ok(serde_json::json!({
        "moment_residual": verify::collision_moment_residual(&law, &grid, &t),
        "entropy_production": prod,
    }))
}

fn relax_bgk(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    if !(scn.eps > 0.0) {
        return Err(CliError::Validation("relax_bgk needs eps > 0".into()));
    }
    let law = scn.law();
    let grid = velocity_grid(scn)?;
    let mut f = perturbed_distribution(scn, &law, &grid)?;
    let dt = scn.dt.unwrap_or(0.1 * scn.eps);
    let steps = (scn.t_end / dt).ceil() as usize;
    let mut rows = vec![vec![0.0, 0.0, kinetic::kinetic_entropy(&law, &grid, &f)]];
    for k in 1..=steps {
        f = kinetic::bgk_step_homogeneous(&law, &grid, &f, dt, scn.eps).map_err(num("bgk step"))?;
        rows.push(vec![k as f64, k as f64 * dt, kinetic::kinetic_entropy(&law, &grid, &f)]);
    }
    let monotone = rows.windows(2).all(|w| w[1][2] <= w[0][2] + 1e-12 * w[0][2].abs());
    out.csv("relax_bgk.csv", &["step", "t", "entropy"], &rows)?;
    Ok(serde_json::json!({ "steps": steps, "entropy_monotone": monotone, "final_entropy": rows[steps][2] }))
}

fn relax_dsmc(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let law = scn.law();
    let n = scn.n;
    let base = scn.base_state();
    let count = scn.ensemble.particles;
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let half = (3.0 * base.theta).sqrt();
    let particles: Vec<Particle> = (0..count)
        .map(|_| {
            let m = rng.gen_range(1..=law.m_max() as u32);
            let mut v = base.u;
            for d in 0..n {
                v[d] += rng.gen_range(-half..half);
            }
            Particle { m, v }
        })
        .collect();
    let total_mass: f64 = particles.iter().map(|p| p.m as f64).sum();
    let mut ens = ParticleEnsemble::new(particles, base.rho / total_mass, n, scn.seed).map_err(num("ensemble"))?;
    let kernel = scn.kernel_value();
    let mut maj = MajorantConfig::for_ensemble(&law, &kernel, &ens);
    let dt = match scn.dt {
        Some(dt) => dt,
        None => 0.5 / ((count - 1) as f64 * ens.weight * maj.pair_rate(n)),
    };
    let steps = (scn.t_end / dt).ceil() as usize;
    let before = ens.raw_moments();
    let opts = RoundOptions { shards: scn.ensemble.shards, audit_limit: 0 };
    let m_max = law.m_max();
    let row = |k: usize, ens: &ParticleEnsemble, accepted: u64| -> Result<Vec<f64>, CliError> {
        let est = dsmc::estimate_macro(ens, &law).map_err(num("estimate"))?;
        let hist = dsmc::mass_histogram(ens, m_max);
        let mut r = vec![k as f64, k as f64 * dt, dsmc::entropy_estimate(ens, &law, scn.ensemble.entropy_bins), est.fields.theta, est.fields.beta];
        r.extend(hist.iter().map(|h| *h as f64 / count as f64));
        r.push(dsmc::conservation_drift(&before, &ens.raw_moments()));
        r.push(accepted as f64);
        Ok(r)
    };
    let mut rows = vec![row(0, &ens, 0)?];
    for k in 1..=steps {
        let rep = dsmc::collide_round(&mut ens, &law, &kernel, &mut maj, dt, &opts).map_err(num("collision round"))?;
        rows.push(row(k, &ens, rep.accepted)?);
    }
    let mut header: Vec<String> = ["round", "t", "entropy", "theta", "beta"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=m_max).map(|m| format!("frac_{m}")));
    header.extend(["drift".to_string(), "accepted".to_string()]);
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    out.csv("relax_dsmc.csv", &header, &rows)?;
    let beta = dsmc::conserved_beta(&ens, &law).map_err(num("beta"))?;
    Ok(serde_json::json!({
        "rounds": steps,
        "dt": dt,
        "conserved_beta": beta,
        "equilibrium_fractions": dsmc::equilibrium_mass_fractions(&law, beta),
        "final_drift": rows[steps][5 + m_max],
    }))
}

fn fluid_grid(scn: &Scenario, eps: f64) -> Result<Grid1D, CliError> {
    Grid1D::new(scn.grid.cells, scn.grid.length, scn.grid.bc, eps).map_err(|e| CliError::Validation(e.to_string()))
}

fn profile_rows(grid: &Grid1D, prims: &[PrimitiveState]) -> Vec<Vec<f64>> {
    prims.iter().enumerate().map(|(i, p)| vec![grid.x(i), p.rho, p.u[0], p.u[1], p.u[2], p.theta, p.beta]).collect()
}

const PROFILE: [&str; 7] = ["x", "rho", "u_x", "u_y", "u_z", "theta", "beta"];

fn fluid_run(scn: &Scenario, out: &mut Outputs, eps: f64) -> Result<serde_json::Value, CliError> {
    let law = scn.law();
    let grid = fluid_grid(scn, eps)?;
    let scheme = FvScheme { reconstruction: scn.grid.reconstruction, cfl: scn.cfl };
    let mut s: Vec<ConservedState> = (0..grid.cells)
        .map(|i| fluid::prim_to_cons(&law, &scn.initial_state(grid.x(i))))
        .collect::<Result<_, _>>()
        .map_err(num("initial state"))?;
    let entropy = |s: &[ConservedState]| -> Result<f64, CliError> {
        let mut acc = 0.0;
        for c in s {
            acc += thermo::thermo_entropy(&law, c).map_err(num("entropy"))?;
        }
        Ok(acc * grid.dx)
    };
    let totals_row = |k: usize, t: f64, s: &[ConservedState]| -> Result<Vec<f64>, CliError> {
        let tot = fluid::totals(s, grid.dx);
        Ok(vec![k as f64, t, tot.pop, tot.rho, tot.p[0], tot.p[1], tot.p[2], tot.e, entropy(s)?])
    };
    let mut rows = vec![totals_row(0, 0.0, &s)?];
    let mut t = 0.0;
    let mut k = 0;
    while t < scn.t_end * (1.0 - 1e-14) {
        let stable = fluid::stable_dt(&law, &s, &grid, eps, scheme.cfl).map_err(num("time step"))?;
        let dt = scn.dt.map_or(stable, |d| d.min(stable)).min(scn.t_end - t);
        s = if eps > 0.0 { fluid::nsme_step(&law, &s, &grid, dt, eps, &scheme) } else { fluid::eme_step(&law, &s, &grid, dt, &scheme) }
            .map_err(num("fluid step"))?;
        t += dt;
        k += 1;
        rows.push(totals_row(k, t, &s)?);
    }
    let prims: Vec<PrimitiveState> = s.iter().map(|c| fluid::cons_to_prim(&law, c)).collect::<Result<_, _>>().map_err(num("final state"))?;
    out.csv("profile.csv", &PROFILE, &profile_rows(&grid, &prims))?;
    out.csv("totals.csv", &["step", "t", "pop", "rho", "p_x", "p_y", "p_z", "e", "entropy"], &rows)?;
    Ok(serde_json::json!({ "steps": k, "t": t, "final_entropy": rows[k][8] }))
}

fn chapman_enskog(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    if !(scn.eps > 0.0) {
        return Err(CliError::Validation("chapman_enskog needs eps > 0".into()));
    }
    if scn.grid.bc != fluid::BoundaryCondition::Periodic {
        return Err(CliError::Validation("chapman_enskog runs on a periodic grid".into()));
    }
    let law = scn.law();
    let vgrid = velocity_grid(scn)?;
    let grid = fluid_grid(scn, scn.eps)?;
    let mut st = KineticState::zeros(law.clone(), vgrid.clone(), grid.cells);
    for c in 0..grid.cells {
        let f = kinetic::maxwellian_from_prim(&law, &vgrid, &scn.initial_state(grid.x(c))).map_err(num("initial distribution"))?;
        st.cell_mut(c).copy_from_slice(&f);
    }
    let mut s: Vec<ConservedState> = st.raw_moments().iter().map(ConservedState::from_raw).collect();

    let vmax = vgrid.nodes().iter().map(|v| v[0].abs()).fold(0.0, f64::max);
    let limit = scn.cfl * grid.dx / vmax;
    let steps = (scn.t_end / scn.dt.map_or(limit, |d| d.min(limit))).ceil() as usize;
    let dt = scn.t_end / steps as f64;
    for _ in 0..steps {
        st = kinetic::bgkme_step_1d(&st, grid.dx, dt, scn.eps, Advection::Minmod).map_err(num("kinetic step"))?;
    }
    let kin: Vec<PrimitiveState> =
        st.raw_moments().iter().map(|r| kinetic::macro_from_moments(&law, r)).collect::<Result<_, _>>().map_err(num("kinetic moments"))?;

    let scheme = FvScheme { reconstruction: scn.grid.reconstruction, cfl: scn.cfl };
    let mut t = 0.0;
    while t < scn.t_end * (1.0 - 1e-14) {
        let dt = fluid::stable_dt(&law, &s, &grid, scn.eps, scheme.cfl).map_err(num("time step"))?.min(scn.t_end - t);
        s = fluid::nsme_step(&law, &s, &grid, dt, scn.eps, &scheme).map_err(num("fluid step"))?;
        t += dt;
    }
    let ns: Vec<PrimitiveState> = s.iter().map(|c| fluid::cons_to_prim(&law, c)).collect::<Result<_, _>>().map_err(num("final state"))?;
    let rows: Vec<Vec<f64>> = (0..grid.cells)
        .map(|i| {
            let (a, b) = (&kin[i], &ns[i]);
            vec![grid.x(i), a.rho, b.rho, a.u[0], b.u[0], a.u[1], b.u[1], a.theta, b.theta, a.beta, b.beta]
        })
        .collect();
    out.csv(
        "chapman_enskog.csv",
        &["x", "rho_kin", "rho_ns", "u_x_kin", "u_x_ns", "u_y_kin", "u_y_ns", "theta_kin", "theta_ns", "beta_kin", "beta_ns"],
        &rows,
    )?;
    let gap: f64 = kin.iter().zip(&ns).map(|(a, b)| ((a.rho - b.rho).abs() + (a.u - b.u).norm() + (a.theta - b.theta).abs()) * grid.dx).sum();
    Ok(serde_json::json!({ "kinetic_steps": steps, "l1_gap": gap }))
}

fn thermo_verify(scn: &Scenario, out: &mut Outputs) -> Result<serde_json::Value, CliError> {
    let report = verify::thermo_suite(scn.seed, 200).map_err(num("thermo suite"))?;
    out.json("thermo_report.json", &report)?;
    if !report.all_passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::Numerical { stage: "thermo suite".into(), message: format!("failed checks: {}", failed.join(", ")) });
    }
    Ok(serde_json::json!({ "checks": report.checks.len(), "all_passed": true }))
}
