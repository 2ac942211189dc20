//! Particle simulation of the spatially homogeneous mass-exchange dynamics.
//!
//! Pairs are drawn at a majorant rate and accepted with the ratio of the true
//! pair rate to the majorant (null collisions). Within a round the events
//! form a uniformized Markov jump process, so the only time discretization
//! is the Poisson number of candidates per round.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{allowed_channels, channel_count, post_velocities, reduced_energy, Kernel, KernelKind, Particle, Velocity};
use crate::error::{KinexError, Result};
use crate::kinetic::{macro_from_moments, MacroFields, RawMoments};
use crate::mass_law::MassLaw;

/// Number of jackknife groups used by [`estimate_macro`].
pub const JACKKNIFE_GROUPS: usize = 20;

/// Measure of the half-sphere {Ω ∈ 𝕊ⁿ⁻¹ : Ω·g ≤ 0}.
pub fn half_sphere_measure(n: usize) -> f64 {
    match n {
        1 => 1.0,
        2 => std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    /// Physical number of particles represented by one simulated particle.
    pub weight: f64,
    pub rng_seed: u64,
    pub time: f64,
    pub dim: usize,
    /// Completed collision rounds; selects the RNG substreams.
    pub rounds: u64,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<Particle>, weight: f64, dim: usize, rng_seed: u64) -> Result<Self> {
        if particles.len() < 2 {
            return Err(KinexError::Validation("an ensemble needs at least 2 particles".into()));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(KinexError::Validation(format!("particle weight {weight} must be positive")));
        }
        if !(1..=3).contains(&dim) {
            return Err(KinexError::Validation(format!("velocity dimension {dim} not in 1..=3")));
        }
        Ok(Self { particles, weight, rng_seed, time: 0.0, dim, rounds: 0 })
    }

    /// Draws `count` particles from the local equilibrium ρM with the given
    /// macroscopic fields; the weight is set so that the expected mass
    /// density equals ρ.
    pub fn sample_equilibrium(law: &MassLaw, p: &MacroFields, count: usize, seed: u64) -> Result<Self> {
        if !(p.rho > 0.0 && p.theta > 0.0) {
            return Err(KinexError::Domain("equilibrium sampling needs rho > 0 and Theta > 0".into()));
        }
        let n = law.dim();
        let w = law.weights(p.beta);
        // number fractions ∝ w_m / m = e^{βm}/γ_m
        let frac: Vec<f64> = (1..=law.m_max()).map(|m| w.p[m - 1] / m as f64).collect();
        let pick = WeightedIndex::new(&frac).map_err(|e| KinexError::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let particles = (0..count)
            .map(|_| {
                let m = pick.sample(&mut rng) + 1;
                let sd = (p.theta / m as f64).sqrt();
                let mut v = p.u;
                for d in 0..n {
                    v[d] += sd * std.sample(&mut rng);
                }
                for d in n..3 {
                    v[d] = 0.0;
                }
                Particle { m: m as u32, v }
            })
            .collect();
        let weight = p.rho * law.inv_mass_mean(p.beta) / count as f64;
        Self::new(particles, weight, n, seed)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted moments (N, ρ, P, E).
    pub fn raw_moments(&self) -> RawMoments {
        raw_of(self.particles.iter(), self.weight)
    }
}

fn raw_of<'a>(it: impl Iterator<Item = &'a Particle>, weight: f64) -> RawMoments {
    let mut r = RawMoments::zero();
    for p in it {
        let m = p.m as f64;
        r.n_raw += 1.0;
        r.rho += m;
        r.p += p.v * m;
        r.e += m * p.v.norm_squared();
    }
    r.n_raw *= weight;
    r.rho *= weight;
    r.p *= weight;
    r.e *= weight;
    r
}

/// Bounds used for majorant pair selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantConfig {
    pub b_max: f64,
    pub channel_count_max: usize,
    pub gamma_max: f64,
}

impl MajorantConfig {
    /// Majorant for the kernel over the reachable reduced energies of the
    /// ensemble. For power-law kernels E_red ≤ m|v|² + m1|v1|² bounds the
    /// energy of any pair.
    pub fn for_ensemble(law: &MassLaw, kernel: &Kernel, ens: &ParticleEnsemble) -> Self {
        let mm = law.m_max();
        let channel_count_max = (1..=mm as u32)
            .flat_map(|a| (1..=mm as u32).map(move |b| (a, b)))
            .map(|(a, b)| channel_count(law, a, b))
            .max()
            .unwrap_or(1);
        Self { b_max: kernel_bound(kernel, ens), channel_count_max, gamma_max: law.gamma_max() }
    }

    /// Pair-rate majorant (before the particle weight).
    pub fn pair_rate(&self, n: usize) -> f64 {
        self.channel_count_max as f64 * self.gamma_max * self.gamma_max * self.b_max * half_sphere_measure(n)
    }
}

fn kernel_bound(kernel: &Kernel, ens: &ParticleEnsemble) -> f64 {
    match kernel.kind {
        KernelKind::Maxwell => kernel.c_b,
        KernelKind::PowerLaw => {
            let top = ens.particles.iter().map(|p| p.m as f64 * p.v.norm_squared()).fold(0.0, f64::max);
            kernel.eval(2.0 * top, 0.0)
        }
    }
}

/// Uniform direction on the half-sphere {Ω : Ω·g ≤ 0}.
pub fn sample_omega<R: Rng + ?Sized>(rng: &mut R, g: &Velocity, n: usize) -> Result<Velocity> {
    let gn = g.norm();
    if !(gn > 0.0) {
        return Err(KinexError::Domain("zero relative velocity has no half-sphere".into()));
    }
    let gh = g / gn;
    let mut om = Velocity::zeros();
    match n {
        1 => om[0] = -g[0].signum(),
        2 => {
            let phi = std::f64::consts::PI * (0.5 + rng.gen::<f64>());
            let perp = Velocity::new(-gh[1], gh[0], 0.0);
            om = gh * phi.cos() + perp * phi.sin();
        }
        3 => {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            let r = (1.0 - z * z).max(0.0).sqrt();
            om = Velocity::new(r * phi.cos(), r * phi.sin(), z);
            om /= om.norm();
        }
        _ => return Err(KinexError::Validation(format!("velocity dimension {n} not in 1..=3"))),
    }
    if om.dot(g) > 0.0 {
        om = -om;
    }
    Ok(om)
}

/// One realized collision, with the channel rates of the forward event and
/// of its reverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub m: u32,
    pub m1: u32,
    pub m_out: u32,
    pub m_out1: u32,
    pub a_forward: f64,
    pub a_reverse: f64,
    /// Whether the incoming first mass is an allowed outgoing channel of the
    /// reverse collision.
    pub reversible: bool,
}

impl AuditRecord {
    /// A_fwd = γ_m γ_{m1} and A_rev = γ_{m′} γ_{m′1}.
    pub fn is_multiplicative(&self, law: &MassLaw) -> bool {
        let g = |m: u32| law.gamma(m as usize);
        self.reversible && self.a_forward == g(self.m) * g(self.m1) && self.a_reverse == g(self.m_out) * g(self.m_out1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOptions {
    /// Number of independent sub-ensembles colliding internally.
    pub shards: usize,
    /// Keep at most this many audit records per round.
    pub audit_limit: usize,
}

impl Default for RoundOptions {
    fn default() -> Self {
        Self { shards: 1, audit_limit: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub candidates: u64,
    pub accepted: u64,
    /// Majorant refreshes triggered by a kernel value above the bound.
    pub refreshes: u64,
    pub audit: Vec<AuditRecord>,
}

fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Advances the ensemble by `dt`. Particles are randomly permuted and split
/// into `opts.shards` groups; each group collides internally on its own RNG
/// substream, with the weight rescaled so that per-particle collision rates
/// match the full ensemble.
pub fn collide_round(ens: &mut ParticleEnsemble, law: &MassLaw, kernel: &Kernel, maj: &mut MajorantConfig, dt: f64, opts: &RoundOptions) -> Result<RoundReport> {
    kernel.validate()?;
    if !(dt >= 0.0) {
        return Err(KinexError::Step(format!("dt = {dt} must be nonnegative")));
    }
    if law.dim() != ens.dim {
        return Err(KinexError::Validation("mass law and ensemble dimensions differ".into()));
    }
    let mm = law.m_max() as u32;
    if let Some(p) = ens.particles.iter().find(|p| p.m < 1 || p.m > mm) {
        return Err(KinexError::Validation(format!("particle mass {} outside 1..={mm}", p.m)));
    }
    let shards = opts.shards.max(1);
    let n_total = ens.len();
    if n_total / shards < 2 {
        return Err(KinexError::Validation(format!("{shards} shards leave fewer than 2 particles per shard")));
    }
    let per_particle = (n_total - 1) as f64 * ens.weight * maj.pair_rate(ens.dim) * dt;
    if per_particle > 1.0 {
        return Err(KinexError::Step(format!(
            "dt = {dt} gives {per_particle:.3} expected collisions per particle (limit 1)"
        )));
    }

    let base = ens.rounds * (shards as u64 + 1);
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(&mut shard_rng(ens.rng_seed, base));
    let bounds: Vec<(usize, usize)> = (0..shards).map(|s| (s * n_total / shards, (s + 1) * n_total / shards)).collect();
    let groups: Vec<Vec<Particle>> = bounds.iter().map(|&(a, b)| order[a..b].iter().map(|&i| ens.particles[i]).collect()).collect();

    let weight = ens.weight;
    let n = ens.dim;
    let maj0 = *maj;
    let results: Vec<Result<(Vec<Particle>, RoundReport, MajorantConfig)>> = groups
        .into_par_iter()
        .enumerate()
        .map(|(s, mut g)| {
            let scale = (n_total - 1) as f64 / (g.len() - 1) as f64;
            let mut rng = shard_rng(ens.rng_seed, base + 1 + s as u64);
            let mut m = maj0;
            let rep = collide_group(&mut g, law, kernel, &mut m, weight * scale, n, dt, opts.audit_limit, &mut rng)?;
            Ok((g, rep, m))
        })
        .collect();

    let mut report = RoundReport::default();
    for (s, r) in results.into_iter().enumerate() {
        let (g, rep, m) = r?;
        let (a, _) = bounds[s];
        for (k, p) in g.into_iter().enumerate() {
            ens.particles[order[a + k]] = p;
        }
        report.candidates += rep.candidates;
        report.accepted += rep.accepted;
        report.refreshes += rep.refreshes;
        let room = opts.audit_limit.saturating_sub(report.audit.len());
        report.audit.extend(rep.audit.into_iter().take(room));
        if m.b_max > maj.b_max {
            maj.b_max = m.b_max;
        }
    }
    ens.time += dt;
    ens.rounds += 1;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn collide_group(ps: &mut [Particle], law: &MassLaw, kernel: &Kernel, maj: &mut MajorantConfig, weight: f64, n: usize, dt: f64, audit_limit: usize, rng: &mut ChaCha8Rng) -> Result<RoundReport> {
    let mut rep = RoundReport::default();
    let np = ps.len();
    let pairs = 0.5 * np as f64 * (np - 1) as f64;
    let sphere = half_sphere_measure(n);
    let mut t = 0.0;
    // Event times of a Poisson process at the majorant total rate; a refresh
    // restarts the clock from the current time at the new rate.
    loop {
        let total = pairs * weight * maj.pair_rate(n);
        if !(total > 0.0) {
            break;
        }
        t += -rng.gen::<f64>().ln() / total;
        if t > dt {
            break;
        }
        rep.candidates += 1;
        let i = rng.gen_range(0..np);
        let mut j = rng.gen_range(0..np - 1);
        if j >= i {
            j += 1;
        }
        let (p, q) = (ps[i], ps[j]);
        let g = p.v - q.v;
        if g.norm_squared() == 0.0 {
            continue;
        }
        let e_red = reduced_energy(p.m, q.m, &g);
        let b = kernel.eval(e_red, 0.0);
        if b > maj.b_max {
            maj.b_max = kernel_bound(kernel, &ParticleEnsemble { particles: ps.to_vec(), weight, rng_seed: 0, time: 0.0, dim: n, rounds: 0 }).max(b);
            rep.refreshes += 1;
        }
        let gam = law.gamma(p.m as usize) * law.gamma(q.m as usize);
        let count = channel_count(law, p.m, q.m);
        let rate = count as f64 * gam * b * sphere;
        if rng.gen::<f64>() * maj.pair_rate(n) >= rate {
            continue;
        }
        let chans = allowed_channels(law, p.m, q.m);
        let m_out = rng.gen_range(chans);
        let om = sample_omega(rng, &g, n)?;
        let (vp, v1p) = post_velocities(p.m, q.m, &p.v, &q.v, m_out, &om);
        let m_out1 = p.m + q.m - m_out;
        ps[i] = Particle { m: m_out, v: vp };
        ps[j] = Particle { m: m_out1, v: v1p };
        rep.accepted += 1;
        if rep.audit.len() < audit_limit {
            rep.audit.push(AuditRecord {
                m: p.m,
                m1: q.m,
                m_out,
                m_out1,
                a_forward: crate::collision::channel_rate_a(law, p.m, q.m, m_out),
                a_reverse: crate::collision::channel_rate_a(law, m_out, m_out1, p.m),
                reversible: allowed_channels(law, m_out, m_out1).contains(&p.m),
            });
        }
    }
    Ok(rep)
}

/// Standard errors of the macroscopic estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroErrors {
    pub rho: f64,
    pub u: Velocity,
    pub theta: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroEstimate {
    pub fields: MacroFields,
    pub errors: MacroErrors,
}

/// Sample-moment estimate of (ρ, u, Θ, β) with delete-a-group jackknife
/// standard errors.
pub fn estimate_macro(ens: &ParticleEnsemble, law: &MassLaw) -> Result<MacroEstimate> {
    let np = ens.len();
    if np < 100 {
        return Err(KinexError::Validation(format!("estimation needs at least 100 particles, got {np}")));
    }
    let fields = macro_from_moments(law, &ens.raw_moments())?;
    let g = JACKKNIFE_GROUPS;
    let group_raw: Vec<RawMoments> = (0..g)
        .map(|k| raw_of(ens.particles.iter().skip(k).step_by(g), 1.0))
        .collect();
    let full = raw_of(ens.particles.iter(), 1.0);
    let mut reps = Vec::with_capacity(g);
    for gr in &group_raw {
        let kept = full.n_raw - gr.n_raw;
        let scale = ens.weight * full.n_raw / kept;
        let r = RawMoments {
            n_raw: (full.n_raw - gr.n_raw) * scale,
            rho: (full.rho - gr.rho) * scale,
            p: (full.p - gr.p) * scale,
            e: (full.e - gr.e) * scale,
        };
        reps.push(macro_from_moments(law, &r)?);
    }
    let jk = |f: &dyn Fn(&MacroFields) -> f64| {
        let vals: Vec<f64> = reps.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / g as f64;
        ((g - 1) as f64 / g as f64 * vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    };
    let mut u = Velocity::zeros();
    for d in 0..ens.dim {
        u[d] = jk(&|p: &MacroFields| p.u[d]);
    }
    let errors = MacroErrors {
        rho: jk(&|p: &MacroFields| p.rho),
        u,
        theta: jk(&|p: &MacroFields| p.theta),
        beta: jk(&|p: &MacroFields| p.beta),
    };
    Ok(MacroEstimate { fields, errors })
}

/// Particle counts per mass class; entry m−1 counts mass m.
pub fn mass_histogram(ens: &ParticleEnsemble, m_max: usize) -> Vec<u64> {
    let mut h = vec![0u64; m_max];
    for p in &ens.particles {
        let k = p.m as usize;
        if k >= 1 && k <= m_max {
            h[k - 1] += 1;
        }
    }
    h
}

/// Equilibrium number fractions ∝ e^{βm}/γ_m.
pub fn equilibrium_mass_fractions(law: &MassLaw, beta: f64) -> Vec<f64> {
    let w = law.weights(beta);
    let raw: Vec<f64> = (1..=law.m_max()).map(|m| w.p[m - 1] / m as f64).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// β solving ⟨m⁻¹⟩_β = N/ρ for the ensemble's conserved totals.
pub fn conserved_beta(ens: &ParticleEnsemble, law: &MassLaw) -> Result<f64> {
    let r = ens.raw_moments();
    if law.m_max() == 1 {
        return Ok(0.0);
    }
    law.beta_from_inv_mass_mean(r.n_raw / r.rho, 1e-14)
}

/// Per-mass velocity statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub m: u32,
    pub count: usize,
    pub mean: Velocity,
    /// Component-averaged variance of v.
    pub variance: f64,
    pub variance_se: f64,
}

impl ClassStats {
    /// m · Var(v), the kinetic temperature of the class.
    pub fn temperature(&self) -> f64 {
        self.m as f64 * self.variance
    }
}

pub fn class_velocity_stats(ens: &ParticleEnsemble, m_max: usize) -> Vec<ClassStats> {
    let n = ens.dim;
    (1..=m_max as u32)
        .map(|m| {
            let vs: Vec<&Velocity> = ens.particles.iter().filter(|p| p.m == m).map(|p| &p.v).collect();
            let c = vs.len();
            let mut mean = Velocity::zeros();
            for v in &vs {
                mean += *v;
            }
            if c > 0 {
                mean /= c as f64;
            }
            let q: Vec<f64> = vs
                .iter()
                .map(|v| (0..n).map(|d| (v[d] - mean[d]).powi(2)).sum::<f64>() / n as f64)
                .collect();
            let (variance, variance_se) = if c > 1 {
                let qm = q.iter().sum::<f64>() / c as f64;
                let qv = q.iter().map(|x| (x - qm).powi(2)).sum::<f64>() / (c - 1) as f64;
                (qm * c as f64 / (c - 1) as f64, (qv / c as f64).sqrt())
            } else {
                (f64::NAN, f64::NAN)
            };
            ClassStats { m, count: c, mean, variance, variance_se }
        })
        .collect()
}

/// Histogram estimate of Σ_m ∫ f (log(γ_m f/m^{n/2}) − 1) dv with `bins`
/// cells per axis spanning the ensemble's velocity range.
pub fn entropy_estimate(ens: &ParticleEnsemble, law: &MassLaw, bins: usize) -> f64 {
    let n = ens.dim;
    let bins = bins.max(1);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &ens.particles {
        for d in 0..n {
            lo[d] = lo[d].min(p.v[d]);
            hi[d] = hi[d].max(p.v[d]);
        }
    }
    let mut width = [0.0; 3];
    for d in 0..n {
        width[d] = ((hi[d] - lo[d]) / bins as f64).max(1e-300) * (1.0 + 1e-12);
    }
    let vol: f64 = (0..n).map(|d| width[d]).product();
    let cells = bins.pow(n as u32);
    let mm = law.m_max();
    let mut counts = vec![0u64; mm * cells];
    for p in &ens.particles {
        let mut k = 0;
        let mut stride = 1;
        for d in 0..n {
            let b = (((p.v[d] - lo[d]) / width[d]) as usize).min(bins - 1);
            k += b * stride;
            stride *= bins;
        }
        counts[(p.m as usize - 1) * cells + k] += 1;
    }
    let nf = n as f64;
    let mut s = 0.0;
    for m in 1..=mm {
        let c = law.gamma(m).ln() - 0.5 * nf * (m as f64).ln();
        for &k in &counts[(m - 1) * cells..m * cells] {
            if k > 0 {
                let f = ens.weight * k as f64 / vol;
                s += f * vol * (f.ln() + c - 1.0);
            }
        }
    }
    s
}

/// Relative drift of (N, ρ, P, E) between two moment sets, each component
/// scaled by its natural magnitude.
pub fn conservation_drift(a: &RawMoments, b: &RawMoments) -> f64 {
    let scale_p = (a.rho * a.e).sqrt().max(f64::MIN_POSITIVE);
    [
        (a.n_raw - b.n_raw).abs() / a.n_raw,
        (a.rho - b.rho).abs() / a.rho,
        (a.p - b.p).norm() / scale_p,
        (a.e - b.e).abs() / a.e,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi2_p(counts: &[u64], probs: &[f64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * total as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
    }

    fn two_class(law: &MassLaw, count: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = law.dim();
        let ps = (0..count)
            .map(|k| {
                let mut v = Velocity::zeros();
                for d in 0..n {
                    v[d] = if k % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + rng.gen::<f64>());
                }
                Particle { m: if k % 3 == 0 { 1 } else { law.m_max() as u32 }, v }
            })
            .collect();
        ParticleEnsemble::new(ps, 1.0 / count as f64, n, seed).unwrap()
    }

    #[test]
    fn omega_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let om = sample_omega(&mut rng, &Velocity::new(2.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(om[0], -1.0);
        let om = sample_omega(&mut rng, &Velocity::new(-0.5, 0.0, 0.0), 1).unwrap();
        assert_eq!(om[0], 1.0);
        assert!(sample_omega(&mut rng, &Velocity::zeros(), 2).is_err());
    }

    #[test]
    fn omega_half_sphere_mean_cosine() {
        // mean of cos over the half-sphere by Gauss-Legendre on the polar angle
        let (x, w) = crate::quadrature::gauss_legendre(20);
        let half = |f: &dyn Fn(f64) -> f64| -> f64 {
            x.iter().zip(&w).map(|(t, wt)| 0.5 * wt * f(0.5 * (t + 1.0))).sum()
        };
        // n=2: φ ∈ [π/2, 3π/2] uniform; n=3: cos uniform on [−1, 0]
        let c2 = half(&|s: f64| (std::f64::consts::PI * (0.5 + s)).cos());
        let c3 = half(&|s: f64| -s);
        let g = Velocity::new(0.3, -1.1, 0.7);
        for (n, c) in [(2usize, c2), (3, c3)] {
            let gg = if n == 2 { Velocity::new(g[0], g[1], 0.0) } else { g };
            let mut rng = ChaCha8Rng::seed_from_u64(7 + n as u64);
            let draws: Vec<f64> = (0..100_000)
                .map(|_| {
                    let om = sample_omega(&mut rng, &gg, n).unwrap();
                    assert!(om.dot(&gg) <= 0.0);
                    assert!((om.norm() - 1.0).abs() < 1e-12);
                    om.dot(&gg) / gg.norm()
                })
                .collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
            let se = sd / (draws.len() as f64).sqrt();
            assert!((mean - c).abs() <= 3.0 * se, "n={n}: mean {mean} vs {c} (se {se})");
        }
    }

    #[test]
    fn omega_angle_uniform_in_plane() {
        let g = Velocity::new(1.0, 2.0, 0.0);
        let gh = g / g.norm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0u64; 16];
        for _ in 0..64_000 {
            let om = sample_omega(&mut rng, &g, 2).unwrap();
            let perp = Velocity::new(-gh[1], gh[0], 0.0);
            let mut phi = om.dot(&perp).atan2(om.dot(&gh));
            if phi < 0.0 {
                phi += 2.0 * std::f64::consts::PI;
            }
            let s = (phi / std::f64::consts::PI - 0.5).clamp(0.0, 1.0 - 1e-15);
            counts[(s * 16.0) as usize] += 1;
        }
        assert!(chi2_p(&counts, &[1.0 / 16.0; 16]) > 1e-3);
    }

    #[test]
    fn zero_amplitude_leaves_ensemble_unchanged() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let mut ens = two_class(&law, 200, 3);
        let before = ens.particles.clone();
        let k = Kernel::maxwell(0.0);
        let mut maj = MajorantConfig::for_ensemble(&law, &k, &ens);
        let rep = collide_round(&mut ens, &law, &k, &mut maj, 0.5, &RoundOptions::default()).unwrap();
        assert_eq!(rep.accepted, 0);
        assert_eq!(ens.particles, before);
    }

    #[test]
    fn single_mass_keeps_histogram() {
        let law = MassLaw::uniform(1, 2).unwrap();
        let mut ens = two_class(&law, 300, 5);
        let k = Kernel::maxwell(1.0);
        let mut maj = MajorantConfig::for_ensemble(&law, &k, &ens);
        for _ in 0..20 {
            collide_round(&mut ens, &law, &k, &mut maj, 0.2, &RoundOptions::default()).unwrap();
        }
        assert_eq!(mass_histogram(&ens, 1), vec![300]);
    }

    #[test]
    fn conservation_and_audit() {
        let law = MassLaw::family(4, 0.5, 0.1, 1.0, 3).unwrap();
        let mut ens = two_class(&law, 400, 9);
        let k = Kernel::power_law(0.7, 0.3).unwrap();
        let mut maj = MajorantConfig::for_ensemble(&law, &k, &ens);
        let start = ens.raw_moments();
        let opts = RoundOptions { shards: 2, audit_limit: 1000 };
        let mut audit = Vec::new();
        for _ in 0..30 {
            let rep = collide_round(&mut ens, &law, &k, &mut maj, 0.0008, &opts).unwrap();
            audit.extend(rep.audit);
        }
        assert!(conservation_drift(&start, &ens.raw_moments()) < 1e-10);
        assert!(!audit.is_empty());
        assert!(audit.iter().all(|a| a.is_multiplicative(&law)));
    }

    #[test]
    fn rounds_are_reproducible() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let k = Kernel::maxwell(1.0);
        let run = || {
            let mut ens = two_class(&law, 200, 21);
            let mut maj = MajorantConfig::for_ensemble(&law, &k, &ens);
            for _ in 0..5 {
                collide_round(&mut ens, &law, &k, &mut maj, 0.1, &RoundOptions { shards: 3, audit_limit: 0 }).unwrap();
            }
            ens
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn guard_rejects_large_steps() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let mut ens = two_class(&law, 200, 3);
        let k = Kernel::maxwell(1.0);
        let mut maj = MajorantConfig::for_ensemble(&law, &k, &ens);
        assert!(matches!(
            collide_round(&mut ens, &law, &k, &mut maj, 10.0, &RoundOptions::default()),
            Err(KinexError::Step(_))
        ));
    }

    #[test]
    fn estimates_of_sampled_equilibrium() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let p = MacroFields { rho: 1.3, u: Velocity::new(0.2, -0.1, 0.0), theta: 0.8, beta: 0.4 };
        let ens = ParticleEnsemble::sample_equilibrium(&law, &p, 40_000, 17).unwrap();
        let est = estimate_macro(&ens, &law).unwrap();
        let f = est.fields;
        let e = est.errors;
        assert!((f.rho - p.rho).abs() <= 4.0 * e.rho);
        assert!((f.theta - p.theta).abs() <= 4.0 * e.theta);
        assert!((f.beta - p.beta).abs() <= 4.0 * e.beta);
        for d in 0..2 {
            assert!((f.u[d] - p.u[d]).abs() <= 4.0 * e.u[d]);
        }
        let h = mass_histogram(&ens, 3);
        assert_eq!(h.iter().sum::<u64>(), 40_000);
        assert!(chi2_p(&h, &equilibrium_mass_fractions(&law, p.beta)) > 1e-3);
    }

    #[test]
    fn identical_particles_have_no_temperature() {
        let law = MassLaw::uniform(2, 2).unwrap();
        let ps = vec![Particle::new(1, &[0.5, 0.5]); 200];
        let ens = ParticleEnsemble::new(ps, 0.01, 2, 1).unwrap();
        assert!(matches!(estimate_macro(&ens, &law), Err(KinexError::Domain(_))));
        assert_eq!(mass_histogram(&ens, 2), vec![200, 0]);
    }

    #[test]
    fn error_scaling_with_particle_count() {
        let law = MassLaw::uniform(3, 2).unwrap();
        let p = MacroFields { rho: 1.0, u: Velocity::zeros(), theta: 1.0, beta: 0.0 };
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for t in 0..20 {
            s1 += estimate_macro(&ParticleEnsemble::sample_equilibrium(&law, &p, 2000, 100 + t).unwrap(), &law).unwrap().errors.theta;
            s2 += estimate_macro(&ParticleEnsemble::sample_equilibrium(&law, &p, 4000, 900 + t).unwrap(), &law).unwrap().errors.theta;
        }
        let ratio = s1 / s2;
        assert!((1.2..=1.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn entropy_estimate_tracks_closed_form() {
        let law = MassLaw::uniform(2, 2).unwrap();
        let p = MacroFields { rho: 1.0, u: Velocity::zeros(), theta: 1.0, beta: 0.0 };
        let ens = ParticleEnsemble::sample_equilibrium(&law, &p, 200_000, 5).unwrap();
        let s = entropy_estimate(&ens, &law, 24);
        let exact = crate::thermo::equilibrium_entropy(&law, &p);
        assert!((s - exact).abs() < 0.05 * exact.abs(), "{s} vs {exact}");
    }
}
