//! Kinetic theory of gases whose particles exchange integer mass units in
//! binary collisions.
//!
//! The crate covers the microscopic collision law, a deterministic
//! discrete-velocity collision operator with BGK relaxation, a particle
//! (DSMC) simulator, the Euler and Navier-Stokes fluid limits on a 1-D slab,
//! and the entropy structure (entropic variables, Massieu-Planck potential,
//! Onsager matrix) tying them together.

pub mod collision;
pub mod dsmc;
pub mod error;
pub mod fluid;
pub mod kinetic;
pub mod mass_law;
pub mod quadrature;
pub mod thermo;
pub mod verify;

pub use collision::{CollisionChannel, Kernel, KernelKind, Particle, Velocity};
pub use dsmc::{MajorantConfig, ParticleEnsemble};
pub use error::{KinexError, Result};
pub use fluid::{BoundaryCondition, ConservedState, Grid1D, PrimitiveState};
pub use kinetic::{KineticState, MacroFields, RawMoments, VelocityGrid};
pub use mass_law::{BetaWeights, MassLaw};
pub use thermo::{EntropicState, OnsagerMatrix};
