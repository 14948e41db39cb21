//! Particle transport on constrained domains.
//!
//! Particles approximating a distribution on the unit ball or the probability
//! simplex are pushed along the gradient of a fitted test function. The
//! mirrored pusher moves them in the dual space of a mirror map so they never
//! leave the domain; the projected pusher steps in the primal space and
//! projects back.
//!
//! ```
//! use mirrorvt::prelude::*;
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//!
//! let mut rng = ChaCha8Rng::seed_from_u64(7);
//! let domain = Domain::Simplex(3);
//! let spec = DirichletMixtureSpec {
//!     alphas: vec![vec![8.0, 1.0, 1.0], vec![1.0, 8.0, 1.0]],
//!     weights: vec![0.5, 0.5],
//! };
//! let targets = sample_dirichlet_mixture(&spec, 20, &mut rng).unwrap();
//! let fun = VariationalFunctional::new(FunctionalKind::Kl, targets);
//! let init = init_particles(domain, 20, &mut rng, &InitSpec::default_for(domain)).unwrap();
//!
//! let mut cfg = TransportConfig::new(Algorithm::MirrorVt, domain);
//! cfg.max_iters = 5;
//! cfg.vfm.width = 32;
//! let out = run(&cfg, init, &fun, &mut rng).unwrap();
//! assert!(out.particles.all_interior());
//! ```

pub mod cli;
pub mod datagen;
mod error;
pub mod functionals;
pub mod geometry;
pub mod metrics;
pub mod transport;
pub mod vfm;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::datagen::{
        init_particles, sample_dirichlet, sample_dirichlet_mixture, sample_truncated_gaussian_mixture,
        DirichletMixtureSpec, GaussianMixtureSpec, InitSpec,
    };
    pub use crate::functionals::{FunctionalKind, TargetSampleSet, VariationalFunctional};
    pub use crate::geometry::{Domain, MirrorKind, MirrorMap};
    pub use crate::metrics::{median_heuristic, mmd2, Kernel, RunHistory, RunStatus};
    pub use crate::transport::{
        mirrorvt_step, projvt_step, run, svmd_step, vt_step, Algorithm, ParticleSet, TransportConfig, Transporter,
    };
    pub use crate::vfm::{vfm_run, ShallowNet, VfmConfig};
    pub use crate::{Error, Result};
}
