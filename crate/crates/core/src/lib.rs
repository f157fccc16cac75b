//! Proximal point algorithm, Moreau-Yosida resolvents and the gradient-flow
//! semigroup for convex lower-semicontinuous functionals on Hadamard (CAT(0))
//! spaces.
//!
//! Four concrete backends are provided: Euclidean space, the hyperboloid model
//! of hyperbolic space, the manifold of symmetric positive definite matrices
//! with the affine-invariant metric, and finite metric trees. Every inequality
//! the convergence theory relies on is available as a runtime certificate.
//!
//! ```
//! use hadamard_prox::prelude::*;
//!
//! let space = Space::euclidean(1).unwrap();
//! let origin = space.point(vec![0.0]).unwrap();
//! let f = Functional::squared_distance(&space, origin, 1.0).unwrap();
//! let x0 = space.point(vec![1.0]).unwrap();
//! let trace = run_ppa(
//!     &f,
//!     &x0,
//!     &StepSchedule::constant(1.0).unwrap(),
//!     &StopRule::iterations(10),
//!     &ResolventOptions::default(),
//! )
//! .unwrap();
//! assert!((trace.final_point().coords().unwrap()[0] - 1.0 / 1024.0).abs() < 1e-12);
//! ```

pub mod certificate;
pub mod descriptor;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod invariants;
pub mod par;
pub mod ppa;
pub mod resolvent;
pub mod sampling;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::certificate::{CertificateReport, Verdict};
    pub use crate::diagnostics::{
        asymptotic_center, fejer_analysis, weak_convergence_check, weak_lsc_probe, CenterSearch,
        SequenceWindow, WeakConvergenceReport,
    };
    pub use crate::error::{Error, Result};
    pub use crate::flow::{
        flow_apply, flow_convergence_run, flow_nonexpansive_certificate, semigroup_certificate,
        FlowOptions, FlowResult,
    };
    pub use crate::functionals::{Functional, FunctionalKind, Isometry, Modulus};
    pub use crate::geometry::{
        ConvexSet, GeodesicRay, GeodesicSegment, MetricTree, Point, RayDirection, Space,
        SpaceKind,
    };
    pub use crate::par::Execution;
    pub use crate::ppa::{
        estimate_certificate, fejer_certificate, rate_certificate, run_ppa,
        strong_convergence_certificate, StepSchedule, StopReason, StopRule, Trace,
    };
    pub use crate::resolvent::{
        inner_split_minimize, nonexpansiveness_check, resolve, ResolventOptions,
        ResolventResult, Strategy,
    };
}
