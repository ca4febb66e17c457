//! Volume-preserving curvature flows of normal graphs over geodesic spheres
//! in `S^{n+1}`, `n ∈ {1, 2}`, discretized pseudo-spectrally.

pub mod config;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod spherespace;
pub mod stability;
pub mod symfunc;
pub mod verify;
pub mod volumes;
pub mod weights;

pub use config::{OutputPaths, RunConfig};
pub use error::{Error, Result};
pub use flow::{measure_decay, rhs, run_flow, speed_ghat, FlowConfig, FlowOutcome, FlowStatus, FlowTrace, InitialCondition};
pub use geometry::{geometry_fields, validate, GeometryFields, GraphDiagnostics, GraphFunction};
pub use grid::{Snapshot, SphereGrid};
pub use spherespace::{fit_sphere, u_from_params, SphereFit, SphereParams};
pub use stability::{dg0_analytic, dg0_numeric, spectrum, LinearOperator, NullProjection, Spectrum};
pub use symfunc::{SpeedKind, SpeedSpec};
pub use volumes::{volumes_of, VolumeReport};
pub use weights::WeightSpec;
