//! Area-preserving flattening of bifurcated tubular surfaces onto an L-shaped
//! template with the density-equalizing reference map, plus an arc-length-scaling
//! initial map, a tracer-advected baseline and distortion metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advection;
pub mod als;
pub mod baseline;
pub mod diffusion;
pub mod domain;
pub mod driver;
pub mod error;
pub mod io;
pub mod metrics;
pub mod remap;
pub mod report;
pub mod suite;
pub mod surface;

pub use advection::{advect_reference_map, find_fold, velocity_from_density, ReferenceMapField, VelocityField};
pub use als::{als_flatten, AlsMap};
pub use baseline::{run_dem_baseline, DemRun};
pub use diffusion::{assemble_operator, converged, diffusion_step, DensityField, DiffusionOperator};
pub use domain::{build_domain, kappa_field, step_size, DiffusivityField, GridConfig, LGridDomain};
pub use driver::{flatten, run_derm, DermConfig, DermRun, Flattening, Method, Termination};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{area_distortion, compare_methods, overlap_metric, Comparison, DistortionReport, Histogram};
pub use report::{run_report, RunConfig, RunReport};
pub use remap::{build_flattened_map, extract_contours, intersect_contours, intersect_segments, ContourSet, FlattenedMap};
pub use surface::{face_areas_3d, generate_cylinder, generate_synthetic_carotid, Branch, Plaque, QuadSurfaceMesh, Slice};
