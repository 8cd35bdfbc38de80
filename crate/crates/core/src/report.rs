//! Per-mesh run reports. Reports carry the full configuration and no timestamps,
//! so identical runs serialize to identical JSON.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSummary, GridConfig};
use crate::driver::{DermConfig, Flattening, Method, Termination};
use crate::error::Result;
use crate::metrics::{area_distortion, DistortionReport};

/// Everything that determines a run's output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub derm: DermConfig,
    pub grid: GridConfig,
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mesh: String,
    pub config: RunConfig,
    pub domain: DomainSummary,
    pub cells: usize,
    pub surface_area: f64,
    pub iterations: usize,
    /// `None` for the ALS method.
    pub termination: Option<Termination>,
    pub dt: Option<f64>,
    pub initial_ratio: f64,
    pub final_ratio: f64,
    pub history_increases: Vec<usize>,
    pub fold_events: Vec<(usize, (usize, usize))>,
    pub escaped_tracers: usize,
    pub distortion: DistortionReport,
}

pub fn run_report(mesh: &str, result: &Flattening, config: &DermConfig, bin_width: f64) -> Result<RunReport> {
    let als = &result.als;
    let distortion = area_distortion(&result.map, als.cell_density(), bin_width)?;
    let als_ratio = crate::diffusion::cell_to_node(als.domain(), als.cell_density())?.ratio();
    let outcome = result.outcome.as_ref();
    Ok(RunReport {
        mesh: mesh.to_string(),
        config: RunConfig {
            method: result.method,
            derm: *config,
            grid: *als.grid(),
            bin_width,
        },
        domain: als.domain().summary(),
        cells: als.domain().cell_count(),
        surface_area: als.total_surface_area(),
        iterations: outcome.map_or(0, |o| o.iterations),
        termination: outcome.map(|o| o.termination),
        dt: outcome.map(|o| o.dt),
        initial_ratio: als_ratio,
        final_ratio: outcome.map_or(als_ratio, |o| o.final_ratio()),
        history_increases: outcome.map_or_else(Vec::new, |o| o.history_increases.clone()),
        fold_events: result.fold_events.clone(),
        escaped_tracers: result.escaped_tracers,
        distortion,
    })
}
