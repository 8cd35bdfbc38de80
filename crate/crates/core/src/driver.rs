//! End-to-end flattening: ALS initial map, density setup, the equalization loop
//! (implicit diffusion, velocity, transport) and the final remap.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advection::{advect_reference_map, find_fold, velocity_from_density, ReferenceMapField, VelocityField};
use crate::als::{als_flatten, AlsMap};
use crate::baseline::run_dem_on;
use crate::diffusion::{assemble_operator, cell_to_node, converged, diffusion_step, DensityField};
use crate::domain::{kappa_field_with_scale, step_size, DiffusivityField, GridConfig};
use crate::error::{Error, Result};
use crate::remap::{build_flattened_map, extract_contours, FlattenedMap};
use crate::surface::QuadSurfaceMesh;

/// Allowed growth of `sd / mean` between iterations before it is flagged.
pub const HISTORY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Als,
    Derm,
    Dem,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Als, Method::Derm, Method::Dem];

    pub fn name(self) -> &'static str {
        match self {
            Method::Als => "als",
            Method::Derm => "derm",
            Method::Dem => "dem",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "als" => Ok(Method::Als),
            "derm" => Ok(Method::Derm),
            "dem" => Ok(Method::Dem),
            other => Err(Error::Parameter(format!("unknown method '{other}' (expected als, derm or dem)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DermConfig {
    pub epsilon: f64,
    pub n_max: usize,
    pub c: f64,
    pub h: f64,
    /// Nodes per CCA row.
    pub columns_cca: usize,
    /// Nodes per ICA row.
    pub columns_ica: usize,
    /// Length scale of the diffusivity bump; `None` means `sqrt(a)`.
    pub kappa_scale: Option<f64>,
    /// Keep a copy of the reference map every this many iterations.
    pub checkpoint_every: Option<usize>,
}

impl Default for DermConfig {
    fn default() -> Self {
        let grid = GridConfig::default();
        DermConfig {
            epsilon: 1e-3,
            n_max: 500,
            c: 0.01,
            h: grid.h,
            columns_cca: grid.columns_cca,
            columns_ica: grid.columns_ica,
            kappa_scale: None,
            checkpoint_every: None,
        }
    }
}

impl DermConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.n_max < 1 {
            return bad("n_max must be >= 1");
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return bad("c must be > 0");
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return bad("h must be > 0");
        }
        if let Some(s) = self.kappa_scale {
            if !(s > 0.0) || !s.is_finite() {
                return bad("kappa length scale must be > 0");
            }
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint interval must be >= 1");
        }
        Ok(())
    }

    /// Grid matching the slice counts of `mesh`.
    pub fn grid_for(&self, mesh: &QuadSurfaceMesh) -> GridConfig {
        let rows_ica = mesh.ica_slices().len();
        GridConfig {
            h: self.h,
            columns_cca: self.columns_cca,
            columns_ica: if rows_ica > 0 { self.columns_ica } else { 0 },
            rows_cca: mesh.cca_slices().len(),
            rows_ica,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
}

/// Diagnostics for one executed iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub ratio: f64,
    pub mass: f64,
    pub max_speed: f64,
    pub substeps: usize,
}

/// State of the density loop shared by every transport scheme.
#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub iterations: usize,
    pub termination: Termination,
    pub dt: f64,
    pub initial_ratio: f64,
    /// `sd / mean` after each executed iteration.
    pub history: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub density: DensityField,
    /// Iterations at which `sd / mean` grew by more than [`HISTORY_TOLERANCE`].
    pub history_increases: Vec<usize>,
}

impl LoopOutcome {
    pub fn final_ratio(&self) -> f64 {
        self.density.ratio()
    }
}

/// Runs diffusion steps until `sd / mean <= epsilon` or `n_max`, handing each new
/// velocity field to `transport`, which returns the number of sub-steps it took.
pub(crate) fn equalize<F>(als: &AlsMap, config: &DermConfig, kappa: &DiffusivityField, mut transport: F) -> Result<LoopOutcome>
where
    F: FnMut(usize, &VelocityField, f64) -> Result<usize>,
{
    let domain = als.domain();
    let mut density = cell_to_node(domain, als.cell_density())?;
    let dt = step_size(&density, domain, config.c)?;
    let op = assemble_operator(domain, kappa, dt)?;
    let initial_ratio = density.ratio();
    let mut history = Vec::new();
    let mut records = Vec::new();
    let mut history_increases = Vec::new();
    let mut n = 0;
    while !converged(&density, config.epsilon) && n < config.n_max {
        n += 1;
        let mut step = || -> Result<(DensityField, VelocityField, usize)> {
            let next = diffusion_step(&op, &density)?;
            let v = velocity_from_density(&next, kappa, domain)?;
            let substeps = transport(n, &v, dt)?;
            Ok((next, v, substeps))
        };
        let (next, v, substeps) = step().map_err(|e| e.at_iteration(n))?;
        let previous = history.last().copied().unwrap_or(initial_ratio);
        if next.ratio() > previous + HISTORY_TOLERANCE {
            history_increases.push(n);
        }
        history.push(next.ratio());
        records.push(IterationRecord {
            iteration: n,
            ratio: next.ratio(),
            mass: next.total(),
            max_speed: v.max_speed(),
            substeps,
        });
        density = next;
    }
    let termination = if converged(&density, config.epsilon) {
        Termination::Converged
    } else {
        Termination::IterationCap
    };
    Ok(LoopOutcome {
        iterations: n,
        termination,
        dt,
        initial_ratio,
        history,
        records,
        density,
        history_increases,
    })
}

#[derive(Debug, Clone)]
pub struct DermRun {
    pub xi: ReferenceMapField,
    pub outcome: LoopOutcome,
    /// `(iteration, lower-left node)` of every iteration that ended with a fold.
    pub fold_events: Vec<(usize, (usize, usize))>,
    pub checkpoints: Vec<(usize, ReferenceMapField)>,
}

impl DermRun {
    pub fn iterations(&self) -> usize {
        self.outcome.iterations
    }

    pub fn termination(&self) -> Termination {
        self.outcome.termination
    }

    pub fn history(&self) -> &[f64] {
        &self.outcome.history
    }
}

/// Reference-map iteration on an existing ALS map.
pub fn run_derm_on(als: &AlsMap, config: &DermConfig) -> Result<DermRun> {
    config.validate()?;
    let domain = als.domain();
    let kappa = kappa_field_with_scale(domain, config.kappa_scale);
    let mut xi = ReferenceMapField::identity(domain);
    let mut fold_events = Vec::new();
    let mut checkpoints = Vec::new();
    let outcome = equalize(als, config, &kappa, |n, v, dt| {
        let (next, steps) = advect_reference_map(&xi, v, dt, domain);
        xi = next;
        if let Some(cell) = find_fold(&xi, domain) {
            fold_events.push((n, cell));
        }
        if config.checkpoint_every.is_some_and(|k| n % k == 0) {
            checkpoints.push((n, xi.clone()));
        }
        Ok(steps)
    })?;
    Ok(DermRun {
        xi,
        outcome,
        fold_events,
        checkpoints,
    })
}

pub fn run_derm(mesh: &QuadSurfaceMesh, config: &DermConfig) -> Result<DermRun> {
    config.validate()?;
    let als = als_flatten(mesh, &config.grid_for(mesh))?;
    run_derm_on(&als, config)
}

/// Result of one flattening method on one mesh.
#[derive(Debug, Clone)]
pub struct Flattening {
    pub method: Method,
    pub als: AlsMap,
    pub map: FlattenedMap,
    /// `None` for the ALS method, which runs no iterations.
    pub outcome: Option<LoopOutcome>,
    pub fold_events: Vec<(usize, (usize, usize))>,
    pub checkpoints: Vec<(usize, ReferenceMapField)>,
    /// Tracers that left the bounding box and were clamped back (baseline only).
    pub escaped_tracers: usize,
}

pub fn flatten(mesh: &QuadSurfaceMesh, method: Method, config: &DermConfig) -> Result<Flattening> {
    config.validate()?;
    let als = als_flatten(mesh, &config.grid_for(mesh))?;
    flatten_als(als, method, config)
}

pub fn flatten_als(als: AlsMap, method: Method, config: &DermConfig) -> Result<Flattening> {
    let mut out = Flattening {
        method,
        map: FlattenedMap::identity(als.domain(), als.node_vwt().to_vec())?,
        als,
        outcome: None,
        fold_events: Vec::new(),
        checkpoints: Vec::new(),
        escaped_tracers: 0,
    };
    match method {
        Method::Als => {}
        Method::Derm => {
            let run = run_derm_on(&out.als, config)?;
            let contours = extract_contours(&run.xi, out.als.domain())?;
            out.map = build_flattened_map(&contours, &out.als)?;
            out.outcome = Some(run.outcome);
            out.fold_events = run.fold_events;
            out.checkpoints = run.checkpoints;
        }
        Method::Dem => {
            let run = run_dem_on(&out.als, config)?;
            out.map = run.map;
            out.outcome = Some(run.outcome);
            out.escaped_tracers = run.escaped;
        }
    }
    Ok(out)
}
