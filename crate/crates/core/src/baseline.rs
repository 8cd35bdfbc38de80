//! Tracer-advected density-equalizing map with uniform diffusivity and no-flux
//! walls. Tracers start at the grid nodes and are moved through the density
//! velocity field by explicit Euler steps.

use crate::advection::{substep_count, VelocityField};
use crate::als::AlsMap;
use crate::domain::{DiffusivityField, LGridDomain};
use crate::driver::{equalize, DermConfig, LoopOutcome};
use crate::error::Result;
use crate::remap::FlattenedMap;
use crate::surface::QuadSurfaceMesh;

/// One tracer per active grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerSet {
    pub positions: Vec<[f64; 2]>,
}

impl TracerSet {
    pub fn at_nodes(domain: &LGridDomain) -> Self {
        TracerSet {
            positions: (0..domain.node_count()).map(|k| domain.position(k)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemRun {
    pub map: FlattenedMap,
    pub outcome: LoopOutcome,
    /// Number of clamp events: a tracer stepping outside the bounding box.
    pub escaped: usize,
}

/// Bilinear interpolation of `v` at `x`; inactive nodes contribute zero velocity.
pub fn interpolate_velocity(v: &VelocityField, domain: &LGridDomain, x: [f64; 2]) -> [f64; 2] {
    let h = domain.h();
    let locate = |coord: f64, nodes: usize| {
        let cell = ((coord / h).floor().max(0.0) as usize).min(nodes - 2);
        (cell, (coord / h - cell as f64).clamp(0.0, 1.0))
    };
    let (i, u) = locate(x[0], domain.m());
    let (j, w) = locate(x[1], domain.n());
    let mut out = [0.0; 2];
    for (di, dj, weight) in [
        (0, 0, (1.0 - u) * (1.0 - w)),
        (1, 0, u * (1.0 - w)),
        (0, 1, (1.0 - u) * w),
        (1, 1, u * w),
    ] {
        if let Some(k) = domain.index(i + di, j + dj) {
            out[0] += weight * v.vx[k];
            out[1] += weight * v.vy[k];
        }
    }
    out
}

/// Moves every tracer over `dt` with a frozen velocity field. Returns the number
/// of sub-steps and the number of clamp events.
pub fn advect_tracers(tracers: &mut TracerSet, v: &VelocityField, dt: f64, domain: &LGridDomain) -> (usize, usize) {
    let steps = substep_count(v, dt, domain.h());
    let sub = dt / steps as f64;
    let (xmax, ymax) = ((domain.m() - 1) as f64 * domain.h(), (domain.n() - 1) as f64 * domain.h());
    let mut escaped = 0;
    for _ in 0..steps {
        for p in tracers.positions.iter_mut() {
            let vel = interpolate_velocity(v, domain, *p);
            let next = [p[0] + sub * vel[0], p[1] + sub * vel[1]];
            let clamped = [next[0].clamp(0.0, xmax), next[1].clamp(0.0, ymax)];
            if clamped != next {
                escaped += 1;
            }
            *p = clamped;
        }
    }
    (steps, escaped)
}

/// Baseline on an existing ALS map; shares the diffusion loop with DERM but uses
/// `kappa = 1`.
pub fn run_dem_on(als: &AlsMap, config: &DermConfig) -> Result<DemRun> {
    config.validate()?;
    let domain = als.domain();
    let kappa = DiffusivityField::uniform(domain, 1.0);
    let mut tracers = TracerSet::at_nodes(domain);
    let mut escaped = 0;
    let outcome = equalize(als, config, &kappa, |_, v, dt| {
        let (steps, out) = advect_tracers(&mut tracers, v, dt, domain);
        escaped += out;
        Ok(steps)
    })?;
    let map = FlattenedMap::new(domain.clone(), tracers.positions, als.node_vwt().to_vec())?;
    Ok(DemRun { map, outcome, escaped })
}

pub fn run_dem_baseline(mesh: &QuadSurfaceMesh, config: &DermConfig) -> Result<DemRun> {
    config.validate()?;
    let als = crate::als::als_flatten(mesh, &config.grid_for(mesh))?;
    run_dem_on(&als, config)
}
