//! Arc-length scaling: every ring is reparameterized by arc length from its cut
//! point and resampled so that its vertices land on one row of the template grid.
//! CCA rings fill full-width rows up to the bifurcation row; ICA rings fill the
//! partial rows above it, right of the reentrant corner.

use crate::domain::{build_domain, GridConfig, LGridDomain};
use crate::error::{Error, Result};
use crate::surface::{distance, face_areas_3d, QuadMesh, QuadSurfaceMesh};

#[derive(Debug, Clone)]
pub struct AlsMap {
    domain: LGridDomain,
    grid: GridConfig,
    surface: QuadMesh,
    node_vwt: Vec<f64>,
    source_vertex: Vec<usize>,
    cell_density: Vec<f64>,
}

impl AlsMap {
    pub fn domain(&self) -> &LGridDomain {
        &self.domain
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    /// Resampled surface; vertex `k` belongs to active node `k`, quad `c` to cell `c`.
    pub fn surface(&self) -> &QuadMesh {
        &self.surface
    }

    /// Template position of active node `k`. The ALS map never deforms the grid.
    pub fn position(&self, k: usize) -> [f64; 2] {
        self.domain.position(k)
    }

    pub fn point_3d(&self, k: usize) -> [f64; 3] {
        self.surface.vertices[k]
    }

    pub fn node_vwt(&self) -> &[f64] {
        &self.node_vwt
    }

    /// Global index (slice offset + point index) of the input vertex nearest along
    /// the ring to node `k`.
    pub fn source_vertex(&self, k: usize) -> usize {
        self.source_vertex[k]
    }

    /// 3D area of the surface quad behind each grid cell, mm².
    pub fn cell_density(&self) -> &[f64] {
        &self.cell_density
    }

    pub fn total_surface_area(&self) -> f64 {
        self.cell_density.iter().sum()
    }
}

struct Resampled {
    points: Vec<[f64; 3]>,
    vwt: Vec<f64>,
    source: Vec<usize>,
}

/// Resamples a closed ring at `count` points uniformly spaced in arc length,
/// starting and ending at the ring's first point.
fn resample_ring(points: &[[f64; 3]], vwt: &[f64], count: usize, slice: usize) -> Result<Resampled> {
    let n = points.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for a in 0..n {
        let step = distance(points[a], points[(a + 1) % n]);
        let next = cumulative[a] + step;
        if !(next > cumulative[a]) {
            return Err(Error::Ingestion(format!(
                "slice {slice}: cumulative arc length is not increasing at point {a}"
            )));
        }
        cumulative.push(next);
    }
    let total = cumulative[n];
    let mut out = Resampled {
        points: Vec::with_capacity(count),
        vwt: Vec::with_capacity(count),
        source: Vec::with_capacity(count),
    };
    let mut seg = 0;
    for t in 0..count {
        if t == count - 1 {
            out.points.push(points[0]);
            out.vwt.push(vwt[0]);
            out.source.push(0);
            break;
        }
        let s = total * t as f64 / (count - 1) as f64;
        while seg + 1 < n && cumulative[seg + 1] <= s {
            seg += 1;
        }
        let (a, b) = (seg, (seg + 1) % n);
        let u = (s - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
        let lerp = |p: f64, q: f64| p + u * (q - p);
        out.points.push([
            lerp(points[a][0], points[b][0]),
            lerp(points[a][1], points[b][1]),
            lerp(points[a][2], points[b][2]),
        ]);
        out.vwt.push(lerp(vwt[a], vwt[b]));
        out.source.push(if u <= 0.5 { a } else { b });
    }
    Ok(out)
}

/// Flattens `mesh` onto the template grid described by `grid`.
pub fn als_flatten(mesh: &QuadSurfaceMesh, grid: &GridConfig) -> Result<AlsMap> {
    let n_cca = mesh.cca_slices().len();
    let n_ica = mesh.ica_slices().len();
    if grid.rows_cca != n_cca || grid.rows_ica != n_ica {
        return Err(Error::Parameter(format!(
            "grid has {} CCA and {} ICA rows but the surface has {n_cca} CCA and {n_ica} ICA slices",
            grid.rows_cca, grid.rows_ica
        )));
    }
    let domain = build_domain(grid)?;
    let p = domain.corner_index().map_or(0, |c| c.0);

    let mut vertices = vec![[0.0; 3]; domain.node_count()];
    let mut node_vwt = vec![0.0; domain.node_count()];
    let mut source_vertex = vec![0; domain.node_count()];
    let mut offset = 0;
    for (j, slice) in mesh.slices().iter().enumerate() {
        let (count, first_column) = if j < n_cca {
            (grid.columns_cca, 0)
        } else {
            (grid.columns_ica, p)
        };
        let ring = resample_ring(&slice.points, &slice.vwt, count, j)?;
        for t in 0..count {
            let k = domain
                .index(first_column + t, j)
                .expect("ALS rows cover exactly the active nodes");
            vertices[k] = ring.points[t];
            node_vwt[k] = ring.vwt[t];
            source_vertex[k] = offset + ring.source[t];
        }
        offset += slice.points.len();
    }
    let quads = (0..domain.cell_count()).map(|c| domain.cell_nodes(c)).collect();
    let surface = QuadMesh { vertices, quads };
    let cell_density = face_areas_3d(&surface)?;
    Ok(AlsMap {
        domain,
        grid: *grid,
        surface,
        node_vwt,
        source_vertex,
        cell_density,
    })
}
