//! The Eulerian template grid: an M x N lattice with spacing `h` whose top-left
//! block (`x < p`, `y > q`) is switched off, leaving an L shape with a reentrant
//! corner at the bifurcation landmark `(p, q)`.
//!
//! Active nodes are numbered row-major (j outer, i inner), skipping inactive ones.
//! All per-node fields in the crate use this compact numbering.

use serde::{Deserialize, Serialize};

use crate::diffusion::DensityField;
use crate::error::{Error, Result};

/// Template resolution. Node counts, not cell counts: a CCA row has
/// `columns_cca` nodes and `columns_cca - 1` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub h: f64,
    pub columns_cca: usize,
    pub columns_ica: usize,
    pub rows_cca: usize,
    pub rows_ica: usize,
}

impl Default for GridConfig {
    /// 96 x 53 CCA cells plus 54 x 45 ICA cells: 7518 cells at h = 1.
    fn default() -> Self {
        GridConfig {
            h: 1.0,
            columns_cca: 97,
            columns_ica: 55,
            rows_cca: 54,
            rows_ica: 45,
        }
    }
}

impl GridConfig {
    pub fn m(&self) -> usize {
        self.columns_cca
    }

    pub fn n(&self) -> usize {
        self.rows_cca + self.rows_ica
    }

    pub fn cell_count(&self) -> usize {
        let cca = (self.columns_cca - 1) * (self.rows_cca - 1);
        let ica = if self.rows_ica > 0 { (self.columns_ica - 1) * self.rows_ica } else { 0 };
        cca + ica
    }

    /// Reentrant corner in node indices, or `None` for a CCA-only rectangle.
    pub fn corner_index(&self) -> Option<(usize, usize)> {
        (self.rows_ica > 0).then(|| (self.columns_cca - self.columns_ica, self.rows_cca - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    fn offset(self) -> (isize, isize) {
        match self {
            Side::West => (-1, 0),
            Side::East => (1, 0),
            Side::South => (0, -1),
            Side::North => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryClass {
    Interior,
    /// Straight boundary; the side is the outward normal direction.
    Edge(Side),
    ConvexCorner,
    ReentrantCorner,
}

/// Summary emitted in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LGridDomain {
    m: usize,
    n: usize,
    h: f64,
    corner: Option<(usize, usize)>,
    active: Vec<Option<usize>>,
    nodes: Vec<(usize, usize)>,
    neighbors: Vec<[Option<usize>; 4]>,
    classes: Vec<BoundaryClass>,
    cells: Vec<(usize, usize)>,
    cell_index: Vec<Option<usize>>,
    total_area: f64,
}

impl LGridDomain {
    /// Builds the L-shaped grid with its reentrant corner at coordinates `(p, q)`.
    pub fn new(m: usize, n: usize, h: f64, p: f64, q: f64) -> Result<Self> {
        if m < 3 || n < 3 {
            return Err(Error::Parameter(format!("grid must be at least 3x3 (got {m}x{n})")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!("grid spacing must be positive (got {h})")));
        }
        let to_index = |v: f64, name: &str| -> Result<usize> {
            let k = (v / h).round();
            if k < 0.0 || ((v / h) - k).abs() > 1e-9 {
                return Err(Error::Parameter(format!("corner {name} = {v} is not a multiple of h = {h}")));
            }
            Ok(k as usize)
        };
        let (pi, qj) = (to_index(p, "p")?, to_index(q, "q")?);
        if pi == 0 || pi >= m - 1 || qj == 0 || qj >= n - 1 {
            return Err(Error::Parameter(format!(
                "corner ({p}, {q}) must lie strictly inside the grid, otherwise the L degenerates"
            )));
        }
        Ok(Self::assemble(m, n, h, Some((pi, qj))))
    }

    /// Plain rectangle without an inactive block. Used for CCA-only inputs and for
    /// checking the discretization on simple geometry.
    pub fn rectangle(m: usize, n: usize, h: f64) -> Result<Self> {
        if m == 0 || n == 0 || m * n < 2 || !(h > 0.0) {
            return Err(Error::Parameter(format!("invalid rectangle {m}x{n}, h = {h}")));
        }
        Ok(Self::assemble(m, n, h, None))
    }

    fn assemble(m: usize, n: usize, h: f64, corner: Option<(usize, usize)>) -> Self {
        let inactive = |i: usize, j: usize| matches!(corner, Some((p, q)) if i < p && j > q);
        let mut active = vec![None; m * n];
        let mut nodes = Vec::new();
        for j in 0..n {
            for i in 0..m {
                if !inactive(i, j) {
                    active[j * m + i] = Some(nodes.len());
                    nodes.push((i, j));
                }
            }
        }
        let lookup = |i: isize, j: isize| -> Option<usize> {
            if i < 0 || j < 0 || i >= m as isize || j >= n as isize {
                None
            } else {
                active[j as usize * m + i as usize]
            }
        };
        let neighbors: Vec<[Option<usize>; 4]> = nodes
            .iter()
            .map(|&(i, j)| {
                Side::ALL.map(|s| {
                    let (di, dj) = s.offset();
                    lookup(i as isize + di, j as isize + dj)
                })
            })
            .collect();
        let classes = nodes
            .iter()
            .zip(&neighbors)
            .map(|(&ij, nb)| {
                if Some(ij) == corner {
                    return BoundaryClass::ReentrantCorner;
                }
                let missing: Vec<Side> = Side::ALL
                    .iter()
                    .zip(nb)
                    .filter(|(_, n)| n.is_none())
                    .map(|(s, _)| *s)
                    .collect();
                match missing.as_slice() {
                    [] => BoundaryClass::Interior,
                    [s] => BoundaryClass::Edge(*s),
                    _ => BoundaryClass::ConvexCorner,
                }
            })
            .collect();
        let mut cells = Vec::new();
        let mut cell_index = vec![None; (m - 1) * (n - 1)];
        for j in 0..n - 1 {
            for i in 0..m - 1 {
                let all = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    .iter()
                    .all(|&(a, b)| active[b * m + a].is_some());
                if all {
                    cell_index[j * (m - 1) + i] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        let total_area = cells.len() as f64 * h * h;
        LGridDomain {
            m,
            n,
            h,
            corner,
            active,
            nodes,
            neighbors,
            classes,
            cells,
            cell_index,
            total_area,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Reentrant corner as node indices.
    pub fn corner_index(&self) -> Option<(usize, usize)> {
        self.corner
    }

    /// Reentrant corner `(p, q)` in template coordinates.
    pub fn corner(&self) -> Option<(f64, f64)> {
        self.corner.map(|(p, q)| (p as f64 * self.h, q as f64 * self.h))
    }

    /// Area `a` of the active region.
    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn summary(&self) -> DomainSummary {
        DomainSummary {
            m: self.m,
            n: self.n,
            h: self.h,
            p: self.corner().map(|c| c.0),
            q: self.corner().map(|c| c.1),
            a: self.total_area,
        }
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i < self.m && j < self.n && self.active[j * self.m + i].is_some()
    }

    /// Compact index of node `(i, j)`, if active.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.m && j < self.n {
            self.active[j * self.m + i]
        } else {
            None
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> (usize, usize) {
        self.nodes[k]
    }

    pub fn position(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.nodes[k];
        [i as f64 * self.h, j as f64 * self.h]
    }

    /// Active neighbors of node `k` in [`Side::ALL`] order.
    pub fn neighbors(&self, k: usize) -> [Option<usize>; 4] {
        self.neighbors[k]
    }

    pub fn boundary_class(&self, k: usize) -> BoundaryClass {
        self.classes[k]
    }

    /// Active cells as lower-left node indices, row-major.
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_index(&self, i: usize, j: usize) -> Option<usize> {
        if i + 1 < self.m && j + 1 < self.n {
            self.cell_index[j * (self.m - 1) + i]
        } else {
            None
        }
    }

    /// Compact node indices of cell `c`, counter-clockwise from its lower-left corner.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let (i, j) = self.cells[c];
        [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)].map(|(a, b)| self.active[b * self.m + a].unwrap())
    }

    /// Boundary nodes in counter-clockwise order starting at the origin, without
    /// repeating the first node.
    pub fn boundary_loop(&self) -> Vec<usize> {
        let (m, n) = (self.m - 1, self.n - 1);
        let mut path: Vec<(usize, usize)> = Vec::new();
        let run = |from: (usize, usize), to: (usize, usize), path: &mut Vec<(usize, usize)>| {
            let (mut i, mut j) = from;
            while (i, j) != to {
                path.push((i, j));
                i = if to.0 > i { i + 1 } else if to.0 < i { i - 1 } else { i };
                j = if to.1 > j { j + 1 } else if to.1 < j { j - 1 } else { j };
            }
        };
        match self.corner {
            Some((p, q)) => {
                run((0, 0), (m, 0), &mut path);
                run((m, 0), (m, n), &mut path);
                run((m, n), (p, n), &mut path);
                run((p, n), (p, q), &mut path);
                run((p, q), (0, q), &mut path);
                run((0, q), (0, 0), &mut path);
            }
            None => {
                run((0, 0), (m, 0), &mut path);
                run((m, 0), (m, n), &mut path);
                run((m, n), (0, n), &mut path);
                run((0, n), (0, 0), &mut path);
            }
        }
        path.into_iter().map(|(i, j)| self.index(i, j).unwrap()).collect()
    }
}

/// Builds the template for a grid configuration. The reentrant corner sits where
/// the last CCA row meets the first ICA column.
pub fn build_domain(config: &GridConfig) -> Result<LGridDomain> {
    if config.columns_cca < 3 || config.rows_cca < 2 {
        return Err(Error::Parameter(format!("grid too small: {config:?}")));
    }
    match config.corner_index() {
        None => LGridDomain::rectangle(config.m(), config.n(), config.h),
        Some(_) if config.columns_ica < 2 || config.columns_ica >= config.columns_cca => Err(Error::Parameter(format!(
            "columns_ica must be in [2, columns_cca) (got {} and {})",
            config.columns_ica, config.columns_cca
        ))),
        Some((p, q)) => LGridDomain::new(config.m(), config.n(), config.h, p as f64 * config.h, q as f64 * config.h),
    }
}

/// Diffusivity per active node together with its analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusivityField {
    pub kappa: Vec<f64>,
    pub kappa_x: Vec<f64>,
    pub kappa_y: Vec<f64>,
}

impl DiffusivityField {
    pub fn uniform(domain: &LGridDomain, value: f64) -> Self {
        let n = domain.node_count();
        DiffusivityField {
            kappa: vec![value; n],
            kappa_x: vec![0.0; n],
            kappa_y: vec![0.0; n],
        }
    }
}

/// Corner-damped diffusivity
/// `kappa = 1 - (1 - a^{-1/2}) exp(-((x-p)^2 + (y-q)^2) / s)` with `s = sqrt(a)`
/// unless overridden. A rectangle has no corner and gets `kappa = 1`.
pub fn kappa_field(domain: &LGridDomain) -> DiffusivityField {
    kappa_field_with_scale(domain, None)
}

pub fn kappa_field_with_scale(domain: &LGridDomain, length_scale: Option<f64>) -> DiffusivityField {
    let Some((p, q)) = domain.corner() else {
        return DiffusivityField::uniform(domain, 1.0);
    };
    let a = domain.total_area();
    let floor = 1.0 / a.sqrt();
    let depth = 1.0 - floor;
    let s = length_scale.unwrap_or_else(|| a.sqrt());
    let mut field = DiffusivityField::uniform(domain, 1.0);
    for k in 0..domain.node_count() {
        let [x, y] = domain.position(k);
        let (dx, dy) = (x - p, y - q);
        let bump = (-(dx * dx + dy * dy) / s).exp();
        // Written around the floor so the corner node gets a^{-1/2} exactly.
        field.kappa[k] = floor + depth * (1.0 - bump);
        field.kappa_x[k] = 2.0 * depth * dx * bump / s;
        field.kappa_y[k] = 2.0 * depth * dy * bump / s;
    }
    field
}

/// Implicit step size `(sd / mean) * a * c`, with the population standard deviation.
pub fn step_size(density: &DensityField, domain: &LGridDomain, c: f64) -> Result<f64> {
    let mean = density.mean();
    if !(mean > 0.0) {
        return Err(Error::Parameter(format!("density mean must be positive (got {mean})")));
    }
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("step-size constant must be positive (got {c})")));
    }
    Ok(density.sd() / mean * domain.total_area() * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LGridDomain {
        LGridDomain::new(5, 5, 1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn mask_matches_enumeration() {
        let d = small();
        let mut inactive = Vec::new();
        for j in 0..5 {
            for i in 0..5 {
                if !d.is_active(i, j) {
                    inactive.push((i, j));
                }
            }
        }
        assert_eq!(inactive, vec![(0, 3), (1, 3), (0, 4), (1, 4)]);
        assert_eq!(d.node_count(), 21);
    }

    #[test]
    fn total_area_counts_cells() {
        let d = small();
        // 4x4 rectangle minus the 2x2 block above-left of (2, 2)
        assert_eq!(d.total_area(), 12.0);
        assert_eq!(d.cell_count(), 12);
        let cfg = GridConfig::default();
        let big = build_domain(&cfg).unwrap();
        assert_eq!(big.cell_count(), 7518);
        assert_eq!(cfg.cell_count(), 7518);
        let (m, n, h) = (big.m() as f64, big.n() as f64, big.h());
        let (p, q) = big.corner().unwrap();
        let formula = (m - 1.0) * (n - 1.0) * h * h - (p / h) * ((n - 1.0) * h - q) * h;
        assert_eq!(big.total_area(), formula);
    }

    #[test]
    fn degenerate_corners_rejected() {
        assert!(LGridDomain::new(5, 5, 1.0, 0.0, 2.0).is_err());
        assert!(LGridDomain::new(5, 5, 1.0, 2.0, 4.0).is_err());
        assert!(LGridDomain::new(5, 5, 1.0, 2.5, 2.0).is_err());
        assert!(LGridDomain::new(2, 5, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn boundary_classes() {
        let d = small();
        let class = |i, j| d.boundary_class(d.index(i, j).unwrap());
        assert_eq!(class(2, 2), BoundaryClass::ReentrantCorner);
        assert_eq!(class(0, 0), BoundaryClass::ConvexCorner);
        assert_eq!(class(0, 2), BoundaryClass::ConvexCorner);
        assert_eq!(class(2, 4), BoundaryClass::ConvexCorner);
        assert_eq!(class(4, 4), BoundaryClass::ConvexCorner);
        assert_eq!(class(1, 2), BoundaryClass::Edge(Side::North));
        assert_eq!(class(2, 3), BoundaryClass::Edge(Side::West));
        assert_eq!(class(3, 0), BoundaryClass::Edge(Side::South));
        assert_eq!(class(1, 1), BoundaryClass::Interior);
        assert_eq!(class(3, 3), BoundaryClass::Interior);
    }

    #[test]
    fn boundary_loop_is_ccw_and_closed() {
        let d = small();
        let lp = d.boundary_loop();
        let pts: Vec<[f64; 2]> = lp.iter().map(|&k| d.position(k)).collect();
        let area: f64 = (0..pts.len())
            .map(|a| {
                let (p, q) = (pts[a], pts[(a + 1) % pts.len()]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
            / 2.0;
        assert_eq!(area, d.total_area());
        // every boundary node appears once
        let boundary = (0..d.node_count())
            .filter(|&k| d.boundary_class(k) != BoundaryClass::Interior)
            .count();
        assert_eq!(lp.len(), boundary);
    }

    #[test]
    fn kappa_at_corner_and_far_away() {
        let d = build_domain(&GridConfig::default()).unwrap();
        let f = kappa_field(&d);
        let a = d.total_area();
        let c = d.index(42, 53).unwrap();
        assert_eq!(d.corner(), Some((42.0, 53.0)));
        assert!((f.kappa[c] - 1.0 / a.sqrt()).abs() < 1e-15);
        assert_eq!(f.kappa_x[c], 0.0);
        assert_eq!(f.kappa_y[c], 0.0);
        let far = d.index(96, 0).unwrap();
        assert!((f.kappa[far] - 1.0).abs() < 1e-12);
        assert!(f.kappa.iter().all(|&k| k > 0.0 && k <= 1.0));
    }

    #[test]
    fn kappa_gradient_matches_finite_differences() {
        let d = LGridDomain::new(21, 21, 1.0, 10.0, 10.0).unwrap();
        let f = kappa_field(&d);
        let a = d.total_area();
        let kappa = |x: f64, y: f64| {
            1.0 - (1.0 - 1.0 / a.sqrt()) * (-((x - 10.0).powi(2) + (y - 10.0).powi(2)) / a.sqrt()).exp()
        };
        let eps = 1e-6;
        for k in (0..d.node_count()).step_by(7) {
            let [x, y] = d.position(k);
            let fx = (kappa(x + eps, y) - kappa(x - eps, y)) / (2.0 * eps);
            let fy = (kappa(x, y + eps) - kappa(x, y - eps)) / (2.0 * eps);
            assert!((f.kappa_x[k] - fx).abs() < 1e-8);
            assert!((f.kappa_y[k] - fy).abs() < 1e-8);
        }
    }

    #[test]
    fn step_size_examples() {
        let d = LGridDomain::rectangle(11, 11, 1.0).unwrap();
        assert_eq!(d.total_area(), 100.0);
        let rho = DensityField::new(vec![1.0, 3.0]);
        assert!((step_size(&rho, &d, 0.01).unwrap() - 0.5).abs() < 1e-15);
        let uniform = DensityField::new(vec![2.0; 4]);
        assert_eq!(step_size(&uniform, &d, 0.01).unwrap(), 0.0);
        let scaled = DensityField::new(vec![7.0, 21.0]);
        assert!((step_size(&scaled, &d, 0.01).unwrap() - 0.5).abs() < 1e-15);
        assert!(step_size(&DensityField::new(vec![0.0, 0.0]), &d, 0.01).is_err());
    }
}
