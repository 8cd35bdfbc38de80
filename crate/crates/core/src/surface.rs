//! Input surfaces: a stack of labeled cross-sectional rings, plus a procedural
//! generator for synthetic bifurcated vessels.
//!
//! A [`QuadSurfaceMesh`] holds the raw rings exactly as they were segmented:
//! common-carotid (CCA) slices first, internal-carotid (ICA) slices after
//! `bifurcation_index`. The first point of every ring is its cut point, i.e. the
//! point that lies on the cut boundary when the tube is opened up.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cells whose 3D area falls below this floor (mm²) are rejected.
pub const AREA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "CCA")]
    Cca,
    #[serde(rename = "ICA")]
    Ica,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub branch: Branch,
    /// Closed ring, millimeters. The closing edge runs from the last point back to the first.
    pub points: Vec<[f64; 3]>,
    /// Vessel-wall-plus-plaque thickness per point, millimeters.
    pub vwt: Vec<f64>,
}

/// Which slices carry the three horizontal cut boundaries of the template.
///
/// `sigma1` is the proximal CCA ring, `sigma2` the bifurcation ring (its part that
/// does not continue into the ICA), `sigma3` the distal ICA ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundaryLabels {
    pub sigma1: usize,
    pub sigma2: usize,
    pub sigma3: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadSurfaceMesh {
    slices: Vec<Slice>,
    bifurcation_index: usize,
}

#[derive(Deserialize)]
struct RawMesh {
    slices: Vec<Slice>,
    bifurcation_index: usize,
}

impl<'de> Deserialize<'de> for QuadSurfaceMesh {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMesh::deserialize(d)?;
        QuadSurfaceMesh::new(raw.slices, raw.bifurcation_index).map_err(serde::de::Error::custom)
    }
}

impl QuadSurfaceMesh {
    /// Validates and wraps a slice stack.
    ///
    /// A mesh with no ICA slices (`bifurcation_index == slices.len()`) is accepted;
    /// it flattens onto a plain rectangle.
    pub fn new(slices: Vec<Slice>, bifurcation_index: usize) -> Result<Self> {
        if bifurcation_index < 2 {
            return Err(Error::Ingestion(format!(
                "need at least 2 CCA slices, bifurcation_index is {bifurcation_index}"
            )));
        }
        if bifurcation_index > slices.len() {
            return Err(Error::Ingestion(format!(
                "bifurcation_index {bifurcation_index} exceeds slice count {}",
                slices.len()
            )));
        }
        for (k, s) in slices.iter().enumerate() {
            let expected = if k < bifurcation_index { Branch::Cca } else { Branch::Ica };
            if s.branch != expected {
                return Err(Error::Ingestion(format!(
                    "slice {k} is labeled {:?} but CCA slices must precede ICA slices",
                    s.branch
                )));
            }
            if s.points.len() < 4 {
                return Err(Error::Ingestion(format!(
                    "slice {k} has {} points, need at least 4",
                    s.points.len()
                )));
            }
            if s.vwt.len() != s.points.len() {
                return Err(Error::Ingestion(format!(
                    "slice {k} has {} points but {} VWT values",
                    s.points.len(),
                    s.vwt.len()
                )));
            }
            if s.points.iter().flatten().chain(&s.vwt).any(|v| !v.is_finite()) {
                return Err(Error::Ingestion(format!("slice {k} contains non-finite values")));
            }
            let n = s.points.len();
            for a in 0..n {
                if distance(s.points[a], s.points[(a + 1) % n]) <= 0.0 {
                    return Err(Error::Ingestion(format!(
                        "slice {k}: points {a} and {} coincide",
                        (a + 1) % n
                    )));
                }
            }
        }
        Ok(QuadSurfaceMesh {
            slices,
            bifurcation_index,
        })
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn bifurcation_index(&self) -> usize {
        self.bifurcation_index
    }

    pub fn cca_slices(&self) -> &[Slice] {
        &self.slices[..self.bifurcation_index]
    }

    pub fn ica_slices(&self) -> &[Slice] {
        &self.slices[self.bifurcation_index..]
    }

    pub fn has_ica(&self) -> bool {
        self.bifurcation_index < self.slices.len()
    }

    pub fn boundary_labels(&self) -> BoundaryLabels {
        BoundaryLabels {
            sigma1: 0,
            sigma2: self.bifurcation_index - 1,
            sigma3: self.slices.len() - 1,
        }
    }

    /// Quads between corresponding points of consecutive rings of the same branch
    /// and point count, each strip closed around the ring. The bifurcation strip has
    /// no native point correspondence and is left out; the ALS stage builds it after
    /// resampling.
    pub fn native_quads(&self) -> QuadMesh {
        let mut vertices = Vec::new();
        let mut offsets = Vec::with_capacity(self.slices.len());
        for s in &self.slices {
            offsets.push(vertices.len());
            vertices.extend_from_slice(&s.points);
        }
        let mut quads = Vec::new();
        for k in 0..self.slices.len().saturating_sub(1) {
            let (a, b) = (&self.slices[k], &self.slices[k + 1]);
            if a.branch != b.branch || a.points.len() != b.points.len() {
                continue;
            }
            let n = a.points.len();
            for p in 0..n {
                let q = (p + 1) % n;
                quads.push([
                    offsets[k] + p,
                    offsets[k] + q,
                    offsets[k + 1] + q,
                    offsets[k + 1] + p,
                ]);
            }
        }
        QuadMesh { vertices, quads }
    }
}

/// Plain indexed quadrilateral mesh in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    pub vertices: Vec<[f64; 3]>,
    pub quads: Vec<[usize; 4]>,
}

impl QuadMesh {
    pub fn quad_corners(&self, q: usize) -> [[f64; 3]; 4] {
        self.quads[q].map(|v| self.vertices[v])
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(sub(a, b))
}

pub fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}

/// Area of a quad split along the diagonal from its first vertex.
pub fn quad_area(q: [[f64; 3]; 4]) -> f64 {
    triangle_area(q[0], q[1], q[2]) + triangle_area(q[0], q[2], q[3])
}

/// One area per quad, in quad order.
pub fn face_areas_3d(mesh: &QuadMesh) -> Result<Vec<f64>> {
    (0..mesh.quads.len())
        .map(|q| {
            let area = quad_area(mesh.quad_corners(q));
            if area < AREA_FLOOR || !area.is_finite() {
                Err(Error::DegenerateCell { cell: q, area })
            } else {
                Ok(area)
            }
        })
        .collect()
}

/// A Gaussian wall thickening. `z` is the axial position in millimeters relative
/// to the bifurcation: `z <= 0` places it on the CCA, `z > 0` on the ICA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plaque {
    pub z: f64,
    /// Angular position around the branch axis, radians.
    pub angle: f64,
    /// Peak VWT increase, millimeters.
    pub amplitude: f64,
    /// Gaussian radius, millimeters.
    pub radius: f64,
}

impl Plaque {
    pub fn branch(&self) -> Branch {
        if self.z <= 0.0 {
            Branch::Cca
        } else {
            Branch::Ica
        }
    }
}

/// Parameters of the synthetic carotid generator.
///
/// The defaults describe an adult carotid resliced at 1 mm: a 3.6 mm CCA with a
/// pronounced bulb just below the bifurcation and a 2.1 mm ICA leaving at an angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCarotid {
    pub seed: u64,
    pub n_cca_slices: usize,
    pub n_ica_slices: usize,
    pub points_per_ring: usize,
    pub plaques: Vec<Plaque>,
    pub slice_spacing: f64,
    pub cca_radius: f64,
    pub ica_radius: f64,
    /// Relative radius increase of the bulb at the bifurcation.
    pub bulb_gain: f64,
    /// Axial decay length of the bulb, millimeters.
    pub bulb_length: f64,
    /// Fraction of the bifurcation ring, centered on the ICA side, that continues
    /// into the ICA. Matches `(columns_ica - 1) / (columns_cca - 1)` of the
    /// default template grid.
    pub ica_arc_fraction: f64,
    pub wall_thickness: f64,
}

/// Seed-dependent shape parameters, drawn once per generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingShape {
    pub exponent: f64,
    pub flattening: f64,
    pub modulation: f64,
    pub modulation_phase: f64,
    pub ica_tilt: f64,
    pub ica_scale: f64,
}

impl SyntheticCarotid {
    pub fn new(seed: u64, n_cca_slices: usize, n_ica_slices: usize, points_per_ring: usize) -> Self {
        SyntheticCarotid {
            seed,
            n_cca_slices,
            n_ica_slices,
            points_per_ring,
            plaques: Vec::new(),
            slice_spacing: 1.0,
            cca_radius: 3.6,
            ica_radius: 2.1,
            bulb_gain: 0.7,
            bulb_length: 6.0,
            ica_arc_fraction: 54.0 / 96.0,
            wall_thickness: 1.0,
        }
    }

    pub fn with_plaques(mut self, plaques: Vec<Plaque>) -> Self {
        self.plaques = plaques;
        self
    }

    pub fn shape(&self) -> RingShape {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        RingShape {
            exponent: rng.gen_range(2.0..2.4),
            flattening: rng.gen_range(0.0..0.08),
            modulation: rng.gen_range(0.0..0.04),
            modulation_phase: rng.gen_range(0.0..2.0 * PI),
            ica_tilt: rng.gen_range(0.15..0.35),
            ica_scale: rng.gen_range(0.92..1.08),
        }
    }

    /// Axial coordinate of slice `k` (CCA slices end at z = 0, ICA slices start above it).
    pub fn slice_z(&self, branch: Branch, k: usize) -> f64 {
        match branch {
            Branch::Cca => (k as f64 - (self.n_cca_slices as f64 - 1.0)) * self.slice_spacing,
            Branch::Ica => (k as f64 + 1.0) * self.slice_spacing,
        }
    }

    /// Angle of ring point `k`. The CCA cut sits opposite the middle of the ICA arc,
    /// the ICA cut faces the flow divider.
    pub fn ring_angle(&self, branch: Branch, k: usize) -> f64 {
        let u = k as f64 / self.points_per_ring as f64;
        match branch {
            Branch::Cca => -PI * (2.0 - self.ica_arc_fraction) + 2.0 * PI * u,
            Branch::Ica => PI + 2.0 * PI * u,
        }
    }

    fn base_radius(&self, shape: &RingShape, branch: Branch, z: f64) -> f64 {
        let bulb = (-(z / self.bulb_length).powi(2)).exp();
        match branch {
            Branch::Cca => {
                self.cca_radius
                    * (1.0 + self.bulb_gain * bulb)
                    * (1.0 + shape.modulation * (2.0 * PI * z / 17.0 + shape.modulation_phase).sin())
            }
            Branch::Ica => self.ica_radius * shape.ica_scale * (1.0 + 0.5 * self.bulb_gain * bulb),
        }
    }

    fn plaque_bump(&self, plaque: &Plaque, branch: Branch, base: f64, z: f64, angle: f64) -> f64 {
        if plaque.branch() != branch || plaque.radius <= 0.0 {
            return 0.0;
        }
        let mut dphi = (angle - plaque.angle).rem_euclid(2.0 * PI);
        if dphi > PI {
            dphi -= 2.0 * PI;
        }
        let arc = base * dphi;
        let d2 = (z - plaque.z).powi(2) + arc * arc;
        (-d2 / (plaque.radius * plaque.radius)).exp()
    }

    /// Outer-wall radius at axial position `z` and angle `angle`, millimeters.
    pub fn radius(&self, shape: &RingShape, branch: Branch, z: f64, angle: f64) -> f64 {
        let base = self.base_radius(shape, branch, z);
        let (c, s) = (angle.cos().abs(), (angle.sin() / (1.0 - shape.flattening)).abs());
        let superellipse = (c.powf(shape.exponent) + s.powf(shape.exponent)).powf(-1.0 / shape.exponent);
        let plaque: f64 = self
            .plaques
            .iter()
            .map(|p| 0.5 * p.amplitude * self.plaque_bump(p, branch, base, z, angle))
            .sum();
        base * superellipse + plaque
    }

    /// Vessel-wall-plus-plaque thickness at axial position `z` and angle `angle`.
    pub fn vwt(&self, shape: &RingShape, branch: Branch, z: f64, angle: f64) -> f64 {
        let base = self.base_radius(shape, branch, z);
        self.wall_thickness
            + self
                .plaques
                .iter()
                .map(|p| p.amplitude * self.plaque_bump(p, branch, base, z, angle))
                .sum::<f64>()
    }

    fn ica_center(&self, shape: &RingShape, z: f64) -> [f64; 2] {
        let r0 = self.base_radius(shape, Branch::Cca, 0.0);
        let r1 = self.base_radius(shape, Branch::Ica, 0.0);
        [r0 - r1 + z * shape.ica_tilt.tan(), 0.0]
    }

    pub fn build(&self) -> Result<QuadSurfaceMesh> {
        if self.n_cca_slices < 2 || self.n_ica_slices < 2 {
            return Err(Error::Parameter(format!(
                "slice counts must be at least 2 (got {} CCA, {} ICA)",
                self.n_cca_slices, self.n_ica_slices
            )));
        }
        if self.points_per_ring < 8 {
            return Err(Error::Parameter(format!(
                "points_per_ring must be at least 8 (got {})",
                self.points_per_ring
            )));
        }
        if let Some(p) = self.plaques.iter().find(|p| !(p.amplitude >= 0.0) || !(p.radius > 0.0)) {
            return Err(Error::Parameter(format!(
                "plaque amplitude must be >= 0 and radius > 0 (got {p:?})"
            )));
        }
        if !(self.slice_spacing > 0.0) || !(0.0 < self.ica_arc_fraction && self.ica_arc_fraction < 1.0) {
            return Err(Error::Parameter("invalid slice spacing or ICA arc fraction".into()));
        }
        let shape = self.shape();
        let mut slices = Vec::with_capacity(self.n_cca_slices + self.n_ica_slices);
        for (branch, count) in [(Branch::Cca, self.n_cca_slices), (Branch::Ica, self.n_ica_slices)] {
            for k in 0..count {
                let z = self.slice_z(branch, k);
                let center = match branch {
                    Branch::Cca => [0.0, 0.0],
                    Branch::Ica => self.ica_center(&shape, z),
                };
                let mut points = Vec::with_capacity(self.points_per_ring);
                let mut vwt = Vec::with_capacity(self.points_per_ring);
                for p in 0..self.points_per_ring {
                    let angle = self.ring_angle(branch, p);
                    let r = self.radius(&shape, branch, z, angle);
                    points.push([center[0] + r * angle.cos(), center[1] + r * angle.sin(), z]);
                    vwt.push(self.vwt(&shape, branch, z, angle));
                }
                slices.push(Slice { branch, points, vwt });
            }
        }
        QuadSurfaceMesh::new(slices, self.n_cca_slices)
    }
}

/// Builds a synthetic bifurcated vessel with default geometry. Deterministic in `seed`.
pub fn generate_synthetic_carotid(
    seed: u64,
    n_cca_slices: usize,
    n_ica_slices: usize,
    points_per_ring: usize,
    plaques: &[Plaque],
) -> Result<QuadSurfaceMesh> {
    SyntheticCarotid::new(seed, n_cca_slices, n_ica_slices, points_per_ring)
        .with_plaques(plaques.to_vec())
        .build()
}

/// Straight circular tube with CCA slices only. It flattens onto a rectangle with
/// perfectly uniform cell areas.
pub fn generate_cylinder(n_slices: usize, points_per_ring: usize, radius: f64, spacing: f64) -> Result<QuadSurfaceMesh> {
    if n_slices < 2 || points_per_ring < 8 || !(radius > 0.0) || !(spacing > 0.0) {
        return Err(Error::Parameter("invalid cylinder parameters".into()));
    }
    let slices = (0..n_slices)
        .map(|k| Slice {
            branch: Branch::Cca,
            points: (0..points_per_ring)
                .map(|p| {
                    let a = 2.0 * PI * p as f64 / points_per_ring as f64;
                    [radius * a.cos(), radius * a.sin(), k as f64 * spacing]
                })
                .collect(),
            vwt: vec![1.0; points_per_ring],
        })
        .collect();
    QuadSurfaceMesh::new(slices, n_slices)
}
