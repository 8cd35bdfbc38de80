//! Density-gradient velocity and first-order upwind transport of the reference map.

use crate::diffusion::DensityField;
use crate::domain::{BoundaryClass, DiffusivityField, LGridDomain, Side};
use crate::error::{Error, Result};

/// Largest Courant number allowed in one upwind sub-step.
pub const MAX_COURANT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VelocityField {
    pub fn zero(domain: &LGridDomain) -> Self {
        VelocityField {
            vx: vec![0.0; domain.node_count()],
            vy: vec![0.0; domain.node_count()],
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.vx
            .iter()
            .zip(&self.vy)
            .map(|(x, y)| x.abs() + y.abs())
            .fold(0.0, f64::max)
    }
}

/// Reference map `xi = (xi1, xi2)` sampled at the active nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMapField {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl ReferenceMapField {
    /// `xi(x) = x`.
    pub fn identity(domain: &LGridDomain) -> Self {
        let (xi1, xi2) = (0..domain.node_count()).map(|k| domain.position(k)).map(|p| (p[0], p[1])).unzip();
        ReferenceMapField { xi1, xi2 }
    }
}

fn neighbor_value(field: &[f64], center: usize, nb: Option<usize>) -> f64 {
    field[nb.unwrap_or(center)]
}

/// `v = -kappa grad(rho) / rho` by central differences with ghost nodes, then the
/// normal component is removed on straight edges and both components at corners.
pub fn velocity_from_density(
    density: &DensityField,
    kappa: &DiffusivityField,
    domain: &LGridDomain,
) -> Result<VelocityField> {
    let rho = density.values();
    if let Some((k, &value)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        let (i, j) = domain.node(k);
        return Err(Error::Positivity { i, j, value });
    }
    let h = domain.h();
    let mut v = VelocityField::zero(domain);
    for k in 0..domain.node_count() {
        let [w, e, s, n] = domain.neighbors(k);
        let scale = -kappa.kappa[k] / (2.0 * h * rho[k]);
        let (mut vx, mut vy) = (
            scale * (neighbor_value(rho, k, e) - neighbor_value(rho, k, w)),
            scale * (neighbor_value(rho, k, n) - neighbor_value(rho, k, s)),
        );
        match domain.boundary_class(k) {
            BoundaryClass::Interior => {}
            BoundaryClass::Edge(Side::West | Side::East) => vx = 0.0,
            BoundaryClass::Edge(Side::South | Side::North) => vy = 0.0,
            BoundaryClass::ConvexCorner | BoundaryClass::ReentrantCorner => {
                vx = 0.0;
                vy = 0.0;
            }
        }
        v.vx[k] = vx;
        v.vy[k] = vy;
    }
    Ok(v)
}

/// One explicit upwind step of `xi_t + v . grad(xi) = 0`, no sub-stepping.
pub fn upwind_step(xi: &ReferenceMapField, v: &VelocityField, dt: f64, domain: &LGridDomain) -> ReferenceMapField {
    let h = domain.h();
    let advect = |field: &[f64]| -> Vec<f64> {
        (0..domain.node_count())
            .map(|k| {
                let [w, e, s, n] = domain.neighbors(k);
                let c = field[k];
                let dx = if v.vx[k] > 0.0 {
                    c - neighbor_value(field, k, w)
                } else {
                    neighbor_value(field, k, e) - c
                };
                let dy = if v.vy[k] > 0.0 {
                    c - neighbor_value(field, k, s)
                } else {
                    neighbor_value(field, k, n) - c
                };
                c - dt / h * (v.vx[k] * dx + v.vy[k] * dy)
            })
            .collect()
    };
    ReferenceMapField {
        xi1: advect(&xi.xi1),
        xi2: advect(&xi.xi2),
    }
}

/// Number of equal sub-steps that keeps `(|vx| + |vy|) dt / h` at or below
/// [`MAX_COURANT`] everywhere.
pub fn substep_count(v: &VelocityField, dt: f64, h: f64) -> usize {
    let courant = v.max_speed() * dt / h;
    if courant > MAX_COURANT {
        (courant / MAX_COURANT).ceil() as usize
    } else {
        1
    }
}

/// Advances the reference map over `dt` with a frozen velocity, splitting into
/// sub-steps when the Courant limit requires it. Returns the new field and the
/// number of sub-steps taken.
pub fn advect_reference_map(
    xi: &ReferenceMapField,
    v: &VelocityField,
    dt: f64,
    domain: &LGridDomain,
) -> (ReferenceMapField, usize) {
    let steps = substep_count(v, dt, domain.h());
    let sub = dt / steps as f64;
    let mut out = xi.clone();
    for _ in 0..steps {
        out = upwind_step(&out, v, sub, domain);
    }
    (out, steps)
}

/// First place where `xi1` fails to increase strictly along a row or `xi2` along a
/// column, reported as the lower-left node of the offending grid segment.
pub fn find_fold(xi: &ReferenceMapField, domain: &LGridDomain) -> Option<(usize, usize)> {
    for k in 0..domain.node_count() {
        let [_, e, _, n] = domain.neighbors(k);
        if let Some(e) = e {
            if !(xi.xi1[e] > xi.xi1[k]) {
                return Some(domain.node(k));
            }
        }
        if let Some(n) = n {
            if !(xi.xi2[n] > xi.xi2[k]) {
                return Some(domain.node(k));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::kappa_field;

    #[test]
    fn uniform_density_gives_zero_velocity() {
        let d = LGridDomain::new(8, 8, 1.0, 3.0, 4.0).unwrap();
        let rho = DensityField::new(vec![4.2; d.node_count()]);
        let v = velocity_from_density(&rho, &kappa_field(&d), &d).unwrap();
        assert!(v.vx.iter().chain(&v.vy).all(|&c| c == 0.0));
    }

    #[test]
    fn three_node_profile() {
        let d = LGridDomain::rectangle(3, 3, 1.0).unwrap();
        // rho = 1, 2, 3 along x in every row
        let rho = DensityField::new((0..9).map(|k| 1.0 + (k % 3) as f64).collect());
        let kappa = DiffusivityField::uniform(&d, 1.0);
        let v = velocity_from_density(&rho, &kappa, &d).unwrap();
        let c = d.index(1, 1).unwrap();
        assert_eq!(v.vx[c], -0.5);
        assert_eq!(v.vy[c], 0.0);
        let doubled = DensityField::new(rho.values().iter().map(|r| 2.0 * r).collect());
        assert_eq!(velocity_from_density(&doubled, &kappa, &d).unwrap(), v);
    }

    #[test]
    fn boundary_normals_and_corners_are_zero() {
        let d = LGridDomain::new(9, 9, 1.0, 4.0, 4.0).unwrap();
        let rho = DensityField::new((0..d.node_count()).map(|k| 1.0 + 0.1 * (k as f64).sin().abs() + 0.01 * k as f64).collect());
        let v = velocity_from_density(&rho, &kappa_field(&d), &d).unwrap();
        for k in 0..d.node_count() {
            match d.boundary_class(k) {
                BoundaryClass::Edge(Side::West | Side::East) => assert_eq!(v.vx[k], 0.0),
                BoundaryClass::Edge(Side::South | Side::North) => assert_eq!(v.vy[k], 0.0),
                BoundaryClass::ConvexCorner | BoundaryClass::ReentrantCorner => {
                    assert_eq!((v.vx[k], v.vy[k]), (0.0, 0.0))
                }
                BoundaryClass::Interior => {}
            }
        }
    }

    #[test]
    fn non_positive_density_rejected() {
        let d = LGridDomain::rectangle(3, 3, 1.0).unwrap();
        let mut vals = vec![1.0; 9];
        vals[4] = 0.0;
        let err = velocity_from_density(&DensityField::new(vals), &DiffusivityField::uniform(&d, 1.0), &d);
        assert!(matches!(err, Err(Error::Positivity { i: 1, j: 1, .. })));
    }

    #[test]
    fn zero_velocity_keeps_map() {
        let d = LGridDomain::new(6, 6, 1.0, 2.0, 2.0).unwrap();
        let xi = ReferenceMapField::identity(&d);
        let (out, steps) = advect_reference_map(&xi, &VelocityField::zero(&d), 5.0, &d);
        assert_eq!(out, xi);
        assert_eq!(steps, 1);
    }

    #[test]
    fn linear_field_is_transported_exactly() {
        let d = LGridDomain::rectangle(8, 4, 1.0).unwrap();
        let xi = ReferenceMapField::identity(&d);
        let v = VelocityField { vx: vec![1.0; d.node_count()], vy: vec![0.0; d.node_count()] };
        let out = upwind_step(&xi, &v, 1.0, &d);
        for k in 0..d.node_count() {
            let (i, _) = d.node(k);
            if i >= 1 {
                assert_eq!(out.xi1[k], xi.xi1[k] - 1.0);
            }
            assert_eq!(out.xi2[k], xi.xi2[k]);
        }
        // with sub-stepping (Courant 1 > 0.9 gives two half steps) nodes two cells
        // away from the inflow ghost are still exact
        let (sub, steps) = advect_reference_map(&xi, &v, 1.0, &d);
        assert_eq!(steps, 2);
        for k in 0..d.node_count() {
            if d.node(k).0 >= 2 {
                assert!((sub.xi1[k] - (xi.xi1[k] - 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn upwind_direction_follows_velocity_sign() {
        let d = LGridDomain::rectangle(3, 3, 1.0).unwrap();
        // distinct values so each neighbor is identifiable
        let field: Vec<f64> = (0..9).map(|k| (k * k) as f64).collect();
        let xi = ReferenceMapField { xi1: field.clone(), xi2: field.clone() };
        let c = d.index(1, 1).unwrap();
        let (w, e, s, n) = (d.index(0, 1).unwrap(), d.index(2, 1).unwrap(), d.index(1, 0).unwrap(), d.index(1, 2).unwrap());
        for (vx, vy) in [(0.25, 0.25), (-0.25, 0.25), (0.25, -0.25), (-0.25, -0.25), (0.0, 0.0)] {
            let v = VelocityField { vx: vec![vx; 9], vy: vec![vy; 9] };
            let out = upwind_step(&xi, &v, 1.0, &d);
            let dx = if vx > 0.0 { field[c] - field[w] } else { field[e] - field[c] };
            let dy = if vy > 0.0 { field[c] - field[s] } else { field[n] - field[c] };
            assert_eq!(out.xi1[c], field[c] - vx * dx - vy * dy);
        }
    }

    #[test]
    fn fold_detection() {
        let d = LGridDomain::new(6, 6, 1.0, 2.0, 2.0).unwrap();
        let mut xi = ReferenceMapField::identity(&d);
        assert_eq!(find_fold(&xi, &d), None);
        let k = d.index(3, 1).unwrap();
        xi.xi1[k] = 4.5;
        assert_eq!(find_fold(&xi, &d), Some((3, 1)));
    }
}
