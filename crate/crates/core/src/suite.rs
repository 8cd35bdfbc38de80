//! The ten-mesh synthetic test suite: seeds 1 to 10 at the default template
//! resolution, with a mix of plaque-free, CCA, ICA and multi-plaque vessels.

use std::f64::consts::PI;

use crate::error::Result;
use crate::surface::{generate_synthetic_carotid, Plaque, QuadSurfaceMesh};

pub const SUITE_CCA_SLICES: usize = 54;
pub const SUITE_ICA_SLICES: usize = 45;
pub const SUITE_POINTS_PER_RING: usize = 96;

fn plaque(z: f64, angle: f64, amplitude: f64, radius: f64) -> Plaque {
    Plaque { z, angle, amplitude, radius }
}

/// Plaque layout of suite mesh `seed` (1 to 10).
pub fn suite_plaques(seed: u64) -> Vec<Plaque> {
    match seed {
        1 | 8 => vec![],
        2 => vec![plaque(4.0, 0.0, 3.0, 4.0)],
        3 => vec![plaque(-10.0, PI / 2.0, 3.0, 5.0)],
        4 => vec![plaque(6.0, 0.0, 2.0, 4.0), plaque(-5.0, PI, 3.0, 4.0)],
        5 => vec![plaque(-2.0, 0.0, 4.0, 5.0)],
        6 => vec![plaque(10.0, PI, 3.5, 4.0)],
        7 => vec![plaque(-20.0, 0.0, 1.5, 3.0), plaque(-8.0, PI / 3.0, 1.5, 3.0), plaque(8.0, -PI / 2.0, 1.5, 3.0)],
        9 => vec![plaque(-30.0, -PI / 2.0, 4.0, 6.0)],
        _ => vec![plaque(2.0, 0.0, 4.0, 5.0)],
    }
}

/// `(name, mesh)` for every suite member, in seed order.
pub fn synthetic_suite() -> Result<Vec<(String, QuadSurfaceMesh)>> {
    (1..=10)
        .map(|seed| {
            let mesh = generate_synthetic_carotid(
                seed,
                SUITE_CCA_SLICES,
                SUITE_ICA_SLICES,
                SUITE_POINTS_PER_RING,
                &suite_plaques(seed),
            )?;
            Ok((format!("suite_{seed:02}"), mesh))
        })
        .collect()
}
