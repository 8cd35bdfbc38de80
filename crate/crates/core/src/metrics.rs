//! Area distortion and overlap of a flattened map, and comparisons across methods.
//!
//! Flattened areas are rescaled by `total 3D area / total flattened area` before
//! taking logs, so `d` measures relative distortion: the template area is fixed
//! while surface areas vary from mesh to mesh.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::remap::FlattenedMap;

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// `ln(flat) - ln(area_3d)`.
pub fn log_area_ratio(flat: f64, area_3d: f64) -> f64 {
    flat.ln() - area_3d.ln()
}

/// Counts per bin `[k w, (k + 1) w)`, starting at bin index `first_bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub first_bin: i64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Parameter(format!("histogram bin width must be > 0 (got {bin_width})")));
        }
        let bins: Vec<i64> = values.iter().map(|v| (v / bin_width).floor() as i64).collect();
        let (Some(&lo), Some(&hi)) = (bins.iter().min(), bins.iter().max()) else {
            return Ok(Histogram { bin_width, first_bin: 0, counts: Vec::new() });
        };
        let mut counts = vec![0; (hi - lo + 1) as usize];
        for b in bins {
            counts[(b - lo) as usize] += 1;
        }
        Ok(Histogram { bin_width, first_bin: lo, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(lower edge, upper edge, count)` per bin.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts.iter().enumerate().map(move |(k, &c)| {
            let b = (self.first_bin + k as i64) as f64;
            (b * self.bin_width, (b + 1.0) * self.bin_width, c)
        })
    }

    /// Sum of two histograms with the same bin width.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        if self.bin_width != other.bin_width {
            return Err(Error::Parameter("cannot merge histograms with different bin widths".into()));
        }
        if self.counts.is_empty() {
            return Ok(other.clone());
        }
        if other.counts.is_empty() {
            return Ok(self.clone());
        }
        let lo = self.first_bin.min(other.first_bin);
        let hi = (self.first_bin + self.counts.len() as i64).max(other.first_bin + other.counts.len() as i64);
        let mut counts = vec![0; (hi - lo) as usize];
        for h in [self, other] {
            for (k, c) in h.counts.iter().enumerate() {
                counts[(h.first_bin - lo) as usize + k] += c;
            }
        }
        Ok(Histogram { bin_width: self.bin_width, first_bin: lo, counts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// Per-cell `d`; `None` for folded cells (non-positive flattened area).
    pub d: Vec<Option<f64>>,
    pub folded_cells: Vec<usize>,
    pub mean_abs_d: f64,
    pub sd_d: f64,
    /// Factor applied to flattened areas before taking logs.
    pub scale: f64,
    pub histogram: Histogram,
    pub overlap: f64,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl DistortionReport {
    pub fn cell_count(&self) -> usize {
        self.d.len()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.d.iter().flatten().copied()
    }
}

/// Per-cell logged area ratio of `map` against the 3D areas of the matching
/// surface quads (cell order of the template grid).
pub fn area_distortion(map: &FlattenedMap, areas_3d: &[f64], bin_width: f64) -> Result<DistortionReport> {
    let flat = map.signed_areas();
    if flat.len() != areas_3d.len() {
        return Err(Error::Parameter(format!(
            "map has {} cells but {} surface areas were given",
            flat.len(),
            areas_3d.len()
        )));
    }
    let total_3d: f64 = areas_3d.iter().sum();
    let total_flat: f64 = flat.iter().map(|a| a.abs()).sum();
    if !(total_flat > 0.0) || !(total_3d > 0.0) {
        return Err(Error::Parameter("total areas must be positive".into()));
    }
    let scale = total_3d / total_flat;
    let mut d = Vec::with_capacity(flat.len());
    let mut folded_cells = Vec::new();
    for (c, (&f, &s)) in flat.iter().zip(areas_3d).enumerate() {
        if f > 0.0 {
            d.push(Some(log_area_ratio(f * scale, s)));
        } else {
            d.push(None);
            folded_cells.push(c);
        }
    }
    let values: Vec<f64> = d.iter().flatten().copied().collect();
    let count = values.len().max(1) as f64;
    let mean_abs_d = values.iter().map(|v| v.abs()).sum::<f64>() / count;
    let mean = values.iter().sum::<f64>() / count;
    let sd_d = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
    Ok(DistortionReport {
        histogram: Histogram::new(&values, bin_width)?,
        positive: values.iter().filter(|&&v| v > 0.0).count(),
        negative: values.iter().filter(|&&v| v < 0.0).count(),
        zero: values.iter().filter(|&&v| v == 0.0).count(),
        d,
        folded_cells,
        mean_abs_d,
        sd_d,
        scale,
        overlap: overlap_metric(map),
    })
}

/// `sum |cell area| - |area enclosed by the mapped boundary|`; zero when the
/// cells tile the region without overlap.
pub fn overlap_metric(map: &FlattenedMap) -> f64 {
    let cells: f64 = map.signed_areas().iter().map(|a| a.abs()).sum();
    cells - map.boundary_area().abs()
}

/// Fraction of the inverted-cell area carried by cells whose template centroid
/// lies within `radius` of `center`. `None` if no cell is inverted.
pub fn folded_area_fraction_near(map: &FlattenedMap, center: [f64; 2], radius: f64) -> Option<f64> {
    let domain = map.domain();
    let h = domain.h();
    let (mut near, mut total) = (0.0, 0.0);
    for (c, a) in map.signed_areas().into_iter().enumerate() {
        if a >= 0.0 {
            continue;
        }
        let (i, j) = domain.cells()[c];
        let centroid = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
        total += -a;
        if (centroid[0] - center[0]).hypot(centroid[1] - center[1]) <= radius {
            near += -a;
        }
    }
    (total > 0.0).then(|| near / total)
}

/// Reports of one method over a set of meshes, keyed by mesh name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResults {
    pub method: String,
    pub meshes: BTreeMap<String, DistortionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mesh: String,
    /// One entry per method, in input order.
    pub mean_abs_d: Vec<f64>,
    pub overlap: Vec<f64>,
    /// `100 (1 - mean|d|_k / mean|d|_0)`; `None` when the first method has zero distortion.
    pub reduction_percent: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// Histogram of `d` over all meshes, per method.
    pub histograms: Vec<Histogram>,
}

/// Per-mesh table of every method relative to the first one.
pub fn compare_methods(results: &[MethodResults]) -> Result<Comparison> {
    if results.len() < 2 {
        return Err(Error::Parameter("comparison needs at least two methods".into()));
    }
    let names: Vec<&String> = results[0].meshes.keys().collect();
    for r in &results[1..] {
        if r.meshes.keys().collect::<Vec<_>>() != names {
            return Err(Error::Parameter(format!(
                "method '{}' covers a different mesh set than '{}'",
                r.method, results[0].method
            )));
        }
    }
    let rows = names
        .iter()
        .map(|&mesh| {
            let mean_abs_d: Vec<f64> = results.iter().map(|r| r.meshes[mesh].mean_abs_d).collect();
            let base = mean_abs_d[0];
            ComparisonRow {
                mesh: mesh.clone(),
                reduction_percent: mean_abs_d
                    .iter()
                    .map(|&m| {
                        if base > 0.0 {
                            Some(100.0 * (1.0 - m / base))
                        } else if m == 0.0 {
                            Some(0.0)
                        } else {
                            None
                        }
                    })
                    .collect(),
                overlap: results.iter().map(|r| r.meshes[mesh].overlap).collect(),
                mean_abs_d,
            }
        })
        .collect();
    let histograms = results
        .iter()
        .map(|r| {
            r.meshes.values().try_fold(
                Histogram { bin_width: DEFAULT_BIN_WIDTH, first_bin: 0, counts: Vec::new() },
                |acc, rep| acc.merge(&rep.histogram),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        methods: results.iter().map(|r| r.method.clone()).collect(),
        rows,
        histograms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::LGridDomain;

    #[test]
    #[allow(clippy::approx_constant)]
    fn ln2_calibration() {
        assert!((log_area_ratio(2.0, 1.0) - 0.6931).abs() < 1e-4);
        assert!((log_area_ratio(0.5, 1.0) + 0.6931).abs() < 1e-4);
        assert_eq!(log_area_ratio(3.7, 1.3), -log_area_ratio(1.3, 3.7));
    }

    #[test]
    fn histogram_bins_align_to_width() {
        let h = Histogram::new(&[-0.15, -0.05, 0.0, 0.05, 0.25], 0.1).unwrap();
        assert_eq!(h.first_bin, -2);
        assert_eq!(h.counts, vec![1, 1, 2, 0, 1]);
        assert_eq!(h.total(), 5);
        let merged = h.merge(&Histogram::new(&[0.55], 0.1).unwrap()).unwrap();
        assert_eq!(merged.first_bin, -2);
        assert_eq!(merged.counts, vec![1, 1, 2, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn identity_map_has_no_overlap() {
        let d = LGridDomain::new(7, 6, 1.0, 3.0, 2.0).unwrap();
        let map = FlattenedMap::identity(&d, vec![1.0; d.node_count()]).unwrap();
        assert_eq!(overlap_metric(&map), 0.0);
        let report = area_distortion(&map, &vec![2.5; d.cell_count()], DEFAULT_BIN_WIDTH).unwrap();
        assert_eq!(report.mean_abs_d, 0.0);
        assert_eq!(report.histogram.total(), d.cell_count());
        assert_eq!(report.zero, d.cell_count());
    }

    #[test]
    fn reflected_column_overlaps_twice_its_area() {
        // 2 x 2 cells; moving the right column of nodes to x = 0 reflects the right
        // cells onto the left ones
        let d = LGridDomain::rectangle(3, 3, 1.0).unwrap();
        let mut positions: Vec<[f64; 2]> = (0..9).map(|k| d.position(k)).collect();
        for j in 0..3 {
            positions[d.index(2, j).unwrap()][0] = 0.0;
        }
        let map = FlattenedMap::new(d.clone(), positions, vec![0.0; 9]).unwrap();
        let folded: f64 = map.signed_areas().iter().filter(|a| **a < 0.0).map(|a| -a).sum();
        assert_eq!(folded, 2.0);
        assert_eq!(overlap_metric(&map), 2.0 * folded);
        let report = area_distortion(&map, &[1.0; 4], DEFAULT_BIN_WIDTH).unwrap();
        assert_eq!(report.folded_cells, vec![1, 3]);
        assert_eq!(report.histogram.total(), 2);
    }

    #[test]
    fn comparison_requires_matching_meshes() {
        let d = LGridDomain::rectangle(3, 3, 1.0).unwrap();
        let map = FlattenedMap::identity(&d, vec![0.0; 9]).unwrap();
        let rep = area_distortion(&map, &[1.0, 2.0, 1.0, 2.0], DEFAULT_BIN_WIDTH).unwrap();
        let one = |name: &str, mesh: &str| MethodResults {
            method: name.into(),
            meshes: BTreeMap::from([(mesh.to_string(), rep.clone())]),
        };
        let cmp = compare_methods(&[one("als", "m1"), one("als", "m1")]).unwrap();
        assert_eq!(cmp.rows[0].reduction_percent, vec![Some(0.0), Some(0.0)]);
        assert_eq!(cmp.histograms[0].total(), 4);
        assert!(compare_methods(&[one("als", "m1"), one("derm", "m2")]).is_err());
        assert!(compare_methods(&[one("als", "m1")]).is_err());
    }
}
