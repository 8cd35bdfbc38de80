//! File formats.
//!
//! * Mesh JSON: `{"slices": [{"branch": "CCA" | "ICA", "points": [[x, y, z], ...],
//!   "vwt": [...]}, ...], "bifurcation_index": n}`, millimeters.
//! * Mesh CSV directory: one file per slice named `NNN_cca.csv` or `NNN_ica.csv`
//!   (`NNN` gives the slice order), each with header `x,y,z,vwt`.
//! * Output CSVs start with a `# config: {...}` line holding the run configuration
//!   as JSON; SVGs carry the same JSON in their `<desc>` element.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::advection::ReferenceMapField;
use crate::als::AlsMap;
use crate::domain::LGridDomain;
use crate::driver::IterationRecord;
use crate::error::{Error, Result};
use crate::metrics::Histogram;
use crate::remap::FlattenedMap;
use crate::surface::{Branch, QuadSurfaceMesh, Slice};

fn ingestion(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::Ingestion(format!("{}: {what}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ingestion(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parameter(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a mesh from a JSON file or a CSV slice directory.
pub fn read_mesh(path: &Path) -> Result<QuadSurfaceMesh> {
    if path.is_dir() {
        read_mesh_csv_dir(path)
    } else {
        read_json(path)
    }
}

pub fn write_mesh_json(path: &Path, mesh: &QuadSurfaceMesh) -> Result<()> {
    write_json(path, mesh)
}

fn slice_file(name: &str) -> Option<(usize, Branch)> {
    let stem = name.strip_suffix(".csv")?;
    let (index, branch) = stem.split_once('_')?;
    let branch = match branch.to_ascii_lowercase().as_str() {
        "cca" => Branch::Cca,
        "ica" => Branch::Ica,
        _ => return None,
    };
    Some((index.parse().ok()?, branch))
}

pub fn read_mesh_csv_dir(dir: &Path) -> Result<QuadSurfaceMesh> {
    let mut files: Vec<(usize, Branch, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((index, branch)) = slice_file(&name) {
            files.push((index, branch, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(ingestion(dir, "no NNN_cca.csv / NNN_ica.csv slice files"));
    }
    files.sort_by_key(|f| f.0);
    let mut slices = Vec::with_capacity(files.len());
    for (_, branch, path) in files {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(&path)
            .map_err(|e| ingestion(&path, e))?;
        let header = reader.headers().map_err(|e| ingestion(&path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["x", "y", "z", "vwt"] {
            return Err(ingestion(&path, "expected header x,y,z,vwt"));
        }
        let mut points = Vec::new();
        let mut vwt = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| ingestion(&path, e))?;
            let v: Vec<f64> = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ingestion(&path, format!("row {}: {e}", line + 1)))?;
            points.push([v[0], v[1], v[2]]);
            vwt.push(v[3]);
        }
        slices.push(Slice { branch, points, vwt });
    }
    let bifurcation = slices.iter().take_while(|s| s.branch == Branch::Cca).count();
    QuadSurfaceMesh::new(slices, bifurcation).map_err(|e| ingestion(dir, e))
}

pub fn write_mesh_csv_dir(dir: &Path, mesh: &QuadSurfaceMesh) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, slice) in mesh.slices().iter().enumerate() {
        let branch = match slice.branch {
            Branch::Cca => "cca",
            Branch::Ica => "ica",
        };
        let rows = slice
            .points
            .iter()
            .zip(&slice.vwt)
            .map(|(p, w)| vec![p[0].to_string(), p[1].to_string(), p[2].to_string(), w.to_string()]);
        write_csv(&dir.join(format!("{k:03}_{branch}.csv")), None::<&()>, &["x", "y", "z", "vwt"], rows)?;
    }
    Ok(())
}

/// Writes a CSV with an optional leading `# config:` line.
pub fn write_csv<C: Serialize, I>(path: &Path, config: Option<&C>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = Vec::new();
    if let Some(config) = config {
        let json = serde_json::to_string(config).map_err(|e| Error::Parameter(e.to_string()))?;
        out.extend_from_slice(format!("# config: {json}\n").as_bytes());
    }
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        let csv_err = |e: csv::Error| Error::Parameter(e.to_string());
        writer.write_record(header).map_err(csv_err)?;
        for row in rows {
            writer.write_record(&row).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `i,j,x,y,source_vertex,vwt` per active node.
pub fn write_als_csv<C: Serialize>(path: &Path, als: &AlsMap, config: &C) -> Result<()> {
    let rows = (0..als.domain().node_count()).map(|k| {
        let (i, j) = als.domain().node(k);
        let [x, y] = als.position(k);
        vec![
            i.to_string(),
            j.to_string(),
            x.to_string(),
            y.to_string(),
            als.source_vertex(k).to_string(),
            als.node_vwt()[k].to_string(),
        ]
    });
    write_csv(path, Some(config), &["i", "j", "x", "y", "source_vertex", "vwt"], rows)
}

/// `i,j,x,y,vwt` per active node.
pub fn write_map_csv<C: Serialize>(path: &Path, map: &FlattenedMap, config: &C) -> Result<()> {
    let rows = (0..map.domain().node_count()).map(|k| {
        let (i, j) = map.domain().node(k);
        let [x, y] = map.positions()[k];
        vec![i.to_string(), j.to_string(), x.to_string(), y.to_string(), map.vwt()[k].to_string()]
    });
    write_csv(path, Some(config), &["i", "j", "x", "y", "vwt"], rows)
}

/// Reads back a map written by [`write_map_csv`] onto `domain`.
pub fn read_map_csv(path: &Path, domain: &LGridDomain) -> Result<FlattenedMap> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ingestion(path, e))?;
    let mut positions = vec![[f64::NAN; 2]; domain.node_count()];
    let mut vwt = vec![f64::NAN; domain.node_count()];
    for record in reader.records() {
        let record = record.map_err(|e| ingestion(path, e))?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let parse_err = |e: &dyn std::fmt::Display| ingestion(path, e.to_string());
        let i: usize = field(0).parse().map_err(|e| parse_err(&e))?;
        let j: usize = field(1).parse().map_err(|e| parse_err(&e))?;
        let k = domain.index(i, j).ok_or_else(|| ingestion(path, format!("node ({i}, {j}) is not active")))?;
        positions[k] = [field(2).parse().map_err(|e| parse_err(&e))?, field(3).parse().map_err(|e| parse_err(&e))?];
        vwt[k] = field(4).parse().map_err(|e| parse_err(&e))?;
    }
    if positions.iter().any(|p| p[0].is_nan()) {
        return Err(ingestion(path, "not every active node is listed"));
    }
    FlattenedMap::new(domain.clone(), positions, vwt)
}

/// `iteration,ratio,mass,max_speed,substeps`; schema version 1.
pub fn write_trace_csv<C: Serialize>(path: &Path, records: &[IterationRecord], config: &C) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            r.ratio.to_string(),
            r.mass.to_string(),
            r.max_speed.to_string(),
            r.substeps.to_string(),
        ]
    });
    write_csv(path, Some(config), &["iteration", "ratio", "mass", "max_speed", "substeps"], rows)
}

/// `i,j,xi1,xi2` per active node.
pub fn write_xi_csv<C: Serialize>(path: &Path, domain: &LGridDomain, xi: &ReferenceMapField, config: &C) -> Result<()> {
    let rows = (0..domain.node_count()).map(|k| {
        let (i, j) = domain.node(k);
        vec![i.to_string(), j.to_string(), xi.xi1[k].to_string(), xi.xi2[k].to_string()]
    });
    write_csv(path, Some(config), &["i", "j", "xi1", "xi2"], rows)
}

/// `bin_lo,bin_hi` followed by one count column per histogram, over the union of bins.
pub fn write_histogram_csv<C: Serialize>(path: &Path, histograms: &[(&str, &Histogram)], config: &C) -> Result<()> {
    let width = histograms.first().map_or(0.1, |h| h.1.bin_width);
    let nonempty = histograms.iter().filter(|h| !h.1.counts.is_empty());
    let lo = nonempty.clone().map(|h| h.1.first_bin).min().unwrap_or(0);
    let hi = nonempty.map(|h| h.1.first_bin + h.1.counts.len() as i64).max().unwrap_or(0);
    let rows = (lo..hi).map(|b| {
        let mut row = vec![(b as f64 * width).to_string(), ((b + 1) as f64 * width).to_string()];
        for (_, h) in histograms {
            let k = b - h.first_bin;
            let count = if k >= 0 { h.counts.get(k as usize).copied().unwrap_or(0) } else { 0 };
            row.push(count.to_string());
        }
        row
    });
    let mut header = vec!["bin_lo", "bin_hi"];
    header.extend(histograms.iter().map(|h| h.0));
    write_csv(path, Some(config), &header, rows)
}

/// Cell fill palettes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Colormap {
    /// Blue through white to red, white at zero, saturated at `±limit`.
    Diverging { limit: f64 },
    /// Five-stop viridis ramp from `lo` to `hi`.
    Sequential { lo: f64, hi: f64 },
}

const DIVERGING: [[u8; 3]; 3] = [[33, 102, 172], [247, 247, 247], [178, 24, 43]];
const SEQUENTIAL: [[u8; 3]; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
const MISSING: &str = "#999999";

fn ramp(stops: &[[u8; 3]], t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let k = (t.floor() as usize).min(stops.len() - 2);
    let u = t - k as f64;
    let c: Vec<u8> = (0..3)
        .map(|ch| (stops[k][ch] as f64 + u * (stops[k + 1][ch] as f64 - stops[k][ch] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

impl Colormap {
    pub fn color(&self, value: Option<f64>) -> String {
        let Some(v) = value.filter(|v| v.is_finite()) else {
            return MISSING.to_string();
        };
        match *self {
            Colormap::Diverging { limit } => {
                let limit = if limit > 0.0 { limit } else { 1.0 };
                ramp(&DIVERGING, 0.5 + 0.5 * v / limit)
            }
            Colormap::Sequential { lo, hi } => {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                ramp(&SEQUENTIAL, t)
            }
        }
    }
}

const SVG_SCALE: f64 = 6.0;
const SVG_MARGIN: f64 = 10.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The flattened cells filled by `values` (one per cell; `None` draws grey).
pub fn map_svg<C: Serialize>(map: &FlattenedMap, values: &[Option<f64>], colormap: Colormap, title: &str, config: &C) -> Result<String> {
    let domain = map.domain();
    let xs = map.positions().iter().map(|p| p[0]);
    let ys = map.positions().iter().map(|p| p[1]);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let width = (xmax - xmin) * SVG_SCALE + 2.0 * SVG_MARGIN;
    let height = (ymax - ymin) * SVG_SCALE + 2.0 * SVG_MARGIN;
    let config_json = serde_json::to_string(config).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.1}\" height=\"{height:.1}\" viewBox=\"0 0 {width:.1} {height:.1}\">\n<title>{}</title>\n<desc>{}</desc>\n",
        escape(title),
        escape(&config_json)
    );
    for c in 0..domain.cell_count() {
        let pts: Vec<String> = map
            .cell_corners(c)
            .iter()
            .map(|p| {
                let x = (p[0] - xmin) * SVG_SCALE + SVG_MARGIN;
                let y = (ymax - p[1]) * SVG_SCALE + SVG_MARGIN;
                format!("{x:.3},{y:.3}")
            })
            .collect();
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{}\"/>\n",
            pts.join(" "),
            colormap.color(values.get(c).copied().flatten())
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Per-cell average of the per-node scalar.
pub fn cell_vwt(map: &FlattenedMap) -> Vec<Option<f64>> {
    (0..map.domain().cell_count())
        .map(|c| Some(map.domain().cell_nodes(c).iter().map(|&k| map.vwt()[k]).sum::<f64>() / 4.0))
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
