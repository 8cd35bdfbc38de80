//! Recovers the forward map from the reference map: the final position of grid
//! node `(i, j)` is where the level sets `xi1 = ih` and `xi2 = jh` cross.
//!
//! Level sets are traced per cell with marching squares (linear interpolation on
//! cell edges), so each contour is a chain of segments whose endpoints sit on grid
//! edges. Segments are bucketed by the cell that produced them and only segments
//! from neighboring cells are tested against each other.

use crate::advection::{find_fold, ReferenceMapField};
use crate::als::AlsMap;
use crate::domain::LGridDomain;
use crate::error::{Error, Result};

/// Slack on the segment parameters when accepting an intersection. Shared segment
/// endpoints otherwise miss by one rounding step.
pub const PARAMETER_SLACK: f64 = 1e-12;

/// Candidate intersections closer than this are the same point.
pub const DUPLICATE_RADIUS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Lower-left node of the grid cell the segment was traced in.
    pub cell: (usize, usize),
}

/// Contour segments per level, in cell scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub levels: Vec<f64>,
    pub segments: Vec<Vec<Segment>>,
}

impl ContourSet {
    pub fn level(&self, k: usize) -> &[Segment] {
        &self.segments[k]
    }

    pub fn segment_count(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

// Cell corners are ordered bottom-left, bottom-right, top-right, top-left; edge e
// runs from corner e to corner (e + 1) % 4.
const EDGES: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

fn side(v: f64, level: f64) -> i8 {
    if v > level {
        1
    } else if v < level {
        -1
    } else {
        0
    }
}

fn lerp(p: [f64; 2], q: [f64; 2], t: f64) -> [f64; 2] {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Marching squares on one cell. `owns` says, per edge, whether a contour lying
/// exactly along that edge should be emitted by this cell (so shared edges are
/// emitted once).
fn march_cell(vals: [f64; 4], pos: [[f64; 2]; 4], level: f64, owns: [bool; 4], cell: (usize, usize), out: &mut Vec<Segment>) {
    let s = vals.map(|v| side(v, level));
    let tied: Vec<usize> = (0..4).filter(|&e| s[EDGES[e].0] == 0 && s[EDGES[e].1] == 0).collect();
    if !tied.is_empty() {
        for e in tied {
            if owns[e] {
                let (a, b) = EDGES[e];
                out.push(Segment { a: pos[a], b: pos[b], cell });
            }
        }
        return;
    }
    // (perimeter key, point): corner c has key 2c, the inside of edge e has 2e + 1.
    let mut points: Vec<(usize, [f64; 2])> = Vec::with_capacity(4);
    for (e, &(a, b)) in EDGES.iter().enumerate() {
        if s[a] * s[b] < 0 {
            let t = (level - vals[a]) / (vals[b] - vals[a]);
            points.push((2 * e + 1, lerp(pos[a], pos[b], t)));
        }
    }
    for c in 0..4 {
        // a corner on the level whose two neighbors lie on the same side only
        // touches the contour
        if s[c] == 0 && s[(c + 3) % 4] != s[(c + 1) % 4] {
            points.push((2 * c, pos[c]));
        }
    }
    points.sort_by_key(|p| p.0);
    let seg = |p: usize, q: usize| Segment { a: points[p].1, b: points[q].1, cell };
    match points.len() {
        0 | 1 => {}
        4 => {
            // Saddle: decide which diagonal pair of corners is connected through the
            // cell center, using the average of the corner values.
            let center = side(vals.iter().sum::<f64>() / 4.0, level);
            let isolate_odd = if s[0] == s[2] { center == s[0] } else { center != s[1] };
            if isolate_odd {
                // cut off corners 1 and 3
                out.push(seg(0, 1));
                out.push(seg(2, 3));
            } else {
                // cut off corners 0 and 2
                out.push(seg(3, 0));
                out.push(seg(1, 2));
            }
        }
        _ => out.push(seg(0, 1)),
    }
}

fn trace_component(domain: &LGridDomain, field: &[f64], level_count: usize) -> ContourSet {
    let h = domain.h();
    let levels: Vec<f64> = (0..level_count).map(|k| k as f64 * h).collect();
    let mut segments = vec![Vec::new(); level_count];
    for c in 0..domain.cell_count() {
        let (i, j) = domain.cells()[c];
        let nodes = domain.cell_nodes(c);
        let vals = nodes.map(|k| field[k]);
        let pos = nodes.map(|k| domain.position(k));
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let owns = [
            true,
            domain.cell_index(i + 1, j).is_none(),
            domain.cell_index(i, j + 1).is_none(),
            true,
        ];
        let first = ((lo / h).floor().max(0.0)) as usize;
        let last = ((hi / h).ceil().max(0.0) as usize).min(level_count.saturating_sub(1));
        for k in first..=last {
            let level = levels[k];
            if level >= lo && level <= hi {
                march_cell(vals, pos, level, owns, (i, j), &mut segments[k]);
            }
        }
    }
    ContourSet { levels, segments }
}

/// Traces `xi1 = ih` for every column `i` and `xi2 = jh` for every row `j`.
pub fn extract_contours(xi: &ReferenceMapField, domain: &LGridDomain) -> Result<(ContourSet, ContourSet)> {
    if let Some((i, j)) = find_fold(xi, domain) {
        return Err(Error::Fold { i, j });
    }
    Ok((
        trace_component(domain, &xi.xi1, domain.m()),
        trace_component(domain, &xi.xi2, domain.n()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub point: [f64; 2],
    pub t1: f64,
    pub t2: f64,
}

/// Intersection of segments `p0-p1` and `q0-q1`.
///
/// Solves `p0 + t1 (p1 - p0) = (x, y) = q0 + t2 (q1 - q0)` for `(x, y, t1, t2)`;
/// substituting the first pair of equations into the second leaves a 2x2 system
/// in `t1, t2`. Parallel segments (singular system) never intersect here.
pub fn intersect_segments(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<Intersection> {
    let d1 = [p1[0] - p0[0], p1[1] - p0[1]];
    let d2 = [q1[0] - q0[0], q1[1] - q0[1]];
    let r = [q0[0] - p0[0], q0[1] - p0[1]];
    let det = d2[0] * d1[1] - d1[0] * d2[1];
    let scale = (d1[0].hypot(d1[1])) * (d2[0].hypot(d2[1]));
    if det == 0.0 || det.abs() <= f64::EPSILON * scale {
        return None;
    }
    let t1 = (d2[0] * r[1] - r[0] * d2[1]) / det;
    let t2 = (d1[0] * r[1] - d1[1] * r[0]) / det;
    let inside = |t: f64| (-PARAMETER_SLACK..=1.0 + PARAMETER_SLACK).contains(&t);
    if !inside(t1) || !inside(t2) {
        return None;
    }
    let (t1, t2) = (t1.clamp(0.0, 1.0), t2.clamp(0.0, 1.0));
    Some(Intersection {
        point: lerp(p0, p1, t1),
        t1,
        t2,
    })
}

enum Resolved {
    Point([f64; 2]),
    Missing,
    Ambiguous(usize),
}

fn resolve(candidates: &[[f64; 2]]) -> Resolved {
    let Some(&first) = candidates.first() else {
        return Resolved::Missing;
    };
    let mut distinct: Vec<[f64; 2]> = vec![first];
    for c in candidates {
        if distinct
            .iter()
            .all(|d| (d[0] - c[0]).hypot(d[1] - c[1]) > DUPLICATE_RADIUS)
        {
            distinct.push(*c);
        }
    }
    if distinct.len() == 1 {
        Resolved::Point(first)
    } else {
        Resolved::Ambiguous(distinct.len())
    }
}

/// Crossing of the `xi1 = ih` contour `c1` with the `xi2 = jh` contour `c2`,
/// testing all segment pairs.
pub fn intersect_contours(c1: &[Segment], c2: &[Segment], i: usize, j: usize) -> Result<[f64; 2]> {
    let candidates: Vec<[f64; 2]> = c1
        .iter()
        .flat_map(|s| c2.iter().filter_map(move |t| intersect_segments(s.a, s.b, t.a, t.b)))
        .map(|hit| hit.point)
        .collect();
    match resolve(&candidates) {
        Resolved::Point(p) => Ok(p),
        Resolved::Missing => Err(Error::MissingIntersection { i, j }),
        Resolved::Ambiguous(count) => Err(Error::AmbiguousIntersection { i, j, count }),
    }
}

/// Final 2D positions of every active grid node, with the per-node scalar carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedMap {
    domain: LGridDomain,
    positions: Vec<[f64; 2]>,
    vwt: Vec<f64>,
}

impl FlattenedMap {
    pub fn new(domain: LGridDomain, positions: Vec<[f64; 2]>, vwt: Vec<f64>) -> Result<Self> {
        if positions.len() != domain.node_count() || vwt.len() != domain.node_count() {
            return Err(Error::Parameter(format!(
                "map has {} positions and {} scalars for {} nodes",
                positions.len(),
                vwt.len(),
                domain.node_count()
            )));
        }
        Ok(FlattenedMap { domain, positions, vwt })
    }

    /// The undeformed grid.
    pub fn identity(domain: &LGridDomain, vwt: Vec<f64>) -> Result<Self> {
        let positions = (0..domain.node_count()).map(|k| domain.position(k)).collect();
        Self::new(domain.clone(), positions, vwt)
    }

    pub fn domain(&self) -> &LGridDomain {
        &self.domain
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn vwt(&self) -> &[f64] {
        &self.vwt
    }

    pub fn cell_corners(&self, c: usize) -> [[f64; 2]; 4] {
        self.domain.cell_nodes(c).map(|k| self.positions[k])
    }

    /// Shoelace area of cell `c`; positive when its orientation is preserved.
    pub fn cell_signed_area(&self, c: usize) -> f64 {
        polygon_signed_area(&self.cell_corners(c))
    }

    pub fn signed_areas(&self) -> Vec<f64> {
        (0..self.domain.cell_count()).map(|c| self.cell_signed_area(c)).collect()
    }

    /// Signed area enclosed by the images of the template's boundary nodes.
    pub fn boundary_area(&self) -> f64 {
        let pts: Vec<[f64; 2]> = self.domain.boundary_loop().iter().map(|&k| self.positions[k]).collect();
        polygon_signed_area(&pts)
    }
}

pub fn polygon_signed_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    0.5 * (0..n)
        .map(|a| {
            let (p, q) = (pts[a], pts[(a + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// Assembles the forward map from the two contour families.
pub fn build_flattened_map(contours: &(ContourSet, ContourSet), als: &AlsMap) -> Result<FlattenedMap> {
    let domain = als.domain();
    let (c1, c2) = contours;
    let (m, n) = (domain.m(), domain.n());
    let cols = m - 1;
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cols * (n - 1)];
    for (i, segs) in c1.segments.iter().enumerate() {
        for (s, seg) in segs.iter().enumerate() {
            buckets[seg.cell.1 * cols + seg.cell.0].push((i, s));
        }
    }
    let mut candidates: Vec<Vec<[f64; 2]>> = vec![Vec::new(); domain.node_count()];
    for (j, segs) in c2.segments.iter().enumerate() {
        for seg in segs {
            let (ci, cj) = seg.cell;
            for bj in cj.saturating_sub(1)..=(cj + 1).min(n - 2) {
                for bi in ci.saturating_sub(1)..=(ci + 1).min(m - 2) {
                    for &(i, s) in &buckets[bj * cols + bi] {
                        let Some(k) = domain.index(i, j) else { continue };
                        let other = &c1.segments[i][s];
                        if let Some(hit) = intersect_segments(other.a, other.b, seg.a, seg.b) {
                            candidates[k].push(hit.point);
                        }
                    }
                }
            }
        }
    }
    let mut positions = Vec::with_capacity(domain.node_count());
    let mut missing = Vec::new();
    for (k, cands) in candidates.iter().enumerate() {
        match resolve(cands) {
            Resolved::Point(p) => positions.push(p),
            Resolved::Missing => {
                missing.push(domain.node(k));
                positions.push([f64::NAN; 2]);
            }
            Resolved::Ambiguous(count) => {
                let (i, j) = domain.node(k);
                return Err(Error::AmbiguousIntersection { i, j, count });
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteMap(missing));
    }
    FlattenedMap::new(domain.clone(), positions, als.node_vwt().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridConfig;

    #[test]
    fn crossing_diagonals() {
        let hit = intersect_segments([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]).unwrap();
        assert_eq!(hit.point, [0.5, 0.5]);
        assert_eq!((hit.t1, hit.t2), (0.5, 0.5));
    }

    #[test]
    fn parallel_segments_miss() {
        assert!(intersect_segments([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]).is_none());
        // collinear overlap is also singular
        assert!(intersect_segments([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]).is_none());
    }

    #[test]
    fn endpoint_touch_is_accepted() {
        let hit = intersect_segments([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(hit.point, [1.0, 0.0]);
        assert_eq!((hit.t1, hit.t2), (1.0, 0.0));
    }

    #[test]
    fn identity_contours_are_grid_lines() {
        let d = LGridDomain::new(7, 6, 1.0, 3.0, 2.0).unwrap();
        let xi = ReferenceMapField::identity(&d);
        let (c1, c2) = extract_contours(&xi, &d).unwrap();
        for (i, segs) in c1.segments.iter().enumerate() {
            assert!(!segs.is_empty(), "level {i} empty");
            for s in segs {
                assert_eq!(s.a[0], i as f64);
                assert_eq!(s.b[0], i as f64);
            }
        }
        for (j, segs) in c2.segments.iter().enumerate() {
            assert!(!segs.is_empty());
            assert!(segs.iter().all(|s| s.a[1] == j as f64 && s.b[1] == j as f64));
        }
        // the left boundary x = 0 only spans the CCA rows; x = 3 spans the full height
        let span = |segs: &[Segment]| segs.iter().map(|s| (s.a[1] - s.b[1]).abs()).sum::<f64>();
        assert_eq!(span(c1.level(0)), 2.0);
        assert_eq!(span(c1.level(3)), 5.0);
        assert_eq!(span(c1.level(6)), 5.0);
        // no segment is emitted twice
        assert_eq!(c1.level(4).len(), 5);
    }

    #[test]
    fn affine_field_contour() {
        let d = LGridDomain::rectangle(5, 3, 1.0).unwrap();
        let mut xi = ReferenceMapField::identity(&d);
        xi.xi1.iter_mut().for_each(|v| *v *= 0.5);
        let (c1, _) = extract_contours(&xi, &d).unwrap();
        let segs = c1.level(1);
        assert!(!segs.is_empty());
        assert!(segs.iter().all(|s| s.a[0] == 2.0 && s.b[0] == 2.0));
    }

    #[test]
    fn saddle_uses_center_value() {
        let pos = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut out = Vec::new();
        // corners 0 and 2 high, center high: corners 1 and 3 are cut off
        march_cell([1.0, 0.0, 1.0, 0.0], pos, 0.4, [true; 4], (0, 0), &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].a, out[0].b), ([0.6, 0.0], [1.0, 0.4]));
        out.clear();
        // center low: corners 0 and 2 are cut off
        march_cell([1.0, 0.0, 1.0, 0.0], pos, 0.6, [true; 4], (0, 0), &mut out);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].a, [0.0, 0.4]);
        assert_eq!(out[0].b, [0.4, 0.0]);
    }

    #[test]
    fn identity_round_trip() {
        let grid = GridConfig { h: 1.0, columns_cca: 17, columns_ica: 10, rows_cca: 10, rows_ica: 8 };
        let mesh = crate::surface::generate_synthetic_carotid(1, 10, 8, 32, &[]).unwrap();
        let als = crate::als::als_flatten(&mesh, &grid).unwrap();
        let xi = ReferenceMapField::identity(als.domain());
        let contours = extract_contours(&xi, als.domain()).unwrap();
        let map = build_flattened_map(&contours, &als).unwrap();
        for k in 0..als.domain().node_count() {
            assert_eq!(map.positions()[k], als.position(k));
        }
        assert_eq!(map.vwt(), als.node_vwt());
    }

    #[test]
    fn folded_field_is_rejected() {
        let d = LGridDomain::rectangle(4, 4, 1.0).unwrap();
        let mut xi = ReferenceMapField::identity(&d);
        let k = d.index(1, 2).unwrap();
        xi.xi2[k] = 3.5;
        assert!(matches!(extract_contours(&xi, &d), Err(Error::Fold { i: 1, j: 2 })));
    }

    #[test]
    fn missing_and_ambiguous_intersections() {
        let seg = |a: [f64; 2], b: [f64; 2]| Segment { a, b, cell: (0, 0) };
        let v = [seg([0.0, 0.0], [0.0, 1.0])];
        let far = [seg([2.0, 0.5], [3.0, 0.5])];
        assert!(matches!(intersect_contours(&v, &far, 0, 0), Err(Error::MissingIntersection { .. })));
        let zigzag = [seg([-1.0, 0.2], [1.0, 0.3]), seg([1.0, 0.3], [-1.0, 0.8])];
        assert!(matches!(
            intersect_contours(&v, &zigzag, 0, 0),
            Err(Error::AmbiguousIntersection { count: 2, .. })
        ));
        let through_vertex = [seg([-1.0, 0.5], [0.0, 0.5]), seg([0.0, 0.5], [1.0, 0.5])];
        assert_eq!(intersect_contours(&v, &through_vertex, 0, 0).unwrap(), [0.0, 0.5]);
    }
}
