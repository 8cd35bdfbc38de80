//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to stderr;
//! run with `cargo test -p derm-core --test acceptance -- --nocapture` to see them.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use derm_core::diffusion::DensityField;
use derm_core::domain::kappa_field;
use derm_core::metrics::{folded_area_fraction_near, log_area_ratio};
use derm_core::suite::synthetic_suite;
use derm_core::{
    area_distortion, assemble_operator, build_domain, diffusion_step, flatten, generate_cylinder,
    intersect_segments, run_report, step_size, DermConfig, DiffusivityField, FlattenedMap, Flattening,
    GridConfig, LGridDomain, Method, RunReport, Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// The stderr lines are the point of this suite, so write them explicitly.
#[allow(clippy::explicit_write)]
fn report_line(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "[{status}] criterion {id:>2} {name}: {detail}").unwrap();
}

struct SuiteRun {
    name: String,
    als: Flattening,
    derm: Flattening,
    dem: Flattening,
    derm_time: Duration,
}

fn suite() -> &'static [SuiteRun] {
    static RUNS: OnceLock<Vec<SuiteRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let config = DermConfig::default();
        synthetic_suite()
            .unwrap()
            .into_iter()
            .map(|(name, mesh)| {
                let start = Instant::now();
                let derm = flatten(&mesh, Method::Derm, &config).unwrap();
                let derm_time = start.elapsed();
                SuiteRun {
                    als: flatten(&mesh, Method::Als, &config).unwrap(),
                    dem: flatten(&mesh, Method::Dem, &config).unwrap(),
                    name,
                    derm,
                    derm_time,
                }
            })
            .collect()
    })
}

fn report(name: &str, run: &Flattening) -> RunReport {
    run_report(name, run, &DermConfig::default(), 0.1).unwrap()
}

#[test]
fn criterion_01_cylinder_is_a_fixed_point() {
    let mesh = generate_cylinder(54, 96, 3.0, 1.0).unwrap();
    let start = Instant::now();
    let run = flatten(&mesh, Method::Derm, &DermConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let outcome = run.outcome.as_ref().unwrap();
    let density = run.als.cell_density();
    let spread = density.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - density.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_shift = run
        .map
        .positions()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let q = run.als.position(k);
            (p[0] - q[0]).abs().max((p[1] - q[1]).abs())
        })
        .fold(0.0, f64::max);
    let pass = spread <= 1e-9 * density[0]
        && outcome.iterations == 0
        && outcome.termination == Termination::Converged
        && max_shift <= 1e-10
        && elapsed < Duration::from_secs(1);
    report_line(
        1,
        "cylinder fixed point",
        pass,
        &format!(
            "density spread {spread:.2e}, iterations {}, max shift {max_shift:.2e}, {:.3} s",
            outcome.iterations,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Dense `I - dt L` with reflecting ghost nodes, built straight from the stencil.
fn dense_oracle(m: usize, n: usize, h: f64, dt: f64) -> Vec<Vec<f64>> {
    let size = m * n;
    let lambda = dt / (h * h);
    let mut a = vec![vec![0.0; size]; size];
    for j in 0..n {
        for i in 0..m {
            let r = j * m + i;
            a[r][r] = 1.0 + 4.0 * lambda;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= m as i64 || nj >= n as i64 {
                    a[r][r] -= lambda;
                } else {
                    a[r][nj as usize * m + ni as usize] -= lambda;
                }
            }
        }
    }
    a
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

#[test]
fn criterion_02_diffusion_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_err, mut worst_mass) = (0.0f64, 0.0f64);
    for size in [3usize, 5] {
        let domain = LGridDomain::rectangle(size, size, 1.0).unwrap();
        let kappa = DiffusivityField::uniform(&domain, 1.0);
        let mut rho = DensityField::new((0..size * size).map(|_| rng.gen_range(0.5..2.0)).collect());
        for _ in 0..5 {
            let dt = step_size(&rho, &domain, 0.5).unwrap();
            let op = assemble_operator(&domain, &kappa, dt).unwrap();
            let next = diffusion_step(&op, &rho).unwrap();
            let oracle = gauss_solve(dense_oracle(size, size, 1.0, dt), rho.values().to_vec());
            for (a, b) in next.values().iter().zip(&oracle) {
                worst_err = worst_err.max((a - b).abs());
            }
            worst_mass = worst_mass.max((next.total() - rho.total()).abs());
            rho = next;
        }
    }
    let pass = worst_err <= 1e-12 && worst_mass <= 1e-10;
    report_line(
        2,
        "diffusion oracle",
        pass,
        &format!("max |rho - oracle| {worst_err:.2e}, max mass drift {worst_mass:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_suite_converges() {
    let runs = suite();
    let mut pass = true;
    let mut detail = Vec::new();
    for run in runs {
        let outcome = run.derm.outcome.as_ref().unwrap();
        let ok = outcome.termination == Termination::Converged
            && outcome.iterations <= 500
            && outcome.final_ratio() <= 1e-3
            && run.derm_time <= Duration::from_secs(30);
        pass &= ok;
        detail.push(format!(
            "{} n={} ratio={:.2e} {:.2}s",
            run.name,
            outcome.iterations,
            outcome.final_ratio(),
            run.derm_time.as_secs_f64()
        ));
    }
    report_line(3, "suite convergence", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_04_distortion_reduction() {
    let mut pass = true;
    let mut detail = Vec::new();
    for run in suite() {
        let als = report(&run.name, &run.als).distortion.mean_abs_d;
        let derm = report(&run.name, &run.derm).distortion.mean_abs_d;
        let reduction = 100.0 * (1.0 - derm / als);
        pass &= derm <= 0.4 * als;
        detail.push(format!("{} {als:.4}->{derm:.4} ({reduction:.1}%)", run.name));
    }
    report_line(4, "distortion reduction >= 60%", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_05_derm_is_bijective() {
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut mixed = Vec::new();
    for run in suite() {
        let overlap = report(&run.name, &run.derm).distortion.overlap;
        worst = worst.max(overlap.abs());
        let areas = run.derm.map.signed_areas();
        let one_sign = areas.iter().all(|&a| a > 0.0) || areas.iter().all(|&a| a < 0.0);
        if !one_sign {
            mixed.push(run.name.clone());
        }
        pass &= overlap.abs() <= 1e-8 && one_sign;
    }
    report_line(
        5,
        "DERM overlap",
        pass,
        &format!("max |overlap| {worst:.2e}, meshes with mixed signs {mixed:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_dem_folds_near_corner() {
    let mut hits = Vec::new();
    for run in suite() {
        let domain = run.dem.map.domain();
        let (p, q) = domain.corner().unwrap();
        let radius = 2.0 * domain.total_area().powf(0.25);
        let dem_overlap = report(&run.name, &run.dem).distortion.overlap;
        let derm_overlap = report(&run.name, &run.derm).distortion.overlap;
        let near = folded_area_fraction_near(&run.dem.map, [p, q], radius);
        if dem_overlap > 0.0 && near.is_some_and(|f| f >= 0.5) && derm_overlap.abs() <= 1e-8 {
            hits.push(format!(
                "{} dem overlap {dem_overlap:.3}, near-corner fraction {:.2}, derm overlap {derm_overlap:.1e}",
                run.name,
                near.unwrap()
            ));
        }
    }
    let pass = !hits.is_empty();
    report_line(6, "DEM folds at the corner", pass, &hits.join("; "));
    assert!(pass);
}

#[test]
#[allow(clippy::approx_constant)]
fn criterion_07_log_ratio_calibration() {
    // Two cells of flattened area 2 and 1 over 3D areas 1 and 2: the global scale
    // is 1, so the cells read ln 2 and -ln 2.
    let domain = LGridDomain::rectangle(3, 2, 1.0).unwrap();
    let xs = [0.0, 2.0, 3.0];
    let positions = (0..2).flat_map(|j| xs.iter().map(move |&x| [x, j as f64])).collect();
    let map = FlattenedMap::new(domain, positions, vec![0.0; 6]).unwrap();
    let r = area_distortion(&map, &[1.0, 2.0], 0.1).unwrap();
    let (d0, d1) = (r.d[0].unwrap(), r.d[1].unwrap());
    let pass = (d0 - 0.6931).abs() <= 1e-4 && (d1 + 0.6931).abs() <= 1e-4 && log_area_ratio(2.0, 1.0) == d0;
    report_line(7, "d calibration", pass, &format!("d = {d0:.6} and {d1:.6}"));
    assert!(pass);
}

#[test]
fn criterion_08_kappa_field() {
    let domain = build_domain(&GridConfig::default()).unwrap();
    let kappa = kappa_field(&domain);
    let a = domain.total_area();
    let (p, q) = domain.corner().unwrap();
    let (ci, cj) = domain.corner_index().unwrap();
    let at_corner = kappa.kappa[domain.index(ci, cj).unwrap()];
    let (far, d2) = (0..domain.node_count())
        .map(|k| {
            let [x, y] = domain.position(k);
            (k, (x - p).powi(2) + (y - q).powi(2))
        })
        .max_by(|l, r| l.1.total_cmp(&r.1))
        .unwrap();
    let analytic = 1.0 - (1.0 - a.powf(-0.5)) * (-d2 / a.sqrt()).exp();
    let err = (kappa.kappa[far] - analytic).abs();
    let pass = at_corner == 1.0 / a.sqrt() && err <= 1e-12 && kappa.kappa[far] >= analytic - 1e-12;
    report_line(
        8,
        "kappa field",
        pass,
        &format!(
            "kappa(p,q) = {at_corner:.15} vs {:.15}, farthest node {:?} error {err:.1e}",
            1.0 / a.sqrt(),
            domain.node(far)
        ),
    );
    assert!(pass);
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[test]
fn criterion_09_segment_intersection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut point = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let (mut mismatches, mut hits, mut worst) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let (p0, p1, q0, q1) = (point(), point(), point(), point());
        let (o1, o2) = (orient(q0, q1, p0), orient(q0, q1, p1));
        let (o3, o4) = (orient(p0, p1, q0), orient(p0, p1, q1));
        let oracle_hit = o1 * o2 < 0.0 && o3 * o4 < 0.0;
        let got = intersect_segments(p0, p1, q0, q1);
        if got.is_some() != oracle_hit {
            mismatches += 1;
            continue;
        }
        if let Some(hit) = got {
            hits += 1;
            let t = o1 / (o1 - o2);
            let expected = [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
            worst = worst.max((hit.point[0] - expected[0]).hypot(hit.point[1] - expected[1]));
        }
    }
    let pass = mismatches == 0 && worst <= 1e-10;
    report_line(
        9,
        "segment intersection oracle",
        pass,
        &format!("{hits} hits of 1000, {mismatches} disagreements, max position error {worst:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_suite_is_deterministic() {
    let config = DermConfig::default();
    let first: Vec<String> = suite()
        .iter()
        .flat_map(|run| [report(&run.name, &run.derm), report(&run.name, &run.dem)])
        .map(|r| serde_json::to_string(&r).unwrap())
        .collect();
    let second: Vec<String> = synthetic_suite()
        .unwrap()
        .into_iter()
        .flat_map(|(name, mesh)| {
            [Method::Derm, Method::Dem].map(|method| {
                let run = flatten(&mesh, method, &config).unwrap();
                serde_json::to_string(&run_report(&name, &run, &config, 0.1).unwrap()).unwrap()
            })
        })
        .collect();
    let differing = first.iter().zip(&second).filter(|(a, b)| a != b).count();
    let pass = first.len() == 20 && differing == 0;
    report_line(
        10,
        "determinism",
        pass,
        &format!("{} reports compared, {differing} differ", first.len()),
    );
    assert!(pass);
}
