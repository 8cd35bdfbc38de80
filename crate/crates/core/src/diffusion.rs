//! Implicit-Euler step of the variable-diffusivity diffusion equation
//! `rho_t = kappa * lap(rho) + grad(kappa) . grad(rho)` on the active grid nodes.
//!
//! No-flux boundaries use ghost nodes: any neighbor outside the active region takes
//! the value of the center node. The operator `A = I - dt (kappa L + K_x + K_y)` is
//! assembled once and every step solves `A rho^n = rho^{n-1}` with BiCGSTAB.

use crate::domain::{DiffusivityField, LGridDomain, Side};
use crate::error::{Error, Result};

/// Relative residual target of the Krylov solve.
pub const SOLVER_TOLERANCE: f64 = 1e-14;

/// A solve that stalls above the target but below this residual is still accepted.
pub const ACCEPT_TOLERANCE: f64 = 1e-10;

/// Iterations without a new best residual before the solve is declared stalled.
const STALL_WINDOW: usize = 50;

/// Node densities plus cached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
    iteration: usize,
    mean: f64,
    sd: f64,
}

impl DensityField {
    pub fn new(values: Vec<f64>) -> Self {
        Self::at_iteration(values, 0)
    }

    fn at_iteration(values: Vec<f64>, iteration: usize) -> Self {
        let (mean, sd) = mean_sd(&values);
        DensityField {
            values,
            iteration,
            mean,
            sd,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// `sd / mean`, the equalization error.
    pub fn ratio(&self) -> f64 {
        self.sd / self.mean
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Node density as the arithmetic mean of the incident active cell values.
pub fn cell_to_node(domain: &LGridDomain, cell_values: &[f64]) -> Result<DensityField> {
    if cell_values.len() != domain.cell_count() {
        return Err(Error::Parameter(format!(
            "{} cell values for {} cells",
            cell_values.len(),
            domain.cell_count()
        )));
    }
    let mut sum = vec![0.0; domain.node_count()];
    let mut count = vec![0u32; domain.node_count()];
    for (c, &v) in cell_values.iter().enumerate() {
        for k in domain.cell_nodes(c) {
            sum[k] += v;
            count[k] += 1;
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(DensityField::new(values))
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[idx] * x[self.indices[idx]];
            }
            *o = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Unpreconditioned BiCGSTAB for `A x = b`, starting from the contents of `x`.
/// Stops when `|b - A x| <= tol |b|`.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.dim();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = a.mul(x);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut residual = norm(&r) / b_norm;
    if residual <= tol {
        return Ok(SolveStats { iterations: 0, residual });
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarts = 0;
    let (mut best, mut best_at) = (residual, 0);
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            // Breakdown: restart the shadow residual from the current residual.
            restarts += 1;
            if restarts > 10 {
                break;
            }
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        a.mul_into(&p, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) / b_norm <= tol {
            for k in 0..n {
                x[k] += alpha * p[k];
            }
            residual = norm(&s) / b_norm;
            return Ok(SolveStats { iterations: it, residual });
        }
        a.mul_into(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * p[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        residual = norm(&r) / b_norm;
        if residual <= tol {
            return Ok(SolveStats { iterations: it, residual });
        }
        if residual < best {
            (best, best_at) = (residual, it);
        } else if it - best_at > STALL_WINDOW {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// The assembled implicit-Euler operator for one domain, diffusivity and step size.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    matrix: CsrMatrix,
    dt: f64,
    nodes: Vec<(usize, usize)>,
    max_iter: usize,
}

impl DiffusionOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn with_max_iterations(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Assembles `I - dt (kappa L + K_x + K_y)` with the ghost-node rule applied to
/// every neighbor that is outside the grid or in the inactive block.
pub fn assemble_operator(domain: &LGridDomain, kappa: &DiffusivityField, dt: f64) -> Result<DiffusionOperator> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("step size must be finite and >= 0 (got {dt})")));
    }
    let h = domain.h();
    let rows = (0..domain.node_count())
        .map(|k| {
            let (kap, kx, ky) = (kappa.kappa[k], kappa.kappa_x[k], kappa.kappa_y[k]);
            let lap = kap / (h * h);
            let mut diag = 1.0 + dt * 4.0 * lap;
            let mut row = Vec::with_capacity(5);
            for (side, nb) in Side::ALL.iter().zip(domain.neighbors(k)) {
                let weight = dt
                    * match side {
                        Side::West => lap - kx / (2.0 * h),
                        Side::East => lap + kx / (2.0 * h),
                        Side::South => lap - ky / (2.0 * h),
                        Side::North => lap + ky / (2.0 * h),
                    };
                match nb {
                    Some(n) => row.push((n, -weight)),
                    None => diag -= weight,
                }
            }
            row.push((k, diag));
            row
        })
        .collect();
    Ok(DiffusionOperator {
        matrix: CsrMatrix::from_rows(rows),
        dt,
        nodes: domain.nodes().to_vec(),
        max_iter: 10 * domain.node_count(),
    })
}

/// One implicit step: solves `A rho^n = rho^{n-1}`.
pub fn diffusion_step(op: &DiffusionOperator, previous: &DensityField) -> Result<DensityField> {
    if previous.values().len() != op.matrix.dim() {
        return Err(Error::Parameter(format!(
            "density has {} nodes, operator {}",
            previous.values().len(),
            op.matrix.dim()
        )));
    }
    let mut next = previous.values().to_vec();
    match bicgstab(&op.matrix, previous.values(), &mut next, SOLVER_TOLERANCE, op.max_iter) {
        Ok(_) => {}
        Err(Error::NoConvergence { residual, .. }) if residual <= ACCEPT_TOLERANCE => {}
        Err(e) => return Err(e),
    }
    if let Some((k, &value)) = next.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        let (i, j) = op.nodes[k];
        return Err(Error::Positivity { i, j, value });
    }
    Ok(DensityField::at_iteration(next, previous.iteration() + 1))
}

/// `sd / mean <= epsilon`.
pub fn converged(density: &DensityField, epsilon: f64) -> bool {
    density.ratio() <= epsilon
}
