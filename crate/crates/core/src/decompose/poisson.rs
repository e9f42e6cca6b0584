//! Voxel Poisson completion of a boundary point set.
//!
//! The unknown `f` lives on cell centers of a regular grid around the input.
//! Each point splats `v = n·r / d` into its 8 trilinear-neighbor cells, the
//! 7-point Laplacian `Δf = ρ` is solved with `f = h` held on the outer shell,
//! and cells straddling a sign change of `f` become output points.

use super::{BoundaryCompletionConfig, DecomposeError};
use crate::geometry::{PointCloud, Vec3};

/// Amplitude of the splatted source relative to the shell value. It keeps
/// the double layer built by the points dominant over the constant shell
/// term, so sign changes track the surface and not the grid border.
pub const SOURCE_GAIN: f64 = 1000.0;

/// Cells of padding between the input bounds and the Dirichlet shell.
pub const GRID_MARGIN: usize = 6;

/// Output points stay within this many cells of the input bounds.
pub const EMIT_MARGIN: f64 = 2.0;

/// Refuse grids larger than this many cells.
pub const MAX_CELLS: usize = 40_000_000;

#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub h: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    /// Grid of cell size `h` covering `[lo, hi]` with `margin` cells on
    /// every side, centered on the box.
    pub fn around(lo: Vec3, hi: Vec3, h: f64, margin: usize) -> Self {
        let ext = hi - lo;
        let mid = (lo + hi) * 0.5;
        let dims = [0, 1, 2].map(|i| (ext[i] / h).ceil() as usize + 2 * margin);
        let origin = mid - Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * (h * 0.5);
        Self { origin, h, dims }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// Neighbor of `idx` one step along `axis` in direction `dir`, if inside.
    fn step(&self, c: [usize; 3], axis: usize, forward: bool) -> Option<usize> {
        let mut n = c;
        if forward {
            if c[axis] + 1 >= self.dims[axis] {
                return None;
            }
            n[axis] += 1;
        } else {
            if c[axis] == 0 {
                return None;
            }
            n[axis] -= 1;
        }
        Some(self.index(n[0], n[1], n[2]))
    }
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    /// `‖b − A x_k‖ / ‖b‖` after each iteration, starting with `x_0 = 0`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// The discrete operator `-h²Δ` with homogeneous Dirichlet ghosts.
fn apply(grid: &VoxelGrid, x: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = grid.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = grid.index(i, j, k);
                let mut s = 6.0 * x[c];
                if i > 0 {
                    s -= x[c - 1];
                }
                if i + 1 < nx {
                    s -= x[c + 1];
                }
                if j > 0 {
                    s -= x[c - nx];
                }
                if j + 1 < ny {
                    s -= x[c + nx];
                }
                if k > 0 {
                    s -= x[c - nx * ny];
                }
                if k + 1 < nz {
                    s -= x[c + nx * ny];
                }
                out[c] = s;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate residual iteration for the symmetric positive definite grid
/// operator. Each step minimizes `‖b − Ax‖` over the Krylov space, so the
/// recorded residual never goes up.
pub fn solve_grid(grid: &VoxelGrid, b: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, SolveTrace) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    let mut trace = SolveTrace::default();
    if bnorm == 0.0 {
        trace.residuals.push(0.0);
        trace.converged = true;
        return (x, trace);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ar = vec![0.0; n];
    apply(grid, &r, &mut ar);
    let mut ap = ar.clone();
    let mut rar = dot(&r, &ar);
    trace.residuals.push(1.0);
    for _ in 0..max_iters {
        let apap = dot(&ap, &ap);
        if apap == 0.0 || rar == 0.0 {
            break;
        }
        let alpha = rar / apap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        trace.residuals.push(rel);
        if rel <= tol {
            trace.converged = true;
            break;
        }
        apply(grid, &r, &mut ar);
        let rar_new = dot(&r, &ar);
        let beta = rar_new / rar;
        rar = rar_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
            ap[i] = ar[i] + beta * ap[i];
        }
    }
    if !trace.converged {
        trace.converged = trace.residuals.last().is_some_and(|&r| r <= tol);
    }
    (x, trace)
}

/// Fills holes in an oriented boundary sample. Output points sit at the
/// centers of zero-crossing cells and carry normals from `-∇f`.
pub fn poisson_complete(
    coarse: &PointCloud,
    cfg: &BoundaryCompletionConfig,
) -> Result<PointCloud, DecomposeError> {
    poisson_complete_traced(coarse, cfg).map(|(c, _)| c)
}

pub fn poisson_complete_traced(
    coarse: &PointCloud,
    cfg: &BoundaryCompletionConfig,
) -> Result<(PointCloud, SolveTrace), DecomposeError> {
    let normals = coarse.normals.as_ref().ok_or(DecomposeError::MissingNormals)?;
    let (lo, hi) = coarse.bounds().ok_or(DecomposeError::EmptyBoundary)?;
    let h = cfg.voxel_size;
    let grid = VoxelGrid::around(lo, hi, h, GRID_MARGIN);
    let emit_lo = lo - Vec3::repeat(EMIT_MARGIN * h);
    let emit_hi = hi + Vec3::repeat(EMIT_MARGIN * h);
    if grid.len() > MAX_CELLS {
        return Err(DecomposeError::GridTooLarge(grid.len()));
    }

    let mut sum_v = vec![0.0; grid.len()];
    let mut hits = vec![0u32; grid.len()];
    for (p, n) in coarse.points.iter().zip(normals) {
        let u = (p - grid.origin) / h - Vec3::repeat(0.5);
        let base = u.map(|v| v.floor() as i64);
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let c: [i64; 3] = [0, 1, 2].map(|a| base[a] + off[a] as i64);
            if (0..3).any(|a| c[a] < 0 || c[a] >= grid.dims[a] as i64) {
                continue;
            }
            let (i, j, k) = (c[0] as usize, c[1] as usize, c[2] as usize);
            let r = grid.center(i, j, k) - p;
            let d = r.norm().max(h * 0.5);
            let idx = grid.index(i, j, k);
            sum_v[idx] += n.dot(&r) / d;
            hits[idx] += 1;
        }
    }

    // -h² ρ with ρ = (gain / h) · mean splat, plus the shell value moved
    // over from the ghost cells
    let mut b = vec![0.0; grid.len()];
    for (idx, rhs) in b.iter_mut().enumerate() {
        if hits[idx] > 0 {
            *rhs = -SOURCE_GAIN * h * sum_v[idx] / hits[idx] as f64;
        }
        let c = grid.coords(idx);
        let ghosts = (0..3)
            .map(|a| (c[a] == 0) as usize + (c[a] + 1 == grid.dims[a]) as usize)
            .sum::<usize>();
        *rhs += ghosts as f64 * h;
    }

    let (f, trace) = solve_grid(&grid, &b, cfg.cg_tolerance, cfg.cg_max_iters);
    let last = trace.residuals.last().copied().unwrap_or(0.0);
    if last > 10.0 * cfg.cg_tolerance {
        return Err(DecomposeError::SolverDiverged {
            residual: last,
            tolerance: cfg.cg_tolerance,
        });
    }

    let value = |c: [usize; 3], axis: usize, forward: bool| match grid.step(c, axis, forward) {
        Some(n) => f[n],
        None => h,
    };
    let mut emit = vec![false; grid.len()];
    for (idx, &fa) in f.iter().enumerate() {
        let c = grid.coords(idx);
        for axis in 0..3 {
            if let Some(nb) = grid.step(c, axis, true) {
                let fb = f[nb];
                if (fa <= 0.0) != (fb <= 0.0) {
                    emit[if fa.abs() <= fb.abs() { idx } else { nb }] = true;
                }
            }
        }
    }
    let mut points = Vec::new();
    let mut out_normals = Vec::new();
    for (idx, &on) in emit.iter().enumerate() {
        if !on {
            continue;
        }
        let c = grid.coords(idx);
        let at = grid.center(c[0], c[1], c[2]);
        if (0..3).any(|a| at[a] < emit_lo[a] || at[a] > emit_hi[a]) {
            continue;
        }
        let grad = Vec3::new(
            value(c, 0, true) - value(c, 0, false),
            value(c, 1, true) - value(c, 1, false),
            value(c, 2, true) - value(c, 2, false),
        );
        let g = grad.norm();
        points.push(at);
        out_normals.push(if g > 0.0 { -grad / g } else { Vec3::z() });
    }
    Ok((PointCloud::with_normals(points, out_normals), trace))
}
