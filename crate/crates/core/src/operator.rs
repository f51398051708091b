//! Assembly and application of the discrete Dirichlet-constrained
//! operator T = D - W.
//!
//! W_ij = K(x_i, x_j) h^d over interior pairs; the diagonal
//! d_i = sum_j K(x_i, x_j) h^d runs over interior and extension nodes.
//! Summing the diagonal discretely (rather than inserting the analytic
//! kernel mass m(x_i)) makes the discrete energy identity
//!
//!   <Tu, u> h^d = 1/2 sum_ij K(x_i, x_j) (u~_i - u~_j)^2 h^{2d}
//!
//! exact, which in turn makes T symmetric positive semidefinite by
//! construction.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::DeformationKernel;
use std::io::Write;

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    diag: Vec<f64>,
    max_diag: f64,
    jobs: usize,
}

pub const DEFAULT_MAX_ENTRIES: usize = 200_000_000;

struct RowBlock {
    cols: Vec<u32>,
    vals: Vec<f64>,
    counts: Vec<u32>,
    diag: Vec<f64>,
}

/// Collects, for interior node `i`, the ids of every node that can carry a
/// nonzero kernel value against it, in ascending order.
pub(crate) fn candidate_ids(
    grid: &Grid,
    kernel: &DeformationKernel,
    images: &[f64],
    i: usize,
    out: &mut Vec<u32>,
) {
    out.clear();
    let d = grid.dim();
    if grid.is_custom() {
        out.extend(0..grid.total_count() as u32);
        return;
    }
    let x = grid.node(i);
    let ax = &images[i * d..(i + 1) * d];

    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    let ones = [1.0; 3];

    // Nodes y with psi(y - a(x)) != 0 lie in the unit ball around a(x).
    grid.lattice_range(ax, &ones[..d], &mut lo, &mut hi);
    push_box(grid, &lo, &hi, out);

    // Nodes y with psi(x - a(y)) != 0 satisfy a(y) in ball(x, 1).
    let mut center = [0.0; 3];
    let mut half = [0.0; 3];
    kernel
        .map()
        .inverse_ball_box(x, 1.0, &mut center[..d], &mut half[..d]);
    grid.lattice_range(&center[..d], &half[..d], &mut lo, &mut hi);
    push_box(grid, &lo, &hi, out);

    out.sort_unstable();
    out.dedup();
}

fn push_box(grid: &Grid, lo: &[i64; 3], hi: &[i64; 3], out: &mut Vec<u32>) {
    let d = grid.dim();
    let mut k = *lo;
    'outer: loop {
        let mut key = [0i64; 3];
        key[..d].copy_from_slice(&k[..d]);
        if let Some(id) = grid.lookup(&key) {
            out.push(id);
        }
        for a in 0..d {
            k[a] += 1;
            if k[a] <= hi[a] {
                continue 'outer;
            }
            k[a] = lo[a];
        }
        break;
    }
}

fn assemble_rows(
    grid: &Grid,
    kernel: &DeformationKernel,
    images: &[f64],
    rows: std::ops::Range<usize>,
) -> RowBlock {
    let d = grid.dim();
    let h_d = grid.cell_volume();
    let mut block = RowBlock {
        cols: Vec::new(),
        vals: Vec::new(),
        counts: Vec::with_capacity(rows.len()),
        diag: Vec::with_capacity(rows.len()),
    };
    let mut cand = Vec::new();
    let n_int = grid.interior_count() as u32;
    for i in rows {
        candidate_ids(grid, kernel, images, i, &mut cand);
        let x = grid.node(i);
        let ax = &images[i * d..(i + 1) * d];
        let mut di = 0.0;
        let mut count = 0u32;
        for &j in &cand {
            let ju = j as usize;
            let y = grid.node(ju);
            let ay = &images[ju * d..(ju + 1) * d];
            let k = kernel.eval_with_images(x, y, ax, ay);
            if k > 0.0 {
                let w = k * h_d;
                di += w;
                if j < n_int {
                    block.cols.push(j);
                    block.vals.push(w);
                    count += 1;
                }
            }
        }
        block.counts.push(count);
        block.diag.push(di);
    }
    block
}

impl DiscreteOperator {
    pub fn assemble(grid: Grid, kernel: &DeformationKernel, jobs: usize) -> Result<Self> {
        Self::assemble_with_caps(grid, kernel, jobs, DEFAULT_MAX_ENTRIES)
    }

    pub fn assemble_with_caps(
        grid: Grid,
        kernel: &DeformationKernel,
        jobs: usize,
        max_entries: usize,
    ) -> Result<Self> {
        if kernel.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: kernel.dim() });
        }
        let d = grid.dim();
        let n = grid.interior_count();
        let total = grid.total_count();

        // Image table a(x_j) for every node, computed once.
        let mut images = vec![0.0; total * d];
        for j in 0..total {
            kernel.map().forward(grid.node(j), &mut images[j * d..(j + 1) * d]);
        }

        let jobs = jobs.max(1).min(n.max(1));
        let blocks: Vec<RowBlock> = if jobs == 1 {
            vec![assemble_rows(&grid, kernel, &images, 0..n)]
        } else {
            let chunk = n.div_ceil(jobs);
            let grid_ref = &grid;
            let images_ref = &images;
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..jobs)
                    .map(|t| {
                        let lo = t * chunk;
                        let hi = ((t + 1) * chunk).min(n);
                        scope.spawn(move || assemble_rows(grid_ref, kernel, images_ref, lo..hi))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("assembly worker")).collect()
            })
        };

        let nnz: usize = blocks.iter().map(|b| b.cols.len()).sum();
        if nnz > max_entries {
            return Err(Error::MemoryCapExceeded { requested: nnz, cap: max_entries });
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for b in &blocks {
            for (k, &c) in b.counts.iter().enumerate() {
                row_ptr.push(row_ptr.last().unwrap() + c as usize);
                diag.push(b.diag[k]);
            }
            col_idx.extend_from_slice(&b.cols);
            values.extend_from_slice(&b.vals);
        }
        let max_diag = diag.iter().fold(0.0f64, |m, &v| m.max(v));

        Ok(DiscreteOperator { grid, row_ptr, col_idx, values, diag, max_diag, jobs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn max_diag(&self) -> f64 {
        self.max_diag
    }

    /// Gershgorin bound on the largest eigenvalue of T.
    pub fn lambda_max_bound(&self) -> f64 {
        2.0 * self.max_diag
    }

    fn apply_rows(&self, u: &[f64], out: &mut [f64], rows: std::ops::Range<usize>) {
        for i in rows {
            let mut s = self.diag[i] * u[i];
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            for k in lo..hi {
                s -= self.values[k] * u[self.col_idx[k] as usize];
            }
            out[i] = s;
        }
    }

    /// out = T u = D u - W u. Row partitions are embarrassingly parallel
    /// and every row sums its terms in a fixed order, so the result is
    /// bitwise identical for any worker count.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n();
        if u.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: u.len() });
        }
        if out.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: out.len() });
        }
        if self.jobs <= 1 || n < 4096 {
            self.apply_rows(u, out, 0..n);
            return Ok(());
        }
        let jobs = self.jobs.min(n);
        let chunk = n.div_ceil(jobs);
        std::thread::scope(|scope| {
            let mut rest = &mut out[..];
            for t in 0..jobs {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(n);
                if lo >= hi {
                    break;
                }
                let (mine, tail) = rest.split_at_mut(hi - lo);
                rest = tail;
                scope.spawn(move || {
                    for (slot, i) in mine.iter_mut().zip(lo..hi) {
                        let mut s = self.diag[i] * u[i];
                        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                            s -= self.values[k] * u[self.col_idx[k] as usize];
                        }
                        *slot = s;
                    }
                });
            }
        });
        Ok(())
    }

    pub fn apply_vec(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.apply(u, &mut out)?;
        Ok(out)
    }

    /// <Tu, u> in the plain Euclidean inner product.
    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64> {
        let tu = self.apply_vec(u)?;
        Ok(tu.iter().zip(u.iter()).map(|(a, b)| a * b).sum())
    }

    /// Entry (i, j) of T; i, j interior. Slow, for inspection and tests.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mut w = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] as usize == j {
                w = self.values[k];
                break;
            }
        }
        if i == j {
            self.diag[i] - w
        } else {
            -w
        }
    }

    /// Text dump of T in zero-based coordinate triplets, one
    /// `row col value` per line, ordered by row then column.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n() {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut wrote_diag = false;
            for k in lo..hi {
                let j = self.col_idx[k] as usize;
                if j == i {
                    writeln!(w, "{} {} {}", i, j, self.diag[i] - self.values[k])?;
                    wrote_diag = true;
                } else {
                    if !wrote_diag && j > i {
                        writeln!(w, "{} {} {}", i, i, self.diag[i])?;
                        wrote_diag = true;
                    }
                    writeln!(w, "{} {} {}", i, j, -self.values[k])?;
                }
            }
            if !wrote_diag {
                writeln!(w, "{} {} {}", i, i, self.diag[i])?;
            }
        }
        Ok(())
    }
}
