//! Dense kernels behind the ridge solver: Gram products with f64
//! accumulation, blocked Cholesky factorization and triangular solves.
//!
//! Work is split over disjoint output rows and each entry is accumulated in
//! a fixed order, so results do not depend on the [`Exec`] strategy or the
//! number of threads.

use crate::exec::Exec;
use crate::matrixio::DenseMatrix;

/// Rows of the input consumed per Gram update.
const GRAM_TILE: usize = 256;
/// Panel width of the blocked Cholesky factorization.
const PANEL: usize = 64;
/// Right-hand sides solved together in one sweep over the factor.
const RHS_GROUP: usize = 16;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `MᵀM` for an `n x k` matrix `M`, returned as a full symmetric `k x k`
/// matrix. Entries are accumulated in f64.
pub fn gram(m: &DenseMatrix<f32>, exec: Exec) -> DenseMatrix<f64> {
    let (n, k) = m.shape();
    let mut g = vec![0.0f64; k * k];
    let mut tile = vec![0.0f64; k * GRAM_TILE];
    for start in (0..n).step_by(GRAM_TILE) {
        let t = GRAM_TILE.min(n - start);
        // column-major copy of this block of rows: tile[a*t + r] = m[start+r][a]
        for r in 0..t {
            for (a, &v) in m.row(start + r).iter().enumerate() {
                tile[a * t + r] = v as f64;
            }
        }
        accumulate_tile(&mut g, k, &tile[..k * t], t, exec);
    }
    mirror_lower(&mut g, k);
    DenseMatrix::new(k, k, g).expect("k x k buffer")
}

/// `MMᵀ` for an `n x k` matrix `M`, returned as a full symmetric `n x n`
/// matrix. Same accumulation order as `gram(&m.transpose())` without the copy.
pub fn outer_gram(m: &DenseMatrix<f32>, exec: Exec) -> DenseMatrix<f64> {
    let (n, k) = m.shape();
    let mut g = vec![0.0f64; n * n];
    let mut tile = vec![0.0f64; n * GRAM_TILE.min(k.max(1))];
    for start in (0..k).step_by(GRAM_TILE) {
        let t = GRAM_TILE.min(k - start);
        for a in 0..n {
            let src = &m.row(a)[start..start + t];
            for (dst, &v) in tile[a * t..(a + 1) * t].iter_mut().zip(src) {
                *dst = v as f64;
            }
        }
        accumulate_tile(&mut g, n, &tile[..n * t], t, exec);
    }
    mirror_lower(&mut g, n);
    DenseMatrix::new(n, n, g).expect("n x n buffer")
}

/// Adds `dot(tile[a], tile[b])` to `g[a][b]` for `b <= a`, where `tile` holds
/// `dim` rows of length `t`. Output is visited in `PANEL x PANEL` blocks so
/// both operand blocks stay in cache.
fn accumulate_tile(g: &mut [f64], dim: usize, tile: &[f64], t: usize, exec: Exec) {
    exec.for_each_row(g, dim * PANEL, |blk, rows| {
        let a0 = blk * PANEL;
        let nrows = rows.len() / dim;
        for b0 in (0..a0 + nrows).step_by(PANEL) {
            for r in 0..nrows {
                let a = a0 + r;
                let ta = &tile[a * t..(a + 1) * t];
                let grow = &mut rows[r * dim..(r + 1) * dim];
                for b in b0..(b0 + PANEL).min(a + 1) {
                    grow[b] += dot(ta, &tile[b * t..(b + 1) * t]);
                }
            }
        }
    });
}

fn mirror_lower(g: &mut [f64], dim: usize) {
    for a in 0..dim {
        for b in 0..a {
            g[b * dim + a] = g[a * dim + b];
        }
    }
}

/// `AᵀB` for `A` (`n x k`, f32) and `B` (`n x c`). Zero entries of `B` are
/// skipped, which makes one-hot targets cost `O(nk)`.
pub fn transpose_mul(a: &DenseMatrix<f32>, b: &DenseMatrix<f64>, exec: Exec) -> DenseMatrix<f64> {
    let (n, k) = a.shape();
    let c = b.cols();
    assert_eq!(n, b.rows(), "transpose_mul: row counts differ");
    let nonzero: Vec<Vec<(usize, f64)>> = b
        .row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect()
        })
        .collect();
    let mut out = vec![0.0f64; k * c];
    let rows_per_block = 64;
    exec.for_each_row(&mut out, rows_per_block * c, |blk, chunk| {
        let k0 = blk * rows_per_block;
        let kb = chunk.len() / c.max(1);
        for (i, nz) in nonzero.iter().enumerate() {
            let arow = &a.row(i)[k0..k0 + kb];
            for (r, &av) in arow.iter().enumerate() {
                let av = av as f64;
                let orow = &mut chunk[r * c..(r + 1) * c];
                for &(j, bv) in nz {
                    orow[j] += av * bv;
                }
            }
        }
    });
    DenseMatrix::new(k, c, out).expect("k x c buffer")
}

/// `A W` for `A` (`m x k`, f32) and `W` (`k x c`, f64).
pub fn mul(a: &DenseMatrix<f32>, w: &DenseMatrix<f64>, exec: Exec) -> DenseMatrix<f64> {
    let (m, k) = a.shape();
    let c = w.cols();
    assert_eq!(k, w.rows(), "mul: inner dimensions differ");
    let mut out = vec![0.0f64; m * c];
    exec.for_each_row(&mut out, c, |i, orow| {
        for (kk, &av) in a.row(i).iter().enumerate() {
            if av != 0.0 {
                axpy(av as f64, w.row(kk), orow);
            }
        }
    });
    DenseMatrix::new(m, c, out).expect("m x c buffer")
}

/// Failed pivot position of a Cholesky factorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotPositiveDefinite(pub usize);

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    // row-major, lower triangle holds L, upper triangle is zero
    factor: Vec<f64>,
}

impl Cholesky {
    /// Factors `a` (only the lower triangle is read). A pivot at or below
    /// `n * eps * max(diag)` counts as a failure, which catches numerically
    /// rank-deficient systems.
    pub fn factor(a: DenseMatrix<f64>, exec: Exec) -> Result<Self, NotPositiveDefinite> {
        let (n, n2) = a.shape();
        assert_eq!(n, n2, "Cholesky of a non-square matrix");
        let mut f = a.into_vec();
        let max_diag = (0..n).map(|i| f[i * n + i]).fold(0.0f64, f64::max);
        let tol = n as f64 * f64::EPSILON * max_diag;

        for k0 in (0..n).step_by(PANEL) {
            let k1 = (k0 + PANEL).min(n);
            factor_diagonal_block(&mut f, n, k0, k1, tol)?;

            let (head, tail) = f.split_at_mut(k1 * n);
            let head: &[f64] = head;
            // panel below the diagonal block: L21 = A21 L11^-T
            exec.for_each_row(tail, n, |_, row| {
                for j in k0..k1 {
                    let ljj = head[j * n + j];
                    let s = dot(&row[k0..j], &head[j * n + k0..j * n + j]);
                    row[j] = (row[j] - s) / ljj;
                }
            });

            // trailing update A22 -= L21 L21^T on the lower triangle
            let rows_below = n - k1;
            if rows_below == 0 {
                break;
            }
            let w = k1 - k0;
            let mut panel = Vec::with_capacity(rows_below * w);
            for r in 0..rows_below {
                panel.extend_from_slice(&tail[r * n + k0..r * n + k1]);
            }
            let panel = &panel;
            exec.for_each_row(tail, n * PANEL, |blk, rows| {
                let r0 = blk * PANEL;
                let nrows = rows.len() / n;
                for jb in (0..=r0).step_by(PANEL) {
                    for r in 0..nrows {
                        let i = r0 + r;
                        let pi = &panel[i * w..(i + 1) * w];
                        let row = &mut rows[r * n + k1..(r + 1) * n];
                        let jend = (jb + PANEL).min(i + 1);
                        for j in jb..jend {
                            row[j] -= dot(pi, &panel[j * w..(j + 1) * w]);
                        }
                    }
                }
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                f[i * n + j] = 0.0;
            }
        }
        Ok(Self { n, factor: f })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The lower-triangular factor `L` with `A = L Lᵀ`.
    pub fn lower(&self) -> DenseMatrix<f64> {
        DenseMatrix::new(self.n, self.n, self.factor.clone()).expect("n x n buffer")
    }

    /// Solves `A X = B` in place for every column of `b` (`n x c`).
    pub fn solve_in_place(&self, b: &mut DenseMatrix<f64>, exec: Exec) {
        let n = self.n;
        assert_eq!(b.rows(), n, "solve: right-hand side has wrong row count");
        let c = b.cols();
        if c == 0 || n == 0 {
            return;
        }
        let groups = c.div_ceil(RHS_GROUP);
        let solved: Vec<Vec<f64>> = exec.map_range(groups, |g| {
            let c0 = g * RHS_GROUP;
            let w = RHS_GROUP.min(c - c0);
            let mut x = Vec::with_capacity(n * w);
            for i in 0..n {
                x.extend_from_slice(&b.row(i)[c0..c0 + w]);
            }
            self.forward_backward(&mut x, w);
            x
        });
        for (g, x) in solved.iter().enumerate() {
            let c0 = g * RHS_GROUP;
            let w = RHS_GROUP.min(c - c0);
            for i in 0..n {
                b.row_mut(i)[c0..c0 + w].copy_from_slice(&x[i * w..(i + 1) * w]);
            }
        }
    }

    /// `x` is `n x w`, row-major.
    fn forward_backward(&self, x: &mut [f64], w: usize) {
        let n = self.n;
        let l = &self.factor;
        // L y = b
        for i in 0..n {
            let (done, rest) = x.split_at_mut(i * w);
            let xi = &mut rest[..w];
            let lrow = &l[i * n..i * n + i];
            for (p, &lip) in lrow.iter().enumerate() {
                if lip != 0.0 {
                    axpy(-lip, &done[p * w..(p + 1) * w], xi);
                }
            }
            let d = l[i * n + i];
            xi.iter_mut().for_each(|v| *v /= d);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let (before, rest) = x.split_at_mut(i * w);
            let xi = &mut rest[..w];
            let d = l[i * n + i];
            xi.iter_mut().for_each(|v| *v /= d);
            let lrow = &l[i * n..i * n + i];
            for (p, &lip) in lrow.iter().enumerate() {
                if lip != 0.0 {
                    axpy(-lip, xi, &mut before[p * w..(p + 1) * w]);
                }
            }
        }
    }
}

fn factor_diagonal_block(
    f: &mut [f64],
    n: usize,
    k0: usize,
    k1: usize,
    tol: f64,
) -> Result<(), NotPositiveDefinite> {
    for j in k0..k1 {
        let rj = &f[j * n + k0..j * n + j];
        let d = f[j * n + j] - dot(rj, rj);
        if !d.is_finite() || d <= tol {
            return Err(NotPositiveDefinite(j));
        }
        let ljj = d.sqrt();
        f[j * n + j] = ljj;
        for i in j + 1..k1 {
            let s = dot(&f[i * n + k0..i * n + j], &f[j * n + k0..j * n + j]);
            f[i * n + j] = (f[i * n + j] - s) / ljj;
        }
    }
    Ok(())
}

/// Adds `value` to the diagonal of a square matrix.
pub fn add_diagonal(m: &mut DenseMatrix<f64>, value: f64) {
    let n = m.rows();
    for i in 0..n {
        let v = m.get(i, i);
        m.set(i, i, v + value);
    }
}

pub fn trace(m: &DenseMatrix<f64>) -> f64 {
    (0..m.rows().min(m.cols())).map(|i| m.get(i, i)).sum()
}
