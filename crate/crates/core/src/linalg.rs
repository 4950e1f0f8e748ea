//! Row-major dense kernels backed by faer.
//!
//! Everything in the crate stores matrices as row-major `Vec<C64>`; these
//! helpers wrap faer views around those buffers and copy results back out.

use faer::{linalg::solvers::Solve, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::C64;

fn view(data: &[C64], rows: usize, cols: usize) -> MatRef<'_, C64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

fn to_row_major(m: MatRef<'_, C64>) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `a (m x k) * b (k x n)`.
pub fn matmul(a: &[C64], m: usize, k: usize, b: &[C64], n: usize) -> Vec<C64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    if m * k * n <= 512 {
        let mut out = vec![C64::new(0.0, 0.0); m * n];
        for i in 0..m {
            for l in 0..k {
                let x = a[i * k + l];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &b[l * n..(l + 1) * n];
                for (o, y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        return out;
    }
    let prod: Mat<C64> = view(a, m, k) * view(b, k, n);
    to_row_major(prod.as_ref())
}

/// Conjugate transpose of an `r x c` matrix.
pub fn adjoint(a: &[C64], r: usize, c: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j].conj();
        }
    }
    out
}

pub struct ThinSvd {
    pub u: Vec<C64>,
    pub s: Vec<f64>,
    pub vh: Vec<C64>,
    pub rank: usize,
}

/// Thin SVD, singular values in nonincreasing order.
pub fn svd(a: &[C64], rows: usize, cols: usize) -> Result<ThinSvd> {
    let m = view(a, rows, cols);
    let dec = m.thin_svd().map_err(|_| Error::Numerical {
        what: "singular value decomposition",
        rows,
        cols,
    })?;
    let k = rows.min(cols);
    let s: Vec<f64> = dec.S().column_vector().iter().map(|x| x.re).collect();
    let u = to_row_major(dec.U());
    let v = dec.V();
    let mut vh = Vec::with_capacity(k * cols);
    for i in 0..k {
        for j in 0..cols {
            vh.push(v[(j, i)].conj());
        }
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            what: "singular value decomposition",
            rows,
            cols,
        });
    }
    Ok(ThinSvd { u, s, vh, rank: k })
}

/// Thin QR: `a = q r` with `q` (rows x k) isometric and `r` (k x cols).
pub fn qr(a: &[C64], rows: usize, cols: usize) -> (Vec<C64>, Vec<C64>, usize) {
    let m = view(a, rows, cols);
    let dec = m.qr();
    let k = rows.min(cols);
    let q = dec.compute_thin_Q();
    let r = dec.thin_R();
    let q = to_row_major(q.as_ref());
    let mut rr = Vec::with_capacity(k * cols);
    for i in 0..k {
        for j in 0..cols {
            rr.push(r[(i, j)]);
        }
    }
    (q, rr, k)
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues ascending; the
/// returned vectors are the columns of a row-major `n x n` matrix.
pub fn eigh(a: &[C64], n: usize) -> Result<(Vec<f64>, Vec<C64>)> {
    let m = view(a, n, n);
    let dec = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Numerical {
            what: "hermitian eigendecomposition",
            rows: n,
            cols: n,
        })?;
    let vals = dec.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, to_row_major(dec.U())))
}

/// Solves `a x = b` for square `a` (n x n) and `b` (n x k).
pub fn solve(a: &[C64], n: usize, b: &[C64], k: usize) -> Result<Vec<C64>> {
    let lu = view(a, n, n).partial_piv_lu();
    let x = lu.solve(view(b, n, k));
    let out = to_row_major(x.as_ref());
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical {
            what: "linear solve",
            rows: n,
            cols: n,
        });
    }
    Ok(out)
}
