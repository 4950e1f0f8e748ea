//! Dense complex tensors: contraction, truncated SVD splits and the matrix
//! exponential.
//!
//! Storage is row-major: for shape `[d0, d1, .., dn]` the last axis varies
//! fastest. Every operator in the crate that acts on several sites is stored
//! as a square matrix whose row and column multi-indices follow this same
//! convention, in chain order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![ZERO; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            shape: vec![],
            data: vec![z],
        }
    }

    /// Vector with a single unit entry.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut t = Self::zeros(&[n]);
        t.data[k] = ONE;
        t
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut t = Self::zeros(&[n, n]);
        for (i, &d) in diag.iter().enumerate() {
            t.data[i * n + i] = d;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        strides
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        let strides = Self::strides(&self.shape);
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    pub fn set(&mut self, idx: &[usize], z: C64) {
        let strides = Self::strides(&self.shape);
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[off] = z;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Reorders axes so that new axis `k` is old axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let n = self.rank();
        if axes.len() != n {
            return Err(Error::Dimension(format!(
                "permutation {axes:?} does not match rank {n}"
            )));
        }
        let mut seen = vec![false; n];
        for &a in axes {
            if a >= n || seen[a] {
                return Err(Error::Validation(format!("invalid permutation {axes:?}")));
            }
            seen[a] = true;
        }
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return Ok(self.clone());
        }
        let old_strides = Self::strides(&self.shape);
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; n];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            for ax in (0..n).rev() {
                idx[ax] += 1;
                off += src_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                off -= src_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * a).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "cannot add shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn square_dim(&self) -> Result<usize> {
        match self.shape.as_slice() {
            [r, c] if r == c => Ok(*r),
            s => Err(Error::Dimension(format!("expected a square matrix, got shape {s:?}"))),
        }
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, &[1], other, &[0])
    }

    /// Conjugate transpose of a rank-2 tensor.
    pub fn adjoint(&self) -> Result<Self> {
        match self.shape.as_slice() {
            [r, c] => Ok(Self {
                shape: vec![*c, *r],
                data: linalg::adjoint(&self.data, *r, *c),
            }),
            s => Err(Error::Dimension(format!("adjoint of non-matrix shape {s:?}"))),
        }
    }

    /// Kronecker product of two matrices; `self` is the slow index.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let (&[r1, c1], &[r2, c2]) = (self.shape.as_slice(), other.shape.as_slice()) else {
            return Err(Error::Dimension("kron needs two matrices".into()));
        };
        let (rows, cols) = (r1 * r2, c1 * c2);
        let mut data = vec![ZERO; rows * cols];
        for i1 in 0..r1 {
            for j1 in 0..c1 {
                let a = self.data[i1 * c1 + j1];
                if a == ZERO {
                    continue;
                }
                for i2 in 0..r2 {
                    for j2 in 0..c2 {
                        data[(i1 * r2 + i2) * cols + j1 * c2 + j2] = a * other.data[i2 * c2 + j2];
                    }
                }
            }
        }
        Ok(Self {
            shape: vec![rows, cols],
            data,
        })
    }

    pub fn trace(&self) -> Result<C64> {
        let n = self.square_dim()?;
        Ok((0..n).map(|i| self.data[i * n + i]).sum())
    }

    /// Applies a matrix to a vector.
    pub fn apply(&self, v: &Self) -> Result<Self> {
        contract(self, &[1], v, &[0])
    }

    /// `max |A - A^dagger|`.
    pub fn hermiticity_error(&self) -> Result<f64> {
        let n = self.square_dim()?;
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                err = err.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        Ok(err)
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_error(&self) -> Result<f64> {
        let n = self.square_dim()?;
        let prod = self.adjoint()?.matmul(self)?;
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                err = err.max((prod.data[i * n + j] - target).norm());
            }
        }
        Ok(err)
    }
}

/// Truncation rule applied after every SVD split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvdPolicy {
    /// Singular values below `cutoff * s_max` are dropped.
    pub cutoff: f64,
    pub max_bond: usize,
}

impl Default for SvdPolicy {
    fn default() -> Self {
        Self {
            cutoff: 1e-10,
            max_bond: 64,
        }
    }
}

impl SvdPolicy {
    pub fn new(cutoff: f64, max_bond: usize) -> Result<Self> {
        let p = Self { cutoff, max_bond };
        p.validate()?;
        Ok(p)
    }

    /// No truncation beyond exact zeros.
    pub fn exact() -> Self {
        Self {
            cutoff: 0.0,
            max_bond: 1 << 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::Validation(format!(
                "svd cutoff must lie in [0, 1), got {}",
                self.cutoff
            )));
        }
        if self.max_bond == 0 {
            return Err(Error::Validation("max_bond must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of singular values to keep from a nonincreasing list.
    pub fn keep(&self, s: &[f64]) -> usize {
        let Some(&smax) = s.first() else { return 1 };
        let thresh = self.cutoff * smax;
        let mut k = s.iter().take_while(|&&x| x > thresh && x > 0.0).count();
        if self.cutoff == 0.0 {
            // keep numerically nonzero values only
            k = s.iter().take_while(|&&x| x > smax * 1e-15 && x > 0.0).count();
        }
        k.clamp(1, self.max_bond.min(s.len()).max(1))
    }
}

/// Sums over paired axes. The result's axes are the free axes of `a`
/// followed by the free axes of `b`, each in their original order.
pub fn contract(
    a: &ComplexTensor,
    axes_a: &[usize],
    b: &ComplexTensor,
    axes_b: &[usize],
) -> Result<ComplexTensor> {
    if axes_a.len() != axes_b.len() {
        return Err(Error::Dimension(format!(
            "contracting {} axes of a against {} axes of b",
            axes_a.len(),
            axes_b.len()
        )));
    }
    check_axes(axes_a, a.rank())?;
    check_axes(axes_b, b.rank())?;
    for (&i, &j) in axes_a.iter().zip(axes_b) {
        if a.shape[i] != b.shape[j] {
            return Err(Error::AxisMismatch {
                axis_a: i,
                axis_b: j,
                extent_a: a.shape[i],
                extent_b: b.shape[j],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|x| !axes_a.contains(x)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|x| !axes_b.contains(x)).collect();
    let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
    let perm_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
    let ap = a.permute(&perm_a)?;
    let bp = b.permute(&perm_b)?;
    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = axes_a.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let data = linalg::matmul(&ap.data, m, k, &bp.data, n);
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(ComplexTensor { shape, data })
}

fn check_axes(axes: &[usize], rank: usize) -> Result<()> {
    for (i, &x) in axes.iter().enumerate() {
        if x >= rank {
            return Err(Error::OutOfRange { index: x, len: rank });
        }
        if axes[..i].contains(&x) {
            return Err(Error::Validation(format!("duplicate axis {x} in {axes:?}")));
        }
    }
    Ok(())
}

/// Result of [`svd_split`]: `t ≈ left · diag(singular_values) · right`.
#[derive(Clone, Debug)]
pub struct SvdSplit {
    /// Shape: left axes of `t`, then the new bond.
    pub left: ComplexTensor,
    pub singular_values: Vec<f64>,
    /// Shape: the new bond, then the remaining axes of `t` in order.
    pub right: ComplexTensor,
    /// Sum of squared dropped singular values.
    pub discarded_weight: f64,
}

pub fn svd_split(t: &ComplexTensor, left_axes: &[usize], policy: &SvdPolicy) -> Result<SvdSplit> {
    policy.validate()?;
    check_axes(left_axes, t.rank())?;
    if left_axes.is_empty() || left_axes.len() >= t.rank() {
        return Err(Error::Validation(format!(
            "left axes {left_axes:?} must be a nonempty proper subset of {} axes",
            t.rank()
        )));
    }
    let right_axes: Vec<usize> = (0..t.rank()).filter(|x| !left_axes.contains(x)).collect();
    let perm: Vec<usize> = left_axes.iter().chain(&right_axes).copied().collect();
    let tp = t.permute(&perm)?;
    let rows: usize = left_axes.iter().map(|&i| t.shape[i]).product();
    let cols: usize = right_axes.iter().map(|&i| t.shape[i]).product();
    let mat = truncated_svd(&tp.data, rows, cols, policy)?;
    let chi = mat.s.len();
    let mut lshape: Vec<usize> = left_axes.iter().map(|&i| t.shape[i]).collect();
    lshape.push(chi);
    let mut rshape = vec![chi];
    rshape.extend(right_axes.iter().map(|&i| t.shape[i]));
    Ok(SvdSplit {
        left: ComplexTensor::new(lshape, mat.u)?,
        singular_values: mat.s,
        right: ComplexTensor::new(rshape, mat.vh)?,
        discarded_weight: mat.discarded,
    })
}

pub(crate) struct TruncatedSvd {
    pub u: Vec<C64>,
    pub s: Vec<f64>,
    pub vh: Vec<C64>,
    pub discarded: f64,
}

/// SVD of a row-major matrix truncated by `policy`.
pub(crate) fn truncated_svd(
    a: &[C64],
    rows: usize,
    cols: usize,
    policy: &SvdPolicy,
) -> Result<TruncatedSvd> {
    let full = linalg::svd(a, rows, cols)?;
    let k = full.rank;
    let keep = policy.keep(&full.s);
    let discarded: f64 = full.s[keep..].iter().map(|x| x * x).sum();
    let mut u = Vec::with_capacity(rows * keep);
    for i in 0..rows {
        u.extend_from_slice(&full.u[i * k..i * k + keep]);
    }
    let vh = full.vh[..keep * cols].to_vec();
    let mut s = full.s;
    s.truncate(keep);
    Ok(TruncatedSvd {
        u,
        s,
        vh,
        discarded,
    })
}

// Padé coefficients and 1-norm thresholds for degrees 3, 5, 7, 9 and 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068,
    5.371920351148152,
];

fn one_norm(a: &[C64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn lin_comb(terms: &[(f64, &[C64])], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for &(c, m) in terms {
        if c == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(m) {
            *o += x * c;
        }
    }
    out
}

fn add_identity(m: &mut [C64], n: usize, c: f64) {
    for i in 0..n {
        m[i * n + i] += c;
    }
}

/// `exp(m)` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exponential(m: &ComplexTensor) -> Result<ComplexTensor> {
    let n = m.square_dim()?;
    let a = m.data();
    let norm = one_norm(a, n);
    if norm == 0.0 {
        return Ok(ComplexTensor::identity(n));
    }
    let mm = |x: &[C64], y: &[C64]| linalg::matmul(x, n, n, y, n);

    let (u, v, squarings) = if norm <= THETA[3] {
        let a2 = mm(a, a);
        let (coef, powers): (&[f64], Vec<Vec<C64>>) = if norm <= THETA[0] {
            (&PADE3, vec![a2])
        } else if norm <= THETA[1] {
            let a4 = mm(&a2, &a2);
            (&PADE5, vec![a2, a4])
        } else if norm <= THETA[2] {
            let a4 = mm(&a2, &a2);
            let a6 = mm(&a4, &a2);
            (&PADE7, vec![a2, a4, a6])
        } else {
            let a4 = mm(&a2, &a2);
            let a6 = mm(&a4, &a2);
            let a8 = mm(&a6, &a2);
            (&PADE9, vec![a2, a4, a6, a8])
        };
        let mut odd: Vec<(f64, &[C64])> = Vec::new();
        let mut even: Vec<(f64, &[C64])> = Vec::new();
        for (k, p) in powers.iter().enumerate() {
            odd.push((coef[2 * k + 3], p));
            even.push((coef[2 * k + 2], p));
        }
        let mut inner = lin_comb(&odd, n);
        add_identity(&mut inner, n, coef[1]);
        let u = mm(a, &inner);
        let mut v = lin_comb(&even, n);
        add_identity(&mut v, n, coef[0]);
        (u, v, 0u32)
    } else {
        let s = (norm / THETA[4]).log2().ceil().max(0.0) as u32;
        let scale = 0.5f64.powi(s as i32);
        let a1: Vec<C64> = a.iter().map(|z| z * scale).collect();
        let b = &PADE13;
        let a2 = mm(&a1, &a1);
        let a4 = mm(&a2, &a2);
        let a6 = mm(&a4, &a2);
        let w1 = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
        let mut w2 = lin_comb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2)], n);
        add_identity(&mut w2, n, b[1]);
        let z1 = lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
        let mut z2 = lin_comb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2)], n);
        add_identity(&mut z2, n, b[0]);
        let w = lin_comb(&[(1.0, &mm(&a6, &w1)), (1.0, &w2)], n);
        let u = mm(&a1, &w);
        let v = lin_comb(&[(1.0, &mm(&a6, &z1)), (1.0, &z2)], n);
        (u, v, s)
    };
    // (v - u) r = (v + u)
    let p: Vec<C64> = v.iter().zip(&u).map(|(x, y)| x + y).collect();
    let q: Vec<C64> = v.iter().zip(&u).map(|(x, y)| x - y).collect();
    let mut r = linalg::solve(&q, n, &p, n)?;
    for _ in 0..squarings {
        r = mm(&r, &r);
    }
    ComplexTensor::new(vec![n, n], r)
}

/// Truncated Taylor series `sum_{k<=order} m^k / k!`.
pub fn taylor_exponential(m: &ComplexTensor, order: usize) -> Result<ComplexTensor> {
    let n = m.square_dim()?;
    let mut term = ComplexTensor::identity(n);
    let mut acc = term.clone();
    for k in 1..=order {
        term = term.matmul(m)?.scale(C64::new(1.0 / k as f64, 0.0));
        acc = acc.add(&term)?;
    }
    Ok(acc)
}
