//! Matrix product state of the emitter-cavity system plus waveguide time bins.
//!
//! Each site tensor has axes `[left bond, physical, right bond]`. The chain is
//! kept in mixed canonical form around `center`: sites to its left are left
//! isometries, sites to its right are right isometries. A chain may have a
//! left boundary bond larger than one after released bins have been dropped
//! with [`MpsState::drop_leading`]; the dropped sites were isometries, so the
//! boundary environment is the identity.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{truncated_svd, ComplexTensor, SvdPolicy};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteLabel {
    System,
    /// Time bin with ordinal `k`; bins with negative ordinals are the loop
    /// contents present before the first step.
    Bin(i64),
}

#[derive(Clone, Debug)]
pub struct Site {
    pub label: SiteLabel,
    pub tensor: ComplexTensor,
}

impl Site {
    fn dims(&self) -> (usize, usize, usize) {
        let s = self.tensor.shape();
        (s[0], s[1], s[2])
    }
}

#[derive(Clone, Debug)]
pub struct MpsState {
    sites: Vec<Site>,
    center: usize,
    policy: SvdPolicy,
    discarded_weight: f64,
    max_bond_seen: usize,
}

fn product_site(label: SiteLabel, v: &[C64]) -> Site {
    let tensor = ComplexTensor::new(vec![1, v.len(), 1], v.to_vec()).expect("product site shape");
    Site { label, tensor }
}

impl MpsState {
    /// Product state with `n_bins` vacuum bins (ordinals `-n_bins..-1`)
    /// followed by the system site, which holds the orthogonality center.
    pub fn init_state(
        system_init: &ComplexTensor,
        n_bins: usize,
        d_bin: usize,
        policy: SvdPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        if system_init.rank() != 1 {
            return Err(Error::Validation("system state must be a vector".into()));
        }
        let norm = system_init.frobenius_norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "system state must be normalised, got norm {norm}"
            )));
        }
        if n_bins == 0 {
            return Err(Error::Validation("need at least one bin".into()));
        }
        if d_bin < 2 {
            return Err(Error::Validation(format!("bin cutoff {d_bin} below 2")));
        }
        let vac = ComplexTensor::basis(d_bin, 0);
        let mut sites: Vec<Site> = (0..n_bins)
            .map(|i| product_site(SiteLabel::Bin(i as i64 - n_bins as i64), vac.data()))
            .collect();
        sites.push(product_site(SiteLabel::System, system_init.data()));
        Ok(Self {
            center: sites.len() - 1,
            sites,
            policy,
            discarded_weight: 0.0,
            max_bond_seen: 1,
        })
    }

    /// Product state from explicit site vectors; vectors need not be
    /// normalised. The center is placed at `center`.
    pub fn from_product(
        sites: Vec<(SiteLabel, ComplexTensor)>,
        center: usize,
        policy: SvdPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        if center >= sites.len() {
            return Err(Error::OutOfRange {
                index: center,
                len: sites.len(),
            });
        }
        let mut out = Vec::with_capacity(sites.len());
        for (i, (label, v)) in sites.into_iter().enumerate() {
            if v.rank() != 1 {
                return Err(Error::Validation("site vectors must be rank one".into()));
            }
            let mut site = product_site(label, v.data());
            if i != center {
                let n = v.frobenius_norm();
                if n == 0.0 {
                    return Err(Error::Validation("zero site vector".into()));
                }
                site.tensor = site.tensor.scale(C64::new(1.0 / n, 0.0));
            }
            out.push(site);
        }
        Ok(Self {
            sites: out,
            center,
            policy,
            discarded_weight: 0.0,
            max_bond_seen: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn policy(&self) -> &SvdPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: SvdPolicy) {
        self.policy = policy;
    }

    /// Total squared singular-value weight dropped so far.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn max_bond_seen(&self) -> usize {
        self.max_bond_seen
    }

    pub fn label(&self, i: usize) -> SiteLabel {
        self.sites[i].label
    }

    pub fn position_of(&self, label: SiteLabel) -> Option<usize> {
        self.sites.iter().position(|s| s.label == label)
    }

    pub fn physical_dim(&self, i: usize) -> usize {
        self.sites[i].tensor.shape()[1]
    }

    /// Bond extents, including both boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut out = vec![self.sites[0].tensor.shape()[0]];
        out.extend(self.sites.iter().map(|s| s.tensor.shape()[2]));
        out
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.sites.len() {
            return Err(Error::OutOfRange {
                index: i,
                len: self.sites.len(),
            });
        }
        Ok(())
    }

    /// Appends a bin in its vacuum state at the right end of the chain.
    pub fn push_vacuum_bin(&mut self, label: SiteLabel, d_bin: usize) -> Result<()> {
        let r = self.sites.last().map(|s| s.tensor.shape()[2]).unwrap_or(1);
        if r != 1 {
            return Err(Error::Dimension(format!(
                "right boundary bond is {r}, cannot append a product site"
            )));
        }
        self.sites
            .push(product_site(label, ComplexTensor::basis(d_bin, 0).data()));
        Ok(())
    }

    /// Removes the first `n` sites. They must lie left of the center.
    pub fn drop_leading(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if n > self.center {
            return Err(Error::Validation(format!(
                "cannot drop {n} sites with the center at {}",
                self.center
            )));
        }
        self.sites.drain(..n);
        self.center -= n;
        Ok(())
    }

    /// Moves the orthogonality center with QR sweeps (no truncation).
    pub fn move_center(&mut self, to: usize) -> Result<()> {
        self.check_index(to)?;
        while self.center < to {
            let i = self.center;
            let (l, p, r) = self.sites[i].dims();
            let (q, rr, k) = linalg::qr(self.sites[i].tensor.data(), l * p, r);
            self.sites[i].tensor = ComplexTensor::new(vec![l, p, k], q)?;
            let (_, p2, r2) = self.sites[i + 1].dims();
            let next = linalg::matmul(&rr, k, r, self.sites[i + 1].tensor.data(), p2 * r2);
            self.sites[i + 1].tensor = ComplexTensor::new(vec![k, p2, r2], next)?;
            self.center += 1;
        }
        while self.center > to {
            let i = self.center;
            let (l, p, r) = self.sites[i].dims();
            // LQ via QR of the adjoint
            let adj = linalg::adjoint(self.sites[i].tensor.data(), l, p * r);
            let (q, rr, k) = linalg::qr(&adj, p * r, l);
            self.sites[i].tensor = ComplexTensor::new(vec![k, p, r], linalg::adjoint(&q, p * r, k))?;
            let lmat = linalg::adjoint(&rr, k, l);
            let (l0, p0, _) = self.sites[i - 1].dims();
            let prev = linalg::matmul(self.sites[i - 1].tensor.data(), l0 * p0, l, &lmat, k);
            self.sites[i - 1].tensor = ComplexTensor::new(vec![l0, p0, k], prev)?;
            self.center -= 1;
        }
        Ok(())
    }

    /// Merges consecutive sites `first..first+n` into `[l, P, r]` with
    /// `P` the product of their physical extents (row-major, chain order).
    fn merge(&self, first: usize, n: usize) -> (Vec<C64>, usize, usize, usize) {
        let (l, p0, mut r) = self.sites[first].dims();
        let mut data = self.sites[first].tensor.data().to_vec();
        let mut p = p0;
        for j in first + 1..first + n {
            let (_, pj, rj) = self.sites[j].dims();
            data = linalg::matmul(&data, l * p, r, self.sites[j].tensor.data(), pj * rj);
            p *= pj;
            r = rj;
        }
        (data, l, p, r)
    }

    /// Splits a merged block `[l, p_0 .. p_{n-1}, r]` back into sites
    /// `first..first+n`, leaving the center at `first + center_rel`.
    fn split_into(
        &mut self,
        theta: Vec<C64>,
        first: usize,
        dims: &[usize],
        l: usize,
        r: usize,
        center_rel: usize,
    ) -> Result<f64> {
        let n = dims.len();
        let mut discarded = 0.0;
        let mut rest = theta;
        let mut lb = l;
        let mut rest_p: usize = dims.iter().product();
        // left-to-right part
        for (j, &d) in dims.iter().enumerate().take(center_rel) {
            rest_p /= d;
            let svd = truncated_svd(&rest, lb * d, rest_p * r, &self.policy)?;
            let k = svd.s.len();
            discarded += svd.discarded;
            self.sites[first + j].tensor = ComplexTensor::new(vec![lb, d, k], svd.u)?;
            let mut sv = svd.vh;
            for (row, s) in sv.chunks_mut(rest_p * r).zip(&svd.s) {
                for z in row {
                    *z *= s;
                }
            }
            rest = sv;
            lb = k;
        }
        // right-to-left part; `rest` is [lb, dims[center_rel..], rb]
        let mut rb = r;
        for j in (center_rel + 1..n).rev() {
            let d = dims[j];
            rest_p /= d;
            let svd = truncated_svd(&rest, lb * rest_p, d * rb, &self.policy)?;
            let k = svd.s.len();
            discarded += svd.discarded;
            self.sites[first + j].tensor = ComplexTensor::new(vec![k, d, rb], svd.vh)?;
            let rows = lb * rest_p;
            let mut us = svd.u;
            for row in us.chunks_mut(k) {
                for (z, s) in row.iter_mut().zip(&svd.s) {
                    *z *= s;
                }
            }
            debug_assert_eq!(us.len(), rows * k);
            rest = us;
            rb = k;
        }
        self.sites[first + center_rel].tensor =
            ComplexTensor::new(vec![lb, dims[center_rel], rb], rest)?;
        self.center = first + center_rel;
        self.discarded_weight += discarded;
        self.max_bond_seen = self.max_bond_seen.max(
            self.sites[first..first + n]
                .iter()
                .map(|s| s.tensor.shape()[2].max(s.tensor.shape()[0]))
                .max()
                .unwrap_or(1),
        );
        Ok(discarded)
    }

    fn check_block(&self, sites: &[usize]) -> Result<usize> {
        let Some(&first) = sites.first() else {
            return Err(Error::Validation("empty site list".into()));
        };
        if !(2..=3).contains(&sites.len()) {
            return Err(Error::Validation(format!(
                "gates act on 2 or 3 sites, got {}",
                sites.len()
            )));
        }
        for (k, &s) in sites.iter().enumerate() {
            self.check_index(s)?;
            if s != first + k {
                return Err(Error::Validation(format!("sites {sites:?} are not contiguous")));
            }
        }
        if !sites.contains(&self.center) {
            return Err(Error::Validation(format!(
                "orthogonality center {} outside gate sites {sites:?}",
                self.center
            )));
        }
        Ok(first)
    }

    /// Applies a unitary on contiguous sites and re-splits the block. The
    /// center stays where it was. Returns the discarded weight of this call.
    pub fn apply_gate(&mut self, u: &ComplexTensor, sites: &[usize]) -> Result<f64> {
        let c = self.center;
        self.apply_gate_with_center(u, sites, c)
    }

    /// As [`apply_gate`](Self::apply_gate), leaving the center on `center_after`.
    pub fn apply_gate_with_center(
        &mut self,
        u: &ComplexTensor,
        sites: &[usize],
        center_after: usize,
    ) -> Result<f64> {
        let first = self.check_block(sites)?;
        if !sites.contains(&center_after) {
            return Err(Error::Validation(format!(
                "requested center {center_after} outside gate sites {sites:?}"
            )));
        }
        let dims: Vec<usize> = sites.iter().map(|&s| self.physical_dim(s)).collect();
        let p: usize = dims.iter().product();
        if u.shape() != [p, p] {
            return Err(Error::Dimension(format!(
                "gate shape {:?} does not match physical dimension {p}",
                u.shape()
            )));
        }
        let (theta, l, _, r) = self.merge(first, sites.len());
        // theta[l, p, r] -> [p, l*r], then u * that
        let mut tp = vec![ZERO; theta.len()];
        for a in 0..l {
            for q in 0..p {
                for b in 0..r {
                    tp[q * l * r + a * r + b] = theta[(a * p + q) * r + b];
                }
            }
        }
        let applied = linalg::matmul(u.data(), p, p, &tp, l * r);
        let mut back = vec![ZERO; theta.len()];
        for q in 0..p {
            for a in 0..l {
                for b in 0..r {
                    back[(a * p + q) * r + b] = applied[q * l * r + a * r + b];
                }
            }
        }
        self.split_into(back, first, &dims, l, r, center_after - first)
    }

    /// Exchanges sites `i` and `i + 1`. The center must be on one of them and
    /// moves with the site that carried it.
    pub fn swap_sites(&mut self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(i + 1)?;
        if self.center != i && self.center != i + 1 {
            return Err(Error::Validation(format!(
                "center {} not on swapped sites ({i}, {})",
                self.center,
                i + 1
            )));
        }
        let (theta, l, _, r) = self.merge(i, 2);
        let d1 = self.physical_dim(i);
        let d2 = self.physical_dim(i + 1);
        let mut swapped = vec![ZERO; theta.len()];
        for a in 0..l {
            for x in 0..d1 {
                for y in 0..d2 {
                    let src = ((a * d1 + x) * d2 + y) * r;
                    let dst = ((a * d2 + y) * d1 + x) * r;
                    swapped[dst..dst + r].copy_from_slice(&theta[src..src + r]);
                }
            }
        }
        let center_rel = if self.center == i { 1 } else { 0 };
        self.sites.swap(i, i + 1);
        self.split_into(swapped, i, &[d2, d1], l, r, center_rel)
    }

    /// Norm of the state, read from the center tensor.
    pub fn norm(&self) -> f64 {
        self.sites[self.center].tensor.frobenius_norm()
    }

    /// Norm from a full contraction of the chain, independent of the gauge.
    pub fn norm_full(&self) -> f64 {
        let lb = self.sites[0].tensor.shape()[0];
        let mut env = identity_env(lb);
        for site in &self.sites {
            env = transfer_left(&env, site, None);
        }
        let rb = self.sites.last().unwrap().tensor.shape()[2];
        (0..rb).map(|a| env[a * rb + a]).sum::<C64>().re.sqrt()
    }

    fn check_ops(&self, ops: &[(usize, &ComplexTensor)]) -> Result<()> {
        for (k, (s, op)) in ops.iter().enumerate() {
            self.check_index(*s)?;
            let d = self.physical_dim(*s);
            if op.shape() != [d, d] {
                return Err(Error::Dimension(format!(
                    "operator shape {:?} on site {s} with physical dimension {d}",
                    op.shape()
                )));
            }
            if ops[..k].iter().any(|(t, _)| t == s) {
                return Err(Error::Validation(format!("site {s} appears twice")));
            }
        }
        Ok(())
    }

    /// `<Psi| prod_k op_k |Psi>` for single-site operators on distinct sites.
    /// Only the window spanning the operators and the center is contracted.
    pub fn expectation(&self, ops: &[(usize, &ComplexTensor)]) -> Result<C64> {
        self.check_ops(ops)?;
        let lo = ops.iter().map(|o| o.0).chain([self.center]).min().unwrap();
        let hi = ops.iter().map(|o| o.0).chain([self.center]).max().unwrap();
        let lb = self.sites[lo].tensor.shape()[0];
        let mut env = identity_env(lb);
        for j in lo..=hi {
            let op = ops.iter().find(|o| o.0 == j).map(|o| o.1);
            env = transfer_left(&env, &self.sites[j], op);
        }
        let rb = self.sites[hi].tensor.shape()[2];
        Ok((0..rb).map(|a| env[a * rb + a]).sum())
    }

    /// Full-chain expectation value that does not rely on canonical form.
    pub fn expectation_full(&self, ops: &[(usize, &ComplexTensor)]) -> Result<C64> {
        self.check_ops(ops)?;
        let lb = self.sites[0].tensor.shape()[0];
        let mut env = identity_env(lb);
        for (j, site) in self.sites.iter().enumerate() {
            let op = ops.iter().find(|o| o.0 == j).map(|o| o.1);
            env = transfer_left(&env, site, op);
        }
        let rb = self.sites.last().unwrap().tensor.shape()[2];
        Ok((0..rb).map(|a| env[a * rb + a]).sum())
    }

    /// Contracts the chain into a dense amplitude vector (chain order,
    /// row-major). Requires both boundary bonds to be one.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        let lb = self.sites[0].tensor.shape()[0];
        let rb = self.sites.last().unwrap().tensor.shape()[2];
        if lb != 1 || rb != 1 {
            return Err(Error::Dimension("dense form needs unit boundary bonds".into()));
        }
        let (first_l, p0, r0) = self.sites[0].dims();
        let mut data = self.sites[0].tensor.data().to_vec();
        let mut rows = first_l * p0;
        let mut r = r0;
        for site in &self.sites[1..] {
            let (_, p, rn) = site.dims();
            data = linalg::matmul(&data, rows, r, site.tensor.data(), p * rn);
            rows *= p;
            r = rn;
        }
        Ok(data)
    }

    /// `max |sum_{l,p} conj(A) A - I|` for site `i` viewed as a left isometry.
    pub fn left_orthonormality_error(&self, i: usize) -> f64 {
        let (l, p, r) = self.sites[i].dims();
        let a = self.sites[i].tensor.data();
        let g = linalg::matmul(&linalg::adjoint(a, l * p, r), r, l * p, a, r);
        identity_error(&g, r)
    }

    /// `max |sum_{p,r} A conj(A) - I|` for site `i` viewed as a right isometry.
    pub fn right_orthonormality_error(&self, i: usize) -> f64 {
        let (l, p, r) = self.sites[i].dims();
        let a = self.sites[i].tensor.data();
        let g = linalg::matmul(a, l, p * r, &linalg::adjoint(a, l, p * r), l);
        identity_error(&g, l)
    }

    /// Largest deviation from mixed canonical form over the whole chain.
    pub fn canonical_error(&self) -> f64 {
        let left = (0..self.center).map(|i| self.left_orthonormality_error(i));
        let right = (self.center + 1..self.len()).map(|i| self.right_orthonormality_error(i));
        left.chain(right).fold(0.0, f64::max)
    }

    /// Von Neumann entropy (natural log) of every internal bond, computed on
    /// a copy of the state.
    pub fn bond_entropies(&self) -> Result<Vec<f64>> {
        let mut work = self.clone();
        work.move_center(0)?;
        let mut out = Vec::with_capacity(self.len().saturating_sub(1));
        for i in 0..work.len() - 1 {
            let (l, p, r) = work.sites[i].dims();
            let svd = linalg::svd(work.sites[i].tensor.data(), l * p, r)?;
            let norm2: f64 = svd.s.iter().map(|s| s * s).sum();
            let ent = svd
                .s
                .iter()
                .map(|s| s * s / norm2)
                .filter(|&w| w > 0.0)
                .map(|w| -w * w.ln())
                .sum();
            out.push(ent);
            work.move_center(i + 1)?;
        }
        Ok(out)
    }

    /// `<op_lag(i - p) op_base(i)>` for `p = 1..=max_lag`, with `i` at or
    /// left of the center. One left-moving sweep, `O(max_lag)` transfers.
    pub fn correlation_sweep(
        &self,
        base: usize,
        op_base: &ComplexTensor,
        op_lag: &ComplexTensor,
        max_lag: usize,
    ) -> Result<Vec<C64>> {
        self.check_index(base)?;
        if base > self.center {
            return Err(Error::Validation(format!(
                "base site {base} lies right of the center {}",
                self.center
            )));
        }
        if max_lag > base {
            return Err(Error::OutOfRange {
                index: max_lag,
                len: base,
            });
        }
        let rb = self.sites[self.center].tensor.shape()[2];
        let mut env = identity_env(rb);
        for j in (base + 1..=self.center).rev() {
            env = transfer_right(&env, &self.sites[j], None);
        }
        self.check_ops(&[(base, op_base)])?;
        env = transfer_right(&env, &self.sites[base], Some(op_base));
        let mut out = Vec::with_capacity(max_lag);
        for p in 1..=max_lag {
            let j = base - p;
            self.check_ops(&[(j, op_lag)])?;
            let closed = transfer_right(&env, &self.sites[j], Some(op_lag));
            let lb = self.sites[j].tensor.shape()[0];
            out.push((0..lb).map(|a| closed[a * lb + a]).sum());
            if p < max_lag {
                env = transfer_right(&env, &self.sites[j], None);
            }
        }
        Ok(out)
    }

    /// Writes a binary snapshot (format documented in the README).
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sites.len() as u64).to_le_bytes())?;
        w.write_all(&(self.center as u64).to_le_bytes())?;
        w.write_all(&self.policy.cutoff.to_le_bytes())?;
        w.write_all(&(self.policy.max_bond as u64).to_le_bytes())?;
        w.write_all(&self.discarded_weight.to_le_bytes())?;
        for site in &self.sites {
            let (kind, idx) = match site.label {
                SiteLabel::System => (0u8, 0i64),
                SiteLabel::Bin(k) => (1u8, k),
            };
            w.write_all(&[kind])?;
            w.write_all(&idx.to_le_bytes())?;
            for &d in site.tensor.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for z in site.tensor.data() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        fn bad(e: impl std::fmt::Display) -> Error {
            Error::Validation(format!("snapshot: {e}"))
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(bad)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8).map_err(bad)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u64_(&mut r)? as usize;
        let center = u64_(&mut r)? as usize;
        let cutoff = f64::from_bits(u64_(&mut r)?);
        let max_bond = u64_(&mut r)? as usize;
        let discarded_weight = f64::from_bits(u64_(&mut r)?);
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind).map_err(bad)?;
            let idx = u64_(&mut r)? as i64;
            let label = match kind[0] {
                0 => SiteLabel::System,
                1 => SiteLabel::Bin(idx),
                k => return Err(bad(format!("unknown site kind {k}"))),
            };
            let shape = vec![
                u64_(&mut r)? as usize,
                u64_(&mut r)? as usize,
                u64_(&mut r)? as usize,
            ];
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let re = f64::from_bits(u64_(&mut r)?);
                let im = f64::from_bits(u64_(&mut r)?);
                data.push(C64::new(re, im));
            }
            sites.push(Site {
                label,
                tensor: ComplexTensor::new(shape, data)?,
            });
        }
        let state = Self {
            max_bond_seen: sites.iter().map(|s| s.tensor.shape()[2]).max().unwrap_or(1),
            sites,
            center,
            policy: SvdPolicy::new(cutoff, max_bond)?,
            discarded_weight,
        };
        state.check_index(center)?;
        Ok(state)
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"JCFBMPS\0";
const SNAPSHOT_VERSION: u32 = 1;

fn identity_env(n: usize) -> Vec<C64> {
    let mut e = vec![ZERO; n * n];
    for i in 0..n {
        e[i * n + i] = C64::new(1.0, 0.0);
    }
    e
}

fn identity_error(g: &[C64], n: usize) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[i * n + j] - C64::new(t, 0.0)).norm());
        }
    }
    err
}

/// Applies `op` (d x d, acting as `op[p', p]`) to the physical axis of a
/// site tensor `[l, p, r]`.
pub(crate) fn apply_physical(a: &[C64], l: usize, p: usize, r: usize, op: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; a.len()];
    for x in 0..l {
        for q in 0..p {
            let dst = &mut out[(x * p + q) * r..(x * p + q + 1) * r];
            for s in 0..p {
                let o = op[q * p + s];
                if o == ZERO {
                    continue;
                }
                let src = &a[(x * p + s) * r..(x * p + s + 1) * r];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += o * v;
                }
            }
        }
    }
    out
}

/// Left environment update. `env[a, b]` has the bra bond first:
/// `env'[a', b'] = sum conj(A[a, p', a']) op[p', p] A[b, p, b'] env[a, b]`.
pub(crate) fn transfer_left(env: &[C64], site: &Site, op: Option<&ComplexTensor>) -> Vec<C64> {
    let (l, p, r) = site.dims();
    let a = site.tensor.data();
    let ket = match op {
        Some(o) => apply_physical(a, l, p, r, o.data()),
        None => a.to_vec(),
    };
    // x[a, (p r)] = env[a, b] ket[b, (p r)]
    let x = linalg::matmul(env, l, l, &ket, p * r);
    // env'[a', b'] = sum_{a p} conj(A)[(a p), a'] x[(a p), b']
    linalg::matmul(&linalg::adjoint(a, l * p, r), r, l * p, &x, r)
}

/// Right environment update with the same bra/ket convention:
/// `env'[a, b] = sum conj(A[a, p', a']) op[p', p] A[b, p, b'] env[a', b']`.
pub(crate) fn transfer_right(env: &[C64], site: &Site, op: Option<&ComplexTensor>) -> Vec<C64> {
    let (l, p, r) = site.dims();
    let a = site.tensor.data();
    let ket = match op {
        Some(o) => apply_physical(a, l, p, r, o.data()),
        None => a.to_vec(),
    };
    // y[(b p), a'] = ket[(b p), b'] env^T[b', a']
    let mut env_t = vec![ZERO; r * r];
    for i in 0..r {
        for j in 0..r {
            env_t[j * r + i] = env[i * r + j];
        }
    }
    let y = linalg::matmul(&ket, l * p, r, &env_t, r);
    // env'[a, b] = sum_{p a'} conj(A[a, p, a']) y[b, p, a']
    let bra = a.iter().map(|z| z.conj()).collect::<Vec<_>>();
    linalg::matmul(&bra, l, p * r, &linalg::adjoint(&y, l, p * r).iter().map(|z| z.conj()).collect::<Vec<_>>(), l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matrix_exponential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn number_op(d: usize) -> ComplexTensor {
        ComplexTensor::diagonal(&(0..d).map(|n| c(n as f64, 0.0)).collect::<Vec<_>>())
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> ComplexTensor {
        ComplexTensor::from_vec(
            (0..n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    fn random_unitary(rng: &mut impl Rng, n: usize) -> ComplexTensor {
        let a = ComplexTensor::new(
            vec![n, n],
            (0..n * n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let h = a.sub(&a.adjoint().unwrap()).unwrap();
        matrix_exponential(&h).unwrap()
    }

    /// Dense statevector with explicit per-site dimensions.
    struct Dense {
        dims: Vec<usize>,
        amp: Vec<C64>,
    }

    impl Dense {
        fn from_product(vs: &[ComplexTensor]) -> Self {
            let mut amp = vec![c(1.0, 0.0)];
            for v in vs {
                let mut next = Vec::with_capacity(amp.len() * v.len());
                for a in &amp {
                    for b in v.data() {
                        next.push(a * b);
                    }
                }
                amp = next;
            }
            Self {
                dims: vs.iter().map(|v| v.len()).collect(),
                amp,
            }
        }

        fn stride(&self, k: usize) -> usize {
            self.dims[k + 1..].iter().product()
        }

        fn decode(&self, idx: usize) -> Vec<usize> {
            self.dims
                .iter()
                .enumerate()
                .map(|(k, &d)| (idx / self.stride(k)) % d)
                .collect()
        }

        fn encode(&self, digits: &[usize]) -> usize {
            digits.iter().enumerate().map(|(k, &x)| x * self.stride(k)).sum()
        }

        fn apply(&mut self, u: &ComplexTensor, sites: &[usize]) {
            let p: usize = sites.iter().map(|&s| self.dims[s]).product();
            let mut out = vec![c(0.0, 0.0); self.amp.len()];
            for idx in 0..self.amp.len() {
                let digits = self.decode(idx);
                let mut col = 0;
                for &s in sites {
                    col = col * self.dims[s] + digits[s];
                }
                for row in 0..p {
                    let mut rem = row;
                    let mut nd = digits.clone();
                    for &s in sites.iter().rev() {
                        nd[s] = rem % self.dims[s];
                        rem /= self.dims[s];
                    }
                    out[self.encode(&nd)] += u.get(&[row, col]) * self.amp[idx];
                }
            }
            self.amp = out;
        }

        fn swap(&mut self, i: usize) {
            let mut nd = self.dims.clone();
            nd.swap(i, i + 1);
            let mut out = Dense {
                dims: nd,
                amp: vec![c(0.0, 0.0); self.amp.len()],
            };
            for idx in 0..self.amp.len() {
                let mut d = self.decode(idx);
                d.swap(i, i + 1);
                let j = out.encode(&d);
                out.amp[j] = self.amp[idx];
            }
            *self = out;
        }
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn ground_vacuum(n_fock: usize) -> ComplexTensor {
        ComplexTensor::basis(2 * (n_fock + 1), 0)
    }

    #[test]
    fn init_vacuum_chain() {
        let st = MpsState::init_state(&ground_vacuum(1), 100, 2, SvdPolicy::default()).unwrap();
        assert_eq!(st.len(), 101);
        assert!((st.norm() - 1.0).abs() < 1e-14);
        assert!((st.norm_full() - 1.0).abs() < 1e-14);
        assert!(st.bond_dims().iter().all(|&b| b == 1));
        assert_eq!(st.center(), 100);
        assert_eq!(st.label(100), SiteLabel::System);
        let n = number_op(2);
        for i in [0, 17, 99] {
            assert_eq!(st.expectation(&[(i, &n)]).unwrap(), c(0.0, 0.0));
        }
    }

    #[test]
    fn init_rejects_unnormalised() {
        let v = ComplexTensor::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(MpsState::init_state(&v, 3, 2, SvdPolicy::default()).is_err());
        assert!(MpsState::init_state(&ComplexTensor::basis(2, 0), 3, 1, SvdPolicy::default()).is_err());
    }

    fn random_product(rng: &mut impl Rng, dims: &[usize]) -> (MpsState, Dense) {
        let vs: Vec<ComplexTensor> = dims
            .iter()
            .map(|&d| {
                let v = random_vec(rng, d);
                v.scale(c(1.0 / v.frobenius_norm(), 0.0))
            })
            .collect();
        let labels = (0..dims.len()).map(|k| SiteLabel::Bin(k as i64));
        let st = MpsState::from_product(labels.zip(vs.clone()).collect(), 0, SvdPolicy::exact()).unwrap();
        (st, Dense::from_product(&vs))
    }

    /// Random entangled chain built by two-site gates.
    fn random_entangled(rng: &mut impl Rng, dims: &[usize]) -> (MpsState, Dense) {
        let (mut st, mut dense) = random_product(rng, dims);
        for sweep in 0..2 {
            for i in 0..dims.len() - 1 {
                let _ = sweep;
                let u = random_unitary(rng, dims[i] * dims[i + 1]);
                st.move_center(i).unwrap();
                st.apply_gate(&u, &[i, i + 1]).unwrap();
                dense.apply(&u, &[i, i + 1]);
            }
        }
        (st, dense)
    }

    #[test]
    fn identity_gate_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = [2, 3, 2, 2];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        st.move_center(1).unwrap();
        let n = number_op(3);
        let before = st.expectation(&[(1, &n)]).unwrap();
        let before2 = st.expectation_full(&[(3, &number_op(2))]).unwrap();
        st.apply_gate(&ComplexTensor::identity(6), &[1, 2]).unwrap();
        assert!((st.expectation(&[(1, &n)]).unwrap() - before).norm() < 1e-12);
        assert!((st.expectation(&[(3, &number_op(2))]).unwrap() - before2).norm() < 1e-12);
    }

    #[test]
    fn swap_gate_equals_swap_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = [2, 2, 2, 2, 2];
        let (st, _) = random_entangled(&mut rng, &dims);
        let mut swap = ComplexTensor::zeros(&[4, 4]);
        for a in 0..2 {
            for b in 0..2 {
                swap.set(&[b * 2 + a, a * 2 + b], c(1.0, 0.0));
            }
        }
        let mut via_gate = st.clone();
        via_gate.move_center(2).unwrap();
        via_gate.apply_gate(&swap, &[2, 3]).unwrap();
        let mut via_swap = st.clone();
        via_swap.move_center(2).unwrap();
        via_swap.swap_sites(2).unwrap();
        let n = number_op(2);
        let sx = ComplexTensor::new(vec![2, 2], vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        for i in 0..5 {
            for op in [&n, &sx] {
                let a = via_gate.expectation(&[(i, op)]).unwrap();
                let b = via_swap.expectation(&[(i, op)]).unwrap();
                assert!((a - b).norm() < 1e-12);
            }
        }
        let a = via_gate.expectation(&[(1, &sx), (3, &sx)]).unwrap();
        let b = via_swap.expectation(&[(1, &sx), (3, &sx)]).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn two_site_gate_matches_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // six bins of dimension 2 and a d_sys = 4 system site
        let dims = [2, 2, 2, 2, 2, 2, 4];
        let (mut st, mut dense) = random_entangled(&mut rng, &dims);
        for i in [5, 2, 0] {
            let u = random_unitary(&mut rng, dims[i] * dims[i + 1]);
            st.move_center(i + 1).unwrap();
            st.apply_gate(&u, &[i, i + 1]).unwrap();
            dense.apply(&u, &[i, i + 1]);
        }
        assert!(max_diff(&st.to_dense().unwrap(), &dense.amp) < 1e-10);
    }

    #[test]
    fn three_site_gate_matches_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dims = [2, 3, 4, 3, 2];
        let (mut st, mut dense) = random_entangled(&mut rng, &dims);
        let u = random_unitary(&mut rng, 3 * 4 * 3);
        st.move_center(2).unwrap();
        st.apply_gate_with_center(&u, &[1, 2, 3], 3).unwrap();
        dense.apply(&u, &[1, 2, 3]);
        assert_eq!(st.center(), 3);
        assert!(st.canonical_error() < 1e-10);
        assert!(max_diff(&st.to_dense().unwrap(), &dense.amp) < 1e-10);
    }

    #[test]
    fn swap_twice_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let dims = [2, 3, 2, 2];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        st.move_center(1).unwrap();
        let n3 = number_op(3);
        let before: Vec<C64> = (0..4)
            .map(|i| st.expectation(&[(i, &number_op(dims[i]))]).unwrap())
            .collect();
        st.swap_sites(1).unwrap();
        assert_eq!(st.center(), 2);
        assert!((st.expectation(&[(2, &n3)]).unwrap() - before[1]).norm() < 1e-10);
        st.swap_sites(1).unwrap();
        for i in 0..4 {
            let after = st.expectation(&[(i, &number_op(dims[i]))]).unwrap();
            assert!((after - before[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn swap_on_product_state_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (mut st, _) = random_product(&mut rng, &[2, 3, 2]);
        let w = st.swap_sites(0).unwrap();
        assert!(w < 1e-28);
        assert!(st.bond_dims().iter().all(|&b| b == 1));
    }

    #[test]
    fn swap_matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let dims = [2, 3, 2, 2];
        let (mut st, mut dense) = random_entangled(&mut rng, &dims);
        st.move_center(2).unwrap();
        st.swap_sites(1).unwrap();
        dense.swap(1);
        assert!(max_diff(&st.to_dense().unwrap(), &dense.amp) < 1e-10);
    }

    #[test]
    fn swap_requires_adjacent_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut st, _) = random_product(&mut rng, &[2, 2, 2, 2]);
        assert!(st.swap_sites(2).is_err());
        assert!(st.swap_sites(3).is_err());
    }

    #[test]
    fn gate_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let (mut st, _) = random_product(&mut rng, &[2, 2, 2, 2]);
        assert!(st.apply_gate(&ComplexTensor::identity(4), &[0, 2]).is_err());
        assert!(st.apply_gate(&ComplexTensor::identity(3), &[0, 1]).is_err());
        assert!(st.apply_gate(&ComplexTensor::identity(4), &[1, 2]).is_err());
        assert!(st.apply_gate(&ComplexTensor::identity(2), &[0]).is_err());
    }

    #[test]
    fn two_point_correlator_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let dims = [2, 2, 2, 2];
        let (mut st, dense) = random_entangled(&mut rng, &dims);
        let a = ComplexTensor::new(vec![2, 2], vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let ad = a.adjoint().unwrap();
        // dense oracle for <a_0^dagger a_3>
        let mut acc = c(0.0, 0.0);
        for idx in 0..dense.amp.len() {
            let d = dense.decode(idx);
            if d[3] == 1 && d[0] == 0 {
                let mut e = d.clone();
                e[3] = 0;
                e[0] = 1;
                acc += dense.amp[dense.encode(&e)].conj() * dense.amp[idx];
            }
        }
        for center in 0..4 {
            st.move_center(center).unwrap();
            let v = st.expectation(&[(0, &ad), (3, &a)]).unwrap();
            assert!((v - acc).norm() < 1e-10, "center {center}");
        }
    }

    #[test]
    fn gauge_moves_preserve_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let dims = [3, 2, 4, 2, 3];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        let n = number_op(4);
        st.move_center(0).unwrap();
        let reference = st.expectation(&[(2, &n)]).unwrap();
        for to in [4, 1, 3, 2] {
            st.move_center(to).unwrap();
            assert!(st.canonical_error() < 1e-10);
            assert!((st.expectation(&[(2, &n)]).unwrap() - reference).norm() < 1e-10);
        }
    }

    #[test]
    fn expectation_identity_is_norm_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (st, _) = random_entangled(&mut rng, &[2, 2, 3]);
        let id = ComplexTensor::identity(2);
        let v = st.expectation(&[(1, &id)]).unwrap();
        assert!((v.re - st.norm().powi(2)).abs() < 1e-12);
        assert!(st.expectation(&[(1, &ComplexTensor::identity(3))]).is_err());
        assert!(st.expectation(&[(1, &id), (1, &id)]).is_err());
    }

    #[test]
    fn truncation_is_accounted() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dims = [3, 3, 3, 3];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        st.move_center(1).unwrap();
        st.set_policy(SvdPolicy::new(0.0, 1).unwrap());
        let n2_before = st.norm().powi(2);
        let w = st.swap_sites(1).unwrap();
        assert!(w > 0.0);
        assert!((st.norm().powi(2) - (n2_before - w)).abs() < 1e-12);
        assert!((st.discarded_weight() - w).abs() < 1e-15);
    }

    #[test]
    fn drop_leading_keeps_observables() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dims = [2, 2, 2, 2, 2];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        st.move_center(4).unwrap();
        let sx = ComplexTensor::new(vec![2, 2], vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let before = st.expectation(&[(2, &sx), (4, &number_op(2))]).unwrap();
        st.drop_leading(2).unwrap();
        assert_eq!(st.len(), 3);
        let after = st.expectation(&[(0, &sx), (2, &number_op(2))]).unwrap();
        assert!((after - before).norm() < 1e-12);
        assert!((st.norm_full() - 1.0).abs() < 1e-12);
        assert!(st.drop_leading(3).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (st, _) = random_entangled(&mut rng, &[2, 3, 2]);
        let mut buf = Vec::new();
        st.write_snapshot(&mut buf).unwrap();
        let back = MpsState::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.to_dense().unwrap(), st.to_dense().unwrap());
        assert_eq!(back.center(), st.center());
        assert!(MpsState::read_snapshot(&buf[..10]).is_err());
    }

    #[test]
    fn correlation_sweep_matches_direct_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let dims = [2, 2, 2, 2, 2, 2];
        let (mut st, _) = random_entangled(&mut rng, &dims);
        st.move_center(5).unwrap();
        let b = ComplexTensor::new(vec![2, 2], vec![c(0.3, 0.1), c(1.0, -0.2), c(0.0, 0.5), c(-0.4, 0.0)]).unwrap();
        let a2 = ComplexTensor::new(vec![2, 2], vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let vals = st.correlation_sweep(4, &a2, &b, 3).unwrap();
        for p in 1..=3 {
            let want = st.expectation(&[(4 - p, &b), (4, &a2)]).unwrap();
            assert!((vals[p - 1] - want).norm() < 1e-12);
        }
        st.move_center(3).unwrap();
        let vals = st.correlation_sweep(3, &b, &a2, 2).unwrap();
        let want = st.expectation_full(&[(1, &a2), (3, &b)]).unwrap();
        assert!((vals[1] - want).norm() < 1e-12);
        assert!(st.correlation_sweep(3, &b, &b, 4).is_err());
        assert!(st.correlation_sweep(4, &b, &b, 1).is_err());
    }

    #[test]
    fn right_environment_matches_left() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (st, _) = random_entangled(&mut rng, &[2, 3, 2, 2]);
        let n = number_op(3);
        let left = st.expectation_full(&[(1, &n)]).unwrap();
        let mut env = identity_env(1);
        for (j, site) in st.sites().iter().enumerate().rev() {
            env = transfer_right(&env, site, if j == 1 { Some(&n) } else { None });
        }
        assert!((env[0] - left).norm() < 1e-12);
    }
}
