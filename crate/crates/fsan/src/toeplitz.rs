//! The multi-level block Toeplitz structure: the coefficient tensor, the
//! forward map T(B) and its adjoint, the band-shifted maps T_g and their
//! adjoints, and rank utilities.

use faer::{c64, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::band::FrequencyBand;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dims, FrequencyTuple};

/// Coefficient tensor B indexed by signed multi-index k with
/// k_i in [-(N_i-1), N_i-1]. Storage is row-major over the shifted indices
/// k_i + N_i - 1, dimension 1 outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrumTensor {
    dims: Dims,
    values: Vec<Complex64>,
}

impl HalfSpectrumTensor {
    pub fn zeros(dims: &Dims) -> Self {
        let len: usize = dims.sizes().iter().map(|&n| 2 * n - 1).product();
        HalfSpectrumTensor { dims: dims.clone(), values: vec![Complex64::ZERO; len] }
    }

    pub fn from_values(dims: &Dims, values: Vec<Complex64>) -> Result<Self> {
        let len: usize = dims.sizes().iter().map(|&n| 2 * n - 1).product();
        if values.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "tensor for dims {:?} needs {} values, got {}",
                dims.sizes(),
                len,
                values.len()
            )));
        }
        Ok(HalfSpectrumTensor { dims: dims.clone(), values })
    }

    /// B = sum_l w_l B_{f_l} with B_f(k) = prod_i exp(i 2 pi k_i f_i).
    pub fn from_weighted_atoms(dims: &Dims, atoms: &[(FrequencyTuple, f64)]) -> Self {
        let mut t = Self::zeros(dims);
        let d = dims.d();
        for idx in 0..t.values.len() {
            let k = t.unflat_slot(idx);
            let mut v = Complex64::ZERO;
            for (f, w) in atoms {
                let phase: f64 = (0..d).map(|i| k[i] as f64 * f[i]).sum();
                v += w * Complex64::from_polar(1.0, std::f64::consts::TAU * phase);
            }
            t.values[idx] = v;
        }
        t
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Flat storage slot of signed multi-index k.
    pub fn slot(&self, k: &[isize]) -> usize {
        debug_assert_eq!(k.len(), self.dims.d());
        let mut idx = 0usize;
        for (i, &n) in self.dims.sizes().iter().enumerate() {
            let shifted = k[i] + n as isize - 1;
            debug_assert!((0..2 * n as isize - 1).contains(&shifted));
            idx = idx * (2 * n - 1) + shifted as usize;
        }
        idx
    }

    fn unflat_slot(&self, mut idx: usize) -> Vec<isize> {
        let d = self.dims.d();
        let mut k = vec![0isize; d];
        for i in (0..d).rev() {
            let m = 2 * self.dims.sizes()[i] - 1;
            k[i] = (idx % m) as isize - (self.dims.sizes()[i] as isize - 1);
            idx /= m;
        }
        k
    }

    pub fn get(&self, k: &[isize]) -> Complex64 {
        self.values[self.slot(k)]
    }

    pub fn set(&mut self, k: &[isize], v: Complex64) {
        let s = self.slot(k);
        self.values[s] = v;
    }

    /// Max deviation from B(-k) = conj(B(k)).
    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for idx in 0..self.values.len() {
            let k = self.unflat_slot(idx);
            let neg: Vec<isize> = k.iter().map(|&x| -x).collect();
            let err = (self.values[idx] - self.get(&neg).conj()).norm();
            worst = worst.max(err);
        }
        worst
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.conjugate_asymmetry() <= tol
    }

    /// Center entry B(0,...,0).
    pub fn center(&self) -> Complex64 {
        let k = vec![0isize; self.dims.d()];
        self.get(&k)
    }

    /// Little-endian binary dump: b"FSB1", u32 d, d u32 sizes, then the
    /// values in storage order as interleaved f64 re/im.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"FSB1")?;
        w.write_all(&(self.dims.d() as u32).to_le_bytes())?;
        for &n in self.dims.sizes() {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"FSB1" {
            return Err(Error::Serialization("bad magic; expected FSB1".into()));
        }
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let d = u32::from_le_bytes(u) as usize;
        let mut sizes = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut u)?;
            sizes.push(u32::from_le_bytes(u) as usize);
        }
        let dims = Dims::new(sizes)?;
        let len: usize = dims.sizes().iter().map(|&n| 2 * n - 1).product();
        let mut values = Vec::with_capacity(len);
        let mut f = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut f)?;
            let re = f64::from_le_bytes(f);
            r.read_exact(&mut f)?;
            let im = f64::from_le_bytes(f);
            values.push(Complex64::new(re, im));
        }
        Ok(HalfSpectrumTensor { dims, values })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    values: Vec<[f64; 2]>,
}

impl Serialize for HalfSpectrumTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TensorJson {
            shape: self.dims.sizes().to_vec(),
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HalfSpectrumTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TensorJson::deserialize(d)?;
        let dims = Dims::new(j.shape).map_err(serde::de::Error::custom)?;
        let values = j.values.iter().map(|v| Complex64::new(v[0], v[1])).collect();
        HalfSpectrumTensor::from_values(&dims, values).map_err(serde::de::Error::custom)
    }
}

/// Coefficients of the band polynomial for one dimension, as consumed by the
/// shifted structure map: r_{-1} is implicitly conj(r1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GCoefficients {
    pub r0: f64,
    pub r1: Complex64,
    /// Zero-based dimension the shift acts on.
    pub axis: usize,
}

impl GCoefficients {
    pub fn from_band(band: &FrequencyBand, axis: usize) -> Self {
        let (r0, r1) = band.g_coefficients();
        GCoefficients { r0, r1, axis }
    }

    /// g(f) = r0 + 2 Re(r1 e^{-i 2 pi f}).
    pub fn eval(&self, f: f64) -> f64 {
        self.r0 + 2.0 * (self.r1 * Complex64::from_polar(1.0, -std::f64::consts::TAU * f)).re
    }
}

/// T(B): entry at (row multi-index m, column multi-index n) is B(m - n).
pub fn build_level_toeplitz(b: &HalfSpectrumTensor) -> Mat<c64> {
    let dims = b.dims();
    let n = dims.n_total();
    let d = dims.d();
    let mut out = Mat::<c64>::zeros(n, n);
    let mut diff = vec![0isize; d];
    for row in 0..n {
        let mr = dims.unflat(row);
        for col in 0..n {
            let nc = dims.unflat(col);
            for i in 0..d {
                diff[i] = mr[i] as isize - nc[i] as isize;
            }
            out[(row, col)] = b.get(&diff);
        }
    }
    out
}

/// Adjoint of `build_level_toeplitz` under the standard complex inner
/// product: entry k sums M over all index pairs with difference k.
pub fn adjoint_level_toeplitz(m: &Mat<c64>, dims: &Dims) -> Result<HalfSpectrumTensor> {
    let n = dims.n_total();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{}, dims need {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = dims.d();
    let mut out = HalfSpectrumTensor::zeros(dims);
    let mut diff = vec![0isize; d];
    for row in 0..n {
        let mr = dims.unflat(row);
        for col in 0..n {
            let nc = dims.unflat(col);
            for i in 0..d {
                diff[i] = mr[i] as isize - nc[i] as isize;
            }
            let s = out.slot(&diff);
            out.values_mut()[s] += m[(row, col)];
        }
    }
    Ok(out)
}

/// Iterate multi-indices with each component below `limits`.
pub(crate) fn multi_indices(limits: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = limits.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut m = vec![0usize; limits.len()];
        for i in (0..limits.len()).rev() {
            m[i] = idx % limits[i];
            idx /= limits[i];
        }
        out.push(m);
    }
    out
}

/// T_g(B): entry (m, n) = sum_{k=-1}^1 r_k B(m - n - k e_axis), with indices
/// ranging over N_j - 1 values in every dimension.
pub fn build_tg(b: &HalfSpectrumTensor, g: &GCoefficients) -> Result<Mat<c64>> {
    let dims = b.dims();
    let d = dims.d();
    if g.axis >= d {
        return Err(Error::InvalidArgument(format!("axis {} out of range", g.axis)));
    }
    let limits: Vec<usize> = dims.sizes().iter().map(|&n| n - 1).collect();
    let idxs = multi_indices(&limits);
    let nr = idxs.len();
    let rks: [(isize, Complex64); 3] = [
        (-1, g.r1.conj()),
        (0, Complex64::new(g.r0, 0.0)),
        (1, g.r1),
    ];
    let mut out = Mat::<c64>::zeros(nr, nr);
    let mut diff = vec![0isize; d];
    for (row, mr) in idxs.iter().enumerate() {
        for (col, nc) in idxs.iter().enumerate() {
            for i in 0..d {
                diff[i] = mr[i] as isize - nc[i] as isize;
            }
            let mut v = Complex64::ZERO;
            for &(k, rk) in &rks {
                diff[g.axis] -= k;
                v += rk * b.get(&diff);
                diff[g.axis] += k;
            }
            out[(row, col)] = c64::new(v.re, v.im);
        }
    }
    Ok(out)
}

/// Adjoint of `build_tg`: slot kappa accumulates conj(r_k) M(m, n) over all
/// (m, n, k) with m - n - k e_axis = kappa.
pub fn adjoint_tg(m: &Mat<c64>, g: &GCoefficients, dims: &Dims) -> Result<HalfSpectrumTensor> {
    let nr = dims.n_reduced();
    if m.nrows() != nr || m.ncols() != nr {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{}, reduced dims need {nr}x{nr}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = dims.d();
    if g.axis >= d {
        return Err(Error::InvalidArgument(format!("axis {} out of range", g.axis)));
    }
    let limits: Vec<usize> = dims.sizes().iter().map(|&n| n - 1).collect();
    let idxs = multi_indices(&limits);
    let rks: [(isize, Complex64); 3] = [
        (-1, g.r1.conj()),
        (0, Complex64::new(g.r0, 0.0)),
        (1, g.r1),
    ];
    let mut out = HalfSpectrumTensor::zeros(dims);
    let mut diff = vec![0isize; d];
    for (row, mr) in idxs.iter().enumerate() {
        for (col, nc) in idxs.iter().enumerate() {
            for i in 0..d {
                diff[i] = mr[i] as isize - nc[i] as isize;
            }
            let v = m[(row, col)];
            for &(k, rk) in &rks {
                diff[g.axis] -= k;
                let s = out.slot(&diff);
                out.values_mut()[s] += rk.conj() * v;
                diff[g.axis] += k;
            }
        }
    }
    Ok(out)
}

/// Count of eigenvalues above rel_tol * max(lambda_max, 0). The input is
/// symmetrized; zero and negative-semidefinite matrices have rank 0.
pub fn numerical_rank(m: &Mat<c64>, rel_tol: f64) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "numerical_rank needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0);
    }
    let vals = linalg::eigvalsh(m)?;
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    if lam_max == 0.0 {
        return Ok(0);
    }
    Ok(vals.iter().filter(|&&v| v > rel_tol * lam_max).count())
}

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
