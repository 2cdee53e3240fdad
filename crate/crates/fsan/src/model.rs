//! Multidimensional sinusoid mixtures: grid dimensions, frequency tuples,
//! steering vectors, observation masks, and error metrics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Grid sizes N_1..N_d with the derived products used throughout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dims {
    sizes: Vec<usize>,
}

impl Dims {
    /// Every size must be at least 2 so the reduced product stays positive.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidArgument("need at least one dimension".into()));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidArgument(format!("dimension size {n} < 2")));
        }
        Ok(Dims { sizes })
    }

    pub fn d(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// N_D = prod N_i, the full grid cardinality.
    pub fn n_total(&self) -> usize {
        self.sizes.iter().product()
    }

    /// prod (N_i - 1), the grid cardinality with every dimension shortened by one.
    pub fn n_reduced(&self) -> usize {
        self.sizes.iter().map(|&n| n - 1).product()
    }

    /// Flat index with dimension 1 outermost: n = ((n_1 N_2 + n_2) N_3 + n_3)...
    pub fn flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.d());
        let mut idx = 0;
        for (i, &n) in multi.iter().enumerate() {
            debug_assert!(n < self.sizes[i]);
            idx = idx * self.sizes[i] + n;
        }
        idx
    }

    /// Inverse of `flat`.
    pub fn unflat(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.d()];
        for i in (0..self.d()).rev() {
            multi[i] = idx % self.sizes[i];
            idx /= self.sizes[i];
        }
        multi
    }
}

/// One normalized frequency per dimension, each reduced into [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyTuple(Vec<f64>);

impl FrequencyTuple {
    pub fn new(components: Vec<f64>) -> Self {
        FrequencyTuple(components.into_iter().map(wrap_unit).collect())
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for FrequencyTuple {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Reduce a real number modulo 1 into [0, 1).
pub fn wrap_unit(f: f64) -> f64 {
    let r = f.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the unit circle: min(|a-b|, 1-|a-b|) after wrapping.
pub fn torus_dist(a: f64, b: f64) -> f64 {
    let d = (wrap_unit(a) - wrap_unit(b)).abs();
    d.min(1.0 - d)
}

/// Sum of per-component torus distances between two tuples of equal length.
pub fn tuple_dist(a: &FrequencyTuple, b: &FrequencyTuple) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(&x, &y)| torus_dist(x, y))
        .sum()
}

/// Match estimated tuples to references by minimal total torus distance
/// (brute force over permutations; intended for small r). Returns, for each
/// reference index, the matched estimate index and the max per-component
/// torus error of that pair. Requires equal counts.
pub fn match_frequencies(
    estimates: &[FrequencyTuple],
    reference: &[FrequencyTuple],
) -> Result<Vec<(usize, f64)>> {
    if estimates.len() != reference.len() {
        return Err(Error::DimMismatch(format!(
            "{} estimates vs {} references",
            estimates.len(),
            reference.len()
        )));
    }
    let r = reference.len();
    if r == 0 {
        return Ok(vec![]);
    }
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = (0..r).map(|i| tuple_dist(&estimates[p[i]], &reference[i])).sum();
        if best.as_ref().map_or(true, |(b, _)| total < *b) {
            best = Some((total, p.to_vec()));
        }
    });
    let (_, p) = best.unwrap();
    Ok((0..r)
        .map(|i| {
            let err = estimates[p[i]]
                .components()
                .iter()
                .zip(reference[i].components())
                .map(|(&x, &y)| torus_dist(x, y))
                .fold(0.0, f64::max);
            (p[i], err)
        })
        .collect())
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// A mixture of r sinusoids: frequency tuples with nonzero complex gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub entries: Vec<(FrequencyTuple, Complex64)>,
}

impl SpectralModel {
    pub fn new(entries: Vec<(FrequencyTuple, Complex64)>) -> Self {
        SpectralModel { entries }
    }

    pub fn r(&self) -> usize {
        self.entries.len()
    }

    pub fn frequencies(&self) -> Vec<FrequencyTuple> {
        self.entries.iter().map(|(f, _)| f.clone()).collect()
    }

    pub fn gains(&self) -> Vec<Complex64> {
        self.entries.iter().map(|&(_, g)| g).collect()
    }

    /// Sum of gain magnitudes, the atomic decomposition value of the model.
    pub fn gain_magnitude_sum(&self) -> f64 {
        self.entries.iter().map(|(_, g)| g.norm()).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelEntryJson {
    frequency: Vec<f64>,
    gain: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    entries: Vec<ModelEntryJson>,
}

impl Serialize for SpectralModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelJson {
            entries: self
                .entries
                .iter()
                .map(|(f, g)| ModelEntryJson {
                    frequency: f.components().to_vec(),
                    gain: [g.re, g.im],
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ModelJson::deserialize(d)?;
        Ok(SpectralModel {
            entries: j
                .entries
                .into_iter()
                .map(|e| (FrequencyTuple::new(e.frequency), Complex64::new(e.gain[0], e.gain[1])))
                .collect(),
        })
    }
}

/// Observed flat indices with their nonzero diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    indices: Vec<usize>,
    weights: Vec<Complex64>,
}

impl ObservationMask {
    /// Indices are sorted and checked for uniqueness and range; weights must
    /// be nonzero and aligned with the incoming index order.
    pub fn new(indices: Vec<usize>, weights: Vec<Complex64>, n_total: usize) -> Result<Self> {
        if indices.len() != weights.len() {
            return Err(Error::DimMismatch(format!(
                "{} indices vs {} weights",
                indices.len(),
                weights.len()
            )));
        }
        let mut pairs: Vec<(usize, Complex64)> =
            indices.into_iter().zip(weights).collect();
        pairs.sort_by_key(|&(i, _)| i);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateIndex(w[0].0));
            }
        }
        if let Some(&(i, _)) = pairs.last() {
            if i >= n_total {
                return Err(Error::IndexOutOfRange { index: i, len: n_total });
            }
        }
        if let Some(&(i, _)) = pairs.iter().find(|&&(_, w)| w == Complex64::ZERO) {
            return Err(Error::InvalidArgument(format!("zero weight at index {i}")));
        }
        let (indices, weights) = pairs.into_iter().unzip();
        Ok(ObservationMask { indices, weights })
    }

    pub fn unit(indices: Vec<usize>, n_total: usize) -> Result<Self> {
        let w = vec![Complex64::ONE; indices.len()];
        Self::new(indices, w, n_total)
    }

    pub fn ns(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

#[derive(Serialize, Deserialize)]
struct MaskJson {
    indices: Vec<usize>,
    weights: Vec<[f64; 2]>,
}

impl Serialize for ObservationMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MaskJson {
            indices: self.indices.clone(),
            weights: self.weights.iter().map(|w| [w.re, w.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ObservationMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MaskJson::deserialize(d)?;
        let weights = j.weights.iter().map(|w| Complex64::new(w[0], w[1])).collect();
        ObservationMask::new(j.indices, weights, usize::MAX).map_err(serde::de::Error::custom)
    }
}

/// a(f): entry at flat index (n_1,..,n_d) is prod_i exp(i 2 pi n_i f_i).
/// Unnormalized, so the squared norm is N_D.
pub fn steering_vector(f: &FrequencyTuple, dims: &Dims) -> Result<Vec<Complex64>> {
    if f.len() != dims.d() {
        return Err(Error::DimMismatch(format!(
            "frequency tuple has {} components for {} dims",
            f.len(),
            dims.d()
        )));
    }
    // Per-dimension phase tables, combined in flat-index order.
    let tables: Vec<Vec<Complex64>> = dims
        .sizes()
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..n)
                .map(|k| Complex64::from_polar(1.0, TAU * k as f64 * f[i]))
                .collect()
        })
        .collect();
    let mut out = vec![Complex64::ONE; dims.n_total()];
    for (idx, v) in out.iter_mut().enumerate() {
        let multi = dims.unflat(idx);
        for (i, &m) in multi.iter().enumerate() {
            *v *= tables[i][m];
        }
    }
    Ok(out)
}

/// x = sum_l sigma_l a(f_l).
pub fn synthesize(model: &SpectralModel, dims: &Dims) -> Result<Vec<Complex64>> {
    let mut x = vec![Complex64::ZERO; dims.n_total()];
    for (f, sigma) in &model.entries {
        let a = steering_vector(f, dims)?;
        for (xi, ai) in x.iter_mut().zip(a) {
            *xi += sigma * ai;
        }
    }
    Ok(x)
}

/// y_j = weight_j * x_j for each observed index j, in mask order.
pub fn apply_mask(x: &[Complex64], mask: &ObservationMask) -> Result<Vec<Complex64>> {
    if let Some(&i) = mask.indices().iter().find(|&&i| i >= x.len()) {
        return Err(Error::IndexOutOfRange { index: i, len: x.len() });
    }
    Ok(mask
        .indices()
        .iter()
        .zip(mask.weights())
        .map(|(&i, &w)| w * x[i])
        .collect())
}

/// Uniformly random Ns-subset of the grid via partial Fisher-Yates over the
/// supplied generator; all weights one. The draw consumes exactly Ns u64s.
pub fn mask_from_rng(rng: &mut impl Rng, dims: &Dims, ns: usize) -> Result<ObservationMask> {
    let n = dims.n_total();
    if ns > n {
        return Err(Error::InvalidArgument(format!("Ns = {ns} exceeds N_D = {n}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..ns {
        let j = i + (rng.gen::<u64>() as usize) % (n - i);
        pool.swap(i, j);
    }
    pool.truncate(ns);
    ObservationMask::unit(pool, n)
}

/// Seeded convenience wrapper around `mask_from_rng`.
pub fn random_mask(dims: &Dims, ns: usize, seed: u64) -> Result<ObservationMask> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    mask_from_rng(&mut rng, dims, ns)
}

/// ||x_hat - x_star|| / ||x_star||. Errors on a zero reference.
pub fn nmse(x_hat: &[Complex64], x_star: &[Complex64]) -> Result<f64> {
    if x_hat.len() != x_star.len() {
        return Err(Error::DimMismatch(format!(
            "{} vs {} entries",
            x_hat.len(),
            x_star.len()
        )));
    }
    let denom: f64 = x_star.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = x_hat
        .iter()
        .zip(x_star)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}
