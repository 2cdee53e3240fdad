//! Frequency intervals on the unit circle and the degree-1 trigonometric
//! polynomials that are positive exactly on a prescribed closed band.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::wrap_unit;

/// Closed interval on [0,1). `lo > hi` denotes the wrap-around set
/// [0,1) \ (hi, lo). `lo == hi` is rejected; a point prior must be widened
/// explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    lo: f64,
    hi: f64,
}

impl FrequencyBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let (lo, hi) = (wrap_unit(lo), wrap_unit(hi));
        if lo == hi {
            return Err(Error::DegenerateBand(lo));
        }
        Ok(FrequencyBand { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn wraps(&self) -> bool {
        self.lo > self.hi
    }

    /// Arc length of the covered set.
    pub fn span(&self) -> f64 {
        if self.wraps() {
            1.0 - (self.lo - self.hi)
        } else {
            self.hi - self.lo
        }
    }

    /// Closed-set membership with wrap semantics.
    pub fn contains(&self, f: f64) -> bool {
        let f = wrap_unit(f);
        if self.wraps() {
            f >= self.lo || f <= self.hi
        } else {
            (self.lo..=self.hi).contains(&f)
        }
    }

    /// Coefficients (r0, r1) of g(f) = r0 + 2 Re(r1 e^{-i 2 pi f}), the
    /// degree-1 polynomial vanishing at both endpoints, positive on the open
    /// band interior and negative outside.
    pub fn g_coefficients(&self) -> (f64, Complex64) {
        let sign = if self.hi > self.lo { 1.0 } else { -1.0 };
        let r0 = -2.0 * (PI * (self.hi - self.lo)).cos() * sign;
        let r1 = Complex64::from_polar(1.0, PI * (self.lo + self.hi)) * sign;
        (r0, r1)
    }

    pub fn g_eval(&self, f: f64) -> f64 {
        let (r0, r1) = self.g_coefficients();
        r0 + 2.0 * (r1 * Complex64::from_polar(1.0, -2.0 * PI * f)).re
    }
}

#[derive(Serialize, Deserialize)]
struct BandJson {
    #[serde(rename = "f_L")]
    lo: f64,
    #[serde(rename = "f_H")]
    hi: f64,
}

impl Serialize for FrequencyBand {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BandJson { lo: self.lo, hi: self.hi }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FrequencyBand {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = BandJson::deserialize(d)?;
        FrequencyBand::new(j.lo, j.hi).map_err(serde::de::Error::custom)
    }
}

/// Per-dimension band lists. `None` marks an unconstrained (full-circle)
/// dimension; a list of several bands is the multi-band case and is accepted
/// only when the bands are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandSystem {
    per_dim: Vec<Option<Vec<FrequencyBand>>>,
}

impl BandSystem {
    pub fn new(per_dim: Vec<Option<Vec<FrequencyBand>>>) -> Result<Self> {
        for (i, bands) in per_dim.iter().enumerate() {
            if let Some(list) = bands {
                if list.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "dimension {i}: empty band list; use null for the full circle"
                    )));
                }
                for a in 0..list.len() {
                    for b in a + 1..list.len() {
                        if bands_overlap(&list[a], &list[b]) {
                            return Err(Error::InvalidArgument(format!(
                                "dimension {i}: bands {a} and {b} are not disjoint"
                            )));
                        }
                    }
                }
            }
        }
        Ok(BandSystem { per_dim })
    }

    /// One band per dimension.
    pub fn single(bands: Vec<FrequencyBand>) -> Self {
        BandSystem {
            per_dim: bands.into_iter().map(|b| Some(vec![b])).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.per_dim.len()
    }

    /// Bands for dimension i; `None` means the full circle.
    pub fn dim(&self, i: usize) -> Option<&[FrequencyBand]> {
        self.per_dim[i].as_deref()
    }

    /// The single band of dimension i, if that dimension has exactly one.
    pub fn single_band(&self, i: usize) -> Option<&FrequencyBand> {
        match self.per_dim[i].as_deref() {
            Some([b]) => Some(b),
            _ => None,
        }
    }

    pub fn is_multiband(&self) -> bool {
        self.per_dim
            .iter()
            .any(|b| b.as_ref().map_or(false, |l| l.len() > 1))
    }

    /// Component-wise membership; unconstrained dimensions accept everything.
    pub fn contains(&self, f: &crate::model::FrequencyTuple) -> bool {
        debug_assert_eq!(f.len(), self.d());
        self.per_dim.iter().enumerate().all(|(i, bands)| match bands {
            None => true,
            Some(list) => list.iter().any(|b| b.contains(f[i])),
        })
    }
}

fn bands_overlap(a: &FrequencyBand, b: &FrequencyBand) -> bool {
    a.contains(b.lo()) || a.contains(b.hi()) || b.contains(a.lo()) || b.contains(a.hi())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_closed_and_wrap() {
        let band = FrequencyBand::new(0.3, 0.4).unwrap();
        assert!(band.contains(0.3));
        assert!(band.contains(0.4));
        assert!(!band.contains(0.45));
        let wrap = FrequencyBand::new(0.9, 0.1).unwrap();
        assert!(wrap.contains(0.0));
        assert!(wrap.contains(0.9));
        assert!(!wrap.contains(0.5));
    }

    #[test]
    fn degenerate_band_rejected() {
        assert!(FrequencyBand::new(0.25, 0.25).is_err());
    }

    // Coefficient values pinned from an independent evaluation of the
    // closed-form endpoint conditions.
    #[test]
    fn g_coefficients_reference_values() {
        let (r0, r1) = FrequencyBand::new(0.3, 0.4).unwrap().g_coefficients();
        assert!((r0 - -1.902113032590307).abs() < 1e-15);
        assert!((r1 - Complex64::new(-0.5877852522924731, 0.8090169943749475)).norm() < 1e-15);

        let (r0, r1) = FrequencyBand::new(0.0, 0.5).unwrap().g_coefficients();
        assert!(r0.abs() < 1e-15);
        assert!((r1 - Complex64::new(0.0, 1.0)).norm() < 1e-15);

        let (r0, r1) = FrequencyBand::new(0.9, 0.1).unwrap().g_coefficients();
        assert!((r0 - -1.618033988749895).abs() < 1e-15);
        assert!((r1 - Complex64::new(1.0, 0.0)).norm() < 3e-16);
    }

    #[test]
    fn g_sign_pattern() {
        let band = FrequencyBand::new(0.3, 0.4).unwrap();
        assert!(band.g_eval(0.3).abs() < 1e-12);
        assert!(band.g_eval(0.4).abs() < 1e-12);
        assert!(band.g_eval(0.35) > 0.0);
        assert!(band.g_eval(0.2) < 0.0);
        assert!(band.g_eval(0.7) < 0.0);

        let wrap = FrequencyBand::new(0.9, 0.1).unwrap();
        assert!(wrap.g_eval(0.0) > 0.0);
        assert!(wrap.g_eval(0.95) > 0.0);
        assert!(wrap.g_eval(0.5) < 0.0);
        assert!(wrap.g_eval(0.9).abs() < 1e-12);
    }

    #[test]
    fn unit_modulus_invariant() {
        for (lo, hi) in [(0.3, 0.4), (0.9, 0.1), (0.0, 0.5), (0.11, 0.93)] {
            let (r0, r1) = FrequencyBand::new(lo, hi).unwrap().g_coefficients();
            assert!((r1.norm() - 1.0).abs() < 1e-14);
            assert!((-2.0..=2.0).contains(&r0));
        }
    }

    #[test]
    fn band_system_disjointness() {
        let a = FrequencyBand::new(0.1, 0.2).unwrap();
        let b = FrequencyBand::new(0.3, 0.4).unwrap();
        let c = FrequencyBand::new(0.15, 0.35).unwrap();
        assert!(BandSystem::new(vec![Some(vec![a, b])]).is_ok());
        assert!(BandSystem::new(vec![Some(vec![a, c])]).is_err());
        assert!(BandSystem::new(vec![None]).is_ok());
    }

    #[test]
    fn band_system_json_roundtrip() {
        let sys = BandSystem::new(vec![
            Some(vec![FrequencyBand::new(0.3, 0.4).unwrap()]),
            None,
        ])
        .unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        assert!(s.contains("f_L") && s.contains("null"));
        let back: BandSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sys);
    }
}
