//! Angles on the circle and points on the flat torus.
//!
//! Every stored angle lives in `[0, 2π)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

/// Reduces any finite real to `[0, 2π)`.
#[inline]
pub fn normalize(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid rounds tiny negatives up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces any finite real to `[-π, π)`.
#[inline]
pub fn wrap_signed(x: f64) -> f64 {
    let r = normalize(x + PI) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Length of the shorter arc between two angles, in `[0, π]`.
#[inline]
pub fn arc_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}

/// An angle in radians, normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
#[repr(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        Angle(normalize(radians))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Angle::new(deg.to_radians())
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A point on the flat torus `T^d`.
///
/// Dereferences to a slice of normalized radians so it can be handed to any
/// function taking `&[f64]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("coords", "an angle vector needs at least one coordinate"));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::param(
                format!("coords[{i}]"),
                "angles must be finite",
            ));
        }
        Ok(AngleVector(coords.iter().map(|&c| normalize(c)).collect()))
    }

    pub fn from_angles(angles: &[Angle]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::param("coords", "an angle vector needs at least one coordinate"));
        }
        Ok(AngleVector(angles.iter().map(|a| a.value()).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn angle(&self, i: usize) -> Angle {
        Angle(self.0[i])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AngleVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Squared geodesic distance on the flat torus: `Σ_i min(|a_i − b_i|, 2π − |a_i − b_i|)²`.
pub fn geodesic_dist2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(geodesic_dist2_unchecked(a, b))
}

#[inline]
pub(crate) fn geodesic_dist2_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = arc_distance(x, y);
            d * d
        })
        .sum()
}

/// Weighted first trigonometric moment of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resultant {
    /// Mean direction in `[0, 2π)`; meaningless when `length` is zero.
    pub direction: f64,
    /// Mean resultant length in `[0, 1]`.
    pub length: f64,
}

/// Mean direction and mean resultant length, optionally weighted.
///
/// Weights, when given, must have the sample's length; they need not sum to one.
pub fn resultant<I>(samples: I) -> Resultant
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut c, mut s, mut w) = (0.0, 0.0, 0.0);
    for (theta, weight) in samples {
        c += weight * theta.cos();
        s += weight * theta.sin();
        w += weight;
    }
    if w <= 0.0 {
        return Resultant {
            direction: 0.0,
            length: 0.0,
        };
    }
    let (c, s) = (c / w, s / w);
    Resultant {
        direction: normalize(s.atan2(c)),
        length: c.hypot(s).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geodesic_examples() {
        let a = [0.3, 1.2];
        assert_eq!(geodesic_dist2(&a, &a).unwrap(), 0.0);
        let d = geodesic_dist2(&[0.0], &[PI]).unwrap();
        assert!((d - PI * PI).abs() < 1e-15);
        let d = geodesic_dist2(&[0.1, 6.2], &[6.2, 0.1]).unwrap();
        let arc = TAU - 6.1;
        assert!((arc - 0.183_185_307_179_586_2).abs() < 1e-12);
        assert!((d - 2.0 * arc * arc).abs() < 1e-12);
        assert!(matches!(
            geodesic_dist2(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tiny_negative_wraps_below_tau() {
        let a = Angle::new(-1e-300);
        assert!(a.value() >= 0.0 && a.value() < TAU);
        assert_eq!(Angle::from_degrees(360.0).value(), 0.0);
    }

    #[test]
    fn resultant_of_antipodal_pair_is_zero() {
        let r = resultant([(0.0, 1.0), (PI, 1.0)]);
        assert!(r.length < 1e-15);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(x in -1e6f64..1e6) {
            let y = normalize(x);
            prop_assert!((0.0..TAU).contains(&y));
            prop_assert_eq!(normalize(y), y);
        }

        #[test]
        fn wrap_signed_stays_in_half_open_interval(x in -1e4f64..1e4) {
            let y = wrap_signed(x);
            prop_assert!((-PI..PI).contains(&y));
            prop_assert!(arc_distance(x, y) < 1e-9);
        }
    }
}
