//! Shared domain types: range profiles, ship geometry, acquisition and
//! conditioning vectors, plus the angle and normalization helpers every other
//! module leans on. Angles are degrees everywhere; radians only appear inside
//! trigonometric evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_BINS: usize = 256;
pub const DEFAULT_DELTA_R: f64 = 1.5;

/// Reduce an angle in degrees to `[0, 360)`.
pub fn canonical_angle(raw_degrees: f64) -> Result<f64> {
    if !raw_degrees.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    let r = raw_degrees.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    Ok(if r >= 360.0 { 0.0 } else { r })
}

/// Aspect angle `heading - radar_azimuth`, canonicalized.
pub fn aspect_angle_of(heading: f64, radar_azimuth: f64) -> Result<f64> {
    if !heading.is_finite() || !radar_azimuth.is_finite() {
        return Err(Error::NonFinite("heading/azimuth"));
    }
    canonical_angle(heading - radar_azimuth)
}

/// Shortest angular distance between two angles, in `[0, 180]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// A real-valued magnitude profile over `n_bins` range cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeProfile {
    amplitudes: Vec<f64>,
    delta_r: f64,
}

impl RangeProfile {
    pub fn new(amplitudes: Vec<f64>, delta_r: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("profile must have at least one bin"));
        }
        if !(delta_r > 0.0 && delta_r.is_finite()) {
            return Err(Error::invalid(format!("delta_r must be positive, got {delta_r}")));
        }
        if let Some(bad) = amplitudes.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::invalid(format!(
                "amplitudes must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { amplitudes, delta_r })
    }

    pub fn zeros(n_bins: usize, delta_r: f64) -> Result<Self> {
        Self::new(vec![0.0; n_bins], delta_r)
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    pub fn n_bins(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().copied().fold(0.0, f64::max)
    }

    /// Multiply every amplitude by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.amplitudes.iter().map(|a| a * factor).collect(), self.delta_r)
    }
}

/// Divide by the peak amplitude so the result peaks at exactly 1.
pub fn normalize_profile(p: &RangeProfile) -> Result<RangeProfile> {
    let max = p.max_amplitude();
    if max <= 0.0 {
        return Err(Error::DegenerateProfile);
    }
    let amplitudes = p
        .amplitudes
        .iter()
        .map(|&a| if a == max { 1.0 } else { a / max })
        .collect();
    RangeProfile::new(amplitudes, p.delta_r)
}

/// How a scatterer's contribution varies with aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Facet {
    /// Hull-edge facet parallel to the keel (port/starboard sides).
    Keel,
    /// Hull-edge facet across the beam (bow/stern transoms).
    Beam,
    /// Deck point.
    Point,
    /// Bridge-like high-reflectivity point.
    Superstructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Along-keel coordinate, meters, bow positive.
    pub x: f64,
    /// Abeam coordinate, meters, port positive.
    pub y: f64,
    pub reflectivity: f64,
    pub facet: Facet,
    /// Phase and integer rate of the aspect-dependent interference term.
    pub phase: f64,
    pub rate: u8,
}

/// Ship dimensions and scatterer layout in ship-local coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipGeometry {
    pub ship_id: String,
    pub length: f64,
    pub width: f64,
    pub scatterers: Vec<Scatterer>,
}

impl ShipGeometry {
    /// Check the dimensional and containment invariants.
    pub fn validate(&self, delta_r: f64) -> Result<()> {
        validate_dimensions(self.length, self.width)?;
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let tol = 1e-9 * self.length.max(1.0);
        for s in &self.scatterers {
            if s.x.abs() > hl + tol || s.y.abs() > hw + tol {
                return Err(Error::invalid(format!(
                    "scatterer ({}, {}) outside hull rectangle",
                    s.x, s.y
                )));
            }
            if !(s.reflectivity > 0.0) {
                return Err(Error::invalid("scatterer reflectivity must be positive"));
            }
        }
        let near = |end: f64| self.scatterers.iter().any(|s| (s.x - end).abs() <= delta_r);
        if !near(hl) || !near(-hl) {
            return Err(Error::invalid("hull ends must carry scatterers"));
        }
        Ok(())
    }

    pub fn condition(&self, aspect_angle: f64) -> Result<ConditionVector> {
        ConditionVector::new(self.length, self.width, aspect_angle)
    }
}

pub(crate) fn validate_dimensions(length: f64, width: f64) -> Result<()> {
    if !(length.is_finite() && width.is_finite()) {
        return Err(Error::NonFinite("ship dimensions"));
    }
    if !(length > 0.0 && width > 0.0) {
        return Err(Error::invalid("length and width must be positive"));
    }
    if width > length {
        return Err(Error::invalid(format!(
            "width {width} exceeds length {length}"
        )));
    }
    Ok(())
}

/// Radar/target geometry for a single acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionCondition {
    pub heading: f64,
    pub radar_azimuth: f64,
    pub aspect_angle: f64,
    /// Target SNR in dB; `f64::INFINITY` requests a noiseless profile.
    pub target_snr_db: f64,
}

impl AcquisitionCondition {
    pub fn new(heading: f64, radar_azimuth: f64, target_snr_db: f64) -> Result<Self> {
        let heading = canonical_angle(heading)?;
        let radar_azimuth = canonical_angle(radar_azimuth)?;
        Ok(Self {
            heading,
            radar_azimuth,
            aspect_angle: aspect_angle_of(heading, radar_azimuth)?,
            target_snr_db,
        })
    }

    /// Acquisition seen from azimuth 0 so that heading == aspect angle.
    pub fn from_aspect(aspect_angle: f64, target_snr_db: f64) -> Result<Self> {
        Self::new(aspect_angle, 0.0, target_snr_db)
    }

    pub fn is_noiseless(&self) -> bool {
        self.target_snr_db == f64::INFINITY
    }
}

/// The generative models' conditioning input: (length, width, aspect).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub length: f64,
    pub width: f64,
    pub aspect_angle: f64,
}

impl ConditionVector {
    pub fn new(length: f64, width: f64, aspect_angle: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0) {
            return Err(Error::invalid("condition length and width must be positive"));
        }
        Ok(Self {
            length,
            width,
            aspect_angle: canonical_angle(aspect_angle)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_angle_examples() {
        assert_eq!(canonical_angle(0.0).unwrap(), 0.0);
        assert!((canonical_angle(-340.0).unwrap() - 20.0).abs() < 1e-12);
        assert!((canonical_angle(725.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(canonical_angle(f64::NAN).is_err());
        assert!(canonical_angle(f64::INFINITY).is_err());
        assert!(canonical_angle(-1e-20).unwrap() < 360.0);
    }

    #[test]
    fn aspect_angle_examples() {
        assert_eq!(aspect_angle_of(90.0, 30.0).unwrap(), 60.0);
        assert_eq!(aspect_angle_of(123.4, 123.4).unwrap(), 0.0);
        assert!((aspect_angle_of(10.0, 350.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(aspect_angle_of(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let p = RangeProfile::new(vec![0.0, 2.0, 4.0], 1.5).unwrap();
        let n = normalize_profile(&p).unwrap();
        assert_eq!(n.amplitudes(), &[0.0, 0.5, 1.0]);
        assert_eq!(n.delta_r(), 1.5);
        assert_eq!(normalize_profile(&n).unwrap(), n);
        let z = RangeProfile::zeros(4, 1.5).unwrap();
        assert!(matches!(normalize_profile(&z), Err(Error::DegenerateProfile)));
    }

    #[test]
    fn profile_rejects_bad_values() {
        assert!(RangeProfile::new(vec![1.0, -0.1], 1.5).is_err());
        assert!(RangeProfile::new(vec![1.0, f64::NAN], 1.5).is_err());
        assert!(RangeProfile::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circular_distance(0.0, 359.5) - 0.5).abs() < 1e-12);
        assert!((circular_distance(10.0, 350.0) - 20.0).abs() < 1e-12);
        assert!((circular_distance(0.0, 180.0) - 180.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn canonical_is_idempotent(x in -1e6f64..1e6) {
            let c = canonical_angle(x).unwrap();
            prop_assert!((0.0..360.0).contains(&c));
            prop_assert_eq!(canonical_angle(c).unwrap(), c);
        }

        #[test]
        fn aspect_depends_only_on_difference(h in -720f64..720.0, phi in -720f64..720.0, k in -720f64..720.0) {
            let a = aspect_angle_of(h, phi).unwrap();
            let b = aspect_angle_of(h + k, phi + k).unwrap();
            prop_assert!(circular_distance(a, b) < 1e-9);
        }

        #[test]
        fn normalize_is_scale_invariant(v in proptest::collection::vec(0.0f64..10.0, 2..32), alpha in 0.01f64..100.0) {
            let mut v = v;
            v[0] += 0.5;
            let p = RangeProfile::new(v, 1.5).unwrap();
            let a = normalize_profile(&p).unwrap();
            let b = normalize_profile(&p.scaled(alpha).unwrap()).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(normalize_profile(&a).unwrap(), a);
        }
    }
}
