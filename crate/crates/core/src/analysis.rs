//! Geometric measurements on range profiles: the theoretical line-of-sight
//! projection (TLOP), the empirical length on range profile (LRP) obtained by
//! smoothing, relative thresholding and gap closing, and the mask-based SNR
//! estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::RangeProfile;

/// Parameters of the activation-mask procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpParams {
    /// Uniform filter width in bins (odd).
    pub window: usize,
    /// Selection threshold relative to the smoothed maximum.
    pub threshold_frac: f64,
    /// Unselected runs strictly shorter than this are closed.
    pub max_gap: usize,
}

impl Default for LrpParams {
    fn default() -> Self {
        Self {
            window: 5,
            threshold_frac: 0.5,
            max_gap: 14,
        }
    }
}

/// Bins attributed to the target echo.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationMask {
    selected: Vec<bool>,
    span: Option<(usize, usize)>,
}

impl ActivationMask {
    pub fn from_selected(selected: Vec<bool>) -> Self {
        let first = selected.iter().position(|&s| s);
        let last = selected.iter().rposition(|&s| s);
        let span = first.zip(last);
        Self { selected, span }
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_none()
    }

    pub fn first_idx(&self) -> Option<usize> {
        self.span.map(|s| s.0)
    }

    pub fn last_idx(&self) -> Option<usize> {
        self.span.map(|s| s.1)
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// Number of maximal runs of selected bins.
    pub fn runs(&self) -> usize {
        let mut runs = 0;
        let mut prev = false;
        for &s in &self.selected {
            if s && !prev {
                runs += 1;
            }
            prev = s;
        }
        runs
    }

    pub fn union(&self, other: &ActivationMask) -> Result<ActivationMask> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self::from_selected(
            self.selected
                .iter()
                .zip(&other.selected)
                .map(|(a, b)| *a || *b)
                .collect(),
        ))
    }
}

/// Centered moving average; edge bins average over the in-bounds samples only.
pub fn smooth_uniform(p: &RangeProfile, window: usize) -> Result<RangeProfile> {
    let out = smooth_values(p.amplitudes(), window)?;
    RangeProfile::new(out, p.delta_r())
}

fn smooth_values(v: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd and positive, got {window}")));
    }
    if window > v.len() {
        return Err(Error::invalid(format!(
            "window {window} exceeds profile length {}",
            v.len()
        )));
    }
    let n = v.len();
    let half = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &a in v {
        prefix.push(prefix.last().unwrap() + a);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            // Constant runs stay exact; prefix differences can drift by an ulp.
            let s = prefix[hi] - prefix[lo];
            let m = s / (hi - lo) as f64;
            if v[lo..hi].iter().all(|&x| x == v[i]) {
                v[i]
            } else {
                m.max(0.0)
            }
        })
        .collect())
}

/// Smooth, threshold at `threshold_frac` of the smoothed maximum, and close
/// interior gaps strictly shorter than `max_gap`.
pub fn activation_mask(p: &RangeProfile, params: &LrpParams) -> Result<ActivationMask> {
    if !(params.threshold_frac > 0.0 && params.threshold_frac < 1.0) {
        return Err(Error::invalid(format!(
            "threshold_frac must lie in (0, 1), got {}",
            params.threshold_frac
        )));
    }
    let smoothed = smooth_values(p.amplitudes(), params.window)?;
    let max = smoothed.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(ActivationMask::from_selected(vec![false; p.n_bins()]));
    }
    let threshold = params.threshold_frac * max;
    let mut selected: Vec<bool> = smoothed.iter().map(|&s| s >= threshold).collect();
    close_gaps(&mut selected, params.max_gap);
    Ok(ActivationMask::from_selected(selected))
}

fn close_gaps(selected: &mut [bool], max_gap: usize) {
    let mut last_selected: Option<usize> = None;
    for i in 0..selected.len() {
        if !selected[i] {
            continue;
        }
        if let Some(prev) = last_selected {
            let gap = i - prev - 1;
            if gap > 0 && gap < max_gap {
                selected[prev + 1..i].iter_mut().for_each(|s| *s = true);
            }
        }
        last_selected = Some(i);
    }
}

/// Span between the first and last selected bins, in meters.
pub fn lrp_meters(p: &RangeProfile, params: &LrpParams) -> Result<f64> {
    let mask = activation_mask(p, params)?;
    lrp_from_mask(&mask, p.delta_r())
}

pub fn lrp_from_mask(mask: &ActivationMask, delta_r: f64) -> Result<f64> {
    match (mask.first_idx(), mask.last_idx()) {
        (Some(first), Some(last)) => Ok((last - first + 1) as f64 * delta_r),
        _ => Err(Error::NoTargetDetected),
    }
}

/// Theoretical length of object projection onto the line of sight.
pub fn tlop(length: f64, width: f64, aspect_angle: f64) -> f64 {
    let theta = aspect_angle.to_radians();
    length * theta.cos().abs() + width * theta.sin().abs()
}

/// Ratio of mean power inside the activation mask to mean power outside it.
pub fn estimate_snr_db(p: &RangeProfile, params: &LrpParams) -> Result<f64> {
    let mask = activation_mask(p, params)?;
    snr_db_with_mask(p, &mask)
}

pub fn snr_db_with_mask(p: &RangeProfile, mask: &ActivationMask) -> Result<f64> {
    if mask.len() != p.n_bins() {
        return Err(Error::ShapeMismatch("mask and profile lengths differ".into()));
    }
    let n_sel = mask.count();
    if n_sel == 0 {
        return Err(Error::NoTargetDetected);
    }
    if n_sel == p.n_bins() {
        return Err(Error::invalid("every bin is selected; no noise region"));
    }
    let (mut sig, mut noise) = (0.0, 0.0);
    for (&a, &s) in p.amplitudes().iter().zip(mask.selected()) {
        if s {
            sig += a * a;
        } else {
            noise += a * a;
        }
    }
    let sig = sig / n_sel as f64;
    let noise = noise / (p.n_bins() - n_sel) as f64;
    Ok(10.0 * (sig / noise).log10())
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("pearson needs two equal-length series of length >= 2"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("pearson undefined for a constant series"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prof(v: &[f64]) -> RangeProfile {
        RangeProfile::new(v.to_vec(), 1.5).unwrap()
    }

    fn raw(window: usize, max_gap: usize) -> LrpParams {
        LrpParams {
            window,
            threshold_frac: 0.5,
            max_gap,
        }
    }

    #[test]
    fn smoothing_examples() {
        let p = prof(&[0.0, 0.0, 3.0, 0.0, 0.0]);
        assert_eq!(smooth_uniform(&p, 1).unwrap(), p);
        let s = smooth_uniform(&p, 3).unwrap();
        for (a, b) in s.amplitudes().iter().zip([0.0, 1.0, 1.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = prof(&[2.5; 9]);
        assert_eq!(smooth_uniform(&c, 7).unwrap(), c);
        assert!(smooth_uniform(&p, 2).is_err());
        assert!(smooth_uniform(&p, 0).is_err());
        assert!(smooth_uniform(&p, 7).is_err());
    }

    #[test]
    fn edge_bins_average_fewer_samples() {
        let s = smooth_uniform(&prof(&[3.0, 0.0, 0.0, 0.0]), 3).unwrap();
        assert!((s.amplitudes()[0] - 1.5).abs() < 1e-12);
        assert!((s.amplitudes()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_trace_closes_single_bin_gap() {
        let m = activation_mask(&prof(&[0.0, 1.0, 0.6, 0.2, 0.7, 0.0]), &raw(1, 14)).unwrap();
        assert_eq!(m.selected(), &[false, true, true, true, true, false]);
        assert_eq!((m.first_idx(), m.last_idx()), (Some(1), Some(4)));
    }

    fn two_blocks(gap: usize) -> RangeProfile {
        let mut v = vec![0.0; 10];
        v.extend(vec![1.0; 5]);
        v.extend(vec![0.0; gap]);
        v.extend(vec![1.0; 5]);
        v.extend(vec![0.0; 10]);
        prof(&v)
    }

    #[test]
    fn gap_of_twenty_is_not_closed() {
        let m = activation_mask(&two_blocks(20), &raw(1, 14)).unwrap();
        assert_eq!(m.runs(), 2);
        assert_eq!(lrp_from_mask(&m, 1.5).unwrap(), 30.0 * 1.5);
    }

    #[test]
    fn gap_comparison_is_strict() {
        assert_eq!(activation_mask(&two_blocks(13), &raw(1, 14)).unwrap().runs(), 1);
        assert_eq!(activation_mask(&two_blocks(14), &raw(1, 14)).unwrap().runs(), 2);
    }

    #[test]
    fn single_peak_gives_contiguous_mask_with_argmax() {
        let v: Vec<f64> = (0..64).map(|i| (-((i as f64 - 30.0) / 4.0).powi(2)).exp()).collect();
        let m = activation_mask(&prof(&v), &LrpParams::default()).unwrap();
        assert_eq!(m.runs(), 1);
        assert!(m.selected()[30]);
    }

    #[test]
    fn zero_profile_gives_empty_mask() {
        let m = activation_mask(&prof(&[0.0; 16]), &LrpParams::default()).unwrap();
        assert!(m.is_empty());
        assert!(matches!(
            lrp_meters(&prof(&[0.0; 16]), &LrpParams::default()),
            Err(Error::NoTargetDetected)
        ));
    }

    #[test]
    fn threshold_fraction_validated() {
        let p = prof(&[0.0, 1.0, 0.0]);
        let bad = LrpParams {
            threshold_frac: 1.0,
            ..raw(1, 14)
        };
        assert!(activation_mask(&p, &bad).is_err());
    }

    #[test]
    fn lrp_examples() {
        let mut v = vec![0.0; 100];
        v[30..70].iter_mut().for_each(|a| *a = 1.0);
        assert!((lrp_meters(&prof(&v), &LrpParams::default()).unwrap() - 60.0).abs() < 1e-12);
        let mut one = vec![0.0; 50];
        one[20] = 1.0;
        assert_eq!(lrp_meters(&prof(&one), &raw(1, 14)).unwrap(), 1.5);
    }

    #[test]
    fn tlop_examples() {
        assert!((tlop(100.0, 20.0, 0.0) - 100.0).abs() < 1e-9);
        assert!((tlop(100.0, 20.0, 90.0) - 20.0).abs() < 1e-9);
        let expected = 120.0 / 2f64.sqrt();
        assert!((tlop(100.0, 20.0, 45.0) - expected).abs() < 1e-9);
        assert!((expected - 84.852_813_742_385_7).abs() < 1e-9);
    }

    #[test]
    fn snr_examples() {
        let mut v = vec![1.0; 64];
        v[20..40].iter_mut().for_each(|a| *a = 10.0);
        let p = prof(&v);
        let mask = ActivationMask::from_selected((0..64).map(|i| (20..40).contains(&i)).collect());
        assert!((snr_db_with_mask(&p, &mask).unwrap() - 20.0).abs() < 1e-12);
        let flat = prof(&[3.0; 64]);
        assert!(snr_db_with_mask(&flat, &mask).unwrap().abs() < 1e-12);
        // Estimator built on the procedure, not a hand mask.
        assert!((estimate_snr_db(&p, &raw(1, 14)).unwrap() - 20.0).abs() < 1e-12);
        assert!(estimate_snr_db(&flat, &LrpParams::default()).is_err());
        assert!(estimate_snr_db(&prof(&[0.0; 8]), &LrpParams::default()).is_err());
    }

    #[test]
    fn pearson_basic() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[1.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn tlop_periodic_symmetric_bounded(l in 1.0f64..300.0, ratio in 1.0f64..10.0, th in -720f64..720.0) {
            let w = l / ratio;
            let t = tlop(l, w, th);
            prop_assert!((t - tlop(l, w, th + 180.0)).abs() < 1e-9 * l);
            prop_assert!((t - tlop(l, w, -th)).abs() < 1e-9 * l);
            prop_assert!(t >= w.min(l) - 1e-9 && t <= (l * l + w * w).sqrt() + 1e-9);
        }

        #[test]
        fn lrp_is_scale_invariant(v in proptest::collection::vec(0.0f64..1.0, 32..96), alpha in 0.01f64..100.0) {
            let mut v = v;
            v[10] += 2.0;
            let p = prof(&v);
            let a = lrp_meters(&p, &LrpParams::default()).unwrap();
            let b = lrp_meters(&p.scaled(alpha).unwrap(), &LrpParams::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn gap_closing_preserves_span(v in proptest::collection::vec(0.0f64..1.0, 16..128), gap in 1usize..30) {
            let mut v = v;
            v[3] += 1.5;
            let p = prof(&v);
            let open = activation_mask(&p, &LrpParams { max_gap: 0, ..LrpParams::default() }).unwrap();
            let closed = activation_mask(&p, &LrpParams { max_gap: gap, ..LrpParams::default() }).unwrap();
            prop_assert_eq!(open.first_idx(), closed.first_idx());
            prop_assert_eq!(open.last_idx(), closed.last_idx());
            prop_assert!(closed.count() >= open.count());
        }
    }
}
