//! Synthetic HRRP formation from point-scatterer ship models.
//!
//! A ship is a rectangle of hull-edge facets plus deck and superstructure
//! points. For a given aspect the layout is rotated onto the radar line of
//! sight, rasterized into a polar RCS grid (range x azimuth), and integrated
//! tangentially over the azimuth cone to give the range profile.
//!
//! Hull-edge facets contribute in proportion to their footprint projected on
//! the line of sight (`|cos|` of the facet-to-LOS angle), so the hull outline
//! projects to a flat plateau whose extent is exactly the rectangle's
//! support width. Deck points are attenuated by the same apparent-extent
//! factor, and every scatterer carries a mild aspect-dependent interference
//! term.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{activation_mask, snr_db_with_mask, tlop, LrpParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::types::{
    validate_dimensions, AcquisitionCondition, Facet, RangeProfile, Scatterer, ShipGeometry,
    DEFAULT_DELTA_R, DEFAULT_N_BINS,
};

/// Default scatterer density along the hull, per meter.
pub const DEFAULT_DENSITY: f64 = 2.0;

const CORNER_BOOST: f64 = 0.5;
const LOW_REGION_GAIN: f64 = 0.15;
const LOW_REGION_MAX_LEN: f64 = 18.0;

/// Radar grid and scattering-model settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_bins: usize,
    pub delta_r: f64,
    /// Azimuth bin width, degrees.
    pub delta_phi: f64,
    /// Number of azimuth bins spanning the detection cone.
    pub n_phi: usize,
    /// Slant range to the ship center, meters.
    pub reference_range: f64,
    /// Relative depth of the aspect-dependent interference modulation.
    pub interference: f64,
    /// Boost superstructure returns when viewed from astern.
    pub bridge_asymmetry: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_N_BINS,
            delta_r: DEFAULT_DELTA_R,
            delta_phi: 0.1,
            n_phi: 20,
            reference_range: 20_000.0,
            interference: 0.3,
            bridge_asymmetry: false,
        }
    }
}

impl GridSpec {
    pub fn cone_width(&self) -> f64 {
        self.delta_phi * self.n_phi as f64
    }

    /// Cone start, chosen so the cone is centered on the ship.
    pub fn phi_origin(&self) -> f64 {
        -self.cone_width() / 2.0
    }

    pub fn center_bin(&self) -> usize {
        self.n_bins / 2
    }
}

/// Amplitudes `sigma[r * n_phi + j]` over range bin `r` and azimuth bin `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarRcsGrid {
    sigma: Vec<f64>,
    n_bins: usize,
    n_phi: usize,
    pub delta_r: f64,
    pub delta_phi: f64,
    pub phi_origin: f64,
}

impl PolarRcsGrid {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            sigma: vec![0.0; spec.n_bins * spec.n_phi],
            n_bins: spec.n_bins,
            n_phi: spec.n_phi,
            delta_r: spec.delta_r,
            delta_phi: spec.delta_phi,
            phi_origin: spec.phi_origin(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn cell_count(&self) -> usize {
        self.sigma.len()
    }

    pub fn get(&self, r: usize, j: usize) -> f64 {
        self.sigma[r * self.n_phi + j]
    }

    pub fn add(&mut self, r: usize, j: usize, value: f64) {
        self.sigma[r * self.n_phi + j] += value;
    }

    pub fn total(&self) -> f64 {
        self.sigma.iter().sum()
    }

    /// Range bins holding any nonzero cell.
    pub fn occupied_rows(&self) -> Vec<usize> {
        (0..self.n_bins)
            .filter(|&r| (0..self.n_phi).any(|j| self.get(r, j) != 0.0))
            .collect()
    }
}

/// Build a deterministic scatterer layout for a `length x width` hull.
pub fn generate_scatterers(length: f64, width: f64, density: f64, seed: u64) -> Result<ShipGeometry> {
    validate_dimensions(length, width)?;
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::invalid(format!("density must be positive, got {density}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[0x5ca7]));
    let (hl, hw) = (length / 2.0, width / 2.0);
    let spacing = 1.0 / density;
    let nx = ((length / spacing).ceil() as usize + 1).max(2);
    let ny = ((width / spacing).ceil() as usize + 1).max(2);
    let gx = length / (nx - 1) as f64;
    let gy = width / (ny - 1) as f64;

    let low_len = (rng.gen_range(0.08..0.15) * length).min(LOW_REGION_MAX_LEN);
    let low_start = rng.gen_range(-0.3 * length..0.2 * length);
    let in_low = |x: f64| x > low_start && x < low_start + low_len;

    let mut scatterers = Vec::with_capacity(2 * (nx + ny) + (length * density) as usize);
    let mut push = |x: f64, y: f64, reflectivity: f64, facet: Facet, rng: &mut crate::rng::Rng| {
        scatterers.push(Scatterer {
            x,
            y,
            reflectivity,
            facet,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            rate: rng.gen_range(1..=5),
        });
    };

    for side in [hw, -hw] {
        for i in 0..nx {
            let (x, corner) = edge_coord(i, nx, hl);
            let mut r = gx;
            if in_low(x) {
                r *= LOW_REGION_GAIN;
            }
            if corner {
                r += CORNER_BOOST;
            }
            push(x, side, r, Facet::Keel, &mut rng);
        }
    }
    for end in [hl, -hl] {
        for j in 0..ny {
            let (y, corner) = edge_coord(j, ny, hw);
            let r = if corner { gy + CORNER_BOOST } else { gy };
            push(end, y, r, Facet::Beam, &mut rng);
        }
    }

    let n_deck = (0.5 * length * density).ceil() as usize;
    for _ in 0..n_deck {
        let x = 0.9 * rng.gen_range(-hl..hl);
        let y = 0.9 * rng.gen_range(-hw..hw);
        let r = rng.gen_range(0.05..0.15);
        push(x, y, r, Facet::Point, &mut rng);
    }
    let n_bridge = rng.gen_range(1..=3);
    for _ in 0..n_bridge {
        let x = rng.gen_range(-0.35 * length..-0.1 * length);
        let y = rng.gen_range(-0.2 * width..0.2 * width);
        let r = rng.gen_range(0.4..0.8);
        push(x, y, r, Facet::Superstructure, &mut rng);
    }

    Ok(ShipGeometry {
        ship_id: format!("S{seed:016x}"),
        length,
        width,
        scatterers,
    })
}

/// Evenly spaced edge coordinate with exact endpoints.
fn edge_coord(i: usize, n: usize, half: f64) -> (f64, bool) {
    if i == 0 {
        (-half, true)
    } else if i == n - 1 {
        (half, true)
    } else {
        (-half + 2.0 * half * i as f64 / (n - 1) as f64, false)
    }
}

/// Per-aspect amplitude of one scatterer.
fn scatterer_amplitude(s: &Scatterer, ship: &ShipGeometry, theta: f64, spec: &GridSpec) -> f64 {
    let (sin, cos) = theta.sin_cos();
    let footprint = match s.facet {
        Facet::Keel => cos.abs(),
        Facet::Beam => sin.abs(),
        Facet::Point | Facet::Superstructure => {
            tlop(ship.length, ship.width, theta.to_degrees()) / ship.length
        }
    };
    let mut gain = 1.0 + spec.interference * (s.rate as f64 * theta + s.phase).sin();
    if spec.bridge_asymmetry && s.facet == Facet::Superstructure {
        gain *= 1.0 + 2.0 * (-cos).max(0.0);
    }
    s.reflectivity * footprint * gain
}

/// Rotate the layout onto the line of sight and rasterize into a polar grid.
///
/// Range offset is `u = x cos(theta) + y sin(theta)` from the central bin,
/// split linearly between the two nearest bins; cross-range
/// `v = -x sin(theta) + y cos(theta)` selects the azimuth bin.
pub fn project_scatterers(ship: &ShipGeometry, aspect_angle: f64, spec: &GridSpec) -> Result<PolarRcsGrid> {
    if !aspect_angle.is_finite() {
        return Err(Error::NonFinite("aspect angle"));
    }
    let theta = aspect_angle.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut grid = PolarRcsGrid::zeros(spec);
    let center = spec.center_bin() as f64;
    for s in &ship.scatterers {
        let amp = scatterer_amplitude(s, ship, theta, spec);
        if amp <= 0.0 {
            continue;
        }
        let u = s.x * cos + s.y * sin;
        let v = -s.x * sin + s.y * cos;
        let phi = v.atan2(spec.reference_range + u).to_degrees();
        let jf = ((phi - grid.phi_origin) / spec.delta_phi).floor();
        if jf < 0.0 || jf >= spec.n_phi as f64 {
            return Err(Error::TargetExceedsGrid);
        }
        let j = jf as usize;
        let pos = u / spec.delta_r + center;
        let r0 = pos.floor();
        let frac = pos - r0;
        if r0 < 0.0 || r0 as usize >= spec.n_bins || (frac > 0.0 && r0 as usize + 1 >= spec.n_bins) {
            return Err(Error::TargetExceedsGrid);
        }
        let r0 = r0 as usize;
        grid.add(r0, j, amp * (1.0 - frac));
        if frac > 0.0 {
            grid.add(r0 + 1, j, amp * frac);
        }
    }
    Ok(grid)
}

/// Integrate the grid tangentially: `HRRP(r_i) = sum_j sigma(r_i, phi_j)`.
pub fn form_hrrp(grid: &PolarRcsGrid) -> Result<RangeProfile> {
    let amplitudes = grid
        .sigma
        .chunks_exact(grid.n_phi)
        .map(|row| row.iter().sum())
        .collect();
    RangeProfile::new(amplitudes, grid.delta_r)
}

/// Add magnitude noise `sigma * |z|` on every bin, with `sigma` chosen so the
/// mask-based SNR estimate of the output equals `target_snr_db`.
///
/// `sigma` starts from the closed-form expectation against the clean mask and
/// is refined by bisection against the estimator on the seed's own draw.
pub fn add_noise(p: &RangeProfile, target_snr_db: f64, seed: u64, params: &LrpParams) -> Result<RangeProfile> {
    if p.max_amplitude() <= 0.0 {
        return Err(Error::DegenerateProfile);
    }
    if target_snr_db == f64::INFINITY {
        return Ok(p.clone());
    }
    if !target_snr_db.is_finite() {
        return Err(Error::NonFinite("target SNR"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[0x4015e]));
    let draw: Vec<f64> = (0..p.n_bins())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        })
        .collect();

    let apply = |sigma: f64| -> Result<RangeProfile> {
        RangeProfile::new(
            p.amplitudes().iter().zip(&draw).map(|(a, z)| a + sigma * z).collect(),
            p.delta_r(),
        )
    };
    let estimate = |sigma: f64| -> Option<f64> {
        let noisy = apply(sigma).ok()?;
        let mask = activation_mask(&noisy, params).ok()?;
        snr_db_with_mask(&noisy, &mask).ok()
    };

    let sigma0 = closed_form_sigma(p, target_snr_db, params)?;
    let (mut lo, mut hi) = (sigma0.ln() - 3.0, sigma0.ln() + 3.0);
    let sigma = match (estimate(lo.exp()), estimate(hi.exp())) {
        (Some(a), Some(b)) if a >= target_snr_db && b <= target_snr_db => {
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                match estimate(mid.exp()) {
                    Some(e) if e >= target_snr_db => lo = mid,
                    _ => hi = mid,
                }
            }
            (0.5 * (lo + hi)).exp()
        }
        _ => sigma0,
    };
    apply(sigma)
}

/// Noise scale whose expected mask-based SNR hits the target, using the
/// clean profile's mask: solves `(S1 + 2k m1 s + s^2) = R (S0 + 2k m0 s + s^2)`
/// with `k = E|z| = sqrt(2/pi)`.
fn closed_form_sigma(p: &RangeProfile, target_snr_db: f64, params: &LrpParams) -> Result<f64> {
    let mask = activation_mask(p, params)?;
    let ratio = 10f64.powf(target_snr_db / 10.0);
    let (mut s1, mut m1, mut n1, mut s0, mut m0, mut n0) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &sel) in p.amplitudes().iter().zip(mask.selected()) {
        if sel {
            s1 += a * a;
            m1 += a;
            n1 += 1.0;
        } else {
            s0 += a * a;
            m0 += a;
            n0 += 1.0;
        }
    }
    if n1 == 0.0 {
        return Err(Error::NoTargetDetected);
    }
    let (s1, m1) = (s1 / n1, m1 / n1);
    let (s0, m0) = if n0 > 0.0 { (s0 / n0, m0 / n0) } else { (0.0, 0.0) };
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let a = ratio - 1.0;
    let b = 2.0 * k * (ratio * m0 - m1);
    let c = ratio * s0 - s1;
    let disc = b * b - 4.0 * a * c;
    let sigma = if a.abs() < 1e-12 {
        (-c / b).abs()
    } else {
        (-b + disc.max(0.0).sqrt()) / (2.0 * a)
    };
    let floor = 1e-9 * p.max_amplitude();
    Ok(if sigma.is_finite() && sigma > floor { sigma } else { floor.max(s1.sqrt() / ratio.sqrt()) })
}

/// Full chain: project, integrate, add noise.
pub fn simulate_profile(
    ship: &ShipGeometry,
    cond: &AcquisitionCondition,
    spec: &GridSpec,
    seed: u64,
    params: &LrpParams,
) -> Result<RangeProfile> {
    let grid = project_scatterers(ship, cond.aspect_angle, spec)?;
    let clean = form_hrrp(&grid)?;
    add_noise(&clean, cond.target_snr_db, seed, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{estimate_snr_db, lrp_meters, pearson};

    fn ship() -> ShipGeometry {
        generate_scatterers(100.0, 20.0, DEFAULT_DENSITY, 7).unwrap()
    }

    #[test]
    fn scatterers_are_deterministic_and_extreme() {
        let a = generate_scatterers(100.0, 20.0, 0.5, 7).unwrap();
        let b = generate_scatterers(100.0, 20.0, 0.5, 7).unwrap();
        assert_eq!(a, b);
        for seed in [0, 1, 99] {
            let s = generate_scatterers(100.0, 20.0, 0.5, seed).unwrap();
            let mx = s.scatterers.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
            let my = s.scatterers.iter().map(|s| s.y.abs()).fold(0.0, f64::max);
            assert_eq!(mx, 50.0);
            assert_eq!(my, 10.0);
            s.validate(DEFAULT_DELTA_R).unwrap();
            let bridges = s.scatterers.iter().filter(|s| s.facet == Facet::Superstructure).count();
            assert!((1..=3).contains(&bridges));
        }
        assert!(generate_scatterers(10.0, 20.0, 0.5, 0).is_err());
        assert!(generate_scatterers(100.0, 20.0, 0.0, 0).is_err());
    }

    #[test]
    fn layout_has_low_reflectivity_region() {
        let s = ship();
        let keel: Vec<f64> = s
            .scatterers
            .iter()
            .filter(|s| s.facet == Facet::Keel && s.x.abs() < 49.0)
            .map(|s| s.reflectivity)
            .collect();
        let max = keel.iter().copied().fold(0.0, f64::max);
        assert!(keel.iter().any(|&r| r < 0.2 * max));
    }

    /// Distance in bins between the outermost occupied range rows.
    fn extent(grid: &PolarRcsGrid) -> usize {
        let rows = grid.occupied_rows();
        rows.last().unwrap() - rows.first().unwrap()
    }

    #[test]
    fn projection_extent_keel_and_beam_on() {
        let spec = GridSpec::default();
        let s = ship();
        let e0 = extent(&project_scatterers(&s, 0.0, &spec).unwrap()) as i64;
        let e90 = extent(&project_scatterers(&s, 90.0, &spec).unwrap()) as i64;
        assert!((e0 - (100.0f64 / 1.5).ceil() as i64).abs() <= 1, "e0 = {e0}");
        assert!((e90 - (20.0f64 / 1.5).ceil() as i64).abs() <= 1, "e90 = {e90}");
    }

    #[test]
    fn origin_scatterer_lands_on_center_bin() {
        let spec = GridSpec::default();
        let mut s = ship();
        s.scatterers = vec![Scatterer {
            x: 0.0,
            y: 0.0,
            reflectivity: 1.0,
            facet: Facet::Point,
            phase: 0.3,
            rate: 2,
        }];
        for th in [0.0, 33.0, 90.0, 211.0] {
            let g = project_scatterers(&s, th, &spec).unwrap();
            let cells: Vec<_> = (0..g.n_bins())
                .flat_map(|r| (0..g.n_phi()).map(move |j| (r, j)))
                .filter(|&(r, j)| g.get(r, j) != 0.0)
                .collect();
            assert_eq!(cells.len(), 1);
            assert_eq!(cells[0].0, spec.center_bin());
        }
    }

    #[test]
    fn oversized_target_rejected() {
        let spec = GridSpec {
            n_bins: 32,
            ..GridSpec::default()
        };
        assert!(matches!(
            project_scatterers(&ship(), 0.0, &spec),
            Err(Error::TargetExceedsGrid)
        ));
    }

    #[test]
    fn hrrp_sums_azimuth() {
        let spec = GridSpec::default();
        let mut g = PolarRcsGrid::zeros(&spec);
        assert!(form_hrrp(&g).unwrap().amplitudes().iter().all(|&a| a == 0.0));
        g.add(10, 3, 3.0);
        let p = form_hrrp(&g).unwrap();
        assert_eq!(p.amplitudes()[10], 3.0);
        assert_eq!(p.amplitudes().iter().filter(|&&a| a != 0.0).count(), 1);
        g.add(12, 0, 2.0);
        g.add(12, 7, 5.0);
        assert_eq!(form_hrrp(&g).unwrap().amplitudes()[12], 7.0);
        assert_eq!(g.cell_count(), spec.n_bins * spec.n_phi);
    }

    #[test]
    fn hrrp_conserves_energy() {
        let spec = GridSpec::default();
        for th in [0.0, 17.0, 95.0, 260.0] {
            let g = project_scatterers(&ship(), th, &spec).unwrap();
            let p = form_hrrp(&g).unwrap();
            let s: f64 = p.amplitudes().iter().sum();
            assert!((s - g.total()).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn projection_extent_law_on_sweep() {
        let s = ship();
        for deg in 0..360 {
            let th = (deg as f64).to_radians();
            let us: Vec<f64> = s.scatterers.iter().map(|p| p.x * th.cos() + p.y * th.sin()).collect();
            let span = us.iter().copied().fold(f64::MIN, f64::max) - us.iter().copied().fold(f64::MAX, f64::min);
            assert!((span - tlop(100.0, 20.0, deg as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_is_deterministic_and_high_snr_is_quiet() {
        let params = LrpParams::default();
        let clean = form_hrrp(&project_scatterers(&ship(), 30.0, &GridSpec::default()).unwrap()).unwrap();
        let a = add_noise(&clean, 13.0, 5, &params).unwrap();
        assert_eq!(a, add_noise(&clean, 13.0, 5, &params).unwrap());
        assert_ne!(a, add_noise(&clean, 13.0, 6, &params).unwrap());
        let hi = add_noise(&clean, 60.0, 5, &params).unwrap();
        let num: f64 = hi.amplitudes().iter().zip(clean.amplitudes()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = clean.amplitudes().iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 0.005);
        assert!(add_noise(&RangeProfile::zeros(64, 1.5).unwrap(), 13.0, 1, &params).is_err());
    }

    #[test]
    fn snr_round_trip_at_13_db() {
        let params = LrpParams::default();
        let clean = form_hrrp(&project_scatterers(&ship(), 30.0, &GridSpec::default()).unwrap()).unwrap();
        let mean: f64 = (0..100)
            .map(|seed| estimate_snr_db(&add_noise(&clean, 13.0, seed, &params).unwrap(), &params).unwrap())
            .sum::<f64>()
            / 100.0;
        assert!((mean - 13.0).abs() <= 1.0, "mean {mean}");
    }

    #[test]
    fn composition_matches_stepwise() {
        let params = LrpParams::default();
        let spec = GridSpec::default();
        let cond = AcquisitionCondition::new(75.0, 20.0, 13.0).unwrap();
        let direct = simulate_profile(&ship(), &cond, &spec, 11, &params).unwrap();
        let grid = project_scatterers(&ship(), 55.0, &spec).unwrap();
        let stepwise = add_noise(&form_hrrp(&grid).unwrap(), 13.0, 11, &params).unwrap();
        assert_eq!(direct, stepwise);
    }

    #[test]
    fn noiseless_lrp_tracks_tlop() {
        let params = LrpParams::default();
        let spec = GridSpec::default();
        let s = ship();
        let (mut lrps, mut tlops) = (vec![], vec![]);
        for deg in 0..360 {
            let cond = AcquisitionCondition::from_aspect(deg as f64, f64::INFINITY).unwrap();
            let p = simulate_profile(&s, &cond, &spec, 0, &params).unwrap();
            let l = lrp_meters(&p, &params).unwrap();
            let t = tlop(100.0, 20.0, deg as f64);
            assert!((l - t).abs() <= 2.0 * spec.delta_r, "deg {deg}: lrp {l} tlop {t}");
            lrps.push(l);
            tlops.push(t);
        }
        assert!(pearson(&lrps, &tlops).unwrap() > 0.99);
    }

    #[test]
    fn opposite_aspects_share_extent() {
        let spec = GridSpec::default();
        let params = LrpParams::default();
        let s = ship();
        for deg in [0.0, 30.0, 60.0, 90.0, 135.0] {
            let a = form_hrrp(&project_scatterers(&s, deg, &spec).unwrap()).unwrap();
            let b = form_hrrp(&project_scatterers(&s, deg + 180.0, &spec).unwrap()).unwrap();
            let (la, lb) = (lrp_meters(&a, &params).unwrap(), lrp_meters(&b, &params).unwrap());
            assert!((la - lb).abs() <= 2.0 * spec.delta_r, "{deg}: {la} vs {lb}");
        }
    }
}
