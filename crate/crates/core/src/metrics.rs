//! Generation-fidelity metrics restricted to activated cells, and the
//! neighborhood best-match protocol: each generated profile is scored against
//! every real profile of the same ship within `±delta` degrees of its aspect,
//! the closest by `mse_f` is kept, and scores are averaged over the set.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{activation_mask, ActivationMask, LrpParams};
use crate::error::{Error, Result};
use crate::types::{circular_distance, ConditionVector, RangeProfile};

/// Reporting scale applied to the masked mean squared error.
pub const MSE_F_SCALE: f64 = 100.0;
pub const PSNR_CAP_DB: f64 = 100.0;
pub const DEFAULT_DELTA_DEG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mse_f: f64,
    pub cos_f: f64,
    pub psnr_db: f64,
}

fn check_lengths(a: &RangeProfile, b: &RangeProfile) -> Result<()> {
    if a.n_bins() != b.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "profile lengths {} and {}",
            a.n_bins(),
            b.n_bins()
        )));
    }
    Ok(())
}

fn masked_mse(a: &RangeProfile, b: &RangeProfile, mask: &ActivationMask) -> Result<f64> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::NoTargetDetected);
    }
    let sum: f64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .zip(mask.selected())
        .filter(|(_, &s)| s)
        .map(|((x, y), _)| (x - y) * (x - y))
        .sum();
    Ok(sum / n as f64)
}

fn masked_cosine(a: &RangeProfile, b: &RangeProfile, mask: &ActivationMask) -> Result<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for ((x, y), &s) in a.amplitudes().iter().zip(b.amplitudes()).zip(mask.selected()) {
        if s {
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::invalid("zero vector on the activation mask"));
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

fn union_mask(a: &RangeProfile, b: &RangeProfile, params: &LrpParams) -> Result<ActivationMask> {
    check_lengths(a, b)?;
    activation_mask(a, params)?.union(&activation_mask(b, params)?)
}

/// Mean squared difference over the union activation mask, times 100.
pub fn mse_f(generated: &RangeProfile, reference: &RangeProfile, params: &LrpParams) -> Result<f64> {
    let mask = union_mask(generated, reference, params)?;
    Ok(MSE_F_SCALE * masked_mse(generated, reference, &mask)?)
}

/// Cosine similarity over the union activation mask.
pub fn cos_f(generated: &RangeProfile, reference: &RangeProfile, params: &LrpParams) -> Result<f64> {
    let mask = union_mask(generated, reference, params)?;
    masked_cosine(generated, reference, &mask)
}

/// PSNR (peak 1) over the union activation mask, capped at 100 dB.
pub fn psnr_activated(generated: &RangeProfile, reference: &RangeProfile, params: &LrpParams) -> Result<f64> {
    let mask = union_mask(generated, reference, params)?;
    Ok(psnr_from_mse(masked_mse(generated, reference, &mask)?))
}

/// All three scores with precomputed masks.
pub fn score_with_masks(
    generated: &RangeProfile,
    generated_mask: &ActivationMask,
    reference: &RangeProfile,
    reference_mask: &ActivationMask,
) -> Result<Scores> {
    check_lengths(generated, reference)?;
    let mask = generated_mask.union(reference_mask)?;
    let mse = masked_mse(generated, reference, &mask)?;
    Ok(Scores {
        mse_f: MSE_F_SCALE * mse,
        cos_f: masked_cosine(generated, reference, &mask)?,
        psnr_db: psnr_from_mse(mse),
    })
}

/// A real profile available as a neighborhood candidate.
#[derive(Debug, Clone)]
pub struct Reference {
    pub ship_id: String,
    pub condition: ConditionVector,
    pub profile: RangeProfile,
    mask: ActivationMask,
}

impl Reference {
    pub fn new(ship_id: impl Into<String>, condition: ConditionVector, profile: RangeProfile, params: &LrpParams) -> Result<Self> {
        let mask = activation_mask(&profile, params)?;
        Ok(Self {
            ship_id: ship_id.into(),
            condition,
            profile,
            mask,
        })
    }
}

/// Real profiles indexed by ship identity.
#[derive(Debug, Clone, Default)]
pub struct ReferenceSet {
    by_ship: HashMap<String, Vec<Reference>>,
}

impl ReferenceSet {
    pub fn new(refs: impl IntoIterator<Item = Reference>) -> Self {
        let mut by_ship: HashMap<String, Vec<Reference>> = HashMap::new();
        for r in refs {
            by_ship.entry(r.ship_id.clone()).or_default().push(r);
        }
        Self { by_ship }
    }

    pub fn len(&self) -> usize {
        self.by_ship.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ship.is_empty()
    }

    pub fn ship(&self, ship_id: &str) -> &[Reference] {
        self.by_ship.get(ship_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct BestMatch<'a> {
    pub reference: &'a Reference,
    pub scores: Scores,
}

/// Best `mse_f` match among same-ship references within the circular window
/// `[theta - delta, theta + delta]`; `None` when the window is empty.
pub fn neighborhood_best_match<'a>(
    generated: &RangeProfile,
    ship_id: &str,
    cond: &ConditionVector,
    real_set: &'a ReferenceSet,
    delta: f64,
    params: &LrpParams,
) -> Result<Option<BestMatch<'a>>> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let gen_mask = activation_mask(generated, params)?;
    let mut best: Option<BestMatch<'a>> = None;
    for r in real_set.ship(ship_id) {
        if circular_distance(r.condition.aspect_angle, cond.aspect_angle) > delta {
            continue;
        }
        let scores = match score_with_masks(generated, &gen_mask, &r.profile, &r.mask) {
            Ok(s) => s,
            // A generated profile with no activated cells still scores
            // wherever a non-empty reference mask exists.
            Err(Error::NoTargetDetected) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| scores.mse_f < b.scores.mse_f) {
            best = Some(BestMatch { reference: r, scores });
        }
    }
    Ok(best)
}

/// One generated sample per condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub ship_id: String,
    pub condition: ConditionVector,
    pub profile: RangeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub conditioning: String,
    pub psnr_db: f64,
    pub mse_f: f64,
    pub cos_f: f64,
    pub n_evaluated: usize,
    pub n_skipped_empty_neighborhood: usize,
    pub delta_deg: f64,
    /// Which real profiles formed the candidate pool.
    pub reference_pool: String,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "model,conditioning,psnr,mse_f,cos_f,n,skipped";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{:.6},{:.6},{:.6},{},{}",
            self.model,
            self.conditioning,
            self.psnr_db,
            self.mse_f,
            self.cos_f,
            self.n_evaluated,
            self.n_skipped_empty_neighborhood
        )
        .unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Average best-match scores over the generated set.
pub fn evaluate_set(
    generated: &[GeneratedSample],
    real_set: &ReferenceSet,
    delta: f64,
    params: &LrpParams,
) -> Result<EvalReport> {
    let (mut psnr, mut mse, mut cos) = (0.0, 0.0, 0.0);
    let (mut n, mut skipped) = (0usize, 0usize);
    for g in generated {
        match neighborhood_best_match(&g.profile, &g.ship_id, &g.condition, real_set, delta, params)? {
            Some(best) => {
                psnr += best.scores.psnr_db;
                mse += best.scores.mse_f;
                cos += best.scores.cos_f;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    if n == 0 {
        return Err(Error::invalid("no generated sample had a non-empty neighborhood"));
    }
    let nf = n as f64;
    Ok(EvalReport {
        model: String::new(),
        conditioning: String::new(),
        psnr_db: psnr / nf,
        mse_f: mse / nf,
        cos_f: cos / nf,
        n_evaluated: n,
        n_skipped_empty_neighborhood: skipped,
        delta_deg: delta,
        reference_pool: "all real profiles of the matched ship".into(),
    })
}
