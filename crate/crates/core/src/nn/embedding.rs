//! Angle, timestep and ship-condition embeddings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::ConditionVector;

use super::layers::Mlp;
use super::params::ParamStore;
use super::tape::{Activation, Tape, Var};
use super::tensor::Tensor;

/// Integer harmonics `1..=n`. Low harmonics keep the angle features smooth,
/// which generalizes across ships better than geometric spacing.
pub fn angle_frequencies(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64).collect()
}

/// `(sin ω_k θ, cos ω_k θ)` pairs for integer `ω_k`, so a full turn maps to itself.
pub fn sinusoidal_embedding(angle_deg: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 == 1 {
        return Err(Error::invalid(format!("embedding dim must be even and positive, got {dim}")));
    }
    if !angle_deg.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    let rad = angle_deg.to_radians();
    let mut out = Vec::with_capacity(dim);
    for w in angle_frequencies(dim / 2) {
        let (s, c) = (w * rad).sin_cos();
        out.push(s);
        out.push(c);
    }
    Ok(out)
}

/// Transformer-style embedding of a diffusion step.
pub fn timestep_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let f = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (t * f).sin();
        out[half + k] = (t * f).cos();
    }
    out
}

/// Which parts of the condition vector a model is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    None,
    Aspect,
    Dimensions,
    Both,
}

impl Conditioning {
    pub const ALL: [Conditioning; 4] = [Self::None, Self::Aspect, Self::Dimensions, Self::Both];

    pub fn uses_aspect(self) -> bool {
        matches!(self, Self::Aspect | Self::Both)
    }

    pub fn uses_dimensions(self) -> bool {
        matches!(self, Self::Dimensions | Self::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Aspect => "aspect",
            Self::Dimensions => "dimensions",
            Self::Both => "both",
        }
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "aspect" => Ok(Self::Aspect),
            "dimensions" => Ok(Self::Dimensions),
            "both" => Ok(Self::Both),
            other => Err(Error::invalid(format!(
                "unknown conditioning mode {other:?} (expected none, aspect, dimensions or both)"
            ))),
        }
    }
}

/// Fleet maxima used to bring ship dimensions to O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScale {
    pub length_max: f64,
    pub width_max: f64,
}

impl Default for DimensionScale {
    fn default() -> Self {
        Self {
            length_max: 300.0,
            width_max: 75.0,
        }
    }
}

/// Raw condition features: the angle embedding followed by scaled length and
/// width. Features hidden by `mode` are zero.
pub fn condition_features(c: &ConditionVector, mode: Conditioning, angle_dim: usize, scale: &DimensionScale) -> Result<Vec<f64>> {
    let mut f = if mode.uses_aspect() {
        sinusoidal_embedding(c.aspect_angle, angle_dim)?
    } else {
        vec![0.0; angle_dim]
    };
    if mode.uses_dimensions() {
        f.push(c.length / scale.length_max);
        f.push(c.width / scale.width_max);
    } else {
        f.extend([0.0, 0.0]);
    }
    Ok(f)
}

/// Maps condition features through `linear -> SiLU -> linear`.
#[derive(Debug, Clone)]
pub struct ConditionEmbedding {
    pub mlp: Mlp,
    pub angle_dim: usize,
    pub embed_dim: usize,
}

impl ConditionEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, angle_dim: usize, embed_dim: usize, rng: &mut Rng) -> Self {
        Self {
            mlp: Mlp::new(store, name, angle_dim + 2, embed_dim, embed_dim, Activation::Silu, rng),
            angle_dim,
            embed_dim,
        }
    }

    pub fn n_features(&self) -> usize {
        self.angle_dim + 2
    }

    /// `features` is `[batch, angle_dim + 2]`.
    pub fn forward(&self, tape: &mut Tape, features: Var) -> Var {
        self.mlp.forward(tape, features)
    }

    pub fn features_tensor(&self, conds: &[ConditionVector], mode: Conditioning, scale: &DimensionScale) -> Result<Tensor> {
        let mut flat = Vec::with_capacity(conds.len() * self.n_features());
        for c in conds {
            flat.extend(condition_features(c, mode, self.angle_dim, scale)?);
        }
        Tensor::new(vec![conds.len(), self.n_features()], flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_angle_embedding() {
        let e = sinusoidal_embedding(0.0, 16).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
    }

    #[test]
    fn full_turn_periodicity() {
        for a in [0.0, 17.5, 90.0, 271.0] {
            let e0 = sinusoidal_embedding(a, 16).unwrap();
            let e1 = sinusoidal_embedding(a + 360.0, 16).unwrap();
            for (x, y) in e0.iter().zip(&e1) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_dim_rejected() {
        assert!(sinusoidal_embedding(10.0, 7).is_err());
        assert!(sinusoidal_embedding(10.0, 0).is_err());
    }

    #[test]
    fn one_degree_grid_is_injective() {
        let embs: Vec<Vec<f64>> = (0..360).map(|a| sinusoidal_embedding(a as f64, 16).unwrap()).collect();
        for i in 0..360 {
            for j in (i + 1)..360 {
                let d: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d > 1e-6, "{i} and {j} collide");
            }
        }
        let d: f64 = embs[10].iter().zip(&embs[11]).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(d > 0.0);
    }

    #[test]
    fn frequencies_are_harmonics() {
        assert_eq!(angle_frequencies(4), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(angle_frequencies(0).is_empty());
    }

    #[test]
    fn condition_embedding_is_deterministic_and_periodic() {
        let mut store = ParamStore::default();
        let enc = ConditionEmbedding::new(&mut store, "cond", 8, 12, &mut rng_from_seed(9));
        let scale = DimensionScale::default();
        let run = |c: ConditionVector| {
            let mut tape = Tape::new(&store);
            let f = tape.constant(enc.features_tensor(&[c], Conditioning::Both, &scale).unwrap());
            let y = enc.forward(&mut tape, f);
            tape.value(y).data().to_vec()
        };
        let a = run(ConditionVector::new(120.0, 20.0, 33.0).unwrap());
        let b = run(ConditionVector::new(120.0, 20.0, 33.0).unwrap());
        assert_eq!(a, b);
        let f0 = condition_features(&ConditionVector::new(120.0, 20.0, 33.0).unwrap(), Conditioning::Both, 8, &scale).unwrap();
        let f1 = condition_features(
            &ConditionVector {
                length: 120.0,
                width: 20.0,
                aspect_angle: 393.0,
            },
            Conditioning::Both,
            8,
            &scale,
        )
        .unwrap();
        for (x, y) in f0.iter().zip(&f1) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn modes_hide_features() {
        let c = ConditionVector::new(100.0, 20.0, 30.0).unwrap();
        let s = DimensionScale::default();
        let a = condition_features(&c, Conditioning::Aspect, 4, &s).unwrap();
        assert_eq!(&a[4..], &[0.0, 0.0]);
        let d = condition_features(&c, Conditioning::Dimensions, 4, &s).unwrap();
        assert!(d[..4].iter().all(|&v| v == 0.0));
        assert!(condition_features(&c, Conditioning::None, 4, &s).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!("both".parse::<Conditioning>().unwrap(), Conditioning::Both);
        assert!("all".parse::<Conditioning>().is_err());
    }
}
