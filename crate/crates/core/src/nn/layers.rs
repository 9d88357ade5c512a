//! Parameterized building blocks recorded onto a [`Tape`].

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Activation, Tape, Var};
use super::tensor::Tensor;

fn scaled_normal(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * std;
    }
    t
}

/// Number of fixed position channels appended to network inputs.
pub const COORD_CHANNELS: usize = 2;

/// Position along range as `[ramp, |ramp|]`, ramp in `(-1, 1)` and zero at
/// the centre bin. Plain convolutions are translation-equivariant, so without
/// these the networks could not tell where the grid centre is.
pub fn coordinate_channels(batch: usize, len: usize) -> Tensor {
    let ramp: Vec<f64> = (0..len).map(|i| (2.0 * i as f64 + 1.0) / len as f64 - 1.0).collect();
    let mut data = Vec::with_capacity(batch * COORD_CHANNELS * len);
    for _ in 0..batch {
        data.extend_from_slice(&ramp);
        data.extend(ramp.iter().map(|v| v.abs()));
    }
    Tensor::new(vec![batch, COORD_CHANNELS, len], data).expect("coordinate shape")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / din as f64).sqrt();
        Self {
            w: store.add(format!("{name}.w"), scaled_normal(&[dout, din], std, rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[dout])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.linear(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = (1.0 / (cin * kernel) as f64).sqrt();
        Self {
            w: store.add(format!("{name}.w"), scaled_normal(&[cout, cin, kernel], std, rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[cout])),
            stride,
            pad,
        }
    }

    /// Stride-1 convolution with "same" padding for odd kernels.
    pub fn same(store: &mut ParamStore, name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut Rng) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        Self::new(store, name, cin, cout, kernel, 1, kernel / 2, rng)
    }

    pub fn zero_init(self, store: &mut ParamStore) -> Self {
        store.tensor_mut(self.w).data_mut().fill(0.0);
        store.tensor_mut(self.b).data_mut().fill(0.0);
        self
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.conv1d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

/// Group count used throughout. Two groups keep several channels per group,
/// so a per-channel embedding shift added before the norm is not erased.
pub fn default_groups(channels: usize) -> usize {
    if channels % 2 == 0 {
        2
    } else {
        1
    }
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::filled(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            groups: default_groups(channels),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.group_norm(x, g, b, self.groups)
    }
}

/// Residual block `x + F(x + proj(emb))`, `F = [norm, act, conv, norm, act, conv]`.
///
/// The final convolution starts at zero so a fresh block is the identity.
/// Blocks built without normalization skip both norm layers.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub norm1: Option<GroupNorm>,
    pub conv1: Conv1d,
    pub norm2: Option<GroupNorm>,
    pub conv2: Conv1d,
    pub emb_proj: Option<Linear>,
    pub act: Activation,
    pub channels: usize,
}

impl ResBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        embed_dim: Option<usize>,
        normalize: bool,
        act: Activation,
        rng: &mut Rng,
    ) -> Self {
        let norm1 = normalize.then(|| GroupNorm::new(store, &format!("{name}.norm1"), channels));
        let conv1 = Conv1d::same(store, &format!("{name}.conv1"), channels, channels, 3, rng);
        let norm2 = normalize.then(|| GroupNorm::new(store, &format!("{name}.norm2"), channels));
        let conv2 = Conv1d::same(store, &format!("{name}.conv2"), channels, channels, 3, rng).zero_init(store);
        let emb_proj = embed_dim.map(|e| Linear::new(store, &format!("{name}.emb"), e, channels, rng));
        Self {
            norm1,
            conv1,
            norm2,
            conv2,
            emb_proj,
            act,
            channels,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, emb: Option<Var>) -> Var {
        assert_eq!(tape.shape(x)[1], self.channels, "resblock: channel mismatch");
        let mut h = x;
        if let (Some(proj), Some(e)) = (&self.emb_proj, emb) {
            let pe = proj.forward(tape, e);
            h = tape.add_channel(h, pe);
        }
        if let Some(n) = &self.norm1 {
            h = n.forward(tape, h);
        }
        h = tape.act(h, self.act);
        h = self.conv1.forward(tape, h);
        if let Some(n) = &self.norm2 {
            h = n.forward(tape, h);
        }
        h = tape.act(h, self.act);
        h = self.conv2.forward(tape, h);
        tape.add(x, h)
    }
}

/// Two-layer perceptron `fc2(act(fc1(x)))`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
    pub act: Activation,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, hidden: usize, dout: usize, act: Activation, rng: &mut Rng) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), din, hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dout, rng),
            act,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.fc1.forward(tape, x);
        let h = tape.act(h, self.act);
        self.fc2.forward(tape, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn fresh_resblock_is_identity() {
        let mut store = ParamStore::default();
        let mut rng = rng_from_seed(3);
        let block = ResBlock::new(&mut store, "rb", 8, Some(6), true, Activation::Silu, &mut rng);
        let x: Vec<f64> = (0..2 * 8 * 16).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let e: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut tape = Tape::new(&store);
        let xv = tape.constant(Tensor::new(vec![2, 8, 16], x.clone()).unwrap());
        let ev = tape.constant(Tensor::new(vec![2, 6], e).unwrap());
        let y = block.forward(&mut tape, xv, Some(ev));
        assert_eq!(tape.value(y).data(), x.as_slice());
    }

    #[test]
    fn embedding_reaches_resblock_output() {
        let mut store = ParamStore::default();
        let mut rng = rng_from_seed(4);
        let block = ResBlock::new(&mut store, "rb", 4, Some(3), true, Activation::Silu, &mut rng);
        // Give the last conv some weight so F is not identically zero.
        for v in store.tensor_mut(block.conv2.w).data_mut() {
            *v = 0.1;
        }
        let x = Tensor::new(vec![1, 4, 8], (0..32).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let run = |e: Vec<f64>| {
            let mut tape = Tape::new(&store);
            let xv = tape.constant(x.clone());
            let ev = tape.constant(Tensor::new(vec![1, 3], e).unwrap());
            let y = block.forward(&mut tape, xv, Some(ev));
            tape.value(y).data().to_vec()
        };
        let a = run(vec![0.0; 3]);
        let b = run(vec![1.0, -0.5, 2.0]);
        assert!(a.iter().zip(&b).any(|(p, q)| (p - q).abs() > 1e-6));
    }
}
