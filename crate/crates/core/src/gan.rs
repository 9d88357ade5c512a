//! Conditional Wasserstein GAN with weight clipping and an MSE-augmented
//! generator objective.
//!
//! Generator and critic share one [`ParamStore`] (generator tensors first) so
//! a single tape covers both; each side has its own optimizer and the other
//! side is frozen while it trains.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ddpm::finalize_amplitudes;
use crate::error::{Error, Result};
use crate::nn::embedding::condition_features;
use crate::nn::layers::{coordinate_channels, Conv1d, GroupNorm, Linear, ResBlock, COORD_CHANNELS};
use crate::nn::{clip_subset, Activation, Adam, AdamConfig, ConditionEmbedding, Conditioning, DimensionScale};
use crate::nn::{NetworkConfig, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::types::{ConditionVector, RangeProfile};

pub const DEFAULT_LAMBDA_MSE: f64 = 50.0;
pub const DEFAULT_CLIP_BOUND: f64 = 0.05;
pub const DEFAULT_N_CRITIC: usize = 5;
pub const DEFAULT_LATENT_DIM: usize = 64;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub lambda_mse: f64,
    pub clip_bound: f64,
    pub n_critic: usize,
    pub latent_dim: usize,
    pub batch_size: usize,
    /// Reuse one latent per batch position on every update instead of fresh draws.
    #[serde(default)]
    pub fixed_latent_seed: Option<u64>,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            lambda_mse: DEFAULT_LAMBDA_MSE,
            clip_bound: DEFAULT_CLIP_BOUND,
            n_critic: DEFAULT_N_CRITIC,
            latent_dim: DEFAULT_LATENT_DIM,
            batch_size: 32,
            fixed_latent_seed: None,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mse >= 0.0 && self.lambda_mse.is_finite()) {
            return Err(Error::invalid(format!("lambda_mse must be >= 0, got {}", self.lambda_mse)));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return Err(Error::invalid(format!("clip_bound must be > 0, got {}", self.clip_bound)));
        }
        if self.n_critic == 0 || self.latent_dim == 0 || self.batch_size == 0 {
            return Err(Error::invalid("n_critic, latent_dim and batch_size must be positive"));
        }
        Ok(())
    }
}

/// A network mapping `(z [B, latent], c)` to profiles `[B, 1, L]`.
pub trait GeneratorNet {
    fn generate(&self, tape: &mut Tape<'_>, z: Var, conds: &[ConditionVector]) -> Result<Var>;
}

/// A network scoring profiles `[B, 1, L]` under `c`, returning `[B, 1]`.
pub trait CriticNet {
    fn score(&self, tape: &mut Tape<'_>, x: Var, conds: &[ConditionVector]) -> Result<Var>;
}

fn nonempty(conds: &[ConditionVector]) -> Result<()> {
    if conds.is_empty() {
        Err(Error::invalid("empty batch"))
    } else {
        Ok(())
    }
}

/// `-E[D(G(z, c))]`.
pub fn generator_loss<G: GeneratorNet, D: CriticNet>(
    tape: &mut Tape<'_>,
    critic: &D,
    generator: &G,
    z: Var,
    conds: &[ConditionVector],
) -> Result<Var> {
    nonempty(conds)?;
    let fake = generator.generate(tape, z, conds)?;
    let scores = critic.score(tape, fake, conds)?;
    let m = tape.mean(scores);
    Ok(tape.scale(m, -1.0))
}

/// `E[D(G(z, c))] - E[D(x)]`.
pub fn critic_loss<G: GeneratorNet, D: CriticNet>(
    tape: &mut Tape<'_>,
    critic: &D,
    generator: &G,
    z: Var,
    x: Var,
    conds: &[ConditionVector],
) -> Result<Var> {
    nonempty(conds)?;
    let fake = generator.generate(tape, z, conds)?;
    critic_loss_on(tape, critic, fake, x, conds)
}

fn critic_loss_on<D: CriticNet>(tape: &mut Tape<'_>, critic: &D, fake: Var, x: Var, conds: &[ConditionVector]) -> Result<Var> {
    let sf = critic.score(tape, fake, conds)?;
    let sr = critic.score(tape, x, conds)?;
    let mf = tape.mean(sf);
    let mr = tape.mean(sr);
    Ok(tape.sub(mf, mr))
}

/// Mean over the batch of the mean squared bin-wise error `‖x − G(z, c)‖²`.
pub fn mse_loss<G: GeneratorNet>(
    tape: &mut Tape<'_>,
    generator: &G,
    z: Var,
    x: Var,
    conds: &[ConditionVector],
) -> Result<Var> {
    nonempty(conds)?;
    let fake = generator.generate(tape, z, conds)?;
    Ok(tape.mse(fake, x))
}

/// `L_advG + λ · L_mse`.
pub fn generator_total_loss(adversarial: f64, mse: f64, lambda_mse: f64) -> f64 {
    adversarial + lambda_mse * mse
}

fn total_on_tape(tape: &mut Tape<'_>, adversarial: Var, mse: Var, lambda_mse: f64) -> Var {
    let w = tape.scale(mse, lambda_mse);
    tape.add(adversarial, w)
}

/// Full model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub net: NetworkConfig,
    pub conditioning: Conditioning,
    pub scale: DimensionScale,
    pub train: GanTrainConfig,
    pub lr_generator: f64,
    pub lr_critic: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            net: NetworkConfig::desk(),
            conditioning: Conditioning::Both,
            scale: DimensionScale::default(),
            train: GanTrainConfig::default(),
            lr_generator: 5e-5,
            lr_critic: 5e-5,
        }
    }
}

fn features(conds: &[ConditionVector], mode: Conditioning, angle_dim: usize, scale: &DimensionScale) -> Result<Tensor> {
    let mut flat = Vec::new();
    for c in conds {
        flat.extend(condition_features(c, mode, angle_dim, scale)?);
    }
    Tensor::new(vec![conds.len(), angle_dim + 2], flat)
}

#[derive(Debug, Clone)]
struct UpStage {
    conv: Conv1d,
    blocks: Vec<ResBlock>,
}

/// Latent and condition feed a linear map onto the coarsest feature map,
/// which is upsampled stage by stage with the condition embedding injected
/// into every ResBlock.
#[derive(Debug, Clone)]
pub struct Generator {
    cond: ConditionEmbedding,
    fc_z: Linear,
    fc_c: Linear,
    mid: Vec<ResBlock>,
    ups: Vec<UpStage>,
    out_norm: GroupNorm,
    output: Conv1d,
    mode: Conditioning,
    scale: DimensionScale,
    coarse: (usize, usize),
    latent_dim: usize,
}

impl Generator {
    fn new(store: &mut ParamStore, cfg: &GanConfig, rng: &mut Rng) -> Self {
        let net = &cfg.net;
        let e = net.embed_dim;
        let (cc, lc) = (net.channels(net.n_stages), net.coarsest_len());
        let cond = ConditionEmbedding::new(store, "gen.cond", net.angle_dim, e, rng);
        let fc_z = Linear::new(store, "gen.fc_z", cfg.train.latent_dim, cc * lc, rng);
        let fc_c = Linear::new(store, "gen.fc_c", e, cc * lc, rng);
        let block = |store: &mut ParamStore, name: String, c: usize, rng: &mut Rng| {
            ResBlock::new(store, &name, c, Some(e), true, Activation::Silu, rng)
        };
        let mid = (0..net.n_resblocks_per_stage)
            .map(|k| block(store, format!("gen.mid.rb{k}"), cc, rng))
            .collect();
        let mut ups = Vec::new();
        for s in (0..net.n_stages).rev() {
            let c = net.channels(s);
            let conv = Conv1d::same(store, &format!("gen.up{s}.conv"), net.channels(s + 1), c, 3, rng);
            let blocks = (0..net.n_resblocks_per_stage)
                .map(|k| block(store, format!("gen.up{s}.rb{k}"), c, rng))
                .collect();
            ups.push(UpStage { conv, blocks });
        }
        let out_norm = GroupNorm::new(store, "gen.out.norm", net.channels(0));
        let output = Conv1d::same(store, "gen.out.conv", net.channels(0), 1, 3, rng);
        Self {
            cond,
            fc_z,
            fc_c,
            mid,
            ups,
            out_norm,
            output,
            mode: cfg.conditioning,
            scale: cfg.scale,
            coarse: (cc, lc),
            latent_dim: cfg.train.latent_dim,
        }
    }
}

impl GeneratorNet for Generator {
    fn generate(&self, tape: &mut Tape<'_>, z: Var, conds: &[ConditionVector]) -> Result<Var> {
        let b = conds.len();
        if tape.shape(z) != [b, self.latent_dim] {
            return Err(Error::ShapeMismatch(format!(
                "latent must be [{b}, {}], got {:?}",
                self.latent_dim,
                tape.shape(z)
            )));
        }
        let f = tape.constant(features(conds, self.mode, self.cond.angle_dim, &self.scale)?);
        let emb = self.cond.forward(tape, f);
        let emb = tape.silu(emb);
        let hz = self.fc_z.forward(tape, z);
        let hc = self.fc_c.forward(tape, emb);
        let h = tape.add(hz, hc);
        let mut h = tape.reshape(h, &[b, self.coarse.0, self.coarse.1]);
        for rb in &self.mid {
            h = rb.forward(tape, h, Some(emb));
        }
        for stage in &self.ups {
            h = tape.upsample2(h);
            h = stage.conv.forward(tape, h);
            for rb in &stage.blocks {
                h = rb.forward(tape, h, Some(emb));
            }
        }
        h = self.out_norm.forward(tape, h);
        h = tape.silu(h);
        Ok(self.output.forward(tape, h))
    }
}

#[derive(Debug, Clone)]
struct DownStage {
    blocks: Vec<ResBlock>,
    down: Conv1d,
}

/// Convolutional critic without normalization; the condition embedding is
/// added in every ResBlock, mirroring the generator.
#[derive(Debug, Clone)]
pub struct Critic {
    cond: ConditionEmbedding,
    input: Conv1d,
    downs: Vec<DownStage>,
    mid: Vec<ResBlock>,
    head: Linear,
    mode: Conditioning,
    scale: DimensionScale,
    n_bins: usize,
}

impl Critic {
    fn new(store: &mut ParamStore, cfg: &GanConfig, rng: &mut Rng) -> Self {
        let net = &cfg.net;
        let e = net.embed_dim;
        let act = Activation::LeakyRelu(LEAKY_SLOPE);
        let cond = ConditionEmbedding::new(store, "critic.cond", net.angle_dim, e, rng);
        let input = Conv1d::same(store, "critic.input", 1 + COORD_CHANNELS, net.channels(0), 3, rng);
        let mut downs = Vec::new();
        for s in 0..net.n_stages {
            let c = net.channels(s);
            let blocks = (0..net.n_resblocks_per_stage)
                .map(|k| ResBlock::new(store, &format!("critic.down{s}.rb{k}"), c, Some(e), false, act, rng))
                .collect();
            let down = Conv1d::new(store, &format!("critic.down{s}.conv"), c, net.channels(s + 1), 4, 2, 1, rng);
            downs.push(DownStage { blocks, down });
        }
        let cm = net.channels(net.n_stages);
        let mid = (0..net.n_resblocks_per_stage)
            .map(|k| ResBlock::new(store, &format!("critic.mid.rb{k}"), cm, Some(e), false, act, rng))
            .collect();
        let head = Linear::new(store, "critic.head", cm, 1, rng);
        Self {
            cond,
            input,
            downs,
            mid,
            head,
            mode: cfg.conditioning,
            scale: cfg.scale,
            n_bins: net.n_bins,
        }
    }
}

impl CriticNet for Critic {
    fn score(&self, tape: &mut Tape<'_>, x: Var, conds: &[ConditionVector]) -> Result<Var> {
        let b = conds.len();
        if tape.shape(x) != [b, 1, self.n_bins] {
            return Err(Error::ShapeMismatch(format!(
                "critic expects [{b}, 1, {}], got {:?}",
                self.n_bins,
                tape.shape(x)
            )));
        }
        let f = tape.constant(features(conds, self.mode, self.cond.angle_dim, &self.scale)?);
        let emb = self.cond.forward(tape, f);
        let emb = tape.act(emb, Activation::LeakyRelu(LEAKY_SLOPE));
        let coords = tape.constant(coordinate_channels(b, self.n_bins));
        let x_in = tape.concat_channels(x, coords);
        let mut h = self.input.forward(tape, x_in);
        for stage in &self.downs {
            for rb in &stage.blocks {
                h = rb.forward(tape, h, Some(emb));
            }
            h = stage.down.forward(tape, h);
        }
        for rb in &self.mid {
            h = rb.forward(tape, h, Some(emb));
        }
        let pooled = tape.mean_length(h);
        Ok(self.head.forward(tape, pooled))
    }
}

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    /// Critic loss of the last critic update in the step.
    pub l_adv_d: f64,
    pub l_adv_g: f64,
    pub l_mse: f64,
    pub l_tot_g: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,l_advD,l_advG,l_mse,l_totG";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(s, "{},{},{},{},{}", self.step, self.l_adv_d, self.l_adv_g, self.l_mse, self.l_tot_g).unwrap();
        s
    }
}

/// Generator, critic, their optimizers and step counters.
#[derive(Debug, Clone)]
pub struct Wgan {
    pub config: GanConfig,
    pub store: ParamStore,
    pub generator: Generator,
    pub critic: Critic,
    generator_ids: Vec<ParamId>,
    critic_ids: Vec<ParamId>,
    opt_generator: Adam,
    opt_critic: Adam,
    pub generator_updates: u64,
    pub critic_updates: u64,
}

impl Wgan {
    pub fn new(config: GanConfig, seed: u64) -> Result<Self> {
        config.net.validate()?;
        config.train.validate()?;
        let mut store = ParamStore::default();
        let mut rng = rng_from_seed(seed);
        let generator = Generator::new(&mut store, &config, &mut rng);
        let split = store.len();
        let critic = Critic::new(&mut store, &config, &mut rng);
        let generator_ids: Vec<ParamId> = store.ids().take(split).collect();
        let critic_ids: Vec<ParamId> = store.ids().skip(split).collect();
        clip_subset(&mut store, &critic_ids, config.train.clip_bound)?;
        let opt_generator = Adam::for_params(&store, generator_ids.clone(), AdamConfig::with_lr(config.lr_generator));
        let opt_critic = Adam::for_params(&store, critic_ids.clone(), AdamConfig::with_lr(config.lr_critic));
        Ok(Self {
            config,
            store,
            generator,
            critic,
            generator_ids,
            critic_ids,
            opt_generator,
            opt_critic,
            generator_updates: 0,
            critic_updates: 0,
        })
    }

    pub fn critic_ids(&self) -> &[ParamId] {
        &self.critic_ids
    }

    pub fn generator_ids(&self) -> &[ParamId] {
        &self.generator_ids
    }

    pub fn generator_parameter_count(&self) -> usize {
        self.generator_ids.iter().map(|&id| self.store.tensor(id).len()).sum()
    }

    pub fn critic_parameter_count(&self) -> usize {
        self.critic_ids.iter().map(|&id| self.store.tensor(id).len()).sum()
    }

    /// Largest absolute critic parameter value.
    pub fn critic_max_abs(&self) -> f64 {
        self.critic_ids
            .iter()
            .flat_map(|&id| self.store.tensor(id).data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn latent(&self, n: usize, seed: u64) -> Result<Tensor> {
        let seed = self.config.train.fixed_latent_seed.unwrap_or(seed);
        let d = self.config.train.latent_dim;
        let mut z = Vec::with_capacity(n * d);
        for i in 0..n {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            z.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        Tensor::new(vec![n, d], z)
    }

    /// `n_critic` critic updates (each followed by clipping) and one generator
    /// update, all on `real` (profiles in `[0, 1]` with their conditions).
    pub fn train_step(&mut self, real: &[(Vec<f64>, ConditionVector)], seed: u64) -> Result<LossRecord> {
        self.train_step_observed(real, seed, |_| {})
    }

    /// As [`Wgan::train_step`], calling `after_critic_update` after every
    /// clipped critic update.
    pub fn train_step_observed<F: FnMut(&Wgan)>(
        &mut self,
        real: &[(Vec<f64>, ConditionVector)],
        seed: u64,
        mut after_critic_update: F,
    ) -> Result<LossRecord> {
        if real.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let n_bins = self.config.net.n_bins;
        if real.iter().any(|(x, _)| x.len() != n_bins) {
            return Err(Error::ShapeMismatch(format!("real profiles must have {n_bins} bins")));
        }
        let b = real.len();
        let conds: Vec<ConditionVector> = real.iter().map(|(_, c)| *c).collect();
        let x = Tensor::new(vec![b, 1, n_bins], real.iter().flat_map(|(x, _)| x.iter().copied()).collect())?;
        let mut l_adv_d = 0.0;
        for k in 0..self.config.train.n_critic {
            let z = self.latent(b, derive_seed(seed, &[0xc, k as u64]))?;
            let (loss, grads) = {
                let mut tape = Tape::new(&self.store);
                tape.freeze(&self.generator_ids);
                let zv = tape.constant(z);
                let xv = tape.constant(x.clone());
                let loss = critic_loss(&mut tape, &self.critic, &self.generator, zv, xv, &conds)?;
                (tape.scalar(loss), tape.backward(loss).into_param_grads(&self.store))
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite("critic loss"));
            }
            self.opt_critic.step(&mut self.store, &grads)?;
            clip_subset(&mut self.store, &self.critic_ids, self.config.train.clip_bound)?;
            self.critic_updates += 1;
            l_adv_d = loss;
            after_critic_update(self);
        }
        let z = self.latent(b, derive_seed(seed, &[0x9]))?;
        let (adv, mse, grads) = {
            let mut tape = Tape::new(&self.store);
            tape.freeze(&self.critic_ids);
            let zv = tape.constant(z);
            let xv = tape.constant(x);
            let fake = self.generator.generate(&mut tape, zv, &conds)?;
            let scores = self.critic.score(&mut tape, fake, &conds)?;
            let m = tape.mean(scores);
            let adv = tape.scale(m, -1.0);
            let mse = tape.mse(fake, xv);
            let total = total_on_tape(&mut tape, adv, mse, self.config.train.lambda_mse);
            (tape.scalar(adv), tape.scalar(mse), tape.backward(total).into_param_grads(&self.store))
        };
        let total = generator_total_loss(adv, mse, self.config.train.lambda_mse);
        if !total.is_finite() {
            return Err(Error::NonFinite("generator loss"));
        }
        self.opt_generator.step(&mut self.store, &grads)?;
        self.generator_updates += 1;
        Ok(LossRecord {
            step: self.generator_updates,
            l_adv_d,
            l_adv_g: adv,
            l_mse: mse,
            l_tot_g: total,
        })
    }

    /// One profile per `(condition, seed)`; clamped at zero and peak-normalized.
    pub fn sample_batch(&self, requests: &[(ConditionVector, u64)], delta_r: f64) -> Result<Vec<RangeProfile>> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.config.train.latent_dim;
        let mut z = Vec::with_capacity(requests.len() * d);
        for (_, s) in requests {
            let mut rng = rng_from_seed(*s);
            z.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        let conds: Vec<ConditionVector> = requests.iter().map(|(c, _)| *c).collect();
        let mut tape = Tape::new(&self.store);
        tape.freeze(&self.generator_ids);
        let zv = tape.constant(Tensor::new(vec![requests.len(), d], z)?);
        let out = self.generator.generate(&mut tape, zv, &conds)?;
        tape.value(out)
            .data()
            .chunks_exact(self.config.net.n_bins)
            .map(|row| finalize_amplitudes(row.to_vec(), delta_r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ConstCritic(f64);

    impl CriticNet for ConstCritic {
        fn score(&self, tape: &mut Tape<'_>, x: Var, _: &[ConditionVector]) -> Result<Var> {
            let b = tape.shape(x)[0];
            let m = tape.mean_length(x);
            let z = tape.scale(m, 0.0);
            let c = tape.constant(Tensor::filled(&[b, 1], self.0));
            Ok(tape.add(z, c))
        }
    }

    /// Scores a profile by its first bin, so reals and fakes can be told apart.
    struct FirstBin;

    impl CriticNet for FirstBin {
        fn score(&self, tape: &mut Tape<'_>, x: Var, _: &[ConditionVector]) -> Result<Var> {
            let b = tape.shape(x)[0];
            let l = tape.shape(x)[2];
            let mut mask = vec![0.0; b * l];
            for i in 0..b {
                mask[i * l] = 1.0;
            }
            let m = tape.constant(Tensor::new(vec![b, 1, l], mask)?);
            let y = tape.mul(x, m);
            let s = tape.mean_length(y);
            Ok(tape.scale(s, l as f64))
        }
    }

    /// Emits a fixed batch regardless of z.
    struct Fixed(Tensor);

    impl GeneratorNet for Fixed {
        fn generate(&self, tape: &mut Tape<'_>, _: Var, _: &[ConditionVector]) -> Result<Var> {
            Ok(tape.constant(self.0.clone()))
        }
    }

    fn cond() -> ConditionVector {
        ConditionVector::new(50.0, 10.0, 20.0).unwrap()
    }

    #[test]
    fn stub_losses() {
        let store = ParamStore::default();
        let conds = vec![cond(); 2];
        let fake = Fixed(Tensor::zeros(&[2, 1, 4]));
        for (c, want) in [(3.0, -3.0), (0.0, 0.0)] {
            let mut tape = Tape::new(&store);
            let z = tape.constant(Tensor::zeros(&[2, 3]));
            let l = generator_loss(&mut tape, &ConstCritic(c), &fake, z, &conds).unwrap();
            assert_eq!(tape.scalar(l), want);
        }
        let mut tape = Tape::new(&store);
        let z = tape.constant(Tensor::zeros(&[2, 3]));
        let x = tape.constant(Tensor::filled(&[2, 1, 4], 0.7));
        let l = critic_loss(&mut tape, &ConstCritic(2.5), &fake, z, x, &conds).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        // Reals score 1 through their first bin, fakes 0.
        let mut real = Tensor::zeros(&[2, 1, 4]);
        real.data_mut()[0] = 1.0;
        real.data_mut()[4] = 1.0;
        let x = tape.constant(real.clone());
        let l = critic_loss(&mut tape, &FirstBin, &fake, z, x, &conds).unwrap();
        assert_eq!(tape.scalar(l), -1.0);
        let same = Fixed(real);
        let l = mse_loss(&mut tape, &same, z, x, &conds).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let offset = Fixed(Tensor::filled(&[2, 1, 4], 0.1));
        let zero = tape.constant(Tensor::zeros(&[2, 1, 4]));
        let l = mse_loss(&mut tape, &offset, z, zero, &conds).unwrap();
        assert!((tape.scalar(l) - 0.01).abs() < 1e-15);
        let neg = Fixed(Tensor::filled(&[2, 1, 4], -0.1));
        let l2 = mse_loss(&mut tape, &neg, z, zero, &conds).unwrap();
        assert_eq!(tape.scalar(l), tape.scalar(l2));
        assert!(generator_loss(&mut tape, &FirstBin, &fake, z, &[]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert!((generator_total_loss(-3.0, 0.02, 50.0) - (-2.0)).abs() < 1e-12);
        assert_eq!(generator_total_loss(-3.0, 0.02, 0.0), -3.0);
        assert_eq!(generator_total_loss(-3.0, 0.0, 50.0), -3.0);
    }

    fn tiny() -> GanConfig {
        GanConfig {
            net: NetworkConfig {
                n_bins: 16,
                base_channels: 4,
                n_resblocks_per_stage: 1,
                n_stages: 2,
                embed_dim: 8,
                angle_dim: 4,
                parameter_budget: 0,
            },
            train: GanTrainConfig {
                latent_dim: 6,
                n_critic: 1,
                ..GanTrainConfig::default()
            },
            lr_generator: 1e-3,
            lr_critic: 1e-3,
            ..GanConfig::default()
        }
    }

    fn batch() -> Vec<(Vec<f64>, ConditionVector)> {
        (0..3)
            .map(|i| {
                let x: Vec<f64> = (0..16).map(|k| if (5..10).contains(&k) { 1.0 - 0.1 * i as f64 } else { 0.05 }).collect();
                (x, cond())
            })
            .collect()
    }

    #[test]
    fn step_counters_and_clipping() {
        let mut gan = Wgan::new(tiny(), 1).unwrap();
        assert!(gan.critic_max_abs() <= 0.05);
        let rec = gan.train_step(&batch(), 0).unwrap();
        assert_eq!((gan.critic_updates, gan.generator_updates), (1, 1));
        assert_eq!(rec.step, 1);
        assert!(gan.critic_max_abs() <= 0.05);
        let mut cfg = tiny();
        cfg.train.n_critic = 5;
        let mut gan = Wgan::new(cfg, 1).unwrap();
        let mut seen = 0;
        gan.train_step_observed(&batch(), 0, |g| {
            seen += 1;
            assert!(g.critic_max_abs() <= 0.05);
        })
        .unwrap();
        assert_eq!((seen, gan.critic_updates, gan.generator_updates), (5, 5, 1));
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut gan = Wgan::new(tiny(), 4).unwrap();
            (0..10).map(|s| gan.train_step(&batch(), s).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sampling_is_deterministic() {
        let gan = Wgan::new(tiny(), 4).unwrap();
        let a = gan.sample_batch(&[(cond(), 3)], 1.5).unwrap();
        let b = gan.sample_batch(&[(cond(), 3), (cond(), 4)], 1.5).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[0].n_bins(), 16);
    }
}
