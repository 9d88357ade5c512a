//! Conditional denoising diffusion: cosine schedule, forward noising,
//! ε-prediction loss with classifier-free condition dropout, and ancestral
//! sampling with an optional guidance blend.
//!
//! Profiles live in `[0, 1]`; the network sees them mapped to `[-1, 1]`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::embedding::{condition_features, timestep_embedding};
use crate::nn::layers::{coordinate_channels, Conv1d, GroupNorm, Mlp, ResBlock, COORD_CHANNELS};
use crate::nn::{Activation, Adam, AdamConfig, ConditionEmbedding, Conditioning, DimensionScale, NetworkConfig};
use crate::nn::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::types::{ConditionVector, RangeProfile};

pub const DEFAULT_TIMESTEPS: usize = 800;
pub const DESK_TIMESTEPS: usize = 200;
pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;
pub const DEFAULT_COND_DROPOUT: f64 = 0.1;

/// Noise levels of the forward process, indexed `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

/// Cosine schedule; per-step betas are clipped at [`MAX_BETA`] and ᾱ is
/// rebuilt from the clipped betas so the two stay consistent.
pub fn cosine_alpha_bar(timesteps: usize, offset: f64) -> Result<DiffusionSchedule> {
    if timesteps == 0 {
        return Err(Error::invalid("schedule needs at least one timestep"));
    }
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::invalid(format!("cosine offset must be positive, got {offset}")));
    }
    let f = |t: usize| {
        let u = (t as f64 / timesteps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2;
        u.cos().powi(2)
    };
    let f0 = f(0);
    let raw: Vec<f64> = (0..=timesteps).map(|t| f(t) / f0).collect();
    let mut alpha_bar = vec![1.0; timesteps + 1];
    let mut alphas = vec![1.0; timesteps + 1];
    let mut betas = vec![0.0; timesteps + 1];
    for t in 1..=timesteps {
        let beta = (1.0 - raw[t] / raw[t - 1]).min(MAX_BETA);
        betas[t] = beta;
        alphas[t] = 1.0 - beta;
        alpha_bar[t] = alpha_bar[t - 1] * alphas[t];
    }
    Ok(DiffusionSchedule {
        alpha_bar,
        alphas,
        betas,
    })
}

impl DiffusionSchedule {
    pub fn timesteps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `alphas[t]`, with `alphas[0] = 1`.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `betas[t]`, with `betas[0] = 0`.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.timesteps() {
            return Err(Error::invalid(format!(
                "timestep {t} outside [0, {}]",
                self.timesteps()
            )));
        }
        Ok(())
    }
}

/// `√ᾱ_t x0 + √(1 − ᾱ_t) noise`.
pub fn q_sample(x0: &[f64], t: usize, noise: &[f64], schedule: &DiffusionSchedule) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    if x0.len() != noise.len() {
        return Err(Error::ShapeMismatch(format!(
            "q_sample: x0 has {} values, noise {}",
            x0.len(),
            noise.len()
        )));
    }
    let ab = schedule.alpha_bar[t];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, n)| a * x + b * n).collect())
}

/// A network predicting the injected noise of a batch `x_t: [B, 1, L]`.
pub trait EpsilonModel {
    fn store(&self) -> &ParamStore;

    fn conditioning(&self) -> Conditioning;

    /// `null[b]` replaces sample `b`'s condition by the unconditional token.
    fn forward(&self, tape: &mut Tape<'_>, x_t: Var, t: &[usize], conds: &[ConditionVector], null: &[bool]) -> Result<Var>;
}

/// Random choices made for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraws {
    pub t: Vec<usize>,
    pub noise: Vec<Vec<f64>>,
    pub dropped: Vec<bool>,
}

/// Per-sample draws: `t ~ U{1..T}`, `ε ~ N(0, I)`, condition dropped with probability `p`.
pub fn draw_loss_inputs(n: usize, len: usize, timesteps: usize, cond_dropout: f64, seed: u64) -> LossDraws {
    let mut d = LossDraws {
        t: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
        dropped: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
        d.t.push(rng.gen_range(1..=timesteps));
        d.dropped.push(rng.gen::<f64>() < cond_dropout);
        d.noise.push((0..len).map(|_| rng.sample(StandardNormal)).collect());
    }
    d
}

/// Records the ε-prediction loss of a batch `(x0 in [-1, 1], condition)` on `tape`.
pub fn ddpm_loss_on_tape<M: EpsilonModel>(
    tape: &mut Tape<'_>,
    model: &M,
    batch: &[(Vec<f64>, ConditionVector)],
    schedule: &DiffusionSchedule,
    cond_dropout: f64,
    seed: u64,
) -> Result<(Var, LossDraws)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if !(0.0..1.0).contains(&cond_dropout) {
        return Err(Error::invalid(format!("condition dropout must be in [0, 1), got {cond_dropout}")));
    }
    let len = batch[0].0.len();
    if batch.iter().any(|(x, _)| x.len() != len) {
        return Err(Error::ShapeMismatch("batch profiles differ in length".into()));
    }
    let draws = draw_loss_inputs(batch.len(), len, schedule.timesteps(), cond_dropout, seed);
    let mut xt = Vec::with_capacity(batch.len() * len);
    let mut eps = Vec::with_capacity(batch.len() * len);
    for (i, (x0, _)) in batch.iter().enumerate() {
        xt.extend(q_sample(x0, draws.t[i], &draws.noise[i], schedule)?);
        eps.extend_from_slice(&draws.noise[i]);
    }
    let conds: Vec<ConditionVector> = batch.iter().map(|(_, c)| *c).collect();
    let null: Vec<bool> = if model.conditioning() == Conditioning::None {
        vec![true; batch.len()]
    } else {
        draws.dropped.clone()
    };
    let shape = vec![batch.len(), 1, len];
    let xv = tape.constant(Tensor::new(shape.clone(), xt)?);
    let target = tape.constant(Tensor::new(shape, eps)?);
    let pred = model.forward(tape, xv, &draws.t, &conds, &null)?;
    let loss = tape.mse(pred, target);
    Ok((loss, draws))
}

pub fn ddpm_loss<M: EpsilonModel>(
    model: &M,
    batch: &[(Vec<f64>, ConditionVector)],
    schedule: &DiffusionSchedule,
    cond_dropout: f64,
    seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new(model.store());
    let (loss, _) = ddpm_loss_on_tape(&mut tape, model, batch, schedule, cond_dropout, seed)?;
    Ok(tape.scalar(loss))
}

/// Profile amplitude in `[0, 1]` to the model's `[-1, 1]` range.
pub fn to_model_space(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| 2.0 * v - 1.0).collect()
}

/// Clamp to non-negative amplitude and scale the peak to 1; an all-zero
/// result stays zero.
pub fn finalize_amplitudes(mut a: Vec<f64>, delta_r: f64) -> Result<RangeProfile> {
    for v in &mut a {
        if !v.is_finite() {
            return Err(Error::NonFinite("generated amplitude"));
        }
        *v = v.max(0.0);
    }
    let max = a.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut a {
            *v = if *v == max { 1.0 } else { *v / max };
        }
    }
    RangeProfile::new(a, delta_r)
}

fn predict_noise<M: EpsilonModel>(
    model: &M,
    x: &[f64],
    len: usize,
    t: usize,
    conds: &[ConditionVector],
    guidance: f64,
) -> Result<Vec<f64>> {
    let n = conds.len();
    let run = |null: bool| -> Result<Vec<f64>> {
        let mut tape = Tape::new(model.store());
        let xv = tape.constant(Tensor::new(vec![n, 1, len], x.to_vec())?);
        let out = model.forward(&mut tape, xv, &vec![t; n], conds, &vec![null; n])?;
        Ok(tape.value(out).data().to_vec())
    };
    if model.conditioning() == Conditioning::None {
        return run(true);
    }
    let cond = run(false)?;
    if guidance == 1.0 {
        return Ok(cond);
    }
    let uncond = run(true)?;
    Ok(uncond.iter().zip(&cond).map(|(u, c)| u + guidance * (c - u)).collect())
}

/// Ancestral sampling for a batch of `(condition, seed)` pairs.
///
/// Each sample draws from its own seed, so the output for a condition does not
/// depend on what else is in the batch.
pub fn ddpm_sample_batch<M: EpsilonModel>(
    model: &M,
    requests: &[(ConditionVector, u64)],
    n_bins: usize,
    delta_r: f64,
    schedule: &DiffusionSchedule,
    guidance: f64,
) -> Result<Vec<RangeProfile>> {
    if !(guidance >= 0.0 && guidance.is_finite()) {
        return Err(Error::invalid(format!("guidance scale must be >= 0, got {guidance}")));
    }
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let n = requests.len();
    let conds: Vec<ConditionVector> = requests.iter().map(|(c, _)| *c).collect();
    let mut rngs: Vec<Rng> = requests.iter().map(|(_, s)| rng_from_seed(*s)).collect();
    let mut x: Vec<f64> = Vec::with_capacity(n * n_bins);
    for rng in &mut rngs {
        x.extend((0..n_bins).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    let ab = schedule.alpha_bar();
    for t in (1..=schedule.timesteps()).rev() {
        let eps = predict_noise(model, &x, n_bins, t, &conds, guidance)?;
        let (abt, abp) = (ab[t], ab[t - 1]);
        let beta = schedule.betas()[t];
        let alpha = schedule.alphas()[t];
        let c0 = beta * abp.sqrt() / (1.0 - abt);
        let ct = (1.0 - abp) * alpha.sqrt() / (1.0 - abt);
        let sigma = (beta * (1.0 - abp) / (1.0 - abt)).sqrt();
        for (b, rng) in rngs.iter_mut().enumerate() {
            let xs = &mut x[b * n_bins..(b + 1) * n_bins];
            let es = &eps[b * n_bins..(b + 1) * n_bins];
            for (xi, &e) in xs.iter_mut().zip(es) {
                let x0 = ((*xi - (1.0 - abt).sqrt() * e) / abt.sqrt()).clamp(-1.0, 1.0);
                let mean = c0 * x0 + ct * *xi;
                *xi = if t > 1 {
                    mean + sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    mean
                };
            }
        }
    }
    x.chunks_exact(n_bins)
        .map(|row| finalize_amplitudes(row.iter().map(|v| (v + 1.0) / 2.0).collect(), delta_r))
        .collect()
}

pub fn ddpm_sample<M: EpsilonModel>(
    model: &M,
    c: &ConditionVector,
    n_bins: usize,
    delta_r: f64,
    schedule: &DiffusionSchedule,
    guidance: f64,
    seed: u64,
) -> Result<RangeProfile> {
    let mut out = ddpm_sample_batch(model, &[(*c, seed)], n_bins, delta_r, schedule, guidance)?;
    Ok(out.remove(0))
}

/// Everything needed to rebuild and train a denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpmConfig {
    pub net: NetworkConfig,
    pub conditioning: Conditioning,
    pub scale: DimensionScale,
    pub timesteps: usize,
    pub cosine_offset: f64,
    pub cond_dropout: f64,
    pub guidance: f64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for DdpmConfig {
    fn default() -> Self {
        Self {
            net: NetworkConfig::desk(),
            conditioning: Conditioning::Both,
            scale: DimensionScale::default(),
            timesteps: DESK_TIMESTEPS,
            cosine_offset: COSINE_OFFSET,
            cond_dropout: DEFAULT_COND_DROPOUT,
            guidance: 1.0,
            lr: 2e-4,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone)]
struct DownStage {
    blocks: Vec<ResBlock>,
    down: Conv1d,
}

#[derive(Debug, Clone)]
struct UpStage {
    up: Conv1d,
    blocks: Vec<ResBlock>,
}

/// 1D U-Net noise predictor with additive skips and a shared
/// time-plus-condition embedding injected into every ResBlock.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DdpmConfig,
    pub store: ParamStore,
    time_mlp: Mlp,
    cond: ConditionEmbedding,
    null_token: ParamId,
    input: Conv1d,
    downs: Vec<DownStage>,
    mid: Vec<ResBlock>,
    ups: Vec<UpStage>,
    out_norm: GroupNorm,
    output: Conv1d,
}

impl Denoiser {
    pub fn new(config: DdpmConfig, seed: u64) -> Result<Self> {
        config.net.validate()?;
        let net = &config.net;
        let e = net.embed_dim;
        let mut store = ParamStore::default();
        let mut rng = rng_from_seed(seed);
        let time_mlp = Mlp::new(&mut store, "time", e, e, e, Activation::Silu, &mut rng);
        let cond = ConditionEmbedding::new(&mut store, "cond", net.angle_dim, e, &mut rng);
        let null_token = store.add("null_token", Tensor::zeros(&[e]));
        let input = Conv1d::same(&mut store, "input", 1 + COORD_CHANNELS, net.channels(0), 3, &mut rng);
        let block = |store: &mut ParamStore, name: String, c: usize, rng: &mut Rng| {
            ResBlock::new(store, &name, c, Some(e), true, Activation::Silu, rng)
        };
        let mut downs = Vec::new();
        for s in 0..net.n_stages {
            let c = net.channels(s);
            let blocks = (0..net.n_resblocks_per_stage)
                .map(|k| block(&mut store, format!("down{s}.rb{k}"), c, &mut rng))
                .collect();
            let down = Conv1d::new(&mut store, &format!("down{s}.conv"), c, net.channels(s + 1), 4, 2, 1, &mut rng);
            downs.push(DownStage { blocks, down });
        }
        let cm = net.channels(net.n_stages);
        let mid = (0..2).map(|k| block(&mut store, format!("mid.rb{k}"), cm, &mut rng)).collect();
        let mut ups = Vec::new();
        for s in (0..net.n_stages).rev() {
            let c = net.channels(s);
            let up = Conv1d::same(&mut store, &format!("up{s}.conv"), net.channels(s + 1), c, 3, &mut rng);
            let blocks = (0..net.n_resblocks_per_stage)
                .map(|k| block(&mut store, format!("up{s}.rb{k}"), c, &mut rng))
                .collect();
            ups.push(UpStage { up, blocks });
        }
        let out_norm = GroupNorm::new(&mut store, "out.norm", net.channels(0));
        let output = Conv1d::same(&mut store, "out.conv", net.channels(0), 1, 3, &mut rng).zero_init(&mut store);
        Ok(Self {
            config,
            store,
            time_mlp,
            cond,
            null_token,
            input,
            downs,
            mid,
            ups,
            out_norm,
            output,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count()
    }

    /// Condition features for a batch, masked according to the conditioning mode.
    pub fn features(&self, conds: &[ConditionVector]) -> Result<Tensor> {
        let mut flat = Vec::with_capacity(conds.len() * self.cond.n_features());
        for c in conds {
            flat.extend(condition_features(c, self.config.conditioning, self.cond.angle_dim, &self.config.scale)?);
        }
        Tensor::new(vec![conds.len(), self.cond.n_features()], flat)
    }
}

impl EpsilonModel for Denoiser {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn conditioning(&self) -> Conditioning {
        self.config.conditioning
    }

    fn forward(&self, tape: &mut Tape<'_>, x_t: Var, t: &[usize], conds: &[ConditionVector], null: &[bool]) -> Result<Var> {
        let b = t.len();
        let shape = tape.shape(x_t).to_vec();
        if shape.len() != 3 || shape[0] != b || shape[1] != 1 || shape[2] != self.config.net.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "denoiser expects [{b}, 1, {}], got {shape:?}",
                self.config.net.n_bins
            )));
        }
        if conds.len() != b || null.len() != b {
            return Err(Error::ShapeMismatch("batch, timestep and condition counts differ".into()));
        }
        let e = self.config.net.embed_dim;
        let temb: Vec<f64> = t.iter().flat_map(|&ti| timestep_embedding(ti as f64, e)).collect();
        let temb = tape.constant(Tensor::new(vec![b, e], temb)?);
        let temb = self.time_mlp.forward(tape, temb);
        let feats = tape.constant(self.features(conds)?);
        let cemb = self.cond.forward(tape, feats);
        let token = tape.param(self.null_token);
        let cemb = tape.select_rows(cemb, token, null);
        let emb = tape.add(temb, cemb);
        let emb = tape.silu(emb);

        let coords = tape.constant(coordinate_channels(b, self.config.net.n_bins));
        let x_in = tape.concat_channels(x_t, coords);
        let mut h = self.input.forward(tape, x_in);
        let mut skips = Vec::with_capacity(self.downs.len());
        for stage in &self.downs {
            for rb in &stage.blocks {
                h = rb.forward(tape, h, Some(emb));
            }
            skips.push(h);
            h = stage.down.forward(tape, h);
        }
        for rb in &self.mid {
            h = rb.forward(tape, h, Some(emb));
        }
        for stage in &self.ups {
            h = tape.upsample2(h);
            h = stage.up.forward(tape, h);
            let skip = skips.pop().expect("one skip per stage");
            h = tape.add(h, skip);
            for rb in &stage.blocks {
                h = rb.forward(tape, h, Some(emb));
            }
        }
        h = self.out_norm.forward(tape, h);
        h = tape.silu(h);
        Ok(self.output.forward(tape, h))
    }
}

/// Denoiser plus optimizer state.
#[derive(Debug, Clone)]
pub struct DdpmTrainer {
    pub model: Denoiser,
    pub schedule: DiffusionSchedule,
    pub optimizer: Adam,
}

impl DdpmTrainer {
    pub fn new(config: DdpmConfig, seed: u64) -> Result<Self> {
        let schedule = cosine_alpha_bar(config.timesteps, config.cosine_offset)?;
        let lr = config.lr;
        let model = Denoiser::new(config, seed)?;
        let optimizer = Adam::new(&model.store, AdamConfig::with_lr(lr));
        Ok(Self {
            model,
            schedule,
            optimizer,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.optimizer.step
    }

    /// One optimizer step on a batch of `(x0 in [-1, 1], condition)`; returns the loss.
    pub fn train_step(&mut self, batch: &[(Vec<f64>, ConditionVector)], seed: u64) -> Result<f64> {
        let (loss, grads) = {
            let mut tape = Tape::new(&self.model.store);
            let (loss, _) = ddpm_loss_on_tape(
                &mut tape,
                &self.model,
                batch,
                &self.schedule,
                self.model.config.cond_dropout,
                seed,
            )?;
            let value = tape.scalar(loss);
            (value, tape.backward(loss).into_param_grads(&self.model.store))
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite("ddpm loss"));
        }
        self.optimizer.step(&mut self.model.store, &grads)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DdpmConfig {
        DdpmConfig {
            net: NetworkConfig {
                n_bins: 16,
                base_channels: 4,
                n_resblocks_per_stage: 1,
                n_stages: 2,
                embed_dim: 8,
                angle_dim: 4,
                parameter_budget: 0,
            },
            timesteps: 20,
            ..DdpmConfig::default()
        }
    }

    #[test]
    fn schedule_invariants() {
        for t_max in [DESK_TIMESTEPS, DEFAULT_TIMESTEPS] {
            let s = cosine_alpha_bar(t_max, COSINE_OFFSET).unwrap();
            let ab = s.alpha_bar();
            assert_eq!(ab[0], 1.0);
            assert!(ab.windows(2).all(|w| w[1] < w[0]));
            assert!(ab[t_max] < 0.01);
            assert!(s.betas()[1..].iter().all(|&b| b > 0.0 && b <= MAX_BETA));
        }
        let s = cosine_alpha_bar(800, COSINE_OFFSET).unwrap();
        assert!(s.alpha_bar()[800] < 0.001);
        assert!(cosine_alpha_bar(0, COSINE_OFFSET).is_err());
    }

    #[test]
    fn q_sample_endpoints() {
        let s = cosine_alpha_bar(50, COSINE_OFFSET).unwrap();
        let x0 = [0.3, -0.7, 1.0];
        let noise = [0.1, 0.2, -0.4];
        assert_eq!(q_sample(&x0, 0, &noise, &s).unwrap(), x0.to_vec());
        assert_eq!(q_sample(&x0, 17, &noise, &s).unwrap(), q_sample(&x0, 17, &noise, &s).unwrap());
        assert!(q_sample(&x0, 51, &noise, &s).is_err());
        assert!(q_sample(&x0, 3, &noise[..2], &s).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let model = Denoiser::new(tiny_config(), 1).unwrap();
        let s = cosine_alpha_bar(20, COSINE_OFFSET).unwrap();
        assert!(ddpm_loss(&model, &[], &s, 0.1, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_batch_independent() {
        let mut trainer = DdpmTrainer::new(tiny_config(), 2).unwrap();
        let c = ConditionVector::new(40.0, 8.0, 30.0).unwrap();
        let x0 = to_model_space(&[0.0, 0.0, 0.2, 0.9, 1.0, 0.8, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for i in 0..3 {
            trainer.train_step(&[(x0.clone(), c)], i).unwrap();
        }
        let m = &trainer.model;
        let s = &trainer.schedule;
        let a = ddpm_sample(m, &c, 16, 1.5, s, 1.0, 7).unwrap();
        let b = ddpm_sample(m, &c, 16, 1.5, s, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let other = ConditionVector::new(100.0, 20.0, 80.0).unwrap();
        let batch = ddpm_sample_batch(m, &[(other, 3), (c, 7)], 16, 1.5, s, 1.0).unwrap();
        assert_eq!(batch[1], a);
        assert!(a.amplitudes().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.max_amplitude(), 1.0);
    }

    #[test]
    fn finalize_clamps_and_normalizes() {
        let p = finalize_amplitudes(vec![-0.5, 0.25, 0.5], 1.0).unwrap();
        assert_eq!(p.amplitudes(), &[0.0, 0.5, 1.0]);
        let z = finalize_amplitudes(vec![-1.0, -2.0], 1.0).unwrap();
        assert_eq!(z.amplitudes(), &[0.0, 0.0]);
    }
}
