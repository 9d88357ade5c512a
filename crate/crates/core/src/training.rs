//! Training loops over a record set and a single handle over both model
//! families for sampling and checkpointing.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::ddpm::{ddpm_sample_batch, to_model_space, DdpmConfig, DdpmTrainer, Denoiser};
use crate::error::{Error, Result};
use crate::gan::{GanConfig, LossRecord, Wgan};
use crate::nn::checkpoint::{read_checkpoint, restore_stores, write_checkpoint, CheckpointHeader};
use crate::nn::Conditioning;
use crate::rng::{derive_seed, rng_from_seed};
use crate::types::{ConditionVector, RangeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ddpm,
    Gan,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ddpm => "ddpm",
            Self::Gan => "gan",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(Self::Ddpm),
            "gan" => Ok(Self::Gan),
            _ => Err(Error::invalid(format!("unknown model {s:?} (expected ddpm or gan)"))),
        }
    }
}

/// Indices of the minibatch drawn at `step`, uniform with replacement.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(seed, &[0xba7c, step]));
    (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
}

fn pairs(records: &[&DatasetRecord]) -> Vec<(Vec<f64>, ConditionVector)> {
    records.iter().map(|r| (r.profile.amplitudes().to_vec(), r.condition())).collect()
}

/// Loss value(s) of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepLoss {
    Ddpm { step: u64, loss: f64 },
    Gan(LossRecord),
}

impl StepLoss {
    pub fn csv_header(kind: ModelKind) -> &'static str {
        match kind {
            ModelKind::Ddpm => "step,loss",
            ModelKind::Gan => LossRecord::CSV_HEADER,
        }
    }

    pub fn csv_row(&self) -> String {
        match self {
            Self::Ddpm { step, loss } => format!("{step},{loss}"),
            Self::Gan(r) => r.csv_row(),
        }
    }

    /// The objective the optimizer minimized (generator total loss for GANs).
    pub fn headline(&self) -> f64 {
        match self {
            Self::Ddpm { loss, .. } => *loss,
            Self::Gan(r) => r.l_tot_g,
        }
    }
}

/// Either trained model family.
#[derive(Debug, Clone)]
pub enum Model {
    Ddpm(Box<DdpmTrainer>),
    Gan(Box<Wgan>),
}

impl Model {
    pub fn new_ddpm(config: DdpmConfig, seed: u64) -> Result<Self> {
        Ok(Self::Ddpm(Box::new(DdpmTrainer::new(config, seed)?)))
    }

    pub fn new_gan(config: GanConfig, seed: u64) -> Result<Self> {
        Ok(Self::Gan(Box::new(Wgan::new(config, seed)?)))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Ddpm(_) => ModelKind::Ddpm,
            Self::Gan(_) => ModelKind::Gan,
        }
    }

    pub fn conditioning(&self) -> Conditioning {
        match self {
            Self::Ddpm(t) => t.model.config.conditioning,
            Self::Gan(g) => g.config.conditioning,
        }
    }

    pub fn n_bins(&self) -> usize {
        match self {
            Self::Ddpm(t) => t.model.config.net.n_bins,
            Self::Gan(g) => g.config.net.n_bins,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            Self::Ddpm(t) => t.model.config.batch_size,
            Self::Gan(g) => g.config.train.batch_size,
        }
    }

    /// Completed optimizer steps (generator steps for GANs).
    pub fn steps_done(&self) -> u64 {
        match self {
            Self::Ddpm(t) => t.step_count(),
            Self::Gan(g) => g.generator_updates,
        }
    }

    pub fn config_json(&self) -> serde_json::Value {
        match self {
            Self::Ddpm(t) => serde_json::to_value(&t.model.config).expect("config serializes"),
            Self::Gan(g) => serde_json::to_value(&g.config).expect("config serializes"),
        }
    }

    /// `steps` further steps on minibatches of `records` (profiles in `[0, 1]`).
    pub fn train<F: FnMut(&StepLoss)>(&mut self, records: &[&DatasetRecord], steps: u64, seed: u64, mut on_step: F) -> Result<()> {
        if records.is_empty() {
            return Err(Error::invalid("no training records"));
        }
        let n_bins = self.n_bins();
        if records.iter().any(|r| r.profile.n_bins() != n_bins) {
            return Err(Error::ShapeMismatch(format!("training profiles must have {n_bins} bins")));
        }
        let mut data = pairs(records);
        if let Self::Ddpm(_) = self {
            for (x, _) in &mut data {
                *x = to_model_space(x);
            }
        }
        let batch_size = self.batch_size();
        let start = self.steps_done();
        for step in start..start + steps {
            let batch: Vec<_> = batch_indices(data.len(), batch_size, seed, step)
                .into_iter()
                .map(|i| data[i].clone())
                .collect();
            let step_seed = derive_seed(seed, &[0x57e9, step]);
            let loss = match self {
                Self::Ddpm(t) => StepLoss::Ddpm {
                    step: step + 1,
                    loss: t.train_step(&batch, step_seed)?,
                },
                Self::Gan(g) => StepLoss::Gan(g.train_step(&batch, step_seed)?),
            };
            on_step(&loss);
        }
        Ok(())
    }

    /// One profile per `(condition, seed)`.
    pub fn sample(&self, requests: &[(ConditionVector, u64)], delta_r: f64) -> Result<Vec<RangeProfile>> {
        match self {
            Self::Ddpm(t) => ddpm_sample_batch(
                &t.model,
                requests,
                t.model.config.net.n_bins,
                delta_r,
                &t.schedule,
                t.model.config.guidance,
            ),
            Self::Gan(g) => g.sample_batch(requests, delta_r),
        }
    }

    /// Sample in chunks of `chunk` requests to bound memory.
    pub fn sample_chunked(&self, requests: &[(ConditionVector, u64)], delta_r: f64, chunk: usize) -> Result<Vec<RangeProfile>> {
        let mut out = Vec::with_capacity(requests.len());
        for part in requests.chunks(chunk.max(1)) {
            out.extend(self.sample(part, delta_r)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path, seed: u64, loss_tail: Vec<f64>) -> Result<()> {
        let header = CheckpointHeader::new(self.kind().as_str(), seed, self.steps_done(), self.config_json(), loss_tail);
        match self {
            Self::Ddpm(t) => write_checkpoint(path, &header, &[&t.model.store]),
            Self::Gan(g) => write_checkpoint(path, &header, &[&g.store]),
        }
    }

    /// Rebuild a model from its checkpoint; optimizer state starts fresh.
    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let (header, store) = read_checkpoint(path)?;
        let kind: ModelKind = header.kind.parse()?;
        let bad = |e: serde_json::Error| Error::MalformedHeader(format!("checkpoint config: {e}"));
        let model = match kind {
            ModelKind::Ddpm => {
                let cfg: DdpmConfig = serde_json::from_value(header.config.clone()).map_err(bad)?;
                let mut t = DdpmTrainer::new(cfg, header.seed)?;
                restore_stores(&store, &mut [&mut t.model.store])?;
                t.optimizer.step = header.step;
                Self::Ddpm(Box::new(t))
            }
            ModelKind::Gan => {
                let cfg: GanConfig = serde_json::from_value(header.config.clone()).map_err(bad)?;
                let mut g = Wgan::new(cfg, header.seed)?;
                restore_stores(&store, &mut [&mut g.store])?;
                g.generator_updates = header.step;
                Self::Gan(Box::new(g))
            }
        };
        Ok((model, header))
    }

    pub fn ddpm(&self) -> Option<&Denoiser> {
        match self {
            Self::Ddpm(t) => Some(&t.model),
            Self::Gan(_) => None,
        }
    }

    pub fn gan(&self) -> Option<&Wgan> {
        match self {
            Self::Gan(g) => Some(g),
            Self::Ddpm(_) => None,
        }
    }
}
