//! Plain-text `key = value` run configuration covering every module.

use std::fmt::Write as _;
use std::path::Path;

use hrrp_core::dataset::{AcquisitionConfig, DatasetConfig};
use hrrp_core::ddpm::DdpmConfig;
use hrrp_core::gan::GanConfig;
use hrrp_core::nn::{Conditioning, DimensionScale, NetworkConfig};
use hrrp_core::training::ModelKind;
use hrrp_core::{GridSpec, LrpParams};

/// A configuration problem; the CLI exits with code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub dataset: DatasetConfig,
    pub lrp: LrpParams,
    pub model: ModelKind,
    pub conditioning: Conditioning,
    pub steps: u64,
    pub batch_size: usize,
    pub net: NetworkConfig,
    pub scale: DimensionScale,
    pub ddpm: DdpmConfig,
    pub gan: GanConfig,
    pub eval_delta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            deterministic: false,
            dataset: DatasetConfig::default(),
            lrp: LrpParams::default(),
            model: ModelKind::Ddpm,
            conditioning: Conditioning::Both,
            steps: 1000,
            batch_size: 32,
            net: NetworkConfig::desk(),
            scale: DimensionScale::default(),
            ddpm: DdpmConfig::default(),
            gan: GanConfig::default(),
            eval_delta: 2.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Every key in the order it is written out.
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "deterministic",
        "fleet.n_ships",
        "fleet.density",
        "acquisition.per_ship",
        "acquisition.snr_mean_db",
        "acquisition.snr_std_db",
        "acquisition.noiseless",
        "split.train",
        "split.val",
        "split.test",
        "grid.n_bins",
        "grid.delta_r",
        "grid.delta_phi",
        "grid.n_phi",
        "grid.reference_range",
        "grid.interference",
        "grid.bridge_asymmetry",
        "lrp.window",
        "lrp.threshold_frac",
        "lrp.max_gap",
        "model",
        "conditioning",
        "train.steps",
        "train.batch_size",
        "net.base_channels",
        "net.n_resblocks_per_stage",
        "net.n_stages",
        "net.embed_dim",
        "net.angle_dim",
        "scale.length_max",
        "scale.width_max",
        "ddpm.timesteps",
        "ddpm.cosine_offset",
        "ddpm.cond_dropout",
        "ddpm.guidance",
        "ddpm.lr",
        "gan.lambda_mse",
        "gan.clip_bound",
        "gan.n_critic",
        "gan.latent_dim",
        "gan.lr_generator",
        "gan.lr_critic",
        "eval.delta",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let acq: &mut AcquisitionConfig = &mut self.dataset.acquisition;
        let grid: &mut GridSpec = &mut acq.grid;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "deterministic" => self.deterministic = parse_bool(key, v)?,
            "fleet.n_ships" => self.dataset.n_ships = parse(key, v)?,
            "fleet.density" => self.dataset.density = parse(key, v)?,
            "acquisition.per_ship" => acq.per_ship = parse(key, v)?,
            "acquisition.snr_mean_db" => acq.snr_mean_db = parse(key, v)?,
            "acquisition.snr_std_db" => acq.snr_std_db = parse(key, v)?,
            "acquisition.noiseless" => acq.noiseless = parse_bool(key, v)?,
            "split.train" => self.dataset.fractions[0] = parse(key, v)?,
            "split.val" => self.dataset.fractions[1] = parse(key, v)?,
            "split.test" => self.dataset.fractions[2] = parse(key, v)?,
            "grid.n_bins" => grid.n_bins = parse(key, v)?,
            "grid.delta_r" => grid.delta_r = parse(key, v)?,
            "grid.delta_phi" => grid.delta_phi = parse(key, v)?,
            "grid.n_phi" => grid.n_phi = parse(key, v)?,
            "grid.reference_range" => grid.reference_range = parse(key, v)?,
            "grid.interference" => grid.interference = parse(key, v)?,
            "grid.bridge_asymmetry" => grid.bridge_asymmetry = parse_bool(key, v)?,
            "lrp.window" => self.lrp.window = parse(key, v)?,
            "lrp.threshold_frac" => self.lrp.threshold_frac = parse(key, v)?,
            "lrp.max_gap" => self.lrp.max_gap = parse(key, v)?,
            "model" => self.model = v.parse().map_err(|e| ConfigError(format!("{key}: {e}")))?,
            "conditioning" => self.conditioning = v.parse().map_err(|e| ConfigError(format!("{key}: {e}")))?,
            "train.steps" => self.steps = parse(key, v)?,
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "net.base_channels" => self.net.base_channels = parse(key, v)?,
            "net.n_resblocks_per_stage" => self.net.n_resblocks_per_stage = parse(key, v)?,
            "net.n_stages" => self.net.n_stages = parse(key, v)?,
            "net.embed_dim" => self.net.embed_dim = parse(key, v)?,
            "net.angle_dim" => self.net.angle_dim = parse(key, v)?,
            "scale.length_max" => self.scale.length_max = parse(key, v)?,
            "scale.width_max" => self.scale.width_max = parse(key, v)?,
            "ddpm.timesteps" => self.ddpm.timesteps = parse(key, v)?,
            "ddpm.cosine_offset" => self.ddpm.cosine_offset = parse(key, v)?,
            "ddpm.cond_dropout" => self.ddpm.cond_dropout = parse(key, v)?,
            "ddpm.guidance" => self.ddpm.guidance = parse(key, v)?,
            "ddpm.lr" => self.ddpm.lr = parse(key, v)?,
            "gan.lambda_mse" => self.gan.train.lambda_mse = parse(key, v)?,
            "gan.clip_bound" => self.gan.train.clip_bound = parse(key, v)?,
            "gan.n_critic" => self.gan.train.n_critic = parse(key, v)?,
            "gan.latent_dim" => self.gan.train.latent_dim = parse(key, v)?,
            "gan.lr_generator" => self.gan.lr_generator = parse(key, v)?,
            "gan.lr_critic" => self.gan.lr_critic = parse(key, v)?,
            "eval.delta" => self.eval_delta = parse(key, v)?,
            _ => return Err(ConfigError(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    fn get(&self, key: &str) -> String {
        let acq = &self.dataset.acquisition;
        let grid = &acq.grid;
        match key {
            "seed" => self.seed.to_string(),
            "deterministic" => self.deterministic.to_string(),
            "fleet.n_ships" => self.dataset.n_ships.to_string(),
            "fleet.density" => self.dataset.density.to_string(),
            "acquisition.per_ship" => acq.per_ship.to_string(),
            "acquisition.snr_mean_db" => acq.snr_mean_db.to_string(),
            "acquisition.snr_std_db" => acq.snr_std_db.to_string(),
            "acquisition.noiseless" => acq.noiseless.to_string(),
            "split.train" => self.dataset.fractions[0].to_string(),
            "split.val" => self.dataset.fractions[1].to_string(),
            "split.test" => self.dataset.fractions[2].to_string(),
            "grid.n_bins" => grid.n_bins.to_string(),
            "grid.delta_r" => grid.delta_r.to_string(),
            "grid.delta_phi" => grid.delta_phi.to_string(),
            "grid.n_phi" => grid.n_phi.to_string(),
            "grid.reference_range" => grid.reference_range.to_string(),
            "grid.interference" => grid.interference.to_string(),
            "grid.bridge_asymmetry" => grid.bridge_asymmetry.to_string(),
            "lrp.window" => self.lrp.window.to_string(),
            "lrp.threshold_frac" => self.lrp.threshold_frac.to_string(),
            "lrp.max_gap" => self.lrp.max_gap.to_string(),
            "model" => self.model.to_string(),
            "conditioning" => self.conditioning.to_string(),
            "train.steps" => self.steps.to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "net.base_channels" => self.net.base_channels.to_string(),
            "net.n_resblocks_per_stage" => self.net.n_resblocks_per_stage.to_string(),
            "net.n_stages" => self.net.n_stages.to_string(),
            "net.embed_dim" => self.net.embed_dim.to_string(),
            "net.angle_dim" => self.net.angle_dim.to_string(),
            "scale.length_max" => self.scale.length_max.to_string(),
            "scale.width_max" => self.scale.width_max.to_string(),
            "ddpm.timesteps" => self.ddpm.timesteps.to_string(),
            "ddpm.cosine_offset" => self.ddpm.cosine_offset.to_string(),
            "ddpm.cond_dropout" => self.ddpm.cond_dropout.to_string(),
            "ddpm.guidance" => self.ddpm.guidance.to_string(),
            "ddpm.lr" => self.ddpm.lr.to_string(),
            "gan.lambda_mse" => self.gan.train.lambda_mse.to_string(),
            "gan.clip_bound" => self.gan.train.clip_bound.to_string(),
            "gan.n_critic" => self.gan.train.n_critic.to_string(),
            "gan.latent_dim" => self.gan.train.latent_dim.to_string(),
            "gan.lr_generator" => self.gan.lr_generator.to_string(),
            "gan.lr_critic" => self.gan.lr_critic.to_string(),
            "eval.delta" => self.eval_delta.to_string(),
            _ => unreachable!("KEYS and get() list the same keys"),
        }
    }

    /// The fully resolved configuration, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            writeln!(s, "{key} = {}", self.get(key)).unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = self.dataset.fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || ((f[0] + f[1] + f[2]) - 1.0).abs() > 1e-9 {
            return Err(ConfigError(format!(
                "split.train + split.val + split.test must sum to 1 (got {} + {} + {})",
                f[0], f[1], f[2]
            )));
        }
        let checks: [(&str, bool); 14] = [
            ("fleet.n_ships", self.dataset.n_ships >= 3),
            ("fleet.density", self.dataset.density > 0.0),
            ("acquisition.per_ship", self.dataset.acquisition.per_ship >= 1),
            ("acquisition.snr_std_db", self.dataset.acquisition.snr_std_db > 0.0),
            ("grid.n_bins", self.dataset.acquisition.grid.n_bins >= 8),
            ("grid.delta_r", self.dataset.acquisition.grid.delta_r > 0.0),
            ("lrp.window", self.lrp.window % 2 == 1),
            ("lrp.threshold_frac", self.lrp.threshold_frac > 0.0 && self.lrp.threshold_frac < 1.0),
            ("train.batch_size", self.batch_size >= 1),
            ("ddpm.timesteps", self.ddpm.timesteps >= 1),
            ("ddpm.cond_dropout", (0.0..1.0).contains(&self.ddpm.cond_dropout)),
            ("ddpm.guidance", self.ddpm.guidance >= 0.0),
            ("gan.clip_bound", self.gan.train.clip_bound > 0.0),
            ("eval.delta", self.eval_delta >= 0.0),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(ConfigError(format!("{key} = {} is out of range", self.get(key))));
            }
        }
        if self.gan.train.n_critic == 0 {
            return Err(ConfigError("gan.n_critic must be at least 1".into()));
        }
        if self.gan.train.lambda_mse < 0.0 {
            return Err(ConfigError("gan.lambda_mse must be >= 0".into()));
        }
        self.network().validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            n_bins: self.dataset.acquisition.grid.n_bins,
            ..self.net
        }
    }

    pub fn ddpm_config(&self) -> DdpmConfig {
        DdpmConfig {
            net: self.network(),
            conditioning: self.conditioning,
            scale: self.scale,
            batch_size: self.batch_size,
            ..self.ddpm.clone()
        }
    }

    pub fn gan_config(&self) -> GanConfig {
        let mut g = self.gan.clone();
        g.net = self.network();
        g.conditioning = self.conditioning;
        g.scale = self.scale;
        g.train.batch_size = self.batch_size;
        g
    }
}
