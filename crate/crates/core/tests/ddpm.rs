//! Loss, forward-process and sampling properties of the diffusion model.

use hrrp_core::ddpm::*;
use hrrp_core::nn::{finite_difference_check, Conditioning, NetworkConfig, ParamStore, Tape, Tensor, Var};
use hrrp_core::rng::rng_from_seed;
use hrrp_core::{ConditionVector, Result};
use rand::Rng;
use rand_distr::StandardNormal;

fn cond() -> ConditionVector {
    ConditionVector::new(80.0, 14.0, 33.0).unwrap()
}

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

/// Recovers the injected noise exactly from `x_t` given the known `x0`.
struct Oracle {
    store: ParamStore,
    x0: Vec<f64>,
    schedule: DiffusionSchedule,
}

impl EpsilonModel for Oracle {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn conditioning(&self) -> Conditioning {
        Conditioning::Both
    }

    fn forward(&self, tape: &mut Tape<'_>, x_t: Var, t: &[usize], _: &[ConditionVector], _: &[bool]) -> Result<Var> {
        let len = self.x0.len();
        let xs = tape.value(x_t).data().to_vec();
        let mut eps = Vec::with_capacity(xs.len());
        for (b, row) in xs.chunks(len).enumerate() {
            let ab = self.schedule.alpha_bar()[t[b]];
            eps.extend(row.iter().zip(&self.x0).map(|(x, x0)| (x - ab.sqrt() * x0) / (1.0 - ab).sqrt()));
        }
        Ok(tape.constant(Tensor::new(tape.shape(x_t).to_vec(), eps)?))
    }
}

/// Constant outputs: `value` when conditioned, `null_value` for the null token.
struct Constant {
    store: ParamStore,
    value: f64,
    null_value: f64,
}

impl EpsilonModel for Constant {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn conditioning(&self) -> Conditioning {
        Conditioning::Both
    }

    fn forward(&self, tape: &mut Tape<'_>, x_t: Var, _: &[usize], _: &[ConditionVector], null: &[bool]) -> Result<Var> {
        let shape = tape.shape(x_t).to_vec();
        let per = shape[1] * shape[2];
        let data = null
            .iter()
            .flat_map(|&n| std::iter::repeat(if n { self.null_value } else { self.value }).take(per))
            .collect();
        Ok(tape.constant(Tensor::new(shape, data)?))
    }
}

#[test]
fn oracle_model_has_zero_loss() {
    let schedule = cosine_alpha_bar(100, COSINE_OFFSET).unwrap();
    let x0: Vec<f64> = (0..12).map(|i| (i as f64 / 6.0) - 1.0).collect();
    let model = Oracle {
        store: ParamStore::default(),
        x0: x0.clone(),
        schedule: schedule.clone(),
    };
    let batch = vec![(x0, cond()); 8];
    let loss = ddpm_loss(&model, &batch, &schedule, 0.1, 3).unwrap();
    assert!(loss < 1e-20, "{loss}");
}

#[test]
fn zero_model_loss_is_unit_variance() {
    let schedule = cosine_alpha_bar(100, COSINE_OFFSET).unwrap();
    let model = Constant {
        store: ParamStore::default(),
        value: 0.0,
        null_value: 0.0,
    };
    let batch = vec![(vec![0.3; 4], cond()); 1000];
    let loss = ddpm_loss(&model, &batch, &schedule, 0.1, 8).unwrap();
    assert!((loss - 1.0).abs() < 0.1, "{loss}");
}

#[test]
fn condition_dropout_frequency() {
    let d = draw_loss_inputs(10_000, 1, 200, 0.1, 17);
    let f = d.dropped.iter().filter(|&&x| x).count() as f64 / 1e4;
    assert!((f - 0.1).abs() <= 0.01, "{f}");
    assert!(d.t.iter().all(|&t| (1..=200).contains(&t)));
    assert!(draw_loss_inputs(1000, 1, 200, 0.0, 17).dropped.iter().all(|&x| !x));
}

#[test]
fn empty_batch_and_bad_dropout_rejected() {
    let schedule = cosine_alpha_bar(10, COSINE_OFFSET).unwrap();
    let model = Constant {
        store: ParamStore::default(),
        value: 0.0,
        null_value: 0.0,
    };
    assert!(ddpm_loss(&model, &[], &schedule, 0.1, 0).is_err());
    assert!(ddpm_loss(&model, &[(vec![0.0; 4], cond())], &schedule, 1.0, 0).is_err());
}

#[test]
fn q_sample_at_t_max_is_standard_normal() {
    let schedule = cosine_alpha_bar(DEFAULT_TIMESTEPS, COSINE_OFFSET).unwrap();
    let mut rng = rng_from_seed(21);
    let noise: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let x0 = vec![0.9; noise.len()];
    let out = q_sample(&x0, DEFAULT_TIMESTEPS, &noise, &schedule).unwrap();
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64;
    assert!(mean.abs() < 0.05, "{mean}");
    assert!((0.9..=1.1).contains(&var), "{var}");
}

#[test]
fn q_sample_variance_law() {
    let schedule = cosine_alpha_bar(DEFAULT_TIMESTEPS, COSINE_OFFSET).unwrap();
    let mut rng = rng_from_seed(5);
    let n = 20_000;
    for t in [50, 200, 400, 600] {
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let out = q_sample(&x0, t, &noise, &schedule).unwrap();
        let mean = out.iter().sum::<f64>() / n as f64;
        let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let ab = schedule.alpha_bar()[t];
        let want = ab / 3.0 + (1.0 - ab);
        assert!((var - want).abs() / want < 0.05, "t {t}: {var} vs {want}");
    }
}

#[test]
fn q_sample_rejects_bad_inputs() {
    let schedule = cosine_alpha_bar(10, COSINE_OFFSET).unwrap();
    assert!(q_sample(&[0.0], 11, &[0.0], &schedule).is_err());
    assert!(q_sample(&[0.0, 1.0], 3, &[0.0], &schedule).is_err());
    assert_eq!(q_sample(&[0.25], 0, &[5.0], &schedule).unwrap(), vec![0.25]);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let model = Denoiser::new(tiny_config(), 2).unwrap();
    let schedule = cosine_alpha_bar(20, COSINE_OFFSET).unwrap();
    let mut rng = rng_from_seed(8);
    let batch: Vec<_> = (0..2)
        .map(|i| {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (x, ConditionVector::new(60.0 + 10.0 * i as f64, 12.0, 40.0 * i as f64).unwrap())
        })
        .collect();
    let f = |flat: &[f64]| {
        let mut m = model.clone();
        m.store.load_flat(flat).unwrap();
        let mut tape = Tape::new(&m.store);
        let (loss, _) = ddpm_loss_on_tape(&mut tape, &m, &batch, &schedule, 0.5, 4).unwrap();
        let value = tape.scalar(loss);
        (value, tape.backward(loss).into_param_grads(&m.store).concat())
    };
    let err = finite_difference_check(f, &model.store.flatten(), 1e-4);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn unit_guidance_is_the_conditional_chain() {
    let schedule = cosine_alpha_bar(30, COSINE_OFFSET).unwrap();
    let store = ParamStore::default();
    let blended = Constant {
        store: store.clone(),
        value: 0.2,
        null_value: -0.7,
    };
    let conditional = Constant {
        store: store.clone(),
        value: 0.2,
        null_value: 0.2,
    };
    let unconditional = Constant {
        store,
        value: -0.7,
        null_value: -0.7,
    };
    let a = ddpm_sample(&blended, &cond(), 16, 1.5, &schedule, 1.0, 9).unwrap();
    let b = ddpm_sample(&conditional, &cond(), 16, 1.5, &schedule, 1.0, 9).unwrap();
    assert_eq!(a, b);
    let a = ddpm_sample(&blended, &cond(), 16, 1.5, &schedule, 0.0, 9).unwrap();
    let b = ddpm_sample(&unconditional, &cond(), 16, 1.5, &schedule, 1.0, 9).unwrap();
    assert_eq!(a, b);
    assert!(ddpm_sample(&blended, &cond(), 16, 1.5, &schedule, -1.0, 9).is_err());
}

#[test]
fn sampling_is_a_function_of_parameters_condition_and_seed() {
    let mut trainer = DdpmTrainer::new(tiny_config(), 6).unwrap();
    let batch: Vec<_> = (0..4).map(|i| (vec![0.1 * i as f64 - 0.5; 16], cond())).collect();
    for s in 0..3 {
        trainer.train_step(&batch, s).unwrap();
    }
    let a = ddpm_sample(&trainer.model, &cond(), 16, 1.5, &trainer.schedule, 1.0, 42).unwrap();
    let mut copy = Denoiser::new(tiny_config(), 999).unwrap();
    copy.store = trainer.model.store.clone();
    let b = ddpm_sample(&copy, &cond(), 16, 1.5, &trainer.schedule, 1.0, 42).unwrap();
    assert_eq!(a, b);
    let c = ddpm_sample(&trainer.model, &cond(), 16, 1.5, &trainer.schedule, 1.0, 43).unwrap();
    assert_ne!(a, c);
    assert!(a.amplitudes().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn training_replay_is_bit_identical() {
    let run = || {
        let mut trainer = DdpmTrainer::new(tiny_config(), 6).unwrap();
        let batch: Vec<_> = (0..4).map(|i| (vec![0.1 * i as f64 - 0.5; 16], cond())).collect();
        (0..10).map(|s| trainer.train_step(&batch, s).unwrap()).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.iter().all(|l| l.is_finite()));
}
