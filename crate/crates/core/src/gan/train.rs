use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::{Discriminator, Gan, Generator};
use super::loss::{d_loss_graph, g_loss_graph};
use crate::autodiff::{Graph, Tensor};
use crate::data::{batch_indices, SeriesBatch};
use crate::error::{Error, Result};

/// Losses beyond this magnitude mark a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    /// Discriminator updates per generator update.
    #[serde(default = "default_d_steps")]
    pub d_steps: usize,
    pub seed: u64,
    /// Caps the number of batches per epoch (smoke runs).
    #[serde(default)]
    pub max_batches: Option<usize>,
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_eps() -> f64 {
    1e-8
}

fn default_d_steps() -> usize {
    2
}

impl TrainConfig {
    /// 120 epochs, batches of 50, learning rate 2e-4.
    pub fn sine(seed: u64) -> Self {
        TrainConfig {
            epochs: 120,
            batch_size: 50,
            learning_rate: 2e-4,
            adam_betas: default_betas(),
            adam_eps: default_eps(),
            d_steps: default_d_steps(),
            seed,
            max_batches: None,
        }
    }

    /// 60 epochs, batches of 119, learning rate 2e-4.
    pub fn ecg(seed: u64) -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 119,
            ..Self::sine(seed)
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be a positive finite number"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        if !(1..=5).contains(&self.d_steps) {
            return Err(Error::config("train.d_steps", "must be between 1 and 5"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::config("train.adam_betas", "each beta must lie in [0, 1)"));
        }
        if self.max_batches == Some(0) {
            return Err(Error::config("train.max_batches", "must be at least 1 when set"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub g_loss: f64,
    /// Mean over the epoch of (real-batch loss + fake-batch loss).
    pub d_loss: f64,
    pub mmd2: f64,
    pub dtw_mean: f64,
    pub checkpoint_id: String,
}

/// What the end-of-epoch hook reports back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochEval {
    pub mmd2: f64,
    pub dtw_mean: f64,
    pub checkpoint_id: String,
}

pub struct EpochContext<'a> {
    pub epoch: usize,
    pub g_loss: f64,
    pub d_loss: f64,
    pub gan: &'a Gan,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    /// Set when the losses exploded; reports up to the failure are kept.
    pub failure: Option<String>,
    pub d_updates: usize,
    pub g_updates: usize,
}

impl TrainOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// `m x T` i.i.d. standard normal noise.
pub fn sample_noise<R: Rng + ?Sized>(m: usize, t: usize, rng: &mut R) -> Tensor {
    let data = (0..m * t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![m, t], data).expect("positive dims")
}

fn diverged(loss: f64) -> bool {
    !loss.is_finite() || loss.abs() > DIVERGENCE_THRESHOLD
}

/// One discriminator update on a real batch and freshly generated fakes.
fn discriminator_step<R: Rng + ?Sized>(
    gen: &Generator,
    disc: &mut Discriminator,
    state: &mut AdamState,
    adam: &AdamConfig,
    real: &Tensor,
    rng: &mut R,
) -> Result<f64> {
    let (m, t) = (real.shape()[0], real.shape()[1]);
    let fake = gen.generate(&sample_noise(m, t, rng))?;
    let mut g = Graph::new();
    let xr = g.constant(real.clone());
    let xf = g.constant(fake);
    let pr = disc.forward(&mut g, xr)?;
    let pf = disc.forward(&mut g, xf)?;
    let loss = d_loss_graph(&mut g, pr, pf)?;
    let value = g.value(loss).item();
    disc.store.zero_grads();
    g.backward_into(loss, &mut [&mut disc.store])?;
    adam_step(&mut disc.store, state, adam);
    Ok(value)
}

fn generator_step<R: Rng + ?Sized>(
    gen: &mut Generator,
    disc: &mut Discriminator,
    state: &mut AdamState,
    adam: &AdamConfig,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    let z = sample_noise(m, gen.spec.length, rng);
    disc.store.set_trainable(false);
    let mut g = Graph::new();
    let zv = g.constant(z);
    let built = gen
        .forward(&mut g, zv)
        .and_then(|x| disc.forward(&mut g, x))
        .and_then(|p| g_loss_graph(&mut g, p));
    disc.store.set_trainable(true);
    let loss = built?;
    let value = g.value(loss).item();
    gen.store.zero_grads();
    g.backward_into(loss, &mut [&mut gen.store])?;
    adam_step(&mut gen.store, state, adam);
    Ok(value)
}

/// Adversarial training.
///
/// Each epoch shuffles `data`, and for every full batch performs
/// `cfg.d_steps` discriminator updates (fresh noise each) followed by one
/// generator update. At the end of each epoch `hook` evaluates the current
/// model and persists whatever it needs. A loss that is non-finite or exceeds
/// [`DIVERGENCE_THRESHOLD`] stops training and sets
/// [`TrainOutcome::failure`].
pub fn train<F>(gan: &mut Gan, cfg: &TrainConfig, data: &SeriesBatch, mut hook: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochContext<'_>) -> Result<EpochEval>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if data.length() != gan.spec.generator.length {
        return Err(Error::ShapeMismatch {
            op: "train",
            lhs: vec![gan.spec.generator.length],
            rhs: vec![data.length()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let adam = cfg.adam();
    let mut d_state = AdamState::new(&gan.discriminator.store);
    let mut g_state = AdamState::new(&gan.generator.store);
    let mut outcome = TrainOutcome {
        reports: Vec::new(),
        failure: None,
        d_updates: 0,
        g_updates: 0,
    };

    for epoch in 1..=cfg.epochs {
        let mut batches = batch_indices(data.len(), cfg.batch_size, &mut rng)?;
        if let Some(cap) = cfg.max_batches {
            batches.truncate(cap);
        }
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for idx in &batches {
            let real = data.select(idx).to_tensor()?;
            for _ in 0..cfg.d_steps {
                let l = discriminator_step(
                    &gan.generator,
                    &mut gan.discriminator,
                    &mut d_state,
                    &adam,
                    &real,
                    &mut rng,
                )?;
                outcome.d_updates += 1;
                d_sum += l;
                if diverged(l) {
                    outcome.failure = Some(format!("discriminator loss {l} at epoch {epoch}"));
                    return Ok(outcome);
                }
            }
            let l = generator_step(
                &mut gan.generator,
                &mut gan.discriminator,
                &mut g_state,
                &adam,
                cfg.batch_size,
                &mut rng,
            )?;
            outcome.g_updates += 1;
            g_sum += l;
            if diverged(l) {
                outcome.failure = Some(format!("generator loss {l} at epoch {epoch}"));
                return Ok(outcome);
            }
        }
        let nb = batches.len() as f64;
        let d_loss = d_sum / (nb * cfg.d_steps as f64);
        let g_loss = g_sum / nb;
        let eval = hook(&EpochContext {
            epoch,
            g_loss,
            d_loss,
            gan,
        })?;
        outcome.reports.push(EpochReport {
            epoch,
            g_loss,
            d_loss,
            mmd2: eval.mmd2,
            dtw_mean: eval.dtw_mean,
            checkpoint_id: eval.checkpoint_id,
        });
    }
    Ok(outcome)
}

/// `n` generated series, produced in chunks of at most 500 rows.
pub fn synthesize<R: Rng + ?Sized>(gen: &Generator, n: usize, rng: &mut R) -> Result<SeriesBatch> {
    let t = gen.spec.length;
    let mut out = SeriesBatch::empty(t);
    let mut left = n;
    while left > 0 {
        let m = left.min(500);
        let y = gen.generate(&sample_noise(m, t, rng))?;
        for row in y.iter_rows() {
            out.push(row)?;
        }
        left -= m;
    }
    Ok(out)
}
