//! Clipped-surrogate PPO update with an Adam optimizer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gae::gae;
use super::mlp::Mlp;
use super::policy::{softmax, PolicyParameters};
use crate::error::{Error, Result};
use crate::fgmres::OBS_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs_per_update: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs_per_update: 4,
            minibatch: 64,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            episodes: 200,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_eps > 0.0
            && self.epochs_per_update >= 1
            && self.minibatch >= 1
            && self.learning_rate > 0.0
            && self.entropy_coef >= 0.0
            && self.value_coef >= 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid PPO config: {self:?}")));
        }
        Ok(())
    }
}

/// One decision of the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action_index: usize,
    /// `ln π_old(action | obs)` at collection time.
    pub log_prob: f64,
    pub reward: f64,
    /// Critic estimate at collection time.
    pub value: f64,
    /// Last transition of its episode.
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    /// Fraction of samples whose ratio left the clip band.
    pub clip_fraction: f64,
}

/// Per-sample clipped objective `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Advantages and returns for a batch of concatenated episodes, split at
/// `done` flags. Episode ends bootstrap from zero.
pub fn batch_advantages(batch: &[Transition], gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(batch.len());
    let mut ret = Vec::with_capacity(batch.len());
    let mut start = 0;
    for (i, t) in batch.iter().enumerate() {
        if t.done || i + 1 == batch.len() {
            let seg = &batch[start..=i];
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            let (a, r) = gae(&rewards, &values, 0.0, gamma, lam).expect("equal lengths");
            adv.extend(a);
            ret.extend(r);
            start = i + 1;
        }
    }
    (adv, ret)
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = f64>,
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + Self::EPS);
        }
    }
}

/// Policy parameters plus optimizer state and shuffling RNG, carried across
/// updates.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub params: PolicyParameters,
    pub cfg: PpoConfig,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl PpoTrainer {
    pub fn new(params: PolicyParameters, cfg: PpoConfig) -> Result<Self> {
        cfg.validate()?;
        let n = params.actor.num_params() + params.critic.num_params();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5050_5f55_5044_4154);
        Ok(Self {
            params,
            cfg,
            adam: Adam::new(n),
            rng,
        })
    }

    /// Runs `epochs_per_update` passes of shuffled minibatches over `batch`.
    /// On a non-finite loss the parameters are left untouched.
    pub fn update(&mut self, batch: &[Transition]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty PPO batch".into()));
        }
        let cfg = &self.cfg;
        let (mut adv, returns) = batch_advantages(batch, cfg.gamma, cfg.gae_lambda);
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64;
        let std = var.sqrt();
        for a in &mut adv {
            *a = (*a - mean) / (std + 1e-8);
        }

        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut totals = UpdateStats::default();
        let mut evaluations = 0usize;

        for _ in 0..cfg.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.minibatch) {
                let (stats, actor_grad, critic_grad) =
                    minibatch_gradients(&params, batch, &adv, &returns, chunk, cfg);
                let loss = stats.policy_loss + cfg.value_coef * stats.value_loss
                    - cfg.entropy_coef * stats.entropy;
                let grads_finite = actor_grad.all_finite() && critic_grad.all_finite();
                if !loss.is_finite() || !grads_finite {
                    return Err(Error::NonFiniteLoss {
                        episode: None,
                        diagnostics: format!("{stats:?}"),
                    });
                }
                let PolicyParameters { actor, critic, .. } = &mut params;
                adam.step(
                    actor.params_mut().chain(critic.params_mut()),
                    actor_grad.params().chain(critic_grad.params()).copied(),
                    cfg.learning_rate,
                );
                totals.policy_loss += stats.policy_loss;
                totals.value_loss += stats.value_loss;
                totals.entropy += stats.entropy;
                totals.approx_kl += stats.approx_kl;
                totals.clip_fraction += stats.clip_fraction;
                evaluations += 1;
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFiniteLoss {
                episode: None,
                diagnostics: "parameters became non-finite".into(),
            });
        }
        self.params = params;
        self.adam = adam;
        let k = evaluations as f64;
        Ok(UpdateStats {
            policy_loss: totals.policy_loss / k,
            value_loss: totals.value_loss / k,
            entropy: totals.entropy / k,
            approx_kl: totals.approx_kl / k,
            clip_fraction: totals.clip_fraction / k,
        })
    }
}

/// Minibatch losses (means) and gradients of
/// `policy_loss + value_coef·value_loss − entropy_coef·entropy`.
fn minibatch_gradients(
    params: &PolicyParameters,
    batch: &[Transition],
    adv: &[f64],
    returns: &[f64],
    idx: &[usize],
    cfg: &PpoConfig,
) -> (UpdateStats, Mlp, Mlp) {
    let scale = 1.0 / idx.len() as f64;
    let mut actor_grad = params.actor.zeros_like();
    let mut critic_grad = params.critic.zeros_like();
    let mut stats = UpdateStats::default();

    for &i in idx {
        let t = &batch[i];
        let a = adv[i];
        let cache = params.actor.forward_cached(&t.obs);
        let probs = softmax(cache.output());
        let logp = probs[t.action_index].ln();
        let ratio = (logp - t.log_prob).exp();
        let surrogate = clipped_surrogate(ratio, a, cfg.clip_eps);
        let entropy: f64 = -probs.iter().map(|p| if *p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>();

        stats.policy_loss -= surrogate * scale;
        stats.entropy += entropy * scale;
        stats.approx_kl += ((ratio - 1.0) - (logp - t.log_prob)) * scale;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            stats.clip_fraction += scale;
        }

        let mut d_logits = vec![0.0; probs.len()];
        // Gradient flows through the unclipped branch only when it is the minimum.
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
        if ratio * a <= clipped {
            let coef = -a * ratio * scale;
            for (k, (d, p)) in d_logits.iter_mut().zip(&probs).enumerate() {
                let onehot = if k == t.action_index { 1.0 } else { 0.0 };
                *d += coef * (onehot - p);
            }
        }
        // d(−c·H)/dz_k = c · p_k (ln p_k + H)
        for (d, p) in d_logits.iter_mut().zip(&probs) {
            let lp = if *p > 0.0 { p.ln() } else { 0.0 };
            *d += cfg.entropy_coef * scale * p * (lp + entropy);
        }
        params.actor.backward(&cache, &d_logits, &mut actor_grad);

        let vcache = params.critic.forward_cached(&t.obs);
        let v = vcache.output()[0];
        let err = v - returns[i];
        stats.value_loss += err * err * scale;
        params
            .critic
            .backward(&vcache, &[2.0 * cfg.value_coef * err * scale], &mut critic_grad);
    }
    (stats, actor_grad, critic_grad)
}

/// One update from a fresh optimizer state.
pub fn ppo_update(
    params: &PolicyParameters,
    batch: &[Transition],
    cfg: &PpoConfig,
) -> Result<(PolicyParameters, UpdateStats)> {
    let mut trainer = PpoTrainer::new(params.clone(), cfg.clone())?;
    let stats = trainer.update(batch)?;
    Ok((trainer.params, stats))
}
