use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Transition};
use super::learner::{ActionSpec, AgentLearner, NetworkShape};
use super::TrainConfig;
use crate::comm::CommSchedule;
use crate::envs::{episode_performance, EnvConfig, TransportEnv};
use crate::error::{Error, Result};

const STREAM_INIT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reset seed of episode `episode` for a run seeded with `seed` (SplitMix64 finaliser).
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(episode.wrapping_add(1))
        ^ episode.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-episode training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Transport performance `E`.
    pub performance: f64,
    /// Communication cost `C`.
    pub comm_cost: u64,
    /// Undiscounted episode return averaged over agents.
    pub mean_reward: f64,
    pub noise_scale: f64,
    pub wall_time_s: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

/// Everything needed to continue a run except the replay buffer contents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerState {
    pub episode: usize,
    pub total_steps: usize,
    pub learners: Vec<AgentLearner>,
    pub noise_rng: ChaCha8Rng,
    pub sample_rng: ChaCha8Rng,
}

pub struct Trainer {
    env: TransportEnv,
    config: TrainConfig,
    schedule: CommSchedule,
    seed: u64,
    spec: ActionSpec,
    learners: Vec<AgentLearner>,
    buffer: ReplayBuffer,
    noise_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    episode: usize,
    total_steps: usize,
    started: Instant,
}

impl Trainer {
    pub fn new(
        env_config: EnvConfig,
        config: TrainConfig,
        schedule: CommSchedule,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        let env = TransportEnv::new(env_config)?;
        let ec = env.config();
        let spec = ActionSpec {
            n_agents: ec.n_agents,
            n_categories: ec.n_categories(),
            obs_dim: ec.observation_dim(),
            control_limits: ec.control_limits,
        };
        let shape = NetworkShape {
            actor_hidden: vec![config.units_per_layer; config.hidden_layers_actor],
            critic_hidden: vec![config.units_per_layer; config.hidden_layers_critic],
        };
        let mut init_rng = stream_rng(seed, STREAM_INIT);
        let learners = (0..spec.n_agents)
            .map(|i| {
                AgentLearner::new(
                    i,
                    spec,
                    &shape,
                    config.actor_optimizer,
                    config.critic_optimizer,
                    &mut init_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let buffer = ReplayBuffer::new(
            config.replay_buffer,
            spec.n_agents,
            spec.obs_dim,
            spec.action_dim(),
        );
        Ok(Self {
            env,
            config,
            schedule,
            seed,
            spec,
            learners,
            buffer,
            noise_rng: stream_rng(seed, STREAM_NOISE),
            sample_rng: stream_rng(seed, STREAM_SAMPLE),
            episode: 0,
            total_steps: 0,
            started: Instant::now(),
        })
    }

    pub fn learners(&self) -> &[AgentLearner] {
        &self.learners
    }

    pub fn into_learners(self) -> Vec<AgentLearner> {
        self.learners
    }

    pub fn spec(&self) -> &ActionSpec {
        &self.spec
    }

    pub fn env(&self) -> &TransportEnv {
        &self.env
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.config.episodes
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            episode: self.episode,
            total_steps: self.total_steps,
            learners: self.learners.clone(),
            noise_rng: self.noise_rng.clone(),
            sample_rng: self.sample_rng.clone(),
        }
    }

    /// Continues from a saved state. The replay buffer starts empty and
    /// refills through the usual warm-up.
    pub fn restore(&mut self, state: TrainerState) -> Result<()> {
        if state.learners.len() != self.learners.len()
            || state.learners.iter().any(|l| l.spec != self.spec)
        {
            return Err(Error::Checkpoint(
                "saved learners do not match this scenario".into(),
            ));
        }
        self.episode = state.episode;
        self.total_steps = state.total_steps;
        self.learners = state.learners;
        self.noise_rng = state.noise_rng;
        self.sample_rng = state.sample_rng;
        Ok(())
    }

    /// Exploration scale: linear decay over the first `noise_decay_fraction`
    /// of training, constant afterwards.
    pub fn noise_scale(&self, episode: usize) -> f64 {
        let c = &self.config;
        let horizon = (c.noise_decay_fraction * c.episodes as f64).max(1.0);
        let t = (episode as f64 / horizon).min(1.0);
        c.noise_start + (c.noise_end - c.noise_start) * t
    }

    /// One MADDPG update for every agent on a shared minibatch, followed by
    /// the target soft updates. Returns the mean critic and actor losses.
    fn update_round(&mut self) -> Result<(f64, f64)> {
        let batch = self
            .buffer
            .sample(self.config.batch_size, &mut self.sample_rng)?;
        let next_actions = self
            .learners
            .iter()
            .map(|l| l.target_actions(&batch.next_observations))
            .collect::<Result<Vec<Array2<f64>>>>()?;
        let views: Vec<_> = next_actions.iter().map(|a| a.view()).collect();
        let next_actions = concatenate(Axis(1), &views)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let mut critic_loss = 0.0;
        let mut actor_loss = 0.0;
        for learner in &mut self.learners {
            let y = learner.critic_target(&batch, &next_actions, self.config.discount_factor)?;
            critic_loss += learner.update_critic(&batch, &y)?;
            actor_loss += learner.update_actor(&batch)?;
        }
        for learner in &mut self.learners {
            learner.soft_update(self.config.tau)?;
        }
        let n = self.learners.len() as f64;
        Ok((critic_loss / n, actor_loss / n))
    }

    /// Runs one exploration episode, storing transitions and updating.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let episode = self.episode;
        let noise = self.noise_scale(episode);
        let mut obs = self
            .env
            .reset(episode_seed(self.seed, episode as u64))
            .observations;
        let mut returns = vec![0.0; self.spec.n_agents];
        let (mut closs, mut aloss, mut updates) = (0.0, 0.0, 0usize);
        loop {
            let raw = self
                .learners
                .iter()
                .zip(&obs)
                .map(|(l, o)| l.act(o, noise, &mut self.noise_rng))
                .collect::<Result<Vec<_>>>()?;
            let actions: Vec<_> = raw.iter().map(|r| self.spec.to_agent_action(r)).collect();
            let step = self.env.step(&actions, &self.schedule)?;
            for (acc, r) in returns.iter_mut().zip(&step.rewards) {
                *acc += r;
            }
            self.buffer.push(&Transition {
                observations: obs,
                actions: raw,
                rewards: step.rewards,
                next_observations: step.observations.clone(),
                done: step.done,
            })?;
            self.total_steps += 1;
            let ready = self.buffer.len() >= self.config.warmup_transitions.max(self.config.batch_size);
            if ready && self.total_steps.is_multiple_of(self.config.update_every) {
                let (c, a) = self.update_round().map_err(|e| match e {
                    Error::NonFiniteLoss { agent, what, value } => Error::TrainingDiverged {
                        episode,
                        agent,
                        what,
                        value,
                    },
                    other => other,
                })?;
                closs += c;
                aloss += a;
                updates += 1;
            }
            obs = step.observations;
            if step.done {
                break;
            }
        }
        self.episode += 1;
        let mean = |v: f64| (updates > 0).then(|| v / updates as f64);
        Ok(EpisodeLog {
            episode,
            performance: episode_performance(self.env.distances()),
            comm_cost: self.env.ledger().total,
            mean_reward: returns.iter().sum::<f64>() / returns.len() as f64,
            noise_scale: noise,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            critic_loss: mean(closs),
            actor_loss: mean(aloss),
        })
    }

    /// Trains until the configured episode count, calling `on_episode` after
    /// every episode.
    pub fn train_with<F>(&mut self, mut on_episode: F) -> Result<Vec<EpisodeLog>>
    where
        F: FnMut(&EpisodeLog, &Trainer) -> Result<()>,
    {
        let mut logs = Vec::with_capacity(self.config.episodes.saturating_sub(self.episode));
        while !self.is_finished() {
            let log = self.run_episode()?;
            on_episode(&log, self)?;
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Trained learners and their per-episode curves.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub learners: Vec<AgentLearner>,
    pub curves: Vec<EpisodeLog>,
}

pub fn train(
    env_config: EnvConfig,
    config: TrainConfig,
    schedule: CommSchedule,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env_config, config, schedule, seed)?;
    let curves = trainer.train_with(|_, _| Ok(()))?;
    Ok(TrainOutcome {
        learners: trainer.into_learners(),
        curves,
    })
}
