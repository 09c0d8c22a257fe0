use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::Batch;
use crate::envs::AgentAction;
use crate::error::{Error, Result};
use crate::neural::{Activation, AdamConfig, AdamState, Mlp};

/// Shapes shared by every agent of a homogeneous team.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub n_agents: usize,
    pub n_categories: usize,
    pub obs_dim: usize,
    pub control_limits: [f64; 2],
}

impl ActionSpec {
    pub fn control_dim(&self) -> usize {
        2
    }

    /// `dim(u) + N + L`
    pub fn action_dim(&self) -> usize {
        self.control_dim() + self.n_agents + self.n_categories
    }

    pub fn critic_input_dim(&self) -> usize {
        self.n_agents * (self.obs_dim + self.action_dim())
    }

    /// Splits a raw `[-1, 1]` action into control (rescaled to physical
    /// bounds) and trigger signals.
    pub fn to_agent_action(&self, raw: &[f64]) -> AgentAction {
        let k = self.control_dim();
        let n = self.n_agents;
        AgentAction {
            u: raw[..k]
                .iter()
                .zip(&self.control_limits)
                .map(|(v, lim)| v * lim)
                .collect(),
            c: raw[k..k + n].to_vec(),
            d: raw[k + n..k + n + self.n_categories].to_vec(),
        }
    }
}

/// Actor, centralized critic, their targets and optimizers for one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentLearner {
    pub index: usize,
    pub spec: ActionSpec,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_optimizer: AdamState,
    pub critic_optimizer: AdamState,
}

/// Network widths for actor and critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl AgentLearner {
    pub fn new<R: Rng + ?Sized>(
        index: usize,
        spec: ActionSpec,
        shape: &NetworkShape,
        actor_opt: AdamConfig,
        critic_opt: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if index >= spec.n_agents {
            return Err(Error::Dimension(format!("agent {index} out of range")));
        }
        let sizes = |input: usize, hidden: &[usize], output: usize| {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(output))
                .collect::<Vec<_>>()
        };
        let actor = Mlp::new(
            &sizes(spec.obs_dim, &shape.actor_hidden, spec.action_dim()),
            Activation::Relu,
            Activation::Tanh,
            rng,
        )?;
        let critic = Mlp::new(
            &sizes(spec.critic_input_dim(), &shape.critic_hidden, 1),
            Activation::Relu,
            Activation::Linear,
            rng,
        )?;
        Ok(Self {
            index,
            spec,
            actor_optimizer: AdamState::new(actor.params(), actor_opt),
            critic_optimizer: AdamState::new(critic.params(), critic_opt),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }

    /// Deterministic actor output plus `N(0, noise_scale²)` per component,
    /// clamped to `[-1, 1]`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        observation: &[f64],
        noise_scale: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if observation.len() != self.spec.obs_dim {
            return Err(Error::Dimension(format!(
                "observation length {} does not match actor input {}",
                observation.len(),
                self.spec.obs_dim
            )));
        }
        let x = ArrayView2::from_shape((1, observation.len()), observation)
            .expect("contiguous slice");
        let y = self.actor.predict(x)?;
        let mut out: Vec<f64> = y.into_raw_vec_and_offset().0;
        if noise_scale > 0.0 {
            let normal = Normal::new(0.0, noise_scale)
                .map_err(|e| Error::Config(format!("noise scale: {e}")))?;
            for v in &mut out {
                *v += normal.sample(rng);
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        Ok(out)
    }

    fn obs_block<'a>(&self, joint: &'a Array2<f64>, agent: usize) -> ArrayView2<'a, f64> {
        let d = self.spec.obs_dim;
        joint.slice(s![.., agent * d..(agent + 1) * d])
    }

    /// Bellman targets `r_i + γ(1 - done) Q'_i(o', a'')` where `a''` are the
    /// target actors' actions on the next observations.
    pub fn critic_target(
        &self,
        batch: &Batch,
        next_target_actions: &Array2<f64>,
        gamma: f64,
    ) -> Result<Array2<f64>> {
        let input = concatenate![Axis(1), batch.next_observations, *next_target_actions];
        let q_next = self.target_critic.predict(input.view())?;
        let r = batch.rewards.column(self.index);
        let mut y = Array2::zeros((batch.len(), 1));
        for b in 0..batch.len() {
            y[[b, 0]] = r[b] + gamma * (1.0 - batch.done[b]) * q_next[[b, 0]];
        }
        Ok(y)
    }

    /// One Adam step on the mean squared Bellman error; returns the loss
    /// before the step.
    pub fn update_critic(&mut self, batch: &Batch, targets: &Array2<f64>) -> Result<f64> {
        let input = concatenate![Axis(1), batch.observations, batch.actions];
        let (q, tape) = self.critic.forward(input.view())?;
        let n = batch.len() as f64;
        let diff = &q - targets;
        let loss = diff.mapv(|v| v * v).sum() / n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                agent: self.index,
                what: "critic loss",
                value: loss,
            });
        }
        let grad = diff * (2.0 / n);
        let (grads, _) = self.critic.backward(tape, grad.view())?;
        self.critic_optimizer.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// One Adam step on `-mean Q_i(o, a_1..μ_i(o_i)..a_N)`; other agents'
    /// actions come from the batch. Returns the loss before the step.
    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        let i = self.index;
        let a_dim = self.spec.action_dim();
        let own_obs = self.obs_block(&batch.observations, i).to_owned();
        let (own_action, actor_tape) = self.actor.forward(own_obs.view())?;
        let mut actions = batch.actions.clone();
        actions
            .slice_mut(s![.., i * a_dim..(i + 1) * a_dim])
            .assign(&own_action);
        let input = concatenate![Axis(1), batch.observations, actions];
        let (q, critic_tape) = self.critic.forward(input.view())?;
        let n = batch.len() as f64;
        let loss = -q.sum() / n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                agent: i,
                what: "actor loss",
                value: loss,
            });
        }
        let dq = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let d_input = self.critic.input_gradient(critic_tape, dq.view())?;
        let offset = batch.observations.ncols() + i * a_dim;
        let d_action = d_input.slice(s![.., offset..offset + a_dim]);
        let (grads, _) = self.actor.backward(actor_tape, d_action)?;
        self.actor_optimizer.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    /// Target actor outputs on agent `index`'s block of `joint_obs`.
    pub fn target_actions(&self, joint_obs: &Array2<f64>) -> Result<Array2<f64>> {
        self.target_actor
            .predict(self.obs_block(joint_obs, self.index))
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, tau)?;
        soft_update(&mut self.target_critic, &self.critic, tau)
    }

    pub fn q_value(&self, joint_obs: ArrayView1<f64>, joint_actions: ArrayView1<f64>) -> Result<f64> {
        let input = concatenate![Axis(0), joint_obs, joint_actions];
        let x = input.view().insert_axis(Axis(0));
        Ok(self.critic.predict(x)?[[0, 0]])
    }
}

/// `target ← τ·online + (1−τ)·target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("τ must lie in [0, 1], got {tau}")));
    }
    target.soft_update_from(online, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::trigger;
    use crate::neural::{Dense, Params};
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(n: usize, l: usize, obs: usize) -> ActionSpec {
        ActionSpec {
            n_agents: n,
            n_categories: l,
            obs_dim: obs,
            control_limits: [0.2, 0.5],
        }
    }

    fn learner(spec: ActionSpec, index: usize, seed: u64) -> AgentLearner {
        let shape = NetworkShape {
            actor_hidden: vec![16, 16],
            critic_hidden: vec![16, 16],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AgentLearner::new(
            index,
            spec,
            &shape,
            AdamConfig::default(),
            AdamConfig::default(),
            &mut rng,
        )
        .unwrap()
    }

    fn zero_out(net: &mut Mlp) {
        for s in net.params_mut().slices_mut() {
            s.fill(0.0);
        }
    }

    fn batch(spec: &ActionSpec, b: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0));
        let n = spec.n_agents;
        Batch {
            observations: m(b, n * spec.obs_dim),
            actions: m(b, n * spec.action_dim()),
            rewards: m(b, n),
            next_observations: m(b, n * spec.obs_dim),
            done: Array1::zeros(b),
        }
    }

    #[test]
    fn zero_actor_emits_no_triggers() {
        let s = spec(3, 6, 5);
        let mut l = learner(s, 0, 1);
        zero_out(&mut l.actor);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = l.act(&[0.3; 5], 0.0, &mut rng).unwrap();
        assert_eq!(raw.len(), 11);
        assert!(raw.iter().all(|&v| v == 0.0));
        let d = trigger(&s.to_agent_action(&raw).signals());
        assert_eq!(d.l1(), 0);
    }

    #[test]
    fn act_is_clamped_and_rejects_wrong_length() {
        let s = spec(2, 3, 4);
        let l = learner(s, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = l.act(&[0.1; 4], 50.0, &mut rng).unwrap();
        assert!(raw.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(l.act(&[0.1; 3], 0.0, &mut rng).is_err());
    }

    #[test]
    fn to_agent_action_scales_control_only() {
        let s = spec(2, 3, 4);
        let a = s.to_agent_action(&[1.0, -1.0, 0.5, -0.5, 0.1, 0.2, 0.3]);
        assert_eq!(a.u, vec![0.2, -0.5]);
        assert_eq!(a.c, vec![0.5, -0.5]);
        assert_eq!(a.d, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn critic_target_matches_hand_oracle() {
        let s = spec(2, 1, 1);
        let mut l = learner(s, 1, 3);
        // Q'(x) = Σ x + 0.5 on a linear critic without hidden layers.
        let dim = s.critic_input_dim();
        l.target_critic = Mlp::from_params(
            Params {
                layers: vec![Dense {
                    weight: Array2::ones((dim, 1)),
                    bias: array![0.5],
                }],
            },
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let mut b = batch(&s, 3, 4);
        b.done[2] = 1.0;
        let next_a = Array2::from_elem((3, 2 * s.action_dim()), 0.1);
        let gamma = 0.9;
        let y = l.critic_target(&b, &next_a, gamma).unwrap();
        for r in 0..3 {
            let q = b.next_observations.row(r).sum() + next_a.row(r).sum() + 0.5;
            let alive = if r == 2 { 0.0 } else { 1.0 };
            let expect = b.rewards[[r, 1]] + gamma * alive * q;
            assert!((y[[r, 0]] - expect).abs() < 1e-12);
        }
        let y0 = l.critic_target(&b, &next_a, 0.0).unwrap();
        for r in 0..3 {
            assert_eq!(y0[[r, 0]], b.rewards[[r, 1]]);
        }
    }

    #[test]
    fn update_critic_at_fixed_point_leaves_params() {
        let s = spec(2, 2, 3);
        let mut l = learner(s, 0, 5);
        let b = batch(&s, 8, 6);
        let input = concatenate![Axis(1), b.observations, b.actions];
        let q = l.critic.predict(input.view()).unwrap();
        let before = l.critic.clone();
        let loss = l.update_critic(&b, &q).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(l.critic, before);
    }

    #[test]
    fn update_critic_reduces_loss_on_frozen_batch() {
        let s = spec(2, 2, 3);
        let mut l = learner(s, 0, 7);
        l.critic_optimizer.config.learning_rate = 1e-3;
        let b = batch(&s, 32, 8);
        let y = b.rewards.column(0).to_owned().insert_axis(Axis(1));
        let first = l.update_critic(&b, &y).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = l.update_critic(&b, &y).unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn constant_critic_gives_no_actor_step() {
        let s = spec(2, 2, 3);
        let mut l = learner(s, 1, 9);
        zero_out(&mut l.critic);
        let before = l.actor.clone();
        let b = batch(&s, 8, 10);
        l.update_actor(&b).unwrap();
        assert_eq!(l.actor, before);
    }

    #[test]
    fn actor_climbs_a_linear_critic() {
        // Q = w · a_i with w = +1 on the first component and -1 elsewhere:
        // the maximiser over [-1, 1] is (1, -1, -1, ...).
        let s = spec(2, 1, 2);
        let mut l = learner(s, 1, 11);
        let a_dim = s.action_dim();
        let dim = s.critic_input_dim();
        let mut w = Array2::zeros((dim, 1));
        let offset = 2 * s.obs_dim + a_dim;
        for k in 0..a_dim {
            w[[offset + k, 0]] = if k == 0 { 1.0 } else { -1.0 };
        }
        l.critic = Mlp::from_params(
            Params {
                layers: vec![Dense {
                    weight: w,
                    bias: array![0.0],
                }],
            },
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let b = batch(&s, 16, 12);
        let critic_before = l.critic.clone();
        for _ in 0..300 {
            l.update_actor(&b).unwrap();
        }
        assert_eq!(l.critic, critic_before);
        let own = l.obs_block(&b.observations, 1).to_owned();
        let out = l.actor.predict(own.view()).unwrap();
        for row in out.rows() {
            assert!(row[0] > 0.9);
            assert!(row.iter().skip(1).all(|&v| v < -0.9));
        }
    }

    #[test]
    fn actor_gradient_flows_only_through_own_action() {
        // Agent 0's gradient flows only through its own action block, so a
        // critic that reads only agent 1's actions produces no step.
        let s = spec(2, 1, 2);
        let mut l = learner(s, 0, 13);
        let a_dim = s.action_dim();
        let dim = s.critic_input_dim();
        let mut w = Array2::zeros((dim, 1));
        for k in 0..a_dim {
            w[[2 * s.obs_dim + a_dim + k, 0]] = 1.0;
        }
        l.critic = Mlp::from_params(
            Params {
                layers: vec![Dense {
                    weight: w,
                    bias: array![0.0],
                }],
            },
            Activation::Relu,
            Activation::Linear,
        )
        .unwrap();
        let before = l.actor.clone();
        let b = batch(&s, 8, 14);
        let loss = l.update_actor(&b).unwrap();
        assert_eq!(l.actor, before);
        let expect = -b.actions.slice(s![.., a_dim..]).sum() / 8.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn soft_update_is_geometric() {
        let s = spec(2, 1, 2);
        let mut l = learner(s, 0, 15);
        zero_out(&mut l.actor);
        let t0 = l.target_actor.params().to_flat();
        let tau = 0.01;
        for _ in 0..50 {
            l.soft_update(tau).unwrap();
        }
        let factor = (1.0 - tau).powi(50);
        for (a, b) in l.target_actor.params().to_flat().iter().zip(&t0) {
            assert!((a - b * factor).abs() < 1e-12);
        }
        assert!(l.soft_update(1.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn soft_update_stays_between(tau in 0.0f64..=1.0, seed in 0u64..1000) {
            let s = spec(2, 1, 2);
            let a = learner(s, 0, seed);
            let b = learner(s, 0, seed + 1);
            let mut t = a.actor.clone();
            soft_update(&mut t, &b.actor, tau).unwrap();
            for ((x, y), z) in a.actor.params().to_flat().iter()
                .zip(b.actor.params().to_flat().iter())
                .zip(t.params().to_flat().iter())
            {
                let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                proptest::prop_assert!(*z >= lo - 1e-15 && *z <= hi + 1e-15);
            }
        }
    }
}
