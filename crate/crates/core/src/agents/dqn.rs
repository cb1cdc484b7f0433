use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AgentError, HyperParams, QNetwork, ReplayBuffer, State, Transition};
use crate::nn::{td_target, Optimizer, Tape, Var};

/// Mean losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    /// Mean L¹ before the θ-step.
    pub td: f64,
    /// L² before the α-step; `None` for networks without α.
    pub entropy: Option<f64>,
}

/// Online and target networks, their optimizers, replay memory and RNG.
#[derive(Debug, Clone)]
pub struct DqnAgent<N: QNetwork> {
    pub online: N,
    pub target: N,
    pub buffer: ReplayBuffer,
    pub hp: HyperParams,
    pub rng: ChaCha8Rng,
    opt_theta: Optimizer,
    opt_alpha: Optimizer,
}

impl<N: QNetwork> DqnAgent<N> {
    pub fn new(online: N, hp: HyperParams, seed: u64) -> Self {
        Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            opt_theta: Optimizer::new(hp.optimizer, hp.lr),
            opt_alpha: Optimizer::new(hp.optimizer, hp.lr),
            rng: ChaCha8Rng::seed_from_u64(seed),
            hp,
        }
    }

    pub fn act(&mut self, state: &State, epsilon: f64) -> Result<usize, AgentError> {
        let q = self.online.q_values(state)?;
        Ok(super::dqn_act(&q, epsilon, &mut self.rng))
    }

    /// `r + γ·max_a′ Q_target(s′, a′)` per transition (just `r` when done).
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
        let next: Vec<&State> = batch.iter().map(|t| t.next_state.as_ref()).collect();
        let inputs = self.target.batch(&next)?;
        let mut tape = Tape::new(self.target.params());
        let vars: Vec<Var> = inputs.into_iter().map(|t| tape.input(t)).collect();
        let q = self.target.forward(&mut tape, &vars)?;
        let qv = tape.value(q);
        Ok(batch
            .iter()
            .enumerate()
            .map(|(r, t)| td_target(t.reward, qv.row(r), t.done, self.hp.gamma))
            .collect())
    }

    /// One descent step on mean L¹ over θ; α and the target are untouched.
    pub fn theta_step(
        &mut self,
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<f64, AgentError> {
        let states: Vec<&State> = batch.iter().map(|t| t.state.as_ref()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let inputs = self.online.batch(&states)?;
        let (grads, loss) = {
            let net = &self.online;
            let mut tape = Tape::new(net.params());
            let vars: Vec<Var> = inputs.into_iter().map(|t| tape.input(t)).collect();
            let q = net.forward(&mut tape, &vars)?;
            let err = tape.td_error(q, &actions, targets)?;
            let loss = tape.mean(err);
            let value = tape.value(loss).item();
            (tape.backward(loss, |id| !net.is_alpha(id))?, value)
        };
        self.opt_theta.step(self.online.params_mut(), &grads);
        Ok(loss)
    }

    /// One descent step on mean L¹ + β·L² over α; θ is untouched. Returns
    /// L² before the step, or `None` when the network has no α.
    pub fn alpha_step(
        &mut self,
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<Option<f64>, AgentError> {
        let states: Vec<&State> = batch.iter().map(|t| t.state.as_ref()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let inputs = self.online.batch(&states)?;
        let beta = self.hp.beta;
        let result = {
            let net = &self.online;
            let mut tape = Tape::new(net.params());
            let Some(entropy) = net.entropy(&mut tape) else {
                return Ok(None);
            };
            let entropy = entropy?;
            let vars: Vec<Var> = inputs.into_iter().map(|t| tape.input(t)).collect();
            let q = net.forward(&mut tape, &vars)?;
            let err = tape.td_error(q, &actions, targets)?;
            let td = tape.mean(err);
            let weighted = tape.scale(entropy, beta);
            let loss = tape.add(td, weighted)?;
            let h = tape.value(entropy).item();
            (tape.backward(loss, |id| net.is_alpha(id))?, h)
        };
        self.opt_alpha.step(self.online.params_mut(), &result.0);
        Ok(Some(result.1))
    }

    /// θ-step then α-step on one batch, sharing the target values.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<StepLosses, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let targets = self.targets(batch)?;
        let td = self.theta_step(batch, &targets)?;
        let entropy = self.alpha_step(batch, &targets)?;
        Ok(StepLosses { td, entropy })
    }

    pub fn soft_update(&mut self) -> Result<(), AgentError> {
        let tau = self.hp.tau;
        self.target
            .params_mut()
            .soft_update_from(self.online.params(), tau)?;
        Ok(())
    }

    /// Records a transition and, once a full batch is available, trains and
    /// soft-updates the target.
    pub fn observe(&mut self, t: Transition) -> Result<Option<StepLosses>, AgentError> {
        self.buffer.push(t);
        if self.buffer.len() < self.hp.batch_size {
            return Ok(None);
        }
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.hp.batch_size, &mut self.rng)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let losses = self.train_step(&refs)?;
        self.soft_update()?;
        Ok(Some(losses))
    }
}
