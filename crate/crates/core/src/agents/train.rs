use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    observe, AgentError, Controller, DqnAgent, Env, HyperParams, Mlp, ObsKind, QNetwork, State,
    Transition,
};
use crate::features::{catalog, FeatureConfig, FeatureId};
use crate::nn;
use crate::sim::{IntersectionId, Scenario, Simulation};
use crate::supergraph::{random_path, SubGraph, SubGraphManifest, SuperGraph, SuperGraphSpec};

/// Per-intersection summary of one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub stage: String,
    pub episode: usize,
    pub intersection: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    /// Mean TD loss over the episode's training steps.
    pub td_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub avg_travel_time: Option<f64>,
    pub throughput: f64,
}

/// One architecture weight after a search episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub episode: usize,
    pub intersection: usize,
    pub layer: usize,
    pub component: usize,
    pub value: f64,
}

/// Decorrelated per-purpose seed; distinct `(stream, index)` pairs never collide
/// for `index < 2^32`.
fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (stream << 48) ^ (stream << 32).wrapping_add(index)
}

const STREAM_JITTER: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_INIT: u64 = 3;

/// Catalog features at 0-based `indices`.
pub fn feature_ids(indices: &[usize]) -> Vec<FeatureId> {
    let all: Vec<FeatureId> = FeatureId::all().collect();
    indices.iter().map(|&i| all[i]).collect()
}

/// Maps a network's action index to the phase command.
type ActionMap = fn(&Simulation, IntersectionId, usize) -> usize;

fn identity_action(_: &Simulation, _: IntersectionId, a: usize) -> usize {
    a
}

/// Action 0 keeps the current (or pending) phase, action 1 moves to the next one.
fn keep_or_switch(sim: &Simulation, i: IntersectionId, a: usize) -> usize {
    let target = sim.signal(i).target_phase();
    if a == 0 {
        target
    } else {
        (target + 1) % sim.network().intersection(i).num_phases()
    }
}

#[derive(Default)]
struct Accum {
    reward: f64,
    decisions: usize,
    td: f64,
    td_n: usize,
    entropy: f64,
    entropy_n: usize,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// One training episode: ε-greedy acting, online DQN updates after every
/// decision, all intersections sharing one simulation.
#[allow(clippy::too_many_arguments)]
fn train_episode<N: QNetwork>(
    scenario: &Scenario,
    agents: &mut [DqnAgent<N>],
    obs: &[ObsKind],
    to_phase: ActionMap,
    cfg: &FeatureConfig,
    hp: &HyperParams,
    epsilon: f64,
    stage: &str,
    episode: usize,
    seed: u64,
) -> Result<Vec<EpisodeLog>, AgentError> {
    let ep = scenario
        .jittered(
            derive_seed(seed, STREAM_JITTER, episode as u64),
            hp.jitter_s,
        )
        .truncated(hp.episode_s);
    let mut env = Env::new(&ep, hp.episode_s, hp.decision_interval_s);
    let n = env.num_intersections();
    let mut acc: Vec<Accum> = (0..n).map(|_| Accum::default()).collect();
    let mut states: Vec<Arc<State>> = (0..n)
        .map(|i| Arc::new(observe(env.sim(), IntersectionId(i), &obs[i], cfg)))
        .collect();
    while !env.done() {
        let mut actions = Vec::with_capacity(n);
        let mut commands = Vec::with_capacity(n);
        for (i, agent) in agents.iter_mut().enumerate() {
            let a = agent.act(&states[i], epsilon)?;
            actions.push(a);
            commands.push(to_phase(env.sim(), IntersectionId(i), a));
        }
        let rewards = env.advance(&commands)?;
        let done = env.done();
        for (i, agent) in agents.iter_mut().enumerate() {
            let next = Arc::new(observe(env.sim(), IntersectionId(i), &obs[i], cfg));
            let losses = agent.observe(Transition {
                state: Arc::clone(&states[i]),
                action: actions[i],
                reward: rewards[i] * hp.reward_scale,
                next_state: Arc::clone(&next),
                done,
            })?;
            let a = &mut acc[i];
            a.reward += rewards[i];
            a.decisions += 1;
            if let Some(l) = losses {
                a.td += l.td;
                a.td_n += 1;
                if let Some(h) = l.entropy {
                    a.entropy += h;
                    a.entropy_n += 1;
                }
            }
            states[i] = next;
        }
    }
    let summary = env.sim().metrics();
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| EpisodeLog {
            stage: stage.to_string(),
            episode,
            intersection: i,
            epsilon,
            mean_reward: mean(a.reward, a.decisions).unwrap_or(0.0),
            td_loss: mean(a.td, a.td_n),
            entropy: mean(a.entropy, a.entropy_n),
            avg_travel_time: summary.avg_travel_time,
            throughput: summary.throughput,
        })
        .collect())
}

/// Output of the search stage: one super-graph agent per intersection,
/// holding its replay memory for the refine stage.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub agents: Vec<DqnAgent<SuperGraph>>,
    pub logs: Vec<EpisodeLog>,
    pub alpha_log: Vec<AlphaRow>,
}

impl SearchOutcome {
    pub fn supergraphs(&self) -> Vec<&SuperGraph> {
        self.agents.iter().map(|a| &a.online).collect()
    }
}

fn all_features_obs() -> ObsKind {
    ObsKind::Features(FeatureId::all().collect())
}

/// Jointly trains θ and α of a fresh super-graph per intersection for
/// `hp.search_episodes` episodes.
pub fn run_search(
    scenario: &Scenario,
    hp: &HyperParams,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<SearchOutcome, AgentError> {
    hp.validate()?;
    let probe = Simulation::new(scenario);
    let n = probe.network().intersections.len();
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let id = IntersectionId(i);
        let cat = catalog(&probe, id, cfg);
        let spec =
            SuperGraphSpec::with_inputs(cat.dims(), probe.network().intersection(id).num_phases());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT, i as u64));
        let sg = SuperGraph::new(spec, cat.normalizers(), &mut rng)?;
        agents.push(DqnAgent::new(
            sg,
            hp.clone(),
            derive_seed(seed, STREAM_AGENT, i as u64),
        ));
    }
    let obs = vec![all_features_obs(); n];
    let mut logs = Vec::new();
    let mut alpha_log = Vec::new();
    for e in 0..hp.search_episodes {
        let eps = hp.epsilon(e);
        logs.extend(train_episode(
            scenario,
            &mut agents,
            &obs,
            identity_action,
            cfg,
            hp,
            eps,
            "search",
            e,
            seed,
        )?);
        for (i, agent) in agents.iter().enumerate() {
            for (layer, alpha) in agent.online.alphas().iter().enumerate() {
                alpha_log.extend(
                    alpha
                        .iter()
                        .enumerate()
                        .map(|(component, &value)| AlphaRow {
                            episode: e,
                            intersection: i,
                            layer: layer + 1,
                            component,
                            value,
                        }),
                );
            }
        }
    }
    Ok(SearchOutcome {
        agents,
        logs,
        alpha_log,
    })
}

fn project(state: &State, inputs: &[usize]) -> State {
    inputs.iter().map(|&i| state[i].clone()).collect()
}

/// Extracts each sub-graph and trains θ alone for `hp.refine_episodes`
/// episodes at `epsilon_end`. Replay memory starts with the search
/// transitions, restricted to the retained inputs.
pub fn run_refine(
    scenario: &Scenario,
    search: &SearchOutcome,
    hp: &HyperParams,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<(Vec<SubGraph>, Vec<SubGraphManifest>, Vec<EpisodeLog>), AgentError> {
    hp.validate()?;
    let mut agents = Vec::with_capacity(search.agents.len());
    let mut manifests = Vec::with_capacity(search.agents.len());
    let mut obs = Vec::with_capacity(search.agents.len());
    for (i, sa) in search.agents.iter().enumerate() {
        let (sub, manifest) = sa.online.extract(hp.keep)?;
        let mut agent = DqnAgent::new(
            sub,
            hp.clone(),
            derive_seed(seed, STREAM_AGENT, (1 << 20) + i as u64),
        );
        for t in sa.buffer.iter() {
            agent.buffer.push(Transition {
                state: Arc::new(project(&t.state, &manifest.inputs)),
                action: t.action,
                reward: t.reward,
                next_state: Arc::new(project(&t.next_state, &manifest.inputs)),
                done: t.done,
            });
        }
        obs.push(ObsKind::Features(feature_ids(&manifest.inputs)));
        manifests.push(manifest);
        agents.push(agent);
    }
    let mut logs = Vec::new();
    for e in 0..hp.refine_episodes {
        let episode = hp.search_episodes + e;
        logs.extend(train_episode(
            scenario,
            &mut agents,
            &obs,
            identity_action,
            cfg,
            hp,
            hp.epsilon_end,
            "refine",
            episode,
            seed,
        )?);
    }
    Ok((
        agents.into_iter().map(|a| a.online).collect(),
        manifests,
        logs,
    ))
}

/// Greedy controller over one trained sub-graph per intersection.
#[derive(Debug, Clone)]
pub struct GreedySubGraph {
    pub nets: Vec<SubGraph>,
    pub cfg: FeatureConfig,
    obs: Vec<ObsKind>,
    name: String,
}

impl GreedySubGraph {
    pub fn new(name: &str, nets: Vec<SubGraph>, cfg: FeatureConfig) -> Self {
        let obs = nets
            .iter()
            .map(|n| ObsKind::Features(feature_ids(&n.inputs)))
            .collect();
        Self {
            nets,
            cfg,
            obs,
            name: name.to_string(),
        }
    }
}

impl Controller for GreedySubGraph {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError> {
        let i = intersection.index();
        let state = observe(sim, intersection, &self.obs[i], &self.cfg);
        Ok(nn::argmax(&QNetwork::q_values(&self.nets[i], &state)?))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTinyLight {
    pub supergraphs: Vec<SuperGraph>,
    pub subgraphs: Vec<SubGraph>,
    pub manifests: Vec<SubGraphManifest>,
    pub logs: Vec<EpisodeLog>,
    pub alpha_log: Vec<AlphaRow>,
}

impl TrainedTinyLight {
    pub fn controller(&self, cfg: FeatureConfig) -> GreedySubGraph {
        GreedySubGraph::new("TinyLight", self.subgraphs.clone(), cfg)
    }
}

/// Search followed by refine.
pub fn train_tinylight(
    scenario: &Scenario,
    hp: &HyperParams,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<TrainedTinyLight, AgentError> {
    let search = run_search(scenario, hp, cfg, seed)?;
    let (subgraphs, manifests, refine_logs) = run_refine(scenario, &search, hp, cfg, seed)?;
    let mut logs = search.logs.clone();
    logs.extend(refine_logs);
    Ok(TrainedTinyLight {
        supergraphs: search.agents.into_iter().map(|a| a.online).collect(),
        subgraphs,
        manifests,
        logs,
        alpha_log: search.alpha_log,
    })
}

/// Trains `agents` for the full search + refine budget with the search
/// ε schedule followed by `epsilon_end`.
fn train_fixed<N: QNetwork>(
    scenario: &Scenario,
    agents: &mut [DqnAgent<N>],
    obs: &[ObsKind],
    to_phase: ActionMap,
    cfg: &FeatureConfig,
    hp: &HyperParams,
    seed: u64,
) -> Result<Vec<EpisodeLog>, AgentError> {
    let mut logs = Vec::new();
    for e in 0..hp.search_episodes + hp.refine_episodes {
        let eps = if e < hp.search_episodes {
            hp.epsilon(e)
        } else {
            hp.epsilon_end
        };
        logs.extend(train_episode(
            scenario, agents, obs, to_phase, cfg, hp, eps, "train", e, seed,
        )?);
    }
    Ok(logs)
}

/// Random-path ablation: a uniformly drawn sub-graph of the same shape as
/// TinyLight's, trained with the same episode budget.
pub fn train_tlrp(
    scenario: &Scenario,
    hp: &HyperParams,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<(GreedySubGraph, Vec<EpisodeLog>), AgentError> {
    hp.validate()?;
    let probe = Simulation::new(scenario);
    let n = probe.network().intersections.len();
    let mut agents = Vec::with_capacity(n);
    let mut obs = Vec::with_capacity(n);
    for i in 0..n {
        let id = IntersectionId(i);
        let cat = catalog(&probe, id, cfg);
        let spec =
            SuperGraphSpec::with_inputs(cat.dims(), probe.network().intersection(id).num_phases());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT, i as u64));
        let sub = random_path(&spec, &cat.normalizers(), hp.keep, &mut rng)?;
        obs.push(ObsKind::Features(feature_ids(&sub.inputs)));
        agents.push(DqnAgent::new(
            sub,
            hp.clone(),
            derive_seed(seed, STREAM_AGENT, i as u64),
        ));
    }
    let logs = train_fixed(scenario, &mut agents, &obs, identity_action, cfg, hp, seed)?;
    let nets = agents.into_iter().map(|a| a.online).collect();
    Ok((GreedySubGraph::new("TLRP", nets, *cfg), logs))
}

/// The 2 → 10 → 10 → 2 keep/switch network.
pub fn ecolight_model(seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(&[2, 10, 10, 2], &mut rng)
}

/// Keep/switch controller over green/red occupancy.
#[derive(Debug, Clone)]
pub struct EcoLight {
    pub nets: Vec<Mlp>,
}

impl Controller for EcoLight {
    fn name(&self) -> &str {
        "EcoLight"
    }

    fn decide(
        &mut self,
        sim: &Simulation,
        intersection: IntersectionId,
    ) -> Result<usize, AgentError> {
        let x = super::green_red_density(sim, intersection);
        let q = self.nets[intersection.index()].forward_values(&x);
        Ok(keep_or_switch(sim, intersection, nn::argmax(&q)))
    }
}

pub fn train_ecolight(
    scenario: &Scenario,
    hp: &HyperParams,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<(EcoLight, Vec<EpisodeLog>), AgentError> {
    hp.validate()?;
    let n = Simulation::new(scenario).network().intersections.len();
    let mut agents: Vec<DqnAgent<Mlp>> = (0..n)
        .map(|i| {
            let net = ecolight_model(derive_seed(seed, STREAM_INIT, i as u64));
            DqnAgent::new(net, hp.clone(), derive_seed(seed, STREAM_AGENT, i as u64))
        })
        .collect();
    let obs = vec![ObsKind::GreenRed; n];
    let logs = train_fixed(scenario, &mut agents, &obs, keep_or_switch, cfg, hp, seed)?;
    Ok((
        EcoLight {
            nets: agents.into_iter().map(|a| a.online).collect(),
        },
        logs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_streams() {
        let a = derive_seed(7, STREAM_JITTER, 0);
        let b = derive_seed(7, STREAM_AGENT, 0);
        let c = derive_seed(7, STREAM_JITTER, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, 1, 0), derive_seed(8, 1, 0));
    }

    #[test]
    fn feature_ids_map_catalog_positions() {
        let ids = feature_ids(&[0, 36]);
        assert_eq!(ids[0].number(), 1);
        assert_eq!(ids[1].number(), 37);
    }
}
