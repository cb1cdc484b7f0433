//! Desk-scale laboratory for tiny signal-control policies.
//!
//! * [`sim`]: queue-based traffic simulator and scenario files.
//! * [`features`]: the 37 candidate features observed per intersection.
//! * [`nn`]: dense layers, reverse-mode gradients and optimizers.
//! * [`supergraph`]: the α-weighted super-graph, entropy loss and sub-graph extraction.
//! * [`agents`]: DQN search/refine training and rule-based controllers.
//! * [`resources`]: parameter and FLOP ledger.
//! * [`codegen`]: standalone C emission, q15 quantization and test vectors.
//! * [`experiment`]: configs, runs, summaries and CSV artifacts.

pub mod agents;
pub mod codegen;
pub mod experiment;
pub mod features;
pub mod nn;
pub mod resources;
pub mod sim;
pub mod supergraph;
