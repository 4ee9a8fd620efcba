//! Topology-based multi-agent policy gradients.
//!
//! Agents update their policies on the utilities of a sampled coalition
//! graph. The crate provides the graph models, environments, decomposed
//! critics, the stochastic and deterministic gradient estimators, their
//! training loops, topology search, and executable checks of the method's
//! improvement and variance properties.

// Matrix and flow-network code indexes several arrays by the same vertex.
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod critic;
pub mod env;
pub mod error;
pub mod lab;
pub mod learner;
pub mod policy;
pub mod rng;
pub mod search;
pub mod stats;
pub mod topology;

pub use critic::{DecomposedCritic, JointCritic, ReplayBuffer, TargetCritic, Trajectory, Transition};
pub use env::{make_env, EnvDescriptor, EnvKind, MatrixGame, StepResult};
pub use error::{Error, Result};
pub use policy::{PolicyUpdate, TabularPolicy};
pub use topology::{graph_metrics, sample_topology, AgentTopology, GraphKind, GraphModelConfig};
