//! Cross-embodiment active visual tracking laboratory.
//!
//! * [`numgrad`]: reverse-mode autodiff, layers, Adam, checkpoints.
//! * [`tracksim`]: kinematic tracking environment with mask observations.
//! * [`datagen`]: scripted-expert offline datasets and their file format.
//! * [`context`]: embodiment context encoder and auxiliary objectives.
//! * [`policy`]: context-conditioned recurrent CQL-SAC agent.
//! * [`evalkit`]: evaluation grids, metrics, baselines and ablation tables.
//! * [`cli`]: the `ctxtrack` command-line front end.

pub mod cli;
pub mod codec;
pub mod context;
pub mod datagen;
pub mod evalkit;
pub mod numgrad;
pub mod policy;
pub mod rng;
pub mod tracksim;
