//! K-level recursive reasoning over pluggable decision backends.
//!
//! The crate is organised around a small simultaneous-move match engine
//! ([`engine`]) that drives four game environments ([`games`]). Agents are
//! either programmatic ([`strategies`]) or backed by a language-model style
//! [`gateway::DecisionBackend`], orchestrated by one of the reasoning
//! pipelines in [`reasoning`] (Direct, CoT, Persona, Reflect, Refine, PCoT
//! and recursive K-level reasoning).
//!
//! [`opponent_model`] holds a Bayesian opponent model over the programmatic
//! strategy family, [`metrics`] the win-rate / survival / prediction /
//! strategic-depth instruments and Welch's t-test, and [`harness`] ties it
//! all together into reproducible experiments with manifests.

pub mod engine;
pub mod games;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod opponent_model;
pub mod reasoning;
pub mod strategies;

pub use engine::{
    run_match, Action, ActionRecord, AgentId, AgentSpec, EnvSnapshot, GameKind, MatchConfig,
    MatchRecord, MethodSpec, PublicHistory,
};
pub use reasoning::Method;

/// Version string stamped into run manifests.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
