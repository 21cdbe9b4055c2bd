//! Actor-critic agents over hid, prob and reg state pipelines.

mod agent;
mod explore;
mod features;
mod nets;
mod reward;

pub use agent::{
    actor_loss, actor_loss_with, actor_update, critic_loss, critic_targets, critic_update, train_agent,
    AgentBundle, AgentConfig, PRE_ACTIVATION_PENALTY, TrainingDiagnostics, Transition,
};
pub use explore::ExploreSchedule;
pub use features::{build_features, feature_width, FeatureBlock, FeatureScaler, Pipeline};
pub use nets::{actor_forward, actor_pre_activation, critic_forward, init_mlp, soft_update, MlpShape, ACTOR, CRITIC};
pub use reward::compute_reward;
