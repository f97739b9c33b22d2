//! Heaviness levels, runtime strategies, data-flow classes, the quality
//! matrix and use-case recommendations.

mod flow;
mod level;
mod quality;
mod recommend;

pub use flow::{classify_data_flow, DataFlowClass, FlowError, RuntimeStrategy};
pub use level::{capability_matrix, classify_level, CapabilityVector, HeavinessLevel, LogicForm};
pub use quality::{assess_quality, full_quality_table, render_table, QualityRating, QualityRow, CRITERIA};
pub use recommend::{
    recommend_level, rule, CodeVisibility, DeploymentTarget, FleetSize, Recommendation, RecommendationRule,
    TaskComplexity, UseCaseProfile, RULES,
};

pub use crate::model::{SyncConfig, SyncMode};
