//! Orchestration of stages 1–3 on in-memory data: recommender scoring,
//! per-dataset ensembles under grouped cross-validation, and the final
//! per-target stack with linear tie-breaking.

pub mod cv;
pub mod features;
pub mod stack;
pub mod stage1;

pub use cv::{cv_train_predict, make_cv_plan, BoostedTrainer, CvOutput, CvPlan, ModelSlot, RankerTrainer};
pub use features::{assemble_features, DatasetView, FeatureSpec, FeatureTable, ScoreVariant};
pub use stack::{final_stack, stage2_dataset, tie_break, EnsembleSettings, FinalOutput, SlateScores, Stage2Output};
pub use stage1::{dataset_slates, profile_lengths, score_slates, tune_recommender};
