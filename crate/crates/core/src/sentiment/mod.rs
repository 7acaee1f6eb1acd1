//! Evaluation protocols on a sentence classifier: perturbation, sentence
//! representations, semantic composition and heatmaps.

pub mod classifier;
pub mod compose;
pub mod corpus;
pub mod heatmap;
pub mod perturb;
pub mod repr;

pub use classifier::{train_classifier, ClassifierConfig, ValidationRow, SentimentModel, EMBEDDINGS_FILE, MODEL_FILE};
pub use corpus::{build_synthetic_corpus, CorpusSpec, Sentence, SentimentCorpus, Slot, CLASS_NAMES, NUM_CLASSES};
pub use perturb::{perturbation_experiment, perturbation_from_scores, ranking_scores, removal_order, Order, PerturbConfig, PerturbReport, Ranker, Removal, Track, TrackRow};
pub use compose::{composition_analysis, CompositionConfig, CompositionKind, CompositionReport, CompositionRow};
pub use heatmap::{heat_colors, render_heatmap, render_heatmap_titled, HeatmapFormat};
pub use repr::{pca_project, sentence_representation, sentence_representations, Pca, ReprMode};
