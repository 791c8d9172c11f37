//! Training and evaluation toolkit for knowledge graph embeddings.
//!
//! - [`graph`] and [`io`]: dictionary-encoded triple store and TSV loading.
//! - [`transform`]: mediator binarization, subset sampling, splitting, relation labels.
//! - [`model`]: TransE, DistMult, ComplEx and RotatE scoring and training.
//! - [`rank`], [`pair_rank`], [`property`], [`triple_class`]: evaluation protocols.
//! - [`report`]: the evaluation report and its table renderings.
//! - [`synth`]: seeded synthetic graphs.

pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pair_rank;
pub mod property;
pub mod rank;
pub mod report;
pub mod synth;
pub mod transform;
pub mod triple_class;

pub use error::{KgError, Result};
pub use graph::{ClosurePolicy, EntityId, GraphBuilder, KnowledgeGraph, RelationId, Split, Triple, TypeId};
pub use model::{Family, ModelParams, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
