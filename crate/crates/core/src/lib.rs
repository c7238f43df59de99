//! Bug localization over versioned source repositories.
//!
//! Given a natural-language bug report, `bugloc-core` ranks the source files
//! most likely to contain the defect. The pipeline has two stages:
//!
//! 1. **Shortlisting** ([`embedding`]): every file is rendered as its path
//!    followed by its method bodies, split into token-bounded chunks and
//!    embedded. The bug report is embedded the same way and the files with
//!    the highest chunk-level cosine similarity form a shortlist.
//! 2. **Ranking** ([`agent`], [`tools`], [`resolve`]): a chat model runs a
//!    bounded reason/act loop, calling code-exploration tools over the
//!    [`code_index`], and finally emits a ranked, justified file list which
//!    is verified against the index.
//!
//! [`eval`] holds the benchmark harness (Accuracy@k, MRR@k, MAP@k, a TF-IDF
//! baseline, chronological splits, run aggregation and overlap analysis) and
//! [`pipeline`] wires the stages together for the three run modes.

pub mod agent;
pub mod archive;
pub mod code_index;
pub mod embedding;
pub mod eval;
pub mod http;
pub mod pipeline;
pub mod resolve;
pub mod text;
pub mod tools;

pub use agent::{AgentConfig, AgentTranscript, ChatProvider, RawPrediction};
pub use code_index::{Changeset, CodeIndex, MethodRecord, SourceFileRecord};
pub use embedding::{EmbeddingIndex, EmbeddingProvider, Shortlist};
pub use eval::BugReport;
pub use pipeline::{Localizer, Mode};
pub use resolve::{resolve_predictions, ResolvedPrediction};
pub use tools::{ToolName, ToolRegistry, ToolResult};
