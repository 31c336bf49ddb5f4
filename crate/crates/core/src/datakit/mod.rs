//! Dataset manifests, embedding-based near-duplicate removal, merging and
//! reproducible train/test splits.

mod dedup;
mod embed;
mod manifest;
mod splits;

pub use dedup::{dedup, write_report, DedupOutcome, DedupReport, DuplicatePair, DEFAULT_THRESHOLD};
pub use embed::{cosine, embed_all, normalize, Embedder, EmbeddingFile, ThumbnailEmbedder, VitEmbedder};
pub use manifest::{merge, ImageRecord, Manifest, Source, MANIFEST_HEADER};
pub use splits::{kfold, make_splits, write_splits, Fold, Split, SplitSpec, TestSize};
