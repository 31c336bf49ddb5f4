//! Caption-noun memorability analysis.
//!
//! Captions are reduced to sets of noun lemmas with a bundled lexicon, image
//! scores are averaged per noun, frequent nouns are kept by percentile, and
//! noun-level means are compared across datasets.

mod analysis;
mod lexicon;
mod report;

pub use analysis::{
    filter_percentile, load_captions, load_tagged_nouns, match_and_correlate, noun_stats, noun_stats_from_nouns,
    scores_from_manifest, write_noun_stats, CaptionRecord, NounComparison, NounPair, NounStat,
};
pub use lexicon::{extract_nouns, Lexicon};
pub use report::{emit_noun_report, read_noun_report, write_noun_plot, write_noun_table, NOUN_REPORT_HEADER};
