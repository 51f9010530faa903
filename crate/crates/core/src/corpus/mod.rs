//! PubMed/MEDLINE baseline ingestion and two-stage keyword refinement.

mod filter;
mod parse;

pub use filter::{filter_corpus, keyword_match, FilterStats, KeywordMatcher, KeywordStageConfig};
pub use parse::{
    ingest_files, open_baseline, parse_baseline_stream, parse_file, BaselineParser, IngestError,
    IngestStats,
};

use serde::{Deserialize, Serialize};

/// One publication: identifier, title and plain abstract text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractRecord {
    pub pmid: String,
    pub title: String,
    pub abstract_text: String,
    pub source_file: String,
}
