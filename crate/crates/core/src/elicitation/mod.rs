//! Synthetic respondents: persona prompts, the three elicitation methods,
//! provider abstractions, caching and offline mocks.

pub mod cache;
pub mod config;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;
pub mod panel;
pub mod parse;
pub mod persona;
pub mod provider;

use thiserror::Error;

pub use cache::{CacheStats, EmbeddingCache, ResponseCache, EMBEDDING_LOG, RESPONSE_LOG};
pub use config::{DemographyMode, RunConfig, StimulusMode, RATER_TEMPERATURE, RATER_TOP_P};
pub use mock::{MockChatProvider, MockEmbedder, MockScript};
pub use panel::{
    check_ready, embed_corpus_texts, rescore_corpus, run_panel, Embedder, PanelContext,
    PanelOutcome, RecordError, RunReport,
};
pub use parse::parse_rating;
pub use persona::{render_persona, RaterExamples};
pub use provider::{ChatProvider, EmbeddingProvider, ProviderError, RetryPolicy, Stage};

use crate::panelio::PanelIoError;
use crate::ssr::SsrError;

#[derive(Debug, Error)]
pub enum ElicitationError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Ssr(#[from] SsrError),
    #[error(transparent)]
    Io(#[from] PanelIoError),
    #[error(
        "survey '{survey_id}', consumer '{consumer_id}', sample {sample_index}: no text to score"
    )]
    MissingText {
        survey_id: String,
        consumer_id: String,
        sample_index: u32,
    },
}
