//! Offline providers for tests and dry runs.
//!
//! [`MockChatProvider`] answers from a script keyed by (consumer id, sample
//! index) when one is given, and otherwise generates a deterministic answer
//! from a hash of the request. [`MockEmbedder`] maps each (model, text) pair
//! to a pseudo-random unit vector seeded by its SHA-256 digest.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::persona::RaterExamples;
use super::provider::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, ProviderError, Stage,
};
use crate::panelio::{self, default_anchor_sets, PanelIoError};
use crate::ssr::EmbeddingVector;

/// Canned free-text answers with the rating each one expresses.
pub const CANNED_REPLIES: [(&str, u8); 10] = [
    ("Honestly, this isn't for me and I wouldn't buy it.", 1),
    ("I don't see myself ever using something like this.", 1),
    ("It's not really my thing, so I'd probably pass.", 2),
    ("Seems a bit pricey for what it is, I doubt I'd get it.", 2),
    ("I'm on the fence. It could be useful but I'm not sure.", 3),
    ("Maybe. I'd want to read a few reviews first.", 3),
    ("I like it and would probably give it a try.", 4),
    ("Looks handy, I'd likely pick one up.", 4),
    ("I love this idea and would definitely buy it.", 5),
    ("This is exactly what I need, I'd buy it right away.", 5),
];

const CUTPOINTS: [f64; 4] = [-2.2, -1.2, 0.0, 1.6];

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Scripted {
    Always(String),
    PerAttempt(Vec<String>),
}

impl Scripted {
    fn reply(&self, attempt: u32) -> &str {
        match self {
            Scripted::Always(s) => s,
            Scripted::PerAttempt(v) => v
                .get(attempt as usize)
                .or_else(|| v.last())
                .map(String::as_str)
                .unwrap_or(""),
        }
    }
}

/// Scripted replies: `replies[consumer][sample]` for elicitation and
/// `rater[consumer][sample]` for the rating expert. Each entry is a string
/// (used for every attempt) or a list of per-attempt strings.
#[derive(Debug, Clone, Deserialize, Default)]
pub struct MockScript {
    #[serde(default)]
    replies: BTreeMap<String, Vec<Scripted>>,
    #[serde(default)]
    rater: BTreeMap<String, Vec<Scripted>>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, PanelIoError> {
        panelio::check_version("mock script", text)?;
        serde_json::from_str(text).map_err(|e| PanelIoError::parse("mock script", &e))
    }

    pub fn load(path: &Path) -> Result<Self, PanelIoError> {
        Self::parse(&panelio::read_file(path)?)
    }

    fn lookup(&self, consumer: &str, sample: u32, stage: Stage, attempt: u32) -> Option<&str> {
        let table = match stage {
            Stage::Rate => &self.rater,
            Stage::Direct | Stage::Textual => &self.replies,
        };
        table
            .get(consumer)
            .and_then(|v| v.get(sample as usize))
            .map(|s| s.reply(attempt))
    }
}

fn hash_unit(parts: &[&[u8]]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

pub struct MockChatProvider {
    script: MockScript,
    known_ratings: HashMap<String, u8>,
    supports_images: bool,
    fail_first: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl Default for MockChatProvider {
    fn default() -> Self {
        Self::new(MockScript::default())
    }
}

impl MockChatProvider {
    pub fn new(script: MockScript) -> Self {
        let mut known_ratings: HashMap<String, u8> = HashMap::new();
        for (text, r) in CANNED_REPLIES {
            known_ratings.insert(text.to_string(), r);
        }
        for set in default_anchor_sets() {
            for (i, s) in set.statements().iter().enumerate() {
                known_ratings.insert(s.clone(), i as u8 + 1);
            }
        }
        for ex in RaterExamples::default().examples {
            known_ratings.insert(ex.text, ex.rating.value());
        }
        MockChatProvider {
            script,
            known_ratings,
            supports_images: true,
            fail_first: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn text_only(mut self) -> Self {
        self.supports_images = false;
        self
    }

    /// The next `n` calls fail with a transport error.
    pub fn failing_first(self, n: usize) -> Self {
        self.fail_first.store(n, Ordering::SeqCst);
        self
    }

    /// Every request received so far, in arrival order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    fn generated_rating(&self, req: &ChatRequest) -> u8 {
        let seed = req.seed.unwrap_or(0).to_le_bytes();
        let sample = req.tag.sample_index.to_le_bytes();
        let concept = req
            .turns
            .first()
            .map(|t| t.text.as_str())
            .unwrap_or_default();
        let concept_pull = hash_unit(&[b"concept", concept.as_bytes()]) - 0.5;
        let persona_pull = hash_unit(&[b"persona", req.system.as_bytes()]) - 0.5;
        let u = hash_unit(&[
            b"noise",
            &seed,
            req.tag.survey_id.as_bytes(),
            req.tag.consumer_id.as_bytes(),
            &sample,
        ])
        .clamp(1e-12, 1.0 - 1e-12);
        let noise = (u / (1.0 - u)).ln();
        let latent = 1.1 + 1.5 * concept_pull + 0.8 * persona_pull + noise;
        1 + CUTPOINTS.iter().filter(|c| latent > **c).count() as u8
    }

    fn generate(&self, req: &ChatRequest) -> String {
        match req.tag.stage {
            Stage::Direct => {
                let r = self.generated_rating(req);
                match hash_unit(&[b"style", req.tag.consumer_id.as_bytes()]) {
                    x if x < 0.6 => r.to_string(),
                    x if x < 0.85 => format!("I'd say {r}."),
                    _ => format!("{r} - that's my answer."),
                }
            }
            Stage::Textual => {
                let r = self.generated_rating(req);
                let pick = hash_unit(&[
                    b"pick",
                    req.tag.consumer_id.as_bytes(),
                    &req.tag.sample_index.to_le_bytes(),
                ]);
                let choices: Vec<&str> = CANNED_REPLIES
                    .iter()
                    .filter(|(_, x)| *x == r)
                    .map(|(t, _)| *t)
                    .collect();
                choices[(pick * choices.len() as f64) as usize % choices.len()].to_string()
            }
            Stage::Rate => {
                let text = req.last_user_text().trim();
                let r = self.known_ratings.get(text).copied().unwrap_or_else(|| {
                    1 + (hash_unit(&[b"rate", text.as_bytes()]) * 5.0)
                        .floor()
                        .min(4.0) as u8
                });
                r.to_string()
            }
        }
    }
}

impl ChatProvider for MockChatProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn supports_images(&self) -> bool {
        self.supports_images
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.log
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(request.clone());
        if self
            .fail_first
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ProviderError::Transport("injected failure".into()));
        }
        if request.has_image() && !self.supports_images {
            return Err(ProviderError::Rejected("images are not supported".into()));
        }
        let t = &request.tag;
        let text = match self
            .script
            .lookup(&t.consumer_id, t.sample_index, t.stage, t.attempt)
        {
            Some(s) => s.to_string(),
            None => self.generate(request),
        };
        let mut response = ChatResponse {
            text,
            ..Default::default()
        };
        response.metadata.insert("provider".into(), "mock".into());
        Ok(response)
    }
}

pub const MOCK_EMBEDDING_DIM: usize = 256;

pub struct MockEmbedder {
    dim: usize,
    calls: AtomicUsize,
    fail_first: AtomicUsize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::with_dim(MOCK_EMBEDDING_DIM)
    }
}

impl MockEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0);
        MockEmbedder {
            dim,
            calls: AtomicUsize::new(0),
            fail_first: AtomicUsize::new(0),
        }
    }

    pub fn failing_first(self, n: usize) -> Self {
        self.fail_first.store(n, Ordering::SeqCst);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// The vector for a (model, text) pair, without counting a call.
    pub fn vector(&self, model: &str, text: &str) -> EmbeddingVector {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector::new(raw.into_iter().map(|v| v / norm).collect())
            .expect("gaussian vector has non-zero norm")
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn name(&self) -> &str {
        "mock"
    }

    fn embed(&self, model: &str, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self
            .fail_first
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ProviderError::Transport("injected failure".into()));
        }
        Ok(self.vector(model, text))
    }
}
