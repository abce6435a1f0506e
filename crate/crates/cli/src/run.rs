//! Shared plumbing: providers, caches, paths and run manifests.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use synpanel::elicitation::http::{HttpProvider, API_KEY_ENV};
use synpanel::elicitation::{
    ChatProvider, EmbeddingCache, EmbeddingProvider, MockChatProvider, MockEmbedder, MockScript,
    ResponseCache, RetryPolicy, EMBEDDING_LOG, RESPONSE_LOG,
};
use synpanel::panelio::{resolve_data_path, save_report};

use crate::error::CliError;
use crate::ProviderArgs;

pub fn display<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

pub fn data_path(p: &Path) -> PathBuf {
    resolve_data_path(p)
}

/// `out.json` -> `out.<suffix>.json`, next to the output.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.json"))
}

pub enum Providers {
    Mock {
        chat: MockChatProvider,
        embed: MockEmbedder,
    },
    Http(HttpProvider),
}

impl Providers {
    /// Builds providers without contacting anything; a bad URL fails here.
    pub fn from_args(args: &ProviderArgs) -> Result<Self, CliError> {
        if args.mock {
            let script = match &args.mock_script {
                Some(p) => MockScript::load(&data_path(p))?,
                None => MockScript::default(),
            };
            let mut chat = MockChatProvider::new(script);
            if !args.images {
                chat = chat.text_only();
            }
            return Ok(Providers::Mock {
                chat,
                embed: MockEmbedder::default(),
            });
        }
        let base = args.api_base.as_deref().ok_or_else(|| {
            CliError::config(
                "no provider configured: pass --api-base (or set SYNPANEL_API_BASE) or --mock",
            )
        })?;
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Providers::Http(
            HttpProvider::new(base, key)?.with_images(args.images),
        ))
    }

    pub fn chat(&self) -> &dyn ChatProvider {
        match self {
            Providers::Mock { chat, .. } => chat,
            Providers::Http(h) => h,
        }
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        match self {
            Providers::Mock { embed, .. } => embed,
            Providers::Http(h) => h,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        match self {
            Providers::Mock { .. } => RetryPolicy::immediate(3),
            Providers::Http(_) => RetryPolicy::default(),
        }
    }
}

pub fn open_response_cache(dir: &Path) -> Result<ResponseCache, CliError> {
    Ok(ResponseCache::open(&data_path(dir).join(RESPONSE_LOG))?)
}

pub fn open_embedding_cache(dir: &Path) -> Result<EmbeddingCache, CliError> {
    Ok(EmbeddingCache::open(&data_path(dir).join(EMBEDDING_LOG))?)
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError {
        code: crate::error::EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Everything needed to repeat a run: the command line, every resolved
/// option and digests of the input files.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub args: &'a [String],
    pub config: &'a C,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn write_manifest<C: Serialize>(
    command: &str,
    argv: &[String],
    config: &C,
    inputs: &[&Path],
    outputs: &[&Path],
    out: &Path,
) -> Result<(), CliError> {
    let mut digests = BTreeMap::new();
    for p in inputs {
        digests.insert(p.display().to_string(), file_digest(p)?);
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args: argv,
        config,
        inputs: digests,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    save_report("manifest", &manifest, &sidecar(out, "manifest"))?;
    Ok(())
}
