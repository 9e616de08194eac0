//! Model adapters and the evaluation loop.
//!
//! Every stimulus of a manifest yields exactly one [`ModelResponse`]: a scored
//! answer, or a response carrying an error string when the adapter could not
//! produce one. Output is ordered by stimulus id.

mod config;
mod http;

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use civet_core::answer::{ModelResponse, classify_by_similarity};
use civet_core::manifest::{ManifestRecord, ReplayRecord, parse_jsonl, read_jsonl_lenient};
use futures::StreamExt;

pub use config::{API_KEY_ENV, AdapterConfig, AdapterKind, RetryPolicy};
pub use http::{chat_request, embedding_image_request, embedding_text_request};

use http::{HttpClient, TextEmbeddingCache, chat_answer, parse_embedding};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] civet_core::Error),
}

/// Per-stimulus failure. Prefixes let reports tell input from transport.
#[derive(Debug)]
enum StimulusError {
    Input(String),
    Transport(String),
}

impl StimulusError {
    fn message(self) -> String {
        match self {
            StimulusError::Input(m) => format!("input: {m}"),
            StimulusError::Transport(m) => format!("transport: {m}"),
        }
    }
}

pub enum Adapter {
    Chat {
        http: HttpClient,
        model: String,
    },
    Embedding {
        http: HttpClient,
        model: String,
        options: TextEmbeddingCache,
    },
    Replay(HashMap<String, String>),
}

impl Adapter {
    pub fn from_config(cfg: &AdapterConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let client = || HttpClient::new(cfg).map_err(|e| HarnessError::Config(format!("HTTP client: {e}")));
        Ok(match cfg.kind {
            AdapterKind::ChatEndpoint => Adapter::Chat {
                http: client()?,
                model: cfg.model.clone(),
            },
            AdapterKind::EmbeddingEndpoint => Adapter::Embedding {
                http: client()?,
                model: cfg.model.clone(),
                options: TextEmbeddingCache::default(),
            },
            AdapterKind::ReplayFile => {
                let path = cfg.replay_file.as_deref().expect("validated");
                Adapter::Replay(load_replay(path)?)
            }
        })
    }

    pub fn replay(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Adapter::Replay(records.into_iter().map(|r| (r.stimulus_id, r.raw_text)).collect())
    }

    fn needs_image(&self) -> bool {
        !matches!(self, Adapter::Replay(_))
    }

    async fn answer(&self, record: &ManifestRecord, image: Option<&[u8]>) -> Result<String, StimulusError> {
        match self {
            Adapter::Replay(table) => table
                .get(&record.stimulus_id)
                .cloned()
                .ok_or_else(|| StimulusError::Input(format!("no replay entry for {}", record.stimulus_id))),
            Adapter::Chat { http, model } => {
                let body = chat_request(model, &record.question, image.unwrap_or_default());
                let resp = http.post(&body).await.map_err(StimulusError::Transport)?;
                chat_answer(&resp).map_err(StimulusError::Transport)
            }
            Adapter::Embedding { http, model, options } => {
                let resp = http
                    .post(&embedding_image_request(model, image.unwrap_or_default()))
                    .await
                    .map_err(StimulusError::Transport)?;
                let image_vec = parse_embedding(resp).map_err(StimulusError::Transport)?;
                let mut option_vecs = Vec::with_capacity(record.options.len());
                for opt in &record.options {
                    option_vecs.push(options.get(http, model, opt).await.map_err(StimulusError::Transport)?);
                }
                let best = classify_by_similarity(&image_vec, &option_vecs)
                    .map_err(|e| StimulusError::Input(e.to_string()))?;
                Ok(record.options[best].clone())
            }
        }
    }
}

fn load_replay(path: &Path) -> Result<HashMap<String, String>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::Input(format!("replay file {}: {e}", path.display())))?;
    let records: Vec<ReplayRecord> = parse_jsonl(std::io::BufReader::new(file))
        .map_err(|e| HarnessError::Input(format!("malformed replay file {}: {e}", path.display())))?;
    let mut table = HashMap::with_capacity(records.len());
    for r in records {
        if table.insert(r.stimulus_id.clone(), r.raw_text).is_some() {
            return Err(HarnessError::Input(format!(
                "replay file {} maps {} twice",
                path.display(),
                r.stimulus_id
            )));
        }
    }
    Ok(table)
}

async fn run_one(adapter: &Adapter, record: &ManifestRecord, image_root: &Path) -> ModelResponse {
    let start = Instant::now();
    let image = if adapter.needs_image() {
        let path = image_root.join(&record.image_path);
        match tokio::fs::read(&path).await {
            Ok(bytes) => Some(bytes),
            Err(e) => {
                let err = StimulusError::Input(format!("image {}: {e}", path.display()));
                return ModelResponse::failed(&record.stimulus_id, err.message(), 0);
            }
        }
    } else {
        None
    };
    let result = adapter.answer(record, image.as_deref()).await;
    let latency = start.elapsed().as_millis() as u64;
    match result {
        Ok(raw) => ModelResponse::scored(&record.stimulus_id, raw, &record.options, latency),
        Err(e) => ModelResponse::failed(&record.stimulus_id, e.message(), latency),
    }
}

/// Evaluate every stimulus not already answered in `previous`.
///
/// Up to `parallel` requests are in flight at once. `sink` sees each new
/// response as it completes. The returned list merges `previous` with the
/// new responses and is sorted by stimulus id. Previous responses that carry
/// an error are retried.
pub async fn evaluate<F>(
    adapter: &Adapter,
    manifest: &[ManifestRecord],
    image_root: &Path,
    parallel: usize,
    previous: Vec<ModelResponse>,
    mut sink: F,
) -> Result<Vec<ModelResponse>, HarnessError>
where
    F: FnMut(&ModelResponse) -> Result<(), HarnessError>,
{
    if parallel == 0 {
        return Err(HarnessError::Config("parallelism must be at least 1".into()));
    }
    let ids: HashSet<&str> = manifest.iter().map(|r| r.stimulus_id.as_str()).collect();
    let mut done: HashMap<String, ModelResponse> = HashMap::new();
    for r in previous {
        if r.error.is_some() {
            continue;
        }
        if !ids.contains(r.stimulus_id.as_str()) {
            return Err(HarnessError::Input(format!(
                "existing response for {} is not in the manifest",
                r.stimulus_id
            )));
        }
        done.insert(r.stimulus_id.clone(), r);
    }
    let pending: Vec<&ManifestRecord> = manifest.iter().filter(|r| !done.contains_key(&r.stimulus_id)).collect();
    log::info!("{} stimuli to evaluate, {} already answered", pending.len(), done.len());

    let mut stream = futures::stream::iter(pending)
        .map(|record| run_one(adapter, record, image_root))
        .buffer_unordered(parallel);
    while let Some(resp) = stream.next().await {
        sink(&resp)?;
        done.insert(resp.stimulus_id.clone(), resp);
    }

    let mut out: Vec<ModelResponse> = done.into_values().collect();
    out.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
    Ok(out)
}

/// Blocking wrapper around [`evaluate`] with its own runtime.
pub fn evaluate_blocking<F>(
    cfg: &AdapterConfig,
    manifest: &[ManifestRecord],
    image_root: &Path,
    previous: Vec<ModelResponse>,
    sink: F,
) -> Result<Vec<ModelResponse>, HarnessError>
where
    F: FnMut(&ModelResponse) -> Result<(), HarnessError>,
{
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let adapter = Adapter::from_config(cfg)?;
        evaluate(&adapter, manifest, image_root, cfg.parallel, previous, sink).await
    })
}

/// Append-only progress log, flushed per response so an interrupted run can
/// resume from it.
pub struct ProgressLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ProgressLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ProgressLog {
            path,
            out: BufWriter::new(file),
        })
    }

    /// Responses recorded by an earlier run; a truncated final line is ignored.
    pub fn load(path: &Path) -> Result<Vec<ModelResponse>, HarnessError> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_jsonl_lenient(path)?)
    }

    pub fn append(&mut self, resp: &ModelResponse) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.out, resp).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
