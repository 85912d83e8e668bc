// SPDX-License-Identifier: Apache-2.0

//! Assembles intake, pipeline, stores, HTTP API and websocket push into one
//! running service.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use acp_model::RuleFile;
use tokio::sync::{mpsc, oneshot};

use crate::api::{self, ApiState};
use crate::config::Config;
use crate::ingest::{start_intake, ChannelHealth, DecoderRegistry, IngestStats, Ingestor, IntakeError, IntakeHandle};
use crate::par::ExecMode;
use crate::pipeline::{Pipeline, PipelineStats};
use crate::rtmonitor::{self, Hub};
use crate::store::{MetadataStore, ReadingsRepository, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("rules file {path}: {message}")]
    Rules { path: PathBuf, message: String },
    #[error("intake: {0}")]
    Intake(#[from] IntakeError),
    #[error("binding http on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

pub fn load_rules(config: &Config) -> Result<RuleFile, ServerError> {
    let Some(path) = &config.rules.file else {
        return Ok(RuleFile::default());
    };
    let err = |message: String| ServerError::Rules { path: path.clone(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    RuleFile::from_json(&text).map_err(|e| err(e.to_string()))
}

/// Options that are not part of the file configuration.
#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub mode: ExecMode,
    pub registry: Option<DecoderRegistry>,
}

pub struct ServerHandle {
    pub http_addr: SocketAddr,
    pub meta: Arc<MetadataStore>,
    pub readings: Arc<ReadingsRepository>,
    pub hub: Arc<Hub>,
    pub ingestor: Arc<Ingestor>,
    pub ingest_stats: Arc<IngestStats>,
    pub pipeline_stats: Arc<PipelineStats>,
    intake: IntakeHandle,
    http_stop: Option<oneshot::Sender<()>>,
    http_task: tokio::task::JoinHandle<()>,
    pipeline: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.intake.tcp_addr()
    }

    pub fn health(&self) -> BTreeMap<String, ChannelHealth> {
        self.intake.health()
    }

    /// Stops intake, drains the processing queue, then stops HTTP.
    pub async fn shutdown(mut self) {
        self.intake.shutdown();
        self.ingestor.close();
        if let Some(p) = self.pipeline.take() {
            let _ = tokio::task::spawn_blocking(move || p.join()).await;
        }
        if let Some(stop) = self.http_stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.http_task).await;
    }
}

pub async fn start(config: Config) -> Result<ServerHandle, ServerError> {
    start_with(config, ServerOptions::default()).await
}

pub async fn start_with(config: Config, options: ServerOptions) -> Result<ServerHandle, ServerError> {
    let data_dir = config.data_dir.clone();
    std::fs::create_dir_all(&data_dir).map_err(StoreError::from)?;
    let meta = Arc::new(MetadataStore::open(data_dir.join("meta"))?);
    let readings = Arc::new(ReadingsRepository::open(&data_dir)?);
    let rules = load_rules(&config)?;
    let hub = Arc::new(Hub::new(config.rtmonitor.buffer, options.mode));

    let (tx, rx) = mpsc::channel(config.ingest.queue_capacity.max(1));
    let ingestor = Arc::new(Ingestor::new(
        &data_dir,
        options.registry.unwrap_or_default(),
        meta.clone(),
        tx,
        config.ingest.max_payload_bytes,
    ));
    let ingest_stats = ingestor.stats();

    let pipeline = Pipeline {
        sensors: meta.clone(),
        storage: readings.clone(),
        push: hub.clone(),
        rules,
        mode: options.mode,
        batch_size: config.ingest.batch_size,
    };
    let (pipeline_stats, pipeline_thread) = pipeline.spawn(rx);

    let intake = match start_intake(&config.ingest, ingestor.clone()).await {
        Ok(i) => i,
        Err(e) => {
            ingestor.close();
            let _ = tokio::task::spawn_blocking(move || pipeline_thread.join()).await;
            return Err(e.into());
        }
    };

    let app = api::router(
        ApiState { meta: meta.clone(), readings: readings.clone(), svg_scale: config.svg.scale },
        &config.server.api_prefix,
    )
    .merge(rtmonitor::router(hub.clone(), config.rtmonitor.clone()));
    let addr = config.server.listen;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    let http_addr = listener.local_addr().map_err(|source| ServerError::Bind { addr, source })?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let http_task = tokio::spawn(async move {
        let serve = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = stop_rx.await;
        });
        if let Err(e) = serve.await {
            tracing::error!(error = %e, "http server stopped");
        }
    });
    tracing::info!(%http_addr, tcp = ?intake.tcp_addr(), "server started");

    Ok(ServerHandle {
        http_addr,
        meta,
        readings,
        hub,
        ingestor,
        ingest_stats,
        pipeline_stats,
        intake,
        http_stop: Some(stop_tx),
        http_task,
        pipeline: Some(pipeline_thread),
    })
}
