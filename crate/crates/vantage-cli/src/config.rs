//! CLI configuration: a single JSON file overlaid by `VANTAGE_*` environment
//! variables, overlaid by command-line flags (handled by the subcommands).
//! Secrets never live in the file; endpoint entries name the environment
//! variable holding the token.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vantage::agents::{AgentHandle, AgentSet, EndpointConfig};
use vantage::camera::Intrinsics;
use vantage::pipeline::{AblationMode, PipelineConfig, ServiceClients};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct IntrinsicsConfig {
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_fov")]
    pub fov_degrees: f64,
}

fn default_width() -> u32 {
    512
}
fn default_height() -> u32 {
    512
}
fn default_fov() -> f64 {
    60.0
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<EndpointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoner: Option<EndpointConfig>,
    /// Path to a mock script; when set, both agent slots are served by it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<vantage::pipeline::ServiceEndpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<vantage::pipeline::ServiceEndpoint>,
    #[serde(default)]
    pub intrinsics: Option<IntrinsicsConfig>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("malformed config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        config.apply_env();
        Ok(config)
    }

    // Environment sits between the config file and the flags.
    fn apply_env(&mut self) {
        if let Ok(script) = std::env::var("VANTAGE_MOCK_SCRIPT") {
            self.mock_script = Some(PathBuf::from(script));
        }
        for (slot, prefix) in [
            (&mut self.reasoner, "VANTAGE_REASONER"),
            (&mut self.extractor, "VANTAGE_EXTRACTOR"),
        ] {
            let endpoint = std::env::var(format!("{prefix}_ENDPOINT")).ok();
            let model = std::env::var(format!("{prefix}_MODEL")).ok();
            if endpoint.is_some() || model.is_some() {
                let base = slot.clone().unwrap_or(EndpointConfig {
                    endpoint: String::new(),
                    model: String::new(),
                    auth_token_env: None,
                    timeout_secs: 120,
                    max_inflight: 4,
                    retry_backoff_ms: vec![1000, 4000],
                });
                *slot = Some(EndpointConfig {
                    endpoint: endpoint.unwrap_or(base.endpoint.clone()),
                    model: model.unwrap_or(base.model.clone()),
                    ..base
                });
            }
        }
        if let Ok(limit) = std::env::var("VANTAGE_RETRY_LIMIT") {
            if let Ok(limit) = limit.parse() {
                self.pipeline.get_or_insert_with(Default::default).retry_limit = limit;
            }
        }
        if let Ok(mode) = std::env::var("VANTAGE_ABLATION") {
            if let Ok(mode) = mode.parse::<AblationMode>() {
                self.pipeline.get_or_insert_with(Default::default).ablation_mode = mode;
            }
        }
    }

    pub fn pipeline_config(&self, ablation_flag: Option<AblationMode>) -> PipelineConfig {
        let mut config = self.pipeline.clone().unwrap_or_default();
        if let Some(mode) = ablation_flag {
            config.ablation_mode = mode;
        }
        config
    }

    pub fn intrinsics(
        &self,
        width: Option<u32>,
        height: Option<u32>,
        fov: Option<f64>,
    ) -> Result<Intrinsics> {
        let base = self.intrinsics.clone().unwrap_or(IntrinsicsConfig {
            width: 512,
            height: 512,
            fov_degrees: 60.0,
        });
        Intrinsics::with_vertical_fov(
            width.unwrap_or(base.width),
            height.unwrap_or(base.height),
            fov.unwrap_or(base.fov_degrees),
        )
        .map_err(|e| anyhow::anyhow!("invalid intrinsics: {e}"))
    }

    pub fn services(&self) -> ServiceClients {
        ServiceClients {
            segmentation: self.segmentation.clone(),
            reconstruction: self.reconstruction.clone(),
        }
    }

    pub fn agents(&self) -> Result<AgentSet> {
        if let Some(script) = &self.mock_script {
            let handle = AgentHandle::mock_from_script(script)
                .map_err(|e| anyhow::anyhow!("mock script: {e}"))?;
            return Ok(AgentSet {
                extractor: handle.clone(),
                reasoner: handle,
            });
        }
        let reasoner_cfg = self.reasoner.clone().ok_or_else(|| {
            anyhow::anyhow!("no agent configured: set `reasoner` (or `mock_script`) in the config")
        })?;
        let reasoner =
            AgentHandle::http(reasoner_cfg).map_err(|e| anyhow::anyhow!("reasoner: {e}"))?;
        let extractor = match &self.extractor {
            Some(cfg) => {
                AgentHandle::http(cfg.clone()).map_err(|e| anyhow::anyhow!("extractor: {e}"))?
            }
            None => reasoner.clone(),
        };
        Ok(AgentSet {
            extractor,
            reasoner,
        })
    }
}
