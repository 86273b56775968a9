//! Flat key=value run configuration.
//!
//! Keys mirror the engine's knob names (model, query_top_k, rag_chunk,
//! rag_overlapping, max_rag, temperature) plus the workflow keys
//! (k_proposers, tau, t_max, mode, seed, max_tokens, ranker,
//! corrector_pass, parallelism) and provider wiring (endpoint, api_key).
//! Unknown keys are rejected so typos surface as config errors.

use serde::Deserialize;

use midstream::types::{Mode, RankerKind, Weights, WorkflowConfig};

use crate::commands::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub monitor_model: Option<String>,
    pub query_top_k: Option<usize>,
    pub rag_chunk: Option<usize>,
    pub rag_overlapping: Option<usize>,
    pub max_rag: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
    pub k_proposers: Option<usize>,
    pub tau: Option<f64>,
    pub t_max: Option<usize>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub ranker: Option<String>,
    pub corrector_pass: Option<bool>,
    pub parallelism: Option<usize>,
    pub max_tool_rounds: Option<usize>,
    /// Chat-completions URL for the live provider.
    pub endpoint: Option<String>,
    /// Bearer credential; falls back to the environment when unset.
    pub api_key: Option<String>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Merge onto engine defaults and validate. The mode flag, when given,
    /// wins over the file.
    pub fn into_workflow(self, mode_flag: Option<&str>) -> Result<(WorkflowConfig, ProviderConfig), CliError> {
        let mut config = WorkflowConfig::default();
        if let Some(v) = self.model {
            config.model = v;
        }
        if self.monitor_model.is_some() {
            config.monitor_model = self.monitor_model;
        }
        if let Some(v) = self.query_top_k {
            config.query_top_k = v;
        }
        if let Some(v) = self.rag_chunk {
            config.rag_chunk = v;
        }
        if let Some(v) = self.rag_overlapping {
            config.rag_overlapping = v;
        }
        if let Some(v) = self.max_rag {
            config.max_rag = v;
        }
        if let Some(v) = self.temperature {
            config.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            config.max_tokens = v;
        }
        if let Some(v) = self.k_proposers {
            config.k_proposers = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.t_max {
            config.t_max = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.corrector_pass {
            config.corrector_pass = v;
        }
        if let Some(v) = self.parallelism {
            config.parallelism = v;
        }
        if let Some(v) = self.max_tool_rounds {
            config.max_tool_rounds = v;
        }
        if let Some(v) = self.ranker {
            config.ranker = match v.as_str() {
                "llm" => RankerKind::Llm,
                "composite" => RankerKind::Composite,
                other => {
                    return Err(CliError::Config(format!(
                        "ranker: expected llm|composite, got {other:?}"
                    )))
                }
            };
        }
        let mode_str = mode_flag
            .map(str::to_string)
            .or(self.mode)
            .unwrap_or_else(|| "monitor".to_string());
        config.mode = Mode::parse(&mode_str).map_err(|e| CliError::Config(e.to_string()))?;
        config.weights = Weights::default();
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((
            config,
            ProviderConfig {
                endpoint: self.endpoint,
                api_key: self.api_key,
            },
        ))
    }
}

#[derive(Debug, Default)]
pub struct ProviderConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_parse() {
        let cfg: FileConfig = toml::from_str(
            "model = \"m\"\nquery_top_k = 3\nrag_chunk = 512\nrag_overlapping = 128\n\
             max_rag = 2\ntemperature = 0.5\nk_proposers = 5\ntau = 3.0\nt_max = 3\n\
             mode = \"monitor\"\nseed = 7\n",
        )
        .unwrap();
        let (wf, _) = cfg.into_workflow(None).unwrap();
        assert_eq!(wf.seed, 7);
        assert_eq!(wf.mode, Mode::Monitor);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let parsed: Result<FileConfig, _> = toml::from_str("rag_chnk = 512\n");
        assert!(parsed.is_err());
    }

    #[test]
    fn mode_flag_beats_file() {
        let cfg: FileConfig = toml::from_str("mode = \"none\"\n").unwrap();
        let (wf, _) = cfg.into_workflow(Some("explicit")).unwrap();
        assert_eq!(wf.mode, Mode::Explicit);
    }

    #[test]
    fn invalid_overlap_names_the_field() {
        let cfg: FileConfig =
            toml::from_str("rag_chunk = 100\nrag_overlapping = 100\n").unwrap();
        let err = cfg.into_workflow(None).unwrap_err();
        assert!(err.to_string().contains("rag_overlapping"), "{err}");
    }
}
