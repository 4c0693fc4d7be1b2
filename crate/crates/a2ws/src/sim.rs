//! Synthetic task durations and cluster description files.

use std::path::Path;

use a2ws_core::{
    builtin_config, nominal_duration, ClusterConfig, NodeSpec, WorkloadSpec, DEFAULT_ALPHA,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::timeline::Participant;

/// Per-rank duration stream. The k-th task a rank executes takes the k-th
/// sample, whatever scheduler handed it that task.
#[derive(Debug, Clone)]
pub struct DurationSampler {
    nominal: f64,
    noise: Option<LogNormal<f64>>,
    rng: ChaCha8Rng,
}

impl DurationSampler {
    pub fn new(node: &NodeSpec, workload: &WorkloadSpec, rank: usize) -> Result<Self> {
        let noise = if workload.noise_sigma > 0.0 {
            Some(
                LogNormal::new(0.0, workload.noise_sigma)
                    .map_err(|e| Error::Argument(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            nominal: nominal_duration(node, workload.base_cost),
            noise,
            rng: ChaCha8Rng::seed_from_u64(workload.seed ^ rank as u64),
        })
    }

    pub fn nominal(&self) -> f64 {
        self.nominal
    }

    pub fn next_duration(&mut self) -> f64 {
        match &self.noise {
            Some(d) => self.nominal * d.sample(&mut self.rng),
            None => self.nominal,
        }
    }
}

/// Runs one task of `duration` seconds on the caller's timeline: sleeps in
/// real mode, advances the virtual clock otherwise.
pub fn execute_task(clock: &mut Participant, duration: f64) -> f64 {
    clock.spend(duration);
    duration
}

/// Parses a node list: one `cores=<int> [alpha=<float>]` line per node,
/// `#` starts a comment.
pub fn parse_cluster(name: &str, text: &str) -> Result<ClusterConfig> {
    let mut nodes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::ConfigParse { line: idx + 1, msg };
        let (mut cores, mut alpha) = (None, DEFAULT_ALPHA);
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{field}`")))?;
            match key {
                "cores" => {
                    cores = Some(
                        value
                            .parse::<u32>()
                            .map_err(|e| err(format!("cores: {e}")))?,
                    )
                }
                "alpha" => {
                    alpha = value
                        .parse::<f64>()
                        .map_err(|e| err(format!("alpha: {e}")))?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let cores = cores.ok_or_else(|| err("missing cores=".into()))?;
        nodes.push(NodeSpec::new(cores, alpha).map_err(|e| err(e.to_string()))?);
    }
    Ok(ClusterConfig::new(name, nodes)?)
}

/// Resolves `C1`..`C5` or `@path` to a cluster.
pub fn resolve_cluster(spec: &str) -> Result<ClusterConfig> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        let name = Path::new(path)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(path);
        parse_cluster(name, &text)
    } else {
        builtin_config(spec).map_err(|_| {
            Error::Argument(format!("unknown configuration `{spec}` (C1..C5 or @file)"))
        })
    }
}
