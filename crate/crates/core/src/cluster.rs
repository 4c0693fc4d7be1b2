//! Heterogeneous cluster model.
//!
//! One rank runs per node. A node's speed comes from its core count through
//! `base_cost / cores^alpha`, where `alpha < 1` stands for imperfect
//! intra-node scaling of the task kernel.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::Error;

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_SIGMA: f64 = 0.02;

/// Core counts of one C1 group, fastest first. Larger built-ins repeat it.
const C1_GROUP: [u32; 8] = [24, 24, 16, 8, 4, 2, 1, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub cores: u32,
    /// Intra-node scaling exponent.
    pub alpha: f64,
    pub label: String,
}

impl NodeSpec {
    pub fn new(cores: u32, alpha: f64) -> Result<Self, Error> {
        if cores == 0 {
            return Err(Error::Argument("node needs at least one core"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Argument("alpha must be finite and non-negative"));
        }
        Ok(Self {
            cores,
            alpha,
            label: format!("{cores}c"),
        })
    }

    /// `cores^alpha`, the node's throughput relative to a one-core node.
    pub fn speed(&self) -> f64 {
        libm::pow(self.cores as f64, self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
}

impl ClusterConfig {
    pub fn new(name: impl Into<String>, nodes: Vec<NodeSpec>) -> Result<Self, Error> {
        if nodes.len() < 2 {
            return Err(Error::Argument("a cluster needs at least two nodes"));
        }
        Ok(Self {
            name: name.into(),
            nodes,
        })
    }

    /// Builds a cluster without the two-node minimum. Only the centralized
    /// baseline can run on such a cluster.
    #[doc(hidden)]
    pub fn new_unchecked(name: impl Into<String>, nodes: Vec<NodeSpec>) -> Self {
        Self {
            name: name.into(),
            nodes,
        }
    }

    pub fn ranks(&self) -> usize {
        self.nodes.len()
    }

    /// Same core counts with a different scaling exponent on every node.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self, Error> {
        for node in &mut self.nodes {
            *node = NodeSpec::new(node.cores, alpha)?;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub n_tasks: usize,
    /// Seconds one task takes on a one-core node with `alpha = 1`.
    pub base_cost: f64,
    /// Sigma of the multiplicative lognormal noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(n_tasks: usize, base_cost: f64, noise_sigma: f64, seed: u64) -> Result<Self, Error> {
        if !(base_cost.is_finite() && base_cost > 0.0) {
            return Err(Error::Argument("base cost must be positive"));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::Argument("noise sigma must be non-negative"));
        }
        Ok(Self {
            n_tasks,
            base_cost,
            noise_sigma,
            seed,
        })
    }

    pub fn check_against(&self, cluster: &ClusterConfig) -> Result<(), Error> {
        if self.n_tasks < cluster.ranks() {
            return Err(Error::Argument("need at least one task per rank"));
        }
        if self.n_tasks > i32::MAX as usize {
            return Err(Error::Overflow);
        }
        Ok(())
    }
}

/// The built-in configurations C1..C5 (8, 16, 32, 64 and 128 nodes).
pub fn builtin_config(name: &str) -> Result<ClusterConfig, Error> {
    let groups = match name.to_ascii_uppercase().as_str() {
        "C1" => 1,
        "C2" => 2,
        "C3" => 4,
        "C4" => 8,
        "C5" => 16,
        _ => return Err(Error::UnknownConfig),
    };
    let nodes = (0..groups)
        .flat_map(|_| C1_GROUP)
        .map(|cores| NodeSpec::new(cores, DEFAULT_ALPHA))
        .collect::<Result<Vec<_>, _>>()?;
    ClusterConfig::new(name.to_ascii_uppercase(), nodes)
}

/// Noise-free duration of one task on `node`.
pub fn nominal_duration(node: &NodeSpec, base_cost: f64) -> f64 {
    base_cost / node.speed()
}

/// `N / sum_j (1 / t_j)` over the noise-free per-node durations: the
/// makespan of a perfectly divisible, perfectly balanced run.
pub fn ideal_runtime(cluster: &ClusterConfig, workload: &WorkloadSpec) -> f64 {
    let aggregate_speed: f64 = cluster
        .nodes
        .iter()
        .map(|n| 1.0 / nominal_duration(n, workload.base_cost))
        .sum();
    workload.n_tasks as f64 / aggregate_speed
}
