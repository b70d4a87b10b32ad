//! Hyperparameters for dictionary learning and sheaf learning.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-support budget `d′ᵢ`, either shared by every agent or given per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budgets {
    Uniform(usize),
    PerAgent(Vec<usize>),
}

impl Budgets {
    pub fn for_agent(&self, agent: usize) -> usize {
        match self {
            Budgets::Uniform(k) => *k,
            Budgets::PerAgent(ks) => ks[agent],
        }
    }

    pub fn validate(&self, num_agents: usize, d: usize) -> Result<()> {
        if let Budgets::PerAgent(ks) = self {
            if ks.len() != num_agents {
                return Err(Error::Config(format!(
                    "{} budgets given for {} agents",
                    ks.len(),
                    num_agents
                )));
            }
        }
        for i in 0..num_agents {
            let k = self.for_agent(i);
            if k == 0 || k > d {
                return Err(Error::BadBudget { budget: k, max: d });
            }
        }
        Ok(())
    }
}

/// How edges are kept after every candidate has been aligned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    /// Keep the `E₀` candidates with the smallest raw loss.
    TopK(usize),
    /// Keep every candidate whose normalized loss is at most `τ`.
    Threshold(f64),
}

impl FromStr for EdgeRule {
    type Err = Error;

    /// Parses `topk:5` or `threshold:0.8`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("edge rule `{s}` must be `topk:N` or `threshold:T`")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "topk" | "top_k" | "top-k" => value
                .trim()
                .parse()
                .map(EdgeRule::TopK)
                .map_err(|_| Error::Config(format!("bad edge budget `{value}`"))),
            "threshold" | "tau" => {
                let tau: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad threshold `{value}`")))?;
                if !(tau >= 0.0) || !tau.is_finite() {
                    return Err(Error::Config(format!("threshold must be finite and ≥ 0, got {tau}")));
                }
                Ok(EdgeRule::Threshold(tau))
            }
            _ => Err(Error::Config(format!("unknown edge rule `{kind}`"))),
        }
    }
}

impl fmt::Display for EdgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeRule::TopK(k) => write!(f, "topk:{k}"),
            EdgeRule::Threshold(t) => write!(f, "threshold:{t}"),
        }
    }
}

/// Starting dictionary of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryInit {
    /// Seeded Gaussian matrix with normalised columns.
    #[default]
    Gaussian,
    /// Normalised data columns picked greedily by largest residual after
    /// projecting out the ones already picked; Gaussian atoms fill the rest
    /// once the data is exhausted.
    DataColumns,
}

impl FromStr for DictionaryInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "data_columns" | "data-columns" => Ok(Self::DataColumns),
            _ => Err(Error::Config(format!(
                "unknown init '{s}', expected gaussian or data_columns"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    /// Weight of the `−log det(DᵀD)` atom-independence penalty.
    pub gamma: f64,
    /// ADMM penalty.
    pub rho: f64,
    pub budgets: Budgets,
    /// Stepsize schedule `α_q = alpha0 / (1 + mu·q)`.
    pub alpha0: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub seed: u64,
    pub edge_rule: EdgeRule,
    /// Restricts sheaf learning to these unordered pairs. `None` means all pairs.
    pub candidate_edges: Option<Vec<(usize, usize)>>,
    /// Pins each agent's row support instead of selecting it by magnitude.
    pub fixed_supports: Option<Vec<Vec<usize>>>,
    pub init: DictionaryInit,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            rho: 1.0,
            budgets: Budgets::Uniform(usize::MAX),
            alpha0: 0.9,
            mu: 0.01,
            max_iters: 2000,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            seed: 0,
            edge_rule: EdgeRule::Threshold(0.8),
            candidate_edges: None,
            fixed_supports: None,
            init: DictionaryInit::Gaussian,
        }
    }
}

impl LearnConfig {
    /// Stepsize at iteration `q`.
    pub fn alpha(&self, q: usize) -> f64 {
        self.alpha0 / (1.0 + self.mu * q as f64)
    }

    /// Replaces a `usize::MAX` uniform budget (the "no compression" default)
    /// with `d`.
    pub fn resolve_budgets(&mut self, d: usize) {
        if self.budgets == Budgets::Uniform(usize::MAX) {
            self.budgets = Budgets::Uniform(d);
        }
    }

    pub fn validate(&self, num_agents: usize, d: usize) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::Config(format!("alpha0 must lie in (0, 1], got {}", self.alpha0)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be ≥ 0, got {}", self.mu)));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) {
            return Err(Error::Config("residual tolerances must be ≥ 0".into()));
        }
        self.budgets.validate(num_agents, d)?;
        if let Some(supports) = &self.fixed_supports {
            if supports.len() != num_agents {
                return Err(Error::Config(format!(
                    "{} fixed supports given for {} agents",
                    supports.len(),
                    num_agents
                )));
            }
            for (i, s) in supports.iter().enumerate() {
                if s.is_empty() || s.len() > self.budgets.for_agent(i) || s.iter().any(|&k| k >= d) {
                    return Err(Error::Config(format!("fixed support of agent {i} is invalid")));
                }
            }
        }
        if let EdgeRule::Threshold(t) = self.edge_rule {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("threshold must be ≥ 0, got {t}")));
            }
        }
        Ok(())
    }
}
