//! Domain types shared by every stage, plus shape validation and stacking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Mat};

/// One agent's `d × n` latent matrix; column `j` embeds sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEmbeddings {
    pub agent_id: usize,
    pub matrix: Mat,
}

impl AgentEmbeddings {
    pub fn new(agent_id: usize, matrix: Mat) -> Self {
        Self { agent_id, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn samples(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Sample-aligned agents and their horizontal concatenation `[X₁, …, X_V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEmbeddings {
    blocks: Vec<AgentEmbeddings>,
    stacked: Mat,
}

impl StackedEmbeddings {
    pub fn blocks(&self) -> &[AgentEmbeddings] {
        &self.blocks
    }

    pub fn stacked(&self) -> &Mat {
        &self.stacked
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn samples(&self) -> usize {
        self.blocks[0].samples()
    }

    pub fn agent(&self, i: usize) -> &Mat {
        &self.blocks[i].matrix
    }

    pub fn into_blocks(self) -> Vec<AgentEmbeddings> {
        self.blocks
    }
}

/// Checks that every agent shares `d` and `n` and holds finite data, then
/// stacks them in agent order.
pub fn validate_network(blocks: Vec<AgentEmbeddings>) -> Result<StackedEmbeddings> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::DimensionMismatch("network has no agents".into()))?;
    let (d, n) = (first.dim(), first.samples());
    if d == 0 || n == 0 {
        return Err(Error::DimensionMismatch(format!("empty embedding matrix {d}×{n}")));
    }
    for b in &blocks {
        if b.dim() != d || b.samples() != n {
            return Err(Error::DimensionMismatch(format!(
                "agent {} is {}×{}, expected {d}×{n}",
                b.agent_id,
                b.dim(),
                b.samples()
            )));
        }
        if !all_finite(&b.matrix) {
            return Err(Error::NonFiniteData(format!("agent {}", b.agent_id)));
        }
    }
    let stacked = stack(blocks.iter().map(|b| &b.matrix));
    Ok(StackedEmbeddings { blocks, stacked })
}

/// Horizontal concatenation. All inputs must share a row count.
pub fn stack<'a>(mats: impl IntoIterator<Item = &'a Mat>) -> Mat {
    let mats: Vec<&Mat> = mats.into_iter().collect();
    let rows = mats.first().map_or(0, |m| m.nrows());
    let cols: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut offset = 0;
    for m in mats {
        out.columns_mut(offset, m.ncols()).copy_from(m);
        offset += m.ncols();
    }
    out
}

/// Splits a `d × (n·V)` matrix into `V` consecutive `d × n` blocks.
pub fn unstack(stacked: &Mat, blocks: usize) -> Vec<Mat> {
    let n = stacked.ncols() / blocks.max(1);
    (0..blocks)
        .map(|i| stacked.columns(i * n, n).clone_owned())
        .collect()
}

/// Shared semantic dictionary `D`; columns are atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    #[serde(with = "crate::io::serde_matrix")]
    pub atoms: Mat,
    pub gamma: f64,
}

impl Dictionary {
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn identity(d: usize) -> Self {
        Self {
            atoms: Mat::identity(d, d),
            gamma: 0.0,
        }
    }
}

/// Agent codes `Sᵢ` with at most `budget` nonzero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    pub agent_id: usize,
    pub codes: Mat,
    pub budget: usize,
}

impl SparseCodes {
    /// Indices of rows with nonzero Euclidean norm.
    pub fn support(&self) -> Vec<usize> {
        self.codes
            .row_iter()
            .enumerate()
            .filter(|(_, r)| r.iter().any(|x| *x != 0.0))
            .map(|(k, _)| k)
            .collect()
    }
}

/// `D·Sᵢ`, the denoised representation of one agent.
pub fn reconstruct(dictionary: &Dictionary, codes: &SparseCodes) -> Result<Mat> {
    if dictionary.atoms.ncols() != codes.codes.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} atoms, codes have {} rows",
            dictionary.atoms.ncols(),
            codes.codes.nrows()
        )));
    }
    Ok(&dictionary.atoms * &codes.codes)
}

/// Losses for one aligned pair. `norm_loss` is normalized by the lower
/// index node, `norm_loss_rev` by the higher one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLosses {
    pub raw: f64,
    pub norm: f64,
    pub norm_rev: f64,
}

/// A kept edge `(u, v)`, `u < v`, with its orthogonal map `O_uv: u → v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheafEdge {
    pub u: usize,
    pub v: usize,
    pub losses: EdgeLosses,
    #[serde(with = "crate::io::serde_matrix")]
    pub map: Mat,
}

/// Orthogonal network sheaf: node count, kept edges, and their maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSheaf {
    pub num_nodes: usize,
    pub dim: usize,
    pub edges: Vec<SheafEdge>,
}

impl ConnectionSheaf {
    /// Builds a sheaf after checking edge uniqueness, orientation and map shapes.
    pub fn new(num_nodes: usize, dim: usize, mut edges: Vec<SheafEdge>) -> Result<Self> {
        edges.sort_by_key(|e| (e.u, e.v));
        for w in edges.windows(2) {
            if (w[0].u, w[0].v) == (w[1].u, w[1].v) {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate edge ({}, {})",
                    w[0].u, w[0].v
                )));
            }
        }
        for e in &edges {
            if e.u >= e.v || e.v >= num_nodes {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({}, {}) must satisfy u < v < {num_nodes}",
                    e.u, e.v
                )));
            }
            if e.map.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "map on edge ({}, {}) is {:?}, expected {dim}×{dim}",
                    e.u,
                    e.v,
                    e.map.shape()
                )));
            }
        }
        Ok(Self {
            num_nodes,
            dim,
            edges,
        })
    }

    pub fn edge(&self, u: usize, v: usize) -> Option<&SheafEdge> {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.edges.iter().find(|e| e.u == a && e.v == b)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.u == node || e.v == node).count()
    }

    /// Neighbours of `node` in increasing order.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.u == node {
                    Some(e.v)
                } else if e.v == node {
                    Some(e.u)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Map that carries node `from`'s representation into node `to`'s space.
    pub fn transport(&self, from: usize, to: usize) -> Option<Mat> {
        let e = self.edge(from, to)?;
        Some(if e.u == from {
            e.map.clone()
        } else {
            e.map.transpose()
        })
    }
}

/// Dense `dV × dV` sheaf Laplacian with block accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct SheafLaplacian {
    pub dim: usize,
    pub num_nodes: usize,
    pub matrix: Mat,
}

impl SheafLaplacian {
    pub fn block(&self, u: usize, v: usize) -> Mat {
        self.matrix
            .view((u * self.dim, v * self.dim), (self.dim, self.dim))
            .clone_owned()
    }
}
