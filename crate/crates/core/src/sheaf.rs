//! Orthogonal network sheaves: per-edge Procrustes alignment, edge
//! selection, and the coboundary / Laplacian algebra built on top.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EdgeRule, LearnConfig};
use crate::error::{Error, Result};
use crate::linalg::{frob_sq, svd, symmetric_eigenvalues, Mat};
use crate::model::{ConnectionSheaf, EdgeLosses, SheafEdge, SheafLaplacian};

/// Orthogonal `O` minimising `‖O·a_u − a_v‖²_F`, from the SVD
/// `a_v a_uᵀ = W Σ Yᵀ` as `O = W Yᵀ`. Singular vectors come in descending
/// singular-value order, so rank-deficient inputs still map to one fixed
/// minimiser.
pub fn procrustes_align(a_u: &Mat, a_v: &Mat) -> Result<Mat> {
    if a_u.shape() != a_v.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Procrustes inputs {:?} and {:?}",
            a_u.shape(),
            a_v.shape()
        )));
    }
    let dec = svd(&(a_v * a_u.transpose()))?;
    Ok(dec.u * dec.v.transpose())
}

/// Raw loss `‖O a_u − a_v‖²_F` and its normalisation by `‖a_u‖²_F`.
pub fn edge_loss(map: &Mat, a_u: &Mat, a_v: &Mat) -> Result<(f64, f64)> {
    if a_u.shape() != a_v.shape() || map.ncols() != a_u.nrows() || map.nrows() != a_v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "map {:?} with inputs {:?}, {:?}",
            map.shape(),
            a_u.shape(),
            a_v.shape()
        )));
    }
    let raw = frob_sq(&(map * a_u - a_v));
    let reference = frob_sq(a_u);
    if reference == 0.0 {
        return Err(Error::ZeroReference("source of edge loss".into()));
    }
    Ok((raw, raw / reference))
}

/// One aligned candidate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCandidate {
    pub u: usize,
    pub v: usize,
    pub map: Mat,
    pub losses: EdgeLosses,
}

/// Losses of one candidate, kept for every pair whether or not it was selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateLoss {
    pub u: usize,
    pub v: usize,
    pub raw: f64,
    pub norm: f64,
    pub norm_rev: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct SheafFit {
    pub sheaf: ConnectionSheaf,
    pub candidates: Vec<CandidateLoss>,
}

/// All unordered pairs `(u, v)`, `u < v`, in lexicographic order.
pub fn all_pairs(num_nodes: usize) -> Vec<(usize, usize)> {
    (0..num_nodes)
        .flat_map(|u| (u + 1..num_nodes).map(move |v| (u, v)))
        .collect()
}

fn canonical_candidates(num_nodes: usize, given: Option<&[(usize, usize)]>) -> Result<Vec<(usize, usize)>> {
    let Some(given) = given else {
        return Ok(all_pairs(num_nodes));
    };
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(given.len());
    for &(a, b) in given {
        if a == b || a >= num_nodes || b >= num_nodes {
            return Err(Error::Config(format!("invalid candidate edge ({a}, {b})")));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Procrustes fit and losses for every candidate pair, in canonical order.
pub fn align_candidates(
    reps: &[Mat],
    candidates: Option<&[(usize, usize)]>,
) -> Result<Vec<EdgeCandidate>> {
    let pairs = canonical_candidates(reps.len(), candidates)?;
    pairs
        .par_iter()
        .map(|&(u, v)| {
            let map = procrustes_align(&reps[u], &reps[v])?;
            let (raw, norm) = edge_loss(&map, &reps[u], &reps[v])
                .map_err(|_| Error::ZeroReference(format!("node {u}")))?;
            let reverse = frob_sq(&reps[v]);
            if reverse == 0.0 {
                return Err(Error::ZeroReference(format!("node {v}")));
            }
            Ok(EdgeCandidate {
                u,
                v,
                map,
                losses: EdgeLosses {
                    raw,
                    norm,
                    norm_rev: raw / reverse,
                },
            })
        })
        .collect()
}

/// Indices of the kept candidates. `TopK` ties prefer the
/// lexicographically smaller pair.
pub fn select_edges(candidates: &[EdgeCandidate], rule: EdgeRule) -> Result<Vec<usize>> {
    let mut keep: Vec<usize> = match rule {
        EdgeRule::TopK(k) => {
            if k > candidates.len() {
                return Err(Error::BadBudget {
                    budget: k,
                    max: candidates.len(),
                });
            }
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| {
                let (ca, cb) = (&candidates[a], &candidates[b]);
                ca.losses
                    .raw
                    .total_cmp(&cb.losses.raw)
                    .then((ca.u, ca.v).cmp(&(cb.u, cb.v)))
            });
            order.truncate(k);
            order
        }
        EdgeRule::Threshold(tau) => (0..candidates.len())
            .filter(|&i| candidates[i].losses.norm <= tau)
            .collect(),
    };
    keep.sort_unstable();
    Ok(keep)
}

/// Aligns every candidate pair of representations and keeps edges by the
/// configured rule. Losses of all candidates are returned alongside.
pub fn learn_sheaf(reps: &[Mat], config: &LearnConfig) -> Result<SheafFit> {
    learn_sheaf_with(reps, config.edge_rule, config.candidate_edges.as_deref())
}

pub fn learn_sheaf_with(
    reps: &[Mat],
    rule: EdgeRule,
    candidates: Option<&[(usize, usize)]>,
) -> Result<SheafFit> {
    let dim = reps.first().map_or(0, |r| r.nrows());
    if let Some(bad) = reps.iter().find(|r| r.shape() != reps[0].shape()) {
        return Err(Error::DimensionMismatch(format!(
            "representation {:?} differs from {:?}",
            bad.shape(),
            reps[0].shape()
        )));
    }
    let aligned = align_candidates(reps, candidates)?;
    let keep = select_edges(&aligned, rule)?;
    let mut selected = vec![false; aligned.len()];
    for &i in &keep {
        selected[i] = true;
    }
    let table = aligned
        .iter()
        .zip(&selected)
        .map(|(c, &s)| CandidateLoss {
            u: c.u,
            v: c.v,
            raw: c.losses.raw,
            norm: c.losses.norm,
            norm_rev: c.losses.norm_rev,
            selected: s,
        })
        .collect();
    let edges = aligned
        .into_iter()
        .zip(selected)
        .filter(|(_, s)| *s)
        .map(|(c, _)| SheafEdge {
            u: c.u,
            v: c.v,
            losses: c.losses,
            map: c.map,
        })
        .collect();
    Ok(SheafFit {
        sheaf: ConnectionSheaf::new(reps.len(), dim, edges)?,
        candidates: table,
    })
}

/// `δ`, with row block `e = (u, v)` equal to `[… O_uv … −I …]`.
pub fn build_coboundary(sheaf: &ConnectionSheaf) -> Mat {
    let d = sheaf.dim;
    let mut delta = Mat::zeros(d * sheaf.edges.len(), d * sheaf.num_nodes);
    for (k, e) in sheaf.edges.iter().enumerate() {
        delta.view_mut((k * d, e.u * d), (d, d)).copy_from(&e.map);
        delta
            .view_mut((k * d, e.v * d), (d, d))
            .copy_from(&(-Mat::identity(d, d)));
    }
    delta
}

/// Blockwise sheaf Laplacian with `F_u = O_uv`, `F_v = I` on each edge.
pub fn build_sheaf_laplacian(sheaf: &ConnectionSheaf) -> SheafLaplacian {
    let d = sheaf.dim;
    let v = sheaf.num_nodes;
    let mut l = Mat::zeros(d * v, d * v);
    let id = Mat::identity(d, d);
    for e in &sheaf.edges {
        let (fu, fv) = (&e.map, &id);
        let mut uu = l.view_mut((e.u * d, e.u * d), (d, d));
        uu += fu.transpose() * fu;
        let mut vv = l.view_mut((e.v * d, e.v * d), (d, d));
        vv += fv.transpose() * fv;
        let off = -(fu.transpose() * fv);
        l.view_mut((e.v * d, e.u * d), (d, d)).copy_from(&off.transpose());
        l.view_mut((e.u * d, e.v * d), (d, d)).copy_from(&off);
    }
    SheafLaplacian {
        dim: d,
        num_nodes: v,
        matrix: l,
    }
}

/// Stacks per-node `d × n` blocks vertically into a `dV × n` 0-cochain.
pub fn cochain(blocks: &[Mat]) -> Mat {
    let d = blocks.first().map_or(0, |b| b.nrows());
    let n = blocks.first().map_or(0, |b| b.ncols());
    let mut out = Mat::zeros(d * blocks.len(), n);
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((i * d, 0), (d, n)).copy_from(b);
    }
    out
}

/// `tr(Xᵀ L X)` for node blocks `X_v`.
pub fn total_variation(laplacian: &SheafLaplacian, blocks: &[Mat]) -> Result<f64> {
    let d = laplacian.dim;
    if blocks.len() != laplacian.num_nodes || blocks.iter().any(|b| b.nrows() != d) {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian over {} nodes of dim {d}, got {} blocks",
            laplacian.num_nodes,
            blocks.len()
        )));
    }
    if blocks.iter().any(|b| b.ncols() != blocks[0].ncols()) {
        return Err(Error::DimensionMismatch("blocks differ in sample count".into()));
    }
    let x = cochain(blocks);
    Ok((x.transpose() * &laplacian.matrix * &x).trace())
}

/// `Σ_e ‖O_uv X_u − X_v‖²_F`.
pub fn edge_variation(sheaf: &ConnectionSheaf, blocks: &[Mat]) -> Result<f64> {
    if blocks.len() != sheaf.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "{} blocks for {} nodes",
            blocks.len(),
            sheaf.num_nodes
        )));
    }
    Ok(sheaf
        .edges
        .iter()
        .map(|e| frob_sq(&(&e.map * &blocks[e.u] - &blocks[e.v])))
        .sum())
}

/// Whether `(x_u, x_v)` agree across edge `{u, v}` up to `eps`.
pub fn is_local_section(
    sheaf: &ConnectionSheaf,
    u: usize,
    v: usize,
    x_u: &Mat,
    x_v: &Mat,
    eps: f64,
) -> Result<bool> {
    let map = sheaf.transport(u, v).ok_or(Error::UnknownEdge(u, v))?;
    if x_u.shape() != x_v.shape() || x_u.nrows() != sheaf.dim {
        return Err(Error::DimensionMismatch(format!(
            "section pair {:?}, {:?} for stalk dim {}",
            x_u.shape(),
            x_v.shape(),
            sheaf.dim
        )));
    }
    Ok((map * x_u - x_v).norm() <= eps)
}

/// Dimension of the numerical kernel: eigenvalues `λ ≤ eps·λ_max`.
pub fn global_section_dim(laplacian: &SheafLaplacian, eps: f64) -> Result<usize> {
    let eig = symmetric_eigenvalues(&laplacian.matrix)?;
    let max = eig.iter().copied().fold(0.0_f64, f64::max);
    Ok(eig.iter().filter(|&&l| l <= eps * max).count())
}

/// Smallest eigenvalue of the Laplacian.
pub fn smallest_eigenvalue(laplacian: &SheafLaplacian) -> Result<f64> {
    Ok(symmetric_eigenvalues(&laplacian.matrix)?
        .first()
        .copied()
        .unwrap_or(0.0))
}
