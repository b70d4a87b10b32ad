//! Evaluation of a learned network: semantic signatures, neighbour-received
//! accuracy, edge-loss separation and topology quality.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{row_norms, Mat};
use crate::model::{reconstruct, ConnectionSheaf, Dictionary, SparseCodes};
use crate::sheaf::CandidateLoss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticSignature {
    pub agent_id: usize,
    pub values: Vec<f64>,
}

/// Row norms of an agent's codes.
pub fn semantic_signature(codes: &SparseCodes) -> SemanticSignature {
    SemanticSignature {
        agent_id: codes.agent_id,
        values: row_norms(&codes.codes),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
    /// Pairs involving a zero signature; their similarity is reported as 0.
    pub zero_pairs: Vec<(usize, usize)>,
}

/// Pairwise cosine similarity of signatures.
pub fn signature_similarity(signatures: &[SemanticSignature]) -> Result<SimilarityMatrix> {
    let len = signatures.first().map_or(0, |s| s.values.len());
    if signatures.iter().any(|s| s.values.len() != len) {
        return Err(Error::DimensionMismatch("signatures differ in length".into()));
    }
    let norms: Vec<f64> = signatures
        .iter()
        .map(|s| s.values.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let v = signatures.len();
    let mut values = vec![vec![0.0; v]; v];
    let mut zero_pairs = Vec::new();
    for a in 0..v {
        for b in a..v {
            if norms[a] == 0.0 || norms[b] == 0.0 {
                zero_pairs.push((a, b));
                continue;
            }
            let dot: f64 = signatures[a]
                .values
                .iter()
                .zip(&signatures[b].values)
                .map(|(x, y)| x * y)
                .sum();
            let sim = if a == b { 1.0 } else { dot / (norms[a] * norms[b]) };
            values[a][b] = sim;
            values[b][a] = sim;
        }
    }
    Ok(SimilarityMatrix { values, zero_pairs })
}

/// Deterministic 80/20 split of sample indices under `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TrainTestSplit {
    pub fn new(samples: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..samples).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (samples * 4) / 5;
        let mut train = idx[..cut].to_vec();
        let mut test = idx[cut..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Self { train, test }
    }
}

/// Nearest class centroid in Euclidean distance; ties go to the lower class.
#[derive(Debug, Clone)]
pub struct CentroidClassifier {
    centroids: Vec<Option<DVector<f64>>>,
}

impl CentroidClassifier {
    pub fn fit(reps: &Mat, labels: &[usize], train: &[usize]) -> Self {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![DVector::zeros(reps.nrows()); classes];
        let mut counts = vec![0usize; classes];
        for &j in train {
            sums[labels[j]] += reps.column(j);
            counts[labels[j]] += 1;
        }
        let centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect();
        Self { centroids }
    }

    pub fn predict(&self, x: &DVector<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in self.centroids.iter().enumerate() {
            if let Some(m) = centroid {
                let dist = (x - m).norm_squared();
                if dist < best.1 {
                    best = (c, dist);
                }
            }
        }
        best.0
    }

    /// Fraction of `cols` of `reps` classified as their label.
    pub fn accuracy(&self, reps: &Mat, labels: &[usize], cols: &[usize]) -> f64 {
        if cols.is_empty() {
            return 0.0;
        }
        let hits = cols
            .iter()
            .filter(|&&j| self.predict(&reps.column(j).clone_owned()) == labels[j])
            .count();
        hits as f64 / cols.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAccuracy {
    pub agent: usize,
    /// Mean over neighbours; `None` for an isolated agent.
    pub accuracy: Option<f64>,
    /// Accuracy on the agent's own test representations.
    pub self_accuracy: f64,
    pub neighbors: Vec<usize>,
    pub per_neighbor: Vec<f64>,
}

/// For every agent `v`, classifies each neighbour's test representations
/// after transporting them into `v`'s space, using `v`'s centroid classifier
/// trained on its own representations.
pub fn average_accuracy_from_reps(
    sheaf: &ConnectionSheaf,
    reps: &[Mat],
    labels: &[usize],
    split: &TrainTestSplit,
) -> Result<Vec<AgentAccuracy>> {
    if reps.len() != sheaf.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "{} representations for {} nodes",
            reps.len(),
            sheaf.num_nodes
        )));
    }
    if let Some(r) = reps.iter().find(|r| r.ncols() != labels.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{} samples but {} labels",
            r.ncols(),
            labels.len()
        )));
    }
    let test_labels = &split.test;
    Ok((0..sheaf.num_nodes)
        .map(|v| {
            let clf = CentroidClassifier::fit(&reps[v], labels, &split.train);
            let self_accuracy = clf.accuracy(&reps[v], labels, test_labels);
            let neighbors = sheaf.neighbors(v);
            let per_neighbor: Vec<f64> = neighbors
                .iter()
                .map(|&u| {
                    let map = sheaf.transport(u, v).expect("neighbour has an edge");
                    clf.accuracy(&(map * &reps[u]), labels, test_labels)
                })
                .collect();
            let accuracy = (!per_neighbor.is_empty())
                .then(|| per_neighbor.iter().sum::<f64>() / per_neighbor.len() as f64);
            AgentAccuracy {
                agent: v,
                accuracy,
                self_accuracy,
                neighbors,
                per_neighbor,
            }
        })
        .collect())
}

/// [`average_accuracy_from_reps`] on the denoised representations `D·Sᵢ`.
pub fn average_accuracy(
    sheaf: &ConnectionSheaf,
    dictionary: &Dictionary,
    codes: &[SparseCodes],
    labels: &[usize],
    split: &TrainTestSplit,
) -> Result<Vec<AgentAccuracy>> {
    let reps = codes
        .iter()
        .map(|c| reconstruct(dictionary, c))
        .collect::<Result<Vec<_>>>()?;
    average_accuracy_from_reps(sheaf, &reps, labels, split)
}

/// Mean of the non-null per-agent accuracies.
pub fn network_accuracy(acc: &[AgentAccuracy]) -> Option<f64> {
    let vals: Vec<f64> = acc.iter().filter_map(|a| a.accuracy).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLossStats {
    pub homophilic: Vec<f64>,
    pub heterophilic: Vec<f64>,
    pub homophilic_mean: f64,
    pub homophilic_var: f64,
    pub heterophilic_mean: f64,
    pub heterophilic_var: f64,
    /// `(mean_het − mean_hom) / pooled std`; `None` when undefined.
    pub separation: Option<f64>,
    pub heterophilic_empty: bool,
    pub homophilic_empty: bool,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Separation score of two samples: difference of means over the pooled
/// standard deviation. Zero when every value is equal.
pub fn separation_score(hom: &[f64], het: &[f64]) -> Option<f64> {
    if hom.is_empty() || het.is_empty() {
        return None;
    }
    let (m0, v0) = mean_var(hom);
    let (m1, v1) = mean_var(het);
    let dof = (hom.len() + het.len()) as f64 - 2.0;
    let pooled = if dof > 0.0 {
        (((hom.len() as f64 - 1.0) * v0 + (het.len() as f64 - 1.0) * v1) / dof).sqrt()
    } else {
        0.0
    };
    let diff = m1 - m0;
    if diff == 0.0 {
        Some(0.0)
    } else if pooled > 0.0 {
        Some(diff / pooled)
    } else {
        None
    }
}

/// Splits candidate normalized losses into within-family (homophilic) and
/// between-family (heterophilic) samples.
pub fn edge_loss_stats(
    candidates: &[CandidateLoss],
    families: &[usize],
    bin_width: f64,
) -> Result<EdgeLossStats> {
    if !(bin_width > 0.0) {
        return Err(Error::Config(format!("bin width must be > 0, got {bin_width}")));
    }
    let mut hom = Vec::new();
    let mut het = Vec::new();
    for c in candidates {
        if c.u >= families.len() || c.v >= families.len() {
            return Err(Error::DimensionMismatch(format!(
                "edge ({}, {}) outside {} family labels",
                c.u,
                c.v,
                families.len()
            )));
        }
        if families[c.u] == families[c.v] {
            hom.push(c.norm);
        } else {
            het.push(c.norm);
        }
    }
    let (hm, hv) = mean_var(&hom);
    let (tm, tv) = mean_var(&het);
    let mut histogram = Vec::new();
    for (class, xs) in [("homophilic", &hom), ("heterophilic", &het)] {
        let max = xs.iter().copied().fold(0.0_f64, f64::max);
        let bins = ((max / bin_width).floor() as usize) + 1;
        let mut counts = vec![0usize; bins];
        for &x in xs {
            counts[((x.max(0.0) / bin_width).floor() as usize).min(bins - 1)] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            histogram.push(HistogramBin {
                bin_left: b as f64 * bin_width,
                bin_right: (b + 1) as f64 * bin_width,
                count,
                class: class.to_string(),
            });
        }
    }
    Ok(EdgeLossStats {
        separation: separation_score(&hom, &het),
        heterophilic_empty: het.is_empty(),
        homophilic_empty: hom.is_empty(),
        homophilic: hom,
        heterophilic: het,
        homophilic_mean: hm,
        homophilic_var: hv,
        heterophilic_mean: tm,
        heterophilic_var: tv,
        bin_width,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyQuality {
    /// Component label of every node, numbered by smallest member.
    pub components: Vec<usize>,
    pub num_components: usize,
    pub adjusted_rand_index: f64,
    pub homophilic_edges: usize,
    pub heterophilic_edges: usize,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

/// Connected components of the selected edges.
pub fn connected_components(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..num_nodes).collect();
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let roots: Vec<usize> = (0..num_nodes).map(|x| find(&mut parent, x)).collect();
    let mut label = vec![usize::MAX; num_nodes];
    let mut next = 0;
    let mut out = vec![0; num_nodes];
    for x in 0..num_nodes {
        let r = roots[x];
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[x] = label[r];
    }
    out
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both labelings are all singletons, or both a single cluster.
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub fn topology_quality(sheaf: &ConnectionSheaf, families: &[usize]) -> Result<TopologyQuality> {
    if families.len() != sheaf.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "{} family labels for {} nodes",
            families.len(),
            sheaf.num_nodes
        )));
    }
    let edges: Vec<(usize, usize)> = sheaf.edges.iter().map(|e| (e.u, e.v)).collect();
    let components = connected_components(sheaf.num_nodes, &edges);
    let homophilic_edges = edges.iter().filter(|(u, v)| families[*u] == families[*v]).count();
    Ok(TopologyQuality {
        num_components: components.iter().max().map_or(0, |m| m + 1),
        adjusted_rand_index: adjusted_rand_index(&components, families),
        homophilic_edges,
        heterophilic_edges: edges.len() - homophilic_edges,
        components,
    })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::linalg::{gaussian, haar_orthogonal};
    use crate::model::{EdgeLosses, SheafEdge};

    fn codes(m: Mat) -> SparseCodes {
        SparseCodes { agent_id: 0, budget: m.nrows(), codes: m }
    }

    #[test]
    fn signature_cases() {
        assert_eq!(semantic_signature(&codes(Mat::zeros(3, 4))).values, vec![0.0; 3]);
        let mut m = Mat::zeros(3, 2);
        m[(1, 0)] = 2.0;
        assert_eq!(semantic_signature(&codes(m)).values, vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn signature_matches_row_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gaussian(&mut rng, 5, 7);
        let sig = semantic_signature(&codes(m.clone()));
        for k in 0..5 {
            let mut acc = 0.0;
            for j in 0..7 {
                acc += m[(k, j)] * m[(k, j)];
            }
            assert!((sig.values[k] - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_cases() {
        let s = |v: Vec<f64>| SemanticSignature { agent_id: 0, values: v };
        let sim = signature_similarity(&[
            s(vec![1.0, 2.0, 0.0]),
            s(vec![1.0, 2.0, 0.0]),
            s(vec![0.0, 0.0, 3.0]),
            s(vec![0.0, 0.0, 0.0]),
        ])
        .unwrap();
        assert!((sim.values[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(sim.values[0][2], 0.0);
        assert_eq!(sim.values[2][2], 1.0);
        assert!(sim.zero_pairs.contains(&(0, 3)) && sim.zero_pairs.contains(&(3, 3)));
        assert!(signature_similarity(&[s(vec![1.0]), s(vec![1.0, 2.0])]).is_err());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let a = TrainTestSplit::new(50, 3);
        assert_eq!(a, TrainTestSplit::new(50, 3));
        assert_eq!(a.train.len(), 40);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    fn sheaf_with(edges: Vec<(usize, usize, Mat)>, nodes: usize, d: usize) -> ConnectionSheaf {
        let edges = edges
            .into_iter()
            .map(|(u, v, map)| SheafEdge {
                u,
                v,
                losses: EdgeLosses { raw: 0.0, norm: 0.0, norm_rev: 0.0 },
                map,
            })
            .collect();
        ConnectionSheaf::new(nodes, d, edges).unwrap()
    }

    #[test]
    fn exact_copy_neighbor_matches_self_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let labels: Vec<usize> = (0..n).map(|j| j % 3).collect();
        let means = gaussian(&mut rng, 4, 3);
        let x1 = Mat::from_fn(4, n, |k, j| means[(k, labels[j])]) + gaussian(&mut rng, 4, n) * 0.8;
        let q = haar_orthogonal(&mut rng, 4);
        // Node 0 is the copy; the stored map carries 0 → 1.
        let x0 = q.transpose() * &x1;
        let sheaf = sheaf_with(vec![(0, 1, q)], 2, 4);
        let split = TrainTestSplit::new(n, 0);
        let acc = average_accuracy_from_reps(&sheaf, &[x0, x1], &labels, &split).unwrap();
        for a in &acc {
            assert!((a.accuracy.unwrap() - a.self_accuracy).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_agent_is_null() {
        let sheaf = sheaf_with(vec![], 2, 2);
        let reps = vec![Mat::identity(2, 2), Mat::identity(2, 2)];
        let acc = average_accuracy_from_reps(&sheaf, &reps, &[0, 1], &TrainTestSplit::new(2, 0)).unwrap();
        assert!(acc.iter().all(|a| a.accuracy.is_none()));
        assert_eq!(network_accuracy(&acc), None);
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let classes = 4;
        let truth: Vec<usize> = (0..n).map(|j| j % classes).collect();
        let means = gaussian(&mut rng, 6, classes) * 3.0;
        let x = Mat::from_fn(6, n, |k, j| means[(k, truth[j])]) + gaussian(&mut rng, 6, n);
        let mut labels = truth.clone();
        labels.shuffle(&mut rng);
        let sheaf = sheaf_with(vec![(0, 1, Mat::identity(6, 6))], 2, 6);
        let split = TrainTestSplit::new(n, 1);
        let acc = average_accuracy_from_reps(&sheaf, &[x.clone(), x], &labels, &split).unwrap();
        let p = 1.0 / classes as f64;
        let std = (p * (1.0 - p) / split.test.len() as f64).sqrt();
        for a in acc {
            assert!((a.accuracy.unwrap() - p).abs() <= 3.0 * std);
        }
    }

    fn cand(u: usize, v: usize, norm: f64) -> CandidateLoss {
        CandidateLoss { u, v, raw: norm, norm, norm_rev: norm, selected: false }
    }

    #[test]
    fn edge_stats_cases() {
        let fam = [0, 0, 1, 1];
        let equal: Vec<_> = crate::sheaf::all_pairs(4).into_iter().map(|(u, v)| cand(u, v, 0.5)).collect();
        let stats = edge_loss_stats(&equal, &fam, 0.1).unwrap();
        assert_eq!(stats.separation, Some(0.0));
        assert_eq!(stats.homophilic.len(), 2);
        assert_eq!(stats.heterophilic.len(), 4);
        let single = edge_loss_stats(&equal, &[0, 0, 0, 0], 0.1).unwrap();
        assert!(single.heterophilic_empty);
        assert_eq!(single.separation, None);
        let total: usize = stats.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, 6);
        assert!(edge_loss_stats(&equal, &fam, 0.0).is_err());
    }

    #[test]
    fn separation_matches_hand_computation() {
        // hom = {1, 3}, het = {5, 7}: means 2 and 6, pooled var 2.
        let s = separation_score(&[1.0, 3.0], &[5.0, 7.0]).unwrap();
        assert!((s - 4.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ari_cases() {
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        // Reference value from the contingency-table formula.
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((ari - 0.242_424_242_424_242_4).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0, 1, 2, 3], &[0, 0, 1, 1]) < 1.0);
    }

    #[test]
    fn topology_quality_perfect_and_empty() {
        let fam = vec![0, 0, 1, 1, 1];
        let id = Mat::identity(2, 2);
        let perfect = sheaf_with(
            vec![(0, 1, id.clone()), (2, 3, id.clone()), (2, 4, id.clone()), (3, 4, id.clone())],
            5,
            2,
        );
        let q = topology_quality(&perfect, &fam).unwrap();
        assert_eq!(q.num_components, 2);
        assert!((q.adjusted_rand_index - 1.0).abs() < 1e-12);
        assert_eq!((q.homophilic_edges, q.heterophilic_edges), (4, 0));
        let empty = topology_quality(&sheaf_with(vec![], 5, 2), &fam).unwrap();
        assert_eq!(empty.num_components, 5);
        assert!(empty.adjusted_rand_index < 1.0);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[0.5, 0.7, 0.7, 0.9]).unwrap();
        assert!(s > 0.9 && s < 1.0);
    }


    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn accuracy_ignores_a_shared_change_of_basis(seed in any::<u64>(), d in 2usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 30;
                let labels: Vec<usize> = (0..n).map(|j| j % 3).collect();
                let reps: Vec<Mat> = (0..2).map(|_| gaussian(&mut rng, d, n)).collect();
                let map = haar_orthogonal(&mut rng, d);
                let split = TrainTestSplit::new(n, seed);
                let before = average_accuracy_from_reps(&sheaf_with(vec![(0, 1, map.clone())], 2, d), &reps, &labels, &split).unwrap();

                // Rotate node 0's representations by R and compensate in its map.
                let r = haar_orthogonal(&mut rng, d);
                let moved = vec![&r * &reps[0], reps[1].clone()];
                let after = average_accuracy_from_reps(&sheaf_with(vec![(0, 1, &map * r.transpose())], 2, d), &moved, &labels, &split).unwrap();
                let a = before[1].accuracy.unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(a, after[1].accuracy.unwrap());
            }

            #[test]
            fn similarity_is_symmetric_with_unit_diagonal(seed in any::<u64>(), v in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sigs: Vec<SemanticSignature> =
                    (0..v).map(|_| semantic_signature(&codes(gaussian(&mut rng, 5, 4)))).collect();
                let sim = signature_similarity(&sigs).unwrap();
                for i in 0..v {
                    prop_assert!((sim.values[i][i] - 1.0).abs() <= 1e-12);
                    for j in 0..v {
                        prop_assert_eq!(sim.values[i][j], sim.values[j][i]);
                    }
                }
            }

            #[test]
            fn separation_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let reps: Vec<Mat> = (0..4).map(|_| gaussian(&mut rng, 3, 8)).collect();
                let scaled: Vec<Mat> = reps.iter().map(|r| r * scale).collect();
                let families = [0, 0, 1, 1];
                let sep = |reps: &[Mat]| {
                    let c = crate::sheaf::learn_sheaf_with(reps, crate::config::EdgeRule::TopK(1), None).unwrap().candidates;
                    edge_loss_stats(&c, &families, 0.1).unwrap().separation.unwrap()
                };
                let (a, b) = (sep(&reps), sep(&scaled));
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
