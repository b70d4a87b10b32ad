//! Stage drivers behind the command-line tool. Each stage reads and writes
//! the on-disk artifacts so stages can be run separately or chained.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    average_accuracy_from_reps, edge_loss_stats, network_accuracy, semantic_signature,
    signature_similarity, topology_quality, AgentAccuracy, EdgeLossStats, SemanticSignature,
    SimilarityMatrix, TopologyQuality, TrainTestSplit,
};
use crate::config::{Budgets, LearnConfig};
use crate::dictionary::{learn_dictionary, ConvergenceReport, DictionaryFit};
use crate::error::{Error, Result};
use crate::io::{read_json, read_matrix, read_network, write_atomic, write_json, write_matrix, write_network, Network};
use crate::linalg::Mat;
use crate::model::{reconstruct, ConnectionSheaf, Dictionary, SparseCodes, StackedEmbeddings};
use crate::sheaf::{learn_sheaf, CandidateLoss};
use crate::synthetic::{generate, SyntheticSpec};

pub const DICTIONARY_FILE: &str = "dictionary.semb";
pub const CONVERGENCE_FILE: &str = "convergence.json";
pub const CODES_DIR: &str = "codes";

/// Ground truth written next to a generated bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SyntheticSpec,
    pub families: Vec<usize>,
    pub supports: Vec<Vec<usize>>,
    #[serde(with = "crate::io::serde_matrix")]
    pub dictionary: Mat,
    pub maps: Vec<TruthMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthMap {
    #[serde(with = "crate::io::serde_matrix")]
    pub map: Mat,
}

pub fn run_gen(spec: &SyntheticSpec, out: &Path) -> Result<Network> {
    let net = generate(spec)?;
    let names: Vec<String> = (0..spec.num_agents()).map(|i| format!("agent_{i}")).collect();
    write_network(
        out,
        &names,
        &net.embeddings,
        Some(&net.labels),
        Some(&net.true_families),
        Some(serde_json::json!({ "generator": "synthetic", "spec": spec })),
    )?;
    write_json(
        &out.join("truth.json"),
        &Truth {
            spec: spec.clone(),
            families: net.true_families.clone(),
            supports: net.true_supports.clone(),
            dictionary: net.true_dictionary.clone(),
            maps: net.true_maps.iter().map(|m| TruthMap { map: m.clone() }).collect(),
        },
    )?;
    read_network(out)
}

/// Resolves defaults that depend on the data and validates the result.
pub fn resolve_config(config: &LearnConfig, net: &StackedEmbeddings) -> Result<LearnConfig> {
    let mut cfg = config.clone();
    cfg.resolve_budgets(net.dim());
    cfg.validate(net.num_agents(), net.dim())?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryArtifact {
    pub config: LearnConfig,
    pub bundle: String,
    pub dictionary_file: String,
    pub code_files: Vec<String>,
    pub supports: Vec<Vec<usize>>,
    pub report: ConvergenceReport,
}

fn code_file(i: usize) -> String {
    format!("{CODES_DIR}/agent_{i:03}.semb")
}

pub fn run_dict_learn(bundle: &Path, config: &LearnConfig, out: &Path) -> Result<DictionaryFit> {
    let net = read_network(bundle)?;
    let cfg = resolve_config(config, &net.embeddings)?;
    let fit = learn_dictionary(&net.embeddings, &cfg)?;
    write_matrix(&out.join(DICTIONARY_FILE), &fit.dictionary.atoms)?;
    let mut code_files = Vec::new();
    for (i, c) in fit.codes.iter().enumerate() {
        let f = code_file(i);
        write_matrix(&out.join(&f), &c.codes)?;
        code_files.push(f);
    }
    write_json(
        &out.join(CONVERGENCE_FILE),
        &DictionaryArtifact {
            config: cfg,
            bundle: bundle.display().to_string(),
            dictionary_file: DICTIONARY_FILE.into(),
            code_files,
            supports: fit.codes.iter().map(|c| c.support()).collect(),
            report: fit.report.clone(),
        },
    )?;
    Ok(fit)
}

/// Dictionary and codes loaded back from a `dict-learn` output directory.
pub fn read_dictionary_artifacts(dir: &Path) -> Result<(Dictionary, Vec<SparseCodes>, DictionaryArtifact)> {
    let artifact: DictionaryArtifact = read_json(&dir.join(CONVERGENCE_FILE))?;
    let atoms = read_matrix(&dir.join(&artifact.dictionary_file))?;
    let codes = artifact
        .code_files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(SparseCodes {
                agent_id: i,
                codes: read_matrix(&dir.join(f))?,
                budget: artifact.config.budgets.for_agent(i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Dictionary {
            atoms,
            gamma: artifact.config.gamma,
        },
        codes,
        artifact,
    ))
}

pub fn denoised(dictionary: &Dictionary, codes: &[SparseCodes]) -> Result<Vec<Mat>> {
    codes.iter().map(|c| reconstruct(dictionary, c)).collect()
}

pub fn raw_representations(net: &StackedEmbeddings) -> Vec<Mat> {
    net.blocks().iter().map(|b| b.matrix.clone()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SheafArtifact {
    pub config: LearnConfig,
    /// `denoised` aligns `D·Sᵢ`; `baseline` aligns the raw embeddings.
    pub mode: String,
    pub sheaf: ConnectionSheaf,
    pub candidates: Vec<CandidateLoss>,
}

pub fn run_sheaf_learn(
    bundle: &Path,
    dictionary_dir: Option<&Path>,
    config: &LearnConfig,
    baseline: bool,
    out: &Path,
) -> Result<SheafArtifact> {
    let net = read_network(bundle)?;
    let mut cfg = config.clone();
    let reps = match (baseline, dictionary_dir) {
        (false, Some(dir)) => {
            let (dict, codes, artifact) = read_dictionary_artifacts(dir)?;
            if codes.len() != net.embeddings.num_agents() {
                return Err(Error::DimensionMismatch(format!(
                    "{} code files for {} agents",
                    codes.len(),
                    net.embeddings.num_agents()
                )));
            }
            // The echo carries the dictionary stage's hyperparameters.
            cfg = LearnConfig {
                edge_rule: cfg.edge_rule,
                candidate_edges: cfg.candidate_edges.clone(),
                ..artifact.config
            };
            denoised(&dict, &codes)?
        }
        (false, None) => {
            return Err(Error::Config(
                "sheaf-learn needs --dict <dir> unless --baseline is given".into(),
            ))
        }
        (true, _) => raw_representations(&net.embeddings),
    };
    let cfg = resolve_config(&cfg, &net.embeddings)?;
    let fit = learn_sheaf(&reps, &cfg)?;
    let artifact = SheafArtifact {
        config: cfg,
        mode: if baseline { "baseline" } else { "denoised" }.into(),
        sheaf: fit.sheaf,
        candidates: fit.candidates,
    };
    write_json(out, &artifact)?;
    Ok(artifact)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: LearnConfig,
    pub mode: String,
    pub signatures: Vec<SemanticSignature>,
    pub similarity: SimilarityMatrix,
    pub split_seed: u64,
    pub accuracy: Option<Vec<AgentAccuracy>>,
    pub network_accuracy: Option<f64>,
    pub edge_loss: Option<EdgeLossStats>,
    pub baseline_edge_loss: Option<EdgeLossStats>,
    pub topology: Option<TopologyQuality>,
    pub num_edges: usize,
}

pub fn histogram_csv(stats: &EdgeLossStats, mode: &str, out: &mut String) {
    for b in &stats.histogram {
        let _ = writeln!(out, "{mode},{},{},{},{}", b.bin_left, b.bin_right, b.count, b.class);
    }
}

/// Signatures, accuracy, edge-loss statistics and topology quality. Writes
/// `analysis.json` and `edge_loss_hist.csv` into `out`.
pub fn run_analyze(
    bundle: &Path,
    dictionary_dir: &Path,
    sheaf_path: &Path,
    baseline_path: Option<&Path>,
    bin_width: f64,
    out: &Path,
) -> Result<AnalysisReport> {
    let net = read_network(bundle)?;
    let (dict, codes, dict_artifact) = read_dictionary_artifacts(dictionary_dir)?;
    let sheaf: SheafArtifact = read_json(sheaf_path)?;
    let baseline: Option<SheafArtifact> = baseline_path.map(read_json).transpose()?;

    let signatures: Vec<SemanticSignature> = codes.iter().map(semantic_signature).collect();
    let similarity = signature_similarity(&signatures)?;
    let reps = if sheaf.mode == "baseline" {
        raw_representations(&net.embeddings)
    } else {
        denoised(&dict, &codes)?
    };
    let split_seed = dict_artifact.config.seed;
    let accuracy = match &net.labels {
        Some(labels) => Some(average_accuracy_from_reps(
            &sheaf.sheaf,
            &reps,
            labels,
            &TrainTestSplit::new(net.embeddings.samples(), split_seed),
        )?),
        None => None,
    };
    let (edge_loss, baseline_edge_loss, topology) = match &net.families {
        Some(f) => (
            Some(edge_loss_stats(&sheaf.candidates, f, bin_width)?),
            baseline
                .as_ref()
                .map(|b| edge_loss_stats(&b.candidates, f, bin_width))
                .transpose()?,
            Some(topology_quality(&sheaf.sheaf, f)?),
        ),
        None => (None, None, None),
    };

    let mut csv = String::from("mode,bin_left,bin_right,count,class\n");
    if let Some(s) = &edge_loss {
        histogram_csv(s, &sheaf.mode, &mut csv);
    }
    if let (Some(s), Some(b)) = (&baseline_edge_loss, &baseline) {
        histogram_csv(s, &b.mode, &mut csv);
    }
    write_atomic(&out.join("edge_loss_hist.csv"), csv.as_bytes())?;

    let report = AnalysisReport {
        config: sheaf.config.clone(),
        mode: sheaf.mode.clone(),
        signatures,
        similarity,
        split_seed,
        network_accuracy: accuracy.as_deref().and_then(network_accuracy),
        accuracy,
        edge_loss,
        baseline_edge_loss,
        topology,
        num_edges: sheaf.sheaf.edges.len(),
    };
    write_json(&out.join("analysis.json"), &report)?;
    Ok(report)
}

/// Output locations of a full run.
pub struct PipelinePaths {
    pub root: PathBuf,
}

impl PipelinePaths {
    pub fn bundle(&self) -> PathBuf {
        self.root.join("bundle")
    }
    pub fn dictionary(&self) -> PathBuf {
        self.root.join("dictionary")
    }
    pub fn sheaf(&self) -> PathBuf {
        self.root.join("sheaf.json")
    }
    pub fn baseline_sheaf(&self) -> PathBuf {
        self.root.join("sheaf_baseline.json")
    }
    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

/// All stages: optional generation, dictionary learning, denoised and
/// baseline sheaf learning, and analysis.
pub fn run_pipeline(
    spec: Option<&SyntheticSpec>,
    bundle: Option<&Path>,
    config: &LearnConfig,
    bin_width: f64,
    out: &Path,
) -> Result<AnalysisReport> {
    let paths = PipelinePaths { root: out.to_path_buf() };
    let bundle = match (spec, bundle) {
        (Some(spec), _) => {
            run_gen(spec, &paths.bundle())?;
            paths.bundle()
        }
        (None, Some(b)) => b.to_path_buf(),
        (None, None) => return Err(Error::Config("pipeline needs --spec or --bundle".into())),
    };
    run_dict_learn(&bundle, config, &paths.dictionary())?;
    run_sheaf_learn(&bundle, Some(&paths.dictionary()), config, false, &paths.sheaf())?;
    run_sheaf_learn(&bundle, None, config, true, &paths.baseline_sheaf())?;
    run_analyze(
        &bundle,
        &paths.dictionary(),
        &paths.sheaf(),
        Some(&paths.baseline_sheaf()),
        bin_width,
        &paths.analysis(),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub budget: usize,
    pub agent: usize,
    pub name: String,
    pub family: Option<usize>,
    pub accuracy: Option<f64>,
    pub self_accuracy: f64,
    pub num_edges: usize,
    pub converged: bool,
}

/// Re-learns dictionary and sheaf for each uniform budget and collects a
/// tidy table of per-agent accuracy and edge counts.
pub fn run_budget_sweep(
    net: &Network,
    config: &LearnConfig,
    budgets: &[usize],
) -> Result<Vec<SweepRow>> {
    let labels = net
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("budget sweep needs a labelled bundle".into()))?;
    let split = TrainTestSplit::new(net.embeddings.samples(), config.seed);
    let mut rows = Vec::new();
    for &budget in budgets {
        let mut cfg = config.clone();
        cfg.budgets = Budgets::Uniform(budget);
        let cfg = resolve_config(&cfg, &net.embeddings)?;
        let fit = learn_dictionary(&net.embeddings, &cfg)?;
        let reps = denoised(&fit.dictionary, &fit.codes)?;
        let sheaf = learn_sheaf(&reps, &cfg)?.sheaf;
        let acc = average_accuracy_from_reps(&sheaf, &reps, labels, &split)?;
        for a in acc {
            rows.push(SweepRow {
                budget,
                agent: a.agent,
                name: net.names[a.agent].clone(),
                family: net.families.as_ref().map(|f| f[a.agent]),
                accuracy: a.accuracy,
                self_accuracy: a.self_accuracy,
                num_edges: sheaf.edges.len(),
                converged: fit.report.converged,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("budget,agent,name,family,accuracy,self_accuracy,num_edges,converged\n");
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.budget,
            r.agent,
            r.name,
            opt(r.family.map(|f| f.to_string())),
            opt(r.accuracy.map(|a| a.to_string())),
            r.self_accuracy,
            r.num_edges,
            r.converged
        );
    }
    out
}
