//! Planted multi-agent networks with known families, maps, supports and
//! labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian, haar_orthogonal, Mat};
use crate::model::{validate_network, AgentEmbeddings, StackedEmbeddings};

/// How each agent's latent basis is rotated away from the planted one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misalignment {
    /// Independent Haar rotation per agent.
    AgentHaar,
    /// One Haar rotation per family composed with a per-agent Cayley
    /// rotation whose generator has Frobenius norm `jitter`. Each agent's map
    /// is still marginally Haar.
    FamilyHaar { jitter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Family index of every agent; its length is the agent count `V`.
    pub families: Vec<usize>,
    pub dim: usize,
    pub samples: usize,
    pub num_classes: usize,
    /// Planted row support size `k*` of every family.
    pub support_size: usize,
    /// Within-class spread of the planted codes.
    pub within_family_noise: f64,
    /// Fraction of the support each family replaces: 0 gives identical
    /// supports, 1 disjoint ones.
    pub between_family_divergence: f64,
    /// Additive Gaussian noise on the embeddings.
    pub noise_sigma: f64,
    pub misalignment: Misalignment,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            families: vec![0, 0, 0, 1, 1, 1, 2, 2, 2],
            dim: 16,
            samples: 200,
            num_classes: 4,
            support_size: 4,
            within_family_noise: 0.5,
            between_family_divergence: 1.0,
            noise_sigma: 0.05,
            misalignment: Misalignment::FamilyHaar { jitter: 0.1 },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_agents(&self) -> usize {
        self.families.len()
    }

    pub fn num_families(&self) -> usize {
        self.families.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows each non-base family swaps out of the base support.
    pub fn replaced_rows(&self) -> usize {
        (self.between_family_divergence * self.support_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if self.families.is_empty() {
            return bad("no agents".into());
        }
        let f = self.num_families();
        for fam in 0..f {
            if !self.families.contains(&fam) {
                return bad(format!("family {fam} has no agents; labels must be 0..F"));
            }
        }
        if self.dim == 0 || self.samples == 0 || self.num_classes == 0 {
            return bad("dim, samples and num_classes must be positive".into());
        }
        if self.support_size == 0 || self.support_size > self.dim {
            return bad(format!("support size {} not in 1..={}", self.support_size, self.dim));
        }
        if !(0.0..=1.0).contains(&self.between_family_divergence) {
            return bad("between_family_divergence must lie in [0, 1]".into());
        }
        if !(self.within_family_noise >= 0.0 && self.noise_sigma >= 0.0) {
            return bad("noise levels must be ≥ 0".into());
        }
        if let Misalignment::FamilyHaar { jitter } = self.misalignment {
            if !(jitter >= 0.0) || !jitter.is_finite() {
                return bad("jitter must be finite and ≥ 0".into());
            }
        }
        let fresh_needed = self.replaced_rows() * (f - 1);
        if fresh_needed > self.dim - self.support_size {
            return bad(format!(
                "{f} families replacing {} rows each need {} rows outside the base support, only {} exist",
                self.replaced_rows(),
                fresh_needed,
                self.dim - self.support_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNetwork {
    pub embeddings: Vec<AgentEmbeddings>,
    pub labels: Vec<usize>,
    pub true_maps: Vec<Mat>,
    pub true_families: Vec<usize>,
    pub true_dictionary: Mat,
    /// Sorted row support of every family.
    pub true_supports: Vec<Vec<usize>>,
}

impl SyntheticNetwork {
    pub fn stacked(&self) -> Result<StackedEmbeddings> {
        validate_network(self.embeddings.clone())
    }
}

fn planted_supports<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..spec.dim).collect();
    rows.shuffle(rng);
    let base: Vec<usize> = rows[..spec.support_size].to_vec();
    let mut fresh = rows[spec.support_size..].iter().copied();
    let r = spec.replaced_rows();
    let mut supports = vec![base.clone()];
    for _ in 1..spec.num_families() {
        let mut support = base.clone();
        support.shuffle(rng);
        support.truncate(spec.support_size - r);
        support.extend(fresh.by_ref().take(r));
        supports.push(support);
    }
    for s in &mut supports {
        s.sort_unstable();
    }
    supports
}

/// Cayley transform `(I − A)⁻¹(I + A)` of a random skew-symmetric generator
/// with `‖A‖_F = jitter / 2`.
fn small_rotation<R: Rng>(rng: &mut R, d: usize, jitter: f64) -> Mat {
    let g = gaussian(rng, d, d);
    let mut skew = &g - g.transpose();
    let norm = skew.norm();
    if norm > 0.0 {
        skew *= 0.5 * jitter / norm;
    }
    let id = Mat::identity(d, d);
    (&id - &skew)
        .lu()
        .solve(&(&id + &skew))
        .expect("I − A is invertible for skew-symmetric A")
}

/// Draws a planted network. The same spec always yields bit-identical output.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, n) = (spec.dim, spec.samples);

    let true_dictionary = haar_orthogonal(&mut rng, d);

    let mut labels: Vec<usize> = (0..n).map(|j| j % spec.num_classes).collect();
    labels.shuffle(&mut rng);

    let class_means = gaussian(&mut rng, d, spec.num_classes);
    let spread = gaussian(&mut rng, d, n) * spec.within_family_noise;
    let dense_codes = Mat::from_fn(d, n, |k, j| class_means[(k, labels[j])] + spread[(k, j)]);

    let true_supports = planted_supports(spec, &mut rng);
    let family_signal: Vec<Mat> = true_supports
        .iter()
        .map(|support| {
            let mut codes = Mat::zeros(d, n);
            for &k in support {
                codes.set_row(k, &dense_codes.row(k));
            }
            &true_dictionary * codes
        })
        .collect();

    let family_maps: Vec<Mat> = (0..spec.num_families())
        .map(|_| haar_orthogonal(&mut rng, d))
        .collect();

    // Per-agent draws come from sub-seeded streams so agents are independent
    // of each other's draw counts.
    let mut embeddings = Vec::with_capacity(spec.num_agents());
    let mut true_maps = Vec::with_capacity(spec.num_agents());
    for (v, &fam) in spec.families.iter().enumerate() {
        let mut agent_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        agent_rng.set_stream(v as u64 + 1);
        let map = match spec.misalignment {
            Misalignment::AgentHaar => haar_orthogonal(&mut agent_rng, d),
            Misalignment::FamilyHaar { jitter } => {
                &family_maps[fam] * small_rotation(&mut agent_rng, d, jitter)
            }
        };
        let mut x = &map * &family_signal[fam];
        if spec.noise_sigma > 0.0 {
            x += gaussian(&mut agent_rng, d, n) * spec.noise_sigma;
        }
        embeddings.push(AgentEmbeddings::new(v, x));
        true_maps.push(map);
    }

    Ok(SyntheticNetwork {
        embeddings,
        labels,
        true_maps,
        true_families: spec.families.clone(),
        true_dictionary,
        true_supports,
    })
}
