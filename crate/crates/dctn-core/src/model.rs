//! The adaptation model: a shared feature extractor, one sigmoid-head
//! discriminator and one softmax-head classifier per source, and the
//! non-learnable target classification operator that fuses per-source
//! predictions with perplexity-score weights.

use crate::data::{ClassId, DomainDataset};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which discriminator loss is averaged over a source to obtain its
/// concentration constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AlphaMode {
    /// α_j = mean over source j of −log D_j(F(x)).
    NegLogD,
    /// α_j = mean over source j of −log(1 − D_j(F(x))).
    NegLogOneMinusD,
}

/// Layer widths for the three subnets. `extractor_layers` lists the widths
/// after the input (the last entry is the shared feature width); heads take
/// that feature width as input.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelArch {
    pub input_dim: usize,
    pub extractor_layers: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            input_dim: 2,
            extractor_layers: vec![64, 32],
            discriminator_hidden: vec![16],
            classifier_hidden: vec![],
        }
    }
}

impl ModelArch {
    pub fn feature_dim(&self) -> usize {
        *self.extractor_layers.last().unwrap_or(&self.input_dim)
    }
}

/// Per-sample source-affinity scores: `scores[i][j]` is the perplexity
/// score of target sample `i` against source `j`, and `alphas[j]` the
/// concentration constant that was added in.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityScores {
    pub scores: Matrix,
    pub alphas: Vec<f64>,
}

/// Fused per-class confidence over the full class list, with the argmax
/// (ties broken toward the smallest class id).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    /// One entry per class in the model's `full_class_list`, same order.
    pub confidence: Vec<f64>,
    pub predicted_class: ClassId,
    pub max_confidence: f64,
}

use crate::nn::{Activation, Mlp};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DctnModel {
    pub extractor: Mlp,
    pub discriminators: Vec<Mlp>,
    pub classifiers: Vec<Mlp>,
    /// Sorted class set of each source; classifier `j` has one output per
    /// entry of `class_sets[j]`, in this order.
    pub class_sets: Vec<Vec<ClassId>>,
    /// Sorted union of all source class sets.
    pub full_class_list: Vec<ClassId>,
    /// Concentration constants, refreshed at the start of each
    /// discriminative phase (zero until then).
    pub alphas: Vec<f64>,
}

impl DctnModel {
    /// Builds a fresh model for the given source class sets, seeded.
    pub fn new(arch: &ModelArch, class_sets: Vec<Vec<ClassId>>, seed: u64) -> Result<Self> {
        if class_sets.is_empty() {
            return Err(Error::InvalidConfig("need at least one source".into()));
        }
        let mut sets = Vec::with_capacity(class_sets.len());
        for mut s in class_sets {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::InvalidConfig("a source has an empty class set".into()));
            }
            sets.push(s);
        }
        let mut union: Vec<ClassId> = sets.iter().flat_map(|s| s.iter().copied()).collect();
        union.sort_unstable();
        union.dedup();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ext_dims = vec![arch.input_dim];
        ext_dims.extend_from_slice(&arch.extractor_layers);
        if ext_dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "extractor needs at least one layer".into(),
            ));
        }
        let ext_acts = vec![Activation::Relu; ext_dims.len() - 1];
        let extractor = Mlp::new(&ext_dims, &ext_acts, &mut rng)?;
        let feat = arch.feature_dim();

        let mut discriminators = Vec::with_capacity(sets.len());
        for _ in 0..sets.len() {
            let mut dims = vec![feat];
            dims.extend_from_slice(&arch.discriminator_hidden);
            dims.push(1);
            let mut acts = vec![Activation::Relu; dims.len() - 2];
            acts.push(Activation::Sigmoid);
            discriminators.push(Mlp::new(&dims, &acts, &mut rng)?);
        }

        let mut classifiers = Vec::with_capacity(sets.len());
        for s in &sets {
            let mut dims = vec![feat];
            dims.extend_from_slice(&arch.classifier_hidden);
            dims.push(s.len());
            let mut acts = vec![Activation::Relu; dims.len() - 2];
            acts.push(Activation::Softmax);
            classifiers.push(Mlp::new(&dims, &acts, &mut rng)?);
        }

        let n = sets.len();
        Ok(DctnModel {
            extractor,
            discriminators,
            classifiers,
            class_sets: sets,
            full_class_list: union,
            alphas: vec![0.0; n],
        })
    }

    pub fn n_sources(&self) -> usize {
        self.discriminators.len()
    }

    pub fn n_classes(&self) -> usize {
        self.full_class_list.len()
    }

    fn check_source(&self, j: usize) -> Result<()> {
        if j >= self.n_sources() {
            return Err(Error::InvalidSourceIndex {
                index: j,
                n_sources: self.n_sources(),
            });
        }
        Ok(())
    }

    /// Index of class `c` in classifier `j`'s output row, if source `j`
    /// contains the class.
    pub fn local_class_index(&self, j: usize, c: ClassId) -> Option<usize> {
        self.class_sets[j].binary_search(&c).ok()
    }

    /// Maps features through the extractor (read-only).
    pub fn extract(&self, batch: &Matrix) -> Result<Matrix> {
        self.extractor.infer(batch)
    }

    /// Probability per feature row that it looks like source `j` (1 ⇒
    /// source-like, 0 ⇒ target-like). Values are clamped inside
    /// (1e-7, 1−1e-7).
    pub fn discriminate(&self, features: &Matrix, j: usize) -> Result<Vec<f64>> {
        self.check_source(j)?;
        let out = self.discriminators[j].infer(features)?;
        Ok(out.data().iter().map(|&p| math::clamp_prob(p)).collect())
    }

    /// Softmax rows of classifier `j` on the given features.
    pub fn classify(&self, features: &Matrix, j: usize) -> Result<Matrix> {
        self.check_source(j)?;
        self.classifiers[j].infer(features)
    }

    /// α_j for every source: the chosen discriminator loss averaged over
    /// the full source dataset.
    pub fn concentration_constants(
        &self,
        sources: &[DomainDataset],
        mode: AlphaMode,
    ) -> Result<Vec<f64>> {
        if sources.len() != self.n_sources() {
            return Err(Error::DimensionMismatch {
                what: "source count",
                expected: self.n_sources(),
                got: sources.len(),
            });
        }
        let mut alphas = Vec::with_capacity(sources.len());
        for (j, src) in sources.iter().enumerate() {
            if src.is_empty() {
                return Err(Error::EmptyDomain(src.name.clone()));
            }
            let feats = self.extract(&src.features)?;
            let probs = self.discriminate(&feats, j)?;
            let sum: f64 = probs
                .iter()
                .map(|&p| match mode {
                    AlphaMode::NegLogD => -math::ln_prob(p),
                    AlphaMode::NegLogOneMinusD => -math::ln_prob(1.0 - p),
                })
                .sum();
            alphas.push(sum / probs.len() as f64);
        }
        Ok(alphas)
    }

    /// Recomputes and stores the concentration constants.
    pub fn refresh_alphas(&mut self, sources: &[DomainDataset], mode: AlphaMode) -> Result<()> {
        self.alphas = self.concentration_constants(sources, mode)?;
        Ok(())
    }

    /// Perplexity score of every target feature row against every source:
    /// −log(1 − D_j(F(x))) + α_j, using the stored α.
    pub fn perplexity_scores(&self, target_features: &Matrix) -> Result<PerplexityScores> {
        let n = self.n_sources();
        let mut scores = Matrix::zeros(target_features.rows(), n);
        for j in 0..n {
            let probs = self.discriminate(target_features, j)?;
            for (i, &p) in probs.iter().enumerate() {
                scores.set(i, j, -math::ln_prob(1.0 - p) + self.alphas[j]);
            }
        }
        Ok(PerplexityScores {
            scores,
            alphas: self.alphas.clone(),
        })
    }

    /// Constant scores (1/N) standing in for the perplexity scores while
    /// the discriminator is untrained.
    pub fn uniform_scores(&self, n_rows: usize) -> PerplexityScores {
        let n = self.n_sources();
        let mut scores = Matrix::zeros(n_rows, n);
        for v in scores.data_mut() {
            *v = 1.0 / n as f64;
        }
        PerplexityScores {
            scores,
            alphas: vec![0.0; n],
        }
    }

    /// The target classification operator. For each sample and class `c`,
    /// the scores of the sources containing `c` are normalised to weights
    /// and applied to those sources' softmax values for `c`. If every
    /// eligible score is zero the weights fall back to uniform over the
    /// eligible sources.
    pub fn target_confidence(
        &self,
        scores: &PerplexityScores,
        per_source_probs: &[Matrix],
    ) -> Result<Vec<ConfidenceVector>> {
        let n = self.n_sources();
        if per_source_probs.len() != n {
            return Err(Error::DimensionMismatch {
                what: "per-source softmax count",
                expected: n,
                got: per_source_probs.len(),
            });
        }
        let rows = scores.scores.rows();
        if scores.scores.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "score width",
                expected: n,
                got: scores.scores.cols(),
            });
        }
        for (j, probs) in per_source_probs.iter().enumerate() {
            if probs.rows() != rows || probs.cols() != self.class_sets[j].len() {
                return Err(Error::DimensionMismatch {
                    what: "per-source softmax shape",
                    expected: rows * self.class_sets[j].len(),
                    got: probs.rows() * probs.cols(),
                });
            }
        }

        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut confidence = vec![0.0; self.full_class_list.len()];
            for (ci, &c) in self.full_class_list.iter().enumerate() {
                let eligible: Vec<(usize, usize)> = (0..n)
                    .filter_map(|j| self.local_class_index(j, c).map(|li| (j, li)))
                    .collect();
                if eligible.is_empty() {
                    continue;
                }
                let denom: f64 = eligible
                    .iter()
                    .map(|&(j, _)| scores.scores.get(i, j))
                    .sum();
                let mut acc = 0.0;
                for &(j, li) in &eligible {
                    let w = if denom > 0.0 {
                        scores.scores.get(i, j) / denom
                    } else {
                        1.0 / eligible.len() as f64
                    };
                    acc += w * per_source_probs[j].get(i, li);
                }
                confidence[ci] = acc;
            }
            let (mut best, mut best_v) = (0usize, f64::NEG_INFINITY);
            for (ci, &v) in confidence.iter().enumerate() {
                if v > best_v {
                    best = ci;
                    best_v = v;
                }
            }
            out.push(ConfidenceVector {
                predicted_class: self.full_class_list[best],
                max_confidence: best_v,
                confidence,
            });
        }
        Ok(out)
    }

    /// End-to-end prediction on raw feature rows using the stored α.
    pub fn predict_features(&self, features: &Matrix) -> Result<Vec<ConfidenceVector>> {
        let feats = self.extract(features)?;
        let scores = self.perplexity_scores(&feats)?;
        let probs: Result<Vec<Matrix>> = (0..self.n_sources())
            .map(|j| self.classify(&feats, j))
            .collect();
        self.target_confidence(&scores, &probs?)
    }

    /// End-to-end prediction with uniform (1/N) scores.
    pub fn predict_features_uniform(&self, features: &Matrix) -> Result<Vec<ConfidenceVector>> {
        let feats = self.extract(features)?;
        let scores = self.uniform_scores(feats.rows());
        let probs: Result<Vec<Matrix>> = (0..self.n_sources())
            .map(|j| self.classify(&feats, j))
            .collect();
        self.target_confidence(&scores, &probs?)
    }

    /// Classifies a target dataset; labels and confidences come back as one
    /// vector per sample.
    pub fn predict_target(&self, target: &DomainDataset) -> Result<Vec<ConfidenceVector>> {
        self.predict_features(&target.features)
    }

    /// Checks the structural invariants (head widths, class-set union).
    pub fn validate(&self) -> Result<()> {
        let n = self.n_sources();
        if n == 0 || self.classifiers.len() != n || self.class_sets.len() != n {
            return Err(Error::InvalidConfig(
                "mismatched subnet counts".into(),
            ));
        }
        for (j, clf) in self.classifiers.iter().enumerate() {
            if clf.output_dim() != self.class_sets[j].len() {
                return Err(Error::InvalidConfig(format!(
                    "classifier {j} width {} does not match its class set size {}",
                    clf.output_dim(),
                    self.class_sets[j].len()
                )));
            }
        }
        let mut union: Vec<ClassId> = self
            .class_sets
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();
        union.sort_unstable();
        union.dedup();
        if union != self.full_class_list {
            return Err(Error::InvalidConfig(
                "full class list is not the union of the source class sets".into(),
            ));
        }
        Ok(())
    }
}

/// Percent of predictions whose class matches the reference labels.
pub fn accuracy_percent(preds: &[ConfidenceVector], labels: &[ClassId]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction count",
            expected: labels.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDomain("evaluation set".into()));
    }
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, &l)| p.predicted_class == l)
        .count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}
