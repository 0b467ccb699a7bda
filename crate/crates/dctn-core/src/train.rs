//! The learning procedure: supervised pre-training with a uniform-weight
//! pseudo-label pass, multi-way adversarial adaptation with online hard
//! domain batch mining, and pseudo-label discriminative adaptation,
//! alternated for a fixed number of rounds.

use crate::data::{BatchStream, BatchTuple, ClassId, DomainDataset};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::model::{accuracy_percent, AlphaMode, DctnModel};
use crate::nn::loss::{confusion_bce, sigmoid_bce_const, softmax_cross_entropy};
use crate::nn::Sgd;
use alloc::vec::Vec;

/// Hyperparameters of one training run. All defaults are artifact choices;
/// nothing here is prescribed beyond the stated ranges.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Pseudo-label confidence threshold γ ∈ (0, 1].
    pub confidence_threshold: f64,
    /// Adversarial iterations β per round, ≥ 1.
    pub adversarial_iters: usize,
    pub lr_extractor: f64,
    pub lr_discriminator: f64,
    pub lr_classifier: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_rounds: usize,
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub alpha_mode: AlphaMode,
    /// When false, the extractor update averages the confusion term over
    /// all sources instead of the mined one.
    pub mining_enabled: bool,
    /// Stop once pseudo-label count and classification loss are stable
    /// within 1% for 3 consecutive rounds.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            confidence_threshold: 0.8,
            adversarial_iters: 20,
            lr_extractor: 0.01,
            lr_discriminator: 0.01,
            lr_classifier: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_rounds: 10,
            pretrain_epochs: 30,
            seed: 0,
            alpha_mode: AlphaMode::NegLogD,
            mining_enabled: true,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "confidence_threshold must lie in (0, 1], got {}",
                self.confidence_threshold
            )));
        }
        if self.adversarial_iters < 1 {
            return Err(Error::InvalidConfig(
                "adversarial_iters must be at least 1".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        for (name, lr) in [
            ("lr_extractor", self.lr_extractor),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_classifier", self.lr_classifier),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} must be positive, got {lr}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(alloc::format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Target samples admitted by the confidence threshold, with their
/// operator-assigned labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoLabelSet {
    /// Row indices into the target dataset.
    pub indices: Vec<usize>,
    pub labels: Vec<ClassId>,
    pub confidences: Vec<f64>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Phase {
    Pretrain,
    Adversarial,
    Discriminative,
}

/// One trace line. `loss_adv` is the discriminator objective (adversarial
/// records only); `loss_cls` is the classification loss of the step or
/// epoch; `j_star` the mined source (when mining is on).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub round: usize,
    pub iter: usize,
    pub phase: Phase,
    pub loss_adv: Option<f64>,
    pub loss_cls: f64,
    pub j_star: Option<usize>,
    pub n_pseudo: Option<usize>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub pseudo_acc: Option<f64>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub test_acc: Option<f64>,
}

/// Append-only record of a run.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    /// The per-round discriminative records, in order.
    pub fn discriminative_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Discriminative)
    }

    /// Test accuracy recorded right after pre-training, if any.
    pub fn pretrain_test_acc(&self) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.phase == Phase::Pretrain)
            .and_then(|r| r.test_acc)
    }

    /// Last recorded test accuracy.
    pub fn final_test_acc(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_acc)
    }
}

fn to_local_labels(model: &DctnModel, j: usize, labels: &[ClassId]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&l| {
            model
                .local_class_index(j, l)
                .ok_or(Error::LabelOutsideClassSet { label: l })
        })
        .collect()
}

fn check_batch(model: &DctnModel, batch: &BatchTuple) -> Result<()> {
    if batch.sources.len() != model.n_sources() {
        return Err(Error::DimensionMismatch {
            what: "source batches",
            expected: model.n_sources(),
            got: batch.sources.len(),
        });
    }
    Ok(())
}

/// Accumulates the pseudo-label term of the joint classification loss:
/// for each source whose class set contains a sample's label, that source's
/// head (and the extractor) receive the sample's cross-entropy gradient,
/// scaled by 1/B where B is the pseudo chunk size. Other heads get nothing.
/// Returns the loss contribution; does not step.
fn accumulate_pseudo_term(
    model: &mut DctnModel,
    chunk_features: &Matrix,
    chunk_labels: &[ClassId],
) -> Result<f64> {
    let n = model.n_sources();
    let b = chunk_features.rows() as f64;
    let mut total = 0.0;
    for j in 0..n {
        let rows: Vec<usize> = chunk_labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| model.local_class_index(j, y).is_some())
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let locals: Vec<usize> = rows
            .iter()
            .map(|&i| model.local_class_index(j, chunk_labels[i]).unwrap())
            .collect();
        let sub = chunk_features.select_rows(&rows);
        let feats = model.extractor.forward(&sub)?;
        let probs = model.classifiers[j].forward(&feats)?;
        let (loss, mut dlogits) = softmax_cross_entropy(&probs, &locals)?;
        // convert the sub-batch mean into a 1/B weighting
        let scale = rows.len() as f64 / b;
        dlogits.scale(scale);
        total += loss * scale;
        let dfeat = model.classifiers[j].backward_from_logits(&dlogits)?;
        model.extractor.backward_from_output(&dfeat)?;
    }
    Ok(total)
}

/// One SGD step on the extractor and all classifier heads for the joint
/// classification objective: per-source cross-entropy on the source batches
/// plus, when given, the pseudo-label term.
fn classification_step(
    model: &mut DctnModel,
    batch: &BatchTuple,
    pseudo_chunk: Option<&(Matrix, Vec<ClassId>)>,
    sgd_f: &Sgd,
    sgd_c: &Sgd,
) -> Result<f64> {
    check_batch(model, batch)?;
    model.extractor.zero_grads();
    for c in &mut model.classifiers {
        c.zero_grads();
    }
    let mut total = 0.0;
    for j in 0..model.n_sources() {
        let locals = to_local_labels(model, j, &batch.sources[j].labels)?;
        let feats = model.extractor.forward(&batch.sources[j].features)?;
        let probs = model.classifiers[j].forward(&feats)?;
        let (loss, dlogits) = softmax_cross_entropy(&probs, &locals)?;
        total += loss;
        let dfeat = model.classifiers[j].backward_from_logits(&dlogits)?;
        model.extractor.backward_from_output(&dfeat)?;
    }
    if let Some((px, py)) = pseudo_chunk {
        total += accumulate_pseudo_term(model, px, py)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "classification step",
        });
    }
    sgd_f.step(&mut model.extractor)?;
    for c in &mut model.classifiers {
        sgd_c.step(c)?;
    }
    Ok(total)
}

/// One SGD step on the discriminators only: each D_j minimises its binary
/// cross-entropy with source-j labeled 1 and target labeled 0. The
/// extractor is frozen (it is only read). Returns the loss averaged over
/// sources.
pub fn update_discriminator(
    model: &mut DctnModel,
    batch: &BatchTuple,
    sgd_d: &Sgd,
) -> Result<f64> {
    check_batch(model, batch)?;
    let n = model.n_sources();
    let tgt_feats = model.extract(&batch.target)?;
    let mut total = 0.0;
    for j in 0..n {
        let src_feats = model.extract(&batch.sources[j].features)?;
        model.discriminators[j].zero_grads();
        let p_src = model.discriminators[j].forward(&src_feats)?;
        let (l_src, g_src) = sigmoid_bce_const(&p_src, 1.0)?;
        model.discriminators[j].backward_from_logits(&g_src)?;
        let p_tgt = model.discriminators[j].forward(&tgt_feats)?;
        let (l_tgt, g_tgt) = sigmoid_bce_const(&p_tgt, 0.0)?;
        model.discriminators[j].backward_from_logits(&g_tgt)?;
        let loss_j = l_src + l_tgt;
        if !loss_j.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: "discriminator update",
            });
        }
        sgd_d.step(&mut model.discriminators[j])?;
        total += loss_j;
    }
    Ok(total / n as f64)
}

/// Online hard domain batch mining: picks the source whose summed
/// discriminator loss on its own batch plus the target batch is largest
/// (ties go to the lowest index).
pub fn select_hard_source(model: &DctnModel, batch: &BatchTuple) -> Result<usize> {
    check_batch(model, batch)?;
    let tgt_feats = model.extract(&batch.target)?;
    let mut best = 0usize;
    let mut best_loss = f64::NEG_INFINITY;
    for j in 0..model.n_sources() {
        let src_feats = model.extract(&batch.sources[j].features)?;
        let d_src = model.discriminate(&src_feats, j)?;
        let d_tgt = model.discriminate(&tgt_feats, j)?;
        let loss: f64 = d_src.iter().map(|&p| -math::ln_prob(p)).sum::<f64>()
            + d_tgt.iter().map(|&p| -math::ln_prob(1.0 - p)).sum::<f64>();
        if loss > best_loss {
            best = j;
            best_loss = loss;
        }
    }
    Ok(best)
}

/// Loss components of one extractor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractorLoss {
    pub confusion: f64,
    pub classification: f64,
}

impl ExtractorLoss {
    pub fn total(&self) -> f64 {
        self.confusion + self.classification
    }
}

/// One SGD step on the extractor only: the domain-confusion loss through
/// the mined source's discriminator (or averaged over all sources when
/// `hard_source` is `None`), plus the multi-source classification loss
/// through the frozen classifier heads. Discriminators and classifiers
/// receive no parameter updates.
pub fn update_extractor(
    model: &mut DctnModel,
    batch: &BatchTuple,
    hard_source: Option<usize>,
    sgd_f: &Sgd,
) -> Result<ExtractorLoss> {
    check_batch(model, batch)?;
    let n = model.n_sources();
    if let Some(h) = hard_source {
        if h >= n {
            return Err(Error::InvalidSourceIndex {
                index: h,
                n_sources: n,
            });
        }
    }
    let weight = |j: usize| -> f64 {
        match hard_source {
            Some(h) if h == j => 1.0,
            Some(_) => 0.0,
            None => 1.0 / n as f64,
        }
    };

    model.extractor.zero_grads();
    let mut confusion = 0.0;

    // target rows flow through every active discriminator
    {
        let feats = model.extractor.forward(&batch.target)?;
        let mut dfeat = Matrix::zeros(feats.rows(), feats.cols());
        for j in 0..n {
            let w = weight(j);
            if w == 0.0 {
                continue;
            }
            let p = model.discriminators[j].forward(&feats)?;
            let (l, mut dlog) = confusion_bce(&p);
            dlog.scale(w);
            confusion += w * l;
            dfeat.add_assign(&model.discriminators[j].input_grad_from_logits(&dlog)?);
        }
        model.extractor.backward_from_output(&dfeat)?;
    }

    // source rows: confusion (for active sources) plus classification
    // through the frozen heads
    let mut classification = 0.0;
    for j in 0..n {
        let locals = to_local_labels(model, j, &batch.sources[j].labels)?;
        let feats = model.extractor.forward(&batch.sources[j].features)?;
        let mut dfeat = Matrix::zeros(feats.rows(), feats.cols());
        let w = weight(j);
        if w > 0.0 {
            let p = model.discriminators[j].forward(&feats)?;
            let (l, mut dlog) = confusion_bce(&p);
            dlog.scale(w);
            confusion += w * l;
            dfeat.add_assign(&model.discriminators[j].input_grad_from_logits(&dlog)?);
        }
        let probs = model.classifiers[j].forward(&feats)?;
        let (l, dlog) = softmax_cross_entropy(&probs, &locals)?;
        classification += l;
        dfeat.add_assign(&model.classifiers[j].input_grad_from_logits(&dlog)?);
        model.extractor.backward_from_output(&dfeat)?;
    }

    let loss = ExtractorLoss {
        confusion,
        classification,
    };
    if !loss.total().is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "extractor update",
        });
    }
    sgd_f.step(&mut model.extractor)?;
    Ok(loss)
}

/// Runs the target classification operator over the whole target set and
/// keeps samples with `max_confidence > threshold`. With `uniform_scores`
/// the perplexity scores are replaced by the constant 1/N (the pre-training
/// regime, before the discriminator means anything).
pub fn pseudo_label(
    model: &DctnModel,
    target: &DomainDataset,
    threshold: f64,
    uniform_scores: bool,
) -> Result<PseudoLabelSet> {
    if target.labels.is_some() {
        return Err(Error::LabeledTarget);
    }
    let preds = if uniform_scores {
        model.predict_features_uniform(&target.features)?
    } else {
        model.predict_features(&target.features)?
    };
    let mut set = PseudoLabelSet::default();
    for (i, p) in preds.iter().enumerate() {
        if p.max_confidence > threshold {
            set.indices.push(i);
            set.labels.push(p.predicted_class);
            set.confidences.push(p.max_confidence);
        }
    }
    Ok(set)
}

fn pseudo_chunk(
    target: &DomainDataset,
    pseudo: &PseudoLabelSet,
    cursor: &mut usize,
    m: usize,
) -> Option<(Matrix, Vec<ClassId>)> {
    if pseudo.is_empty() {
        return None;
    }
    let take = m.min(pseudo.len());
    let mut rows = Vec::with_capacity(take);
    let mut labels = Vec::with_capacity(take);
    for _ in 0..take {
        let i = *cursor % pseudo.len();
        rows.push(pseudo.indices[i]);
        labels.push(pseudo.labels[i]);
        *cursor += 1;
    }
    Some((target.features.select_rows(&rows), labels))
}

/// One epoch of joint extractor + classifier SGD on the sources plus the
/// pseudo-labeled target samples. Discriminators are untouched. Returns the
/// mean per-step loss.
pub fn discriminative_update(
    model: &mut DctnModel,
    stream: &mut BatchStream<'_>,
    target: &DomainDataset,
    pseudo: &PseudoLabelSet,
    sgd_f: &Sgd,
    sgd_c: &Sgd,
) -> Result<f64> {
    for &l in &pseudo.labels {
        if model.full_class_list.binary_search(&l).is_err() {
            return Err(Error::LabelOutsideClassSet { label: l });
        }
    }
    let tuples = stream.tuples_per_epoch();
    let m = stream.batch_size();
    let mut cursor = 0usize;
    let mut total = 0.0;
    for _ in 0..tuples {
        let batch = stream.next_tuple();
        let chunk = pseudo_chunk(target, pseudo, &mut cursor, m);
        total += classification_step(model, &batch, chunk.as_ref(), sgd_f, sgd_c)?;
    }
    Ok(total / tuples as f64)
}

/// Drives a full run while exposing the phases separately, so callers can
/// checkpoint between rounds or ablate a phase.
pub struct Trainer<'a> {
    model: DctnModel,
    sources: &'a [DomainDataset],
    target: &'a DomainDataset,
    eval_labels: Option<&'a [ClassId]>,
    cfg: TrainConfig,
    stream: BatchStream<'a>,
    sgd_extractor: Sgd,
    sgd_discriminator: Sgd,
    sgd_classifier: Sgd,
    trace: TrainTrace,
    round: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: DctnModel,
        sources: &'a [DomainDataset],
        target: &'a DomainDataset,
        eval_labels: Option<&'a [ClassId]>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        if target.labels.is_some() {
            return Err(Error::LabeledTarget);
        }
        if sources.len() != model.n_sources() {
            return Err(Error::DimensionMismatch {
                what: "source count",
                expected: model.n_sources(),
                got: sources.len(),
            });
        }
        for (j, s) in sources.iter().enumerate() {
            if s.class_set != model.class_sets[j] {
                return Err(Error::InvalidConfig(alloc::format!(
                    "class set of source '{}' does not match classifier head {j}",
                    s.name
                )));
            }
        }
        if let Some(labels) = eval_labels {
            if labels.len() != target.len() {
                return Err(Error::DimensionMismatch {
                    what: "evaluation labels",
                    expected: target.len(),
                    got: labels.len(),
                });
            }
        }
        let stream = BatchStream::new(sources, target, cfg.batch_size, cfg.seed)?;
        Ok(Trainer {
            sgd_extractor: Sgd::new(cfg.lr_extractor, cfg.momentum)?,
            sgd_discriminator: Sgd::new(cfg.lr_discriminator, cfg.momentum)?,
            sgd_classifier: Sgd::new(cfg.lr_classifier, cfg.momentum)?,
            model,
            sources,
            target,
            eval_labels,
            cfg,
            stream,
            trace: TrainTrace::default(),
            round: 0,
        })
    }

    pub fn model(&self) -> &DctnModel {
        &self.model
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn into_parts(self) -> (DctnModel, TrainTrace) {
        (self.model, self.trace)
    }

    fn evaluate(&self, pseudo: &PseudoLabelSet, uniform_scores: bool) -> Result<(Option<f64>, Option<f64>)> {
        let Some(labels) = self.eval_labels else {
            return Ok((None, None));
        };
        let pseudo_acc = if pseudo.is_empty() {
            None
        } else {
            let hits = pseudo
                .indices
                .iter()
                .zip(&pseudo.labels)
                .filter(|(&i, &l)| labels[i] == l)
                .count();
            Some(100.0 * hits as f64 / pseudo.len() as f64)
        };
        let preds = if uniform_scores {
            self.model.predict_features_uniform(&self.target.features)?
        } else {
            self.model.predict_features(&self.target.features)?
        };
        let test_acc = accuracy_percent(&preds, labels)?;
        Ok((pseudo_acc, Some(test_acc)))
    }

    /// Supervised pass over the sources only (no pseudo labels): trains the
    /// extractor and classifier heads for `pretrain_epochs` epochs. This is
    /// also the whole fit for no-adaptation baselines.
    pub fn pretrain_supervised(&mut self) -> Result<f64> {
        let tuples = self.stream.tuples_per_epoch();
        let mut last = 0.0;
        for _ in 0..self.cfg.pretrain_epochs {
            let mut epoch = 0.0;
            for _ in 0..tuples {
                let batch = self.stream.next_tuple();
                epoch += classification_step(
                    &mut self.model,
                    &batch,
                    None,
                    &self.sgd_extractor,
                    &self.sgd_classifier,
                )?;
            }
            last = epoch / tuples as f64;
        }
        Ok(last)
    }

    /// Full pre-training: supervised fit, a uniform-weight pseudo-label
    /// pass over the target, then fine-tuning on sources plus the admitted
    /// pseudo-labeled samples.
    pub fn pretrain(&mut self) -> Result<()> {
        let mut loss = self.pretrain_supervised()?;
        let pseudo = pseudo_label(
            &self.model,
            self.target,
            self.cfg.confidence_threshold,
            true,
        )?;
        for _ in 0..self.cfg.pretrain_epochs {
            loss = discriminative_update(
                &mut self.model,
                &mut self.stream,
                self.target,
                &pseudo,
                &self.sgd_extractor,
                &self.sgd_classifier,
            )?;
        }
        let (pseudo_acc, test_acc) = self.evaluate(&pseudo, true)?;
        self.trace.records.push(TraceRecord {
            round: 0,
            iter: 0,
            phase: Phase::Pretrain,
            loss_adv: None,
            loss_cls: loss,
            j_star: None,
            n_pseudo: Some(pseudo.len()),
            pseudo_acc,
            test_acc,
        });
        Ok(())
    }

    /// β adversarial iterations: each updates the discriminators, mines the
    /// hard source (when enabled), then updates the extractor.
    pub fn adversarial_phase(&mut self) -> Result<()> {
        for it in 0..self.cfg.adversarial_iters {
            let batch = self.stream.next_tuple();
            let loss_adv =
                update_discriminator(&mut self.model, &batch, &self.sgd_discriminator)?;
            let j_star = if self.cfg.mining_enabled {
                Some(select_hard_source(&self.model, &batch)?)
            } else {
                None
            };
            let f_loss = update_extractor(&mut self.model, &batch, j_star, &self.sgd_extractor)?;
            self.trace.records.push(TraceRecord {
                round: self.round,
                iter: it,
                phase: Phase::Adversarial,
                loss_adv: Some(loss_adv),
                loss_cls: f_loss.classification,
                j_star,
                n_pseudo: None,
                pseudo_acc: None,
                test_acc: None,
            });
        }
        Ok(())
    }

    /// Refreshes the concentration constants, re-labels the target from
    /// scratch, and runs one discriminative epoch. `uniform_scores`
    /// replaces the perplexity scores by 1/N (used by the pseudo-only
    /// ablation, which never trains the discriminators).
    pub fn discriminative_phase(&mut self, uniform_scores: bool) -> Result<()> {
        self.model
            .refresh_alphas(self.sources, self.cfg.alpha_mode)?;
        let pseudo = pseudo_label(
            &self.model,
            self.target,
            self.cfg.confidence_threshold,
            uniform_scores,
        )?;
        let loss_cls = discriminative_update(
            &mut self.model,
            &mut self.stream,
            self.target,
            &pseudo,
            &self.sgd_extractor,
            &self.sgd_classifier,
        )?;
        let (pseudo_acc, test_acc) = self.evaluate(&pseudo, uniform_scores)?;
        self.trace.records.push(TraceRecord {
            round: self.round,
            iter: 0,
            phase: Phase::Discriminative,
            loss_adv: None,
            loss_cls,
            j_star: None,
            n_pseudo: Some(pseudo.len()),
            pseudo_acc,
            test_acc,
        });
        Ok(())
    }

    /// One full round: β adversarial iterations, then one discriminative
    /// phase with perplexity-score weighting.
    pub fn run_round(&mut self) -> Result<()> {
        self.round += 1;
        self.adversarial_phase()?;
        self.discriminative_phase(false)
    }

    /// Runs `max_rounds` rounds (fewer when early stopping triggers).
    pub fn run(&mut self) -> Result<()> {
        let mut stable = 0usize;
        let mut prev: Option<(f64, usize)> = None;
        for _ in 0..self.cfg.max_rounds {
            self.run_round()?;
            if !self.cfg.early_stop {
                continue;
            }
            let rec = self
                .trace
                .discriminative_records()
                .last()
                .expect("round just pushed a record");
            let cur = (rec.loss_cls, rec.n_pseudo.unwrap_or(0));
            if let Some((pl, pn)) = prev {
                let loss_stable = math::abs(cur.0 - pl) <= 0.01 * math::abs(pl).max(1e-12);
                let n_stable =
                    math::abs(cur.1 as f64 - pn as f64) <= 0.01 * (pn as f64).max(1.0);
                if loss_stable && n_stable {
                    stable += 1;
                    if stable >= 3 {
                        break;
                    }
                } else {
                    stable = 0;
                }
            }
            prev = Some(cur);
        }
        Ok(())
    }
}

/// Pre-trains and runs the full alternating procedure, returning the final
/// model and the trace. `eval_labels`, when given, are used only to record
/// accuracies in the trace.
pub fn train(
    model: DctnModel,
    sources: &[DomainDataset],
    target: &DomainDataset,
    cfg: TrainConfig,
    eval_labels: Option<&[ClassId]>,
) -> Result<(DctnModel, TrainTrace)> {
    let mut trainer = Trainer::new(model, sources, target, eval_labels, cfg)?;
    trainer.pretrain()?;
    trainer.run()?;
    Ok(trainer.into_parts())
}
