//! Batch losses. Each returns `(mean loss over the batch, gradient w.r.t.
//! the pre-activation logits of the matching head)`, so the head's backward
//! pass starts from `backward_from_logits`. Probabilities are clamped to
//! [1e-7, 1-1e-7] before any log; the clamp never moves an argmin.

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Tags for the three loss shapes used by the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Multi-class cross-entropy on a softmax head.
    SoftmaxCrossEntropy,
    /// Binary cross-entropy on a sigmoid head (the adversarial objective).
    SigmoidBce,
    /// Cross-entropy to the uniform Bernoulli, −½·log p − ½·log(1−p);
    /// minimised at p = ½ (the domain-confusion objective).
    ConfusionBce,
}

/// `probs` is M×K with rows summing to 1, `labels` holds per-row class
/// indices into the K columns. Gradient w.r.t. logits is (p − onehot)/M.
pub fn softmax_cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != probs.rows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: probs.rows(),
            got: labels.len(),
        });
    }
    let m = probs.rows() as f64;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::LabelOutsideClassSet { label: y });
        }
        loss += -math::ln_prob(probs.get(r, y));
        for c in 0..probs.cols() {
            let onehot = if c == y { 1.0 } else { 0.0 };
            grad.set(r, c, (probs.get(r, c) - onehot) / m);
        }
    }
    Ok((loss / m, grad))
}

/// Element-wise binary cross-entropy, summed within a row and averaged over
/// rows. Gradient w.r.t. logits is (p − t)/M.
pub fn sigmoid_bce(probs: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if targets.rows() != probs.rows() || targets.cols() != probs.cols() {
        return Err(Error::DimensionMismatch {
            what: "bce target shape",
            expected: probs.rows() * probs.cols(),
            got: targets.rows() * targets.cols(),
        });
    }
    let m = probs.rows() as f64;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for r in 0..probs.rows() {
        for c in 0..probs.cols() {
            let p = probs.get(r, c);
            let t = targets.get(r, c);
            loss += -(t * math::ln_prob(p) + (1.0 - t) * math::ln_prob(1.0 - p));
            grad.set(r, c, (p - t) / m);
        }
    }
    Ok((loss / m, grad))
}

/// Binary cross-entropy against a constant target (whole batch is "source"
/// or whole batch is "target").
pub fn sigmoid_bce_const(probs: &Matrix, target: f64) -> Result<(f64, Matrix)> {
    let mut t = Matrix::zeros(probs.rows(), probs.cols());
    for v in t.data_mut() {
        *v = target;
    }
    sigmoid_bce(probs, &t)
}

/// Confusion loss −½·log p − ½·log(1−p) per element, summed within a row and
/// averaged over rows. Gradient w.r.t. logits is (p − ½)/M, zero exactly at
/// the uninformative point p = ½.
pub fn confusion_bce(probs: &Matrix) -> (f64, Matrix) {
    let m = probs.rows() as f64;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for r in 0..probs.rows() {
        for c in 0..probs.cols() {
            let p = probs.get(r, c);
            loss += -0.5 * math::ln_prob(p) - 0.5 * math::ln_prob(1.0 - p);
            grad.set(r, c, (p - 0.5) / m);
        }
    }
    (loss / m, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const LN2: f64 = core::f64::consts::LN_2;

    #[test]
    fn bce_at_half_is_ln2() {
        let p = Matrix::from_vec(1, 1, vec![0.5]);
        let (loss, grad) = sigmoid_bce_const(&p, 1.0).unwrap();
        assert!((loss - LN2).abs() < 1e-12);
        assert!((grad.get(0, 0) - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn confusion_at_half_is_ln2_with_zero_grad() {
        let p = Matrix::from_vec(1, 1, vec![0.5]);
        let (loss, grad) = confusion_bce(&p);
        assert!((loss - LN2).abs() < 1e-12);
        assert_eq!(grad.get(0, 0), 0.0);
    }

    #[test]
    fn confusion_is_minimized_at_half() {
        let at = |p: f64| confusion_bce(&Matrix::from_vec(1, 1, vec![p])).0;
        assert!(at(0.5) < at(0.4));
        assert!(at(0.5) < at(0.6));
    }

    #[test]
    fn uniform_softmax_ce_is_ln_k() {
        let p = Matrix::from_vec(2, 4, vec![0.25; 8]);
        let (loss, _) = softmax_cross_entropy(&p, &[0, 3]).unwrap();
        assert!((loss - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn extreme_probabilities_stay_finite() {
        let p = Matrix::from_vec(1, 2, vec![0.0, 1.0]);
        let (loss, _) = softmax_cross_entropy(&p, &[0]).unwrap();
        assert!(loss.is_finite());
        let q = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        let (loss, _) = sigmoid_bce_const(&q, 1.0).unwrap();
        assert!(loss.is_finite());
        let (loss, _) = confusion_bce(&q);
        assert!(loss.is_finite());
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let p = Matrix::from_vec(1, 2, vec![0.5, 0.5]);
        assert!(matches!(
            softmax_cross_entropy(&p, &[2]),
            Err(Error::LabelOutsideClassSet { label: 2 })
        ));
    }
}
