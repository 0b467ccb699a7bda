//! Multi-source datasets: synthetic domain generation, category-shift
//! splitting, and mini-batch streams that pair one target batch with one
//! labeled batch per source.

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Class labels are plain non-negative integers.
pub type ClassId = usize;

/// One domain: a labeled source or the unlabeled target. Immutable after
/// construction; the target variant carries no labels at all, so labels
/// cannot leak into training by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Option<Vec<ClassId>>,
    /// Sorted, deduplicated set of classes present (empty when unlabeled).
    pub class_set: Vec<ClassId>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<ClassId>) -> Result<Self> {
        let name = name.into();
        if features.rows() == 0 {
            return Err(Error::EmptyDomain(name));
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if !features.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "domain '{name}' has non-finite feature values"
            )));
        }
        let mut class_set = labels.clone();
        class_set.sort_unstable();
        class_set.dedup();
        Ok(DomainDataset {
            name,
            features,
            labels: Some(labels),
            class_set,
        })
    }

    pub fn unlabeled(name: impl Into<String>, features: Matrix) -> Result<Self> {
        let name = name.into();
        if features.rows() == 0 {
            return Err(Error::EmptyDomain(name));
        }
        if !features.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "domain '{name}' has non-finite feature values"
            )));
        }
        Ok(DomainDataset {
            name,
            features,
            labels: None,
            class_set: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Concatenates labeled domains into one pooled domain.
    pub fn pooled(name: impl Into<String>, domains: &[DomainDataset]) -> Result<Self> {
        let name = name.into();
        if domains.is_empty() {
            return Err(Error::EmptyDomain(name));
        }
        let mut labels = Vec::new();
        for d in domains {
            match &d.labels {
                Some(l) => labels.extend_from_slice(l),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "cannot pool unlabeled domain '{}'",
                        d.name
                    )))
                }
            }
        }
        let mats: Vec<&Matrix> = domains.iter().map(|d| &d.features).collect();
        DomainDataset::new(name, Matrix::vstack(&mats), labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShiftMode {
    /// All sources keep the full class list.
    Vanilla,
    /// Two sources; the first/last third of the class order are private,
    /// the middle block is shared.
    Overlap,
    /// Two sources with mutually exclusive halves of the class order.
    Disjoint,
}

/// How the source class sets are organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub mode: ShiftMode,
    pub n_sources: usize,
    pub total_classes: usize,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ShiftMode::Vanilla => {
                if self.n_sources < 1 {
                    return Err(Error::InvalidConfig("need at least one source".into()));
                }
            }
            ShiftMode::Overlap => {
                if self.n_sources != 2 {
                    return Err(Error::InvalidConfig(
                        "overlap split is defined for exactly 2 sources".into(),
                    ));
                }
                if self.total_classes / 3 == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "overlap split needs at least 3 classes, got {}",
                        self.total_classes
                    )));
                }
            }
            ShiftMode::Disjoint => {
                if self.n_sources != 2 {
                    return Err(Error::InvalidConfig(
                        "disjoint split is defined for exactly 2 sources".into(),
                    ));
                }
                if self.total_classes < 2 {
                    return Err(Error::InvalidConfig(
                        "disjoint split needs at least 2 classes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Class ranges kept by each source, `[lo, hi)` over the class order.
    pub fn kept_ranges(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let k = self.total_classes;
        Ok(match self.mode {
            ShiftMode::Vanilla => vec![(0, k); self.n_sources],
            ShiftMode::Overlap => {
                let private = k / 3;
                vec![(0, k - private), (private, k)]
            }
            ShiftMode::Disjoint => {
                let half = k / 2;
                vec![(0, half), (half, k)]
            }
        })
    }
}

/// One training tuple: an unlabeled target batch plus one labeled batch per
/// source, all exactly `m` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTuple {
    pub target: Matrix,
    pub sources: Vec<SourceBatch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub features: Matrix,
    pub labels: Vec<ClassId>,
}

/// Generates class-conditional 2-D Gaussian blobs (centres on a circle of
/// radius 3, std 0.5) and applies a per-domain rigid motion: source `j`
/// (1-based) is rotated by `j·θ` and translated by `j·(θ/2, −θ/2)`; the
/// target is rotated by `(N+1)·θ/2` with no translation, so it sits between
/// the sources. Target labels are returned separately and exist only for
/// evaluation.
pub fn gen_synthetic_domains(
    n_sources: usize,
    n_classes: usize,
    samples_per_domain: usize,
    shift_strength: f64,
    seed: u64,
) -> Result<(Vec<DomainDataset>, DomainDataset, Vec<ClassId>)> {
    if n_sources < 1 {
        return Err(Error::InvalidConfig("need at least one source".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidConfig("need at least two classes".into()));
    }
    if samples_per_domain < n_classes {
        return Err(Error::InvalidConfig(format!(
            "samples_per_domain ({samples_per_domain}) must be at least n_classes ({n_classes})"
        )));
    }
    if !shift_strength.is_finite() {
        return Err(Error::InvalidConfig("shift_strength must be finite".into()));
    }

    let mut sources = Vec::with_capacity(n_sources);
    for j in 1..=n_sources {
        let angle = j as f64 * shift_strength;
        let shift = (
            j as f64 * shift_strength * 2.0,
            -(j as f64) * shift_strength * 2.0,
        );
        let (features, labels) = sample_domain(
            n_classes,
            samples_per_domain,
            angle,
            shift,
            seed.wrapping_add(j as u64),
        );
        sources.push(DomainDataset::new(format!("source_{j}"), features, labels)?);
    }

    let target_angle = (n_sources + 1) as f64 * shift_strength / 2.0;
    let (features, labels) = sample_domain(
        n_classes,
        samples_per_domain,
        target_angle,
        (0.0, 0.0),
        seed,
    );
    let target = DomainDataset::unlabeled("target", features)?;
    Ok((sources, target, labels))
}

/// Draws one domain with a fixed per-domain seed; identical seeds and
/// transforms give identical bytes.
fn sample_domain(
    n_classes: usize,
    n: usize,
    angle: f64,
    shift: (f64, f64),
    seed: u64,
) -> (Matrix, Vec<ClassId>) {
    const RADIUS: f64 = 1.5;
    const STD: f64 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, STD).expect("valid normal");
    let (cos_a, sin_a) = (math::cos(angle), math::sin(angle));
    let tau = 2.0 * core::f64::consts::PI;

    let mut features = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % n_classes;
        let phase = tau * class as f64 / n_classes as f64;
        let x = RADIUS * math::cos(phase) + normal.sample(&mut rng);
        let y = RADIUS * math::sin(phase) + normal.sample(&mut rng);
        // rotate the whole plane, then translate
        features.set(i, 0, cos_a * x - sin_a * y + shift.0);
        features.set(i, 1, sin_a * x + cos_a * y + shift.1);
        labels.push(class);
    }
    (features, labels)
}

/// Restricts each source to its class range per `spec`; samples of removed
/// classes are dropped, class sets updated. The target is untouched (it is
/// labeled by the union of all source classes).
pub fn apply_category_shift(
    sources: &[DomainDataset],
    spec: &ShiftSpec,
) -> Result<Vec<DomainDataset>> {
    spec.validate()?;
    if spec.mode == ShiftMode::Vanilla {
        return Ok(sources.to_vec());
    }
    if sources.len() != spec.n_sources {
        return Err(Error::InvalidConfig(format!(
            "shift spec expects {} sources, got {}",
            spec.n_sources,
            sources.len()
        )));
    }
    let ranges = spec.kept_ranges()?;
    let mut out = Vec::with_capacity(sources.len());
    for (src, &(lo, hi)) in sources.iter().zip(&ranges) {
        let labels = src
            .labels
            .as_ref()
            .ok_or(Error::InvalidConfig(format!(
                "cannot shift unlabeled domain '{}'",
                src.name
            )))?;
        let keep: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l >= lo && l < hi)
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyDomain(src.name.clone()));
        }
        let features = src.features.select_rows(&keep);
        let kept_labels: Vec<ClassId> = keep.iter().map(|&i| labels[i]).collect();
        out.push(DomainDataset::new(src.name.clone(), features, kept_labels)?);
    }
    Ok(out)
}

/// Deterministic mini-batch stream. Every epoch visits each target sample
/// once in a fresh shuffle; when fewer than `m` target rows remain the
/// batch is filled by resampling with replacement. Sources are shuffled and
/// cycled independently so every tuple carries `m` labeled rows per source.
pub struct BatchStream<'a> {
    sources: &'a [DomainDataset],
    target: &'a DomainDataset,
    m: usize,
    rng: ChaCha8Rng,
    target_order: Vec<usize>,
    target_pos: usize,
    source_orders: Vec<Vec<usize>>,
    source_pos: Vec<usize>,
}

/// Builds a [`BatchStream`] over the given domains.
pub fn make_batches<'a>(
    sources: &'a [DomainDataset],
    target: &'a DomainDataset,
    m: usize,
    seed: u64,
) -> Result<BatchStream<'a>> {
    BatchStream::new(sources, target, m, seed)
}

impl<'a> BatchStream<'a> {
    pub fn new(
        sources: &'a [DomainDataset],
        target: &'a DomainDataset,
        m: usize,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if sources.is_empty() {
            return Err(Error::InvalidConfig("need at least one source".into()));
        }
        for s in sources {
            if s.is_empty() {
                return Err(Error::EmptyDomain(s.name.clone()));
            }
            if s.labels.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "source '{}' must be labeled",
                    s.name
                )));
            }
        }
        if target.is_empty() {
            return Err(Error::EmptyDomain(target.name.clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut target_order: Vec<usize> = (0..target.len()).collect();
        target_order.shuffle(&mut rng);
        let mut source_orders = Vec::with_capacity(sources.len());
        for s in sources {
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.shuffle(&mut rng);
            source_orders.push(order);
        }
        Ok(BatchStream {
            sources,
            target,
            m,
            rng,
            target_order,
            target_pos: 0,
            source_orders,
            source_pos: vec![0; sources.len()],
        })
    }

    /// Tuples needed to visit every target sample once.
    pub fn tuples_per_epoch(&self) -> usize {
        self.target.len().div_ceil(self.m)
    }

    pub fn batch_size(&self) -> usize {
        self.m
    }

    /// Produces the next tuple; the stream is infinite.
    pub fn next_tuple(&mut self) -> BatchTuple {
        let mut tgt_idx = Vec::with_capacity(self.m);
        while tgt_idx.len() < self.m && self.target_pos < self.target_order.len() {
            tgt_idx.push(self.target_order[self.target_pos]);
            self.target_pos += 1;
        }
        // tail of an epoch: fill with replacement, then reshuffle
        while tgt_idx.len() < self.m {
            tgt_idx.push(self.rng.gen_range(0..self.target.len()));
        }
        if self.target_pos >= self.target_order.len() {
            self.target_order.shuffle(&mut self.rng);
            self.target_pos = 0;
        }

        let mut source_batches = Vec::with_capacity(self.sources.len());
        for (j, src) in self.sources.iter().enumerate() {
            let labels = src.labels.as_ref().expect("checked at construction");
            let mut idx = Vec::with_capacity(self.m);
            for _ in 0..self.m {
                if self.source_pos[j] >= self.source_orders[j].len() {
                    self.source_orders[j].shuffle(&mut self.rng);
                    self.source_pos[j] = 0;
                }
                idx.push(self.source_orders[j][self.source_pos[j]]);
                self.source_pos[j] += 1;
            }
            source_batches.push(SourceBatch {
                features: src.features.select_rows(&idx),
                labels: idx.iter().map(|&i| labels[i]).collect(),
            });
        }
        BatchTuple {
            target: self.target.features.select_rows(&tgt_idx),
            sources: source_batches,
        }
    }
}

impl<'a> Iterator for BatchStream<'a> {
    type Item = BatchTuple;

    fn next(&mut self) -> Option<BatchTuple> {
        Some(self.next_tuple())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_domain(name: &str, n: usize, k: usize) -> DomainDataset {
        let features = Matrix::from_vec(n, 2, (0..2 * n).map(|i| i as f64).collect());
        let labels = (0..n).map(|i| i % k).collect();
        DomainDataset::new(name, features, labels).unwrap()
    }

    #[test]
    fn identical_seed_and_transform_give_identical_domains() {
        let (f1, l1) = sample_domain(4, 40, 0.0, (0.0, 0.0), 99);
        let (f2, l2) = sample_domain(4, 40, 0.0, (0.0, 0.0), 99);
        assert_eq!(f1, f2);
        assert_eq!(l1, l2);
        // different seed offset ⇒ different draws of the same distribution
        let (f3, _) = sample_domain(4, 40, 0.0, (0.0, 0.0), 100);
        assert_ne!(f1, f3);
    }

    #[test]
    fn zero_shift_applies_no_transform() {
        let (sources, target, labels) = gen_synthetic_domains(2, 4, 40, 0.0, 7).unwrap();
        assert_eq!(sources.len(), 2);
        assert_eq!(target.len(), 40);
        assert_eq!(labels.len(), 40);
        assert!(target.labels.is_none());
        // with θ=0 every domain is a fresh draw of the same blobs: the
        // per-class means must agree across domains to within sampling noise
        let mean_of = |d: &Matrix, ls: &[ClassId], class: usize| {
            let rows: Vec<usize> = ls
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            let mut m = [0.0; 2];
            for &r in &rows {
                m[0] += d.get(r, 0);
                m[1] += d.get(r, 1);
            }
            [m[0] / rows.len() as f64, m[1] / rows.len() as f64]
        };
        for class in 0..4 {
            let a = mean_of(
                &sources[0].features,
                sources[0].labels.as_ref().unwrap(),
                class,
            );
            let b = mean_of(&target.features, &labels, class);
            assert!((a[0] - b[0]).abs() < 0.6, "class {class} x means far apart");
            assert!((a[1] - b[1]).abs() < 0.6, "class {class} y means far apart");
        }
    }

    #[test]
    fn every_source_contains_every_class() {
        let (sources, _, _) = gen_synthetic_domains(3, 5, 23, 0.4, 1).unwrap();
        for s in &sources {
            assert_eq!(s.class_set, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn overlap_split_k12() {
        let spec = ShiftSpec {
            mode: ShiftMode::Overlap,
            n_sources: 2,
            total_classes: 12,
        };
        let sources = vec![tiny_domain("s1", 48, 12), tiny_domain("s2", 48, 12)];
        let shifted = apply_category_shift(&sources, &spec).unwrap();
        assert_eq!(shifted[0].class_set, (0..8).collect::<Vec<_>>());
        assert_eq!(shifted[1].class_set, (4..12).collect::<Vec<_>>());
        // shared block {4..7}
        let shared: Vec<ClassId> = shifted[0]
            .class_set
            .iter()
            .copied()
            .filter(|c| shifted[1].class_set.contains(c))
            .collect();
        assert_eq!(shared, vec![4, 5, 6, 7]);
    }

    #[test]
    fn disjoint_split_k12() {
        let spec = ShiftSpec {
            mode: ShiftMode::Disjoint,
            n_sources: 2,
            total_classes: 12,
        };
        let sources = vec![tiny_domain("s1", 48, 12), tiny_domain("s2", 48, 12)];
        let shifted = apply_category_shift(&sources, &spec).unwrap();
        assert_eq!(shifted[0].class_set, (0..6).collect::<Vec<_>>());
        assert_eq!(shifted[1].class_set, (6..12).collect::<Vec<_>>());
    }

    #[test]
    fn overlap_split_k31() {
        let spec = ShiftSpec {
            mode: ShiftMode::Overlap,
            n_sources: 2,
            total_classes: 31,
        };
        let sources = vec![tiny_domain("s1", 62, 31), tiny_domain("s2", 62, 31)];
        let shifted = apply_category_shift(&sources, &spec).unwrap();
        assert_eq!(shifted[0].class_set, (0..21).collect::<Vec<_>>());
        assert_eq!(shifted[1].class_set, (10..31).collect::<Vec<_>>());
    }

    #[test]
    fn overlap_requires_three_classes() {
        let spec = ShiftSpec {
            mode: ShiftMode::Overlap,
            n_sources: 2,
            total_classes: 2,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn shift_preserves_union_and_strictness() {
        for mode in [ShiftMode::Overlap, ShiftMode::Disjoint] {
            let spec = ShiftSpec {
                mode,
                n_sources: 2,
                total_classes: 9,
            };
            let sources = vec![tiny_domain("s1", 45, 9), tiny_domain("s2", 45, 9)];
            let shifted = apply_category_shift(&sources, &spec).unwrap();
            let mut union: Vec<ClassId> = shifted
                .iter()
                .flat_map(|s| s.class_set.iter().copied())
                .collect();
            union.sort_unstable();
            union.dedup();
            assert_eq!(union, (0..9).collect::<Vec<_>>());
            let inter: Vec<ClassId> = shifted[0]
                .class_set
                .iter()
                .copied()
                .filter(|c| shifted[1].class_set.contains(c))
                .collect();
            // intersection strictly smaller than union, private sets non-empty
            assert!(inter.len() < union.len());
            assert!(shifted[0].class_set.iter().any(|c| !inter.contains(c)));
            assert!(shifted[1].class_set.iter().any(|c| !inter.contains(c)));
            if mode == ShiftMode::Disjoint {
                assert!(inter.is_empty());
            }
        }
    }

    #[test]
    fn batch_stream_visits_target_once_per_epoch() {
        let sources = vec![tiny_domain("s1", 5, 2)];
        let target = DomainDataset::unlabeled(
            "t",
            Matrix::from_vec(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap();
        let mut stream = make_batches(&sources, &target, 1, 5).unwrap();
        assert_eq!(stream.tuples_per_epoch(), 3);
        let mut seen = Vec::new();
        for _ in 0..3 {
            let t = stream.next_tuple();
            assert_eq!(t.target.rows(), 1);
            assert_eq!(t.sources[0].features.rows(), 1);
            seen.push(t.target.get(0, 0));
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn small_sources_recycle_to_full_batches() {
        let sources = vec![tiny_domain("s1", 2, 2), tiny_domain("s2", 3, 2)];
        let target = DomainDataset::unlabeled("t", Matrix::zeros(10, 2)).unwrap();
        let mut stream = make_batches(&sources, &target, 7, 2).unwrap();
        for _ in 0..5 {
            let t = stream.next_tuple();
            assert_eq!(t.target.rows(), 7);
            for sb in &t.sources {
                assert_eq!(sb.features.rows(), 7);
                assert_eq!(sb.labels.len(), 7);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_stream() {
        let sources = vec![tiny_domain("s1", 9, 3), tiny_domain("s2", 4, 2)];
        let target = DomainDataset::unlabeled("t", Matrix::from_vec(7, 2, (0..14).map(|i| i as f64).collect())).unwrap();
        let mut a = make_batches(&sources, &target, 3, 42).unwrap();
        let mut b = make_batches(&sources, &target, 3, 42).unwrap();
        for _ in 0..10 {
            assert_eq!(a.next_tuple(), b.next_tuple());
        }
    }

    #[test]
    fn empty_domain_is_rejected() {
        let sources = vec![tiny_domain("s1", 3, 2)];
        let target = DomainDataset::unlabeled("t", Matrix::zeros(2, 2)).unwrap();
        assert!(make_batches(&sources, &target, 0, 1).is_err());
        assert!(DomainDataset::unlabeled("empty", Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn pooled_concatenates_features_and_labels() {
        let a = tiny_domain("a", 2, 2);
        let b = tiny_domain("b", 3, 2);
        let p = DomainDataset::pooled("pool", &[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.features.row(2), b.features.row(0));
        assert_eq!(p.labels.as_ref().unwrap().len(), 5);
    }
}
