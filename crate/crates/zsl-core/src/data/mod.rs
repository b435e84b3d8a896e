//! Class catalogs, sample sets, dataset splits and the toy-Gaussian
//! generator.
//!
//! A [`ClassCatalog`] holds one attribute vector per class together with the
//! seen/unseen partition; the attribute rows double as the fixed classifier
//! rows everywhere else in the crate. A [`SampleSet`] holds per-sample
//! region-feature matrices plus labels into the catalog.

mod formats;

pub use formats::{load_attributes, load_features, save_attributes, save_features};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;

/// Attribute matrix over all classes with the seen/unseen partition.
#[derive(Clone, Debug)]
pub struct ClassCatalog {
    class_ids: Vec<String>,
    attributes: Mat,
    seen_set: Vec<usize>,
    unseen_set: Vec<usize>,
    seen_mask: Vec<bool>,
    folds: Option<Vec<Vec<usize>>>,
}

impl ClassCatalog {
    pub fn new(
        class_ids: Vec<String>,
        attributes: Mat,
        mut seen_set: Vec<usize>,
        mut unseen_set: Vec<usize>,
        folds: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let n_classes = class_ids.len();
        if n_classes == 0 {
            return Err(Error::contract("catalog must contain at least one class"));
        }
        if attributes.rows() != n_classes {
            return Err(Error::contract(format!(
                "attribute matrix has {} rows for {} classes",
                attributes.rows(),
                n_classes
            )));
        }
        if attributes.cols() == 0 {
            return Err(Error::contract("attribute dimension must be at least 1"));
        }
        if !attributes.is_finite() {
            return Err(Error::contract("attribute matrix contains non-finite entries"));
        }
        seen_set.sort_unstable();
        unseen_set.sort_unstable();
        let mut covered = vec![0u8; n_classes];
        for &k in seen_set.iter().chain(&unseen_set) {
            if k >= n_classes {
                return Err(Error::contract(format!("split references class index {k} out of range")));
            }
            covered[k] += 1;
        }
        if covered.iter().any(|&c| c != 1) {
            return Err(Error::contract(
                "seen and unseen sets must partition the classes (disjoint and covering)",
            ));
        }
        if let Some(folds) = &folds {
            let mut fold_cover = vec![0u8; n_classes];
            for fold in folds {
                for &k in fold {
                    if k >= n_classes {
                        return Err(Error::contract(format!(
                            "fold references class index {k} out of range"
                        )));
                    }
                    fold_cover[k] += 1;
                }
            }
            let partitions_seen = seen_set.iter().all(|&k| fold_cover[k] == 1)
                && fold_cover
                    .iter()
                    .enumerate()
                    .all(|(k, &c)| c == 0 || seen_set.binary_search(&k).is_ok());
            if !partitions_seen {
                return Err(Error::contract("folds must partition the seen set"));
            }
        }
        let mut seen_mask = vec![false; n_classes];
        for &k in &seen_set {
            seen_mask[k] = true;
        }
        Ok(ClassCatalog {
            class_ids,
            attributes,
            seen_set,
            unseen_set,
            seen_mask,
            folds,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Attribute dimension n.
    pub fn n_attrs(&self) -> usize {
        self.attributes.cols()
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn class_id(&self, idx: usize) -> &str {
        &self.class_ids[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.class_ids.iter().position(|c| c == id)
    }

    /// Full C×n attribute matrix, row per class.
    pub fn attributes(&self) -> &Mat {
        &self.attributes
    }

    pub fn attribute_row(&self, class: usize) -> &[f64] {
        self.attributes.row(class)
    }

    pub fn seen_set(&self) -> &[usize] {
        &self.seen_set
    }

    pub fn unseen_set(&self) -> &[usize] {
        &self.unseen_set
    }

    pub fn is_seen(&self, class: usize) -> bool {
        self.seen_mask[class]
    }

    /// Per-class seen flags in catalog row order.
    pub fn seen_mask(&self) -> &[bool] {
        &self.seen_mask
    }

    pub fn folds(&self) -> Option<&[Vec<usize>]> {
        self.folds.as_deref()
    }

    /// N_s×n classifier matrix over seen classes, in seen-set order.
    pub fn seen_classifier(&self) -> Mat {
        let rows: Vec<Vec<f64>> = self
            .seen_set
            .iter()
            .map(|&k| self.attributes.row(k).to_vec())
            .collect();
        Mat::from_rows(&rows)
    }

    /// Position of a seen class inside the seen classifier, if any.
    pub fn seen_position(&self, class: usize) -> Option<usize> {
        self.seen_set.binary_search(&class).ok()
    }

    /// U×n classifier matrix over unseen classes, in unseen-set order.
    pub fn unseen_classifier(&self) -> Mat {
        let rows: Vec<Vec<f64>> = self
            .unseen_set
            .iter()
            .map(|&k| self.attributes.row(k).to_vec())
            .collect();
        Mat::from_rows(&rows)
    }

    /// L2-normalize every attribute row in place. Zero rows are left alone.
    pub fn normalize_attributes(&mut self) {
        for r in 0..self.attributes.rows() {
            let norm = self.attributes.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in self.attributes.row_mut(r) {
                    *v /= norm;
                }
            }
        }
    }
}

/// What a sample set is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    TestSeen,
    TestUnseen,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::TestSeen => "test_seen",
            Role::TestUnseen => "test_unseen",
        }
    }
}

/// Region-feature tensors with class labels.
#[derive(Clone, Debug)]
pub struct SampleSet {
    sample_ids: Vec<String>,
    features: Vec<Mat>,
    labels: Vec<usize>,
    role: Role,
}

impl SampleSet {
    pub fn new(
        sample_ids: Vec<String>,
        features: Vec<Mat>,
        labels: Vec<usize>,
        role: Role,
        catalog: &ClassCatalog,
    ) -> Result<Self> {
        if sample_ids.len() != features.len() || sample_ids.len() != labels.len() {
            return Err(Error::contract("sample ids, features and labels must align"));
        }
        if let Some(first) = features.first() {
            let (regions, dim) = (first.rows(), first.cols());
            if regions == 0 || dim == 0 {
                return Err(Error::contract("feature matrices must be non-empty"));
            }
            if !features.iter().all(|f| f.rows() == regions && f.cols() == dim) {
                return Err(Error::contract("all samples must share the same R and f"));
            }
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= catalog.n_classes() {
                return Err(Error::contract(format!(
                    "sample {} labels unknown class index {label}",
                    sample_ids[i]
                )));
            }
            if role == Role::Train && !catalog.is_seen(label) {
                return Err(Error::contract(format!(
                    "train sample {} labels unseen class {}",
                    sample_ids[i],
                    catalog.class_id(label)
                )));
            }
        }
        Ok(SampleSet {
            sample_ids,
            features,
            labels,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn features(&self, idx: usize) -> &Mat {
        &self.features[idx]
    }

    pub fn label(&self, idx: usize) -> usize {
        self.labels[idx]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Regions per sample (R). Zero for an empty set.
    pub fn regions(&self) -> usize {
        self.features.first().map_or(0, Mat::rows)
    }

    /// Feature dimension (f). Zero for an empty set.
    pub fn feat_dim(&self) -> usize {
        self.features.first().map_or(0, Mat::cols)
    }
}

/// Configuration of the two-dimensional Gaussian toy dataset.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ToyConfig {
    pub seen_centers: Vec<[f64; 2]>,
    pub unseen_centers: Vec<[f64; 2]>,
    /// Isotropic dispersion of each class blob, applied as the Gaussian's
    /// scale parameter. The default 0.1 keeps the blobs cleanly separated.
    pub variance: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seen_centers: vec![[1.0, 1.0], [-1.0, -1.0]],
            unseen_centers: vec![[-1.0, 1.0]],
            variance: 0.1,
            samples_per_class: 200,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variance <= 0.0 || !self.variance.is_finite() {
            return Err(Error::config("toy variance must be positive"));
        }
        if self.seen_centers.is_empty() || self.unseen_centers.is_empty() {
            return Err(Error::config("toy config needs at least one seen and one unseen center"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be positive"));
        }
        Ok(())
    }
}

/// Generated toy dataset. The test samples come back already split into the
/// seen-label and unseen-label shards so every set carries a valid role.
#[derive(Clone, Debug)]
pub struct ToyData {
    pub catalog: ClassCatalog,
    pub train: SampleSet,
    pub test_seen: SampleSet,
    pub test_unseen: SampleSet,
}

/// Generate the Gaussian toy dataset: one class per center, class attribute
/// vector equal to the centroid, features stored as 1×2 region grids.
/// Deterministic given the seed.
pub fn generate_toy(cfg: &ToyConfig) -> Result<ToyData> {
    cfg.validate()?;
    let n_seen = cfg.seen_centers.len();
    let centers: Vec<[f64; 2]> = cfg
        .seen_centers
        .iter()
        .chain(&cfg.unseen_centers)
        .copied()
        .collect();

    let class_ids: Vec<String> = (0..centers.len())
        .map(|k| {
            if k < n_seen {
                format!("seen_{k}")
            } else {
                format!("unseen_{}", k - n_seen)
            }
        })
        .collect();
    let attributes = Mat::from_rows(&centers.iter().map(|c| c.to_vec()).collect::<Vec<_>>());
    let catalog = ClassCatalog::new(
        class_ids,
        attributes,
        (0..n_seen).collect(),
        (n_seen..centers.len()).collect(),
        None,
    )?;

    let sd = cfg.variance;
    let mut rng = Rng::new(cfg.seed);
    let draw = |center: &[f64; 2], rng: &mut Rng| -> Mat {
        Mat::from_vec(
            1,
            2,
            vec![center[0] + sd * rng.normal(), center[1] + sd * rng.normal()],
        )
    };

    let mut train_ids = Vec::new();
    let mut train_feats = Vec::new();
    let mut train_labels = Vec::new();
    for (k, center) in centers.iter().enumerate().take(n_seen) {
        for i in 0..cfg.samples_per_class {
            train_ids.push(format!("toy_train_{}_{i}", catalog.class_id(k)));
            train_feats.push(draw(center, &mut rng));
            train_labels.push(k);
        }
    }

    let mut seen_ids = Vec::new();
    let mut seen_feats = Vec::new();
    let mut seen_labels = Vec::new();
    let mut unseen_ids = Vec::new();
    let mut unseen_feats = Vec::new();
    let mut unseen_labels = Vec::new();
    for (k, center) in centers.iter().enumerate() {
        for i in 0..cfg.samples_per_class {
            let id = format!("toy_test_{}_{i}", catalog.class_id(k));
            let feats = draw(center, &mut rng);
            if k < n_seen {
                seen_ids.push(id);
                seen_feats.push(feats);
                seen_labels.push(k);
            } else {
                unseen_ids.push(id);
                unseen_feats.push(feats);
                unseen_labels.push(k);
            }
        }
    }

    Ok(ToyData {
        train: SampleSet::new(train_ids, train_feats, train_labels, Role::Train, &catalog)?,
        test_seen: SampleSet::new(seen_ids, seen_feats, seen_labels, Role::TestSeen, &catalog)?,
        test_unseen: SampleSet::new(unseen_ids, unseen_feats, unseen_labels, Role::TestUnseen, &catalog)?,
        catalog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_cfg() -> ToyConfig {
        ToyConfig::default()
    }

    #[test]
    fn toy_catalog_matches_centers() {
        let data = generate_toy(&paper_cfg()).unwrap();
        assert_eq!(data.catalog.seen_set(), &[0, 1]);
        assert_eq!(data.catalog.unseen_set(), &[2]);
        assert_eq!(data.catalog.attribute_row(0), &[1.0, 1.0]);
        assert_eq!(data.catalog.attribute_row(1), &[-1.0, -1.0]);
        assert_eq!(data.catalog.attribute_row(2), &[-1.0, 1.0]);
        assert_eq!(data.train.len(), 400);
        assert_eq!(data.test_seen.len(), 400);
        assert_eq!(data.test_unseen.len(), 200);
        assert_eq!(data.train.regions(), 1);
        assert_eq!(data.train.feat_dim(), 2);
    }

    #[test]
    fn degenerate_variance_pins_samples_to_centroids() {
        let cfg = ToyConfig {
            variance: 1e-300,
            samples_per_class: 1,
            ..paper_cfg()
        };
        let data = generate_toy(&cfg).unwrap();
        for i in 0..data.train.len() {
            let label = data.train.label(i);
            assert_eq!(data.train.features(i).row(0), data.catalog.attribute_row(label));
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate_toy(&paper_cfg()).unwrap();
        let b = generate_toy(&paper_cfg()).unwrap();
        for i in 0..a.train.len() {
            assert_eq!(a.train.features(i).data(), b.train.features(i).data());
        }
        for i in 0..a.test_unseen.len() {
            assert_eq!(a.test_unseen.features(i).data(), b.test_unseen.features(i).data());
        }
    }

    #[test]
    fn empirical_means_converge_to_centers() {
        // Tolerance is three standard errors of the mean; seeds are fixed so
        // the check is deterministic.
        for seed in [1u64, 2, 3] {
            let cfg = ToyConfig {
                samples_per_class: 10_000,
                seed,
                ..paper_cfg()
            };
            let data = generate_toy(&cfg).unwrap();
            let tol = 3.0 * (cfg.variance / cfg.samples_per_class as f64).sqrt();
            let mut sums = vec![[0.0f64; 2]; data.catalog.n_classes()];
            let mut counts = vec![0usize; data.catalog.n_classes()];
            for set in [&data.train, &data.test_seen, &data.test_unseen] {
                for i in 0..set.len() {
                    let label = set.label(i);
                    let row = set.features(i).row(0);
                    sums[label][0] += row[0];
                    sums[label][1] += row[1];
                    counts[label] += 1;
                }
            }
            for k in 0..data.catalog.n_classes() {
                let center = data.catalog.attribute_row(k);
                for c in 0..2 {
                    let mean = sums[k][c] / counts[k] as f64;
                    assert!(
                        (mean - center[c]).abs() <= tol,
                        "seed {seed} class {k} coord {c}: mean {mean} vs center {}",
                        center[c]
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = paper_cfg();
        cfg.variance = 0.0;
        assert!(matches!(generate_toy(&cfg), Err(Error::Config(_))));
        let mut cfg = paper_cfg();
        cfg.unseen_centers.clear();
        assert!(matches!(generate_toy(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn catalog_rejects_overlapping_split() {
        let attrs = Mat::from_rows(&[vec![1.0], vec![2.0]]);
        let err = ClassCatalog::new(
            vec!["a".into(), "b".into()],
            attrs,
            vec![0, 1],
            vec![1],
            None,
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn catalog_rejects_bad_folds() {
        let attrs = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let err = ClassCatalog::new(
            vec!["a".into(), "b".into(), "c".into()],
            attrs,
            vec![0, 1],
            vec![2],
            Some(vec![vec![0], vec![0, 1]]),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn train_set_rejects_unseen_labels() {
        let data = generate_toy(&paper_cfg()).unwrap();
        let err = SampleSet::new(
            vec!["x".into()],
            vec![Mat::zeros(1, 2)],
            vec![2],
            Role::Train,
            &data.catalog,
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
