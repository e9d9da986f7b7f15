//! Dataset ingestion and the preparation pipeline: stratified train/test
//! split, min-max normalization fitted on training rows, and ANOVA-F
//! feature selection.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labeled samples as read from disk, with labels relabeled to `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub column_names: Vec<String>,
    /// Original label token of each class id.
    pub class_names: Vec<String>,
}

impl RawDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, column_names: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: labels.len(),
            });
        }
        let arity = column_names.len();
        if arity == 0 {
            return Err(Error::NoFeatures);
        }
        for (row, f) in features.iter().enumerate() {
            if f.len() != arity {
                return Err(Error::RaggedRow {
                    row,
                    found: f.len(),
                    expected: arity,
                });
            }
        }
        let k = class_names.len();
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidParameter(format!("label {bad} outside 0..{k}")));
        }
        Ok(Self {
            features,
            labels,
            column_names,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_features(&self) -> usize {
        self.column_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Name(n) => write!(f, "{n:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Comma,
    /// Runs of spaces/tabs, as in several UCI `.dat`/`.txt` files.
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    pub delimiter: Delimiter,
}

pub fn load_csv(path: &Path, label: &LabelColumn, opts: CsvOptions) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label, opts)
}

/// Parses delimited text. Columns with any non-numeric cell are treated as
/// categorical and dropped; label tokens are relabeled in order of first
/// appearance.
pub fn read_csv<R: Read>(reader: R, label: &LabelColumn, opts: CsvOptions) -> Result<RawDataset> {
    let mut records = read_records(reader, opts.delimiter)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = records[0].len();
    let header: Vec<String> = if opts.has_header {
        records.remove(0)
    } else {
        (0..width).map(|i| format!("c{i}")).collect()
    };
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (row, r) in records.iter().enumerate() {
        if r.len() != width {
            return Err(Error::RaggedRow {
                row,
                found: r.len(),
                expected: width,
            });
        }
    }

    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Name(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::MissingLabelColumn(label.to_string()))?,
        _ => return Err(Error::MissingLabelColumn(label.to_string())),
    };

    let numeric_cols: Vec<usize> = (0..width)
        .filter(|&c| c != label_idx)
        .filter(|&c| {
            let numeric = records.iter().all(|r| r[c].parse::<f64>().is_ok());
            if !numeric {
                log::info!("dropping categorical column {:?}", header[c]);
            }
            numeric
        })
        .collect();
    if numeric_cols.is_empty() {
        return Err(Error::NoFeatures);
    }

    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut labels = Vec::with_capacity(records.len());
    let mut features = Vec::with_capacity(records.len());
    for (row, r) in records.iter().enumerate() {
        let token = r[label_idx].as_str();
        if token.is_empty() {
            return Err(Error::EmptyLabel { row });
        }
        let id = *class_ids.entry(token.to_string()).or_insert_with(|| {
            class_names.push(token.to_string());
            class_names.len() - 1
        });
        labels.push(id);
        // Parse cannot fail: numeric_cols was filtered on exactly this.
        features.push(numeric_cols.iter().map(|&c| r[c].parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    let column_names = numeric_cols.iter().map(|&c| header[c].clone()).collect();
    RawDataset::new(features, labels, column_names, class_names)
}

fn read_records<R: Read>(mut reader: R, delimiter: Delimiter) -> Result<Vec<Vec<String>>> {
    match delimiter {
        Delimiter::Comma => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let mut out = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                out.push(rec.iter().map(str::to_string).collect());
            }
            Ok(out)
        }
        Delimiter::Whitespace => {
            let mut text = String::new();
            reader.read_to_string(&mut text).map_err(|e| Error::io("<input>", e))?;
            Ok(text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
                .filter(|r| !r.is_empty())
                .collect())
        }
    }
}

/// Settings of [`prepare`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub max_features: usize,
    /// Fraction of samples assigned to training.
    pub split: f64,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            max_features: 5,
            split: 0.7,
            seed: 0,
        }
    }
}

/// Per-feature min-max range fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(
            MinMax {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |acc, v| MinMax {
                min: acc.min.min(v),
                max: acc.max.max(v),
            },
        )
    }

    /// Maps into `[0, 1]`, clipping values outside the fitted range.
    /// A constant feature maps to 0.
    pub fn apply(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            ((v - self.min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Row indices into the raw dataset.
    pub indices: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub config: PrepareConfig,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub column_names: Vec<String>,
    /// One entry per raw column; `true` where the column was selected.
    pub feature_mask: Vec<bool>,
    /// ANOVA F-score per raw column, computed on normalized training rows.
    pub feature_scores: Vec<f64>,
    /// Normalization range per raw column.
    pub normalization: Vec<MinMax>,
    pub train: Split,
    pub test: Split,
}

impl PreparedDataset {
    pub fn num_features(&self) -> usize {
        self.feature_mask.iter().filter(|&&m| m).count()
    }

    pub fn selected_columns(&self) -> Vec<usize> {
        self.feature_mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
    }

    /// Normalizes and projects a raw feature row the same way test rows were.
    pub fn transform(&self, raw_row: &[f64]) -> Result<Vec<f64>> {
        if raw_row.len() != self.feature_mask.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_mask.len(),
                found: raw_row.len(),
            });
        }
        Ok(self
            .selected_columns()
            .into_iter()
            .map(|c| self.normalization[c].apply(raw_row[c]))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Splits, normalizes and selects features. Deterministic for a fixed seed.
pub fn prepare(raw: &RawDataset, cfg: &PrepareConfig) -> Result<PreparedDataset> {
    if cfg.max_features == 0 {
        return Err(Error::InvalidParameter("max_features must be >= 1".into()));
    }
    if !(cfg.split > 0.0 && cfg.split < 1.0) {
        return Err(Error::InvalidParameter(format!("split fraction {} not in (0, 1)", cfg.split)));
    }
    let k = raw.num_classes();
    let d = raw.num_features();

    let (train_idx, test_idx) = stratified_split(&raw.labels, k, cfg.split, cfg.seed)?;

    let normalization: Vec<MinMax> = (0..d).map(|c| MinMax::fit(train_idx.iter().map(|&i| raw.features[i][c]))).collect();

    let train_labels: Vec<usize> = train_idx.iter().map(|&i| raw.labels[i]).collect();
    let feature_scores: Vec<f64> = (0..d)
        .map(|c| {
            let column: Vec<f64> = train_idx.iter().map(|&i| normalization[c].apply(raw.features[i][c])).collect();
            anova_f_score(&column, &train_labels, k)
        })
        .collect();

    let keep = d.min(cfg.max_features);
    let mut order: Vec<usize> = (0..d).collect();
    // Highest score first; ties keep the lower column index.
    order.sort_by(|&a, &b| {
        feature_scores[b]
            .partial_cmp(&feature_scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut feature_mask = vec![false; d];
    for &c in &order[..keep] {
        feature_mask[c] = true;
    }
    let selected: Vec<usize> = (0..d).filter(|&c| feature_mask[c]).collect();

    let project = |idx: &[usize]| Split {
        features: idx
            .iter()
            .map(|&i| selected.iter().map(|&c| normalization[c].apply(raw.features[i][c])).collect())
            .collect(),
        labels: idx.iter().map(|&i| raw.labels[i]).collect(),
        indices: idx.to_vec(),
    };

    Ok(PreparedDataset {
        config: *cfg,
        num_classes: k,
        class_names: raw.class_names.clone(),
        column_names: raw.column_names.clone(),
        train: project(&train_idx),
        test: project(&test_idx),
        feature_mask,
        feature_scores,
        normalization,
    })
}

/// Per-class shuffled split. Train counts per class are allotted by the
/// largest-remainder rule so the overall train size is `round(split * n)`
/// and every class is within one sample of its exact share.
pub fn stratified_split(labels: &[usize], num_classes: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall { class, count: rows.len() });
        }
    }

    let quotas: Vec<f64> = by_class.iter().map(|r| r.len() as f64 * split).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let target = (labels.len() as f64 * split).round() as usize;
    let mut remainder_order: Vec<usize> = (0..num_classes).collect();
    remainder_order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(counts.iter().sum());
    for &c in remainder_order.iter().cycle().take(num_classes * 2) {
        if missing == 0 {
            break;
        }
        if (counts[c] as f64) < quotas[c] {
            counts[c] += 1;
            missing -= 1;
        }
    }
    for (c, rows) in by_class.iter().enumerate() {
        counts[c] = counts[c].clamp(1, rows.len() - 1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..counts[c]]);
        test.extend_from_slice(&rows[counts[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// One-way ANOVA F statistic of a single feature against class labels.
/// A feature with no spread at all scores 0; one with zero within-class
/// spread but distinct class means scores `f64::MAX`.
pub fn anova_f_score(values: &[f64], labels: &[usize], num_classes: usize) -> f64 {
    let n = values.len();
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (&v, &l) in values.iter().zip(labels) {
        sums[l] += v;
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 || n <= present {
        return 0.0;
    }
    let grand = values.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let ss_between: f64 = means.iter().zip(&counts).map(|(&m, &c)| c as f64 * (m - grand).powi(2)).sum();
    let ss_within: f64 = values.iter().zip(labels).map(|(&v, &l)| (v - means[l]).powi(2)).sum();
    let df_between = (present - 1) as f64;
    let df_within = (n - present) as f64;
    if ss_within <= f64::EPSILON * ss_between.max(1.0) {
        return if ss_between > 0.0 { f64::MAX } else { 0.0 };
    }
    (ss_between / df_between) / (ss_within / df_within)
}

/// The Balance Scale data: every (left weight, left distance, right weight,
/// right distance) in `1..=5`, labeled by which side the torque tips.
/// Rows and columns follow the ordering of the UCI distribution file.
pub fn balance_scale_csv() -> String {
    let mut out = String::with_capacity(625 * 10);
    for lw in 1..=5u32 {
        for ld in 1..=5u32 {
            for rw in 1..=5u32 {
                for rd in 1..=5u32 {
                    let (l, r) = (lw * ld, rw * rd);
                    let class = match l.cmp(&r) {
                        std::cmp::Ordering::Greater => 'L',
                        std::cmp::Ordering::Equal => 'B',
                        std::cmp::Ordering::Less => 'R',
                    };
                    out.push_str(&format!("{class},{lw},{ld},{rw},{rd}\n"));
                }
            }
        }
    }
    out
}

pub fn balance_scale() -> RawDataset {
    let mut raw = read_csv(balance_scale_csv().as_bytes(), &LabelColumn::Index(0), CsvOptions::default())
        .expect("generated Balance Scale data is well formed");
    raw.column_names = ["left_weight", "left_distance", "right_weight", "right_distance"]
        .map(String::from)
        .to_vec();
    raw
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> CsvOptions {
        CsvOptions::default()
    }

    #[test]
    fn minimal_two_class_file() {
        let raw = read_csv("0.5,A\n1.5,B\n".as_bytes(), &LabelColumn::Index(1), opts()).unwrap();
        assert_eq!(raw.num_classes(), 2);
        assert_eq!(raw.num_features(), 1);
        assert_eq!(raw.labels, vec![0, 1]);
        assert_eq!(raw.class_names, vec!["A", "B"]);
    }

    #[test]
    fn text_column_is_dropped() {
        let text = "id,x,y,class\nfoo,1,2,a\nbar,3,4,b\nbaz,5,6,a\n";
        let raw = read_csv(
            text.as_bytes(),
            &LabelColumn::Name("class".into()),
            CsvOptions {
                has_header: true,
                ..opts()
            },
        )
        .unwrap();
        assert_eq!(raw.column_names, vec!["x", "y"]);
        assert_eq!(raw.features[2], vec![5.0, 6.0]);
    }

    #[test]
    fn labels_relabel_in_first_appearance_order() {
        let raw = read_csv("1,z\n2,a\n3,z\n4,m\n".as_bytes(), &LabelColumn::Index(1), opts()).unwrap();
        assert_eq!(raw.labels, vec![0, 1, 0, 2]);
        assert_eq!(raw.class_names, vec!["z", "a", "m"]);
    }

    #[test]
    fn whitespace_delimited() {
        let text = "1.0\t2.0  1\n3.0 4.0\t\t2\n";
        let raw = read_csv(
            text.as_bytes(),
            &LabelColumn::Index(2),
            CsvOptions {
                delimiter: Delimiter::Whitespace,
                ..opts()
            },
        )
        .unwrap();
        assert_eq!(raw.features, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            read_csv("".as_bytes(), &LabelColumn::Index(0), opts()),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            read_csv("1,a\n2,a\n".as_bytes(), &LabelColumn::Index(1), opts()),
            Err(Error::TooFewClasses(1))
        ));
        assert!(matches!(
            read_csv("1,a\n2,b\n".as_bytes(), &LabelColumn::Index(5), opts()),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(
            read_csv("1,a\n2,\n".as_bytes(), &LabelColumn::Index(1), opts()),
            Err(Error::EmptyLabel { row: 1 })
        ));
        assert!(matches!(
            read_csv("1,a\n2,3,b\n".as_bytes(), &LabelColumn::Index(1), opts()),
            Err(Error::RaggedRow { row: 1, .. })
        ));
        let missing = load_csv(Path::new("/nonexistent/x.csv"), &LabelColumn::Index(0), opts());
        assert!(matches!(missing, Err(Error::Io { .. })));
    }

    #[test]
    fn balance_scale_matches_uci_counts() {
        let raw = balance_scale();
        assert_eq!(raw.len(), 625);
        assert_eq!(raw.num_features(), 4);
        assert_eq!(raw.num_classes(), 3);
        // The UCI file opens with a balanced row, then two right-tipping rows.
        assert_eq!(raw.class_names, vec!["B", "R", "L"]);
        let count = |c| raw.labels.iter().filter(|&&l| l == c).count();
        assert_eq!((count(0), count(1), count(2)), (49, 288, 288));
    }

    #[test]
    fn clipping_uses_training_range() {
        let mm = MinMax { min: 2.0, max: 10.0 };
        assert_eq!(mm.apply(14.0), 1.0);
        assert_eq!(mm.apply(-3.0), 0.0);
        assert_eq!(mm.apply(6.0), 0.5);
        assert_eq!(MinMax { min: 3.0, max: 3.0 }.apply(3.0), 0.0);
    }

    #[test]
    fn small_dataset_keeps_every_feature() {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64, (i * i) as f64]).collect();
        let labels = (0..20).map(|i| i % 2).collect();
        let raw = RawDataset::new(
            features,
            labels,
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let p = prepare(&raw, &PrepareConfig::default()).unwrap();
        assert_eq!(p.feature_mask, vec![true, true, true]);
        assert_eq!(p.train.len(), 14);
        assert_eq!(p.test.len(), 6);
    }

    #[test]
    fn class_too_small_rejected() {
        let raw = RawDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 0, 1],
            vec!["a".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        assert!(matches!(
            prepare(&raw, &PrepareConfig::default()),
            Err(Error::ClassTooSmall { class: 1, count: 1 })
        ));
    }

    #[test]
    fn invalid_prepare_config() {
        let raw = balance_scale();
        for cfg in [
            PrepareConfig {
                max_features: 0,
                ..Default::default()
            },
            PrepareConfig {
                split: 1.0,
                ..Default::default()
            },
            PrepareConfig {
                split: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(prepare(&raw, &cfg), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn anova_scores() {
        // Perfectly separating feature with no within-class spread.
        assert_eq!(anova_f_score(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1], 2), f64::MAX);
        // Constant feature.
        assert_eq!(anova_f_score(&[0.3; 4], &[0, 0, 1, 1], 2), 0.0);
        // Hand-computed: groups {0, 2} and {1, 3}: SSB = 1, SSW = 4, F = (1/1)/(4/2) = 0.5.
        let f = anova_f_score(&[0.0, 2.0, 1.0, 3.0], &[0, 0, 1, 1], 2);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_kept_only_to_fill_quota() {
        let features: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![1.0, (i % 2) as f64 + 0.01 * i as f64, (i % 7) as f64])
            .collect();
        let labels = (0..30).map(|i| i % 2).collect();
        let raw = RawDataset::new(
            features,
            labels,
            vec!["const".into(), "good".into(), "noise".into()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let two = prepare(
            &raw,
            &PrepareConfig {
                max_features: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(two.feature_mask, vec![false, true, true]);
        let three = prepare(
            &raw,
            &PrepareConfig {
                max_features: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(three.feature_mask, vec![true, true, true]);
        assert_eq!(three.feature_scores[0], 0.0);
    }
}
