//! Per-pair kernel selection and assembly of the mixed-signal system.
//!
//! Every one-vs-one pair is trained with both kernels on a fold of its
//! training rows and scored on the held-out remainder. RBF is kept only
//! when it is strictly more accurate. The chosen kernel is then retrained
//! on all of the pair's rows and realized: linear models as fixed-point
//! datapaths, RBF models as analog classifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::{build_analog, calibrate_device, AnalogRbfClassifier, Calibration, DeviceParams, SweepConfig, VoltageMap};
use crate::dataset::{stratified_split, PreparedDataset};
use crate::digital::{
    build_encoder, ovo_pairs, quantize_inputs, quantize_linear, EncoderTable, FixedPointFormat, QuantizedLinearClassifier,
};
use crate::error::{Error, Result};
use crate::svm::{decision_bit, scale_gamma, train_binary, BinarySvm, Kernel, TrainConfig};

/// Which kernels the explorer may assign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// RBF where it is strictly more accurate on validation, else linear.
    #[default]
    Mixed,
    Linear,
    Rbf,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixed" => Ok(Self::Mixed),
            "linear" => Ok(Self::Linear),
            "rbf" => Ok(Self::Rbf),
            other => Err(Error::InvalidParameter(format!("unknown kernel mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mixed => "mixed",
            Self::Linear => "linear",
            Self::Rbf => "rbf",
        })
    }
}

/// RBF width choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum GammaChoice {
    /// `1 / (D · Var(X))` over the pair's training rows.
    #[default]
    Scale,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub train: TrainConfig,
    pub gamma: GammaChoice,
    pub mode: KernelMode,
    /// Share of each pair's training rows held out for kernel selection.
    pub validation_fraction: f64,
    pub format: FixedPointFormat,
    pub device: DeviceParams,
    pub sweep: SweepConfig,
    /// Feature-to-voltage map; derived from the device when absent.
    pub vmap: Option<VoltageMap>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            gamma: GammaChoice::Scale,
            mode: KernelMode::Mixed,
            validation_fraction: 0.2,
            format: FixedPointFormat::default(),
            device: DeviceParams::default(),
            sweep: SweepConfig::default(),
            vmap: None,
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.format.validate()?;
        self.device.validate()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} not in (0, 1)",
                self.validation_fraction
            )));
        }
        if let GammaChoice::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma must be > 0, got {g}")));
            }
        }
        Ok(())
    }

    pub fn voltage_map(&self) -> VoltageMap {
        self.vmap.unwrap_or_else(|| VoltageMap::for_device(&self.device))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

/// Selection record of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub pair: (usize, usize),
    pub kind: KernelKind,
    /// Validation accuracy of the linear candidate.
    pub acc_linear: f64,
    /// Validation accuracy of the RBF candidate; `None` if it failed to train.
    pub acc_rbf: Option<f64>,
    pub gamma: f64,
    /// Rows the accuracies were measured on.
    pub validation_rows: usize,
}

/// Kernel map over all pairs, in pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelAssignment {
    pub selections: Vec<PairSelection>,
}

impl KernelAssignment {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.selections.iter().map(|s| s.pair).collect()
    }

    pub fn kinds(&self) -> Vec<KernelKind> {
        self.selections.iter().map(|s| s.kind).collect()
    }

    pub fn rbf_count(&self) -> usize {
        self.selections.iter().filter(|s| s.kind == KernelKind::Rbf).count()
    }

    pub fn linear_count(&self) -> usize {
        self.selections.len() - self.rbf_count()
    }

    /// `"<rbf>/<linear>"`.
    pub fn ratio(&self) -> String {
        format!("{}/{}", self.rbf_count(), self.linear_count())
    }
}

/// A binary classifier realized in its hardware domain, with its float
/// source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "lowercase")]
pub enum RealizedClassifier {
    Digital {
        model: BinarySvm,
        quantized: QuantizedLinearClassifier,
    },
    Analog {
        model: BinarySvm,
        analog: AnalogRbfClassifier,
    },
}

impl RealizedClassifier {
    pub fn model(&self) -> &BinarySvm {
        match self {
            Self::Digital { model, .. } | Self::Analog { model, .. } => model,
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Self::Digital { .. } => KernelKind::Linear,
            Self::Analog { .. } => KernelKind::Rbf,
        }
    }

    /// Output bit of the realized datapath.
    pub fn predict_realized(&self, x: &[f64]) -> Result<u8> {
        match self {
            Self::Digital { quantized, .. } => quantized.predict_fixed(&quantize_inputs(x, &quantized.format)),
            Self::Analog { analog, .. } => analog.classify_features(x),
        }
    }

    pub fn predict_float(&self, x: &[f64]) -> Result<u8> {
        Ok(decision_bit(self.model().decision_value(x)?))
    }
}

/// Assembled one-vs-one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSvmSystem {
    pub mode: KernelMode,
    pub num_classes: usize,
    pub feature_mask: Vec<bool>,
    pub assignment: KernelAssignment,
    /// One per pair, in pair order.
    pub classifiers: Vec<RealizedClassifier>,
    pub encoder: EncoderTable,
    pub calibration: Calibration,
    pub config: ExploreConfig,
    /// Degradations met during exploration (fallbacks, non-convergence).
    pub warnings: Vec<String>,
}

impl MixedSvmSystem {
    fn bits<F>(&self, x: &[f64], f: F) -> Result<Vec<u8>>
    where
        F: Fn(&RealizedClassifier, &[f64]) -> Result<u8>,
    {
        self.classifiers.iter().map(|c| f(c, x)).collect()
    }

    /// Class from the realized datapaths.
    pub fn predict_multiclass(&self, x: &[f64]) -> Result<usize> {
        self.encoder.lookup(&self.bits(x, RealizedClassifier::predict_realized)?)
    }

    /// Class from the float models through the same encoder.
    pub fn predict_float(&self, x: &[f64]) -> Result<usize> {
        self.encoder.lookup(&self.bits(x, RealizedClassifier::predict_float)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict_multiclass(system: &MixedSvmSystem, x: &[f64]) -> Result<usize> {
    system.predict_multiclass(x)
}

/// Training-row indices of the pair's two classes.
pub fn pair_subset(labels: &[usize], pair: (usize, usize)) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == pair.0 || labels[i] == pair.1).collect()
}

fn signed_labels(labels: &[usize], rows: &[usize], pair: (usize, usize)) -> Vec<i8> {
    rows.iter().map(|&i| if labels[i] == pair.1 { 1 } else { -1 }).collect()
}

fn accuracy(model: &BinarySvm, x: &[Vec<f64>], y: &[i8]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let hits = x
        .iter()
        .zip(y)
        .filter(|(xi, &yi)| decision_bit(model.decision_value_unchecked(xi)) == u8::from(yi > 0))
        .count();
    hits as f64 / x.len() as f64
}

struct PairOutcome {
    selection: PairSelection,
    classifier: RealizedClassifier,
    warnings: Vec<String>,
}

fn explore_pair(
    data: &PreparedDataset,
    cfg: &ExploreConfig,
    calibration: &Calibration,
    pair_index: usize,
    pair: (usize, usize),
) -> Result<PairOutcome> {
    let train = &data.train;
    let rows = pair_subset(&train.labels, pair);
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| train.features[i].clone()).collect();
    let y = signed_labels(&train.labels, &rows, pair);
    let mut warnings = Vec::new();

    let gamma = match cfg.gamma {
        GammaChoice::Scale => scale_gamma(&x),
        GammaChoice::Fixed(g) => g,
    };
    let rbf = Kernel::rbf(gamma)?;

    // Selection fold: stratified on the pair labels.
    let local: Vec<usize> = y.iter().map(|&v| usize::from(v > 0)).collect();
    let fold_seed = cfg.train.seed ^ (pair_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let (fit_idx, val_idx) = match stratified_split(&local, 2, 1.0 - cfg.validation_fraction, fold_seed) {
        Ok(split) => split,
        Err(_) => {
            warnings.push(format!(
                "pair {pair:?}: too few rows for a validation fold, selecting on training accuracy"
            ));
            ((0..x.len()).collect(), (0..x.len()).collect())
        }
    };
    let pick =
        |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<i8>) { (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect()) };
    let (xf, yf) = pick(&fit_idx);
    let (xv, yv) = pick(&val_idx);

    let lin_val = train_binary(&xf, &yf, Kernel::Linear, &cfg.train, pair)?;
    let acc_linear = accuracy(&lin_val, &xv, &yv);
    let acc_rbf = match train_binary(&xf, &yf, rbf, &cfg.train, pair) {
        Ok(m) => Some(accuracy(&m, &xv, &yv)),
        Err(e) => {
            warnings.push(format!("pair {pair:?}: RBF candidate failed to train ({e})"));
            None
        }
    };

    let mut kind = match cfg.mode {
        KernelMode::Linear => KernelKind::Linear,
        KernelMode::Rbf => KernelKind::Rbf,
        KernelMode::Mixed => match acc_rbf {
            Some(a) if a > acc_linear => KernelKind::Rbf,
            _ => KernelKind::Linear,
        },
    };

    let mut realized = None;
    if kind == KernelKind::Rbf {
        let built = train_binary(&x, &y, rbf, &cfg.train, pair).and_then(|model| {
            let analog = build_analog(
                &model,
                &calibration.kernel,
                &calibration.alpha,
                &cfg.voltage_map(),
                cfg.device.bias_current,
            )?;
            Ok((model, analog))
        });
        match built {
            Ok((model, analog)) => {
                if !model.converged {
                    warnings.push(format!("pair {pair:?}: RBF solver hit its iteration budget"));
                }
                let window = 2.0 * cfg.device.slope_voltage();
                if analog.max_stage_input > window {
                    log::info!(
                        "pair {pair:?}: scaled stage input reaches {:.4} V, beyond the {:.4} V Gaussian window",
                        analog.max_stage_input,
                        window
                    );
                }
                realized = Some(RealizedClassifier::Analog { model, analog });
            }
            Err(e) => {
                warnings.push(format!("pair {pair:?}: RBF realization failed ({e}), falling back to linear"));
                kind = KernelKind::Linear;
            }
        }
    }
    let classifier = match realized {
        Some(c) => c,
        None => {
            let model = train_binary(&x, &y, Kernel::Linear, &cfg.train, pair)?;
            if !model.converged {
                warnings.push(format!("pair {pair:?}: linear solver hit its iteration budget"));
            }
            let quantized = quantize_linear(&model, &cfg.format)?;
            RealizedClassifier::Digital { model, quantized }
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(PairOutcome {
        selection: PairSelection {
            pair,
            kind,
            acc_linear,
            acc_rbf,
            gamma,
            validation_rows: xv.len(),
        },
        classifier,
        warnings,
    })
}

/// Trains, selects and realizes every pair, then builds the encoder.
pub fn explore(data: &PreparedDataset, cfg: &ExploreConfig) -> Result<MixedSvmSystem> {
    cfg.validate()?;
    let k = data.num_classes;
    if k < 2 {
        return Err(Error::TooFewClasses(k));
    }
    let encoder = build_encoder(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let calibration = calibrate_device(&cfg.device, &cfg.sweep, &mut rng)?;

    let pairs = ovo_pairs(k);
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &pair)| explore_pair(data, cfg, &calibration, p, pair))
        .collect::<Result<_>>()?;

    let mut selections = Vec::with_capacity(outcomes.len());
    let mut classifiers = Vec::with_capacity(outcomes.len());
    let mut warnings = Vec::new();
    for o in outcomes {
        selections.push(o.selection);
        classifiers.push(o.classifier);
        warnings.extend(o.warnings);
    }

    Ok(MixedSvmSystem {
        mode: cfg.mode,
        num_classes: k,
        feature_mask: data.feature_mask.clone(),
        assignment: KernelAssignment { selections },
        classifiers,
        encoder,
        calibration,
        config: *cfg,
        warnings,
    })
}

/// Test-set behavior of one realized pair classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub pair: (usize, usize),
    pub kind: KernelKind,
    /// Float accuracy on test rows of the pair's two classes.
    pub float_accuracy: f64,
    /// Realized accuracy on the same rows.
    pub realized_accuracy: f64,
    pub pair_rows: usize,
    /// Share of all test rows where realized and float bits agree.
    pub agreement: f64,
    pub disagreements: usize,
    /// Disagreements at a float decision magnitude above the analytic
    /// bound of the realization; should always be 0.
    pub unexplained_disagreements: usize,
    /// Largest analytic bound met on the test rows (fixed-point error
    /// bound or analog alpha-clamp margin).
    pub max_bound: f64,
}

/// Test-set metrics of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub test_rows: usize,
    /// Realized end-to-end accuracy.
    pub accuracy: f64,
    /// Accuracy of the float models through the same encoder.
    pub float_accuracy: f64,
    pub per_pair: Vec<PairMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Pooled agreement of analog classifiers; `None` without any.
    pub analog_agreement: Option<f64>,
    /// Pooled agreement of fixed-point classifiers; `None` without any.
    pub digital_agreement: Option<f64>,
}

/// Evaluates a system on the test split of `data`.
pub fn evaluate_system(system: &MixedSvmSystem, data: &PreparedDataset) -> Result<SystemMetrics> {
    if system.feature_mask != data.feature_mask || system.num_classes != data.num_classes {
        return Err(Error::FeatureMaskMismatch);
    }
    let test = &data.test;
    let k = system.num_classes;
    let n = test.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut hits = 0usize;
    let mut float_hits = 0usize;
    for (x, &label) in test.features.iter().zip(&test.labels) {
        let pred = system.predict_multiclass(x)?;
        confusion[label][pred] += 1;
        hits += usize::from(pred == label);
        float_hits += usize::from(system.predict_float(x)? == label);
    }

    let mut per_pair = Vec::with_capacity(system.classifiers.len());
    for c in &system.classifiers {
        let model = c.model();
        let pair = model.class_pair;
        let (mut pair_rows, mut float_ok, mut real_ok) = (0usize, 0usize, 0usize);
        let (mut disagreements, mut unexplained) = (0usize, 0usize);
        let mut max_bound = 0.0f64;
        for (x, &label) in test.features.iter().zip(&test.labels) {
            let f = model.decision_value(x)?;
            let fb = decision_bit(f);
            let rb = c.predict_realized(x)?;
            let bound = match c {
                RealizedClassifier::Digital { quantized, .. } => quantized.error_bound(x),
                RealizedClassifier::Analog { analog, .. } => analog.margin + 1e-9 * (1.0 + f.abs()),
            };
            max_bound = max_bound.max(bound);
            if fb != rb {
                disagreements += 1;
                if f.abs() > bound {
                    unexplained += 1;
                }
            }
            if label == pair.0 || label == pair.1 {
                pair_rows += 1;
                let truth = u8::from(label == pair.1);
                float_ok += usize::from(fb == truth);
                real_ok += usize::from(rb == truth);
            }
        }
        let share = |v: usize, d: usize| if d == 0 { 0.0 } else { v as f64 / d as f64 };
        per_pair.push(PairMetrics {
            pair,
            kind: c.kind(),
            float_accuracy: share(float_ok, pair_rows),
            realized_accuracy: share(real_ok, pair_rows),
            pair_rows,
            agreement: share(n - disagreements, n),
            disagreements,
            unexplained_disagreements: unexplained,
            max_bound,
        });
    }

    let pooled = |kind: KernelKind| {
        let sel: Vec<&PairMetrics> = per_pair.iter().filter(|p| p.kind == kind).collect();
        (!sel.is_empty() && n > 0).then(|| {
            let dis: usize = sel.iter().map(|p| p.disagreements).sum();
            1.0 - dis as f64 / (sel.len() * n) as f64
        })
    };
    let frac = |v: usize| if n == 0 { 0.0 } else { v as f64 / n as f64 };
    Ok(SystemMetrics {
        test_rows: n,
        accuracy: frac(hits),
        float_accuracy: frac(float_hits),
        analog_agreement: pooled(KernelKind::Rbf),
        digital_agreement: pooled(KernelKind::Linear),
        per_pair,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{prepare, PrepareConfig, RawDataset};

    fn blobs(k: usize, per_class: usize, spread: f64) -> RawDataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            for i in 0..per_class {
                let t = i as f64 / per_class as f64;
                let jitter = ((i * 7919 + c * 104_729) % 1000) as f64 / 1000.0 - 0.5;
                features.push(vec![c as f64 * 3.0 + spread * jitter, (c % 2) as f64 * 2.0 + spread * (t - 0.5)]);
                labels.push(c);
            }
        }
        RawDataset::new(
            features,
            labels,
            vec!["a".into(), "b".into()],
            (0..k).map(|c| c.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn separable_two_class_is_all_linear() {
        let data = prepare(&blobs(2, 40, 0.5), &PrepareConfig::default()).unwrap();
        let sys = explore(&data, &ExploreConfig::default()).unwrap();
        assert_eq!(sys.assignment.selections.len(), 1);
        assert_eq!(sys.assignment.kinds(), vec![KernelKind::Linear]);
        assert_eq!(sys.assignment.selections[0].acc_linear, 1.0);
        let m = evaluate_system(&sys, &data).unwrap();
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn forced_modes_cover_all_pairs() {
        let data = prepare(&blobs(4, 30, 2.0), &PrepareConfig::default()).unwrap();
        for (mode, kind) in [(KernelMode::Linear, KernelKind::Linear), (KernelMode::Rbf, KernelKind::Rbf)] {
            let cfg = ExploreConfig {
                mode,
                ..Default::default()
            };
            let sys = explore(&data, &cfg).unwrap();
            assert_eq!(sys.classifiers.len(), 6);
            assert!(sys.assignment.kinds().iter().all(|&k| k == kind));
            assert!(sys.classifiers.iter().all(|c| c.kind() == kind));
            assert_eq!(sys.assignment.pairs(), ovo_pairs(4));
        }
    }

    #[test]
    fn exploration_is_deterministic() {
        let data = prepare(&blobs(3, 30, 3.0), &PrepareConfig::default()).unwrap();
        let a = explore(&data, &ExploreConfig::default()).unwrap().to_json().unwrap();
        let b = explore(&data, &ExploreConfig::default()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn system_round_trips_through_json() {
        let data = prepare(&blobs(3, 30, 3.0), &PrepareConfig::default()).unwrap();
        let sys = explore(
            &data,
            &ExploreConfig {
                mode: KernelMode::Rbf,
                ..Default::default()
            },
        )
        .unwrap();
        let back = MixedSvmSystem::from_json(&sys.to_json().unwrap()).unwrap();
        for x in &data.test.features {
            assert_eq!(back.predict_multiclass(x).unwrap(), sys.predict_multiclass(x).unwrap());
        }
    }

    #[test]
    fn pair_coverage() {
        let labels = vec![0, 1, 2, 2, 1, 0, 3, 3, 1];
        let k = 4;
        let mut touched = vec![0usize; labels.len()];
        for pair in ovo_pairs(k) {
            for i in pair_subset(&labels, pair) {
                touched[i] += 1;
            }
        }
        assert!(touched.iter().all(|&t| t == k - 1));
    }

    #[test]
    fn mask_mismatch_rejected() {
        let data = prepare(&blobs(2, 40, 0.5), &PrepareConfig::default()).unwrap();
        let mut sys = explore(&data, &ExploreConfig::default()).unwrap();
        sys.feature_mask[0] = !sys.feature_mask[0];
        assert!(matches!(evaluate_system(&sys, &data), Err(Error::FeatureMaskMismatch)));
    }

    #[test]
    fn constant_class_zero_system() {
        let data = prepare(&blobs(3, 30, 3.0), &PrepareConfig::default()).unwrap();
        let mut sys = explore(
            &data,
            &ExploreConfig {
                mode: KernelMode::Linear,
                ..Default::default()
            },
        )
        .unwrap();
        for c in &mut sys.classifiers {
            if let RealizedClassifier::Digital { quantized, .. } = c {
                quantized.weights.iter_mut().for_each(|w| *w = 0);
                quantized.bias = -1;
            }
        }
        let m = evaluate_system(&sys, &data).unwrap();
        let zeros = data.test.labels.iter().filter(|&&l| l == 0).count();
        assert!((m.accuracy - zeros as f64 / data.test.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("MIXED".parse::<KernelMode>().unwrap(), KernelMode::Mixed);
        assert!("poly".parse::<KernelMode>().is_err());
    }
}
