//! Additive area/power estimate of a realized system.
//!
//! Every block type carries an (area, power) coefficient that is multiplied
//! by its instance count. The numbers are an estimation model fitted to
//! reported totals, not the output of synthesis.

mod calibrate;

pub use calibrate::{calibrate, nnls, CalibrationFit, ReferencePoint, Residual};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digital::reduce_weights;
use crate::error::{Error, Result};
use crate::explorer::{MixedSvmSystem, RealizedClassifier};

/// Environment variable naming a coefficient file.
pub const COEFFS_ENV: &str = "FLEXSVM_COEFFS";

const DEFAULT_COEFFICIENTS: &str = include_str!("../../data/default_coefficients.json");
const REFERENCE_DESIGNS: &str = include_str!("../../data/reference_designs.json");

/// Hardware block types of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// One hardwired constant multiplier of a linear classifier.
    DigitalMac,
    /// One adder of a linear classifier's summation tree.
    AdderTree,
    /// Encoder logic, per pairwise outcome bit.
    Encoder,
    /// Input converter, per input.
    Adc,
    /// One kernel cell of an analog chain.
    AnalogKernelStage,
    /// One alpha multiplier.
    AnalogAlphaMult,
    /// Signed rails and comparator of one analog classifier.
    AnalogRailsComparator,
    /// Per support vector and input: distance datapath of a digital RBF.
    DigitalRbfDistance,
    /// Per support vector: exponential and coefficient multiply of a
    /// digital RBF.
    DigitalRbfExp,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::DigitalMac,
        Block::AdderTree,
        Block::Encoder,
        Block::Adc,
        Block::AnalogKernelStage,
        Block::AnalogAlphaMult,
        Block::AnalogRailsComparator,
        Block::DigitalRbfDistance,
        Block::DigitalRbfExp,
    ];

    pub fn is_analog(self) -> bool {
        matches!(
            self,
            Block::AnalogKernelStage | Block::AnalogAlphaMult | Block::AnalogRailsComparator
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::DigitalMac => "digital_mac",
            Block::AdderTree => "adder_tree",
            Block::Encoder => "encoder",
            Block::Adc => "adc",
            Block::AnalogKernelStage => "analog_kernel_stage",
            Block::AnalogAlphaMult => "analog_alpha_mult",
            Block::AnalogRailsComparator => "analog_rails_comparator",
            Block::DigitalRbfDistance => "digital_rbf_distance",
            Block::DigitalRbfExp => "digital_rbf_exp",
        }
    }
}

impl std::str::FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown cost block {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockCost {
    /// mm²
    pub area: f64,
    /// mW
    pub power: f64,
}

impl std::ops::Add for BlockCost {
    type Output = BlockCost;

    fn add(self, o: BlockCost) -> BlockCost {
        BlockCost {
            area: self.area + o.area,
            power: self.power + o.power,
        }
    }
}

impl std::ops::AddAssign for BlockCost {
    fn add_assign(&mut self, o: BlockCost) {
        *self = *self + o;
    }
}

impl BlockCost {
    fn scaled(self, k: f64) -> BlockCost {
        BlockCost {
            area: self.area * k,
            power: self.power * k,
        }
    }
}

/// Per-block coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    /// Fraction of a multiplier's cost saved when its weight is zero or a
    /// signed power of two.
    pub cheap_weight_discount: f64,
    pub blocks: BTreeMap<Block, BlockCost>,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self::from_json(DEFAULT_COEFFICIENTS).expect("shipped coefficients are valid")
    }
}

impl CostCoefficients {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The file named by `path`, else by `FLEXSVM_COEFFS`, else the
    /// shipped defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            return Self::load(p);
        }
        match std::env::var_os(COEFFS_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cheap_weight_discount) {
            return Err(Error::InvalidParameter(format!(
                "cheap weight discount {} not in [0, 1]",
                self.cheap_weight_discount
            )));
        }
        for (b, c) in &self.blocks {
            if !(c.area >= 0.0 && c.power >= 0.0 && c.area.is_finite() && c.power.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient of {} must be finite and >= 0",
                    b.name()
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, block: Block) -> Result<BlockCost> {
        self.blocks
            .get(&block)
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(block.name().into()))
    }
}

/// Weight statistics of one linear classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearDescriptor {
    pub dims: usize,
    pub zero_weights: usize,
    /// Nonzero weights that are a signed power of two.
    pub pow2_weights: usize,
}

impl LinearDescriptor {
    /// Counts zero and power-of-two weights after dividing out the common
    /// factor of the vector.
    pub fn from_weights(weights: &[i32]) -> Self {
        let weights = reduce_weights(weights);
        Self {
            dims: weights.len(),
            zero_weights: weights.iter().filter(|&&w| w == 0).count(),
            pow2_weights: weights.iter().filter(|&&w| w != 0 && w.unsigned_abs().is_power_of_two()).count(),
        }
    }

    fn nonzero(&self) -> usize {
        self.dims - self.zero_weights
    }
}

/// Size of one RBF classifier: `m` support vectors over `dims` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbfDescriptor {
    pub support_vectors: usize,
    pub dims: usize,
}

/// Everything the cost model needs to know about a system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub num_classes: usize,
    pub dims: usize,
    pub linear: Vec<LinearDescriptor>,
    pub analog_rbf: Vec<RbfDescriptor>,
    pub digital_rbf: Vec<RbfDescriptor>,
}

impl SystemDescriptor {
    /// Descriptor of the realized system.
    pub fn from_system(system: &MixedSvmSystem) -> Self {
        let mut d = Self {
            num_classes: system.num_classes,
            dims: system.feature_mask.iter().filter(|&&m| m).count(),
            linear: Vec::new(),
            analog_rbf: Vec::new(),
            digital_rbf: Vec::new(),
        };
        for c in &system.classifiers {
            match c {
                RealizedClassifier::Digital { quantized, .. } => d.linear.push(LinearDescriptor::from_weights(&quantized.weights)),
                RealizedClassifier::Analog { analog, .. } => d.analog_rbf.push(RbfDescriptor {
                    support_vectors: analog.num_support_vectors(),
                    dims: analog.dims(),
                }),
            }
        }
        d
    }

    /// The same system with every analog RBF classifier built digitally.
    pub fn with_digital_rbf(&self) -> Self {
        let mut d = self.clone();
        d.digital_rbf.append(&mut d.analog_rbf);
        d
    }

    pub fn num_pairs(&self) -> usize {
        self.num_classes * self.num_classes.saturating_sub(1) / 2
    }

    pub fn num_classifiers(&self) -> usize {
        self.linear.len() + self.analog_rbf.len() + self.digital_rbf.len()
    }

    fn needs_adc(&self) -> bool {
        !self.linear.is_empty() || !self.digital_rbf.is_empty()
    }

    /// Instance count of every block, in [`Block::ALL`] order.
    pub fn block_counts(&self, cheap_discount: f64) -> [f64; 9] {
        let mut counts = [0.0; 9];
        let mut add = |b: Block, v: f64| counts[Block::ALL.iter().position(|&x| x == b).unwrap()] += v;
        for l in &self.linear {
            for (b, v) in linear_counts(l, cheap_discount) {
                add(b, v);
            }
        }
        for r in &self.analog_rbf {
            for (b, v) in analog_counts(r) {
                add(b, v);
            }
        }
        for r in &self.digital_rbf {
            for (b, v) in digital_rbf_counts(r) {
                add(b, v);
            }
        }
        if self.num_classifiers() > 0 {
            add(Block::Encoder, self.num_pairs() as f64);
        }
        if self.needs_adc() {
            add(Block::Adc, self.dims as f64);
        }
        counts
    }
}

fn linear_counts(l: &LinearDescriptor, discount: f64) -> Vec<(Block, f64)> {
    let cheap = (l.zero_weights + l.pow2_weights) as f64;
    let macs = l.dims as f64 - discount * cheap;
    // One adder per nonzero product; the last one adds the bias.
    vec![(Block::DigitalMac, macs), (Block::AdderTree, l.nonzero() as f64)]
}

fn analog_counts(r: &RbfDescriptor) -> Vec<(Block, f64)> {
    let m = r.support_vectors as f64;
    vec![
        (Block::AnalogKernelStage, m * r.dims as f64),
        (Block::AnalogAlphaMult, m),
        (Block::AnalogRailsComparator, 1.0),
    ]
}

fn digital_rbf_counts(r: &RbfDescriptor) -> Vec<(Block, f64)> {
    let m = r.support_vectors as f64;
    vec![(Block::DigitalRbfDistance, m * r.dims as f64), (Block::DigitalRbfExp, m)]
}

fn price(counts: &[(Block, f64)], coeffs: &CostCoefficients) -> Result<BlockCost> {
    let mut total = BlockCost::default();
    for &(b, n) in counts {
        if n != 0.0 {
            total += coeffs.get(b)?.scaled(n);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostDomain {
    DigitalLinear,
    AnalogRbf,
    DigitalRbf,
}

/// Cost of one classifier, including its share of the input converters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCost {
    pub index: usize,
    pub domain: CostDomain,
    pub cost: BlockCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: BlockCost,
    /// Encoder, counted once.
    pub shared: BlockCost,
    pub per_classifier: Vec<ClassifierCost>,
    pub analog: BlockCost,
    pub digital: BlockCost,
    /// Analog fraction of area and power; 0 when the total is 0.
    pub analog_share: BlockCost,
    pub digital_share: BlockCost,
}

/// Prices a descriptor. The converter cost is split evenly over the
/// classifiers that read digital inputs.
pub fn estimate_descriptor(desc: &SystemDescriptor, coeffs: &CostCoefficients) -> Result<CostReport> {
    coeffs.validate()?;
    let digital_readers = desc.linear.len() + desc.digital_rbf.len();
    let adc_share = if digital_readers > 0 {
        coeffs.get(Block::Adc)?.scaled(desc.dims as f64 / digital_readers as f64)
    } else {
        BlockCost::default()
    };

    let mut per_classifier = Vec::with_capacity(desc.num_classifiers());
    for l in &desc.linear {
        per_classifier.push((
            CostDomain::DigitalLinear,
            price(&linear_counts(l, coeffs.cheap_weight_discount), coeffs)? + adc_share,
        ));
    }
    for r in &desc.analog_rbf {
        per_classifier.push((CostDomain::AnalogRbf, price(&analog_counts(r), coeffs)?));
    }
    for r in &desc.digital_rbf {
        per_classifier.push((CostDomain::DigitalRbf, price(&digital_rbf_counts(r), coeffs)? + adc_share));
    }
    let shared = if per_classifier.is_empty() {
        BlockCost::default()
    } else {
        coeffs.get(Block::Encoder)?.scaled(desc.num_pairs() as f64)
    };

    let mut total = shared;
    let mut analog = BlockCost::default();
    for (domain, c) in &per_classifier {
        total += *c;
        if *domain == CostDomain::AnalogRbf {
            analog += *c;
        }
    }
    let digital = BlockCost {
        area: total.area - analog.area,
        power: total.power - analog.power,
    };
    let frac = |part: f64, whole: f64| if whole > 0.0 { part / whole } else { 0.0 };
    let analog_share = BlockCost {
        area: frac(analog.area, total.area),
        power: frac(analog.power, total.power),
    };
    let digital_share = BlockCost {
        area: frac(digital.area, total.area),
        power: frac(digital.power, total.power),
    };
    Ok(CostReport {
        total,
        shared,
        per_classifier: per_classifier
            .into_iter()
            .enumerate()
            .map(|(index, (domain, cost))| ClassifierCost { index, domain, cost })
            .collect(),
        analog,
        digital,
        analog_share,
        digital_share,
    })
}

/// Prices a realized system.
pub fn estimate(system: &MixedSvmSystem, coeffs: &CostCoefficients) -> Result<CostReport> {
    estimate_descriptor(&SystemDescriptor::from_system(system), coeffs)
}

/// Prices the system with every RBF classifier built as a digital RBF
/// datapath; a cost entry only, there is no simulated digital RBF.
pub fn estimate_digital_rbf(system: &MixedSvmSystem, coeffs: &CostCoefficients) -> Result<CostReport> {
    estimate_descriptor(&SystemDescriptor::from_system(system).with_digital_rbf(), coeffs)
}

/// Analog and digital cost of a single RBF classifier of the given size.
pub fn rbf_classifier_costs(r: &RbfDescriptor, coeffs: &CostCoefficients) -> Result<(BlockCost, BlockCost)> {
    Ok((price(&analog_counts(r), coeffs)?, price(&digital_rbf_counts(r), coeffs)?))
}

/// A published design point used for calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDesign {
    pub dataset: String,
    pub design: String,
    /// Reported accuracy in percent.
    pub accuracy: f64,
    pub area: f64,
    pub power: f64,
    pub descriptor: SystemDescriptor,
    /// How the descriptor was obtained.
    pub provenance: String,
}

/// Shipped reference design points.
pub fn reference_designs() -> Vec<ReferenceDesign> {
    serde_json::from_str(REFERENCE_DESIGNS).expect("shipped reference designs are valid")
}

/// CSV of a cost report: one row per classifier, then the shared row and
/// the total.
pub fn report_csv(report: &CostReport) -> String {
    let mut s = String::from("item,domain,area_mm2,power_mw\n");
    for c in &report.per_classifier {
        let domain = match c.domain {
            CostDomain::DigitalLinear => "digital_linear",
            CostDomain::AnalogRbf => "analog_rbf",
            CostDomain::DigitalRbf => "digital_rbf",
        };
        s.push_str(&format!("classifier_{},{},{},{}\n", c.index, domain, c.cost.area, c.cost.power));
    }
    s.push_str(&format!("encoder,digital,{},{}\n", report.shared.area, report.shared.power));
    s.push_str(&format!("total,,{},{}\n", report.total.area, report.total.power));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_coeffs() -> CostCoefficients {
        CostCoefficients {
            cheap_weight_discount: 0.5,
            blocks: Block::ALL.iter().map(|&b| (b, BlockCost { area: 1.0, power: 2.0 })).collect(),
        }
    }

    fn mixed_desc() -> SystemDescriptor {
        SystemDescriptor {
            num_classes: 3,
            dims: 4,
            linear: vec![
                LinearDescriptor {
                    dims: 4,
                    zero_weights: 1,
                    pow2_weights: 1,
                },
                LinearDescriptor {
                    dims: 4,
                    zero_weights: 0,
                    pow2_weights: 0,
                },
            ],
            analog_rbf: vec![RbfDescriptor {
                support_vectors: 10,
                dims: 4,
            }],
            digital_rbf: vec![],
        }
    }

    #[test]
    fn empty_system_costs_nothing() {
        let d = SystemDescriptor {
            num_classes: 3,
            dims: 4,
            linear: vec![],
            analog_rbf: vec![],
            digital_rbf: vec![],
        };
        let r = estimate_descriptor(&d, &unit_coeffs()).unwrap();
        assert_eq!(r.total, BlockCost::default());
        assert_eq!(r.analog_share, BlockCost::default());
        assert_eq!(r.digital_share, BlockCost::default());
    }

    #[test]
    fn hand_counted_mixed_system() {
        let r = estimate_descriptor(&mixed_desc(), &unit_coeffs()).unwrap();
        // linear 1: macs 4 - 0.5*2 = 3, adders 3; linear 2: 4 + 4;
        // analog: 40 + 10 + 1; encoder 3; adc 4.
        let expected_area = 3.0 + 3.0 + 8.0 + 51.0 + 3.0 + 4.0;
        assert!((r.total.area - expected_area).abs() < 1e-12);
        assert!((r.total.power - 2.0 * expected_area).abs() < 1e-12);
        assert!((r.analog.area - 51.0).abs() < 1e-12);
        assert!((r.analog_share.area + r.digital_share.area - 1.0).abs() < 1e-12);
        let sum: f64 = r.per_classifier.iter().map(|c| c.cost.area).sum::<f64>() + r.shared.area;
        assert!((sum - r.total.area).abs() < 1e-12);
    }

    #[test]
    fn block_counts_match_pricing() {
        let d = mixed_desc();
        let coeffs = unit_coeffs();
        let counts = d.block_counts(coeffs.cheap_weight_discount);
        let r = estimate_descriptor(&d, &coeffs).unwrap();
        assert!((counts.iter().sum::<f64>() - r.total.area).abs() < 1e-12);
    }

    #[test]
    fn missing_coefficient_reported() {
        let mut c = unit_coeffs();
        c.blocks.remove(&Block::AnalogAlphaMult);
        assert!(matches!(estimate_descriptor(&mixed_desc(), &c), Err(Error::MissingCoefficient(_))));
    }

    #[test]
    fn digital_rbf_swap() {
        let d = mixed_desc().with_digital_rbf();
        assert!(d.analog_rbf.is_empty());
        assert_eq!(d.digital_rbf.len(), 1);
        let r = estimate_descriptor(&d, &unit_coeffs()).unwrap();
        assert_eq!(r.analog.area, 0.0);
    }

    #[test]
    fn shipped_files_parse() {
        let c = CostCoefficients::default();
        assert!(Block::ALL.iter().all(|b| c.blocks.contains_key(b)));
        assert_eq!(reference_designs().len(), 9);
    }

    #[test]
    fn block_names_round_trip() {
        for b in Block::ALL {
            assert_eq!(b.name().parse::<Block>().unwrap(), b);
            assert_eq!(serde_json::to_string(&b).unwrap(), format!("\"{}\"", b.name()));
        }
    }

    #[test]
    fn invalid_coefficients_rejected() {
        let mut c = unit_coeffs();
        c.blocks.insert(Block::Adc, BlockCost { area: -1.0, power: 0.0 });
        assert!(c.validate().is_err());
        let mut c = unit_coeffs();
        c.cheap_weight_discount = 1.5;
        assert!(c.validate().is_err());
    }
}
