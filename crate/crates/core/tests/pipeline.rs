use flexsvm::cost::{calibrate, reference_designs, Block, CostCoefficients, ReferencePoint, SystemDescriptor};
use flexsvm::dataset::{balance_scale, prepare, PrepareConfig, PreparedDataset, RawDataset};
use flexsvm::explorer::{KernelKind, RealizedClassifier};
use flexsvm::report::{render_table, render_table_from_json, table_rows, ExplorationReport};
use flexsvm::{explore, ExploreConfig, KernelMode};

fn balance(seed: u64) -> PreparedDataset {
    prepare(
        &balance_scale(),
        &PrepareConfig {
            seed,
            ..PrepareConfig::default()
        },
    )
    .unwrap()
}

fn run(data: &PreparedDataset, mode: KernelMode) -> ExplorationReport {
    let cfg = ExploreConfig {
        mode,
        ..ExploreConfig::default()
    };
    let system = explore(data, &cfg).unwrap();
    ExplorationReport::build("Balance", &system, data, &CostCoefficients::default()).unwrap()
}

#[test]
fn shipped_balance_descriptors_match_the_pipeline() {
    let data = balance(0);
    let refs = reference_designs();
    let find = |design: &str| {
        refs.iter()
            .find(|r| r.dataset == "Balance" && r.design == design)
            .unwrap()
            .descriptor
            .clone()
    };
    assert_eq!(run(&data, KernelMode::Linear).descriptor, find("Linear (digital)"));
    assert_eq!(run(&data, KernelMode::Rbf).descriptor.with_digital_rbf(), find("RBF (digital)"));
    assert_eq!(run(&data, KernelMode::Mixed).descriptor, find("Mixed"));
}

#[test]
fn shipped_coefficients_are_the_table_fit() {
    let refs: Vec<ReferencePoint> = reference_designs()
        .into_iter()
        .map(|r| ReferencePoint {
            name: r.design,
            descriptor: r.descriptor,
            area: r.area,
            power: r.power,
        })
        .collect();
    assert_eq!(refs.len(), 9);
    let fit = calibrate(&refs, &CostCoefficients::default(), &Block::ALL).unwrap();
    let shipped = CostCoefficients::default();
    for b in Block::ALL {
        let (a, s) = (fit.coefficients.get(b).unwrap(), shipped.get(b).unwrap());
        assert!((a.area - s.area).abs() <= 1e-9 * s.area.max(1e-12), "{b:?} area");
        assert!((a.power - s.power).abs() <= 1e-9 * s.power.max(1e-12), "{b:?} power");
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let a = run(&balance(3), KernelMode::Mixed).to_json().unwrap();
    let b = run(&balance(3), KernelMode::Mixed).to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn mixed_balance_system_round_trips_and_renders() {
    let data = balance(0);
    let cfg = ExploreConfig::default();
    let system = explore(&data, &cfg).unwrap();
    let back = flexsvm::MixedSvmSystem::from_json(&system.to_json().unwrap()).unwrap();
    for row in &data.test.features {
        assert_eq!(system.predict_multiclass(row).unwrap(), back.predict_multiclass(row).unwrap());
    }
    let report = ExplorationReport::build("Balance", &system, &data, &CostCoefficients::default()).unwrap();
    let json = report.to_json().unwrap();
    assert_eq!(
        render_table_from_json(&json).unwrap(),
        render_table(&table_rows(std::slice::from_ref(&report)))
    );
    assert_eq!(ExplorationReport::from_json(&json).unwrap(), report);
    // Linear classifiers with reduced ±1 weights carry no multipliers.
    let d = SystemDescriptor::from_system(&system);
    assert!(d.linear.iter().all(|l| l.zero_weights + l.pow2_weights == l.dims));
    assert!(report.cost.analog_share.power > 0.9);
}

#[test]
fn two_class_problem_has_one_pair() {
    let raw = balance_scale();
    let keep: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] != 0).collect();
    let two = RawDataset::new(
        keep.iter().map(|&i| raw.features[i].clone()).collect(),
        keep.iter().map(|&i| raw.labels[i] - 1).collect(),
        raw.column_names.clone(),
        raw.class_names[1..].to_vec(),
    )
    .unwrap();
    let data = prepare(&two, &PrepareConfig::default()).unwrap();
    let system = explore(&data, &ExploreConfig::default()).unwrap();
    assert_eq!(system.assignment.selections.len(), 1);
    assert_eq!(system.classifiers.len(), 1);
}

#[test]
fn perfect_linear_pairs_stay_linear() {
    for seed in 0..3 {
        let system = explore(&balance(seed), &ExploreConfig::default()).unwrap();
        for (sel, clf) in system.assignment.selections.iter().zip(&system.classifiers) {
            if sel.acc_linear >= 1.0 {
                assert_eq!(sel.kind, KernelKind::Linear);
            }
            let digital = matches!(clf, RealizedClassifier::Digital { .. });
            assert_eq!(digital, sel.kind == KernelKind::Linear);
        }
    }
}

#[test]
fn forced_modes_fix_the_kernel_map() {
    let data = balance(1);
    assert_eq!(run(&data, KernelMode::Linear).kernel_ratio, "0/3");
    assert_eq!(run(&data, KernelMode::Rbf).kernel_ratio, "3/0");
}
