//! `flexsvm`: prepare a dataset, explore kernel assignments, validate the
//! analog model, and calibrate the cost model.
//!
//! Exit status: 0 on success, 1 when the run completed with warnings (for
//! example a solver fallback or a failed fidelity bound), 2 on usage or I/O
//! errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flexsvm::analog::{product_row_name, validate_analog, DeviceParams, ValidationConfig, ROW_ALPHA, ROW_GAUSSIAN_SELF_TEST, ROW_KERNEL};
use flexsvm::cost::{calibrate, reference_designs, Block, CostCoefficients, ReferencePoint};
use flexsvm::dataset::{balance_scale_csv, load_csv, prepare, CsvOptions, Delimiter, LabelColumn, PrepareConfig, PreparedDataset};
use flexsvm::digital::FixedPointFormat;
use flexsvm::explorer::{explore, ExploreConfig, GammaChoice, KernelMode};
use flexsvm::report::{render_table_from_json, ExplorationReport};
use flexsvm::{Error, TrainConfig};

#[derive(Parser)]
#[command(name = "flexsvm", version, about = "Mixed-kernel, mixed-signal one-vs-one SVM pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, normalize and select features; writes prepared.json and summary.txt.
    Prepare(PrepareArgs),
    /// Select kernels per pair, realize the system, and report accuracy and cost.
    Explore(ExploreArgs),
    /// Fit the ideal kernel and alpha models to synthetic device sweeps.
    ValidateAnalog(ValidateArgs),
    /// Write the Balance Scale dataset as CSV (label in column 0).
    GenerateBalance {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit cost coefficients to reference designs.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DelimiterArg {
    Comma,
    Whitespace,
}

#[derive(Args)]
struct PrepareArgs {
    /// Dataset CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Label column: zero-based index or header name.
    #[arg(long)]
    label: String,
    /// Treat the first row as a header.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value = "comma")]
    delimiter: DelimiterArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    max_features: usize,
    /// Training fraction.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum KernelArg {
    Mixed,
    Linear,
    Rbf,
    /// Run linear, RBF and mixed in turn.
    All,
}

#[derive(Args)]
struct ExploreArgs {
    /// prepared.json written by `prepare`.
    #[arg(long)]
    prepared: PathBuf,
    #[arg(long, value_enum, default_value = "mixed")]
    kernel: KernelArg,
    /// Dataset name used in reports; defaults to the artifact's parent directory name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF width: `scale` or a positive number.
    #[arg(long, default_value = "scale")]
    gamma: String,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_passes: usize,
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 4)]
    input_bits: u32,
    #[arg(long, default_value_t = 8)]
    weight_bits: u32,
    #[command(flatten)]
    device: DeviceArgs,
    /// Cost coefficient JSON; overrides FLEXSVM_COEFFS.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DeviceArgs {
    /// Subthreshold slope factor.
    #[arg(long, default_value_t = 1.5)]
    slope: f64,
    /// Thermal voltage in volts.
    #[arg(long, default_value_t = 0.025_85)]
    thermal_voltage: f64,
    /// Kernel bias current in amps.
    #[arg(long, default_value_t = 10e-9)]
    bias_current: f64,
    /// Relative device current noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

impl DeviceArgs {
    fn params(&self) -> DeviceParams {
        DeviceParams {
            n: self.slope,
            thermal_voltage: self.thermal_voltage,
            bias_current: self.bias_current,
            noise_sigma: self.noise,
            ..DeviceParams::default()
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    device: DeviceArgs,
    /// Dimension count of the chained-product check.
    #[arg(long, default_value_t = 3)]
    dims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Reference design JSON; defaults to the shipped table.
    #[arg(long)]
    references: Option<PathBuf>,
    /// Comma-separated blocks to fit; all blocks when omitted.
    #[arg(long, value_delimiter = ',')]
    free: Vec<String>,
    /// Coefficients holding the values of blocks that are not fitted.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Output coefficient file.
    #[arg(long)]
    out: PathBuf,
}

/// A failure with the exit status it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(2, e.to_string())
    }
}

type CmdResult = Result<Vec<String>, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Explore(a) => cmd_explore(&a),
        Command::ValidateAnalog(a) => cmd_validate(&a),
        Command::GenerateBalance { out } => write(&out, &balance_scale_csv()).map(|_| Vec::new()),
        Command::Calibrate(a) => cmd_calibrate(&a),
    };
    match result {
        Ok(warnings) if warnings.is_empty() => ExitCode::SUCCESS,
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(1)
        }
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure(2, format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure(2, format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(2, format!("cannot read {}: {e}", path.display())))
}

fn cmd_prepare(a: &PrepareArgs) -> CmdResult {
    let label: LabelColumn = a.label.parse().unwrap_or_else(|e| match e {});
    let opts = CsvOptions {
        has_header: a.header,
        delimiter: match a.delimiter {
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Whitespace => Delimiter::Whitespace,
        },
    };
    let raw = load_csv(&a.data, &label, opts)?;
    let cfg = PrepareConfig {
        max_features: a.max_features,
        split: a.split,
        seed: a.seed,
    };
    let prepared = prepare(&raw, &cfg)?;
    write(&a.out.join("prepared.json"), &(prepared.to_json()? + "\n"))?;
    write(&a.out.join("summary.txt"), &summary(&raw.len(), &prepared))?;
    Ok(Vec::new())
}

fn summary(rows: &usize, p: &PreparedDataset) -> String {
    let names: Vec<String> = p
        .selected_columns()
        .iter()
        .map(|&c| p.column_names.get(c).cloned().unwrap_or_else(|| c.to_string()))
        .collect();
    format!(
        "rows: {rows}\nclasses: {}\nclass names: {}\ntrain rows: {}\ntest rows: {}\nselected features ({}): {}\nseed: {}\n",
        p.num_classes,
        p.class_names.join(", "),
        p.train.len(),
        p.test.len(),
        names.len(),
        names.join(", "),
        p.config.seed
    )
}

fn parse_gamma(s: &str) -> Result<GammaChoice, Failure> {
    if s.eq_ignore_ascii_case("scale") {
        return Ok(GammaChoice::Scale);
    }
    s.parse::<f64>()
        .ok()
        .filter(|g| *g > 0.0 && g.is_finite())
        .map(GammaChoice::Fixed)
        .ok_or_else(|| Failure(2, format!("--gamma must be `scale` or a positive number, got {s:?}")))
}

fn cmd_explore(a: &ExploreArgs) -> CmdResult {
    let prepared = PreparedDataset::from_json(&read(&a.prepared)?)?;
    let coeffs = CostCoefficients::resolve(a.coeffs.as_deref())?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.prepared
            .canonicalize()
            .ok()
            .and_then(|p| p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into())
    });
    let base = ExploreConfig {
        train: TrainConfig {
            c: a.c,
            tol: a.tol,
            max_passes: a.max_passes,
            seed: prepared.config.seed,
        },
        gamma: parse_gamma(&a.gamma)?,
        validation_fraction: a.validation_fraction,
        format: FixedPointFormat::new(a.input_bits, a.weight_bits, prepared.num_features()),
        device: a.device.params(),
        ..ExploreConfig::default()
    };
    let modes: Vec<KernelMode> = match a.kernel {
        KernelArg::Mixed => vec![KernelMode::Mixed],
        KernelArg::Linear => vec![KernelMode::Linear],
        KernelArg::Rbf => vec![KernelMode::Rbf],
        KernelArg::All => vec![KernelMode::Linear, KernelMode::Rbf, KernelMode::Mixed],
    };

    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for mode in modes {
        let cfg = ExploreConfig { mode, ..base };
        let system = explore(&prepared, &cfg)?;
        let suffix = if a.kernel == KernelArg::All {
            format!("-{mode}")
        } else {
            String::new()
        };
        write(&a.out.join(format!("system{suffix}.json")), &(system.to_json()? + "\n"))?;
        let mut csv = Vec::new();
        system.encoder.write_csv(&mut csv)?;
        write(&a.out.join("encoder.csv"), &String::from_utf8_lossy(&csv))?;
        warnings.extend(system.warnings.iter().map(|w| format!("{mode}: {w}")));
        reports.push(ExplorationReport::build(&name, &system, &prepared, &coeffs)?);
    }
    let json = if reports.len() == 1 {
        reports[0].to_json()?
    } else {
        serde_json::to_string_pretty(&reports).map_err(|e| Failure(2, e.to_string()))?
    };
    write(&a.out.join("report.json"), &(json.clone() + "\n"))?;
    let table = render_table_from_json(&json)?;
    write(&a.out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(warnings)
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    let cfg = ValidationConfig {
        device: a.device.params(),
        dims: a.dims,
        seed: a.seed,
        ..ValidationConfig::default()
    };
    let report = validate_analog(&cfg)?;
    write(&a.out.join("validation.json"), &(report.to_json()? + "\n"))?;
    write(&a.out.join("validation.txt"), &report.table())?;
    fs::create_dir_all(&a.out).map_err(|e| Failure(2, format!("cannot create {}: {e}", a.out.display())))?;
    report.write_kernel_csv(&a.out.join("kernel_curve.csv"))?;
    report.write_alpha_csv(&a.out.join("alpha_curve.csv"))?;
    print!("{}", report.table());

    let mut warnings = Vec::new();
    let mut check = |name: &str, max_nrmse: f64, min_corr: f64| {
        if let Some(r) = report.row(name) {
            if r.nrmse > max_nrmse || r.corr < min_corr {
                warnings.push(format!(
                    "{name}: nrmse {:.4} / corr {:.4} outside nrmse <= {max_nrmse}, corr >= {min_corr}",
                    r.nrmse, r.corr
                ));
            }
        }
    };
    check(ROW_KERNEL, 0.03, 0.99);
    check(&product_row_name(a.dims), 0.02, 0.99);
    check(ROW_ALPHA, 0.001, 0.99);
    check(ROW_GAUSSIAN_SELF_TEST, 1e-10, 1.0 - 1e-10);
    Ok(warnings)
}

fn cmd_calibrate(a: &CalibrateArgs) -> CmdResult {
    let references: Vec<ReferencePoint> = match &a.references {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?,
        None => reference_designs()
            .into_iter()
            .map(|r| ReferencePoint {
                name: format!("{} {}", r.dataset, r.design),
                descriptor: r.descriptor,
                area: r.area,
                power: r.power,
            })
            .collect(),
    };
    let free: Vec<Block> = if a.free.is_empty() {
        Block::ALL.to_vec()
    } else {
        a.free.iter().map(|s| s.trim().parse()).collect::<Result<_, _>>()?
    };
    let base = match &a.base {
        Some(p) => CostCoefficients::load(p)?,
        None => CostCoefficients::default(),
    };
    let fit = calibrate(&references, &base, &free)?;
    write(&a.out, &(fit.coefficients.to_json()? + "\n"))?;
    println!(
        "{:<28} {:>10} {:>10} {:>8} {:>10} {:>10} {:>8}",
        "reference", "area", "fit", "err", "power", "fit", "err"
    );
    for r in &fit.residuals {
        println!(
            "{:<28} {:>10.4} {:>10.4} {:>7.1}% {:>10.4} {:>10.4} {:>7.1}%",
            r.name,
            r.area_target,
            r.area_fit,
            100.0 * r.area_rel_error(),
            r.power_target,
            r.power_fit,
            100.0 * r.power_rel_error()
        );
    }
    Ok(Vec::new())
}
