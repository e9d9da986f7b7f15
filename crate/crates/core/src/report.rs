//! Exploration reports. The JSON document is the source of truth; the text
//! table is rendered from parsed JSON.

use serde::{Deserialize, Serialize};

use crate::cost::{estimate_descriptor, CostCoefficients, CostReport, SystemDescriptor};
use crate::dataset::PreparedDataset;
use crate::error::Result;
use crate::explorer::{evaluate_system, KernelMode, MixedSvmSystem, PairSelection, SystemMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub dataset: String,
    pub mode: KernelMode,
    pub seed: u64,
    pub num_classes: usize,
    pub selected_features: Vec<String>,
    /// `"<rbf>/<linear>"`.
    pub kernel_ratio: String,
    pub selections: Vec<PairSelection>,
    pub metrics: SystemMetrics,
    /// Block-level summary the cost model priced.
    pub descriptor: SystemDescriptor,
    pub cost: CostReport,
    /// Same system with its RBF classifiers priced as digital datapaths;
    /// present when the system has any RBF classifier.
    pub digital_rbf_cost: Option<CostReport>,
    pub warnings: Vec<String>,
}

impl ExplorationReport {
    pub fn build(dataset: &str, system: &MixedSvmSystem, data: &PreparedDataset, coeffs: &CostCoefficients) -> Result<Self> {
        let metrics = evaluate_system(system, data)?;
        let descriptor = SystemDescriptor::from_system(system);
        let cost = estimate_descriptor(&descriptor, coeffs)?;
        let digital_rbf_cost = (system.assignment.rbf_count() > 0)
            .then(|| estimate_descriptor(&descriptor.with_digital_rbf(), coeffs))
            .transpose()?;
        let names = &data.column_names;
        Ok(Self {
            dataset: dataset.to_string(),
            mode: system.mode,
            seed: data.config.seed,
            num_classes: system.num_classes,
            selected_features: data
                .selected_columns()
                .iter()
                .map(|&c| names.get(c).cloned().unwrap_or_else(|| c.to_string()))
                .collect(),
            kernel_ratio: system.assignment.ratio(),
            selections: system.assignment.selections.clone(),
            metrics,
            descriptor,
            cost,
            digital_rbf_cost,
            warnings: system.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub design: String,
    pub accuracy_pct: f64,
    pub area_mm2: f64,
    pub power_mw: f64,
    pub ratio: String,
}

/// Rows of the comparison table. An all-RBF report contributes both its
/// analog realization and the digital RBF cost entry.
pub fn table_rows(reports: &[ExplorationReport]) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for r in reports {
        let acc = 100.0 * r.metrics.accuracy;
        let row = |design: &str, cost: &CostReport| TableRow {
            dataset: r.dataset.clone(),
            design: design.to_string(),
            accuracy_pct: acc,
            area_mm2: cost.total.area,
            power_mw: cost.total.power,
            ratio: r.kernel_ratio.clone(),
        };
        match r.mode {
            KernelMode::Linear => rows.push(row("Linear", &r.cost)),
            KernelMode::Mixed => rows.push(row("Mixed", &r.cost)),
            KernelMode::Rbf => {
                if let Some(d) = &r.digital_rbf_cost {
                    rows.push(row("RBF (digital)", d));
                }
                rows.push(row("RBF (analog)", &r.cost));
            }
        }
    }
    rows
}

/// Fixed-width text table.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut s = format!(
        "{:<12} {:<14} {:>12} {:>12} {:>12} {:>10}\n",
        "Dataset", "Design", "Accuracy(%)", "Area(mm2)", "Power(mW)", "RBF/lin"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:<14} {:>12.1} {:>12.4} {:>12.4} {:>10}\n",
            r.dataset, r.design, r.accuracy_pct, r.area_mm2, r.power_mw, r.ratio
        ));
    }
    s
}

/// Renders the table from serialized reports (a single report object or an
/// array of them).
pub fn render_table_from_json(json: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let reports: Vec<ExplorationReport> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(render_table(&table_rows(&reports)))
}

/// Table rows as CSV.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("dataset,design,accuracy_pct,area_mm2,power_mw,rbf_linear\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dataset, r.design, r.accuracy_pct, r.area_mm2, r.power_mw, r.ratio
        ));
    }
    s
}
