//! Deterministic report emission: fixed column order and fixed 6-decimal
//! float formatting so identical runs produce byte-identical files.
//! Timings are confined to the iteration traces.

use std::path::{Path, PathBuf};

use serde::Serialize;

use osp_core::aro::IterationRecord;
use osp_core::deterministic::InvestmentValues;
use osp_core::model::CaseData;

use crate::CliError;

pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6}")
    }
}

#[derive(Serialize)]
pub struct ReportRow {
    pub formulation: String,
    pub beta_pl: usize,
    pub beta_pv: usize,
    pub objective: f64,
    pub investment_cost: f64,
    pub operational_cost: f64,
    pub pv_capacity: f64,
    pub pv_buses: usize,
    pub bt_capacity: f64,
    pub bt_buses: usize,
    pub currency: String,
    pub power_unit: String,
}

impl ReportRow {
    pub fn new(
        case: &CaseData,
        formulation: &str,
        beta_pl: usize,
        beta_pv: usize,
        inv: &InvestmentValues,
        objective: f64,
    ) -> Self {
        let ci = osp_core::deterministic::investment_cost(case, inv);
        ReportRow {
            formulation: formulation.into(),
            beta_pl,
            beta_pv,
            objective,
            investment_cost: ci,
            operational_cost: objective - ci,
            pv_capacity: inv.gamma_pv.iter().sum(),
            pv_buses: inv.nu_pv.iter().filter(|&&v| v > 0.5).count(),
            bt_capacity: inv.gamma_bt.iter().sum(),
            bt_buses: inv.nu_bt.iter().filter(|&&v| v > 0.5).count(),
            currency: case.currency.clone(),
            power_unit: case.power_unit.clone(),
        }
    }

    pub fn print_summary(&self) {
        println!("formulation:      {}", self.formulation);
        println!("budgets:          beta_pl={} beta_pv={}", self.beta_pl, self.beta_pv);
        println!(
            "objective:        {} {}",
            fmt6(self.objective),
            self.currency
        );
        println!(
            "  investment:     {} {}",
            fmt6(self.investment_cost),
            self.currency
        );
        println!(
            "  operational:    {} {}",
            fmt6(self.operational_cost),
            self.currency
        );
        println!(
            "pv installed:     {} {} at {} bus(es)",
            fmt6(self.pv_capacity),
            self.power_unit,
            self.pv_buses
        );
        println!(
            "bess installed:   {} {}h at {} bus(es)",
            fmt6(self.bt_capacity),
            self.power_unit,
            self.bt_buses
        );
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.formulation,
            self.beta_pl,
            self.beta_pv,
            fmt6(self.objective),
            fmt6(self.investment_cost),
            fmt6(self.operational_cost),
            fmt6(self.pv_capacity),
            self.pv_buses,
            fmt6(self.bt_capacity),
            self.bt_buses,
            self.currency,
            self.power_unit
        )
    }
}

const CSV_HEADER: &str = "formulation,beta_pl,beta_pv,objective,investment_cost,operational_cost,pv_capacity,pv_buses,bt_capacity,bt_buses,currency,power_unit\n";

pub struct Reporter {
    dir: PathBuf,
}

impl Reporter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Reporter {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
    }

    /// Writes `<name>.csv` and `<name>.json` with rounded values in a
    /// fixed order.
    pub fn write_rows(&self, name: &str, rows: &[ReportRow]) -> Result<(), CliError> {
        let mut csv = String::from(CSV_HEADER);
        for row in rows {
            csv.push_str(&row.csv_line());
        }
        self.write_text(&format!("{name}.csv"), &csv)?;

        #[derive(Serialize)]
        struct JsonRow<'a> {
            formulation: &'a str,
            beta_pl: usize,
            beta_pv: usize,
            objective: String,
            investment_cost: String,
            operational_cost: String,
            pv_capacity: String,
            pv_buses: usize,
            bt_capacity: String,
            bt_buses: usize,
            currency: &'a str,
            power_unit: &'a str,
        }
        let json_rows: Vec<JsonRow> = rows
            .iter()
            .map(|r| JsonRow {
                formulation: &r.formulation,
                beta_pl: r.beta_pl,
                beta_pv: r.beta_pv,
                objective: fmt6(r.objective),
                investment_cost: fmt6(r.investment_cost),
                operational_cost: fmt6(r.operational_cost),
                pv_capacity: fmt6(r.pv_capacity),
                pv_buses: r.pv_buses,
                bt_capacity: fmt6(r.bt_capacity),
                bt_buses: r.bt_buses,
                currency: &r.currency,
                power_unit: &r.power_unit,
            })
            .collect();
        let text = serde_json::to_string_pretty(&json_rows)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.write_text(&format!("{name}.json"), &format!("{text}\n"))
    }

    /// Writes one JSON object per Benders iteration; this is the only
    /// artifact that carries timings.
    pub fn write_trace(&self, name: &str, trace: &[IterationRecord]) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Line<'a> {
            iter: usize,
            lb: f64,
            ub: f64,
            mp_time_s: f64,
            dsp_time_s: f64,
            theta: &'a [f64],
            /// Compact fingerprint of the adversary's answer: total demand
            /// and total PV of the extracted worst realization.
            u_star_pl_sum: String,
            u_star_pv_sum: String,
        }
        let mut text = String::new();
        for it in trace {
            let line = Line {
                iter: it.iter,
                lb: it.lb,
                ub: it.ub,
                mp_time_s: it.mp_time,
                dsp_time_s: it.dsp_time,
                theta: &it.theta,
                u_star_pl_sum: fmt6(it.u_star.pl.iter().flatten().sum()),
                u_star_pv_sum: fmt6(it.u_star.pv.iter().sum()),
            };
            text.push_str(
                &serde_json::to_string(&line).map_err(|e| CliError::Validation(e.to_string()))?,
            );
            text.push('\n');
        }
        self.write_text(&format!("{name}.jsonl"), &text)
    }
}
