//! Shared helpers for the criterion benchmarks: bundled-case loading and a
//! nominal (probability-weighted) realization.

use std::path::PathBuf;

use osp_core::casefile::load_case;
use osp_core::model::CaseData;
use osp_core::uncertainty::Realization;

pub fn bundled_case(name: &str) -> CaseData {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(name);
    load_case(&path).expect("bundled case loads")
}

pub fn nominal(case: &CaseData) -> Realization {
    let rho = &case.probabilities;
    let mean = |row: &[f64]| row.iter().zip(rho).map(|(x, p)| x * p).sum();
    Realization {
        pv: case.pv_profile.pv.iter().map(|r| mean(r)).collect(),
        pl: case
            .loads
            .pl
            .iter()
            .map(|bus| bus.iter().map(|r| mean(r)).collect())
            .collect(),
    }
}
