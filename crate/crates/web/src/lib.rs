//! Bindings for the static demo page in `www/`. Each export returns JSON;
//! the `*_json` functions hold the logic so they can be tested natively.

use crowdguard_core::defense::{ablation_table, prune_metric, HlbimMatrix};
use crowdguard_core::nn::Metric;
use crowdguard_core::stats::hypergeometric_majority_prob;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CurvePoint {
    validators: u64,
    probability: f64,
}

/// Majority-risk curve for validator counts `1..=max_validators`.
pub fn hypergeom_curve_json(population: u64, pmr: f64, max_validators: u64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&pmr) {
        return Err(format!("pmr {pmr} outside [0, 1]"));
    }
    let malicious = (pmr * population as f64).round() as u64;
    let points = (1..=max_validators.min(population))
        .map(|n| {
            hypergeometric_majority_prob(population, malicious, n)
                .map(|probability| CurvePoint { validators: n, probability })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

/// TPR/TNR of every aggregation rule on the five vote scenarios.
pub fn votes_ablation_json() -> Result<String, String> {
    let rows = ablation_table().map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Iterative pruning on a matrix given as a JSON array of rows.
pub fn prune_json(rows_json: &str, validator: usize) -> Result<String, String> {
    let values: Vec<Vec<f64>> = serde_json::from_str(rows_json).map_err(|e| e.to_string())?;
    let width = values.first().map_or(0, Vec::len);
    if width == 0 || values.iter().any(|r| r.len() != width) {
        return Err("rows must be non-empty and of equal length".into());
    }
    if validator >= values.len() {
        return Err(format!("validator {validator} out of {} rows", values.len()));
    }
    let matrix = HlbimMatrix {
        metric: Metric::Cosine,
        validator_index: validator,
        columns: (0..width).map(|c| (0, c)).collect(),
        values,
    };
    let trace = prune_metric(&matrix).map_err(|e| e.to_string())?;
    serde_json::to_string(&trace).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn hypergeom_curve(population: u64, pmr: f64, max_validators: u64) -> Result<String, JsError> {
    hypergeom_curve_json(population, pmr, max_validators).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn votes_ablation() -> Result<String, JsError> {
    votes_ablation_json().map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn prune(rows_json: &str, validator: usize) -> Result<String, JsError> {
    prune_json(rows_json, validator).map_err(|e| JsError::new(&e))
}
