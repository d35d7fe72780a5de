//! Browser demo: supervision heatmaps, the warmup learning-rate curve and a
//! supervision-loss explorer. The `#[wasm_bindgen]` exports are thin
//! wrappers over plain functions that return JSON strings.

use bidaf_sa::data::{synth_generate, Instance, SynthConfig};
use bidaf_sa::objective::{supervision_loss, target_mass};
use bidaf_sa::supervision::{build, NarrativeConfig, SupervisionKind, SupervisionMatrix};
use bidaf_sa::tensor::{Graph, Tensor};
use bidaf_sa::train::noam_lr;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// One synthetic corpus line as JSON.
pub fn synth_example_json(seed: u64) -> String {
    let inst = synth_generate(1, seed, &SynthConfig::default()).remove(0);
    serde_json::to_string(&inst).expect("instances serialize")
}

/// Target matrix of `kind` for a corpus line.
pub fn supervision_matrix_json(line: &str, kind: &str) -> Result<String, String> {
    let inst: Instance = serde_json::from_str(line).map_err(|e| e.to_string())?;
    inst.validate()?;
    let ann = inst.annotation.as_ref().ok_or("the record has no annotation")?;
    let kind: SupervisionKind = kind.parse()?;
    let m = build(kind, ann, &NarrativeConfig::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "tokens": inst.context,
        "kind": kind.as_str(),
        "n": m.n,
        "k": m.k(),
        "rows": m.rows,
    })
    .to_string())
}

/// `points` evenly spaced samples of the warmup schedule over `steps`.
pub fn noam_curve_points(d_model: usize, warmup: usize, steps: usize, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 || steps < points {
        return Err("need 2 <= points <= steps".into());
    }
    (0..points)
        .map(|i| {
            let step = 1 + i * (steps - 1) / (points - 1);
            noam_lr(d_model, warmup, step).map_err(|e| e.to_string())
        })
        .collect()
}

/// Attention that interpolates between uniform rows and the targets:
/// row `i` is `softmax(sharpness * S[i])`.
fn sharpened(targets: &SupervisionMatrix, sharpness: f64) -> Tensor {
    let n = targets.n;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n)
            .map(|j| if targets.contains(i, j) { sharpness } else { 0.0 }.exp())
            .collect();
        let z: f64 = row.iter().sum();
        for j in 0..n {
            data[i * n + j] = row[j] / z;
        }
    }
    Tensor::new(&[n, n], data).expect("square")
}

/// Loss, per-row target mass and attention for an `n`x`n` 0/1 target grid
/// given row-major in `cells`.
pub fn explore_loss_json(n: usize, cells: &[u8], sharpness: f64, weighted: bool) -> Result<String, String> {
    if n == 0 || cells.len() != n * n {
        return Err(format!("expected {} cells, got {}", n * n, cells.len()));
    }
    let rows = (0..n)
        .map(|i| (0..n).filter(|&j| cells[i * n + j] != 0).collect())
        .collect();
    let targets = SupervisionMatrix {
        kind: SupervisionKind::CorefAll,
        n,
        rows,
    };
    let attention = sharpened(&targets, sharpness);
    let mut g = Graph::new();
    let a = g.constant(attention.clone());
    let loss = supervision_loss(&mut g, a, &targets, weighted)
        .map_err(|e| e.to_string())?
        .map(|v| g.value(v).item());
    let grid: Vec<Vec<f64>> = (0..n).map(|i| attention.row(i).to_vec()).collect();
    Ok(json!({
        "loss": loss,
        "k": targets.k(),
        "row_mass": target_mass(&attention, &targets),
        "attention": grid,
    })
    .to_string())
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub fn synth_example(seed: u32) -> String {
    synth_example_json(seed as u64)
}

#[wasm_bindgen]
pub fn supervision_matrix(line: &str, kind: &str) -> Result<String, JsValue> {
    supervision_matrix_json(line, kind).map_err(js)
}

#[wasm_bindgen]
pub fn noam_curve(d_model: u32, warmup: u32, steps: u32, points: u32) -> Result<Vec<f64>, JsValue> {
    noam_curve_points(d_model as usize, warmup as usize, steps as usize, points as usize).map_err(js)
}

#[wasm_bindgen]
pub fn explore_loss(n: u32, cells: &[u8], sharpness: f64, weighted: bool) -> Result<String, JsValue> {
    explore_loss_json(n as usize, cells, sharpness, weighted).map_err(js)
}
