//! Browser bindings: the challenge score, the INT8 quantize/dequantize
//! staircase for a calibration range, and color-probe classification of a
//! solid-color frame in real or INT8 arithmetic.
//!
//! The plain functions hold the logic so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use std::cell::OnceCell;

use maiq_core::dataset::{CategoryRegistry, CAMERA_FRAME};
use maiq_core::graph::{
    build_preset, install_color_probe, probe_signature_space, quantize_model, PresetId,
};
use maiq_core::quant::params_from_range;
use maiq_core::scoreboard::{final_score, topk, ScoringConfig};
use maiq_core::{ModelGraph, Result, Tensor};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub fn score(top1_pct: f64, top3_pct: f64, runtime_ms: f64, log2c: f64) -> Result<f64> {
    final_score(top1_pct, top3_pct, runtime_ms, &ScoringConfig { log2c })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantCurve {
    pub scale: f64,
    pub zero_point: i32,
    /// `dequantize(quantize(x))` for each requested `x`.
    pub reconstructed: Vec<f64>,
}

pub fn quant_curve(rmin: f64, rmax: f64, xs: &[f64]) -> Result<QuantCurve> {
    let q = params_from_range(rmin, rmax)?;
    Ok(QuantCurve {
        scale: q.scale(0),
        zero_point: q.zero_point(0),
        reconstructed: xs
            .iter()
            .map(|&x| q.dequantize(q.quantize(x, 0) as i32, 0))
            .collect(),
    })
}

fn solid_frame(rgb: [u8; 3]) -> Tensor {
    let px = (0..CAMERA_FRAME.h * CAMERA_FRAME.w)
        .flat_map(|_| rgb.map(f32::from))
        .collect();
    Tensor::from_f32(CAMERA_FRAME, px).expect("frame shape")
}

/// The color-probe network in real and INT8 form.
pub struct ProbeModels {
    pub real: ModelGraph,
    pub quantized: ModelGraph,
}

impl ProbeModels {
    pub fn build() -> Result<Self> {
        let mut real = build_preset(PresetId::Tiny, 0)?;
        let sigs = probe_signature_space();
        install_color_probe(&mut real, &sigs)?;
        let quantized = quantize_model(&real, sigs.iter().map(|&s| solid_frame(s)))?;
        Ok(ProbeModels { real, quantized })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub label: String,
    pub probability: f64,
}

pub fn classify(models: &ProbeModels, rgb: [u8; 3], int8: bool) -> Result<Vec<Prediction>> {
    let model = if int8 {
        &models.quantized
    } else {
        &models.real
    };
    let probs = model.infer(&solid_frame(rgb))?;
    Ok(topk(&probs, 3)
        .into_iter()
        .map(|k| Prediction {
            label: model.labels()[k].clone(),
            probability: probs[k],
        })
        .collect())
}

thread_local! {
    static MODELS: OnceCell<ProbeModels> = const { OnceCell::new() };
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = finalScore)]
pub fn final_score_js(
    top1_pct: f64,
    top3_pct: f64,
    runtime_ms: f64,
    log2c: f64,
) -> std::result::Result<f64, JsError> {
    score(top1_pct, top3_pct, runtime_ms, log2c).map_err(js_err)
}

/// JSON `{scale, zero_point, reconstructed}`.
#[wasm_bindgen(js_name = quantCurve)]
pub fn quant_curve_js(rmin: f64, rmax: f64, xs: Vec<f64>) -> std::result::Result<String, JsError> {
    let c = quant_curve(rmin, rmax, &xs).map_err(js_err)?;
    serde_json::to_string(&c).map_err(js_err)
}

/// JSON list of the top three `{label, probability}` for a solid color.
#[wasm_bindgen(js_name = classifyColor)]
pub fn classify_color_js(r: u8, g: u8, b: u8, int8: bool) -> std::result::Result<String, JsError> {
    MODELS.with(|cell| {
        if cell.get().is_none() {
            let m = ProbeModels::build().map_err(js_err)?;
            let _ = cell.set(m);
        }
        let preds = classify(cell.get().expect("initialized"), [r, g, b], int8).map_err(js_err)?;
        serde_json::to_string(&preds).map_err(js_err)
    })
}

/// Category names in model output order.
#[wasm_bindgen(js_name = categoryNames)]
pub fn category_names() -> Vec<String> {
    CategoryRegistry::camsdd().names().to_vec()
}
