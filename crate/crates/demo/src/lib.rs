//! wasm-bindgen entry points for `www/index.html`. Build with
//! `wasm-pack build crates/demo --target web --out-dir www/pkg`.

use cbe_core::ensemble::exact_sample;
use cbe_core::field::xn_yn_fields;
use cbe_core::statistics::power_sums;
use cbe_core::stats::Estimate;
use cbe_core::EnsembleParams;
use wasm_bindgen::prelude::*;

fn js_err(e: cbe_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One exact CβE(n) configuration, angles ascending in `[0, 2π)`.
#[wasm_bindgen]
pub fn sample_angles(n: usize, beta: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let batch = exact_sample(&EnsembleParams::new(n, beta, seed).map_err(js_err)?, 1).map_err(js_err)?;
    Ok(batch.configs[0].angles().to_vec())
}

/// `Ê|p_k|²` over `m` samples as `[mean_1, se_1, limit_1, mean_2, …]` with
/// the limiting value `2k/β`.
#[wasm_bindgen]
pub fn second_moments(n: usize, beta: f64, m: usize, kmax: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let batch = exact_sample(&EnsembleParams::new(n, beta, seed).map_err(js_err)?, m).map_err(js_err)?;
    let tables: Vec<_> = batch.configs.iter().map(|c| power_sums(c, kmax)).collect();
    let mut out = Vec::with_capacity(3 * kmax);
    for k in 1..=kmax {
        let e = Estimate::from_samples(&tables.iter().map(|t| t[k].norm_sqr()).collect::<Vec<_>>());
        out.extend([e.mean, e.se, 2.0 * k as f64 / beta]);
    }
    Ok(out)
}

/// `X_n` then `Y_n` of one sample on `points` equally spaced angles,
/// truncated at `J = n`.
#[wasm_bindgen]
pub fn field_profile(n: usize, beta: f64, seed: u64, points: usize) -> Result<Vec<f64>, JsError> {
    let batch = exact_sample(&EnsembleParams::new(n, beta, seed).map_err(js_err)?, 1).map_err(js_err)?;
    let (x, y) = xn_yn_fields(&batch.configs[0], n).map_err(js_err)?;
    let mut out: Vec<f64> = x.evaluate_grid(points).iter().map(|v| v.re).collect();
    out.extend(y.evaluate_grid(points).iter().map(|v| v.re));
    Ok(out)
}
