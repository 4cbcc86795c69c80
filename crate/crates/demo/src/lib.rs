//! Browser bindings for three views of the simulator: a mode explorer, the
//! sorter's port probabilities, and QBER against interception fraction.
//!
//! Each export returns a JSON string; the plain functions behind them are
//! usable natively and are what the tests exercise.

use oamnet::mode_algebra::{apply_rotation, lg_mode, rotation_eigenphase, ModeIndices};
use oamnet::network::{InportMux, NetworkConfig};
use oamnet::protocol::{run_session, Eavesdropper, SessionConfig};
use oamnet::sorter::{build_sorter_tree, stage_port_probabilities};
use oamnet::Complex64;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest order the explorer will expand; keeps the page responsive.
pub const MAX_DEMO_ORDER: u32 = 16;
pub const MAX_DEMO_PHOTONS: usize = 200_000;

#[derive(Debug, Serialize)]
pub struct ModeView {
    pub n: u32,
    pub m: u32,
    pub order: u32,
    /// `[re, im]` per Hermite-Gauss component `k = 0..=order`.
    pub coefficients: Vec<[f64; 2]>,
    pub rotated: Vec<[f64; 2]>,
    pub eigenphase: f64,
    pub residual: f64,
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

pub fn mode_view(ell: i64, p: u32, alpha: f64) -> Result<ModeView, String> {
    let idx = ModeIndices::from_lp(ell, p);
    if idx.order() > MAX_DEMO_ORDER {
        return Err(format!("order {} exceeds the demo limit of {MAX_DEMO_ORDER}", idx.order()));
    }
    let mode = lg_mode(ell, p).map_err(|e| e.to_string())?;
    let rotated = apply_rotation(&mode, alpha).map_err(|e| e.to_string())?;
    let eigenphase = rotation_eigenphase(ell, p, alpha).map_err(|e| e.to_string())?;
    let expected = mode.scaled(Complex64::from_polar(1.0, -eigenphase));
    Ok(ModeView {
        n: idx.n,
        m: idx.m,
        order: idx.order(),
        coefficients: pairs(mode.amplitudes()),
        rotated: pairs(rotated.amplitudes()),
        eigenphase,
        residual: rotated.max_abs_diff(&expected).unwrap_or(f64::INFINITY),
    })
}

#[derive(Debug, Serialize)]
pub struct StageView {
    pub path: String,
    pub alpha: String,
    pub delta_phi_c: String,
    /// Port-0 probability for each probed `ell`.
    pub port0: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SorterView {
    pub addresses: Vec<i64>,
    pub probe: Vec<i64>,
    pub stages: Vec<StageView>,
    /// `leaves[i]` lists the addresses that land on leaf `i`.
    pub leaves: Vec<Vec<i64>>,
    /// `distribution[j][i]`: probability that `probe[j]` reaches leaf `i`.
    pub distribution: Vec<Vec<f64>>,
}

pub fn sorter_view(addresses: &[i64], probe_min: i64, probe_max: i64) -> Result<SorterView, String> {
    if probe_min > probe_max || probe_max - probe_min > 64 {
        return Err("probe range must be non-empty and span at most 64 modes".into());
    }
    let tree = build_sorter_tree(addresses, true).map_err(|e| e.to_string())?;
    let probe: Vec<i64> = (probe_min..=probe_max).collect();
    let stages = tree
        .stages()
        .into_iter()
        .map(|spec| {
            let stage = oamnet::sorter::SorterStage::new(spec.alpha, spec.delta_phi_c, true)
                .expect("synthesized stage is in range");
            StageView {
                path: spec.path,
                alpha: spec.alpha.to_string(),
                delta_phi_c: spec.delta_phi_c.to_string(),
                port0: probe.iter().map(|&ell| stage_port_probabilities(ell, &stage).0).collect(),
            }
        })
        .collect();
    Ok(SorterView {
        addresses: tree.addresses(),
        leaves: tree.leaves().iter().map(|l| l.ells.clone()).collect(),
        distribution: probe.iter().map(|&ell| tree.leaf_distribution(ell)).collect(),
        probe,
        stages,
    })
}

#[derive(Debug, Serialize)]
pub struct QberPoint {
    pub fraction: f64,
    pub qber: f64,
    pub expected: f64,
    pub sifted: usize,
}

/// Alice-to-Bob sessions on the four-user network at evenly spaced
/// interception fractions from 0 to 1.
pub fn qber_curve(points: usize, photons: usize, seed: u64) -> Result<Vec<QberPoint>, String> {
    if !(2..=51).contains(&points) {
        return Err("points must be between 2 and 51".into());
    }
    if photons == 0 || photons > MAX_DEMO_PHOTONS {
        return Err(format!("photons must be between 1 and {MAX_DEMO_PHOTONS}"));
    }
    let net = NetworkConfig::four_user();
    let mux = InportMux::new();
    (0..points)
        .map(|i| {
            let fraction = i as f64 / (points - 1) as f64;
            let mut cfg = SessionConfig::new(format!("curve-{i}"), "Alice", "Bob", photons, seed.wrapping_add(i as u64));
            cfg.eavesdropper = Eavesdropper::InterceptResend { fraction };
            let r = run_session(&cfg, &net, &mux).map_err(|e| e.to_string())?.result;
            Ok(QberPoint { fraction, qber: r.sifted_error_rate, expected: 0.25 * fraction, sifted: r.sifted_count })
        })
        .collect()
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = modeView)]
pub fn mode_view_js(ell: i32, p: u32, alpha: f64) -> Result<String, JsValue> {
    to_js(mode_view(ell.into(), p, alpha))
}

/// `addresses` is comma-separated, e.g. `"1,2,3,4"`.
#[wasm_bindgen(js_name = sorterView)]
pub fn sorter_view_js(addresses: &str, probe_min: i32, probe_max: i32) -> Result<String, JsValue> {
    let parsed: Result<Vec<i64>, String> = addresses
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<i64>().map_err(|e| format!("`{}`: {e}", s.trim())))
        .collect();
    to_js(parsed.and_then(|a| sorter_view(&a, probe_min.into(), probe_max.into())))
}

#[wasm_bindgen(js_name = qberCurve)]
pub fn qber_curve_js(points: u32, photons: u32, seed: u32) -> Result<String, JsValue> {
    to_js(qber_curve(points as usize, photons as usize, seed.into()))
}
