//! Browser demo: each export takes plain numbers and returns JSON for the
//! page in `www/` to draw.

use arelu::losses::paired_loss;
use arelu::transforms;
use arelu::TransformConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_POINTS: usize = 10_000;
pub const MAX_LOGITS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights {
    pub name: String,
    pub values: Vec<f64>,
    pub sum: f64,
    pub zeros: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub logits: Vec<f64>,
    pub alpha: f64,
    pub tau: f64,
    /// Threshold that makes α-ReLU coincide with α-entmax on these logits.
    pub entmax_threshold: f64,
    pub rows: Vec<Weights>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub t: Vec<f64>,
    pub series: Vec<Series>,
}

/// Parses numbers separated by commas and/or whitespace.
pub fn parse_logits(text: &str) -> Result<Vec<f64>, String> {
    let z = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if z.is_empty() {
        return Err("enter at least one logit".into());
    }
    if z.len() > MAX_LOGITS {
        return Err(format!("at most {MAX_LOGITS} logits"));
    }
    Ok(z)
}

fn weights(name: String, values: Vec<f64>) -> Weights {
    Weights { sum: values.iter().sum(), zeros: values.iter().filter(|&&v| v == 0.0).count(), name, values }
}

/// All transforms applied to `logits`.
pub fn compare(logits: &[f64], alpha: f64, tau: f64) -> Result<Comparison, String> {
    let err = |e: arelu::Error| e.to_string();
    let ent = transforms::entmax(logits, alpha).map_err(err)?;
    let rows = vec![
        weights("softmax".into(), transforms::softmax(logits).map_err(err)?.into_values()),
        weights("sparsemax".into(), transforms::sparsemax(logits).map_err(err)?.weights.into_values()),
        weights(format!("{alpha}-entmax"), ent.weights.into_values()),
        weights(format!("{alpha}-ReLU, τ={tau}"), TransformConfig::arelu(alpha, tau).apply(logits).map_err(err)?.into_values()),
    ];
    Ok(Comparison { logits: logits.to_vec(), alpha, tau, entmax_threshold: ent.threshold, rows })
}

fn grid(t_min: f64, t_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
        return Err("need finite t_min < t_max".into());
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must be in 2..={MAX_POINTS}"));
    }
    let step = (t_max - t_min) / (points - 1) as f64;
    Ok((0..points).map(|i| t_min + step * i as f64).collect())
}

fn objectives(alpha: f64, tau: f64) -> [(String, TransformConfig); 4] {
    [
        ("softmax".into(), TransformConfig::softmax()),
        ("sparsemax".into(), TransformConfig::sparsemax()),
        (format!("{alpha}-entmax"), TransformConfig::entmax(alpha)),
        (format!("{alpha}-ReLU"), TransformConfig::arelu(alpha, tau)),
    ]
}

/// Weight of the first class for two-class logits `[t, 0]`.
///
/// α-ReLU also reports the second class, whose weight is not `1 − p₀`.
pub fn response_curve(alpha: f64, tau: f64, t_min: f64, t_max: f64, points: usize) -> Result<Curve, String> {
    let t = grid(t_min, t_max, points)?;
    let mut series = Vec::new();
    for (name, cfg) in objectives(alpha, tau) {
        cfg.validate().map_err(|e| e.to_string())?;
        let mut first = Vec::with_capacity(t.len());
        let mut second = Vec::with_capacity(t.len());
        for &ti in &t {
            let p = cfg.apply(&[ti, 0.0]).map_err(|e| e.to_string())?;
            first.push(p.values()[0]);
            second.push(p.values()[1]);
        }
        let arelu = cfg.kind == arelu::TransformKind::Arelu;
        series.push(Series { name: name.clone(), values: first });
        if arelu {
            series.push(Series { name: format!("{name} (other class)"), values: second });
        }
    }
    Ok(Curve { t, series })
}

/// Paired loss with gold class 0 for logits `[t, 0]`.
pub fn loss_curve(alpha: f64, tau: f64, t_min: f64, t_max: f64, points: usize) -> Result<Curve, String> {
    let t = grid(t_min, t_max, points)?;
    let series = objectives(alpha, tau)
        .into_iter()
        .map(|(name, cfg)| {
            let values = t
                .iter()
                .map(|&ti| paired_loss(&cfg, &[ti, 0.0], 0).map(|l| l.value).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Series { name, values })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Curve { t, series })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = compareTransforms)]
pub fn compare_transforms(logits: &str, alpha: f64, tau: f64) -> Result<String, JsError> {
    to_json(parse_logits(logits).and_then(|z| compare(&z, alpha, tau)))
}

#[wasm_bindgen(js_name = responseCurve)]
pub fn response_curve_json(alpha: f64, tau: f64, t_min: f64, t_max: f64, points: usize) -> Result<String, JsError> {
    to_json(response_curve(alpha, tau, t_min, t_max, points))
}

#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve_json(alpha: f64, tau: f64, t_min: f64, t_max: f64, points: usize) -> Result<String, JsError> {
    to_json(loss_curve(alpha, tau, t_min, t_max, points))
}
