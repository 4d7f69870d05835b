//! Three library operations exposed to a static page. Each export takes
//! plain arguments and returns a JSON string, so the page needs no glue
//! beyond `JSON.parse`.

use elicit_core::corpus::split_indices;
use elicit_core::metrics::{class_metrics, compute, format_percent, Averaging, ConfusionMatrix, Exact};
use elicit_core::textprep::{normalize_traced, prepare_text, PrepConfig};
use elicit_core::Label;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest class size the split preview accepts.
pub const MAX_PREVIEW: u32 = 100_000;

fn fraction(r: Option<Exact>) -> Value {
    match r {
        Some(r) => json!({ "num": r.numer().to_string(), "den": r.denom().to_string() }),
        None => Value::Null,
    }
}

/// Every normalization stage, then the surviving tokens.
pub fn trace(text: &str, keep_stopwords: bool, ascii_only: bool) -> Value {
    let config = PrepConfig { remove_stopwords: !keep_stopwords, ascii_only, ..PrepConfig::default() };
    let stages: Vec<Value> =
        normalize_traced(text, &config).into_iter().map(|s| json!({ "stage": s.stage, "text": s.text })).collect();
    let tokens = prepare_text(text, &config).unwrap_or_default();
    json!({ "stages": stages, "tokens": tokens, "prep_config_hash": config.config_hash() })
}

pub fn metrics(tp: u32, fp: u32, fn_: u32, tn: u32) -> Value {
    let m = ConfusionMatrix::new(tp.into(), fp.into(), fn_.into(), tn.into());
    let modes: Vec<Value> = Averaging::ALL
        .iter()
        .map(|&mode| {
            let exact = compute(&m, mode);
            let percent = exact.to_f64().values().map(format_percent);
            let fractions = [exact.accuracy, exact.precision, exact.recall, exact.f1].map(fraction);
            json!({
                "mode": mode.as_str(),
                "percent": percent,
                "exact": fractions,
            })
        })
        .collect();
    let classes: Vec<Value> = Label::ALL
        .iter()
        .map(|&l| {
            let c = class_metrics(&m, l);
            json!({
                "label": l.as_str(),
                "support": c.support,
                "predicted": c.predicted,
                "precision": fraction(c.precision),
                "recall": fraction(c.recall),
            })
        })
        .collect();
    json!({ "n": m.n(), "modes": modes, "classes": classes })
}

/// Where a split of `useful` + `not_useful` records would put each one.
/// Records are ordered useful first.
pub fn split_preview(useful: u32, not_useful: u32, frac: f64, seed: u64, stratify: bool) -> Result<Value, String> {
    if useful > MAX_PREVIEW || not_useful > MAX_PREVIEW {
        return Err(format!("at most {MAX_PREVIEW} records per class"));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(format!("fraction must be strictly between 0 and 1, got {frac}"));
    }
    let labels: Vec<Option<Label>> = std::iter::repeat_n(Some(Label::Useful), useful as usize)
        .chain(std::iter::repeat_n(Some(Label::NotUseful), not_useful as usize))
        .collect();
    let mask = split_indices(&labels, frac, seed, stratify).map_err(|i| format!("record {i} has no label"))?;
    let mut counts = [[0usize; 2]; 2];
    for (label, &train) in labels.iter().zip(&mask) {
        let class = usize::from(*label != Some(Label::Useful));
        counts[class][usize::from(!train)] += 1;
    }
    Ok(json!({
        "train": { "useful": counts[0][0], "not_useful": counts[1][0], "total": counts[0][0] + counts[1][0] },
        "test": { "useful": counts[0][1], "not_useful": counts[1][1], "total": counts[0][1] + counts[1][1] },
        "mask": mask,
    }))
}

#[wasm_bindgen(js_name = prepTrace)]
pub fn prep_trace_js(text: &str, keep_stopwords: bool, ascii_only: bool) -> String {
    trace(text, keep_stopwords, ascii_only).to_string()
}

#[wasm_bindgen(js_name = metricsFor)]
pub fn metrics_js(tp: u32, fp: u32, fn_: u32, tn: u32) -> String {
    metrics(tp, fp, fn_, tn).to_string()
}

#[wasm_bindgen(js_name = splitPreview)]
pub fn split_preview_js(useful: u32, not_useful: u32, frac: f64, seed: u32, stratify: bool) -> Result<String, JsError> {
    split_preview(useful, not_useful, frac, seed.into(), stratify).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}
