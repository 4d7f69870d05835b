use elicit_wasm_demo::{metrics, split_preview, trace};

#[test]
fn trace_lists_each_stage() {
    let t = trace("Check <b>THIS</b> out: https://x.io it's Broken!", false, false);
    let stages: Vec<&str> = t["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["html", "url", "lowercase", "special_chars", "whitespace"]);
    assert_eq!(t["tokens"], serde_json::json!(["check", "broken"]));
    let kept = trace("it is broken", true, false);
    assert_eq!(kept["tokens"], serde_json::json!(["it", "is", "broken"]));
}

#[test]
fn metrics_report_exact_fractions() {
    let m = metrics(3, 1, 2, 4);
    let pos = &m["modes"][0];
    assert_eq!(pos["mode"], "positive_class");
    assert_eq!(pos["percent"], serde_json::json!(["70.00", "75.00", "60.00", "66.67"]));
    assert_eq!(pos["exact"][3], serde_json::json!({"num": "2", "den": "3"}));
    let weighted = &m["modes"][2];
    assert_eq!(weighted["exact"][2], weighted["exact"][0]);
    assert!(metrics(0, 0, 0, 0)["modes"][0]["exact"][0].is_null());
}

#[test]
fn split_preview_counts() {
    let p = split_preview(1600, 1600, 0.7, 42, true).unwrap();
    assert_eq!(p["train"]["total"], 2240);
    assert_eq!(p["test"]["useful"], 480);
    assert_eq!(p["mask"].as_array().unwrap().len(), 3200);
    assert_eq!(p, split_preview(1600, 1600, 0.7, 42, true).unwrap());
    assert!(split_preview(10, 10, 1.0, 42, true).is_err());
    assert!(split_preview(10, 10, f64::NAN, 42, true).is_err());
}
