//! JSON-in, JSON-out wrappers around the engine for the static demo page.
//! The `*_json` functions are plain Rust so they can be tested natively.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stance_core::annotation::{cohen_kappa, kappa_variant, KappaVariant, RawRating};
use stance_core::classify::Prediction;
use stance_core::lexicon::Lexicon;
use stance_core::trends::{stance_column, STANCE_COLUMNS, UNCERTAIN};
use wasm_bindgen::prelude::*;

fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(Lexicon::default_lexicon)
}

#[derive(Serialize)]
struct Span {
    start: usize,
    end: usize,
    text: String,
    pattern: String,
}

/// Groups hit by `text`, each with the matched spans (byte offsets).
pub fn lexicon_matches_json(text: &str) -> Result<String, String> {
    let lex = lexicon();
    let hits: Vec<Value> = lex
        .match_text(text)
        .into_iter()
        .map(|(group, matches)| {
            let def = lex.groups().iter().find(|g| g.name == group);
            let spans: Vec<Span> = matches
                .iter()
                .map(|m| Span {
                    start: m.start,
                    end: m.end,
                    text: text[m.start..m.end].to_string(),
                    pattern: def.and_then(|g| g.positive.get(m.pattern_index)).cloned().unwrap_or_default(),
                })
                .collect();
            json!({ "group": group.as_str(), "spans": spans })
        })
        .collect();
    serde_json::to_string(&json!({ "topical": !hits.is_empty(), "groups": hits })).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct ThresholdInput {
    /// Probability triples ordered Against, Neutral, Supportive.
    predictions: Vec<[f64; 3]>,
    tau: f64,
}

fn uncertain_count(preds: &[Prediction], tau: f64) -> Result<usize, String> {
    let mut n = 0;
    for p in preds {
        if stance_column(p, Some(tau)).map_err(|e| e.to_string())? == UNCERTAIN {
            n += 1;
        }
    }
    Ok(n)
}

/// Stance counts and shares at threshold `tau`, plus the Uncertain count
/// over a sweep of thresholds.
pub fn threshold_shares_json(input: &str) -> Result<String, String> {
    let input: ThresholdInput = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    if !(input.tau > 1.0 / 3.0 && input.tau <= 1.0) {
        return Err(format!("threshold {} outside (1/3, 1]", input.tau));
    }
    let preds = input
        .predictions
        .iter()
        .enumerate()
        .map(|(i, p)| Prediction::from_probs(format!("p{i}"), *p, "demo", "demo").map_err(|e| format!("prediction {}: {e}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut counts = [0u64; 4];
    for p in &preds {
        counts[stance_column(p, Some(input.tau)).map_err(|e| e.to_string())?] += 1;
    }
    let total = preds.len() as u64;
    let share = |c: u64| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let mut sweep = Vec::new();
    for step in 0..=13 {
        let tau = (0.35 + 0.05 * step as f64).min(1.0);
        sweep.push(json!({ "tau": tau, "uncertain": uncertain_count(&preds, tau)? }));
    }
    let out = json!({
        "tau": input.tau,
        "total": total,
        "counts": STANCE_COLUMNS.iter().zip(counts).map(|(k, c)| (k.to_string(), json!(c))).collect::<serde_json::Map<_, _>>(),
        "shares": STANCE_COLUMNS.iter().zip(counts).map(|(k, c)| (k.to_string(), json!(share(c)))).collect::<serde_json::Map<_, _>>(),
        "sweep": sweep,
    });
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct KappaInput {
    a: Vec<String>,
    b: Vec<String>,
}

/// Cohen's kappa over two label lists. When every label is a rating (1-5
/// or "ambiguous") the merged-category variants are reported too.
pub fn kappa_json(input: &str) -> Result<String, String> {
    let input: KappaInput = serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))?;
    let a: Vec<&str> = input.a.iter().map(|s| s.trim()).collect();
    let b: Vec<&str> = input.b.iter().map(|s| s.trim()).collect();
    let kappa = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
    let ratings: Option<Vec<(RawRating, RawRating)>> =
        a.iter().zip(&b).map(|(x, y)| Some((x.parse().ok()?, y.parse().ok()?))).collect();
    let variants = ratings.map(|pairs| {
        KappaVariant::ALL
            .iter()
            .map(|v| {
                let cell = match kappa_variant(&pairs, *v) {
                    Ok((k, n)) => json!({ "kappa": k, "n": n }),
                    Err(e) => json!({ "kappa": null, "n": 0, "error": e.to_string() }),
                };
                (v.as_str().to_string(), cell)
            })
            .collect::<serde_json::Map<_, _>>()
    });
    let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    serde_json::to_string(&json!({
        "kappa": kappa,
        "n": a.len(),
        "observed_agreement": agree as f64 / a.len() as f64,
        "variants": variants,
    }))
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn lexicon_matches(text: &str) -> Result<String, JsValue> {
    lexicon_matches_json(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn threshold_shares(input: &str) -> Result<String, JsValue> {
    threshold_shares_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn kappa(input: &str) -> Result<String, JsValue> {
    kappa_json(input).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn tags_a_topical_sentence() {
        let out = parse(lexicon_matches_json("Pagulaste arv jäi samaks.").unwrap());
        assert_eq!(out["topical"], true);
        assert_eq!(out["groups"][0]["group"], "refugees");
        let span = &out["groups"][0]["spans"][0];
        assert!(span["text"].as_str().unwrap().to_lowercase().starts_with("pagula"));

        let out = parse(lexicon_matches_json("Linnud alustasid rännet lõunasse.").unwrap());
        assert_eq!(out["topical"], false);
    }

    #[test]
    fn threshold_buckets_and_sweep() {
        let out = parse(threshold_shares_json(r#"{"predictions": [[0.65,0.2,0.15],[0.7,0.2,0.1],[0.1,0.1,0.8]], "tau": 0.7}"#).unwrap());
        assert_eq!(out["counts"]["Uncertain"], 1);
        assert_eq!(out["counts"]["Against"], 1);
        assert_eq!(out["counts"]["Supportive"], 1);
        let sweep: Vec<u64> = out["sweep"].as_array().unwrap().iter().map(|p| p["uncertain"].as_u64().unwrap()).collect();
        assert!(sweep.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(sweep.len(), 14);
        assert!(threshold_shares_json(r#"{"predictions": [], "tau": 0.2}"#).is_err());
        assert!(threshold_shares_json(r#"{"predictions": [[0.5,0.5,0.5]], "tau": 0.7}"#).is_err());
    }

    #[test]
    fn kappa_examples() {
        let out = parse(kappa_json(r#"{"a": ["x","x","y","y"], "b": ["x","y","x","y"]}"#).unwrap());
        assert_eq!(out["kappa"], 0.0);
        assert!(out["variants"].is_null());

        let out = parse(kappa_json(r#"{"a": ["1","2","4","5","3"], "b": ["2","1","5","4","3"]}"#).unwrap());
        assert_eq!(out["variants"]["four_category"]["kappa"], 1.0);
        assert!(out["kappa"].as_f64().unwrap() < 1.0);

        assert!(kappa_json(r#"{"a": ["x"], "b": []}"#).is_err());
    }
}
