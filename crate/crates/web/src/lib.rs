//! Browser bindings. Every export takes plain values and returns a JSON
//! string; the `*_json` functions hold the logic and are callable natively.

use photoauth_core::simulator::{
    injection_scenario, redirection_scenario, rtp_scenario, run_scenario, Placement, Scenario,
};
use photoauth_core::synth::{generate_layout, simulate_detection, DetectorProfile, LayoutVariant, Theme};
use photoauth_core::verify::{extract_domain, AcceptSet, ExtractionOutcome, VerifyConfig};
use photoauth_core::{BoundingBox, DomainName};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl ToString) -> Value {
    json!({ "error": msg.to_string() })
}

fn rect(b: &BoundingBox) -> Value {
    json!({ "x": b.x(), "y": b.y(), "w": b.width(), "h": b.height() })
}

/// Accept set for a server answering on `server` and `www.server`.
fn accept_set(server: &str) -> Result<AcceptSet, String> {
    let d = DomainName::parse(server).map_err(|e| e.to_string())?;
    let www = DomainName::parse(&format!("www.{}", d.ascii())).map_err(|e| e.to_string())?;
    AcceptSet::new([d, www]).map_err(|e| e.to_string())
}

fn variant(kind: &str, injected: &str) -> Result<LayoutVariant, String> {
    Ok(match kind {
        "genuine" => LayoutVariant::Genuine,
        "title" => LayoutVariant::TitleInjection(injected.into()),
        "content" => LayoutVariant::ContentInjection(injected.into()),
        "pip" => LayoutVariant::PictureInPicture(injected.into()),
        other => return Err(format!("unknown variant {other:?}")),
    })
}

/// Renders a synthetic photo of a browser at `shown`, runs the detectors and
/// the domain check against `server`. Returns ground truth, detections with
/// their cover rates, and the verdict.
#[allow(clippy::too_many_arguments)]
pub fn explore_json(
    shown: &str,
    server: &str,
    kind: &str,
    injected: &str,
    dark: bool,
    noisy: bool,
    cr_threshold: f64,
    seed: u64,
) -> Value {
    let run = || -> Result<Value, String> {
        let domain = DomainName::parse(shown).map_err(|e| e.to_string())?;
        let accept = accept_set(server)?;
        let cfg = VerifyConfig::new(cr_threshold, 0.5).map_err(|e| e.to_string())?;
        let theme = if dark { Theme::Dark } else { Theme::Light };
        let layout = generate_layout(&domain, theme, &variant(kind, injected)?, seed);
        let profile = if noisy {
            DetectorProfile::default_noisy(seed)
        } else {
            DetectorProfile::oracle()
        };
        let analysis = simulate_detection(&layout, &profile);

        let bars: Vec<_> = analysis.addrbars().iter().filter(|a| a.confidence >= cfg.confidence_floor()).collect();
        let texts: Vec<Value> = analysis
            .texts()
            .iter()
            .map(|t| {
                let cr = match bars.as_slice() {
                    [bar] => Some(photoauth_core::geometry::cover_rate(&t.bbox, &bar.bbox)),
                    _ => None,
                };
                json!({ "box": rect(&t.bbox), "text": t.text, "cover_rate": cr })
            })
            .collect();
        let verdict = match extract_domain(&analysis, &cfg) {
            ExtractionOutcome::Domain { domain, cover_rate } => {
                let ok = accept.contains(&domain);
                json!({
                    "result": if ok { "authorized" } else { "phishing-detected" },
                    "domain": domain.ascii(),
                    "cover_rate": cover_rate,
                })
            }
            ExtractionOutcome::MultipleAddressBars(n) => json!({ "result": "retake", "reason": "multiple-addrbars", "bars": n }),
            ExtractionOutcome::NoAddressBar => json!({ "result": "retake", "reason": "no-addrbar" }),
            ExtractionOutcome::NoQualifyingText => json!({ "result": "retake", "reason": "no-domain" }),
        };
        Ok(json!({
            "resolution": { "w": layout.resolution.width(), "h": layout.resolution.height() },
            "theme": layout.theme,
            "truth": {
                "addrbar": rect(&layout.addrbar_truth),
                "fake_bars": layout.fake_bars.iter().map(|f| rect(&f.bar)).collect::<Vec<_>>(),
                "texts": layout.text_regions().iter().map(|t| json!({ "box": rect(&t.bbox), "text": t.text })).collect::<Vec<_>>(),
            },
            "detected": {
                "addrbars": analysis.addrbars().iter().map(|a| json!({ "box": rect(&a.bbox), "confidence": a.confidence })).collect::<Vec<_>>(),
                "texts": texts,
            },
            "verdict": verdict,
        }))
    };
    run().unwrap_or_else(error)
}

/// Unicode and ASCII forms of a hostname, with the per-label split.
pub fn punycode_json(host: &str) -> Value {
    match DomainName::parse(host) {
        Ok(d) => json!({
            "input": host,
            "unicode": d.unicode(),
            "ascii": d.ascii(),
            "labels": d.labels(),
            "encoded": d.labels().iter().any(|l| l.starts_with("xn--")),
        }),
        Err(e) => error(e),
    }
}

/// Runs one built-in attack scenario end to end.
pub fn attack_json(kind: &str, seed: u64, fake: &str, upstream: &str) -> Value {
    let scenario: Result<Scenario, String> = match kind {
        "rtp" => rtp_scenario(seed, fake, upstream, DetectorProfile::oracle()).map_err(|e| e.to_string()),
        "redirect" => Ok(redirection_scenario(seed)),
        "inject-title" => Ok(injection_scenario(seed, Placement::Title, DetectorProfile::oracle())),
        "inject-content" => Ok(injection_scenario(seed, Placement::PageContent, DetectorProfile::oracle())),
        "pip" => Ok(injection_scenario(seed, Placement::PictureInPicture, DetectorProfile::oracle())),
        other => Err(format!("unknown attack {other:?}")),
    };
    match scenario.and_then(|s| run_scenario(&s).map_err(|e| e.to_string())) {
        Ok(report) => {
            let mut out = report.summary();
            out["verdict"] = json!(report.outcome.to_string());
            out["met_expectation"] = json!(report.met_expectation());
            out["log"] = report
                .log_jsonl()
                .lines()
                .filter_map(|l| serde_json::from_str(l).ok())
                .collect::<Vec<Value>>()
                .into();
            out
        }
        Err(e) => error(e),
    }
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn explore(shown: &str, server: &str, kind: &str, injected: &str, dark: bool, noisy: bool, cr_threshold: f64, seed: u32) -> String {
    explore_json(shown, server, kind, injected, dark, noisy, cr_threshold, seed as u64).to_string()
}

#[wasm_bindgen]
pub fn punycode(host: &str) -> String {
    punycode_json(host).to_string()
}

#[wasm_bindgen]
pub fn attack(kind: &str, seed: u32, fake: &str, upstream: &str) -> String {
    attack_json(kind, seed as u64, fake, upstream).to_string()
}
