//! Synthetic browser screenshots and detector models.
//!
//! Photos are never rasterized. A layout is the set of ground-truth boxes a
//! photo of a browser window would contain; detector models turn a layout
//! into the [`PhotoAnalysis`] a real OCR engine and address-bar detector
//! would report, optionally with noise injected at the box and string level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{confusable_mutate, DomainName, SubstitutionRules};
use crate::geometry::{BoundingBox, Resolution};
use crate::verify::{
    extract_domain, score_detection, AcceptSet, AddressBarPrediction, DetectionScore, ExtractionOutcome,
    PhotoAnalysis, TextRegion, VerifyConfig,
};

/// Fifty popular hostnames totalling 527 characters.
pub const TOP_DOMAINS: [&str; 50] = [
    "www.google.com", "www.youtube.com", "tmall.com", "baidu.com", "bilibili.com", "sohu.com",
    "www.facebook.com", "taobao.com", "360.cn", "jd.com", "www.amazon.com", "www.yahoo.com",
    "www.wikipedia.org", "weibo.com", "sina.com.cn", "zoom.us", "xinhuanet.com", "live.com",
    "www.reddit.com", "www.netflix.com", "www.microsoft.com", "instagram.com", "office.com",
    "google.com.hk", "panda.tv", "zhanqi.tv", "alipay.com", "bing.com", "csdn.net", "vk.com",
    "myshopify.com", "naver.com", "okezone.com", "twitch.tv", "twitter.com", "www.ebay.com",
    "adobe.com", "tianya.cn", "huanqiu.com", "yy.com", "aliexpress.com", "linkedin.com",
    "force.com", "aparat.com", "mail.ru", "msn.com", "dropbox.com", "whatsapp.com", "apple.com",
    "1688.com",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("rate {0} outside [0, 1]")]
    Rate(f64),
    #[error("jitter must be finite and non-negative")]
    Jitter,
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("domain list is empty")]
    NoDomains,
}

/// SplitMix64 step, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theme {
    Light,
    Dark,
}

/// What the page shows besides the genuine browser chrome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutVariant {
    Genuine,
    /// First tab title replaced by the given text.
    TitleInjection(String),
    /// One page-content line replaced by the given text.
    ContentInjection(String),
    /// A picture of an address bar showing the given URL, embedded in the page.
    PictureInPicture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledBox {
    pub bbox: BoundingBox,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FakeAddressBar {
    pub bar: BoundingBox,
    pub url: LabeledBox,
}

/// Ground truth for one photographed browser window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrowserLayout {
    pub seed: u64,
    pub resolution: Resolution,
    /// Address bar including the navigation icons on its left.
    pub addrbar_truth: BoundingBox,
    pub url_text_box: BoundingBox,
    pub url_string: String,
    pub title_boxes: Vec<LabeledBox>,
    pub content_boxes: Vec<LabeledBox>,
    pub fake_bars: Vec<FakeAddressBar>,
    pub theme: Theme,
}

impl BrowserLayout {
    pub fn n_addrbars(&self) -> usize {
        1 + self.fake_bars.len()
    }

    /// All text regions in reading order: titles, URL, page content, then
    /// any embedded fake URL.
    pub fn text_regions(&self) -> Vec<LabeledBox> {
        let mut out = self.title_boxes.clone();
        out.push(LabeledBox {
            bbox: self.url_text_box,
            text: self.url_string.clone(),
        });
        out.extend(self.content_boxes.iter().cloned());
        out.extend(self.fake_bars.iter().map(|f| f.url.clone()));
        out
    }

    /// Index of the genuine URL region within [`Self::text_regions`].
    pub fn url_region_index(&self) -> usize {
        self.title_boxes.len()
    }
}

const TAB_TITLES: [&str; 6] = [
    "Sign in to your account",
    "Inbox (3)",
    "New Tab",
    "Search results",
    "Account settings",
    "News",
];
const CONTENT_LINES: [&str; 8] = [
    "Sign in",
    "Email, phone, or username",
    "Password",
    "Forgot password?",
    "No account? Create one!",
    "Keep me signed in",
    "Terms of use",
    "Privacy & cookies",
];
const PATHS: [&str; 5] = ["", "/", "/login", "/signin?continue=home", "/account/security"];

fn b(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w.max(1.0), h.max(1.0)).expect("layout boxes are positive")
}

/// Builds a deterministic browser layout showing `domain` in the address
/// bar. Geometry is drawn from `seed`: window offset, tab strip height
/// (36-48 px), address bar height (40-56 px), icon strip (90-150 px) and
/// glyph width (9-12 px).
pub fn generate_layout(domain: &DomainName, theme: Theme, variant: &LayoutVariant, seed: u64) -> BrowserLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resolution = if rng.gen_bool(0.5) {
        Resolution::FULL_HD
    } else {
        Resolution::new(1920, 1440).expect("positive")
    };
    let (w, h) = (f64::from(resolution.width()), f64::from(resolution.height()));

    let ox = rng.gen_range(0.0..0.08 * w);
    let oy = rng.gen_range(0.0..0.06 * h);
    let win_w = rng.gen_range(0.8 * w..(w - ox));
    let tab_h = rng.gen_range(36.0..48.0);
    let glyph_w = rng.gen_range(9.0..12.0);

    let n_tabs = rng.gen_range(1..=3usize);
    let tab_w = (win_w - 60.0) / n_tabs as f64;
    let mut title_boxes: Vec<LabeledBox> = (0..n_tabs)
        .map(|i| {
            let text = TAB_TITLES[rng.gen_range(0..TAB_TITLES.len())].to_string();
            let width = (text.chars().count() as f64 * glyph_w).min(tab_w - 40.0);
            LabeledBox {
                bbox: b(ox + 16.0 + i as f64 * tab_w, oy + tab_h * 0.25, width, tab_h * 0.5),
                text,
            }
        })
        .collect();

    let bar_y = oy + tab_h + rng.gen_range(6.0..12.0);
    let bar_h = rng.gen_range(40.0..56.0);
    let right_icons = rng.gen_range(80.0..200.0);
    let addrbar_truth = b(ox + 8.0, bar_y, win_w - 16.0 - right_icons, bar_h);

    let scheme = if rng.gen_bool(0.3) { "https://" } else { "" };
    let path = PATHS[rng.gen_range(0..PATHS.len())];
    let url_string = format!("{scheme}{}{path}", domain.unicode());
    let icon_strip = rng.gen_range(90.0..150.0);
    let url_x = addrbar_truth.x() + icon_strip;
    let url_w = (url_string.chars().count() as f64 * glyph_w).min(addrbar_truth.right() - 10.0 - url_x);
    let url_h = bar_h * 0.55;
    let url_text_box = b(url_x, bar_y + (bar_h - url_h) / 2.0, url_w, url_h);

    let content_top = addrbar_truth.bottom() + 40.0;
    let content_bottom = h - 60.0;
    let n_lines = rng.gen_range(2..=5usize);
    let line_step = (content_bottom - content_top) / n_lines as f64;
    let mut content_boxes: Vec<LabeledBox> = (0..n_lines)
        .map(|i| {
            let text = CONTENT_LINES[rng.gen_range(0..CONTENT_LINES.len())].to_string();
            let line_h = rng.gen_range(20.0..32.0);
            let cw = glyph_w * rng.gen_range(1.0..1.6);
            let x = ox + rng.gen_range(40.0..win_w * 0.4);
            let width = (text.chars().count() as f64 * cw).min(ox + win_w - 20.0 - x);
            let y = content_top + i as f64 * line_step + rng.gen_range(0.0..(line_step - line_h).max(1.0));
            LabeledBox {
                bbox: b(x, y, width, line_h),
                text,
            }
        })
        .collect();

    // Always draw the picture-in-picture geometry so the stream of random
    // numbers does not depend on the variant.
    let pip_y = content_top + rng.gen_range(0.0..(content_bottom - content_top - bar_h).max(1.0) * 0.5);
    let pip_x = ox + rng.gen_range(20.0..win_w * 0.2);
    let pip_w = win_w * rng.gen_range(0.5..0.75);

    let mut fake_bars = Vec::new();
    match variant {
        LayoutVariant::Genuine => {}
        LayoutVariant::TitleInjection(text) => {
            let first = &mut title_boxes[0];
            let width = (text.chars().count() as f64 * glyph_w).min(tab_w - 40.0);
            first.bbox = b(first.bbox.x(), first.bbox.y(), width, first.bbox.height());
            first.text = text.clone();
        }
        LayoutVariant::ContentInjection(text) => {
            let line = &mut content_boxes[0];
            let width = (text.chars().count() as f64 * glyph_w * 1.3).min(ox + win_w - 20.0 - line.bbox.x());
            line.bbox = b(line.bbox.x(), line.bbox.y(), width, line.bbox.height());
            line.text = text.clone();
        }
        LayoutVariant::PictureInPicture(text) => {
            // the picture replaces whatever content was drawn where it sits
            let bar = b(pip_x, pip_y, pip_w, bar_h);
            content_boxes.retain(|c| c.bbox.intersection_area(&bar) == 0.0);
            let ux = pip_x + icon_strip;
            let uw = (text.chars().count() as f64 * glyph_w).min(bar.right() - 10.0 - ux);
            fake_bars.push(FakeAddressBar {
                bar,
                url: LabeledBox {
                    bbox: b(ux, pip_y + (bar_h - url_h) / 2.0, uw, url_h),
                    text: text.clone(),
                },
            });
        }
    }

    BrowserLayout {
        seed,
        resolution,
        addrbar_truth,
        url_text_box,
        url_string,
        title_boxes,
        content_boxes,
        fake_bars,
        theme,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcrModel {
    Oracle,
    Noisy {
        sub_rate: f64,
        dot_drop_rate_dark: f64,
        #[serde(default)]
        split_url: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AddrBarModel {
    Oracle,
    Noisy {
        jitter_px: f64,
        cutoff_prob: f64,
        miss_prob: f64,
        spurious_prob: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub ocr: OcrModel,
    pub addrbar: AddrBarModel,
    #[serde(default)]
    pub seed: u64,
}

impl DetectorProfile {
    pub fn oracle() -> Self {
        Self {
            ocr: OcrModel::Oracle,
            addrbar: AddrBarModel::Oracle,
            seed: 0,
        }
    }

    /// Default noise magnitudes. These are configuration, not a calibration
    /// against any measured error rate.
    pub fn default_noisy(seed: u64) -> Self {
        Self {
            ocr: OcrModel::Noisy {
                sub_rate: 0.002,
                dot_drop_rate_dark: 0.05,
                split_url: false,
            },
            addrbar: AddrBarModel::Noisy {
                jitter_px: 10.0,
                cutoff_prob: 0.05,
                miss_prob: 0.0,
                spurious_prob: 0.0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let rate = |r: f64| {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(SynthError::Rate(r))
            }
        };
        if let OcrModel::Noisy {
            sub_rate,
            dot_drop_rate_dark,
            ..
        } = self.ocr
        {
            rate(sub_rate)?;
            rate(dot_drop_rate_dark)?;
        }
        if let AddrBarModel::Noisy {
            jitter_px,
            cutoff_prob,
            miss_prob,
            spurious_prob,
        } = self.addrbar
        {
            if !(jitter_px.is_finite() && jitter_px >= 0.0) {
                return Err(SynthError::Jitter);
            }
            rate(cutoff_prob)?;
            rate(miss_prob)?;
            rate(spurious_prob)?;
        }
        Ok(())
    }
}

/// Visually confusable replacements OCR tends to produce. Every entry
/// differs from its key.
fn confusions(c: char) -> &'static [char] {
    match c {
        'o' => &['a', 'e', '0'],
        'l' => &['1', 'i'],
        '1' => &['l'],
        '0' => &['o'],
        'i' => &['l', '1'],
        'e' => &['c', 'o'],
        'a' => &['o', 'e'],
        'c' => &['e'],
        'm' => &['n'],
        'n' => &['m', 'h'],
        'h' => &['b', 'n'],
        'b' => &['h', '6'],
        'g' => &['q', '9'],
        'q' => &['g'],
        'u' => &['v'],
        'v' => &['u', 'y'],
        'w' => &['v'],
        's' => &['5'],
        '5' => &['s'],
        't' => &['f'],
        'f' => &['t'],
        'k' => &['x'],
        'x' => &['k'],
        'y' => &['v'],
        'z' => &['2'],
        '2' => &['z'],
        'j' => &['i'],
        'p' => &['q'],
        'r' => &['n'],
        'd' => &['a'],
        '3' => &['8'],
        '4' => &['a'],
        '6' => &['b'],
        '7' => &['1'],
        '8' => &['3'],
        '9' => &['g'],
        '.' => &[','],
        '/' => &['l'],
        '-' => &['_'],
        ':' => &[';'],
        '?' => &['7'],
        _ => &['?'],
    }
}

/// Applies the OCR noise model to one string. Draws a fixed number of
/// random values per character so runs with different rates stay coupled.
pub fn ocr_recognize(text: &str, model: &OcrModel, theme: Theme, rng: &mut impl Rng) -> String {
    let OcrModel::Noisy {
        sub_rate,
        dot_drop_rate_dark,
        ..
    } = *model
    else {
        return text.to_string();
    };
    let mut out: String = text
        .chars()
        .map(|c| {
            let u: f64 = rng.gen();
            let pick: usize = rng.gen_range(0..6);
            if u < sub_rate {
                let options = confusions(c);
                options[pick % options.len()]
            } else {
                c
            }
        })
        .collect();
    let u_dot: f64 = rng.gen();
    if theme == Theme::Dark && u_dot < dot_drop_rate_dark {
        if let Some(pos) = out.find("www.") {
            out.remove(pos + 3);
        }
    }
    out
}

// Splits the URL region at the path boundary, or before the last label.
fn split_region(region: &LabeledBox) -> Vec<LabeledBox> {
    let text = &region.text;
    let host_start = text.find("://").map_or(0, |p| p + 3);
    let cut = text[host_start..]
        .find(['/', '?'])
        .map(|p| p + host_start)
        .or_else(|| text.rfind('.'))
        .filter(|&p| p > 0 && p < text.len());
    let Some(cut) = cut else {
        return vec![region.clone()];
    };
    let n = text.chars().count() as f64;
    let left_chars = text[..cut].chars().count() as f64;
    let left_w = region.bbox.width() * left_chars / n;
    let bb = region.bbox;
    vec![
        LabeledBox {
            bbox: b(bb.x(), bb.y(), left_w, bb.height()),
            text: text[..cut].to_string(),
        },
        LabeledBox {
            bbox: b(bb.x() + left_w, bb.y(), bb.width() - left_w, bb.height()),
            text: text[cut..].to_string(),
        },
    ]
}

fn clamp_box(x0: f64, y0: f64, x1: f64, y1: f64, res: Resolution) -> BoundingBox {
    let (w, h) = (f64::from(res.width()), f64::from(res.height()));
    let x0 = x0.clamp(0.0, w - 1.0);
    let y0 = y0.clamp(0.0, h - 1.0);
    let x1 = x1.clamp(x0 + 1.0, w);
    let y1 = y1.clamp(y0 + 1.0, h);
    b(x0, y0, x1 - x0, y1 - y0)
}

/// Runs the OCR and address-bar models over a layout.
///
/// Noise is seeded from the profile seed and the layout seed together, so
/// the same layout photographed under the same profile always yields the
/// same analysis.
pub fn simulate_detection(layout: &BrowserLayout, profile: &DetectorProfile) -> PhotoAnalysis {
    let mut ocr_rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed ^ layout.seed, 1));
    let mut bar_rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed ^ layout.seed, 2));
    let res = layout.resolution;

    let url_idx = layout.url_region_index();
    let split = matches!(profile.ocr, OcrModel::Noisy { split_url: true, .. });
    let mut texts = Vec::new();
    for (i, region) in layout.text_regions().into_iter().enumerate() {
        let pieces = if split && i == url_idx {
            split_region(&region)
        } else {
            vec![region]
        };
        for piece in pieces {
            let text = ocr_recognize(&piece.text, &profile.ocr, layout.theme, &mut ocr_rng);
            if let Ok(t) = TextRegion::new(piece.bbox, text) {
                texts.push(t);
            }
        }
    }

    let truths: Vec<(BoundingBox, BoundingBox)> = std::iter::once((layout.addrbar_truth, layout.url_text_box))
        .chain(layout.fake_bars.iter().map(|f| (f.bar, f.url.bbox)))
        .collect();
    let mut addrbars = Vec::new();
    match profile.addrbar {
        AddrBarModel::Oracle => {
            for (bar, _) in &truths {
                addrbars.push(AddressBarPrediction::new(*bar, 1.0).expect("valid confidence"));
            }
        }
        AddrBarModel::Noisy {
            jitter_px,
            cutoff_prob,
            miss_prob,
            spurious_prob,
        } => {
            for (bar, url) in &truths {
                let u_miss: f64 = bar_rng.gen();
                let u_cut: f64 = bar_rng.gen();
                let keep_fraction = bar_rng.gen_range(0.2..0.6);
                let mut jitter = [0.0; 4];
                for j in &mut jitter {
                    *j = bar_rng.gen_range(-1.0..=1.0) * jitter_px;
                }
                let confidence = bar_rng.gen_range(0.6..=1.0);
                if u_miss < miss_prob {
                    continue;
                }
                let x0 = bar.x() + jitter[0];
                let y0 = bar.y() + jitter[1];
                let x1 = bar.right() + jitter[2];
                let mut y1 = bar.bottom() + jitter[3];
                if u_cut < cutoff_prob {
                    // lower part of the bar falls outside the prediction
                    y1 = url.y() + keep_fraction * url.height();
                }
                let pred = clamp_box(x0, y0, x1, y1, res);
                addrbars.push(AddressBarPrediction::new(pred, confidence).expect("valid confidence"));
            }
            let u_spur: f64 = bar_rng.gen();
            let sx = bar_rng.gen_range(0.0..0.5) * f64::from(res.width());
            let sy = bar_rng.gen_range(0.3..0.8) * f64::from(res.height());
            let sw = bar_rng.gen_range(0.2..0.45) * f64::from(res.width());
            let sconf = bar_rng.gen_range(0.5..=1.0);
            if u_spur < spurious_prob {
                let pred = clamp_box(sx, sy, sx + sw, sy + 48.0, res);
                addrbars.push(AddressBarPrediction::new(pred, sconf).expect("valid confidence"));
            }
        }
    }

    PhotoAnalysis::new(res, texts, addrbars).expect("boxes lie within the layout resolution")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub seed: u64,
    /// Probability that a photo is dark enough to trigger the dot-drop mode.
    pub dark_fraction: f64,
    pub iou_threshold: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            seed: 0,
            dark_fraction: 0.3,
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub retakes: u64,
    pub total: u64,
}

/// Address-bar detection counts at the IoU threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub retake_rate: f64,
    pub counts: EvalCounts,
    pub detection: DetectionCounts,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One corpus item: the layout it was drawn from and what the detectors saw.
pub fn corpus_item(
    index: u64,
    params: &CorpusParams,
    profile: &DetectorProfile,
    domains: &[DomainName],
) -> (DomainName, BrowserLayout, PhotoAnalysis) {
    let item_seed = mix_seed(params.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
    let domain = domains[rng.gen_range(0..domains.len())].clone();
    let theme = if rng.gen_bool(params.dark_fraction.clamp(0.0, 1.0)) {
        Theme::Dark
    } else {
        Theme::Light
    };
    let layout = generate_layout(&domain, theme, &LayoutVariant::Genuine, item_seed);
    let analysis = simulate_detection(&layout, profile);
    (domain, layout, analysis)
}

/// Runs `n` generate → detect → extract cycles over genuine layouts of the
/// accepted domains.
///
/// Recognition counts: TP when the extracted domain is the one on screen,
/// FP when a different domain was read (or several bars were reported),
/// FN when no bar or no qualifying URL text was found. Every non-TP photo
/// counts as a retake.
pub fn evaluate_corpus(
    n: u64,
    params: &CorpusParams,
    profile: &DetectorProfile,
    verify_cfg: &VerifyConfig,
    accept: &AcceptSet,
) -> Result<EvalReport, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    profile.validate()?;
    let domains: Vec<DomainName> = accept.iter().cloned().collect();
    let mut counts = EvalCounts::default();
    let mut det = DetectionCounts::default();
    for i in 0..n {
        let (truth, layout, analysis) = corpus_item(i, params, profile, &domains);
        counts.total += 1;
        match extract_domain(&analysis, verify_cfg) {
            ExtractionOutcome::Domain { domain, .. } if domain == truth => counts.tp += 1,
            ExtractionOutcome::Domain { .. } | ExtractionOutcome::MultipleAddressBars(_) => counts.fp += 1,
            ExtractionOutcome::NoAddressBar | ExtractionOutcome::NoQualifyingText => counts.fn_ += 1,
        }

        let mut matched = false;
        for pred in analysis.addrbars() {
            match score_detection(pred, &layout.addrbar_truth, params.iou_threshold) {
                DetectionScore::TruePositive if !matched => {
                    matched = true;
                    det.tp += 1;
                }
                _ => det.fp += 1,
            }
        }
        if !matched {
            det.fn_ += 1;
        }
    }
    counts.retakes = counts.total - counts.tp;
    Ok(EvalReport {
        precision: ratio(counts.tp, counts.tp + counts.fp),
        recall: ratio(counts.tp, counts.tp + counts.fn_),
        retake_rate: counts.retakes as f64 / counts.total as f64,
        counts,
        detection: det,
    })
}

/// Photo analyses for a corpus, one JSON object per line, for replay
/// against a server.
pub fn export_corpus_jsonl(
    n: u64,
    params: &CorpusParams,
    profile: &DetectorProfile,
    accept: &AcceptSet,
) -> String {
    let domains: Vec<DomainName> = accept.iter().cloned().collect();
    let mut out = String::new();
    for i in 0..n {
        let (_, _, analysis) = corpus_item(i, params, profile, &domains);
        out.push_str(&analysis.to_json());
        out.push('\n');
    }
    out
}

/// Character-level recognition errors between the truth and what was read:
/// Hamming distance for equal lengths, edit distance otherwise.
pub fn char_errors(truth: &str, read: &str) -> usize {
    let a: Vec<char> = truth.chars().collect();
    let b: Vec<char> = read.chars().collect();
    if a.len() == b.len() {
        return a.iter().zip(&b).filter(|(x, y)| x != y).count();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Mutates each domain with the confusable rules, reads it back through
/// the OCR model and counts character errors against the mutated text.
pub fn homograph_stress(
    domains: &[DomainName],
    rules: &SubstitutionRules,
    profile: &DetectorProfile,
    seed: u64,
) -> Result<usize, SynthError> {
    if domains.is_empty() {
        return Err(SynthError::NoDomains);
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, profile.seed));
    let mut errors = 0;
    for (i, d) in domains.iter().enumerate() {
        let shown = confusable_mutate(d, rules, mix_seed(seed, i as u64))
            .map(|m| m.unicode().to_string())
            .unwrap_or_else(|_| d.unicode().to_string());
        let theme = if rng.gen_bool(0.5) { Theme::Dark } else { Theme::Light };
        let read = ocr_recognize(&shown, &profile.ocr, theme, &mut rng);
        errors += char_errors(&shown, &read);
    }
    Ok(errors)
}

pub fn top_domains() -> Vec<DomainName> {
    TOP_DOMAINS
        .iter()
        .map(|d| DomainName::parse(d).expect("corpus hostnames are valid"))
        .collect()
}
