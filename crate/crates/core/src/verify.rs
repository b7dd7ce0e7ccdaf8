//! Server-side photo verification.
//!
//! OCR text regions and address-bar predictions are produced independently
//! (in either order) and combined here: a text region is only trusted as the
//! URL if the predicted address bar covers enough of it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{extract_hostname, DomainName, UrlText};
use crate::geometry::{cover_rate, iou, rescale_box, BoundingBox, GeometryError, Resolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("text region has empty text")]
    EmptyText,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("box {0:?} lies outside the photo")]
    OutOfBounds(BoundingBox),
    #[error("accept set is empty")]
    EmptyAcceptSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed photo analysis: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRegion {
    pub bbox: BoundingBox,
    pub text: String,
}

impl TextRegion {
    pub fn new(bbox: BoundingBox, text: impl Into<String>) -> Result<Self, VerifyError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(VerifyError::EmptyText);
        }
        Ok(Self { bbox, text })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AddressBarPrediction {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl AddressBarPrediction {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, VerifyError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(VerifyError::Confidence(confidence));
        }
        Ok(Self { bbox, confidence })
    }
}

/// Detector output for one photo.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotoAnalysis {
    resolution: Resolution,
    texts: Vec<TextRegion>,
    addrbars: Vec<AddressBarPrediction>,
}

impl PhotoAnalysis {
    pub fn new(
        resolution: Resolution,
        texts: Vec<TextRegion>,
        addrbars: Vec<AddressBarPrediction>,
    ) -> Result<Self, VerifyError> {
        let boxes = texts.iter().map(|t| t.bbox).chain(addrbars.iter().map(|a| a.bbox));
        for b in boxes {
            if !b.fits_within(resolution) {
                return Err(VerifyError::OutOfBounds(b));
            }
        }
        Ok(Self {
            resolution,
            texts,
            addrbars,
        })
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn texts(&self) -> &[TextRegion] {
        &self.texts
    }

    pub fn addrbars(&self) -> &[AddressBarPrediction] {
        &self.addrbars
    }

    /// Maps every box into `to`, the coordinate-space part of the photo
    /// pre-processing step.
    pub fn rescaled(&self, to: Resolution) -> Result<Self, VerifyError> {
        let from = self.resolution;
        let texts = self
            .texts
            .iter()
            .map(|t| {
                Ok(TextRegion {
                    bbox: rescale_box(&t.bbox, from, to)?,
                    text: t.text.clone(),
                })
            })
            .collect::<Result<_, VerifyError>>()?;
        let addrbars = self
            .addrbars
            .iter()
            .map(|a| {
                Ok(AddressBarPrediction {
                    bbox: rescale_box(&a.bbox, from, to)?,
                    confidence: a.confidence,
                })
            })
            .collect::<Result<_, VerifyError>>()?;
        Ok(Self {
            resolution: to,
            texts,
            addrbars,
        })
    }

    pub fn from_json(s: &str) -> Result<Self, VerifyError> {
        let wire: WireAnalysis =
            serde_json::from_str(s).map_err(|e| VerifyError::Json(e.to_string()))?;
        wire.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireAnalysis::from(self)).expect("analysis serializes")
    }
}

// JSON payload uploaded in place of a raw image.
#[derive(Serialize, Deserialize)]
struct WireAnalysis {
    resolution: WireResolution,
    #[serde(default)]
    texts: Vec<WireText>,
    #[serde(default)]
    addrbars: Vec<WireBar>,
}

#[derive(Serialize, Deserialize)]
struct WireResolution {
    w: u32,
    h: u32,
}

#[derive(Serialize, Deserialize)]
struct WireText {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct WireBar {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    confidence: f64,
}

impl TryFrom<WireAnalysis> for PhotoAnalysis {
    type Error = VerifyError;

    fn try_from(w: WireAnalysis) -> Result<Self, Self::Error> {
        let resolution = Resolution::new(w.resolution.w, w.resolution.h)?;
        let texts = w
            .texts
            .into_iter()
            .map(|t| TextRegion::new(BoundingBox::new(t.x, t.y, t.w, t.h)?, t.text))
            .collect::<Result<_, _>>()?;
        let addrbars = w
            .addrbars
            .into_iter()
            .map(|b| AddressBarPrediction::new(BoundingBox::new(b.x, b.y, b.w, b.h)?, b.confidence))
            .collect::<Result<_, _>>()?;
        PhotoAnalysis::new(resolution, texts, addrbars)
    }
}

impl From<&PhotoAnalysis> for WireAnalysis {
    fn from(a: &PhotoAnalysis) -> Self {
        WireAnalysis {
            resolution: WireResolution {
                w: a.resolution.width(),
                h: a.resolution.height(),
            },
            texts: a
                .texts
                .iter()
                .map(|t| WireText {
                    x: t.bbox.x(),
                    y: t.bbox.y(),
                    w: t.bbox.width(),
                    h: t.bbox.height(),
                    text: t.text.clone(),
                })
                .collect(),
            addrbars: a
                .addrbars
                .iter()
                .map(|b| WireBar {
                    x: b.bbox.x(),
                    y: b.bbox.y(),
                    w: b.bbox.width(),
                    h: b.bbox.height(),
                    confidence: b.confidence,
                })
                .collect(),
        }
    }
}

impl Serialize for PhotoAnalysis {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireAnalysis::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhotoAnalysis {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireAnalysis::deserialize(deserializer)?;
        wire.try_into().map_err(serde::de::Error::custom)
    }
}

/// Collects the OCR and address-bar channels, which may finish in either
/// order, and yields the combined analysis once both are present.
#[derive(Debug, Clone)]
pub struct PendingAnalysis {
    resolution: Resolution,
    texts: Option<Vec<TextRegion>>,
    addrbars: Option<Vec<AddressBarPrediction>>,
}

impl PendingAnalysis {
    pub fn new(resolution: Resolution) -> Self {
        Self {
            resolution,
            texts: None,
            addrbars: None,
        }
    }

    pub fn set_texts(&mut self, texts: Vec<TextRegion>) {
        self.texts = Some(texts);
    }

    pub fn set_addrbars(&mut self, addrbars: Vec<AddressBarPrediction>) {
        self.addrbars = Some(addrbars);
    }

    pub fn is_ready(&self) -> bool {
        self.texts.is_some() && self.addrbars.is_some()
    }

    /// Returns the analysis when both channels have reported, otherwise
    /// hands the pending state back.
    pub fn finish(self) -> Result<Result<PhotoAnalysis, VerifyError>, Self> {
        match (self.texts, self.addrbars) {
            (Some(t), Some(a)) => Ok(PhotoAnalysis::new(self.resolution, t, a)),
            (texts, addrbars) => Err(Self {
                resolution: self.resolution,
                texts,
                addrbars,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    cr_threshold: f64,
    confidence_floor: f64,
}

impl VerifyConfig {
    pub const MAX_ADDRBARS: usize = 1;

    pub fn new(cr_threshold: f64, confidence_floor: f64) -> Result<Self, VerifyError> {
        for t in [cr_threshold, confidence_floor] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(VerifyError::Threshold(t));
            }
        }
        Ok(Self {
            cr_threshold,
            confidence_floor,
        })
    }

    pub fn cr_threshold(&self) -> f64 {
        self.cr_threshold
    }

    pub fn confidence_floor(&self) -> f64 {
        self.confidence_floor
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            cr_threshold: 0.8,
            confidence_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionOutcome {
    Domain { domain: DomainName, cover_rate: f64 },
    MultipleAddressBars(usize),
    NoAddressBar,
    NoQualifyingText,
}

/// Per-region cover rates against the single surviving address bar, as used
/// by [`extract_domain`]. Empty when zero or several bars survive the
/// confidence floor.
pub fn scored_regions(analysis: &PhotoAnalysis, cfg: &VerifyConfig) -> Vec<(usize, f64)> {
    let bars = surviving_bars(analysis, cfg);
    match bars.as_slice() {
        [bar] => analysis
            .texts
            .iter()
            .enumerate()
            .map(|(i, t)| (i, cover_rate(&t.bbox, &bar.bbox)))
            .collect(),
        _ => Vec::new(),
    }
}

fn surviving_bars<'a>(analysis: &'a PhotoAnalysis, cfg: &VerifyConfig) -> Vec<&'a AddressBarPrediction> {
    analysis
        .addrbars
        .iter()
        .filter(|a| a.confidence >= cfg.confidence_floor)
        .collect()
}

/// Picks the hostname shown inside the predicted address bar.
///
/// Candidates need a cover rate at or above the threshold; among them the
/// highest cover rate wins, then the larger text box, then the leftmost and
/// topmost one.
pub fn extract_domain(analysis: &PhotoAnalysis, cfg: &VerifyConfig) -> ExtractionOutcome {
    let bars = surviving_bars(analysis, cfg);
    if bars.len() > VerifyConfig::MAX_ADDRBARS {
        return ExtractionOutcome::MultipleAddressBars(bars.len());
    }
    let Some(bar) = bars.first() else {
        return ExtractionOutcome::NoAddressBar;
    };

    let best = analysis
        .texts
        .iter()
        .map(|t| (t, cover_rate(&t.bbox, &bar.bbox)))
        .filter(|&(_, cr)| cr >= cfg.cr_threshold)
        .max_by(|(a, cr_a), (b, cr_b)| {
            cr_a.total_cmp(cr_b)
                .then(a.bbox.area().total_cmp(&b.bbox.area()))
                .then(b.bbox.x().total_cmp(&a.bbox.x()))
                .then(b.bbox.y().total_cmp(&a.bbox.y()))
        });

    let Some((region, cr)) = best else {
        return ExtractionOutcome::NoQualifyingText;
    };
    match UrlText::new(region.text.as_str()).map(|t| extract_hostname(&t)) {
        Some(Ok(domain)) => ExtractionOutcome::Domain {
            domain,
            cover_rate: cr,
        },
        _ => ExtractionOutcome::NoQualifyingText,
    }
}

/// Hostnames the server answers to. Comparison is exact; `www.` variants
/// have to be listed explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AcceptSet(BTreeSet<DomainName>);

impl AcceptSet {
    pub fn new(domains: impl IntoIterator<Item = DomainName>) -> Result<Self, VerifyError> {
        let set: BTreeSet<_> = domains.into_iter().collect();
        if set.is_empty() {
            return Err(VerifyError::EmptyAcceptSet);
        }
        Ok(Self(set))
    }

    pub fn contains(&self, d: &DomainName) -> bool {
        self.0.contains(d)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DomainName> {
        self.0.iter()
    }

    /// True when `found` is an accepted name with exactly one dot lost, the
    /// way OCR drops a small dot (`www.example.com` read as
    /// `wwwexample.com`).
    pub fn is_dot_drop_of_member(&self, found: &DomainName) -> bool {
        let f = found.ascii();
        self.0.iter().any(|d| {
            let a = d.ascii();
            a.len() == f.len() + 1
                && a.char_indices()
                    .filter(|&(_, c)| c == '.')
                    .any(|(i, _)| a[..i] == f[..i] && a[i + 1..] == f[i..])
        })
    }
}

impl<'de> Deserialize<'de> for AcceptSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<DomainName>::deserialize(deserializer)?;
        AcceptSet::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetakeReason {
    MultipleAddrbars,
    Unreadable,
    /// Hostname matched an accepted one except for a single missing dot.
    DotMissing,
    /// Photo quality flag (blur, darkness). No detector sets it yet.
    LowQuality,
}

impl RetakeReason {
    pub fn code(&self) -> &'static str {
        match self {
            RetakeReason::MultipleAddrbars => "multiple-addrbars",
            RetakeReason::Unreadable => "unreadable",
            RetakeReason::DotMissing => "dot-missing",
            RetakeReason::LowQuality => "low-quality",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyResult {
    Match(DomainName),
    Mismatch { found: DomainName },
    Retake { reason: RetakeReason, warning: bool },
}

pub fn verify_photo(analysis: &PhotoAnalysis, accept: &AcceptSet, cfg: &VerifyConfig) -> VerifyResult {
    match extract_domain(analysis, cfg) {
        ExtractionOutcome::Domain { domain, .. } if accept.contains(&domain) => VerifyResult::Match(domain),
        ExtractionOutcome::Domain { domain, .. } if accept.is_dot_drop_of_member(&domain) => {
            VerifyResult::Retake {
                reason: RetakeReason::DotMissing,
                warning: false,
            }
        }
        ExtractionOutcome::Domain { domain, .. } => VerifyResult::Mismatch { found: domain },
        ExtractionOutcome::MultipleAddressBars(_) => VerifyResult::Retake {
            reason: RetakeReason::MultipleAddrbars,
            warning: true,
        },
        ExtractionOutcome::NoAddressBar | ExtractionOutcome::NoQualifyingText => VerifyResult::Retake {
            reason: RetakeReason::Unreadable,
            warning: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionScore {
    TruePositive,
    FalsePositive,
}

pub fn score_detection(pred: &AddressBarPrediction, truth: &BoundingBox, iou_threshold: f64) -> DetectionScore {
    if iou(&pred.bbox, truth) >= iou_threshold {
        DetectionScore::TruePositive
    } else {
        DetectionScore::FalsePositive
    }
}
