//! Judge-score aggregation and judge prompt rendering/parsing.
//!
//! Aggregation keeps exact integer arithmetic for counts and sums;
//! display rounding is half-up at fixed precision so published figures
//! reproduce bit-for-bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("cannot parse judge output ({message}): {raw}")]
    Parse { message: String, raw: String },
    #[error("template: {0}")]
    Template(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoSpark,
    WithSpark,
    HumanReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub problem_id: String,
    pub condition: Condition,
    pub model_tag: String,
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "EXTREMELY_HELPFUL")]
    ExtremelyHelpful,
    #[serde(rename = "GOOD")]
    Good,
    #[serde(rename = "NEUTRAL")]
    Neutral,
    #[serde(rename = "POOR")]
    Poor,
    #[serde(rename = "EXTREMELY_UNHELPFUL")]
    ExtremelyUnhelpful,
}

pub const BANDS: [Band; 5] = [
    Band::ExtremelyHelpful,
    Band::Good,
    Band::Neutral,
    Band::Poor,
    Band::ExtremelyUnhelpful,
];

impl Band {
    pub fn name(&self) -> &'static str {
        match self {
            Band::ExtremelyHelpful => "EXTREMELY_HELPFUL",
            Band::Good => "GOOD",
            Band::Neutral => "NEUTRAL",
            Band::Poor => "POOR",
            Band::ExtremelyUnhelpful => "EXTREMELY_UNHELPFUL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub problem_id: String,
    pub band: Band,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// One (model, condition) row of the quality report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub model_tag: String,
    pub condition: Condition,
    pub count: u64,
    /// histogram[s-1] = number of records with score s.
    pub histogram: [u64; 5],
    pub mean: f64,
    /// Mean rounded half-up to 2 decimals, e.g. "4.91".
    pub mean_display: String,
    /// Population standard deviation.
    pub stddev: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelpfulnessReport {
    pub total: u64,
    /// Count per band, all five bands always present.
    pub counts: BTreeMap<String, u64>,
    pub top_band_share: f64,
    pub top_two_share: f64,
    /// Shares rounded half-up to one decimal, e.g. "76.1%".
    pub top_band_share_display: String,
    pub top_two_share_display: String,
}

/// Half-up rounding of `numer/denom` to `scale` fractional units,
/// entirely in integers: round(scale * numer / denom).
fn round_half_up(numer: u64, denom: u64, scale: u64) -> u64 {
    (2 * scale * numer + denom) / (2 * denom)
}

fn format_hundredths(hundredths: u64) -> String {
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn format_per_mille(per_mille: u64) -> String {
    format!("{}.{}%", per_mille / 10, per_mille % 10)
}

pub fn aggregate_quality(records: &[ScoreRecord]) -> Result<QualityReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Validation("no score records".into()));
    }
    let mut cells: BTreeMap<(String, Condition), [u64; 5]> = BTreeMap::new();
    for record in records {
        if !(1..=5).contains(&record.score) {
            return Err(EvalError::Validation(format!(
                "score {} out of range in record for problem {} (model {}, {:?})",
                record.score, record.problem_id, record.model_tag, record.condition
            )));
        }
        cells
            .entry((record.model_tag.clone(), record.condition))
            .or_default()[record.score as usize - 1] += 1;
    }

    let rows = cells
        .into_iter()
        .map(|((model_tag, condition), histogram)| {
            let count: u64 = histogram.iter().sum();
            let sum: u64 = histogram
                .iter()
                .enumerate()
                .map(|(i, n)| (i as u64 + 1) * n)
                .sum();
            let mean = sum as f64 / count as f64;
            let variance = histogram
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let d = (i as f64 + 1.0) - mean;
                    *n as f64 * d * d
                })
                .sum::<f64>()
                / count as f64;
            let stddev = variance.sqrt();
            QualityRow {
                model_tag,
                condition,
                count,
                histogram,
                mean,
                mean_display: format_hundredths(round_half_up(sum, count, 100)),
                stddev,
                stderr: stddev / (count as f64).sqrt(),
            }
        })
        .collect();
    Ok(QualityReport { rows })
}

pub fn aggregate_helpfulness(records: &[BandRecord]) -> Result<HelpfulnessReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Validation("no band records".into()));
    }
    let mut by_band: BTreeMap<Band, u64> = BANDS.iter().map(|b| (*b, 0)).collect();
    for record in records {
        *by_band.get_mut(&record.band).unwrap() += 1;
    }
    let total = records.len() as u64;
    let top = by_band[&Band::ExtremelyHelpful];
    let top_two = top + by_band[&Band::Good];
    Ok(HelpfulnessReport {
        total,
        counts: by_band.iter().map(|(b, n)| (b.name().to_string(), *n)).collect(),
        top_band_share: top as f64 / total as f64,
        top_two_share: top_two as f64 / total as f64,
        top_band_share_display: format_per_mille(round_half_up(top, total, 1000)),
        top_two_share_display: format_per_mille(round_half_up(top_two, total, 1000)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeMode {
    Quality,
    Helpfulness,
}

/// Render the bundled judge prompt for `mode` with `inputs` substituted.
pub fn render_judge_prompt(
    mode: JudgeMode,
    inputs: &BTreeMap<String, String>,
) -> Result<String, EvalError> {
    let template_id = match mode {
        JudgeMode::Quality => "judge_quality",
        JudgeMode::Helpfulness => "judge_helpfulness",
    };
    Ok(crate::gateway::templates::render(template_id, inputs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum JudgeVerdict {
    Score { score: u8, rationale: Option<String> },
    Band { band: Band, rationale: Option<String> },
}

/// Extract score/band plus rationale from free-form judge output.
/// Tolerant of surrounding prose; rejects ambiguous outputs carrying two
/// distinct answers rather than guessing.
pub fn parse_judge_output(mode: JudgeMode, text: &str) -> Result<JudgeVerdict, EvalError> {
    match mode {
        JudgeMode::Quality => {
            let score_re = regex::Regex::new(r"(?i)\bscore\b\s*[:=]\s*([0-9]+)").unwrap();
            let mut scores: Vec<u64> = Vec::new();
            for cap in score_re.captures_iter(text) {
                let value: u64 = cap[1].parse().map_err(|_| EvalError::Parse {
                    message: "unparseable score".into(),
                    raw: text.to_string(),
                })?;
                if !scores.contains(&value) {
                    scores.push(value);
                }
            }
            match scores.as_slice() {
                [] => Err(EvalError::Parse {
                    message: "no score found".into(),
                    raw: text.to_string(),
                }),
                [s] if (1..=5).contains(s) => {
                    let rationale_re =
                        regex::Regex::new(r"(?i)\bbrief_rationale\b\s*[:=]\s*(.+)").unwrap();
                    let rationale = rationale_re
                        .captures(text)
                        .map(|c| c[1].trim().to_string())
                        .filter(|s| !s.is_empty());
                    Ok(JudgeVerdict::Score { score: *s as u8, rationale })
                }
                [s] => Err(EvalError::Parse {
                    message: format!("score {s} out of range"),
                    raw: text.to_string(),
                }),
                _ => Err(EvalError::Parse {
                    message: "ambiguous: multiple distinct scores".into(),
                    raw: text.to_string(),
                }),
            }
        }
        JudgeMode::Helpfulness => {
            let band_re = regex::Regex::new(
                r"\b(EXTREMELY_UNHELPFUL|EXTREMELY_HELPFUL|GOOD|NEUTRAL|POOR)\b",
            )
            .unwrap();
            let mut bands: Vec<Band> = Vec::new();
            let mut first_end = 0usize;
            for m in band_re.find_iter(text) {
                let band = match m.as_str() {
                    "EXTREMELY_HELPFUL" => Band::ExtremelyHelpful,
                    "GOOD" => Band::Good,
                    "NEUTRAL" => Band::Neutral,
                    "POOR" => Band::Poor,
                    _ => Band::ExtremelyUnhelpful,
                };
                if bands.is_empty() {
                    first_end = m.end();
                }
                if !bands.contains(&band) {
                    bands.push(band);
                }
            }
            match bands.as_slice() {
                [] => Err(EvalError::Parse {
                    message: "no band found".into(),
                    raw: text.to_string(),
                }),
                [band] => {
                    let rationale = text[first_end..]
                        .trim_start_matches(|c: char| {
                            c.is_whitespace() || "—–-:,.".contains(c)
                        })
                        .trim()
                        .to_string();
                    let rationale = if rationale.is_empty() { None } else { Some(rationale) };
                    Ok(JudgeVerdict::Band { band: *band, rationale })
                }
                _ => Err(EvalError::Parse {
                    message: "ambiguous: multiple distinct bands".into(),
                    raw: text.to_string(),
                }),
            }
        }
    }
}

/// Parse JSON Lines of `ScoreRecord`, validating each line.
pub fn score_records_from_jsonl(input: &str) -> Result<Vec<ScoreRecord>, EvalError> {
    records_from_jsonl(input)
}

/// Parse JSON Lines of `BandRecord`, validating each line.
pub fn band_records_from_jsonl(input: &str) -> Result<Vec<BandRecord>, EvalError> {
    records_from_jsonl(input)
}

fn records_from_jsonl<T: serde::de::DeserializeOwned>(input: &str) -> Result<Vec<T>, EvalError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| EvalError::Validation(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
