//! Rule-based scoring: convert raw transcripts into per-item scores exactly
//! per the measure's scoring map, then roll them up to per-persona measure
//! scores.
//!
//! Refusals and unparseable responses are missing data, never a numeric
//! score; a persona's measure score is withheld once too many of its items
//! are missing. Scoring is a pure function of (measures, transcripts), so
//! identical stores always yield bit-identical score sheets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{Anchor, Congruence, Item, MeasureKind, MeasureSpec};
use crate::persona::Persona;
use crate::protocol::{Phase, Transcript, TranscriptKey, PAIRS_LINE_PREFIX};

/// Default ceiling on the fraction of unscored items before a persona's
/// measure score is withheld.
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatus {
    Scored,
    Refused,
    Unparseable,
    Missing,
}

impl fmt::Display for ScoreStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreStatus::Scored => "scored",
            ScoreStatus::Refused => "refused",
            ScoreStatus::Unparseable => "unparseable",
            ScoreStatus::Missing => "missing",
        })
    }
}

/// Score of one (persona, item, phase) exchange. `value` is present iff
/// `status` is `Scored`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub persona_id: String,
    pub measure_id: String,
    pub item_id: String,
    pub phase: Phase,
    pub status: ScoreStatus,
    pub value: Option<f64>,
}

/// Per-persona measure score: the mean over scored items, withheld when the
/// missing rate exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureScore {
    pub persona_id: String,
    pub measure_id: String,
    pub phase: Phase,
    pub value: Option<f64>,
    pub missing_rate: f64,
    pub n_items_scored: usize,
}

/// Outcome of matching a raw explicit response against the anchor list.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedExplicit<'a> {
    Anchor(&'a Anchor),
    Refused,
    Unparseable,
}

fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Match a raw response against the anchor labels.
///
/// The search is case-insensitive and whitespace-normalized, looking for
/// label occurrences anywhere in the response. An occurrence swallowed by a
/// longer label's occurrence does not count ("strongly agree" beats the
/// "agree" inside it); if the surviving occurrences belong to more than one
/// anchor the response is ambiguous and therefore unparseable.
pub fn parse_explicit<'a>(raw: &str, anchors: &'a [Anchor]) -> ParsedExplicit<'a> {
    let haystack = normalize(raw);
    let labels: Vec<String> = anchors.iter().map(|a| normalize(&a.label)).collect();

    // (start, end, anchor index) of every label occurrence
    let mut occurrences: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        if label.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = haystack[from..].find(label.as_str()) {
            let start = from + pos;
            occurrences.push((start, start + label.len(), idx));
            from = start + 1;
        }
    }

    let surviving: Vec<usize> = occurrences
        .iter()
        .filter(|&&(s1, e1, i1)| {
            !occurrences.iter().any(|&(s2, e2, i2)| {
                i2 != i1 && s2 <= s1 && e1 <= e2 && (e2 - s2) > (e1 - s1)
            })
        })
        .map(|&(_, _, idx)| idx)
        .collect();

    let mut distinct = surviving.clone();
    distinct.sort_unstable();
    distinct.dedup();

    match distinct.as_slice() {
        [only] => {
            let anchor = &anchors[*only];
            if anchor.is_refusal {
                ParsedExplicit::Refused
            } else {
                ParsedExplicit::Anchor(anchor)
            }
        }
        _ => ParsedExplicit::Unparseable,
    }
}

/// Turn a parsed explicit response into an item score, negating the anchor
/// score for reverse-keyed items.
pub fn score_explicit_item(
    parsed: &ParsedExplicit<'_>,
    item: &Item,
    key: &TranscriptKey,
) -> ItemScore {
    let (status, value) = match parsed {
        ParsedExplicit::Anchor(anchor) => {
            let score = if item.reverse_keyed { -anchor.score } else { anchor.score };
            (ScoreStatus::Scored, Some(f64::from(score)))
        }
        ParsedExplicit::Refused => (ScoreStatus::Refused, None),
        ParsedExplicit::Unparseable => (ScoreStatus::Unparseable, None),
    };
    ItemScore {
        persona_id: key.persona_id.clone(),
        measure_id: key.measure_id.clone(),
        item_id: key.item_id.clone(),
        phase: key.phase,
        status,
        value,
    }
}

/// Extract the `PAIRS:` line from an implicit response.
///
/// Exactly one `PAIRS:` line must be present; every token must match the
/// item's lexicons exactly (case-insensitive) and no name may repeat.
/// Returns the pairs with the lexicons' canonical casing, or `None` when the
/// response is unparseable.
pub fn parse_pairings(raw: &str, item: &Item) -> Option<Vec<(String, String)>> {
    let lex = item.lexicons.as_ref()?;

    let pairs_lines: Vec<&str> = raw
        .lines()
        .map(str::trim)
        .filter(|l| {
            l.len() >= PAIRS_LINE_PREFIX.len()
                && l[..PAIRS_LINE_PREFIX.len()].eq_ignore_ascii_case(PAIRS_LINE_PREFIX)
        })
        .collect();
    let [line] = pairs_lines.as_slice() else {
        return None;
    };
    let payload = &line[PAIRS_LINE_PREFIX.len()..];

    let canonical_name = |token: &str| -> Option<String> {
        lex.all_names()
            .find(|n| n.eq_ignore_ascii_case(token))
            .map(str::to_string)
    };
    let canonical_attr = |token: &str| -> Option<String> {
        lex.all_attrs()
            .find(|a| a.eq_ignore_ascii_case(token))
            .map(str::to_string)
    };

    let mut pairs = Vec::new();
    let mut used_names = Vec::new();
    for segment in payload.split(';') {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        let (name_token, attr_token) = segment.split_once('-')?;
        let name = canonical_name(name_token.trim())?;
        let attr = canonical_attr(attr_token.trim())?;
        if used_names.contains(&name) {
            return None;
        }
        used_names.push(name.clone());
        pairs.push((name, attr));
    }
    if pairs.is_empty() {
        return None;
    }
    Some(pairs)
}

/// Signed congruence proportion: (congruent - incongruent) / pairs, in
/// [-1, +1] with +1 fully stereotype-congruent.
pub fn score_implicit_item(
    pairs: &[(String, String)],
    item: &Item,
    key: &TranscriptKey,
) -> ItemScore {
    let lex = item.lexicons.as_ref().expect("implicit items carry lexicons");
    let mut congruent = 0i64;
    let mut incongruent = 0i64;
    for (name, attr) in pairs {
        let Some(group) = lex.group_of(name) else {
            return unparseable(key);
        };
        match lex.congruence_of(group, attr) {
            Some(Congruence::Congruent) => congruent += 1,
            Some(Congruence::Incongruent) => incongruent += 1,
            None => return unparseable(key),
        }
    }
    ItemScore {
        persona_id: key.persona_id.clone(),
        measure_id: key.measure_id.clone(),
        item_id: key.item_id.clone(),
        phase: key.phase,
        status: ScoreStatus::Scored,
        value: Some((congruent - incongruent) as f64 / pairs.len() as f64),
    }
}

fn unparseable(key: &TranscriptKey) -> ItemScore {
    ItemScore {
        persona_id: key.persona_id.clone(),
        measure_id: key.measure_id.clone(),
        item_id: key.item_id.clone(),
        phase: key.phase,
        status: ScoreStatus::Unparseable,
        value: None,
    }
}

/// Roll one persona's item scores up to a measure score.
///
/// All scores must belong to one (persona, measure, phase). The value is the
/// mean over items with status `Scored` and is withheld when the missing
/// rate exceeds `missing_threshold`.
pub fn aggregate_measure_score(
    item_scores: &[ItemScore],
    missing_threshold: f64,
) -> MeasureScore {
    let first = item_scores.first().expect("at least one item score");
    debug_assert!(item_scores.iter().all(|s| {
        s.persona_id == first.persona_id
            && s.measure_id == first.measure_id
            && s.phase == first.phase
    }));

    let total = item_scores.len();
    let scored: Vec<f64> = item_scores.iter().filter_map(|s| s.value).collect();
    let n_items_scored = scored.len();
    let missing_rate = 1.0 - n_items_scored as f64 / total as f64;
    let value = if missing_rate <= missing_threshold && n_items_scored > 0 {
        Some(scored.iter().sum::<f64>() / n_items_scored as f64)
    } else {
        None
    };

    MeasureScore {
        persona_id: first.persona_id.clone(),
        measure_id: first.measure_id.clone(),
        phase: first.phase,
        value,
        missing_rate,
        n_items_scored,
    }
}

/// Full scoring output for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub item_scores: Vec<ItemScore>,
    pub measure_scores: Vec<MeasureScore>,
}

/// Score one transcript against its item's rules.
pub fn score_transcript(measure: &MeasureSpec, item: &Item, transcript: &Transcript) -> ItemScore {
    let key = &transcript.key;
    match measure.kind {
        MeasureKind::Explicit => {
            let parsed = parse_explicit(&transcript.raw_response, &measure.anchors);
            score_explicit_item(&parsed, item, key)
        }
        MeasureKind::ImplicitAssociation | MeasureKind::ImplicitVignette => {
            match parse_pairings(&transcript.raw_response, item) {
                Some(pairs) => score_implicit_item(&pairs, item, key),
                None => unparseable(key),
            }
        }
    }
}

/// Score an entire run: one item score per planned (persona, item, phase)
/// key — keys absent from the transcripts score as `Missing` — plus the
/// per-persona measure rollups. Output order is canonical key order.
pub fn score_run(
    measures: &[MeasureSpec],
    personas: &[Persona],
    phases: &[Phase],
    transcripts: &[Transcript],
    missing_threshold: f64,
) -> ScoreSheet {
    let by_key: BTreeMap<&TranscriptKey, &Transcript> =
        transcripts.iter().map(|t| (&t.key, t)).collect();

    let mut phases: Vec<Phase> = phases.to_vec();
    phases.sort();
    phases.dedup();

    let mut item_scores = Vec::new();
    let mut measure_scores = Vec::new();
    for &phase in &phases {
        for persona in personas {
            for measure in measures {
                let mut group = Vec::with_capacity(measure.items.len());
                for item in &measure.items {
                    let key = TranscriptKey {
                        persona_id: persona.id.clone(),
                        measure_id: measure.id.clone(),
                        item_id: item.id.clone(),
                        repetition: 0,
                        phase,
                    };
                    let score = match by_key.get(&key) {
                        Some(t) => score_transcript(measure, item, t),
                        None => ItemScore {
                            persona_id: key.persona_id,
                            measure_id: key.measure_id,
                            item_id: key.item_id,
                            phase,
                            status: ScoreStatus::Missing,
                            value: None,
                        },
                    };
                    group.push(score);
                }
                measure_scores.push(aggregate_measure_score(&group, missing_threshold));
                item_scores.extend(group);
            }
        }
    }
    ScoreSheet { item_scores, measure_scores }
}

// ---------------------------------------------------------------------------
// CSV import/export
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ScoreIoError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field at record {record}: {detail}")]
    BadField { record: usize, detail: String },
}

fn phase_from_str(s: &str, record: usize) -> Result<Phase, ScoreIoError> {
    match s {
        "test" => Ok(Phase::Test),
        "retest" => Ok(Phase::Retest),
        other => Err(ScoreIoError::BadField {
            record,
            detail: format!("unknown phase '{other}'"),
        }),
    }
}

fn status_from_str(s: &str, record: usize) -> Result<ScoreStatus, ScoreIoError> {
    match s {
        "scored" => Ok(ScoreStatus::Scored),
        "refused" => Ok(ScoreStatus::Refused),
        "unparseable" => Ok(ScoreStatus::Unparseable),
        "missing" => Ok(ScoreStatus::Missing),
        other => Err(ScoreIoError::BadField {
            record,
            detail: format!("unknown status '{other}'"),
        }),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str, record: usize) -> Result<Option<f64>, ScoreIoError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| ScoreIoError::BadField {
        record,
        detail: format!("bad float '{s}': {e}"),
    })
}

/// Write item scores as CSV. `provenance` is embedded as a leading `#`
/// comment line; readers skip it.
pub fn write_item_scores_csv(
    mut out: impl Write,
    scores: &[ItemScore],
    provenance: &str,
) -> Result<(), ScoreIoError> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["persona_id", "measure_id", "item_id", "phase", "status", "value"])?;
    for s in scores {
        w.write_record([
            s.persona_id.as_str(),
            s.measure_id.as_str(),
            s.item_id.as_str(),
            &s.phase.to_string(),
            &s.status.to_string(),
            &fmt_opt(s.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_item_scores_csv(input: &str) -> Result<Vec<ItemScore>, ScoreIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input.as_bytes());
    let mut scores = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        scores.push(ItemScore {
            persona_id: record[0].to_string(),
            measure_id: record[1].to_string(),
            item_id: record[2].to_string(),
            phase: phase_from_str(&record[3], idx)?,
            status: status_from_str(&record[4], idx)?,
            value: parse_opt(&record[5], idx)?,
        });
    }
    Ok(scores)
}

/// Write measure scores as CSV with a leading provenance comment line.
pub fn write_measure_scores_csv(
    mut out: impl Write,
    scores: &[MeasureScore],
    provenance: &str,
) -> Result<(), ScoreIoError> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "persona_id",
        "measure_id",
        "phase",
        "value",
        "missing_rate",
        "n_items_scored",
    ])?;
    for s in scores {
        w.write_record([
            s.persona_id.as_str(),
            s.measure_id.as_str(),
            &s.phase.to_string(),
            &fmt_opt(s.value),
            &s.missing_rate.to_string(),
            &s.n_items_scored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measure_scores_csv(input: &str) -> Result<Vec<MeasureScore>, ScoreIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input.as_bytes());
    let mut scores = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        scores.push(MeasureScore {
            persona_id: record[0].to_string(),
            measure_id: record[1].to_string(),
            phase: phase_from_str(&record[2], idx)?,
            value: parse_opt(&record[3], idx)?,
            missing_rate: record[4].parse().map_err(|e| ScoreIoError::BadField {
                record: idx,
                detail: format!("bad missing_rate: {e}"),
            })?,
            n_items_scored: record[5].parse().map_err(|e| ScoreIoError::BadField {
                record: idx,
                detail: format!("bad n_items_scored: {e}"),
            })?,
        });
    }
    Ok(scores)
}
