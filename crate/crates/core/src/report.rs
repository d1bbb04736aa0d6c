//! Analysis-report assembly and rendering: descriptives, the test-retest
//! reliability table, split-half reliability, and the cross-measure validity
//! matrix, exported as JSON and as a Markdown document.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scoring::{MeasureScore, ScoreIoError, ScoreSheet};
use crate::stats::{
    descriptives, split_half, test_retest_report, validity_matrix, Descriptives,
    ExpectedRelation, ReliabilityRow, SplitHalfResult, SplitScheme, Thresholds, ValidityMatrix,
};
use crate::protocol::Phase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptivesEntry {
    pub measure_id: String,
    pub phase: Phase,
    pub stats: Descriptives,
}

/// Reliability table entry; the row is absent (with a note) when it cannot
/// be computed, e.g. when only one phase was administered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEntry {
    pub measure_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<ReliabilityRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfEntry {
    pub measure_id: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SplitHalfResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The complete analysis output. Every report embeds the provenance its
/// producer supplies (config snapshot, seeds, input hashes) so results are
/// traceable and reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: serde_json::Value,
    pub thresholds: Thresholds,
    pub split_scheme: SplitScheme,
    pub descriptives: Vec<DescriptivesEntry>,
    pub reliability: Vec<ReliabilityEntry>,
    pub split_half: Vec<SplitHalfEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<ValidityMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvi: Option<serde_json::Value>,
}

/// Which construct relation to assume per measure pair when judging
/// validity. Pairs not listed count as same-construct.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RelationSpec {
    #[serde(default)]
    pub different_construct_pairs: Vec<(String, String)>,
}

impl RelationSpec {
    pub fn relation_of(&self, a: &str, b: &str) -> ExpectedRelation {
        let listed = self.different_construct_pairs.iter().any(|(x, y)| {
            (x == a && y == b) || (x == b && y == a)
        });
        if listed {
            ExpectedRelation::DifferentConstruct
        } else {
            ExpectedRelation::SameConstruct
        }
    }
}

/// Assemble the full analysis from a score sheet.
///
/// Personas are aligned across measures by sorted persona id; missing
/// entries stay missing and are pairwise-deleted inside each statistic. The
/// validity matrix correlates test-phase scores (or retest scores when the
/// run had no test phase).
pub fn analyze_scores(
    sheet: &ScoreSheet,
    thresholds: &Thresholds,
    scheme: SplitScheme,
    relations: &RelationSpec,
) -> AnalysisReport {
    let measure_ids: Vec<String> = {
        let set: BTreeSet<&str> =
            sheet.measure_scores.iter().map(|s| s.measure_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let persona_ids: Vec<String> = {
        let set: BTreeSet<&str> =
            sheet.measure_scores.iter().map(|s| s.persona_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let phases: Vec<Phase> = {
        let mut v: Vec<Phase> = sheet
            .measure_scores
            .iter()
            .map(|s| s.phase)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        v.sort();
        v
    };

    let score_vector = |measure_id: &str, phase: Phase| -> Vec<Option<f64>> {
        persona_ids
            .iter()
            .map(|pid| {
                sheet
                    .measure_scores
                    .iter()
                    .find(|s| {
                        s.measure_id == measure_id && s.phase == phase && &s.persona_id == pid
                    })
                    .and_then(|s: &MeasureScore| s.value)
            })
            .collect()
    };

    let mut descriptive_entries = Vec::new();
    for measure_id in &measure_ids {
        for &phase in &phases {
            let values = score_vector(measure_id, phase);
            descriptive_entries.push(DescriptivesEntry {
                measure_id: measure_id.clone(),
                phase,
                stats: descriptives(&values),
            });
        }
    }

    let both_phases = phases.contains(&Phase::Test) && phases.contains(&Phase::Retest);
    let reliability = measure_ids
        .iter()
        .map(|measure_id| {
            if !both_phases {
                return ReliabilityEntry {
                    measure_id: measure_id.clone(),
                    row: None,
                    note: Some("retest unavailable".into()),
                };
            }
            let test = score_vector(measure_id, Phase::Test);
            let retest = score_vector(measure_id, Phase::Retest);
            match test_retest_report(measure_id, &test, &retest, thresholds) {
                Ok(row) => ReliabilityEntry { measure_id: measure_id.clone(), row: Some(row), note: None },
                Err(e) => ReliabilityEntry {
                    measure_id: measure_id.clone(),
                    row: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut split_entries = Vec::new();
    for measure_id in &measure_ids {
        for &phase in &phases {
            let matrix = item_matrix(sheet, &persona_ids, measure_id, phase);
            let entry = match split_half(&matrix, scheme) {
                Ok(result) => SplitHalfEntry {
                    measure_id: measure_id.clone(),
                    phase,
                    result: Some(result),
                    note: None,
                },
                Err(e) => SplitHalfEntry {
                    measure_id: measure_id.clone(),
                    phase,
                    result: None,
                    note: Some(e.to_string()),
                },
            };
            split_entries.push(entry);
        }
    }

    let validity_phase = if phases.contains(&Phase::Test) { Phase::Test } else { phases.first().copied().unwrap_or(Phase::Test) };
    let validity = if measure_ids.len() >= 2 {
        let vectors: Vec<Vec<Option<f64>>> = measure_ids
            .iter()
            .map(|m| score_vector(m, validity_phase))
            .collect();
        validity_matrix(
            &measure_ids,
            &vectors,
            |a, b| relations.relation_of(a, b),
            thresholds,
        )
        .ok()
    } else {
        None
    };

    AnalysisReport {
        provenance: serde_json::Value::Null,
        thresholds: *thresholds,
        split_scheme: scheme,
        descriptives: descriptive_entries,
        reliability,
        split_half: split_entries,
        validity,
        cvi: None,
    }
}

/// Item-score matrix for one (measure, phase): rows follow `persona_ids`,
/// columns follow the instrument's item order as it appears in the sheet.
fn item_matrix(
    sheet: &ScoreSheet,
    persona_ids: &[String],
    measure_id: &str,
    phase: Phase,
) -> Vec<Vec<Option<f64>>> {
    let mut item_ids: Vec<&str> = Vec::new();
    for s in &sheet.item_scores {
        if s.measure_id == measure_id && !item_ids.contains(&s.item_id.as_str()) {
            item_ids.push(&s.item_id);
        }
    }
    persona_ids
        .iter()
        .map(|pid| {
            item_ids
                .iter()
                .map(|iid| {
                    sheet
                        .item_scores
                        .iter()
                        .find(|s| {
                            s.measure_id == measure_id
                                && s.phase == phase
                                && &s.persona_id == pid
                                && &s.item_id == iid
                        })
                        .and_then(|s| s.value)
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

fn fmt_rho(rho: f64) -> String {
    let s = format!("{rho:.3}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() || trimmed == "-" {
        "0".into()
    } else {
        trimmed.to_string()
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "—".into())
}

/// Exactly the columns of the reliability summary table.
pub const RELIABILITY_TABLE_COLUMNS: [&str; 7] = [
    "Measure",
    "Spearman Correlation Coefficient",
    "p-value",
    "Bivariate Normality",
    "Test Normality",
    "Retest Normality",
    "Reliability Interpretation",
];

/// Render the report as a Markdown document with the reliability table, the
/// split-half and descriptives tables, and the validity matrix.
pub fn render_markdown(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str("# Analysis report\n\n");

    out.push_str("## Test-retest reliability\n\n");
    out.push_str(&format!("| {} |\n", RELIABILITY_TABLE_COLUMNS.join(" | ")));
    out.push_str(&format!("|{}\n", " --- |".repeat(RELIABILITY_TABLE_COLUMNS.len())));
    for entry in &report.reliability {
        match (&entry.row, &entry.note) {
            (Some(row), _) => out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                row.measure_id,
                fmt_rho(row.spearman_rho),
                fmt_p(row.p_value),
                yes_no(row.bivariate_normal),
                yes_no(row.test_normal),
                yes_no(row.retest_normal),
                row.interpretation.as_table_text(),
            )),
            (None, note) => out.push_str(&format!(
                "| {} | — | — | — | — | — | {} |\n",
                entry.measure_id,
                note.as_deref().unwrap_or("unavailable"),
            )),
        }
    }
    out.push_str(&format!(
        "\nInterpretation thresholds: High at rho >= {}, Moderate at rho >= {}, alpha = {}.\n\n",
        report.thresholds.high, report.thresholds.moderate, report.thresholds.alpha
    ));

    out.push_str("## Split-half reliability\n\n");
    out.push_str(&format!(
        "Scheme: {}.\n\n",
        match report.split_scheme {
            SplitScheme::OddEven => "odd-even",
            SplitScheme::FirstSecond => "first-second",
        }
    ));
    out.push_str("| Measure | Phase | r(half) | Corrected (Spearman-Brown) | Personas |\n");
    out.push_str("| --- | --- | --- | --- | --- |\n");
    for entry in &report.split_half {
        match (&entry.result, &entry.note) {
            (Some(r), _) => out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                entry.measure_id,
                entry.phase,
                fmt_rho(r.r_half),
                fmt_rho(r.corrected),
                r.n_personas
            )),
            (None, note) => out.push_str(&format!(
                "| {} | {} | — | — | {} |\n",
                entry.measure_id,
                entry.phase,
                note.as_deref().unwrap_or("unavailable"),
            )),
        }
    }
    out.push('\n');

    out.push_str("## Descriptive statistics\n\n");
    out.push_str(
        "| Measure | Phase | n | n missing | Mean | SD | Median | Q1 | Q3 | Min | Max | Skewness | Excess kurtosis |\n",
    );
    out.push_str("| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |\n");
    for entry in &report.descriptives {
        let s = &entry.stats;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            entry.measure_id,
            entry.phase,
            s.n,
            s.n_missing,
            fmt_opt(s.mean),
            fmt_opt(s.sd),
            fmt_opt(s.median),
            fmt_opt(s.q1),
            fmt_opt(s.q3),
            fmt_opt(s.min),
            fmt_opt(s.max),
            fmt_opt(s.skewness),
            fmt_opt(s.excess_kurtosis),
        ));
    }
    out.push('\n');

    if let Some(validity) = &report.validity {
        out.push_str("## Validity matrix\n\n");
        out.push_str(&format!(
            "Convergence threshold: rho >= {}.\n\n",
            report.thresholds.convergent
        ));
        out.push_str("| Measure A | Measure B | rho | p-value | n | Relation | Verdict |\n");
        out.push_str("| --- | --- | --- | --- | --- | --- | --- |\n");
        for cell in &validity.cells {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                cell.measure_a,
                cell.measure_b,
                fmt_rho(cell.rho),
                fmt_p(cell.p_value),
                cell.n_used,
                match cell.relation {
                    ExpectedRelation::SameConstruct => "same construct",
                    ExpectedRelation::DifferentConstruct => "different construct",
                },
                match cell.verdict {
                    crate::stats::ValidityVerdict::Convergent => "Convergent",
                    crate::stats::ValidityVerdict::NotConvergent => "Not convergent",
                    crate::stats::ValidityVerdict::DiscriminantOk => "Discriminant OK",
                    crate::stats::ValidityVerdict::DiscriminantFailure => "Discriminant failure",
                },
            ));
        }
        out.push('\n');
    }

    if !report.provenance.is_null() {
        out.push_str("## Provenance\n\n```json\n");
        out.push_str(&serde_json::to_string_pretty(&report.provenance).expect("serializable"));
        out.push_str("\n```\n");
    }

    out
}

/// Validity matrix as CSV with a provenance comment line.
pub fn write_validity_csv(
    mut out: impl Write,
    matrix: &ValidityMatrix,
    provenance: &str,
) -> Result<(), ScoreIoError> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["measure_a", "measure_b", "rho", "p_value", "n_used", "relation", "verdict"])?;
    for cell in &matrix.cells {
        w.write_record([
            cell.measure_a.as_str(),
            cell.measure_b.as_str(),
            &cell.rho.to_string(),
            &cell.p_value.to_string(),
            &cell.n_used.to_string(),
            &serde_json::to_value(cell.relation).unwrap().as_str().unwrap().to_string(),
            &serde_json::to_value(cell.verdict).unwrap().as_str().unwrap().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{ItemScore, ScoreStatus};

    fn sheet_with_two_measures(phases: &[Phase]) -> ScoreSheet {
        let mut item_scores = Vec::new();
        let mut measure_scores = Vec::new();
        for &phase in phases {
            for p in 0..30 {
                let persona_id = format!("p{p:02}");
                for m in ["alpha", "beta"] {
                    let base = (p % 7) as f64 - 3.0;
                    for i in 0..4 {
                        item_scores.push(ItemScore {
                            persona_id: persona_id.clone(),
                            measure_id: m.into(),
                            item_id: format!("i{i}"),
                            phase,
                            status: ScoreStatus::Scored,
                            value: Some(base + (i as f64) * 0.1),
                        });
                    }
                    measure_scores.push(crate::scoring::MeasureScore {
                        persona_id: persona_id.clone(),
                        measure_id: m.into(),
                        phase,
                        value: Some(base),
                        missing_rate: 0.0,
                        n_items_scored: 4,
                    });
                }
            }
        }
        ScoreSheet { item_scores, measure_scores }
    }

    #[test]
    fn report_has_reliability_rows_for_both_phases() {
        let sheet = sheet_with_two_measures(&[Phase::Test, Phase::Retest]);
        let report = analyze_scores(
            &sheet,
            &Thresholds::default(),
            SplitScheme::OddEven,
            &RelationSpec::default(),
        );
        assert_eq!(report.reliability.len(), 2);
        for entry in &report.reliability {
            let row = entry.row.as_ref().expect("both phases present");
            assert_eq!(row.spearman_rho, 1.0);
        }
        assert!(report.validity.is_some());
    }

    #[test]
    fn single_phase_marks_retest_unavailable() {
        let sheet = sheet_with_two_measures(&[Phase::Test]);
        let report = analyze_scores(
            &sheet,
            &Thresholds::default(),
            SplitScheme::OddEven,
            &RelationSpec::default(),
        );
        for entry in &report.reliability {
            assert!(entry.row.is_none());
            assert_eq!(entry.note.as_deref(), Some("retest unavailable"));
        }
        let md = render_markdown(&report);
        assert!(md.contains("retest unavailable"));
    }

    #[test]
    fn markdown_has_exactly_the_reliability_columns() {
        let sheet = sheet_with_two_measures(&[Phase::Test, Phase::Retest]);
        let report = analyze_scores(
            &sheet,
            &Thresholds::default(),
            SplitScheme::OddEven,
            &RelationSpec::default(),
        );
        let md = render_markdown(&report);
        let header = md
            .lines()
            .find(|l| l.starts_with("| Measure |"))
            .expect("reliability header present");
        let cols: Vec<&str> = header
            .trim_matches('|')
            .split('|')
            .map(str::trim)
            .collect();
        assert_eq!(cols, RELIABILITY_TABLE_COLUMNS.to_vec());
        assert!(md.contains("High test-retest reliability"));
    }

    #[test]
    fn p_and_rho_formatting() {
        assert_eq!(fmt_p(0.0005), "<0.001");
        assert_eq!(fmt_p(0.02), "0.020");
        assert_eq!(fmt_rho(1.0), "1");
        assert_eq!(fmt_rho(0.855), "0.855");
        assert_eq!(fmt_rho(0.9970000001), "0.997");
        assert_eq!(fmt_rho(0.0), "0");
    }

    #[test]
    fn relation_spec_marks_listed_pairs_different() {
        let spec = RelationSpec {
            different_construct_pairs: vec![("a".into(), "b".into())],
        };
        assert_eq!(spec.relation_of("a", "b"), ExpectedRelation::DifferentConstruct);
        assert_eq!(spec.relation_of("b", "a"), ExpectedRelation::DifferentConstruct);
        assert_eq!(spec.relation_of("a", "c"), ExpectedRelation::SameConstruct);
    }
}
