//! Measure definitions: the instrument schema, schema/invariant validation,
//! and content-validity statistics computed from expert reviews.
//!
//! A measure is stored as one JSON document (UTF-8, one measure per file).
//! Explicit measures carry Likert anchors with a scoring map; implicit
//! measures carry name/attribute lexicons plus a congruence map declaring
//! which (group, attribute) pairings count as stereotype-congruent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum item count for a usable instrument.
pub const MIN_ITEMS: usize = 10;

/// Relevance cutoff on the 4-point expert rating scale: ratings of 3 or 4
/// count the item as relevant when computing the content validity index.
pub const CVI_RELEVANCE_CUTOFF: u8 = 3;

/// What kind of instrument a measure is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    /// Direct self-report items scored from chosen Likert anchors.
    Explicit,
    /// Bias inferred from name-attribute word associations.
    ImplicitAssociation,
    /// Bias inferred from name-role assignments inside a short story.
    ImplicitVignette,
}

impl MeasureKind {
    pub fn is_implicit(self) -> bool {
        !matches!(self, MeasureKind::Explicit)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MeasureKind::Explicit => "explicit",
            MeasureKind::ImplicitAssociation => "implicit_association",
            MeasureKind::ImplicitVignette => "implicit_vignette",
        };
        f.write_str(s)
    }
}

/// A labeled response option on a Likert scale with an assigned score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub label: String,
    /// Score assigned when this anchor is chosen. Ignored for the refusal
    /// anchor.
    pub score: i32,
    /// A refusal option ("I do not wish to answer") is missing data, not a
    /// score.
    #[serde(default)]
    pub is_refusal: bool,
}

/// Which name group a congruence rule refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NameGroup {
    A,
    B,
}

impl fmt::Display for NameGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NameGroup::A => "a",
            NameGroup::B => "b",
        })
    }
}

/// Stereotype-congruence label for one (group, attribute) pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Congruence {
    Congruent,
    Incongruent,
}

impl Congruence {
    pub fn flipped(self) -> Self {
        match self {
            Congruence::Congruent => Congruence::Incongruent,
            Congruence::Incongruent => Congruence::Congruent,
        }
    }
}

/// One rule of the congruence map: pairing a name from `group` with `attr`
/// is stereotype-congruent or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongruenceRule {
    pub group: NameGroup,
    pub attr: String,
    pub label: Congruence,
}

/// Name and attribute lexicons for an implicit item.
///
/// The two attribute lists are serialized as `positive_attrs`/`negative_attrs`
/// for association items; vignette files may use the `task_a`/`task_b`
/// aliases instead. Serialization always emits the canonical names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitLexicons {
    pub group_a_names: Vec<String>,
    pub group_b_names: Vec<String>,
    #[serde(rename = "positive_attrs", alias = "task_a")]
    pub attrs_a: Vec<String>,
    #[serde(rename = "negative_attrs", alias = "task_b")]
    pub attrs_b: Vec<String>,
    pub congruence: Vec<CongruenceRule>,
}

impl ImplicitLexicons {
    /// All attributes, first list then second, original order.
    pub fn all_attrs(&self) -> impl Iterator<Item = &str> {
        self.attrs_a.iter().chain(self.attrs_b.iter()).map(String::as_str)
    }

    /// All names, group A then group B, original order.
    pub fn all_names(&self) -> impl Iterator<Item = &str> {
        self.group_a_names
            .iter()
            .chain(self.group_b_names.iter())
            .map(String::as_str)
    }

    /// Group membership of a name, matched case-insensitively.
    pub fn group_of(&self, name: &str) -> Option<NameGroup> {
        let folded = name.to_lowercase();
        if self.group_a_names.iter().any(|n| n.to_lowercase() == folded) {
            Some(NameGroup::A)
        } else if self.group_b_names.iter().any(|n| n.to_lowercase() == folded) {
            Some(NameGroup::B)
        } else {
            None
        }
    }

    /// Congruence label for a (group, attribute) pairing, attribute matched
    /// case-insensitively.
    pub fn congruence_of(&self, group: NameGroup, attr: &str) -> Option<Congruence> {
        let folded = attr.to_lowercase();
        self.congruence
            .iter()
            .find(|r| r.group == group && r.attr.to_lowercase() == folded)
            .map(|r| r.label)
    }

    /// Returns a copy with every congruence label flipped.
    pub fn with_flipped_congruence(&self) -> Self {
        let mut out = self.clone();
        for rule in &mut out.congruence {
            rule.label = rule.label.flipped();
        }
        out
    }
}

/// A single question or vignette within a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub stem: String,
    /// Agreement with a reverse-keyed item indicates the low end of the
    /// construct; its score is negated. Explicit measures only.
    #[serde(default, skip_serializing_if = "is_false")]
    pub reverse_keyed: bool,
    /// Lexicons and congruence map. Implicit measures only.
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub lexicons: Option<ImplicitLexicons>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A complete instrument: construct metadata, items, anchors, scoring map,
/// and administration instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub id: String,
    pub construct: String,
    pub construct_definition: String,
    pub kind: MeasureKind,
    pub version: String,
    /// Preamble shown to the respondent, including the strict answer-format
    /// directive.
    pub instructions: String,
    /// Response options with their scoring map. Explicit measures only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<Anchor>,
    pub items: Vec<Item>,
}

impl MeasureSpec {
    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == item_id)
    }

    /// Anchors that carry a score, in file order.
    pub fn scale_anchors(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter().filter(|a| !a.is_refusal)
    }

    pub fn refusal_anchor(&self) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.is_refusal)
    }
}

/// One finding from `validate_measure`: where and what.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    /// JSON-pointer-style path to the offending field.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum MeasureError {
    /// The document does not parse as the measure schema.
    #[error("schema error at {path}: {detail}")]
    Schema { path: String, detail: String },
    /// The document parses but violates a measure invariant.
    #[error("invariant violations in measure '{measure_id}':\n{}", format_diagnostics(.diagnostics))]
    Invariant {
        measure_id: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("cannot read measure file: {0}")]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a measure document and enforce every invariant.
pub fn load_measure(source: &str) -> Result<MeasureSpec, MeasureError> {
    let spec: MeasureSpec = serde_json::from_str(source).map_err(|e| MeasureError::Schema {
        path: format!("line {}, column {}", e.line(), e.column()),
        detail: e.to_string(),
    })?;
    let diagnostics = validate_measure(&spec);
    if diagnostics.is_empty() {
        Ok(spec)
    } else {
        Err(MeasureError::Invariant {
            measure_id: spec.id,
            diagnostics,
        })
    }
}

/// Load a measure from a file path.
pub fn load_measure_file(path: &Path) -> Result<MeasureSpec, MeasureError> {
    let source = std::fs::read_to_string(path)?;
    load_measure(&source)
}

/// Check every invariant and cross-field constraint. Returns an empty list
/// iff the spec is acceptable.
pub fn validate_measure(spec: &MeasureSpec) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let diag = |diags: &mut Vec<Diagnostic>, path: String, message: String| {
        diags.push(Diagnostic { path, message });
    };

    if spec.id.is_empty() {
        diag(&mut diags, "/id".into(), "measure id must be nonempty".into());
    }

    if spec.items.len() < MIN_ITEMS {
        diag(
            &mut diags,
            "/items".into(),
            format!(
                "a measure needs at least {MIN_ITEMS} items, found {}",
                spec.items.len()
            ),
        );
    }

    let mut seen_items = BTreeSet::new();
    for (idx, item) in spec.items.iter().enumerate() {
        if !seen_items.insert(item.id.as_str()) {
            diag(
                &mut diags,
                format!("/items/{idx}/id"),
                format!("duplicate item id '{}'", item.id),
            );
        }
    }

    match spec.kind {
        MeasureKind::Explicit => validate_explicit(spec, &mut diags),
        MeasureKind::ImplicitAssociation | MeasureKind::ImplicitVignette => {
            validate_implicit(spec, &mut diags)
        }
    }

    diags
}

fn validate_explicit(spec: &MeasureSpec, diags: &mut Vec<Diagnostic>) {
    let scale: Vec<&Anchor> = spec.scale_anchors().collect();
    if scale.is_empty() {
        diags.push(Diagnostic {
            path: "/anchors".into(),
            message: "an explicit measure needs at least one non-refusal anchor".into(),
        });
    }

    let refusals = spec.anchors.iter().filter(|a| a.is_refusal).count();
    if refusals != 1 {
        diags.push(Diagnostic {
            path: "/anchors".into(),
            message: format!("expected exactly one refusal anchor, found {refusals}"),
        });
    }

    let mut labels = BTreeSet::new();
    for (idx, anchor) in spec.anchors.iter().enumerate() {
        if !labels.insert(anchor.label.to_lowercase()) {
            diags.push(Diagnostic {
                path: format!("/anchors/{idx}/label"),
                message: format!("duplicate anchor label '{}'", anchor.label),
            });
        }
    }

    let mut scores = BTreeSet::new();
    for (idx, anchor) in spec.anchors.iter().enumerate() {
        if !anchor.is_refusal && !scores.insert(anchor.score) {
            diags.push(Diagnostic {
                path: format!("/anchors/{idx}/score"),
                message: format!("duplicate anchor score {}", anchor.score),
            });
        }
    }

    for (idx, item) in spec.items.iter().enumerate() {
        if item.lexicons.is_some() {
            diags.push(Diagnostic {
                path: format!("/items/{idx}"),
                message: "explicit items must not carry implicit lexicons".into(),
            });
        }
    }
}

fn validate_implicit(spec: &MeasureSpec, diags: &mut Vec<Diagnostic>) {
    if !spec.anchors.is_empty() {
        diags.push(Diagnostic {
            path: "/anchors".into(),
            message: "implicit measures do not use anchors".into(),
        });
    }

    for (idx, item) in spec.items.iter().enumerate() {
        let path = format!("/items/{idx}");
        if item.reverse_keyed {
            diags.push(Diagnostic {
                path: path.clone(),
                message: "reverse keying applies only to explicit items".into(),
            });
        }
        let Some(lex) = &item.lexicons else {
            diags.push(Diagnostic {
                path,
                message: "implicit items need name/attribute lexicons".into(),
            });
            continue;
        };

        let sets: [(&str, &Vec<String>); 4] = [
            ("group_a_names", &lex.group_a_names),
            ("group_b_names", &lex.group_b_names),
            ("positive_attrs", &lex.attrs_a),
            ("negative_attrs", &lex.attrs_b),
        ];
        for (name, set) in &sets {
            if set.is_empty() {
                diags.push(Diagnostic {
                    path: format!("{path}/{name}"),
                    message: "lexicon must be nonempty".into(),
                });
            }
        }
        // Pairwise disjointness across all four lexicons, case-insensitive.
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                let left: BTreeSet<String> =
                    sets[i].1.iter().map(|s| s.to_lowercase()).collect();
                for word in sets[j].1 {
                    if left.contains(&word.to_lowercase()) {
                        diags.push(Diagnostic {
                            path: format!("{path}/{}", sets[j].0),
                            message: format!(
                                "'{word}' also appears in {}; lexicons must be disjoint",
                                sets[i].0
                            ),
                        });
                    }
                }
            }
        }

        // The congruence map must cover every (group, attribute) pair exactly once.
        let mut seen: BTreeMap<(NameGroup, String), usize> = BTreeMap::new();
        for rule in &lex.congruence {
            *seen.entry((rule.group, rule.attr.to_lowercase())).or_default() += 1;
        }
        for group in [NameGroup::A, NameGroup::B] {
            for attr in lex.all_attrs() {
                match seen.get(&(group, attr.to_lowercase())).copied().unwrap_or(0) {
                    0 => diags.push(Diagnostic {
                        path: format!("{path}/congruence"),
                        message: format!("missing congruence label for (group {group}, '{attr}')"),
                    }),
                    1 => {}
                    n => diags.push(Diagnostic {
                        path: format!("{path}/congruence"),
                        message: format!(
                            "(group {group}, '{attr}') labeled {n} times; expected once"
                        ),
                    }),
                }
            }
        }
        for rule in &lex.congruence {
            if !lex
                .all_attrs()
                .any(|a| a.to_lowercase() == rule.attr.to_lowercase())
            {
                diags.push(Diagnostic {
                    path: format!("{path}/congruence"),
                    message: format!("congruence rule names unknown attribute '{}'", rule.attr),
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Expert review and content validity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerRole {
    PsychometricsExpert,
    AiExpert,
    Other,
}

/// One expert's item-relevance ratings for a measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertReview {
    pub reviewer_id: String,
    pub reviewer_role: ReviewerRole,
    /// item id -> relevance rating on a 1..=4 scale.
    pub ratings: BTreeMap<String, u8>,
    #[serde(default)]
    pub comments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemCvi {
    pub item_id: String,
    /// Proportion of reviewers rating the item relevant (rating >= 3).
    pub i_cvi: f64,
}

/// Content validity index report: per-item I-CVI plus the scale average.
#[derive(Debug, Clone, Serialize)]
pub struct CviReport {
    pub measure_id: String,
    pub n_reviews: usize,
    pub items: Vec<ItemCvi>,
    /// S-CVI/Ave: mean of the per-item I-CVIs.
    pub s_cvi_ave: f64,
}

#[derive(Debug, Error)]
pub enum CviError {
    #[error("no reviews provided")]
    EmptyReviews,
    #[error("reviewer '{reviewer_id}' did not rate item '{item_id}'")]
    IncompleteReview { reviewer_id: String, item_id: String },
    #[error("reviewer '{reviewer_id}' rated item '{item_id}' {rating}; ratings must be 1..=4")]
    InvalidRating {
        reviewer_id: String,
        item_id: String,
        rating: u8,
    },
}

/// Compute per-item I-CVI and the scale-level S-CVI/Ave.
///
/// Every review must rate every item of the measure. I-CVI is the proportion
/// of reviewers giving the item a rating of 3 or 4.
pub fn content_validity_index(
    spec: &MeasureSpec,
    reviews: &[ExpertReview],
) -> Result<CviReport, CviError> {
    if reviews.is_empty() {
        return Err(CviError::EmptyReviews);
    }
    for review in reviews {
        for item in &spec.items {
            match review.ratings.get(&item.id) {
                None => {
                    return Err(CviError::IncompleteReview {
                        reviewer_id: review.reviewer_id.clone(),
                        item_id: item.id.clone(),
                    })
                }
                Some(&r) if !(1..=4).contains(&r) => {
                    return Err(CviError::InvalidRating {
                        reviewer_id: review.reviewer_id.clone(),
                        item_id: item.id.clone(),
                        rating: r,
                    })
                }
                Some(_) => {}
            }
        }
    }

    let n = reviews.len();
    let items: Vec<ItemCvi> = spec
        .items
        .iter()
        .map(|item| {
            let relevant = reviews
                .iter()
                .filter(|r| r.ratings[&item.id] >= CVI_RELEVANCE_CUTOFF)
                .count();
            ItemCvi {
                item_id: item.id.clone(),
                i_cvi: relevant as f64 / n as f64,
            }
        })
        .collect();
    let s_cvi_ave = items.iter().map(|i| i.i_cvi).sum::<f64>() / items.len() as f64;

    Ok(CviReport {
        measure_id: spec.id.clone(),
        n_reviews: n,
        items,
        s_cvi_ave,
    })
}

/// Render a CVI report as a plain-text table.
pub fn render_cvi_table(report: &CviReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Content validity for '{}' ({} reviews)\n",
        report.measure_id, report.n_reviews
    ));
    out.push_str("item id          I-CVI\n");
    for item in &report.items {
        out.push_str(&format!("{:<16} {:.3}\n", item.item_id, item.i_cvi));
    }
    out.push_str(&format!("S-CVI/Ave        {:.3}\n", report.s_cvi_ave));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn likert_anchors() -> Vec<Anchor> {
        vec![
            Anchor { label: "strongly agree".into(), score: 2, is_refusal: false },
            Anchor { label: "somewhat agree".into(), score: 1, is_refusal: false },
            Anchor { label: "neither agree nor disagree".into(), score: 0, is_refusal: false },
            Anchor { label: "somewhat disagree".into(), score: -1, is_refusal: false },
            Anchor { label: "strongly disagree".into(), score: -2, is_refusal: false },
            Anchor { label: "I do not wish to answer".into(), score: 0, is_refusal: true },
        ]
    }

    fn explicit_spec(n_items: usize) -> MeasureSpec {
        MeasureSpec {
            id: "explicit-test".into(),
            construct: "test construct".into(),
            construct_definition: "a construct used in tests".into(),
            kind: MeasureKind::Explicit,
            version: "1.0".into(),
            instructions: "Answer each statement with one allowed option.".into(),
            anchors: likert_anchors(),
            items: (0..n_items)
                .map(|i| Item {
                    id: format!("item-{i:02}"),
                    stem: format!("Statement number {i}."),
                    reverse_keyed: i % 4 == 3,
                    lexicons: None,
                })
                .collect(),
        }
    }

    fn association_item(id: &str) -> Item {
        Item {
            id: id.into(),
            stem: "Associate each person with one word.".into(),
            reverse_keyed: false,
            lexicons: Some(ImplicitLexicons {
                group_a_names: vec!["Julia".into()],
                group_b_names: vec!["Latisha".into()],
                attrs_a: vec!["gentle".into()],
                attrs_b: vec!["aggressive".into()],
                congruence: vec![
                    CongruenceRule { group: NameGroup::A, attr: "gentle".into(), label: Congruence::Congruent },
                    CongruenceRule { group: NameGroup::A, attr: "aggressive".into(), label: Congruence::Incongruent },
                    CongruenceRule { group: NameGroup::B, attr: "gentle".into(), label: Congruence::Incongruent },
                    CongruenceRule { group: NameGroup::B, attr: "aggressive".into(), label: Congruence::Congruent },
                ],
            }),
        }
    }

    fn implicit_spec(n_items: usize) -> MeasureSpec {
        MeasureSpec {
            id: "implicit-test".into(),
            construct: "test construct".into(),
            construct_definition: "a construct used in tests".into(),
            kind: MeasureKind::ImplicitAssociation,
            version: "1.0".into(),
            instructions: "Reply with a single PAIRS line.".into(),
            anchors: vec![],
            items: (0..n_items).map(|i| association_item(&format!("assoc-{i:02}"))).collect(),
        }
    }

    #[test]
    fn well_formed_explicit_spec_loads() {
        let spec = explicit_spec(20);
        let json = serde_json::to_string(&spec).unwrap();
        let loaded = load_measure(&json).unwrap();
        assert_eq!(loaded, spec);
        assert_eq!(loaded.items.len(), 20);
        assert_eq!(loaded.anchors.len(), 6);
    }

    #[test]
    fn zero_items_is_an_invariant_error() {
        let spec = explicit_spec(0);
        let json = serde_json::to_string(&spec).unwrap();
        match load_measure(&json) {
            Err(MeasureError::Invariant { diagnostics, .. }) => {
                assert!(diagnostics.iter().any(|d| d.message.contains("at least 10")));
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn nine_items_is_too_few() {
        let diags = validate_measure(&explicit_spec(9));
        assert!(diags.iter().any(|d| d.path == "/items"));
    }

    #[test]
    fn duplicate_anchor_labels_rejected() {
        let mut spec = explicit_spec(10);
        spec.anchors[1].label = "agree".into();
        spec.anchors[2].label = "agree".into();
        spec.anchors[2].score = 5;
        let json = serde_json::to_string(&spec).unwrap();
        match load_measure(&json) {
            Err(MeasureError::Invariant { diagnostics, .. }) => {
                assert!(diagnostics.iter().any(|d| d.message.contains("duplicate anchor label")));
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_item_ids_rejected() {
        let mut spec = explicit_spec(10);
        spec.items[3].id = spec.items[2].id.clone();
        let diags = validate_measure(&spec);
        assert!(diags.iter().any(|d| d.message.contains("duplicate item id")));
    }

    #[test]
    fn missing_refusal_anchor_rejected() {
        let mut spec = explicit_spec(10);
        spec.anchors.retain(|a| !a.is_refusal);
        let diags = validate_measure(&spec);
        assert!(diags.iter().any(|d| d.message.contains("refusal")));
    }

    #[test]
    fn duplicate_scale_scores_rejected() {
        let mut spec = explicit_spec(10);
        spec.anchors[1].score = 2; // collides with "strongly agree"
        let diags = validate_measure(&spec);
        assert!(diags.iter().any(|d| d.message.contains("duplicate anchor score")));
    }

    #[test]
    fn malformed_document_is_a_schema_error() {
        match load_measure("{\"id\": 3}") {
            Err(MeasureError::Schema { .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn valid_spec_has_no_diagnostics() {
        assert!(validate_measure(&explicit_spec(20)).is_empty());
        assert!(validate_measure(&implicit_spec(10)).is_empty());
    }

    #[test]
    fn overlapping_lexicons_flagged() {
        let mut spec = implicit_spec(10);
        if let Some(lex) = &mut spec.items[0].lexicons {
            lex.group_b_names = vec!["Julia".into()];
        }
        let diags = validate_measure(&spec);
        assert_eq!(
            diags.iter().filter(|d| d.message.contains("disjoint")).count(),
            1
        );
    }

    #[test]
    fn missing_congruence_pair_flagged() {
        let mut spec = implicit_spec(10);
        if let Some(lex) = &mut spec.items[0].lexicons {
            lex.congruence.pop();
        }
        let diags = validate_measure(&spec);
        assert_eq!(
            diags.iter().filter(|d| d.message.contains("missing congruence")).count(),
            1
        );
    }

    #[test]
    fn doubled_congruence_pair_flagged() {
        let mut spec = implicit_spec(10);
        if let Some(lex) = &mut spec.items[0].lexicons {
            let dup = lex.congruence[0].clone();
            lex.congruence.push(dup);
        }
        let diags = validate_measure(&spec);
        assert!(diags.iter().any(|d| d.message.contains("labeled 2 times")));
    }

    #[test]
    fn vignette_task_aliases_accepted() {
        let json = r#"{
            "id": "vig", "construct": "c", "construct_definition": "d",
            "kind": "implicit_vignette", "version": "1", "instructions": "x",
            "items": [
                {"id": "v-00", "stem": "s",
                 "group_a_names": ["Ben"], "group_b_names": ["Hakeem"],
                 "task_a": ["financial success"], "task_b": ["racial equity"],
                 "congruence": [
                    {"group": "a", "attr": "financial success", "label": "congruent"},
                    {"group": "a", "attr": "racial equity", "label": "incongruent"},
                    {"group": "b", "attr": "financial success", "label": "incongruent"},
                    {"group": "b", "attr": "racial equity", "label": "congruent"}
                 ]}
            ]
        }"#;
        // Parses; fails only the >= 10 items invariant.
        match load_measure(json) {
            Err(MeasureError::Invariant { diagnostics, .. }) => {
                assert!(diagnostics.iter().all(|d| d.path == "/items"));
            }
            other => panic!("expected item-count invariant only, got {other:?}"),
        }
    }

    fn review(id: &str, rating: u8, spec: &MeasureSpec) -> ExpertReview {
        ExpertReview {
            reviewer_id: id.into(),
            reviewer_role: ReviewerRole::PsychometricsExpert,
            ratings: spec.items.iter().map(|i| (i.id.clone(), rating)).collect(),
            comments: String::new(),
        }
    }

    #[test]
    fn cvi_all_relevant_is_one() {
        let spec = explicit_spec(10);
        let reviews = vec![review("r1", 4, &spec), review("r2", 4, &spec), review("r3", 4, &spec)];
        let report = content_validity_index(&spec, &reviews).unwrap();
        assert!(report.items.iter().all(|i| i.i_cvi == 1.0));
        assert_eq!(report.s_cvi_ave, 1.0);
    }

    #[test]
    fn cvi_two_of_three_relevant() {
        let spec = explicit_spec(10);
        let mut reviews = vec![review("r1", 4, &spec), review("r2", 3, &spec), review("r3", 1, &spec)];
        reviews[2].reviewer_role = ReviewerRole::AiExpert;
        let report = content_validity_index(&spec, &reviews).unwrap();
        for item in &report.items {
            assert_eq!(item.i_cvi, 2.0 / 3.0);
        }
    }

    #[test]
    fn scale_cvi_is_mean_of_item_cvis() {
        let spec = explicit_spec(10);
        // Half the items rated relevant by both reviewers, half by only one.
        let mut r1 = review("r1", 4, &spec);
        let r2 = review("r2", 4, &spec);
        for (idx, item) in spec.items.iter().enumerate() {
            if idx % 2 == 1 {
                r1.ratings.insert(item.id.clone(), 2);
            }
        }
        let report = content_validity_index(&spec, &[r1, r2]).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { 0.5 }).collect();
        let got: Vec<f64> = report.items.iter().map(|i| i.i_cvi).collect();
        assert_eq!(got, expected);
        assert_eq!(report.s_cvi_ave, 0.75);
    }

    #[test]
    fn cvi_requires_reviews() {
        let spec = explicit_spec(10);
        assert!(matches!(
            content_validity_index(&spec, &[]),
            Err(CviError::EmptyReviews)
        ));
    }

    #[test]
    fn cvi_requires_complete_reviews() {
        let spec = explicit_spec(10);
        let mut r = review("r1", 4, &spec);
        r.ratings.remove("item-03");
        match content_validity_index(&spec, &[r]) {
            Err(CviError::IncompleteReview { item_id, .. }) => assert_eq!(item_id, "item-03"),
            other => panic!("expected incomplete review, got {other:?}"),
        }
    }

    #[test]
    fn cvi_rejects_out_of_scale_rating() {
        let spec = explicit_spec(10);
        let mut r = review("r1", 4, &spec);
        r.ratings.insert("item-00".into(), 5);
        assert!(matches!(
            content_validity_index(&spec, &[r]),
            Err(CviError::InvalidRating { rating: 5, .. })
        ));
    }

    #[test]
    fn cvi_invariant_under_review_order() {
        let spec = explicit_spec(10);
        let mut reviews = vec![review("r1", 4, &spec), review("r2", 2, &spec), review("r3", 3, &spec)];
        let a = content_validity_index(&spec, &reviews).unwrap();
        reviews.reverse();
        let b = content_validity_index(&spec, &reviews).unwrap();
        assert_eq!(a.s_cvi_ave, b.s_cvi_ave);
        for (x, y) in a.items.iter().zip(b.items.iter()) {
            assert_eq!(x.i_cvi, y.i_cvi);
        }
    }
}
