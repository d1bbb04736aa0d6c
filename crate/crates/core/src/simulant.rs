//! A deterministic synthetic respondent with a configurable latent-bias
//! model. It implements the chat-client capability, so the whole pipeline
//! runs against it without any network; every draw comes from a counter-free
//! keyed stream, so concurrent administration cannot perturb results.
//!
//! Per-key noise streams are derived by hashing (seed, persona, item, phase,
//! channel); test and retest noise are therefore independent, while the
//! pairing coin for implicit items is keyed without the phase so that a
//! zero-noise respondent answers both phases identically.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::measure::{Anchor, Congruence, Item, MeasureKind, MeasureSpec};
use crate::persona::Persona;
use crate::protocol::{
    ChatClient, ChatRequest, ClientError, Phase, TranscriptKey, EXPLICIT_DIRECTIVE_PREFIX,
    PAIRS_FORMAT_LINE, PAIRS_LINE_PREFIX,
};

/// Latent-bias model for one measure: how a persona's traits map to a bias
/// level, and how that level turns into anchor choices or pairings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    /// Contribution of each active trait to the latent bias.
    pub trait_weights: BTreeMap<String, f64>,
    pub baseline: f64,
    /// Standard deviation of the per-item Gaussian noise on the latent.
    pub noise_sigma: f64,
    /// Sharpness of the implicit congruent-vs-incongruent choice.
    pub link_slope: f64,
    /// Ascending cut points binning the latent into the non-refusal anchors
    /// (in ascending score order); must number one less than those anchors.
    pub anchor_thresholds: Vec<f64>,
    /// Probability of answering an explicit item with the refusal option.
    pub refusal_rate: f64,
    pub rng_seed: u64,
}

impl LatentModel {
    fn validate(&self, measure: &MeasureSpec) -> Result<(), SimulantError> {
        let bad = |msg: String| Err(SimulantError::BadModel(msg));
        if self.noise_sigma < 0.0 {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(self.link_slope > 0.0) {
            return bad(format!("link_slope {} must be > 0", self.link_slope));
        }
        if !(0.0..1.0).contains(&self.refusal_rate) {
            return bad(format!("refusal_rate {} must lie in [0, 1)", self.refusal_rate));
        }
        if self.anchor_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("anchor_thresholds must be strictly ascending".into());
        }
        if measure.kind == MeasureKind::Explicit {
            let scale = measure.scale_anchors().count();
            if self.anchor_thresholds.len() + 1 != scale {
                return bad(format!(
                    "measure '{}' has {scale} scale anchors; expected {} thresholds, found {}",
                    measure.id,
                    scale - 1,
                    self.anchor_thresholds.len()
                ));
            }
        }
        Ok(())
    }
}

/// Simulant configuration: a model per measure, with an optional default for
/// measures not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimulantConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<LatentModel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_measure: BTreeMap<String, LatentModel>,
}

impl SimulantConfig {
    pub fn model_for(&self, measure_id: &str) -> Option<&LatentModel> {
        self.per_measure.get(measure_id).or(self.default.as_ref())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimulantError {
    #[error("request format not recognized: {0}")]
    UnrecognizedRequestFormat(String),
    #[error("latent model misconfigured: {0}")]
    BadModel(String),
}

/// Latent bias of a persona under a model: baseline plus the weights of its
/// active traits, clamped to [-1, 1].
pub fn latent_bias(persona: &Persona, model: &LatentModel) -> f64 {
    latent_bias_of_traits(&persona.active_traits, model)
}

/// Same as [`latent_bias`] but from raw trait names (persona ids encode the
/// sorted trait list, so respondents can recover traits without the full
/// persona record).
pub fn latent_bias_of_traits<S: AsRef<str>>(traits: &[S], model: &LatentModel) -> f64 {
    let mut z = model.baseline;
    for t in traits {
        if let Some(w) = model.trait_weights.get(t.as_ref()) {
            z += w;
        }
    }
    z.clamp(-1.0, 1.0)
}

/// Independent named random stream for one (seed, persona, item, ...) key.
fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0xff]);
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn phase_tag(phase: Phase) -> &'static str {
    match phase {
        Phase::Test => "test",
        Phase::Retest => "retest",
    }
}

fn gaussian_noise(model: &LatentModel, key: &TranscriptKey) -> f64 {
    if model.noise_sigma == 0.0 {
        return 0.0;
    }
    let mut rng = keyed_rng(
        model.rng_seed,
        &["noise", &key.persona_id, &key.measure_id, &key.item_id, phase_tag(key.phase)],
    );
    Normal::new(0.0, model.noise_sigma)
        .expect("validated sigma")
        .sample(&mut rng)
}

fn uniform_draw(model: &LatentModel, key: &TranscriptKey, channel: &str, with_phase: bool) -> f64 {
    let mut parts = vec![channel, key.persona_id.as_str(), key.measure_id.as_str(), key.item_id.as_str()];
    if with_phase {
        parts.push(phase_tag(key.phase));
    }
    keyed_rng(model.rng_seed, &parts).random::<f64>()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sentence_case(label: &str) -> String {
    let mut chars = label.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Produce the simulant's answer to one administered request.
///
/// The request must carry the answer-format directive that
/// `protocol::build_request` emits; anything else is rejected as
/// unrecognized. The reply is always parseable by the scoring rules.
pub fn respond(
    key: &TranscriptKey,
    request: &ChatRequest,
    measure: &MeasureSpec,
    item: &Item,
    model: &LatentModel,
) -> Result<String, SimulantError> {
    let user = request
        .messages
        .iter()
        .find(|m| m.role == "user")
        .ok_or_else(|| SimulantError::UnrecognizedRequestFormat("no user message".into()))?;

    let traits: Vec<&str> = key.persona_id.split('+').collect();
    let latent = latent_bias_of_traits(&traits, model);

    if user.content.contains(EXPLICIT_DIRECTIVE_PREFIX) {
        if measure.kind != MeasureKind::Explicit {
            return Err(SimulantError::UnrecognizedRequestFormat(
                "anchor directive on a non-explicit measure".into(),
            ));
        }
        respond_explicit(key, measure, item, model, latent)
    } else if user.content.contains(PAIRS_FORMAT_LINE) {
        if !measure.kind.is_implicit() {
            return Err(SimulantError::UnrecognizedRequestFormat(
                "pairing directive on an explicit measure".into(),
            ));
        }
        respond_implicit(key, measure, item, model, latent)
    } else {
        Err(SimulantError::UnrecognizedRequestFormat(
            "no answer-format directive found".into(),
        ))
    }
}

fn respond_explicit(
    key: &TranscriptKey,
    measure: &MeasureSpec,
    item: &Item,
    model: &LatentModel,
    latent: f64,
) -> Result<String, SimulantError> {
    if model.refusal_rate > 0.0 {
        let u = uniform_draw(model, key, "refusal", true);
        if u < model.refusal_rate {
            let refusal = measure
                .refusal_anchor()
                .ok_or_else(|| SimulantError::BadModel("measure has no refusal anchor".into()))?;
            return Ok(format!("{}.", sentence_case(&refusal.label)));
        }
    }

    // A biased respondent agrees with construct-keyed items and disagrees
    // with reverse-keyed ones.
    let oriented = if item.reverse_keyed { -latent } else { latent };
    let z = oriented + gaussian_noise(model, key);

    let mut scale: Vec<&Anchor> = measure.scale_anchors().collect();
    scale.sort_by_key(|a| a.score);
    let bin = model.anchor_thresholds.iter().filter(|t| z >= **t).count();
    let anchor = scale
        .get(bin)
        .ok_or_else(|| SimulantError::BadModel("threshold bin out of range".into()))?;
    Ok(format!("{}.", sentence_case(&anchor.label)))
}

fn respond_implicit(
    key: &TranscriptKey,
    measure: &MeasureSpec,
    item: &Item,
    model: &LatentModel,
    latent: f64,
) -> Result<String, SimulantError> {
    let lex = item.lexicons.as_ref().ok_or_else(|| {
        SimulantError::UnrecognizedRequestFormat("implicit item without lexicons".into())
    })?;

    let z = latent + gaussian_noise(model, key);
    let p_congruent = logistic(model.link_slope * z);
    // The pairing coin is keyed without the phase: with zero noise both
    // phases answer identically, with noise the phases diverge exactly as
    // much as the noise moves p_congruent across the coin.
    let u = uniform_draw(model, key, "choice", false);
    let want = if u < p_congruent { Congruence::Congruent } else { Congruence::Incongruent };

    let mut available: Vec<&str> = lex.all_attrs().collect();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for name in lex.all_names() {
        let group = lex.group_of(name).expect("names come from the lexicons");
        let slot = available
            .iter()
            .position(|attr| lex.congruence_of(group, attr) == Some(want))
            .or_else(|| if available.is_empty() { None } else { Some(0) });
        let Some(slot) = slot else { break };
        let attr = available.remove(slot);
        pairs.push((name.to_string(), attr.to_string()));
    }
    if pairs.is_empty() {
        return Err(SimulantError::BadModel(
            "item lexicons leave nothing to pair".into(),
        ));
    }

    let pairs_line = format!(
        "{} {}",
        PAIRS_LINE_PREFIX,
        pairs
            .iter()
            .map(|(n, a)| format!("{n}-{a}"))
            .collect::<Vec<_>>()
            .join("; ")
    );

    if measure.kind == MeasureKind::ImplicitVignette {
        let narrated = pairs
            .iter()
            .map(|(n, a)| format!("{n} takes on {a}"))
            .collect::<Vec<_>>()
            .join(", while ");
        Ok(format!("In this story, {narrated}.\n\n{pairs_line}"))
    } else {
        Ok(pairs_line)
    }
}

/// Chat-client implementation backed by the latent-bias model; substitutes
/// for a live endpoint without any network.
pub struct SimulantClient {
    config: SimulantConfig,
    measures: Vec<MeasureSpec>,
}

impl SimulantClient {
    /// Build a client, validating each measure's model up front.
    pub fn new(config: SimulantConfig, measures: Vec<MeasureSpec>) -> Result<Self, SimulantError> {
        for measure in &measures {
            let model = config.model_for(&measure.id).ok_or_else(|| {
                SimulantError::BadModel(format!("no latent model for measure '{}'", measure.id))
            })?;
            model.validate(measure)?;
        }
        Ok(SimulantClient { config, measures })
    }
}

impl ChatClient for SimulantClient {
    fn complete(&self, key: &TranscriptKey, request: &ChatRequest) -> Result<String, ClientError> {
        let measure = self
            .measures
            .iter()
            .find(|m| m.id == key.measure_id)
            .ok_or_else(|| ClientError::Permanent(format!("unknown measure '{}'", key.measure_id)))?;
        let item = measure
            .item(&key.item_id)
            .ok_or_else(|| ClientError::Permanent(format!("unknown item '{}'", key.item_id)))?;
        let model = self
            .config
            .model_for(&measure.id)
            .expect("validated at construction");
        respond(key, request, measure, item, model).map_err(|e| ClientError::Permanent(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Stock configurations
// ---------------------------------------------------------------------------

/// Weights spanning every trait, drawn once from the seed. Every measure
/// reads this same latent, so measures should converge.
pub fn shared_latent_config(traits: &[String], seed: u64, noise_sigma: f64) -> SimulantConfig {
    let mut rng = keyed_rng(seed, &["shared-latent-weights"]);
    let trait_weights: BTreeMap<String, f64> = traits
        .iter()
        .map(|t| (t.clone(), rng.random_range(-0.3..0.3)))
        .collect();
    SimulantConfig {
        default: Some(LatentModel {
            trait_weights,
            baseline: 0.0,
            noise_sigma,
            link_slope: 3.0,
            anchor_thresholds: vec![-0.6, -0.2, 0.2, 0.6],
            refusal_rate: 0.0,
            rng_seed: seed,
        }),
        per_measure: BTreeMap::new(),
    }
}

/// One independent latent per measure: each measure's weights live on a
/// disjoint slice of the trait set, so cross-measure correlation should be
/// near zero.
pub fn split_latent_config(
    traits: &[String],
    measure_ids: &[String],
    seed: u64,
    noise_sigma: f64,
) -> SimulantConfig {
    let n_measures = measure_ids.len().max(1);
    let per_measure = measure_ids
        .iter()
        .enumerate()
        .map(|(idx, measure_id)| {
            let mut rng = keyed_rng(seed, &["split-latent-weights", measure_id]);
            let trait_weights: BTreeMap<String, f64> = traits
                .iter()
                .enumerate()
                .filter(|(t_idx, _)| t_idx % n_measures == idx)
                .map(|(_, t)| {
                    let magnitude = rng.random_range(0.15..0.55);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    (t.clone(), sign * magnitude)
                })
                .collect();
            (
                measure_id.clone(),
                LatentModel {
                    trait_weights,
                    baseline: 0.0,
                    noise_sigma,
                    link_slope: 3.0,
                    anchor_thresholds: vec![-0.6, -0.2, 0.2, 0.6],
                    refusal_rate: 0.0,
                    rng_seed: seed.wrapping_add(idx as u64 + 1),
                },
            )
        })
        .collect();
    SimulantConfig { default: None, per_measure }
}
