//! Personas: non-ordered trait combinations used to seed distinct chatbot
//! personalities, plus rendering of their seeding prompts.
//!
//! Traits are binary (present or absent); a persona is a nonempty subset of
//! the trait set, identified by its sorted trait names. Enumeration order and
//! seeded sampling are fully deterministic so runs reproduce byte-for-byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder the seed-prompt template must contain exactly once.
pub const TRAITS_PLACEHOLDER: &str = "{traits}";

/// Default seeding-prompt template used when none is supplied.
pub const DEFAULT_SEED_TEMPLATE: &str = "You are role-playing a person whose personality is \
described by the following traits: {traits}. Stay in character for the whole conversation and \
answer every question as this person would.";

/// Hard cap on trait-set size; subsets grow as 2^k.
pub const MAX_TRAITS: usize = 20;

/// The pool of available trait names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitSet {
    pub traits: Vec<String>,
}

impl TraitSet {
    /// Build a trait set, enforcing nonempty unique names.
    pub fn new(traits: Vec<String>) -> Result<Self, PersonaError> {
        if traits.is_empty() {
            return Err(PersonaError::EmptyTraitSet);
        }
        let mut sorted = traits.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != traits.len() {
            return Err(PersonaError::DuplicateTrait);
        }
        if traits.iter().any(|t| t.is_empty()) {
            return Err(PersonaError::EmptyTraitName);
        }
        Ok(Self { traits })
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    /// Trait names sorted lexicographically; the canonical axis order for
    /// subset enumeration.
    fn sorted_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.traits.iter().map(String::as_str).collect();
        names.sort_unstable();
        names
    }
}

/// One seeded personality: a nonempty subset of the trait set plus the
/// rendered seeding prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    /// Sorted trait names joined with '+'; uniquely determines the subset.
    pub id: String,
    /// Sorted member traits.
    pub active_traits: Vec<String>,
    pub seed_prompt: String,
}

impl Persona {
    fn from_traits(mut active: Vec<String>, template: &str) -> Result<Self, PersonaError> {
        active.sort();
        let id = active.join("+");
        let seed_prompt = render_traits_template(&active, template)?;
        Ok(Persona { id, active_traits: active, seed_prompt })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersonaError {
    #[error("trait set is empty")]
    EmptyTraitSet,
    #[error("trait names must be unique")]
    DuplicateTrait,
    #[error("trait names must be nonempty")]
    EmptyTraitName,
    #[error("{k} traits would enumerate 2^{k}-1 subsets; the cap is {MAX_TRAITS} traits")]
    TooManyTraits { k: usize },
    #[error("requested {requested} personas but only {available} nonempty trait subsets exist")]
    NotEnoughCombinations { requested: usize, available: usize },
    #[error("template must contain the placeholder '{TRAITS_PLACEHOLDER}' exactly once, found {found}")]
    BadTemplate { found: usize },
}

/// Enumerate all nonempty trait subsets in canonical order.
///
/// Canonical order: trait names sorted lexicographically define the bit axes;
/// subsets are emitted in ascending bitmask order, so the result is identical
/// regardless of the input ordering of `trait_set.traits`.
pub fn enumerate_combinations(trait_set: &TraitSet) -> Result<Vec<Vec<String>>, PersonaError> {
    let k = trait_set.len();
    if k == 0 {
        return Err(PersonaError::EmptyTraitSet);
    }
    if k > MAX_TRAITS {
        return Err(PersonaError::TooManyTraits { k });
    }
    let names = trait_set.sorted_names();
    let total: u32 = 1u32 << k;
    let mut subsets = Vec::with_capacity(total as usize - 1);
    for mask in 1..total {
        let subset: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, name)| name.to_string())
            .collect();
        subsets.push(subset);
    }
    Ok(subsets)
}

/// Draw `n` distinct personas from the nonempty subsets of `trait_set`.
///
/// Sampling is without replacement via a seeded partial Fisher-Yates shuffle;
/// the selection is then restored to canonical enumeration order. Identical
/// `(trait_set, n, seed)` always reproduce the identical list.
pub fn sample_personas(
    trait_set: &TraitSet,
    n: usize,
    seed: u64,
    template: &str,
) -> Result<Vec<Persona>, PersonaError> {
    let all = enumerate_combinations(trait_set)?;
    if n > all.len() {
        return Err(PersonaError::NotEnoughCombinations { requested: n, available: all.len() });
    }
    let mut indices: Vec<usize> = (0..all.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = i + uniform_index(&mut rng, indices.len() - i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();

    chosen
        .into_iter()
        .map(|idx| Persona::from_traits(all[idx].clone(), template))
        .collect()
}

/// Uniform draw from `0..span` by rejection, avoiding modulo bias.
fn uniform_index(rng: &mut ChaCha8Rng, span: usize) -> usize {
    debug_assert!(span > 0);
    let span = span as u64;
    let zone = u64::MAX - (u64::MAX % span);
    loop {
        let v = rand::RngCore::next_u64(rng);
        if v < zone {
            return (v % span) as usize;
        }
    }
}

/// Render a seeding prompt for a persona from a template containing the
/// trait-list placeholder exactly once.
pub fn render_seed_prompt(persona: &Persona, template: &str) -> Result<String, PersonaError> {
    render_traits_template(&persona.active_traits, template)
}

fn render_traits_template(active: &[String], template: &str) -> Result<String, PersonaError> {
    let found = template.matches(TRAITS_PLACEHOLDER).count();
    if found != 1 {
        return Err(PersonaError::BadTemplate { found });
    }
    let mut sorted: Vec<&str> = active.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    Ok(template.replace(TRAITS_PLACEHOLDER, &sorted.join(", ")))
}

/// On-disk persona list: the inputs that produced it plus the personas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonaFile {
    pub trait_set: TraitSet,
    pub n: usize,
    pub seed: u64,
    pub template: String,
    pub personas: Vec<Persona>,
}

impl PersonaFile {
    pub fn generate(
        trait_set: TraitSet,
        n: usize,
        seed: u64,
        template: &str,
    ) -> Result<Self, PersonaError> {
        let personas = sample_personas(&trait_set, n, seed, template)?;
        Ok(PersonaFile { trait_set, n, seed, template: template.to_string(), personas })
    }
}
