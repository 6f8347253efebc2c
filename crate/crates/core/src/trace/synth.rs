//! Seeded synthetic samples with planted failure signatures.
//!
//! Every sample describes a small random scene. The reference captions state
//! all of its facts; the generated description states some of them and, for
//! failure profiles, ends with hallucinated clauses. The trace carries the
//! profile's signature on top of per-seed nuisance variation:
//!
//! | profile         | signature                                       | planted label      |
//! |-----------------|-------------------------------------------------|--------------------|
//! | `GROUNDED`      | none                                            | `CORRECT`          |
//! | `LAYER_DRIFT`   | late hidden states drift away from early ones   | `CATEGORY_HALLUC`  |
//! | `ATTN_DISPERSE` | flatter attention in the last three layers      | `ATTRIBUTE_HALLUC` |
//! | `CONF_DECAY`    | chosen-token probability decays along the text  | `RELATION_HALLUC`  |
//! | `REPETITIVE`    | repeated clauses                                | `CATEGORY_HALLUC`  |
//!
//! All draws that do not depend on the profile come from a stream keyed by
//! the seed alone, so two profiles at the same seed differ only by the
//! perturbation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{attention_layer_indices, persisted_hidden_layers, GenerationTrace, Tensor};
use crate::chunker::{AnnotatedDocument, TokenSpec, UPos};
use crate::error::{Error, Result};
use crate::label::HallucinationLabel;
use crate::seed::{derive_seed, rng};

pub const SYNTH_NUM_LAYERS: usize = 24;
pub const SYNTH_TEXT_START: usize = 4;
pub const SYNTH_HIDDEN_DIM: usize = 16;
pub const SYNTH_HEADS: usize = 2;
/// Upper bound on generated tokens; base draws are sized to it so that
/// profiles sharing a seed share every per-position draw.
pub const SYNTH_MAX_TOKENS: usize = 160;
const MIN_SEVERITY: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureProfile {
    Grounded,
    LayerDrift,
    AttnDisperse,
    ConfDecay,
    Repetitive,
}

impl FailureProfile {
    pub const ALL: [FailureProfile; 5] = [
        FailureProfile::Grounded,
        FailureProfile::LayerDrift,
        FailureProfile::AttnDisperse,
        FailureProfile::ConfDecay,
        FailureProfile::Repetitive,
    ];

    pub const FAILURES: [FailureProfile; 4] = [
        FailureProfile::LayerDrift,
        FailureProfile::AttnDisperse,
        FailureProfile::ConfDecay,
        FailureProfile::Repetitive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureProfile::Grounded => "GROUNDED",
            FailureProfile::LayerDrift => "LAYER_DRIFT",
            FailureProfile::AttnDisperse => "ATTN_DISPERSE",
            FailureProfile::ConfDecay => "CONF_DECAY",
            FailureProfile::Repetitive => "REPETITIVE",
        }
    }

    pub fn label(self) -> HallucinationLabel {
        match self {
            FailureProfile::Grounded => HallucinationLabel::Correct,
            FailureProfile::LayerDrift | FailureProfile::Repetitive => HallucinationLabel::Category,
            FailureProfile::AttnDisperse => HallucinationLabel::Attribute,
            FailureProfile::ConfDecay => HallucinationLabel::Relation,
        }
    }

    /// Names of the features that carry this profile's signature.
    pub fn signature_features(self) -> &'static [&'static str] {
        match self {
            FailureProfile::Grounded => &[],
            FailureProfile::LayerDrift => &["lcf.consistency", "lcf.inconsistency"],
            FailureProfile::AttnDisperse => &["acf.mean_abs_gini", "acf.std_abs_gini"],
            FailureProfile::ConfDecay => &["conf.trend"],
            FailureProfile::Repetitive => &["tok.unique_repetition_ratio", "tok.bigram_repetition_ratio", "tok.normalized_unique_tokens"],
        }
    }
}

impl fmt::Display for FailureProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown failure profile {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub profile: FailureProfile,
    /// Perturbation strength in `[0.3, 1]`; 0 for `GROUNDED`.
    pub severity: f64,
    pub trace: GenerationTrace,
    pub annotation: AnnotatedDocument,
    pub ground_truth: Vec<AnnotatedDocument>,
    pub label: HallucinationLabel,
}

pub fn synthesize_trace(seed: u64, profile: FailureProfile) -> (GenerationTrace, HallucinationLabel) {
    let s = synthesize_sample(seed, profile);
    (s.trace, s.label)
}

pub fn synthesize_sample(seed: u64, profile: FailureProfile) -> SyntheticSample {
    let mut base = rng(derive_seed(seed, "synth/base"));
    let mut pert = rng(derive_seed(seed, &format!("synth/perturb/{}", profile.as_str())));
    let severity = if profile == FailureProfile::Grounded {
        0.0
    } else {
        pert.gen_range(MIN_SEVERITY..=1.0)
    };

    let scene = Scene::draw(&mut base);
    let rendered = scene.render(&mut base, &mut pert, profile, severity);
    let signals = BaseSignals::draw(&mut base);
    let trace = signals.build_trace(seed, profile, severity, &rendered);
    let Rendered {
        description: annotation,
        captions: ground_truth,
        ..
    } = rendered;

    SyntheticSample {
        profile,
        severity,
        trace,
        annotation,
        ground_truth,
        label: profile.label(),
    }
}

// ---------------------------------------------------------------------------
// Text

const NOUNS: &[&str] = &[
    "car", "bus", "truck", "bicycle", "dog", "cat", "horse", "bird", "man", "woman", "child", "tree",
    "building", "house", "bench", "table", "chair", "lamp", "umbrella", "kite", "boat", "train", "sign",
    "fence", "bottle", "cup", "plate", "book", "clock", "vase", "bag", "hat",
];

const ADJECTIVES: &[&[&str]] = &[
    &["red", "blue", "green", "yellow", "white", "black", "brown", "orange"],
    &["big", "small", "tall", "short", "huge", "tiny"],
    &["old", "new", "wet", "dirty", "shiny", "broken"],
    &["wooden", "metal", "plastic", "glass", "stone", "brick"],
];

/// (lemma, third-person form)
const VERBS: &[(&str, &str)] = &[
    ("park", "parks"),
    ("sit", "sits"),
    ("stand", "stands"),
    ("lie", "lies"),
    ("rest", "rests"),
    ("wait", "waits"),
    ("lean", "leans"),
];

const PARTICLES: &[&[&str]] = &[&["next", "to"], &["on"], &["near"], &["under"], &["behind"], &["beside"], &["above"]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Link {
    verb: usize,
    particle: usize,
}

impl Link {
    fn connector(self) -> String {
        let mut parts = vec![VERBS[self.verb].0.to_string()];
        parts.extend(PARTICLES[self.particle].iter().map(|s| s.to_string()));
        parts.join("-")
    }
}

#[derive(Debug, Clone)]
struct Fact {
    subject: usize,
    link: Link,
    object: usize,
}

#[derive(Debug, Clone)]
struct Scene {
    /// Indices into `NOUNS`.
    objects: Vec<usize>,
    /// `(category, index)` adjective for each object.
    attributes: Vec<(usize, usize)>,
    relations: Vec<Fact>,
    absent: Vec<usize>,
}

struct Rendered {
    description: AnnotatedDocument,
    captions: Vec<AnnotatedDocument>,
    /// Token count of each clause and whether it is hallucinated.
    clause_lengths: Vec<(usize, bool)>,
    /// Per-token hallucination flag.
    mask: Vec<bool>,
}

#[derive(Debug, Clone)]
enum Clause {
    Relation {
        subject: usize,
        subject_adj: Option<(usize, usize)>,
        link: Link,
        object: usize,
        object_adj: Option<(usize, usize)>,
    },
    Attribute {
        noun: usize,
        adj: (usize, usize),
    },
}

impl Scene {
    fn draw(r: &mut ChaCha8Rng) -> Self {
        let mut nouns: Vec<usize> = (0..NOUNS.len()).collect();
        nouns.shuffle(r);
        let objects: Vec<usize> = nouns[..5].to_vec();
        let absent: Vec<usize> = nouns[5..].to_vec();
        let attributes = objects
            .iter()
            .map(|_| {
                let c = r.gen_range(0..ADJECTIVES.len());
                (c, r.gen_range(0..ADJECTIVES[c].len()))
            })
            .collect();
        let mut pairs: Vec<(usize, usize)> = (0..objects.len())
            .flat_map(|a| (0..objects.len()).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        pairs.shuffle(r);
        let mut used = BTreeSet::new();
        let mut relations = Vec::new();
        for (a, b) in pairs {
            if relations.len() == 3 {
                break;
            }
            if used.contains(&(a.min(b), a.max(b))) {
                continue;
            }
            used.insert((a.min(b), a.max(b)));
            relations.push(Fact {
                subject: a,
                link: Link {
                    verb: r.gen_range(0..VERBS.len()),
                    particle: r.gen_range(0..PARTICLES.len()),
                },
                object: b,
            });
        }
        Scene {
            objects,
            attributes,
            relations,
            absent,
        }
    }

    fn noun(&self, slot: usize) -> usize {
        self.objects[slot]
    }

    fn faithful_clause(&self, r: &mut ChaCha8Rng, fact_index: usize) -> Clause {
        if fact_index < self.relations.len() {
            let f = &self.relations[fact_index];
            let s_adj = r.gen_bool(0.6).then_some(self.attributes[f.subject]);
            let o_adj = r.gen_bool(0.6).then_some(self.attributes[f.object]);
            Clause::Relation {
                subject: self.noun(f.subject),
                subject_adj: s_adj,
                link: f.link,
                object: self.noun(f.object),
                object_adj: o_adj,
            }
        } else {
            let slot = fact_index - self.relations.len();
            Clause::Attribute {
                noun: self.noun(slot),
                adj: self.attributes[slot],
            }
        }
    }

    fn reference_captions(&self) -> Vec<Vec<Clause>> {
        let relations = self
            .relations
            .iter()
            .map(|f| Clause::Relation {
                subject: self.noun(f.subject),
                subject_adj: Some(self.attributes[f.subject]),
                link: f.link,
                object: self.noun(f.object),
                object_adj: Some(self.attributes[f.object]),
            })
            .collect();
        let attributes = (0..self.objects.len())
            .map(|slot| Clause::Attribute {
                noun: self.noun(slot),
                adj: self.attributes[slot],
            })
            .collect();
        vec![relations, attributes]
    }

    fn gt_connectors(&self, a: usize, b: usize) -> BTreeSet<String> {
        self.relations
            .iter()
            .filter(|f| {
                let (s, o) = (self.noun(f.subject), self.noun(f.object));
                (s == a && o == b) || (s == b && o == a)
            })
            .map(|f| f.link.connector())
            .collect()
    }

    fn render(
        &self,
        base: &mut ChaCha8Rng,
        pert: &mut ChaCha8Rng,
        profile: FailureProfile,
        severity: f64,
    ) -> Rendered {
        let total = base.gen_range(4..=6usize);
        let fact_count = self.relations.len() + self.objects.len();
        // The description opens with a relation so that later clauses can
        // refer back to two already-mentioned objects.
        let mut order: Vec<usize> = (1..fact_count).collect();
        order.shuffle(base);
        order.insert(0, 0);
        let faithful: Vec<Clause> = order[..total]
            .iter()
            .map(|&i| self.faithful_clause(base, i))
            .collect();

        let hallucinated = if profile == FailureProfile::Grounded {
            0
        } else {
            ((severity * total as f64 * 0.5).round() as usize).clamp(1, total - 2)
        };
        let kept = total - hallucinated;
        let mut clauses: Vec<(Clause, bool)> = faithful[..kept].iter().map(|c| (c.clone(), false)).collect();
        let mentioned: Vec<usize> = mentioned_nouns(faithful[..kept].iter());

        match profile {
            FailureProfile::Grounded => {}
            FailureProfile::LayerDrift => {
                let mut fresh = self.absent.clone();
                fresh.shuffle(pert);
                for i in 0..hallucinated {
                    let c = if pert.gen_bool(0.5) {
                        Clause::Relation {
                            subject: fresh[2 * i],
                            subject_adj: Some(random_adj(pert)),
                            link: random_link(pert),
                            object: fresh[2 * i + 1],
                            object_adj: pert.gen_bool(0.5).then(|| random_adj(pert)),
                        }
                    } else {
                        Clause::Attribute {
                            noun: fresh[2 * i],
                            adj: random_adj(pert),
                        }
                    };
                    clauses.push((c, true));
                }
            }
            FailureProfile::Repetitive => {
                // Loops back over what was already said and stutters absent
                // objects ("a dog sits near a dog").
                let mut fresh = self.absent.clone();
                fresh.shuffle(pert);
                for (i, &noun) in fresh.iter().take(hallucinated).enumerate() {
                    clauses.push((faithful[i % kept].clone(), false));
                    clauses.push((
                        Clause::Relation {
                            subject: noun,
                            subject_adj: None,
                            link: random_link(pert),
                            object: noun,
                            object_adj: None,
                        },
                        true,
                    ));
                    clauses.push((faithful[(i + 1) % kept].clone(), false));
                }
            }
            FailureProfile::AttnDisperse => {
                let mut used = BTreeSet::new();
                for _ in 0..hallucinated {
                    let noun = *mentioned.choose(pert).unwrap();
                    let slot = self.objects.iter().position(|&o| o == noun).unwrap();
                    let truth = self.attributes[slot];
                    let adj = loop {
                        let cand = (truth.0, pert.gen_range(0..ADJECTIVES[truth.0].len()));
                        if cand != truth && !used.contains(&(noun, cand)) {
                            break cand;
                        }
                    };
                    used.insert((noun, adj));
                    clauses.push((Clause::Attribute { noun, adj }, true));
                }
            }
            FailureProfile::ConfDecay => {
                let mut used = BTreeSet::new();
                for _ in 0..hallucinated {
                    let (a, b, link) = loop {
                        let a = *mentioned.choose(pert).unwrap();
                        let b = *mentioned.choose(pert).unwrap();
                        if a == b {
                            continue;
                        }
                        let link = random_link(pert);
                        let conn = link.connector();
                        if !self.gt_connectors(a, b).contains(&conn) && used.insert((a, b, conn)) {
                            break (a, b, link);
                        }
                    };
                    let c = Clause::Relation {
                        subject: a,
                        subject_adj: None,
                        link,
                        object: b,
                        object_adj: None,
                    };
                    clauses.push((c, true));
                }
            }
        }

        let sentences: Vec<Vec<TokenSpec>> = clauses.iter().map(|(c, _)| clause_tokens(c)).collect();
        let mask: Vec<bool> = sentences
            .iter()
            .zip(&clauses)
            .flat_map(|(toks, (_, h))| std::iter::repeat(*h).take(toks.len()))
            .collect();
        let description =
            AnnotatedDocument::from_sentences(None, sentences).expect("generated clauses are well-formed");
        let captions = self
            .reference_captions()
            .into_iter()
            .enumerate()
            .map(|(i, cs)| {
                AnnotatedDocument::from_sentences(Some(format!("caption-{i}")), cs.iter().map(clause_tokens).collect())
                    .expect("reference clauses are well-formed")
            })
            .collect();
        Rendered {
            description,
            captions,
            clause_lengths: clauses.iter().map(|(c, h)| (clause_tokens(c).len(), *h)).collect(),
            mask,
        }
    }
}

fn mentioned_nouns<'a>(clauses: impl Iterator<Item = &'a Clause>) -> Vec<usize> {
    let mut out = Vec::new();
    for c in clauses {
        let nouns = match c {
            Clause::Relation { subject, object, .. } => vec![*subject, *object],
            Clause::Attribute { noun, .. } => vec![*noun],
        };
        for n in nouns {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

fn random_adj(r: &mut ChaCha8Rng) -> (usize, usize) {
    let c = r.gen_range(0..ADJECTIVES.len());
    (c, r.gen_range(0..ADJECTIVES[c].len()))
}

fn random_link(r: &mut ChaCha8Rng) -> Link {
    Link {
        verb: r.gen_range(0..VERBS.len()),
        particle: r.gen_range(0..PARTICLES.len()),
    }
}

fn article(next: &str) -> &'static str {
    if next.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn clause_tokens(clause: &Clause) -> Vec<TokenSpec> {
    let adj_word = |(c, i): (usize, usize)| ADJECTIVES[c][i];
    let t = TokenSpec::new;
    match clause {
        Clause::Attribute { noun, adj } => {
            let (n, a) = (NOUNS[*noun], adj_word(*adj));
            vec![
                t("there", "there", UPos::Pron, Some(1), "expl", true),
                t("is", "be", UPos::Aux, None, "ROOT", true),
                t(article(a), "a", UPos::Det, Some(4), "det", true),
                t(a, a, UPos::Adj, Some(4), "amod", false),
                t(n, n, UPos::Noun, Some(1), "nsubj", false),
                t(".", ".", UPos::Punct, Some(1), "punct", false),
            ]
        }
        Clause::Relation {
            subject,
            subject_adj,
            link,
            object,
            object_adj,
        } => {
            let s_adj = subject_adj.map(adj_word);
            let o_adj = object_adj.map(adj_word);
            let subj = if s_adj.is_some() { 2 } else { 1 };
            let verb = subj + 1;
            let particles = PARTICLES[link.particle];
            let det2 = verb + 1 + particles.len();
            let obj = det2 + 1 + usize::from(o_adj.is_some());

            let mut out = Vec::new();
            out.push(t(article(s_adj.unwrap_or(NOUNS[*subject])), "a", UPos::Det, Some(subj), "det", true));
            if let Some(a) = s_adj {
                out.push(t(a, a, UPos::Adj, Some(subj), "amod", false));
            }
            out.push(t(NOUNS[*subject], NOUNS[*subject], UPos::Noun, Some(verb), "nsubj", false));
            let (lemma, form) = VERBS[link.verb];
            out.push(t(form, lemma, UPos::Verb, None, "ROOT", false));
            for (k, p) in particles.iter().enumerate() {
                if particles.len() > 1 && k == 0 {
                    out.push(t(p, p, UPos::Adv, Some(verb), "advmod", false));
                } else {
                    out.push(t(p, p, UPos::Adp, Some(obj), "case", true));
                }
            }
            out.push(t(article(o_adj.unwrap_or(NOUNS[*object])), "a", UPos::Det, Some(obj), "det", true));
            if let Some(a) = o_adj {
                out.push(t(a, a, UPos::Adj, Some(obj), "amod", false));
            }
            out.push(t(NOUNS[*object], NOUNS[*object], UPos::Noun, Some(verb), "obl", false));
            out.push(t(".", ".", UPos::Punct, Some(verb), "punct", false));
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Trace signals

/// Per-seed nuisance parameters and noise shared by all profiles.
struct BaseSignals {
    drift: f64,
    sharpness: f64,
    confidence: f64,
    content: Vec<f64>,
    drift_direction: Vec<f64>,
    layer_noise: BTreeMap<usize, Vec<f64>>,
    attention_logits: BTreeMap<usize, Vec<f64>>,
    attention_focus: Vec<usize>,
    layer_sharpness: BTreeMap<usize, f64>,
    confidence_noise: Vec<f64>,
}

fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

impl BaseSignals {
    fn draw(r: &mut ChaCha8Rng) -> Self {
        let cap = SYNTH_MAX_TOKENS;
        let d = SYNTH_HIDDEN_DIM;
        let drift = r.gen_range(0.05..0.35);
        let sharpness = r.gen_range(1.6..3.2);
        let confidence = r.gen_range(0.74..0.92);
        let content = normals(r, cap * d);
        let drift_direction = normals(r, cap * d);
        let layer_noise = persisted_hidden_layers(SYNTH_TEXT_START, SYNTH_NUM_LAYERS)
            .into_iter()
            .map(|l| (l, normals(r, cap * d)))
            .collect();
        // Logit draws are indexed by (head, query, key) inside a cap x cap grid.
        let attention_logits = attention_layer_indices(SYNTH_NUM_LAYERS)
            .into_iter()
            .map(|l| (l, normals(r, SYNTH_HEADS * cap * cap)))
            .collect();
        let attention_focus = (0..SYNTH_HEADS * cap).map(|_| r.gen_range(0..cap)).collect();
        let layer_sharpness = attention_layer_indices(SYNTH_NUM_LAYERS)
            .into_iter()
            .map(|l| (l, r.gen_range(0.9..1.1)))
            .collect();
        let confidence_noise = normals(r, cap);
        Self {
            drift,
            sharpness,
            confidence,
            content,
            drift_direction,
            layer_noise,
            attention_logits,
            attention_focus,
            layer_sharpness,
            confidence_noise,
        }
    }

    fn build_trace(&self, seed: u64, profile: FailureProfile, severity: f64, text: &Rendered) -> GenerationTrace {
        let tokens: Vec<String> = text.description.tokens.iter().map(|t| t.text.clone()).collect();
        let t_len = tokens.len();
        assert!(t_len <= SYNTH_MAX_TOKENS, "description of {t_len} tokens exceeds cap");
        let d = SYNTH_HIDDEN_DIM;
        let cap = SYNTH_MAX_TOKENS;
        let mask = &text.mask;
        let active = |p: FailureProfile, t: usize| profile == p && mask[t];

        let first = SYNTH_TEXT_START as f64;
        let last = (SYNTH_NUM_LAYERS - 1) as f64;
        let hidden = persisted_hidden_layers(SYNTH_TEXT_START, SYNTH_NUM_LAYERS)
            .into_iter()
            .map(|l| {
                let depth = (l as f64 - first).max(0.0) / (last - first);
                let scale = 1.0 + 0.05 * l as f64;
                let noise = &self.layer_noise[&l];
                let mut data = Vec::with_capacity(t_len * d);
                for t in 0..t_len {
                    let drift = if active(FailureProfile::LayerDrift, t) {
                        (self.drift + 0.6 * severity).min(0.95)
                    } else {
                        self.drift
                    };
                    let mix = drift * depth * depth;
                    for j in 0..d {
                        let i = t * d + j;
                        let v = (1.0 - mix) * self.content[i] + mix * self.drift_direction[i] + 0.15 * noise[i];
                        data.push((scale * v) as f32);
                    }
                }
                (l, Tensor::new(vec![t_len, d], data).unwrap())
            })
            .collect();

        let attention = attention_layer_indices(SYNTH_NUM_LAYERS)
            .into_iter()
            .map(|l| {
                let logits = &self.attention_logits[&l];
                let mut data = Vec::with_capacity(SYNTH_HEADS * t_len * t_len);
                for h in 0..SYNTH_HEADS {
                    for q in 0..t_len {
                        let mut beta = self.sharpness * self.layer_sharpness[&l];
                        if active(FailureProfile::AttnDisperse, q) {
                            beta *= 1.0 - 0.85 * severity;
                        }
                        let focus = self.attention_focus[h * cap + q] % t_len;
                        let row: Vec<f64> = (0..t_len)
                            .map(|k| {
                                let bump = if k == focus { 3.0 } else { 0.0 };
                                beta * (logits[(h * cap + q) * cap + k] + bump)
                            })
                            .collect();
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
                        data.extend(row.iter().map(|x| ((x - m).exp() / z) as f32));
                    }
                }
                (l, Tensor::new(vec![SYNTH_HEADS, t_len, t_len], data).unwrap())
            })
            .collect();

        // Within each hallucinated clause confidence slides down linearly.
        let mut decay = vec![0.0; t_len];
        if profile == FailureProfile::ConfDecay {
            let mut start = 0;
            for &(len, halluc) in &text.clause_lengths {
                if halluc {
                    for k in 0..len {
                        decay[start + k] = 0.6 * severity * (k + 1) as f64 / len as f64;
                    }
                }
                start += len;
            }
        }
        let p_max = (0..t_len)
            .map(|t| {
                let p = self.confidence + 0.03 * self.confidence_noise[t] - decay[t];
                p.clamp(0.02, 1.0) as f32
            })
            .collect();

        let token_ids = tokens.iter().map(|s| token_id(s)).collect();
        let meta = [
            ("model", "synthetic".to_string()),
            ("profile", profile.as_str().to_string()),
            ("severity", format!("{severity:.6}")),
            ("seed", seed.to_string()),
            ("head_handling", "full".to_string()),
            ("hidden_positions", "generated".to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

        GenerationTrace {
            sample_id: format!("synth-{seed}-{}", profile.as_str().to_lowercase()),
            generated_text: tokens.join(" "),
            token_strings: tokens,
            token_ids,
            text_start: SYNTH_TEXT_START,
            num_layers: SYNTH_NUM_LAYERS,
            hidden,
            attention,
            p_max,
            meta,
        }
    }
}

/// Stable pseudo vocabulary id (FNV-1a folded into a 32k vocabulary).
fn token_id(s: &str) -> i64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % 32_000) as i64
}
