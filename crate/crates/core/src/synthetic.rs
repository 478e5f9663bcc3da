//! Small generated corpora used by tests, benches and the bundled CLI demo.
//!
//! Every class owns a disjoint set of cue words; texts mix a few cue words
//! with shared filler, so classes are separable by bag of words. A second
//! axis of classes supplies distractor words whose class is independent of
//! the label, and a corpus labeled along both axes trains the backbone.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidate_gen::StubRecord;
use crate::embedding::{LabelSet, LabeledText};
use crate::error::Result;
use crate::transformer::{pretrain_backbone, ModelConfig, PretrainConfig, PretrainReport, ToyTransformer};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassVocab {
    pub label: &'static str,
    pub words: &'static [&'static str],
}

pub const FILLER: &[&str] = &[
    "the", "a", "day", "city", "people", "walked", "went", "street", "morning", "was", "and", "with",
    "some", "very", "around", "after", "before", "then", "they", "it", "over", "near", "today", "many",
    "time", "place", "felt", "seemed", "again", "still",
];

pub const WEATHER: &[ClassVocab] = &[
    ClassVocab {
        label: "sunny",
        words: &[
            "sun", "bright", "warm", "beach", "summer", "golden", "shine", "clear", "heat", "glow",
            "blue", "dry",
        ],
    },
    ClassVocab {
        label: "rainy",
        words: &[
            "rain", "storm", "cloud", "thunder", "wet", "grey", "puddle", "umbrella", "wind", "fog",
            "drizzle", "flood",
        ],
    },
];

pub const MOOD: &[ClassVocab] = &[
    ClassVocab {
        label: "cheerful",
        words: &[
            "smile", "laugh", "joy", "delight", "cheer", "grin", "party", "hug", "song", "dance", "bliss",
            "fun",
        ],
    },
    ClassVocab {
        label: "gloomy",
        words: &[
            "sigh", "tears", "grief", "lonely", "sorrow", "frown", "regret", "ache", "mourn", "gloom",
            "despair", "weary",
        ],
    },
];

pub const NEWS: &[ClassVocab] = &[
    ClassVocab {
        label: "world",
        words: &[
            "minister", "election", "border", "embassy", "treaty", "protest", "parliament", "diplomat",
            "refugee", "summit",
        ],
    },
    ClassVocab {
        label: "sports",
        words: &[
            "match", "coach", "goal", "tournament", "striker", "league", "season", "stadium", "medal",
            "playoff",
        ],
    },
    ClassVocab {
        label: "business",
        words: &[
            "shares", "profit", "merger", "investor", "market", "revenue", "earnings", "stock", "bank",
            "quarterly",
        ],
    },
    ClassVocab {
        label: "sci/tech",
        words: &[
            "software", "chip", "internet", "research", "satellite", "computer", "browser", "network",
            "robot", "genome",
        ],
    },
];

pub const REGION: &[ClassVocab] = &[
    ClassVocab {
        label: "north",
        words: &["glacier", "fjord", "tundra", "reindeer", "aurora", "pine"],
    },
    ClassVocab {
        label: "south",
        words: &["savanna", "lagoon", "mango", "palm", "coral", "jungle"],
    },
    ClassVocab {
        label: "east",
        words: &["pagoda", "monsoon", "bamboo", "silk", "lotus", "temple"],
    },
    ClassVocab {
        label: "west",
        words: &["prairie", "canyon", "ranch", "desert", "cactus", "rodeo"],
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub cue_words: usize,
    /// Words drawn from a random class of the distractor axis.
    pub distractor_words: usize,
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_train: 200,
            n_test: 100,
            cue_words: 3,
            distractor_words: 2,
            filler_words: 3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub labels: LabelSet,
    pub train: Vec<LabeledText>,
    pub test: Vec<LabeledText>,
}

fn sentence(rng: &mut ChaCha8Rng, parts: &[(&[&'static str], usize)]) -> String {
    let mut words: Vec<&str> = Vec::new();
    for (pool, n) in parts {
        words.extend((0..*n).map(|_| *pool.choose(rng).unwrap()));
    }
    words.shuffle(rng);
    words.join(" ")
}

/// Balanced corpus: example `i` belongs to class `i mod N`.
pub fn corpus(classes: &[ClassVocab], distractors: &[ClassVocab], spec: &CorpusSpec) -> Result<Corpus> {
    let labels = LabelSet::new(classes.iter().map(|c| c.label))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut make = |n: usize| -> Vec<LabeledText> {
        (0..n)
            .map(|i| {
                let c = &classes[i % classes.len()];
                let mut parts = vec![(c.words, spec.cue_words), (FILLER, spec.filler_words)];
                if !distractors.is_empty() {
                    let dc = &distractors[rng.random_range(0..distractors.len())];
                    parts.push((dc.words, spec.distractor_words));
                }
                LabeledText::new(sentence(&mut rng, &parts), c.label)
            })
            .collect()
    };
    let train = make(spec.n_train);
    let test = make(spec.n_test);
    Ok(Corpus { labels, train, test })
}

/// The two-class weather corpus with mood distractors and default sizes.
pub fn weather_corpus(seed: u64) -> Result<Corpus> {
    corpus(
        WEATHER,
        MOOD,
        &CorpusSpec {
            seed,
            ..Default::default()
        },
    )
}

/// Texts carrying cue words from one random class of every axis, with the
/// class index along each axis as labels. All axes must have the same
/// number of classes.
pub fn multi_axis_texts(axes: &[&[ClassVocab]], n: usize, cue_words: usize, seed: u64) -> Vec<(String, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let labels: Vec<usize> = axes.iter().map(|a| rng.random_range(0..a.len())).collect();
            let mut parts: Vec<(&[&'static str], usize)> = axes
                .iter()
                .zip(&labels)
                .map(|(a, &l)| (a[l].words, cue_words))
                .collect();
            parts.push((FILLER, 2));
            (sentence(&mut rng, &parts), labels)
        })
        .collect()
}

/// Texts built from the cue words of `source` but labeled `target`.
pub fn label_flipped(source: &ClassVocab, target: &ClassVocab, n: usize, seed: u64) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| LabeledText::new(sentence(&mut rng, &[(source.words, 3), (FILLER, 3)]), target.label))
        .collect()
}

/// Generator stub answers for every class and template id in `1..=templates`.
/// Each answer strings together cue words of its class, and one in four also
/// mentions the class label so leak filtering has work to do.
pub fn concept_stub(classes: &[ClassVocab], templates: u32, per_template: usize, seed: u64) -> Vec<StubRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in classes {
        for t in 1..=templates {
            for i in 0..per_template {
                let n_cue = rng.random_range(2..=4);
                let mut words: Vec<&str> = c.words.choose_multiple(&mut rng, n_cue).copied().collect();
                if i % 4 == 3 {
                    words.push(c.label);
                }
                words.shuffle(&mut rng);
                out.push(StubRecord {
                    class: c.label.to_string(),
                    template_id: t,
                    text: words.join(" "),
                });
            }
        }
    }
    out
}

/// Inputs used to pretrain the default backbone.
pub const BACKBONE_TEXTS: usize = 800;

/// A default-sized model whose block was pretrained on weather and mood
/// texts, so that a tuned prompt can select either axis.
pub fn pretrained_backbone(seed: u64) -> Result<(ToyTransformer, PretrainReport)> {
    let mut model = ToyTransformer::new(ModelConfig {
        seed,
        ..Default::default()
    })?;
    let texts = multi_axis_texts(&[WEATHER, MOOD], BACKBONE_TEXTS, 3, seed + 1000);
    let inputs = texts
        .iter()
        .map(|(t, l)| Ok((model.encode_text(t)?, l.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = PretrainConfig::default();
    cfg.train.seed = seed;
    let report = pretrain_backbone(&mut model, &inputs, &cfg)?;
    Ok((model, report))
}
