//! Synthetic catalogue: items with latent CTR parameters and an exemplar
//! repository.
//!
//! Items combine a category's adjectives, materials, nouns and attribute
//! phrases. Their human ad texts follow a keyword-stuffing habit common on
//! marketplaces: the product's head noun followed by a long run of
//! promotional filler drawn from a two-word pool. Exemplars are written for fictitious items of the
//! same categories, each with its own structure template, so the rendered
//! ad text and the structure agree.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Exemplar, Item, TermStats};
use crate::error::{Error, Result};
use crate::generators::stylize;
use crate::seed::{derive_seed, derive_seed_parts, rng_from};
use crate::sim::LatentCtrParams;

struct Category {
    name: &'static str,
    adjectives: &'static [&'static str],
    materials: &'static [&'static str],
    nouns: &'static [&'static str],
    attributes: &'static [&'static str],
}

const CATEGORIES: &[Category] = &[
    Category {
        name: "shoes",
        adjectives: &["classic", "chunky", "slim", "retro", "urban", "lightweight"],
        materials: &["leather", "suede", "canvas", "knit", "rubber"],
        nouns: &["boot", "sneaker", "loafer", "sandal", "heel"],
        attributes: &[
            "waterproof sole",
            "cushioned insole",
            "height boost",
            "anti slip grip",
            "breathable lining",
            "wide fit",
            "arch support",
            "quick lace",
        ],
    },
    Category {
        name: "bags",
        adjectives: &["compact", "roomy", "structured", "slouchy", "minimal", "vintage"],
        materials: &["leather", "nylon", "canvas", "straw", "vegan leather"],
        nouns: &["tote", "backpack", "crossbody", "clutch", "satchel"],
        attributes: &[
            "laptop sleeve",
            "hidden pocket",
            "adjustable strap",
            "water resistant",
            "magnetic clasp",
            "gold hardware",
            "zip closure",
            "card slots",
        ],
    },
    Category {
        name: "dresses",
        adjectives: &["floral", "wrap", "pleated", "linen", "ruffled", "satin"],
        materials: &["cotton", "chiffon", "silk", "jersey", "crepe"],
        nouns: &["midi dress", "maxi dress", "shirt dress", "slip dress", "sundress"],
        attributes: &[
            "slimming waist",
            "vintage print",
            "hidden pockets",
            "flowy hem",
            "adjustable straps",
            "lined bodice",
            "wrinkle free",
            "square neck",
        ],
    },
    Category {
        name: "watches",
        adjectives: &["minimalist", "sport", "dress", "smart", "chronograph", "diver"],
        materials: &["steel", "titanium", "ceramic", "mesh", "leather strap"],
        nouns: &["watch", "smartwatch", "timepiece", "wristwatch", "field watch"],
        attributes: &[
            "sapphire glass",
            "heart rate monitor",
            "long battery",
            "luminous hands",
            "water resistant",
            "date window",
            "quick release band",
            "sleep tracking",
        ],
    },
    Category {
        name: "skincare",
        adjectives: &["hydrating", "brightening", "gentle", "soothing", "firming", "clarifying"],
        materials: &["vitamin c", "hyaluronic", "retinol", "niacinamide", "aloe"],
        nouns: &["serum", "moisturizer", "cleanser", "toner", "eye cream"],
        attributes: &[
            "fragrance free",
            "dermatologist tested",
            "reduces dark spots",
            "all skin types",
            "plumps fine lines",
            "non greasy",
            "travel size",
            "calms redness",
        ],
    },
    Category {
        name: "kitchen",
        adjectives: &["nonstick", "stackable", "heavy duty", "compact", "modern", "cast"],
        materials: &["iron", "ceramic", "bamboo", "glass", "stainless"],
        nouns: &["skillet", "knife set", "blender", "storage jars", "kettle"],
        attributes: &[
            "dishwasher safe",
            "even heating",
            "ergonomic handle",
            "airtight lid",
            "bpa free",
            "fast boil",
            "space saving",
            "gift box",
        ],
    },
];

/// Promotional filler used by human ad texts, most frequent first.
const FILLER: &[(&str, u32)] = &[("hot", 1), ("sale", 1)];

/// Structure templates of the exemplar repository, in rows of six: item
/// name, benefit, problem, action, then attribute-heavy forms. Exemplar `i`
/// belongs to category `i % 6`, so each category holds one template of each
/// row. Every template carries its own literal phrase.
const STRUCTURES: &[(&str, &[&str])] = &[
    ("\"Just Landed\"|item name", &["Open with a freshness cue.", "Close with the item name."]),
    ("item name+\"Made To Last\"", &["Name the item.", "Promise durability."]),
    ("[\"Editor's Pick\"]+item name", &["Borrow editorial authority in brackets.", "Name the item."]),
    ("item name-\"Gift Ready\"", &["Name first.", "Position it as a gift."]),
    ("\"Meet The\"+item name", &["Introduce the item like a person."]),
    ("item name+\"That Just Works\"", &["Name the item.", "Promise reliability."]),
    ("[benefit]+\"Limited Run\"", &["Bracket the strongest benefit.", "Signal scarcity."]),
    ("benefit+\"Loved By Thousands\"", &["Lead with the benefit.", "Add popularity proof."]),
    ("\"Free Returns\"|benefit", &["Remove purchase risk first.", "Then one benefit."]),
    ("[\"Top Rated\"]+benefit", &["Start with social proof.", "Follow with the benefit."]),
    ("benefit-\"Back In Stock\"", &["Benefit first.", "Announce availability."]),
    ("\"Members Love It\"|[benefit]", &["Community proof.", "Bracketed benefit."]),
    ("problem+\"Not Anymore\"", &["Name the shopper's frustration.", "Dismiss it."]),
    ("\"Why Settle\"|problem", &["Challenge the status quo.", "Name the pain point."]),
    ("problem-\"Say Goodbye To Compromise\"", &["Pain point.", "Bold promise."]),
    ("[problem]+\"We Fixed It\"", &["Bracket the pain point.", "Claim the fix."]),
    ("problem|\"Upgrade Your Routine\"", &["Pain point.", "Aspirational close."]),
    ("\"Be Honest\"+problem", &["Conversational opener.", "Pain point as a question."]),
    ("action+\"Today\"", &["Direct invitation.", "Time cue."]),
    ("\"Only Today\"|action", &["Create urgency.", "Invite the click."]),
    ("action+\"Before It's Gone\"", &["Call to action.", "Scarcity close."]),
    ("[\"Trending Now\"]+action", &["Trend cue in brackets.", "Call to action."]),
    ("action-\"Shop Now\"", &["Invitation.", "Second, blunter invitation."]),
    ("\"The Smart Choice\"|action", &["Rational framing.", "Call to action."]),
    ("benefit1|2|3", &["Stack three benefits and nothing else."]),
    ("[attribute]+[attribute]+\"Crafted With Care\"", &["Two bracketed features.", "Craftsmanship close."]),
    ("\"Season Favorite\"|item description", &["Seasonal framing.", "Full description."]),
    ("attribute+\"Meets\"+attribute", &["Pair two features as a blend."]),
    ("\"New Look\"+\"Same Comfort\"|benefit1|2", &["Contrast novelty and familiarity.", "Two benefits."]),
    ("\"Designed For You\"-item description", &["Personal framing.", "Full description."]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub items: usize,
    pub eval_items: usize,
    /// At most the number of built-in structure templates.
    pub exemplars: usize,
    pub base_ctr_min: f64,
    pub base_ctr_max: f64,
    pub noise_sd: f64,
    /// Filler words appended to each human text, inclusive range.
    pub filler_min: usize,
    pub filler_max: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            items: 2000,
            eval_items: 500,
            exemplars: STRUCTURES.len(),
            base_ctr_min: 0.03,
            base_ctr_max: 0.10,
            noise_sd: 0.1,
            filler_min: 12,
            filler_max: 18,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exemplars == 0 || self.exemplars > STRUCTURES.len() {
            return Err(Error::Config(format!(
                "exemplars must lie in 1..={}, got {}",
                STRUCTURES.len(),
                self.exemplars
            )));
        }
        if !(0.0 < self.base_ctr_min && self.base_ctr_min <= self.base_ctr_max && self.base_ctr_max < 1.0) {
            return Err(Error::Config("base CTR range must satisfy 0 < min <= max < 1".into()));
        }
        if self.filler_min > self.filler_max {
            return Err(Error::Config("filler_min exceeds filler_max".into()));
        }
        Ok(())
    }
}

/// A complete synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub eval_items: Vec<Item>,
    pub exemplars: Vec<Exemplar>,
}

fn title_case(s: &str) -> String {
    s.split_whitespace()
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn product<R: Rng>(cat: &Category, rng: &mut R) -> (String, Vec<&'static str>) {
    let name = format!(
        "{} {} {}",
        cat.adjectives.choose(rng).expect("non-empty"),
        cat.materials.choose(rng).expect("non-empty"),
        cat.nouns.choose(rng).expect("non-empty"),
    );
    let attrs = cat
        .attributes
        .choose_multiple(rng, 3)
        .copied()
        .collect::<Vec<_>>();
    (name, attrs)
}

fn make_item<R: Rng>(id: String, config: &SynthConfig, weights_ref: &str, rng: &mut R) -> Item {
    let cat = CATEGORIES.choose(rng).expect("non-empty");
    let (name, attrs) = product(cat, rng);
    let info_text = std::iter::once(name.as_str())
        .chain(attrs.iter().copied())
        .collect::<Vec<_>>()
        .join(", ");
    let n_filler = rng.random_range(config.filler_min..=config.filler_max);
    let filler: Vec<&str> = (0..n_filler)
        .map(|_| FILLER.choose_weighted(rng, |f| f.1).expect("positive weights").0)
        .collect();
    let head = name.rsplit(' ').next().unwrap_or(&name);
    let human_text = title_case(&format!("{head} {}", filler.join(" ")));
    Item {
        id,
        category: cat.name.to_owned(),
        info_text,
        human_text,
        latent: Some(LatentCtrParams {
            base_ctr: rng.random_range(config.base_ctr_min..=config.base_ctr_max),
            feature_weights_ref: weights_ref.to_owned(),
            noise_sd: config.noise_sd,
        }),
    }
}

/// Builds items, held-out items and exemplars from `seed`. `weights_ref`
/// names the world model the latent parameters belong to.
pub fn generate(config: &SynthConfig, seed: u64, weights_ref: &str) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng_from(derive_seed(seed, "synth-items"));
    let items = (0..config.items)
        .map(|i| make_item(format!("item-{i:05}"), config, weights_ref, &mut rng))
        .collect();
    let mut rng = rng_from(derive_seed(seed, "synth-eval-items"));
    let eval_items = (0..config.eval_items)
        .map(|i| make_item(format!("eval-{i:05}"), config, weights_ref, &mut rng))
        .collect();

    let mut rng = rng_from(derive_seed(seed, "synth-exemplars"));
    let mut drafts = Vec::with_capacity(config.exemplars);
    for (i, (structure, guidance)) in STRUCTURES.iter().take(config.exemplars).enumerate() {
        let cat = &CATEGORIES[i % CATEGORIES.len()];
        let (name, attrs) = product(cat, &mut rng);
        let item_info = std::iter::once(name.as_str())
            .chain(attrs.iter().copied())
            .collect::<Vec<_>>()
            .join(", ");
        drafts.push((i, cat.name, item_info, *structure, *guidance));
    }
    let stats = TermStats::from_documents(drafts.iter().map(|d| d.2.as_str()));
    let mut exemplars = Vec::with_capacity(drafts.len());
    for (i, category, item_info, structure, guidance) in drafts {
        let id = format!("ex-{i:03}");
        let mut ex = Exemplar {
            id: id.clone(),
            item_info: item_info.clone(),
            ad_text: String::new(),
            structure: structure.to_owned(),
            guidance: guidance.iter().map(|g| (*g).to_owned()).collect(),
            style_id: format!("style-{i:03}"),
        };
        let own = Item {
            id,
            category: category.to_owned(),
            info_text: item_info,
            human_text: "-".into(),
            latent: None,
        };
        ex.ad_text = stylize(&ex, &own, &stats)?.text;
        exemplars.push(ex);
    }
    Ok(Dataset {
        items,
        eval_items,
        exemplars,
    })
}

/// Seed used for the dataset when none is given, derived from the run seed.
pub fn dataset_seed(run_seed: u64) -> u64 {
    derive_seed_parts(run_seed, &["dataset"])
}
