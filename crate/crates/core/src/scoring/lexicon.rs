use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Tag returned for words the lexicon does not know.
pub const UNKNOWN_TAG: &str = "X";

pub fn is_noun_tag(tag: &str) -> bool {
    matches!(tag, "NN" | "NNS" | "NNP" | "NNPS")
}

const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "all"];
const PRONOUNS: &[(&str, &str)] = &[
    ("your", "PRP$"),
    ("my", "PRP$"),
    ("its", "PRP$"),
    ("their", "PRP$"),
    ("it", "PRP"),
    ("you", "PRP"),
    ("them", "PRP"),
    ("they", "PRP"),
];
const PREPOSITIONS: &[&str] = &[
    "in", "into", "on", "onto", "from", "with", "for", "to", "of", "at", "by", "over", "under", "out", "off", "through",
    "inside", "around", "until", "about", "between", "after", "before",
];
const CONJUNCTIONS: &[&str] = &["and", "or", "but"];
const ADVERBS: &[&str] = &["thoroughly", "gently", "carefully", "well", "again", "slowly", "quickly", "then", "up", "down"];
const ADJECTIVES: &[&str] = &[
    "long", "haired", "young", "healthy", "new", "old", "hot", "cold", "warm", "dirty", "clean", "dry", "wet", "fresh",
    "balanced", "particularly", "small", "large", "big", "soft", "sharp", "flat", "roasting", "smooth", "whole", "thin",
    "thick", "snap",
];
const VERBS: &[&str] = &[
    "bake", "cook", "fix", "remove", "transplant", "prepare", "clean", "build", "trap", "brush", "wash", "make", "put",
    "fill", "test", "use", "slice", "cut", "comb", "groom", "bait", "set", "insert", "preheat", "stir", "fry", "place",
    "rinse", "add", "pour", "mix", "grill", "polish", "paint", "repair", "store", "fold", "install", "plant", "prune",
    "sharpen", "decorate", "boil", "chop", "scrub", "wipe", "apply", "check", "let", "soak", "season", "serve", "cover",
    "attach", "tighten", "replace", "open", "close", "hold", "turn", "pull", "push", "spread", "trim", "water", "lift",
    "drain", "heat", "melt", "roll", "shape", "sand", "stain", "blow", "play", "peel", "scrape", "dip", "hang", "lay",
    "press", "secure", "sprinkle", "squeeze", "arrange", "transfer", "whisk", "flip", "tie", "unscrew", "screw", "load",
];
const VERB_FORMS: &[(&str, &str)] = &[("using", "VBG"), ("is", "VBZ"), ("are", "VBP"), ("be", "VB")];
const NOUNS: &[&str] = &[
    "chicken", "fish", "ham", "lamb", "guitar", "violin", "toilet", "bike", "motorcycle", "cat", "dog", "rat", "rabbit",
    "tree", "crab", "donut", "cookie", "cake", "pet", "oven", "thermometer", "thigh", "pot", "fertilizer", "flapper",
    "polish", "fin", "kitchen", "shell", "steel", "disk", "square", "chain", "degreaser", "towel", "trap", "water",
    "knife", "pan", "tray", "bowl", "brush", "sponge", "soap", "paint", "cabinet", "tea", "sugar", "salt", "oil",
    "butter", "flour", "egg", "minute", "hour", "degree", "inch", "side", "top", "bottom", "lid", "string", "bridge",
    "neck", "body", "seat", "tank", "valve", "wheel", "frame", "tire", "root", "soil", "hole", "branch", "leaf", "fur",
    "coat", "tail", "ear", "paw", "skin", "meat", "sauce", "dough", "batter", "sheet", "foil", "rack", "plate", "cloth",
    "glove", "bucket", "hose", "wrench", "screwdriver", "drill", "nail", "board", "wood", "glass", "door", "window",
    "floor", "wall", "house", "car", "shoe", "shirt", "bed", "bread", "rice", "pasta", "cheese", "apple", "lemon",
    "garlic", "onion", "pepper", "tomato", "potato", "bean", "carrot", "mushroom", "steak", "pork", "beef", "shrimp",
    "salmon", "turkey", "duck", "bait", "cage", "pet", "hair", "mat", "spray", "filter", "pipe", "seal", "bolt",
];
const IRREGULAR_PLURALS: &[&str] = &["shears", "scissors", "pliers", "tongs", "clothes"];

/// Closed word list mapping lowercased words to Penn tags.
///
/// Lookup strips surrounding punctuation and lowercases. Plurals of known
/// nouns are recognised by a trailing `s`/`es` and tagged `NNS`; anything
/// else unknown is tagged [`UNKNOWN_TAG`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<String, String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::english_base()
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// A small built-in English lexicon covering common instructional text.
    pub fn english_base() -> Self {
        let mut lex = Self::empty();
        for w in DETERMINERS {
            lex.insert(w, "DT");
        }
        for (w, t) in PRONOUNS {
            lex.insert(w, t);
        }
        for w in PREPOSITIONS {
            lex.insert(w, "IN");
        }
        for w in CONJUNCTIONS {
            lex.insert(w, "CC");
        }
        for w in ADVERBS {
            lex.insert(w, "RB");
        }
        for w in ADJECTIVES {
            lex.insert(w, "JJ");
        }
        for w in NOUNS {
            lex.insert(w, "NN");
        }
        // verbs win over nouns for words like "trap" or "brush": task names
        // are imperative phrases
        for w in VERBS {
            lex.insert(w, "VB");
        }
        for (w, t) in VERB_FORMS {
            lex.insert(w, t);
        }
        for w in IRREGULAR_PLURALS {
            lex.insert(w, "NNS");
        }
        lex
    }

    pub fn insert(&mut self, word: &str, tag: &str) {
        self.entries.insert(word.to_lowercase(), tag.to_string());
    }

    pub fn extend<'a>(&mut self, entries: impl IntoIterator<Item = (&'a String, &'a String)>) {
        for (w, t) in entries {
            self.insert(w, t);
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn tag_word(&self, surface: &str) -> String {
        let core = word_core(surface).to_lowercase();
        if core.is_empty() {
            return UNKNOWN_TAG.to_string();
        }
        if let Some(tag) = self.entries.get(&core) {
            return tag.clone();
        }
        if core.chars().all(|c| c.is_ascii_digit()) {
            return "CD".to_string();
        }
        for suffix in ["es", "s"] {
            if let Some(stem) = core.strip_suffix(suffix) {
                if self.entries.get(stem).map(String::as_str) == Some("NN") {
                    return "NNS".to_string();
                }
            }
        }
        UNKNOWN_TAG.to_string()
    }
}

/// The alphanumeric core of a whitespace word: leading and trailing
/// punctuation removed.
pub fn word_core(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}
