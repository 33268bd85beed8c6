//! Word lists for planted worlds. Words are picked greedily so that no two
//! content words share a hash bucket of the bag-of-words embedding.

use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;

pub(super) const FUNCTION_WORDS: &[&str] = &["the", "from", "how", "to"];

pub(super) const TASK_VERBS: &[&str] = &[
    "bake", "grill", "clean", "repair", "paint", "wash", "polish", "decorate", "store", "build", "install", "freeze",
    "smoke", "roast", "fry", "sharpen", "steam", "boil", "assemble", "carve", "restore", "pack", "photograph", "dye",
];

pub(super) const ACTIONS: &[&str] = &[
    "rinse", "slice", "place", "check", "hold", "trim", "press", "wipe", "lift", "pour", "mix", "turn", "fold",
    "spread", "scrub", "dry", "cover", "lay", "pull", "tighten", "loosen", "measure", "mark", "sand", "attach",
    "remove", "insert", "soak", "season", "coat", "heat", "cool", "stir", "drain", "tap", "shake", "flip", "rotate",
    "align", "secure", "seal", "wrap", "clip", "inspect", "adjust", "sort", "arrange", "stack", "label", "dust",
    "rub", "squeeze", "grip", "lower", "raise", "twist", "bend", "stretch", "dip", "brush",
];

pub(super) const TOOLS: &[&str] = &[
    "sponge", "towel", "cloth", "bucket", "knife", "spatula", "tongs", "pliers", "wrench", "screwdriver", "hammer",
    "tape", "foil", "bowl", "plate", "pan", "pot", "skillet", "grinder", "sander", "rag", "broom", "mop", "ladder",
    "bench", "vise", "clamp", "funnel", "sieve", "ladle", "scraper", "needle", "thread", "marker", "ruler",
    "scissors", "gloves", "apron", "timer", "tray", "board", "kettle", "stove", "burner", "drill", "solvent",
    "varnish", "primer", "roller", "stencil", "easel", "crate", "blanket", "heater", "fan", "hose", "nozzle",
];

pub(super) const PREPS: &[&str] = &["with", "on", "in", "under", "over", "into", "onto", "beside", "near", "behind"];

pub(super) const ADVERBS: &[&str] = &[
    "gently", "carefully", "thoroughly", "slowly", "firmly", "evenly", "quickly", "lightly", "completely", "neatly",
];

/// Objects with two parts each.
pub(super) const OBJECTS: &[(&str, &str, &str)] = &[
    ("fish", "fin", "scale"),
    ("crab", "shell", "claw"),
    ("chicken", "thigh", "wing"),
    ("lamb", "rib", "shank"),
    ("guitar", "string", "fret"),
    ("violin", "bow", "peg"),
    ("bike", "chain", "spoke"),
    ("car", "tire", "mirror"),
    ("door", "hinge", "knob"),
    ("window", "pane", "latch"),
    ("shoe", "sole", "lace"),
    ("chair", "seat", "armrest"),
    ("table", "drawer", "tabletop"),
    ("lamp", "bulb", "shade"),
    ("clock", "dial", "gear"),
    ("camera", "lens", "strap"),
    ("laptop", "keyboard", "screen"),
    ("tent", "pole", "stake"),
    ("boat", "hull", "rudder"),
    ("kite", "spar", "tail"),
    ("drum", "rim", "pedal"),
    ("fridge", "shelf", "gasket"),
    ("sink", "drain", "faucet"),
    ("toilet", "flapper", "tank"),
    ("roof", "shingle", "gutter"),
    ("fence", "post", "rail"),
    ("pumpkin", "stem", "seed"),
    ("mango", "pit", "rind"),
    ("lobster", "antenna", "carapace"),
    ("pizza", "crust", "topping"),
    ("cake", "frosting", "sponge"),
    ("piano", "key", "hammer"),
    ("sofa", "cushion", "frame"),
    ("helmet", "visor", "buckle"),
    ("turkey", "breast", "drumstick"),
    ("mirror", "glass", "bracket"),
    ("umbrella", "canopy", "handle"),
    ("wallet", "zipper", "pocket"),
    ("bucket", "bail", "rivet"),
    ("jacket", "collar", "sleeve"),
    ("backpack", "flap", "harness"),
    ("teapot", "spout", "lid"),
    ("tractor", "axle", "exhaust"),
    ("scooter", "deck", "brake"),
    ("kayak", "paddle", "cockpit"),
    ("saddle", "stirrup", "girth"),
    ("trumpet", "valve", "mouthpiece"),
    ("flute", "embouchure", "footjoint"),
    ("watch", "crown", "bezel"),
    ("printer", "cartridge", "platen"),
    ("aquarium", "filter", "heater"),
    ("blender", "jar", "blade"),
    ("stapler", "anvil", "plunger"),
    ("skateboard", "truck", "griptape"),
    ("hammock", "cord", "spreader"),
    ("birdhouse", "perch", "entrance"),
    ("squid", "tentacle", "beak"),
    ("artichoke", "heart", "choke"),
    ("pineapple", "crown", "eyes"),
    ("octopus", "arm", "sucker"),
    ("radio", "antenna", "dial"),
    ("sweater", "cuff", "hem"),
    ("bathtub", "plug", "overflow"),
    ("wagon", "wheel", "tongue"),
    ("lantern", "wick", "chimney"),
    ("vacuum", "hose", "nozzle"),
    ("canoe", "thwart", "gunwale"),
    ("shrimp", "vein", "head"),
    ("salmon", "fillet", "bone"),
    ("duck", "leg", "skin"),
    ("corn", "husk", "silk"),
    ("melon", "flesh", "seeds"),
    ("sandal", "strap", "insole"),
    ("desk", "hutch", "cubby"),
    ("bookshelf", "shelving", "backboard"),
    ("microwave", "turntable", "vent"),
    ("lawnmower", "spark", "deck"),
    ("trampoline", "springs", "mat"),
];

pub(super) const FILLERS: &[&str] = &[
    "whistle", "box", "lid", "bag", "basket", "carpet", "curtain", "pillow", "candle", "jar", "bottle", "cup", "mug",
    "spoon", "fork", "napkin", "soap", "lotion", "ticket", "envelope", "stamp", "notebook", "pencil", "eraser",
    "backpack", "jacket", "scarf", "hat", "sock", "button", "badge", "coin", "ribbon", "balloon", "poster", "folder",
    "magnet", "sticker", "battery", "cable", "plug", "remote", "speaker", "headphone", "charger", "vase", "rug",
    "quilt", "doll", "puzzle",
];

pub(super) fn bucket(word: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(word.as_bytes());
    (h.finish() % dim as u64) as usize
}

/// Tracks used words and buckets while picking.
pub(super) struct Picker {
    dim: usize,
    words: HashSet<String>,
    buckets: HashSet<usize>,
}

impl Picker {
    pub(super) fn new(dim: usize) -> Self {
        let mut p = Self {
            dim,
            words: HashSet::new(),
            buckets: HashSet::new(),
        };
        for w in FUNCTION_WORDS {
            p.take(&[w]);
        }
        p
    }

    fn free(&self, words: &[&str]) -> bool {
        let mut seen = HashSet::new();
        words.iter().all(|w| {
            let b = bucket(w, self.dim);
            !self.words.contains(*w) && !self.buckets.contains(&b) && seen.insert(b)
        })
    }

    fn take(&mut self, words: &[&str]) {
        for w in words {
            self.words.insert(w.to_string());
            self.buckets.insert(bucket(w, self.dim));
        }
    }

    /// Takes up to `n` words from `list` in order, skipping any that is
    /// used or would collide.
    pub(super) fn pick(&mut self, list: &[&'static str], n: usize) -> Vec<&'static str> {
        let mut out = Vec::new();
        for w in list {
            if out.len() == n {
                break;
            }
            if self.free(&[w]) {
                self.take(&[w]);
                out.push(*w);
            }
        }
        out
    }

    pub(super) fn pick_objects(
        &mut self,
        list: &[(&'static str, &'static str, &'static str)],
        n: usize,
    ) -> Vec<(&'static str, &'static str, &'static str)> {
        let mut out = Vec::new();
        for &(o, a, b) in list {
            if out.len() == n {
                break;
            }
            if self.free(&[o, a, b]) {
                self.take(&[o, a, b]);
                out.push((o, a, b));
            }
        }
        out
    }
}
