//! Planted worlds: synthetic corpora whose ground-truth schemata are known.
//!
//! Every task is "<Verb> <Object>". A verb owns a fixed procedure of step
//! templates: generic steps naming the verb's tools, object steps naming the
//! object, part steps naming one of the object's two parts, and a final
//! step naming a part without the object. Known tasks fill the procedure
//! with their object; each unknown task is a noun swap of a known task, so
//! its true steps are exactly what a perfect edit of the known schema
//! produces. Clips are step embeddings plus Gaussian noise, interleaved
//! with filler clips drawn from distractor steps.

mod oracle;
mod vocab;

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    ClipRecord, Partition, StepCorpus, StepSentence, TaskRecord, TaskRegistry, VideoCorpus, VideoRecord,
};
use crate::editing::Ablation;
use crate::error::{Error, Result};
use crate::eval::{DatasetManifest, ExperimentConfig, ManifestQuery};
use crate::retrieval::Mode;
use crate::scoring::{MlmRule, SyntheticFixture, SyntheticProvider};
use crate::similarity::{mean_image, TaskImagesLine};

pub use oracle::{oracle_rank, OracleQuery};
use vocab::Picker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_tasks: usize,
    pub known_fraction: f64,
    pub steps_per_task: usize,
    /// Training videos per known task (the induction input).
    pub train_videos_per_task: usize,
    /// Pool videos per unknown task (the relevant set of its query).
    pub videos_per_task: usize,
    /// Clip counts, cycled over each task's videos.
    pub clips_per_video: Vec<usize>,
    /// Clips per video showing a task step; the rest are filler.
    pub task_clips_per_video: usize,
    pub distractor_steps: usize,
    /// Held-out videos of known tasks added to the pool as negatives.
    pub distractor_videos: usize,
    /// Per-dimension standard deviation of clip noise.
    pub noise_sigma: f64,
    /// Number of distinct objects available to tasks.
    pub vocab_size: usize,
    pub n_verbs: usize,
    pub dim: usize,
    pub images_per_task: usize,
    /// Per-dimension standard deviation of image noise.
    pub image_noise: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tasks: 40,
            known_fraction: 0.5,
            steps_per_task: 8,
            train_videos_per_task: 20,
            videos_per_task: 5,
            clips_per_video: vec![5, 10],
            task_clips_per_video: 4,
            distractor_steps: 200,
            distractor_videos: 40,
            noise_sigma: 0.15,
            vocab_size: 24,
            n_verbs: 5,
            dim: 256,
            images_per_task: 3,
            image_noise: 0.02,
        }
    }
}

impl WorldSpec {
    pub fn n_known(&self) -> usize {
        ((self.n_tasks as f64) * self.known_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, why: String| Err(Error::invalid(what, why));
        if !(self.known_fraction > 0.0 && self.known_fraction <= 1.0) {
            return bad("known_fraction", format!("{} not in (0, 1]", self.known_fraction));
        }
        let k = self.n_known();
        if k == 0 {
            return bad("n_tasks", format!("{} tasks leave no known task", self.n_tasks));
        }
        if self.steps_per_task == 0 || self.steps_per_task > 100 {
            return bad("steps_per_task", format!("{} not in 1..=100", self.steps_per_task));
        }
        if self.clips_per_video.is_empty() || self.clips_per_video.contains(&0) {
            return bad("clips_per_video", "must be non-empty and positive".into());
        }
        if self.task_clips_per_video == 0 {
            return bad("task_clips_per_video", "must be positive".into());
        }
        if self.distractor_steps == 0 {
            return bad("distractor_steps", "filler clips need at least one distractor step".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", format!("{} is not a valid deviation", self.noise_sigma));
        }
        if !(self.image_noise >= 0.0 && self.image_noise.is_finite()) {
            return bad("image_noise", format!("{} is not a valid deviation", self.image_noise));
        }
        if self.n_verbs == 0 || self.dim < 64 {
            return bad("n_verbs/dim", "need at least one verb and dim >= 64".into());
        }
        if self.n_tasks > k && self.n_verbs < 2 {
            return bad("n_verbs", "unknown tasks need at least two verbs".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Generic,
    Object,
    Part,
    Unique,
}

const PATTERN: [StepKind; 8] = [
    StepKind::Generic,
    StepKind::Object,
    StepKind::Part,
    StepKind::Object,
    StepKind::Generic,
    StepKind::Part,
    StepKind::Object,
    StepKind::Unique,
];

#[derive(Debug, Clone)]
struct Slot {
    kind: StepKind,
    action: &'static str,
    tool: &'static str,
    prep: &'static str,
    part: usize,
    adverb: &'static str,
}

#[derive(Debug, Clone)]
struct Procedure {
    verb: &'static str,
    slots: Vec<Slot>,
    scene: [&'static str; 2],
}

type Object = (&'static str, &'static str, &'static str);

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Procedure {
    fn text(&self, slot: &Slot, object: Object) -> String {
        let part = if slot.part == 0 { object.1 } else { object.2 };
        let a = capitalize(slot.action);
        match slot.kind {
            StepKind::Generic => format!("{a} {}.", slot.tool),
            StepKind::Object => format!("{a} {} {} {}.", object.0, slot.prep, slot.tool),
            StepKind::Part => format!("{a} {part} from {}.", object.0),
            StepKind::Unique => format!("{a} {} {}.", object.1, slot.adverb),
        }
    }

    fn texts(&self, object: Object) -> Vec<String> {
        self.slots.iter().map(|s| self.text(s, object)).collect()
    }
}

/// Independent RNG stream for one entity of one world.
fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(label.as_bytes());
    ChaCha8Rng::seed_from_u64(h.finish())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Planted step ids of each known task, in procedure order.
    pub planted: BTreeMap<String, Vec<String>>,
    /// True step texts of every task, in procedure order.
    pub steps: BTreeMap<String, Vec<String>>,
    /// Step kinds in procedure order (shared by all tasks).
    pub kinds: Vec<StepKind>,
    /// The known task each unknown task was derived from.
    pub origin: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    /// Tasks with image embeddings attached.
    pub tasks: TaskRegistry,
    pub steps: StepCorpus,
    /// Training videos of known tasks.
    pub train: VideoCorpus,
    /// Evaluation pool: unknown-task videos plus held-out known-task videos.
    pub pool: VideoCorpus,
    /// Queries for the unknown tasks.
    pub manifest: DatasetManifest,
    /// Queries for the known tasks that have held-out pool videos.
    pub known_manifest: DatasetManifest,
    pub images: Vec<TaskImagesLine>,
    pub fixture: SyntheticFixture,
    pub truth: GroundTruth,
}

struct TaskPlan {
    id: String,
    verb: usize,
    object: Object,
    partition: Partition,
    origin: Option<String>,
}

pub fn generate(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = stream(spec.seed, "vocab");
    let mut picker = Picker::new(spec.dim);
    let shuffled = |rng: &mut ChaCha8Rng, list: &[&'static str]| {
        let mut v = list.to_vec();
        v.shuffle(rng);
        v
    };

    let preps = picker.pick(vocab::PREPS, vocab::PREPS.len());
    let verbs = picker.pick(&shuffled(&mut rng, vocab::TASK_VERBS), spec.n_verbs);
    if verbs.len() < spec.n_verbs {
        return Err(Error::invalid(
            "n_verbs",
            format!("vocabulary too small: {} verbs requested, {} available", spec.n_verbs, verbs.len()),
        ));
    }
    let mut object_list = vocab::OBJECTS.to_vec();
    object_list.shuffle(&mut rng);
    let objects = picker.pick_objects(&object_list, spec.vocab_size);
    let n_known = spec.n_known();
    let n_unknown = spec.n_tasks - n_known;
    if objects.len() < spec.vocab_size || objects.len() < n_known.min(spec.vocab_size) {
        return Err(Error::invalid(
            "vocab_size",
            format!("vocabulary too small: {} objects requested, {} available", spec.vocab_size, objects.len()),
        ));
    }
    let actions = picker.pick(&shuffled(&mut rng, vocab::ACTIONS), usize::MAX);
    let tools = picker.pick(&shuffled(&mut rng, vocab::TOOLS), usize::MAX);
    let adverbs = picker.pick(&shuffled(&mut rng, vocab::ADVERBS), usize::MAX);
    let fillers = picker.pick(&shuffled(&mut rng, vocab::FILLERS), usize::MAX);
    if actions.len() < spec.steps_per_task.min(8) || tools.len() < 4 || adverbs.is_empty() || fillers.len() < 2 {
        return Err(Error::invalid("dim", format!("vocabulary too small for dim {}", spec.dim)));
    }

    // one procedure per verb; words cycle through the pools so different
    // verbs use different words whenever the pools allow
    let n = spec.steps_per_task;
    let (mut ai, mut ti) = (0usize, 0usize);
    let procedures: Vec<Procedure> = verbs
        .iter()
        .enumerate()
        .map(|(v, &verb)| {
            let mut part = 0;
            let slots = (0..n)
                .map(|i| {
                    let kind = PATTERN[i % PATTERN.len()];
                    let action = actions[ai % actions.len()];
                    ai += 1;
                    let tool = match kind {
                        StepKind::Generic | StepKind::Object => {
                            ti += 1;
                            tools[(ti - 1) % tools.len()]
                        }
                        _ => "",
                    };
                    let slot = Slot {
                        kind,
                        action,
                        tool,
                        prep: preps[(v + i) % preps.len()],
                        part,
                        adverb: adverbs[v % adverbs.len()],
                    };
                    if kind == StepKind::Part {
                        part = 1 - part;
                    }
                    slot
                })
                .collect();
            Procedure {
                verb,
                slots,
                scene: [tools[(2 * v) % tools.len()], tools[(2 * v + 1) % tools.len()]],
            }
        })
        .collect();

    // known tasks: object i, verb i mod n_verbs; every object at most once
    let width = (spec.n_tasks.max(1) as f64).log10() as usize + 1;
    let mut plans: Vec<TaskPlan> = (0..n_known)
        .map(|i| TaskPlan {
            id: format!("task{:0width$}", i),
            verb: i % verbs.len(),
            object: objects[i % objects.len()],
            partition: Partition::Known,
            origin: None,
        })
        .collect();
    let mut taken: std::collections::BTreeSet<(usize, &str)> = plans.iter().map(|p| (p.verb, p.object.0)).collect();
    if taken.len() < n_known {
        return Err(Error::invalid("vocab_size", "vocabulary too small for distinct known tasks"));
    }
    let mut urng = stream(spec.seed, "unknown");
    for j in 0..n_unknown {
        let origin = j % n_known;
        let verb = plans[origin].verb;
        // prefer objects of known tasks with another verb: their held-out
        // videos are then hard negatives in the pool
        let mut options: Vec<Object> = plans[..n_known]
            .iter()
            .filter(|p| p.verb != verb)
            .map(|p| p.object)
            .chain(objects.iter().copied())
            .filter(|o| !taken.contains(&(verb, o.0)))
            .collect();
        options.dedup();
        let object = *options.choose(&mut urng).ok_or_else(|| {
            Error::invalid("vocab_size", "vocabulary too small for distinct unknown tasks".to_string())
        })?;
        taken.insert((verb, object.0));
        plans.push(TaskPlan {
            id: format!("task{:0width$}", n_known + j),
            verb,
            object,
            partition: Partition::Unknown,
            origin: Some(plans[origin].id.clone()),
        });
    }

    let provider_lex = {
        let mut lex: BTreeMap<String, String> = BTreeMap::new();
        for w in &verbs {
            lex.insert(w.to_string(), "VB".into());
        }
        for w in &actions {
            lex.insert(w.to_string(), "VB".into());
        }
        for (o, a, b) in &objects {
            for w in [o, a, b] {
                lex.insert(w.to_string(), "NN".into());
            }
        }
        for w in tools.iter().chain(&fillers) {
            lex.insert(w.to_string(), "NN".into());
        }
        for w in &adverbs {
            lex.insert(w.to_string(), "RB".into());
        }
        for w in &preps {
            lex.insert(w.to_string(), "IN".into());
        }
        lex
    };
    let mut mlm_rules = Vec::new();
    for s in &objects {
        for t in &objects {
            if s.0 != t.0 {
                mlm_rules.push(MlmRule::new(t.0, s.1, t.1));
                mlm_rules.push(MlmRule::new(t.0, s.2, t.2));
            }
        }
    }
    let qa_associations: BTreeMap<String, Vec<String>> = objects
        .iter()
        .flat_map(|(o, a, b)| [(a.to_string(), vec![o.to_string()]), (b.to_string(), vec![o.to_string()])])
        .collect();
    let mut fixture = SyntheticFixture {
        dim: spec.dim,
        lexicon: provider_lex,
        mlm_rules,
        qa_associations,
        ..SyntheticFixture::default()
    };
    let text_provider = SyntheticProvider::new(fixture.clone());

    // task texts and the step corpus
    let mut truth = GroundTruth {
        kinds: (0..n).map(|i| PATTERN[i % PATTERN.len()]).collect(),
        ..GroundTruth::default()
    };
    let mut step_ids: HashMap<String, String> = HashMap::new();
    let mut steps: Vec<StepSentence> = Vec::new();
    for p in &plans {
        let texts = procedures[p.verb].texts(p.object);
        if p.partition == Partition::Known {
            let mut ids = Vec::with_capacity(texts.len());
            for t in &texts {
                let id = match step_ids.get(t) {
                    Some(id) => id.clone(),
                    None => {
                        let id = format!("sp{:05}", step_ids.len());
                        step_ids.insert(t.clone(), id.clone());
                        steps.push(StepSentence::new(id.clone(), t.clone(), text_provider.embed_one(t)?)?);
                        id
                    }
                };
                ids.push(id);
            }
            truth.planted.insert(p.id.clone(), ids);
        }
        if let Some(o) = &p.origin {
            truth.origin.insert(p.id.clone(), o.clone());
        }
        truth.steps.insert(p.id.clone(), texts);
    }
    let mut drng = stream(spec.seed, "distractors");
    let mut distractors: Vec<String> = Vec::new();
    let mut seen: std::collections::BTreeSet<String> = step_ids.keys().cloned().collect();
    let mut attempts = 0;
    while distractors.len() < spec.distractor_steps {
        attempts += 1;
        if attempts > spec.distractor_steps * 100 {
            return Err(Error::invalid("distractor_steps", "vocabulary too small for distinct distractors"));
        }
        let a = capitalize(actions[drng.random_range(0..actions.len())]);
        let f1 = fillers[drng.random_range(0..fillers.len())];
        let f2 = fillers[drng.random_range(0..fillers.len())];
        if f1 == f2 {
            continue;
        }
        let prep = preps[drng.random_range(0..preps.len())];
        let text = format!("{a} {f1} {prep} {f2}.");
        if seen.insert(text.clone()) {
            let id = format!("sd{:05}", distractors.len());
            steps.push(StepSentence::new(id, text.clone(), text_provider.embed_one(&text)?)?);
            distractors.push(text);
        }
    }
    let distractor_embeddings: Vec<Vec<f32>> =
        distractors.iter().map(|t| text_provider.embed_one(t)).collect::<Result<_>>()?;
    let steps = StepCorpus::from_steps(steps)?;

    // videos
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    let make_videos = |plan: &TaskPlan, tag: &str, count: usize, rank_base: u32| -> Result<Vec<VideoRecord>> {
        let texts = &truth.steps[&plan.id];
        let embeddings: Vec<Vec<f32>> = texts.iter().map(|t| text_provider.embed_one(t)).collect::<Result<_>>()?;
        let mut deck_rng = stream(spec.seed, &format!("{}-{tag}-deck", plan.id));
        let mut deck: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let video_id = format!("{}-{tag}{:03}", plan.id, i);
            let mut vrng = stream(spec.seed, &video_id);
            let n_clips = spec.clips_per_video[i % spec.clips_per_video.len()];
            let m = spec.task_clips_per_video.min(n_clips).min(texts.len());
            let mut chosen = Vec::with_capacity(m);
            while chosen.len() < m {
                if deck.is_empty() {
                    deck = (0..texts.len()).collect();
                    deck.shuffle(&mut deck_rng);
                }
                let s = deck.pop().unwrap();
                if !chosen.contains(&s) {
                    chosen.push(s);
                }
            }
            chosen.sort_unstable();
            // procedure order, with filler clips at random positions
            let mut sources: Vec<&[f32]> = chosen.iter().map(|&s| embeddings[s].as_slice()).collect();
            for _ in m..n_clips {
                let f = &distractor_embeddings[vrng.random_range(0..distractor_embeddings.len())];
                let at = vrng.random_range(0..=sources.len());
                sources.insert(at, f);
            }
            let mut t = 0.0f32;
            let clips = sources
                .iter()
                .enumerate()
                .map(|(c, src)| {
                    let dur = 2.0 + vrng.random_range(0..8) as f32;
                    let embedding = if spec.noise_sigma > 0.0 {
                        src.iter().map(|&x| x + noise.sample(&mut vrng) as f32).collect()
                    } else {
                        src.to_vec()
                    };
                    let clip = ClipRecord {
                        clip_id: format!("{video_id}-c{c:02}"),
                        video_id: video_id.clone(),
                        start_s: t,
                        end_s: t + dur,
                        embedding,
                        seg_embedding: None,
                    };
                    t += dur;
                    clip
                })
                .collect();
            out.push(VideoRecord {
                video_id,
                task_id: Some(plan.id.clone()),
                clips,
                source_rank: Some(rank_base + i as u32 + 1),
                human_segments: false,
                segmentation: None,
            });
        }
        Ok(out)
    };

    let mut train = Vec::new();
    let mut pool = Vec::new();
    let mut queries = Vec::new();
    let mut known_queries = Vec::new();
    for (k, p) in plans.iter().enumerate() {
        if p.partition == Partition::Known {
            train.extend(make_videos(p, "tr", spec.train_videos_per_task, 0)?);
            let held_out = spec.distractor_videos / n_known + usize::from(k < spec.distractor_videos % n_known);
            let vids = make_videos(p, "dv", held_out, spec.train_videos_per_task as u32)?;
            if !vids.is_empty() {
                known_queries.push(ManifestQuery {
                    task_id: p.id.clone(),
                    relevant: vids.iter().map(|v| v.video_id.clone()).collect(),
                    name: None,
                });
            }
            pool.extend(vids);
        } else {
            let vids = make_videos(p, "ev", spec.videos_per_task, 0)?;
            if !vids.is_empty() {
                queries.push(ManifestQuery {
                    task_id: p.id.clone(),
                    relevant: vids.iter().map(|v| v.video_id.clone()).collect(),
                    name: None,
                });
            }
            pool.extend(vids);
        }
    }

    // task images: the verb's scene tools dominate the picture
    let image_noise =
        Normal::new(0.0, spec.image_noise).map_err(|e| Error::invalid("image_noise", e.to_string()))?;
    let mut images = Vec::new();
    let mut records = Vec::new();
    for p in &plans {
        let proc = &procedures[p.verb];
        let scene = text_provider.embed_one(&format!("{} {} {} {}", proc.verb, proc.scene[0], proc.scene[1], p.object.0))?;
        let mut irng = stream(spec.seed, &format!("{}-images", p.id));
        let refs: Vec<String> = (0..spec.images_per_task).map(|i| format!("img/{}/{i}.jpg", p.id)).collect();
        let mut vectors = Vec::new();
        for r in &refs {
            let v: Vec<f32> = scene.iter().map(|&x| x + image_noise.sample(&mut irng) as f32).collect();
            vectors.push(v.iter().map(|&x| x as f64).collect::<Vec<f64>>());
            fixture.images.insert(r.clone(), v);
        }
        images.push(TaskImagesLine {
            task_id: p.id.clone(),
            images: refs,
            embedding_refs: None,
        });
        let name = format!("{} {}", capitalize(proc.verb), capitalize(p.object.0));
        let mut rec = TaskRecord::new(p.id.clone(), name, p.partition);
        rec.main_object = Some(p.object.0.to_string());
        rec.image_embedding = mean_image(&vectors);
        records.push(rec);
    }

    Ok(World {
        spec: spec.clone(),
        tasks: TaskRegistry::from_tasks(records)?,
        steps,
        train: VideoCorpus::from_videos(train)?,
        pool: VideoCorpus::from_videos(pool)?,
        manifest: DatasetManifest {
            name: format!("synthworld-{}", spec.seed),
            pool: None,
            queries,
        },
        known_manifest: DatasetManifest {
            name: format!("synthworld-{}-known", spec.seed),
            pool: None,
            queries: known_queries,
        },
        images,
        fixture,
        truth,
    })
}

/// The default experiment grid written next to a world.
pub fn default_grid() -> Vec<ExperimentConfig> {
    let cfg = |name: &str, mode: Mode, r: Option<usize>, ablation: Ablation| ExperimentConfig {
        name: name.to_string(),
        mode,
        lambda: None,
        r,
        beta: None,
        ablation,
    };
    vec![
        cfg("global", Mode::Global, None, Ablation::Full),
        cfg("ier-r1", Mode::Ier, Some(1), Ablation::Full),
        cfg("ier-r3", Mode::Ier, Some(3), Ablation::Full),
        cfg("ier-no-mask", Mode::Ier, Some(1), Ablation::NoMask),
        cfg("ier-no-deletion", Mode::Ier, Some(1), Ablation::NoDeletion),
        cfg("ier-no-replacement", Mode::Ier, Some(1), Ablation::NoReplacement),
        cfg("ier-no-edit", Mode::Ier, Some(1), Ablation::All),
    ]
}

impl World {
    pub fn provider(&self) -> SyntheticProvider {
        SyntheticProvider::new(self.fixture.clone())
    }

    /// Writes the world as a directory of input files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bare = TaskRegistry::from_tasks(self.tasks.iter().map(|t| TaskRecord {
            image_embedding: None,
            ..t.clone()
        }))?;
        bare.save(&dir.join("tasks.jsonl"))?;
        self.steps.save(&dir.join("steps.jsonl"))?;
        self.train.save_with_binary(&dir.join("videos.jsonl"), &dir.join("videos.bin"))?;
        self.pool.save_with_binary(&dir.join("pool.jsonl"), &dir.join("pool.bin"))?;
        self.manifest.save(&dir.join("manifest.jsonl"), Some(Path::new("pool.jsonl")))?;
        self.known_manifest.save(&dir.join("manifest_known.jsonl"), Some(Path::new("pool.jsonl")))?;
        crate::corpus::write_jsonl(&dir.join("task_images.jsonl"), &self.images)?;
        self.fixture.save(&dir.join("provider.json"))?;
        let json = |name: &str, value: serde_json::Value| -> Result<()> {
            let path = dir.join(name);
            let raw = serde_json::to_string_pretty(&value)?;
            std::fs::write(&path, raw + "\n").map_err(|e| Error::io(&path, e))
        };
        json("ground_truth.json", serde_json::to_value(&self.truth)?)?;
        json("grid.json", serde_json::to_value(default_grid())?)?;
        json("world.json", serde_json::to_value(&self.spec)?)?;
        Ok(())
    }
}
