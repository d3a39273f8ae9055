//! Synthetic SLAM-format data with known structure.
//!
//! Each learner has a latent ability and each word a latent difficulty; the
//! probability of a mistake is logistic in difficulty, ability, exercise
//! format and session type. On the web client a fraction of labels is
//! replaced by coin flips at the base rate, which makes web predictions
//! measurably worse than ios/android ones for any model.
//!
//! Every learner's exercises are split chronologically: the first part goes
//! to `train`, the rest to `dev`, mirroring how the shared-task splits were
//! cut.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::Result;
use crate::slam::{
    serialize_dataset, serialize_label_key, Client, Dataset, ExerciseMeta, Format, Label, LabelKey, Session, Split,
    TokenInstance, Track,
};

/// Seed of the bundled mini-dataset under `data/mini`.
pub const BUNDLED_SEED: u64 = 20_180_601;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "se", "po", "di", "va", "zu", "chi", "bra", "el", "on", "que", "tre", "mas",
];

const POS_TAGS: &[(&str, f64, &str)] = &[
    ("NOUN", 0.2, "obj"),
    ("VERB", 0.6, "ROOT"),
    ("ADJ", 0.3, "amod"),
    ("DET", -0.6, "det"),
    ("PRON", -0.4, "nsubj"),
    ("ADP", -0.2, "case"),
];

const COUNTRIES: &[&str] = &[
    "US", "GB", "DE", "JP", "ES", "FR", "CA", "MX", "CO", "BR", "IN", "CN", "AR", "VN", "RU", "TR",
];

#[derive(Debug, Clone)]
pub struct Word {
    pub surface: String,
    pub pos: &'static str,
    pub dep: &'static str,
    pub morph: Vec<String>,
    pub difficulty: f64,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    pub words: Vec<Word>,
}

impl Lexicon {
    pub fn random<R: Rng>(rng: &mut R, size: usize) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut words: Vec<Word> = Vec::with_capacity(size);
        while words.len() < size {
            let n_syl = rng.random_range(1..=3);
            let surface: String = (0..n_syl)
                .map(|_| *SYLLABLES.choose(rng).expect("syllables"))
                .collect();
            if words.iter().any(|w| w.surface == surface) {
                continue;
            }
            let &(pos, pos_effect, dep) = POS_TAGS.choose(rng).expect("tags");
            let morph = match pos {
                "NOUN" | "ADJ" | "DET" => vec![
                    format!("Gender={}", if rng.random_bool(0.5) { "Fem" } else { "Masc" }),
                    format!("Number={}", if rng.random_bool(0.7) { "Sing" } else { "Plur" }),
                ],
                "VERB" => vec![
                    format!("Person={}", rng.random_range(1..=3)),
                    format!("Tense={}", if rng.random_bool(0.6) { "Pres" } else { "Past" }),
                ],
                "PRON" => vec![format!("Person={}", rng.random_range(1..=3))],
                _ => Vec::new(),
            };
            words.push(Word {
                surface,
                pos,
                dep,
                morph,
                difficulty: pos_effect + normal.sample(rng),
            });
        }
        Lexicon { words }
    }
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub user: String,
    pub ability: f64,
    pub client: Client,
    pub countries: Vec<String>,
}

fn random_user_id<R: Rng>(rng: &mut R) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    (0..8)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect()
}

pub fn random_learners<R: Rng>(rng: &mut R, count: usize) -> Vec<Learner> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let client = if u < 0.35 {
                Client::Ios
            } else if u < 0.70 {
                Client::Android
            } else {
                Client::Web
            };
            let mut countries = vec![COUNTRIES.choose(rng).expect("countries").to_string()];
            if rng.random_bool(0.1) {
                let second = COUNTRIES.choose(rng).expect("countries").to_string();
                if second != countries[0] {
                    countries.push(second);
                }
            }
            Learner {
                user: random_user_id(rng),
                ability: normal.sample(rng),
                client,
                countries,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    /// Exercises per learner, inclusive range.
    pub exercises: (usize, usize),
    /// Tokens per exercise, inclusive range.
    pub tokens: (usize, usize),
    /// Share of each learner's exercises that go to train.
    pub train_fraction: f64,
    /// Probability that a web-client label is replaced by noise.
    pub web_noise: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            exercises: (7, 13),
            tokens: (3, 7),
            train_fraction: 0.75,
            web_noise: 0.4,
        }
    }
}

fn mistake_logit(word: &Word, learner: &Learner, format: Format, session: Session, days: f64) -> f64 {
    let format_effect = match format {
        Format::Listen => 0.6,
        Format::ReverseTranslate => 0.2,
        Format::ReverseTap => -0.7,
    };
    let session_effect = if session == Session::Test { 0.4 } else { 0.0 };
    -1.9 + 1.5 * word.difficulty - 1.4 * learner.ability + format_effect + session_effect - 0.3 * (days / 30.0).min(1.0)
}

/// Simulates every learner's exercise history; returns labeled train and dev sets.
pub fn simulate<R: Rng>(
    track: Track,
    lexicon: &Lexicon,
    learners: &[Learner],
    config: &SimulationConfig,
    rng: &mut R,
) -> (Dataset, Dataset) {
    let mut train = Dataset::empty(track, Split::Train);
    let mut dev = Dataset::empty(track, Split::Dev);
    let gap = Exp::new(0.7).expect("valid rate");
    let prefix = match track {
        Track::EnEs => 'E',
        Track::EsEn => 'S',
        Track::FrEn => 'F',
    };
    for (u, learner) in learners.iter().enumerate() {
        let n_ex = rng.random_range(config.exercises.0..=config.exercises.1);
        let n_train = ((n_ex as f64) * config.train_fraction).ceil() as usize;
        let mut days: f64 = rng.random_range(0.0..2.0);
        for e in 0..n_ex {
            days += gap.sample(rng);
            let days_rounded = (days * 1000.0).round() / 1000.0;
            let session = *[Session::Lesson, Session::Lesson, Session::Lesson, Session::Practice, Session::Test]
                .choose(rng)
                .expect("sessions");
            let format = *[Format::ReverseTranslate, Format::ReverseTranslate, Format::ReverseTap, Format::Listen]
                .choose(rng)
                .expect("formats");
            let n_tok = rng.random_range(config.tokens.0..=config.tokens.1);
            let words: Vec<&Word> = (0..n_tok)
                .map(|_| lexicon.words.choose(rng).expect("lexicon"))
                .collect();
            let time = if rng.random_bool(0.05) {
                None
            } else {
                Some(rng.random_range(3..=70))
            };
            let prompt = match format {
                Format::ReverseTap => None,
                _ => Some(
                    words
                        .iter()
                        .map(|w| w.surface.to_uppercase())
                        .collect::<Vec<_>>()
                        .join(" "),
                ),
            };
            let meta = Arc::new(ExerciseMeta {
                user: learner.user.clone(),
                countries: learner.countries.clone(),
                days: days_rounded,
                client: learner.client,
                session,
                format,
                time,
                prompt,
                extras: Vec::new(),
            });
            let target = if e < n_train { &mut train } else { &mut dev };
            for (t, word) in words.iter().enumerate() {
                let p = crate::loss::sigmoid(mistake_logit(word, learner, format, session, days));
                let mut mistake = rng.random_bool(p);
                if learner.client == Client::Web && rng.random_bool(config.web_noise) {
                    mistake = rng.random_bool(0.25);
                }
                let surface = if t == 0 {
                    let mut c = word.surface.chars();
                    c.next()
                        .map(|f| f.to_uppercase().chain(c).collect())
                        .unwrap_or_default()
                } else {
                    word.surface.clone()
                };
                target.instances.push(TokenInstance {
                    instance_id: format!("{prefix}{u:03}{e:03}{t:02}"),
                    token: surface,
                    part_of_speech: word.pos.to_string(),
                    morph_features: word.morph.clone(),
                    dep_label: word.dep.to_string(),
                    dep_head: rng.random_range(0..=n_tok as u32),
                    label: Some(if mistake { Label::Mistake } else { Label::Correct }),
                    meta: Arc::clone(&meta),
                    track,
                });
            }
        }
    }
    (train, dev)
}

fn track_rng(seed: u64, track: Track) -> ChaCha8Rng {
    let salt = match track {
        Track::EnEs => 1,
        Track::EsEn => 2,
        Track::FrEn => 3,
    };
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(salt))
}

/// One track of the mini-dataset: 60 learners over a 60-word lexicon.
pub fn mini_track(seed: u64, track: Track) -> (Dataset, Dataset) {
    let mut rng = track_rng(seed, track);
    let lexicon = Lexicon::random(&mut rng, 60);
    let learners = random_learners(&mut rng, 60);
    simulate(track, &lexicon, &learners, &SimulationConfig::default(), &mut rng)
}

/// Splits labels off a dataset, as the shared task does for dev and test.
pub fn strip_labels(dataset: &Dataset) -> (Dataset, LabelKey) {
    let mut key = LabelKey::new();
    let mut out = dataset.clone();
    for inst in &mut out.instances {
        if let Some(l) = inst.label.take() {
            key.insert(inst.instance_id.clone(), l);
        }
    }
    (out, key)
}

/// Writes `<track>.slam.train`, `<track>.slam.dev` and `<track>.slam.dev.key`
/// for every track.
pub fn write_mini_dataset(dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for &track in Track::ALL {
        let (train, dev) = mini_track(seed, track);
        let (dev_unlabeled, key) = strip_labels(&dev);
        let write = |name: String, text: String| -> Result<()> {
            let mut f = std::fs::File::create(dir.join(name))?;
            f.write_all(text.as_bytes())?;
            Ok(())
        };
        write(format!("{track}.slam.train"), serialize_dataset(&train))?;
        write(format!("{track}.slam.dev"), serialize_dataset(&dev_unlabeled))?;
        write(format!("{track}.slam.dev.key"), serialize_label_key(&key))?;
    }
    Ok(())
}

/// Two tracks drawn from one lexicon: a large `majority` track and a
/// `minority` track whose train split is subsampled to `minority_train` instances.
/// Returns (majority train, minority train, minority dev).
pub fn shared_structure_pair(seed: u64, minority_train: usize) -> (Dataset, Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::random(&mut rng, 150);
    let config = SimulationConfig {
        web_noise: 0.0,
        ..SimulationConfig::default()
    };
    let major_learners = random_learners(&mut rng, 60);
    let (major, _) = simulate(Track::EnEs, &lexicon, &major_learners, &config, &mut rng);
    let minor_learners = random_learners(&mut rng, 30);
    let minor_config = SimulationConfig {
        train_fraction: 0.4,
        ..config
    };
    let (minor_full, minor_dev) = simulate(Track::EsEn, &lexicon, &minor_learners, &minor_config, &mut rng);
    let minor_train = subsample_exercises(&minor_full, minority_train, &mut rng);
    (major, minor_train, minor_dev)
}

/// Whole exercises drawn at random until `target` instances are collected,
/// kept in file order; the last exercise is cut to hit `target` exactly.
fn subsample_exercises<R: Rng>(dataset: &Dataset, target: usize, rng: &mut R) -> Dataset {
    let exercises = dataset.exercises();
    let mut order: Vec<usize> = (0..exercises.len()).collect();
    order.shuffle(rng);
    let mut chosen = Vec::new();
    let mut count = 0;
    for i in order {
        if count >= target {
            break;
        }
        count += exercises[i].tokens.len();
        chosen.push(i);
    }
    chosen.sort_unstable();
    let mut out = Dataset::empty(dataset.track, dataset.split);
    out.instances = chosen
        .into_iter()
        .flat_map(|i| exercises[i].tokens.iter().cloned())
        .collect();
    out.instances.truncate(target);
    out
}
