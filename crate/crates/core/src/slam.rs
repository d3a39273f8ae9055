//! Reader and writer for the SLAM exercise text format.
//!
//! A file is a sequence of exercise blocks separated by blank lines. Each
//! block opens with `#` metadata lines and continues with one line per
//! token:
//!
//! ```text
//! # prompt:Yo soy un niño.
//! # user:XEinXf5+  countries:CO  days:1.793  client:web  session:lesson  format:reverse_translate  time:16
//! oMGsnnH/0101  I      PRON  Case=Nom|Number=Sing|Person=1  nsubj  4  0
//! ```
//!
//! Token columns are instance id, surface token, part of speech, morphology
//! (`|`-separated `key=value` pairs), dependency label, dependency head and an
//! optional label (`1` = mistake). Test and dev splits omit the label column;
//! their labels live in a separate key file of `instance_id label` lines.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_enum {
    ($(#[$attr:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$attr])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(
    /// Language pair of a course: learning language first, interface language second.
    Track { EnEs => "en_es", EsEn => "es_en", FrEn => "fr_en" }
);
string_enum!(Client { Ios => "ios", Android => "android", Web => "web" });
string_enum!(Session { Lesson => "lesson", Practice => "practice", Test => "test" });
string_enum!(Format {
    ReverseTranslate => "reverse_translate",
    ReverseTap => "reverse_tap",
    Listen => "listen",
});
string_enum!(Split { Train => "train", Dev => "dev", Test => "test" });

/// Per-token outcome. `Mistake` is the positive class everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Correct,
    Mistake,
}

impl Label {
    pub fn from_bit(bit: &str) -> Option<Label> {
        match bit {
            "0" => Some(Label::Correct),
            "1" => Some(Label::Mistake),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Correct => 0,
            Label::Mistake => 1,
        }
    }

    pub fn is_mistake(self) -> bool {
        self == Label::Mistake
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExerciseMeta {
    pub user: String,
    pub countries: Vec<String>,
    pub days: f64,
    pub client: Client,
    pub session: Session,
    pub format: Format,
    pub time: Option<u32>,
    pub prompt: Option<String>,
    /// Metadata keys this reader does not interpret, kept in file order.
    pub extras: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenInstance {
    pub instance_id: String,
    pub token: String,
    pub part_of_speech: String,
    pub morph_features: Vec<String>,
    pub dep_label: String,
    pub dep_head: u32,
    pub label: Option<Label>,
    pub meta: Arc<ExerciseMeta>,
    pub track: Track,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exercise {
    pub meta: Arc<ExerciseMeta>,
    pub tokens: Vec<TokenInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub track: Track,
    pub split: Split,
    pub instances: Vec<TokenInstance>,
}

/// Streaming exercise parser. Holds at most one exercise block in memory.
pub struct ExerciseReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    track: Track,
    done: bool,
}

pub fn parse_exercise_stream<R: BufRead>(reader: R, track: Track) -> ExerciseReader<R> {
    ExerciseReader {
        lines: reader.lines(),
        line_no: 0,
        track,
        done: false,
    }
}

impl<R: BufRead> ExerciseReader<R> {
    fn next_line(&mut self) -> Option<Result<String>> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(line.map_err(Error::from))
    }

    fn read_block(&mut self) -> Option<Result<Exercise>> {
        let mut fields = MetaFields::default();
        let mut tokens: Vec<RawToken> = Vec::new();
        let mut first_line = 0;

        loop {
            let line = match self.next_line() {
                None => break,
                Some(Err(e)) => return Some(Err(e)),
                Some(Ok(line)) => line,
            };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                if first_line == 0 {
                    continue;
                }
                break;
            }
            if first_line == 0 {
                first_line = self.line_no;
            }
            if let Some(body) = trimmed.strip_prefix('#') {
                if !tokens.is_empty() {
                    return Some(Err(Error::parse(
                        self.line_no,
                        "metadata line inside token block (missing blank line?)",
                    )));
                }
                if let Err(e) = fields.absorb(body.trim(), self.line_no) {
                    return Some(Err(e));
                }
            } else {
                if fields.is_empty() {
                    return Some(Err(Error::parse(
                        self.line_no,
                        "token line before any exercise metadata",
                    )));
                }
                match RawToken::parse(trimmed, self.line_no) {
                    Ok(tok) => tokens.push(tok),
                    Err(e) => return Some(Err(e)),
                }
            }
        }

        if first_line == 0 {
            return None;
        }
        let meta = match fields.finish(first_line) {
            Ok(meta) => Arc::new(meta),
            Err(e) => return Some(Err(e)),
        };
        let tokens = tokens
            .into_iter()
            .map(|raw| raw.into_instance(Arc::clone(&meta), self.track))
            .collect();
        Some(Ok(Exercise { meta, tokens }))
    }
}

impl<R: BufRead> Iterator for ExerciseReader<R> {
    type Item = Result<Exercise>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.read_block();
        if matches!(item, None | Some(Err(_))) {
            self.done = true;
        }
        item
    }
}

#[derive(Default)]
struct MetaFields {
    seen_any: bool,
    user: Option<String>,
    countries: Option<Vec<String>>,
    days: Option<f64>,
    client: Option<Client>,
    session: Option<Session>,
    format: Option<Format>,
    time: Option<Option<u32>>,
    prompt: Option<String>,
    extras: Vec<(String, String)>,
}

impl MetaFields {
    fn is_empty(&self) -> bool {
        !self.seen_any
    }

    fn absorb(&mut self, body: &str, line: usize) -> Result<()> {
        self.seen_any = true;
        if let Some(prompt) = body.strip_prefix("prompt:") {
            self.prompt = Some(prompt.to_string());
            return Ok(());
        }
        if body.is_empty() {
            return Err(Error::parse(line, "empty metadata line"));
        }
        for field in body.split_whitespace() {
            let (key, value) = field.split_once(':').ok_or_else(|| {
                Error::parse(line, format!("malformed metadata field `{field}`"))
            })?;
            match key {
                "user" => self.user = Some(value.to_string()),
                "countries" => {
                    let codes: Vec<String> = value.split('|').map(str::to_string).collect();
                    if codes.iter().any(String::is_empty) {
                        return Err(Error::parse(line, format!("malformed countries `{value}`")));
                    }
                    self.countries = Some(codes);
                }
                "days" => {
                    let days: f64 = value
                        .parse()
                        .ok()
                        .filter(|d: &f64| d.is_finite() && *d >= 0.0)
                        .ok_or_else(|| Error::parse(line, format!("invalid days `{value}`")))?;
                    self.days = Some(days);
                }
                "client" => {
                    self.client = Some(value.parse().map_err(|v| Error::UnknownValue {
                        line,
                        field: "client",
                        value: v,
                    })?)
                }
                "session" => {
                    self.session = Some(value.parse().map_err(|v| Error::UnknownValue {
                        line,
                        field: "session",
                        value: v,
                    })?)
                }
                "format" => {
                    self.format = Some(value.parse().map_err(|v| Error::UnknownValue {
                        line,
                        field: "format",
                        value: v,
                    })?)
                }
                "time" => {
                    let time = if value == "null" {
                        None
                    } else {
                        Some(value.parse::<u32>().map_err(|_| {
                            Error::parse(line, format!("invalid time `{value}`"))
                        })?)
                    };
                    self.time = Some(time);
                }
                _ => self.extras.push((key.to_string(), value.to_string())),
            }
        }
        Ok(())
    }

    fn finish(self, line: usize) -> Result<ExerciseMeta> {
        fn need<T>(v: Option<T>, key: &str, line: usize) -> Result<T> {
            v.ok_or_else(|| Error::parse(line, format!("exercise metadata lacks `{key}`")))
        }
        Ok(ExerciseMeta {
            user: need(self.user, "user", line)?,
            countries: need(self.countries, "countries", line)?,
            days: need(self.days, "days", line)?,
            client: need(self.client, "client", line)?,
            session: need(self.session, "session", line)?,
            format: need(self.format, "format", line)?,
            time: self.time.flatten(),
            prompt: self.prompt,
            extras: self.extras,
        })
    }
}

struct RawToken {
    instance_id: String,
    token: String,
    part_of_speech: String,
    morph_features: Vec<String>,
    dep_label: String,
    dep_head: u32,
    label: Option<Label>,
}

impl RawToken {
    fn parse(line: &str, line_no: usize) -> Result<RawToken> {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 && cols.len() != 7 {
            return Err(Error::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let morph_features = if cols[3] == "_" {
            Vec::new()
        } else {
            cols[3].split('|').map(str::to_string).collect()
        };
        let dep_head = cols[5]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid dependency head `{}`", cols[5])))?;
        let label = match cols.get(6) {
            None => None,
            Some(bit) => Some(Label::from_bit(bit).ok_or_else(|| {
                Error::parse(line_no, format!("label `{bit}` is not 0 or 1"))
            })?),
        };
        Ok(RawToken {
            instance_id: cols[0].to_string(),
            token: cols[1].to_string(),
            part_of_speech: cols[2].to_string(),
            morph_features,
            dep_label: cols[4].to_string(),
            dep_head,
            label,
        })
    }

    fn into_instance(self, meta: Arc<ExerciseMeta>, track: Track) -> TokenInstance {
        TokenInstance {
            instance_id: self.instance_id,
            token: self.token,
            part_of_speech: self.part_of_speech,
            morph_features: self.morph_features,
            dep_label: self.dep_label,
            dep_head: self.dep_head,
            label: self.label,
            meta,
            track,
        }
    }
}

impl Dataset {
    pub fn empty(track: Track, split: Split) -> Self {
        Dataset {
            track,
            split,
            instances: Vec::new(),
        }
    }

    /// Parses a whole stream, rejecting duplicate instance ids.
    pub fn read<R: BufRead>(reader: R, track: Track, split: Split) -> Result<Self> {
        let mut instances = Vec::new();
        let mut seen = HashSet::new();
        for exercise in parse_exercise_stream(reader, track) {
            for tok in exercise?.tokens {
                if !seen.insert(tok.instance_id.clone()) {
                    return Err(Error::DuplicateId(tok.instance_id));
                }
                instances.push(tok);
            }
        }
        Ok(Dataset {
            track,
            split,
            instances,
        })
    }

    pub fn from_path(path: &Path, track: Track, split: Split) -> Result<Self> {
        let file = File::open(path)?;
        Self::read(BufReader::new(file), track, split)
    }

    pub fn is_labeled(&self) -> bool {
        self.instances.iter().all(|i| i.label.is_some())
    }

    /// Groups consecutive instances that share one metadata allocation.
    pub fn exercises(&self) -> Vec<Exercise> {
        let mut out: Vec<Exercise> = Vec::new();
        for inst in &self.instances {
            match out.last_mut() {
                Some(ex) if Arc::ptr_eq(&ex.meta, &inst.meta) => ex.tokens.push(inst.clone()),
                _ => out.push(Exercise {
                    meta: Arc::clone(&inst.meta),
                    tokens: vec![inst.clone()],
                }),
            }
        }
        out
    }
}

pub type LabelKey = BTreeMap<String, Label>;

pub fn parse_label_key<R: BufRead>(reader: R) -> Result<LabelKey> {
    let mut key = LabelKey::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.as_slice() {
            [] => continue,
            [id, bit] => {
                let label = Label::from_bit(bit).ok_or_else(|| {
                    Error::parse(line_no, format!("label `{bit}` is not 0 or 1"))
                })?;
                if key.insert(id.to_string(), label).is_some() {
                    return Err(Error::DuplicateId(id.to_string()));
                }
            }
            _ => {
                return Err(Error::parse(
                    line_no,
                    format!("expected `instance_id label`, found {} columns", cols.len()),
                ))
            }
        }
    }
    Ok(key)
}

#[derive(Debug)]
pub struct Joined {
    pub dataset: Dataset,
    /// Key entries that matched no instance, sorted.
    pub unused_ids: Vec<String>,
}

pub fn join_labels(mut dataset: Dataset, key: &LabelKey) -> Result<Joined> {
    let missing: Vec<&str> = dataset
        .instances
        .iter()
        .filter(|i| !key.contains_key(&i.instance_id))
        .map(|i| i.instance_id.as_str())
        .collect();
    if let Some(first) = missing.first() {
        return Err(Error::MissingLabel {
            id: first.to_string(),
            missing: missing.len(),
        });
    }
    let present: HashSet<&str> = dataset
        .instances
        .iter()
        .map(|i| i.instance_id.as_str())
        .collect();
    let unused_ids: Vec<String> = key
        .keys()
        .filter(|id| !present.contains(id.as_str()))
        .cloned()
        .collect();
    if !unused_ids.is_empty() {
        log::warn!(
            "label key has {} ids not present in the data (first: {})",
            unused_ids.len(),
            unused_ids[0]
        );
    }
    for inst in &mut dataset.instances {
        inst.label = Some(key[&inst.instance_id]);
    }
    Ok(Joined {
        dataset,
        unused_ids,
    })
}

pub fn serialize_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (i, ex) in dataset.exercises().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_exercise(&mut out, ex);
    }
    out
}

fn write_exercise(out: &mut String, ex: &Exercise) {
    use std::fmt::Write;

    let m = &ex.meta;
    if let Some(prompt) = &m.prompt {
        let _ = writeln!(out, "# prompt:{prompt}");
    }
    let time = m.time.map_or_else(|| "null".to_string(), |t| t.to_string());
    let _ = write!(
        out,
        "# user:{}  countries:{}  days:{}  client:{}  session:{}  format:{}  time:{}",
        m.user,
        m.countries.join("|"),
        m.days,
        m.client,
        m.session,
        m.format,
        time
    );
    for (k, v) in &m.extras {
        let _ = write!(out, "  {k}:{v}");
    }
    out.push('\n');
    for tok in &ex.tokens {
        let morph = if tok.morph_features.is_empty() {
            "_".to_string()
        } else {
            tok.morph_features.join("|")
        };
        let _ = write!(
            out,
            "{}  {}  {}  {}  {}  {}",
            tok.instance_id, tok.token, tok.part_of_speech, morph, tok.dep_label, tok.dep_head
        );
        if let Some(label) = tok.label {
            let _ = write!(out, "  {}", label.bit());
        }
        out.push('\n');
    }
}

pub fn serialize_label_key(key: &LabelKey) -> String {
    key.iter()
        .map(|(id, label)| format!("{id} {}\n", label.bit()))
        .collect()
}
