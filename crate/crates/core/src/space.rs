//! Tunable knob catalogue and the mapping between raw knob values and
//! unit-hypercube action vectors.
//!
//! Integer knobs map linearly onto `[0, 1]`; categorical knobs map onto
//! equispaced points (`index / (len - 1)`) and decode to the nearest point.
//! Dimension order is the catalogue order and is shared by datasets, models
//! and agents.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KB: i64 = 1024;
pub const MB: i64 = 1024 * 1024;

/// Canonical knob names.
pub mod knobs {
    pub const NUM_NETWORK_THREADS: &str = "num.network.threads";
    pub const NUM_IO_THREADS: &str = "num.io.threads";
    pub const QUEUED_MAX_REQUESTS: &str = "queued.max.requests";
    pub const SOCKET_RECEIVE_BUFFER_BYTES: &str = "socket.receive.buffer.bytes";
    pub const SOCKET_SEND_BUFFER_BYTES: &str = "socket.send.buffer.bytes";
    pub const SOCKET_REQUEST_MAX_BYTES: &str = "socket.request.max.bytes";
    pub const BUFFER_MEMORY: &str = "buffer.memory";
    pub const BATCH_SIZE: &str = "batch.size";
    pub const LINGER_MS: &str = "linger.ms";
    pub const COMPRESSION_TYPE: &str = "compression.type";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KnobKind {
    Integer { lower: i64, upper: i64, default: i64 },
    Categorical { categories: Vec<String>, default: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: KnobKind,
}

impl ParameterSpec {
    pub fn integer(name: &str, lower: i64, upper: i64, default: i64) -> Self {
        Self {
            name: name.to_string(),
            kind: KnobKind::Integer {
                lower,
                upper,
                default,
            },
        }
    }

    pub fn categorical(name: &str, categories: &[&str], default: &str) -> Self {
        let default = categories.iter().position(|c| *c == default).unwrap_or(0);
        Self {
            name: name.to_string(),
            kind: KnobKind::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
                default,
            },
        }
    }

    pub fn default_value(&self) -> KnobValue {
        match &self.kind {
            KnobKind::Integer { default, .. } => KnobValue::Int(*default),
            KnobKind::Categorical {
                categories,
                default,
            } => KnobValue::Label(categories[*default].clone()),
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            KnobKind::Categorical { categories, .. } => Some(categories),
            KnobKind::Integer { .. } => None,
        }
    }

    /// Checks one value against this knob, returning the violation if any.
    pub fn check(&self, value: &KnobValue) -> Option<Violation> {
        match (&self.kind, value) {
            (KnobKind::Integer { lower, upper, .. }, KnobValue::Int(v)) => {
                (v < lower || v > upper).then(|| Violation::OutOfRange(self.name.clone()))
            }
            (KnobKind::Categorical { categories, .. }, KnobValue::Label(label)) => {
                (!categories.contains(label)).then(|| Violation::UnknownCategory(self.name.clone()))
            }
            _ => Some(Violation::WrongKind(self.name.clone())),
        }
    }

    /// Position of `value` in `[0, 1]`; assumes `check` passed.
    fn unit(&self, value: &KnobValue) -> f64 {
        match (&self.kind, value) {
            (KnobKind::Integer { lower, upper, .. }, KnobValue::Int(v)) => {
                (v - lower) as f64 / (upper - lower) as f64
            }
            (KnobKind::Categorical { categories, .. }, KnobValue::Label(label)) => {
                let idx = categories.iter().position(|c| c == label).unwrap_or(0);
                if categories.len() == 1 {
                    0.0
                } else {
                    idx as f64 / (categories.len() - 1) as f64
                }
            }
            _ => 0.0,
        }
    }

    fn decode(&self, unit: f64) -> KnobValue {
        let a = if unit.is_nan() { 0.0 } else { unit.clamp(0.0, 1.0) };
        match &self.kind {
            KnobKind::Integer { lower, upper, .. } => {
                let raw = *lower as f64 + a * (upper - lower) as f64;
                KnobValue::Int((raw.round() as i64).clamp(*lower, *upper))
            }
            KnobKind::Categorical { categories, .. } => {
                let idx = (a * (categories.len() - 1) as f64).round() as usize;
                KnobValue::Label(categories[idx.min(categories.len() - 1)].clone())
            }
        }
    }

    fn validate_spec(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("knob {}: {msg}", self.name)));
        match &self.kind {
            KnobKind::Integer {
                lower,
                upper,
                default,
            } => {
                if lower >= upper {
                    return bad("lower bound must be below upper bound");
                }
                if default < lower || default > upper {
                    return bad("default outside range");
                }
            }
            KnobKind::Categorical {
                categories,
                default,
            } => {
                if categories.is_empty() {
                    return bad("no categories");
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return bad("duplicate category");
                    }
                }
                if *default >= categories.len() {
                    return bad("default outside category list");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnobValue {
    Int(i64),
    Label(String),
}

impl KnobValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            KnobValue::Int(v) => Some(*v),
            KnobValue::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            KnobValue::Label(l) => Some(l),
            KnobValue::Int(_) => None,
        }
    }
}

impl fmt::Display for KnobValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnobValue::Int(v) => write!(f, "{v}"),
            KnobValue::Label(l) => f.write_str(l),
        }
    }
}

impl From<i64> for KnobValue {
    fn from(v: i64) -> Self {
        KnobValue::Int(v)
    }
}

impl From<&str> for KnobValue {
    fn from(v: &str) -> Self {
        KnobValue::Label(v.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Violation {
    Missing(String),
    Unknown(String),
    OutOfRange(String),
    UnknownCategory(String),
    WrongKind(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(k) => write!(f, "missing-knob: {k}"),
            Violation::Unknown(k) => write!(f, "unknown-knob: {k}"),
            Violation::OutOfRange(k) => write!(f, "out-of-range: {k}"),
            Violation::UnknownCategory(k) => write!(f, "unknown-category: {k}"),
            Violation::WrongKind(k) => write!(f, "wrong-kind: {k}"),
        }
    }
}

/// One concrete assignment of knob values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    values: BTreeMap<String, KnobValue>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, knob: &str, value: impl Into<KnobValue>) -> Self {
        self.set(knob, value);
        self
    }

    pub fn set(&mut self, knob: &str, value: impl Into<KnobValue>) {
        self.values.insert(knob.to_string(), value.into());
    }

    pub fn remove(&mut self, knob: &str) -> Option<KnobValue> {
        self.values.remove(knob)
    }

    pub fn get(&self, knob: &str) -> Option<&KnobValue> {
        self.values.get(knob)
    }

    pub fn int(&self, knob: &str) -> Option<i64> {
        self.get(knob).and_then(KnobValue::as_int)
    }

    pub fn label(&self, knob: &str) -> Option<&str> {
        self.get(knob).and_then(KnobValue::as_label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KnobValue)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("parameter space has no knobs".into()));
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate_spec()?;
            if specs[..i].iter().any(|s| s.name == spec.name) {
                return Err(Error::InvalidArgument(format!("duplicate knob {}", spec.name)));
            }
        }
        Ok(Self { specs })
    }

    /// The ten producer/broker knobs with stock defaults and tuning ranges.
    pub fn default_space() -> Self {
        use knobs::*;
        Self {
            specs: vec![
                ParameterSpec::integer(NUM_NETWORK_THREADS, 1, 20, 3),
                ParameterSpec::integer(NUM_IO_THREADS, 1, 24, 8),
                ParameterSpec::integer(QUEUED_MAX_REQUESTS, 50, 5000, 500),
                ParameterSpec::integer(SOCKET_RECEIVE_BUFFER_BYTES, 10 * KB, 200 * KB, 100 * KB),
                ParameterSpec::integer(SOCKET_SEND_BUFFER_BYTES, 10 * KB, 200 * KB, 100 * KB),
                ParameterSpec::integer(SOCKET_REQUEST_MAX_BYTES, 10 * MB, 300 * MB, 100 * MB),
                ParameterSpec::integer(BUFFER_MEMORY, 2 * MB, 96 * MB, 32 * MB),
                ParameterSpec::integer(BATCH_SIZE, 4 * KB, 256 * KB, 16 * KB),
                ParameterSpec::integer(LINGER_MS, 0, 100, 0),
                ParameterSpec::categorical(
                    COMPRESSION_TYPE,
                    &["none", "snappy", "gzip", "lz4"],
                    "none",
                ),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Option<&ParameterSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    pub fn default_config(&self) -> Configuration {
        let mut config = Configuration::new();
        for spec in &self.specs {
            config.set(&spec.name, spec.default_value());
        }
        config
    }

    pub fn validate(&self, config: &Configuration) -> Vec<Violation> {
        let mut violations = Vec::new();
        for spec in &self.specs {
            match config.get(&spec.name) {
                None => violations.push(Violation::Missing(spec.name.clone())),
                Some(value) => violations.extend(spec.check(value)),
            }
        }
        for (name, _) in config.iter() {
            if self.spec(name).is_none() {
                violations.push(Violation::Unknown(name.to_string()));
            }
        }
        violations
    }

    pub fn check(&self, config: &Configuration) -> Result<()> {
        let violations = self.validate(config);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfiguration(violations))
        }
    }

    /// Maps a valid configuration to its action vector in `[0, 1]^d`.
    pub fn normalize(&self, config: &Configuration) -> Result<Vec<f64>> {
        self.check(config)?;
        Ok(self
            .specs
            .iter()
            .map(|spec| spec.unit(config.get(&spec.name).expect("validated")))
            .collect())
    }

    /// Decodes an action vector, clamping each coordinate into `[0, 1]`.
    pub fn denormalize(&self, action: &[f64]) -> Result<Configuration> {
        if action.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: action.len(),
            });
        }
        let mut config = Configuration::new();
        for (spec, &a) in self.specs.iter().zip(action) {
            config.set(&spec.name, spec.decode(a));
        }
        Ok(config)
    }

    /// Numeric encoding used for dataset columns and model inputs: integer
    /// knobs in native units, categorical knobs by category index.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        self.check(config)?;
        Ok(self
            .specs
            .iter()
            .map(|spec| match config.get(&spec.name).expect("validated") {
                KnobValue::Int(v) => *v as f64,
                KnobValue::Label(l) => spec
                    .categories()
                    .and_then(|c| c.iter().position(|x| x == l))
                    .unwrap_or(0) as f64,
            })
            .collect())
    }

    /// Renders the flat key-value text form read by [`ParameterSpace::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for spec in &self.specs {
            out.push_str(&format!("name = {}\n", spec.name));
            match &spec.kind {
                KnobKind::Integer {
                    lower,
                    upper,
                    default,
                } => {
                    out.push_str("kind = integer\n");
                    out.push_str(&format!("lower = {lower}\nupper = {upper}\ndefault = {default}\n"));
                }
                KnobKind::Categorical {
                    categories,
                    default,
                } => {
                    out.push_str("kind = categorical\n");
                    out.push_str(&format!("categories = {}\n", categories.join(",")));
                    out.push_str(&format!("default = {}\n", categories[*default]));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses blocks of `key = value` lines, one block per knob, each
    /// starting with `name`. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut blocks: Vec<BTreeMap<String, String>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key == "name" {
                blocks.push(BTreeMap::new());
            }
            let block = blocks
                .last_mut()
                .ok_or_else(|| Error::Parse(format!("line {}: key before first name", lineno + 1)))?;
            if block.insert(key.clone(), value).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }

        let specs = blocks
            .iter()
            .map(parse_block)
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_block(block: &BTreeMap<String, String>) -> Result<ParameterSpec> {
    let field = |key: &str| {
        block
            .get(key)
            .ok_or_else(|| Error::Parse(format!("knob block missing `{key}`")))
    };
    let int = |key: &str| -> Result<i64> {
        field(key)?
            .parse()
            .map_err(|e| Error::Parse(format!("`{key}`: {e}")))
    };
    let name = field("name")?.clone();
    match field("kind")?.as_str() {
        "integer" => Ok(ParameterSpec {
            name,
            kind: KnobKind::Integer {
                lower: int("lower")?,
                upper: int("upper")?,
                default: int("default")?,
            },
        }),
        "categorical" => {
            let categories: Vec<String> = field("categories")?
                .split(',')
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect();
            let default_label = field("default")?;
            let default = categories
                .iter()
                .position(|c| c == default_label)
                .ok_or_else(|| Error::Parse(format!("knob {name}: default not a category")))?;
            Ok(ParameterSpec {
                name,
                kind: KnobKind::Categorical {
                    categories,
                    default,
                },
            })
        }
        other => Err(Error::Parse(format!("knob {name}: unknown kind `{other}`"))),
    }
}
