//! Reading datasets from CSV and scale definitions from YAML.
//!
//! Metric data: `participant,condition_a,condition_b`, one row per
//! participant. Ordinal data: `participant,group,item_id,level`, one row per
//! answer, with raw levels as ticked on the questionnaire. Reverse-scored
//! items are flipped while reading.

use std::fs::File;
use std::path::{Path, PathBuf};

use latent_t::metric::PairedMetricDataset;
use latent_t::ordinal::{apply_reverse_scale, Item, OrdinalDataset, Response};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: header must be `{expected}`, found `{found}`")]
    Header { path: PathBuf, expected: &'static str, found: String },
    #[error("{path}:{line}: participant `{id}` already appeared on line {first}")]
    DuplicateParticipant { path: PathBuf, line: u64, first: u64, id: String },
    #[error("{path}:{line}: participant `{id}` answered item `{item}` twice")]
    DuplicateAnswer { path: PathBuf, line: u64, id: String, item: String },
    #[error("{path}:{line}: unknown item `{item}`")]
    UnknownItem { path: PathBuf, line: u64, item: String },
    #[error("{path}:{line}: level {level} outside 1..={levels}")]
    LevelOutOfRange { path: PathBuf, line: u64, level: i64, levels: usize },
    #[error("scale definition {path}: {message}")]
    Scale { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Dataset { path: PathBuf, message: String },
}

const METRIC_HEADER: &str = "participant,condition_a,condition_b";
const ORDINAL_HEADER: &str = "participant,group,item_id,level";

fn open(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &'static str) -> Result<(), IngestError> {
    let found = rdr
        .headers()
        .map_err(|e| IngestError::Row {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != expected {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// A paired metric dataset after exclusions, and the excluded ids that
/// were actually present.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricIngest {
    pub dataset: PairedMetricDataset,
    pub excluded: Vec<String>,
}

pub fn ingest_metric_csv(path: &Path, exclude: &[String]) -> Result<MetricIngest, IngestError> {
    let mut rdr = open(path)?;
    check_header(&mut rdr, path, METRIC_HEADER)?;
    let mut first_seen: std::collections::HashMap<String, u64> = std::collections::HashMap::new();
    let mut ids = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut excluded = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Row {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let row_err = |message: String| IngestError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(row_err("empty participant id".into()));
        }
        let number = |field: &str, col: &str| -> Result<f64, IngestError> {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(row_err(format!("{col} `{field}` is not a finite number"))),
            }
        };
        let va = number(&rec[1], "condition_a")?;
        let vb = number(&rec[2], "condition_b")?;
        if let Some(&first) = first_seen.get(&id) {
            return Err(IngestError::DuplicateParticipant {
                path: path.to_path_buf(),
                line,
                first,
                id,
            });
        }
        first_seen.insert(id.clone(), line);
        if exclude.contains(&id) {
            info!("excluding participant {id}");
            excluded.push(id);
            continue;
        }
        ids.push(id);
        a.push(va);
        b.push(vb);
    }
    let dataset = PairedMetricDataset::new(ids, a, b).map_err(|e| IngestError::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(MetricIngest { dataset, excluded })
}

/// `reverse: yes | no` (booleans are accepted too).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum YesNo {
    Bool(bool),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaleItem {
    id: String,
    #[serde(default = "no")]
    reverse: YesNo,
    #[serde(default)]
    text: Option<String>,
}

fn no() -> YesNo {
    YesNo::Bool(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    #[serde(default)]
    name: Option<String>,
    levels: usize,
    items: Vec<RawScaleItem>,
}

/// A questionnaire scale: K levels and its items in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScaleDefinition {
    pub name: Option<String>,
    pub levels: usize,
    pub items: Vec<Item>,
}

impl ScaleDefinition {
    pub fn parse(text: &str, path: &Path) -> Result<Self, IngestError> {
        let err = |message: String| IngestError::Scale {
            path: path.to_path_buf(),
            message,
        };
        let raw: RawScale = serde_yaml::from_str(text).map_err(|e| err(e.to_string()))?;
        if raw.levels < 3 {
            return Err(err(format!("levels must be at least 3, got {}", raw.levels)));
        }
        if raw.items.is_empty() {
            return Err(err("no items".into()));
        }
        let mut items: Vec<Item> = Vec::with_capacity(raw.items.len());
        for it in raw.items {
            if items.iter().any(|x| x.id == it.id) {
                return Err(err(format!("item `{}` listed twice", it.id)));
            }
            let reverse = match &it.reverse {
                YesNo::Bool(b) => *b,
                YesNo::Word(w) if w == "yes" => true,
                YesNo::Word(w) if w == "no" => false,
                YesNo::Word(w) => return Err(err(format!("item `{}`: reverse must be yes or no, got `{w}`", it.id))),
            };
            items.push(Item {
                id: it.id,
                reverse,
                text: it.text,
            });
        }
        Ok(Self {
            name: raw.name,
            levels: raw.levels,
            items,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_yaml(&self) -> String {
        let mut out = String::new();
        if let Some(n) = &self.name {
            out.push_str(&format!("name: {n}\n"));
        }
        out.push_str(&format!("levels: {}\nitems:\n", self.levels));
        for it in &self.items {
            out.push_str(&format!("  - id: {}\n    reverse: {}\n", it.id, if it.reverse { "yes" } else { "no" }));
            if let Some(t) = &it.text {
                out.push_str(&format!("    text: {}\n", serde_yaml::to_string(t).unwrap_or_default().trim_end()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalIngest {
    pub dataset: OrdinalDataset,
    pub excluded: Vec<String>,
}

/// Read answers against a scale. Groups are numbered in order of first
/// appearance.
pub fn ingest_ordinal_csv(path: &Path, scale: &ScaleDefinition, exclude: &[String]) -> Result<OrdinalIngest, IngestError> {
    let mut rdr = open(path)?;
    check_header(&mut rdr, path, ORDINAL_HEADER)?;
    let mut groups: Vec<String> = Vec::new();
    let mut responses = Vec::new();
    let mut seen: std::collections::HashSet<(String, usize)> = std::collections::HashSet::new();
    let mut participant_group: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut excluded: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Row {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let row_err = |message: String| IngestError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let (id, group, item_id, raw_level) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        if id.is_empty() || group.is_empty() {
            return Err(row_err("empty participant or group".into()));
        }
        let item = scale.items.iter().position(|it| it.id == item_id).ok_or_else(|| IngestError::UnknownItem {
            path: path.to_path_buf(),
            line,
            item: item_id.to_string(),
        })?;
        let level: i64 = raw_level
            .parse()
            .map_err(|_| row_err(format!("level `{raw_level}` is not an integer")))?;
        if level < 1 || level as usize > scale.levels {
            return Err(IngestError::LevelOutOfRange {
                path: path.to_path_buf(),
                line,
                level,
                levels: scale.levels,
            });
        }
        if !seen.insert((id.to_string(), item)) {
            return Err(IngestError::DuplicateAnswer {
                path: path.to_path_buf(),
                line,
                id: id.to_string(),
                item: item_id.to_string(),
            });
        }
        if exclude.iter().any(|e| e == id) {
            if !excluded.iter().any(|e| e == id) {
                info!("excluding participant {id}");
                excluded.push(id.to_string());
            }
            continue;
        }
        let g = match groups.iter().position(|x| x == group) {
            Some(g) => g,
            None => {
                groups.push(group.to_string());
                groups.len() - 1
            }
        };
        if let Some(&prev) = participant_group.get(id) {
            if prev != g {
                return Err(row_err(format!("participant `{id}` appears in groups `{}` and `{group}`", groups[prev])));
            }
        } else {
            participant_group.insert(id.to_string(), g);
        }
        let mut level = level as usize;
        if scale.items[item].reverse {
            level = apply_reverse_scale(level, scale.levels).map_err(|e| row_err(e.to_string()))?;
        }
        responses.push(Response {
            participant: id.to_string(),
            group: g,
            item,
            level,
            synthetic: false,
        });
    }
    let dataset = OrdinalDataset::new(scale.levels, groups, scale.items.clone(), responses).map_err(|e| IngestError::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(OrdinalIngest { dataset, excluded })
}
