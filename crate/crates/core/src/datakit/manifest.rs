use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["id", "path", "score", "source"];

/// Dataset of origin. The declaration order is the keeper priority used by
/// deduplication: earlier variants win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Lamem,
    Memcat,
    Cvpr2011,
    Figrim,
    Other,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Lamem,
        Source::Memcat,
        Source::Cvpr2011,
        Source::Figrim,
        Source::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Lamem => "lamem",
            Source::Memcat => "memcat",
            Source::Cvpr2011 => "cvpr2011",
            Source::Figrim => "figrim",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == lower)
            .ok_or_else(|| format!("unknown source `{s}` (expected lamem, memcat, cvpr2011, figrim or other)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub score: f64,
    pub source: Source,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, path: impl Into<PathBuf>, score: f64, source: Source) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            score,
            source,
        }
    }
}

fn check_record(r: &ImageRecord) -> Result<(), String> {
    if r.id.is_empty() {
        return Err("empty id".into());
    }
    if !(0.0..=1.0).contains(&r.score) {
        return Err(format!("score {} for `{}` outside [0, 1]", r.score, r.id));
    }
    Ok(())
}

/// Ordered set of records with unique ids. Relative image paths resolve
/// against `root`, the directory the manifest was read from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    records: Vec<ImageRecord>,
    root: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(records.len());
        for r in &records {
            check_record(r).map_err(Error::InvalidArgument)?;
            if seen.insert(r.id.as_str(), r.source).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id `{}` in manifest", r.id)));
            }
        }
        Ok(Self {
            records,
            root: PathBuf::from("."),
        })
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.root.join(&record.path)
        }
    }

    /// Records whose ids satisfy `keep`, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&ImageRecord) -> bool) -> Self {
        Self {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            root: self.root.clone(),
        }
    }

    /// Subset in the order of `ids`; every id must be present.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, &ImageRecord> = self.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let records = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("id `{id}` not in manifest")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            records,
            root: self.root.clone(),
        })
    }

    /// Reads a `id,path,score,source` CSV; errors carry the 1-based line number.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: u64, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(parse_err(1, format!("expected header `{}`", MANIFEST_HEADER.join(","))));
        }
        let mut records = Vec::new();
        let mut seen: HashMap<String, u64> = HashMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let score: f64 = row[2]
                .parse()
                .map_err(|_| parse_err(line, format!("score `{}` is not a number", &row[2])))?;
            let source = row[3].parse().map_err(|e| parse_err(line, e))?;
            let rec = ImageRecord::new(&row[0], &row[1], score, source);
            check_record(&rec).map_err(|e| parse_err(line, e))?;
            if let Some(first) = seen.insert(rec.id.clone(), line) {
                return Err(parse_err(
                    line,
                    format!("id `{}` already defined on line {first}", rec.id),
                ));
            }
            records.push(rec);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { records, root })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.id.as_str(),
                &r.path.to_string_lossy(),
                &r.score.to_string(),
                r.source.as_str(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Concatenates manifests, rejecting ids that occur more than once.
pub fn merge(manifests: &[Manifest]) -> Result<Manifest> {
    let mut seen: HashMap<&str, Source> = HashMap::new();
    let mut records = Vec::new();
    for m in manifests {
        for r in &m.records {
            if let Some(first) = seen.insert(r.id.as_str(), r.source) {
                return Err(Error::IdCollision {
                    id: r.id.clone(),
                    first: first.to_string(),
                    second: r.source.to_string(),
                });
            }
            // keep resolvable paths when inputs come from different directories
            let mut rec = r.clone();
            rec.path = m.resolve(r);
            records.push(rec);
        }
    }
    Ok(Manifest {
        records,
        root: PathBuf::from("."),
    })
}
