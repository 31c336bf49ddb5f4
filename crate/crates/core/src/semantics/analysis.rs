use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::lexicon::{extract_nouns, Lexicon};
use crate::datakit::Manifest;
use crate::error::{Error, Result};
use crate::metrics;
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub id: String,
    pub caption: String,
}

impl CaptionRecord {
    pub fn new(id: impl Into<String>, caption: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            caption: caption.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NounStat {
    pub noun: String,
    /// Number of images whose caption contains the noun.
    pub count: usize,
    pub mean_score: f64,
}

/// `id → score` from a manifest's behavioural scores.
pub fn scores_from_manifest(manifest: &Manifest) -> HashMap<String, f64> {
    manifest.records().iter().map(|r| (r.id.clone(), r.score)).collect()
}

/// Per-noun mean score over the images whose caption mentions it. Each image
/// counts once per distinct noun. Output is sorted by noun.
pub fn noun_stats(
    captions: &[CaptionRecord],
    scores: &HashMap<String, f64>,
    lexicon: &Lexicon,
) -> Result<Vec<NounStat>> {
    let nouns = par::map_slice(captions, |c| extract_nouns(&c.caption, lexicon));
    let tagged: Vec<(String, Vec<String>)> = captions.iter().map(|c| c.id.clone()).zip(nouns).collect();
    noun_stats_from_nouns(&tagged, scores)
}

/// Like [`noun_stats`] for images whose nouns are already known.
pub fn noun_stats_from_nouns(tagged: &[(String, Vec<String>)], scores: &HashMap<String, f64>) -> Result<Vec<NounStat>> {
    let mut by_noun: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for (id, nouns) in tagged {
        let score = *scores.get(id).ok_or_else(|| Error::MissingScore(id.clone()))?;
        for noun in nouns {
            // keyed by id, so repeated mentions and repeated captions collapse
            by_noun.entry(noun).or_default().insert(id, score);
        }
    }
    Ok(by_noun
        .into_iter()
        .map(|(noun, images)| NounStat {
            noun: noun.to_string(),
            count: images.len(),
            // summed in id order: independent of caption order
            mean_score: images.values().sum::<f64>() / images.len() as f64,
        })
        .collect())
}

/// Keeps nouns whose count is strictly greater than the nearest-rank
/// `pct`-th percentile of all counts.
pub fn filter_percentile(stats: &[NounStat], pct: f64) -> Result<Vec<NounStat>> {
    if !(0.0..100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("percentile {pct} outside [0, 100)")));
    }
    if stats.is_empty() {
        return Ok(Vec::new());
    }
    let mut counts: Vec<usize> = stats.iter().map(|s| s.count).collect();
    counts.sort_unstable();
    let rank = ((pct / 100.0 * counts.len() as f64).ceil() as usize).max(1);
    let cut = counts[rank - 1];
    Ok(stats.iter().filter(|s| s.count > cut).cloned().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NounPair {
    pub noun: String,
    pub count_a: usize,
    pub mean_a: f64,
    pub count_b: usize,
    pub mean_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NounComparison {
    /// Sorted by noun.
    pub pairs: Vec<NounPair>,
    pub spearman: f64,
    pub r_squared: f64,
}

impl NounComparison {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

/// Joins two stat lists on noun and correlates the paired means.
pub fn match_and_correlate(a: &[NounStat], b: &[NounStat]) -> Result<NounComparison> {
    let b_by: HashMap<&str, &NounStat> = b.iter().map(|s| (s.noun.as_str(), s)).collect();
    let mut pairs: Vec<NounPair> = a
        .iter()
        .filter_map(|sa| {
            b_by.get(sa.noun.as_str()).map(|sb| NounPair {
                noun: sa.noun.clone(),
                count_a: sa.count,
                mean_a: sa.mean_score,
                count_b: sb.count,
                mean_b: sb.mean_score,
            })
        })
        .collect();
    pairs.sort_by(|x, y| x.noun.cmp(&y.noun));
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "{} matched nouns, need at least 2",
            pairs.len()
        )));
    }
    let xa: Vec<f64> = pairs.iter().map(|p| p.mean_a).collect();
    let xb: Vec<f64> = pairs.iter().map(|p| p.mean_b).collect();
    Ok(NounComparison {
        spearman: metrics::spearman(&xa, &xb)?,
        r_squared: metrics::r_squared(&xa, &xb)?,
        pairs,
    })
}

/// Reads `id,caption` CSV; captions must be non-empty.
pub fn load_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    read_two_column(path, ["id", "caption"])?
        .into_iter()
        .map(|(line, id, caption)| {
            if caption.trim().is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("empty caption for `{id}`"),
                });
            }
            Ok(CaptionRecord { id, caption })
        })
        .collect()
}

/// Reads externally tagged nouns, `id,nouns` with nouns separated by
/// whitespace or `;`. Nouns are lowercased and de-duplicated per image.
pub fn load_tagged_nouns(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    Ok(read_two_column(path, ["id", "nouns"])?
        .into_iter()
        .map(|(_, id, nouns)| {
            let mut seen = std::collections::HashSet::new();
            let list = nouns
                .split(|c: char| c.is_whitespace() || c == ';')
                .filter(|n| !n.is_empty())
                .map(str::to_lowercase)
                .filter(|n| seen.insert(n.clone()))
                .collect();
            (id, list)
        })
        .collect())
}

fn read_two_column(path: &Path, header: [&str; 2]) -> Result<Vec<(u64, String, String)>> {
    let err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(err(1, format!("expected header `{}`", header.join(","))));
    }
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            if row[0].is_empty() {
                return Err(err(line, "empty id".into()));
            }
            Ok((line, row[0].to_string(), row[1].to_string()))
        })
        .collect()
}

/// Writes `noun,count,mean_score`, sorted by decreasing mean score then noun.
pub fn write_noun_stats(path: &Path, stats: &[NounStat]) -> Result<()> {
    let mut sorted: Vec<&NounStat> = stats.iter().collect();
    sorted.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then_with(|| a.noun.cmp(&b.noun)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["noun", "count", "mean_score"])?;
    for s in sorted {
        w.write_record([s.noun.clone(), s.count.to_string(), s.mean_score.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
