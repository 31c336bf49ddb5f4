//! Score tables accepted by `semantic`: a full manifest, `id,score` or `path,score`.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use memvit::datakit::{Manifest, MANIFEST_HEADER};
use memvit::semantics::scores_from_manifest;

/// Loads `id → score`. For `path,score` tables the id is the file stem, so
/// predictions written by `predict` can be fed back directly.
pub fn load_scores(path: &Path) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header == MANIFEST_HEADER {
        return Ok(scores_from_manifest(&Manifest::load(path)?));
    }
    let by_path = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["id", "score"] => false,
        ["path", "score"] => true,
        _ => bail!(
            "{}: header must be `id,score`, `path,score` or `{}`",
            path.display(),
            MANIFEST_HEADER.join(",")
        ),
    };
    let mut out = HashMap::new();
    for row in reader.records() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let line = row.position().map_or(0, |p| p.line());
        let key = if by_path {
            Path::new(&row[0])
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .with_context(|| format!("{}:{line}: no file name in `{}`", path.display(), &row[0]))?
        } else {
            row[0].to_owned()
        };
        let score: f64 = row[1]
            .parse()
            .with_context(|| format!("{}:{line}: score `{}` is not a number", path.display(), &row[1]))?;
        if out.insert(key.clone(), score).is_some() {
            bail!("{}:{line}: `{key}` appears twice", path.display());
        }
    }
    Ok(out)
}
