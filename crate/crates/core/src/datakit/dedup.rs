use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::embed::cosine;
use super::manifest::{ImageRecord, Manifest, Source};
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_THRESHOLD: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicatePair {
    /// The member that ranks first under the keeper rule.
    pub id_a: String,
    pub id_b: String,
    pub similarity: f64,
    pub source_a: Source,
    pub source_b: Source,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupReport {
    pub threshold: f64,
    /// Sorted by decreasing similarity, then ids.
    pub pairs: Vec<DuplicatePair>,
    /// Connected components of the pair graph; each lists its keeper first.
    pub clusters: Vec<Vec<String>>,
    pub removed: Vec<String>,
    /// Pair counts keyed by `(source_a, source_b)` with `source_a ≤ source_b`.
    pub source_counts: BTreeMap<(Source, Source), usize>,
}

impl DedupReport {
    pub fn removed_by_source(&self, records: &[ImageRecord]) -> BTreeMap<Source, usize> {
        let src: HashMap<&str, Source> = records.iter().map(|r| (r.id.as_str(), r.source)).collect();
        let mut out = BTreeMap::new();
        for id in &self.removed {
            if let Some(s) = src.get(id.as_str()) {
                *out.entry(*s).or_default() += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DedupOutcome {
    pub report: DedupReport,
    /// One cleaned manifest per input, in input order.
    pub cleaned: Vec<Manifest>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Finds every pair with cosine similarity `≥ threshold`, groups pairs into
/// connected clusters and keeps one record per cluster: the earliest source in
/// [`Source`] order, ties broken by the lexicographically smallest id.
///
/// Ids must be unique across all inputs. Embeddings must be unit-norm.
pub fn dedup(manifests: &[Manifest], embeddings: &HashMap<String, Vec<f64>>, threshold: f64) -> Result<DedupOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1]")));
    }
    let mut owner: HashMap<&str, Source> = HashMap::new();
    let mut records: Vec<&ImageRecord> = Vec::new();
    for m in manifests {
        for r in m.records() {
            if let Some(first) = owner.insert(r.id.as_str(), r.source) {
                return Err(Error::IdCollision {
                    id: r.id.clone(),
                    first: first.to_string(),
                    second: r.source.to_string(),
                });
            }
            records.push(r);
        }
    }
    let vectors = records
        .iter()
        .map(|r| {
            embeddings
                .get(&r.id)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::MissingEmbedding(r.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(v) = vectors.iter().find(|v| v.len() != vectors[0].len()) {
        return Err(Error::shape("dedup embeddings", &[vectors[0].len()], &[v.len()]));
    }

    let rank = |i: usize| (records[i].source, records[i].id.as_str());
    let n = records.len();
    let hits: Vec<Vec<(usize, usize, f64)>> = par::map_range(n, |i| {
        (i + 1..n)
            .filter_map(|j| {
                let s = cosine(vectors[i], vectors[j]);
                (s >= threshold).then(|| if rank(i) <= rank(j) { (i, j, s) } else { (j, i, s) })
            })
            .collect()
    });

    let mut uf = UnionFind((0..n).collect());
    let mut pairs = Vec::new();
    let mut source_counts = BTreeMap::new();
    for &(a, b, s) in hits.iter().flatten() {
        uf.union(a, b);
        let (sa, sb) = (records[a].source, records[b].source);
        *source_counts.entry((sa.min(sb), sa.max(sb))).or_default() += 1;
        pairs.push(DuplicatePair {
            id_a: records[a].id.clone(),
            id_b: records[b].id.clone(),
            similarity: s,
            source_a: sa,
            source_b: sb,
        });
    }
    pairs.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then_with(|| x.id_a.cmp(&y.id_a))
            .then_with(|| x.id_b.cmp(&y.id_b))
    });

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<Vec<String>> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|mut g| {
            g.sort_by(|&x, &y| rank(x).cmp(&rank(y)));
            g.into_iter().map(|i| records[i].id.clone()).collect()
        })
        .collect();
    clusters.sort();
    let mut removed: Vec<String> = clusters.iter().flat_map(|c| c[1..].iter().cloned()).collect();
    removed.sort();

    let cleaned = manifests
        .iter()
        .map(|m| m.filter(|r| removed.binary_search(&r.id).is_err()))
        .collect();
    Ok(DedupOutcome {
        report: DedupReport {
            threshold,
            pairs,
            clusters,
            removed,
            source_counts,
        },
        cleaned,
    })
}

/// Writes `id_a,id_b,similarity,source_a,source_b`, one row per pair.
pub fn write_report(path: &Path, report: &DedupReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id_a", "id_b", "similarity", "source_a", "source_b"])?;
    for p in &report.pairs {
        w.write_record([
            p.id_a.as_str(),
            p.id_b.as_str(),
            &format!("{:.6}", p.similarity),
            p.source_a.as_str(),
            p.source_b.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::normalize;

    fn manifest(ids: &[(&str, Source)]) -> Manifest {
        Manifest::new(
            ids.iter()
                .map(|(id, s)| ImageRecord::new(*id, format!("{id}.jpg"), 0.5, *s))
                .collect(),
        )
        .unwrap()
    }

    fn emb(entries: &[(&str, Vec<f64>)]) -> HashMap<String, Vec<f64>> {
        entries
            .iter()
            .map(|(id, v)| (id.to_string(), normalize(v.clone()).unwrap()))
            .collect()
    }

    #[test]
    fn nothing_above_threshold_keeps_input() {
        let m = manifest(&[("a", Source::Lamem), ("b", Source::Memcat)]);
        let e = emb(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]);
        let out = dedup(std::slice::from_ref(&m), &e, DEFAULT_THRESHOLD).unwrap();
        assert!(out.report.pairs.is_empty() && out.report.removed.is_empty());
        assert_eq!(out.cleaned, vec![m]);
    }

    #[test]
    fn empty_input_gives_empty_report() {
        let out = dedup(&[], &HashMap::new(), 0.9).unwrap();
        assert_eq!(
            out.report,
            DedupReport {
                threshold: 0.9,
                ..Default::default()
            }
        );
    }

    #[test]
    fn keeper_rule_and_transitive_clusters() {
        let lamem = manifest(&[("z", Source::Lamem), ("q", Source::Lamem)]);
        let figrim = manifest(&[("a", Source::Figrim), ("b", Source::Figrim)]);
        let memcat = manifest(&[("m", Source::Memcat)]);
        // z ~ a ~ b form a chain; m is isolated; q duplicates nothing
        let e = emb(&[
            ("z", vec![1.0, 0.0, 0.0]),
            ("a", vec![1.0, 0.15, 0.0]),
            ("b", vec![1.0, 0.3, 0.0]),
            ("q", vec![0.0, 0.0, 1.0]),
            ("m", vec![0.0, -1.0, 0.0]),
        ]);
        let out = dedup(&[figrim, lamem, memcat], &e, 0.985).unwrap();
        assert_eq!(out.report.clusters, vec![vec!["z".to_string(), "a".into(), "b".into()]]);
        assert_eq!(out.report.removed, vec!["a".to_string(), "b".into()]);
        assert!(out.cleaned[0].is_empty());
        assert_eq!(out.cleaned[1].len(), 2);
        assert_eq!(out.report.source_counts[&(Source::Figrim, Source::Figrim)], 1);
        assert_eq!(out.report.source_counts[&(Source::Lamem, Source::Figrim)], 1);
        let p = &out.report.pairs[0];
        assert!(p.similarity >= out.report.pairs.last().unwrap().similarity);
        assert!(out.report.pairs.iter().all(|p| p.similarity >= 0.985));
        let all: Vec<ImageRecord> = out.cleaned.iter().flat_map(|m| m.records().to_vec()).collect();
        assert_eq!(out.report.removed_by_source(&all).len(), 0);
    }

    #[test]
    fn idempotent_and_order_invariant() {
        let m1 = manifest(&[("a", Source::Other), ("b", Source::Cvpr2011), ("c", Source::Other)]);
        let m2 = manifest(&[("d", Source::Memcat)]);
        let e = emb(&[
            ("a", vec![1.0, 0.0]),
            ("b", vec![1.0, 0.01]),
            ("c", vec![0.0, 1.0]),
            ("d", vec![0.01, 1.0]),
        ]);
        let first = dedup(&[m1.clone(), m2.clone()], &e, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(first.report.removed, vec!["a".to_string(), "c".into()]);
        let again = dedup(&first.cleaned, &e, DEFAULT_THRESHOLD).unwrap();
        assert!(again.report.removed.is_empty());
        let swapped = dedup(&[m2, m1], &e, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(swapped.report, first.report);
    }

    #[test]
    fn errors() {
        let m = manifest(&[("a", Source::Lamem)]);
        assert!(
            matches!(dedup(std::slice::from_ref(&m), &HashMap::new(), 0.9), Err(Error::MissingEmbedding(id)) if id == "a")
        );
        let e = emb(&[("a", vec![1.0])]);
        assert!(matches!(
            dedup(&[m.clone(), m.clone()], &e, 0.9),
            Err(Error::IdCollision { .. })
        ));
        assert!(dedup(std::slice::from_ref(&m), &e, 0.0).is_err());
        assert!(dedup(&[m], &e, 1.5).is_err());
    }

    #[test]
    fn report_csv() {
        let m = manifest(&[("a", Source::Lamem), ("b", Source::Memcat)]);
        let e = emb(&[("a", vec![1.0, 0.0]), ("b", vec![1.0, 0.0])]);
        let out = dedup(&[m], &e, DEFAULT_THRESHOLD).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report(&p, &out.report).unwrap();
        assert_eq!(
            std::fs::read_to_string(p).unwrap(),
            "id_a,id_b,similarity,source_a,source_b\na,b,1.000000,lamem,memcat\n"
        );
    }
}
