use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::error::{Error, Result};

/// Test-set size, either absolute or as a fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSize {
    Count(usize),
    Fraction(f64),
}

impl TestSize {
    /// Absolute test size for `n` records; fractions round to nearest.
    pub fn resolve(self, n: usize) -> Result<usize> {
        let m = match self {
            TestSize::Count(c) => c,
            TestSize::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::InvalidArgument(format!("test fraction {f} outside (0, 1)")));
                }
                (f * n as f64).round() as usize
            }
        };
        if m == 0 || m >= n {
            return Err(Error::InvalidArgument(format!(
                "test size {m} must satisfy 0 < test < {n} records"
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub n_splits: usize,
    pub test: TestSize,
}

impl SplitSpec {
    pub fn new(seed: u64, n_splits: usize, test: TestSize) -> Self {
        Self { seed, n_splits, test }
    }
}

/// Ids in manifest order on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

fn stream(seed: u64, tag: &[u8; 8], a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..].copy_from_slice(tag);
    ChaCha8Rng::from_seed(key)
}

fn partition(ids: &[&str], chosen: &[bool]) -> (Vec<String>, Vec<String>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (id, &c) in ids.iter().zip(chosen) {
        if c {
            inside.push(id.to_string());
        } else {
            outside.push(id.to_string());
        }
    }
    (inside, outside)
}

/// `n_splits` independent random train/test partitions. Split `k` depends
/// only on `(seed, k)`.
pub fn make_splits(manifest: &Manifest, spec: &SplitSpec) -> Result<Vec<Split>> {
    if spec.n_splits == 0 {
        return Err(Error::InvalidArgument("n_splits must be ≥ 1".into()));
    }
    let ids = manifest.ids();
    let m = spec.test.resolve(ids.len())?;
    Ok((0..spec.n_splits)
        .map(|k| {
            let mut order: Vec<usize> = (0..ids.len()).collect();
            order.shuffle(&mut stream(spec.seed, b"splits\0\0", k as u64, 0));
            let mut chosen = vec![false; ids.len()];
            order[..m].iter().for_each(|&i| chosen[i] = true);
            let (test, train) = partition(&ids, &chosen);
            Split { train, test }
        })
        .collect())
}

/// Writes `split{K}_train.txt` and `split{K}_test.txt` (K from 1), one id per line.
pub fn write_splits(dir: &Path, splits: &[Split]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, s) in splits.iter().enumerate() {
        for (name, ids) in [("train", &s.train), ("test", &s.test)] {
            let path = dir.join(format!("split{}_{name}.txt", k + 1));
            let mut buf = Vec::new();
            for id in ids {
                writeln!(buf, "{id}").expect("write to Vec");
            }
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Repeated k-fold partition. Folds within a repeat are disjoint and cover
/// every id; the first `n mod k` folds hold one extra id.
pub fn kfold(manifest: &Manifest, k: usize, repeats: usize, seed: u64) -> Result<Vec<Fold>> {
    let ids = manifest.ids();
    let n = ids.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}, need k ≥ 2")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {n} records")));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be ≥ 1".into()));
    }
    let mut folds = Vec::with_capacity(k * repeats);
    for r in 0..repeats {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, b"kfold\0\0\0", r as u64, 0));
        let mut start = 0;
        for f in 0..k {
            let size = n / k + usize::from(f < n % k);
            let mut chosen = vec![false; n];
            order[start..start + size].iter().for_each(|&i| chosen[i] = true);
            start += size;
            let (validation, train) = partition(&ids, &chosen);
            folds.push(Fold {
                repeat: r,
                fold: f,
                train,
                validation,
            });
        }
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{ImageRecord, Source};
    use std::collections::HashSet;

    fn manifest(n: usize) -> Manifest {
        Manifest::new(
            (0..n)
                .map(|i| ImageRecord::new(format!("img{i:05}"), format!("{i}.jpg"), 0.5, Source::Lamem))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fraction_of_ten_is_one() {
        let s = make_splits(&manifest(10), &SplitSpec::new(0, 1, TestSize::Fraction(0.10))).unwrap();
        assert_eq!((s[0].test.len(), s[0].train.len()), (1, 9));
    }

    #[test]
    fn partition_and_determinism() {
        let m = manifest(1000);
        let spec = SplitSpec::new(5, 4, TestSize::Count(100));
        let a = make_splits(&m, &spec).unwrap();
        assert_eq!(a, make_splits(&m, &spec).unwrap());
        let all: HashSet<&str> = m.ids().into_iter().collect();
        for s in &a {
            let test: HashSet<&str> = s.test.iter().map(String::as_str).collect();
            let train: HashSet<&str> = s.train.iter().map(String::as_str).collect();
            assert_eq!(test.len(), 100);
            assert!(test.is_disjoint(&train));
            assert_eq!(&test | &train, all);
        }
        assert!(a.windows(2).all(|w| w[0].test != w[1].test));
        let other = make_splits(&m, &SplitSpec::new(6, 4, TestSize::Count(100))).unwrap();
        assert_ne!(other[0].test, a[0].test);
    }

    #[test]
    fn oversized_test_rejected() {
        let m = manifest(10);
        for t in [
            TestSize::Count(10),
            TestSize::Count(0),
            TestSize::Fraction(1.0),
            TestSize::Fraction(0.01),
        ] {
            assert!(make_splits(&m, &SplitSpec::new(0, 1, t)).is_err(), "{t:?}");
        }
    }

    #[test]
    fn split_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_splits(&manifest(5), &SplitSpec::new(1, 2, TestSize::Count(2))).unwrap();
        write_splits(dir.path(), &s).unwrap();
        let test = std::fs::read_to_string(dir.path().join("split2_test.txt")).unwrap();
        assert_eq!(test, format!("{}\n{}\n", s[1].test[0], s[1].test[1]));
        assert!(dir.path().join("split1_train.txt").exists());
    }

    #[test]
    fn kfold_balanced_remainder() {
        let sizes: Vec<usize> = kfold(&manifest(7), 3, 1, 0)
            .unwrap()
            .iter()
            .map(|f| f.validation.len())
            .collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        let folds = kfold(&manifest(10), 5, 2, 9).unwrap();
        assert_eq!(folds.len(), 10);
        for r in 0..2 {
            let mut seen: Vec<&String> = folds
                .iter()
                .filter(|f| f.repeat == r)
                .flat_map(|f| &f.validation)
                .collect();
            assert!(folds
                .iter()
                .filter(|f| f.repeat == r)
                .all(|f| f.validation.len() == 2 && f.train.len() == 8));
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 10);
        }
        assert!(kfold(&manifest(3), 4, 1, 0).is_err());
        assert!(kfold(&manifest(3), 1, 1, 0).is_err());
    }
}
