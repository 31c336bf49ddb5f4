use std::collections::HashMap;
use std::path::Path;

use super::manifest::Manifest;
use crate::augment::{resize, resize_and_crop, ImageBuffer};
use crate::error::{Error, Result};
use crate::par;
use crate::vit::{class_embedding, Normalization, Parameters};

/// Scales `v` to unit L2 norm; a zero or non-finite vector is an error.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot normalise embedding with norm {norm}"
        )));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Dot product; equals cosine similarity for unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Produces unit-norm embeddings. `image` decodes the record's image on
/// demand, so table-backed embedders never touch pixels.
pub trait Embedder: Sync {
    fn embed(&self, id: &str, image: &dyn Fn() -> Result<ImageBuffer>) -> Result<Vec<f64>>;
}

/// Embeds every record in parallel, keyed by id.
pub fn embed_all(manifest: &Manifest, embedder: &dyn Embedder) -> Result<HashMap<String, Vec<f64>>> {
    let vectors = par::map_slice(manifest.records(), |r| {
        let path = manifest.resolve(r);
        embedder.embed(&r.id, &|| ImageBuffer::load(&path))
    });
    manifest
        .records()
        .iter()
        .zip(vectors)
        .map(|(r, v)| Ok((r.id.clone(), v?)))
        .collect()
}

/// Precomputed vectors read from a text file:
///
/// ```text
/// id,<dim>
/// img_001,0.12,-0.40,...
/// ```
///
/// The header's second field is the dimension; the literal `dim` is also
/// accepted, in which case the first row fixes it.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingFile {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingFile {
    pub fn from_vectors(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        let vectors = vectors
            .into_iter()
            .map(|(id, v)| {
                if v.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "embedding `{id}` has {} values, expected {dim}",
                        v.len()
                    )));
                }
                Ok((id, normalize(v)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn into_map(self) -> HashMap<String, Vec<f64>> {
        self.vectors
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |line: u64, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut rows = reader.records();
        let header = match rows.next() {
            Some(h) => h.map_err(|e| err(1, e.to_string()))?,
            None => return Err(err(1, "missing `id,<dim>` header".into())),
        };
        if header.len() != 2 || &header[0] != "id" {
            return Err(err(1, "expected header `id,<dim>`".into()));
        }
        let mut dim = match &header[1] {
            "dim" => None,
            d => Some(
                d.parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| err(1, format!("bad dimension `{d}`")))?,
            ),
        };
        let mut vectors = HashMap::new();
        for row in rows {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let values = row
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err(line, "non-numeric or non-finite value".into()))?;
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected || expected == 0 {
                return Err(err(line, format!("expected {expected} values, found {}", values.len())));
            }
            let v = normalize(values).map_err(|e| err(line, e.to_string()))?;
            if vectors.insert(row[0].to_string(), v).is_some() {
                return Err(err(line, format!("duplicate id `{}`", &row[0])));
            }
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    /// Writes rows sorted by id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
        w.write_record(["id".to_string(), self.dim.to_string()])?;
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        for id in ids {
            let mut row = vec![id.clone()];
            row.extend(self.vectors[id].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl Embedder for EmbeddingFile {
    fn embed(&self, id: &str, _image: &dyn Fn() -> Result<ImageBuffer>) -> Result<Vec<f64>> {
        self.get(id).map(<[f64]>::to_vec)
    }
}

/// Mean-centred `side × side` RGB thumbnail. Cheap and sensitive only to
/// coarse layout and colour, which is what re-encoded copies share.
#[derive(Debug, Clone, Copy)]
pub struct ThumbnailEmbedder {
    pub side: usize,
}

impl Default for ThumbnailEmbedder {
    fn default() -> Self {
        Self { side: 16 }
    }
}

impl ThumbnailEmbedder {
    pub fn embed_image(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let thumb = resize(img, self.side, self.side)?;
        let mean = thumb.data().iter().map(|&v| f64::from(v)).sum::<f64>() / thumb.data().len() as f64;
        normalize(thumb.data().iter().map(|&v| f64::from(v) - mean).collect())
    }
}

impl Embedder for ThumbnailEmbedder {
    fn embed(&self, id: &str, image: &dyn Fn() -> Result<ImageBuffer>) -> Result<Vec<f64>> {
        self.embed_image(&image()?)
            .map_err(|e| Error::InvalidArgument(format!("embedding `{id}`: {e}")))
    }
}

/// Class-token representation of the transformer trunk on the inference geometry.
#[derive(Debug, Clone)]
pub struct VitEmbedder {
    pub params: Parameters<f32>,
    pub resize_to: usize,
    pub normalization: Normalization,
}

impl VitEmbedder {
    pub fn new(params: Parameters<f32>, resize_to: usize) -> Self {
        Self {
            params,
            resize_to,
            normalization: Normalization::default(),
        }
    }

    pub fn embed_image(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let crop = self.params.config.image_size;
        let x = resize_and_crop(img, self.resize_to.max(crop), crop)?
            .to_tensor::<f32>(self.normalization.mean, self.normalization.std);
        let e = class_embedding(&self.params, &x)?;
        normalize(e.into_iter().map(f64::from).collect())
    }
}

impl Embedder for VitEmbedder {
    fn embed(&self, _id: &str, image: &dyn Fn() -> Result<ImageBuffer>) -> Result<Vec<f64>> {
        self.embed_image(&image()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{ImageRecord, Source};
    use crate::vit::ModelConfig;
    use std::io::Write;

    fn texture(seed: u32) -> ImageBuffer {
        ImageBuffer::from_fn(24, 24, |x, y| {
            let h = (x as u32 * 73 + y as u32 * 151 + seed * 977).wrapping_mul(2_654_435_761);
            let v = (h >> 8) as f32 / (1u32 << 24) as f32;
            [v, 1.0 - v, (v * 3.0).fract()]
        })
    }

    #[test]
    fn unit_norm_and_identical_images() {
        let e = ThumbnailEmbedder::default();
        let a = e.embed_image(&texture(1)).unwrap();
        let b = e.embed_image(&texture(1)).unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert!((a.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reencoded_copy_is_closer_than_a_different_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("copy.jpg");
        texture(2).save(&p).unwrap();
        let jpeg = ImageBuffer::load(&p).unwrap();
        let e = ThumbnailEmbedder::default();
        let orig = e.embed_image(&texture(2)).unwrap();
        let near = cosine(&orig, &e.embed_image(&jpeg).unwrap());
        let far = cosine(&orig, &e.embed_image(&texture(3)).unwrap());
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn constant_image_has_no_direction() {
        assert!(ThumbnailEmbedder::default()
            .embed_image(&ImageBuffer::filled(4, 4, [0.5; 3]))
            .is_err());
    }

    #[test]
    fn vit_embedding_is_unit_norm() {
        let params = Parameters::<f32>::init(&ModelConfig::tiny(), 1).unwrap();
        let e = VitEmbedder::new(params, 10);
        let v = e.embed_image(&texture(4)).unwrap();
        assert_eq!(v.len(), ModelConfig::tiny().dim);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn file_round_trip_and_missing_id() {
        let mut map = HashMap::new();
        map.insert("a".to_string(), vec![3.0, 4.0]);
        map.insert("b".to_string(), vec![0.0, -2.0]);
        let f = EmbeddingFile::from_vectors(map).unwrap();
        assert_eq!(f.get("a").unwrap(), &[0.6, 0.8]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.csv");
        f.save(&p).unwrap();
        let back = EmbeddingFile::load(&p).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.get("b").unwrap(), &[0.0, -1.0]);
        assert!(matches!(back.get("zzz"), Err(Error::MissingEmbedding(id)) if id == "zzz"));

        let m = Manifest::new(vec![ImageRecord::new("a", "a.png", 0.5, Source::Lamem)]).unwrap();
        assert_eq!(embed_all(&m, &back).unwrap()["a"], vec![0.6, 0.8]);
    }

    #[test]
    fn file_errors_carry_lines() {
        for (text, line) in [
            ("id,3\na,1,2,3\nb,1,2\n", 3),
            ("id,dim\na,1,2\nb,1,x\n", 3),
            ("id,2\na,0,0\n", 2),
            ("name,2\n", 1),
        ] {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(text.as_bytes()).unwrap();
            match EmbeddingFile::load(f.path()) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
