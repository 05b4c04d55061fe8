//! Dataset files and assembly.
//!
//! * Feature file (FVEC): `"WDHT"`, version `u32` = 1, rows `u64`, cols
//!   `u64`, then `rows * cols` `f32` values row-major. All little-endian.
//! * Tags file: one line per sample, whitespace-separated tokens.
//! * Labels file: one line per sample, space-separated label ids, with an
//!   optional first line `#labels <vocab_size>`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::io::{read_exact_at, read_f32, read_u32, read_u64};
use crate::rng::PortableRng;
use crate::tagvec::{TagSet, WordEmbeddingTable};

pub const FVEC_MAGIC: &[u8; 4] = b"WDHT";
pub const FVEC_VERSION: u32 = 1;

/// Row-major `f32` matrix, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f32>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}",
                pos / data.ncols().max(1)
            )));
        }
        Ok(Self { data })
    }

    pub fn from_f64(data: &Array2<f64>) -> Result<Self> {
        Self::new(data.mapv(|v| v as f32))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ndarray::ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), rows),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(FVEC_MAGIC)?;
        out.write_all(&FVEC_VERSION.to_le_bytes())?;
        out.write_all(&(self.rows() as u64).to_le_bytes())?;
        out.write_all(&(self.cols() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in self.data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut magic = [0u8; 4];
        read_exact_at(&mut input, &mut magic, &mut offset)?;
        if &magic != FVEC_MAGIC {
            return Err(Error::Format(format!("bad feature file magic {magic:?}")));
        }
        let version = read_u32(&mut input, &mut offset)?;
        if version != FVEC_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let rows = read_u64(&mut input, &mut offset)?;
        let cols = read_u64(&mut input, &mut offset)?;
        let total = usize::try_from(rows)
            .ok()
            .zip(usize::try_from(cols).ok())
            .and_then(|(r, c)| r.checked_mul(c))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::Format(format!("dimensions {rows} x {cols} overflow")))?;
        let mut values = Vec::with_capacity(total.min(1 << 26));
        for _ in 0..total {
            values.push(read_f32(&mut input, &mut offset)?);
        }
        let data = Array2::from_shape_vec((rows as usize, cols as usize), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

/// Ground-truth label sets, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    vocab_size: usize,
    labels: Vec<Vec<u32>>,
}

impl LabelMatrix {
    pub fn new(vocab_size: usize, labels: Vec<Vec<u32>>) -> Result<Self> {
        let mut labels = labels;
        for (i, set) in labels.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&l| l as usize >= vocab_size) {
                return Err(Error::Data(format!(
                    "sample {i}: label {bad} outside vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(Self { vocab_size, labels })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorted, deduplicated labels of sample `i`.
    pub fn get(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            vocab_size: self.vocab_size,
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
        }
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut declared: Option<usize> = None;
        let mut labels = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(format!("labels line {}: {e}", lineno + 1)))?;
            let line = line.trim();
            if lineno == 0 {
                if let Some(rest) = line.strip_prefix("#labels") {
                    let v = rest.trim().parse().map_err(|_| {
                        Error::Format(format!("bad labels header {line:?}"))
                    })?;
                    declared = Some(v);
                    continue;
                }
            }
            let set = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>().map_err(|_| {
                        Error::Format(format!("labels line {}: bad label id {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<u32>>>()?;
            labels.push(set);
        }
        let vocab = declared.unwrap_or_else(|| {
            labels
                .iter()
                .flatten()
                .max()
                .map_or(0, |&m| m as usize + 1)
        });
        Self::new(vocab, labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#labels {}", self.vocab_size)?;
        for set in &self.labels {
            let line: Vec<String> = set.iter().map(u32::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), |w| self.write(w))
    }
}

pub fn parse_tags<R: BufRead>(reader: R) -> Result<Vec<TagSet>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.map(|l| TagSet::parse_line(&l))
                .map_err(|e| Error::Format(format!("tags line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn load_tags(path: impl AsRef<Path>) -> Result<Vec<TagSet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tags(BufReader::new(file))
}

pub fn write_tags<W: Write>(mut out: W, tags: &[TagSet]) -> std::io::Result<()> {
    for set in tags {
        writeln!(out, "{}", set.tags().join(" "))?;
    }
    Ok(())
}

pub fn save_tags(path: impl AsRef<Path>, tags: &[TagSet]) -> Result<()> {
    write_file(path.as_ref(), |w| write_tags(w, tags))
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    body(&mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Features with their tags and labels, aligned by row.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub features: FeatureMatrix,
    pub tags: Vec<TagSet>,
    pub labels: LabelMatrix,
}

impl SampleSet {
    pub fn new(features: FeatureMatrix, tags: Vec<TagSet>, labels: LabelMatrix) -> Result<Self> {
        let (f, t, l) = (features.rows(), tags.len(), labels.len());
        if f != t || f != l {
            return Err(Error::Data(format!(
                "sample counts disagree: {f} feature rows, {t} tag lines, {l} label lines"
            )));
        }
        Ok(Self {
            features,
            tags,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(rows),
            tags: rows.iter().map(|&r| self.tags[r].clone()).collect(),
            labels: self.labels.select(rows),
        }
    }
}

/// Training/database samples, query samples and the tag embedding table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: SampleSet,
    pub query: SampleSet,
    pub table: WordEmbeddingTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub query: Vec<usize>,
    /// Retrieval database; the whole training side.
    pub database: Vec<usize>,
}

/// Uniform random split with `round(count * query_fraction)` queries.
pub fn split(count: usize, query_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::Param(format!(
            "query fraction must be in (0, 1), got {query_fraction}"
        )));
    }
    let n_query = (count as f64 * query_fraction).round() as usize;
    split_counts(count, n_query, seed)
}

/// Uniform random split with exactly `n_query` queries.
pub fn split_counts(count: usize, n_query: usize, seed: u64) -> Result<DatasetSplit> {
    if n_query == 0 || n_query >= count {
        return Err(Error::Param(format!(
            "split of {count} samples with {n_query} queries leaves a side empty"
        )));
    }
    let mut ids: Vec<usize> = (0..count).collect();
    PortableRng::new(seed).shuffle(&mut ids);
    let mut query = ids[..n_query].to_vec();
    let mut train = ids[n_query..].to_vec();
    query.sort_unstable();
    train.sort_unstable();
    Ok(DatasetSplit {
        database: train.clone(),
        train,
        query,
    })
}

/// Parameters of the synthetic clustered corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub feature_dim: usize,
    /// Per-coordinate standard deviation around the cluster centroid.
    /// Centroid coordinates are standard normal.
    pub feature_noise: f64,
    pub vocab_per_cluster: usize,
    pub tags_per_sample: usize,
    pub embed_dim: usize,
    /// Spread of tag embeddings around their unit-length cluster direction.
    pub embed_noise: f64,
    /// Probability that a tag is drawn from another cluster's vocabulary.
    pub tag_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clusters: 4,
            per_cluster: 500,
            feature_dim: 64,
            feature_noise: 1.0,
            vocab_per_cluster: 20,
            tags_per_sample: 4,
            embed_dim: 32,
            embed_noise: 0.5,
            tag_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub samples: SampleSet,
    pub table: WordEmbeddingTable,
}

pub fn synth_token(cluster: usize, j: usize) -> String {
    format!("c{cluster}w{j}")
}

/// Draws a clustered corpus. Sample `i` belongs to cluster
/// `i / per_cluster` and carries that cluster id as its only label.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let s = spec;
    if s.clusters < 2 {
        return Err(Error::Param("synthetic data needs at least 2 clusters".into()));
    }
    if s.per_cluster == 0 || s.feature_dim == 0 || s.embed_dim == 0 || s.vocab_per_cluster == 0 {
        return Err(Error::Param("synthetic sizes must be positive".into()));
    }
    if !(s.feature_noise >= 0.0 && s.embed_noise >= 0.0) {
        return Err(Error::Param("noise levels must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&s.tag_noise) {
        return Err(Error::Param("tag noise must be a probability".into()));
    }
    let mut rng = PortableRng::new(s.seed);

    let centroids: Vec<Vec<f64>> = (0..s.clusters)
        .map(|_| (0..s.feature_dim).map(|_| rng.normal()).collect())
        .collect();

    let mut table = WordEmbeddingTable::new(s.embed_dim)?;
    let scale = 1.0 / (s.embed_dim as f64).sqrt();
    for c in 0..s.clusters {
        let mut dir: Vec<f64> = (0..s.embed_dim).map(|_| rng.normal()).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        for j in 0..s.vocab_per_cluster {
            let v: Vec<f64> = dir
                .iter()
                .map(|&x| x + s.embed_noise * scale * rng.normal())
                .collect();
            table.insert(&synth_token(c, j), &v)?;
        }
    }

    let n = s.clusters * s.per_cluster;
    let mut features = Array2::<f32>::zeros((n, s.feature_dim));
    let mut tags = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i / s.per_cluster;
        for (dst, &mu) in features.row_mut(i).iter_mut().zip(&centroids[c]) {
            *dst = (mu + s.feature_noise * rng.normal()) as f32;
        }
        let set: Vec<String> = (0..s.tags_per_sample)
            .map(|_| {
                let from = if s.tag_noise > 0.0 && rng.next_f64() < s.tag_noise {
                    let other = rng.below(s.clusters as u64 - 1) as usize;
                    if other >= c {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    c
                };
                synth_token(from, rng.below(s.vocab_per_cluster as u64) as usize)
            })
            .collect();
        tags.push(TagSet::new(set));
        labels.push(vec![c as u32]);
    }

    let samples = SampleSet::new(
        FeatureMatrix::new(features)?,
        tags,
        LabelMatrix::new(s.clusters, labels)?,
    )?;
    Ok(SyntheticData { samples, table })
}

/// Writes a dataset directory: `{train,query}.{fvec,tags,labels}` and
/// `embeddings.txt`.
pub fn save_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, set) in [("train", &data.train), ("query", &data.query)] {
        set.features.save(dir.join(format!("{name}.fvec")))?;
        save_tags(dir.join(format!("{name}.tags")), &set.tags)?;
        set.labels.save(dir.join(format!("{name}.labels")))?;
    }
    write_file(&dir.join("embeddings.txt"), |w| data.table.write(w))
}

pub fn load_sample_set(dir: impl AsRef<Path>, name: &str) -> Result<SampleSet> {
    let dir = dir.as_ref();
    SampleSet::new(
        FeatureMatrix::load(dir.join(format!("{name}.fvec")))?,
        load_tags(dir.join(format!("{name}.tags")))?,
        LabelMatrix::load(dir.join(format!("{name}.labels")))?,
    )
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    Ok(Dataset {
        train: load_sample_set(dir, "train")?,
        query: load_sample_set(dir, "query")?,
        table: WordEmbeddingTable::load(dir.join("embeddings.txt"))?,
    })
}

/// Label set of each sample as a `BTreeSet`, for callers that need set ops.
pub fn label_sets(labels: &LabelMatrix) -> Vec<BTreeSet<u32>> {
    (0..labels.len())
        .map(|i| labels.get(i).iter().copied().collect())
        .collect()
}
