//! Word-embedding lookup and per-sample tag aggregation.
//!
//! A sample's tags are looked up in a [`WordEmbeddingTable`] and folded into
//! one vector `w` by one of three weightings:
//!
//! * `mean`: `w = (1/m) Σ v_j`
//! * `tf`:   `w = (1/m) Σ (n(t_j) / N) v_j`
//! * `itf`:  `w = (1/m) Σ ln(N / n(t_j)) v_j`
//!
//! where `m` counts in-vocabulary tags, `N` is the corpus-wide number of tag
//! occurrences and `n(t)` the number of samples carrying tag `t`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Canonical form of a tag token: trimmed and lowercased.
pub fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl WordEmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        })
    }

    /// Inserts `token` unless its normalized form is already present.
    /// Returns whether the entry was stored.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {token:?} has {} values, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        let key = normalize_token(token);
        if key.is_empty() {
            return Err(Error::Data("empty token".into()));
        }
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key, self.index.len());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Looks up a token, normalizing it first.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.get_normalized(&normalize_token(token))
    }

    fn get_normalized(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&row| &self.vectors[row * self.dim..(row + 1) * self.dim])
    }

    /// Parses the text format: optional `"<count> <dim>"` header, then one
    /// `"<token> <v1> ... <vdim>"` row per line. The first occurrence of a
    /// duplicated token wins.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<WordEmbeddingTable> = None;
        let mut first = true;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if first {
                first = false;
                if let Some(dim) = parse_header(&fields) {
                    table = Some(WordEmbeddingTable::new(dim)?);
                    continue;
                }
            }
            if fields.len() < 2 {
                return Err(Error::Format(format!(
                    "line {}: expected a token followed by values",
                    lineno + 1
                )));
            }
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f64::from_str(f).map_err(|_| {
                        Error::Format(format!("line {}: bad value {f:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let t = match table.as_mut() {
                Some(t) => t,
                None => table.insert(WordEmbeddingTable::new(values.len())?),
            };
            if values.len() != t.dim {
                return Err(Error::Format(format!(
                    "line {}: inconsistent dimension: {} values, expected {}",
                    lineno + 1,
                    values.len(),
                    t.dim
                )));
            }
            t.insert(fields[0], &values)?;
        }
        match table {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(Error::Format("embedding table is empty".into())),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    /// Writes the table with a header line, tokens in insertion order.
    pub fn write<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<(&String, &usize)> = self.index.iter().collect();
        rows.sort_by_key(|(_, &r)| r);
        writeln!(out, "{} {}", rows.len(), self.dim)?;
        for (token, &row) in rows {
            write!(out, "{token}")?;
            for v in &self.vectors[row * self.dim..(row + 1) * self.dim] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// A header is exactly two non-negative integers.
fn parse_header(fields: &[&str]) -> Option<usize> {
    if fields.len() != 2 {
        return None;
    }
    let _count: usize = fields[0].parse().ok()?;
    let dim: usize = fields[1].parse().ok()?;
    (dim > 0).then_some(dim)
}

/// Tags attached to one sample, normalized and in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagSet {
    tags: Vec<String>,
}

impl TagSet {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            tags: tags
                .into_iter()
                .map(|t| normalize_token(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    pub fn parse_line(line: &str) -> Self {
        Self::new(line.split_whitespace())
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// True when the two sets have at least one tag in common.
    pub fn shares_tag_with(&self, other: &TagSet) -> bool {
        self.tags.iter().any(|t| other.tags.contains(t))
    }
}

/// Corpus tag counts used by the `tf` and `itf` weightings.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStats {
    /// Total tag occurrences across the corpus.
    pub total_tags: u64,
    /// Number of distinct samples carrying each tag.
    pub images_per_tag: HashMap<String, u64>,
}

impl TagStats {
    pub fn images_with(&self, tag: &str) -> u64 {
        self.images_per_tag.get(tag).copied().unwrap_or(0)
    }
}

pub fn compute_tag_stats(tagsets: &[TagSet]) -> Result<TagStats> {
    if tagsets.is_empty() {
        return Err(Error::Data("tag corpus is empty".into()));
    }
    let mut images_per_tag: HashMap<String, u64> = HashMap::new();
    let mut total_tags = 0u64;
    for set in tagsets {
        total_tags += set.len() as u64;
        let distinct: HashSet<&String> = set.tags.iter().collect();
        for tag in distinct {
            *images_per_tag.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    Ok(TagStats {
        total_tags,
        images_per_tag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Tf,
    Itf,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Mean, Aggregation::Tf, Aggregation::Itf];
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Tf => "tf",
            Aggregation::Itf => "itf",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "tf" => Ok(Aggregation::Tf),
            "itf" => Ok(Aggregation::Itf),
            other => Err(Error::Param(format!(
                "unknown aggregation {other:?} (expected mean, tf or itf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedTagVector {
    pub sample_id: usize,
    pub w: Vec<f64>,
}

/// Folds one tag set into a single vector. Out-of-vocabulary tags are
/// skipped; a set with no known tag yields `Error::Data` so the caller can
/// drop the sample.
pub fn aggregate(
    tagset: &TagSet,
    table: &WordEmbeddingTable,
    stats: Option<&TagStats>,
    mode: Aggregation,
) -> Result<Vec<f64>> {
    let stats = match mode {
        Aggregation::Mean => None,
        Aggregation::Tf | Aggregation::Itf => {
            let stats = stats.ok_or_else(|| {
                Error::Param(format!("{mode} aggregation needs corpus tag statistics"))
            })?;
            if stats.total_tags == 0 {
                return Err(Error::Data(format!(
                    "{mode} aggregation needs a corpus with at least one tag"
                )));
            }
            Some(stats)
        }
    };

    let mut w = vec![0.0; table.dim()];
    let mut m = 0usize;
    for tag in &tagset.tags {
        let Some(v) = table.get_normalized(tag) else {
            continue;
        };
        let weight = match stats {
            None => 1.0,
            Some(s) => {
                let n = s.images_with(tag);
                if n == 0 {
                    return Err(Error::Data(format!("tag {tag:?} missing from corpus stats")));
                }
                tag_weight(mode, n as f64, s.total_tags as f64)
            }
        };
        for (acc, x) in w.iter_mut().zip(v) {
            *acc += weight * x;
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::Data("no in-vocabulary tags".into()));
    }
    let inv = 1.0 / m as f64;
    w.iter_mut().for_each(|x| *x *= inv);
    Ok(w)
}

/// Per-tag weight: 1 for `mean`, `n/N` for `tf`, `ln(N/n)` for `itf`.
pub fn tag_weight(mode: Aggregation, images_with_tag: f64, total_tags: f64) -> f64 {
    match mode {
        Aggregation::Mean => 1.0,
        Aggregation::Tf => images_with_tag / total_tags,
        Aggregation::Itf => (total_tags / images_with_tag).ln(),
    }
}

/// Result of aggregating a whole corpus.
#[derive(Debug, Clone)]
pub struct AggregatedCorpus {
    pub vectors: Vec<AggregatedTagVector>,
    /// Samples without any in-vocabulary tag.
    pub dropped: Vec<usize>,
}

/// Aggregates every sample. Statistics for `tf`/`itf` come from the same
/// corpus.
pub fn aggregate_corpus(
    tagsets: &[TagSet],
    table: &WordEmbeddingTable,
    mode: Aggregation,
) -> Result<AggregatedCorpus> {
    let stats = match mode {
        Aggregation::Mean => None,
        _ => Some(compute_tag_stats(tagsets)?),
    };
    let mut vectors = Vec::with_capacity(tagsets.len());
    let mut dropped = Vec::new();
    for (sample_id, set) in tagsets.iter().enumerate() {
        let known = set.tags.iter().any(|t| table.get_normalized(t).is_some());
        if !known {
            log::warn!("sample {sample_id} has no in-vocabulary tag, dropping it");
            dropped.push(sample_id);
            continue;
        }
        let w = aggregate(set, table, stats.as_ref(), mode)?;
        vectors.push(AggregatedTagVector { sample_id, w });
    }
    Ok(AggregatedCorpus { vectors, dropped })
}

/// Mean squared distance of a sample's tag vectors from their centroid.
pub fn tag_vector_variance(tagset: &TagSet, table: &WordEmbeddingTable) -> Result<f64> {
    let vecs: Vec<&[f64]> = tagset
        .tags
        .iter()
        .filter_map(|t| table.get_normalized(t))
        .collect();
    if vecs.is_empty() {
        return Err(Error::Data("no in-vocabulary tags".into()));
    }
    let n = vecs.len() as f64;
    let mut mean = vec![0.0; table.dim()];
    for v in &vecs {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let total: f64 = vecs
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
        .sum();
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> WordEmbeddingTable {
        let mut t = WordEmbeddingTable::new(rows[0].1.len()).unwrap();
        for (tok, v) in rows {
            t.insert(tok, v).unwrap();
        }
        t
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn parses_rows_without_header() {
        let t = WordEmbeddingTable::parse("cat 1 2 3\ndog 4 5 6\n".as_bytes()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("dog").unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn parses_rows_with_header() {
        let t = WordEmbeddingTable::parse("2 3\ncat 1 2 3\ndog 4 5 6\n".as_bytes()).unwrap();
        assert_eq!((t.dim(), t.len()), (3, 2));
        assert_eq!(t.get("CAT").unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_inconsistent_dimension() {
        let err = WordEmbeddingTable::parse("cat 1 2 3\ndog 4 5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("inconsistent dimension"), "{err}");
        let err = WordEmbeddingTable::parse("2 3\ndog 4 5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("inconsistent dimension"), "{err}");
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(WordEmbeddingTable::parse("".as_bytes()).is_err());
        assert!(WordEmbeddingTable::parse("2 3\n".as_bytes()).is_err());
        assert!(WordEmbeddingTable::parse("lonely\n".as_bytes()).is_err());
        assert!(WordEmbeddingTable::parse("cat 1 x 3\n".as_bytes()).is_err());
    }

    #[test]
    fn first_duplicate_wins() {
        let t = WordEmbeddingTable::parse("Cat 1 1\ncat 2 2\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn write_then_parse() {
        let t = table(&[("a", &[0.5, -0.25]), ("b", &[1e-3, 7.0])]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(WordEmbeddingTable::parse(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn tag_stats_count_images_and_occurrences() {
        let s = compute_tag_stats(&[TagSet::new(["a", "b"]), TagSet::new(["a"])]).unwrap();
        assert_eq!(s.total_tags, 3);
        assert_eq!(s.images_with("a"), 2);
        assert_eq!(s.images_with("b"), 1);

        let s = compute_tag_stats(&[TagSet::new(["a", "a"])]).unwrap();
        assert_eq!(s.total_tags, 2);
        assert_eq!(s.images_with("a"), 1);

        assert!(compute_tag_stats(&[]).is_err());
    }

    #[test]
    fn empty_corpus_breaks_weighted_modes() {
        let stats = compute_tag_stats(&[TagSet::default()]).unwrap();
        assert_eq!(stats.total_tags, 0);
        let t = table(&[("a", &[1.0])]);
        let set = TagSet::new(["a"]);
        assert!(aggregate(&set, &t, Some(&stats), Aggregation::Tf).is_err());
        assert!(aggregate(&set, &t, Some(&stats), Aggregation::Itf).is_err());
    }

    #[test]
    fn mean_examples() {
        let t = table(&[("a", &[0.5, -0.5]), ("b", &[0.0, 1.0])]);
        close(
            &aggregate(&TagSet::new(["a"]), &t, None, Aggregation::Mean).unwrap(),
            &[0.5, -0.5],
        );
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        close(
            &aggregate(&TagSet::new(["a", "b"]), &t, None, Aggregation::Mean).unwrap(),
            &[0.5, 0.5],
        );
    }

    #[test]
    fn tf_example() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let stats = compute_tag_stats(&[TagSet::new(["a", "b"]), TagSet::new(["a"])]).unwrap();
        let w = aggregate(&TagSet::new(["a", "b"]), &t, Some(&stats), Aggregation::Tf).unwrap();
        close(&w, &[1.0 / 3.0, 1.0 / 6.0]);
    }

    #[test]
    fn itf_uses_natural_log() {
        assert!((tag_weight(Aggregation::Itf, 1.0, std::f64::consts::E) - 1.0).abs() < 1e-15);

        let t = table(&[("a", &[2.0, -3.0])]);
        let stats = TagStats {
            total_tags: 3,
            images_per_tag: HashMap::from([("a".to_string(), 1)]),
        };
        let w = aggregate(&TagSet::new(["a"]), &t, Some(&stats), Aggregation::Itf).unwrap();
        let k = 3f64.ln();
        close(&w, &[2.0 * k, -3.0 * k]);
    }

    #[test]
    fn itf_zeroes_ubiquitous_tag() {
        let t = table(&[("a", &[1.0, 2.0])]);
        let corpus = vec![TagSet::new(["a"]); 4];
        let stats = compute_tag_stats(&corpus).unwrap();
        let w = aggregate(&corpus[0], &t, Some(&stats), Aggregation::Itf).unwrap();
        close(&w, &[0.0, 0.0]);
    }

    #[test]
    fn oov_tags_are_skipped_and_counted_out_of_m() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let w = aggregate(&TagSet::new(["a", "zzz"]), &t, None, Aggregation::Mean).unwrap();
        close(&w, &[1.0, 0.0]);
        assert!(aggregate(&TagSet::new(["zzz"]), &t, None, Aggregation::Mean).is_err());
    }

    #[test]
    fn duplicates_are_kept() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let w = aggregate(&TagSet::new(["a", "a", "b"]), &t, None, Aggregation::Mean).unwrap();
        close(&w, &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn corpus_aggregation_reports_dropped() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let corpus = vec![
            TagSet::new(["a"]),
            TagSet::new(["nope"]),
            TagSet::default(),
            TagSet::new(["A"]),
        ];
        let out = aggregate_corpus(&corpus, &t, Aggregation::Tf).unwrap();
        assert_eq!(out.dropped, vec![1, 2]);
        let ids: Vec<usize> = out.vectors.iter().map(|v| v.sample_id).collect();
        assert_eq!(ids, vec![0, 3]);
    }

    #[test]
    fn variance_examples() {
        let t = table(&[("p", &[1.0]), ("n", &[-1.0])]);
        assert_eq!(tag_vector_variance(&TagSet::new(["p"]), &t).unwrap(), 0.0);
        assert_eq!(tag_vector_variance(&TagSet::new(["p", "n"]), &t).unwrap(), 1.0);
        assert_eq!(tag_vector_variance(&TagSet::new(["p", "p", "p"]), &t).unwrap(), 0.0);
        assert!(tag_vector_variance(&TagSet::new(["q"]), &t).is_err());
    }

    #[test]
    fn tag_set_normalizes() {
        let s = TagSet::parse_line("  Sunset  BEACH sunset ");
        assert_eq!(s.tags(), &["sunset", "beach", "sunset"]);
        assert!(TagSet::parse_line("").is_empty());
        assert!(s.shares_tag_with(&TagSet::new(["beach"])));
        assert!(!s.shares_tag_with(&TagSet::new(["dog"])));
    }
}
