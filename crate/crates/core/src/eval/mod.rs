//! Retrieval quality: label relevance, mAP@K and precision-recall curves.
//!
//! A database item is relevant to a query when their label sets intersect.
//! AP@K averages precision@i over the relevant positions within the top K
//! and divides by the number of relevant items found there; a query with
//! none scores 0.

use std::io::Write;

use rayon::prelude::*;

use crate::codec::CodeMatrix;
use crate::datastore::LabelMatrix;
use crate::error::{Error, Result};
use crate::retrieval::HammingIndex;

pub mod experiments;

pub const PR_POINTS: usize = 1000;

/// True when two sorted label lists share an element.
pub fn relevant(query: &[u32], item: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < query.len() && j < item.len() {
        match query[i].cmp(&item[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// AP over a relevance list already cut to the top K.
pub fn average_precision_at_k(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn relevance_list(ranking: &[usize], query: &[u32], db_labels: &LabelMatrix, k: usize) -> Vec<bool> {
    ranking
        .iter()
        .take(k)
        .map(|&d| relevant(query, db_labels.get(d)))
        .collect()
}

fn check_queries(n_rankings: usize, query_labels: &LabelMatrix) -> Result<()> {
    if n_rankings == 0 {
        return Err(Error::Data("no queries to evaluate".into()));
    }
    if n_rankings != query_labels.len() {
        return Err(Error::Shape(format!(
            "{n_rankings} rankings for {} query label sets",
            query_labels.len()
        )));
    }
    Ok(())
}

/// Mean AP@K over queries. `rankings[q]` lists database positions, best
/// first.
pub fn map_at_k(
    rankings: &[Vec<usize>],
    query_labels: &LabelMatrix,
    db_labels: &LabelMatrix,
    k: usize,
) -> Result<f64> {
    check_queries(rankings.len(), query_labels)?;
    let aps: Vec<f64> = rankings
        .par_iter()
        .enumerate()
        .map(|(q, r)| average_precision_at_k(&relevance_list(r, query_labels.get(q), db_labels, k)))
        .collect();
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn check_code_eval(
    index: &HammingIndex,
    queries: &CodeMatrix,
    query_labels: &LabelMatrix,
    db_labels: &LabelMatrix,
) -> Result<()> {
    check_queries(queries.len(), query_labels)?;
    if index.len() != db_labels.len() {
        return Err(Error::Shape(format!(
            "{} database codes for {} label sets",
            index.len(),
            db_labels.len()
        )));
    }
    if index.bits() != queries.bits() {
        return Err(Error::Shape(format!(
            "query codes have {} bits, database {}",
            queries.bits(),
            index.bits()
        )));
    }
    Ok(())
}

/// mAP@K straight from codes, ranking one query at a time.
pub fn map_at_k_codes(
    index: &HammingIndex,
    queries: &CodeMatrix,
    query_labels: &LabelMatrix,
    db_labels: &LabelMatrix,
    k: usize,
) -> Result<f64> {
    check_code_eval(index, queries, query_labels, db_labels)?;
    let aps: Vec<f64> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let ranking: Vec<usize> = index
                .rank_words(queries.row(q), k)
                .iter()
                .map(|n| n.index)
                .collect();
            average_precision_at_k(&relevance_list(&ranking, query_labels.get(q), db_labels, k))
        })
        .collect();
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Mean interpolated precision at recall levels `1/1000, 2/1000, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)`, recall increasing.
    pub points: Vec<(f64, f64)>,
    /// Queries with at least one relevant item, the ones averaged.
    pub queries_used: usize,
}

impl PrCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "recall,precision")?;
        for (r, p) in &self.points {
            writeln!(out, "{r},{p}")?;
        }
        Ok(())
    }
}

/// Precision at each recall level for one full relevance list, or `None`
/// when nothing is relevant. Level `l` takes the precision at the first
/// rank whose recall reaches `l / 1000`.
fn query_pr(relevance: &[bool]) -> Option<Vec<f64>> {
    let total = relevance.iter().filter(|&&r| r).count();
    if total == 0 {
        return None;
    }
    // rank (1-based) of the h-th relevant item
    let hit_ranks: Vec<usize> = relevance
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| i + 1)
        .collect();
    Some(
        (1..=PR_POINTS)
            .map(|l| {
                let needed = (l * total).div_ceil(PR_POINTS);
                needed as f64 / hit_ranks[needed - 1] as f64
            })
            .collect(),
    )
}

fn average_curves(curves: impl Iterator<Item = Option<Vec<f64>>>) -> Result<PrCurve> {
    let mut sum = vec![0.0; PR_POINTS];
    let mut used = 0usize;
    for c in curves.flatten() {
        used += 1;
        for (s, p) in sum.iter_mut().zip(c) {
            *s += p;
        }
    }
    if used == 0 {
        return Err(Error::Data("no query has a relevant database item".into()));
    }
    Ok(PrCurve {
        points: sum
            .into_iter()
            .enumerate()
            .map(|(l, s)| ((l + 1) as f64 / PR_POINTS as f64, s / used as f64))
            .collect(),
        queries_used: used,
    })
}

/// Precision-recall curve over full rankings of the database.
pub fn pr_curve(
    rankings: &[Vec<usize>],
    query_labels: &LabelMatrix,
    db_labels: &LabelMatrix,
) -> Result<PrCurve> {
    check_queries(rankings.len(), query_labels)?;
    let per_query: Vec<Option<Vec<f64>>> = rankings
        .par_iter()
        .enumerate()
        .map(|(q, r)| query_pr(&relevance_list(r, query_labels.get(q), db_labels, usize::MAX)))
        .collect();
    average_curves(per_query.into_iter())
}

pub fn pr_curve_codes(
    index: &HammingIndex,
    queries: &CodeMatrix,
    query_labels: &LabelMatrix,
    db_labels: &LabelMatrix,
) -> Result<PrCurve> {
    check_code_eval(index, queries, query_labels, db_labels)?;
    let per_query: Vec<Option<Vec<f64>>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let ranking: Vec<usize> = index
                .rank_words(queries.row(q), index.len())
                .iter()
                .map(|n| n.index)
                .collect();
            query_pr(&relevance_list(&ranking, query_labels.get(q), db_labels, usize::MAX))
        })
        .collect();
    average_curves(per_query.into_iter())
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub bits: usize,
    pub mode: String,
    pub k: usize,
    pub map: f64,
}

/// `bits,mode,K,mAP`
pub fn write_report_csv<W: Write>(mut out: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(out, "bits,mode,K,mAP")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.bits, r.mode, r.k, r.map)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(sets: Vec<Vec<u32>>) -> LabelMatrix {
        LabelMatrix::new(10, sets).unwrap()
    }

    #[test]
    fn relevance_examples() {
        assert!(relevant(&[1, 2], &[2, 5]));
        assert!(!relevant(&[1], &[2]));
        assert!(!relevant(&[], &[1, 2, 3]));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision_at_k(&[true; 5]), 1.0);
        let ap = average_precision_at_k(&[true, false, true]);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision_at_k(&[false; 4]), 0.0);
    }

    #[test]
    fn map_single_query() {
        let q = labels(vec![vec![1]]);
        let db = labels(vec![vec![1], vec![2], vec![1]]);
        let m = map_at_k(&[vec![0, 1, 2]], &q, &db, 3).unwrap();
        assert!((m - average_precision_at_k(&[true, false, true])).abs() < 1e-15);
        assert_eq!(map_at_k(&[vec![0, 2, 1]], &q, &db, 3).unwrap(), 1.0);
        assert!(map_at_k(&[], &labels(vec![]), &db, 3).is_err());
    }

    #[test]
    fn map_ignores_query_order() {
        let q = labels(vec![vec![1], vec![2]]);
        let db = labels(vec![vec![1], vec![2], vec![1, 2]]);
        let a = map_at_k(&[vec![1, 0, 2], vec![0, 2, 1]], &q, &db, 2).unwrap();
        let q2 = labels(vec![vec![2], vec![1]]);
        let b = map_at_k(&[vec![0, 2, 1], vec![1, 0, 2]], &q2, &db, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pr_examples() {
        let q = labels(vec![vec![1]]);
        let db = labels(vec![vec![1], vec![1], vec![2]]);
        let perfect = pr_curve(&[vec![0, 1, 2]], &q, &db).unwrap();
        assert_eq!(perfect.points.len(), PR_POINTS);
        assert!(perfect.points.iter().all(|&(_, p)| p == 1.0));
        assert_eq!(perfect.points[0].0, 0.001);
        assert_eq!(perfect.points[999].0, 1.0);

        let db = labels(vec![vec![2], vec![1]]);
        let c = pr_curve(&[vec![0, 1]], &q, &db).unwrap();
        assert_eq!(c.points[999].1, 0.5);
        assert_eq!(c.points[0].1, 0.5);
    }

    #[test]
    fn pr_skips_queries_without_relevant_items() {
        let q = labels(vec![vec![1], vec![7]]);
        let db = labels(vec![vec![1], vec![2]]);
        let c = pr_curve(&[vec![0, 1], vec![1, 0]], &q, &db).unwrap();
        assert_eq!(c.queries_used, 1);
        assert!(c.points.iter().all(|&(_, p)| p == 1.0));
        let q = labels(vec![vec![7]]);
        assert!(pr_curve(&[vec![0, 1]], &q, &db).is_err());
    }

    #[test]
    fn report_csv() {
        let mut buf = Vec::new();
        write_report_csv(
            &mut buf,
            &[ReportRow {
                bits: 16,
                mode: "mean".into(),
                k: 100,
                map: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bits,mode,K,mAP\n16,mean,100,1\n");
    }
}
