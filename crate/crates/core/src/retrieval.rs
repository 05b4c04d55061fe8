//! Exact Hamming ranking by linear scan.
//!
//! Results are ordered by `(distance, database position)`. Distances are
//! bounded by the code length, so ranking is a counting sort over distance
//! buckets and the position tie-break falls out of the scan order.

use std::io::Write;

use rayon::prelude::*;

use crate::codec::{CodeMatrix, HashCode};
use crate::error::{Error, Result};

#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming_distance(a: &HashCode, b: &HashCode) -> Result<u32> {
    if a.bits() != b.bits() {
        return Err(Error::Shape(format!(
            "cannot compare {}-bit and {}-bit codes",
            a.bits(),
            b.bits()
        )));
    }
    Ok(hamming_words(a.words(), b.words()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    /// Database position of the match.
    pub index: usize,
    /// Caller-facing id of the match.
    pub id: u64,
    pub distance: u32,
}

#[derive(Debug, Clone)]
pub struct HammingIndex {
    codes: CodeMatrix,
    ids: Vec<u64>,
}

impl HammingIndex {
    /// Index whose ids are the row positions.
    pub fn new(codes: CodeMatrix) -> Self {
        let ids = (0..codes.len() as u64).collect();
        Self { codes, ids }
    }

    pub fn with_ids(codes: CodeMatrix, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != codes.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} codes",
                ids.len(),
                codes.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate ids in index".into()));
        }
        Ok(Self { codes, ids })
    }

    pub fn bits(&self) -> usize {
        self.codes.bits()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &CodeMatrix {
        &self.codes
    }

    fn check_query(&self, bits: usize) -> Result<()> {
        if bits != self.bits() {
            return Err(Error::Shape(format!(
                "query has {bits} bits, index holds {}-bit codes",
                self.bits()
            )));
        }
        Ok(())
    }

    /// Database positions ranked by distance to `query` (packed words),
    /// keeping at most `k`.
    pub fn rank_words(&self, query: &[u64], k: usize) -> Vec<Neighbor> {
        let n = self.len();
        let k = k.min(n);
        let dists: Vec<u32> = self.codes.iter().map(|row| hamming_words(row, query)).collect();

        let mut counts = vec![0usize; self.bits() + 2];
        for &d in &dists {
            counts[d as usize + 1] += 1;
        }
        // Find the distance cutoff that covers k results.
        let mut taken = 0usize;
        let mut cutoff = 0usize;
        while cutoff <= self.bits() && taken < k {
            taken += counts[cutoff + 1];
            cutoff += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut slots: Vec<Option<Neighbor>> = vec![None; taken];
        for (index, &d) in dists.iter().enumerate() {
            let d = d as usize;
            if d >= cutoff {
                continue;
            }
            let at = counts[d];
            counts[d] += 1;
            slots[at] = Some(Neighbor {
                index,
                id: self.ids[index],
                distance: d as u32,
            });
        }
        slots.truncate(k);
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    }

    /// The `min(k, len)` nearest codes, closest first.
    pub fn query_topk(&self, query: &HashCode, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        self.check_query(query.bits())?;
        Ok(self.rank_words(query.words(), k))
    }

    /// Top-k lists for every query, computed in parallel.
    pub fn query_batch(&self, queries: &CodeMatrix, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        self.check_query(queries.bits())?;
        Ok((0..queries.len())
            .into_par_iter()
            .map(|q| self.rank_words(queries.row(q), k))
            .collect())
    }

    /// Full rankings of the database for every query.
    pub fn rank_all(&self, queries: &CodeMatrix) -> Result<Vec<Vec<Neighbor>>> {
        self.query_batch(queries, self.len().max(1))
    }
}

/// Writes `query_id<TAB>rank<TAB>db_id<TAB>distance` rows, ranks from 1.
pub fn write_results_tsv<W: Write>(
    mut out: W,
    query_ids: &[u64],
    results: &[Vec<Neighbor>],
) -> std::io::Result<()> {
    for (qid, list) in query_ids.iter().zip(results) {
        for (rank, n) in list.iter().enumerate() {
            writeln!(out, "{qid}\t{}\t{}\t{}", rank + 1, n.id, n.distance)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::pack;
    use crate::rng::PortableRng;
    use proptest::prelude::*;

    fn random_matrix(rng: &mut PortableRng, n: usize, bits: usize) -> CodeMatrix {
        let codes: Vec<HashCode> = (0..n)
            .map(|_| pack(&(0..bits).map(|_| rng.next_u64() & 1 == 1).collect::<Vec<_>>()))
            .collect();
        CodeMatrix::from_codes(bits, &codes).unwrap()
    }

    fn brute_force(db: &CodeMatrix, q: &[u64], k: usize) -> Vec<(usize, u32)> {
        let mut all: Vec<(usize, u32)> = (0..db.len())
            .map(|i| {
                let d = db.row(i).iter().zip(q).map(|(a, b)| (a ^ b).count_ones()).sum();
                (i, d)
            })
            .collect();
        all.sort_by_key(|&(i, d)| (d, i));
        all.truncate(k);
        all
    }

    #[test]
    fn distance_examples() {
        let a = pack(&[true, false, true, false]);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        let comp = pack(&[false, true, false, true]);
        assert_eq!(hamming_distance(&a, &comp).unwrap(), 4);
        // 0b1010 vs 0b0110 written MSB-first
        let x = pack(&[false, true, false, true]);
        let y = pack(&[false, true, true, false]);
        assert_eq!(hamming_distance(&x, &y).unwrap(), 2);
        assert!(hamming_distance(&a, &pack(&[true; 5])).is_err());
    }

    #[test]
    fn topk_matches_brute_force() {
        let mut rng = PortableRng::new(5);
        let db = random_matrix(&mut rng, 1000, 32);
        let queries = random_matrix(&mut rng, 100, 32);
        let index = HammingIndex::new(db.clone());
        for k in [1, 10, 999, 1000, 5000] {
            let got = index.query_batch(&queries, k).unwrap();
            for q in 0..queries.len() {
                let want = brute_force(&db, queries.row(q), k);
                let got: Vec<(usize, u32)> = got[q].iter().map(|n| (n.index, n.distance)).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn query_itself_ranks_first() {
        let mut rng = PortableRng::new(9);
        let db = random_matrix(&mut rng, 50, 70);
        let index = HammingIndex::new(db.clone());
        let top = index.query_topk(&db.code(17), 3).unwrap();
        assert_eq!(top[0].distance, 0);
        assert_eq!(top[0].index, 17);
    }

    #[test]
    fn rank_all_covers_database() {
        let mut rng = PortableRng::new(1);
        let db = random_matrix(&mut rng, 40, 16);
        let q = random_matrix(&mut rng, 3, 16);
        let index = HammingIndex::new(db);
        for list in index.rank_all(&q).unwrap() {
            assert_eq!(list.len(), 40);
        }
    }

    #[test]
    fn errors() {
        let index = HammingIndex::new(CodeMatrix::from_codes(8, &[HashCode::zeros(8)]).unwrap());
        assert!(index.query_topk(&HashCode::zeros(8), 0).is_err());
        assert!(index.query_topk(&HashCode::zeros(9), 1).is_err());
        let codes = CodeMatrix::from_codes(8, &vec![HashCode::zeros(8); 2]).unwrap();
        assert!(HammingIndex::with_ids(codes.clone(), vec![3, 3]).is_err());
        assert!(HammingIndex::with_ids(codes, vec![3]).is_err());
    }

    #[test]
    fn ids_are_reported() {
        let codes = CodeMatrix::from_codes(4, &[pack(&[true; 4]), pack(&[false; 4])]).unwrap();
        let index = HammingIndex::with_ids(codes, vec![70, 30]).unwrap();
        let r = index.query_topk(&pack(&[false; 4]), 2).unwrap();
        assert_eq!((r[0].id, r[0].distance, r[1].id, r[1].distance), (30, 0, 70, 4));
        let mut buf = Vec::new();
        write_results_tsv(&mut buf, &[5], &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "5\t1\t30\t0\n5\t2\t70\t4\n");
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in any::<[u64; 2]>(), b in any::<[u64; 2]>(), c in any::<[u64; 2]>()) {
            let mask = (1u64 << 36) - 1;
            let mk = |w: [u64; 2]| HashCode::from_words(100, vec![w[0], w[1] & mask]).unwrap();
            let (a, b, c) = (mk(a), mk(b), mk(c));
            let ab = hamming_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming_distance(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            let ac = hamming_distance(&a, &c).unwrap();
            let cb = hamming_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb);
        }
    }
}
