use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Corpus;
use crate::error::{Error, Result};

fn pair_hash(seed: u64, user: &str, video: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(user.as_bytes());
    h.update([0u8]);
    h.update(video.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Assigns each session to one of `n_folds` folds.
///
/// Sessions are ranked by a seeded hash of their `(user, video)` key,
/// so the assignment does not depend on corpus order, and rank `r` goes
/// to fold `r mod n_folds`. With `stratify`, labeled CFA, labeled
/// non-CFA and unlabeled sessions are ranked separately and dealt out
/// one group after another, so each fold gets a near-equal share of
/// every group while total fold sizes still differ by at most one.
pub fn split_folds(corpus: &mut Corpus, n_folds: usize, seed: u64, stratify: bool) -> Result<()> {
    let n = corpus.sessions.len();
    if n == 0 {
        return Err(Error::Split("corpus is empty".into()));
    }
    if n_folds < 2 {
        return Err(Error::Split(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::Split(format!("{n_folds} folds requested for {n} sessions")));
    }
    let keyed = |i: usize| {
        let s = &corpus.sessions[i];
        (
            pair_hash(seed, &s.user_id, &s.video_id),
            s.user_id.clone(),
            s.video_id.clone(),
            i,
        )
    };
    let mut groups: Vec<Vec<usize>> = if stratify {
        let mut g = vec![Vec::new(); 3];
        for i in 0..n {
            let slot = match (corpus.sessions[i].is_labeled(), corpus.label(i)) {
                (true, Ok(l)) if l.cfa => 0,
                (true, Ok(_)) => 1,
                _ => 2,
            };
            g[slot].push(i);
        }
        g
    } else {
        vec![(0..n).collect()]
    };
    let mut assign = vec![0usize; n];
    let mut rank = 0usize;
    for g in &mut groups {
        let mut keys: Vec<_> = g.iter().map(|&i| keyed(i)).collect();
        keys.sort();
        for k in keys {
            assign[k.3] = rank % n_folds;
            rank += 1;
        }
    }
    corpus.fold_assignments = Some(assign);
    Ok(())
}

/// SHA-256 over the ordered `(user, video, fold)` triples; equal for any
/// two runs that share a split.
pub fn fold_fingerprint(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    if let Some(a) = &corpus.fold_assignments {
        for (s, f) in corpus.sessions.iter().zip(a) {
            h.update(s.user_id.as_bytes());
            h.update([0u8]);
            h.update(s.video_id.as_bytes());
            h.update([0u8]);
            h.update((*f as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Splits training indices into `(D_train, D_meta)` with
/// `|D_meta| = round(meta_fraction · n)`. Both halves keep the input order.
pub fn carve_meta(indices: &[usize], meta_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(meta_fraction > 0.0 && meta_fraction < 0.5) {
        return Err(Error::Split(format!(
            "meta fraction must lie in (0, 0.5), got {meta_fraction}"
        )));
    }
    let m = (meta_fraction * indices.len() as f64).round() as usize;
    if m == 0 {
        return Err(Error::Split(format!(
            "meta fraction {meta_fraction} of {} sessions leaves no meta data",
            indices.len()
        )));
    }
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_meta = vec![false; indices.len()];
    for &j in &order[..m] {
        is_meta[j] = true;
    }
    let (meta, train): (Vec<usize>, Vec<usize>) = (0..indices.len()).partition(|&j| is_meta[j]);
    Ok((
        train.into_iter().map(|j| indices[j]).collect(),
        meta.into_iter().map(|j| indices[j]).collect(),
    ))
}

/// Random subset of `round(fraction · n)` items, in input order.
/// Nested across fractions for a fixed seed.
pub fn subsample(indices: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Split(format!(
            "usage fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let m = (fraction * indices.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = order[..m].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|j| indices[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carve_sizes() {
        let idx: Vec<usize> = (0..100).collect();
        let (t, m) = carve_meta(&idx, 0.1, 3).unwrap();
        assert_eq!((t.len(), m.len()), (90, 10));
        assert!(m.iter().all(|i| !t.contains(i)));
        assert!(carve_meta(&idx, 0.5, 3).is_err());
        assert!(carve_meta(&idx[..3], 0.1, 3).is_err());
    }

    #[test]
    fn subsample_is_nested() {
        let idx: Vec<usize> = (10..50).collect();
        let quarter = subsample(&idx, 0.25, 9).unwrap();
        let half = subsample(&idx, 0.5, 9).unwrap();
        assert_eq!((quarter.len(), half.len()), (10, 20));
        assert!(quarter.iter().all(|i| half.contains(i)));
        assert!(subsample(&idx, 0.0, 9).unwrap().is_empty());
        assert_eq!(subsample(&idx, 1.0, 9).unwrap(), idx);
    }
}
