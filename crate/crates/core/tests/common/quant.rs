//! Brute-force nearest-codeword oracle and tie-heavy codebooks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vqmimo_core::model::nearest_codewords;

pub const K: usize = 512;
pub const D: usize = 64;

/// First index attaining the minimum squared distance.
pub fn brute_force(query: &[f64], codebook: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, e) in codebook.iter().enumerate() {
        let mut s = 0.0;
        for c in 0..query.len() {
            s += (query[c] - e[c]) * (query[c] - e[c]);
        }
        if s < best.1 {
            best = (j, s);
        }
    }
    best.0
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-8i32..=8) as f64 / 8.0
}

/// Codebook on a 1/8 grid so every distance is exact. Rows `2i` and `2i+1`
/// differ only in one coordinate, by 1/4, so queries can sit exactly
/// halfway between them.
pub fn dyadic_codebook(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(K);
    while rows.len() < K {
        let base: Vec<f64> = (0..D).map(|_| dyadic(rng)).collect();
        let mut twin = base.clone();
        twin[rows.len() % D] += 0.25;
        if rows.iter().any(|r| *r == base || *r == twin) {
            continue;
        }
        if (rows.len() / 2).is_multiple_of(2) {
            rows.push(base);
            rows.push(twin);
        } else {
            rows.push(twin);
            rows.push(base);
        }
    }
    rows
}

/// Disagreements with the linear scan over `n` uniform queries.
pub fn random_mismatches(seed: u64, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..K)
        .map(|_| (0..D).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let queries: Vec<f64> = (0..n * D).map(|_| rng.gen_range(-1.2..1.2)).collect();
    let got = nearest_codewords(&queries, &rows.concat(), D);
    queries
        .chunks_exact(D)
        .zip(&got)
        .filter(|(q, &g)| g != brute_force(q, &rows))
        .count()
}

pub struct TieReport {
    pub mismatches: usize,
    /// Midpoint queries whose nearest pair was the constructed one.
    pub ties: usize,
    /// Of those, how many resolved to the pair's higher index.
    pub wrong_side: usize,
}

/// `n` queries on a dyadic codebook: a third at twin midpoints, a third on
/// codewords, a third at arbitrary grid points.
pub fn tie_report(seed: u64, n: usize) -> TieReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = dyadic_codebook(&mut rng);
    let mut queries = Vec::with_capacity(n * D);
    let mut pairs = Vec::with_capacity(n);
    for q in 0..n {
        let pair = rng.gen_range(0..K / 2);
        pairs.push(pair);
        let (a, b) = (&rows[2 * pair], &rows[2 * pair + 1]);
        match q % 3 {
            0 => queries.extend(a.iter().zip(b).map(|(x, y)| (x + y) / 2.0)),
            1 => queries.extend_from_slice(a),
            _ => queries.extend((0..D).map(|_| dyadic(&mut rng))),
        }
    }
    let got = nearest_codewords(&queries, &rows.concat(), D);
    let mut report = TieReport {
        mismatches: 0,
        ties: 0,
        wrong_side: 0,
    };
    for (i, (q, &g)) in queries.chunks_exact(D).zip(&got).enumerate() {
        let want = brute_force(q, &rows);
        if g != want {
            report.mismatches += 1;
        }
        if i % 3 == 0 && want / 2 == pairs[i] {
            report.ties += 1;
            if g != 2 * pairs[i] {
                report.wrong_side += 1;
            }
        }
    }
    report
}
