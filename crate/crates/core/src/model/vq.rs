//! Nearest-codeword vector quantization.

use crate::autodiff::{channels_to_rows, rows_to_channels};
use crate::error::{Error, Result};
use crate::linalg::{batch_dims, gemm};
use crate::tensor::Tensor;
use crate::Real;

/// Squared Euclidean distance, accumulated in coordinate order.
///
/// This is the distance that defines the quantizer's argmin.
#[inline]
pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Build a `[k, d]` codebook tensor from rows, rejecting empty, ragged,
/// non-finite or duplicated entries.
pub fn codebook_from_rows<T: Real>(rows: &[Vec<T>]) -> Result<Tensor<T>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Config("codebook has no entries".into()))?;
    let d = first.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(
            "codebook rows must share a positive width".into(),
        ));
    }
    let t = Tensor::from_vec(&[rows.len(), d], rows.concat())?;
    check_codebook(&t)?;
    Ok(t)
}

/// Codebook invariants: 2-D, finite, pairwise distinct rows.
pub fn check_codebook<T: Real>(codebook: &Tensor<T>) -> Result<()> {
    let &[k, d] = codebook.shape() else {
        return Err(Error::shape(format!(
            "codebook must be [k, d], got {:?}",
            codebook.shape()
        )));
    };
    if !codebook.is_finite() {
        return Err(Error::Config("codebook has non-finite entries".into()));
    }
    let rows: Vec<&[T]> = codebook.data().chunks_exact(d).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .iter()
            .zip(rows[b])
            .map(|(x, y)| x.partial_cmp(y).expect("finite"))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if let Some(w) = order.windows(2).find(|w| rows[w[0]] == rows[w[1]]) {
        return Err(Error::Config(format!(
            "codewords {} and {} coincide",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Index of the nearest codeword for each `d`-wide row of `queries`.
///
/// Candidates are screened with a GEMM-based expansion
/// `‖z‖² − 2z·e + ‖e‖²`; every codeword within the expansion's rounding bound
/// of the best is then re-scored with [`squared_distance`], so the result is
/// exactly the argmin of that distance, ties going to the lowest index.
pub fn nearest_codewords<T: Real>(queries: &[T], codebook: &[T], d: usize) -> Vec<usize> {
    let m = queries.len() / d;
    let k = codebook.len() / d;
    let enorm: Vec<T> = codebook
        .chunks_exact(d)
        .map(|e| e.iter().map(|&v| v * v).sum())
        .collect();
    let emax = enorm.iter().copied().fold(T::zero(), T::max);
    let mut dots = vec![T::zero(); m * k];
    gemm(false, true, m, k, d, queries, codebook, &mut dots, false);
    let slack = T::epsilon() * T::lit((4 * d + 16) as f64);
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(m);
    for (i, z) in queries.chunks_exact(d).enumerate() {
        let znorm: T = z.iter().map(|&v| v * v).sum();
        let row = &dots[i * k..(i + 1) * k];
        let approx = |j: usize| znorm - two * row[j] + enorm[j];
        let best = (0..k).map(approx).fold(T::infinity(), T::min);
        let bound = best + two * slack * (znorm + emax) + T::min_positive_value();
        let mut arg = usize::MAX;
        let mut arg_d = T::infinity();
        for j in 0..k {
            if approx(j) <= bound {
                let dj = squared_distance(z, &codebook[j * d..(j + 1) * d]);
                if dj < arg_d {
                    arg_d = dj;
                    arg = j;
                }
            }
        }
        if arg == usize::MAX {
            // Non-finite query: fall back to the plain scan.
            arg = linear_scan(z, codebook, d);
        }
        out.push(arg);
    }
    out
}

fn linear_scan<T: Real>(z: &[T], codebook: &[T], d: usize) -> usize {
    let mut arg = 0;
    let mut best = T::infinity();
    for (j, e) in codebook.chunks_exact(d).enumerate() {
        let dj = squared_distance(z, e);
        if dj < best {
            best = dj;
            arg = j;
        }
    }
    arg
}

/// Quantize a latent grid `[d, gh, gw]` (or batch `[N, d, gh, gw]`) position
/// by position. Returns the snapped grid, whose vectors are bit copies of
/// codebook rows, and the codeword indices in `(n, y, x)` order.
pub fn vq_quantize<T: Real>(
    z: &Tensor<T>,
    codebook: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let &[_, d] = codebook.shape() else {
        return Err(Error::Config(format!(
            "codebook must be [k, d], got {:?}",
            codebook.shape()
        )));
    };
    let (n, c, h, w) = batch_dims(z.shape())?;
    if c != d {
        return Err(Error::shape(format!(
            "latent vectors have {c} dims, codebook has {d}"
        )));
    }
    let rows = channels_to_rows(z.data(), n, c, h * w);
    let indices = nearest_codewords(&rows, codebook.data(), d);
    let mut snapped = Vec::with_capacity(rows.len());
    for &i in &indices {
        snapped.extend_from_slice(&codebook.data()[i * d..(i + 1) * d]);
    }
    let grid = rows_to_channels(&snapped, n, c, h * w);
    Ok((Tensor::from_vec(z.shape(), grid)?, indices))
}
