//! Numeric kernels of the re-ranker and their backward passes.
//!
//! Matrices are row-major `Vec<f64>`. Backward functions accumulate into the
//! gradient buffers they are given.

use crate::error::{Error, Result};

/// `y_r = act(W x_r + b)` for each of `rows` input rows of width `inp`.
/// `w` is `[out, inp]`. With `tanh == false` the layer is affine.
pub fn linear_rows(x: &[f64], rows: usize, w: &[f64], b: &[f64], tanh: bool) -> Vec<f64> {
    let out = b.len();
    let inp = if out == 0 { 0 } else { w.len() / out };
    debug_assert_eq!(x.len(), rows * inp);
    let mut y = vec![0.0; rows * out];
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..out {
            let wo = &w[o * inp..(o + 1) * inp];
            let mut acc = b[o];
            for (a, c) in wo.iter().zip(xr) {
                acc += a * c;
            }
            y[r * out + o] = if tanh { acc.tanh() } else { acc };
        }
    }
    y
}

/// Backward of [`linear_rows`]. `y` is the forward output, `dy` its gradient.
pub fn linear_rows_backward(
    x: &[f64],
    rows: usize,
    y: &[f64],
    dy: &[f64],
    tanh: bool,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let out = db.len();
    let inp = if out == 0 { 0 } else { dw.len() / out };
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..out {
            let mut d = dy[r * out + o];
            if tanh {
                let v = y[r * out + o];
                d *= 1.0 - v * v;
            }
            if d == 0.0 {
                continue;
            }
            db[o] += d;
            let dwo = &mut dw[o * inp..(o + 1) * inp];
            for (g, c) in dwo.iter_mut().zip(xr) {
                *g += d * c;
            }
        }
    }
}

/// Projects one vector: `tanh(W t + b)`.
pub fn project(t: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if w.len() != b.len() * t.len() {
        return Err(Error::Shape(format!(
            "weight has {} entries, expected {}x{}",
            w.len(),
            b.len(),
            t.len()
        )));
    }
    Ok(linear_rows(t, 1, w, b, true))
}

pub fn row_norms(x: &[f64], dim: usize) -> Vec<f64> {
    x.chunks(dim.max(1))
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Pairwise cosine similarities of the rows of `a` (`n x dim`) and `b`
/// (`m x dim`). Pairs involving a zero row are 0.
pub fn cosine_matrix(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let na = row_norms(a, dim);
    let nb = row_norms(b, dim);
    let (n, m) = (na.len(), nb.len());
    let mut s = vec![0.0; n * m];
    for i in 0..n {
        if na[i] == 0.0 {
            continue;
        }
        let ai = &a[i * dim..(i + 1) * dim];
        for j in 0..m {
            if nb[j] == 0.0 {
                continue;
            }
            let bj = &b[j * dim..(j + 1) * dim];
            let dot: f64 = ai.iter().zip(bj).map(|(x, y)| x * y).sum();
            s[i * m + j] = dot / (na[i] * nb[j]);
        }
    }
    s
}

/// Backward of [`cosine_matrix`] given its output `s` and gradient `ds`.
pub fn cosine_matrix_backward(
    a: &[f64],
    b: &[f64],
    dim: usize,
    s: &[f64],
    ds: &[f64],
    da: &mut [f64],
    db: &mut [f64],
) {
    let na = row_norms(a, dim);
    let nb = row_norms(b, dim);
    let (n, m) = (na.len(), nb.len());
    for i in 0..n {
        if na[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            let g = ds[i * m + j];
            if g == 0.0 || nb[j] == 0.0 {
                continue;
            }
            let sij = s[i * m + j];
            let inv = 1.0 / (na[i] * nb[j]);
            let ca = sij / (na[i] * na[i]);
            let cb = sij / (nb[j] * nb[j]);
            for k in 0..dim {
                let (x, y) = (a[i * dim + k], b[j * dim + k]);
                da[i * dim + k] += g * (y * inv - ca * x);
                db[j * dim + k] += g * (x * inv - cb * y);
            }
        }
    }
}

/// `2 * sigmoid(-d)` written to stay accurate for large `d`.
pub fn gate_of_distance(d: f64) -> f64 {
    let e = (-d).exp();
    2.0 * e / (1.0 + e)
}

/// Attention gate `G_ij = 2 * sigmoid(-||a_i - b_j||)`; returns `(G, distances)`.
pub fn gate_matrix(a: &[f64], b: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = a.len() / dim.max(1);
    let m = b.len() / dim.max(1);
    let mut g = vec![0.0; n * m];
    let mut dist = vec![0.0; n * m];
    for i in 0..n {
        let ai = &a[i * dim..(i + 1) * dim];
        for j in 0..m {
            let bj = &b[j * dim..(j + 1) * dim];
            let d = ai
                .iter()
                .zip(bj)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dist[i * m + j] = d;
            g[i * m + j] = gate_of_distance(d);
        }
    }
    (g, dist)
}

/// Backward of [`gate_matrix`]. At zero distance the subgradient 0 is used.
pub fn gate_matrix_backward(
    a: &[f64],
    b: &[f64],
    dim: usize,
    g: &[f64],
    dist: &[f64],
    dg: &[f64],
    da: &mut [f64],
    db: &mut [f64],
) {
    let n = a.len() / dim.max(1);
    let m = b.len() / dim.max(1);
    for i in 0..n {
        for j in 0..m {
            let idx = i * m + j;
            let d = dist[idx];
            if dg[idx] == 0.0 || d == 0.0 {
                continue;
            }
            // dG/dd = -2 s (1 - s) with s = G / 2.
            let gij = g[idx];
            let coef = dg[idx] * -gij * (1.0 - 0.5 * gij) / d;
            for k in 0..dim {
                let diff = a[i * dim + k] - b[j * dim + k];
                da[i * dim + k] += coef * diff;
                db[j * dim + k] -= coef * diff;
            }
        }
    }
}

/// Padding before/after for a "same" convolution with kernel size `k`.
/// Odd kernels pad symmetrically; even kernels put the extra row/column after.
pub fn same_padding(k: usize) -> (usize, usize) {
    let before = (k - 1) / 2;
    (before, k - 1 - before)
}

/// "Same" 2-D convolution, stride 1, no bias.
///
/// `input` is `[channels][rows][cols]`, `kernel` is `[filters][channels][k][k]`.
/// Returns `[filters][rows][cols]`.
pub fn conv2d_same(
    input: &[f64],
    channels: usize,
    rows: usize,
    cols: usize,
    kernel: &[f64],
    filters: usize,
    k: usize,
) -> Vec<f64> {
    let (pad, _) = same_padding(k);
    let plane = rows * cols;
    let mut out = vec![0.0; filters * plane];
    for f in 0..filters {
        let o = &mut out[f * plane..(f + 1) * plane];
        for ch in 0..channels {
            let x = &input[ch * plane..(ch + 1) * plane];
            for a in 0..k {
                for b in 0..k {
                    let w = kernel[((f * channels + ch) * k + a) * k + b];
                    if w == 0.0 {
                        continue;
                    }
                    // Output (r, c) reads input (r + a - pad, c + b - pad).
                    let dr = a as isize - pad as isize;
                    let dc = b as isize - pad as isize;
                    let r0 = (-dr).max(0) as usize;
                    let r1 = (rows as isize - dr).min(rows as isize).max(0) as usize;
                    let c0 = (-dc).max(0) as usize;
                    let c1 = (cols as isize - dc).min(cols as isize).max(0) as usize;
                    for r in r0..r1 {
                        let ir = (r as isize + dr) as usize;
                        let orow = &mut o[r * cols..(r + 1) * cols];
                        let irow = &x[ir * cols..(ir + 1) * cols];
                        for c in c0..c1 {
                            orow[c] += w * irow[(c as isize + dc) as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv2d_same`] for a sparse output gradient given as
/// `(filter, row, col, grad)` entries.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_same_backward_sparse(
    input: &[f64],
    channels: usize,
    rows: usize,
    cols: usize,
    kernel: &[f64],
    k: usize,
    dout: &[(usize, usize, usize, f64)],
    dkernel: &mut [f64],
    dinput: &mut [f64],
) {
    let (pad, _) = same_padding(k);
    let plane = rows * cols;
    for &(f, r, c, g) in dout {
        if g == 0.0 {
            continue;
        }
        for ch in 0..channels {
            for a in 0..k {
                let ir = r as isize + a as isize - pad as isize;
                if ir < 0 || ir >= rows as isize {
                    continue;
                }
                for b in 0..k {
                    let ic = c as isize + b as isize - pad as isize;
                    if ic < 0 || ic >= cols as isize {
                        continue;
                    }
                    let xi = ch * plane + ir as usize * cols + ic as usize;
                    let wi = ((f * channels + ch) * k + a) * k + b;
                    dkernel[wi] += g * input[xi];
                    dinput[xi] += g * kernel[wi];
                }
            }
        }
    }
}

/// Indices of the `k` largest values, in descending value order (ties by
/// ascending index). With fewer than `k` values the index of the minimum is
/// repeated to fill the output.
pub fn kmax_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let cmp = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    if let Some(&last) = idx.last() {
        while idx.len() < k {
            idx.push(last);
        }
    }
    idx
}

/// The `k` largest values in descending order, padded with the minimum.
pub fn kmax(values: &[f64], k: usize) -> Vec<f64> {
    kmax_indices(values, k).into_iter().map(|i| values[i]).collect()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `W x` for `w` of shape `[out, x.len()]`.
pub fn matvec(w: &[f64], x: &[f64]) -> Vec<f64> {
    let inp = x.len();
    w.chunks(inp.max(1))
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project(&[0.0, 0.0], &[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let g = project(&[0.5], &[2.0], &[0.0]).unwrap();
        assert!((g[0] - 0.761_594_155_955_764_9).abs() < 1e-12);
        assert!(project(&[1.0, 2.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let a = [1.0, 2.0, 3.0];
        let s = cosine_matrix(&a, &a, 3);
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert_eq!(cosine_matrix(&[1.0, 0.0], &[0.0, 2.0], 2), vec![0.0]);
        let s = cosine_matrix(&a, &[-1.0, -2.0, -3.0], 3);
        assert!((s[0] + 1.0).abs() < 1e-15);
        assert_eq!(cosine_matrix(&[0.0, 0.0], &[1.0, 1.0], 2), vec![0.0]);
    }

    #[test]
    fn gate_examples() {
        let (g, _) = gate_matrix(&[0.3, -0.2], &[0.3, -0.2], 2);
        assert_eq!(g[0], 1.0);
        let d = 3.0f64.ln();
        let (g, _) = gate_matrix(&[0.0], &[d], 1);
        assert!((g[0] - 0.5).abs() < 1e-15);
        let (g, _) = gate_matrix(&[0.0], &[50.0], 1);
        assert!(g[0] > 0.0 && g[0] < 1e-20);
    }

    #[test]
    fn kmax_examples() {
        assert_eq!(kmax(&[3.0, 1.0, 2.0, 5.0], 2), vec![5.0, 3.0]);
        assert_eq!(kmax(&[2.0, 7.0], 4), vec![7.0, 2.0, 2.0, 2.0]);
        assert_eq!(kmax_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(kmax(&[0.0; 6], 3), vec![0.0; 3]);
    }

    /// Direct definition of a zero-padded convolution, one output cell at a time.
    fn conv_oracle(input: &[f64], ch: usize, rows: usize, cols: usize, kernel: &[f64], f: usize, k: usize) -> Vec<f64> {
        let (pad, _) = same_padding(k);
        let at = |c: usize, r: isize, q: isize| -> f64 {
            if r < 0 || q < 0 || r >= rows as isize || q >= cols as isize {
                0.0
            } else {
                input[c * rows * cols + r as usize * cols + q as usize]
            }
        };
        let mut out = vec![0.0; f * rows * cols];
        for fi in 0..f {
            for r in 0..rows {
                for c in 0..cols {
                    let mut s = 0.0;
                    for ci in 0..ch {
                        for a in 0..k {
                            for b in 0..k {
                                s += kernel[((fi * ch + ci) * k + a) * k + b]
                                    * at(ci, r as isize + a as isize - pad as isize, c as isize + b as isize - pad as isize);
                            }
                        }
                    }
                    out[(fi * rows + r) * cols + c] = s;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_conv_then_kmax() {
        // 2x2 input with 4 channels, 1x1 kernel picking channel 0 plus half of channel 3.
        let input = [
            1.0, 4.0, -2.0, 3.0, // ch0
            9.0, 9.0, 9.0, 9.0, // ch1
            0.5, 0.5, 0.5, 0.5, // ch2
            2.0, -2.0, 6.0, 0.0, // ch3
        ];
        let kernel = [1.0, 0.0, 0.0, 0.5];
        let out = conv2d_same(&input, 4, 2, 2, &kernel, 1, 1);
        assert_eq!(out, vec![2.0, 3.0, 1.0, 3.0]);
        assert_eq!(out, conv_oracle(&input, 4, 2, 2, &kernel, 1, 1));
        let mut all = out.clone();
        all.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(kmax(&out, 2), all[..2].to_vec());
    }

    proptest! {
        #[test]
        fn conv_matches_oracle(rows in 1usize..6, cols in 1usize..6, k in 1usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let input: Vec<f64> = (0..4 * rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let kernel: Vec<f64> = (0..2 * 4 * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = conv2d_same(&input, 4, rows, cols, &kernel, 2, k);
            let want = conv_oracle(&input, 4, rows, cols, &kernel, 2, k);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12);
            }
        }

        #[test]
        fn gate_in_unit_interval(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
            let (g, _) = gate_matrix(&a, &b, 4);
            for v in g {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
        }

        #[test]
        fn kmax_is_sorted_prefix(v in prop::collection::vec(-10.0f64..10.0, 1..40), k in 1usize..50) {
            let got = kmax(&v, k);
            prop_assert_eq!(got.len(), k);
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            for (i, g) in got.iter().enumerate() {
                let want = if i < sorted.len() { sorted[i] } else { *sorted.last().unwrap() };
                prop_assert_eq!(*g, want);
            }
        }
    }
}
