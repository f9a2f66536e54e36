//! Equivariant discrete Fourier features over input trajectories.
//!
//! Positions are mean-centered per frame, transformed with one shared
//! Fourier basis across the three spatial dimensions, and reduced to two
//! E(3)-invariant quantities: a per-frequency cross-correlation tensor
//! between node pairs (used as an edge feature) and per-node frequency
//! amplitudes (used as a node feature). Rotating or translating the input
//! rotates the complex spectra and leaves both invariants unchanged.
//!
//! Everything here runs on the autodiff tape: gradients flow through the
//! spectra into positions and the spectral-filter parameters.
//!
//! Layout conventions (row-major throughout):
//! - centered positions and trajectories: row `t*N + i`;
//! - spectra `f`: row `i*T + k` over columns x,y,z;
//! - cross-correlation: row `i*N + j`, one column per frequency `k`.

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Hidden width of the spectral-filter perceptron.
pub const FILTER_HIDDEN: usize = 16;

/// Invariant spectral summary of one trajectory, in plain tensors.
#[derive(Clone, Debug)]
pub struct SpectralFeatures {
    /// Real part of the spectra, `[N, T, 3]`.
    pub f_re: Tensor,
    /// Imaginary part of the spectra, `[N, T, 3]`.
    pub f_im: Tensor,
    /// Filter-weighted cross-correlation, `[N, N, T]`, symmetric in the
    /// first two indices.
    pub a: Tensor,
    /// Filter-weighted amplitudes, `[N, T]`.
    pub c_amp: Tensor,
}

/// On-tape handles to the spectral filter parameters: a two-layer
/// perceptron from node features to one weight per frequency, shared
/// across nodes and independent of positions.
#[derive(Clone, Copy)]
pub struct FilterParams {
    pub w1: Value,
    pub b1: Value,
    pub w2: Value,
    pub b2: Value,
}

/// Subtract the per-frame node mean: x_i(t) - x̄(t).
///
/// `x` is `[T*N, d]` with row `t*N + i`; the output has per-frame mean
/// zero in every column.
pub fn center_positions(tape: &Tape, x: Value, t_frames: usize, n: usize) -> Result<Value> {
    let shape = tape.shape_of(x);
    if shape.len() != 2 || shape[0] != t_frames * n {
        return Err(Error::ShapeMismatch {
            op: "center_positions",
            lhs: shape,
            rhs: vec![t_frames * n],
        });
    }
    // Block-diagonal (I - J/N) applied frame by frame as one matmul.
    let rows = t_frames * n;
    let mut cm = vec![0.0; rows * rows];
    let inv = 1.0 / n as f64;
    for t in 0..t_frames {
        for i in 0..n {
            let r = t * n + i;
            for j in 0..n {
                let c = t * n + j;
                cm[r * rows + c] = if i == j { 1.0 - inv } else { -inv };
            }
        }
    }
    let center = tape.constant(Tensor::new(vec![rows, rows], cm)?);
    tape.matmul(center, x)
}

/// Discrete Fourier transform of a centered trajectory with one shared
/// basis over the spatial dimensions.
///
/// Input `[T*N, 3]` (row `t*N + i`), outputs `[N*T, 3]` (row `i*T + k`):
/// `f_re[i,k] = Σ_t cos(2πkt/T)·x_i(t)`, `f_im[i,k] = -Σ_t sin(2πkt/T)·x_i(t)`.
pub fn edft(tape: &Tape, x_centered: Value, t_frames: usize, n: usize) -> Result<(Value, Value)> {
    let rows = t_frames * n;
    let out_rows = n * t_frames;
    let mut basis_re = vec![0.0; out_rows * rows];
    let mut basis_im = vec![0.0; out_rows * rows];
    for i in 0..n {
        for k in 0..t_frames {
            let r = i * t_frames + k;
            for t in 0..t_frames {
                let angle = 2.0 * std::f64::consts::PI * (k * t) as f64 / t_frames as f64;
                basis_re[r * rows + t * n + i] = angle.cos();
                basis_im[r * rows + t * n + i] = -angle.sin();
            }
        }
    }
    let bre = tape.constant(Tensor::new(vec![out_rows, rows], basis_re)?);
    let bim = tape.constant(Tensor::new(vec![out_rows, rows], basis_im)?);
    Ok((tape.matmul(bre, x_centered)?, tape.matmul(bim, x_centered)?))
}

/// Per-node, per-frequency filter weights W[i,k] = w_k(h_i) from the
/// initial node features. Depends on features only, never on positions.
pub fn spectral_filter_apply(tape: &Tape, filter: &FilterParams, feats: Value) -> Result<Value> {
    let hidden = tape.linear(feats, filter.w1, filter.b1)?;
    let act = tape.silu(hidden)?;
    tape.linear(act, filter.w2, filter.b2)
}

/// Filter weights fixed to 1 (the `no_wk` ablation).
pub fn unit_filter(tape: &Tape, n: usize, t_frames: usize) -> Value {
    tape.constant(Tensor::filled(vec![n, t_frames], 1.0))
}

/// Cross-correlation A[i,j,k] = W[i,k]·W[j,k]·|⟨f_i(k), f_j(k)⟩| with the
/// complex inner product Σ_d conj(f_i,d)·f_j,d taken per frequency.
///
/// Returns `[N*N, T]` with row `i*N + j`; symmetric in (i, j) because the
/// modulus absorbs conjugation.
pub fn cross_correlation(
    tape: &Tape,
    f_re: Value,
    f_im: Value,
    weights: Value,
    t_frames: usize,
    n: usize,
) -> Result<Value> {
    let mut per_k = Vec::with_capacity(t_frames);
    for k in 0..t_frames {
        let idx: Vec<usize> = (0..n).map(|i| i * t_frames + k).collect();
        let re_k = tape.gather_rows(f_re, &idx)?; // [N,3]
        let im_k = tape.gather_rows(f_im, &idx)?;
        let re_t = tape.transpose(re_k)?;
        let im_t = tape.transpose(im_k)?;
        // ⟨f_i, f_j⟩ = (Re_i·Re_j + Im_i·Im_j) + i'(Re_i·Im_j - Im_i·Re_j)
        let re_part = tape.add(tape.matmul(re_k, re_t)?, tape.matmul(im_k, im_t)?)?;
        let im_part = tape.sub(tape.matmul(re_k, im_t)?, tape.matmul(im_k, re_t)?)?;
        let modulus = tape.sqrt(tape.add(
            tape.mul(re_part, re_part)?,
            tape.mul(im_part, im_part)?,
        )?)?;
        let wk = tape.slice_cols(weights, k, 1)?; // [N,1]
        let outer = tape.matmul(wk, tape.transpose(wk)?)?; // [N,N]
        let a_k = tape.mul(outer, modulus)?;
        per_k.push(tape.reshape(a_k, vec![n * n, 1])?);
    }
    tape.concat_cols(&per_k)
}

/// Amplitudes c[i,k] = W[i,k]·‖f_i(k)‖² with ‖f‖² = Σ_d (re² + im²).
/// Returns `[N, T]`.
pub fn amplitudes(
    tape: &Tape,
    f_re: Value,
    f_im: Value,
    weights: Value,
    t_frames: usize,
    n: usize,
) -> Result<Value> {
    let sq_re = tape.sq_norm_last(f_re)?; // [N*T, 1]
    let sq_im = tape.sq_norm_last(f_im)?;
    let total = tape.add(sq_re, sq_im)?;
    let grid = tape.reshape(total, vec![n, t_frames])?;
    tape.mul(weights, grid)
}

/// Whole spectral pipeline on plain tensors (test and CLI convenience).
///
/// `positions` is `[T, N, 3]`; `weights` is `[N, T]` or `None` for the
/// unit filter.
pub fn spectral_features(positions: &Tensor, weights: Option<&Tensor>) -> Result<SpectralFeatures> {
    let shape = positions.shape().to_vec();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::ShapeMismatch {
            op: "spectral_features",
            lhs: shape,
            rhs: vec![0, 0, 3],
        });
    }
    let (t_frames, n) = (shape[0], shape[1]);
    let tape = Tape::new();
    let x = tape.constant(positions.reshaped(vec![t_frames * n, 3])?);
    let w = match weights {
        Some(w) => {
            if w.shape() != [n, t_frames] {
                return Err(Error::ShapeMismatch {
                    op: "spectral_features",
                    lhs: w.shape().to_vec(),
                    rhs: vec![n, t_frames],
                });
            }
            tape.constant(w.clone())
        }
        None => unit_filter(&tape, n, t_frames),
    };
    let centered = center_positions(&tape, x, t_frames, n)?;
    let (f_re, f_im) = edft(&tape, centered, t_frames, n)?;
    let a = cross_correlation(&tape, f_re, f_im, w, t_frames, n)?;
    let c_amp = amplitudes(&tape, f_re, f_im, w, t_frames, n)?;
    Ok(SpectralFeatures {
        f_re: tape.value(f_re).reshaped(vec![n, t_frames, 3])?,
        f_im: tape.value(f_im).reshaped(vec![n, t_frames, 3])?,
        a: tape.value(a).reshaped(vec![n, n, t_frames])?,
        c_amp: tape.value(c_amp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(t: usize, n: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![t, n, 3], data).unwrap()
    }

    #[test]
    fn single_node_centers_to_zero() {
        let x = traj(3, 1, vec![1.0, 2.0, 3.0, -4.0, 0.5, 2.0, 7.0, 7.0, 7.0]);
        let feats = spectral_features(&x, None).unwrap();
        assert_eq!(feats.f_re.max_abs(), 0.0);
        assert_eq!(feats.f_im.max_abs(), 0.0);
        assert_eq!(feats.a.max_abs(), 0.0);
        assert_eq!(feats.c_amp.max_abs(), 0.0);
    }

    #[test]
    fn centering_examples() {
        let tape = Tape::new();
        // Frame already zero-mean stays unchanged.
        let x = tape.constant(
            Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap(),
        );
        let c = center_positions(&tape, x, 1, 2).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);

        // [(2,0,0),(0,0,0)] -> [(1,0,0),(-1,0,0)]
        let y = tape.constant(
            Tensor::new(vec![2, 3], vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
        );
        let cy = center_positions(&tape, y, 1, 2).unwrap();
        assert_eq!(tape.value(cy).data(), &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn edft_two_frame_hand_example() {
        // Centered x1 = (1,0,0) then (2,0,0): f1(0) = (3,0,0), f1(1) = (-1,0,0).
        let tape = Tape::new();
        let x = tape.constant(
            Tensor::new(
                vec![4, 3],
                vec![
                    1.0, 0.0, 0.0, // t=0, node 0
                    -1.0, 0.0, 0.0, // t=0, node 1
                    2.0, 0.0, 0.0, // t=1, node 0
                    -2.0, 0.0, 0.0, // t=1, node 1
                ],
            )
            .unwrap(),
        );
        let (f_re, f_im) = edft(&tape, x, 2, 2).unwrap();
        let re = tape.value(f_re);
        // Node 0 rows: k=0 then k=1.
        assert!((re.row(0)[0] - 3.0).abs() < 1e-12);
        assert!((re.row(1)[0] - (-1.0)).abs() < 1e-12);
        assert!(tape.value(f_im).max_abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_spectra() {
        let x = traj(4, 3, vec![0.0; 36]);
        let feats = spectral_features(&x, None).unwrap();
        assert_eq!(feats.f_re.max_abs(), 0.0);
        assert_eq!(feats.a.max_abs(), 0.0);
        assert_eq!(feats.c_amp.max_abs(), 0.0);
    }

    #[test]
    fn cross_correlation_hand_example() {
        // f1(1) = (-1,0,0), f2(1) = (1,0,0), w = 1: inner product -1, modulus 1.
        let tape = Tape::new();
        let f_re = tape.constant(
            Tensor::new(
                vec![4, 3],
                vec![
                    0.0, 0.0, 0.0, // node 0, k=0
                    -1.0, 0.0, 0.0, // node 0, k=1
                    0.0, 0.0, 0.0, // node 1, k=0
                    1.0, 0.0, 0.0, // node 1, k=1
                ],
            )
            .unwrap(),
        );
        let f_im = tape.constant(Tensor::zeros(vec![4, 3]));
        let w = unit_filter(&tape, 2, 2);
        let a = cross_correlation(&tape, f_re, f_im, w, 2, 2).unwrap();
        let a = tape.value(a);
        // Row i*N+j = 0*2+1 = 1, column k=1.
        assert!((a.row(1)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_hand_example() {
        // f1(1) = (-1,0,0) with w = 2 gives c1(1) = 2.
        let tape = Tape::new();
        let f_re = tape.constant(
            Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap(),
        );
        let f_im = tape.constant(Tensor::zeros(vec![2, 3]));
        let w = tape.constant(Tensor::new(vec![1, 2], vec![2.0, 2.0]).unwrap());
        let c = amplitudes(&tape, f_re, f_im, w, 2, 1).unwrap();
        assert!((tape.value(c).row(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn filter_rows_depend_on_features_only() {
        let tape = Tape::new();
        let n = 3;
        let fp = FilterParams {
            w1: tape.constant(Tensor::filled(vec![2, FILTER_HIDDEN], 0.3)),
            b1: tape.constant(Tensor::filled(vec![FILTER_HIDDEN], 0.1)),
            w2: tape.constant(Tensor::filled(vec![FILTER_HIDDEN, 4], -0.2)),
            b2: tape.constant(Tensor::filled(vec![4], 0.05)),
        };
        // Identical features -> identical rows.
        let feats =
            tape.constant(Tensor::new(vec![n, 2], vec![[0.5, 1.0]; 3].concat()).unwrap());
        let w = spectral_filter_apply(&tape, &fp, feats).unwrap();
        let w = tape.value(w);
        assert_eq!(w.row(0), w.row(1));
        assert_eq!(w.row(1), w.row(2));
    }

    #[test]
    fn zero_filter_parameters_give_zero_weights() {
        let tape = Tape::new();
        let fp = FilterParams {
            w1: tape.constant(Tensor::zeros(vec![1, FILTER_HIDDEN])),
            b1: tape.constant(Tensor::zeros(vec![FILTER_HIDDEN])),
            w2: tape.constant(Tensor::zeros(vec![FILTER_HIDDEN, 5])),
            b2: tape.constant(Tensor::zeros(vec![5])),
        };
        let feats = tape.constant(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let w = spectral_filter_apply(&tape, &fp, feats).unwrap();
        assert_eq!(tape.value(w).max_abs(), 0.0);
    }
}
