//! Residual quantization against a frozen codebook.
//!
//! Step `k` picks the code nearest to the remainder `h_{k-1}` and subtracts
//! it: `z_k = nearest(h_{k-1})`, `h_k = h_{k-1} − z_k`, starting from
//! `h_0 = h`. Every selection therefore depends on all earlier ones, and
//! `h_0 = Σ z_k + h_K` holds by construction.

use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::codebook::{Codebook, CodebookError};

#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("codes per view must be at least 1")]
    ZeroCodes,
    #[error("{what}: {left} vs {right} entries")]
    Length { what: &'static str, left: usize, right: usize },
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// The `K` codes chosen for one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeSequence {
    pub codes: Vec<usize>,
    /// `quantized[k]` is the embedding of `codes[k]`.
    pub quantized: Vec<Vec<f64>>,
    /// `residuals[k] = h_{k+1} − h_k`, i.e. `−quantized[k]`.
    pub residuals: Vec<Vec<f64>>,
    /// What is left after the last step, `h_K`.
    pub final_residual: Vec<f64>,
    /// Set when a zero remainder under the cosine metric stopped the search
    /// and the remaining slots repeat the last chosen code.
    pub padded: bool,
}

impl CodeSequence {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// `Σ_k z_k`.
    pub fn sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.final_residual.len()];
        for z in &self.quantized {
            for (a, b) in s.iter_mut().zip(z) {
                *a += b;
            }
        }
        s
    }

    /// `Σ_k z_k + h_K`, which reproduces the quantized input.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut s = self.sum();
        for (a, b) in s.iter_mut().zip(&self.final_residual) {
            *a += b;
        }
        s
    }

    /// Remainders `h_0, …, h_{K−1}`: the vector each step quantized.
    pub fn step_inputs(&self) -> Vec<Vec<f64>> {
        let mut h = self.reconstruct();
        let mut out = Vec::with_capacity(self.len());
        for z in &self.quantized {
            out.push(h.clone());
            for (a, b) in h.iter_mut().zip(z) {
                *a -= b;
            }
        }
        out
    }

    /// Running sums `Σ_{j≤k} z_j` for `k = 1..K`.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.final_residual.len()];
        self.quantized
            .iter()
            .map(|z| {
                for (a, b) in acc.iter_mut().zip(z) {
                    *a += b;
                }
                acc.clone()
            })
            .collect()
    }
}

/// Quantizes `h` into `k` codes.
///
/// Under the cosine metric a remainder of exactly zero has no nearest code.
/// The search then stops and the remaining slots repeat the last chosen code
/// (the first selectable code if it happens at step 1), with
/// [`CodeSequence::padded`] set; the subtraction still runs for padded slots
/// so the telescoping identity holds.
pub fn residual_quantize(cb: &Codebook, h: &[f64], k: usize) -> Result<CodeSequence, QuantizeError> {
    if k == 0 {
        return Err(QuantizeError::ZeroCodes);
    }
    let mut rem = h.to_vec();
    let mut codes = Vec::with_capacity(k);
    let mut quantized = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut padded = false;
    for _ in 0..k {
        let c = if padded {
            *codes.last().expect("padding follows a chosen code")
        } else {
            match cb.nearest_index(&rem) {
                Ok(c) => c,
                Err(CodebookError::ZeroQuery) => {
                    padded = true;
                    match codes.last() {
                        Some(&c) => c,
                        None => cb.active_codes().next().ok_or(CodebookError::NoCodes)?,
                    }
                }
                Err(e) => return Err(e.into()),
            }
        };
        let z = cb.embedding(c).to_vec();
        for (r, zz) in rem.iter_mut().zip(&z) {
            *r -= zz;
        }
        residuals.push(z.iter().map(|v| -v).collect());
        codes.push(c);
        quantized.push(z);
    }
    Ok(CodeSequence {
        codes,
        quantized,
        residuals,
        final_residual: rem,
        padded,
    })
}

/// [`residual_quantize`] applied to every row of a row-major `n × dim`
/// block, searching all rows of a step together.
pub fn residual_quantize_rows(cb: &Codebook, rows: &[f64], dim: usize, k: usize) -> Result<Vec<CodeSequence>, QuantizeError> {
    if k == 0 {
        return Err(QuantizeError::ZeroCodes);
    }
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(QuantizeError::Length {
            what: "rows",
            left: rows.len(),
            right: dim,
        });
    }
    if dim != cb.dim() {
        return Err(CodebookError::Dim {
            expected: cb.dim(),
            found: dim,
        }
        .into());
    }
    let n = rows.len() / dim;
    let mut rem = rows.to_vec();
    let mut seqs: Vec<CodeSequence> = (0..n)
        .map(|_| CodeSequence {
            codes: Vec::with_capacity(k),
            quantized: Vec::with_capacity(k),
            residuals: Vec::with_capacity(k),
            final_residual: Vec::new(),
            padded: false,
        })
        .collect();
    for _ in 0..k {
        // Only rows still searching take part; padded rows repeat.
        let searching: Vec<usize> = (0..n).filter(|&r| !seqs[r].padded).collect();
        let mut block = Vec::with_capacity(searching.len() * dim);
        for &r in &searching {
            block.extend_from_slice(&rem[r * dim..(r + 1) * dim]);
        }
        let found = if block.is_empty() { Vec::new() } else { cb.nearest_batch(&block)? };
        let mut picks: Vec<Option<usize>> = vec![None; n];
        for (&r, f) in searching.iter().zip(found) {
            picks[r] = f;
        }
        for (r, seq) in seqs.iter_mut().enumerate() {
            let c = match picks[r] {
                Some(c) if !seq.padded => c,
                _ => {
                    seq.padded = true;
                    match seq.codes.last() {
                        Some(&c) => c,
                        None => cb.active_codes().next().ok_or(CodebookError::NoCodes)?,
                    }
                }
            };
            let z = cb.embedding(c).to_vec();
            for (x, zz) in rem[r * dim..(r + 1) * dim].iter_mut().zip(&z) {
                *x -= zz;
            }
            seq.residuals.push(z.iter().map(|v| -v).collect());
            seq.codes.push(c);
            seq.quantized.push(z);
        }
    }
    for (r, seq) in seqs.iter_mut().enumerate() {
        seq.final_residual = rem[r * dim..(r + 1) * dim].to_vec();
    }
    Ok(seqs)
}

/// Frozen quantization outcome for one vector, used to replay the
/// straight-through path as a smooth function of its input.
#[derive(Clone, Debug, PartialEq)]
pub struct Pin {
    /// `Σ z − h` at the time the codes were chosen.
    pub offset: Vec<f64>,
    /// `Σ_{j≤k} z_j` for each step.
    pub anchors: Vec<Vec<f64>>,
}

impl Pin {
    pub fn from_sequence(h: &[f64], seq: &CodeSequence) -> Self {
        let offset = seq.sum().iter().zip(h).map(|(s, x)| s - x).collect();
        Pin {
            offset,
            anchors: seq.cumulative(),
        }
    }
}

/// Result of quantizing every row of a tape value.
pub struct Quantized {
    /// `scale · Σ_k z_k` per row, with the straight-through gradient.
    pub value: Var,
    /// `rows·K × dim` running code sums, the commitment targets.
    pub anchors: Tensor,
    pub sequences: Vec<CodeSequence>,
}

/// Quantizes each row of `h` into `k` codes. The forward value is
/// `scale · Σ z`; backward hands the upstream gradient, times `scale`, to
/// `h`. Code embeddings are constants and never receive a gradient.
pub fn quantize_with_ste(tape: &mut Tape, cb: &Codebook, h: Var, k: usize, scale: f64) -> Result<Quantized, QuantizeError> {
    let hv = tape.value(h).clone();
    let dim = hv.cols();
    let mut forward = Tensor::zeros(hv.rows(), dim);
    let mut anchors = Tensor::zeros(hv.rows() * k, dim);
    let sequences = residual_quantize_rows(cb, hv.data(), dim, k)?;
    for (r, seq) in sequences.iter().enumerate() {
        for (o, s) in forward.row_mut(r).iter_mut().zip(seq.sum()) {
            *o = scale * s;
        }
        for (j, a) in seq.cumulative().into_iter().enumerate() {
            anchors.row_mut(r * k + j).copy_from_slice(&a);
        }
    }
    let value = tape.straight_through(h, forward, scale)?;
    Ok(Quantized {
        value,
        anchors,
        sequences,
    })
}

/// Replays a quantization with codes held fixed: the forward value is
/// `scale · (h + offset)`, which equals `scale · Σ z` at the pinned input
/// and is differentiable with exactly the straight-through gradient.
pub fn quantize_pinned(tape: &mut Tape, h: Var, pins: &[Pin], scale: f64) -> Result<(Var, Tensor), QuantizeError> {
    let hv = tape.value(h).clone();
    if pins.len() != hv.rows() {
        return Err(QuantizeError::Length {
            what: "pins per row",
            left: pins.len(),
            right: hv.rows(),
        });
    }
    let k = pins.first().map_or(0, |p| p.anchors.len());
    let dim = hv.cols();
    let mut forward = Tensor::zeros(hv.rows(), dim);
    let mut anchors = Tensor::zeros(hv.rows() * k, dim);
    for (r, pin) in pins.iter().enumerate() {
        for ((o, x), d) in forward.row_mut(r).iter_mut().zip(hv.row(r)).zip(&pin.offset) {
            *o = scale * (x + d);
        }
        for (j, a) in pin.anchors.iter().enumerate() {
            anchors.row_mut(r * k + j).copy_from_slice(a);
        }
    }
    Ok((tape.straight_through(h, forward, scale)?, anchors))
}

/// `β · mean_k ‖h_{k−1} − z_k‖²` for one vector.
pub fn commitment_loss(h_steps: &[Vec<f64>], z_steps: &[Vec<f64>], beta: f64) -> Result<f64, QuantizeError> {
    if h_steps.len() != z_steps.len() {
        return Err(QuantizeError::Length {
            what: "commitment steps",
            left: h_steps.len(),
            right: z_steps.len(),
        });
    }
    if h_steps.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = h_steps
        .iter()
        .zip(z_steps)
        .map(|(h, z)| h.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(beta * total / h_steps.len() as f64)
}

/// Commitment term on the tape: `β` times the mean over rows and steps of
/// `‖h_r − Σ_{j≤k} z_j‖²`, which is `‖h_{k−1} − z_k‖²` per step.
pub fn commitment_on_tape(tape: &mut Tape, h: Var, anchors: Tensor, k: usize, beta: f64) -> Result<Var, QuantizeError> {
    let d = tape.group_sq_dist(h, anchors, k)?;
    Ok(tape.scale(d, beta))
}

/// Number of distinct code tuples a `layers`-layer encoder with `k` codes
/// per layer can emit from a codebook of `codebook_size` entries:
/// `|C|^(layers·k)`. `None` on overflow.
pub fn representation_space(codebook_size: u128, layers: u32, k: u32) -> Option<u128> {
    codebook_size.checked_pow(layers.checked_mul(k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Metric;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axes(metric: Metric) -> Codebook {
        Codebook::new(vec![0, 1], vec!["x".into(), "y".into()], 2, vec![1.0, 0.0, 0.0, 1.0], metric).unwrap()
    }

    fn random_codebook(rng: &mut ChaCha8Rng, n: usize, dim: usize, metric: Metric, with_zero: bool) -> Codebook {
        let mut emb: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut count = n;
        if with_zero {
            emb.extend(std::iter::repeat_n(0.0, dim));
            count += 1;
        }
        let ids = (0..count as u32).collect();
        let toks = (0..count).map(|i| format!("t{i}")).collect();
        Codebook::new(ids, toks, dim, emb, metric).unwrap()
    }

    #[test]
    fn exact_hit_leaves_zero_residual() {
        let cb = axes(Metric::Euclidean);
        let seq = residual_quantize(&cb, &[0.0, 1.0], 1).unwrap();
        assert_eq!(seq.codes, vec![1]);
        assert_eq!(seq.final_residual, vec![0.0, 0.0]);
    }

    #[test]
    fn two_step_euclidean_tie_goes_low() {
        let cb = axes(Metric::Euclidean);
        let seq = residual_quantize(&cb, &[2.0, 1.0], 2).unwrap();
        assert_eq!(seq.codes, vec![0, 0]);
        assert_eq!(seq.final_residual, vec![0.0, 1.0]);
        assert_eq!(seq.residuals[1], vec![-1.0, -0.0]);
        assert!(!seq.padded);
    }

    #[test]
    fn zero_remainder_under_cosine_pads() {
        let cb = axes(Metric::Cosine);
        let seq = residual_quantize(&cb, &[1.0, 0.0], 3).unwrap();
        assert_eq!(seq.codes, vec![0, 0, 0]);
        assert!(seq.padded);
        assert_eq!(seq.reconstruct(), vec![1.0, 0.0]);

        let zero = residual_quantize(&cb, &[0.0, 0.0], 2).unwrap();
        assert!(zero.padded);
        assert_eq!(zero.codes, vec![0, 0]);
    }

    #[test]
    fn zero_codes_rejected() {
        let cb = axes(Metric::Cosine);
        assert!(matches!(residual_quantize(&cb, &[1.0, 0.0], 0), Err(QuantizeError::ZeroCodes)));
    }

    #[test]
    fn ste_gradient_is_twice_the_code_sum() {
        let cb = axes(Metric::Euclidean);
        let mut tape = Tape::new();
        let h = tape.param(Tensor::row_vector(vec![2.2, 0.9]));
        let q = quantize_with_ste(&mut tape, &cb, h, 2, 1.0).unwrap();
        let loss = tape.sum_squares(q.value);
        tape.backward(loss).unwrap();
        let sum = q.sequences[0].sum();
        let expect: Vec<f64> = sum.iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(h).unwrap().data(), &expect[..]);
    }

    #[test]
    fn pinned_path_passes_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cb = random_codebook(&mut rng, 16, 5, Metric::Cosine, false);
        let h0: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0 = Tensor::new(2, 5, h0).unwrap();
        let pins: Vec<Pin> = (0..2)
            .map(|r| Pin::from_sequence(h0.row(r), &residual_quantize(&cb, h0.row(r), 3).unwrap()))
            .collect();
        let err = crate::autodiff::finite_diff_check(
            |tape, p| {
                let (q, anchors) = quantize_pinned(tape, p[0], &pins, 1.0 / 3.0)?;
                let act = tape.tanh(q);
                let s = tape.sum_squares(act);
                let c = commitment_on_tape(tape, p[0], anchors, 3, 0.25)?;
                Ok::<_, QuantizeError>(tape.weighted_sum(vec![s, c], vec![1.0, 1.0])?)
            },
            &[h0],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn commitment_values() {
        assert_eq!(commitment_loss(&[vec![1.0, 0.0]], &[vec![1.0, 0.0]], 0.25).unwrap(), 0.0);
        assert!((commitment_loss(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]], 0.25).unwrap() - 0.5).abs() < 1e-15);
        let a = commitment_loss(&[vec![3.0, 1.0]], &[vec![0.5, 2.0]], 0.3).unwrap();
        let b = commitment_loss(&[vec![3.0, 1.0]], &[vec![0.5, 2.0]], 0.6).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(commitment_loss(&[vec![1.0]], &[], 1.0).is_err());
    }

    #[test]
    fn tape_commitment_matches_scalar_form() {
        let cb = axes(Metric::Euclidean);
        let hv = vec![2.3, 0.7];
        let seq = residual_quantize(&cb, &hv, 3).unwrap();
        let scalar = commitment_loss(&seq.step_inputs(), &seq.quantized, 0.25).unwrap();
        let mut tape = Tape::new();
        let h = tape.param(Tensor::row_vector(hv.clone()));
        let q = quantize_with_ste(&mut tape, &cb, h, 3, 1.0).unwrap();
        let c = commitment_on_tape(&mut tape, h, q.anchors, 3, 0.25).unwrap();
        assert!((tape.value(c).item() - scalar).abs() < 1e-12);
    }

    #[test]
    fn representation_space_counts_tuples() {
        // Enumerate every tuple for |C| = 3, T = 2, K = 2.
        let (c, t, k) = (3usize, 2u32, 2u32);
        let slots = (t * k) as usize;
        let mut seen = std::collections::HashSet::new();
        for mut n in 0..c.pow(slots as u32) {
            let mut tuple = Vec::with_capacity(slots);
            for _ in 0..slots {
                tuple.push(n % c);
                n /= c;
            }
            seen.insert(tuple);
        }
        assert_eq!(representation_space(c as u128, t, k), Some(seen.len() as u128));
        assert_eq!(representation_space(5, 3, 1), Some(125));
        assert_eq!(representation_space(32000, 2, 4), Some(32000u128.pow(8)));
        assert_eq!(representation_space(32000, 3, 3), None);
        assert_eq!(representation_space(32000, 100, 100), None);
    }

    proptest! {
        #[test]
        fn telescoping_identity(seed in any::<u64>(), dim in 2usize..24, n in 2usize..64, k in 1usize..=8, cosine in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
            let cb = random_codebook(&mut rng, n, dim, metric, false);
            let h: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let seq = residual_quantize(&cb, &h, k).unwrap();
            prop_assert_eq!(seq.len(), k);
            for (a, b) in seq.reconstruct().iter().zip(&h) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            for (r, z) in seq.residuals.iter().zip(&seq.quantized) {
                for (a, b) in r.iter().zip(z) {
                    prop_assert_eq!(*a, -*b);
                }
            }
        }

        #[test]
        fn residual_norm_non_increasing_with_zero_code(seed in any::<u64>(), dim in 2usize..16, n in 1usize..32, k in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, n, dim, Metric::Euclidean, true);
            let h: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let seq = residual_quantize(&cb, &h, k).unwrap();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let mut prev = norm(&h);
            let mut steps = seq.step_inputs();
            steps.push(seq.final_residual.clone());
            for s in steps.iter().skip(1) {
                let cur = norm(s);
                prop_assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }

        #[test]
        fn batched_rows_match_single_rows(seed in any::<u64>(), dim in 1usize..20, n in 1usize..40, rows in 0usize..11, k in 1usize..=4, cosine in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
            let cb = random_codebook(&mut rng, n, dim, metric, false);
            let mut block: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            if rows > 2 {
                // A zero row and an exact code hit exercise padding.
                block[..dim].fill(0.0);
                block[dim..2 * dim].copy_from_slice(cb.embedding(0));
            }
            let batched = residual_quantize_rows(&cb, &block, dim, k).unwrap();
            prop_assert_eq!(batched.len(), rows);
            for (r, seq) in batched.iter().enumerate() {
                let single = residual_quantize(&cb, &block[r * dim..(r + 1) * dim], k).unwrap();
                prop_assert_eq!(seq, &single);
            }
        }

        #[test]
        fn quantization_is_deterministic(seed in any::<u64>(), k in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = random_codebook(&mut rng, 20, 6, Metric::Cosine, false);
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assert_eq!(residual_quantize(&cb, &h, k).unwrap(), residual_quantize(&cb, &h, k).unwrap());
        }
    }
}
