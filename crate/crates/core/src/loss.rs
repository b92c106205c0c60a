//! Training objective: masked cross-entropy on the transcript plus an
//! audio/text alignment penalty (mean L1 distance + one-minus-cosine per
//! time step), combined as `total = output + α · alignment`.

use ndarray::{Array2, ArrayD, Ix2};

use crate::autodiff::{DiffArray, Tape};
use crate::error::{CoreError, Result};

/// Scalar view of one step's loss terms.
///
/// `total` is always `output_loss + alpha · alignment_loss` in the same
/// f64 arithmetic the training graph used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub output_loss: f64,
    pub alignment_loss: f64,
    pub alpha: f64,
    pub total: f64,
}

/// Combine the two loss terms with weight `alpha` (1 by default; 0 and 2
/// are the documented ablation settings).
pub fn total_loss(output_loss: f64, alignment_loss: f64, alpha: f64) -> LossBreakdown {
    LossBreakdown {
        output_loss,
        alignment_loss,
        alpha,
        total: output_loss + alpha * alignment_loss,
    }
}

/// Mean `-log softmax(logits)[label]` over unmasked positions.
///
/// `labels[i] = None` masks position `i` out of the loss entirely.
pub fn output_loss(tape: &mut Tape, logits: DiffArray, labels: &[Option<usize>]) -> Result<DiffArray> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(CoreError::shape("output_loss", &shape, &[labels.len()]));
    }
    let (n, vocab) = (shape[0], shape[1]);
    let unmasked = labels.iter().flatten().count();
    if unmasked == 0 {
        return Err(CoreError::contract("output_loss: no unmasked positions"));
    }
    let mut select = Array2::<f64>::zeros((n, vocab));
    for (i, label) in labels.iter().enumerate() {
        if let Some(id) = label {
            if *id >= vocab {
                return Err(CoreError::contract(format!(
                    "output_loss: label {id} out of range for vocab {vocab}"
                )));
            }
            select[[i, *id]] = 1.0 / unmasked as f64;
        }
    }
    let logp = tape.log_softmax(logits)?;
    let sel = tape.constant(select.into_dyn())?;
    let picked = tape.mul(logp, sel)?;
    let summed = tape.sum(picked)?;
    tape.scale(summed, -1.0)
}

/// Alignment loss value plus the diagnostics the training log reports.
pub struct AlignmentLoss {
    /// Differentiable scalar `l1_mean + (1 - mean per-step cosine)`.
    pub loss: DiffArray,
    pub l1_mean: f64,
    /// Sum-reduced L1, reported alongside the mean for debugging.
    pub l1_sum: f64,
    pub cosine_term: f64,
    /// Steps where either side had zero norm; those contribute cosine 0.
    pub zero_norm_steps: usize,
}

/// L1-plus-cosine distance between the projected audio embeddings `e_t`
/// and the expected decoder-input embeddings `e_u` (equal shapes `T × d`).
///
/// `e_u` is treated as a constant: gradient flows only into `e_t`, so the
/// penalty shapes the encoder/adapter rather than the text embeddings.
pub fn alignment_loss(tape: &mut Tape, e_t: DiffArray, e_u: DiffArray) -> Result<AlignmentLoss> {
    let st = tape.shape(e_t).to_vec();
    let su = tape.shape(e_u).to_vec();
    if st != su || st.len() != 2 {
        return Err(CoreError::shape("alignment_loss", &st, &su));
    }
    let e_u_data = tape.value(e_u).clone();
    alignment_loss_against(tape, e_t, &e_u_data)
}

fn alignment_loss_against(tape: &mut Tape, e_t: DiffArray, e_u_data: &ArrayD<f64>) -> Result<AlignmentLoss> {
    let st = tape.shape(e_t).to_vec();
    if st != e_u_data.shape() || st.len() != 2 {
        return Err(CoreError::shape("alignment_loss", &st, e_u_data.shape()));
    }
    let zero_norm_steps = {
        let t_rows = tape.value(e_t).view().into_dimensionality::<Ix2>().expect("2d");
        let u_rows = e_u_data.view().into_dimensionality::<Ix2>().expect("2d");
        t_rows
            .rows()
            .into_iter()
            .zip(u_rows.rows())
            .filter(|(a, b)| {
                a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0)
            })
            .count()
    };

    let e_u_const = tape.constant(e_u_data.clone())?;
    let l1 = tape.l1_distance(e_t, e_u_const)?;
    let cos = tape.cosine_similarity(e_t, e_u_const)?;
    let cos_mean = tape.mean(cos)?;
    let cos_term = tape.affine(cos_mean, -1.0, 1.0)?;
    let loss = tape.add(l1, cos_term)?;

    let l1_mean = tape.scalar(l1)?;
    Ok(AlignmentLoss {
        loss,
        l1_mean,
        l1_sum: l1_mean * (st[0] * st[1]) as f64,
        cosine_term: tape.scalar(cos_term)?,
        zero_norm_steps,
    })
}

/// Alignment loss with length matching: when the sequences differ in
/// length, the shorter one is resampled along time by linear interpolation
/// before scoring. `e_u` enters as plain data (it carries no gradient).
pub fn alignment_loss_resampled(
    tape: &mut Tape,
    e_t: DiffArray,
    e_u_data: &ArrayD<f64>,
) -> Result<AlignmentLoss> {
    let st = tape.shape(e_t).to_vec();
    let su = e_u_data.shape().to_vec();
    if st.len() != 2 || su.len() != 2 || st[1] != su[1] {
        return Err(CoreError::shape("alignment_loss", &st, &su));
    }
    let (t_len, u_len) = (st[0], su[0]);
    if t_len == u_len {
        return alignment_loss_against(tape, e_t, e_u_data);
    }
    if t_len > u_len {
        let r = interp_rows_matrix(u_len, t_len);
        let u2 = e_u_data.view().into_dimensionality::<Ix2>().expect("2d");
        let matched = r.dot(&u2).into_dyn();
        alignment_loss_against(tape, e_t, &matched)
    } else {
        let r = tape.constant(interp_rows_matrix(t_len, u_len).into_dyn())?;
        let e_t_up = tape.matmul(r, e_t)?;
        alignment_loss_against(tape, e_t_up, e_u_data)
    }
}

/// Linear-interpolation resampling matrix `R (to × from)`: `R · x`
/// resamples the rows of `x` from `from` time steps to `to`.
pub fn interp_rows_matrix(from: usize, to: usize) -> Array2<f64> {
    let mut r = Array2::<f64>::zeros((to, from));
    for j in 0..to {
        if from == 1 || to == 1 {
            if to == 1 {
                // single output row: average of inputs
                for i in 0..from {
                    r[[j, i]] = 1.0 / from as f64;
                }
            } else {
                r[[j, 0]] = 1.0;
            }
            continue;
        }
        let pos = j as f64 * (from - 1) as f64 / (to - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if lo + 1 < from {
            r[[j, lo]] = 1.0 - frac;
            r[[j, lo + 1]] = frac;
        } else {
            r[[j, lo]] = 1.0;
        }
    }
    r
}
