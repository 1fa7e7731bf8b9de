//! Supervised contrastive loss over a minibatch of representations.
//!
//! For every anchor `s` with at least one positive,
//!
//! ```text
//! l_s = -1/|P_s| * sum_{p in P_s} log( exp(z_s.z_p / tau) / sum_{a in A_s} exp(z_s.z_a / tau) )
//! ```
//!
//! where `z` are the L2-normalized representations, `P_s` the other batch
//! members sharing the anchor's label and `A_s` every other batch member.
//! The batch loss is the plain sum of the `l_s`; anchors without positives
//! contribute nothing.

use crate::error::{Error, Result};
use crate::numcore::dot;

/// Representations and labels for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveBatch<'a, L> {
    representations: &'a [Vec<f64>],
    labels: &'a [L],
    temperature: f64,
}

impl<'a, L: PartialEq> ContrastiveBatch<'a, L> {
    pub fn new(representations: &'a [Vec<f64>], labels: &'a [L], temperature: f64) -> Result<Self> {
        if representations.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} representations but {} labels",
                representations.len(),
                labels.len()
            )));
        }
        if representations.len() < 2 {
            return Err(Error::Config(format!(
                "contrastive batch needs at least 2 samples, got {}",
                representations.len()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        let dim = representations[0].len();
        if representations.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("representations differ in length".into()));
        }
        Ok(Self {
            representations,
            labels,
            temperature,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

/// Index sets for one anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSets {
    /// Other samples with the anchor's label.
    pub positives: Vec<usize>,
    /// Every other sample.
    pub candidates: Vec<usize>,
}

pub fn positive_sets<L: PartialEq>(labels: &[L]) -> Vec<AnchorSets> {
    (0..labels.len())
        .map(|s| {
            let candidates: Vec<usize> = (0..labels.len()).filter(|&a| a != s).collect();
            let positives = candidates
                .iter()
                .copied()
                .filter(|&p| labels[p] == labels[s])
                .collect();
            AnchorSets {
                positives,
                candidates,
            }
        })
        .collect()
}

pub fn l2_normalize(r: &[f64]) -> Result<Vec<f64>> {
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector with norm {norm}"
        )));
    }
    Ok(r.iter().map(|v| v / norm).collect())
}

/// Loss value plus bookkeeping for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct SupconLoss {
    /// Sum over anchors, the quantity that is optimized.
    pub total: f64,
    /// Anchors that had at least one positive.
    pub active_anchors: usize,
}

impl SupconLoss {
    /// Derived figure for comparing batches of different sizes; 0 when no
    /// anchor was active.
    pub fn per_anchor_mean(&self) -> f64 {
        if self.active_anchors == 0 {
            0.0
        } else {
            self.total / self.active_anchors as f64
        }
    }
}

/// Loss and its gradient w.r.t. every raw (unnormalized) representation.
#[derive(Debug, Clone)]
pub struct SupconOutput {
    pub loss: SupconLoss,
    pub grads: Vec<Vec<f64>>,
}

struct Forward {
    normalized: Vec<Vec<f64>>,
    norms: Vec<f64>,
    /// Row-major `n x n` coefficients `d l_i / d sim_ij`.
    coeffs: Vec<f64>,
    loss: SupconLoss,
}

fn forward<L: PartialEq>(batch: &ContrastiveBatch<'_, L>) -> Result<Forward> {
    let n = batch.len();
    let mut normalized = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for r in batch.representations {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        normalized.push(l2_normalize(r)?);
        norms.push(norm);
    }

    let inv_tau = 1.0 / batch.temperature;
    // scaled similarities z_i.z_j / tau
    let mut sims = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = dot(&normalized[i], &normalized[j]) * inv_tau;
            sims[i * n + j] = s;
            sims[j * n + i] = s;
        }
    }

    let mut coeffs = vec![0.0; n * n];
    let mut total = 0.0;
    let mut active = 0;
    for i in 0..n {
        let n_pos = (0..n)
            .filter(|&j| j != i && batch.labels[j] == batch.labels[i])
            .count();
        if n_pos == 0 {
            continue;
        }
        active += 1;
        let row = &sims[i * n..(i + 1) * n];
        let max = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let crow = &mut coeffs[i * n..(i + 1) * n];
        let mut denom = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            crow[j] = (row[j] - max).exp();
            denom += crow[j];
        }
        let lse = max + denom.ln();
        let inv_pos = 1.0 / n_pos as f64;
        let inv_denom = 1.0 / denom;
        let mut pos_sum = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            crow[j] *= inv_denom;
            if batch.labels[j] == batch.labels[i] {
                crow[j] -= inv_pos;
                pos_sum += row[j];
            }
        }
        total += lse - pos_sum * inv_pos;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("contrastive loss evaluated to {total}")));
    }

    Ok(Forward {
        normalized,
        norms,
        coeffs,
        loss: SupconLoss {
            total,
            active_anchors: active,
        },
    })
}

/// Batch loss (sum over anchors with positives).
pub fn supcon_loss<L: PartialEq>(batch: &ContrastiveBatch<'_, L>) -> Result<f64> {
    Ok(forward(batch)?.loss.total)
}

pub fn supcon_grad<L: PartialEq>(batch: &ContrastiveBatch<'_, L>) -> Result<Vec<Vec<f64>>> {
    Ok(supcon_loss_and_grad(batch)?.grads)
}

pub fn supcon_loss_and_grad<L: PartialEq>(batch: &ContrastiveBatch<'_, L>) -> Result<SupconOutput> {
    let fwd = forward(batch)?;
    let n = batch.len();
    let dim = fwd.normalized[0].len();
    let inv_tau = 1.0 / batch.temperature;

    let mut grads = Vec::with_capacity(n);
    for k in 0..n {
        // dL/dz_k = (1/tau) * sum_j (c_kj + c_jk) z_j
        let mut gz = vec![0.0; dim];
        for j in 0..n {
            let c = fwd.coeffs[k * n + j] + fwd.coeffs[j * n + k];
            if c != 0.0 {
                for (g, &z) in gz.iter_mut().zip(&fwd.normalized[j]) {
                    *g += c * z;
                }
            }
        }
        gz.iter_mut().for_each(|g| *g *= inv_tau);

        // through z = r / |r|: dL/dr = (g - z (z.g)) / |r|
        let z = &fwd.normalized[k];
        let zg: f64 = z.iter().zip(&gz).map(|(a, b)| a * b).sum();
        let inv_norm = 1.0 / fwd.norms[k];
        let gr: Vec<f64> = gz
            .iter()
            .zip(z)
            .map(|(&g, &zi)| (g - zi * zg) * inv_norm)
            .collect();
        if gr.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "contrastive gradient for sample {k} is not finite"
            )));
        }
        grads.push(gr);
    }
    Ok(SupconOutput {
        loss: fwd.loss,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalize_three_four() {
        let z = l2_normalize(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(z[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_vectors() {
        let u = [0.0, 1.0, 0.0];
        assert_eq!(l2_normalize(&u).unwrap(), u.to_vec());
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn positive_sets_follow_definitions() {
        let sets = positive_sets(&['A', 'A', 'B']);
        assert_eq!(sets[0].positives, vec![1]);
        assert_eq!(sets[0].candidates, vec![1, 2]);
        assert!(sets[2].positives.is_empty());

        let same = positive_sets(&[0; 4]);
        assert_eq!(same[0].positives, vec![1, 2, 3]);
        assert_eq!(same[0].positives, same[0].candidates);

        let distinct = positive_sets(&[1, 2, 3, 4]);
        assert!(distinct.iter().all(|s| s.positives.is_empty()));
    }

    #[test]
    fn pair_with_same_label_has_zero_loss() {
        let reps = vec![vec![1.0, 0.2], vec![-0.3, 0.9]];
        let batch = ContrastiveBatch::new(&reps, &[1, 1], 0.1).unwrap();
        assert_abs_diff_eq!(supcon_loss(&batch).unwrap(), 0.0, epsilon = 1e-12);
        let grads = supcon_grad(&batch).unwrap();
        for g in grads {
            for v in g {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pair_with_different_labels_skips_both_anchors() {
        let reps = vec![vec![1.0, 0.2], vec![-0.3, 0.9]];
        let batch = ContrastiveBatch::new(&reps, &[0, 1], 0.1).unwrap();
        let out = supcon_loss_and_grad(&batch).unwrap();
        assert_eq!(out.loss.total, 0.0);
        assert_eq!(out.loss.active_anchors, 0);
        assert_eq!(out.loss.per_anchor_mean(), 0.0);
    }

    #[test]
    fn three_sample_hand_value() {
        // r1 = r2 (dot 1), both orthogonal to r3, tau = 1:
        // 2 * -log(e / (e + 1)) = 2 ln(1 + 1/e)
        let reps = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 5.0]];
        let batch = ContrastiveBatch::new(&reps, &['A', 'A', 'B'], 1.0).unwrap();
        let out = supcon_loss_and_grad(&batch).unwrap();
        assert_abs_diff_eq!(out.loss.total, 0.626_523_375_036_445_7, epsilon = 1e-12);
        assert_eq!(out.loss.active_anchors, 2);
        assert_abs_diff_eq!(out.loss.per_anchor_mean(), 0.313_261_687_518_222_8, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_batch_stays_finite() {
        let base = vec![vec![0.2, 0.7, 0.1], vec![0.9, 0.1, 0.3], vec![0.4, 0.4, 0.8]];
        let labels = [0, 1, 0];
        let reps: Vec<Vec<f64>> = base.iter().chain(&base).cloned().collect();
        let dup_labels: Vec<i32> = labels.iter().chain(&labels).copied().collect();
        let batch = ContrastiveBatch::new(&reps, &dup_labels, 0.1).unwrap();
        let out = supcon_loss_and_grad(&batch).unwrap();
        assert!(out.loss.total.is_finite());
        assert!(out.grads.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_batches_are_rejected() {
        let one = vec![vec![1.0]];
        assert!(ContrastiveBatch::new(&one, &[0], 0.1).is_err());
        let two = vec![vec![1.0], vec![2.0]];
        assert!(ContrastiveBatch::new(&two, &[0, 1], 0.0).is_err());
        assert!(ContrastiveBatch::new(&two, &[0], 0.1).is_err());
        let zero = vec![vec![0.0], vec![2.0]];
        let batch = ContrastiveBatch::new(&zero, &[0, 0], 0.1).unwrap();
        assert!(matches!(supcon_loss(&batch), Err(Error::Degenerate(_))));
    }
}
