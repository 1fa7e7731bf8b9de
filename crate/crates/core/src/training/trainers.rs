use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early_stop::{early_stop, StopDecision, StopReason};
use super::models::{BaselineModel, EncoderModel, ProbeModel, ENCODER_UNITS, N_CLASSES};
use super::TrainConfig;
use crate::affect::ContrastiveLabel;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, AdamConfig, AdamState, GradientBundle, Network};
use crate::supcon::{supcon_loss_and_grad, ContrastiveBatch};

// Independent ChaCha streams per purpose, so the encoder starts from the
// same weights in every trainer given the same seed.
const STREAM_ENCODER_INIT: u64 = 0;
const STREAM_PROBE_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// 0-based epoch whose end-of-epoch parameters were returned.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stop_reason: StopReason,
    pub optimizer_steps: u64,
    /// Contrastive batches in which no anchor had a positive.
    pub zero_loss_batches: usize,
}

fn check_features(features: &[Vec<f64>], n_labels: usize) -> Result<usize> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Training("no training samples".into()))?;
    if features.len() != n_labels {
        return Err(Error::Config(format!(
            "{} feature rows but {n_labels} labels",
            features.len()
        )));
    }
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(Error::Dimension("feature rows must share a positive length".into()));
    }
    Ok(dim)
}

fn check_classes(labels: &[usize]) -> Result<()> {
    if let Some(l) = labels.iter().find(|&&l| l >= N_CLASSES) {
        return Err(Error::Config(format!("class index {l} out of range")));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Training(format!(
            "all {} training samples belong to class {}; a classifier cannot be fitted",
            labels.len(),
            labels[0]
        )));
    }
    Ok(())
}

enum BatchOutcome {
    /// Too small to form a loss (single-sample contrastive batch).
    Skipped,
    Step { loss: f64, grads: GradientBundle, zero_loss: bool },
}

/// Epoch loop shared by all trainers: seeded shuffle each epoch, last
/// partial batch included, Adam per batch, best-epoch snapshot restored at
/// the end.
fn fit<F>(network: &mut Network, n_samples: usize, cfg: &TrainConfig, mut batch: F) -> Result<TrainReport>
where
    F: FnMut(&Network, &[usize]) -> Result<BatchOutcome>,
{
    cfg.validate()?;
    let mut adam = AdamState::for_network(network, AdamConfig::with_lr(cfg.lr))?;
    let mut rng = rng_for(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut history = Vec::new();
    let mut best_params = network.params();
    let mut best_epoch = 0;
    let mut zero_loss_batches = 0;

    loop {
        let epoch = history.len();
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            match batch(network, chunk)? {
                BatchOutcome::Skipped => {}
                BatchOutcome::Step { loss, grads, zero_loss } => {
                    if !loss.is_finite() {
                        return Err(Error::Training(format!(
                            "non-finite loss {loss} at epoch {epoch}, batch {b}"
                        )));
                    }
                    if zero_loss {
                        zero_loss_batches += 1;
                        log::debug!("epoch {epoch} batch {b}: no anchor has a positive, loss 0");
                    }
                    adam_step(network, &grads, &mut adam).map_err(|e| {
                        e.with_context(format!("optimizer step at epoch {epoch}, batch {b}"))
                    })?;
                    losses.push(loss);
                }
            }
        }
        if losses.is_empty() {
            return Err(Error::Training("no batch produced a loss".into()));
        }
        let epoch_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        if history.is_empty() || epoch_loss < history[best_epoch] {
            best_epoch = epoch;
            best_params = network.params();
        }
        history.push(epoch_loss);
        if let StopDecision::Stop(reason) = early_stop(&history, cfg.patience_epochs, cfg.max_epochs) {
            network.set_params(&best_params)?;
            log::debug!(
                "stopped after {} epochs ({reason:?}); best epoch {best_epoch} loss {}",
                history.len(),
                history[best_epoch]
            );
            return Ok(TrainReport {
                best_loss: history[best_epoch],
                epoch_losses: history,
                best_epoch,
                stop_reason: reason,
                optimizer_steps: adam.step_count(),
                zero_loss_batches,
            });
        }
    }
}

/// Pretrains an encoder with the supervised contrastive loss, using any
/// label type that can be compared for equality. Positives are formed
/// within each minibatch.
pub fn train_encoder_scl_with<L: PartialEq + Clone>(
    features: &[Vec<f64>],
    labels: &[L],
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    let dim = check_features(features, labels.len())?;
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::Training(
            "contrastive labels contain a single category; at least two are required".into(),
        ));
    }
    let encoder = EncoderModel::init(dim, &mut rng_for(cfg.seed, STREAM_ENCODER_INIT))?;
    let mut network = Network::new(vec![encoder.layer])?;

    let report = fit(&mut network, features.len(), cfg, |net, idx| {
        if idx.len() < 2 {
            return Ok(BatchOutcome::Skipped);
        }
        let mut reps = Vec::with_capacity(idx.len());
        let mut caches = Vec::with_capacity(idx.len());
        for &i in idx {
            let (out, cache) = net.forward(&features[i])?;
            reps.push(out);
            caches.push(cache);
        }
        let batch_labels: Vec<L> = idx.iter().map(|&i| labels[i].clone()).collect();
        let batch = ContrastiveBatch::new(&reps, &batch_labels, cfg.temperature)?;
        let out = supcon_loss_and_grad(&batch)?;
        let mut grads = GradientBundle::zeros_like(net);
        if out.loss.active_anchors > 0 {
            for (g, cache) in out.grads.iter().zip(&caches) {
                net.backward_accumulate(g, cache, &mut grads)?;
            }
        }
        Ok(BatchOutcome::Step {
            loss: out.loss.total,
            grads,
            zero_loss: out.loss.active_anchors == 0,
        })
    })?;

    let layer = network.into_layers().remove(0);
    Ok((EncoderModel::from_layer(layer)?, report))
}

/// [`train_encoder_scl_with`] for labels of one affect strategy.
pub fn train_encoder_scl(
    features: &[Vec<f64>],
    labels: &[ContrastiveLabel],
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    if let Some(first) = labels.first() {
        if labels.iter().any(|l| l.strategy != first.strategy) {
            return Err(Error::Config("contrastive labels mix strategies".into()));
        }
    }
    train_encoder_scl_with(features, labels, cfg)
}

/// Mean categorical cross-entropy of a softmax output batch and the
/// matching upstream gradients.
fn cross_entropy_batch(
    net: &Network,
    inputs: &[&[f64]],
    labels: &[usize],
) -> Result<(f64, GradientBundle)> {
    let scale = 1.0 / inputs.len() as f64;
    let mut grads = GradientBundle::zeros_like(net);
    let mut loss = 0.0;
    let mut upstream = vec![0.0; N_CLASSES];
    for (x, &c) in inputs.iter().zip(labels) {
        let (p, cache) = net.forward(x)?;
        let pc = p[c].max(f64::MIN_POSITIVE);
        loss -= pc.ln();
        upstream.iter_mut().for_each(|u| *u = 0.0);
        upstream[c] = -scale / pc;
        net.backward_accumulate(&upstream, &cache, &mut grads)?;
    }
    Ok((loss * scale, grads))
}

/// Trains a linear softmax probe on the outputs of a frozen encoder.
pub fn train_probe(
    encoder: &EncoderModel,
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(ProbeModel, TrainReport)> {
    check_features(features, labels.len())?;
    check_classes(labels)?;
    let reps = features
        .iter()
        .map(|x| encoder.encode(x))
        .collect::<Result<Vec<_>>>()?;
    let probe = ProbeModel::init(ENCODER_UNITS, &mut rng_for(cfg.seed, STREAM_PROBE_INIT))?;
    let mut network = Network::new(vec![probe.layer])?;
    let report = fit(&mut network, reps.len(), cfg, |net, idx| {
        let inputs: Vec<&[f64]> = idx.iter().map(|&i| reps[i].as_slice()).collect();
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = cross_entropy_batch(net, &inputs, &batch_labels)?;
        Ok(BatchOutcome::Step { loss, grads, zero_loss: false })
    })?;
    let layer = network.into_layers().remove(0);
    Ok((ProbeModel { layer }, report))
}

/// Trains encoder and probe jointly from cross-entropy.
pub fn train_end_to_end(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(BaselineModel, TrainReport)> {
    let dim = check_features(features, labels.len())?;
    check_classes(labels)?;
    let encoder = EncoderModel::init(dim, &mut rng_for(cfg.seed, STREAM_ENCODER_INIT))?;
    let probe = ProbeModel::init(ENCODER_UNITS, &mut rng_for(cfg.seed, STREAM_PROBE_INIT))?;
    let mut network = Network::new(vec![encoder.layer, probe.layer])?;
    let report = fit(&mut network, features.len(), cfg, |net, idx| {
        let inputs: Vec<&[f64]> = idx.iter().map(|&i| features[i].as_slice()).collect();
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = cross_entropy_batch(net, &inputs, &batch_labels)?;
        Ok(BatchOutcome::Step { loss, grads, zero_loss: false })
    })?;
    let mut layers = network.into_layers();
    let probe = ProbeModel { layer: layers.pop().unwrap() };
    let encoder = EncoderModel::from_layer(layers.pop().unwrap())?;
    Ok((BaselineModel { encoder, probe }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::{Category, Strategy};
    use crate::training::{Classifier, ProbedEncoder};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let shift = if c == 1 { sep } else { -sep };
            let x = (0..dim)
                .map(|d| {
                    let noise: f64 = rng.sample(StandardNormal);
                    noise + if d == 0 { shift } else { 0.0 }
                })
                .collect();
            xs.push(x);
            ys.push(c);
        }
        (xs, ys)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            lr: 0.01,
            max_epochs: 60,
            ..TrainConfig::default()
        }
    }

    fn accuracy(model: &dyn Classifier, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| model.predict(x).unwrap() == y)
            .count();
        hits as f64 / xs.len() as f64
    }

    #[test]
    fn unique_labels_leave_encoder_at_init() {
        // every anchor lacks positives, so every batch has loss 0
        let (xs, _) = blobs(40, 3, 1.0, 1);
        let labels: Vec<usize> = (0..40).collect();
        let cfg = TrainConfig { batch_size: 8, ..quick() };
        let (enc, report) = train_encoder_scl_with(&xs, &labels, &cfg).unwrap();
        let init = EncoderModel::init(3, &mut rng_for(cfg.seed, STREAM_ENCODER_INIT)).unwrap();
        assert_eq!(enc.fingerprint(), init.fingerprint());
        assert!(report.epoch_losses.iter().all(|&l| l == 0.0));
        assert_eq!(report.zero_loss_batches, 5 * report.epoch_losses.len());
        assert_eq!(report.stop_reason, StopReason::Patience);
        assert_eq!(report.epoch_losses.len(), cfg.patience_epochs + 1);
    }

    #[test]
    fn single_category_is_rejected() {
        let (xs, _) = blobs(10, 2, 1.0, 2);
        let labels = vec![ContrastiveLabel { strategy: Strategy::HighLow, category: Category::High }; 10];
        assert!(matches!(
            train_encoder_scl(&xs, &labels, &quick()),
            Err(Error::Training(_))
        ));
        assert!(matches!(
            train_end_to_end(&xs, &[1; 10], &quick()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn mixed_strategies_are_rejected() {
        let (xs, _) = blobs(2, 2, 1.0, 2);
        let labels = [
            ContrastiveLabel { strategy: Strategy::HighLow, category: Category::High },
            ContrastiveLabel { strategy: Strategy::UpDown, category: Category::Uptrend },
        ];
        assert!(train_encoder_scl(&xs, &labels, &quick()).is_err());
    }

    #[test]
    fn contrastive_encoder_separates_classes() {
        let (xs, ys) = blobs(400, 4, 2.0, 3);
        let (enc, report) = train_encoder_scl_with(&xs, &ys, &quick()).unwrap();
        assert!(report.best_loss <= report.epoch_losses[0]);

        let (held_x, held_y) = blobs(200, 4, 2.0, 4);
        let reps: Vec<Vec<f64>> = held_x
            .iter()
            .map(|x| crate::supcon::l2_normalize(&enc.encode(x).unwrap()).unwrap())
            .collect();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..reps.len() {
            for j in i + 1..reps.len() {
                let s: f64 = reps[i].iter().zip(&reps[j]).map(|(a, b)| a * b).sum();
                if held_y[i] == held_y[j] {
                    within += s;
                    nw += 1;
                } else {
                    between += s;
                    nb += 1;
                }
            }
        }
        assert!(within / nw as f64 > between / nb as f64);
    }

    #[test]
    fn probe_leaves_encoder_untouched_and_fits() {
        let (xs, ys) = blobs(300, 2, 3.0, 5);
        let enc = EncoderModel::init(2, &mut rng_for(9, 0)).unwrap();
        let before = enc.fingerprint();
        let (probe, _) = train_probe(&enc, &xs, &ys, &quick()).unwrap();
        assert_eq!(enc.fingerprint(), before);
        let acc = accuracy(&ProbedEncoder { encoder: &enc, probe: &probe }, &xs, &ys);
        assert!(acc > 0.9, "probe accuracy {acc}");
    }

    #[test]
    fn end_to_end_is_reproducible() {
        let (xs, ys) = blobs(200, 3, 1.5, 6);
        let (a, ra) = train_end_to_end(&xs, &ys, &quick()).unwrap();
        let (b, rb) = train_end_to_end(&xs, &ys, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(accuracy(&a, &xs, &ys) > 0.85);
    }

    #[test]
    fn best_snapshot_has_lowest_recorded_loss() {
        let (xs, ys) = blobs(200, 3, 0.5, 7);
        let (_, report) = train_end_to_end(&xs, &ys, &quick()).unwrap();
        let min = report.epoch_losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_loss, min);
        assert!(report.epoch_losses[..report.best_epoch].iter().all(|&l| l > report.best_loss));
    }
}
