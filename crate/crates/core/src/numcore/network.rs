//! A chain of dense layers with a cached forward pass and exact reverse-mode
//! gradients.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LayerGrad};
use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    /// Bumped on every parameter mutation; caches from older generations are stale.
    #[serde(skip)]
    generation: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    network_id: u64,
    generation: u64,
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn activations(&self) -> &[Vec<f64>] {
        &self.activations
    }
}

/// Per-layer partial derivatives, in the same order and shape as
/// [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrad>,
}

impl GradientBundle {
    pub fn zeros_like(network: &Network) -> Self {
        Self {
            layers: network.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    /// Flattened in parameter order: layer by layer, weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// Flattened parameters: layer by layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights().iter().chain(l.bias()))
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "got {} parameters, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut rest = flat;
        for slot in self.param_slices_mut() {
            let (head, tail) = rest.split_at(slot.len());
            slot.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Mutable parameter views in flattened order. Invalidates caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            let (w, b) = layer.params_mut();
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Output of the full chain without keeping intermediates.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Sequential `dense_forward` through every layer, keeping what
    /// [`Network::backward`] needs.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = vec![0.0; layer.out_dim()];
            layer.forward_into(activations.last().unwrap(), &mut out);
            activations.push(out);
        }
        let output = activations.last().unwrap().clone();
        Ok((
            output,
            ForwardCache {
                network_id: self.id,
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Exact partials of a scalar loss w.r.t. every parameter, given the
    /// loss gradient w.r.t. the network output.
    pub fn backward(&self, upstream: &[f64], cache: &ForwardCache) -> Result<GradientBundle> {
        let mut grads = GradientBundle::zeros_like(self);
        self.backward_accumulate(upstream, cache, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`] but adds into an existing bundle, so a
    /// minibatch can be summed without reallocating.
    pub fn backward_accumulate(
        &self,
        upstream: &[f64],
        cache: &ForwardCache,
        grads: &mut GradientBundle,
    ) -> Result<()> {
        self.check_cache(cache)?;
        if upstream.len() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient has length {}, network outputs {}",
                upstream.len(),
                self.out_dim()
            )));
        }
        let mut dy = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[i];
            let y = &cache.activations[i + 1];
            if i > 0 {
                let mut dx = vec![0.0; layer.in_dim()];
                layer.backward_accumulate(x, y, &dy, &mut grads.layers[i], Some(&mut dx));
                dy = dx;
            } else {
                layer.backward_accumulate(x, y, &dy, &mut grads.layers[i], None);
            }
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.network_id != self.id {
            return Err(Error::StaleCache(
                "cache was produced by a different network".into(),
            ));
        }
        if cache.generation != self.generation {
            return Err(Error::StaleCache(format!(
                "parameters changed since the forward pass (generation {} vs {})",
                cache.generation, self.generation
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::layer::Activation;
    use approx::assert_abs_diff_eq;

    fn encoder_probe(in_dim: usize) -> Network {
        Network::new(vec![
            DenseLayer::zeros(in_dim, 30, Activation::Sigmoid).unwrap(),
            DenseLayer::zeros(30, 2, Activation::Softmax).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn single_layer_matches_dense_forward() {
        let layer = DenseLayer::from_rows(
            &[vec![1.0, -2.0], vec![0.5, 0.25]],
            vec![0.1, -0.1],
            Activation::Identity,
        )
        .unwrap();
        let net = Network::new(vec![layer.clone()]).unwrap();
        let x = [0.3, 0.7];
        assert_eq!(net.predict(&x).unwrap(), layer.forward(&x).unwrap());
    }

    #[test]
    fn zero_network_outputs_uniform_probabilities() {
        let net = encoder_probe(5);
        let y = net.predict(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn chained_output_lies_in_simplex() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(vec![
            DenseLayer::init_uniform(7, 30, Activation::Sigmoid, &mut rng).unwrap(),
            DenseLayer::init_uniform(30, 2, Activation::Softmax, &mut rng).unwrap(),
        ])
        .unwrap();
        let y = net.predict(&[3.0, -1.0, 0.0, 2.0, 9.0, -4.0, 1.0]).unwrap();
        assert!(y.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_abs_diff_eq!(y.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let err = Network::new(vec![
            DenseLayer::zeros(3, 4, Activation::Sigmoid).unwrap(),
            DenseLayer::zeros(5, 2, Activation::Softmax).unwrap(),
        ]);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let net = encoder_probe(4);
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = net.backward(&[0.0, 0.0], &cache).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cache_goes_stale_after_mutation() {
        let mut net = encoder_probe(2);
        let (_, cache) = net.forward(&[1.0, 2.0]).unwrap();
        let p = net.params();
        net.set_params(&p).unwrap();
        assert!(matches!(
            net.backward(&[1.0, 0.0], &cache),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn cache_from_other_network_is_rejected() {
        let a = encoder_probe(2);
        let b = a.clone();
        let (_, cache) = a.forward(&[1.0, 2.0]).unwrap();
        assert!(matches!(b.backward(&[1.0, 0.0], &cache), Err(Error::StaleCache(_))));
    }

    #[test]
    fn params_round_trip() {
        let mut net = encoder_probe(3);
        let flat: Vec<f64> = (0..net.num_params()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&flat).unwrap();
        assert_eq!(net.params(), flat);
    }
}
