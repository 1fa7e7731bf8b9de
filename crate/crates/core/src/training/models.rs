use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, DenseLayer};

/// Width of the encoder's representation.
pub const ENCODER_UNITS: usize = 30;
/// High / low.
pub const N_CLASSES: usize = 2;

/// One sigmoid dense layer producing the representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub layer: DenseLayer,
}

impl EncoderModel {
    pub fn init<R: Rng + ?Sized>(in_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            layer: DenseLayer::init_uniform(in_dim, ENCODER_UNITS, Activation::Sigmoid, rng)?,
        })
    }

    pub fn from_layer(layer: DenseLayer) -> Result<Self> {
        if layer.activation() != Activation::Sigmoid {
            return Err(Error::Config("encoder layer must be sigmoid-activated".into()));
        }
        Ok(Self { layer })
    }

    pub fn in_dim(&self) -> usize {
        self.layer.in_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.layer.forward(x)
    }

    /// Bit pattern of every parameter; equal fingerprints mean identical
    /// weights.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.layer
            .weights()
            .iter()
            .chain(self.layer.bias())
            .map(|v| v.to_bits())
            .collect()
    }
}

/// One softmax dense layer over the representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub layer: DenseLayer,
}

impl ProbeModel {
    pub fn init<R: Rng + ?Sized>(in_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            layer: DenseLayer::init_uniform(in_dim, N_CLASSES, Activation::Softmax, rng)?,
        })
    }
}

/// Encoder followed by a probe, trained jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub encoder: EncoderModel,
    pub probe: ProbeModel,
}

pub trait Classifier {
    /// Class probabilities for one feature vector.
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Arg-max class; ties go to the lower index.
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// A frozen encoder read out by a trained probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbedEncoder<'a> {
    pub encoder: &'a EncoderModel,
    pub probe: &'a ProbeModel,
}

impl Classifier for ProbedEncoder<'_> {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.probe.layer.forward(&self.encoder.encode(x)?)
    }
}

impl Classifier for BaselineModel {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.probe.layer.forward(&self.encoder.encode(x)?)
    }
}

/// Always predicts the most frequent training class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityClassifier {
    pub class: usize,
}

impl MajorityClassifier {
    /// Ties go to the lower class index.
    pub fn fit(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Degenerate("majority class of an empty label set".into()));
        }
        let mut counts = [0usize; N_CLASSES];
        for &l in labels {
            *counts.get_mut(l).ok_or_else(|| Error::Config(format!("class {l} out of range")))? += 1;
        }
        let class = (0..N_CLASSES).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        Ok(Self { class })
    }
}

impl Classifier for MajorityClassifier {
    fn predict_proba(&self, _x: &[f64]) -> Result<Vec<f64>> {
        let mut p = vec![0.0; N_CLASSES];
        p[self.class] = 1.0;
        Ok(p)
    }
}
