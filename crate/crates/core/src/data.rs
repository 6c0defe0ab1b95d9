//! Labelled datasets and small synthetic generators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, standard_normal};
use crate::netdef::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch { layer: 0, what: "labels", expected: inputs.len(), found: labels.len() });
        }
        if let Some(first) = inputs.first() {
            if let Some(bad) = inputs.iter().find(|x| x.len() != first.len()) {
                return Err(Error::DimensionMismatch { layer: 0, what: "input", expected: first.len(), found: bad.len() });
            }
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset input"));
        }
        Ok(Self { inputs, labels, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i], self.labels[i])
    }

    /// The first `n` instances (all of them if `n` is larger).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { inputs: self.inputs[..n].to_vec(), labels: self.labels[..n].to_vec(), name: self.name.clone() }
    }

    /// Checks that the dataset can be fed to `net`.
    pub fn check_for(&self, net: &Network) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.input_dim() != net.input_dim() {
            return Err(Error::DimensionMismatch { layer: 0, what: "input", expected: net.input_dim(), found: self.input_dim() });
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= net.output_dim()) {
            return Err(Error::LabelOutOfRange { label, classes: net.output_dim() });
        }
        Ok(())
    }
}

/// Two-dimensional synthetic benchmark families, all inside `[0, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    TwoMoons,
    TwoClusters,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::TwoMoons => "two-moons",
            SynthKind::TwoClusters => "two-clusters",
        }
    }
}

impl core::str::FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-moons" | "moons" => Ok(SynthKind::TwoMoons),
            "two-clusters" | "clusters" => Ok(SynthKind::TwoClusters),
            _ => Err(Error::Invalid(format!("unknown synthetic dataset {s}"))),
        }
    }
}

/// `n` labelled points of `kind`. Labels alternate so classes differ in size
/// by at most one; the order is shuffled with `seed`.
pub fn synth_dataset(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<(Vec<f64>, usize)> = (0..n)
        .map(|i| {
            let label = i % 2;
            let (x, y) = match kind {
                SynthKind::TwoMoons => {
                    let t = rng.gen_range(0.0..core::f64::consts::PI);
                    let (c, s) = (cos(t), cos(t - core::f64::consts::FRAC_PI_2));
                    let (x, y) = if label == 0 { (c, s) } else { (1.0 - c, 0.5 - s) };
                    let x = x + 0.08 * standard_normal(&mut rng);
                    let y = y + 0.08 * standard_normal(&mut rng);
                    ((x + 1.25) / 3.5, (y + 0.75) / 2.5)
                }
                SynthKind::TwoClusters => {
                    let c = if label == 0 { 0.3 } else { 0.7 };
                    (c + 0.08 * standard_normal(&mut rng), c + 0.08 * standard_normal(&mut rng))
                }
            };
            (alloc::vec![x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)], label)
        })
        .collect();
    points.shuffle(&mut rng);
    let (inputs, labels) = points.into_iter().unzip();
    Dataset::new(inputs, labels, kind.name())
}
