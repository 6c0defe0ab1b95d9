//! Where datasets come from: an MNIST IDX directory or a synthetic
//! generator descriptor `synth:KIND:N:SEED`.

use std::path::PathBuf;
use std::str::FromStr;

use certiprop_core::data::{synth_dataset, Dataset, SynthKind};

use crate::error::{CliError, Result};
use crate::idx::load_mnist_idx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Directory with `{train,t10k}-{images-idx3,labels-idx1}-ubyte`.
    Idx(PathBuf),
    Synth { kind: SynthKind, n: usize, seed: u64 },
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let Some(rest) = s.strip_prefix("synth:") else {
            return Ok(DataSource::Idx(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        let [kind, n, seed] = parts[..] else {
            return Err(format!("expected synth:KIND:N:SEED, got {s:?}"));
        };
        Ok(DataSource::Synth {
            kind: kind.parse().map_err(|e: certiprop_core::Error| e.to_string())?,
            n: n.parse().map_err(|_| format!("bad instance count {n:?}"))?,
            seed: seed.parse().map_err(|_| format!("bad seed {seed:?}"))?,
        })
    }
}

impl DataSource {
    pub fn idx_paths(dir: &std::path::Path, split: Split) -> (PathBuf, PathBuf) {
        let prefix = match split {
            Split::Train => "train",
            Split::Test => "t10k",
        };
        (dir.join(format!("{prefix}-images-idx3-ubyte")), dir.join(format!("{prefix}-labels-idx1-ubyte")))
    }

    /// Loads `split`, keeping at most `limit` instances. Synthetic test
    /// splits use the seed after the training seed.
    pub fn load(&self, split: Split, limit: Option<usize>) -> Result<Dataset> {
        match self {
            DataSource::Idx(dir) => {
                let (images, labels) = Self::idx_paths(dir, split);
                load_mnist_idx(&images, &labels, limit)
            }
            DataSource::Synth { kind, n, seed } => {
                if limit == Some(0) {
                    return Err(CliError::Validation(certiprop_core::Error::EmptyDataset));
                }
                let seed = if split == Split::Test { seed.wrapping_add(1) } else { *seed };
                let d = synth_dataset(*kind, *n, seed)?;
                Ok(match limit {
                    Some(l) => d.take(l),
                    None => d,
                })
            }
        }
    }
}
