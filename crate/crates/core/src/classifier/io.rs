//! Binary on-disk model format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SDEFCNN1"
//! 8       4     n_classes (u32)
//! 12      4     input_size (u32)
//! 16      8     training seed (u64)
//! 24      ...   f32 parameters in fixed order:
//!               conv1.weights, conv1.bias,
//!               conv2.weights, conv2.bias,
//!               dense.weights, dense.bias
//! ```
//!
//! Parameter counts are implied by the header: conv1 is 3->8 channels, conv2
//! 8->16, both 3x3; the dense layer maps 16*(input_size/4)^2 inputs to
//! n_classes outputs. Decoding rejects wrong magic, truncated or oversized
//! buffers, non-finite weights, and nonsensical headers.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::cnn::{Conv3x3, Dense};
use super::{ClassifierModel, CONV1_CH, CONV2_CH};

const MAGIC: &[u8; 8] = b"SDEFCNN1";
const MAX_CLASSES: usize = 4096;
const MAX_INPUT_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum ModelCodecError {
    #[error("cannot read model {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write model {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes; not a classifier model file")]
    BadMagic,
    #[error("model header is invalid: n_classes={n_classes}, input_size={input_size}")]
    BadHeader { n_classes: u64, input_size: u64 },
    #[error("model data truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("model data has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("model contains a non-finite weight")]
    NonFiniteWeight,
}

impl ClassifierModel {
    /// Serializes the model to its binary format.
    pub fn encode(&self) -> Vec<u8> {
        let (conv1, conv2, dense) = self.parts();
        let n_params = conv1.weights.len()
            + conv1.bias.len()
            + conv2.weights.len()
            + conv2.bias.len()
            + dense.weights.len()
            + dense.bias.len();
        let mut out = Vec::with_capacity(24 + 4 * n_params);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_size() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed().to_le_bytes());
        for buf in [
            &conv1.weights,
            &conv1.bias,
            &conv2.weights,
            &conv2.bias,
            &dense.weights,
            &dense.bias,
        ] {
            for &v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a model from its binary format.
    pub fn decode(bytes: &[u8]) -> Result<Self, ModelCodecError> {
        if bytes.len() < 24 {
            if bytes.len() < 8 || &bytes[..8] != MAGIC {
                return Err(ModelCodecError::BadMagic);
            }
            return Err(ModelCodecError::Truncated {
                expected: 24,
                actual: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(ModelCodecError::BadMagic);
        }
        let n_classes = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let input_size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if n_classes < 2
            || n_classes > MAX_CLASSES
            || input_size < 4
            || input_size > MAX_INPUT_SIZE
            || input_size % 4 != 0
        {
            return Err(ModelCodecError::BadHeader {
                n_classes: n_classes as u64,
                input_size: input_size as u64,
            });
        }

        let dense_in = CONV2_CH * (input_size / 4) * (input_size / 4);
        let counts = [
            CONV1_CH * 3 * 9,
            CONV1_CH,
            CONV2_CH * CONV1_CH * 9,
            CONV2_CH,
            n_classes * dense_in,
            n_classes,
        ];
        let total: usize = counts.iter().sum();
        let expected = 24 + 4 * total;
        match bytes.len().cmp(&expected) {
            std::cmp::Ordering::Less => {
                return Err(ModelCodecError::Truncated {
                    expected,
                    actual: bytes.len(),
                })
            }
            std::cmp::Ordering::Greater => {
                return Err(ModelCodecError::TrailingBytes {
                    extra: bytes.len() - expected,
                })
            }
            std::cmp::Ordering::Equal => {}
        }

        let mut offset = 24;
        let mut read_block = |count: usize| -> Result<Vec<f32>, ModelCodecError> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(ModelCodecError::NonFiniteWeight);
                }
                out.push(v);
                offset += 4;
            }
            Ok(out)
        };

        let conv1 = Conv3x3 {
            in_ch: 3,
            out_ch: CONV1_CH,
            weights: read_block(counts[0])?,
            bias: read_block(counts[1])?,
        };
        let conv2 = Conv3x3 {
            in_ch: CONV1_CH,
            out_ch: CONV2_CH,
            weights: read_block(counts[2])?,
            bias: read_block(counts[3])?,
        };
        let dense = Dense {
            inputs: dense_in,
            outputs: n_classes,
            weights: read_block(counts[4])?,
            bias: read_block(counts[5])?,
        };
        Ok(ClassifierModel::from_parts(
            n_classes, input_size, seed, conv1, conv2, dense,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelCodecError> {
        std::fs::write(path, self.encode()).map_err(|source| ModelCodecError::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelCodecError> {
        let bytes = std::fs::read(path).map_err(|source| ModelCodecError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        ClassifierModel::decode(&bytes)
    }
}
