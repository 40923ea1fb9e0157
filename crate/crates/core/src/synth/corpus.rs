//! Corpus persistence.
//!
//! A corpus directory holds `manifest.json` plus three PNG subdirectories:
//! `images/` (the samples), `regions/` (sign-region masks), and `masks/`
//! (perturbation masks of attacked samples). The manifest lists every sample
//! with its labels, split, seed, and file names; writing is deterministic so
//! regenerating a corpus from the same seed yields byte-identical output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Label;
use crate::imaging::{load_mask_png, load_png, save_mask_png, save_png, ImagingError};
use crate::synth::{AttackBudget, Sample, SynthError};

pub const MANIFEST_SCHEMA: &str = "sticker-defense-corpus/1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest schema {found:?} is not {MANIFEST_SCHEMA:?}")]
    BadSchema { found: String },
    #[error("manifest entry {id:?} is invalid: {reason}")]
    BadEntry { id: String, reason: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Which evaluation pool a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Attacked,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub image: String,
    pub true_label: usize,
    pub attacked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_mask: Option<String>,
    pub sign_region: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_success: Option<bool>,
}

/// The on-disk corpus description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub canvas: usize,
    pub n_classes: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_budget: Option<AttackBudget>,
    pub samples: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Parses and structurally validates a manifest from JSON bytes.
    pub fn from_json_slice(bytes: &[u8]) -> Result<CorpusManifest, CorpusError> {
        let manifest: CorpusManifest = serde_json::from_slice(bytes)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(CorpusError::BadSchema {
                found: self.schema.clone(),
            });
        }
        for entry in &self.samples {
            let bad = |reason: &str| CorpusError::BadEntry {
                id: entry.id.clone(),
                reason: reason.to_string(),
            };
            if entry.true_label >= self.n_classes {
                return Err(bad("true_label out of range"));
            }
            if entry.attacked {
                match entry.target_label {
                    None => return Err(bad("attacked sample lacks target_label")),
                    Some(t) if t >= self.n_classes => {
                        return Err(bad("target_label out of range"))
                    }
                    Some(t) if t == entry.true_label => {
                        return Err(bad("target_label equals true_label"))
                    }
                    Some(_) => {}
                }
                if entry.perturbation_mask.is_none() {
                    return Err(bad("attacked sample lacks perturbation_mask"));
                }
                if entry.split != Split::Attacked {
                    return Err(bad("attacked sample not in the attacked split"));
                }
            } else if entry.target_label.is_some() || entry.perturbation_mask.is_some() {
                return Err(bad("unattacked sample carries attack metadata"));
            }
        }
        Ok(())
    }
}

/// In-memory corpus: unattacked train/test pools plus the attacked pool with
/// its recorded attack-success flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub canvas: usize,
    pub n_classes: usize,
    pub master_seed: u64,
    pub attack_budget: Option<AttackBudget>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub attacked: Vec<Sample>,
    pub attack_successes: Vec<bool>,
}

/// Writes the corpus directory; any existing files at the target paths are
/// overwritten.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    for sub in ["images", "regions", "masks"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|source| CorpusError::Io {
            path: dir.join(sub),
            source,
        })?;
    }
    let mut samples = Vec::new();
    let pools = [
        (Split::Train, &corpus.train),
        (Split::Test, &corpus.test),
        (Split::Attacked, &corpus.attacked),
    ];
    for (split, pool) in pools {
        for (i, sample) in pool.iter().enumerate() {
            let image_rel = format!("images/{}.png", sample.id);
            let region_rel = format!("regions/{}.png", sample.id);
            save_png(&sample.image, &dir.join(&image_rel))?;
            save_mask_png(&sample.sign_region, &dir.join(&region_rel))?;
            let mask_rel = if let Some(mask) = &sample.perturbation_mask {
                let rel = format!("masks/{}.png", sample.id);
                save_mask_png(mask, &dir.join(&rel))?;
                Some(rel)
            } else {
                None
            };
            samples.push(ManifestEntry {
                id: sample.id.clone(),
                split,
                image: image_rel,
                true_label: sample.true_label.0,
                attacked: sample.attacked,
                target_label: sample.target_label.map(|l| l.0),
                perturbation_mask: mask_rel,
                sign_region: region_rel,
                seed: sample.seed,
                attack_success: if split == Split::Attacked {
                    Some(corpus.attack_successes[i])
                } else {
                    None
                },
            });
        }
    }
    let manifest = CorpusManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        canvas: corpus.canvas,
        n_classes: corpus.n_classes,
        master_seed: corpus.master_seed,
        attack_budget: corpus.attack_budget.clone(),
        samples,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json).map_err(|source| CorpusError::Io {
        path: dir.join("manifest.json"),
        source,
    })?;
    Ok(())
}

/// Loads a corpus directory written by [`save_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = dir.join("manifest.json");
    let bytes = std::fs::read(&manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path,
        source,
    })?;
    let manifest = CorpusManifest::from_json_slice(&bytes)?;

    let mut corpus = Corpus {
        canvas: manifest.canvas,
        n_classes: manifest.n_classes,
        master_seed: manifest.master_seed,
        attack_budget: manifest.attack_budget.clone(),
        train: Vec::new(),
        test: Vec::new(),
        attacked: Vec::new(),
        attack_successes: Vec::new(),
    };
    for entry in &manifest.samples {
        let image = load_png(&dir.join(&entry.image))?;
        let sign_region = load_mask_png(&dir.join(&entry.sign_region))?;
        let sample = if entry.attacked {
            let mask_rel = entry
                .perturbation_mask
                .as_ref()
                .expect("validated attacked entry");
            let mask = load_mask_png(&dir.join(mask_rel))?;
            Sample::attacked(
                entry.id.clone(),
                image,
                Label(entry.true_label),
                Label(entry.target_label.expect("validated attacked entry")),
                mask,
                sign_region,
                entry.seed,
            )?
        } else {
            Sample::unattacked(
                entry.id.clone(),
                image,
                Label(entry.true_label),
                sign_region,
                entry.seed,
            )
        };
        match entry.split {
            Split::Train => corpus.train.push(sample),
            Split::Test => corpus.test.push(sample),
            Split::Attacked => {
                corpus.attacked.push(sample);
                corpus
                    .attack_successes
                    .push(entry.attack_success.unwrap_or(false));
            }
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_dataset;

    #[test]
    fn corpus_round_trip() {
        let split = generate_dataset(2, 3, 0.67, 5, 64).unwrap();
        let corpus = Corpus {
            canvas: 64,
            n_classes: 2,
            master_seed: 5,
            attack_budget: None,
            train: split.train,
            test: split.test,
            attacked: vec![],
            attack_successes: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &corpus).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        // Images pass through 8-bit PNG, so reloaded pixels equal the
        // quantized originals; masks and metadata round-trip exactly.
        assert_eq!(loaded.train.len(), corpus.train.len());
        assert_eq!(loaded.test.len(), corpus.test.len());
        for (got, want) in loaded
            .train
            .iter()
            .chain(&loaded.test)
            .zip(corpus.train.iter().chain(&corpus.test))
        {
            assert_eq!(got.id, want.id);
            assert_eq!(got.true_label, want.true_label);
            assert_eq!(got.seed, want.seed);
            assert_eq!(got.sign_region, want.sign_region);
            let quantized = crate::imaging::Image::decode_png(&want.image.encode_png()).unwrap();
            assert_eq!(got.image, quantized);
        }
        // A second save of the loaded corpus is byte-identical (quantization
        // is idempotent).
        let dir2 = tempfile::tempdir().unwrap();
        save_corpus(dir2.path(), &loaded).unwrap();
        let img = "images/c0_i0000.png";
        assert_eq!(
            std::fs::read(dir.path().join(img)).unwrap(),
            std::fs::read(dir2.path().join(img)).unwrap()
        );
    }

    #[test]
    fn save_is_byte_deterministic() {
        let split = generate_dataset(2, 2, 0.5, 9, 64).unwrap();
        let corpus = Corpus {
            canvas: 64,
            n_classes: 2,
            master_seed: 9,
            attack_budget: Some(AttackBudget::default()),
            train: split.train,
            test: split.test,
            attacked: vec![],
            attack_successes: vec![],
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        save_corpus(dir_a.path(), &corpus).unwrap();
        save_corpus(dir_b.path(), &corpus).unwrap();
        let a = std::fs::read(dir_a.path().join("manifest.json")).unwrap();
        let b = std::fs::read(dir_b.path().join("manifest.json")).unwrap();
        assert_eq!(a, b);
        let img = "images/c0_i0000.png";
        assert_eq!(
            std::fs::read(dir_a.path().join(img)).unwrap(),
            std::fs::read(dir_b.path().join(img)).unwrap()
        );
    }

    #[test]
    fn manifest_validation_rejects_bad_entries() {
        let manifest = CorpusManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            canvas: 64,
            n_classes: 2,
            master_seed: 0,
            attack_budget: None,
            samples: vec![ManifestEntry {
                id: "x".into(),
                split: Split::Attacked,
                image: "images/x.png".into(),
                true_label: 0,
                attacked: true,
                target_label: None,
                perturbation_mask: None,
                sign_region: "regions/x.png".into(),
                seed: 0,
                attack_success: None,
            }],
        };
        let bytes = serde_json::to_vec(&manifest).unwrap();
        assert!(matches!(
            CorpusManifest::from_json_slice(&bytes),
            Err(CorpusError::BadEntry { .. })
        ));
    }

    #[test]
    fn manifest_rejects_wrong_schema() {
        let json = br#"{"schema":"other/9","canvas":64,"n_classes":2,"master_seed":0,"samples":[]}"#;
        assert!(matches!(
            CorpusManifest::from_json_slice(json),
            Err(CorpusError::BadSchema { .. })
        ));
    }

    #[test]
    fn manifest_rejects_invalid_json() {
        assert!(matches!(
            CorpusManifest::from_json_slice(b"{nope"),
            Err(CorpusError::Json(_))
        ));
    }
}
