use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{load_weights, save_weights, MlpParams};
use crate::error::{Error, Result};

use super::adam::AdamState;
use super::EpochRecord;

const ENCODER_FILE: &str = "encoder.gae";
const DECODER_FILE: &str = "decoder.gae";
const STATE_FILE: &str = "state.json";

/// Training state after a completed epoch. On disk: a directory holding the
/// two weight files and a JSON sidecar with the optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
    /// [`TrainConfig::hash`](super::TrainConfig::hash) of the run.
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    epoch: usize,
    adam: AdamState,
    history: Vec<EpochRecord>,
    config_hash: String,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
        save_weights(&self.encoder, &dir.join(ENCODER_FILE))?;
        save_weights(&self.decoder, &dir.join(DECODER_FILE))?;
        let side = Sidecar {
            epoch: self.epoch,
            adam: self.adam.clone(),
            history: self.history.clone(),
            config_hash: self.config_hash.clone(),
        };
        let text = serde_json::to_string(&side).map_err(|e| Error::Format(e.to_string()))?;
        let path = dir.join(STATE_FILE);
        fs::write(&path, text)
            .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let encoder = load_weights(&dir.join(ENCODER_FILE))?;
        let decoder = load_weights(&dir.join(DECODER_FILE))?;
        let path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let side: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(Checkpoint {
            epoch: side.epoch,
            encoder,
            decoder,
            adam: side.adam,
            history: side.history,
            config_hash: side.config_hash,
        })
    }

    /// Loads only the networks, e.g. for evaluation.
    pub fn load_model(dir: &Path) -> Result<super::Model> {
        Ok(super::Model {
            encoder: load_weights(&dir.join(ENCODER_FILE))?,
            decoder: load_weights(&dir.join(DECODER_FILE))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_sine_curve;
    use crate::trainer::{train, Objective, TrainConfig, TrainOptions, Trainer};

    fn config() -> TrainConfig {
        let mut c = TrainConfig {
            seed: 21,
            objective: Objective::Mecae,
            alpha: 0.05,
            ..TrainConfig::default()
        };
        c.model.encoder_hidden = vec![6];
        c.model.decoder_hidden = vec![6];
        c.optim.batch_size = 10;
        c.optim.epochs = 4;
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = gen_sine_curve(30, 1.0, 2.0, 0.05, 1).unwrap();
        let mut t = Trainer::new(config(), &ds).unwrap();
        t.run_epoch().unwrap();
        let ck = t.checkpoint();
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), ck);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let ds = gen_sine_curve(30, 1.0, 2.0, 0.05, 2).unwrap();
        let c = config();
        let full = train(&c, &ds, &TrainOptions::default()).unwrap();
        let mut t = Trainer::new(c.clone(), &ds).unwrap();
        t.run_epoch().unwrap();
        t.run_epoch().unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.checkpoint().save(dir.path()).unwrap();
        let opts = TrainOptions {
            checkpoint_dir: None,
            resume: Some(Checkpoint::load(dir.path()).unwrap()),
        };
        let resumed = train(&c, &ds, &opts).unwrap();
        assert_eq!(resumed.history, full.history);
        assert_eq!(resumed.model, full.model);
    }

    #[test]
    fn resume_rejects_other_config() {
        let ds = gen_sine_curve(30, 1.0, 2.0, 0.05, 3).unwrap();
        let t = Trainer::new(config(), &ds).unwrap();
        let mut other = config();
        other.alpha = 0.5;
        assert!(matches!(
            Trainer::resume(other, &ds, t.checkpoint()),
            Err(Error::Config(_))
        ));
    }
}
