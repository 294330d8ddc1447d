//! Minibatch Adam training of encoder/decoder pairs under the vanilla,
//! neighborhood-reconstruction, curvature and isometry objectives, plus
//! checkpointing and evaluation reports.
//!
//! Every random choice derives from the config seed: network initialization
//! (encoder first, then decoder), the per-epoch shuffle keyed by
//! `(seed, epoch)`, and probe noise keyed by `(seed, global step, sample)`.
//! A run is therefore a pure function of config and dataset, and resuming a
//! checkpoint replays the same trajectory as an uninterrupted run.

mod adam;
mod checkpoint;
mod config;
mod eval;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::Checkpoint;
pub use config::{MetricConfig, ModelConfig, Objective, OptimConfig, TrainConfig};
pub use eval::{clean_reference, evaluate, EvalMetrics};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::RealArray;
use crate::autodiff::{grad_of_scalar, Chart, Mlp, MlpParams, ScalarGrad, Tensor};
use crate::data::{knn_graph, Dataset, NeighborhoodGraph};
use crate::error::{Error, Result};
use crate::geometry::AmbientMetric;
use crate::regularizers::{
    irae_loss, mecae_loss, nrae_loss, reconstruction_loss, IraeProbes, MecaeProbes, ProbeStream,
};
use crate::table::Table;

const SHUFFLE_PURPOSE: u64 = 0x7368_7566;

/// A trained (or in-training) encoder/decoder pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
}

impl Model {
    /// Fresh networks from the config seed: encoder drawn first, then decoder.
    pub fn init(config: &TrainConfig, dim: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let act = config.model.activation;
        let encoder = MlpParams::init(&config.encoder_widths(dim), act, &mut rng)?;
        let decoder = MlpParams::init(&config.decoder_widths(dim), act, &mut rng)?;
        Ok(Model { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: &RealArray) -> RealArray {
        crate::autodiff::eval(&self.encoder, x)
    }

    pub fn decode(&self, z: &RealArray) -> RealArray {
        crate::autodiff::eval(&self.decoder, z)
    }

    pub fn reconstruct(&self, x: &RealArray) -> RealArray {
        self.decode(&self.encode(x))
    }

    fn flat(&self) -> Vec<f64> {
        let mut p = self.encoder.flat();
        p.extend(self.decoder.flat());
        p
    }

    fn with_flat(&self, p: &[f64]) -> Result<Model> {
        let ne = self.encoder.param_count();
        Ok(Model {
            encoder: self.encoder.with_flat(&p[..ne])?,
            decoder: self.decoder.with_flat(&p[ne..])?,
        })
    }

    fn check_dims(&self, dim: usize) -> Result<()> {
        if self.encoder.in_dim() != dim || self.decoder.out_dim() != dim {
            return Err(Error::dim(
                "model data dimension",
                dim,
                self.encoder.in_dim(),
            ));
        }
        if self.encoder.out_dim() != self.decoder.in_dim() {
            return Err(Error::dim(
                "decoder latent dimension",
                self.encoder.out_dim(),
                self.decoder.in_dim(),
            ));
        }
        Ok(())
    }
}

/// One row of the loss history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean of the objective over the epoch's batches, each
    /// evaluated at the parameters before its own update.
    pub loss: f64,
}

/// Writes the history as a CSV with columns `epoch,loss`.
pub fn history_table(history: &[EpochRecord]) -> Table {
    let mut t = Table::new(vec!["epoch".into(), "loss".into()]);
    for r in history {
        t.push_row(vec![r.epoch as f64, r.loss]);
    }
    t
}

/// Probe noise for one step, matching the objective.
#[derive(Clone, Debug, PartialEq)]
pub enum StepProbes {
    None,
    Mecae(MecaeProbes),
    Irae(IraeProbes),
}

/// Stateful training loop. [`train`] drives it; the pieces are public so
/// tests can replay individual steps.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    data: RealArray,
    graph: Option<NeighborhoodGraph>,
    metric: AmbientMetric,
    model: Model,
    adam: AdamState,
    epoch: usize,
    history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate_for(dataset.dim(), dataset.len())?;
        let model = Model::init(&config, dataset.dim())?;
        let n = model.encoder.param_count() + model.decoder.param_count();
        Self::assemble(config, dataset, model, AdamState::new(n), 0, Vec::new())
    }

    /// Continues from a checkpoint written by a run with the same config.
    pub fn resume(config: TrainConfig, dataset: &Dataset, ck: Checkpoint) -> Result<Self> {
        config.validate_for(dataset.dim(), dataset.len())?;
        let hash = config.hash();
        if ck.config_hash != hash {
            return Err(Error::Config(format!(
                "checkpoint was written for config {} but this config hashes to {hash}",
                ck.config_hash
            )));
        }
        let model = Model {
            encoder: ck.encoder,
            decoder: ck.decoder,
        };
        model.check_dims(dataset.dim())?;
        if ck.adam.m.len() != model.flat().len() {
            return Err(Error::Format(
                "checkpoint optimizer state does not match the networks".into(),
            ));
        }
        Self::assemble(config, dataset, model, ck.adam, ck.epoch, ck.history)
    }

    fn assemble(
        config: TrainConfig,
        dataset: &Dataset,
        model: Model,
        adam: AdamState,
        epoch: usize,
        history: Vec<EpochRecord>,
    ) -> Result<Self> {
        let graph = match config.objective {
            // the configured neighborhood size counts the point itself
            Objective::Nrae => Some(knn_graph(
                dataset,
                config.nrae.k - 1,
                config.nrae.bandwidth,
            )?),
            _ => None,
        };
        let metric = config.metric.build()?;
        if let AmbientMetric::Diagonal(d) = &metric {
            if d.len() != dataset.dim() {
                return Err(Error::Config(format!(
                    "metric has {} diagonal entries but the data has dimension {}",
                    d.len(),
                    dataset.dim()
                )));
            }
        }
        Ok(Trainer {
            config,
            data: dataset.points().clone(),
            graph,
            metric,
            model,
            adam,
            epoch,
            history,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn graph(&self) -> Option<&NeighborhoodGraph> {
        self.graph.as_ref()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Optimizer steps taken so far; keys the probe stream of the next step.
    pub fn step(&self) -> u64 {
        self.adam.t
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Minibatches of the given 1-based epoch: a seeded permutation cut into
    /// `batch_size` chunks, the last one possibly shorter.
    pub fn batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.config.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(epoch as u64).to_le_bytes());
        key[16..24].copy_from_slice(&SHUFFLE_PURPOSE.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut order: Vec<usize> = (0..self.data.cols()).collect();
        order.shuffle(&mut rng);
        order
            .chunks(self.config.optim.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }

    /// Probe draws used by the optimizer step numbered `step`.
    pub fn probes(&self, batch_len: usize, step: u64) -> StepProbes {
        let est = &self.config.estimator;
        let stream = ProbeStream::new(self.config.seed ^ est.seed.rotate_left(32), step);
        let m = self.config.model.latent_dim;
        match self.config.objective {
            Objective::Mecae => StepProbes::Mecae(MecaeProbes::for_batch(
                &stream,
                batch_len,
                self.data.rows(),
                m,
                est,
            )),
            Objective::Irae => StepProbes::Irae(IraeProbes::for_batch(&stream, batch_len, m, est)),
            _ => StepProbes::None,
        }
    }

    /// The objective for `model` on `batch` with the given probes.
    pub fn objective_value(
        &self,
        model: &Model,
        batch: &[usize],
        probes: &StepProbes,
    ) -> Result<f64> {
        Ok(self
            .objective::<RealArray>((), &model.encoder, &model.decoder, batch, probes)?
            .item())
    }

    /// Objective value and parameter gradients.
    pub fn objective_grad(
        &self,
        model: &Model,
        batch: &[usize],
        probes: &StepProbes,
    ) -> Result<ScalarGrad> {
        grad_of_scalar(&model.encoder, &model.decoder, |tape, enc, dec| {
            self.objective(tape, enc, dec, batch, probes)
        })
    }

    fn objective<T>(
        &self,
        ctx: T::Ctx,
        enc: &Mlp<T::Param>,
        dec: &Mlp<T::Param>,
        batch: &[usize],
        probes: &StepProbes,
    ) -> Result<T>
    where
        T: Tensor,
        Mlp<T::Param>: Chart<T>,
    {
        let alpha = self.config.alpha;
        match (self.config.objective, probes) {
            (Objective::Nrae, _) => {
                let graph = self.graph.as_ref().expect("nrae trainer has a graph");
                let data = T::constant(ctx, &self.data);
                let x = data.select_cols(batch);
                let recon = reconstruction_loss(enc, dec, &x);
                let reg = nrae_loss(enc, dec, &data, batch, graph, self.config.nrae.order)?;
                Ok(recon.add(&reg.scale(alpha)))
            }
            (Objective::Vanilla, _) => Ok(reconstruction_loss(
                enc,
                dec,
                &T::constant(ctx, &self.data.select_cols(batch)),
            )),
            (Objective::Mecae, StepProbes::Mecae(p)) => mecae_loss(
                enc,
                dec,
                &T::constant(ctx, &self.data.select_cols(batch)),
                &self.metric,
                alpha,
                p,
            ),
            (Objective::Irae, StepProbes::Irae(p)) => irae_loss(
                enc,
                dec,
                &T::constant(ctx, &self.data.select_cols(batch)),
                &self.metric,
                alpha,
                p,
                self.config.estimator.per_sample,
            ),
            (obj, _) => Err(Error::InvalidArgument(format!(
                "probes do not match the {obj} objective"
            ))),
        }
    }

    /// Runs one epoch. On a non-finite loss or gradient the model is left at
    /// its last finite state and [`Error::Diverged`] is returned.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch + 1;
        let hyper = self.config.optim.hyper();
        let mut params = self.model.flat();
        let mut adam = self.adam.clone();
        let mut model = self.model.clone();
        let (mut total, mut count) = (0.0, 0usize);
        for (bi, batch) in self.batches(epoch).iter().enumerate() {
            let probes = self.probes(batch.len(), adam.t);
            let g = self
                .objective_grad(&model, batch, &probes)
                .map_err(|e| e.context(format!("epoch {epoch}, batch {bi}")))?;
            let mut grads = g.encoder.flat();
            grads.extend(g.decoder.flat());
            if !g.value.is_finite() || grads.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam_step(&mut params, &grads, &mut adam, &hyper)?;
            if params.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            model = model.with_flat(&params)?;
            total += g.value * batch.len() as f64;
            count += batch.len();
        }
        let rec = EpochRecord {
            epoch,
            loss: total / count as f64,
        };
        self.model = model;
        self.adam = adam;
        self.epoch = epoch;
        self.history.push(rec);
        Ok(rec)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            encoder: self.model.encoder.clone(),
            decoder: self.model.decoder.clone(),
            adam: self.adam.clone(),
            history: self.history.clone(),
            config_hash: self.config.hash(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where checkpoints go. The final state (or the last finite state on
    /// divergence) is always written here when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch at which the loss went non-finite; training stopped there and
    /// `model` holds the last finite parameters.
    pub diverged: Option<usize>,
    pub checkpoint: Checkpoint,
}

/// Trains for `config.optim.epochs` epochs in total (counting any epochs
/// already in a resumed checkpoint).
pub fn train(config: &TrainConfig, dataset: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    train_with(config, dataset, opts, |_| {})
}

/// [`train`] with a callback after every completed epoch.
pub fn train_with(
    config: &TrainConfig,
    dataset: &Dataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let mut trainer = match &opts.resume {
        Some(ck) => Trainer::resume(config.clone(), dataset, ck.clone())?,
        None => Trainer::new(config.clone(), dataset)?,
    };
    let save = |t: &Trainer, dir: &Path| t.checkpoint().save(dir);
    let every = config.optim.checkpoint_every;
    let mut diverged = None;
    while trainer.epoch() < config.optim.epochs {
        match trainer.run_epoch() {
            Ok(rec) => on_epoch(&rec),
            Err(Error::Diverged { epoch }) => {
                diverged = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(dir) = &opts.checkpoint_dir {
            if every > 0 && trainer.epoch() % every == 0 && trainer.epoch() < config.optim.epochs {
                save(&trainer, dir)?;
            }
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        save(&trainer, dir)?;
    }
    Ok(TrainOutcome {
        model: trainer.model().clone(),
        history: trainer.history().to_vec(),
        diverged,
        checkpoint: trainer.checkpoint(),
    })
}
