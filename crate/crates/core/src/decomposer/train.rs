use std::f64::consts::LN_2;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Direction, Partition, SchemeConfig};
use super::model::{CellLabel, Dataset, Model, Noise, WindowData};
use crate::autodiff::{AdamState, Graph, ParamSnapshot};
use crate::error::{Error, Result};
use crate::series::sample_indices;

/// RNG streams derived from one seed.
pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_BATCH: u64 = 1;
pub(crate) const STREAM_VAL: u64 = 2;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPoint {
    /// Optimizer steps completed.
    pub step: usize,
    pub beta: f64,
    /// Validation-mean KL per bottleneck.
    pub kl_nats: Vec<f64>,
    pub kl_bits: Vec<f64>,
    pub kl_total_bits: f64,
    /// Mean sampled InfoNCE over the training batches since the last log.
    pub nce_train_bits: f64,
    /// Posterior-mean InfoNCE over the fixed validation batches.
    pub nce_val_bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub direction: Direction,
    pub partition: Partition,
    pub tau: usize,
    pub seed: u64,
    pub cells: Vec<CellLabel>,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub val_batch_size: usize,
    pub val_batches: usize,
    pub points: Vec<LogPoint>,
    /// Parameter snapshots keyed by log-point index.
    #[serde(skip)]
    pub snapshots: Vec<(usize, ParamSnapshot)>,
    #[serde(skip)]
    pub final_params: Option<ParamSnapshot>,
}

impl RunRecord {
    pub fn labels(&self) -> Vec<String> {
        self.cells.iter().map(|c| c.to_string()).collect()
    }

    /// Log points taken after the warm-up ended.
    pub fn first_anneal_point(&self) -> usize {
        self.points
            .iter()
            .position(|p| p.step > self.warmup_steps)
            .unwrap_or(self.points.len())
    }

    /// Snapshot nearest to log point `index`.
    pub fn snapshot_near(&self, index: usize) -> Option<(usize, &ParamSnapshot)> {
        self.snapshots
            .iter()
            .min_by_key(|(i, _)| i.abs_diff(index))
            .map(|(i, s)| (*i, s))
    }

    /// Log point whose β is closest to `beta` on a log scale.
    pub fn point_near_beta(&self, beta: f64) -> Option<usize> {
        let lb = beta.ln();
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.beta.ln() - lb).abs();
                let db = (b.1.beta.ln() - lb).abs();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
    }

    /// Columns: step, beta, kl_total_bits, kl_<cell>_bits..., nce_train_bits, nce_val_bits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "beta".into(), "kl_total_bits".into()];
        header.extend(self.labels().iter().map(|l| format!("kl_{l}_bits")));
        header.extend(["nce_train_bits".to_string(), "nce_val_bits".into()]);
        out.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut row = vec![p.step.to_string(), p.beta.to_string(), p.kl_total_bits.to_string()];
            row.extend(p.kl_bits.iter().map(|v| v.to_string()));
            row.extend([p.nce_train_bits.to_string(), p.nce_val_bits.to_string()]);
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Contract(format!("csv: {e}"))
}

/// Fixed validation batches: a seeded shuffle of the validation windows cut
/// into up to `max_val_batches` batches of `val_batch_size`.
pub fn validation_batches(val: &WindowData, config: &SchemeConfig) -> Result<Vec<WindowData>> {
    let n = val.len();
    if n < 2 {
        return Err(Error::Size(format!("validation split has {n} windows, need at least 2")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(config.seed, STREAM_VAL));
    let size = config.val_batch_size.min(n);
    let count = (n / size).clamp(1, config.max_val_batches);
    Ok(idx
        .chunks_exact(size)
        .take(count)
        .map(|c| val.select(c))
        .collect())
}

/// Posterior-mean validation NCE (bits) and per-cell KL (nats), averaged over
/// the batches.
pub fn evaluate(model: &Model, batches: &[WindowData]) -> Result<(f64, Vec<f64>)> {
    let mut nce = 0.0;
    let mut kl = vec![0.0; model.n_bottlenecks()];
    for b in batches {
        let mut g = Graph::new(&model.store);
        let fwd = model.forward(&mut g, b, model.config.schedule.beta_initial, Noise::Mean)?;
        nce += g.scalar(fwd.nce_bits);
        for (acc, &v) in kl.iter_mut().zip(&fwd.kl_means) {
            *acc += g.scalar(v);
        }
    }
    let k = batches.len() as f64;
    kl.iter_mut().for_each(|v| *v /= k);
    Ok((nce / k, kl))
}

fn diverged(step: usize, e: Error, last_good: &Option<ParamSnapshot>) -> Error {
    match e {
        Error::NonFinite(msg) | Error::Diverged { msg, .. } => Error::Diverged {
            step,
            msg,
            last_good: last_good.clone().map(Box::new),
        },
        other => other,
    }
}

/// Runs warm-up plus the annealing schedule on `model`, logging every
/// `log_every` steps and at the last step.
pub fn train(model: &mut Model, data: &Dataset) -> Result<RunRecord> {
    let config = model.config.clone();
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Size("training split is empty".into()));
    }
    let val_batches = validation_batches(&data.val, &config)?;
    let mut rng = stream(config.seed, STREAM_BATCH);
    let mut adam = AdamState::new(&model.store, config.adam);
    let total = config.total_run_steps();
    let mut record = RunRecord {
        direction: config.direction,
        partition: config.partition,
        tau: config.tau,
        seed: config.seed,
        cells: model.cells.iter().map(|c| c.label.clone()).collect(),
        warmup_steps: config.warmup_steps(),
        total_steps: total,
        val_batch_size: val_batches[0].len(),
        val_batches: val_batches.len(),
        points: Vec::new(),
        snapshots: Vec::new(),
        final_params: None,
    };
    let mut last_good = Some(ParamSnapshot::capture(&model.store));
    let (mut nce_acc, mut nce_n) = (0.0, 0usize);
    for step in 0..total {
        let beta = config.beta_for_step(step)?;
        let idx = sample_indices(data.train.len(), config.batch_size, &mut rng)?;
        let batch = data.train.select(&idx);
        let grads = {
            let mut g = Graph::new(&model.store);
            let fwd = model
                .forward(&mut g, &batch, beta, Noise::Sample(&mut rng))
                .map_err(|e| diverged(step, e, &last_good))?;
            nce_acc += g.scalar(fwd.nce_bits);
            nce_n += 1;
            let grads = g.backward(fwd.loss).map_err(|e| diverged(step, e, &last_good))?;
            g.param_grads(&grads)
        };
        adam.step(&mut model.store, &grads)
            .map_err(|e| diverged(step, e, &last_good))?;
        let done = step + 1;
        if done % config.log_every == 0 || done == total {
            let (nce_val, kl_nats) = evaluate(model, &val_batches).map_err(|e| diverged(done, e, &last_good))?;
            let kl_bits: Vec<f64> = kl_nats.iter().map(|v| v / LN_2).collect();
            let point = LogPoint {
                step: done,
                beta,
                kl_total_bits: kl_bits.iter().sum(),
                kl_nats,
                kl_bits,
                nce_train_bits: nce_acc / nce_n as f64,
                nce_val_bits: nce_val,
            };
            log::debug!(
                "step {done}/{total} beta {beta:.3e} nce_val {:.3} kl {:.3}",
                point.nce_val_bits,
                point.kl_total_bits
            );
            record.points.push(point);
            (nce_acc, nce_n) = (0.0, 0);
            let snap = ParamSnapshot::capture(&model.store);
            let index = record.points.len() - 1;
            if config.snapshot_every > 0 && (index + 1) % config.snapshot_every == 0 {
                record.snapshots.push((index, snap.clone()));
            }
            last_good = Some(snap);
        }
    }
    let fin = ParamSnapshot::capture(&model.store);
    let last = record.points.len() - 1;
    if record.snapshots.last().map(|(i, _)| *i) != Some(last) {
        record.snapshots.push((last, fin.clone()));
    }
    record.final_params = Some(fin);
    Ok(record)
}

/// Model initialized from `config.seed`.
pub fn build_model(config: &SchemeConfig, data: &Dataset, with_source: bool) -> Result<Model> {
    Model::build(config, data, with_source, &mut stream(config.seed, STREAM_INIT))
}

/// Builds a model from `config.seed` and trains it.
pub fn fit(config: &SchemeConfig, data: &Dataset, with_source: bool) -> Result<(Model, RunRecord)> {
    let mut model = build_model(config, data, with_source)?;
    let record = train(&mut model, data)?;
    Ok((model, record))
}
