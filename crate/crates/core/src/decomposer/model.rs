use std::fmt;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{hidden, Direction, Partition, SchemeConfig};
use crate::autodiff::{Graph, Mlp, ParamStore, Var};
use crate::error::{Error, Result};
use crate::ib::{gaussian_noise, info_nce, lagrangian, GaussianEncoder};
use crate::series::{split, ChannelRoles, MultiSeries, SplitSpec, WindowTriple};

/// Windows flattened into row-major matrices, one row per anchor. Column
/// `k * C + c` holds channel `c` at row `k` of the window.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub x_past: Array2<f64>,
    pub y_past: Array2<f64>,
    pub y_future: Array2<f64>,
    pub cond_past: Option<Array2<f64>>,
    pub anchors: Vec<usize>,
}

fn flatten(parts: impl Iterator<Item = Array2<f64>>, n: usize, width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, width));
    for (i, p) in parts.enumerate() {
        out.row_mut(i)
            .assign(&Array2::from_shape_vec((1, width), p.iter().copied().collect()).expect("width").row(0));
    }
    out
}

impl WindowData {
    pub fn from_windows(windows: &[WindowTriple]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Size("no windows".into()))?;
        let n = windows.len();
        let x_past = flatten(windows.iter().map(|w| w.x_past.clone()), n, first.x_past.len());
        let y_past = flatten(windows.iter().map(|w| w.y_past.clone()), n, first.y_past.len());
        let y_future = flatten(windows.iter().map(|w| w.y_future.clone()), n, first.y_future.len());
        let cond_past = match &first.cond_past {
            Some(c) => {
                let w = c.len();
                let parts = windows
                    .iter()
                    .map(|w| w.cond_past.clone().ok_or_else(|| Error::Contract("mixed conditioning".into())))
                    .collect::<Result<Vec<_>>>()?;
                Some(flatten(parts.into_iter(), n, w))
            }
            None => None,
        };
        Ok(Self {
            x_past,
            y_past,
            y_future,
            cond_past,
            anchors: windows.iter().map(|w| w.anchor).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x_past: self.x_past.select(Axis(0), idx),
            y_past: self.y_past.select(Axis(0), idx),
            y_future: self.y_future.select(Axis(0), idx),
            cond_past: self.cond_past.as_ref().map(|c| c.select(Axis(0), idx)),
            anchors: idx.iter().map(|&i| self.anchors[i]).collect(),
        }
    }

    /// Target past with the conditioning past appended.
    pub fn context(&self) -> Array2<f64> {
        match &self.cond_past {
            Some(c) => ndarray::concatenate(Axis(1), &[self.y_past.view(), c.view()]).expect("same rows"),
            None => self.y_past.clone(),
        }
    }
}

/// Windows prepared for training: names, roles and the contiguous split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub source_names: Vec<String>,
    pub target_names: Vec<String>,
    pub cond_names: Vec<String>,
    pub tau: usize,
    pub train: WindowData,
    pub val: WindowData,
}

impl Dataset {
    pub fn new(series: &MultiSeries, roles: &ChannelRoles, tau: usize, train_fraction: f64) -> Result<Self> {
        let windows = crate::series::make_windows(series, roles, tau)?;
        let sp = split(&windows, SplitSpec { train_fraction })?;
        let names = |idx: &[usize]| idx.iter().map(|&i| series.names()[i].clone()).collect::<Vec<_>>();
        Ok(Self {
            source_names: names(&roles.source),
            target_names: names(&roles.target),
            cond_names: names(&roles.cond),
            tau,
            train: WindowData::from_windows(&sp.train)?,
            val: WindowData::from_windows(&sp.validation)?,
        })
    }
}

/// Position of a bottleneck cell: a channel (or all of them) at a time
/// offset relative to the anchor (or all offsets). Past offsets run
/// `-tau..=-1`, future offsets `0..tau`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabel {
    pub channel: Option<String>,
    pub offset: Option<i64>,
}

impl fmt::Display for CellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.channel {
            Some(c) => write!(f, "{c}")?,
            None => write!(f, "*")?,
        }
        match self.offset {
            Some(o) => write!(f, "@{o:+}"),
            None => write!(f, "@*"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub label: CellLabel,
    /// Columns of the flattened compressed window fed to this bottleneck.
    pub columns: Vec<usize>,
}

/// Partitions a `tau × channels` window into bottleneck cells.
pub fn partition_cells(partition: Partition, channels: &[String], tau: usize, past: bool) -> Vec<Cell> {
    let c = channels.len();
    let offset = |k: usize| if past { k as i64 - tau as i64 } else { k as i64 };
    match partition {
        Partition::Monolithic => vec![Cell {
            label: CellLabel {
                channel: None,
                offset: None,
            },
            columns: (0..tau * c).collect(),
        }],
        Partition::PerChannel => (0..c)
            .map(|j| Cell {
                label: CellLabel {
                    channel: Some(channels[j].clone()),
                    offset: None,
                },
                columns: (0..tau).map(|k| k * c + j).collect(),
            })
            .collect(),
        Partition::PerTimestep => (0..tau)
            .map(|k| Cell {
                label: CellLabel {
                    channel: None,
                    offset: Some(offset(k)),
                },
                columns: (0..c).map(|j| k * c + j).collect(),
            })
            .collect(),
        Partition::PerChannelTimestep => (0..tau)
            .flat_map(|k| {
                (0..c).map(move |j| (k, j))
            })
            .map(|(k, j)| Cell {
                label: CellLabel {
                    channel: Some(channels[j].clone()),
                    offset: Some(offset(k)),
                },
                columns: vec![k * c + j],
            })
            .collect(),
    }
}

/// Input widths seen by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shapes {
    pub source: usize,
    pub target: usize,
    pub cond: usize,
    pub tau: usize,
}

impl Shapes {
    pub fn of(data: &Dataset) -> Self {
        Self {
            source: data.source_names.len(),
            target: data.target_names.len(),
            cond: data.cond_names.len(),
            tau: data.tau,
        }
    }
}

/// Networks for one scheme: a shared context encoder over the target past
/// (plus conditioning), one Gaussian bottleneck per cell, the `f` head over
/// bottleneck samples and context, and the `g` head over the predicted
/// quantity.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: SchemeConfig,
    pub shapes: Shapes,
    pub store: ParamStore,
    pub cells: Vec<Cell>,
    context: Mlp,
    encoders: Vec<GaussianEncoder>,
    f_head: Mlp,
    g_head: Mlp,
}

/// Values from one forward pass.
pub struct Forward {
    pub loss: Var,
    pub nce_bits: Var,
    /// Batch-mean KL per cell (1×1, nats).
    pub kl_means: Vec<Var>,
    /// Per-sample KL per cell (n×1, nats).
    pub kl_samples: Vec<Var>,
}

pub enum Noise<'a> {
    /// Reparameterized samples drawn from this generator.
    Sample(&'a mut ChaCha8Rng),
    /// Posterior means, no sampling.
    Mean,
}

impl Model {
    /// Builds a model with bottlenecks over the compressed side chosen by
    /// `config.direction`. `with_source = false` drops every bottleneck so
    /// the `f` head sees only the context (the no-source baseline).
    pub fn build<R: Rng + ?Sized>(
        config: &SchemeConfig,
        data: &Dataset,
        with_source: bool,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = Shapes::of(data);
        if shapes.tau != config.tau {
            return Err(Error::Config(format!(
                "data cut with tau = {}, config has tau = {}",
                shapes.tau, config.tau
            )));
        }
        if shapes.target == 0 {
            return Err(Error::Config("no target channels".into()));
        }
        let (compressed_names, predicted_width, past) = match config.direction {
            Direction::SourcePast => (&data.source_names, shapes.target * shapes.tau, true),
            Direction::TargetFuture => (&data.target_names, shapes.source * shapes.tau, false),
        };
        if with_source && compressed_names.is_empty() {
            return Err(Error::Config("nothing to compress: no source channels".into()));
        }
        if predicted_width == 0 {
            return Err(Error::Config("predicted quantity is empty: no source channels".into()));
        }
        let cells = if with_source {
            partition_cells(config.partition, compressed_names, config.tau, past)
        } else {
            Vec::new()
        };
        let arch = &config.architecture;
        let mut store = ParamStore::new();
        let ctx_in = (shapes.target + shapes.cond) * shapes.tau;
        let context = Mlp::new(&mut store, "context", ctx_in, &hidden(&arch.context_hidden), arch.context_dim, rng);
        let encoders = cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                GaussianEncoder::new(
                    &mut store,
                    &format!("bottleneck{i}"),
                    cell.columns.len() + arch.context_dim,
                    &hidden(&arch.bottleneck_hidden),
                    arch.bottleneck_dim,
                    rng,
                )
            })
            .collect();
        let f_in = cells.len() * arch.bottleneck_dim + arch.context_dim;
        let f_head = Mlp::new(&mut store, "f", f_in, &hidden(&arch.head_hidden), arch.embed_dim, rng);
        let g_head = Mlp::new(
            &mut store,
            "g",
            predicted_width,
            &hidden(&arch.predicted_hidden),
            arch.embed_dim,
            rng,
        );
        Ok(Self {
            config: config.clone(),
            shapes,
            store,
            cells,
            context,
            encoders,
            f_head,
            g_head,
        })
    }

    pub fn n_bottlenecks(&self) -> usize {
        self.cells.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.cells.iter().map(|c| c.label.to_string()).collect()
    }

    fn compressed<'d>(&self, batch: &'d WindowData) -> &'d Array2<f64> {
        match self.config.direction {
            Direction::SourcePast => &batch.x_past,
            Direction::TargetFuture => &batch.y_future,
        }
    }

    fn predicted<'d>(&self, batch: &'d WindowData) -> &'d Array2<f64> {
        match self.config.direction {
            Direction::SourcePast => &batch.y_future,
            Direction::TargetFuture => &batch.x_past,
        }
    }

    /// Records the full Lagrangian for `batch` on `g`.
    pub fn forward(&self, g: &mut Graph, batch: &WindowData, beta: f64, mut noise: Noise) -> Result<Forward> {
        let n = batch.len();
        let ctx_in = g.input(batch.context())?;
        let ctx = self.context.forward(g, ctx_in)?;
        let compressed = self.compressed(batch);
        let mut samples = Vec::with_capacity(self.cells.len() + 1);
        let mut kl_samples = Vec::with_capacity(self.cells.len());
        let mut kl_means = Vec::with_capacity(self.cells.len());
        for (cell, enc) in self.cells.iter().zip(&self.encoders) {
            let cols = g.input(compressed.select(Axis(1), &cell.columns))?;
            let input = g.concat_cols(&[cols, ctx])?;
            let eps = match &mut noise {
                Noise::Sample(rng) => Some(gaussian_noise(n, enc.dim, *rng)),
                Noise::Mean => None,
            };
            let out = enc.forward(g, input, eps)?;
            samples.push(out.sample);
            kl_means.push(g.mean(out.kl)?);
            kl_samples.push(out.kl);
        }
        samples.push(ctx);
        let f_in = if samples.len() == 1 { ctx } else { g.concat_cols(&samples)? };
        let f_emb = self.f_head.forward(g, f_in)?;
        let p_in = g.input(self.predicted(batch).clone())?;
        let g_emb = self.g_head.forward(g, p_in)?;
        let nce_bits = info_nce(g, f_emb, g_emb)?;
        let loss = lagrangian(g, &kl_means, nce_bits, beta)?;
        Ok(Forward {
            loss,
            nce_bits,
            kl_means,
            kl_samples,
        })
    }

    /// Per-sample KL (nats) for every cell, posterior-mean pass, `n × cells`.
    pub fn kl_per_sample(&self, data: &WindowData) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((data.len(), self.cells.len()));
        if self.cells.is_empty() || data.is_empty() {
            return Ok(out);
        }
        let mut g = Graph::new(&self.store);
        let ctx_in = g.input(data.context())?;
        let ctx = self.context.forward(&mut g, ctx_in)?;
        let compressed = self.compressed(data);
        for (j, (cell, enc)) in self.cells.iter().zip(&self.encoders).enumerate() {
            let cols = g.input(compressed.select(Axis(1), &cell.columns))?;
            let input = g.concat_cols(&[cols, ctx])?;
            let o = enc.forward(&mut g, input, None)?;
            out.column_mut(j).assign(&g.value(o.kl).column(0));
        }
        Ok(out)
    }

    /// Posterior-mean InfoNCE (bits) on one batch.
    pub fn eval_nce(&self, batch: &WindowData) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let fwd = self.forward(&mut g, batch, self.config.schedule.beta_initial, Noise::Mean)?;
        Ok(g.scalar(fwd.nce_bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolnet::{fig2a_spec, simulate_seeded};
    use rand::SeedableRng;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn fig2a_data() -> Dataset {
        let s = simulate_seeded(&fig2a_spec(), 400, 1).unwrap();
        Dataset::new(&s, &ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]), 3, 0.8).unwrap()
    }

    #[test]
    fn cell_counts() {
        let data = fig2a_data();
        let mut cfg = SchemeConfig::synthetic();
        cfg.architecture = super::super::config::Architecture::compact();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (dir, part, n) in [
            (Direction::SourcePast, Partition::PerChannelTimestep, 6),
            (Direction::TargetFuture, Partition::PerChannelTimestep, 6),
            (Direction::SourcePast, Partition::Monolithic, 1),
            (Direction::TargetFuture, Partition::Monolithic, 1),
            (Direction::SourcePast, Partition::PerChannel, 2),
            (Direction::TargetFuture, Partition::PerTimestep, 3),
        ] {
            cfg.direction = dir;
            cfg.partition = part;
            let m = Model::build(&cfg, &data, true, &mut rng).unwrap();
            assert_eq!(m.n_bottlenecks(), n, "{dir:?} {part:?}");
        }
        cfg.direction = Direction::TargetFuture;
        cfg.partition = Partition::PerChannelTimestep;
        let m = Model::build(&cfg, &data, true, &mut rng).unwrap();
        let labels = m.labels();
        assert!(labels.contains(&"green@+0".to_string()));
        assert!(labels.contains(&"red@+2".to_string()));
        cfg.direction = Direction::SourcePast;
        let m = Model::build(&cfg, &data, true, &mut rng).unwrap();
        assert!(m.labels().contains(&"blue@-1".to_string()));
        assert!(m.labels().contains(&"orange@-3".to_string()));
    }

    #[test]
    fn partition_columns_cover_window() {
        let ch = names(&["a", "b", "c"]);
        for part in [
            Partition::Monolithic,
            Partition::PerChannel,
            Partition::PerTimestep,
            Partition::PerChannelTimestep,
        ] {
            let cells = partition_cells(part, &ch, 4, true);
            let mut cols: Vec<usize> = cells.iter().flat_map(|c| c.columns.clone()).collect();
            cols.sort_unstable();
            assert_eq!(cols, (0..12).collect::<Vec<_>>());
        }
        let per = partition_cells(Partition::PerChannel, &ch, 4, true);
        assert_eq!(per[1].columns, vec![1, 4, 7, 10]);
    }

    #[test]
    fn flattening_matches_windows() {
        let s = simulate_seeded(&fig2a_spec(), 50, 2).unwrap();
        let w = crate::series::make_windows(&s, &ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]), 3).unwrap();
        let d = WindowData::from_windows(&w).unwrap();
        for (i, win) in w.iter().enumerate() {
            for k in 0..3 {
                for c in 0..2 {
                    assert_eq!(d.x_past[[i, k * 2 + c]], win.x_past[[k, c]]);
                    assert_eq!(d.y_future[[i, k * 2 + c]], win.y_future[[k, c]]);
                }
            }
        }
    }

    #[test]
    fn baseline_without_source_has_no_bottleneck() {
        let data = fig2a_data();
        let mut cfg = SchemeConfig::synthetic();
        cfg.architecture = super::super::config::Architecture::compact();
        let m = Model::build(&cfg, &data, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.n_bottlenecks(), 0);
        let batch = data.val.select(&(0..16).collect::<Vec<_>>());
        let nce = m.eval_nce(&batch).unwrap();
        assert!(nce <= 4.0 + 1e-12);
    }

    #[test]
    fn tau_mismatch_rejected() {
        let data = fig2a_data();
        let mut cfg = SchemeConfig::synthetic();
        cfg.tau = 2;
        assert!(matches!(
            Model::build(&cfg, &data, true, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Config(_))
        ));
    }
}
