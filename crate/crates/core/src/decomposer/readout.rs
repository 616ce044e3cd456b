use std::f64::consts::LN_2;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::Direction;
use super::model::{CellLabel, Model, WindowData};
use super::train::{csv_err, RunRecord};
use crate::error::{Error, Result};

/// Half-width of the centered moving average applied to validation NCE.
const SMOOTH_RADIUS: usize = 1;
/// Points averaged at the information-poor end.
const POOR_POINTS: usize = 3;
/// Plateau tolerance over the last tenth of the warm-up, in bits.
const PLATEAU_BITS: f64 = 0.02;
/// Allowed NCE loss relative to the rich endpoint when locating the share
/// point: the larger of this fraction of the TE and `SHARE_FLOOR_BITS`.
const SHARE_TE_FRACTION: f64 = 0.05;
const SHARE_FLOOR_BITS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub cell: CellLabel,
    pub label: String,
    pub bits: f64,
    /// Share of the total KL at the same point.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub step: usize,
    pub beta: f64,
    pub kl_total_bits: f64,
    pub nce_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub direction: Direction,
    pub seed: u64,
    /// Clamped at zero.
    pub te_bits: f64,
    pub te_raw_bits: f64,
    pub rich_nce_bits: f64,
    pub rich_index: usize,
    /// NCE at the information-poor endpoint: the self-forecasting information
    /// for source-past runs, I(Y_past; X_past) for target-future runs.
    pub self_info_bits: f64,
    /// Whether validation NCE had settled before annealing started.
    pub plateau: bool,
    /// Log point where shares are read.
    pub share_index: usize,
    pub share_beta: f64,
    pub shares: Vec<Share>,
    pub info_plane: Vec<PlanePoint>,
}

impl DecompositionResult {
    pub fn share(&self, label: &str) -> Option<&Share> {
        self.shares.iter().find(|s| s.label == label)
    }

    pub fn total_share_bits(&self) -> f64 {
        self.shares.iter().map(|s| s.bits).sum()
    }

    /// Cell with the largest share.
    pub fn dominant(&self) -> Option<&Share> {
        self.shares.iter().max_by(|a, b| a.bits.total_cmp(&b.bits))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn smoothed(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(SMOOTH_RADIUS);
            let hi = (i + SMOOTH_RADIUS + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Reads TE, self-information and shares off a finished run.
///
/// The rich endpoint is the peak of the smoothed validation NCE, the poor
/// endpoint the mean of the last few points. Shares are the per-cell KL at
/// the highest-β point whose smoothed NCE is still within tolerance of the
/// rich endpoint, so they reflect only what prediction requires.
pub fn decompose(record: &RunRecord) -> Result<DecompositionResult> {
    let pts = &record.points;
    if pts.len() < 2 {
        return Err(Error::Contract(format!(
            "decomposition needs at least 2 logged points, got {}",
            pts.len()
        )));
    }
    let nce: Vec<f64> = pts.iter().map(|p| p.nce_val_bits).collect();
    let smooth = smoothed(&nce);
    let (rich_index, rich) = smooth
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let k = POOR_POINTS.min(pts.len());
    let poor = nce[pts.len() - k..].iter().sum::<f64>() / k as f64;
    let te_raw = rich - poor;
    let te = te_raw.max(0.0);

    let tol = (SHARE_TE_FRACTION * te).max(SHARE_FLOOR_BITS);
    let share_index = (rich_index..pts.len())
        .rev()
        .find(|&i| smooth[i] >= rich - tol)
        .unwrap_or(rich_index);
    let at = &pts[share_index];
    let total: f64 = at.kl_bits.iter().sum();
    let shares = record
        .cells
        .iter()
        .zip(&at.kl_bits)
        .map(|(cell, &bits)| Share {
            cell: cell.clone(),
            label: cell.to_string(),
            bits: bits.max(0.0),
            fraction: if total > 0.0 { bits.max(0.0) / total } else { 0.0 },
        })
        .collect();

    Ok(DecompositionResult {
        direction: record.direction,
        seed: record.seed,
        te_bits: te,
        te_raw_bits: te_raw,
        rich_nce_bits: rich,
        rich_index,
        self_info_bits: poor,
        plateau: plateau(record),
        share_index,
        share_beta: at.beta,
        shares,
        info_plane: pts
            .iter()
            .map(|p| PlanePoint {
                step: p.step,
                beta: p.beta,
                kl_total_bits: p.kl_total_bits,
                nce_bits: p.nce_val_bits,
            })
            .collect(),
    })
}

/// NCE change below the tolerance across the last tenth of the warm-up.
fn plateau(record: &RunRecord) -> bool {
    let w = record.warmup_steps;
    if w == 0 {
        return false;
    }
    let from = w - w / 10;
    let before = record.points.iter().rev().find(|p| p.step <= from);
    let end = record.points.iter().rev().find(|p| p.step <= w);
    match (before, end) {
        (Some(a), Some(b)) if a.step < b.step => (b.nce_val_bits - a.nce_val_bits).abs() < PLATEAU_BITS,
        _ => false,
    }
}

/// Per-anchor KL cost of every bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKLTrace {
    pub labels: Vec<String>,
    pub anchors: Vec<usize>,
    /// `anchors × cells`, nats.
    pub kl_nats: Array2<f64>,
}

impl LocalKLTrace {
    pub fn mean_nats(&self) -> Vec<f64> {
        self.kl_nats
            .columns()
            .into_iter()
            .map(|c| c.mean().unwrap_or(0.0))
            .collect()
    }

    pub fn mean_bits(&self) -> Vec<f64> {
        self.mean_nats().into_iter().map(|v| v / LN_2).collect()
    }

    /// Columns: anchor, then one `<cell>_nats` column per bottleneck.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["anchor".to_string()];
        header.extend(self.labels.iter().map(|l| format!("{l}_nats")));
        out.write_record(&header).map_err(csv_err)?;
        for (i, a) in self.anchors.iter().enumerate() {
            let mut row = vec![a.to_string()];
            row.extend(self.kl_nats.row(i).iter().map(|v| v.to_string()));
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

/// Copy of `model` with the parameters of the snapshot nearest to log point
/// `index`.
pub fn model_at(model: &Model, record: &RunRecord, index: usize) -> Result<(usize, Model)> {
    let (at, snap) = record
        .snapshot_near(index)
        .ok_or_else(|| Error::Contract("run record holds no snapshots".into()))?;
    let mut m = model.clone();
    snap.restore(&mut m.store)?;
    Ok((at, m))
}

/// KL cost per anchor and bottleneck under `model`'s current parameters.
pub fn local_kl_trace(model: &Model, windows: &WindowData) -> Result<LocalKLTrace> {
    let kl = model.kl_per_sample(windows)?.mapv(|v| v.max(0.0));
    Ok(LocalKLTrace {
        labels: model.labels(),
        anchors: windows.anchors.clone(),
        kl_nats: kl,
    })
}

#[cfg(test)]
mod tests {
    use super::super::config::Partition;
    use super::super::train::LogPoint;
    use super::*;

    fn record(nce: &[f64], kl: &[[f64; 2]]) -> RunRecord {
        RunRecord {
            direction: Direction::SourcePast,
            partition: Partition::PerChannel,
            tau: 1,
            seed: 0,
            cells: vec![
                CellLabel {
                    channel: Some("a".into()),
                    offset: None,
                },
                CellLabel {
                    channel: Some("b".into()),
                    offset: None,
                },
            ],
            warmup_steps: 200,
            total_steps: 100 * nce.len(),
            val_batch_size: 64,
            val_batches: 1,
            points: nce
                .iter()
                .zip(kl)
                .enumerate()
                .map(|(i, (&n, k))| LogPoint {
                    step: 100 * (i + 1),
                    beta: 1e-3 * 2f64.powi(i as i32),
                    kl_nats: k.iter().map(|v| v * LN_2).collect(),
                    kl_bits: k.to_vec(),
                    kl_total_bits: k.iter().sum(),
                    nce_train_bits: n,
                    nce_val_bits: n,
                })
                .collect(),
            snapshots: Vec::new(),
            final_params: None,
        }
    }

    #[test]
    fn endpoints_and_shares() {
        let nce = [2.0, 2.0, 2.0, 2.0, 1.95, 1.0, 0.5, 0.5, 0.5];
        let kl = [
            [9.0, 9.0],
            [8.0, 8.0],
            [6.0, 5.0],
            [2.0, 1.0],
            [1.0, 0.0],
            [0.5, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
        ];
        let r = decompose(&record(&nce, &kl)).unwrap();
        assert!((r.te_bits - 1.5).abs() < 1e-12);
        assert!((r.self_info_bits - 0.5).abs() < 1e-12);
        // Smoothed NCE at index 3 is 1.983, the last within 0.075 of 2.0.
        assert_eq!(r.share_index, 3);
        assert_eq!(r.share("a@*").unwrap().bits, 2.0);
        assert!((r.share("b@*").unwrap().fraction - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.dominant().unwrap().label, "a@*");
        assert!(r.plateau);
    }

    #[test]
    fn rich_endpoint_never_below_poor() {
        let r = decompose(&record(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.9], &[[0.0, 0.0]; 7])).unwrap();
        assert!(r.te_raw_bits >= 0.0);
        assert_eq!(r.te_bits, r.te_raw_bits);
    }

    #[test]
    fn too_short_rejected() {
        assert!(matches!(decompose(&record(&[1.0], &[[0.0, 0.0]])), Err(Error::Contract(_))));
    }

    #[test]
    fn trace_csv_layout() {
        let t = LocalKLTrace {
            labels: vec!["a@-1".into(), "b@-1".into()],
            anchors: vec![3, 4],
            kl_nats: ndarray::array![[0.5, 0.0], [1.0, 0.25]],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "anchor,a@-1_nats,b@-1_nats\n3,0.5,0\n4,1,0.25\n"
        );
        assert_eq!(t.mean_nats(), vec![0.75, 0.125]);
    }
}
