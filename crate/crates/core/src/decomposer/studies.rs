use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{Direction, Partition, SchemeConfig};
use super::model::Dataset;
use super::readout::{decompose, DecompositionResult};
use super::train::{fit, RunRecord};
use crate::error::{Error, Result};
use crate::ib::BetaSchedule;
use crate::series::{ChannelRoles, MultiSeries};

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<U>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                slots.lock().expect("no poisoned worker")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned worker")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect()
}

/// One finished decomposition run.
#[derive(Debug, Clone)]
pub struct Run {
    pub record: RunRecord,
    pub result: DecompositionResult,
}

pub fn run_scheme(data: &Dataset, config: &SchemeConfig) -> Result<Run> {
    let (_, record) = fit(config, data, true)?;
    let result = decompose(&record)?;
    Ok(Run { record, result })
}

/// Repeats a scheme over several seeds.
pub fn run_seeds(data: &Dataset, config: &SchemeConfig, seeds: &[u64], jobs: usize) -> Result<Vec<Run>> {
    parallel_map(seeds, jobs, |&seed| {
        let cfg = SchemeConfig {
            seed,
            ..config.clone()
        };
        run_scheme(data, &cfg)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareSummary {
    pub label: String,
    pub mean_bits: f64,
    pub std_bits: f64,
}

/// Mean and spread of TE and shares across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub te_bits: Vec<f64>,
    pub te_mean_bits: f64,
    pub te_std_bits: f64,
    pub shares: Vec<ShareSummary>,
    /// Dominant cell of each run.
    pub dominant: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn summarize(results: &[DecompositionResult]) -> Result<SeedSummary> {
    let first = results
        .first()
        .ok_or_else(|| Error::Contract("no runs to summarize".into()))?;
    let te: Vec<f64> = results.iter().map(|r| r.te_bits).collect();
    let (te_mean, te_std) = mean_std(&te);
    let shares = first
        .shares
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let v: Vec<f64> = results.iter().map(|r| r.shares[j].bits).collect();
            let (m, sd) = mean_std(&v);
            ShareSummary {
                label: s.label.clone(),
                mean_bits: m,
                std_bits: sd,
            }
        })
        .collect();
    Ok(SeedSummary {
        seeds: results.iter().map(|r| r.seed).collect(),
        te_bits: te,
        te_mean_bits: te_mean,
        te_std_bits: te_std,
        shares,
        dominant: results
            .iter()
            .map(|r| r.dominant().map(|s| s.label.clone()).unwrap_or_default())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub te_source_past_bits: f64,
    pub te_target_future_bits: f64,
    pub abs_diff_bits: f64,
    pub source_past: DecompositionResult,
    pub target_future: DecompositionResult,
}

/// Runs both directions on the same windows and seed.
pub fn direction_consistency(data: &Dataset, config: &SchemeConfig, jobs: usize) -> Result<DirectionReport> {
    let dirs = [Direction::SourcePast, Direction::TargetFuture];
    let mut runs = parallel_map(&dirs, jobs, |&direction| {
        run_scheme(
            data,
            &SchemeConfig {
                direction,
                ..config.clone()
            },
        )
    })
    .into_iter();
    let sp = runs.next().expect("two runs")?.result;
    let tf = runs.next().expect("two runs")?.result;
    Ok(DirectionReport {
        te_source_past_bits: sp.te_bits,
        te_target_future_bits: tf.te_bits,
        abs_diff_bits: (sp.te_bits - tf.te_bits).abs(),
        source_past: sp,
        target_future: tf,
    })
}

/// A directed pair of channel groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Clamped at zero.
    pub te_bits: f64,
    pub te_raw_bits: f64,
    pub nce_with_source_bits: f64,
    pub nce_without_source_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub tau: usize,
    pub entries: Vec<PairEntry>,
}

impl PairwiseResult {
    /// Square matrix over `channels` (row: source, column: target) for
    /// single-channel pairs; missing pairs are `None`.
    pub fn matrix(&self, channels: &[String]) -> Vec<Vec<Option<f64>>> {
        channels
            .iter()
            .map(|s| {
                channels
                    .iter()
                    .map(|t| {
                        self.entries
                            .iter()
                            .find(|e| e.source == [s.clone()] && e.target == [t.clone()])
                            .map(|e| e.te_bits)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Every ordered pair of distinct single channels.
pub fn all_pairs(channels: &[String]) -> Vec<Pair> {
    channels
        .iter()
        .flat_map(|s| {
            channels.iter().filter(move |t| *t != s).map(move |t| Pair {
                source: vec![s.clone()],
                target: vec![t.clone()],
            })
        })
        .collect()
}

/// Converged validation NCE: mean of the last three logged points.
fn converged_nce(record: &RunRecord) -> f64 {
    let k = record.points.len().min(3);
    record.points[record.points.len() - k..]
        .iter()
        .map(|p| p.nce_val_bits)
        .sum::<f64>()
        / k as f64
}

/// TE per pair from the difference of forecasting NCE with and without the
/// source past, both trained at a fixed β equal to `config`'s initial β.
/// `config.schedule.total_steps` sets the run length.
pub fn pairwise_te_nce(series: &MultiSeries, pairs: &[Pair], config: &SchemeConfig, jobs: usize) -> Result<PairwiseResult> {
    let fixed = SchemeConfig {
        direction: Direction::SourcePast,
        partition: Partition::Monolithic,
        schedule: BetaSchedule {
            beta_final: config.schedule.beta_initial,
            ..config.schedule
        },
        warmup_fraction: 0.0,
        ..config.clone()
    };
    fixed.validate()?;
    let mut prepared = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.source.iter().any(|s| p.target.contains(s)) {
            return Err(Error::Config(format!(
                "pair {:?} -> {:?} shares channels",
                p.source, p.target
            )));
        }
        let roles = ChannelRoles::new(series.indices_of(&p.source)?, series.indices_of(&p.target)?, Vec::new());
        roles.validate(series.n_channels())?;
        prepared.push(roles);
    }
    let jobs_list: Vec<(usize, bool)> = (0..pairs.len()).flat_map(|i| [(i, true), (i, false)]).collect();
    let nce = parallel_map(&jobs_list, jobs, |&(i, with_source)| -> Result<f64> {
        let data = Dataset::new(series, &prepared[i], fixed.tau, fixed.train_fraction)?;
        let (_, record) = fit(&fixed, &data, with_source)?;
        Ok(converged_nce(&record))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let entries = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (with, without) = (nce[2 * i], nce[2 * i + 1]);
            let raw = with - without;
            PairEntry {
                source: p.source.clone(),
                target: p.target.clone(),
                te_bits: raw.max(0.0),
                te_raw_bits: raw,
                nce_with_source_bits: with,
                nce_without_source_bits: without,
            }
        })
        .collect();
    Ok(PairwiseResult {
        tau: fixed.tau,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<u64> = (0..37).collect();
        assert_eq!(parallel_map(&v, 4, |x| x * x), v.iter().map(|x| x * x).collect::<Vec<_>>());
        assert_eq!(parallel_map(&v, 1, |x| x + 1)[36], 37);
    }

    #[test]
    fn pairs_exclude_self() {
        let ch: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = all_pairs(&ch);
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|p| p.source != p.target));
    }

    #[test]
    fn overlapping_pair_rejected() {
        let s = crate::boolnet::simulate_seeded(&crate::boolnet::fig2a_spec(), 200, 0).unwrap();
        let pair = Pair {
            source: vec!["red".into()],
            target: vec!["red".into()],
        };
        assert!(matches!(
            pairwise_te_nce(&s, &[pair], &SchemeConfig::synthetic(), 1),
            Err(Error::Config(_))
        ));
    }
}
