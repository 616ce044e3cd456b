use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use tedecomp::autodiff::ParamSnapshot;
use tedecomp::decomposer::{
    all_pairs, build_model, decompose, fit, local_kl_trace, model_at, pairwise_te_nce, parallel_map, summarize, Dataset,
    DecompositionResult, Model, PairwiseResult, RunRecord, SchemeConfig,
};
use tedecomp::discrete_info::{local_te, plugin_self_info, plugin_te, plugin_te_future, TeEstimate};
use tedecomp::series::{save_csv, ChannelKind, ChannelRoles, MultiSeries};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::svg;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Oracle,
    Decompose,
    Pairwise,
    Trace,
    Verify,
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: Command,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub wall_seconds: f64,
    pub artifacts: Vec<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("serializable");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects written files relative to the output directory.
pub struct Out {
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> CliResult<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        self.artifacts.push(rel.to_string());
        Ok(p)
    }

    pub fn text(&mut self, rel: &str, text: &str) -> CliResult<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(tedecomp::Error::from)?;
        self.text(rel, &(text + "\n"))
    }

    fn with<F>(&mut self, rel: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&Path) -> tedecomp::Result<()>,
    {
        let p = self.path(rel)?;
        Ok(f(&p)?)
    }
}

fn is_binary(series: &MultiSeries) -> bool {
    series.kinds().iter().all(|k| *k == ChannelKind::Binary)
}

/// Runs `command` and writes its artifacts plus `manifest.json` under the
/// configured output directory.
pub fn run(command: Command, cfg: &ExperimentConfig, jobs: usize) -> CliResult<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Out::new(&cfg.output)?;
    out.json("config.json", cfg)?;
    match command {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::Oracle => {
            oracle(cfg, &mut out)?;
        }
        Command::Decompose => {
            decompose_cmd(cfg, jobs, &mut out)?;
        }
        Command::Pairwise => {
            pairwise(cfg, jobs, &mut out)?;
        }
        Command::Trace => {
            trace(cfg, &mut out)?;
        }
        Command::Verify => {
            let outcomes = crate::verify::run_all(&cfg.verify, jobs, &cfg.output.join("verify"), |o| {
                println!("{}", o.line())
            })?;
            out.json("verify.json", &outcomes)?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                write_manifest(command, cfg, jobs, start, &mut out)?;
                return Err(CliError::Verify {
                    failed,
                    total: outcomes.len(),
                });
            }
        }
    }
    write_manifest(command, cfg, jobs, start, &mut out)
}

fn write_manifest(command: Command, cfg: &ExperimentConfig, jobs: usize, start: Instant, out: &mut Out) -> CliResult<Manifest> {
    let seeds = match command {
        Command::Decompose | Command::Trace | Command::Pairwise => cfg.seeds()?,
        _ => Vec::new(),
    };
    let mut manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_sha256: config_hash(cfg),
        seeds,
        jobs,
        wall_seconds: start.elapsed().as_secs_f64(),
        artifacts: out.artifacts.clone(),
    };
    manifest.artifacts.push("manifest.json".into());
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Out) -> CliResult<()> {
    let series = cfg.load_series()?;
    out.with("series.csv", |p| save_csv(&series, p))?;
    match &cfg.data {
        DataSource::Builtin {
            network, wiring_seed, ..
        } => {
            let spec = tedecomp::boolnet::builtin(network, *wiring_seed)?;
            out.json("network.json", &spec)?;
        }
        DataSource::Network { spec, .. } => out.json("network.json", spec)?,
        DataSource::Csv { .. } => {}
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub te: TeEstimate,
    pub te_future_bits: f64,
    pub self_info_bits: f64,
    pub local_mean_bits: f64,
    pub local_min_bits: f64,
    pub local_max_bits: f64,
}

pub fn oracle(cfg: &ExperimentConfig, out: &mut Out) -> CliResult<OracleReport> {
    let series = cfg.load_series()?;
    let roles = cfg.roles(&series)?;
    let tau = cfg.scheme()?.tau;
    let te = plugin_te(&series, &roles, tau)?;
    let fut = plugin_te_future(&series, &roles, tau)?;
    let local = local_te(&series, &roles, tau)?;
    let bits: Vec<f64> = local.iter().map(|l| l.bits).collect();
    let report = OracleReport {
        te_future_bits: fut.value_bits,
        self_info_bits: plugin_self_info(&series, &roles, tau)?,
        local_mean_bits: bits.iter().sum::<f64>() / bits.len() as f64,
        local_min_bits: bits.iter().copied().fold(f64::INFINITY, f64::min),
        local_max_bits: bits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        te,
    };
    let mut csv = String::from("anchor,local_te_bits\n");
    for l in &local {
        csv.push_str(&format!("{},{}\n", l.anchor, l.bits));
    }
    out.text("local_te.csv", &csv)?;
    out.json("oracle.json", &report)?;
    Ok(report)
}

fn dataset(cfg: &ExperimentConfig, scheme: &SchemeConfig) -> CliResult<(MultiSeries, ChannelRoles, Dataset)> {
    let series = cfg.load_series()?;
    let roles = cfg.roles(&series)?;
    let data = Dataset::new(&series, &roles, scheme.tau, scheme.train_fraction)?;
    Ok((series, roles, data))
}

fn plane_chart(record: &RunRecord, result: &DecompositionResult) -> String {
    let nce: Vec<f64> = record.points.iter().map(|p| p.nce_val_bits).collect();
    let mut series = vec![svg::Series {
        name: "total".into(),
        points: result.info_plane.iter().map(|p| (p.kl_total_bits, p.nce_bits)).collect(),
    }];
    for (j, label) in record.labels().into_iter().enumerate() {
        series.push(svg::Series {
            name: label,
            points: record.points.iter().zip(&nce).map(|(p, &n)| (p.kl_bits[j], n)).collect(),
        });
    }
    svg::line_chart(
        &format!("Information plane (TE {:.3} bits)", result.te_bits),
        "KL cost (bits, upper bound)",
        "validation InfoNCE (bits)",
        &series,
        false,
    )
}

fn share_chart(result: &DecompositionResult) -> String {
    let bars: Vec<(String, f64)> = result.shares.iter().map(|s| (s.label.clone(), s.bits)).collect();
    svg::bar_chart(
        &format!("KL shares at beta {:.3e}", result.share_beta),
        "KL (bits)",
        &bars,
    )
}

/// Artifacts of one decomposition run under `prefix`.
pub fn write_run(out: &mut Out, prefix: &str, record: &RunRecord, result: &DecompositionResult) -> CliResult<()> {
    out.with(&format!("{prefix}run_record.csv"), |p| record.save_csv(p))?;
    out.json(&format!("{prefix}decomposition.json"), result)?;
    if let (Some(first), Some(last)) = (record.points.first(), record.points.last()) {
        out.json(
            &format!("{prefix}run_meta.json"),
            &json!({
                "beta_first_logged": first.beta,
                "beta_last_logged": last.beta,
                // Low β keeps information, high β squeezes it out.
                "beta_sweep": if last.beta >= first.beta { "increasing" } else { "decreasing" },
                "warmup_steps": record.warmup_steps,
                "total_steps": record.total_steps,
                "te_readout": "NCE(low-beta endpoint) - NCE(high-beta endpoint), floored at 0",
            }),
        )?;
    }
    out.text(&format!("{prefix}information_plane.svg"), &plane_chart(record, result))?;
    out.text(&format!("{prefix}shares.svg"), &share_chart(result))?;
    if let Some(fin) = &record.final_params {
        let stem = out.dir.join(format!("{prefix}params_final"));
        fin.save(&stem)?;
        out.artifacts.push(format!("{prefix}params_final.bin"));
        out.artifacts.push(format!("{prefix}params_final.json"));
    }
    if let Some((at, snap)) = record.snapshot_near(result.share_index) {
        let stem = out.dir.join(format!("{prefix}params_share_point"));
        snap.save(&stem)?;
        out.artifacts.push(format!("{prefix}params_share_point.bin"));
        out.artifacts.push(format!("{prefix}params_share_point.json"));
        out.json(
            &format!("{prefix}params_share_point_meta.json"),
            &json!({"log_point": at, "beta": record.points[at].beta}),
        )?;
    }
    Ok(())
}

pub fn decompose_cmd(cfg: &ExperimentConfig, jobs: usize, out: &mut Out) -> CliResult<Value> {
    let scheme = cfg.scheme()?;
    let seeds = cfg.seeds()?;
    let (series, roles, data) = dataset(cfg, &scheme)?;
    let runs = parallel_map(&seeds, jobs, |&seed| -> CliResult<(RunRecord, DecompositionResult)> {
        let s = SchemeConfig {
            seed,
            ..scheme.clone()
        };
        let (_, record) = fit(&s, &data, true)?;
        let result = decompose(&record)?;
        Ok((record, result))
    })
    .into_iter()
    .collect::<CliResult<Vec<_>>>()?;
    for (record, result) in &runs {
        write_run(out, &format!("seed_{}/", record.seed), record, result)?;
    }
    let results: Vec<DecompositionResult> = runs.into_iter().map(|(_, r)| r).collect();
    let oracle = if is_binary(&series) {
        plugin_te(&series, &roles, scheme.tau).ok().map(|t| t.value_bits)
    } else {
        None
    };
    let summary = json!({
        "direction": scheme.direction,
        "partition": scheme.partition,
        "tau": scheme.tau,
        "summary": summarize(&results)?,
        "plugin_te_bits": oracle,
    });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub result: PairwiseResult,
    /// Plugin estimate per entry when the data are binary.
    pub plugin_te_bits: Vec<Option<f64>>,
}

pub fn pairwise(cfg: &ExperimentConfig, jobs: usize, out: &mut Out) -> CliResult<PairwiseReport> {
    let mut scheme = cfg.scheme()?;
    scheme.seed = cfg.seeds()?[0];
    if let Some(steps) = cfg.pairwise.steps {
        scheme.schedule.total_steps = steps;
    }
    let series = cfg.load_series()?;
    let channels = cfg
        .pairwise
        .channels
        .clone()
        .unwrap_or_else(|| series.names().to_vec());
    let pairs = cfg.pairwise.pairs.clone().unwrap_or_else(|| all_pairs(&channels));
    let result = pairwise_te_nce(&series, &pairs, &scheme, jobs)?;
    let plugin = result
        .entries
        .iter()
        .map(|e| {
            if !is_binary(&series) {
                return Ok(None);
            }
            let roles = ChannelRoles::new(series.indices_of(&e.source)?, series.indices_of(&e.target)?, Vec::new());
            Ok(plugin_te(&series, &roles, scheme.tau).ok().map(|t| t.value_bits))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = PairwiseReport {
        result,
        plugin_te_bits: plugin,
    };
    out.json("pairwise.json", &report)?;
    let single = report.result.entries.iter().all(|e| e.source.len() == 1 && e.target.len() == 1);
    let chart = if single {
        let matrix = report.result.matrix(&channels);
        svg::heatmap("Pairwise transfer entropy (bits)", &channels, &channels, &matrix)
    } else {
        let bars: Vec<(String, f64)> = report
            .result
            .entries
            .iter()
            .map(|e| (format!("{}→{}", e.source.join("+"), e.target.join("+")), e.te_bits))
            .collect();
        svg::bar_chart("Pairwise transfer entropy", "TE (bits)", &bars)
    };
    out.text("pairwise.svg", &chart)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    pub labels: Vec<String>,
    /// Log point of the operating point; absent when read from a checkpoint.
    pub log_point: Option<usize>,
    pub beta: Option<f64>,
    pub nce_val_bits: Option<f64>,
    /// Validation-mean KL at the operating point (nats).
    pub validation_kl_nats: Option<Vec<f64>>,
    pub trace_mean_nats: Vec<f64>,
    pub trace_max_nats: Vec<f64>,
    pub n_anchors: usize,
    /// TE read from the run the operating point came from.
    pub run_te_bits: Option<f64>,
    pub plugin_te_bits: Option<f64>,
}

pub fn trace(cfg: &ExperimentConfig, out: &mut Out) -> CliResult<TraceReport> {
    let mut scheme = cfg.scheme()?;
    scheme.seed = cfg.seeds()?[0];
    let (series, roles, data) = dataset(cfg, &scheme)?;
    let mut report = TraceReport {
        labels: Vec::new(),
        log_point: None,
        beta: None,
        nce_val_bits: None,
        validation_kl_nats: None,
        trace_mean_nats: Vec::new(),
        trace_max_nats: Vec::new(),
        n_anchors: data.val.len(),
        run_te_bits: None,
        plugin_te_bits: if is_binary(&series) {
            plugin_te(&series, &roles, scheme.tau).ok().map(|t| t.value_bits)
        } else {
            None
        },
    };
    let model: Model = match &cfg.trace.checkpoint {
        Some(stem) => {
            let mut m = build_model(&scheme, &data, true)?;
            ParamSnapshot::load(stem)?.restore(&mut m.store)?;
            m
        }
        None => {
            let (model, record) = fit(&scheme, &data, true)?;
            let result = decompose(&record)?;
            let index = match cfg.trace.beta {
                Some(b) => record.point_near_beta(b).expect("nonempty record"),
                None => result.share_index,
            };
            let (at, m) = model_at(&model, &record, index)?;
            let p = &record.points[at];
            report.log_point = Some(at);
            report.beta = Some(p.beta);
            report.nce_val_bits = Some(p.nce_val_bits);
            report.validation_kl_nats = Some(p.kl_nats.clone());
            report.run_te_bits = Some(result.te_bits);
            write_run(out, "run/", &record, &result)?;
            m
        }
    };
    let trace = local_kl_trace(&model, &data.val)?;
    out.with("trace.csv", |p| trace.save_csv(p))?;
    report.labels = trace.labels.clone();
    report.trace_mean_nats = trace.mean_nats();
    report.trace_max_nats = trace
        .kl_nats
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(0.0, f64::max))
        .collect();
    let shown = trace.anchors.len().min(300);
    let lines: Vec<svg::Series> = trace
        .labels
        .iter()
        .enumerate()
        .map(|(j, l)| svg::Series {
            name: l.clone(),
            points: (0..shown).map(|i| (trace.anchors[i] as f64, trace.kl_nats[[i, j]])).collect(),
        })
        .collect();
    out.text(
        "trace.svg",
        &svg::line_chart("Local KL cost", "anchor", "KL (nats)", &lines, false),
    )?;
    out.json("trace.json", &report)?;
    Ok(report)
}
