//! Acceptance suite: each criterion runs at its stated tolerance and yields
//! one pass/fail outcome.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tedecomp::autodiff::gradcheck::op_suite;
use tedecomp::boolnet::{builtin, simulate_seeded, NetworkSpec};
use tedecomp::decomposer::{Dataset, Direction, Pair, Run, SchemeConfig};
use tedecomp::discrete_info::{local_te, plugin_self_info, plugin_te, plugin_te_future};
use tedecomp::ib::loss_gradcheck;
use tedecomp::series::{ChannelRoles, MultiSeries};

use crate::commands::{self, Out};
use crate::config::{architecture, DataSource, ExperimentConfig, PairwiseSettings, VerifySettings};
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn spec(id: &str, wiring: u64) -> NetworkSpec {
    builtin(id, wiring).expect("built-in network")
}

fn roles_for(series: &MultiSeries, source: &[&str], target: &[&str]) -> ChannelRoles {
    ChannelRoles::new(
        series.indices_of(source).expect("known channels"),
        series.indices_of(target).expect("known channels"),
        Vec::new(),
    )
}

/// Shared state: trajectories and finished runs, kept for the numerics check.
struct Suite<'a> {
    s: &'a VerifySettings,
    jobs: usize,
    workdir: PathBuf,
    fig2a: MultiSeries,
    fig2c_spec: NetworkSpec,
    fig2c: MultiSeries,
    runs: Vec<(String, Run)>,
}

impl<'a> Suite<'a> {
    fn scheme(&self, direction: Direction, seed: u64) -> SchemeConfig {
        let mut c = SchemeConfig::synthetic();
        c.architecture = architecture(&self.s.architecture).expect("validated preset");
        c.schedule.total_steps = self.s.anneal_steps;
        c.adam.learning_rate = self.s.learning_rate;
        c.direction = direction;
        c.seed = seed;
        c
    }

    fn run(&mut self, label: &str, series: &MultiSeries, roles: &ChannelRoles, direction: Direction, seed: u64) -> CliResult<Run> {
        if let Some((_, r)) = self.runs.iter().find(|(l, _)| l == label) {
            return Ok(r.clone());
        }
        let cfg = self.scheme(direction, seed);
        let data = Dataset::new(series, roles, cfg.tau, cfg.train_fraction)?;
        let run = tedecomp::decomposer::run_scheme(&data, &cfg)?;
        self.store(label, run.clone());
        Ok(run)
    }

    fn store(&mut self, label: &str, mut run: Run) {
        run.record.snapshots.clear();
        run.record.final_params = None;
        self.runs.push((label.to_string(), run));
    }

    fn fig2a_roles(&self) -> ChannelRoles {
        roles_for(&self.fig2a, &["blue", "orange"], &["green", "red"])
    }

    fn fig2b_roles(&self) -> ChannelRoles {
        roles_for(&self.fig2a, &["blue", "orange"], &["red"])
    }

    fn fig2c_roles(&self) -> ChannelRoles {
        let src: Vec<&str> = self.fig2c_spec.source.iter().map(String::as_str).collect();
        let tgt: Vec<&str> = self.fig2c_spec.target.iter().map(String::as_str).collect();
        roles_for(&self.fig2c, &src, &tgt)
    }
}

fn sum_shares(run: &Run, labels: &[&str]) -> f64 {
    labels
        .iter()
        .filter_map(|l| run.result.share(l))
        .map(|s| s.bits)
        .sum()
}

type Check = fn(&mut Suite) -> CliResult<(bool, String)>;

fn c1(s: &mut Suite) -> CliResult<(bool, String)> {
    let t = Instant::now();
    let series = simulate_seeded(&spec("fig2a", 0), s.s.trajectory_steps, s.s.trajectory_seed)?;
    let te = plugin_te(&series, &s.fig2a_roles(), 3)?.value_bits;
    let secs = t.elapsed().as_secs_f64();
    Ok((
        (te - 1.0).abs() <= 0.05 && secs < 5.0,
        format!("plugin TE {te:.4} bits (1.0 ± 0.05), {secs:.2} s (< 5 s)"),
    ))
}

fn c2(s: &mut Suite) -> CliResult<(bool, String)> {
    let t = Instant::now();
    let series = simulate_seeded(&spec("fig2b", 0), s.s.trajectory_steps, s.s.trajectory_seed)?;
    let te = plugin_te(&series, &s.fig2b_roles(), 3)?.value_bits;
    let secs = t.elapsed().as_secs_f64();
    Ok((
        (te - 2.0).abs() <= 0.05 && secs < 5.0,
        format!("plugin TE {te:.4} bits (2.0 ± 0.05), {secs:.2} s (< 5 s)"),
    ))
}

const FIG2B_RELEVANT: [&str; 4] = ["blue@-2", "orange@-2", "blue@-1", "orange@-1"];

fn c3(s: &mut Suite) -> CliResult<(bool, String)> {
    let t = Instant::now();
    let (series, roles, seed) = (s.fig2a.clone(), s.fig2b_roles(), s.s.run_seed);
    let run = s.run("fig2b/source_past", &series, &roles, Direction::SourcePast, seed)?;
    let secs = t.elapsed().as_secs_f64();
    let te = run.result.te_bits;
    let on = sum_shares(&run, &FIG2B_RELEVANT);
    Ok((
        (te - 2.0).abs() <= 0.2 && on >= 3.4 && secs < 900.0,
        format!(
            "TE {te:.3} bits (2.0 ± 0.2), {on:.3} of {:.3} KL bits on blue/orange at -2,-1 (>= 3.4), {secs:.0} s per run (< 900 s)",
            run.result.total_share_bits()
        ),
    ))
}

fn c4(s: &mut Suite) -> CliResult<(bool, String)> {
    let (series, roles, seed) = (s.fig2a.clone(), s.fig2b_roles(), s.s.run_seed);
    let run = s.run("fig2b/target_future", &series, &roles, Direction::TargetFuture, seed)?;
    let te = run.result.te_bits;
    let total = run.result.total_share_bits();
    let on = sum_shares(&run, &["red@+0", "red@+1"]);
    let frac = if total > 0.0 { on / total } else { 0.0 };
    Ok((
        (te - 2.0).abs() <= 0.2 && frac >= 0.9,
        format!("TE {te:.3} bits (2.0 ± 0.2), {:.1}% of KL on red at +0,+1 (>= 90%)", 100.0 * frac),
    ))
}

fn c5(s: &mut Suite) -> CliResult<(bool, String)> {
    let (series, roles) = (s.fig2a.clone(), s.fig2a_roles());
    let seeds: Vec<u64> = (0..s.s.degeneracy_seeds as u64).collect();
    let missing: Vec<u64> = seeds
        .iter()
        .copied()
        .filter(|seed| !s.runs.iter().any(|(l, _)| *l == format!("fig2a/target_future/{seed}")))
        .collect();
    let cfg = s.scheme(Direction::TargetFuture, 0);
    let data = Dataset::new(&series, &roles, cfg.tau, cfg.train_fraction)?;
    for run in tedecomp::decomposer::run_seeds(&data, &cfg, &missing, s.jobs)? {
        let label = format!("fig2a/target_future/{}", run.record.seed);
        s.store(&label, run);
    }
    let mut winners = Vec::new();
    let mut unimodal = true;
    for seed in &seeds {
        let (_, run) = s
            .runs
            .iter()
            .find(|(l, _)| *l == format!("fig2a/target_future/{seed}"))
            .expect("run stored");
        let top = run.result.dominant().expect("cells");
        let ok = top.fraction >= 0.8 && (top.label == "green@+0" || top.label == "red@+1");
        unimodal &= ok;
        winners.push(format!("{}:{:.0}%", top.label, 100.0 * top.fraction));
    }
    let green = winners.iter().filter(|w| w.starts_with("green@+0")).count();
    let red = winners.iter().filter(|w| w.starts_with("red@+1")).count();
    Ok((
        unimodal && green > 0 && red > 0,
        format!(
            "{} seeds, green@+0 won {green}, red@+1 won {red}, each >= 80% on one cell: {unimodal} [{}]",
            seeds.len(),
            winners.join(" ")
        ),
    ))
}

fn c6(s: &mut Suite) -> CliResult<(bool, String)> {
    let seed = s.s.run_seed;
    let mut parts = Vec::new();
    let mut ok = true;
    let systems: [(&str, MultiSeries, ChannelRoles); 3] = [
        ("fig2a", s.fig2a.clone(), s.fig2a_roles()),
        ("fig2b", s.fig2a.clone(), s.fig2b_roles()),
        ("fig2c", s.fig2c.clone(), s.fig2c_roles()),
    ];
    for (name, series, roles) in systems {
        let sp = s.run(&format!("{name}/source_past"), &series, &roles, Direction::SourcePast, seed)?;
        let tf_label = if name == "fig2a" {
            format!("fig2a/target_future/{seed}")
        } else {
            format!("{name}/target_future")
        };
        let tf = s.run(&tf_label, &series, &roles, Direction::TargetFuture, seed)?;
        let d = (sp.result.te_bits - tf.result.te_bits).abs();
        let oracle = plugin_te(&series, &roles, 3)?.value_bits;
        ok &= d <= 0.2;
        parts.push(format!(
            "{name}: {:.3} vs {:.3}, |diff| {d:.3} (plugin {oracle:.3})",
            sp.result.te_bits, tf.result.te_bits
        ));
    }
    Ok((ok, format!("{} (each <= 0.2)", parts.join("; "))))
}

fn c7(s: &mut Suite) -> CliResult<(bool, String)> {
    let (series, roles, seed) = (s.fig2a.clone(), s.fig2a_roles(), s.s.run_seed);
    let run = s.run("fig2a/source_past", &series, &roles, Direction::SourcePast, seed)?;
    let plugin = plugin_self_info(&series, &roles, 3)?;
    let d = (run.result.self_info_bits - plugin).abs();
    Ok((
        d <= 0.15,
        format!(
            "poor-endpoint NCE {:.3} vs plugin I(Y_past; Y_future) {plugin:.3}, |diff| {d:.3} (<= 0.15)",
            run.result.self_info_bits
        ),
    ))
}

fn c8(s: &mut Suite) -> CliResult<(bool, String)> {
    let systems = [
        ("fig2a", s.fig2a.clone(), s.fig2a_roles()),
        ("fig2b", s.fig2a.clone(), s.fig2b_roles()),
        ("fig2c", s.fig2c.clone(), s.fig2c_roles()),
    ];
    let mut worst_route = 0.0f64;
    let mut worst_local = 0.0f64;
    for (_, series, roles) in &systems {
        let te = plugin_te(series, roles, 3)?.value_bits;
        let fut = plugin_te_future(series, roles, 3)?.value_bits;
        let local = local_te(series, roles, 3)?;
        let mean = local.iter().map(|l| l.bits).sum::<f64>() / local.len() as f64;
        worst_route = worst_route.max((te - fut).abs());
        worst_local = worst_local.max((mean - te).abs());
    }
    Ok((
        worst_route <= 1e-9 && worst_local <= 1e-9,
        format!("max |TE route gap| {worst_route:.1e}, max |mean local - TE| {worst_local:.1e} (<= 1e-9) on fig2a, fig2b, fig2c"),
    ))
}

fn c9(s: &mut Suite) -> CliResult<(bool, String)> {
    let ops = op_suite(17, 3)?;
    let op_worst = ops.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let loss = loss_gradcheck(8)?;
    let mut points = 0;
    let mut bad = Vec::new();
    for (label, run) in &s.runs {
        let rec = &run.record;
        let cap = (rec.val_batch_size as f64).log2() + 1e-9;
        for p in &rec.points {
            points += 1;
            if p.kl_nats.iter().any(|&k| k < 0.0) || p.nce_val_bits > cap {
                bad.push(format!("{label}@{}", p.step));
            }
        }
    }
    Ok((
        op_worst < 1e-4 && loss.max_rel_err < 1e-3 && bad.is_empty() && points > 0,
        format!(
            "op gradients max rel err {op_worst:.1e} (< 1e-4) over {} compositions, loss max rel err {:.1e} (< 1e-3, max abs err {:.1e}); {points} logged points in {} runs, violations {}",
            ops.len(),
            loss.max_rel_err,
            loss.max_abs_err,
            s.runs.len(),
            if bad.is_empty() { "none".to_string() } else { bad.join(",") }
        ),
    ))
}

fn c10(s: &mut Suite) -> CliResult<(bool, String)> {
    let mut overrides = Map::new();
    overrides.insert("architecture".into(), Value::String(s.s.architecture.clone()));
    overrides.insert("adam".into(), serde_json::json!({"learning_rate": s.s.learning_rate}));
    overrides.insert("schedule".into(), serde_json::json!({"total_steps": s.s.anneal_steps}));
    let mut cfg = ExperimentConfig::builtin("fig2a");
    cfg.data = DataSource::Builtin {
        network: "fig2a".into(),
        steps: s.s.crosscheck_steps,
        seed: s.s.trajectory_seed,
        wiring_seed: 0,
    };
    cfg.scheme = overrides;
    cfg.seeds = vec![s.s.run_seed];
    cfg.pairwise = PairwiseSettings {
        pairs: Some(vec![Pair {
            source: vec!["blue".into(), "orange".into()],
            target: vec!["green".into(), "red".into()],
        }]),
        channels: None,
        steps: Some(s.s.pairwise_steps),
    };
    cfg.validate()?;

    cfg.output = s.workdir.join("pairwise");
    let mut out = Out::new(&cfg.output)?;
    let pw = commands::pairwise(&cfg, s.jobs, &mut out)?;
    let entry = &pw.result.entries[0];
    let plugin = pw.plugin_te_bits[0].expect("binary data");
    let d_pw = (entry.te_bits - plugin).abs();

    cfg.output = s.workdir.join("trace");
    let mut out = Out::new(&cfg.output)?;
    let tr = commands::trace(&cfg, &mut out)?;
    let run_te = tr.run_te_bits.expect("trained run");
    let d_tr = (run_te - tr.plugin_te_bits.expect("binary data")).abs();
    let val = tr.validation_kl_nats.clone().expect("trained run");
    let means_ok = tr
        .trace_mean_nats
        .iter()
        .zip(&val)
        .all(|(m, v)| *v < 0.1 * std::f64::consts::LN_2 || (m - v).abs() <= 0.05 * v);
    let inert_ok = tr
        .labels
        .iter()
        .zip(&tr.trace_max_nats)
        .filter(|(l, _)| l.ends_with("@-3") || l.ends_with("@-2"))
        .all(|(_, &m)| m < 0.02);
    let written = ["pairwise/pairwise.json", "pairwise/pairwise.svg", "trace/trace.csv", "trace/trace.svg"]
        .iter()
        .all(|p| s.workdir.join(p).exists());
    Ok((
        d_pw <= 0.05 && d_tr <= 0.05 && means_ok && inert_ok && written,
        format!(
            "pairwise TE {:.3} vs plugin {plugin:.3} (|diff| {d_pw:.3} <= 0.05); trace run TE {run_te:.3} (|diff| {d_tr:.3} <= 0.05), trace means match validation KL within 5%: {means_ok}, inert cells < 0.02 nats: {inert_ok}, artifacts written: {written}",
            entry.te_bits
        ),
    ))
}

const CRITERIA: [(u8, &str, Check); 10] = [
    (1, "oracle fig2a", c1),
    (2, "oracle fig2b", c2),
    (3, "neural source-past fig2b", c3),
    (4, "neural target-future fig2b", c4),
    (5, "degeneracy fig2a", c5),
    (6, "direction equivalence", c6),
    (7, "self-information endpoint", c7),
    (8, "estimator identities", c8),
    (10, "pairwise and trace cross-check", c10),
    // Last, so it covers every run above.
    (9, "numerics", c9),
];

/// Runs every criterion, reporting each outcome as it completes. Errors
/// inside a criterion fail that criterion only.
pub fn run_all(settings: &VerifySettings, jobs: usize, workdir: &Path, mut report: impl FnMut(&Outcome)) -> CliResult<Vec<Outcome>> {
    let fig2c_spec = spec("fig2c", settings.fig2c_wiring_seed);
    let mut suite = Suite {
        s: settings,
        jobs,
        workdir: workdir.to_path_buf(),
        fig2a: simulate_seeded(&spec("fig2a", 0), settings.trajectory_steps, settings.trajectory_seed)?,
        fig2c: simulate_seeded(&fig2c_spec, settings.trajectory_steps, settings.trajectory_seed)?,
        fig2c_spec,
        runs: Vec::new(),
    };
    let mut outcomes = Vec::new();
    for (id, name, check) in CRITERIA {
        let t = Instant::now();
        let (passed, detail) = match check(&mut suite) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let o = Outcome {
            id,
            name: name.to_string(),
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        };
        report(&o);
        outcomes.push(o);
    }
    outcomes.sort_by_key(|o| o.id);
    Ok(outcomes)
}
