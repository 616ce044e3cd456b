use std::f64::consts::LN_2;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tedecomp::boolnet::{fig2a_spec, simulate_seeded};
use tedecomp::decomposer::{
    decompose, fit, local_kl_trace, model_at, validation_batches, Architecture, Dataset, SchemeConfig,
};
use tedecomp::discrete_info::plugin_te;
use tedecomp::series::{ChannelRoles, MultiSeries};
use tedecomp::Error;

fn short(steps: usize) -> SchemeConfig {
    let mut c = SchemeConfig::synthetic();
    c.architecture = Architecture::compact();
    c.schedule.total_steps = steps;
    c.adam.learning_rate = 1e-3;
    c.log_every = 50;
    c
}

fn random_series(t: usize, target: impl Fn(&Array2<f64>, usize) -> f64, seed: u64) -> MultiSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::zeros((t, 3));
    for i in 0..t {
        v[[i, 0]] = rng.random_range(0..2) as f64;
        v[[i, 1]] = rng.random_range(0..2) as f64;
        v[[i, 2]] = target(&v, i);
    }
    MultiSeries::binary(vec!["src".into(), "noise".into(), "tgt".into()], v).unwrap()
}

fn roles() -> ChannelRoles {
    ChannelRoles::new(vec![0], vec![2], vec![])
}

#[test]
fn constant_target_carries_nothing() {
    let s = random_series(3000, |_, _| 0.0, 1);
    let cfg = short(400);
    let data = Dataset::new(&s, &roles(), cfg.tau, cfg.train_fraction).unwrap();
    let (_, rec) = fit(&cfg, &data, true).unwrap();
    assert!(rec.points.iter().all(|p| p.nce_val_bits <= 0.05));
}

#[test]
fn uncoupled_source_gives_no_transfer() {
    let s = random_series(6000, |v, i| v[[i, 1]], 2);
    let cfg = short(2000);
    let data = Dataset::new(&s, &roles(), cfg.tau, cfg.train_fraction).unwrap();
    let (_, rec) = fit(&cfg, &data, true).unwrap();
    let r = decompose(&rec).unwrap();
    assert!(r.te_bits <= 0.1, "{}", r.te_bits);
    assert!(r.shares.iter().all(|s| s.bits <= 0.05), "{:?}", r.shares);
}

#[test]
fn fig2a_run_readout_and_trace() {
    let s = simulate_seeded(&fig2a_spec(), 10_000, 1).unwrap();
    let roles = ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]);
    let cfg = short(3000);
    let data = Dataset::new(&s, &roles, cfg.tau, cfg.train_fraction).unwrap();
    let (model, rec) = fit(&cfg, &data, true).unwrap();

    let log_k = (rec.val_batch_size as f64).log2();
    for p in &rec.points {
        assert!(p.kl_nats.iter().all(|&k| k >= 0.0));
        assert!(p.nce_val_bits <= log_k + 1e-9);
        assert_eq!(p.kl_total_bits, p.kl_bits.iter().sum::<f64>());
    }
    assert!(rec.points.windows(2).all(|w| w[0].step < w[1].step));
    let last = rec.points.last().unwrap();
    assert!(last.kl_bits.iter().all(|&k| k < 0.05), "{:?}", last.kl_bits);

    let r = decompose(&rec).unwrap();
    let oracle = plugin_te(&s, &roles, 3).unwrap().value_bits;
    assert!((r.te_bits - 1.0).abs() < 0.2, "{}", r.te_bits);
    assert!((r.te_bits - oracle).abs() < 0.2);
    let used: f64 = ["blue@-1", "orange@-1"].iter().map(|l| r.share(l).unwrap().bits).sum();
    assert!(used > 0.9 * r.total_share_bits());

    let (at, m) = model_at(&model, &rec, r.share_index).unwrap();
    let point = &rec.points[at];
    let trace = local_kl_trace(&m, &data.val).unwrap();
    assert_eq!(trace.anchors, data.val.anchors);
    assert!(trace.kl_nats.iter().all(|&v| v >= 0.0));
    for (j, (&mean, &val)) in trace.mean_nats().iter().zip(&point.kl_nats).enumerate() {
        if val > 0.1 * LN_2 {
            assert!((mean - val).abs() <= 0.05 * val, "{}: {mean} vs {val}", trace.labels[j]);
        }
    }
    let inert = trace.labels.iter().position(|l| l == "blue@-3").unwrap();
    assert!(trace.kl_nats.column(inert).iter().all(|&v| v < 0.02));

    // Over exactly the validation batches the trace mean is the logged KL.
    let batches = validation_batches(&data.val, &cfg).unwrap();
    let t0 = local_kl_trace(&m, &batches[0]).unwrap();
    let mut acc = t0.mean_nats();
    for b in &batches[1..] {
        for (a, v) in acc.iter_mut().zip(local_kl_trace(&m, b).unwrap().mean_nats()) {
            *a += v;
        }
    }
    for (a, v) in acc.iter().zip(&point.kl_nats) {
        assert!((a / batches.len() as f64 - v).abs() < 1e-9);
    }
}

#[test]
fn runs_are_deterministic() {
    let s = simulate_seeded(&fig2a_spec(), 2000, 3).unwrap();
    let roles = ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]);
    let cfg = short(200);
    let data = Dataset::new(&s, &roles, cfg.tau, cfg.train_fraction).unwrap();
    let (_, a) = fit(&cfg, &data, true).unwrap();
    let (_, b) = fit(&cfg, &data, true).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn divergence_reports_last_good_parameters() {
    let s = simulate_seeded(&fig2a_spec(), 2000, 3).unwrap();
    let roles = ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]);
    let mut cfg = short(200);
    cfg.adam.learning_rate = 1e300;
    cfg.log_every = 1;
    let data = Dataset::new(&s, &roles, cfg.tau, cfg.train_fraction).unwrap();
    match fit(&cfg, &data, true) {
        Err(Error::Diverged { last_good, .. }) => {
            let snap = last_good.expect("snapshot attached");
            assert!(snap.data.iter().all(|v| v.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn run_record_csv_layout() {
    let s = simulate_seeded(&fig2a_spec(), 1000, 3).unwrap();
    let roles = ChannelRoles::new(vec![0, 1], vec![2, 3], vec![]);
    let cfg = short(100);
    let data = Dataset::new(&s, &roles, cfg.tau, cfg.train_fraction).unwrap();
    let (_, rec) = fit(&cfg, &data, true).unwrap();
    let mut buf = Vec::new();
    rec.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("step,beta,kl_total_bits,kl_blue@-3_bits,kl_orange@-3_bits"));
    assert!(header.ends_with("kl_orange@-1_bits,nce_train_bits,nce_val_bits"));
    assert_eq!(text.lines().count(), rec.points.len() + 1);
}
