use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tedecomp::autodiff::{Graph, ParamStore};
use tedecomp::boolnet::{fig2c_spec, simulate_seeded};
use tedecomp::discrete_info::{local_te, mutual_info, plugin_te, plugin_te_future, Part};
use tedecomp::ib::{info_nce, kl_values};
use tedecomp::series::{make_windows, read_csv, split, write_csv, ChannelRoles, MultiSeries, SplitSpec};

fn binary_series(bits: Vec<bool>, channels: usize) -> MultiSeries {
    let rows = bits.len() / channels;
    let values = Array2::from_shape_fn((rows, channels), |(t, c)| bits[t * channels + c] as u8 as f64);
    let names = (0..channels).map(|c| format!("c{c}")).collect();
    MultiSeries::binary(names, values).unwrap()
}

fn series_strategy() -> impl Strategy<Value = MultiSeries> {
    (2usize..=4, 40usize..200).prop_flat_map(|(c, t)| {
        prop::collection::vec(any::<bool>(), c * t).prop_map(move |b| binary_series(b, c))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn te_routes_agree(s in series_strategy(), tau in 1usize..=3) {
        let c = s.n_channels();
        let roles = ChannelRoles::new(vec![0], vec![1], (2..c).take(1).collect());
        let a = plugin_te(&s, &roles, tau).unwrap().value_bits;
        let b = plugin_te_future(&s, &roles, tau).unwrap().value_bits;
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= -1e-12);
        let local = local_te(&s, &roles, tau).unwrap();
        let mean = local.iter().map(|l| l.bits).sum::<f64>() / local.len() as f64;
        prop_assert!((mean - a).abs() < 1e-9);
    }

    #[test]
    fn mutual_info_symmetric_and_bounded(s in series_strategy(), tau in 1usize..=3) {
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), tau).unwrap();
        let ab = mutual_info(&w, &[Part::XPast], &[Part::YFuture]).unwrap();
        let ba = mutual_info(&w, &[Part::YFuture], &[Part::XPast]).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= tau as f64 + 1e-12);
    }

    #[test]
    fn split_never_shares_timesteps(t in 20usize..400, tau in 1usize..=4, f in 0.2f64..0.9) {
        let values = Array2::from_shape_fn((t, 2), |(i, c)| ((i * 7 + c * 3) % 5) as f64);
        let s = MultiSeries::new(
            vec!["a".into(), "b".into()],
            vec![tedecomp::series::ChannelKind::Continuous; 2],
            values,
        ).unwrap();
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), tau).unwrap();
        if let Ok(sp) = split(&w, SplitSpec { train_fraction: f }) {
            let train_max = sp.train.iter().map(|w| w.anchor + tau).max().unwrap_or(0);
            let val_min = sp.validation.iter().map(|w| w.anchor - tau).min().unwrap_or(usize::MAX);
            prop_assert!(train_max <= val_min);
        }
    }

    #[test]
    fn csv_round_trip(s in series_strategy(), scale in -1e6f64..1e6) {
        let cont = MultiSeries::new(
            s.names().to_vec(),
            vec![tedecomp::series::ChannelKind::Continuous; s.n_channels()],
            s.values().mapv(|v| v * scale + 0.1234567890123),
        ).unwrap();
        for series in [&s, &cont] {
            let mut buf = Vec::new();
            write_csv(series, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.values(), series.values());
            prop_assert_eq!(back.names(), series.names());
        }
    }

    #[test]
    fn kl_nonnegative(mu in prop::collection::vec(-20f64..20.0, 12), lv in prop::collection::vec(-10f64..10.0, 12)) {
        let mu = Array2::from_shape_vec((3, 4), mu).unwrap();
        let lv = Array2::from_shape_vec((3, 4), lv).unwrap();
        prop_assert!(kl_values(&mu, &lv).iter().all(|&k| k >= 0.0));
    }

    #[test]
    fn info_nce_below_log_batch(k in 2usize..40, d in 1usize..6, seed in any::<u64>(), spread in 0.01f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = tedecomp::ib::gaussian_noise(k, d, &mut rng) * spread;
        let g = tedecomp::ib::gaussian_noise(k, d, &mut rng) * spread;
        let store = ParamStore::new();
        let mut gr = Graph::new(&store);
        let (fv, gv) = (gr.input(f.clone()).unwrap(), gr.input(f).unwrap());
        let hv = gr.input(g).unwrap();
        let same = info_nce(&mut gr, fv, gv).unwrap();
        let other = info_nce(&mut gr, fv, hv).unwrap();
        prop_assert!(gr.scalar(same) <= (k as f64).log2() + 1e-9);
        prop_assert!(gr.scalar(other) <= (k as f64).log2() + 1e-9);
    }

    #[test]
    fn simulation_reproducible(seed in any::<u64>(), wiring in 0u64..50) {
        let spec = fig2c_spec(wiring);
        let a = simulate_seeded(&spec, 64, seed).unwrap();
        let b = simulate_seeded(&spec, 64, seed).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert!(a.values().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
