use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Differences smaller than this count as agreement regardless of scale.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Largest relative error between backward-pass gradients and central
/// differences with step `h`, over every scalar of every parameter.
/// `build` records a scalar on the graph it is given.
pub fn check<F>(name: &str, store: &ParamStore, h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        g.param_grads(&g.backward(out)?)
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::unchecked(s);
        let out = build(&mut g)?;
        Ok(g.scalar(out))
    };
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut entries = 0;
    for id in store.ids().collect::<Vec<_>>() {
        let (rows, cols) = store.value(id).dim();
        for i in 0..rows {
            for j in 0..cols {
                let mut plus = store.clone();
                plus.value_mut(id)[[i, j]] += h;
                let mut minus = store.clone();
                minus.value_mut(id)[[i, j]] -= h;
                let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
                let a = analytic[id.0][[i, j]];
                let diff = (a - numeric).abs();
                worst_abs = worst_abs.max(diff);
                if diff >= ABS_FLOOR {
                    worst = worst.max(diff / a.abs().max(numeric.abs()).max(1e-6));
                }
                entries += 1;
            }
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        entries,
        max_rel_err: worst,
        max_abs_err: worst_abs,
    })
}

type Build = fn(&mut Graph, Var, Var) -> Result<Var>;

/// Compositions that together touch every differentiable op.
fn op_cases() -> Vec<(&'static str, Build)> {
    vec![
        ("tanh_matmul", |g, w, x| {
            let h = g.matmul(w, x)?;
            let t = g.tanh(h)?;
            g.sum(t)
        }),
        ("matmul_t", |g, w, x| {
            let xt = g.transpose(x)?;
            let h = g.matmul_t(xt, w)?;
            let sq = g.square(h)?;
            g.mean(sq)
        }),
        ("leaky_exp", |g, w, _| {
            let h = g.leaky_relu(w, 0.1)?;
            let h = g.scale(h, 0.3)?;
            let e = g.exp(h)?;
            g.sum(e)
        }),
        ("log_mul", |g, w, x| {
            let sq = g.square(w)?;
            let p = g.add_scalar(sq, 1.0)?;
            let l = g.log(p)?;
            let m = g.mul(l, x)?;
            g.sum(m)
        }),
        ("lse_diag_sub", |g, w, x| {
            let s = g.matmul_t(w, x)?;
            let lse = g.logsumexp_rows(s)?;
            let d = g.diag(s)?;
            let r = g.sub(d, lse)?;
            g.mean(r)
        }),
        ("broadcast_concat_slice", |g, w, x| {
            let c = g.concat_cols(&[w, x])?;
            let c = g.slice_cols(c, 4, 12)?;
            let col = g.sum_rows(x)?;
            let col = g.scale(col, 0.1)?;
            let b = g.add_col(c, col)?;
            let wt = g.transpose(w)?;
            let r = g.sum_rows(wt)?;
            let r = g.transpose(r)?;
            let r = g.scale(r, 0.1)?;
            let b = g.add_row(b, r)?;
            let b = g.clamp(b, -0.8, 0.8)?;
            let b = g.add(b, c)?;
            let t = g.tanh(b)?;
            g.sum(t)
        }),
    ]
}

/// Runs every op composition on `trials` random 8×8 instances with step 1e-4.
pub fn op_suite(seed: u64, trials: usize) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, build) in op_cases() {
        let mut worst = GradCheck {
            name: name.to_string(),
            entries: 0,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for _ in 0..trials {
            let mut store = ParamStore::new();
            let w = store.add("w", Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0)));
            let x0 = Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0));
            let r = check(name, &store, 1e-4, |g| {
                let wv = g.param(w)?;
                let xv = g.input(x0.clone())?;
                build(g, wv, xv)
            })?;
            worst.entries += r.entries;
            worst.max_rel_err = worst.max_rel_err.max(r.max_rel_err);
            worst.max_abs_err = worst.max_abs_err.max(r.max_abs_err);
        }
        out.push(worst);
    }
    Ok(out)
}
