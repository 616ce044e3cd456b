//! Variational information-bottleneck pieces: Gaussian encoders with a
//! closed-form KL cost to a standard-normal prior, the InfoNCE forecasting
//! bound with squared-Euclidean similarity, the (distributed) Lagrangian
//! and the geometric β schedule.
//!
//! Losses are kept in nats internally; InfoNCE is reported in bits.

use std::f64::consts::LN_2;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{self, GradCheck};
use crate::autodiff::{Activation, Graph, Mlp, ParamStore, Var};
use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Per-sample `½ Σ_i (μ_i² + σ_i² − log σ_i² − 1)` in nats, as an n×1 column.
pub fn kl_to_standard_normal(g: &mut Graph, mu: Var, log_var: Var) -> Result<Var> {
    let mu2 = g.square(mu)?;
    let var = g.exp(log_var)?;
    let t = g.add(mu2, var)?;
    let t = g.sub(t, log_var)?;
    let t = g.add_scalar(t, -1.0)?;
    let s = g.sum_rows(t)?;
    g.scale(s, 0.5)
}

/// Closed-form KL for plain arrays (n×d → per-row nats).
pub fn kl_values(mu: &Array2<f64>, log_var: &Array2<f64>) -> Vec<f64> {
    mu.rows()
        .into_iter()
        .zip(log_var.rows())
        .map(|(m, lv)| {
            0.5 * m
                .iter()
                .zip(lv.iter())
                .map(|(&m, &lv)| m * m + lv.exp() - lv - 1.0)
                .sum::<f64>()
        })
        .collect()
}

/// InfoNCE lower bound in bits for K matched pairs (row i of `f` with row i
/// of `g`), with similarity `s(u, v) = −‖u − v‖²`:
/// `(1/K) Σ_i log₂ [K exp(s_ii) / Σ_j exp(s_ij)]`. Never exceeds `log₂ K`.
pub fn info_nce(gr: &mut Graph, f: Var, g: Var) -> Result<Var> {
    let (fs, gs) = (gr.shape(f), gr.shape(g));
    if fs != gs {
        return Err(Error::Shape {
            op: "info_nce",
            lhs: fs,
            rhs: gs,
        });
    }
    let k = fs.0;
    if k < 2 {
        return Err(Error::Contract(format!("InfoNCE needs at least 2 pairs, got {k}")));
    }
    // s_ij = 2 f_i·g_j − ‖g_j‖² − ‖f_i‖²; the last term is constant along
    // each row and cancels between the diagonal and the log-sum-exp.
    let fg = gr.matmul_t(f, g)?;
    let fg2 = gr.scale(fg, 2.0)?;
    let g2 = gr.square(g)?;
    let gn = gr.sum_rows(g2)?;
    let gn = gr.transpose(gn)?;
    let gn = gr.scale(gn, -1.0)?;
    let s = gr.add_row(fg2, gn)?;
    let d = gr.diag(s)?;
    let lse = gr.logsumexp_rows(s)?;
    let r = gr.sub(d, lse)?;
    let m = gr.mean(r)?;
    let m = gr.add_scalar(m, (k as f64).ln())?;
    gr.scale(m, 1.0 / LN_2)
}

/// `β Σ_b KL_b − NCE`, in nats. `kl_terms` are batch-mean KLs in nats, one
/// per bottleneck; `nce_bits` is the InfoNCE value in bits.
pub fn lagrangian(g: &mut Graph, kl_terms: &[Var], nce_bits: Var, beta: f64) -> Result<Var> {
    if !(beta > 0.0) {
        return Err(Error::Contract(format!("beta must be positive, got {beta}")));
    }
    let nce_nats = g.scale(nce_bits, -LN_2)?;
    if kl_terms.is_empty() {
        return Ok(nce_nats);
    }
    let mut total = kl_terms[0];
    for &k in &kl_terms[1..] {
        total = g.add(total, k)?;
    }
    let weighted = g.scale(total, beta)?;
    g.add(weighted, nce_nats)
}

/// Geometric interpolation `β(k) = β₀ (β₁/β₀)^(k/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta_initial: f64,
    pub beta_final: f64,
    pub total_steps: usize,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            beta_initial: 5e-5,
            beta_final: 3.0,
            total_steps: 20_000,
        }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_initial > 0.0 && self.beta_final > 0.0) {
            return Err(Error::Config("beta endpoints must be positive".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        Ok(())
    }

    pub fn beta_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::Contract(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        if step == self.total_steps {
            return Ok(self.beta_final);
        }
        let frac = step as f64 / self.total_steps as f64;
        Ok(self.beta_initial * (self.beta_final / self.beta_initial).powf(frac))
    }

    /// Whether β grows over the run (the low-β end is information-rich).
    pub fn is_increasing(&self) -> bool {
        self.beta_final >= self.beta_initial
    }
}

/// Output of one encoder pass; all matrices are n×d except `kl` (n×1).
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    pub mu: Var,
    pub log_var: Var,
    pub sample: Var,
    pub kl: Var,
}

/// MLP trunk emitting the mean and log-variance of a diagonal Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianEncoder {
    pub trunk: Mlp,
    pub dim: usize,
}

impl GaussianEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: &[(usize, Activation)],
        dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            trunk: Mlp::new(store, name, input, hidden, 2 * dim, rng),
            dim,
        }
    }

    /// With `noise` (n×d standard normal draws) the sample is `μ + σ ε`;
    /// without it the sample is the posterior mean.
    pub fn forward(&self, g: &mut Graph, x: Var, noise: Option<Array2<f64>>) -> Result<EncoderOutput> {
        let out = self.trunk.forward(g, x)?;
        let mu = g.slice_cols(out, 0, self.dim)?;
        let raw = g.slice_cols(out, self.dim, 2 * self.dim)?;
        let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX)?;
        let kl = kl_to_standard_normal(g, mu, log_var)?;
        let sample = match noise {
            Some(eps) => {
                let eps = g.input(eps)?;
                let half = g.scale(log_var, 0.5)?;
                let sd = g.exp(half)?;
                let scaled = g.mul(sd, eps)?;
                g.add(mu, scaled)?
            }
            None => mu,
        };
        Ok(EncoderOutput {
            mu,
            log_var,
            sample,
            kl,
        })
    }
}

/// Standard-normal noise matrix.
pub fn gaussian_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Finite-difference check (step 1e-5) of the full Lagrangian through a
/// small encoder and prediction head.
pub fn loss_gradcheck(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let enc = GaussianEncoder::new(&mut store, "e", 3, &[(5, Activation::LeakyRelu)], 2, &mut rng);
    let head = Mlp::new(&mut store, "h", 2, &[(4, Activation::Tanh)], 3, &mut rng);
    let x = gaussian_noise(6, 3, &mut rng);
    let y = gaussian_noise(6, 3, &mut rng);
    let eps = gaussian_noise(6, 2, &mut rng);
    gradcheck::check("lagrangian", &store, 1e-5, |g| {
        let xv = g.input(x.clone())?;
        let yv = g.input(y.clone())?;
        let out = enc.forward(g, xv, Some(eps.clone()))?;
        let fe = head.forward(g, out.sample)?;
        let nce = info_nce(g, fe, yv)?;
        let kl = g.mean(out.kl)?;
        lagrangian(g, &[kl], nce, 0.8)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval_kl(mu: Array2<f64>, lv: Array2<f64>) -> Vec<f64> {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let m = g.input(mu).unwrap();
        let l = g.input(lv).unwrap();
        let k = kl_to_standard_normal(&mut g, m, l).unwrap();
        g.value(k).iter().copied().collect()
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(eval_kl(array![[0.0, 0.0]], array![[0.0, 0.0]]), vec![0.0]);
        assert_abs_diff_eq!(eval_kl(array![[1.0]], array![[0.0]])[0], 0.5, epsilon = 1e-15);
        assert_eq!(kl_values(&array![[1.0]], &array![[0.0]]), vec![0.5]);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..3 {
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.0)).collect();
            let closed = kl_values(
                &Array2::from_shape_vec((1, 3), mu.clone()).unwrap(),
                &Array2::from_shape_vec((1, 3), lv.clone()).unwrap(),
            )[0];
            // E_p[log p(u) - log r(u)] with u ~ N(mu, sigma^2)
            let n = 1_000_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let mut term = 0.0;
                for i in 0..3 {
                    let sd = (0.5 * lv[i]).exp();
                    let e: f64 = rng.sample(StandardNormal);
                    let u = mu[i] + sd * e;
                    term += -0.5 * e * e - 0.5 * lv[i] + 0.5 * u * u;
                }
                acc += term;
            }
            let mc = acc / n as f64;
            assert!((mc - closed).abs() <= 0.01 * closed, "mc {mc} closed {closed}");
        }
    }

    fn eval_nce(f: Array2<f64>, g: Array2<f64>) -> f64 {
        let store = ParamStore::new();
        let mut gr = Graph::new(&store);
        let fv = gr.input(f).unwrap();
        let gv = gr.input(g).unwrap();
        let n = info_nce(&mut gr, fv, gv).unwrap();
        gr.scalar(n)
    }

    #[test]
    fn nce_identical_targets_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = gaussian_noise(16, 4, &mut rng);
        let row = gaussian_noise(1, 4, &mut rng);
        let g = Array2::from_shape_fn((16, 4), |(_, j)| row[[0, j]]);
        assert_abs_diff_eq!(eval_nce(f, g), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nce_separated_pairs_reach_log_k() {
        // Corners of a scaled 7-cube: distinct rows differ by 5√2 in at least
        // one coordinate, so squared distances are at least 50.
        let k = 128;
        let f = Array2::from_shape_fn((k, 7), |(i, j)| 5.0 * ((i >> j) & 1) as f64 * 2f64.sqrt());
        for i in 0..k {
            for j in 0..i {
                let d: f64 = (0..7).map(|c| (f[[i, c]] - f[[j, c]]).powi(2)).sum();
                assert!(d >= 40.0);
            }
        }
        let v = eval_nce(f.clone(), f);
        assert!((6.99..=7.0 + 1e-12).contains(&v), "{v}");
    }

    #[test]
    fn nce_bounded_by_log_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..1000 {
            let k = 2 + trial % 30;
            let f = gaussian_noise(k, 3, &mut rng) * 2.0;
            let g = gaussian_noise(k, 3, &mut rng) * 2.0;
            assert!(eval_nce(f, g) <= (k as f64).log2() + 1e-12);
        }
    }

    #[test]
    fn nce_needs_two_pairs() {
        let store = ParamStore::new();
        let mut gr = Graph::new(&store);
        let f = gr.input(Array2::zeros((1, 3))).unwrap();
        assert!(matches!(info_nce(&mut gr, f, f), Err(Error::Contract(_))));
    }

    #[test]
    fn lagrangian_substitution() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let zero = g.input(array![[0.0]]).unwrap();
        let nce = g.input(array![[2.5]]).unwrap();
        let l = lagrangian(&mut g, &[zero, zero], nce, 0.7).unwrap();
        assert_abs_diff_eq!(g.scalar(l), -2.5 * LN_2, epsilon = 1e-15);

        let kl = g.input(array![[0.4]]).unwrap();
        let one = lagrangian(&mut g, &[kl], nce, 0.3).unwrap();
        let one_again = lagrangian(&mut g, &[kl], nce, 0.3).unwrap();
        assert_eq!(g.scalar(one), g.scalar(one_again));
        assert!(lagrangian(&mut g, &[kl], nce, 0.0).is_err());
    }

    #[test]
    fn lagrangian_monotone() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let nce = g.input(array![[1.0]]).unwrap();
        let more_nce = g.input(array![[1.5]]).unwrap();
        let kl = g.input(array![[0.2]]).unwrap();
        let more_kl = g.input(array![[0.3]]).unwrap();
        let base = lagrangian(&mut g, &[kl, kl], nce, 0.5).unwrap();
        let up = lagrangian(&mut g, &[kl, more_kl], nce, 0.5).unwrap();
        let down = lagrangian(&mut g, &[kl, kl], more_nce, 0.5).unwrap();
        assert!(g.scalar(up) > g.scalar(base));
        assert!(g.scalar(down) < g.scalar(base));
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = BetaSchedule {
            total_steps: 1000,
            ..BetaSchedule::default()
        };
        assert_eq!(s.beta_at(0).unwrap(), 5e-5);
        assert_eq!(s.beta_at(1000).unwrap(), 3.0);
        assert_abs_diff_eq!(s.beta_at(500).unwrap(), (5e-5f64 * 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.beta_at(500).unwrap(), 0.01225, epsilon = 1e-5);
        assert!(s.beta_at(1001).is_err());
        let mut prev = 0.0;
        for k in 0..=1000 {
            let b = s.beta_at(k).unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let r = loss_gradcheck(8).unwrap();
        assert!(r.max_rel_err < 1e-3, "{}", r.max_rel_err);
        assert!(r.entries > 50);
    }
}
