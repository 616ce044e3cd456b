//! Plugin (empirical-frequency) information estimates over binary windows.
//!
//! Each window part is bit-packed into a `u64` so joint distributions are
//! plain hash-map counts. These estimates are exact for the empirical
//! distribution and serve as ground truth for the neural estimator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{make_windows, ChannelRoles, MultiSeries, WindowTriple};

/// Empirical distribution over packed states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointCounter {
    counts: HashMap<u64, u64>,
    total: u64,
}

impl JointCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: u64) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn add_n(&mut self, key: u64, n: u64) {
        if n > 0 {
            *self.counts.entry(key).or_insert(0) += n;
            self.total += n;
        }
    }

    /// Associative, commutative merge.
    pub fn merge(&mut self, other: &JointCounter) {
        for (&k, &n) in &other.counts {
            self.add_n(k, n);
        }
    }

    pub fn get(&self, key: u64) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_states(&self) -> usize {
        self.counts.len()
    }

    pub fn from_keys(keys: impl IntoIterator<Item = u64>) -> Self {
        let mut c = Self::new();
        for k in keys {
            c.add(k);
        }
        c
    }
}

/// Shannon entropy in bits. Counts are summed in sorted order so the result
/// does not depend on hash-map iteration order.
pub fn entropy(counter: &JointCounter) -> f64 {
    if counter.total == 0 {
        return 0.0;
    }
    let n = counter.total as f64;
    let mut counts: Vec<u64> = counter.counts.values().copied().collect();
    counts.sort_unstable();
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Selects one piece of a [`WindowTriple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    XPast,
    YPast,
    YFuture,
    CondPast,
}

/// Windows with every part pre-packed.
#[derive(Debug, Clone)]
pub struct PackedWindows {
    codes: HashMap<Part, (Vec<u64>, usize)>,
    pub anchors: Vec<usize>,
}

fn pack_array(a: &ndarray::Array2<f64>) -> Result<u64> {
    if a.len() > 64 {
        return Err(Error::Capacity { bits: a.len() });
    }
    let mut code = 0u64;
    for &v in a.iter() {
        let bit = if v == 0.0 {
            0
        } else if v == 1.0 {
            1
        } else {
            return Err(Error::Type(format!(
                "plugin estimates need binary channels, found value {v}"
            )));
        };
        code = (code << 1) | bit;
    }
    Ok(code)
}

impl PackedWindows {
    pub fn new(windows: &[WindowTriple]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Size("no windows to count".into()));
        }
        let mut codes = HashMap::new();
        let first = &windows[0];
        let parts: [(Part, Option<usize>); 4] = [
            (Part::XPast, Some(first.x_past.len())),
            (Part::YPast, Some(first.y_past.len())),
            (Part::YFuture, Some(first.y_future.len())),
            (Part::CondPast, first.cond_past.as_ref().map(|c| c.len())),
        ];
        for (part, width) in parts {
            let Some(width) = width else { continue };
            let column = windows
                .iter()
                .map(|w| match part {
                    Part::XPast => pack_array(&w.x_past),
                    Part::YPast => pack_array(&w.y_past),
                    Part::YFuture => pack_array(&w.y_future),
                    Part::CondPast => w
                        .cond_past
                        .as_ref()
                        .ok_or_else(|| Error::Contract("mixed conditioning windows".into()))
                        .and_then(pack_array),
                })
                .collect::<Result<Vec<_>>>()?;
            codes.insert(part, (column, width));
        }
        Ok(Self {
            codes,
            anchors: windows.iter().map(|w| w.anchor).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn has(&self, part: Part) -> bool {
        self.codes.contains_key(&part)
    }

    /// Joint keys for a selection of parts; empty selection gives all zeros.
    pub fn keys(&self, parts: &[Part]) -> Result<Vec<u64>> {
        let mut width = 0usize;
        let mut keys = vec![0u64; self.len()];
        for part in parts {
            let (codes, w) = self
                .codes
                .get(part)
                .ok_or_else(|| Error::Contract(format!("windows carry no {part:?} part")))?;
            width += w;
            if width > 64 {
                return Err(Error::Capacity { bits: width });
            }
            for (k, &c) in keys.iter_mut().zip(codes) {
                *k = if *w == 64 { c } else { (*k << w) | c };
            }
        }
        Ok(keys)
    }

    pub fn counter(&self, parts: &[Part]) -> Result<JointCounter> {
        Ok(JointCounter::from_keys(self.keys(parts)?))
    }

    pub fn entropy(&self, parts: &[Part]) -> Result<f64> {
        Ok(entropy(&self.counter(parts)?))
    }

    pub fn mutual_info(&self, a: &[Part], b: &[Part]) -> Result<f64> {
        let ab: Vec<Part> = a.iter().chain(b).copied().collect();
        let i = self.entropy(a)? + self.entropy(b)? - self.entropy(&ab)?;
        Ok(i.max(0.0))
    }

    pub fn cond_mutual_info(&self, a: &[Part], b: &[Part], c: &[Part]) -> Result<f64> {
        let ac: Vec<Part> = a.iter().chain(c).copied().collect();
        let bc: Vec<Part> = b.iter().chain(c).copied().collect();
        let abc: Vec<Part> = a.iter().chain(b).chain(c).copied().collect();
        let i = self.entropy(&ac)? + self.entropy(&bc)? - self.entropy(&abc)? - self.entropy(c)?;
        Ok(i.max(0.0))
    }

    /// Target past plus the conditioning past when present.
    fn context(&self) -> Vec<Part> {
        if self.has(Part::CondPast) {
            vec![Part::YPast, Part::CondPast]
        } else {
            vec![Part::YPast]
        }
    }
}

pub fn mutual_info(windows: &[WindowTriple], a: &[Part], b: &[Part]) -> Result<f64> {
    PackedWindows::new(windows)?.mutual_info(a, b)
}

pub fn cond_mutual_info(windows: &[WindowTriple], a: &[Part], b: &[Part], c: &[Part]) -> Result<f64> {
    PackedWindows::new(windows)?.cond_mutual_info(a, b, c)
}

/// A plugin estimate plus sample-adequacy bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeEstimate {
    pub estimator: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cond: Vec<String>,
    pub tau: usize,
    pub value_bits: f64,
    pub n_windows: usize,
    pub observed_states: usize,
    pub sample_adequate: bool,
}

fn packed(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<PackedWindows> {
    let windows = make_windows(series, roles, tau)?;
    PackedWindows::new(&windows)
}

fn names(series: &MultiSeries, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| series.names()[i].clone()).collect()
}

fn estimate(
    estimator: &str,
    series: &MultiSeries,
    roles: &ChannelRoles,
    tau: usize,
    pw: &PackedWindows,
    value_bits: f64,
) -> Result<TeEstimate> {
    let mut full = pw.context();
    full.extend([Part::XPast, Part::YFuture]);
    let observed_states = pw.counter(&full)?.n_states();
    let sample_adequate = pw.len() >= 10 * observed_states;
    if !sample_adequate {
        log::warn!(
            "{estimator}: {} windows for {observed_states} observed joint states; estimate may be biased",
            pw.len()
        );
    }
    Ok(TeEstimate {
        estimator: estimator.to_string(),
        source: names(series, &roles.source),
        target: names(series, &roles.target),
        cond: names(series, &roles.cond),
        tau,
        value_bits,
        n_windows: pw.len(),
        observed_states,
        sample_adequate,
    })
}

/// Transfer entropy as the forecasting gain from adding the source past:
/// `I(X_past, Y_past; Y_future) - I(Y_past; Y_future)`. Conditioning
/// channels are appended to both occurrences of `Y_past`.
pub fn plugin_te(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<TeEstimate> {
    let pw = packed(series, roles, tau)?;
    let ctx = pw.context();
    let mut with_source = vec![Part::XPast];
    with_source.extend(&ctx);
    let te = pw.mutual_info(&with_source, &[Part::YFuture])? - pw.mutual_info(&ctx, &[Part::YFuture])?;
    estimate("plugin_te", series, roles, tau, &pw, te.max(0.0))
}

/// Transfer entropy as the information the target future adds about the
/// source past: `I(Y_future, Y_past; X_past) - I(Y_past; X_past)`.
pub fn plugin_te_future(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<TeEstimate> {
    let pw = packed(series, roles, tau)?;
    let ctx = pw.context();
    let mut with_future = vec![Part::YFuture];
    with_future.extend(&ctx);
    let te = pw.mutual_info(&with_future, &[Part::XPast])? - pw.mutual_info(&ctx, &[Part::XPast])?;
    estimate("plugin_te_future", series, roles, tau, &pw, te.max(0.0))
}

/// Plugin mutual information between the target's past and future, the
/// self-forecasting information (conditioning channels join the past).
pub fn plugin_self_info(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<f64> {
    let pw = packed(series, roles, tau)?;
    pw.mutual_info(&pw.context(), &[Part::YFuture])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalValue {
    pub anchor: usize,
    pub bits: f64,
}

/// Pointwise transfer entropy per anchor,
/// `log2 p(y_fut | y_past, x_past) / p(y_fut | y_past)`, from plugin
/// probabilities. Values may be negative; their mean is the plugin TE.
pub fn local_te(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<Vec<LocalValue>> {
    let pw = packed(series, roles, tau)?;
    let ctx = pw.context();
    let mut ctx_x = ctx.clone();
    ctx_x.push(Part::XPast);
    let mut ctx_f = ctx.clone();
    ctx_f.push(Part::YFuture);
    let mut ctx_x_f = ctx_x.clone();
    ctx_x_f.push(Part::YFuture);

    let k_c = pw.keys(&ctx)?;
    let k_cx = pw.keys(&ctx_x)?;
    let k_cf = pw.keys(&ctx_f)?;
    let k_cxf = pw.keys(&ctx_x_f)?;
    let (n_c, n_cx, n_cf, n_cxf) = (
        JointCounter::from_keys(k_c.iter().copied()),
        JointCounter::from_keys(k_cx.iter().copied()),
        JointCounter::from_keys(k_cf.iter().copied()),
        JointCounter::from_keys(k_cxf.iter().copied()),
    );
    Ok((0..pw.len())
        .map(|i| {
            let num = n_cxf.get(k_cxf[i]) as f64 * n_c.get(k_c[i]) as f64;
            let den = n_cx.get(k_cx[i]) as f64 * n_cf.get(k_cf[i]) as f64;
            LocalValue {
                anchor: pw.anchors[i],
                bits: (num / den).log2(),
            }
        })
        .collect())
}
