//! Multichannel time series, window extraction, train/validation splitting
//! and batch sampling.
//!
//! Windows use half-open slices around an anchor `t`: the pasts cover
//! `[t - tau, t)` and the future covers `[t, t + tau)`.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Binary,
    Continuous,
}

/// A stationary multichannel time series. Rows are time steps, columns
/// are channels; binary channels hold exactly `0.0` or `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    names: Vec<String>,
    kinds: Vec<ChannelKind>,
    values: Array2<f64>,
}

impl MultiSeries {
    pub fn new(names: Vec<String>, kinds: Vec<ChannelKind>, values: Array2<f64>) -> Result<Self> {
        let c = values.ncols();
        if names.len() != c || kinds.len() != c {
            return Err(Error::Config(format!(
                "{} names and {} kinds for {} columns",
                names.len(),
                kinds.len(),
                c
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate channel name '{name}'")));
            }
        }
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == ChannelKind::Binary
                && values.column(j).iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::Type(format!(
                    "binary channel '{}' holds a value outside {{0, 1}}",
                    names[j]
                )));
            }
        }
        Ok(Self {
            names,
            kinds,
            values,
        })
    }

    /// Builds a series whose channels are all binary.
    pub fn binary(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let kinds = vec![ChannelKind::Binary; names.len()];
        Self::new(names, kinds, values)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ChannelKind] {
        &self.kinds
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown channel '{name}'")))
    }

    /// Resolves a list of channel names to column indices.
    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.channel_index(n.as_ref())).collect()
    }

    /// Copy of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::Size(format!(
                "row range {start}..{end} outside 0..{}",
                self.len()
            )));
        }
        Ok(Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            values: self.values.slice(s![start..end, ..]).to_owned(),
        })
    }
}

/// One training example: the source and target pasts, the target future
/// and optional conditioning past, all `tau` rows long.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTriple {
    pub x_past: Array2<f64>,
    pub y_past: Array2<f64>,
    pub y_future: Array2<f64>,
    pub cond_past: Option<Array2<f64>>,
    pub anchor: usize,
}

impl WindowTriple {
    pub fn tau(&self) -> usize {
        self.y_past.nrows()
    }
}

/// Channel roles used when cutting windows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRoles {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    #[serde(default)]
    pub cond: Vec<usize>,
}

impl ChannelRoles {
    pub fn new(source: Vec<usize>, target: Vec<usize>, cond: Vec<usize>) -> Self {
        Self {
            source,
            target,
            cond,
        }
    }

    /// Checks that the index lists are in range and pairwise disjoint.
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::Config("target channel list is empty".into()));
        }
        let all: Vec<usize> = self
            .source
            .iter()
            .chain(&self.target)
            .chain(&self.cond)
            .copied()
            .collect();
        for (i, &c) in all.iter().enumerate() {
            if c >= n_channels {
                return Err(Error::Config(format!(
                    "channel index {c} out of range for {n_channels} channels"
                )));
            }
            if all[..i].contains(&c) {
                return Err(Error::Config(format!(
                    "channel index {c} appears in more than one role"
                )));
            }
        }
        Ok(())
    }
}

fn gather(values: &Array2<f64>, rows: std::ops::Range<usize>, cols: &[usize]) -> Array2<f64> {
    values.slice(s![rows, ..]).select(Axis(1), cols)
}

/// Cuts every valid window, one per anchor `t` with `tau <= t <= T - tau`.
pub fn make_windows(series: &MultiSeries, roles: &ChannelRoles, tau: usize) -> Result<Vec<WindowTriple>> {
    roles.validate(series.n_channels())?;
    if tau == 0 {
        return Err(Error::Config("tau must be at least 1".into()));
    }
    let t_len = series.len();
    if t_len < 2 * tau + 1 {
        return Err(Error::Size(format!(
            "series of length {t_len} too short for tau = {tau} (needs {})",
            2 * tau + 1
        )));
    }
    let v = series.values();
    Ok((tau..=t_len - tau)
        .map(|t| WindowTriple {
            x_past: gather(v, t - tau..t, &roles.source),
            y_past: gather(v, t - tau..t, &roles.target),
            y_future: gather(v, t..t + tau, &roles.target),
            cond_past: (!roles.cond.is_empty()).then(|| gather(v, t - tau..t, &roles.cond)),
            anchor: t,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
        }
    }
}

/// Contiguous train/validation partition of anchor-ordered windows.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<WindowTriple>,
    pub validation: Vec<WindowTriple>,
    /// Time index separating the two sets.
    pub boundary: usize,
    pub dropped: usize,
}

/// Splits windows at a time boundary. The boundary is the anchor of the
/// first window past `train_fraction` of the sequence; training windows end
/// at or before it and validation windows start at or after it, so windows
/// straddling it are dropped.
pub fn split(windows: &[WindowTriple], spec: SplitSpec) -> Result<Split> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {f} must lie strictly between 0 and 1"
        )));
    }
    if windows.is_empty() {
        return Err(Error::Size("cannot split an empty window set".into()));
    }
    if windows.windows(2).any(|w| w[0].anchor >= w[1].anchor) {
        return Err(Error::Contract("windows must be sorted by anchor".into()));
    }
    let tau = windows[0].tau();
    let cut = ((f * windows.len() as f64).floor() as usize).min(windows.len() - 1);
    let boundary = windows[cut].anchor;
    let train: Vec<_> = windows
        .iter()
        .filter(|w| w.anchor + tau <= boundary)
        .cloned()
        .collect();
    let validation: Vec<_> = windows
        .iter()
        .filter(|w| w.anchor >= boundary + tau)
        .cloned()
        .collect();
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Size(format!(
            "split produced {} train and {} validation windows",
            train.len(),
            validation.len()
        )));
    }
    let dropped = windows.len() - train.len() - validation.len();
    log::debug!(
        "split at t={boundary}: {} train, {} validation, {dropped} dropped",
        train.len(),
        validation.len()
    );
    Ok(Split {
        train,
        validation,
        boundary,
        dropped,
    })
}

/// Draws `batch_size` indices uniformly with replacement.
pub fn sample_indices<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Size("cannot sample from an empty window set".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
}

/// Draws a batch uniformly with replacement.
pub fn sample_batch<'a, R: Rng + ?Sized>(
    windows: &'a [WindowTriple],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a WindowTriple>> {
    Ok(sample_indices(windows.len(), batch_size, rng)?
        .into_iter()
        .map(|i| &windows[i])
        .collect())
}

/// Reads a headered CSV. A column is binary when every cell is 0 or 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<MultiSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<MultiSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            msg: "header must name every channel".into(),
        });
    }
    let c = names.len();
    let mut flat = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != c {
            return Err(Error::Parse {
                line,
                msg: format!("row has {} fields, header has {c}", record.len()),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite cell '{cell}'"),
                });
            }
            flat.push(v);
        }
    }
    let t = flat.len() / c;
    let values = Array2::from_shape_vec((t, c), flat).expect("row-major fill");
    let kinds = (0..c)
        .map(|j| {
            if t > 0 && values.column(j).iter().all(|&v| v == 0.0 || v == 1.0) {
                ChannelKind::Binary
            } else {
                ChannelKind::Continuous
            }
        })
        .collect();
    MultiSeries::new(names, kinds, values)
}

/// Writes a headered CSV. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn save_csv(series: &MultiSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(series, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv<W: Write>(series: &MultiSeries, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", series.names().join(","))?;
    for row in series.values().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Standardizes continuous channels to zero mean and unit (population)
/// variance; binary channels pass through.
pub fn zscore(series: &MultiSeries) -> Result<MultiSeries> {
    let mut values = series.values().clone();
    for (j, kind) in series.kinds().iter().enumerate() {
        if *kind == ChannelKind::Binary {
            continue;
        }
        let mut col = values.column_mut(j);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::DegenerateChannel(series.names()[j].clone()));
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    MultiSeries::new(series.names.clone(), series.kinds.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(t: usize, c: usize) -> MultiSeries {
        let values = Array2::from_shape_fn((t, c), |(i, j)| (i * 10 + j) as f64);
        let names = (0..c).map(|j| format!("c{j}")).collect();
        MultiSeries::new(names, vec![ChannelKind::Continuous; c], values).unwrap()
    }

    #[test]
    fn seven_steps_tau_three_gives_two_windows() {
        let s = ramp(7, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), 3).unwrap();
        let anchors: Vec<_> = w.iter().map(|w| w.anchor).collect();
        assert_eq!(anchors, vec![3, 4]);
    }

    #[test]
    fn too_short_is_size_error() {
        for tau in 1..5 {
            let s = ramp(2 * tau, 2);
            let err = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), tau);
            assert!(matches!(err, Err(Error::Size(_))));
        }
    }

    #[test]
    fn window_count_matches_anchor_scan() {
        let s = ramp(10_000, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), 3).unwrap();
        let expected = (0..10_000usize).filter(|&t| t >= 3 && t + 3 <= 10_000).count();
        assert_eq!(expected, 9_995);
        assert_eq!(w.len(), expected);
    }

    #[test]
    fn overlapping_roles_rejected() {
        let s = ramp(20, 3);
        let err = make_windows(&s, &ChannelRoles::new(vec![0, 1], vec![1], vec![]), 2);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![0]), 2);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn slices_follow_half_open_convention() {
        let s = ramp(12, 3);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![2]), 2).unwrap();
        let first = &w[0];
        assert_eq!(first.anchor, 2);
        assert_eq!(first.x_past, array![[0.0], [10.0]]);
        assert_eq!(first.y_past, array![[1.0], [11.0]]);
        assert_eq!(first.y_future, array![[21.0], [31.0]]);
        assert_eq!(first.cond_past.as_ref().unwrap(), &array![[2.0], [12.0]]);
    }

    #[test]
    fn split_rejects_closed_interval() {
        let s = ramp(50, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), 2).unwrap();
        assert!(matches!(split(&w, SplitSpec { train_fraction: 1.0 }), Err(Error::Config(_))));
        assert!(matches!(split(&w, SplitSpec { train_fraction: 0.0 }), Err(Error::Config(_))));
    }

    #[test]
    fn split_hundred_windows() {
        // tau = 1 gives 100 anchors for T = 101
        let s = ramp(101, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), 1).unwrap();
        assert_eq!(w.len(), 100);
        let sp = split(&w, SplitSpec { train_fraction: 0.8 }).unwrap();
        assert_eq!(sp.train.len(), 80);
        assert_eq!(sp.validation.len(), 19);
        assert_eq!(sp.dropped, 1);
    }

    #[test]
    fn split_matches_brute_force_scan() {
        let tau = 3;
        let s = ramp(10_000, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), tau).unwrap();
        let sp = split(&w, SplitSpec { train_fraction: 0.9 }).unwrap();

        // Boundary: anchor of window number floor(0.9 * 9995) = 8995.
        let b = 3 + 8995;
        let mut train = 0;
        let mut val = 0;
        for t in 0..10_000usize {
            if t < tau || t + tau > 10_000 {
                continue;
            }
            let (lo, hi) = (t - tau, t + tau);
            if hi <= b {
                train += 1;
            } else if lo >= b {
                val += 1;
            }
        }
        assert_eq!((sp.train.len(), sp.validation.len()), (train, val));
        assert_eq!((train, val), (8993, 997));
        assert!(sp.train.iter().all(|w| w.anchor + tau <= sp.boundary));
        assert!(sp.validation.iter().all(|w| w.anchor >= sp.boundary + tau));
    }

    #[test]
    fn batches() {
        let s = ramp(10_000, 2);
        let w = make_windows(&s, &ChannelRoles::new(vec![0], vec![1], vec![]), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(sample_batch(&w, 128, &mut rng).unwrap().len(), 128);

        let one = &w[..1];
        let b = sample_batch(one, 1, &mut rng).unwrap();
        assert_eq!(b[0], &w[0]);

        let a = sample_batch(&w, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_batch(&w, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(sample_batch(&w[..0], 4, &mut rng).is_err());
    }

    #[test]
    fn csv_shapes_and_errors() {
        let text = "a,b,c\n1,2,3\n4,5,6\n7,8,9\n0,1,0\n1.5,2.5,-3\n";
        let s = read_csv(text.as_bytes()).unwrap();
        assert_eq!((s.len(), s.n_channels()), (5, 3));

        let bad = "a,b,c\n1,2,3\n4,5\n";
        match read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad = "a,b\n1,x\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn binary_columns_detected() {
        let s = read_csv("x,y\n0,0.5\n1,1\n".as_bytes()).unwrap();
        assert_eq!(s.kinds(), &[ChannelKind::Binary, ChannelKind::Continuous]);
    }

    #[test]
    fn zscore_cases() {
        let s = MultiSeries::new(
            vec!["k".into(), "z".into(), "b".into()],
            vec![ChannelKind::Continuous, ChannelKind::Continuous, ChannelKind::Binary],
            array![[5.0, 0.0, 1.0], [5.0, 2.0, 0.0]],
        )
        .unwrap();
        assert!(matches!(zscore(&s), Err(Error::DegenerateChannel(n)) if n == "k"));

        let s = MultiSeries::new(
            vec!["z".into(), "b".into()],
            vec![ChannelKind::Continuous, ChannelKind::Binary],
            array![[0.0, 1.0], [2.0, 0.0]],
        )
        .unwrap();
        let z = zscore(&s).unwrap();
        assert_eq!(z.values(), &array![[-1.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn zscore_gaussian_channel() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(4.0, 2.5).unwrap();
        let values = Array2::from_shape_fn((5000, 1), |_| normal.sample(&mut rng));
        let s = MultiSeries::new(vec!["g".into()], vec![ChannelKind::Continuous], values).unwrap();
        let z = zscore(&s).unwrap();
        let col = z.values().column(0);
        let mean = col.sum() / 5000.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5000.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn binary_channel_validated() {
        let err = MultiSeries::binary(vec!["b".into()], array![[0.0], [0.5]]);
        assert!(matches!(err, Err(Error::Type(_))));
    }
}
