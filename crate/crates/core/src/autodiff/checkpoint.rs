use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

/// Copy of every parameter, flattened in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    pub entries: Vec<TensorEntry>,
    pub data: Vec<f64>,
}

impl ParamSnapshot {
    pub fn capture(store: &ParamStore) -> Self {
        let mut entries = Vec::with_capacity(store.len());
        let mut data = Vec::with_capacity(store.n_scalars());
        for id in store.ids() {
            let v = store.value(id);
            entries.push(TensorEntry {
                name: store.name(id).to_string(),
                shape: [v.nrows(), v.ncols()],
            });
            data.extend(v.iter());
        }
        Self { entries, data }
    }

    /// Overwrites `store` with the snapshot; names and shapes must match.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        if self.entries.len() != store.len() {
            return Err(Error::Contract(format!(
                "snapshot has {} tensors, store has {}",
                self.entries.len(),
                store.len()
            )));
        }
        let mut offset = 0;
        for (id, e) in store.ids().collect::<Vec<_>>().into_iter().zip(&self.entries) {
            let v = store.value(id);
            if e.name != store.name(id) || e.shape != [v.nrows(), v.ncols()] {
                return Err(Error::Contract(format!(
                    "snapshot tensor '{}' {:?} does not match '{}' {:?}",
                    e.name,
                    e.shape,
                    store.name(id),
                    v.dim()
                )));
            }
            let n = e.shape[0] * e.shape[1];
            let arr = Array2::from_shape_vec((e.shape[0], e.shape[1]), self.data[offset..offset + n].to_vec())
                .expect("shape from manifest");
            *store.value_mut(id) = arr;
            offset += n;
        }
        Ok(())
    }

    /// Writes `<stem>.bin` (little-endian f64) and `<stem>.json` (manifest).
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(&bin)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&bin, e))?;
        let manifest = serde_json::to_string_pretty(&self.entries)?;
        std::fs::write(&json, manifest).map_err(|e| Error::io(&json, e))
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let entries: Vec<TensorEntry> = serde_json::from_str(&text)?;
        let mut bytes = Vec::new();
        std::fs::File::open(&bin)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&bin, e))?;
        let expected: usize = entries.iter().map(|e| e.shape[0] * e.shape[1]).sum();
        if bytes.len() != expected * 8 {
            return Err(Error::Contract(format!(
                "{} holds {} bytes, manifest needs {}",
                bin.display(),
                bytes.len(),
                expected * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { entries, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn save_load_restore() {
        let mut store = ParamStore::new();
        store.add("a", array![[1.5, -2.25], [0.1, 3.0]]);
        store.add("b", array![[std::f64::consts::PI]]);
        let snap = ParamSnapshot::capture(&store);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        snap.save(&stem).unwrap();
        let back = ParamSnapshot::load(&stem).unwrap();
        assert_eq!(snap, back);

        let mut other = store.clone();
        *other.value_mut(crate::autodiff::ParamId(0)) = Array2::zeros((2, 2));
        back.restore(&mut other).unwrap();
        assert_eq!(other.value(crate::autodiff::ParamId(0)), store.value(crate::autodiff::ParamId(0)));

        let mut wrong = ParamStore::new();
        wrong.add("a", Array2::zeros((1, 1)));
        assert!(back.restore(&mut wrong).is_err());
    }
}
