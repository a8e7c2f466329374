//! Text checkpoint format.
//!
//! ```text
//! clickcfa-params v1
//! <name>\t<trainable 0|1>\t<dims, comma separated>\t<values, space separated>
//! ```
//!
//! Values use Rust's shortest round-trip `{:e}` form, so reloading is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{NeuralError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &str = "clickcfa-params v1";

pub fn to_string(store: &ParamStore) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for p in store.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        let _ = write!(out, "{}\t{}\t{}\t", p.name, p.trainable as u8, dims.join(","));
        for (i, v) in p.value.data().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
    out
}

pub fn from_str(text: &str) -> Result<ParamStore> {
    let err = |line: usize, msg: &str| NeuralError::Checkpoint {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(err(1, "missing header")),
    }
    let mut store = ParamStore::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(ln, "expected 4 tab-separated fields"));
        }
        let trainable = match fields[1] {
            "0" => false,
            "1" => true,
            _ => return Err(err(ln, "trainable flag must be 0 or 1")),
        };
        let shape = if fields[2].is_empty() {
            Vec::new()
        } else {
            fields[2]
                .split(',')
                .map(|d| d.parse::<usize>().map_err(|_| err(ln, "bad dimension")))
                .collect::<Result<Vec<_>>>()?
        };
        let data = if fields[3].is_empty() {
            Vec::new()
        } else {
            fields[3]
                .split(' ')
                .map(|v| v.parse::<f64>().map_err(|_| err(ln, "bad value")))
                .collect::<Result<Vec<_>>>()?
        };
        let t = Tensor::new(shape, data).map_err(|e| err(ln, &e.to_string()))?;
        store.insert(fields[0], t, trainable)?;
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(store))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    from_str(&std::fs::read_to_string(path)?)
}
