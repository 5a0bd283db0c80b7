//! Plain-text layer dump.
//!
//! ```text
//! fanin-layer v1
//! <rows> <cols> <fan_in>
//! <col>:<weight> <col>:<weight> ...      (one line per row, fan_in pairs)
//! ```
//!
//! Weights are written in the shortest form that parses back to the same
//! value, so a dump round-trips bit-exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::FixedFanInLayer;
use crate::error::{Error, Result};
use crate::real::Real;

pub const LAYER_FORMAT_VERSION: &str = "fanin-layer v1";

pub fn write_layer<T: Real, W: Write>(layer: &FixedFanInLayer<T>, mut out: W) -> Result<()> {
    writeln!(out, "{LAYER_FORMAT_VERSION}")?;
    writeln!(out, "{} {} {}", layer.rows(), layer.cols(), layer.fan_in())?;
    let f = layer.fan_in();
    let mut line = String::new();
    for l in 0..layer.rows() {
        line.clear();
        for j in 0..f {
            if j > 0 {
                line.push(' ');
            }
            let k = l * f + j;
            write!(line, "{}:{}", layer.indices().get(k), layer.weights()[k]).unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_layer<T: Real, R: BufRead>(reader: R) -> Result<FixedFanInLayer<T>> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = reader.lines();
    let version = lines.next().transpose()?.unwrap_or_default();
    if version.trim() != LAYER_FORMAT_VERSION {
        return Err(perr(1, format!("expected `{LAYER_FORMAT_VERSION}`, got {version:?}")));
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(2, format!("invalid integer {t:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols, fan_in] = dims[..] else {
        return Err(perr(2, format!("expected `rows cols fan_in`, got {header:?}")));
    };
    let mut ids = Vec::with_capacity(rows * fan_in);
    let mut weights = Vec::with_capacity(rows * fan_in);
    for l in 0..rows {
        let lineno = l + 3;
        let line = lines.next().transpose()?.ok_or_else(|| perr(lineno, "unexpected end of file".into()))?;
        let before = ids.len();
        for tok in line.split_whitespace() {
            let (c, w) =
                tok.split_once(':').ok_or_else(|| perr(lineno, format!("expected `col:weight`, got {tok:?}")))?;
            ids.push(c.parse().map_err(|_| perr(lineno, format!("invalid column {c:?}")))?);
            weights.push(w.parse::<T>().map_err(|_| perr(lineno, format!("invalid weight {w:?}")))?);
        }
        if ids.len() - before != fan_in {
            return Err(perr(lineno, format!("expected {fan_in} entries, got {}", ids.len() - before)));
        }
    }
    FixedFanInLayer::new(rows, cols, fan_in, ids, weights)
}
