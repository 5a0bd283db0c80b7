//! XMC datasets: the repository text format, summary statistics, label
//! propensities and a synthetic long-tailed generator.

mod propensity;
mod synthetic;

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub use propensity::{compute_propensities, PropensityModel, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticTask};

/// One sparse feature vector, sorted by feature id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseRow {
    /// Builds a row from unsorted pairs. Duplicate ids are summed.
    pub fn from_pairs(mut pairs: Vec<(u32, f32)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut row = SparseRow::default();
        for (id, v) in pairs {
            if row.indices.last() == Some(&id) {
                *row.values.last_mut().unwrap() += v;
            } else {
                row.indices.push(id);
                row.values.push(v);
            }
        }
        row
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Sparse feature rows plus a sorted, duplicate-free relevant-label list
/// per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_features: usize,
    num_labels: usize,
    features: Vec<SparseRow>,
    labels: Vec<Vec<u32>>,
}

impl Dataset {
    /// Validating constructor. Label lists are sorted and deduplicated,
    /// feature rows must already be sorted with unique ids.
    pub fn new(
        num_features: usize,
        num_labels: usize,
        features: Vec<SparseRow>,
        mut labels: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!("{} feature rows but {} label rows", features.len(), labels.len())));
        }
        for (i, row) in features.iter().enumerate() {
            if row.indices.len() != row.values.len() {
                return Err(Error::shape(format!("row {i}: index/value length mismatch")));
            }
            if row.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Value { line: i + 2, msg: "feature ids must be strictly increasing".into() });
            }
            if let Some(&f) = row.indices.last() {
                if f as usize >= num_features {
                    return Err(Error::Range {
                        line: i + 2,
                        what: "feature id",
                        value: f as u64,
                        bound: num_features as u64,
                    });
                }
            }
            if let Some(v) = row.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Value { line: i + 2, msg: format!("non-finite feature value {v}") });
            }
        }
        for (i, ls) in labels.iter_mut().enumerate() {
            ls.sort_unstable();
            ls.dedup();
            if let Some(&l) = ls.last() {
                if l as usize >= num_labels {
                    return Err(Error::Range { line: i + 2, what: "label", value: l as u64, bound: num_labels as u64 });
                }
            }
        }
        Ok(Dataset { num_features, num_labels, features, labels })
    }

    pub fn num_instances(&self) -> usize {
        self.features.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn features(&self) -> &[SparseRow] {
        &self.features
    }

    pub fn labels(&self) -> &[Vec<u32>] {
        &self.labels
    }

    pub fn instance(&self, i: usize) -> (&SparseRow, &[u32]) {
        (&self.features[i], &self.labels[i])
    }

    /// Number of instances each label is relevant for.
    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_labels];
        for ls in &self.labels {
            for &l in ls {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    /// Keeps rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            num_features: self.num_features,
            num_labels: self.num_labels,
            features: self.features[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads the repository text format: a `N d_in L` header followed by `N`
/// lines of `l1,l2,... f1:v1 f2:v2 ...`. An empty label list is written as
/// a leading space.
pub fn parse_xmc<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "missing header")),
    };
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(1, format!("expected `N d_in L`, got {header:?}")));
    }
    let mut parsed = [0usize; 3];
    for (slot, tok) in parsed.iter_mut().zip(&dims) {
        *slot = tok.parse().map_err(|_| parse_err(1, format!("invalid integer {tok:?} in header")))?;
    }
    let [n, num_features, num_labels] = parsed;

    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (offset, line) in lines.enumerate() {
        let line = line?;
        let lineno = offset + 2;
        if features.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(lineno, format!("more than the {n} rows declared in the header")));
        }
        let (label_part, feature_part) = match line.find(' ') {
            Some(pos) => (&line[..pos], &line[pos + 1..]),
            None => (line.as_str(), ""),
        };
        let mut ls = Vec::new();
        if !label_part.is_empty() {
            for tok in label_part.split(',') {
                let l: u64 = tok.trim().parse().map_err(|_| parse_err(lineno, format!("invalid label {tok:?}")))?;
                if l >= num_labels as u64 {
                    return Err(Error::Range { line: lineno, what: "label", value: l, bound: num_labels as u64 });
                }
                ls.push(l as u32);
            }
        }
        ls.sort_unstable();
        ls.dedup();

        let mut pairs = Vec::new();
        for tok in feature_part.split_whitespace() {
            let (f, v) =
                tok.split_once(':').ok_or_else(|| parse_err(lineno, format!("expected `id:value`, got {tok:?}")))?;
            let f: u64 = f.parse().map_err(|_| parse_err(lineno, format!("invalid feature id {f:?}")))?;
            if f >= num_features as u64 {
                return Err(Error::Range { line: lineno, what: "feature id", value: f, bound: num_features as u64 });
            }
            let v: f32 = v.parse().map_err(|_| parse_err(lineno, format!("invalid feature value {v:?}")))?;
            if !v.is_finite() {
                return Err(Error::Value { line: lineno, msg: format!("non-finite feature value {v}") });
            }
            pairs.push((f as u32, v));
        }
        features.push(SparseRow::from_pairs(pairs));
        labels.push(ls);
    }
    if features.len() != n {
        return Err(parse_err(features.len() + 2, format!("header declares {n} rows but found {}", features.len())));
    }
    Dataset::new(num_features, num_labels, features, labels)
}

pub fn parse_xmc_str(text: &str) -> Result<Dataset> {
    parse_xmc(text.as_bytes())
}

pub fn read_xmc_file(path: impl AsRef<std::path::Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_xmc(std::io::BufReader::new(file))
}

/// Writes the repository text format. Values use the shortest
/// representation that parses back to the same `f32`.
pub fn write_xmc<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {}", data.num_instances(), data.num_features(), data.num_labels())?;
    let mut line = String::new();
    for (row, ls) in data.features.iter().zip(&data.labels) {
        line.clear();
        for (j, l) in ls.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            write!(line, "{l}").unwrap();
        }
        for (f, v) in row.iter() {
            write!(line, " {f}:{v}").unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_xmc_file(data: &Dataset, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_xmc(data, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Counts and averages in the layout of the usual dataset statistics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub num_instances: usize,
    pub num_labels: usize,
    /// Average number of relevant labels per instance.
    pub avg_labels_per_instance: f64,
    /// Average number of instances per label, over all `L` labels.
    pub avg_instances_per_label: f64,
}

pub fn compute_stats(data: &Dataset) -> DatasetStats {
    let total: u64 = data.labels.iter().map(|ls| ls.len() as u64).sum();
    let n = data.num_instances();
    let l = data.num_labels();
    DatasetStats {
        num_instances: n,
        num_labels: l,
        avg_labels_per_instance: if n == 0 { 0.0 } else { total as f64 / n as f64 },
        avg_instances_per_label: if l == 0 { 0.0 } else { total as f64 / l as f64 },
    }
}

pub const STATS_CSV_HEADER: &str = "name,N,L,Ntest,Lbar,Lhat";

/// One `name,N,L,Ntest,Lbar,Lhat` row; `Ntest` is left empty when unknown.
pub fn stats_csv_row(name: &str, stats: &DatasetStats, num_test: Option<usize>) -> String {
    format!(
        "{},{},{},{},{:.2},{:.2}",
        name,
        stats.num_instances,
        stats.num_labels,
        num_test.map(|n| n.to_string()).unwrap_or_default(),
        stats.avg_labels_per_instance,
        stats.avg_instances_per_label
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let d = parse_xmc_str("2 3 4\n0,2 1:0.5\n3 0:1.0 2:2.0\n").unwrap();
        assert_eq!(d.num_instances(), 2);
        assert_eq!(d.num_features(), 3);
        assert_eq!(d.num_labels(), 4);
        assert_eq!(d.labels(), &[vec![0, 2], vec![3]]);
        assert_eq!(d.features()[1].indices, vec![0, 2]);
        assert_eq!(d.features()[1].values, vec![1.0, 2.0]);
    }

    #[test]
    fn empty_label_list() {
        let d = parse_xmc_str("1 2 2\n 0:1.0\n").unwrap();
        assert!(d.labels()[0].is_empty());
        assert_eq!(d.features()[0].indices, vec![0]);
    }

    #[test]
    fn sorts_features_and_dedups_labels() {
        let d = parse_xmc_str("1 5 5\n3,1,3 4:1 0:2\n").unwrap();
        assert_eq!(d.labels()[0], vec![1, 3]);
        assert_eq!(d.features()[0].indices, vec![0, 4]);
    }

    #[test]
    fn malformed_header_reports_line_one() {
        match parse_xmc_str("2 x 4\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_xmc_str("").unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn out_of_range_ids() {
        match parse_xmc_str("1 3 4\n0 3:1.0\n").unwrap_err() {
            Error::Range { line, what, .. } => {
                assert_eq!(line, 2);
                assert_eq!(what, "feature id");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_xmc_str("1 3 4\n4 0:1.0\n").unwrap_err(), Error::Range { what: "label", .. }));
    }

    #[test]
    fn non_finite_value() {
        assert!(matches!(parse_xmc_str("1 3 4\n0 1:nan\n").unwrap_err(), Error::Value { line: 2, .. }));
        assert!(matches!(parse_xmc_str("1 3 4\n0 1:inf\n").unwrap_err(), Error::Value { .. }));
    }

    #[test]
    fn row_count_must_match_header() {
        assert!(matches!(parse_xmc_str("2 3 4\n0 1:1\n").unwrap_err(), Error::Parse { .. }));
        assert!(matches!(parse_xmc_str("1 3 4\n0 1:1\n1 1:1\n").unwrap_err(), Error::Parse { line: 3, .. }));
    }

    #[test]
    fn stats_hand_count() {
        let d =
            Dataset::new(1, 3, vec![SparseRow::default(), SparseRow::default()], vec![vec![0, 1], vec![1]]).unwrap();
        let s = compute_stats(&d);
        assert_eq!(s.avg_labels_per_instance, 1.5);
        assert_eq!(s.avg_instances_per_label, 1.0);
    }

    #[test]
    fn stats_single_instance_and_empty() {
        let d = Dataset::new(1, 4, vec![SparseRow::default()], vec![vec![2]]).unwrap();
        let s = compute_stats(&d);
        assert_eq!(s.avg_labels_per_instance, 1.0);
        assert_eq!(s.avg_instances_per_label, 0.25);

        let e = Dataset::new(1, 4, vec![], vec![]).unwrap();
        let s = compute_stats(&e);
        assert_eq!(s.num_instances, 0);
        assert_eq!(s.avg_labels_per_instance, 0.0);
        assert_eq!(s.avg_instances_per_label, 0.0);
    }

    #[test]
    fn stats_row_format() {
        let d = parse_xmc_str("2 3 4\n0,2 1:0.5\n3 0:1.0 2:2.0\n").unwrap();
        let row = stats_csv_row("toy", &compute_stats(&d), Some(7));
        assert_eq!(row, "toy,2,4,7,1.50,0.75");
    }
}
