//! Row-major sample matrices tagged with the space they live in.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Primal,
    Dual,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub seed: Option<u64>,
    pub generator: String,
}

impl BatchMeta {
    pub fn new(seed: Option<u64>, generator: impl Into<String>) -> Self {
        BatchMeta {
            seed,
            generator: generator.into(),
        }
    }
}

/// `n × d` matrix of finite points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    dim: usize,
    space: Space,
    meta: BatchMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    space: Space,
    seed: Option<u64>,
    generator: String,
    n: usize,
    dim: usize,
}

impl SampleBatch {
    pub fn new(data: Vec<f64>, dim: usize, space: Space, meta: BatchMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("batch dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("row {} is not finite", pos / dim)));
        }
        Ok(SampleBatch {
            data,
            dim,
            space,
            meta,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], space: Space, meta: BatchMeta) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, space, meta)
    }

    pub fn empty(dim: usize, space: Space, meta: BatchMeta) -> Self {
        SampleBatch {
            data: Vec::new(),
            dim,
            space,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn meta(&self) -> &BatchMeta {
        &self.meta
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// First row outside `domain`, if any.
    pub fn first_infeasible(&self, domain: &ConvexDomain) -> Option<usize> {
        self.rows().position(|r| !domain.contains(r))
    }

    /// Mean of `‖row‖²`.
    pub fn mean_squared_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / self.len() as f64
    }

    /// Writes `dim_0,…,dim_{d−1}` CSV plus a `<path>.meta.json` sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim).map(|j| format!("dim_{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                // Display prints the shortest representation that parses back exactly.
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        let sidecar = Sidecar {
            space: self.space,
            seed: self.meta.seed,
            generator: self.meta.generator.clone(),
            n: self.len(),
            dim: self.dim,
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(sidecar_path(path), json + "\n")?;
        Ok(())
    }

    /// Reads a CSV written by [`SampleBatch::write_csv`]. The sidecar is optional; without
    /// it the batch is tagged primal with empty metadata.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty csv".into()))??;
        let dim = header.split(',').count();
        for (j, name) in header.split(',').enumerate() {
            if name.trim() != format!("dim_{j}") {
                return Err(Error::Format(format!("unexpected header column {name:?}")));
            }
        }
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {i}: bad number {field:?}")))?;
                data.push(v);
            }
            if data.len() - before != dim {
                return Err(Error::Format(format!("row {i} has {} columns", data.len() - before)));
            }
        }
        let (space, meta) = match fs::read_to_string(sidecar_path(path)) {
            Ok(text) => {
                let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
                (s.space, BatchMeta::new(s.seed, s.generator))
            }
            Err(_) => (Space::Primal, BatchMeta::default()),
        };
        SampleBatch::new(data, dim, space, meta)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite_rows() {
        let err = SampleBatch::new(vec![0.0, 1.0, f64::NAN, 2.0], 2, Space::Dual, BatchMeta::default());
        assert_eq!(err.unwrap_err(), Error::Numeric("row 1 is not finite".into()));
    }

    #[test]
    fn csv_has_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let b = SampleBatch::new(vec![0.1, -2.0, 3.5, 1e-300], 2, Space::Primal, BatchMeta::new(Some(4), "t")).unwrap();
        b.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("dim_0,dim_1\n0.1,-2\n"));
        assert!(sidecar_path(&path).exists());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 0..40), seed in any::<u64>()) {
            let dim = 2;
            let n = values.len() / dim * dim;
            let b = SampleBatch::new(values[..n].to_vec(), dim, Space::Dual, BatchMeta::new(Some(seed), "prop")).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("b.csv");
            b.write_csv(&path).unwrap();
            let back = SampleBatch::read_csv(&path).unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
