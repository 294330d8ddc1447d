//! Synthetic manifold datasets and neighborhood graphs.
//!
//! Samples are stored as the columns of a `D x N` array. On disk a dataset is
//! a CSV with one sample per row (`x1..xD`, then optional `gt_z1..gt_zm`) and
//! its provenance as `# key=value` lines above the header, enough to
//! regenerate it bit-exactly.

mod generators;
mod knn;

pub use generators::{
    gen_circle, gen_sine_curve, gen_square_with_hole, sample_square_with_hole, GeneratorSpec,
};
pub use knn::{knn_graph, NeighborhoodGraph};

use std::io::{Read, Write};
use std::path::Path;

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::table::Table;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: RealArray,
    latent: Option<RealArray>,
    provenance: Vec<(String, String)>,
}

impl Dataset {
    /// `points` is `D x N`; `latent`, when present, is `m x N`.
    pub fn new(
        points: RealArray,
        latent: Option<RealArray>,
        provenance: Vec<(String, String)>,
    ) -> Result<Self> {
        if points.cols() == 0 || points.rows() == 0 {
            return Err(Error::InvalidArgument(
                "dataset must have at least one sample and one coordinate".into(),
            ));
        }
        if !points.is_finite() {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        if let Some(l) = &latent {
            if l.cols() != points.cols() {
                return Err(Error::dim(
                    "ground-truth latent count",
                    points.cols(),
                    l.cols(),
                ));
            }
            if !l.is_finite() {
                return Err(Error::InvalidArgument(
                    "ground-truth latents contain non-finite values".into(),
                ));
            }
        }
        Ok(Dataset {
            points,
            latent,
            provenance,
        })
    }

    pub fn points(&self) -> &RealArray {
        &self.points
    }

    pub fn latent(&self) -> Option<&RealArray> {
        self.latent.as_ref()
    }

    pub fn provenance(&self) -> &[(String, String)] {
        &self.provenance
    }

    pub fn provenance_value(&self, key: &str) -> Option<&str> {
        self.provenance
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.points.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.cols() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::dim("sample index", format!("< {}", self.len()), bad));
        }
        Dataset::new(
            self.points.select_cols(idx),
            self.latent.as_ref().map(|l| l.select_cols(idx)),
            self.provenance.clone(),
        )
    }

    /// Keeps every `stride`-th sample, starting with the first.
    pub fn subsample(&self, stride: usize) -> Result<Dataset> {
        if stride == 0 {
            return Err(Error::InvalidArgument(
                "subsample stride must be at least 1".into(),
            ));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let mut out = self.select(&idx)?;
        let prior = out
            .provenance_value("stride")
            .and_then(|s| s.parse::<usize>().ok())
            .unwrap_or(1);
        out.provenance.retain(|(k, _)| k != "stride");
        out.provenance
            .push(("stride".into(), (prior * stride).to_string()));
        Ok(out)
    }

    pub fn to_table(&self) -> Table {
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        if let Some(l) = &self.latent {
            header.extend((1..=l.rows()).map(|i| format!("gt_z{i}")));
        }
        let mut t = Table::new(header);
        t.preamble = self.provenance.clone();
        for j in 0..self.len() {
            let mut row = self.points.col(j);
            if let Some(l) = &self.latent {
                row.extend(l.col(j));
            }
            t.push_row(row);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Dataset> {
        let xs = t.indexed_columns("x");
        if xs.is_empty() {
            return Err(Error::Format("dataset has no x1 column".into()));
        }
        let zs = t.indexed_columns("gt_z");
        let pick = |cols: &[usize]| {
            let rows: Vec<Vec<f64>> = t
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect();
            RealArray::from_rows(&rows).transpose()
        };
        if t.rows.is_empty() {
            return Err(Error::Format("dataset has no samples".into()));
        }
        let latent = (!zs.is_empty()).then(|| pick(&zs));
        Dataset::new(pick(&xs), latent, t.preamble.clone())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.to_table().write(out)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        Dataset::from_table(&Table::read(input)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_table().save(path)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Dataset::from_table(&Table::load(path)?)
            .map_err(|e| e.context(format!("dataset {}", path.display())))
    }
}
