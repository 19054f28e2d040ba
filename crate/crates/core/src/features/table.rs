use crate::error::{Error, Result};

/// Dense row-major table of f64 values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize) -> Self {
        FeatureMatrix {
            data: Vec::new(),
            n_cols,
        }
    }

    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of width {n_cols}",
                data.len()
            )));
        }
        Ok(FeatureMatrix { data, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut m = FeatureMatrix::new(n_cols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::Shape(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.n_cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.n_cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            data,
            n_cols: self.n_cols,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&j| r[j]));
        }
        FeatureMatrix {
            data,
            n_cols: cols.len(),
        }
    }

    /// Appends `col` as a new last column.
    pub fn with_column(&self, col: &[f64]) -> Result<FeatureMatrix> {
        if col.len() != self.n_rows() {
            return Err(Error::Shape("column length differs from row count".into()));
        }
        let mut data = Vec::with_capacity(self.data.len() + col.len());
        for (r, &v) in self.rows().zip(col) {
            data.extend_from_slice(r);
            data.push(v);
        }
        Ok(FeatureMatrix {
            data,
            n_cols: self.n_cols + 1,
        })
    }
}
