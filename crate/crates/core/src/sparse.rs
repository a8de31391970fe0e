//! Compressed sparse row matrices.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("row {row} has unsorted or duplicate column {col}")]
    Unsorted { row: usize, col: u32 },
    #[error("column {col} out of range for {cols} columns")]
    ColumnOutOfRange { col: u32, cols: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("corrupt matrix file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-compressed matrix of `f64` with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(cols: usize) -> Self {
        Self { rows: 0, cols, indptr: vec![0], indices: Vec::new(), data: Vec::new() }
    }

    /// Builds from per-row `(column, value)` lists. Entries are sorted; explicit
    /// zeros are dropped.
    pub fn from_rows<R>(cols: usize, rows: impl IntoIterator<Item = R>) -> Result<Self, SparseError>
    where
        R: IntoIterator<Item = (u32, f64)>,
    {
        let mut m = Self::empty(cols);
        for row in rows {
            let mut entries: Vec<(u32, f64)> = row.into_iter().filter(|(_, v)| *v != 0.0).collect();
            entries.sort_by_key(|(c, _)| *c);
            m.push_row(&entries)?;
        }
        Ok(m)
    }

    pub fn from_dense(cols: usize, dense: &[Vec<f64>]) -> Self {
        Self::from_rows(
            cols,
            dense.iter().map(|r| r.iter().enumerate().map(|(c, v)| (c as u32, *v)).collect::<Vec<_>>()),
        )
        .expect("dense rows are well formed")
    }

    /// Appends a row whose entries are sorted by column.
    pub fn push_row(&mut self, entries: &[(u32, f64)]) -> Result<(), SparseError> {
        let row = self.rows;
        let mut prev: Option<u32> = None;
        for &(c, v) in entries {
            if (c as usize) >= self.cols {
                return Err(SparseError::ColumnOutOfRange { col: c, cols: self.cols });
            }
            if prev.is_some_and(|p| p >= c) {
                return Err(SparseError::Unsorted { row, col: c });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row });
            }
            prev = Some(c);
        }
        for &(c, v) in entries {
            self.indices.push(c);
            self.data.push(v);
        }
        self.indptr.push(self.indices.len());
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, r: usize, c: u32) -> f64 {
        let (idx, val) = self.row(r);
        idx.binary_search(&c).map(|i| val[i]).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| {
                let mut d = vec![0.0; self.cols];
                let (idx, val) = self.row(r);
                for (c, v) in idx.iter().zip(val) {
                    d[*c as usize] = *v;
                }
                d
            })
            .collect()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut m = Self::empty(self.cols);
        for &r in rows {
            let (idx, val) = self.row(r);
            m.indices.extend_from_slice(idx);
            m.data.extend_from_slice(val);
            m.indptr.push(m.indices.len());
            m.rows += 1;
        }
        m
    }

    /// Keeps the given columns, renumbered in the given order.
    pub fn select_columns(&self, columns: &[u32]) -> Self {
        let mut remap = vec![u32::MAX; self.cols];
        for (new, &old) in columns.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut m = Self::empty(columns.len());
        let mut buf = Vec::new();
        for r in 0..self.rows {
            buf.clear();
            let (idx, val) = self.row(r);
            for (c, v) in idx.iter().zip(val) {
                let n = remap[*c as usize];
                if n != u32::MAX {
                    buf.push((n, *v));
                }
            }
            buf.sort_by_key(|(c, _)| *c);
            m.push_row(&buf).expect("remapped columns are unique");
        }
        m
    }

    /// Column-major view: for each column, `(row, value)` pairs in row order.
    pub fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (c, v) in idx.iter().zip(val) {
                cols[*c as usize].push((r as u32, *v));
            }
        }
        cols
    }

    /// Writes the binary layout: `rows`, `cols`, `nnz` as little-endian u64,
    /// then `rows + 1` u64 row offsets, `nnz` u32 column indices and `nnz` f64 values.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_u64::<LittleEndian>(self.rows as u64)?;
        w.write_u64::<LittleEndian>(self.cols as u64)?;
        w.write_u64::<LittleEndian>(self.nnz() as u64)?;
        for &p in &self.indptr {
            w.write_u64::<LittleEndian>(p as u64)?;
        }
        for &c in &self.indices {
            w.write_u32::<LittleEndian>(c)?;
        }
        for &v in &self.data {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SparseError> {
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let cols = r.read_u64::<LittleEndian>()? as usize;
        let nnz = r.read_u64::<LittleEndian>()? as usize;
        let mut indptr = Vec::with_capacity(rows + 1);
        for _ in 0..=rows {
            indptr.push(r.read_u64::<LittleEndian>()? as usize);
        }
        if indptr.first() != Some(&0) || indptr.last() != Some(&nnz) || indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(SparseError::Corrupt("row offsets".into()));
        }
        let mut indices = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            indices.push(r.read_u32::<LittleEndian>()?);
        }
        let mut data = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            data.push(r.read_f64::<LittleEndian>()?);
        }
        let mut m = Self::empty(cols);
        for row in 0..rows {
            let entries: Vec<(u32, f64)> = (indptr[row]..indptr[row + 1]).map(|i| (indices[i], data[i])).collect();
            m.push_row(&entries)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        self.write_to(io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SparseError> {
        Self::read_from(io::BufReader::new(std::fs::File::open(path)?))
    }
}
