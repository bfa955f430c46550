//! Small dense helpers: row-major serde for nalgebra types and a sparse
//! matrix for the per-step inner loops.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub(crate) mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(format!("row {i} has {} entries, expected {ncols}", r.len()));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Coordinate-list matrix holding only nonzero entries.
#[derive(Debug, Clone)]
pub(crate) struct Sparse {
    pub n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Sparse {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Sparse {
            n: m.nrows(),
            entries,
        }
    }

    /// `out = self · x`
    #[inline]
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        out[..self.n].iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, a) in &self.entries {
            out[i] += a * x[j];
        }
    }

    /// `out = selfᵀ · x`
    #[inline]
    pub fn mul_t_into(&self, x: &[f64], out: &mut [f64]) {
        out[..self.n].iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, a) in &self.entries {
            out[j] += a * x[i];
        }
    }

    /// `xᵀ · self · x`
    #[inline]
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, j, a)| a * x[i] * x[j]).sum()
    }

    /// `out += scale · (self + selfᵀ) · x`
    #[inline]
    pub fn add_sym_mul(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for &(i, j, a) in &self.entries {
            out[i] += scale * a * x[j];
            out[j] += scale * a * x[i];
        }
    }
}
