use std::collections::HashMap;

use rand::Rng;

use crate::rng::derive_rng;

/// Dense row-major matrix of embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

/// Distribution of freshly initialized rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowInit {
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    /// Uniform phase angles in `[0, 2π)`.
    Phase,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim, "embedding data length does not match shape");
        EmbeddingMatrix { rows, dim, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "ragged rows");
            data.extend_from_slice(r);
        }
        EmbeddingMatrix {
            rows: rows.len(),
            dim,
            data,
        }
    }

    /// One row per label, each drawn from a generator keyed by
    /// `(seed, stream, label)`: a label gets the same initial row no matter
    /// which vocabulary or position it appears in.
    pub fn init_keyed<'a>(
        labels: impl IntoIterator<Item = &'a str>,
        dim: usize,
        seed: u64,
        stream: &str,
        init: RowInit,
    ) -> Self {
        let mut data = Vec::new();
        let mut rows = 0;
        for label in labels {
            let mut rng = derive_rng(seed, &[stream, label]);
            for _ in 0..dim {
                data.push(match init {
                    RowInit::Uniform(bound) => rng.gen_range(-bound..=bound),
                    RowInit::Phase => rng.gen_range(0.0..std::f64::consts::TAU),
                });
            }
            rows += 1;
        }
        EmbeddingMatrix { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix whose row `j` is row `indices[j]` of `self`.
    pub fn gather(&self, indices: &[u32]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i as usize));
        }
        EmbeddingMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.dim == other.dim
    }
}

/// Row-sparse gradient: only rows touched by a batch are present, in
/// first-touch order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad {
    dim: usize,
    ids: Vec<u32>,
    slots: HashMap<u32, usize>,
    data: Vec<f64>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad {
            dim,
            ids: Vec::new(),
            slots: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clear(&mut self) {
        self.ids.clear();
        self.slots.clear();
        self.data.clear();
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [f64] {
        let dim = self.dim;
        let slot = *self.slots.entry(id).or_insert_with(|| {
            self.ids.push(id);
            self.data.resize(self.data.len() + dim, 0.0);
            self.ids.len() - 1
        });
        &mut self.data[slot * dim..(slot + 1) * dim]
    }

    pub fn add_row(&mut self, id: u32, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dim);
        for (g, v) in self.row_mut(id).iter_mut().zip(values) {
            *g += v;
        }
    }

    pub fn get(&self, id: u32) -> Option<&[f64]> {
        self.slots
            .get(&id)
            .map(|&s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(id, row)| (*id, row))
    }
}
