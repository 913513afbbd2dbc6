use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::family::{ModelFamily, Observation};

/// A family-tagged collection of observations with a fixed covariate
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    family: ModelFamily,
    p: usize,
    rows: Vec<Observation>,
}

impl Dataset {
    pub fn new(family: ModelFamily, p: usize, rows: Vec<Observation>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.x.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} covariates, expected {p}",
                    row.x.len()
                )));
            }
            if row.x.iter().any(|v| !v.is_finite()) || !row.offset.is_finite() {
                return Err(Error::InvalidInput(format!("row {i} has non-finite entries")));
            }
            family
                .check_response(row.y)
                .map_err(|e| Error::InvalidInput(format!("row {i}: {e}")))?;
        }
        Ok(Self { family, p, rows })
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.rows.iter()
    }

    pub fn into_rows(self) -> Vec<Observation> {
        self.rows
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            family: self.family,
            p: self.p,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// All rows except the ones whose index is in `excluded` (sorted).
    pub fn without(&self, excluded: &[usize]) -> Dataset {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| excluded.binary_search(i).is_err())
            .map(|(_, r)| r.clone())
            .collect();
        Dataset {
            family: self.family,
            p: self.p,
            rows,
        }
    }

    /// Rows sorted by content, so that anything computed from the result
    /// depends on the multiset of rows only.
    pub fn canonical(&self) -> Dataset {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            a.y.total_cmp(&b.y)
                .then_with(|| a.offset.total_cmp(&b.offset))
                .then_with(|| {
                    a.x.iter()
                        .zip(&b.x)
                        .map(|(u, v)| u.total_cmp(v))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        Dataset {
            family: self.family,
            p: self.p,
            rows,
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.rows.iter()
    }
}

/// Source of i.i.d. mini-batches.
pub trait SampleStream<'d> {
    /// Draw the next `m` observations.
    fn next_batch(&mut self, m: usize) -> Vec<&'d Observation>;

    /// The data behind the stream; full-gradient diagnostics and the
    /// empirical risk are evaluated on it.
    fn reference(&self) -> &'d Dataset;
}

/// Samples rows uniformly with replacement from a fixed dataset.
#[derive(Debug, Clone)]
pub struct ResamplingStream<'d> {
    data: &'d Dataset,
    rng: ChaCha8Rng,
}

impl<'d> ResamplingStream<'d> {
    pub fn new(data: &'d Dataset, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self {
            data,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl<'d> SampleStream<'d> for ResamplingStream<'d> {
    fn next_batch(&mut self, m: usize) -> Vec<&'d Observation> {
        let n = self.data.len();
        (0..m)
            .map(|_| &self.data.rows[self.rng.random_range(0..n)])
            .collect()
    }

    fn reference(&self) -> &'d Dataset {
        self.data
    }
}
