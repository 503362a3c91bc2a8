use std::ops::Index;

/// Flat parameter vector of a model. The dimension is fixed for the
/// lifetime of a run; benign nodes only ever produce finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateVector(Vec<f64>);

impl EstimateVector {
    pub fn new(values: Vec<f64>) -> Self {
        EstimateVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        EstimateVector(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance to another vector of the same dimension.
    pub fn distance(&self, other: &EstimateVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn negated(&self) -> EstimateVector {
        EstimateVector(self.0.iter().map(|v| -v).collect())
    }

    pub fn scaled(&self, factor: f64) -> EstimateVector {
        EstimateVector(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn add(&self, other: &EstimateVector) -> EstimateVector {
        debug_assert_eq!(self.len(), other.len());
        EstimateVector(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &EstimateVector) -> EstimateVector {
        debug_assert_eq!(self.len(), other.len());
        EstimateVector(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// Coordinate-wise mean of a non-empty collection of equal-length vectors.
    pub fn mean_of<'a, I>(vectors: I) -> Option<EstimateVector>
    where
        I: IntoIterator<Item = &'a EstimateVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next()?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for v in iter {
            debug_assert_eq!(v.len(), acc.len());
            for (a, b) in acc.iter_mut().zip(v.0.iter()) {
                *a += b;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
        Some(EstimateVector(acc))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for EstimateVector {
    fn from(values: Vec<f64>) -> Self {
        EstimateVector(values)
    }
}

impl AsRef<[f64]> for EstimateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for EstimateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<'a> IntoIterator for &'a EstimateVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
