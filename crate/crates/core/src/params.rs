//! Flat parameter vectors with a named segment table.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One named block of parameters inside a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Shared, immutable segment table. Vectors built from the same layout are
/// algebra-compatible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout(Arc<[Segment]>);

impl Layout {
    /// Builds a layout from (name, shape) pairs, assigning contiguous offsets.
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Vec<usize>)>) -> Result<Self> {
        let mut offset = 0;
        let mut segments = Vec::new();
        for (name, shape) in entries {
            if shape.is_empty() || shape.contains(&0) {
                return Err(Error::Layout(format!("invalid segment shape {shape:?}")));
            }
            let seg = Segment {
                name: name.into(),
                shape,
                offset,
            };
            offset += seg.size();
            segments.push(seg);
        }
        Ok(Layout(segments.into()))
    }

    /// Rebuilds a layout from a stored segment table, checking that offsets
    /// partition the flat sequence.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut expected = 0;
        for s in &segments {
            if s.offset != expected {
                return Err(Error::Layout(format!(
                    "segment {} starts at {} but previous segments end at {expected}",
                    s.name, s.offset
                )));
            }
            if s.shape.contains(&0) {
                return Err(Error::Layout(format!("segment {} has a zero extent", s.name)));
            }
            expected += s.size();
        }
        Ok(Layout(segments.into()))
    }

    /// Single unnamed segment of length `n`.
    pub fn flat(n: usize) -> Self {
        Layout::new([("theta", vec![n])]).expect("n must be positive")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn total_len(&self) -> usize {
        self.0.last().map(|s| s.offset + s.size()).unwrap_or(0)
    }

    fn compatible(&self, other: &Layout) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

/// A flat, ordered view over all model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if layout.total_len() != values.len() {
            return Err(Error::Layout(format!(
                "layout needs {} values, got {}",
                layout.total_len(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self {
            layout: layout.clone(),
            values: vec![0.0; layout.total_len()],
        }
    }

    /// Single-segment vector, handy for tests and analytic problems.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let layout = Layout::flat(values.len());
        Self { layout, values }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.layout.clone(), values)
    }

    pub fn segment(&self, index: usize) -> &[f64] {
        let s = &self.layout.segments()[index];
        &self.values[s.offset..s.offset + s.size()]
    }

    pub fn segment_tensor(&self, index: usize) -> Tensor {
        let s = &self.layout.segments()[index];
        Tensor::from_parts(s.shape.clone(), self.segment(index).to_vec())
    }

    pub fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.layout.compatible(&other.layout) {
            Ok(())
        } else {
            Err(Error::Layout(format!(
                "segment tables differ ({} vs {} values)",
                self.len(),
                other.len()
            )))
        }
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ParamVector) -> Result<ParamVector> {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn zip_with(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> Result<ParamVector> {
        self.check_compatible(other)?;
        Ok(ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Bitwise equality of values (and layout).
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.layout.compatible(&other.layout)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norms() {
        assert_eq!(ParamVector::from_vec(vec![0.0; 4]).l2_norm(), 0.0);
        assert_eq!(ParamVector::from_vec(vec![3.0, 4.0]).l2_norm(), 5.0);
    }

    #[test]
    fn incompatible_layouts_are_errors() {
        let a = ParamVector::from_vec(vec![1.0, 2.0]);
        let layout = Layout::new([("w", vec![1]), ("b", vec![1])]).unwrap();
        let b = ParamVector::new(layout, vec![1.0, 2.0]).unwrap();
        assert!(matches!(a.add(&b), Err(Error::Layout(_))));
        assert!(a.dot(&b).is_err());
        let c = ParamVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(a.sub(&c).is_err());
    }

    #[test]
    fn offsets_partition_values() {
        let layout = Layout::new([("w", vec![2, 3]), ("b", vec![3])]).unwrap();
        assert_eq!(layout.total_len(), 9);
        assert_eq!(layout.segments()[1].offset, 6);
        assert!(ParamVector::new(layout.clone(), vec![0.0; 8]).is_err());
        let bad = vec![
            Segment {
                name: "w".into(),
                shape: vec![2],
                offset: 0,
            },
            Segment {
                name: "b".into(),
                shape: vec![2],
                offset: 3,
            },
        ];
        assert!(Layout::from_segments(bad).is_err());
        assert_eq!(Layout::from_segments(layout.segments().to_vec()).unwrap(), layout);
    }

    #[test]
    fn elementwise_algebra() {
        let a = ParamVector::from_vec(vec![1.0, -2.0]);
        let b = ParamVector::from_vec(vec![0.5, 4.0]);
        assert_eq!(a.add(&b).unwrap().values(), &[1.5, 2.0]);
        assert_eq!(a.scale(-2.0).values(), &[-2.0, 4.0]);
        assert_eq!(a.dot(&b).unwrap(), 0.5 - 8.0);
        assert_eq!(a.axpy(2.0, &b).unwrap().values(), &[2.0, 6.0]);
    }

    proptest! {
        #[test]
        fn dot_self_is_squared_norm(v in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let p = ParamVector::from_vec(v);
            let d = p.dot(&p).unwrap();
            let n = p.l2_norm();
            prop_assert!((d - n * n).abs() <= 1e-12 * d.max(1e-300));
        }
    }
}
