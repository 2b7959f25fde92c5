use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::frame;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FSPV";
const VERSION: u32 = 1;

/// A named `rows x cols` block inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn total_len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// Start offset of every segment.
    pub fn offsets(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.len();
                Some(start)
            })
            .collect()
    }
}

/// Flat model parameters `w` together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::Dimension {
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// The values of the named segment.
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let offsets = self.layout.offsets();
        self.layout
            .segments
            .iter()
            .zip(offsets)
            .find(|(s, _)| s.name == name)
            .map(|(s, start)| &self.values[start..start + s.len()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Layout(format!(
                "{} vs {} parameters in {} vs {} segments",
                self.len(),
                other.len(),
                self.layout.segments.len(),
                other.layout.segments.len()
            )));
        }
        Ok(())
    }

    /// Serialise as the frame header (`FSPV`, JSON layout) followed by the
    /// values as little-endian f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        frame::write_header(w, MAGIC, VERSION, &self.layout)?;
        frame::write_f64s(w, &self.values)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let (layout, offset): (Layout, u64) = frame::read_header(r, MAGIC, VERSION)?;
        let values = frame::read_f64s(r, layout.total_len(), offset, "parameter values")?;
        ParamVector::from_values(layout, values)
    }
}
