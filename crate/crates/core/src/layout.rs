//! Partition of a flat parameter vector into contiguous layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered, gap-free, non-overlapping spans covering `[0, dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    spans: Vec<Span>,
}

impl LayerLayout {
    pub fn new(spans: Vec<Span>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::invalid("layer layout needs at least one span"));
        }
        let mut next = 0;
        for (q, span) in spans.iter().enumerate() {
            if span.offset != next {
                return Err(Error::invalid(format!(
                    "layer {q} starts at {} but previous layer ends at {next}",
                    span.offset
                )));
            }
            if span.len == 0 {
                return Err(Error::invalid(format!("layer {q} is empty")));
            }
            next += span.len;
        }
        Ok(Self { spans })
    }

    /// Layout with consecutive layers of the given lengths.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut offset = 0;
        let spans = lengths
            .iter()
            .map(|&len| {
                let span = Span { offset, len };
                offset += len;
                span
            })
            .collect();
        Self::new(spans)
    }

    /// A single layer spanning the whole vector.
    pub fn single(dim: usize) -> Result<Self> {
        Self::from_lengths(&[dim])
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn num_layers(&self) -> usize {
        self.spans.len()
    }

    pub fn dim(&self) -> usize {
        self.spans.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn slice<'a, T>(&self, values: &'a [T], layer: usize) -> &'a [T] {
        &values[self.spans[layer].range()]
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_round_trip() {
        let layout = LayerLayout::from_lengths(&[3, 1, 4]).unwrap();
        assert_eq!(layout.dim(), 8);
        assert_eq!(layout.num_layers(), 3);
        assert_eq!(layout.spans()[2], Span { offset: 4, len: 4 });
        assert_eq!(layout.lengths(), vec![3, 1, 4]);
    }

    #[test]
    fn rejects_gaps_and_empties() {
        assert!(LayerLayout::new(vec![]).is_err());
        assert!(LayerLayout::new(vec![Span { offset: 0, len: 2 }, Span { offset: 3, len: 1 }]).is_err());
        assert!(LayerLayout::new(vec![Span { offset: 0, len: 2 }, Span { offset: 1, len: 1 }]).is_err());
        assert!(LayerLayout::from_lengths(&[2, 0]).is_err());
    }
}
