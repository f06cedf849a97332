use crate::error::{Error, Result};
use crate::scalar::Real;

/// Samples grouped by strictly increasing observation times in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset<T = f64> {
    dim: usize,
    times: Vec<T>,
    blocks: Vec<Vec<Vec<T>>>,
    subject: Option<String>,
}

impl<T: Real> PanelDataset<T> {
    pub fn new(dim: usize, times: Vec<T>, blocks: Vec<Vec<Vec<T>>>, subject: Option<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if times.is_empty() || times.len() != blocks.len() {
            return Err(Error::invalid(format!(
                "{} times for {} blocks; need one time per nonempty block",
                times.len(),
                blocks.len()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t >= T::zero() && t <= T::one()) {
                return Err(Error::invalid(format!("time {t} lies outside [0, 1]")));
            }
            if i > 0 && !(t > times[i - 1]) {
                return Err(Error::invalid("times must be strictly increasing"));
            }
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::invalid(format!("time block {i} is empty")));
            }
            if b.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
                return Err(Error::invalid(format!("time block {i} has a malformed sample")));
            }
        }
        Ok(Self { dim, times, blocks, subject })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn blocks(&self) -> &[Vec<Vec<T>>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[Vec<T>] {
        &self.blocks[i]
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    pub fn subject(&self) -> Option<&str> {
        self.subject.as_deref()
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn total_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn pooled(&self) -> impl Iterator<Item = &[T]> {
        self.blocks.iter().flatten().map(Vec::as_slice)
    }

    /// Index of the block observed at `t`, if any.
    pub fn time_index(&self, t: T) -> Option<usize> {
        let tol = T::epsilon() * T::from(16.0).unwrap();
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }
}
