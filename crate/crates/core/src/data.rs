//! Row-major observation container.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Covariate rows with optional responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Option<Vec<f64>>) -> Result<Self> {
        if let Some(y) = &y {
            if y.len() != x.nrows() {
                return Err(Error::Shape(format!(
                    "{} responses for {} rows",
                    y.len(),
                    x.nrows()
                )));
            }
        }
        Ok(Self { x, y })
    }

    pub fn unlabeled(x: Matrix) -> Self {
        Self { x, y: None }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    pub fn responses(&self) -> Result<&[f64]> {
        self.y
            .as_deref()
            .ok_or_else(|| Error::State("dataset has no responses".into()))
    }
}
