use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn check(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, pred.shape(), target.shape()));
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target, "mae")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / pred.len().max(1) as f64)
}

/// Root mean squared error over all elements.
pub fn rmse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target, "rmse")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / pred.len().max(1) as f64).sqrt())
}

/// Running sums for MAE/RMSE across many equally weighted elements.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorAccumulator {
    abs: f64,
    sq: f64,
    count: usize,
}

impl ErrorAccumulator {
    pub fn push(&mut self, pred: &Tensor, target: &Tensor) -> Result<()> {
        check(pred, target, "metrics")?;
        for (a, b) in pred.data().iter().zip(target.data()) {
            self.abs += (a - b).abs();
            self.sq += (a - b) * (a - b);
        }
        self.count += pred.len();
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mae(&self) -> f64 {
        self.abs / self.count.max(1) as f64
    }

    pub fn rmse(&self) -> f64 {
        (self.sq / self.count.max(1) as f64).sqrt()
    }
}
