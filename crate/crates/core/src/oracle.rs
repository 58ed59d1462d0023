//! Query interfaces to a model. Every query is counted exactly once, also
//! under concurrent use, and a configured budget is never exceeded.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{objective_cotangent, rows_to_array, Model, Objective};

/// Label-only access: input in, predicted class out.
pub trait LabelOracle: Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn label(&self, x: &[f64]) -> Result<usize>;
    /// One query per row. Implementations may batch or pipeline.
    fn labels(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.label(x)).collect()
    }
    fn queries_used(&self) -> u64;
}

/// Full logit access.
pub trait LogitOracle: LabelOracle {
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn logits_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.logits(x)).collect()
    }
}

/// White-box access, only for locally held models.
pub trait GradientOracle: LogitOracle {
    /// Logits and per-row input gradients of `objectives[i]` at row `i`.
    fn objective_gradients(&self, x: ArrayView2<'_, f64>, objectives: &[Objective]) -> Result<(Array2<f64>, Array2<f64>)>;
    /// Row-wise vector-Jacobian products of the logits.
    fn input_vjp(&self, x: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

/// Atomic query counter with an optional hard cap.
#[derive(Debug, Default)]
pub struct QueryCounter {
    used: AtomicU64,
    budget: Option<u64>,
}

impl QueryCounter {
    pub fn new(budget: Option<u64>) -> Self {
        Self { used: AtomicU64::new(0), budget }
    }

    /// Reserves `n` queries, all or none.
    pub fn charge(&self, n: u64) -> Result<()> {
        match self.budget {
            None => {
                self.used.fetch_add(n, Ordering::SeqCst);
                Ok(())
            }
            Some(cap) => self
                .used
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| u.checked_add(n).filter(|&t| t <= cap))
                .map(|_| ())
                .map_err(|u| Error::BudgetExhausted { used: u }),
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }
}

/// In-process oracle around a model. `param_reads` counts calls that needed
/// the model internals (gradients), so query-only attacks can be audited.
#[derive(Debug)]
pub struct LocalOracle {
    model: Arc<Model>,
    counter: QueryCounter,
    param_reads: AtomicU64,
    label_only: bool,
}

impl LocalOracle {
    pub fn new(model: Arc<Model>) -> Self {
        Self { model, counter: QueryCounter::new(None), param_reads: AtomicU64::new(0), label_only: false }
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.counter = QueryCounter::new(budget);
        self
    }

    /// Refuse logit and gradient queries.
    pub fn label_only(mut self) -> Self {
        self.label_only = true;
        self
    }

    pub fn param_reads(&self) -> u64 {
        self.param_reads.load(Ordering::SeqCst)
    }

    pub fn budget(&self) -> Option<u64> {
        self.counter.budget()
    }

    fn check_rows(&self, xs: &[Vec<f64>]) -> Result<Array2<f64>> {
        rows_to_array(xs, self.model.input_dim())
    }

    fn white_box(&self) -> Result<()> {
        if self.label_only {
            return Err(Error::LabelOnly);
        }
        self.param_reads.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

impl LabelOracle for LocalOracle {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn label(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        self.counter.charge(1)?;
        self.model.predict(x)
    }

    fn labels(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
        let x = self.check_rows(xs)?;
        self.counter.charge(xs.len() as u64)?;
        self.model.predict_batch(x.view())
    }

    fn queries_used(&self) -> u64 {
        self.counter.used()
    }
}

impl LogitOracle for LocalOracle {
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.label_only {
            return Err(Error::LabelOnly);
        }
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        self.counter.charge(1)?;
        self.model.forward(x)
    }

    fn logits_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if self.label_only {
            return Err(Error::LabelOnly);
        }
        let x = self.check_rows(xs)?;
        self.counter.charge(xs.len() as u64)?;
        Ok(self.model.logits(x.view())?.outer_iter().map(|r| r.to_vec()).collect())
    }
}

impl GradientOracle for LocalOracle {
    fn objective_gradients(&self, x: ArrayView2<'_, f64>, objectives: &[Objective]) -> Result<(Array2<f64>, Array2<f64>)> {
        self.white_box()?;
        if objectives.len() != x.nrows() {
            return Err(Error::SizeMismatch(format!("{} objectives for {} rows", objectives.len(), x.nrows())));
        }
        self.counter.charge(x.nrows() as u64)?;
        let logits = self.model.logits(x)?;
        let k = self.model.num_classes();
        let mut v = Array2::zeros((x.nrows(), k));
        for (i, (row, obj)) in logits.outer_iter().zip(objectives).enumerate() {
            let c = objective_cotangent(row.as_slice().expect("contiguous"), *obj)?;
            v.row_mut(i).assign(&ndarray::ArrayView1::from(&c));
        }
        let g = self.model.input_vjp(x, v.view())?;
        Ok((logits, g))
    }

    fn input_vjp(&self, x: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.white_box()?;
        self.counter.charge(x.nrows() as u64)?;
        self.model.input_vjp(x, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchSpec;
    use rayon::prelude::*;

    fn oracle(budget: Option<u64>) -> LocalOracle {
        let m = Model::init(ArchSpec::linear(3, 2), 0).unwrap();
        LocalOracle::new(Arc::new(m)).with_budget(budget)
    }

    #[test]
    fn counts_each_query_once() {
        let o = oracle(None);
        o.label(&[0.1, 0.2, 0.3]).unwrap();
        o.labels(&vec![vec![0.0; 3]; 5]).unwrap();
        o.logits(&[0.0; 3]).unwrap();
        assert_eq!(o.queries_used(), 7);
        assert_eq!(o.param_reads(), 0);
        assert!(o.label(&[0.0; 2]).is_err());
        assert_eq!(o.queries_used(), 7);
    }

    #[test]
    fn budget_is_hard_and_batches_are_atomic() {
        let o = oracle(Some(4));
        o.labels(&vec![vec![0.0; 3]; 3]).unwrap();
        assert!(matches!(o.labels(&vec![vec![0.0; 3]; 2]), Err(Error::BudgetExhausted { used: 3 })));
        o.label(&[0.0; 3]).unwrap();
        assert!(o.label(&[0.0; 3]).is_err());
        assert_eq!(o.queries_used(), 4);
    }

    #[test]
    fn exact_under_concurrency() {
        let o = oracle(Some(5000));
        let ok = (0..8000).into_par_iter().filter(|_| o.label(&[0.5; 3]).is_ok()).count();
        assert_eq!(ok, 5000);
        assert_eq!(o.queries_used(), 5000);
    }

    #[test]
    fn label_only_refuses_logits() {
        let o = oracle(None).label_only();
        assert!(matches!(o.logits(&[0.0; 3]), Err(Error::LabelOnly)));
        assert!(o.label(&[0.0; 3]).is_ok());
    }
}
