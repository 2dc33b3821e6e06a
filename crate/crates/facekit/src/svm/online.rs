//! Online SVM learning: each arriving point is inserted with a single
//! paired step against its best partner, then violating pairs are optimized
//! until the duality gap falls under the tolerance and settled non-support
//! points are dropped.
//!
//! Multipliers are kept label-signed (`min(0, Cy) <= alpha <= max(0, Cy)`),
//! so the decision function is `f(x) = sum_s alpha_s K(x_s, x) + b` and the
//! gradient of the dual is `g_k = y_k - sum_s alpha_s K_ks`.

use super::{KernelSpec, SvmModel};
use crate::error::{Error, Result};

pub struct OnlineSvm {
    kernel: KernelSpec,
    c: f64,
    tol: f64,
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    /// Kernel rows for the retained set; row s holds K(x_s, x_t) for all t.
    kmat: Vec<Vec<f64>>,
    bias: f64,
}

impl OnlineSvm {
    pub fn new(kernel: KernelSpec, c: f64, tol: f64) -> Result<Self> {
        kernel.validate()?;
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("C {c} must be > 0")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol {tol} must be > 0")));
        }
        Ok(OnlineSvm {
            kernel,
            c,
            tol,
            points: Vec::new(),
            labels: Vec::new(),
            alpha: Vec::new(),
            grad: Vec::new(),
            kmat: Vec::new(),
            bias: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn lower(&self, s: usize) -> f64 {
        (self.c * self.labels[s]).min(0.0)
    }

    fn upper(&self, s: usize) -> f64 {
        (self.c * self.labels[s]).max(0.0)
    }

    /// Inserts one labeled point and re-optimizes until the retained set
    /// satisfies the KKT conditions within the tolerance.
    pub fn process(&mut self, x: Vec<f64>, label: f64) -> Result<()> {
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidLabel(label));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(first) = self.points.first() {
            if x.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    actual: x.len(),
                });
            }
        }

        // Grow the kernel matrix by one row and column.
        let k = self.points.len();
        let mut row: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.kernel.eval_unchecked(p, &x))
            .collect();
        row.push(self.kernel.eval_unchecked(&x, &x));
        for (r, &v) in self.kmat.iter_mut().zip(&row) {
            r.push(v);
        }
        self.kmat.push(row);
        self.points.push(x);
        self.labels.push(label);
        self.alpha.push(0.0);
        let g = label
            - self
                .alpha
                .iter()
                .zip(&self.kmat[k])
                .map(|(a, kv)| a * kv)
                .sum::<f64>();
        self.grad.push(g);

        // One paired step against the best partner, as in the insertion
        // phase of online process/reprocess learning.
        let pair = if label > 0.0 {
            self.argmin_down().map(|j| (k, j))
        } else {
            self.argmax_up().map(|i| (i, k))
        };
        if let Some((i, j)) = pair {
            if i != j && self.grad[i] - self.grad[j] > self.tol {
                self.smo_step(i, j);
            }
        }
        self.reprocess_until_settled();
        Ok(())
    }

    /// Index maximizing the gradient among points below their upper bound.
    fn argmax_up(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for s in 0..self.len() {
            if self.alpha[s] < self.upper(s)
                && best.is_none_or(|b| self.grad[s] > self.grad[b])
            {
                best = Some(s);
            }
        }
        best
    }

    /// Index minimizing the gradient among points above their lower bound.
    fn argmin_down(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for s in 0..self.len() {
            if self.alpha[s] > self.lower(s)
                && best.is_none_or(|b| self.grad[s] < self.grad[b])
            {
                best = Some(s);
            }
        }
        best
    }

    fn smo_step(&mut self, i: usize, j: usize) {
        let eta = self.kmat[i][i] + self.kmat[j][j] - 2.0 * self.kmat[i][j];
        let gap = self.grad[i] - self.grad[j];
        let mut lambda = if eta > 1e-12 { gap / eta } else { f64::INFINITY };
        lambda = lambda
            .min(self.upper(i) - self.alpha[i])
            .min(self.alpha[j] - self.lower(j));
        if lambda <= 0.0 || !lambda.is_finite() {
            return;
        }
        self.alpha[i] += lambda;
        self.alpha[j] -= lambda;
        for s in 0..self.len() {
            self.grad[s] -= lambda * (self.kmat[i][s] - self.kmat[j][s]);
        }
    }

    /// Optimizes maximal violating pairs until the gap closes, then updates
    /// the bias and drops settled zero-multiplier points.
    fn reprocess_until_settled(&mut self) {
        loop {
            let (Some(i), Some(j)) = (self.argmax_up(), self.argmin_down()) else {
                return;
            };
            let gap = self.grad[i] - self.grad[j];
            if gap <= self.tol {
                self.bias = (self.grad[i] + self.grad[j]) / 2.0;
                let (gi, gj) = (self.grad[i], self.grad[j]);
                let mut s = 0;
                while s < self.len() {
                    let settled = self.alpha[s] == 0.0
                        && ((self.labels[s] < 0.0 && self.grad[s] >= gi)
                            || (self.labels[s] > 0.0 && self.grad[s] <= gj));
                    if settled {
                        self.remove(s);
                    } else {
                        s += 1;
                    }
                }
                return;
            }
            self.smo_step(i, j);
        }
    }

    fn remove(&mut self, s: usize) {
        self.points.swap_remove(s);
        self.labels.swap_remove(s);
        self.alpha.swap_remove(s);
        self.grad.swap_remove(s);
        self.kmat.swap_remove(s);
        for row in &mut self.kmat {
            row.swap_remove(s);
        }
    }

    /// Current decision value under the retained set.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for (p, &a) in self.points.iter().zip(&self.alpha) {
            if a != 0.0 {
                f += a * self.kernel.eval(p, x)?;
            }
        }
        Ok(f)
    }

    /// Freezes the current state into a batch-style model, dropping points
    /// with zero multipliers.
    pub fn model(&self) -> Result<SvmModel> {
        let dim = self
            .points
            .first()
            .ok_or(Error::EmptyTrainingSet)?
            .len();
        let mut svs = Vec::new();
        let mut duals = Vec::new();
        for (p, &a) in self.points.iter().zip(&self.alpha) {
            if a != 0.0 {
                svs.push(p.clone());
                duals.push(a);
            }
        }
        SvmModel::from_parts(self.kernel, self.c, dim, svs, duals, self.bias)
    }
}

#[cfg(test)]
mod tests {
    use super::super::smo_train;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn streaming_the_toy_pair_matches_batch() {
        let mut online = OnlineSvm::new(KernelSpec::Linear, 10.0, 1e-6).unwrap();
        online.process(vec![1.0], 1.0).unwrap();
        online.process(vec![-1.0], -1.0).unwrap();
        let model = online.model().unwrap();
        let (batch, _) = smo_train(
            &[vec![1.0], vec![-1.0]],
            &[1.0, -1.0],
            KernelSpec::Linear,
            10.0,
            1e-6,
        )
        .unwrap();
        assert!((model.bias() - batch.bias()).abs() < 1e-6);
        for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let a = model.decision_value(&[x]).unwrap();
            let b = batch.decision_value(&[x]).unwrap();
            assert!((a - b).abs() < 1e-6, "f({x}): online {a} batch {b}");
        }
    }

    #[test]
    fn comfortably_classified_point_changes_nothing() {
        let mut online = OnlineSvm::new(KernelSpec::Linear, 10.0, 1e-6).unwrap();
        online.process(vec![1.0], 1.0).unwrap();
        online.process(vec![-1.0], -1.0).unwrap();
        let before = online.model().unwrap();
        // f(x) = x, so x = 5 has margin 5, far beyond 1.
        online.process(vec![5.0], 1.0).unwrap();
        let after = online.model().unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn duplicate_support_vector_barely_moves_the_decision() {
        let tol = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let off = if i % 2 == 0 { 1.2 } else { -1.2 };
            points.push(vec![off + rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)]);
            labels.push(if i % 2 == 0 { 1.0 } else { -1.0 });
        }
        let mut online = OnlineSvm::new(KernelSpec::Rbf { gamma: 0.8 }, 2.0, tol).unwrap();
        for (p, &y) in points.iter().zip(&labels) {
            online.process(p.clone(), y).unwrap();
        }
        let before = online.model().unwrap();
        let sv = before.support_vectors()[0].clone();
        let sv_label = before.dual_coefs()[0].signum();
        online.process(sv, sv_label).unwrap();
        let after = online.model().unwrap();
        for gx in -4..=4 {
            for gy in -4..=4 {
                let q = [f64::from(gx) * 0.5, f64::from(gy) * 0.5];
                let a = before.decision_value(&q).unwrap();
                let b = after.decision_value(&q).unwrap();
                assert!((a - b).abs() < 10.0 * tol, "probe {q:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut online = OnlineSvm::new(KernelSpec::Linear, 1.0, 1e-3).unwrap();
        assert!(online.process(vec![1.0], 0.5).is_err());
        assert!(online.process(vec![f64::NAN], 1.0).is_err());
        online.process(vec![1.0], 1.0).unwrap();
        assert!(online.process(vec![1.0, 2.0], -1.0).is_err());
        assert!(OnlineSvm::new(KernelSpec::Linear, -1.0, 1e-3).is_err());
    }

    #[test]
    fn empty_learner_has_no_model() {
        let online = OnlineSvm::new(KernelSpec::Linear, 1.0, 1e-3).unwrap();
        assert!(online.is_empty());
        assert!(matches!(online.model(), Err(Error::EmptyTrainingSet)));
    }
}
