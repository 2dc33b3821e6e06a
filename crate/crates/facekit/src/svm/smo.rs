//! Sequential minimal optimization with maximal-violating-pair selection.
//!
//! Scores are kept as `s_t = y_t - u_t` with `u_t = sum_s alpha_s y_s K_st`;
//! the most violating pair is the largest score over the "up" set against
//! the smallest over the "down" set, and convergence means their gap fell
//! under the tolerance.

use super::KernelSpec;

/// Hard cap on pair updates; hitting it is reported, not an error.
pub const MAX_PAIR_UPDATES: usize = 100_000;

/// Multipliers below this fraction of C are snapped to the bound they were
/// heading for, so stored support sets carry no round-off dust.
const DUST: f64 = 1e-10;

/// Full kernel matrix; fine for the corpus sizes this crate targets.
pub(crate) struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub(crate) fn build(points: &[Vec<f64>], kernel: KernelSpec) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel.eval_unchecked(&points[i], &points[j]);
                data[i * n + j] = k;
                data[j * n + i] = k;
            }
        }
        Gram { n, data }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// How a solve ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoSummary {
    /// Whether the maximal KKT violation fell under the tolerance. False
    /// means the update cap (or a degenerate stall) ended the run.
    pub converged: bool,
    pub pair_updates: usize,
    /// Final `max_up score - min_down score` gap.
    pub final_violation: f64,
}

pub(crate) struct Outcome {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub summary: SmoSummary,
}

#[inline]
fn snap_to_bounds(a: f64, c: f64) -> f64 {
    if a < DUST * c {
        0.0
    } else if a > c * (1.0 - DUST) {
        c
    } else {
        a
    }
}

pub(crate) fn solve(gram: &Gram, labels: &[f64], c: f64, tol: f64) -> Outcome {
    let n = gram.n;
    debug_assert_eq!(labels.len(), n);
    let mut alpha = vec![0.0f64; n];
    let mut u = vec![0.0f64; n];
    let mut updates = 0usize;

    let (converged, violation) = loop {
        // Select i maximizing the score over points allowed to grow their
        // contribution, j minimizing it over points allowed to shrink.
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut s_i = f64::NEG_INFINITY;
        let mut s_j = f64::INFINITY;
        for t in 0..n {
            let s = labels[t] - u[t];
            let up = (labels[t] > 0.0 && alpha[t] < c) || (labels[t] < 0.0 && alpha[t] > 0.0);
            let down = (labels[t] > 0.0 && alpha[t] > 0.0) || (labels[t] < 0.0 && alpha[t] < c);
            if up && s > s_i {
                s_i = s;
                i = t;
            }
            if down && s < s_j {
                s_j = s;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX {
            break (true, 0.0);
        }
        let gap = s_i - s_j;
        if gap < tol {
            break (true, gap);
        }
        if updates >= MAX_PAIR_UPDATES {
            break (false, gap);
        }

        let (yi, yj) = (labels[i], labels[j]);
        let (lo, hi) = if yi != yj {
            (
                (alpha[j] - alpha[i]).max(0.0),
                (c + alpha[j] - alpha[i]).min(c),
            )
        } else {
            (
                (alpha[i] + alpha[j] - c).max(0.0),
                (alpha[i] + alpha[j]).min(c),
            )
        };
        let eta = gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j);
        let raw = if eta > 1e-12 {
            alpha[j] + yj * (s_j - s_i) / eta
        } else {
            // Flat direction: the objective is linear along the pair, so
            // jump to whichever box corner improves it.
            if yj * (s_j - s_i) > 0.0 {
                hi
            } else {
                lo
            }
        };
        // Snapping inside the loop matters: a clamped step meant to land a
        // multiplier exactly on its bound leaves rounding residue on the
        // partner, and that residue keeps the point in the selection sets,
        // so the same pair gets reselected with no room left to move.
        let new_j = snap_to_bounds(raw.clamp(lo, hi), c);
        let delta_j = new_j - alpha[j];
        if delta_j == 0.0 {
            // No feasible progress on the most violating pair; nothing
            // better exists, so stop rather than loop forever.
            break (false, gap);
        }
        let new_i = snap_to_bounds((alpha[i] + yi * yj * (alpha[j] - new_j)).clamp(0.0, c), c);
        let delta_i = new_i - alpha[i];
        alpha[i] = new_i;
        alpha[j] = new_j;
        for t in 0..n {
            u[t] += yi * delta_i * gram.get(i, t) + yj * delta_j * gram.get(j, t);
        }
        updates += 1;
    };

    for a in &mut alpha {
        *a = snap_to_bounds(*a, c);
    }

    // Recompute scores exactly at the final multipliers; the incremental u
    // accumulates round-off over many updates.
    for t in 0..n {
        let mut ut = 0.0;
        for (s, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                ut += a * labels[s] * gram.get(s, t);
            }
        }
        u[t] = ut;
    }
    let bias = compute_bias(&alpha, labels, &u, c);

    Outcome {
        alphas: alpha,
        bias,
        summary: SmoSummary {
            converged,
            pair_updates: updates,
            final_violation: violation,
        },
    }
}

/// Mean score over free support vectors; with none, the midpoint of the
/// interval the bounded constraints leave open.
fn compute_bias(alpha: &[f64], labels: &[f64], u: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    for t in 0..alpha.len() {
        let s = labels[t] - u[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += s;
            free_count += 1;
        }
        let up = (labels[t] > 0.0 && alpha[t] < c) || (labels[t] < 0.0 && alpha[t] > 0.0);
        let down = (labels[t] > 0.0 && alpha[t] > 0.0) || (labels[t] < 0.0 && alpha[t] < c);
        if up {
            lb = lb.max(s);
        }
        if down {
            ub = ub.min(s);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else if lb.is_finite() && ub.is_finite() {
        (lb + ub) / 2.0
    } else if lb.is_finite() {
        lb
    } else if ub.is_finite() {
        ub
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::super::{smo_train, KernelSpec};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clamped_steps_leave_no_residue_that_stalls_the_pair_selection() {
        // Regression: a step clamped so the partner lands on zero used to
        // leave ~1e-17 on it, the point stayed selectable, and the solver
        // reselected the exhausted pair and quit at a large violation.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let center = label * 0.8;
            points.push(vec![
                center + rng.random_range(-1.2..1.2),
                -center + rng.random_range(-1.2..1.2),
            ]);
            labels.push(label);
        }
        let tol = 1e-3;
        let (_, summary) =
            smo_train(&points, &labels, KernelSpec::quadratic(), 10.0, tol).unwrap();
        assert!(summary.converged, "stalled at {:?}", summary);
        assert!(summary.final_violation < tol);
    }

    #[test]
    fn gram_matrix_is_symmetric_with_kernel_entries() {
        let points = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.0, 0.5]];
        let g = Gram::build(&points, KernelSpec::quadratic());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), g.get(j, i));
                let want = KernelSpec::quadratic()
                    .eval(&points[i], &points[j])
                    .unwrap();
                assert_eq!(g.get(i, j), want);
            }
        }
    }

    #[test]
    fn solver_reports_convergence_and_update_count() {
        let points = vec![vec![1.0], vec![-1.0]];
        let labels = vec![1.0, -1.0];
        let (_, summary) = smo_train(&points, &labels, KernelSpec::Linear, 10.0, 1e-9).unwrap();
        assert!(summary.converged);
        assert_eq!(summary.pair_updates, 1);
        assert!(summary.final_violation < 1e-9);
    }

    #[test]
    fn noisy_overlapping_classes_still_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 40;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let off = if i % 2 == 0 { 0.3 } else { -0.3 };
                vec![off + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
            })
            .collect();
        let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let tol = 1e-4;
        for c in [0.1, 1.0, 10.0] {
            let (model, summary) =
                smo_train(&points, &labels, KernelSpec::Rbf { gamma: 1.0 }, c, tol).unwrap();
            assert!(summary.converged, "C={c} did not converge");
            let sum: f64 = model.dual_coefs().iter().sum();
            assert!(sum.abs() < 1e-9);
            for (sv, &d) in model.support_vectors().iter().zip(model.dual_coefs()) {
                assert!(d.abs() <= c * (1.0 + 1e-9));
                if d.abs() < c * (1.0 - 1e-9) {
                    let margin = d.signum() * model.decision_value(sv).unwrap();
                    assert!((margin - 1.0).abs() < 10.0 * tol);
                }
            }
        }
    }

    #[test]
    fn contradictory_duplicates_do_not_hang() {
        // Identical feature vectors with opposite labels force the flat
        // direction guard.
        let points = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0]];
        let labels = vec![1.0, -1.0, -1.0];
        let (model, _) = smo_train(&points, &labels, KernelSpec::Linear, 5.0, 1e-6).unwrap();
        assert!(model.dual_coefs().iter().all(|d| d.is_finite()));
    }
}
