//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamStore};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Entries checked per parameter; parameters with fewer entries are
    /// checked exhaustively.
    pub samples_per_param: usize,
    /// Lower bound on the relative-error denominator so that near-zero
    /// gradients are compared absolutely.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-4,
            tol: 1e-4,
            samples_per_param: 24,
            denom_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(parameter, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` at a random
/// sample of parameter entries. `store` is perturbed in place and restored.
pub fn grad_check<F>(
    store: &mut ParamStore,
    analytic: &Gradients,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
        passed: true,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = analytic.get(id);
        let n = grad.len();
        let picks: Vec<usize> = if n <= cfg.samples_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_param).into_vec()
        };
        for flat in picks {
            let original = store.value(id).as_slice().expect("contiguous")[flat];
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = original + cfg.eps;
            let plus = loss(store);
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = original - cfg.eps;
            let minus = loss(store);
            store.value_mut(id).as_slice_mut().expect("contiguous")[flat] = original;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grad.as_slice().expect("contiguous")[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.denom_floor);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), flat, a, numeric));
            }
        }
    }
    report.passed = report.max_rel_error < cfg.tol;
    report
}
