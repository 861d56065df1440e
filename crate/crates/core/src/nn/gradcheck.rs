//! Central finite-difference oracle for the analytic gradients.
//!
//! The oracle only evaluates the loss; it never touches a backward pass.
//! A parameter whose ±h probes flip any ReLU unit or clip boundary relative
//! to the unperturbed pass sits on a kink where central differences are not
//! a valid reference, so it is counted as skipped instead of compared.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::{ClassWeights, Objective, Pass};
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_per_tensor: Option<usize>,
    pub sample_seed: u64,
    /// Restrict the check to these tensor indices.
    pub tensors: Option<Vec<usize>>,
    /// Entries whose analytic and numeric values are both below this
    /// magnitude are counted in `below_noise` rather than compared. Off (0)
    /// by default.
    pub noise_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_per_tensor: None,
            sample_seed: 0,
            tensors: None,
            noise_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub below_noise: usize,
    /// `(tensor, index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the model's own analytic gradient against central differences.
pub fn finite_difference_check<M: Objective>(
    model: &M,
    input: &M::Input,
    labels: &[usize],
    weights: &ClassWeights,
    pass: Pass,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let analytic = model.gradient(input, labels, weights, pass)?.grads;
    check_gradient(model, input, labels, weights, pass, &analytic, options)
}

/// Compares an arbitrary candidate gradient against central differences.
pub fn check_gradient<M: Objective>(
    model: &M,
    input: &M::Input,
    labels: &[usize],
    weights: &ClassWeights,
    pass: Pass,
    analytic: &[Vec<f64>],
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    assert!(options.h > 0.0, "finite-difference step must be positive");
    let h = options.h;
    let (_, base_kinks) = model.loss(input, labels, weights, pass)?;
    let shapes = model.parameter_shapes();
    assert_eq!(shapes.len(), analytic.len(), "one gradient per tensor");

    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(options.sample_seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        below_noise: 0,
        worst: None,
    };

    for (t, &len) in shapes.iter().enumerate() {
        assert_eq!(analytic[t].len(), len, "gradient tensor {t} has the wrong length");
        if options.tensors.as_ref().is_some_and(|ts| !ts.contains(&t)) {
            continue;
        }
        let indices: Vec<usize> = match options.max_per_tensor {
            Some(k) if k < len => {
                let mut idx = sample(&mut rng, len, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        };
        for i in indices {
            let original = probe.parameters()[t][i];
            probe.parameters_mut()[t][i] = original + h;
            let (plus, plus_kinks) = probe.loss(input, labels, weights, pass)?;
            probe.parameters_mut()[t][i] = original - h;
            let (minus, minus_kinks) = probe.loss(input, labels, weights, pass)?;
            probe.parameters_mut()[t][i] = original;

            if plus_kinks != base_kinks || minus_kinks != base_kinks {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            if analytic[t][i].abs() < options.noise_floor && numeric.abs() < options.noise_floor {
                report.below_noise += 1;
                continue;
            }
            let err = relative_error(analytic[t][i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((t, i, analytic[t][i], numeric));
            }
        }
    }
    Ok(report)
}

/// Uniform `[0, 1)` test inputs.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}
