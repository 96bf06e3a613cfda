//! Central finite-difference check of the analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::MicroNet;
use super::params::Group;
use super::tensor::Tensor4;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a ReLU kink or
    /// a logit clip.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
    /// `(parameter name, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error with a small absolute floor for near-zero gradients.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic gradients of up to `target` randomly chosen trainable
/// scalars against central differences with step `h`. Extractor parameters
/// are checked against `L_y - lambda L_d`, head parameters against
/// `L_y + L_d`.
pub fn gradient_check(
    net: &MicroNet,
    x: &Tensor4,
    speakers: &[usize],
    domains: Option<&[usize]>,
    lambda: f64,
    target: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads, cache) = net.loss_and_grads(x, speakers, domains, lambda)?;
    let base_pattern = cache.activation_pattern();
    let mut coords: Vec<(usize, usize)> = net
        .store
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(i, p)| (0..p.value.len()).map(move |j| (i, j)))
        .collect();
    coords.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut probe = net.clone();
    let eval = |probe: &MicroNet| -> Result<(f64, f64, Vec<bool>)> {
        let (r, cache) = probe.evaluate(x, speakers, domains, lambda)?;
        Ok((r.speaker, r.domain.unwrap_or(0.0), cache.activation_pattern()))
    };
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for (pi, j) in coords {
        if report.checked >= target {
            break;
        }
        let orig = net.store.params[pi].value[j];
        probe.store.params[pi].value[j] = orig + h;
        let (ly_p, ld_p, pat_p) = eval(&probe)?;
        probe.store.params[pi].value[j] = orig - h;
        let (ly_m, ld_m, pat_m) = eval(&probe)?;
        probe.store.params[pi].value[j] = orig;
        if pat_p != base_pattern || pat_m != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = match net.store.params[pi].group {
            Group::Extractor => ((ly_p - lambda * ld_p) - (ly_m - lambda * ld_m)) / (2.0 * h),
            Group::Speaker | Group::Domain => ((ly_p + ld_p) - (ly_m + ld_m)) / (2.0 * h),
        };
        let analytic = grads.0[pi][j];
        let err = relative_error(analytic, numeric);
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some((net.store.params[pi].name.clone(), j, analytic, numeric));
        }
        report.checked += 1;
    }
    Ok(report)
}
