//! Metric oracles by direct counting and selection cases with known
//! cosines.

#![allow(dead_code)]

use ffsv_core::eval::{DcfParams, Decision, Embedding};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Rates at threshold `t` by direct counting.
pub fn rates(scores: &[f64], targets: &[bool], t: f64) -> (f64, f64) {
    let nt = targets.iter().filter(|&&l| l).count();
    let nn = targets.len() - nt;
    let miss = scores.iter().zip(targets).filter(|(&s, &l)| l && s < t).count();
    let fa = scores.iter().zip(targets).filter(|(&s, &l)| !l && s >= t).count();
    (miss as f64 / nt as f64, fa as f64 / nn as f64)
}

pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.to_vec();
    t.push(f64::INFINITY);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

pub fn oracle_eer(scores: &[f64], targets: &[bool]) -> f64 {
    let pts: Vec<(f64, f64)> = candidate_thresholds(scores).iter().map(|&t| rates(scores, targets, t)).collect();
    let i = pts.iter().position(|(m, f)| m - f >= 0.0).unwrap();
    let (m1, f1) = pts[i];
    if m1 - f1 == 0.0 || i == 0 {
        return m1;
    }
    let (m0, f0) = pts[i - 1];
    let (d0, d1) = (m0 - f0, m1 - f1);
    m0 + (-d0 / (d1 - d0)) * (m1 - m0)
}

pub fn oracle_min_dcf(scores: &[f64], targets: &[bool], p: &DcfParams) -> f64 {
    let norm = (p.c_miss * p.p_target).min(p.c_fa * (1.0 - p.p_target));
    let mut t = candidate_thresholds(scores);
    t.push(f64::NEG_INFINITY);
    t.iter()
        .map(|&t| {
            let (m, f) = rates(scores, targets, t);
            (p.c_miss * m * p.p_target + p.c_fa * f * (1.0 - p.p_target)) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn random_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=100);
    let coarse = rng.random_bool(0.3);
    loop {
        let targets: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if targets.iter().all(|&t| t) || targets.iter().all(|&t| !t) {
            continue;
        }
        let scores = targets
            .iter()
            .map(|&t| {
                let s: f64 = rng.random_range(-1.0..1.0) + if t { 0.4 } else { 0.0 };
                // coarse scores create many ties
                if coarse {
                    (s * 4.0).round() / 4.0
                } else {
                    s
                }
            })
            .collect();
        return (scores, targets);
    }
}

/// Embedding pairs whose cosine similarities are known exactly.
pub fn selection_cases() -> Vec<(Embedding, Embedding, Decision)> {
    let e = |v: &[f64]| Embedding::new(v.to_vec()).unwrap();
    vec![
        // exactly 0.7 = 7 / (1 * 10)
        (e(&[1.0, 0.0, 0.0, 0.0]), e(&[7.0, 1.0, 1.0, 7.0]), Decision::KeepEnhanced),
        // 0.6 = 3 / 5
        (e(&[1.0, 0.0]), e(&[3.0, 4.0]), Decision::KeepOriginal),
        // 0.8
        (e(&[1.0, 0.0]), e(&[4.0, 3.0]), Decision::KeepEnhanced),
        (e(&[1.0, 2.0]), e(&[1.0, 2.0]), Decision::KeepEnhanced),
        (e(&[1.0, 0.0]), e(&[0.0, 1.0]), Decision::KeepOriginal),
        (e(&[1.0, 0.0]), e(&[-1.0, 0.0]), Decision::KeepOriginal),
    ]
}
