#[path = "support/scenes.rs"]
mod scenes;

use ffsv_core::beamform::{mvdr_weights_for_steering, SpatialCovariance};
use ffsv_core::linalg::CMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenes::cn;

#[test]
fn order_one_arrivals_match_hand_enumeration() {
    let (count, delay_err, amp_err) = scenes::order_one_arrival_error();
    assert_eq!(count, 7);
    assert!(delay_err < 1e-9 && amp_err < 1e-9, "{delay_err} {amp_err}");
}

#[test]
fn free_field_pulse_matches_spherical_spreading() {
    for f in scenes::free_field(&[0.5, 1.3, 2.7]) {
        assert!(f.peak_offset <= 0.5);
        // the interpolated pulse peaks between samples; its sum is the area
        assert!((f.area - f.analytic).abs() < 0.01 * f.analytic, "{} vs {}", f.area, f.analytic);
        assert!(f.peak <= f.analytic * 1.01);
    }
}

#[test]
fn wpe_leaves_anechoic_white_input_nearly_unchanged() {
    let (change, median_filter) = scenes::wpe_anechoic();
    // the removed part is exactly the predicted reverberation
    assert!(change < 0.05, "relative change {change}");
    assert!(median_filter < 0.2, "median filter norm {median_filter}");
}

#[test]
fn wpe_raises_direct_to_reverberant_ratio() {
    let d = scenes::wpe_dereverb();
    assert!((d.t60 - 0.5).abs() < 1e-9);
    assert!(d.monotone);
    assert!(d.drr_after - d.drr_before >= 3.0, "DRR {:.2} -> {:.2} dB", d.drr_before, d.drr_after);
}

#[test]
fn cgmm_log_likelihood_is_monotone_on_random_bins() {
    assert_eq!(scenes::cgmm_non_monotone_cases(), 0);
}

fn random_hpd(rng: &mut ChaCha8Rng, c: usize) -> CMatrix {
    let a = CMatrix::from_fn(c, c, |_, _| cn(rng));
    &a * a.adjoint() + CMatrix::identity(c, c).scale(0.1)
}

#[test]
fn mvdr_is_distortionless_and_minimum_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let c = 4;
        let rn = random_hpd(&mut rng, c);
        let d: Vec<Complex64> = (0..c).map(|_| cn(&mut rng)).collect();
        let w = mvdr_weights_for_steering(&SpatialCovariance { matrices: vec![rn.clone()] }, vec![d.clone()]).unwrap();
        let w = &w.weights[0];
        let whd: Complex64 = w.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
        assert!((whd - 1.0).norm() < 1e-10);
        let power = |v: &[Complex64]| {
            let v = nalgebra::DVector::from_column_slice(v);
            (v.adjoint() * &rn * &v)[(0, 0)].re
        };
        let best = power(w);
        let dn: f64 = d.iter().map(|v| v.norm_sqr()).sum();
        for _ in 0..1000 {
            // perturbation projected onto the constraint's null space
            let mut p: Vec<Complex64> = (0..c).map(|_| cn(&mut rng).scale(0.3)).collect();
            let pd: Complex64 = p.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
            for (pi, di) in p.iter_mut().zip(&d) {
                *pi -= di * pd.conj() / dn;
            }
            let v: Vec<Complex64> = w.iter().zip(&p).map(|(a, b)| a + b).collect();
            let vhd: Complex64 = v.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
            assert!((vhd - 1.0).norm() < 1e-9);
            assert!(power(&v) >= best - 1e-12 * best);
        }
    }
}

#[test]
fn cgmm_mvdr_improves_snr_of_point_source() {
    let b = scenes::cgmm_mvdr_scene();
    assert!(b.distortion < 1e-6);
    assert!(b.snr_before.abs() < 0.5);
    assert!(b.snr_after - b.snr_before >= 5.0, "SNR {:.2} -> {:.2} dB", b.snr_before, b.snr_after);
}
