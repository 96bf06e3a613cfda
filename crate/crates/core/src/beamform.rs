//! Mask-based MVDR beamforming with a two-component complex Gaussian
//! mixture for speech/noise mask estimation.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::ComplexSpectrogram;
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, log_det_hpd, quad_form, trace_re, zero, CMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLabel {
    Speech,
    Noise,
}

/// Time-frequency mask, bin-major (`bins × frames`).
#[derive(Debug, Clone, PartialEq)]
pub struct TfMask {
    values: Vec<f64>,
    bins: usize,
    frames: usize,
    pub label: MaskLabel,
}

impl TfMask {
    pub fn new(values: Vec<f64>, bins: usize, frames: usize, label: MaskLabel) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(Error::ShapeMismatch("mask size".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("mask values must lie in [0, 1]");
        }
        Ok(Self {
            values,
            bins,
            frames,
            label,
        })
    }

    pub fn filled(v: f64, bins: usize, frames: usize, label: MaskLabel) -> Self {
        Self {
            values: vec![v; bins * frames],
            bins,
            frames,
            label,
        }
    }

    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.values[f * self.frames + t]
    }

    pub fn bin(&self, f: usize) -> &[f64] {
        &self.values[f * self.frames..(f + 1) * self.frames]
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One `C × C` Hermitian matrix per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub matrices: Vec<CMatrix>,
}

impl SpatialCovariance {
    pub fn num_bins(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_channels(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }
}

/// Per-bin beamformer and the steering vector it is distortionless toward.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub weights: Vec<Vec<Complex64>>,
    pub steering: Vec<Vec<Complex64>>,
}

impl BeamformerWeights {
    /// `max_f |w_f^H d_f - 1|`.
    pub fn max_distortion(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.steering)
            .map(|(w, d)| {
                let r: Complex64 = w.iter().zip(d).map(|(a, b)| a.conj() * b).sum();
                (r - 1.0).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Selects channel `c` in every bin.
    pub fn selector(channels: usize, bins: usize, c: usize) -> Self {
        let mut e = vec![zero(); channels];
        e[c] = Complex64::new(1.0, 0.0);
        Self {
            weights: vec![e.clone(); bins],
            steering: vec![e; bins],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CgmmInit {
    RandomResponsibility,
    PowerSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgmmConfig {
    pub iterations: usize,
    /// Covariance loading, relative to `trace / C` of the bin's sample covariance.
    pub regularization: f64,
    pub init: CgmmInit,
    pub seed: u64,
}

impl Default for CgmmConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            regularization: 1e-6,
            init: CgmmInit::PowerSplit,
            seed: 0,
        }
    }
}

impl CgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return invalid("CGMM needs at least one iteration");
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return invalid("CGMM regularization must be positive");
        }
        Ok(())
    }
}

/// Result of fitting the mixture in one frequency bin.
#[derive(Debug, Clone)]
pub struct BinFit {
    /// Responsibilities of components 0 and 1 per frame.
    pub responsibilities: [Vec<f64>; 2],
    /// Log-likelihood (including the covariance loading term) at each E step.
    pub log_likelihoods: Vec<f64>,
    /// Index of the component judged to be speech.
    pub speech_component: usize,
}

struct Params {
    weights: [f64; 2],
    covs: [CMatrix; 2],
    scales: [Vec<f64>; 2],
}

fn outer_sum(x: &[Vec<Complex64>], w: impl Fn(usize) -> f64) -> CMatrix {
    let ch = x.len();
    let frames = x[0].len();
    let mut m = CMatrix::zeros(ch, ch);
    for t in 0..frames {
        let wt = w(t);
        if wt == 0.0 {
            continue;
        }
        for i in 0..ch {
            let xi = x[i][t] * wt;
            for j in 0..ch {
                m[(i, j)] += xi * x[j][t].conj();
            }
        }
    }
    m
}

fn frame(x: &[Vec<Complex64>], t: usize) -> Vec<Complex64> {
    x.iter().map(|row| row[t]).collect()
}

fn directionality(m: &CMatrix) -> f64 {
    let tr = trace_re(m);
    if tr <= 0.0 {
        return 0.0;
    }
    let (vals, _) = hermitian_eigen(m);
    vals.last().copied().unwrap_or(0.0) / tr
}

/// Fits the two-component mixture to one bin's `C × T` observations
/// starting from the given responsibilities of component 0.
pub fn cgmm_fit_bin(x: &[Vec<Complex64>], init: &[f64], cfg: &CgmmConfig) -> Result<BinFit> {
    cfg.validate()?;
    let ch = x.len();
    let frames = x[0].len();
    if init.len() != frames {
        return Err(Error::ShapeMismatch("initial responsibilities".into()));
    }
    let sample = outer_sum(x, |_| 1.0 / frames as f64);
    let tr = trace_re(&sample);
    if tr <= 0.0 {
        return Ok(BinFit {
            responsibilities: [vec![0.5; frames], vec![0.5; frames]],
            log_likelihoods: vec![0.0; cfg.iterations + 1],
            speech_component: 0,
        });
    }
    let eps = cfg.regularization * tr / ch as f64;
    let scale_floor = 1e-10 * tr / ch as f64;
    let loading = CMatrix::identity(ch, ch) * Complex64::new(eps, 0.0);
    let powers: Vec<f64> = (0..frames)
        .map(|t| x.iter().map(|r| r[t].norm_sqr()).sum::<f64>())
        .collect();

    let mut gamma = [init.to_vec(), init.iter().map(|g| 1.0 - g).collect::<Vec<_>>()];
    let initial_scales: Vec<f64> = powers.iter().map(|p| (p / ch as f64).max(scale_floor)).collect();
    let mut params = Params {
        weights: [0.5, 0.5],
        covs: [CMatrix::identity(ch, ch), CMatrix::identity(ch, ch)],
        scales: [initial_scales.clone(), initial_scales],
    };
    m_step_covs(x, &gamma, &mut params, &loading);

    let mut lls = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let (ll, g) = e_step(x, &params, eps)?;
        lls.push(ll);
        gamma = g;
        if it == cfg.iterations {
            break;
        }
        for k in 0..2 {
            params.weights[k] = gamma[k].iter().sum::<f64>() / frames as f64;
        }
        // scales given the current covariances, then covariances given scales
        for k in 0..2 {
            let inv = params.covs[k]
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular CGMM covariance".into()))?;
            for t in 0..frames {
                let q = quad_form(&inv, &frame(x, t));
                params.scales[k][t] = (q / ch as f64).max(scale_floor);
            }
        }
        m_step_covs(x, &gamma, &mut params, &loading);
    }
    let masked: Vec<CMatrix> = (0..2)
        .map(|k| {
            let n: f64 = gamma[k].iter().sum();
            outer_sum(x, |t| gamma[k][t] / n.max(f64::MIN_POSITIVE))
        })
        .collect();
    let speech_component = if directionality(&masked[1]) > directionality(&masked[0]) {
        1
    } else {
        0
    };
    Ok(BinFit {
        responsibilities: gamma,
        log_likelihoods: lls,
        speech_component,
    })
}

fn m_step_covs(
    x: &[Vec<Complex64>],
    gamma: &[Vec<f64>; 2],
    params: &mut Params,
    loading: &CMatrix,
) {
    for k in 0..2 {
        let n: f64 = gamma[k].iter().sum::<f64>().max(1e-10);
        let s = outer_sum(x, |t| gamma[k][t] / params.scales[k][t]);
        params.covs[k] = (s + loading) / Complex64::new(n, 0.0);
    }
}

/// Responsibilities and the penalized log-likelihood of the current parameters.
fn e_step(x: &[Vec<Complex64>], p: &Params, eps: f64) -> Result<(f64, [Vec<f64>; 2])> {
    let ch = x.len();
    let frames = x[0].len();
    let cf = ch as f64;
    let mut invs = Vec::with_capacity(2);
    let mut logdets = [0.0; 2];
    for k in 0..2 {
        logdets[k] = log_det_hpd(&p.covs[k])?;
        invs.push(
            p.covs[k]
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular CGMM covariance".into()))?,
        );
    }
    let ln_pi = std::f64::consts::PI.ln();
    let mut ll = 0.0;
    let mut g0 = Vec::with_capacity(frames);
    let mut g1 = Vec::with_capacity(frames);
    for t in 0..frames {
        let v = frame(x, t);
        let mut lp = [0.0; 2];
        for k in 0..2 {
            let phi = p.scales[k][t];
            let q = quad_form(&invs[k], &v);
            lp[k] = p.weights[k].max(f64::MIN_POSITIVE).ln() - cf * ln_pi - cf * phi.ln() - logdets[k] - q / phi;
        }
        let m = lp[0].max(lp[1]);
        let z = (lp[0] - m).exp() + (lp[1] - m).exp();
        ll += m + z.ln();
        let r0 = (lp[0] - m).exp() / z;
        g0.push(r0);
        g1.push(1.0 - r0);
    }
    // loading acts as a penalty -eps * tr(R^-1) on each covariance
    for inv in &invs {
        ll -= eps * trace_re(inv);
    }
    Ok((ll, [g0, g1]))
}

/// Initial responsibilities of component 0 for one bin.
fn initial_responsibilities(x: &[Vec<Complex64>], cfg: &CgmmConfig, bin: usize) -> Vec<f64> {
    let frames = x[0].len();
    match cfg.init {
        CgmmInit::RandomResponsibility => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (bin as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (0..frames).map(|_| rng.random_range(0.05..0.95)).collect()
        }
        CgmmInit::PowerSplit => {
            let powers: Vec<f64> = (0..frames)
                .map(|t| x.iter().map(|r| r[t].norm_sqr()).sum())
                .collect();
            let mut sorted = powers.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[frames / 2];
            powers.iter().map(|&p| if p >= median { 0.9 } else { 0.1 }).collect()
        }
    }
}

/// Per-bin fits for a whole spectrogram.
pub fn cgmm_fit(s: &ComplexSpectrogram, cfg: &CgmmConfig) -> Result<Vec<BinFit>> {
    cfg.validate()?;
    let ch = s.num_channels();
    if ch < 2 {
        return invalid("CGMM masks need at least two channels");
    }
    if s.num_frames() < 2 * ch {
        return Err(Error::IllConditioned(format!(
            "{} frames for {ch} channels; need at least {}",
            s.num_frames(),
            2 * ch
        )));
    }
    par::map_range(s.num_bins(), |f| {
        let x = s.bin_matrix(f);
        let init = initial_responsibilities(&x, cfg, f);
        cgmm_fit_bin(&x, &init, cfg)
    })
    .into_iter()
    .collect()
}

/// Speech and noise masks from the mixture responsibilities.
pub fn cgmm_masks(s: &ComplexSpectrogram, cfg: &CgmmConfig) -> Result<(TfMask, TfMask)> {
    let fits = cgmm_fit(s, cfg)?;
    Ok(masks_from_fits(&fits, s.num_frames()))
}

pub fn masks_from_fits(fits: &[BinFit], frames: usize) -> (TfMask, TfMask) {
    let bins = fits.len();
    let mut speech = Vec::with_capacity(bins * frames);
    for fit in fits {
        speech.extend_from_slice(&fit.responsibilities[fit.speech_component]);
    }
    let noise = speech.iter().map(|v| 1.0 - v).collect();
    (
        TfMask { values: speech, bins, frames, label: MaskLabel::Speech },
        TfMask { values: noise, bins, frames, label: MaskLabel::Noise },
    )
}

/// Mask-weighted spatial covariance per bin, loaded with
/// `regularization * trace / C` on the diagonal. Bins whose mask is all
/// zero fall back to the unweighted average.
pub fn estimate_covariances(
    s: &ComplexSpectrogram,
    m: &TfMask,
    regularization: f64,
) -> Result<SpatialCovariance> {
    if m.num_bins() != s.num_bins() || m.num_frames() != s.num_frames() {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs spectrogram {}x{}",
            m.num_bins(),
            m.num_frames(),
            s.num_bins(),
            s.num_frames()
        )));
    }
    let ch = s.num_channels();
    let frames = s.num_frames();
    let matrices = par::map_range(s.num_bins(), |f| {
        let x = s.bin_matrix(f);
        let w = m.bin(f);
        let total: f64 = w.iter().sum();
        let mut r = if total > 0.0 {
            outer_sum(&x, |t| w[t] / total)
        } else {
            log::warn!("bin {f}: empty mask, using unmasked covariance");
            outer_sum(&x, |_| 1.0 / frames as f64)
        };
        let load = regularization * trace_re(&r) / ch as f64;
        for i in 0..ch {
            r[(i, i)] += load;
        }
        r
    });
    Ok(SpatialCovariance { matrices })
}

/// Unit principal eigenvector with its first component real and nonnegative.
pub fn principal_steering(m: &CMatrix) -> Vec<Complex64> {
    let (_, vecs) = hermitian_eigen(m);
    let n = m.nrows();
    let mut d: Vec<Complex64> = (0..n).map(|i| vecs[(i, n - 1)]).collect();
    let norm = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|z| *z /= norm);
    }
    let anchor = d[0];
    if anchor.norm() > 0.0 {
        let rot = anchor.conj() / anchor.norm();
        d.iter_mut().for_each(|z| *z *= rot);
        d[0] = Complex64::new(d[0].re.max(0.0), 0.0);
    }
    d
}

/// MVDR weights toward explicit steering vectors.
pub fn mvdr_weights_for_steering(
    noise_cov: &SpatialCovariance,
    steering: Vec<Vec<Complex64>>,
) -> Result<BeamformerWeights> {
    if steering.len() != noise_cov.num_bins() {
        return Err(Error::ShapeMismatch("steering vs covariance bins".into()));
    }
    let weights = par::map_range(steering.len(), |f| -> Result<Vec<Complex64>> {
        let rn = &noise_cov.matrices[f];
        let d = &steering[f];
        let (vals, _) = hermitian_eigen(rn);
        let lo = vals[0];
        let hi = *vals.last().unwrap();
        if !(lo > 0.0) || hi / lo > 1e12 {
            return Err(Error::IllConditioned(format!(
                "noise covariance at bin {f} has condition {:.3e}",
                hi / lo
            )));
        }
        let dv = DVector::from_vec(d.clone());
        let z = rn
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&dv))
            .ok_or_else(|| Error::Numerical(format!("bin {f}: noise covariance not positive definite")))?;
        let denom: Complex64 = dv.iter().zip(z.iter()).map(|(a, b)| a.conj() * b).sum();
        Ok(z.iter().map(|v| v / denom).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(BeamformerWeights { weights, steering })
}

/// `w_f = R_n^{-1} d_f / (d_f^H R_n^{-1} d_f)` with `d_f` the principal
/// eigenvector of the speech covariance.
pub fn mvdr_weights(
    noise_cov: &SpatialCovariance,
    speech_cov: &SpatialCovariance,
) -> Result<BeamformerWeights> {
    if noise_cov.num_bins() != speech_cov.num_bins()
        || noise_cov.num_channels() != speech_cov.num_channels()
    {
        return Err(Error::ShapeMismatch("speech and noise covariances differ in shape".into()));
    }
    let steering = par::map_slice(&speech_cov.matrices, principal_steering);
    mvdr_weights_for_steering(noise_cov, steering)
}

/// `y(f, t) = w_f^H x(f, t)`, a single-channel spectrogram.
pub fn apply_beamformer(s: &ComplexSpectrogram, w: &BeamformerWeights) -> Result<ComplexSpectrogram> {
    if w.weights.len() != s.num_bins() || w.weights.iter().any(|v| v.len() != s.num_channels()) {
        return Err(Error::ShapeMismatch("beamformer weights vs spectrogram".into()));
    }
    let mut out = s.zeros_like(1);
    for f in 0..s.num_bins() {
        let wf = &w.weights[f];
        for t in 0..s.num_frames() {
            let y: Complex64 = (0..s.num_channels()).map(|c| wf[c].conj() * s.get(c, f, t)).sum();
            out.set(0, f, t, y);
        }
    }
    Ok(out)
}

/// Masks, covariances and weights produced while beamforming.
#[derive(Debug, Clone)]
pub struct MvdrResult {
    pub output: ComplexSpectrogram,
    pub speech_mask: TfMask,
    pub weights: BeamformerWeights,
}

/// Full CGMM-mask MVDR chain on a multichannel spectrogram.
pub fn cgmm_mvdr(s: &ComplexSpectrogram, cfg: &CgmmConfig) -> Result<MvdrResult> {
    let (speech, noise) = cgmm_masks(s, cfg)?;
    let rs = estimate_covariances(s, &speech, cfg.regularization)?;
    let rn = estimate_covariances(s, &noise, cfg.regularization)?;
    let weights = mvdr_weights(&rn, &rs)?;
    let output = apply_beamformer(s, &weights)?;
    Ok(MvdrResult {
        output,
        speech_mask: speech,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use crate::linalg::c;

    fn spec_from(ch: usize, frames: usize, fill: impl Fn(usize, usize, usize) -> Complex64) -> ComplexSpectrogram {
        let cfg = StftConfig { window_length: 8, hop_length: 4, fft_size: 8, ..Default::default() };
        let mut s = ComplexSpectrogram::zeros(ch, frames, cfg, 16000, 8 + 4 * (frames - 1));
        for ci in 0..ch {
            for f in 0..s.num_bins() {
                for t in 0..frames {
                    s.set(ci, f, t, fill(ci, f, t));
                }
            }
        }
        s
    }

    fn random_spec(ch: usize, frames: usize, seed: u64) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<Complex64> = (0..ch * 5 * frames)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        spec_from(ch, frames, |ci, f, t| vals[(ci * 5 + f) * frames + t])
    }

    #[test]
    fn separates_directional_source_from_diffuse_noise() {
        let ch = 4;
        let frames = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let active: Vec<bool> = (0..frames).map(|_| rng.random_bool(0.5)).collect();
        let steer: Vec<Vec<Complex64>> = (0..5)
            .map(|f| (0..ch).map(|c| Complex64::from_polar(1.0, 0.7 * (f * c) as f64 + 0.3 * c as f64)).collect())
            .collect();
        let mut vals = vec![zero(); ch * 5 * frames];
        for f in 0..5 {
            for t in 0..frames {
                let s = if active[t] {
                    c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
                } else {
                    zero()
                };
                for ci in 0..ch {
                    let n = c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                    vals[(ci * 5 + f) * frames + t] = steer[f][ci] * s + n;
                }
            }
        }
        let spec = spec_from(ch, frames, |ci, f, t| vals[(ci * 5 + f) * frames + t]);
        for init in [CgmmInit::PowerSplit, CgmmInit::RandomResponsibility] {
            let cfg = CgmmConfig { init, seed: 3, ..Default::default() };
            let fits = cgmm_fit(&spec, &cfg).unwrap();
            for fit in &fits {
                for w in fit.log_likelihoods.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", fit.log_likelihoods);
                }
            }
            let (speech, _) = masks_from_fits(&fits, frames);
            let mut agree = 0;
            for f in 0..5 {
                for t in 0..frames {
                    agree += usize::from((speech.get(f, t) > 0.5) == active[t]);
                }
            }
            assert!(agree as f64 / (5 * frames) as f64 > 0.9, "{init:?}: {agree}");
        }
    }

    #[test]
    fn masks_are_complementary() {
        let s = random_spec(3, 40, 1);
        let (sp, no) = cgmm_masks(&s, &CgmmConfig::default()).unwrap();
        for (a, b) in sp.values().iter().zip(no.values()) {
            assert!((a + b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_mono_and_short() {
        assert!(cgmm_masks(&random_spec(1, 40, 0), &CgmmConfig::default()).is_err());
        assert!(matches!(
            cgmm_masks(&random_spec(4, 7, 0), &CgmmConfig::default()),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn identical_initialization_stays_symmetric() {
        let s = random_spec(4, 64, 2);
        let x = s.bin_matrix(2);
        let fit = cgmm_fit_bin(&x, &vec![0.5; 64], &CgmmConfig::default()).unwrap();
        for r in &fit.responsibilities[0] {
            assert!((r - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn covariance_rules() {
        let s = random_spec(2, 3, 4);
        let ones = TfMask::filled(1.0, s.num_bins(), 3, MaskLabel::Speech);
        let zeros = TfMask::filled(0.0, s.num_bins(), 3, MaskLabel::Speech);
        let a = estimate_covariances(&s, &ones, 0.0).unwrap();
        let b = estimate_covariances(&s, &zeros, 0.0).unwrap();
        assert_eq!(a, b);
        for f in 0..s.num_bins() {
            let m = &a.matrices[f];
            for i in 0..2 {
                for j in 0..2 {
                    let manual: Complex64 =
                        (0..3).map(|t| s.get(i, f, t) * s.get(j, f, t).conj()).sum::<Complex64>() / 3.0;
                    assert!((m[(i, j)] - manual).norm() < 1e-12);
                }
            }
        }
        let bad = TfMask::filled(1.0, 2, 3, MaskLabel::Noise);
        assert!(estimate_covariances(&s, &bad, 0.0).is_err());
    }

    #[test]
    fn identity_noise_closed_forms() {
        let eye = SpatialCovariance { matrices: vec![CMatrix::identity(3, 3)] };
        let e0 = vec![c(1.0, 0.0), zero(), zero()];
        let w = mvdr_weights_for_steering(&eye, vec![e0.clone()]).unwrap();
        assert!(w.weights[0].iter().zip(&e0).all(|(a, b)| (a - b).norm() < 1e-12));
        let d = vec![c(0.6, 0.0), c(0.0, 0.48), c(-0.64, 0.0)];
        let w = mvdr_weights_for_steering(&eye, vec![d.clone()]).unwrap();
        assert!(w.weights[0].iter().zip(&d).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(w.max_distortion() < 1e-12);
    }

    #[test]
    fn singular_noise_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = c(1e-14, 0.0);
        let cov = SpatialCovariance { matrices: vec![m] };
        assert!(mvdr_weights_for_steering(&cov, vec![vec![c(1.0, 0.0), zero()]]).is_err());
    }

    #[test]
    fn selector_and_zero_input() {
        let s = random_spec(3, 10, 5);
        let sel = BeamformerWeights::selector(3, s.num_bins(), 0);
        let y = apply_beamformer(&s, &sel).unwrap();
        assert_eq!(y, s.channel(0).unwrap());
        let z = spec_from(3, 10, |_, _, _| zero());
        assert!(apply_beamformer(&z, &sel).unwrap().values().iter().all(|v| v.norm() == 0.0));
        let wrong = BeamformerWeights::selector(2, s.num_bins(), 0);
        assert!(apply_beamformer(&s, &wrong).is_err());
    }

    #[test]
    fn steering_is_phase_anchored() {
        let d = vec![c(0.0, 0.6), c(0.8, 0.0)];
        let mut m = CMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = d[i] * d[j].conj();
            }
        }
        let s = principal_steering(&m);
        assert!(s[0].im == 0.0 && s[0].re >= 0.0);
        assert!((s[0].re - 0.6).abs() < 1e-12);
        assert!((s[1] - c(0.0, -0.8)).norm() < 1e-12);
    }
}
