//! Dynamic similarity matching: circular cross-correlation of a ground volume
//! against an aerial volume over every azimuth shift, orientation from the
//! correlation peak, and the distance used for retrieval.
//!
//! For shift `i` the score is
//!
//! ```text
//! score[i] = sum_{h, w < W_g, c} A(h, (i + w) mod W_a, c) * G(h, w, c)
//! ```
//!
//! so shift `i` aligns the ground's leftmost column with aerial column `i`,
//! and `azimuth_deg = i * 360 / W_a` (clockwise from north).
//!
//! The spectral path zero-pads each ground `(h, c)` row to `W_a`, multiplies
//! the real-FFT coefficients of the aerial row by the conjugate ground
//! coefficients, sums over `(h, c)`, and inverts once.

use std::cell::RefCell;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::featex::{crop_columns, l2_normalize, FeatureVolume};

/// Scores within this of the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-6;

/// Slack on the unit-norm precondition of the matchers.
const UNIT_NORM_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationPath {
    Spatial,
    #[default]
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    LowestIndex,
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    scores: Vec<f64>,
}

impl CorrelationProfile {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Dimension(
                "correlation profile must be non-empty".into(),
            ));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    pub shift: usize,
    pub azimuth_deg: f64,
    pub peak_score: f64,
    pub tie_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub distance: f64,
    pub orientation: OrientationEstimate,
}

fn check_pair(aerial: &FeatureVolume, ground: &FeatureVolume) -> Result<()> {
    if aerial.height() != ground.height() || aerial.channels() != ground.channels() {
        return Err(Error::Dimension(format!(
            "aerial {:?} and ground {:?} differ in height or channels",
            aerial.dims(),
            ground.dims()
        )));
    }
    if ground.width() > aerial.width() {
        return Err(Error::Dimension(format!(
            "ground width {} exceeds aerial width {}",
            ground.width(),
            aerial.width()
        )));
    }
    Ok(())
}

pub fn correlate_spatial(
    aerial: &FeatureVolume,
    ground: &FeatureVolume,
) -> Result<CorrelationProfile> {
    check_pair(aerial, ground)?;
    Ok(CorrelationProfile {
        scores: spatial_scores(aerial, ground),
    })
}

fn spatial_scores(aerial: &FeatureVolume, ground: &FeatureVolume) -> Vec<f64> {
    let (height, wa, channels) = aerial.dims();
    dense_spatial_scores(
        aerial.data(),
        wa,
        ground.data(),
        ground.width(),
        height,
        channels,
    )
}

fn dense_spatial_scores<T: Copy + Into<f64>>(
    aerial: &[T],
    wa: usize,
    ground: &[T],
    wg: usize,
    height: usize,
    channels: usize,
) -> Vec<f64> {
    (0..wa)
        .map(|i| {
            let mut acc = 0f64;
            for h in 0..height {
                for w in 0..wg {
                    let a = &aerial[(h * wa + (i + w) % wa) * channels..][..channels];
                    let g = &ground[(h * wg + w) * channels..][..channels];
                    acc += a
                        .iter()
                        .zip(g)
                        .map(|(&x, &y)| x.into() * y.into())
                        .sum::<f64>();
                }
            }
            acc
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

fn forward_plan(len: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse_plan(len: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Real-FFT coefficients of every `(h, c)` row of an `h x w x c` buffer
/// along azimuth, after zero-padding the row to `transform_len`.
fn row_spectra<T: Copy + Into<f64>>(
    data: &[T],
    (height, width, channels): (usize, usize, usize),
    transform_len: usize,
) -> Vec<Complex<f64>> {
    let fft = forward_plan(transform_len);
    let bins = transform_len / 2 + 1;
    let mut out = Vec::with_capacity(height * channels * bins);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    for h in 0..height {
        for c in 0..channels {
            input.iter_mut().for_each(|x| *x = 0.0);
            for w in 0..width {
                input[w] = data[(h * width + w) * channels + c].into();
            }
            fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                .expect("buffer sizes come from the plan");
            out.extend_from_slice(&spectrum);
        }
    }
    out
}

/// Precomputed azimuth spectra of an aerial volume. Immutable once built,
/// so one cache can serve any number of concurrent queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    dims: (usize, usize, usize),
    bins: usize,
    coeffs: Vec<Complex<f64>>,
}

impl SpectralCache {
    pub fn new(aerial: &FeatureVolume) -> Self {
        let width = aerial.width();
        Self {
            dims: aerial.dims(),
            bins: width / 2 + 1,
            coeffs: row_spectra(aerial.data(), aerial.dims(), width),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Complex bins per `(h, c)` row.
    pub fn bins_per_row(&self) -> usize {
        self.bins
    }

    pub fn rows(&self) -> usize {
        self.dims.0 * self.dims.2
    }

    pub fn coefficients(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    pub fn size_bytes(&self) -> usize {
        self.coeffs.len() * std::mem::size_of::<Complex<f64>>()
    }

    fn check(&self, aerial: &FeatureVolume) -> Result<()> {
        if self.dims != aerial.dims() {
            return Err(Error::Cache(format!(
                "cache built for {:?}, aerial volume is {:?}",
                self.dims,
                aerial.dims()
            )));
        }
        Ok(())
    }
}

/// Conjugated ground spectra, zero-padded to the aerial width. Computed once
/// per query and reused against every database entry.
#[derive(Debug, Clone)]
pub struct GroundSpectrum {
    aerial_width: usize,
    ground_dims: (usize, usize, usize),
    conj: Vec<Complex<f64>>,
}

impl GroundSpectrum {
    pub fn new(ground: &FeatureVolume, aerial_width: usize) -> Result<Self> {
        if ground.width() > aerial_width {
            return Err(Error::Dimension(format!(
                "ground width {} exceeds aerial width {aerial_width}",
                ground.width()
            )));
        }
        let conj = row_spectra(ground.data(), ground.dims(), aerial_width)
            .into_iter()
            .map(|z| z.conj())
            .collect();
        Ok(Self {
            aerial_width,
            ground_dims: ground.dims(),
            conj,
        })
    }

    fn correlate(&self, aerial: &[Complex<f64>]) -> Vec<f64> {
        let wa = self.aerial_width;
        let bins = wa / 2 + 1;
        let mut acc = vec![Complex::new(0.0, 0.0); bins];
        for (a_row, g_row) in aerial.chunks_exact(bins).zip(self.conj.chunks_exact(bins)) {
            for ((s, a), g) in acc.iter_mut().zip(a_row).zip(g_row) {
                *s += a * g;
            }
        }
        // Products of real DC (and Nyquist) terms are real; drop rounding noise.
        acc[0].im = 0.0;
        if wa.is_multiple_of(2) {
            acc[bins - 1].im = 0.0;
        }
        let ifft = inverse_plan(wa);
        let mut out = ifft.make_output_vec();
        let mut scratch = ifft.make_scratch_vec();
        ifft.process_with_scratch(&mut acc, &mut out, &mut scratch)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / wa as f64;
        out.iter_mut().for_each(|x| *x *= scale);
        out
    }

    /// Profile against an aerial volume; uses `cache` when given, otherwise
    /// transforms the aerial rows on the fly.
    pub fn profile(
        &self,
        aerial: &FeatureVolume,
        cache: Option<&SpectralCache>,
    ) -> Result<CorrelationProfile> {
        let (gh, _, gc) = self.ground_dims;
        if aerial.width() != self.aerial_width || aerial.height() != gh || aerial.channels() != gc {
            return Err(Error::Dimension(format!(
                "ground spectrum built for {gh}x{}x{gc}, aerial volume is {:?}",
                self.aerial_width,
                aerial.dims()
            )));
        }
        let scores = match cache {
            Some(cache) => {
                cache.check(aerial)?;
                self.correlate(&cache.coeffs)
            }
            None => self.correlate(&row_spectra(
                aerial.data(),
                aerial.dims(),
                self.aerial_width,
            )),
        };
        Ok(CorrelationProfile { scores })
    }
}

pub fn correlate_spectral(
    aerial: &FeatureVolume,
    ground: &FeatureVolume,
    cache: Option<&SpectralCache>,
) -> Result<CorrelationProfile> {
    check_pair(aerial, ground)?;
    GroundSpectrum::new(ground, aerial.width())?.profile(aerial, cache)
}

/// Correlation of raw 64-bit `h x w x c` buffers (same layout as
/// [`FeatureVolume`]). Used where single precision is not enough, e.g. when
/// differentiating through the matcher.
pub fn correlate_dense(
    aerial: &[f64],
    aerial_width: usize,
    ground: &[f64],
    ground_width: usize,
    height: usize,
    channels: usize,
    path: CorrelationPath,
) -> Result<CorrelationProfile> {
    if ground_width > aerial_width || aerial_width == 0 || ground_width == 0 {
        return Err(Error::Dimension(format!(
            "ground width {ground_width} must be in 1..={aerial_width}"
        )));
    }
    if aerial.len() != height * aerial_width * channels
        || ground.len() != height * ground_width * channels
    {
        return Err(Error::Dimension(format!(
            "buffers of {} and {} values do not match {height}x{{{aerial_width},{ground_width}}}x{channels}",
            aerial.len(),
            ground.len()
        )));
    }
    let scores = match path {
        CorrelationPath::Spatial => {
            dense_spatial_scores(aerial, aerial_width, ground, ground_width, height, channels)
        }
        CorrelationPath::Spectral => {
            let spectrum = GroundSpectrum {
                aerial_width,
                ground_dims: (height, ground_width, channels),
                conj: row_spectra(ground, (height, ground_width, channels), aerial_width)
                    .into_iter()
                    .map(|z| z.conj())
                    .collect(),
            };
            spectrum.correlate(&row_spectra(
                aerial,
                (height, aerial_width, channels),
                aerial_width,
            ))
        }
    };
    Ok(CorrelationProfile { scores })
}

pub fn estimate_orientation(profile: &CorrelationProfile, tie: TiePolicy) -> OrientationEstimate {
    let scores = profile.scores();
    let peak = profile.max();
    let ties: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= peak - TIE_TOLERANCE)
        .map(|(i, _)| i)
        .collect();
    let shift = match tie {
        TiePolicy::LowestIndex => ties[0],
        TiePolicy::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ties[rng.gen_range(0..ties.len())]
        }
    };
    OrientationEstimate {
        shift,
        azimuth_deg: shift as f64 * 360.0 / scores.len() as f64,
        peak_score: scores[shift],
        tie_count: ties.len(),
    }
}

fn check_unit(v: &FeatureVolume, role: &str) -> Result<()> {
    if v.is_normalized() {
        return Ok(());
    }
    let norm = v
        .data()
        .iter()
        .map(|&x| (x as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        return Err(Error::Validation(format!(
            "{role} volume must be unit-normalized, norm is {norm}"
        )));
    }
    Ok(())
}

/// Reusable per-query matcher: validates the ground volume once and keeps
/// its spectrum when the spectral path is selected.
#[derive(Debug, Clone)]
pub struct Matcher<'g> {
    ground: &'g FeatureVolume,
    aerial_width: usize,
    spectrum: Option<GroundSpectrum>,
    tie: TiePolicy,
}

impl<'g> Matcher<'g> {
    pub fn new(
        ground: &'g FeatureVolume,
        aerial_width: usize,
        path: CorrelationPath,
        tie: TiePolicy,
    ) -> Result<Self> {
        check_unit(ground, "ground")?;
        if ground.width() > aerial_width {
            return Err(Error::Dimension(format!(
                "ground width {} exceeds aerial width {aerial_width}",
                ground.width()
            )));
        }
        let spectrum = match path {
            CorrelationPath::Spectral => Some(GroundSpectrum::new(ground, aerial_width)?),
            CorrelationPath::Spatial => None,
        };
        Ok(Self {
            ground,
            aerial_width,
            spectrum,
            tie,
        })
    }

    pub fn is_panorama(&self) -> bool {
        self.ground.width() == self.aerial_width
    }

    pub fn profile(
        &self,
        aerial: &FeatureVolume,
        cache: Option<&SpectralCache>,
    ) -> Result<CorrelationProfile> {
        check_pair(aerial, self.ground)?;
        if aerial.width() != self.aerial_width {
            return Err(Error::Dimension(format!(
                "matcher built for aerial width {}, got {}",
                self.aerial_width,
                aerial.width()
            )));
        }
        match &self.spectrum {
            Some(s) => s.profile(aerial, cache),
            None => correlate_spatial(aerial, self.ground),
        }
    }

    /// Panorama: `2 (1 - peak)`. Limited FoV: Frobenius distance to the
    /// renormalized aerial crop at the peak shift.
    pub fn match_aerial(
        &self,
        aerial: &FeatureVolume,
        cache: Option<&SpectralCache>,
    ) -> Result<MatchResult> {
        let profile = self.profile(aerial, cache)?;
        let orientation = estimate_orientation(&profile, self.tie);
        let distance = if self.is_panorama() {
            (2.0 * (1.0 - orientation.peak_score)).max(0.0)
        } else {
            let cropped = crop_columns(aerial, orientation.shift, self.ground.width())?;
            let cropped = l2_normalize(&cropped).map_err(|_| {
                Error::Degenerate(format!(
                    "aerial crop at shift {} is all zeros",
                    orientation.shift
                ))
            })?;
            self.ground.distance(&cropped)?
        };
        Ok(MatchResult {
            distance,
            orientation,
        })
    }
}

pub fn match_panorama(
    aerial: &FeatureVolume,
    ground: &FeatureVolume,
    path: CorrelationPath,
    tie: TiePolicy,
) -> Result<MatchResult> {
    if aerial.width() != ground.width() {
        return Err(Error::Dimension(format!(
            "panorama match needs equal widths, got aerial {} and ground {}",
            aerial.width(),
            ground.width()
        )));
    }
    check_unit(aerial, "aerial")?;
    Matcher::new(ground, aerial.width(), path, tie)?.match_aerial(aerial, None)
}

pub fn match_limited_fov(
    aerial: &FeatureVolume,
    ground: &FeatureVolume,
    path: CorrelationPath,
    tie: TiePolicy,
) -> Result<MatchResult> {
    if ground.width() >= aerial.width() {
        return Err(Error::Dimension(format!(
            "limited-FoV match needs ground width {} below aerial width {}",
            ground.width(),
            aerial.width()
        )));
    }
    check_unit(aerial, "aerial")?;
    Matcher::new(ground, aerial.width(), path, tie)?.match_aerial(aerial, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopModel {
    pub spatial: u64,
    pub spectral: u64,
    pub ratio: f64,
}

/// Operation counts for correlating one query against `n` database volumes:
/// `2 N H W^2 C` directly, `13 N H W C` with cached spectra.
pub fn flop_model(n: u64, height: u64, width: u64, channels: u64) -> FlopModel {
    FlopModel {
        spatial: 2 * n * height * width * width * channels,
        spectral: 13 * n * height * width * channels,
        ratio: 13.0 / (2.0 * width as f64),
    }
}
