//! Weighted soft-margin triplet loss over exhaustive mini-batches, and a toy
//! linear embedder trained through the matcher by plain gradient descent.
//!
//! The embedder applies one `d_in x d_out` matrix to every azimuth column of a
//! raw volume (column vector = the `h x c` entries of that column), so the
//! embedding stays equivariant to column shifts. The embedding is a
//! `1 x W x d_out` volume, unit-normalized as a whole.
//!
//! Gradients treat the correlation argmax (and the crop it selects) as fixed
//! at its forward value.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsm::{correlate_dense, estimate_orientation, CorrelationPath, TiePolicy};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::featex::{FeatureVolume, MIN_NORM};

/// Above this margin the loss is evaluated in its linear asymptote.
const SATURATION: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 10.0 }
    }
}

impl LossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }
}

/// `log(1 + exp(alpha * (d_pos - d_neg)))`.
pub fn triplet_loss(d_pos: f64, d_neg: f64, cfg: &LossConfig) -> f64 {
    let x = cfg.alpha * (d_pos - d_neg);
    if x > SATURATION {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`triplet_loss`] with respect to `d_pos` (and minus the
/// derivative with respect to `d_neg`).
pub fn triplet_loss_slope(d_pos: f64, d_neg: f64, cfg: &LossConfig) -> f64 {
    let x = cfg.alpha * (d_pos - d_neg);
    let sigmoid = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    cfg.alpha * sigmoid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Ground,
    Aerial,
}

/// `anchor` and `positive` always share an index. For a ground anchor the
/// positive and negative are aerial indices; for an aerial anchor they are
/// ground indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub anchor_view: View,
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    /// (ground, aerial) index pairs of the positive and negative distance.
    pub fn pairs(&self) -> ((usize, usize), (usize, usize)) {
        match self.anchor_view {
            View::Ground => ((self.anchor, self.positive), (self.anchor, self.negative)),
            View::Aerial => ((self.positive, self.anchor), (self.negative, self.anchor)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletBatch {
    pub batch_size: usize,
    pub triplets: Vec<Triplet>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Every ground anchor against every non-matching aerial, then every aerial
/// anchor against every non-matching ground: `2 B (B - 1)` triplets.
pub fn build_exhaustive_triplets(batch_size: usize) -> Result<TripletBatch> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "exhaustive triplets need a batch of at least 2, got {batch_size}"
        )));
    }
    let mut triplets = Vec::with_capacity(2 * batch_size * (batch_size - 1));
    for view in [View::Ground, View::Aerial] {
        for i in 0..batch_size {
            for j in (0..batch_size).filter(|&j| j != i) {
                triplets.push(Triplet {
                    anchor_view: view,
                    anchor: i,
                    positive: i,
                    negative: j,
                });
            }
        }
    }
    Ok(TripletBatch {
        batch_size,
        triplets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedder {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_in x d_out`.
    weights: Vec<f64>,
}

/// Unit-normalized `1 x width x d_out` embedding in 64-bit, plus the
/// pre-normalization norm needed for backprop.
#[derive(Debug, Clone)]
struct Embedding {
    width: usize,
    values: Vec<f64>,
    norm: f64,
}

impl LinearEmbedder {
    pub fn new(d_in: usize, d_out: usize, weights: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!(
                "embedder dims must be positive, got {d_in}x{d_out}"
            )));
        }
        if weights.len() != d_in * d_out {
            return Err(Error::Dimension(format!(
                "embedder needs {} weights, got {}",
                d_in * d_out,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("embedder weights must be finite".into()));
        }
        Ok(Self {
            d_in,
            d_out,
            weights,
        })
    }

    /// Gaussian init with standard deviation `1 / sqrt(d_in)`.
    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (d_in.max(1) as f64).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let weights = (0..d_in * d_out).map(|_| normal.sample(&mut rng)).collect();
        Self::new(d_in, d_out, weights)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Embeds a raw volume and rounds the result into a [`FeatureVolume`].
    pub fn embed(&self, raw: &FeatureVolume) -> Result<FeatureVolume> {
        let e = self.embed_dense(raw)?;
        let mut v = FeatureVolume::new(
            1,
            e.width,
            self.d_out,
            e.values.iter().map(|&x| x as f32).collect(),
        )?;
        v = crate::featex::l2_normalize(&v)?;
        Ok(v)
    }

    fn check_input(&self, raw: &FeatureVolume) -> Result<()> {
        if raw.height() * raw.channels() != self.d_in {
            return Err(Error::Dimension(format!(
                "raw volume {:?} has column size {}, embedder expects {}",
                raw.dims(),
                raw.height() * raw.channels(),
                self.d_in
            )));
        }
        Ok(())
    }

    fn column(raw: &FeatureVolume, w: usize) -> impl Iterator<Item = f64> + '_ {
        (0..raw.height()).flat_map(move |h| raw.cell(h, w).iter().map(|&x| x as f64))
    }

    fn embed_dense(&self, raw: &FeatureVolume) -> Result<Embedding> {
        self.check_input(raw)?;
        let width = raw.width();
        let mut values = vec![0f64; width * self.d_out];
        for w in 0..width {
            let out = &mut values[w * self.d_out..(w + 1) * self.d_out];
            for (d, x) in Self::column(raw, w).enumerate() {
                let row = &self.weights[d * self.d_out..(d + 1) * self.d_out];
                for (o, wt) in out.iter_mut().zip(row) {
                    *o += x * wt;
                }
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < MIN_NORM {
            return Err(Error::Degenerate("embedding is all zeros".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Embedding {
            width,
            values,
            norm,
        })
    }

    /// Adds `d loss / d weights` given `d loss / d embedding`.
    fn backprop(&self, raw: &FeatureVolume, emb: &Embedding, grad_e: &[f64], grad_w: &mut [f64]) {
        let proj: f64 = emb.values.iter().zip(grad_e).map(|(e, g)| e * g).sum();
        for w in 0..emb.width {
            let range = w * self.d_out..(w + 1) * self.d_out;
            let grad_u: Vec<f64> = emb.values[range.clone()]
                .iter()
                .zip(&grad_e[range])
                .map(|(e, g)| (g - e * proj) / emb.norm)
                .collect();
            for (d, x) in Self::column(raw, w).enumerate() {
                let row = &mut grad_w[d * self.d_out..(d + 1) * self.d_out];
                for (gw, gu) in row.iter_mut().zip(&grad_u) {
                    *gw += x * gu;
                }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::with_capacity(12 + 4 * self.weights.len());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&(self.d_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_out as u32).to_le_bytes());
        for &w in &self.weights {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 12 || &bytes[..4] != WEIGHTS_MAGIC {
            return Err(Error::Format(
                "weights file must start with \"DSMW\" and two u32 dims".into(),
            ));
        }
        let d_in = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d_out = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + 4 * d_in * d_out {
            return Err(Error::Length(format!(
                "weights file declares {d_in}x{d_out}, holds {} payload bytes",
                bytes.len() - 12
            )));
        }
        let weights = bytes[12..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Self::new(d_in, d_out, weights)
    }
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DSMW";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub loss: LossConfig,
    pub path: CorrelationPath,
    pub tie: TiePolicy,
    pub exec: Exec,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            path: CorrelationPath::Spatial,
            tie: TiePolicy::LowestIndex,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    /// Same layout as [`LinearEmbedder::weights`].
    pub grad: Vec<f64>,
    /// Smallest gap between the top correlation score and the runner-up
    /// over all pairs. Gradients are only meaningful when this is not tiny.
    pub min_peak_margin: f64,
}

struct PairTerm {
    distance: f64,
    grad_ground: Vec<f64>,
    grad_aerial: Vec<f64>,
    peak_margin: f64,
}

fn pair_term(
    ground: &Embedding,
    aerial: &Embedding,
    d_out: usize,
    opts: &BatchOptions,
) -> Result<PairTerm> {
    let (wg, wa) = (ground.width, aerial.width);
    let profile = correlate_dense(&aerial.values, wa, &ground.values, wg, 1, d_out, opts.path)?;
    let shift = estimate_orientation(&profile, opts.tie).shift;
    let peak = profile.scores()[shift];
    let peak_margin = profile
        .scores()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != shift)
        .map(|(_, s)| peak - s)
        .fold(f64::INFINITY, f64::min);

    let aerial_col = |w: usize| (shift + w) % wa;
    let mut grad_ground = vec![0f64; wg * d_out];
    let mut grad_aerial = vec![0f64; wa * d_out];

    let distance = if wg == wa {
        let mut score = 0f64;
        for w in 0..wg {
            let a = &aerial.values[aerial_col(w) * d_out..][..d_out];
            let g = &ground.values[w * d_out..][..d_out];
            score += a.iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
            for o in 0..d_out {
                grad_ground[w * d_out + o] = -2.0 * a[o];
                grad_aerial[aerial_col(w) * d_out + o] = -2.0 * g[o];
            }
        }
        2.0 * (1.0 - score)
    } else {
        let mut crop = Vec::with_capacity(wg * d_out);
        for w in 0..wg {
            crop.extend_from_slice(&aerial.values[aerial_col(w) * d_out..][..d_out]);
        }
        let crop_norm = crop.iter().map(|x| x * x).sum::<f64>().sqrt();
        if crop_norm < MIN_NORM {
            return Err(Error::Degenerate(format!(
                "aerial crop at shift {shift} is all zeros"
            )));
        }
        crop.iter_mut().for_each(|x| *x /= crop_norm);
        let diff: Vec<f64> = ground
            .values
            .iter()
            .zip(&crop)
            .map(|(g, c)| g - c)
            .collect();
        let distance = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        if distance > 0.0 {
            let grad_crop_unit: Vec<f64> = diff.iter().map(|d| -d / distance).collect();
            let proj: f64 = crop.iter().zip(&grad_crop_unit).map(|(c, g)| c * g).sum();
            for w in 0..wg {
                for o in 0..d_out {
                    let i = w * d_out + o;
                    grad_ground[i] = diff[i] / distance;
                    grad_aerial[aerial_col(w) * d_out + o] +=
                        (grad_crop_unit[i] - crop[i] * proj) / crop_norm;
                }
            }
        }
        distance
    };
    Ok(PairTerm {
        distance,
        grad_ground,
        grad_aerial,
        peak_margin,
    })
}

/// Mean triplet loss over the exhaustive batch built from matching
/// `(ground_raw[i], aerial_raw[i])` pairs, and its gradient.
pub fn batch_loss(
    embedder: &LinearEmbedder,
    ground_raw: &[FeatureVolume],
    aerial_raw: &[FeatureVolume],
    opts: &BatchOptions,
) -> Result<BatchLoss> {
    let b = ground_raw.len();
    if b != aerial_raw.len() {
        return Err(Error::Config(format!(
            "{} ground and {} aerial inputs; pairs must line up",
            b,
            aerial_raw.len()
        )));
    }
    let batch = build_exhaustive_triplets(b)?;
    let ground: Vec<Embedding> = opts
        .exec
        .map(ground_raw, |r| embedder.embed_dense(r))
        .into_iter()
        .collect::<Result<_>>()?;
    let aerial: Vec<Embedding> = opts
        .exec
        .map(aerial_raw, |r| embedder.embed_dense(r))
        .into_iter()
        .collect::<Result<_>>()?;

    let d_out = embedder.d_out;
    let terms: Vec<PairTerm> = opts
        .exec
        .map_range(b * b, |p| {
            pair_term(&ground[p / b], &aerial[p % b], d_out, opts)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let dist = |g: usize, a: usize| terms[g * b + a].distance;

    let n = batch.len() as f64;
    let mut loss = 0f64;
    let mut coef = vec![0f64; b * b];
    for t in &batch.triplets {
        let ((pg, pa), (ng, na)) = t.pairs();
        let (d_pos, d_neg) = (dist(pg, pa), dist(ng, na));
        loss += triplet_loss(d_pos, d_neg, &opts.loss);
        let slope = triplet_loss_slope(d_pos, d_neg, &opts.loss) / n;
        coef[pg * b + pa] += slope;
        coef[ng * b + na] -= slope;
    }
    loss /= n;

    let mut grad_ground: Vec<Vec<f64>> =
        ground.iter().map(|e| vec![0f64; e.values.len()]).collect();
    let mut grad_aerial: Vec<Vec<f64>> =
        aerial.iter().map(|e| vec![0f64; e.values.len()]).collect();
    for (p, term) in terms.iter().enumerate() {
        let c = coef[p];
        if c == 0.0 {
            continue;
        }
        let (g, a) = (p / b, p % b);
        grad_ground[g]
            .iter_mut()
            .zip(&term.grad_ground)
            .for_each(|(acc, x)| *acc += c * x);
        grad_aerial[a]
            .iter_mut()
            .zip(&term.grad_aerial)
            .for_each(|(acc, x)| *acc += c * x);
    }

    let mut grad = vec![0f64; embedder.weights.len()];
    for i in 0..b {
        embedder.backprop(&ground_raw[i], &ground[i], &grad_ground[i], &mut grad);
        embedder.backprop(&aerial_raw[i], &aerial[i], &grad_aerial[i], &mut grad);
    }
    let min_peak_margin = terms
        .iter()
        .map(|t| t.peak_margin)
        .fold(f64::INFINITY, f64::min);
    Ok(BatchLoss {
        loss,
        grad,
        min_peak_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub path: CorrelationPath,
    /// Step halvings tried before an epoch is skipped.
    pub max_halvings: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            step_size: 0.5,
            seed: 0,
            loss: LossConfig::default(),
            path: CorrelationPath::Spatial,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub embedder: LinearEmbedder,
    /// Loss before training, then after each epoch.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent with step halving whenever a step would
/// increase the loss, so the trace never goes up.
pub fn train_toy(
    embedder: &LinearEmbedder,
    pairs: &[(FeatureVolume, FeatureVolume)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if pairs.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if !(cfg.step_size >= 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::Config(format!(
            "step size must be finite and >= 0, got {}",
            cfg.step_size
        )));
    }
    let ground: Vec<FeatureVolume> = pairs.iter().map(|(g, _)| g.clone()).collect();
    let aerial: Vec<FeatureVolume> = pairs.iter().map(|(_, a)| a.clone()).collect();
    let opts = BatchOptions {
        loss: cfg.loss,
        path: cfg.path,
        tie: TiePolicy::SeededRandom(cfg.seed),
        exec: Exec::default(),
    };
    let evaluate = |e: &LinearEmbedder| -> Result<BatchLoss> {
        let out = batch_loss(e, &ground, &aerial, &opts)?;
        if !out.loss.is_finite() {
            return Err(Error::Training(format!("loss became {}", out.loss)));
        }
        Ok(out)
    };

    let mut current = embedder.clone();
    let mut state = evaluate(&current)?;
    let mut trace = vec![state.loss];
    for epoch in 0..cfg.epochs {
        let mut step = cfg.step_size;
        let mut accepted = false;
        if step > 0.0 {
            for _ in 0..=cfg.max_halvings {
                let weights = current
                    .weights
                    .iter()
                    .zip(&state.grad)
                    .map(|(w, g)| w - step * g)
                    .collect();
                let candidate = LinearEmbedder::new(current.d_in, current.d_out, weights)
                    .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
                let next = evaluate(&candidate)?;
                if next.loss <= state.loss {
                    current = candidate;
                    state = next;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            log::debug!("epoch {epoch}: no descent step accepted");
        }
        trace.push(state.loss);
    }
    Ok(TrainOutcome {
        embedder: current,
        trace,
    })
}

/// Separable toy pairs: each ground volume is its aerial volume rolled by a
/// random number of columns plus small noise.
pub fn synthetic_pairs(
    n: usize,
    height: usize,
    width: usize,
    channels: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<(FeatureVolume, FeatureVolume)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    (0..n)
        .map(|_| {
            let data: Vec<f32> = (0..height * width * channels)
                .map(|_| rng.gen_range(-1.0f32..1.0))
                .collect();
            let aerial = FeatureVolume::new(height, width, channels, data)?;
            let shift = rng.gen_range(0..width);
            let rolled = aerial.roll_columns(shift);
            let noisy = rolled
                .data()
                .iter()
                .map(|&x| x + gauss.sample(&mut rng) as f32)
                .collect();
            Ok((FeatureVolume::new(height, width, channels, noisy)?, aerial))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn loss_examples() {
        let cfg = LossConfig::default();
        assert_abs_diff_eq!(triplet_loss(0.3, 0.3, &cfg), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(triplet_loss(0.4, 0.5, &cfg), 0.313262, epsilon = 1e-6);
        assert_abs_diff_eq!(triplet_loss(10.5, 0.5, &cfg), 100.0, epsilon = 1e-6);
        assert!(triplet_loss(1e6, 0.0, &cfg).is_finite());
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(LossConfig::new(0.0).is_err());
        assert!(LossConfig::new(-1.0).is_err());
        assert!(LossConfig::new(f64::NAN).is_err());
        assert_eq!(LossConfig::new(10.0).unwrap(), LossConfig::default());
    }

    #[test]
    fn slope_matches_finite_difference() {
        let cfg = LossConfig::default();
        for (p, n) in [(0.1, 0.2), (1.0, 0.5), (4.0, 0.1), (0.0, 3.0)] {
            let h = 1e-6;
            let fd = (triplet_loss(p + h, n, &cfg) - triplet_loss(p - h, n, &cfg)) / (2.0 * h);
            assert_abs_diff_eq!(triplet_loss_slope(p, n, &cfg), fd, epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn equal_distances_give_log_two(d in -1e3f64..1e3) {
            prop_assert!((triplet_loss(d, d, &LossConfig::default()) - 2f64.ln()).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_distances(p in 0.0f64..2.0, n in 0.0f64..2.0, eps in 1e-3f64..0.5) {
            let cfg = LossConfig::new(2.0).unwrap();
            prop_assert!(triplet_loss(p + eps, n, &cfg) > triplet_loss(p, n, &cfg));
            prop_assert!(triplet_loss(p, n + eps, &cfg) < triplet_loss(p, n, &cfg));
        }

        #[test]
        fn monotone_in_alpha(p in 0.0f64..2.0, gap in 0.01f64..1.0, a in 0.5f64..5.0) {
            let small = LossConfig::new(a).unwrap();
            let large = LossConfig::new(a * 2.0).unwrap();
            // d_pos < d_neg: sharper alpha lowers the loss
            prop_assert!(triplet_loss(p, p + gap, &large) < triplet_loss(p, p + gap, &small));
            // d_pos > d_neg: sharper alpha raises it
            prop_assert!(triplet_loss(p + gap, p, &large) > triplet_loss(p + gap, p, &small));
        }
    }

    #[test]
    fn smallest_batch() {
        let b = build_exhaustive_triplets(2).unwrap();
        let t = |v, a, p, n| Triplet {
            anchor_view: v,
            anchor: a,
            positive: p,
            negative: n,
        };
        assert_eq!(
            b.triplets,
            vec![
                t(View::Ground, 0, 0, 1),
                t(View::Ground, 1, 1, 0),
                t(View::Aerial, 0, 0, 1),
                t(View::Aerial, 1, 1, 0),
            ]
        );
        assert!(matches!(
            build_exhaustive_triplets(1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn batch_of_three_by_enumeration() {
        let b = build_exhaustive_triplets(3).unwrap();
        let mut expected = HashSet::new();
        for view in [View::Ground, View::Aerial] {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        expected.insert((view, i, i, j));
                    }
                }
            }
        }
        let got: HashSet<_> = b
            .triplets
            .iter()
            .map(|t| (t.anchor_view, t.anchor, t.positive, t.negative))
            .collect();
        assert_eq!(b.len(), 12);
        assert_eq!(got, expected);
    }

    #[test]
    fn triplet_counts() {
        for b in 2..=64 {
            let batch = build_exhaustive_triplets(b).unwrap();
            assert_eq!(batch.len(), 2 * b * (b - 1));
            assert!(batch.triplets.iter().all(|t| t.positive != t.negative));
            let ground = batch
                .triplets
                .iter()
                .filter(|t| t.anchor_view == View::Ground)
                .count();
            assert_eq!(ground, b * (b - 1));
        }
        assert_eq!(build_exhaustive_triplets(32).unwrap().len(), 1984);
    }

    #[test]
    fn identical_inputs_give_log_two() {
        let raw = FeatureVolume::from_fn(2, 6, 3, |h, w, c| (1 + h * 7 + w * 3 + c) as f32 * 0.1)
            .unwrap();
        let e = LinearEmbedder::random(6, 4, 1).unwrap();
        let out = batch_loss(
            &e,
            &vec![raw.clone(); 4],
            &vec![raw; 4],
            &BatchOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(out.loss, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn two_pair_scalar_case_by_hand() {
        // one column, d_in = d_out = 1, w = 1: embeddings are sign(x)
        let v = |x: f32| FeatureVolume::new(1, 1, 1, vec![x]).unwrap();
        let e = LinearEmbedder::new(1, 1, vec![1.0]).unwrap();
        let ground = [v(2.0), v(-1.0)];
        let aerial = [v(3.0), v(1.0)];
        let out = batch_loss(&e, &ground, &aerial, &BatchOptions::default()).unwrap();
        // embeddings: g = [1, -1], a = [1, 1]; d = 2 (1 - g a)
        let d = |g: f64, a: f64| 2.0 * (1.0 - g * a);
        let cfg = LossConfig::default();
        let expected = (triplet_loss(d(1.0, 1.0), d(1.0, 1.0), &cfg)
            + triplet_loss(d(-1.0, 1.0), d(-1.0, 1.0), &cfg)
            + triplet_loss(d(1.0, 1.0), d(-1.0, 1.0), &cfg)
            + triplet_loss(d(-1.0, 1.0), d(1.0, 1.0), &cfg))
            / 4.0;
        assert_abs_diff_eq!(out.loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_embedding_is_degenerate() {
        let e = LinearEmbedder::new(2, 2, vec![0.0; 4]).unwrap();
        let raw = FeatureVolume::from_fn(1, 3, 2, |_, w, c| (w + c) as f32).unwrap();
        let err = batch_loss(
            &e,
            &[raw.clone(), raw.clone()],
            &[raw.clone(), raw],
            &BatchOptions::default(),
        );
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn mismatched_lists_rejected() {
        let e = LinearEmbedder::random(2, 2, 0).unwrap();
        let raw = FeatureVolume::from_fn(1, 3, 2, |_, w, c| (1 + w + c) as f32).unwrap();
        assert!(batch_loss(
            &e,
            &[raw.clone(), raw.clone()],
            std::slice::from_ref(&raw),
            &BatchOptions::default()
        )
        .is_err());
        assert!(batch_loss(
            &e,
            std::slice::from_ref(&raw),
            &[raw.clone(), raw.clone()],
            &BatchOptions::default()
        )
        .is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let e = LinearEmbedder::new(2, 3, vec![0.5, -1.0, 2.0, 0.25, 0.0, -3.5]).unwrap();
        e.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DSMW");
        assert_eq!(bytes.len(), 12 + 24);
        assert_eq!(LinearEmbedder::load(&path).unwrap(), e);
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(LinearEmbedder::load(&path), Err(Error::Length(_))));
    }

    #[test]
    fn zero_step_keeps_weights() {
        let pairs = synthetic_pairs(4, 2, 6, 2, 0.05, 3).unwrap();
        let e = LinearEmbedder::random(4, 3, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            step_size: 0.0,
            ..TrainConfig::default()
        };
        let out = train_toy(&e, &pairs, &cfg).unwrap();
        assert_eq!(out.embedder, e);
        assert_eq!(out.trace.len(), 4);
        assert!(out.trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_needs_two_pairs() {
        let pairs = synthetic_pairs(1, 2, 4, 2, 0.0, 0).unwrap();
        let e = LinearEmbedder::random(4, 2, 0).unwrap();
        assert!(matches!(
            train_toy(&e, &pairs, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
