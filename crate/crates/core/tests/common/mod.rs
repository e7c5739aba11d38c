#![allow(dead_code)]

use std::collections::HashMap;

use cvdsm::retrieval::{build_index, query_batch, Index, QueryOptions, QueryResult};
use cvdsm::{
    extract_features, polar_transform, query_feature_width, synth_scene, ExtractorConfig,
    FeatureStore, FeatureVolume, Image, PolarConfig, Scene,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quantized samples of `f(row, col)` over a `size`×`size` grid.
pub fn analytic_image(size: usize, f: impl Fn(f64, f64) -> f64) -> Image {
    Image::gray_from_fn(size, size, |r, c| {
        (f(r as f64, c as f64) + 0.5).floor().clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

pub fn random_unit_volume(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> FeatureVolume {
    let data = (0..h * w * c)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    cvdsm::l2_normalize(&FeatureVolume::new(h, w, c, data).unwrap()).unwrap()
}

pub struct SceneSet {
    pub polar: PolarConfig,
    pub extractor: ExtractorConfig,
    pub scenes: Vec<Scene>,
    pub index: Index,
}

impl SceneSet {
    /// Scenes with ids `0..n`; aerial features come from the polar-transformed aerial.
    pub fn build(n: usize, seed: u64, noise: f64) -> SceneSet {
        let polar = PolarConfig::new(128, 16, 64).unwrap();
        let extractor = ExtractorConfig::default();
        let scenes: Vec<Scene> = (0..n)
            .map(|i| {
                synth_scene(
                    seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                    &polar,
                    noise,
                )
                .unwrap()
            })
            .collect();
        let mut store = FeatureStore::new((extractor.height, extractor.width, extractor.channels));
        for (i, s) in scenes.iter().enumerate() {
            let aerial =
                extract_features(&polar_transform(&s.aerial, &polar).unwrap(), &extractor).unwrap();
            store.push(i as u32, aerial).unwrap();
        }
        let index = build_index(&store, true, Default::default()).unwrap();
        SceneSet {
            polar,
            extractor,
            scenes,
            index,
        }
    }

    /// Ground features of every scene, keeping the leftmost `cols` panorama columns.
    pub fn ground_queries(&self, cols: usize) -> Vec<(u32, FeatureVolume)> {
        let wg = self.polar.target_width;
        let width = query_feature_width(cols, wg, self.extractor.width);
        let cfg = self.extractor.with_width(width);
        self.scenes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let img = s.ground.crop_left(cols).unwrap();
                (i as u32, extract_features(&img, &cfg).unwrap())
            })
            .collect()
    }

    pub fn run(&self, cols: usize, opts: &QueryOptions) -> Vec<QueryResult> {
        query_batch(&self.index, &self.ground_queries(cols), opts).unwrap()
    }

    pub fn gt(&self) -> HashMap<u32, u32> {
        (0..self.scenes.len() as u32).map(|i| (i, i)).collect()
    }

    pub fn gt_shift(&self, id: u32) -> usize {
        self.scenes[id as usize].shift
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub peak_margin: f64,
}

/// Central-difference check of the batch gradient on a random instance with
/// B=3, 8 inputs per column (2 rows × 4 channels) and 4 outputs.
/// `ground_width` below 6 exercises the limited-FoV branch.
pub fn gradient_check(seed: u64, ground_width: usize) -> GradCheck {
    use cvdsm::loss::{batch_loss, BatchOptions, LinearEmbedder};
    let mut r = rng(seed);
    let raw = |w: usize, r: &mut ChaCha8Rng| {
        let data = (0..2 * w * 4).map(|_| r.gen_range(-1.0f32..1.0)).collect();
        FeatureVolume::new(2, w, 4, data).unwrap()
    };
    let ground: Vec<FeatureVolume> = (0..3).map(|_| raw(ground_width, &mut r)).collect();
    let aerial: Vec<FeatureVolume> = (0..3).map(|_| raw(6, &mut r)).collect();
    let embedder = LinearEmbedder::random(8, 4, seed).unwrap();
    let opts = BatchOptions::default();
    let base = batch_loss(&embedder, &ground, &aerial, &opts).unwrap();

    let h = 1e-4;
    let mut max_rel_err = 0f64;
    for k in 0..embedder.weights().len() {
        let at = |delta: f64| {
            let mut w = embedder.weights().to_vec();
            w[k] += delta;
            let e = LinearEmbedder::new(8, 4, w).unwrap();
            batch_loss(&e, &ground, &aerial, &opts).unwrap().loss
        };
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        let analytic = base.grad[k];
        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel_err = max_rel_err.max((analytic - numeric).abs() / scale);
    }
    GradCheck {
        max_rel_err,
        peak_margin: base.min_peak_margin,
    }
}
