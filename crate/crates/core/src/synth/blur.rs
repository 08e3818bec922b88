use super::{Dataset, SynthError};
use crate::image::RgbImage;

/// Variance of the 3×3 Laplacian response over the grayscale image interior.
pub fn blur_score(image: &RgbImage) -> Result<f64, SynthError> {
    if image.width < 3 || image.height < 3 {
        return Err(SynthError::TooSmall);
    }
    let g = image.to_gray();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0.0;
    for y in 1..g.height - 1 {
        for x in 1..g.width - 1 {
            let l = (g.get(x - 1, y) + g.get(x + 1, y) + g.get(x, y - 1) + g.get(x, y + 1) - 4.0 * g.get(x, y)) as f64;
            sum += l;
            sum_sq += l * l;
            n += 1.0;
        }
    }
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlurFilter {
    /// Keep the `round(f·n)` sharpest images.
    KeepFraction(f64),
    /// Keep images whose score is at least the threshold.
    Threshold(f64),
}

impl Default for BlurFilter {
    fn default() -> Self {
        BlurFilter::KeepFraction(0.5)
    }
}

/// Drops blurry frames, preserving order. Returns the filtered dataset and
/// the original indices of the kept frames.
pub fn filter_blurred(dataset: &Dataset, filter: BlurFilter) -> Result<(Dataset, Vec<usize>), SynthError> {
    let n = dataset.frames.len();
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    let scores = dataset
        .frames
        .iter()
        .map(|f| blur_score(&f.image))
        .collect::<Result<Vec<_>, _>>()?;
    let mut keep = vec![false; n];
    match filter {
        BlurFilter::Threshold(t) => {
            for (k, s) in keep.iter_mut().zip(&scores) {
                *k = *s >= t;
            }
        }
        BlurFilter::KeepFraction(f) => {
            let k = (f.clamp(0.0, 1.0) * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for &i in order.iter().take(k) {
                keep[i] = true;
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    if kept.is_empty() {
        return Err(SynthError::AllFiltered);
    }
    Ok((dataset.subset(&kept), kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_scores_zero() {
        assert_eq!(blur_score(&RgbImage::filled(5, 4, [0.3, 0.6, 0.1])).unwrap(), 0.0);
        assert!(matches!(blur_score(&RgbImage::new(2, 5)), Err(SynthError::TooSmall)));
    }

    #[test]
    fn checkerboard_4x4_by_hand() {
        // 1-pixel checkerboard of 0/1: interior pixels are (1,1),(2,1),(1,2),(2,2).
        // At a white pixel all four neighbors are black: L = -4; at a black
        // pixel L = +4. Two of each, so mean 0 and variance 16.
        let mut img = RgbImage::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let v = ((x + y) % 2) as f32;
                img.set(x, y, [v; 3]);
            }
        }
        let s = blur_score(&img).unwrap();
        // luma weights sum to 1 within f32 rounding
        assert!((s - 16.0).abs() < 1e-4, "{s}");
    }

    proptest! {
        #[test]
        fn blurring_lowers_the_score(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut img = RgbImage::new(24, 18);
            for v in &mut img.data { *v = rng.random(); }
            prop_assert!(blur_score(&img).unwrap() > blur_score(&img.box_blur(3)).unwrap());
        }
    }
}
