use super::{PyramidParams, SiftError};
use crate::image::{downsample_half, gaussian_blur, resize_bilinear, GrayImage};

/// Smallest image side an octave may have.
pub const MIN_OCTAVE_SIZE: usize = 16;

/// `floor(log2(min(w, h) / 16)) + 1`, or an error when the image is smaller
/// than one minimum octave.
pub fn octave_count(width: usize, height: usize) -> Result<usize, SiftError> {
    let side = width.min(height);
    if side < MIN_OCTAVE_SIZE {
        return Err(SiftError::ImageTooSmall(width, height));
    }
    // integer form of floor(log2(side / 16))
    let mut n = 1;
    let mut s = side / MIN_OCTAVE_SIZE;
    while s >= 2 {
        s /= 2;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// `S + 3` progressively blurred images.
    pub levels: Vec<GrayImage>,
    /// Absolute blur of each level, in input-image pixels.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    pub octaves: Vec<Octave>,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Size of one octave-0 pixel in input pixels (0.5 when the input was upsampled).
    pub base_step: f64,
}

impl GaussianPyramid {
    /// Input-image pixels per pixel of octave `o`.
    pub fn step(&self, octave: usize) -> f64 {
        self.base_step * (1u64 << octave) as f64
    }
}

/// Real-valued raster; DoG values are signed.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone)]
pub struct DogPyramid {
    /// `S + 2` difference images per octave.
    pub octaves: Vec<Vec<Plane>>,
    pub scales_per_octave: usize,
}

/// Octave-relative sigma of level `s`: `base_sigma * 2^(s / S)`.
pub fn level_sigma(base_sigma: f64, s: usize, scales: usize) -> f64 {
    base_sigma * 2f64.powf(s as f64 / scales as f64)
}

pub fn build_gaussian_pyramid(
    img: &GrayImage,
    params: &PyramidParams,
) -> Result<GaussianPyramid, SiftError> {
    params.validate()?;
    let scales = params.scales_per_octave;
    let sigma0 = params.base_sigma;

    let (seed_src, input_blur, base_step) = if params.upsample_input {
        let up = resize_bilinear(img, img.width() * 2, img.height() * 2)?;
        (up, 2.0 * params.assumed_input_blur, 0.5)
    } else {
        (img.clone(), params.assumed_input_blur, 1.0)
    };
    let n_octaves = octave_count(seed_src.width(), seed_src.height())?;

    let rel: Vec<f64> = (0..scales + 3)
        .map(|s| level_sigma(sigma0, s, scales))
        .collect();
    let increments: Vec<f64> = rel
        .windows(2)
        .map(|w| (w[1] * w[1] - w[0] * w[0]).sqrt())
        .collect();

    let mut seed = gaussian_blur(&seed_src, (sigma0 * sigma0 - input_blur * input_blur).sqrt())?;
    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let mut levels = Vec::with_capacity(scales + 3);
        levels.push(seed);
        for inc in &increments {
            let next = gaussian_blur(levels.last().expect("non-empty"), *inc)?;
            levels.push(next);
        }
        let step = base_step * (1u64 << o) as f64;
        let sigmas = rel.iter().map(|r| r * step).collect();
        // level S carries blur 2*sigma0, which becomes sigma0 after halving
        seed = downsample_half(&levels[scales])?;
        octaves.push(Octave { levels, sigmas });
    }
    Ok(GaussianPyramid {
        octaves,
        scales_per_octave: scales,
        base_sigma: sigma0,
        base_step,
    })
}

pub fn build_dog_pyramid(gp: &GaussianPyramid) -> DogPyramid {
    let octaves = gp
        .octaves
        .iter()
        .map(|oct| {
            oct.levels
                .windows(2)
                .map(|w| Plane {
                    width: w[0].width(),
                    height: w[0].height(),
                    data: w[1]
                        .pixels()
                        .iter()
                        .zip(w[0].pixels())
                        .map(|(b, a)| b - a)
                        .collect(),
                })
                .collect()
        })
        .collect();
    DogPyramid {
        octaves,
        scales_per_octave: gp.scales_per_octave,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octave_count_formula() {
        assert_eq!(octave_count(300, 300).unwrap(), 5);
        assert_eq!(octave_count(16, 40).unwrap(), 1);
        assert_eq!(octave_count(32, 32).unwrap(), 2);
        assert_eq!(octave_count(31, 400).unwrap(), 1);
        assert!(matches!(
            octave_count(15, 300),
            Err(SiftError::ImageTooSmall(15, 300))
        ));
    }

    #[test]
    fn sigma_schedule() {
        let gp = build_gaussian_pyramid(&GrayImage::filled(64, 64, 0.5), &PyramidParams::default())
            .unwrap();
        let expected = [1.6, 2.015_873_7, 2.539_841_7, 3.2, 4.031_747_4, 5.079_683_5];
        for (got, want) in gp.octaves[0].sigmas.iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        // octave 1 doubles
        assert!((gp.octaves[1].sigmas[0] - 3.2).abs() < 1e-12);
        assert_eq!(gp.octaves.len(), 3);
        assert!(gp.octaves.iter().all(|o| o.levels.len() == 6));
        assert_eq!(gp.octaves[1].levels[0].dims(), (32, 32));
        assert_eq!(gp.octaves[2].levels[0].dims(), (16, 16));
    }

    #[test]
    fn constant_pyramid_and_zero_dog() {
        let gp = build_gaussian_pyramid(&GrayImage::filled(300, 300, 0.5), &PyramidParams::default())
            .unwrap();
        for oct in &gp.octaves {
            for lvl in &oct.levels {
                assert!(lvl.pixels().iter().all(|&p| (p - 0.5).abs() < 1e-12));
            }
        }
        let dog = build_dog_pyramid(&gp);
        assert_eq!(dog.octaves.len(), 5);
        for oct in &dog.octaves {
            assert_eq!(oct.len(), 5);
            assert!(oct.iter().all(|p| p.data.iter().all(|&v| v.abs() < 1e-12)));
        }
    }

    #[test]
    fn dog_is_adjacent_difference() {
        let img = GrayImage::from_fn(40, 40, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
        let gp = build_gaussian_pyramid(&img, &PyramidParams::default()).unwrap();
        let dog = build_dog_pyramid(&gp);
        for (o, oct) in dog.octaves.iter().enumerate() {
            for (s, plane) in oct.iter().enumerate() {
                let a = &gp.octaves[o].levels[s];
                let b = &gp.octaves[o].levels[s + 1];
                for i in 0..plane.data.len() {
                    assert_eq!(plane.data[i], b.pixels()[i] - a.pixels()[i]);
                }
            }
        }
    }

    #[test]
    fn upsampled_pyramid_halves_step() {
        let params = PyramidParams {
            upsample_input: true,
            ..PyramidParams::default()
        };
        let gp = build_gaussian_pyramid(&GrayImage::filled(40, 40, 0.2), &params).unwrap();
        assert_eq!(gp.octaves[0].levels[0].dims(), (80, 80));
        assert!((gp.octaves[0].sigmas[0] - 0.8).abs() < 1e-12);
        assert_eq!(gp.step(1), 1.0);
    }
}
