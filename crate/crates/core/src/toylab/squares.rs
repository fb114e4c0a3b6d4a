use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Tensor;

pub const CANVAS: usize = 64;
pub const SQUARE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SquaresConfig {
    pub canvas: usize,
    pub square_side: usize,
    pub count: usize,
    pub seed: u64,
    /// Angles are drawn uniformly from `[0, max_angle_deg)`.
    pub max_angle_deg: f64,
}

impl Default for SquaresConfig {
    fn default() -> Self {
        SquaresConfig {
            canvas: CANVAS,
            square_side: SQUARE_SIDE,
            count: 2048,
            seed: 7,
            max_angle_deg: 90.0,
        }
    }
}

impl SquaresConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.canvas == 0 || self.square_side == 0 {
            return Err(Error::Usage("canvas, square side and count must be positive".into()));
        }
        // The rotated square's circumradius must stay on the canvas.
        if self.square_side as f64 * std::f64::consts::SQRT_2 >= self.canvas as f64 {
            return Err(Error::Usage(format!(
                "a {0}x{0} square does not fit a {1}x{1} canvas at every angle",
                self.square_side, self.canvas
            )));
        }
        if !(self.max_angle_deg > 0.0 && self.max_angle_deg <= 360.0) {
            return Err(Error::Usage("angle range must be within (0, 360]".into()));
        }
        Ok(())
    }
}

/// Images `[count, canvas, canvas, 1]` with their rotation angles in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Squares {
    pub images: Tensor,
    pub angles: Vec<f64>,
}

impl Squares {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.images.len() / self.len()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.image_len();
        &self.images.data()[i * n..(i + 1) * n]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        Tensor::new(self.images.shape()[1..].to_vec(), self.image(i).to_vec()).expect("image shape")
    }
}

/// Binary image of a `side x side` square rotated by `angle_deg` about the canvas centre.
/// A pixel is lit when its centre, rotated back, falls strictly inside the square.
pub fn rasterize_square(canvas: usize, side: usize, angle_deg: f64) -> Vec<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mid = canvas as f64 / 2.0;
    let half = side as f64 / 2.0;
    let mut img = vec![0.0; canvas * canvas];
    for r in 0..canvas {
        let dy = r as f64 + 0.5 - mid;
        for col in 0..canvas {
            let dx = col as f64 + 0.5 - mid;
            let xr = c * dx + s * dy;
            let yr = -s * dx + c * dy;
            if xr.abs() < half && yr.abs() < half {
                img[r * canvas + col] = 1.0;
            }
        }
    }
    img
}

pub fn generate_squares(cfg: &SquaresConfig) -> Result<Squares> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let angles: Vec<f64> = (0..cfg.count)
        .map(|_| rng.random_range(0.0..cfg.max_angle_deg))
        .collect();
    let mut data = Vec::with_capacity(cfg.count * cfg.canvas * cfg.canvas);
    for &a in &angles {
        data.extend(rasterize_square(cfg.canvas, cfg.square_side, a));
    }
    let images = Tensor::new(vec![cfg.count, cfg.canvas, cfg.canvas, 1], data)?;
    Ok(Squares { images, angles })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(img: &[f64]) -> usize {
        img.iter().filter(|&&v| v == 1.0).count()
    }

    #[test]
    fn axis_aligned_square() {
        let img = rasterize_square(64, 32, 0.0);
        assert_eq!(lit(&img), 1024);
        assert_eq!(img[16 * 64 + 16], 1.0);
        assert_eq!(img[15 * 64 + 16], 0.0);
        assert_eq!(img[47 * 64 + 47], 1.0);
        assert_eq!(img[48 * 64 + 47], 0.0);
    }

    #[test]
    fn quarter_turn_is_symmetric() {
        assert_eq!(rasterize_square(64, 32, 0.0), rasterize_square(64, 32, 90.0));
    }

    #[test]
    fn oversized_square_is_rejected() {
        let cfg = SquaresConfig {
            square_side: 46,
            ..SquaresConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_are_deterministic() {
        let cfg = SquaresConfig {
            count: 5,
            ..SquaresConfig::default()
        };
        let a = generate_squares(&cfg).unwrap();
        assert_eq!(a, generate_squares(&cfg).unwrap());
        assert!(a.angles.iter().all(|&t| (0.0..90.0).contains(&t)));
        let b = generate_squares(&SquaresConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.angles, b.angles);
    }
}
