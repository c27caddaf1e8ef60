//! Synthetic problem and dataset generators.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, RngStream, StreamDomain};
use crate::error::{Error, Result};
use crate::model::LossProblem;

/// Builds a quadratic problem whose Hessian has exactly the given spectrum.
///
/// A random orthonormal basis Q is drawn from the seed and the matrix is
/// assembled as Q' diag(eigenvalues) Q; the linear term is standard normal.
/// Eigenvalues must be nonnegative and finite.
pub fn make_synthetic_quadratic(
    dim: usize,
    eigenvalues: &[f64],
    seed: u64,
) -> Result<LossProblem> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if eigenvalues.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "quadratic spectrum",
            expected: dim,
            actual: eigenvalues.len(),
        });
    }
    if eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "eigenvalues must be finite and nonnegative".into(),
        ));
    }
    let mut rng = RngStream::new(seed, StreamDomain::Data).rng();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut q = Array2::zeros((dim, dim));
    for v in q.iter_mut() {
        *v = normal.sample(&mut rng);
    }
    orthonormalize_rows(&mut q)?;

    // A = Q' diag(lambda) Q, assembled so symmetry is exact in floating point.
    let mut scaled = q.clone();
    for (mut row, &lambda) in scaled.rows_mut().into_iter().zip(eigenvalues) {
        row.mapv_inplace(|v| v * lambda);
    }
    let mut a = Array2::zeros((dim, dim));
    ndarray::linalg::general_mat_mul(1.0, &q.t(), &scaled, 0.0, &mut a);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = avg;
            a[[j, i]] = avg;
        }
    }

    let b = Array1::from_iter((0..dim).map(|_| normal.sample(&mut rng)));
    LossProblem::quadratic(a, b)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
fn orthonormalize_rows(m: &mut Array2<f64>) -> Result<()> {
    let n = m.nrows();
    for _pass in 0..2 {
        for i in 0..n {
            for j in 0..i {
                let proj = m.row(i).dot(&m.row(j));
                let prev = m.row(j).to_owned();
                m.row_mut(i).scaled_add(-proj, &prev);
            }
            let norm = m.row(i).dot(&m.row(i)).sqrt();
            if norm < 1e-12 {
                return Err(Error::InvalidArgument(
                    "degenerate random basis draw".into(),
                ));
            }
            m.row_mut(i).mapv_inplace(|v| v / norm);
        }
    }
    Ok(())
}

/// Knobs for the synthetic image-classification generator.
#[derive(Clone, Debug)]
pub struct SyntheticImagesConfig {
    pub samples: usize,
    pub classes: usize,
    pub rows: usize,
    pub cols: usize,
    /// Standard deviation of the global pixel noise, in [0,1] intensity
    /// units. Applied to every pixel so no direction of feature space is
    /// exactly dead.
    pub pixel_noise: f64,
    /// Fraction of samples whose label is replaced by a uniformly random
    /// one, making the classes not perfectly separable.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticImagesConfig {
    fn default() -> Self {
        SyntheticImagesConfig {
            samples: 36_000,
            classes: 10,
            rows: 14,
            cols: 14,
            pixel_noise: 0.37,
            label_noise: 0.07,
            seed: 0,
        }
    }
}

/// Generates a grayscale image-classification dataset.
///
/// Each class owns a full-power pattern, with patterns mutually orthogonal
/// so no class is confusable with another; a sample renders its class
/// pattern at a per-sample contrast over a mid-gray background, plus sensor
/// noise, clamped to [0, 1]. Contrasts are drawn from a mixture: most
/// samples are crisp, but a faint subpopulation sits below the noise
/// floor, so some images stay genuinely ambiguous no matter how well the
/// model fits. An optional fraction of labels is randomized. Labels cycle
/// through the classes so counts stay balanced. Distinct `seed` values
/// give independent datasets (use one for a train split and another for a
/// test split).
pub fn make_synthetic_images(cfg: &SyntheticImagesConfig) -> Result<Dataset> {
    if cfg.samples == 0 || cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::InvalidArgument(
            "samples and image dims must be positive".into(),
        ));
    }
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if !(0.0..=1.0).contains(&cfg.pixel_noise) {
        return Err(Error::InvalidArgument(
            "pixel noise must lie in [0, 1]".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.label_noise) {
        return Err(Error::InvalidArgument(
            "label noise must lie in [0, 1)".into(),
        ));
    }
    let p = cfg.rows * cfg.cols;
    if cfg.classes > p {
        return Err(Error::InvalidArgument(
            "need at least as many pixels as classes".into(),
        ));
    }
    let masks = class_masks(cfg, p)?;

    let stream = RngStream::new(cfg.seed, StreamDomain::Data);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Array2::zeros((cfg.samples, p));
    let mut labels = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let class = i % cfg.classes;
        let mut rng = stream.at(i as u64).rng();
        // Fixed draw count per sample keeps features independent of the
        // label-noise setting.
        let faint = rng.random::<f64>() < FAINT_FRAC;
        let amp_draw = rng.random::<f64>();
        let amplitude = if faint {
            FAINT_LO + (FAINT_HI - FAINT_LO) * amp_draw
        } else {
            NORMAL_LO + (NORMAL_HI - NORMAL_LO) * amp_draw
        };
        let flip = rng.random::<f64>() < cfg.label_noise;
        let replacement = rng.random_range(0..cfg.classes);
        labels.push(if flip { replacement } else { class });
        let contrast = amplitude * CLASS_CONTRAST;
        for j in 0..p {
            let v = BACKGROUND
                + contrast * masks[[class, j]]
                + cfg.pixel_noise * normal.sample(&mut rng);
            features[[i, j]] = v.clamp(0.0, 1.0);
        }
    }
    Dataset::new(features, labels, cfg.classes)
}

// Image model constants. A sample is its class pattern at some contrast
// over a mid-gray background plus sensor noise. A faint subpopulation
// renders classes at contrasts below the noise floor, leaving genuinely
// ambiguous images the model can never become confident about.
const BACKGROUND: f64 = 0.58;
const CLASS_CONTRAST: f64 = 0.46;
const FAINT_FRAC: f64 = 0.6;
const FAINT_LO: f64 = 0.0;
const FAINT_HI: f64 = 0.05;
const NORMAL_LO: f64 = 1.0;
const NORMAL_HI: f64 = 1.2;

/// Builds one full-power pattern per class: mutually orthogonal rows with
/// unit per-pixel root-mean-square amplitude.
fn class_masks(cfg: &SyntheticImagesConfig, p: usize) -> Result<Array2<f64>> {
    let mut masks = Array2::zeros((cfg.classes, p));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for class in 0..cfg.classes {
        let mut rng = RngStream::new(cfg.seed, StreamDomain::Data)
            .for_client(class as u64)
            .for_round(u64::MAX)
            .rng();
        for j in 0..p {
            masks[[class, j]] = normal.sample(&mut rng);
        }
    }
    orthonormalize_rows(&mut masks)?;
    masks.mapv_inplace(|v| v * (p as f64).sqrt());
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_spectrum_all_ones_gives_identity() {
        let p = make_synthetic_quadratic(8, &[1.0; 8], 3).unwrap();
        let h = p.hessian(&Array1::zeros(8)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = f64::from(i == j) as f64;
                assert!((h[[i, j]] - want).abs() < 1e-10, "({i},{j}) = {}", h[[i, j]]);
            }
        }
    }

    #[test]
    fn quadratic_builder_validates() {
        assert!(make_synthetic_quadratic(0, &[], 0).is_err());
        assert!(make_synthetic_quadratic(2, &[1.0], 0).is_err());
        assert!(make_synthetic_quadratic(2, &[1.0, -0.5], 0).is_err());
        assert!(make_synthetic_quadratic(2, &[1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn quadratic_builder_deterministic() {
        let a = make_synthetic_quadratic(5, &[0.1, 0.2, 0.3, 0.4, 0.5], 11).unwrap();
        let b = make_synthetic_quadratic(5, &[0.1, 0.2, 0.3, 0.4, 0.5], 11).unwrap();
        let x = Array1::ones(5);
        assert_eq!(a.full_grad(&x).unwrap(), b.full_grad(&x).unwrap());
    }

    #[test]
    fn images_shape_and_balance() {
        let cfg = SyntheticImagesConfig {
            samples: 50,
            classes: 5,
            rows: 6,
            cols: 6,
            pixel_noise: 0.05,
            label_noise: 0.0,
            seed: 1,
        };
        let ds = make_synthetic_images(&cfg).unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.feature_dim(), 36);
        assert_eq!(ds.classes(), 5);
        for class in 0..5 {
            let count = ds.labels().iter().filter(|&&l| l == class).count();
            assert_eq!(count, 10);
        }
        assert!(ds.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Same seed reproduces, different seed does not.
        let again = make_synthetic_images(&cfg).unwrap();
        assert_eq!(ds.features(), again.features());
        let other = make_synthetic_images(&SyntheticImagesConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(ds.features(), other.features());
    }

    #[test]
    fn images_label_noise_flips_a_small_fraction() {
        let clean = SyntheticImagesConfig {
            samples: 5000,
            classes: 5,
            rows: 6,
            cols: 6,
            pixel_noise: 0.05,
            label_noise: 0.0,
            seed: 3,
        };
        let noisy = SyntheticImagesConfig {
            label_noise: 0.1,
            ..clean.clone()
        };
        let a = make_synthetic_images(&clean).unwrap();
        let b = make_synthetic_images(&noisy).unwrap();
        // Features are untouched; only labels change, at roughly the
        // requested rate (a flip can land on the original class).
        assert_eq!(a.features(), b.features());
        let flips = (0..a.len()).filter(|&i| a.label(i) != b.label(i)).count();
        let rate = flips as f64 / a.len() as f64;
        assert!((0.04..=0.16).contains(&rate), "flip rate {rate}");
        assert!(make_synthetic_images(&SyntheticImagesConfig {
            label_noise: 1.0,
            ..clean
        })
        .is_err());
    }

    #[test]
    fn images_classes_are_separable_in_mean() {
        let cfg = SyntheticImagesConfig {
            samples: 200,
            classes: 4,
            rows: 8,
            cols: 8,
            pixel_noise: 0.05,
            label_noise: 0.0,
            seed: 7,
        };
        let ds = make_synthetic_images(&cfg).unwrap();
        // Class means should be mutually farther apart than within-class spread.
        let p = ds.feature_dim();
        let mut means = vec![vec![0.0; p]; 4];
        let mut counts = [0usize; 4];
        for i in 0..ds.len() {
            let y = ds.label(i);
            counts[y] += 1;
            for j in 0..p {
                means[y][j] += ds.features()[[i, j]];
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= c as f64;
            }
        }
        for a in 0..4 {
            for b in (a + 1)..4 {
                let dist: f64 = (0..p)
                    .map(|j| (means[a][j] - means[b][j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 0.3, "classes {a} and {b} too close: {dist}");
            }
        }
    }
}
