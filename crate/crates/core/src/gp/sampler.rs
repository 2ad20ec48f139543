use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{covariance, CovarianceKind, GridPath, PathSpec};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Eigenvalues of the embedding below this are treated as a failed embedding.
const NEGATIVE_EIGEN_TOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest carry no variance worth
/// sampling and are dropped.
const DROP_RELATIVE: f64 = 1e-13;
const MAX_EMBEDDING_LOG2: u32 = 22;
const CHOLESKY_JITTER: f64 = 1e-12;

/// How a [`PathSampler`] produces paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMethod {
    /// Circulant embedding of the given size with `modes` nonzero eigenvalues.
    Circulant { size: usize, modes: usize },
    /// Dense Cholesky factor of the grid covariance matrix.
    Cholesky,
    /// Exact AR(1) recursion (OU only).
    Recursion,
}

enum Engine {
    Circulant { fft: Arc<dyn Fft<f64>>, size: usize, modes: Vec<(usize, f64)> },
    Cholesky(DMatrix<f64>),
    Recursion { decay: f64, innovation: f64 },
}

/// Reusable sampler for one [`PathSpec`]. Construction does the expensive
/// work (eigenvalues or factorization); sampling is then cheap, reentrant
/// and safe to share across threads.
pub struct PathSampler {
    spec: PathSpec,
    points: usize,
    engine: Engine,
}

fn embed(kind: CovarianceKind, points: usize, dt: f64) -> Option<Engine> {
    let mut planner = FftPlanner::new();
    let mut size = (4 * points).next_power_of_two();
    loop {
        let fft = planner.plan_fft_forward(size);
        let mut buf: Vec<Complex64> = (0..size)
            .map(|k| Complex64::new(covariance(kind, k.min(size - k) as f64 * dt), 0.0))
            .collect();
        fft.process(&mut buf);
        let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min >= -NEGATIVE_EIGEN_TOL {
            let max = buf.iter().map(|c| c.re).fold(0.0, f64::max);
            let scale = 1.0 / size as f64;
            let modes = buf
                .iter()
                .enumerate()
                .filter(|(_, c)| c.re > DROP_RELATIVE * max)
                .map(|(k, c)| (k, (c.re * scale).sqrt()))
                .collect();
            return Some(Engine::Circulant { fft, size, modes });
        }
        if size >= 1 << MAX_EMBEDDING_LOG2 {
            return None;
        }
        size *= 2;
    }
}

fn cholesky(kind: CovarianceKind, points: usize, dt: f64) -> Result<Engine> {
    let gram = DMatrix::from_fn(points, points, |i, j| {
        let c = covariance(kind, (i as f64 - j as f64) * dt);
        if i == j {
            c + CHOLESKY_JITTER
        } else {
            c
        }
    });
    gram.cholesky()
        .map(|c| Engine::Cholesky(c.l()))
        .ok_or_else(|| Error::Embedding(format!("{kind} covariance on {points} points is not positive definite")))
}

impl PathSampler {
    pub fn new(spec: &PathSpec) -> Result<Self> {
        spec.validate()?;
        let points = spec.points();
        let engine = match spec.kind {
            CovarianceKind::OU => Engine::Recursion {
                decay: (-spec.dt / 2.0).exp(),
                innovation: (-(-spec.dt).exp_m1()).sqrt(),
            },
            kind => match embed(kind, points, spec.dt) {
                Some(e) => e,
                None => cholesky(kind, points, spec.dt)?,
            },
        };
        Ok(Self { spec: *spec, points, engine })
    }

    /// Sampler that always uses the dense Cholesky factor.
    pub fn cholesky(spec: &PathSpec) -> Result<Self> {
        spec.validate()?;
        let points = spec.points();
        Ok(Self { spec: *spec, points, engine: cholesky(spec.kind, points, spec.dt)? })
    }

    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn method(&self) -> SamplerMethod {
        match &self.engine {
            Engine::Circulant { size, modes, .. } => SamplerMethod::Circulant { size: *size, modes: modes.len() },
            Engine::Cholesky(_) => SamplerMethod::Cholesky,
            Engine::Recursion { .. } => SamplerMethod::Recursion,
        }
    }

    /// Lower-triangular `L` with `path = L xi`, `xi` i.i.d. standard normal,
    /// for the dense and recursive engines. `L L^T` is the covariance the
    /// sampler actually realizes.
    pub fn factor(&self) -> Option<DMatrix<f64>> {
        match &self.engine {
            Engine::Cholesky(l) => Some(l.clone()),
            Engine::Recursion { decay, innovation } => Some(DMatrix::from_fn(self.points, self.points, |i, k| {
                match k {
                    _ if k > i => 0.0,
                    0 => decay.powi(i as i32),
                    _ => innovation * decay.powi((i - k) as i32),
                }
            })),
            Engine::Circulant { .. } => None,
        }
    }

    fn path(&self, values: Vec<f64>) -> GridPath {
        GridPath { values, dt: self.spec.dt }
    }

    fn single(&self, stream: &mut RandomStream) -> Vec<f64> {
        match &self.engine {
            Engine::Cholesky(l) => {
                let xi = DVector::from_fn(self.points, |_, _| stream.normal());
                (l * xi).data.into()
            }
            Engine::Recursion { decay, innovation } => {
                let mut x = stream.normal();
                let mut out = Vec::with_capacity(self.points);
                out.push(x);
                for _ in 1..self.points {
                    x = decay * x + innovation * stream.normal();
                    out.push(x);
                }
                out
            }
            Engine::Circulant { .. } => self.circulant_pair(stream).0,
        }
    }

    fn circulant_pair(&self, stream: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        let Engine::Circulant { fft, size, modes } = &self.engine else {
            unreachable!("circulant_pair on a non-circulant engine")
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); *size];
        for &(k, s) in modes {
            let re = stream.normal();
            let im = stream.normal();
            buf[k] = Complex64::new(s * re, s * im);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        let head = &buf[..self.points];
        (head.iter().map(|c| c.re).collect(), head.iter().map(|c| c.im).collect())
    }

    pub fn sample(&self, stream: &mut RandomStream) -> GridPath {
        self.path(self.single(stream))
    }

    /// Two independent paths. The circulant engine gets both from one FFT
    /// (real and imaginary parts); the others draw them in sequence.
    pub fn sample_pair(&self, stream: &mut RandomStream) -> [GridPath; 2] {
        let (a, b) = match self.engine {
            Engine::Circulant { .. } => self.circulant_pair(stream),
            _ => {
                let a = self.single(stream);
                (a, self.single(stream))
            }
        };
        [self.path(a), self.path(b)]
    }

    /// Path of trial `index` under `seed`: trials `2j` and `2j + 1` are the
    /// pair drawn from stream `(seed, j)`.
    pub fn trial(&self, seed: u64, index: u64) -> GridPath {
        let [a, b] = self.sample_pair(&mut RandomStream::new(seed, index / 2));
        if index % 2 == 0 {
            a
        } else {
            b
        }
    }
}

/// One path of a stationary process on the grid of `spec`.
pub fn sample_path(spec: &PathSpec, stream: &mut RandomStream) -> Result<GridPath> {
    Ok(PathSampler::new(spec)?.sample(stream))
}

/// OU path by the exact AR(1) transition.
pub fn sample_ou(spec: &PathSpec, stream: &mut RandomStream) -> Result<GridPath> {
    if spec.kind != CovarianceKind::OU {
        return Err(Error::InvalidParameter(format!("sample_ou needs the OU kind, got {}", spec.kind)));
    }
    sample_path(spec, stream)
}

/// `sqrt(1 - alpha) Y + sqrt(alpha) Z` with independent `Y` and `Z` paths on
/// the grid of `spec`; the kind in `spec` is ignored. `Y` is drawn first, so
/// `alpha = 0` reproduces [`sample_path`] for `Y` on the same stream.
pub fn sample_y_alpha(alpha: f64, spec: &PathSpec, stream: &mut RandomStream) -> Result<GridPath> {
    CovarianceKind::Alpha { alpha }.validate()?;
    let y = sample_path(&PathSpec { kind: CovarianceKind::Y, ..*spec }, stream)?;
    let z = sample_path(&PathSpec { kind: CovarianceKind::Z, ..*spec }, stream)?;
    let (a, b) = ((1.0 - alpha).sqrt(), alpha.sqrt());
    let values = y.values.iter().zip(&z.values).map(|(y, z)| a * y + b * z).collect();
    Ok(GridPath { values, dt: spec.dt })
}
