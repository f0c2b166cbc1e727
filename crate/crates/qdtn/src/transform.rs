//! Image → density matrix pipeline on top of the core spectral routines.

use std::path::{Path, PathBuf};

use qdtn_core::spectral::{downsample, hermitize, symmetrize_spectrum, to_density, GrayImage};
use qdtn_core::{ComplexMatrix, CoreError, CoreResult, DensityMatrix, C64};
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};

use crate::formats::{read_density, write_density};

fn fft_rows(data: &mut [C64], m: usize, fft: &dyn Fft<f64>) {
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
}

fn transpose(data: &[C64], m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for j in 0..m {
            out[j * m + i] = data[i * m + j];
        }
    }
    out
}

fn fft2(mut data: Vec<C64>, m: usize, inverse: bool) -> Vec<C64> {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    fft_rows(&mut data, m, fft.as_ref());
    let mut t = transpose(&data, m);
    fft_rows(&mut t, m, fft.as_ref());
    transpose(&t, m)
}

/// Unnormalized 2D DFT, `F[k, l] = Σ_{y,x} I[y, x] e^{−2πi(ky + lx)/M}`.
pub fn dft2(img: &GrayImage) -> CoreResult<ComplexMatrix> {
    let m = img.width();
    if m != img.height() || !m.is_power_of_two() {
        return Err(CoreError::InvalidArgument(format!(
            "dft2 needs a square power-of-two image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let data = img.pixels().iter().map(|&p| C64::new(p, 0.0)).collect();
    Ok(ComplexMatrix::from_row_major(fft2(data, m, false)).expect("square"))
}

/// Inverse of [`dft2`] including the `1/M²` factor.
pub fn idft2(spec: &ComplexMatrix) -> ComplexMatrix {
    let m = spec.dim();
    let scale = 1.0 / (m * m) as f64;
    let out = fft2(spec.as_slice().to_vec(), m, true);
    ComplexMatrix::from_row_major(out.into_iter().map(|z| z * scale).collect()).expect("square")
}

/// Downsample, transform, rearrange and normalize into an `n`-qubit state.
pub fn image_to_state(img: &GrayImage, n: usize) -> CoreResult<DensityMatrix> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("need at least one qubit".into()));
    }
    let small = downsample(img, n)?;
    let spec = symmetrize_spectrum(&dft2(&small)?);
    to_density(&hermitize(&spec)?)
}

/// Transformed states on disk, keyed by the source bytes and qubit count.
#[derive(Clone, Debug)]
pub struct StateCache {
    dir: PathBuf,
}

impl StateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(bytes: &[u8], n: usize) -> String {
        format!("{}-n{n}", hex::encode(Sha256::digest(bytes)))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Cached state for `bytes`, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        bytes: &[u8],
        n: usize,
        compute: impl FnOnce() -> anyhow::Result<DensityMatrix>,
    ) -> anyhow::Result<DensityMatrix> {
        let path = self.path(&Self::key(bytes, n));
        if path.exists() {
            return read_density(&path);
        }
        let rho = compute()?;
        std::fs::create_dir_all(&self.dir)?;
        write_density(&path, &rho)?;
        Ok(rho)
    }
}

/// Loads an image file and transforms it, going through `cache` if given.
pub fn file_to_state(
    path: &Path,
    n: usize,
    cache: Option<&StateCache>,
) -> anyhow::Result<DensityMatrix> {
    let bytes = std::fs::read(path)?;
    let compute = || -> anyhow::Result<DensityMatrix> {
        let img = crate::imaging::decode_gray(&bytes)?;
        Ok(image_to_state(&img, n)?)
    };
    match cache {
        Some(c) => c.get_or_compute(&bytes, n, compute),
        None => compute(),
    }
}
