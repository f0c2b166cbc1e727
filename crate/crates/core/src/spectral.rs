//! Image-to-density-matrix transform: box downsampling, rearrangement of a
//! real image's Fourier spectrum into conjugate-symmetric layout, and the
//! Gram-matrix normalization.
//!
//! The 2D DFT itself lives with the IO layer; everything here is pure
//! arithmetic on matrices that are already in memory.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::linalg::{ComplexMatrix, C64};
use crate::state::{qubits_for_dim, validate_density, DensityMatrix};

/// Absolute tolerance for matching conjugate partners.
pub const PAIR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    /// Row-major, values in `[0, 1]`.
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> CoreResult<Self> {
        if pixels.len() != width * height {
            return Err(CoreError::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CoreError::InvalidArgument(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> CoreResult<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Top-bottom mirror image.
    pub fn flipped_vertically(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in (0..self.height).rev() {
            pixels.extend_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// Overlap of source cell `[i, i+1)` with target cell `j` scaled to source
/// coordinates `[j·s, (j+1)·s)`.
fn overlap(i: usize, j: usize, s: f64) -> f64 {
    let lo = (j as f64 * s).max(i as f64);
    let hi = ((j + 1) as f64 * s).min((i + 1) as f64);
    (hi - lo).max(0.0)
}

/// Area-weighted box filter down to `2^n × 2^n`.
pub fn downsample(img: &GrayImage, n: usize) -> CoreResult<GrayImage> {
    let m = 1usize << n;
    if img.width < m || img.height < m {
        return Err(CoreError::SourceTooSmall {
            width: img.width,
            height: img.height,
            target: m,
        });
    }
    if img.width == m && img.height == m {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / m as f64;
    let sy = img.height as f64 / m as f64;
    let mut pixels = vec![0.0; m * m];
    for ty in 0..m {
        let y0 = (ty as f64 * sy).floor() as usize;
        let y1 = (((ty + 1) as f64 * sy).ceil() as usize).min(img.height);
        for tx in 0..m {
            let x0 = (tx as f64 * sx).floor() as usize;
            let x1 = (((tx + 1) as f64 * sx).ceil() as usize).min(img.width);
            let mut acc = 0.0;
            for y in y0..y1 {
                let wy = overlap(y, ty, sy);
                for x in x0..x1 {
                    acc += wy * overlap(x, tx, sx) * img.get(x, y);
                }
            }
            pixels[ty * m + tx] = (acc / (sx * sy)).clamp(0.0, 1.0);
        }
    }
    GrayImage::new(m, m, pixels)
}

/// `F[(M−k) mod M, (M−l) mod M]`, the conjugate partner position of `(k, l)`
/// in the spectrum of a real image.
pub fn mirror_index(m: usize, k: usize, l: usize) -> (usize, usize) {
    ((m - k) % m, (m - l) % m)
}

/// Averages every entry with the conjugate of its mirror so the spectrum of
/// a real image is conjugate-symmetric to the last bit.
pub fn symmetrize_spectrum(spec: &ComplexMatrix) -> ComplexMatrix {
    let m = spec.dim();
    ComplexMatrix::from_fn(m, |k, l| {
        let (mk, ml) = mirror_index(m, k, l);
        let v = (spec[(k, l)] + spec[(mk, ml)].conj()) * 0.5;
        if (mk, ml) == (k, l) {
            C64::new(v.re, 0.0)
        } else {
            v
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapKind {
    /// A real entry moved onto the diagonal.
    RealToDiagonal,
    /// A member of a complex conjugate pair moved onto the diagonal.
    PairToDiagonal,
    /// A conjugate partner moved to the mirrored off-diagonal position.
    MirrorPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub kind: SwapKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermitizedMatrix {
    pub matrix: ComplexMatrix,
    pub swap_log: Vec<Swap>,
}

impl HermitizedMatrix {
    /// Undoes the rearrangement.
    pub fn unhermitize(&self) -> ComplexMatrix {
        let mut m = self.matrix.clone();
        for s in self.swap_log.iter().rev() {
            swap_entries(&mut m, s.a, s.b);
        }
        m
    }

    /// `max |h_ij − conj(h_ji)|` over off-diagonal entries.
    pub fn off_diagonal_defect(&self) -> f64 {
        let m = &self.matrix;
        let d = m.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest imaginary part left on the diagonal.
    pub fn diagonal_imaginary_defect(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }
}

fn swap_entries(m: &mut ComplexMatrix, a: (usize, usize), b: (usize, usize)) {
    let t = m[a];
    m[a] = m[b];
    m[b] = t;
}

fn close(a: C64, b: C64) -> bool {
    (a - b).norm() <= PAIR_TOL
}

fn is_real(z: C64) -> bool {
    z.im.abs() <= PAIR_TOL
}

/// Rearranges entries so off-diagonal entries sit opposite their conjugate
/// partners.
///
/// Reals already on the diagonal stay, off-diagonal reals without an equal
/// partner join them, and any slots left are filled with pairs of equal
/// reals and then whole conjugate pairs with the smallest real part. An
/// already Hermitian input is returned unchanged. The remaining off-diagonal
/// entries are matched to their partners by a row-major scan of the upper
/// triangle.
pub fn hermitize(spec: &ComplexMatrix) -> CoreResult<HermitizedMatrix> {
    let m = spec.dim();
    let pos = |idx: usize| (idx / m, idx % m);
    let on_diag = |idx: usize| idx / m == idx % m;
    let entries = spec.as_slice();

    let mut matched = vec![false; m * m];
    let mut complex_pairs: Vec<[usize; 2]> = Vec::new();
    for a in 0..m * m {
        if matched[a] || is_real(entries[a]) {
            continue;
        }
        matched[a] = true;
        let target = entries[a].conj();
        let (r, c) = pos(a);
        let mirror = c * m + r;
        let partner = if !matched[mirror] && close(entries[mirror], target) {
            Some(mirror)
        } else {
            (0..m * m).find(|&b| !matched[b] && close(entries[b], target))
        };
        match partner {
            Some(b) => {
                matched[b] = true;
                complex_pairs.push([a, b]);
            }
            None => return Err(CoreError::UnpairableEntry { row: r, col: c }),
        }
    }

    // Reals already on the diagonal stay there unless space is needed.
    let mut diag_reals: Vec<usize> = (0..m)
        .map(|d| d * m + d)
        .filter(|&i| is_real(entries[i]))
        .collect();
    for &i in &diag_reals {
        matched[i] = true;
    }

    // Off-diagonal reals need an equal partner; leftovers must go on the diagonal.
    let mut real_pairs: Vec<[usize; 2]> = Vec::new();
    let mut off_singles: Vec<usize> = Vec::new();
    for a in 0..m * m {
        if matched[a] {
            continue;
        }
        matched[a] = true;
        let partner = (a + 1..m * m).find(|&b| !matched[b] && close(entries[a], entries[b]));
        match partner {
            Some(b) => {
                matched[b] = true;
                real_pairs.push([a, b]);
            }
            None => off_singles.push(a),
        }
    }

    // Make room by moving equal diagonal reals off the diagonal in pairs.
    let mut evicted: Vec<[usize; 2]> = Vec::new();
    while diag_reals.len() + off_singles.len() > m {
        let found = (0..diag_reals.len()).find_map(|x| {
            (x + 1..diag_reals.len())
                .find(|&y| close(entries[diag_reals[x]], entries[diag_reals[y]]))
                .map(|y| (x, y))
        });
        match found {
            Some((x, y)) => {
                evicted.push([diag_reals[x], diag_reals[y]]);
                diag_reals.remove(y);
                diag_reals.remove(x);
            }
            None => {
                let (r, c) = pos(off_singles[0]);
                return Err(CoreError::UnpairableEntry { row: r, col: c });
            }
        }
    }
    let mut chosen: Vec<(usize, SwapKind)> = diag_reals
        .iter()
        .chain(off_singles.iter())
        .map(|&i| (i, SwapKind::RealToDiagonal))
        .collect();
    real_pairs.extend(evicted);
    // Fill the remaining slots with whole pairs.
    let mut off_pairs: Vec<[usize; 2]> = Vec::new();
    for p in real_pairs {
        if m - chosen.len() >= 2 {
            chosen.push((p[0], SwapKind::RealToDiagonal));
            chosen.push((p[1], SwapKind::RealToDiagonal));
        } else {
            off_pairs.push(p);
        }
    }
    complex_pairs.sort_by(|a, b| {
        entries[a[0]]
            .re
            .abs()
            .total_cmp(&entries[b[0]].re.abs())
            .then(a[0].cmp(&b[0]))
    });
    for p in complex_pairs {
        if m - chosen.len() >= 2 {
            chosen.push((p[0], SwapKind::PairToDiagonal));
            chosen.push((p[1], SwapKind::PairToDiagonal));
        } else {
            off_pairs.push(p);
        }
    }
    if chosen.len() != m {
        // An odd slot count would strand one member of a pair.
        let p = off_pairs.first().map_or(0, |p| p[0]);
        let (r, c) = pos(p);
        return Err(CoreError::UnpairableEntry { row: r, col: c });
    }
    // Realize the diagonal by swaps; `loc[e]` tracks where original entry e is.
    let mut mat = spec.clone();
    let mut loc: Vec<usize> = (0..m * m).collect();
    let mut at: Vec<usize> = (0..m * m).collect();
    let mut log = Vec::new();
    let chosen_set: Vec<bool> = {
        let mut v = vec![false; m * m];
        for &(e, _) in &chosen {
            v[e] = true;
        }
        v
    };
    let free: Vec<usize> = (0..m)
        .map(|d| d * m + d)
        .filter(|&slot| !chosen_set[at[slot]])
        .collect();
    let mut free_slots = free.into_iter();
    for &(e, kind) in &chosen {
        if on_diag(loc[e]) {
            continue;
        }
        let slot = free_slots
            .next()
            .expect("diagonal slot count matches chosen entries");
        let from = loc[e];
        swap_entries(&mut mat, pos(from), pos(slot));
        let displaced = at[slot];
        at.swap(from, slot);
        loc[e] = slot;
        loc[displaced] = from;
        log.push(Swap {
            a: pos(from),
            b: pos(slot),
            kind,
        });
    }

    // Mirror pairs across the diagonal.
    let mut resolved = vec![false; m * m];
    for i in 0..m {
        resolved[i * m + i] = true;
    }
    for i in 0..m {
        for j in i + 1..m {
            let here = i * m + j;
            if resolved[here] {
                continue;
            }
            let want = mat[(i, j)].conj();
            let mirror = j * m + i;
            resolved[here] = true;
            if close(mat[(j, i)], want) {
                resolved[mirror] = true;
                continue;
            }
            let found =
                (0..m * m).find(|&b| !resolved[b] && b != mirror && close(mat.as_slice()[b], want));
            match found {
                Some(b) => {
                    swap_entries(&mut mat, pos(b), (j, i));
                    log.push(Swap {
                        a: pos(b),
                        b: (j, i),
                        kind: SwapKind::MirrorPair,
                    });
                    resolved[mirror] = true;
                }
                None => return Err(CoreError::UnpairableEntry { row: i, col: j }),
            }
        }
    }
    Ok(HermitizedMatrix {
        matrix: mat,
        swap_log: log,
    })
}

/// `A†A / tr(A†A)`, assembled on the upper triangle and mirrored.
pub fn to_density(h: &HermitizedMatrix) -> CoreResult<DensityMatrix> {
    gram_density(&h.matrix)
}

pub fn gram_density(a: &ComplexMatrix) -> CoreResult<DensityMatrix> {
    let d = a.dim();
    qubits_for_dim(d)?;
    let mut g = ComplexMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += a[(k, i)].conj() * a[(k, j)];
            }
            if i == j {
                g[(i, i)] = C64::new(acc.re, 0.0);
            } else {
                g[(i, j)] = acc;
                g[(j, i)] = acc.conj();
            }
        }
    }
    let tr: f64 = (0..d).map(|i| g[(i, i)].re).sum();
    if !(tr > 0.0) {
        return Err(CoreError::ZeroMatrix);
    }
    validate_density(g.scale_real(1.0 / tr))
}

/// Entries sorted by `(re, im)`; two matrices hold the same values iff
/// these agree.
pub fn sorted_entries(m: &ComplexMatrix) -> Vec<C64> {
    let mut v = m.as_slice().to_vec();
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}
