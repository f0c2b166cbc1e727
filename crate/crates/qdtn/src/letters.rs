//! Rendered letter corpus: each glyph of the public-domain 8×8 font scaled up
//! to a binary bitmap, plus its top-bottom inversion.

use std::path::{Path, PathBuf};

use anyhow::Context;
use font8x8::{UnicodeFonts, BASIC_FONTS};
use qdtn_core::GrayImage;
use serde::{Deserialize, Serialize};

use crate::formats::write_json;
use crate::imaging::save_png;

pub const UPRIGHT: &str = "upright";
pub const INVERTED: &str = "inverted";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LetterCorpusSpec {
    pub letters: Vec<char>,
    pub size: usize,
    pub inverted: bool,
}

impl Default for LetterCorpusSpec {
    fn default() -> Self {
        Self {
            letters: default_letters(15),
            size: 64,
            inverted: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LetterImage {
    pub id: String,
    pub label: &'static str,
    pub image: GrayImage,
}

fn glyph(ch: char) -> anyhow::Result<[u8; 8]> {
    BASIC_FONTS
        .get(ch)
        .with_context(|| format!("no glyph for {ch:?}"))
}

/// Uppercase letters in alphabetical order whose glyph changes under a
/// top-bottom flip, truncated to `count`.
pub fn default_letters(count: usize) -> Vec<char> {
    ('A'..='Z')
        .filter(|&c| {
            let g = glyph(c).expect("basic latin");
            g.iter().ne(g.iter().rev())
        })
        .take(count)
        .collect()
}

/// Binary `size × size` bitmap of `ch`; `size` must be a multiple of 8.
pub fn render_letter(ch: char, size: usize) -> anyhow::Result<GrayImage> {
    anyhow::ensure!(
        size >= 8 && size.is_multiple_of(8),
        "render size {size} is not a multiple of 8"
    );
    let g = glyph(ch)?;
    let s = size / 8;
    Ok(GrayImage::from_fn(size, size, |x, y| {
        // Bit 0 of each row byte is the leftmost pixel.
        if g[y / s] >> (x / s) & 1 == 1 {
            1.0
        } else {
            0.0
        }
    })?)
}

/// Upright and inverted images, interleaved per letter.
pub fn letter_images(spec: &LetterCorpusSpec) -> anyhow::Result<Vec<LetterImage>> {
    let mut out = Vec::new();
    for &ch in &spec.letters {
        let img = render_letter(ch, spec.size)?;
        if spec.inverted {
            out.push(LetterImage {
                id: format!("{ch}_inv"),
                label: INVERTED,
                image: img.flipped_vertically(),
            });
        }
        out.push(LetterImage {
            id: ch.to_string(),
            label: UPRIGHT,
            image: img,
        });
    }
    Ok(out)
}

/// Writes the PNGs and `manifest.json` into `dir`; manifest paths are
/// relative to `dir`.
pub fn gen_letter_corpus(
    spec: &LetterCorpusSpec,
    dir: &Path,
) -> anyhow::Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    for li in letter_images(spec)? {
        let name = PathBuf::from(format!("{}.png", li.id));
        save_png(&li.image, &dir.join(&name))?;
        manifest.push(ManifestEntry {
            path: name,
            label: li.label.to_string(),
        });
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let spec = LetterCorpusSpec::default();
        assert_eq!(spec.letters.len(), 15);
        let mut sorted = spec.letters.clone();
        sorted.sort();
        assert_eq!(sorted, spec.letters);
        let imgs = letter_images(&spec).unwrap();
        assert_eq!(imgs.len(), 30);
        for pair in imgs.chunks(2) {
            assert_eq!(pair[0].image.flipped_vertically(), pair[1].image);
            assert_ne!(pair[0].image, pair[1].image);
            assert!(pair[1].image.pixels().iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn files_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = LetterCorpusSpec {
            letters: vec!['F', 'G'],
            ..LetterCorpusSpec::default()
        };
        let m = gen_letter_corpus(&spec, a.path()).unwrap();
        gen_letter_corpus(&spec, b.path()).unwrap();
        assert_eq!(m.len(), 4);
        for e in &m {
            assert_eq!(
                std::fs::read(a.path().join(&e.path)).unwrap(),
                std::fs::read(b.path().join(&e.path)).unwrap()
            );
        }
        assert!(render_letter('A', 60).is_err());
    }
}
