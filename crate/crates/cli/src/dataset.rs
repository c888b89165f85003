//! On-disk dataset layout: `frame_%05d.pgm` frames plus optional `truth/`
//! masks and `contours/` files.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ijvtrack::{Contour, Frame, Mask};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

pub const TRUTH_DIR: &str = "truth";
pub const CONTOURS_DIR: &str = "contours";

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

pub fn contour_name(index: usize) -> String {
    format!("frame_{index:05}.txt")
}

/// 8-bit binary graymap bytes.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(buf)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode_pgm(width, height, pixels)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Returns `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let img = image::load(Cursor::new(bytes), ImageFormat::Pnm)
        .with_context(|| format!("decoding {}", path.display()))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw()))
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let (w, h, px) = read_pgm(path)?;
    Ok(Frame::from_u8(w, h, &px)?)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let (w, h, px) = read_pgm(path)?;
    Ok(Mask::from_u8(w, h, &px)?)
}

pub fn read_contour(path: &Path) -> Result<Contour> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Contour::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_contour(path: &Path, contour: &Contour) -> Result<()> {
    fs::write(path, contour.to_text()).with_context(|| format!("writing {}", path.display()))
}

/// Files named `frame_NNNNN.<ext>` in `dir`, checked to be numbered
/// contiguously from zero.
pub fn numbered_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(&format!(".{ext}")))
        else {
            continue;
        };
        if let Ok(i) = stem.parse::<usize>() {
            found.push((i, path));
        }
    }
    found.sort();
    for (expected, (i, path)) in found.iter().enumerate() {
        if *i != expected {
            bail!(
                "{}: numbering not contiguous from 0 (expected index {expected}, found {})",
                path.display(),
                i
            );
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// A dataset directory whose frames have been indexed but not loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<PathBuf>,
    pub width: usize,
    pub height: usize,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let frames = numbered_files(root, "pgm")?;
        if frames.is_empty() {
            bail!("{}: no frame_NNNNN.pgm files", root.display());
        }
        let first = read_frame(&frames[0])?;
        Ok(Self {
            root: root.to_path_buf(),
            frames,
            width: first.width(),
            height: first.height(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Loads frame `i`, checking it matches the dataset dimensions.
    pub fn frame(&self, i: usize) -> Result<Frame> {
        let f = read_frame(&self.frames[i])?;
        if (f.width(), f.height()) != (self.width, self.height) {
            bail!(
                "{}: size {}x{} differs from frame 0 ({}x{})",
                self.frames[i].display(),
                f.width(),
                f.height(),
                self.width,
                self.height
            );
        }
        Ok(f)
    }

    pub fn truth_dir(&self) -> PathBuf {
        self.root.join(TRUTH_DIR)
    }

    pub fn initial_contour_path(&self) -> PathBuf {
        self.root.join(CONTOURS_DIR).join(contour_name(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<u8> = (0..35).map(|i| (i * 7) as u8).collect();
        let path = dir.path().join("x.pgm");
        write_pgm(&path, 7, 5, &px).unwrap();
        assert!(fs::read(&path).unwrap().starts_with(b"P5"));
        assert_eq!(read_pgm(&path).unwrap(), (7, 5, px));
    }

    #[test]
    fn numbering_gaps_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for i in [0, 1, 3] {
            fs::write(dir.path().join(contour_name(i)), "").unwrap();
        }
        assert!(numbered_files(dir.path(), "txt").is_err());
        fs::write(dir.path().join(contour_name(2)), "").unwrap();
        assert_eq!(numbered_files(dir.path(), "txt").unwrap().len(), 4);
    }
}
