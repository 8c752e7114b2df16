//! Frame files, posterior streams and detector overlays.
//!
//! A sequence directory holds one image per frame, named with a zero-padded
//! frame number (`frame_00000.pgm`, `frame_00001.pgm`, ...). Binary PGM (P5)
//! and 8-bit PNG (gray or RGB) are accepted.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::detector::BranchDetection;
use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, GrayImage, RgbImage};
use crate::tree::TreeModel;

pub fn frame_file_name(index: usize, extension: &str) -> String {
    format!("frame_{index:05}.{extension}")
}

/// Frame files in `dir`, ordered by the number embedded in their names.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("pgm" | "png")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let number = digits.parse::<u64>().ok();
        frames.push((number, path));
    }
    if frames.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Reads a frame as grayscale; RGB input goes through [`to_grayscale`].
pub fn read_frame(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(gray) => GrayImage::new(w, h, gray.into_raw()),
        other => {
            let rgb = RgbImage::new(w, h, other.into_rgb8().into_raw())?;
            Ok(to_grayscale(&rgb))
        }
    }
}

/// Writes a binary PGM (P5) for `.pgm` paths, otherwise by extension.
pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
        return encoder
            .write_image(img.pixels(), img.width() as u32, img.height() as u32, ExtendedColorType::L8)
            .map_err(image_err);
    }
    let buffer = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("dimensions match");
    buffer.save(path).map_err(image_err)
}

fn write_rgb(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buffer = image::RgbImage::from_raw(width as u32, height as u32, data).expect("dimensions match");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn instance_color(label: u32) -> [u8; 3] {
    // golden-angle hue walk keeps neighbouring labels distinct
    let hue = (f64::from(label) * 137.507_764).rem_euclid(360.0);
    let c = 200.0;
    let x = c * (1.0 - ((hue / 60.0).rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r as u8 + 40, g as u8 + 40, b as u8 + 40]
}

/// Three panels side by side: input, darkest-pixel mask in red, and
/// connected components in per-instance colors. Components below the area
/// threshold are drawn in gray.
pub fn render_overlay(gray: &GrayImage, detection: &BranchDetection, min_area: f64) -> (usize, usize, Vec<u8>) {
    let (w, h) = (gray.width(), gray.height());
    let out_w = 3 * w;
    let mut data = vec![0u8; out_w * h * 3];
    let labels = &detection.labeling.labels;
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let v = gray.pixels()[idx];
            let put = |data: &mut [u8], panel: usize, rgb: [u8; 3]| {
                let o = (y * out_w + panel * w + x) * 3;
                data[o..o + 3].copy_from_slice(&rgb);
            };
            put(&mut data, 0, [v, v, v]);
            put(
                &mut data,
                1,
                if detection.mask.as_slice()[idx] { [255, 0, 0] } else { [v, v, v] },
            );
            let label = labels[idx];
            let color = if label == 0 {
                [0, 0, 0]
            } else if detection.labeling.instances[label as usize - 1].area as f64 >= min_area {
                instance_color(label)
            } else {
                [90, 90, 90]
            };
            put(&mut data, 2, color);
        }
    }
    (out_w, h, data)
}

pub fn write_overlay(path: impl AsRef<Path>, gray: &GrayImage, detection: &BranchDetection, min_area: f64) -> Result<()> {
    let (w, h, data) = render_overlay(gray, detection, min_area);
    write_rgb(path.as_ref(), w, h, data)
}

/// Incremental writer for per-frame posteriors: a `frame,<labels>` header,
/// then one row per frame, flushed as it is written.
pub struct PosteriorWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PosteriorWriter<W> {
    pub fn new(writer: W, tree: &TreeModel) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        let mut header = vec!["frame".to_owned()];
        header.extend(tree.labels().iter().cloned());
        inner.write_record(&header)?;
        Ok(Self { inner })
    }

    pub fn write_row(&mut self, frame: usize, probs: &[f64]) -> Result<()> {
        let mut record = Vec::with_capacity(probs.len() + 1);
        record.push(frame.to_string());
        record.extend(probs.iter().map(f64::to_string));
        self.inner.write_record(&record)?;
        self.inner.flush().map_err(|e| Error::io("<posterior writer>", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<posterior writer>", e.into_error()))
    }
}
