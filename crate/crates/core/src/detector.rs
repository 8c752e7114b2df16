//! Branching-point detection: darkest-pixel thresholding, connected
//! component labelling and area-filtered lumen counting.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_neighbors(count: u8) -> Result<Self> {
        match count {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParam(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }

    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Percentile (0, 100) of the intensity distribution used as threshold.
    pub intensity_percentile: f64,
    /// Minimum lumen area as a fraction (0, 1) of the image area.
    pub area_fraction: f64,
    pub connectivity: Connectivity,
    pub min_lumens_for_branch: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            intensity_percentile: 10.0,
            area_fraction: 0.01,
            connectivity: Connectivity::Eight,
            min_lumens_for_branch: 2,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_percentile > 0.0 && self.intensity_percentile < 100.0) {
            return Err(Error::InvalidParam(format!(
                "intensity percentile must be in (0, 100), got {}",
                self.intensity_percentile
            )));
        }
        if !(self.area_fraction > 0.0 && self.area_fraction < 1.0) {
            return Err(Error::InvalidParam(format!(
                "area fraction must be in (0, 1), got {}",
                self.area_fraction
            )));
        }
        Ok(())
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

/// One connected component of the mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub area: usize,
    pub bbox: BoundingBox,
    /// Row-major index of the component's first pixel.
    pub first_pixel: usize,
}

/// Connected components plus a per-pixel label raster (0 = background,
/// `i + 1` = `instances[i]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub instances: Vec<Instance>,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchDetection {
    pub threshold: u8,
    pub mask: Mask,
    pub labeling: Labeling,
    pub lumen_count: usize,
    pub is_branch: bool,
}

impl BranchDetection {
    pub fn instances(&self) -> &[Instance] {
        &self.labeling.instances
    }
}

/// Nearest-rank percentile of the pixel intensities: the value at rank
/// `ceil(p / 100 * N)` of the sorted multiset.
pub fn percentile_threshold(gray: &GrayImage, percentile: f64) -> u8 {
    let n = gray.area();
    let rank = ((percentile * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as u64;
    let hist = gray.histogram();
    let mut seen = 0;
    for (value, &count) in hist.iter().enumerate() {
        seen += count;
        if seen >= rank {
            return value as u8;
        }
    }
    255
}

/// Pixels strictly darker than the percentile threshold.
pub fn darkest_pixel_mask(gray: &GrayImage, percentile: f64) -> (u8, Mask) {
    let threshold = percentile_threshold(gray, percentile);
    let data = gray.pixels().iter().map(|&v| v < threshold).collect();
    (
        threshold,
        Mask {
            width: gray.width(),
            height: gray.height(),
            data,
        },
    )
}

/// Splits the mask into maximal connected components. Components are
/// numbered in order of their first pixel in row-major order.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> Labeling {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut instances = Vec::new();
    let mut queue = VecDeque::new();
    let offsets = connectivity.offsets();

    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = instances.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let (sx, sy) = (start % w, start / w);
        let mut bbox = BoundingBox {
            min_x: sx,
            min_y: sy,
            max_x: sx,
            max_y: sy,
        };
        let mut area = 0;
        while let Some(idx) = queue.pop_front() {
            area += 1;
            let (x, y) = (idx % w, idx / w);
            bbox.min_x = bbox.min_x.min(x);
            bbox.max_x = bbox.max_x.max(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_y = bbox.max_y.max(y);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let nidx = ny as usize * w + nx as usize;
                if mask.data[nidx] && labels[nidx] == 0 {
                    labels[nidx] = label;
                    queue.push_back(nidx);
                }
            }
        }
        instances.push(Instance {
            area,
            bbox,
            first_pixel: start,
        });
    }
    Labeling { instances, labels }
}

/// Number of instances whose area reaches `area_fraction * image_area`.
pub fn count_lumens(instances: &[Instance], image_area: usize, area_fraction: f64) -> usize {
    let min_area = area_fraction * image_area as f64;
    instances.iter().filter(|inst| inst.area as f64 >= min_area).count()
}

pub fn detect_branch(gray: &GrayImage, params: &DetectorParams) -> Result<BranchDetection> {
    params.validate()?;
    let (threshold, mask) = darkest_pixel_mask(gray, params.intensity_percentile);
    let labeling = label_components(&mask, params.connectivity);
    let lumen_count = count_lumens(&labeling.instances, gray.area(), params.area_fraction);
    Ok(BranchDetection {
        threshold,
        mask,
        labeling,
        lumen_count,
        is_branch: lumen_count >= params.min_lumens_for_branch,
    })
}
