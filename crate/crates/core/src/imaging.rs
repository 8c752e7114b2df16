//! Grayscale conversion and k-level intensity quantization.

use crate::error::{Error, Result};

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
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

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.data.len()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Applies `f` to every intensity.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != 3 * width * height {
            return Err(Error::Dimension {
                expected: 3 * width * height,
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

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }
}

/// ITU-R BT.601 luma, rounded half up. Computed in integer thousandths so
/// the rounding is exact.
pub fn to_grayscale(rgb: &RgbImage) -> GrayImage {
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|px| {
            let weighted = 299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2]);
            ((weighted + 500) / 1000) as u8
        })
        .collect();
    GrayImage {
        width: rgb.width,
        height: rgb.height,
        data,
    }
}

/// Image whose pixels take only the values in `levels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    image: GrayImage,
    levels: Vec<u8>,
}

impl QuantizedImage {
    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn into_image(self) -> GrayImage {
        self.image
    }

    /// Centroid intensities, ascending.
    pub fn levels(&self) -> &[u8] {
        &self.levels
    }
}

/// How the 1-D k-means centroids are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KMeansInit {
    /// Exact optimum of the k-means objective over the intensity histogram,
    /// found by dynamic programming over contiguous intensity ranges. Lloyd
    /// iterations then start from a fixed point.
    #[default]
    Optimal,
    /// Centroids at the `(2r + 1) / 2k` nearest-rank quantiles, `r = 0..k`.
    /// Reaches a local optimum only.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves by `tol` or more.
    pub tol: f64,
    pub init: KMeansInit,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 5,
            max_iter: 50,
            tol: 1e-6,
            init: KMeansInit::Optimal,
        }
    }
}

impl KMeansParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

/// Result of 1-D Lloyd's k-means over an intensity histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Non-empty cluster centroids, ascending.
    pub centroids: Vec<f64>,
    /// For each intensity 0..=255, the index into `centroids` it maps to.
    pub assignment: [u8; 256],
    /// Sum of squared deviations after each centroid update; the first
    /// entry is for the initial assignment.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

/// Weighted sums over a histogram range, used for exact cluster costs.
struct Moments {
    count: Vec<u128>,
    sum: Vec<u128>,
    sum_sq: Vec<u128>,
}

impl Moments {
    fn new(values: &[u8], weights: &[u64]) -> Self {
        let len = values.len();
        let mut m = Moments {
            count: vec![0; len + 1],
            sum: vec![0; len + 1],
            sum_sq: vec![0; len + 1],
        };
        for i in 0..len {
            let v = u128::from(values[i]);
            let w = u128::from(weights[i]);
            m.count[i + 1] = m.count[i] + w;
            m.sum[i + 1] = m.sum[i] + w * v;
            m.sum_sq[i + 1] = m.sum_sq[i] + w * v * v;
        }
        m
    }

    /// Squared deviation of values[a..b] from their mean.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let w = self.count[b] - self.count[a];
        if w == 0 {
            return 0.0;
        }
        let s = self.sum[b] - self.sum[a];
        let s2 = self.sum_sq[b] - self.sum_sq[a];
        // w * s2 - s^2 is exact in integers
        (w * s2 - s * s) as f64 / w as f64
    }

    fn mean(&self, a: usize, b: usize) -> f64 {
        (self.sum[b] - self.sum[a]) as f64 / (self.count[b] - self.count[a]) as f64
    }
}

/// Lloyd's k-means over the distinct intensities of `hist`.
///
/// Empty clusters are dropped, so fewer than `k` centroids come back when the
/// data has fewer than `k` distinct values.
pub fn kmeans_1d(hist: &[u64; 256], params: &KMeansParams) -> Result<KMeansFit> {
    if params.k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    let values: Vec<u8> = (0..=255u8).filter(|&v| hist[v as usize] > 0).collect();
    if values.is_empty() {
        return Err(Error::EmptyImage);
    }
    let weights: Vec<u64> = values.iter().map(|&v| hist[v as usize]).collect();
    let moments = Moments::new(&values, &weights);

    let mut centroids = if values.len() <= params.k {
        values.iter().map(|&v| f64::from(v)).collect()
    } else {
        match params.init {
            KMeansInit::Optimal => optimal_centroids(&values, &moments, params.k),
            KMeansInit::Quantile => quantile_centroids(&values, &weights, params.k),
        }
    };

    let mut labels = assign(&values, &centroids);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        // update step over contiguous runs of equal labels
        let mut next = Vec::with_capacity(centroids.len());
        let mut objective = 0.0;
        let mut start = 0;
        while start < values.len() {
            let mut end = start + 1;
            while end < values.len() && labels[end] == labels[start] {
                end += 1;
            }
            next.push(moments.mean(start, end));
            objective += moments.cost(start, end);
            start = end;
        }
        trace.push(objective);

        let moved = next.len() != centroids.len()
            || next
                .iter()
                .zip(&centroids)
                .any(|(a, b)| (a - b).abs() >= params.tol);
        centroids = next;
        if !moved || iterations >= params.max_iter {
            break;
        }
        iterations += 1;
        let relabeled = assign(&values, &centroids);
        if relabeled == labels {
            break;
        }
        labels = relabeled;
    }

    let mut assignment = [0u8; 256];
    // intensities absent from the histogram snap to the nearest centroid
    for v in 0..=255u8 {
        assignment[v as usize] = nearest(&centroids, f64::from(v)) as u8;
    }
    for (&v, &l) in values.iter().zip(&labels) {
        assignment[v as usize] = l as u8;
    }
    Ok(KMeansFit {
        centroids,
        assignment,
        objective_trace: trace,
        iterations,
    })
}

fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        if (v - c).abs() < (v - centroids[best]).abs() {
            best = i;
        }
    }
    best
}

/// Nearest-centroid labels for sorted values, renumbered so that only
/// non-empty clusters get consecutive indices.
fn assign(values: &[u8], centroids: &[f64]) -> Vec<usize> {
    let raw: Vec<usize> = values.iter().map(|&v| nearest(centroids, f64::from(v))).collect();
    let mut labels = Vec::with_capacity(raw.len());
    let mut next = 0;
    for (i, &r) in raw.iter().enumerate() {
        if i > 0 && r != raw[i - 1] {
            next += 1;
        }
        labels.push(next);
    }
    labels
}

fn quantile_centroids(values: &[u8], weights: &[u64], k: usize) -> Vec<f64> {
    let total: u64 = weights.iter().sum();
    let mut centroids: Vec<f64> = (0..k)
        .map(|r| {
            // nearest rank of quantile (2r+1)/(2k): ceil(total * (2r+1) / (2k))
            let num = total as u128 * (2 * r as u128 + 1);
            let den = 2 * k as u128;
            let rank = num.div_ceil(den).max(1) as u64;
            let mut seen = 0;
            for (&v, &w) in values.iter().zip(weights) {
                seen += w;
                if seen >= rank {
                    return f64::from(v);
                }
            }
            f64::from(*values.last().unwrap())
        })
        .collect();
    centroids.dedup();
    centroids
}

/// Globally optimal partition of the sorted values into `k` contiguous
/// groups; returns the group means.
fn optimal_centroids(values: &[u8], moments: &Moments, k: usize) -> Vec<f64> {
    let len = values.len();
    // best[c][i]: min cost of splitting values[..i] into c groups
    let mut best = vec![vec![f64::INFINITY; len + 1]; k + 1];
    let mut split = vec![vec![0usize; len + 1]; k + 1];
    best[0][0] = 0.0;
    for c in 1..=k {
        for i in c..=len {
            for j in (c - 1)..i {
                let candidate = best[c - 1][j] + moments.cost(j, i);
                if candidate < best[c][i] {
                    best[c][i] = candidate;
                    split[c][i] = j;
                }
            }
        }
    }
    let mut bounds = vec![len];
    let mut i = len;
    for c in (1..=k).rev() {
        i = split[c][i];
        bounds.push(i);
    }
    bounds.reverse();
    bounds.windows(2).map(|w| moments.mean(w[0], w[1])).collect()
}

/// Replaces each pixel by its cluster centroid, rounded half up.
pub fn quantize_levels(gray: &GrayImage, params: &KMeansParams) -> Result<QuantizedImage> {
    let fit = kmeans_1d(&gray.histogram(), params)?;
    Ok(apply_fit(gray, &fit))
}

pub fn apply_fit(gray: &GrayImage, fit: &KMeansFit) -> QuantizedImage {
    let rounded: Vec<u8> = fit
        .centroids
        .iter()
        .map(|c| (c + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    let mut lut = [0u8; 256];
    for v in 0..256 {
        lut[v] = rounded[fit.assignment[v] as usize];
    }
    let image = gray.map(|v| lut[v as usize]);
    let mut levels = rounded;
    levels.dedup();
    QuantizedImage { image, levels }
}

/// Area-averaged downsample to `width` x `height`. Each output pixel is the
/// overlap-weighted mean of the source pixels it covers.
pub fn downsample_area(gray: &GrayImage, width: usize, height: usize) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParam("thumbnail size must be positive".into()));
    }
    let x_weights = axis_weights(gray.width, width);
    let y_weights = axis_weights(gray.height, height);
    let mut out = vec![0.0; width * height];
    for (oy, ys) in y_weights.iter().enumerate() {
        for (ox, xs) in x_weights.iter().enumerate() {
            let mut acc = 0.0;
            for &(sy, wy) in ys {
                for &(sx, wx) in xs {
                    acc += wy * wx * f64::from(gray.get(sx, sy));
                }
            }
            out[oy * width + ox] = acc;
        }
    }
    Ok(out)
}

/// For each output cell, the source indices it overlaps with normalized
/// overlap weights.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}
