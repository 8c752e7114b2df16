//! Per-frame likelihoods over tree nodes: validation, the CSV file boundary
//! for external classifiers, and a nearest-centroid baseline classifier.
//!
//! Likelihood files are comma-separated UTF-8. The first row holds node
//! labels in any order; each further row is one frame, in sequence order,
//! with non-negative decimal values.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{downsample_area, QuantizedImage};
use crate::par::{self, Execution};
use crate::tree::TreeModel;

/// Minimum probability given to classes that must never be ruled out.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Non-negative distribution over tree nodes that sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodVector(Vec<f64>);

impl LikelihoodVector {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Raises every entry to at least `floor`, then renormalizes.
    pub fn floored(&self, floor: f64) -> Self {
        if self.0.iter().all(|&p| p >= floor) {
            return self.clone();
        }
        let raised: Vec<f64> = self.0.iter().map(|&p| p.max(floor)).collect();
        normalize(&raised).expect("floored vector has positive mass")
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Scales a non-negative vector to sum to one. Vectors already summing to
/// one up to rounding (1e-12) are kept bit for bit.
pub fn normalize(values: &[f64]) -> Result<LikelihoodVector> {
    if values.is_empty() {
        return Err(Error::ZeroMass);
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::LikelihoodFormat(format!("entry {bad} is not a finite non-negative number")));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroMass);
    }
    if (total - 1.0).abs() <= 1e-12 {
        return Ok(LikelihoodVector(values.to_vec()));
    }
    Ok(LikelihoodVector(values.iter().map(|v| v / total).collect()))
}

/// Rows of a comma-separated distribution table, keyed by column label.
/// A leading `frame` column, if present, is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub labels: Vec<String>,
    pub frames: Option<Vec<usize>>,
    pub rows: Vec<Vec<f64>>,
}

impl DistributionTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
        let has_frame = header.first().is_some_and(|h| h == "frame");
        let labels: Vec<String> = header.into_iter().skip(usize::from(has_frame)).collect();
        if labels.is_empty() {
            return Err(Error::LikelihoodFormat("header has no node labels".into()));
        }
        let mut frames = has_frame.then(Vec::new);
        let mut rows = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let mut cells = record.iter();
            if let Some(frames) = frames.as_mut() {
                let cell = cells.next().unwrap_or("");
                let frame = cell.parse::<usize>().map_err(|_| {
                    Error::LikelihoodFormat(format!("line {line}: bad frame number {cell:?}"))
                })?;
                frames.push(frame);
            }
            let row = cells
                .map(|cell| {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::LikelihoodFormat(format!("line {line}: non-numeric cell {cell:?}"))
                    })?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::LikelihoodFormat(format!(
                            "line {line}: value {cell} must be finite and non-negative"
                        )));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != labels.len() {
                return Err(Error::LikelihoodFormat(format!(
                    "line {line}: expected {} values, got {}",
                    labels.len(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { labels, frames, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Column permutation mapping tree node `i` to its column in this table.
    pub fn columns_for(&self, tree: &TreeModel) -> Result<Vec<usize>> {
        if self.labels.len() != tree.len() {
            return Err(Error::LikelihoodFormat(format!(
                "header has {} labels, tree has {} nodes",
                self.labels.len(),
                tree.len()
            )));
        }
        let mut seen = vec![false; tree.len()];
        for label in &self.labels {
            let idx = tree
                .index_of(label)
                .ok_or_else(|| Error::LikelihoodFormat(format!("unknown node label {label}")))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::LikelihoodFormat(format!("duplicate label {label}")));
            }
        }
        Ok(tree
            .labels()
            .iter()
            .map(|l| self.labels.iter().position(|h| h == l).expect("checked above"))
            .collect())
    }

    /// Rows reordered to tree node order, without normalization.
    pub fn rows_in_tree_order(&self, tree: &TreeModel) -> Result<Vec<Vec<f64>>> {
        let columns = self.columns_for(tree)?;
        Ok(self
            .rows
            .iter()
            .map(|row| columns.iter().map(|&c| row[c]).collect())
            .collect())
    }
}

/// Reads a likelihood table and returns one normalized vector per frame in
/// tree node order.
pub fn read_likelihoods<R: Read>(reader: R, tree: &TreeModel) -> Result<Vec<LikelihoodVector>> {
    let table = DistributionTable::read(reader)?;
    table
        .rows_in_tree_order(tree)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            normalize(row).map_err(|e| match e {
                Error::ZeroMass => Error::LikelihoodFormat(format!("frame {i}: all-zero likelihood")),
                other => other,
            })
        })
        .collect()
}

pub fn load_likelihood_file(path: impl AsRef<Path>, tree: &TreeModel) -> Result<Vec<LikelihoodVector>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_likelihoods(std::io::BufReader::new(file), tree)
}

/// Writes vectors with the tree's labels as header. Values use the shortest
/// decimal form that parses back to the same `f64`.
pub fn write_likelihoods<W: Write>(writer: W, tree: &TreeModel, rows: &[LikelihoodVector]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(tree.labels())?;
    for row in rows {
        if row.len() != tree.len() {
            return Err(Error::Dimension {
                expected: tree.len(),
                actual: row.len(),
            });
        }
        csv.write_record(row.as_slice().iter().map(f64::to_string))?;
    }
    csv.flush().map_err(|e| Error::io("<likelihood writer>", e))?;
    Ok(())
}

pub fn save_likelihood_file(path: impl AsRef<Path>, tree: &TreeModel, rows: &[LikelihoodVector]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_likelihoods(std::io::BufWriter::new(file), tree, rows)
}

/// Anything that can turn a quantized frame into a likelihood.
pub trait FrameClassifier {
    fn classify(&self, frame: &QuantizedImage) -> LikelihoodVector;
}

/// Nearest-centroid classifier over area-averaged thumbnails of quantized
/// frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    labels: Vec<String>,
    thumb_width: usize,
    thumb_height: usize,
    temperature: f64,
    /// One centroid per tree node, `None` for classes without training data.
    centroids: Vec<Option<Vec<f64>>>,
}

pub const DEFAULT_THUMB_SIZE: usize = 32;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Per-class mean of thumbnails. `frames` pairs each quantized frame with its
/// node index.
pub fn train_centroids(
    frames: &[(QuantizedImage, usize)],
    tree: &TreeModel,
    thumb_size: (usize, usize),
    temperature: f64,
    exec: Execution,
) -> Result<CentroidModel> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParam(format!("temperature must be positive, got {temperature}")));
    }
    let (tw, th) = thumb_size;
    let n = tree.len();
    if let Some((_, bad)) = frames.iter().find(|(_, label)| *label >= n) {
        return Err(Error::NodeIndex { index: *bad, n });
    }
    let thumbs = par::try_map(exec, frames, |(frame, _)| downsample_area(frame.image(), tw, th))?;

    let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; n];
    for (thumb, (_, label)) in thumbs.iter().zip(frames) {
        let (sum, count) = sums[*label].get_or_insert_with(|| (vec![0.0; tw * th], 0));
        for (s, v) in sum.iter_mut().zip(thumb) {
            *s += v;
        }
        *count += 1;
    }
    let present = sums.iter().filter(|s| s.is_some()).count();
    if present < 2 {
        return Err(Error::CentroidModel(format!(
            "need training frames for at least 2 classes, got {present}"
        )));
    }
    let centroids = sums
        .into_iter()
        .map(|entry| entry.map(|(sum, count)| sum.into_iter().map(|s| s / count as f64).collect()))
        .collect();
    Ok(CentroidModel {
        labels: tree.labels().to_vec(),
        thumb_width: tw,
        thumb_height: th,
        temperature,
        centroids,
    })
}

impl CentroidModel {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn thumb_size(&self) -> (usize, usize) {
        (self.thumb_width, self.thumb_height)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn centroid(&self, class: usize) -> Option<&[f64]> {
        self.centroids[class].as_deref()
    }

    pub fn is_absent(&self, class: usize) -> bool {
        self.centroids[class].is_none()
    }

    /// Checks that the model's classes match the tree's nodes in order.
    pub fn check_tree(&self, tree: &TreeModel) -> Result<()> {
        if self.labels != tree.labels() {
            return Err(Error::CentroidModel("class labels do not match the tree".into()));
        }
        Ok(())
    }

    /// Euclidean distance from the frame's thumbnail to each centroid
    /// (`None` for absent classes).
    pub fn distances(&self, frame: &QuantizedImage) -> Vec<Option<f64>> {
        let thumb = downsample_area(frame.image(), self.thumb_width, self.thumb_height)
            .expect("thumb size validated at construction");
        self.centroids
            .iter()
            .map(|c| {
                c.as_ref().map(|c| {
                    c.iter()
                        .zip(&thumb)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
            })
            .collect()
    }

    pub fn predict(&self, frame: &QuantizedImage) -> LikelihoodVector {
        softmax_neg_distances(&self.distances(frame), self.temperature)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("centroid-model 1\n");
        let _ = writeln!(out, "thumb {} {}", self.thumb_width, self.thumb_height);
        let _ = writeln!(out, "temperature {}", self.temperature);
        for (label, centroid) in self.labels.iter().zip(&self.centroids) {
            match centroid {
                None => {
                    let _ = writeln!(out, "class {label} absent");
                }
                Some(values) => {
                    let _ = write!(out, "class {label}");
                    for v in values {
                        let _ = write!(out, " {v}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::CentroidModel(format!("missing {what} line")))
        };
        let (_, magic) = next("header")?;
        if magic.trim() != "centroid-model 1" {
            return Err(Error::CentroidModel(format!("unrecognized header {magic:?}")));
        }
        let (line, thumb) = next("thumb")?;
        let (tw, th) = match thumb.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["thumb", w, h] => (
                w.parse::<usize>().map_err(|_| Error::parse(line + 1, "bad thumb width"))?,
                h.parse::<usize>().map_err(|_| Error::parse(line + 1, "bad thumb height"))?,
            ),
            _ => return Err(Error::parse(line + 1, "expected `thumb <w> <h>`")),
        };
        if tw == 0 || th == 0 {
            return Err(Error::CentroidModel("thumb size must be positive".into()));
        }
        let (line, temp) = next("temperature")?;
        let temperature = match temp.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["temperature", t] => t.parse::<f64>().map_err(|_| Error::parse(line + 1, "bad temperature"))?,
            _ => return Err(Error::parse(line + 1, "expected `temperature <t>`")),
        };
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::CentroidModel("temperature must be positive".into()));
        }
        let mut labels = Vec::new();
        let mut centroids = Vec::new();
        for (line, content) in lines {
            let mut tokens = content.split_whitespace();
            if tokens.next() != Some("class") {
                return Err(Error::parse(line + 1, "expected `class <label> ...`"));
            }
            let label = tokens
                .next()
                .ok_or_else(|| Error::parse(line + 1, "missing class label"))?;
            let rest: Vec<&str> = tokens.collect();
            let centroid = if rest == ["absent"] {
                None
            } else {
                let values = rest
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line + 1, format!("bad value {t:?}"))))
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != tw * th {
                    return Err(Error::parse(
                        line + 1,
                        format!("expected {} values, got {}", tw * th, values.len()),
                    ));
                }
                Some(values)
            };
            labels.push(label.to_owned());
            centroids.push(centroid);
        }
        if centroids.iter().filter(|c| c.is_some()).count() < 2 {
            return Err(Error::CentroidModel("need at least 2 trained classes".into()));
        }
        Ok(Self {
            labels,
            thumb_width: tw,
            thumb_height: th,
            temperature,
            centroids,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl FrameClassifier for CentroidModel {
    fn classify(&self, frame: &QuantizedImage) -> LikelihoodVector {
        self.predict(frame)
    }
}

/// Softmax of `-distance / temperature` over present classes; absent classes
/// get [`PROBABILITY_FLOOR`] before the final normalization.
pub fn softmax_neg_distances(distances: &[Option<f64>], temperature: f64) -> LikelihoodVector {
    let min = distances
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<Option<f64>> = distances
        .iter()
        .map(|d| d.map(|d| (-(d - min) / temperature).exp()))
        .collect();
    let total: f64 = weights.iter().flatten().sum();
    let raw: Vec<f64> = weights
        .iter()
        .map(|w| w.map_or(PROBABILITY_FLOOR, |w| w / total))
        .collect();
    normalize(&raw).expect("softmax has positive mass")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{quantize_levels, GrayImage, KMeansParams};

    fn three() -> TreeModel {
        TreeModel::parse("node TRA\nnode RMB\nnode LMB\nedge TRA RMB\nedge TRA LMB\nroot TRA").unwrap()
    }

    fn flat(value: u8) -> QuantizedImage {
        quantize_levels(&GrayImage::filled(8, 8, value).unwrap(), &KMeansParams::default()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0, 0.0]).unwrap().as_slice(), &[0.5, 0.5, 0.0]);
        assert_eq!(normalize(&[1.0]).unwrap().as_slice(), &[1.0]);
        assert!(matches!(normalize(&[0.0, 0.0, 0.0]), Err(Error::ZeroMass)));
        assert!(normalize(&[1.0, -0.5]).is_err());
        assert!(normalize(&[f64::NAN]).is_err());
    }

    #[test]
    fn floor_keeps_mass_positive() {
        let v = LikelihoodVector::one_hot(3, 1).floored(PROBABILITY_FLOOR);
        assert!(v.as_slice().iter().all(|&p| p > 0.0));
        assert_eq!(v.argmax(), 1);
    }

    #[test]
    fn read_in_tree_order() {
        let tree = three();
        let text = "TRA,RMB,LMB\n0.8,0.1,0.1\n0.2,0.7,0.1\n";
        let rows = read_likelihoods(text.as_bytes(), &tree).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].as_slice(), &[0.8, 0.1, 0.1]);
        assert_eq!(rows[1].as_slice(), &[0.2, 0.7, 0.1]);
    }

    #[test]
    fn header_permutation_reordered() {
        let tree = three();
        let rows = read_likelihoods("LMB,TRA,RMB\n0.1,0.8,0.1\n".as_bytes(), &tree).unwrap();
        assert_eq!(rows[0].as_slice(), &[0.8, 0.1, 0.1]);
    }

    #[test]
    fn malformed_files_rejected() {
        let tree = three();
        for text in [
            "TRA,RMB,LMB\n0.8,-0.1,0.1\n",
            "TRA,RMB,LMB\n0.8,abc,0.1\n",
            "TRA,RMB,XXX\n0.8,0.1,0.1\n",
            "TRA,RMB\n0.8,0.1\n",
            "TRA,RMB,RMB\n0.8,0.1,0.1\n",
            "TRA,RMB,LMB\n0,0,0\n",
        ] {
            assert!(read_likelihoods(text.as_bytes(), &tree).is_err(), "{text}");
        }
        // ragged rows are a csv-level error
        assert!(read_likelihoods("TRA,RMB,LMB\n0.8,0.1\n".as_bytes(), &tree).is_err());
    }

    #[test]
    fn write_read_write_identical() {
        let tree = three();
        let rows = vec![
            normalize(&[0.5, 0.25, 0.25]).unwrap(),
            normalize(&[0.125, 0.375, 0.5]).unwrap(),
        ];
        let mut first = Vec::new();
        write_likelihoods(&mut first, &tree, &rows).unwrap();
        let back = read_likelihoods(first.as_slice(), &tree).unwrap();
        assert_eq!(back, rows);
        let mut second = Vec::new();
        write_likelihoods(&mut second, &tree, &back).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn centroids_are_class_means() {
        let tree = three();
        let frames = vec![(flat(0), 1), (flat(100), 1), (flat(30), 0), (flat(30), 0)];
        let model = train_centroids(&frames, &tree, (4, 4), 1.0, Execution::Sequential).unwrap();
        assert!(model.centroid(1).unwrap().iter().all(|&v| v == 50.0));
        assert!(model.centroid(0).unwrap().iter().all(|&v| v == 30.0));
        assert!(model.is_absent(2));
        let p = model.predict(&flat(50));
        assert_eq!(p.argmax(), 1);
        // absent class sits at the floor
        assert!(p.as_slice()[2] > 0.0 && p.as_slice()[2] <= 1.1e-12);
    }

    #[test]
    fn training_needs_two_classes() {
        let tree = three();
        let frames = vec![(flat(0), 1), (flat(10), 1)];
        assert!(train_centroids(&frames, &tree, (4, 4), 1.0, Execution::Sequential).is_err());
        assert!(train_centroids(&[(flat(0), 7)], &tree, (4, 4), 1.0, Execution::Sequential).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_neg_distances(&[Some(1.0), Some(2.0)], 1.0);
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        assert!((p.as_slice()[0] - e1 / (e1 + e2)).abs() < 1e-15);
        assert!((p.as_slice()[0] - 0.731).abs() < 5e-4);

        let eq = softmax_neg_distances(&[Some(3.0); 4], 1.0);
        assert!(eq.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let cold = softmax_neg_distances(&[Some(5.0), Some(0.0), Some(1.0)], 1e-9);
        assert_eq!(cold.argmax(), 1);
    }

    #[test]
    fn model_text_round_trip() {
        let tree = three();
        let frames = vec![(flat(7), 0), (flat(200), 2)];
        let model = train_centroids(&frames, &tree, (3, 2), 0.5, Execution::Sequential).unwrap();
        let text = model.to_text();
        let back = CentroidModel::parse(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_text(), text);
        assert!(CentroidModel::parse("centroid-model 1\nthumb 2 2\ntemperature 1\nclass A 1 2 3\n").is_err());
    }
}
