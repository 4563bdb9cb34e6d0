//! Dataset ingestion, the finite transformation set, and the two
//! augmentation policies (uniform random vs. loss-targeted).
//!
//! Conventions fixed here:
//! - Pixels are f64 in [0, 1]; every transform clamps back into that range.
//! - `rotate` uses inverse mapping with bilinear interpolation about the
//!   geometric center ((W-1)/2, (H-1)/2), zero fill outside the source grid,
//!   positive angles turning the image content clockwise. Exact multiples of
//!   90 degrees use exact integer sine/cosine so grid points map to grid
//!   points and the operation is lossless on square images.
//! - Policy entropy is reported in nats.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

/// Labeled grayscale image collection.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Matrix>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    /// Validates the invariants: matching lengths, labels below
    /// `class_count`, pixels inside [0, 1].
    pub fn new(images: Vec<Matrix>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidDataset {
                reason: format!("{} images vs {} labels", images.len(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidDataset {
                reason: format!("label {bad} >= class count {class_count}"),
            });
        }
        for (i, img) in images.iter().enumerate() {
            if img.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidDataset {
                    reason: format!("image {i} has pixels outside [0, 1]"),
                });
            }
        }
        Ok(Dataset {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &Matrix {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Pixel count per image (images share one shape in practice; this
    /// reports the first image's).
    pub fn pixels_per_image(&self) -> usize {
        self.images
            .first()
            .map(|m| m.rows() * m.cols())
            .unwrap_or(0)
    }

    /// Records `[start, end)` as a new dataset, preserving order.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if end > self.len() || start > end {
            return Err(Error::PrefixTooLong {
                requested: end,
                available: self.len(),
            });
        }
        Ok(Dataset {
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            class_count: self.class_count,
        })
    }
}

/// First `k` records in original order.
pub fn take_prefix(ds: &Dataset, k: usize) -> Result<Dataset> {
    ds.slice(0, k)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected_bytes: end,
            got_bytes: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX/ubyte image+label pair (gzip transparently detected by the
/// 0x1F8B prefix). Pixel bytes are scaled by 1/255; record order is
/// preserved; `class_count` is the highest label plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_maybe_gzip(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            path: images_path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;
    let pixel_bytes = n * rows * cols;
    if img_bytes.len() < 16 + pixel_bytes {
        return Err(Error::IdxTruncated {
            path: images_path.to_path_buf(),
            expected_bytes: 16 + pixel_bytes,
            got_bytes: img_bytes.len(),
        });
    }

    let lbl_bytes = read_maybe_gzip(labels_path)?;
    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxMagic {
            path: labels_path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let n_labels = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if lbl_bytes.len() < 8 + n_labels {
        return Err(Error::IdxTruncated {
            path: labels_path.to_path_buf(),
            expected_bytes: 8 + n_labels,
            got_bytes: lbl_bytes.len(),
        });
    }
    if n != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let start = 16 + i * rows * cols;
        let data: Vec<f64> = img_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        images.push(Matrix::from_vec(rows, cols, data)?);
    }
    let labels: Vec<usize> = lbl_bytes[8..8 + n].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map(|&m| m + 1).unwrap_or(0);
    Dataset::new(images, labels, class_count)
}

/// One augmentation transformation.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    /// Positive angles turn the image content clockwise.
    Rotate { angle_deg: f64 },
    HFlip,
    GaussNoise { std: f64 },
    Brightness { delta: f64 },
}

impl Transform {
    /// Validates parameter ranges: angle in [-180, 180], std >= 0,
    /// delta in [-1, 1].
    pub fn validate(&self) -> Result<()> {
        match *self {
            Transform::Rotate { angle_deg } => {
                if !(-180.0..=180.0).contains(&angle_deg) || angle_deg.is_nan() {
                    return Err(Error::InvalidTransform {
                        reason: format!("rotation angle {angle_deg} outside [-180, 180]"),
                    });
                }
            }
            Transform::GaussNoise { std } => {
                if !(std >= 0.0) || !std.is_finite() {
                    return Err(Error::InvalidTransform {
                        reason: format!("noise std {std} must be finite and >= 0"),
                    });
                }
            }
            Transform::Brightness { delta } => {
                if !(-1.0..=1.0).contains(&delta) || delta.is_nan() {
                    return Err(Error::InvalidTransform {
                        reason: format!("brightness delta {delta} outside [-1, 1]"),
                    });
                }
            }
            Transform::Identity | Transform::HFlip => {}
        }
        Ok(())
    }

    /// Applies the transform to one image. Noise draws come from `rng`;
    /// the other kinds are deterministic. Output pixels stay in [0, 1].
    pub fn apply(&self, img: &Matrix, rng: &mut Rng) -> Matrix {
        match *self {
            Transform::Identity => img.clone(),
            Transform::Rotate { angle_deg } => rotate(img, angle_deg),
            Transform::HFlip => hflip(img),
            Transform::GaussNoise { std } => {
                img.map_with(|v| (v + rng.normal(0.0, std)).clamp(0.0, 1.0))
            }
            Transform::Brightness { delta } => img.map(|v| (v + delta).clamp(0.0, 1.0)),
        }
    }
}

impl Matrix {
    // map() takes Fn; noise needs FnMut for the generator.
    fn map_with(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        let data: Vec<f64> = self.as_slice().iter().map(|&v| f(v)).collect();
        Matrix::from_vec(self.rows(), self.cols(), data).expect("shape preserved")
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::Rotate { angle_deg } => write!(f, "rotate:{angle_deg}"),
            Transform::HFlip => write!(f, "hflip"),
            Transform::GaussNoise { std } => write!(f, "gauss_noise:{std}"),
            Transform::Brightness { delta } => write!(f, "brightness:{delta}"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidTransform { reason };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let parse_arg = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| bad(format!("{what} needs a parameter, e.g. {what}:0.1")))?
                .parse::<f64>()
                .map_err(|e| bad(format!("{what} parameter: {e}")))
        };
        let t = match kind {
            "identity" => Transform::Identity,
            "hflip" => Transform::HFlip,
            "rotate" => Transform::Rotate {
                angle_deg: parse_arg("rotate")?,
            },
            "gauss_noise" => Transform::GaussNoise {
                std: parse_arg("gauss_noise")?,
            },
            "brightness" => Transform::Brightness {
                delta: parse_arg("brightness")?,
            },
            other => return Err(bad(format!("unknown transform kind {other:?}"))),
        };
        t.validate()?;
        Ok(t)
    }
}

/// The ordered, finite set of available transformations. Order is part of
/// the identity: policy probabilities index into it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    transforms: Vec<Transform>,
}

impl TransformSet {
    pub fn new(transforms: Vec<Transform>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::EmptyInput {
                what: "transform set",
            });
        }
        for t in &transforms {
            t.validate()?;
        }
        Ok(TransformSet { transforms })
    }

    /// The default experimental set (n = 9): identity, rotations of +/-15
    /// and +/-45 degrees, horizontal flip, gaussian noise 0.1, brightness
    /// +/-0.2. Fully overridable through configuration.
    pub fn default_set() -> Self {
        TransformSet {
            transforms: vec![
                Transform::Identity,
                Transform::Rotate { angle_deg: 15.0 },
                Transform::Rotate { angle_deg: -15.0 },
                Transform::Rotate { angle_deg: 45.0 },
                Transform::Rotate { angle_deg: -45.0 },
                Transform::HFlip,
                Transform::GaussNoise { std: 0.1 },
                Transform::Brightness { delta: 0.2 },
                Transform::Brightness { delta: -0.2 },
            ],
        }
    }

    /// Parses a comma-separated list such as
    /// `identity,rotate:45,gauss_noise:0.1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let transforms: Vec<Transform> = spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Transform::from_str)
            .collect::<Result<_>>()?;
        TransformSet::new(transforms)
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transform {
        &self.transforms[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transform> {
        self.transforms.iter()
    }

    /// True when the two sets share any transform (exact parameter match).
    pub fn overlaps(&self, other: &TransformSet) -> Option<&Transform> {
        self.transforms
            .iter()
            .find(|t| other.transforms.contains(t))
    }

    pub fn spec_string(&self) -> String {
        self.transforms
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Probabilities over a transform set, with the inverse temperature that
/// produced them (`beta = 0` for the uniform policy).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    probs: Vec<f64>,
    beta: f64,
}

impl PolicyDistribution {
    pub fn new(probs: Vec<f64>, beta: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput {
                what: "policy probabilities",
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "policy probabilities",
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                what: "policy probability sum",
                value: sum,
            });
        }
        Ok(PolicyDistribution { probs, beta })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Uniform policy: every transform gets probability 1/n.
pub fn policy_uniform(n: usize) -> Result<PolicyDistribution> {
    if n == 0 {
        return Err(Error::EmptyInput {
            what: "transform set",
        });
    }
    PolicyDistribution::new(vec![1.0 / n as f64; n], 0.0)
}

/// Loss-targeted policy: softmax of `-beta * loss`, computed with
/// max-subtraction. `beta = 0` reduces to the uniform policy.
pub fn policy_targeted(losses: &[f64], beta: f64) -> Result<PolicyDistribution> {
    if losses.is_empty() {
        return Err(Error::EmptyInput {
            what: "loss vector",
        });
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite {
            what: "policy losses",
        });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter {
            what: "beta (must be finite and >= 0)",
            value: beta,
        });
    }
    let scores: Vec<f64> = losses.iter().map(|&l| -beta * l).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    PolicyDistribution::new(exps.iter().map(|&e| e / sum).collect(), beta)
}

/// Shannon entropy in nats; zero-probability terms contribute zero.
pub fn entropy(p: &PolicyDistribution) -> f64 {
    p.probs
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| -pi * pi.ln())
        .sum()
}

/// Draws one transform index by inverse CDF using a single uniform draw.
pub fn sample_transform<'a>(
    rng: &mut Rng,
    set: &'a TransformSet,
    p: &PolicyDistribution,
) -> Result<(usize, &'a Transform)> {
    if p.len() != set.len() {
        return Err(Error::LengthMismatch {
            what: "policy probabilities vs transform set",
            expected: set.len(),
            got: p.len(),
        });
    }
    let u = rng.uniform();
    let mut cum = 0.0;
    for (i, &pi) in p.probs.iter().enumerate() {
        cum += pi;
        if u < cum {
            return Ok((i, set.get(i)));
        }
    }
    // Rounding can leave cum marginally below 1; fall back to the last index.
    let last = set.len() - 1;
    Ok((last, set.get(last)))
}

/// Rotation about the geometric center via inverse mapping with bilinear
/// interpolation; out-of-grid samples fill with zero. Output shape equals
/// input shape. Exact multiples of 90 degrees map grid points to grid
/// points and copy pixels exactly.
pub fn rotate(img: &Matrix, angle_deg: f64) -> Matrix {
    let h = img.rows();
    let w = img.cols();
    let (sin_a, cos_a) = sin_cos_deg(angle_deg);
    let cx = (w as f64 - 1.0) * 0.5;
    let cy = (h as f64 - 1.0) * 0.5;
    let max_x = w as f64 - 1.0;
    let max_y = h as f64 - 1.0;

    let mut out = Matrix::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos_a * dx + sin_a * dy + cx;
            let sy = -sin_a * dx + cos_a * dy + cy;
            if sx < 0.0 || sy < 0.0 || sx > max_x || sy > max_y {
                continue; // zero fill
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let v = img.get(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + img.get(y0, x1) * fx * (1.0 - fy)
                + img.get(y1, x0) * (1.0 - fx) * fy
                + img.get(y1, x1) * fx * fy;
            out.set(y, x, v);
        }
    }
    out
}

/// Sine/cosine of an angle in degrees, exact on multiples of 90.
fn sin_cos_deg(angle_deg: f64) -> (f64, f64) {
    let norm = angle_deg.rem_euclid(360.0);
    if norm == 0.0 {
        (0.0, 1.0)
    } else if norm == 90.0 {
        (1.0, 0.0)
    } else if norm == 180.0 {
        (0.0, -1.0)
    } else if norm == 270.0 {
        (-1.0, 0.0)
    } else {
        let r = angle_deg.to_radians();
        (r.sin(), r.cos())
    }
}

fn hflip(img: &Matrix) -> Matrix {
    let h = img.rows();
    let w = img.cols();
    let mut out = Matrix::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            out.set(y, x, img.get(y, w - 1 - x));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gauss;
    use std::io::Write;

    fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
        // Two 2x3 images, bytes written out by hand: header is magic
        // 0x00000803, count 2, rows 2, cols 3, all big-endian.
        let mut images = Vec::new();
        images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&3u32.to_be_bytes());
        images.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        images.extend_from_slice(&[255, 204, 153, 102, 51, 0]);

        let mut labels = Vec::new();
        labels.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[7, 2]);
        (images, labels)
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn load_idx_round_trips_fixture_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_count(), 8);
        assert_eq!(ds.label(0), 7);
        assert_eq!(ds.label(1), 2);
        let expected: Vec<f64> = [0u8, 51, 102, 153, 204, 255]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        assert_eq!(ds.image(0).as_slice(), expected.as_slice());
        assert_eq!(ds.image(0).rows(), 2);
        assert_eq!(ds.image(0).cols(), 3);
    }

    #[test]
    fn load_idx_gzip_detected_by_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let gz = |bytes: &[u8]| {
            let mut enc =
                flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap()
        };
        let ip = write_tmp(&dir, "img.gz", &gz(&images));
        let lp = write_tmp(&dir, "lbl.gz", &gz(&labels));
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.image(1).get(0, 0), 1.0);
    }

    #[test]
    fn load_idx_bad_label_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (images, mut labels) = idx_fixture();
        labels[3] = 0x05;
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        match load_idx(&ip, &lp) {
            Err(Error::IdxMagic { expected, got, .. }) => {
                assert_eq!(expected, 0x0000_0801);
                assert_eq!(got, 0x0000_0805);
            }
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn load_idx_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let (mut images, labels) = idx_fixture();
        images.truncate(images.len() - 3);
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::IdxTruncated { .. })
        ));
    }

    #[test]
    fn load_idx_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (images, mut labels) = idx_fixture();
        labels[7] = 3; // claim 3 labels
        labels.push(1);
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::IdxCountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn take_prefix_edges() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let ip = write_tmp(&dir, "img", &images);
        let lp = write_tmp(&dir, "lbl", &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(take_prefix(&ds, 0).unwrap().len(), 0);
        let full = take_prefix(&ds, 2).unwrap();
        assert_eq!(full.len(), 2);
        assert_eq!(full.image(0).as_slice(), ds.image(0).as_slice());
        assert!(take_prefix(&ds, 3).is_err());
    }

    fn random_image(rng: &mut Rng, h: usize, w: usize) -> Matrix {
        gauss(rng, h, w, 0.5, 0.2)
            .unwrap()
            .map(|v| v.clamp(0.0, 1.0))
    }

    #[test]
    fn rotate_zero_is_bit_identical() {
        let mut rng = Rng::from_seed(2);
        let img = random_image(&mut rng, 9, 7);
        let out = rotate(&img, 0.0);
        assert!(img
            .as_slice()
            .iter()
            .zip(out.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rotate_keeps_center_pixel_of_odd_image() {
        let mut rng = Rng::from_seed(3);
        let img = random_image(&mut rng, 9, 9);
        for angle in [13.0, 45.0, -77.0, 160.0] {
            let out = rotate(&img, angle);
            assert_eq!(out.get(4, 4), img.get(4, 4), "angle {angle}");
        }
    }

    #[test]
    fn rotate_quarter_turns_compose_to_identity_on_squares() {
        let mut rng = Rng::from_seed(4);
        for size in [8usize, 9] {
            let img = random_image(&mut rng, size, size);
            let back = rotate(&rotate(&img, 90.0), -90.0);
            assert_eq!(img.as_slice(), back.as_slice(), "size {size}");
        }
    }

    #[test]
    fn rotate_preserves_shape() {
        let img = Matrix::zeros(5, 11);
        let out = rotate(&img, 33.0);
        assert_eq!((out.rows(), out.cols()), (5, 11));
    }

    #[test]
    fn apply_identity_and_involutions() {
        let mut rng = Rng::from_seed(5);
        let img = random_image(&mut rng, 6, 6);
        let same = Transform::Identity.apply(&img, &mut rng);
        assert_eq!(same.as_slice(), img.as_slice());

        let twice = Transform::HFlip.apply(&Transform::HFlip.apply(&img, &mut rng), &mut rng);
        assert_eq!(twice.as_slice(), img.as_slice());

        let noiseless = Transform::GaussNoise { std: 0.0 }.apply(&img, &mut rng);
        assert_eq!(noiseless.as_slice(), img.as_slice());
    }

    #[test]
    fn apply_stays_in_unit_range_without_nans() {
        let mut rng = Rng::from_seed(6);
        let transforms = [
            Transform::Rotate { angle_deg: 37.0 },
            Transform::GaussNoise { std: 0.5 },
            Transform::Brightness { delta: 0.9 },
            Transform::Brightness { delta: -0.9 },
            Transform::HFlip,
        ];
        for _ in 0..20 {
            let img = random_image(&mut rng, 7, 7);
            for t in &transforms {
                let out = t.apply(&img, &mut rng);
                assert!(out
                    .as_slice()
                    .iter()
                    .all(|&v| (0.0..=1.0).contains(&v) && !v.is_nan()));
            }
        }
    }

    #[test]
    fn policy_uniform_values() {
        assert_eq!(policy_uniform(4).unwrap().probs(), &[0.25; 4]);
        assert_eq!(policy_uniform(1).unwrap().probs(), &[1.0]);
        assert_eq!(policy_uniform(8).unwrap().probs(), &[0.125; 8]);
        assert!(policy_uniform(0).is_err());
    }

    #[test]
    fn policy_targeted_beta_zero_is_uniform() {
        let p = policy_targeted(&[3.0, -1.0, 0.5], 0.0).unwrap();
        for &pi in p.probs() {
            assert_eq!(pi, 1.0 / 3.0);
        }
    }

    #[test]
    fn policy_targeted_matches_independent_softmax() {
        // losses [0, 10], beta 1: p1 = 1 / (1 + e^10) by direct arithmetic.
        let p = policy_targeted(&[0.0, 10.0], 1.0).unwrap();
        let p1 = 1.0 / (1.0 + 10.0f64.exp());
        let p0 = 1.0 - p1;
        assert!((p.probs()[0] - p0).abs() < 1e-15);
        assert!((p.probs()[1] - p1).abs() < 1e-18);
        assert!((p.probs()[1] - 4.5398e-5).abs() < 1e-8);
    }

    #[test]
    fn policy_targeted_constant_losses_uniform() {
        for beta in [0.5, 1.0, 7.0] {
            let p = policy_targeted(&[2.5; 6], beta).unwrap();
            for &pi in p.probs() {
                assert!((pi - 1.0 / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn policy_targeted_rejects_nan_loss() {
        assert!(policy_targeted(&[0.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn entropy_uniform_is_log_n() {
        let p = policy_uniform(5).unwrap();
        assert!((entropy(&p) - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_point_mass_is_zero() {
        let p = PolicyDistribution::new(vec![0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(entropy(&p), 0.0);
    }

    #[test]
    fn entropy_matches_independent_arithmetic() {
        // H for losses [0, 10], beta 1, via the direct 1/(1+e^10) route.
        let p1 = 1.0 / (1.0 + 10.0f64.exp());
        let p0 = 1.0 - p1;
        let expected = -p0 * p0.ln() - p1 * p1.ln();
        let p = policy_targeted(&[0.0, 10.0], 1.0).unwrap();
        assert!((entropy(&p) - expected).abs() < 1e-12);
        assert!((expected - 4.994e-4).abs() < 1e-7);
    }

    #[test]
    fn entropy_targeted_strictly_below_uniform() {
        let mut rng = Rng::from_seed(8);
        for _ in 0..50 {
            let n = 2 + rng.index(10);
            let losses: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
            for beta in [0.5, 1.0, 2.0, 4.0] {
                let h = entropy(&policy_targeted(&losses, beta).unwrap());
                assert!(h < (n as f64).ln(), "h={h} not below ln {n}");
            }
        }
    }

    #[test]
    fn entropy_non_increasing_in_beta() {
        let mut rng = Rng::from_seed(9);
        for _ in 0..20 {
            let n = 2 + rng.index(8);
            let losses: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
            let hs: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&b| entropy(&policy_targeted(&losses, b).unwrap()))
                .collect();
            for w in hs.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "entropy increased: {w:?}");
            }
        }
    }

    #[test]
    fn entropy_invariant_to_transform_order() {
        let losses = [0.3, 1.7, -0.4, 2.2];
        let permuted = [2.2, 0.3, -0.4, 1.7];
        let h1 = entropy(&policy_targeted(&losses, 1.5).unwrap());
        let h2 = entropy(&policy_targeted(&permuted, 1.5).unwrap());
        assert!((h1 - h2).abs() < 1e-12);
    }

    #[test]
    fn sample_transform_point_mass() {
        let set = TransformSet::default_set();
        let mut probs = vec![0.0; set.len()];
        probs[2] = 1.0;
        let p = PolicyDistribution::new(probs, 0.0).unwrap();
        let mut rng = Rng::from_seed(10);
        for _ in 0..100 {
            let (i, _) = sample_transform(&mut rng, &set, &p).unwrap();
            assert_eq!(i, 2);
        }
    }

    #[test]
    fn sample_transform_uniform_frequencies() {
        let set = TransformSet::new(vec![
            Transform::Identity,
            Transform::HFlip,
            Transform::Rotate { angle_deg: 15.0 },
            Transform::Rotate { angle_deg: -15.0 },
        ])
        .unwrap();
        let p = policy_uniform(4).unwrap();
        let mut rng = Rng::from_seed(11);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let (i, _) = sample_transform(&mut rng, &set, &p).unwrap();
            counts[i] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn sample_transform_reproducible_and_checked() {
        let set = TransformSet::default_set();
        let p = policy_uniform(set.len()).unwrap();
        let seq1: Vec<usize> = {
            let mut rng = Rng::from_seed(12);
            (0..32)
                .map(|_| sample_transform(&mut rng, &set, &p).unwrap().0)
                .collect()
        };
        let seq2: Vec<usize> = {
            let mut rng = Rng::from_seed(12);
            (0..32)
                .map(|_| sample_transform(&mut rng, &set, &p).unwrap().0)
                .collect()
        };
        assert_eq!(seq1, seq2);

        let short = policy_uniform(3).unwrap();
        assert!(sample_transform(&mut Rng::from_seed(0), &set, &short).is_err());
    }

    #[test]
    fn transform_parsing_round_trip() {
        let set = TransformSet::parse("identity,rotate:45,rotate:-15,hflip,gauss_noise:0.1,brightness:-0.2").unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(TransformSet::parse(&set.spec_string()).unwrap(), set);
        assert!(TransformSet::parse("rotate:999").is_err());
        assert!(TransformSet::parse("wibble").is_err());
        assert!(TransformSet::parse("").is_err());
    }
}
