//! Seeded synthetic digit-like glyphs, the fallback dataset when no IDX
//! files are available.
//!
//! Each class is a fixed set of polyline strokes in the unit square,
//! rendered as 28x28 grayscale through a gaussian distance field. Per-sample
//! jitter (rotation, translation, scale, stroke width, pixel noise) gives
//! intra-class variation so the classification task is learnable but not
//! trivially memorizable, and rotations of the rendered glyphs behave like
//! rotations of handwritten digits.

use crate::data_aug::Dataset;
use crate::numerics::{Matrix, Rng};

const SIDE: usize = 28;
const CLASSES: usize = 10;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, points: usize) -> Stroke {
    (0..=points)
        .map(|i| {
            let t = i as f64 / points as f64 * std::f64::consts::TAU;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Quarter turn of a stroke set: content point (x, y) -> (y, 1 - x). A
/// glyph built this way from another class is that class seen 90 degrees
/// away, so rotating the dataset far enough makes the two collide.
fn quarter_turn(strokes: Vec<Stroke>) -> Vec<Stroke> {
    strokes
        .into_iter()
        .map(|s| s.into_iter().map(|(x, y)| (y, 1.0 - x)).collect())
        .collect()
}

// Shapes are deliberately chiral (no mirror symmetry), and three class
// pairs are exact quarter-turn twins of each other: 7 of 1, 5 of 2, and
// 9 of 6. Twins stay separable inside any single rotation view, but views
// 90 degrees apart overlap across classes, which is what makes distant
// rotations genuinely contradictory rather than merely unfamiliar.
fn glyph_strokes(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![
            ellipse(0.5, 0.5, 0.20, 0.30, 14),
            vec![(0.40, 0.72), (0.60, 0.28)], // slash
        ],
        1 => vec![
            vec![(0.38, 0.30), (0.52, 0.15), (0.52, 0.85)],
            vec![(0.44, 0.85), (0.70, 0.85)],
        ],
        2 => vec![vec![
            (0.32, 0.30),
            (0.38, 0.20),
            (0.50, 0.16),
            (0.62, 0.20),
            (0.68, 0.30),
            (0.32, 0.84),
            (0.70, 0.84),
        ]],
        3 => vec![vec![
            (0.34, 0.22),
            (0.46, 0.16),
            (0.60, 0.20),
            (0.64, 0.30),
            (0.58, 0.42),
            (0.46, 0.48),
            (0.60, 0.54),
            (0.66, 0.66),
            (0.58, 0.80),
            (0.42, 0.84),
            (0.32, 0.76),
        ]],
        4 => vec![
            vec![(0.58, 0.15), (0.30, 0.62), (0.74, 0.62)],
            vec![(0.60, 0.40), (0.60, 0.85)],
        ],
        5 => quarter_turn(glyph_strokes(2)),
        6 => vec![
            vec![(0.62, 0.16), (0.44, 0.28), (0.35, 0.48), (0.34, 0.68)],
            ellipse(0.48, 0.67, 0.14, 0.16, 10),
        ],
        7 => quarter_turn(glyph_strokes(1)),
        8 => vec![
            ellipse(0.44, 0.32, 0.13, 0.15, 10),
            ellipse(0.57, 0.66, 0.16, 0.18, 10),
        ],
        9 => quarter_turn(glyph_strokes(6)),
        _ => unreachable!("class < 10"),
    }
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ax, ay) = a;
    let (bx, by) = b;
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let cx = ax + t * dx;
    let cy = ay + t * dy;
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

fn render(strokes: &[Stroke], width: f64, noise: f64, rng: &mut Rng) -> Matrix {
    let mut img = Matrix::zeros(SIDE, SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let px = (x as f64 + 0.5) / SIDE as f64;
            let py = (y as f64 + 0.5) / SIDE as f64;
            let mut d = f64::INFINITY;
            for stroke in strokes {
                for seg in stroke.windows(2) {
                    d = d.min(dist_to_segment(px, py, seg[0], seg[1]));
                }
            }
            let mut v = (-0.5 * (d / width) * (d / width)).exp();
            if noise > 0.0 {
                v += rng.normal(0.0, noise);
            }
            img.set(y, x, v.clamp(0.0, 1.0));
        }
    }
    img
}

/// Generates `count` labeled 28x28 glyphs over 10 classes, deterministically
/// from the generator state.
pub fn synthetic_dataset(rng: &mut Rng, count: usize) -> Dataset {
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.index(CLASSES);
        let strokes = glyph_strokes(class);

        // per-sample jitter: rotation up to +/-22 degrees, mild shifts
        let angle = (rng.uniform() - 0.5) * 44.0_f64.to_radians();
        let scale = 0.9 + rng.uniform() * 0.2;
        let tx = (rng.uniform() - 0.5) * 0.14;
        let ty = (rng.uniform() - 0.5) * 0.14;
        let width = 0.045 + rng.uniform() * 0.02;
        let (sin_a, cos_a) = angle.sin_cos();

        let jittered: Vec<Stroke> = strokes
            .iter()
            .map(|stroke| {
                stroke
                    .iter()
                    .map(|&(x, y)| {
                        let dx = (x - 0.5) * scale;
                        let dy = (y - 0.5) * scale;
                        (
                            0.5 + cos_a * dx - sin_a * dy + tx,
                            0.5 + sin_a * dx + cos_a * dy + ty,
                        )
                    })
                    .collect()
            })
            .collect();

        images.push(render(&jittered, width, 0.015, rng));
        labels.push(class);
    }
    Dataset::new(images, labels, CLASSES).expect("generator keeps invariants")
}
