//! Per-component geometric and photometric features from image moments.
//!
//! Raw moments are accumulated in exact integer arithmetic (each pixel is a
//! unit point at its integer coordinates) and converted to central moments
//! at the end, so results are reproducible to floating-point rounding of the
//! final division only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::raster::{GrayImage, LabelMap};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One detected region's feature record.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub label: u32,
    pub centroid_x: f64,
    pub centroid_y: f64,
    /// Pixel count.
    pub area: u64,
    /// Number of 4-neighbor edges between region pixels and non-region
    /// pixels; the image border counts as non-region.
    pub perimeter: u64,
    pub major_axis: f64,
    pub minor_axis: f64,
    /// Major-axis angle in radians, in (-pi/2, pi/2]; 0 for isotropic regions.
    pub orientation: f64,
    pub mean_intensity: f64,
    /// Inclusive pixel bounds (x_min, y_min, x_max, y_max).
    pub bbox: (usize, usize, usize, usize),
    /// 1-based detection-pass index.
    pub iteration: u32,
}

/// The flat CSV row form of a [`Particle`], i.e. everything but the bbox.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRow {
    pub label: u32,
    pub x: f64,
    pub y: f64,
    pub area: u64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub perimeter: u64,
    pub mean_intensity: f64,
    pub orientation: f64,
    pub iteration: u32,
}

impl Particle {
    pub fn row(&self) -> ParticleRow {
        ParticleRow {
            label: self.label,
            x: self.centroid_x,
            y: self.centroid_y,
            area: self.area,
            major_axis: self.major_axis,
            minor_axis: self.minor_axis,
            perimeter: self.perimeter,
            mean_intensity: self.mean_intensity,
            orientation: self.orientation,
            iteration: self.iteration,
        }
    }
}

#[derive(Default, Clone)]
struct Accumulator {
    n: u64,
    sum_x: u64,
    sum_y: u64,
    sum_xx: u128,
    sum_yy: u128,
    sum_xy: u128,
    sum_intensity: u64,
    perimeter: u64,
    min_x: usize,
    min_y: usize,
    max_x: usize,
    max_y: usize,
}

/// Measure every labeled component of `lm` against the intensities of `src`.
///
/// Panics if the dimensions of `lm` and `src` differ.
pub fn measure(lm: &LabelMap, src: &GrayImage, iteration: u32) -> Vec<Particle> {
    assert_eq!(
        (lm.width(), lm.height()),
        (src.width(), src.height()),
        "label map and image dimensions differ"
    );
    let (w, h) = (lm.width(), lm.height());
    let mut acc = vec![
        Accumulator {
            min_x: usize::MAX,
            min_y: usize::MAX,
            ..Default::default()
        };
        lm.count() as usize
    ];

    for y in 0..h {
        for x in 0..w {
            let label = lm.get(x, y);
            if label == 0 {
                continue;
            }
            let a = &mut acc[(label - 1) as usize];
            a.n += 1;
            a.sum_x += x as u64;
            a.sum_y += y as u64;
            a.sum_xx += (x as u128) * (x as u128);
            a.sum_yy += (y as u128) * (y as u128);
            a.sum_xy += (x as u128) * (y as u128);
            a.sum_intensity += src.get(x, y) as u64;
            a.min_x = a.min_x.min(x);
            a.min_y = a.min_y.min(y);
            a.max_x = a.max_x.max(x);
            a.max_y = a.max_y.max(y);
            // 4-neighbor boundary edges, border counts as non-region.
            let mut edges = 0;
            if x == 0 || lm.get(x - 1, y) != label {
                edges += 1;
            }
            if x + 1 == w || lm.get(x + 1, y) != label {
                edges += 1;
            }
            if y == 0 || lm.get(x, y - 1) != label {
                edges += 1;
            }
            if y + 1 == h || lm.get(x, y + 1) != label {
                edges += 1;
            }
            a.perimeter += edges;
        }
    }

    acc.iter()
        .enumerate()
        .map(|(i, a)| {
            let n = a.n as f64;
            let cx = a.sum_x as f64 / n;
            let cy = a.sum_y as f64 / n;
            // Central second moments from exact raw sums.
            let mu20 = a.sum_xx as f64 - (a.sum_x as f64) * cx;
            let mu02 = a.sum_yy as f64 - (a.sum_y as f64) * cy;
            let mu11 = a.sum_xy as f64 - (a.sum_x as f64) * cy;
            let (major, minor, orientation) = axes_from_moments(mu20 / n, mu02 / n, mu11 / n);
            Particle {
                label: i as u32 + 1,
                centroid_x: cx,
                centroid_y: cy,
                area: a.n,
                perimeter: a.perimeter,
                major_axis: major,
                minor_axis: minor,
                orientation,
                mean_intensity: a.sum_intensity as f64 / n,
                bbox: (a.min_x, a.min_y, a.max_x, a.max_y),
                iteration,
            }
        })
        .collect()
}

/// Ellipse axes and orientation from normalized central moments: the
/// covariance [[m20, m11], [m11, m02]] has eigenvalues l1 >= l2, and the
/// axes are 4*sqrt(l1) and 4*sqrt(l2).
fn axes_from_moments(m20: f64, m02: f64, m11: f64) -> (f64, f64, f64) {
    let mean = (m20 + m02) / 2.0;
    let half_diff = (m20 - m02) / 2.0;
    let root = (half_diff * half_diff + m11 * m11).sqrt();
    let l1 = (mean + root).max(0.0);
    let l2 = (mean - root).max(0.0);
    let orientation = if m11 == 0.0 && m20 == m02 {
        0.0 // isotropic by convention
    } else {
        0.5 * (2.0 * m11).atan2(m20 - m02)
    };
    (4.0 * l1.sqrt(), 4.0 * l2.sqrt(), orientation)
}

const CSV_HEADER: &str =
    "label,x,y,area,major_axis,minor_axis,perimeter,mean_intensity,orientation,iteration";

/// Serialize particles in label order; reals carry 6 decimal places.
pub fn particles_to_csv_string(particles: &[Particle]) -> String {
    let mut sorted: Vec<&Particle> = particles.iter().collect();
    sorted.sort_by_key(|p| p.label);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in sorted {
        let r = p.row();
        writeln!(
            out,
            "{},{:.6},{:.6},{},{:.6},{:.6},{},{:.6},{:.6},{}",
            r.label,
            r.x,
            r.y,
            r.area,
            r.major_axis,
            r.minor_axis,
            r.perimeter,
            r.mean_intensity,
            r.orientation,
            r.iteration
        )
        .expect("write to string");
    }
    out
}

/// Write the particle CSV. See [`particles_to_csv_string`] for the format.
pub fn to_csv(particles: &[Particle], path: impl AsRef<Path>) -> Result<(), CsvError> {
    fs::write(path, particles_to_csv_string(particles))?;
    Ok(())
}

/// Parse a particle CSV back into rows.
pub fn rows_from_csv(path: impl AsRef<Path>) -> Result<Vec<ParticleRow>, CsvError> {
    rows_from_csv_str(&fs::read_to_string(path)?)
}

pub fn rows_from_csv_str(text: &str) -> Result<Vec<ParticleRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(CsvError::Parse {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}, found {header:?}"),
            })
        }
        None => {
            return Err(CsvError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(CsvError::Parse {
                line: lineno,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, CsvError> {
            fields[idx].parse().map_err(|_| CsvError::Parse {
                line: lineno,
                message: format!("invalid number {:?}", fields[idx]),
            })
        };
        let int = |idx: usize| -> Result<u64, CsvError> {
            fields[idx].parse().map_err(|_| CsvError::Parse {
                line: lineno,
                message: format!("invalid integer {:?}", fields[idx]),
            })
        };
        rows.push(ParticleRow {
            label: int(0)? as u32,
            x: num(1)?,
            y: num(2)?,
            area: int(3)?,
            major_axis: num(4)?,
            minor_axis: num(5)?,
            perimeter: int(6)?,
            mean_intensity: num(7)?,
            orientation: num(8)?,
            iteration: int(9)? as u32,
        });
    }
    Ok(rows)
}
