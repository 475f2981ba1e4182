//! Scoring detections against ground-truth point labels, plus the
//! intensity/size correlation report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::regionprops::{Particle, ParticleRow};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("ground-truth line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("need at least {needed} values, found {found}")]
    TooFew { needed: usize, found: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance in {0}: correlation undefined")]
    ZeroVariance(&'static str),
}

/// Hand- or generator-labeled particle locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub points: Vec<(f64, f64)>,
    /// Free-text provenance tag.
    pub source: String,
}

/// One-to-one assignment of detections to ground-truth points.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// (gt_index, detection_index, centroid distance), in match order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
    /// Matched fraction of ground truth; 1 when there is no ground truth.
    pub recall: f64,
    /// Matched fraction of detections; 1 when there are no detections.
    pub precision: f64,
    pub radius: f64,
}

/// Greedy globally-closest-first one-to-one matching within `radius`.
///
/// The unmatched (gt, detection) pair with the smallest Euclidean centroid
/// distance is taken repeatedly; exact distance ties resolve by
/// (gt_index, detection_index) order.
pub fn match_points(gt: &GroundTruth, detections: &[(f64, f64)], radius: f64) -> MatchReport {
    assert!(radius > 0.0, "match radius must be positive");
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, &(gx, gy)) in gt.points.iter().enumerate() {
        for (di, &(dx, dy)) in detections.iter().enumerate() {
            let dist = ((gx - dx).powi(2) + (gy - dy).powi(2)).sqrt();
            if dist <= radius {
                candidates.push((dist, gi, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_taken = vec![false; gt.points.len()];
    let mut det_taken = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for (dist, gi, di) in candidates {
        if !gt_taken[gi] && !det_taken[di] {
            gt_taken[gi] = true;
            det_taken[di] = true;
            pairs.push((gi, di, dist));
        }
    }

    let unmatched_gt = (0..gt.points.len()).filter(|&i| !gt_taken[i]).collect();
    let unmatched_detections = (0..detections.len()).filter(|&i| !det_taken[i]).collect();
    let frac = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    MatchReport {
        recall: frac(pairs.len(), gt.points.len()),
        precision: frac(pairs.len(), detections.len()),
        pairs,
        unmatched_gt,
        unmatched_detections,
        radius,
    }
}

/// [`match_points`] over particle centroids.
pub fn match_particles(gt: &GroundTruth, detections: &[Particle], radius: f64) -> MatchReport {
    let points: Vec<(f64, f64)> = detections
        .iter()
        .map(|p| (p.centroid_x, p.centroid_y))
        .collect();
    match_points(gt, &points, radius)
}

/// [`match_points`] over particle CSV rows.
pub fn match_rows(gt: &GroundTruth, detections: &[ParticleRow], radius: f64) -> MatchReport {
    let points: Vec<(f64, f64)> = detections.iter().map(|p| (p.x, p.y)).collect();
    match_points(gt, &points, radius)
}

/// Pearson product-moment correlation coefficient.
///
/// Errors on length mismatch, fewer than two samples, or zero variance in
/// either input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvaluateError> {
    if xs.len() != ys.len() {
        return Err(EvaluateError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvaluateError::TooFew {
            needed: 2,
            found: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x) * (x - mean_x);
        var_y += (y - mean_y) * (y - mean_y);
    }
    if var_x == 0.0 {
        return Err(EvaluateError::ZeroVariance("first input"));
    }
    if var_y == 0.0 {
        return Err(EvaluateError::ZeroVariance("second input"));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Correlation between mean intensity and area, plus the two-column CSV of
/// the underlying pairs for external plotting.
pub fn intensity_size_report(rows: &[ParticleRow]) -> Result<(f64, String), EvaluateError> {
    if rows.len() < 2 {
        return Err(EvaluateError::TooFew {
            needed: 2,
            found: rows.len(),
        });
    }
    let intensities: Vec<f64> = rows.iter().map(|p| p.mean_intensity).collect();
    let areas: Vec<f64> = rows.iter().map(|p| p.area as f64).collect();
    let r = pearson(&intensities, &areas)?;
    let mut csv = String::from("mean_intensity,area\n");
    for p in rows {
        writeln!(csv, "{:.6},{}", p.mean_intensity, p.area).expect("write to string");
    }
    Ok((r, csv))
}

/// Parse a ground-truth CSV with header `x,y`.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, EvaluateError> {
    let text = fs::read_to_string(&path)?;
    let mut gt = parse_ground_truth(&text)?;
    gt.source = path.as_ref().display().to_string();
    Ok(gt)
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, EvaluateError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "x,y")) => {}
        Some((_, other)) => {
            return Err(EvaluateError::Parse {
                line: 1,
                message: format!("expected header \"x,y\", found {other:?}"),
            })
        }
        None => {
            return Err(EvaluateError::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut fields = line.split(',');
        let parse = |f: Option<&str>| -> Result<f64, EvaluateError> {
            let f = f.ok_or_else(|| EvaluateError::Parse {
                line: lineno,
                message: "missing coordinate".into(),
            })?;
            let v: f64 = f.trim().parse().map_err(|_| EvaluateError::Parse {
                line: lineno,
                message: format!("invalid number {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(EvaluateError::Parse {
                    line: lineno,
                    message: format!("non-finite coordinate {f:?}"),
                });
            }
            Ok(v)
        };
        let x = parse(fields.next())?;
        let y = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(EvaluateError::Parse {
                line: lineno,
                message: "too many fields".into(),
            });
        }
        points.push((x, y));
    }
    Ok(GroundTruth {
        points,
        source: String::new(),
    })
}

/// Serialize ground truth back to the `x,y` CSV format.
pub fn ground_truth_to_csv(gt: &GroundTruth) -> String {
    let mut out = String::from("x,y\n");
    for &(x, y) in &gt.points {
        writeln!(out, "{x:.6},{y:.6}").expect("write to string");
    }
    out
}

pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<(), EvaluateError> {
    fs::write(path, ground_truth_to_csv(gt))?;
    Ok(())
}
