//! The recursive detection loop: threshold, separate, label, measure, mask
//! out with the image mean, and repeat at a lower threshold until a stop
//! rule fires.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{filter_small, label_components, Connectivity};
use crate::morphology::{dilate, erode, StructuringElement};
use crate::raster::{histogram, load_pgm, GrayImage, LabelMap};
use crate::regionprops::{measure, particles_to_csv_string, Particle};
use crate::threshold::{apply_threshold, otsu, ThresholdError};
use crate::watershed::{distance_transform, find_markers, watershed_segment};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid detect config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no processable images in {dir} ({skipped} skipped)")]
    NoProcessableImages { dir: String, skipped: usize },
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
}

/// How the per-iteration threshold is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Recompute Otsu's threshold on the working image each iteration.
    OtsuPerIteration,
    /// Fixed per-iteration thresholds.
    Fixed(Vec<u8>),
}

/// How touching particles are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separation {
    /// Erode/dilate bursts per the schedules.
    Morphological,
    /// Distance transform + marker watershed; the erode/dilate schedules do
    /// not apply. Flooding and marker extraction use 8-connectivity.
    Watershed,
}

/// Every tunable of the recursive pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub max_iterations: u32,
    /// Erosion count per iteration; must be non-increasing (later passes are
    /// gentler) and at least `max_iterations` long. 0 skips the erosion.
    pub erode_schedule: Vec<u32>,
    /// Dilation count per iteration; same length rule. 0 skips the dilation
    /// (the locations-only corner where regrowth is unwanted).
    pub dilate_schedule: Vec<u32>,
    pub connectivity: Connectivity,
    /// Components below this pixel area are dropped.
    pub min_area: u64,
    pub se: StructuringElement,
    pub threshold_mode: ThresholdMode,
    /// Stop once the iteration threshold is at or below this intensity, so
    /// re-thresholding never promotes near-background noise.
    pub threshold_floor: u8,
    pub separation: Separation,
    /// Minimum distance value for watershed markers.
    pub watershed_min_distance: f64,
    /// Drop components touching the image border. Off by default.
    pub drop_border: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            erode_schedule: vec![2, 1, 1],
            dilate_schedule: vec![2, 1, 1],
            connectivity: Connectivity::Eight,
            min_area: 4,
            se: StructuringElement::square3(),
            threshold_mode: ThresholdMode::OtsuPerIteration,
            threshold_floor: 8,
            separation: Separation::Morphological,
            watershed_min_distance: 3.0,
            drop_border: false,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.max_iterations == 0 {
            return err("max_iterations must be at least 1".into());
        }
        let n = self.max_iterations as usize;
        if self.erode_schedule.len() < n {
            return err(format!(
                "erode_schedule has {} entries for max_iterations {}",
                self.erode_schedule.len(),
                n
            ));
        }
        if self.dilate_schedule.len() < n {
            return err(format!(
                "dilate_schedule has {} entries for max_iterations {}",
                self.dilate_schedule.len(),
                n
            ));
        }
        if self.erode_schedule.windows(2).any(|w| w[1] > w[0]) {
            return err("erode_schedule must be non-increasing".into());
        }
        if let ThresholdMode::Fixed(seq) = &self.threshold_mode {
            if seq.len() < n {
                return err(format!(
                    "fixed threshold sequence has {} entries for max_iterations {}",
                    seq.len(),
                    n
                ));
            }
        }
        if self.separation == Separation::Watershed && self.watershed_min_distance < 1.0 {
            return err("watershed_min_distance must be at least 1".into());
        }
        Ok(())
    }
}

/// Outcome of a full recursive detection run on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectResult {
    /// All iterations merged, labels renumbered globally in detection order.
    pub particles: Vec<Particle>,
    pub per_iteration_counts: Vec<usize>,
    /// Thresholds actually applied; strictly decreasing after the first.
    pub thresholds_used: Vec<u8>,
    /// The working image after the last masking step.
    pub final_masked_image: GrayImage,
}

/// Per-iteration internals kept for inspection and testing.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub threshold: u8,
    /// Fill value used to mask this iteration's detections.
    pub fill: u8,
    pub label_map: LabelMap,
}

#[derive(Debug, Clone, Default)]
pub struct DetectTrace {
    pub iterations: Vec<IterationTrace>,
}

/// Run the recursive detection loop with the given config.
///
/// Iteration `i` thresholds the working image (Otsu or the fixed sequence),
/// separates particles (erode/dilate bursts or watershed), labels, drops
/// sub-`min_area` components, and measures against the original image so
/// intensity features reflect true brightness. Detected regions are then
/// replaced by the rounded mean of the current working image and the loop
/// continues. It stops at `max_iterations`, on an iteration with zero
/// detections, or before running an iteration whose threshold fails to
/// decrease strictly, is at or below `threshold_floor`, or falls below a
/// fill value already painted into the working image. The last rule keeps
/// masked regions from re-thresholding as foreground, so particle supports
/// from different iterations never overlap.
pub fn detect(img: &GrayImage, cfg: &DetectConfig) -> Result<DetectResult, PipelineError> {
    detect_with_trace(img, cfg).map(|(result, _)| result)
}

/// [`detect`], also returning the per-iteration label maps.
pub fn detect_with_trace(
    img: &GrayImage,
    cfg: &DetectConfig,
) -> Result<(DetectResult, DetectTrace), PipelineError> {
    cfg.validate()?;
    let mut working = img.clone();
    let mut particles: Vec<Particle> = Vec::new();
    let mut per_iteration_counts = Vec::new();
    let mut thresholds_used: Vec<u8> = Vec::new();
    let mut max_applied_fill: Option<u8> = None;
    let mut trace = DetectTrace::default();

    for i in 1..=cfg.max_iterations {
        let t = match &cfg.threshold_mode {
            ThresholdMode::OtsuPerIteration => otsu(&histogram(&working))?.t,
            ThresholdMode::Fixed(seq) => seq[(i - 1) as usize],
        };
        if let Some(&prev) = thresholds_used.last() {
            if t >= prev {
                break;
            }
        }
        if t <= cfg.threshold_floor {
            break;
        }
        // A threshold below an applied fill would light the masked regions
        // up again and double-count earlier detections.
        if max_applied_fill.is_some_and(|fill| t < fill) {
            break;
        }

        let mask = apply_threshold(&working, t);
        let lm = match cfg.separation {
            Separation::Morphological => {
                let mut m = mask;
                let bursts = cfg.erode_schedule[(i - 1) as usize];
                if bursts > 0 {
                    m = erode(&m, &cfg.se, bursts);
                }
                let bursts = cfg.dilate_schedule[(i - 1) as usize];
                if bursts > 0 {
                    m = dilate(&m, &cfg.se, bursts);
                }
                label_components(&m, cfg.connectivity)
            }
            Separation::Watershed => {
                let dm = distance_transform(&mask);
                let markers = find_markers(&dm, cfg.watershed_min_distance);
                watershed_segment(&dm, &markers, &mask)
                    .expect("markers from find_markers lie inside the mask")
            }
        };
        let lm = filter_small(&lm, cfg.min_area);
        let lm = if cfg.drop_border {
            drop_border_components(&lm)
        } else {
            lm
        };

        let mut found = measure(&lm, img, i);
        let offset = particles.len() as u32;
        for p in &mut found {
            p.label += offset;
        }

        let fill = mean_fill(&working);
        thresholds_used.push(t);
        per_iteration_counts.push(found.len());
        trace.iterations.push(IterationTrace {
            threshold: t,
            fill,
            label_map: lm.clone(),
        });
        let empty = found.is_empty();
        particles.extend(found);
        if empty {
            break;
        }
        working = mask_out(&working, &lm, fill);
        max_applied_fill = Some(max_applied_fill.map_or(fill, |m| m.max(fill)));
    }

    let result = DetectResult {
        particles,
        per_iteration_counts,
        thresholds_used,
        final_masked_image: working,
    };
    Ok((result, trace))
}

/// Replace every pixel under a nonzero label with `fill`.
///
/// Panics if the dimensions of `img` and `lm` differ.
pub fn mask_out(img: &GrayImage, lm: &LabelMap, fill: u8) -> GrayImage {
    assert_eq!(
        (img.width(), img.height()),
        (lm.width(), lm.height()),
        "image and label map dimensions differ"
    );
    let data = img
        .data()
        .iter()
        .zip(lm.data())
        .map(|(&v, &l)| if l != 0 { fill } else { v })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

/// Mean intensity rounded half-up; the masking fill value.
pub fn mean_fill(img: &GrayImage) -> u8 {
    let n = img.data().len() as u64;
    let sum: u64 = img.data().iter().map(|&v| v as u64).sum();
    ((2 * sum + n) / (2 * n)) as u8
}

fn drop_border_components(lm: &LabelMap) -> LabelMap {
    let (w, h) = (lm.width(), lm.height());
    let mut touches = vec![false; lm.count() as usize + 1];
    for x in 0..w {
        touches[lm.get(x, 0) as usize] = true;
        touches[lm.get(x, h - 1) as usize] = true;
    }
    for y in 0..h {
        touches[lm.get(0, y) as usize] = true;
        touches[lm.get(w - 1, y) as usize] = true;
    }
    let mut remap = vec![0u32; lm.count() as usize + 1];
    let mut next = 0u32;
    for label in 1..=lm.count() as usize {
        if !touches[label] {
            next += 1;
            remap[label] = next;
        }
    }
    let data = lm.data().iter().map(|&l| remap[l as usize]).collect();
    LabelMap::new(w, h, data, next)
}

/// One summary line of a batch run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub file: String,
    pub particles: usize,
    pub iterations: usize,
    pub thresholds: Vec<u8>,
}

/// Batch outcome: per-file summary rows plus the files that were skipped
/// with the reason.
#[derive(Debug, Default)]
pub struct BatchSummary {
    pub rows: Vec<BatchRow>,
    pub skipped: Vec<(String, String)>,
}

impl BatchSummary {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("file,particles,iterations,thresholds\n");
        for row in &self.rows {
            let thresholds: Vec<String> = row.thresholds.iter().map(|t| t.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{}",
                row.file,
                row.particles,
                row.iterations,
                thresholds.join(";")
            )
            .expect("write to string");
        }
        out
    }
}

/// Detect over every `.pgm` file directly inside `input_dir`, in
/// lexicographic filename order. Each image gets `<stem>.particles.csv` in
/// `out_dir`, plus a combined `summary.csv`. Files that fail to load or
/// process are reported in the summary and skipped. With `workers > 1`
/// images are processed concurrently; outputs are identical either way.
///
/// The summary file is written even when nothing was processable, but that
/// case is reported as the distinct [`PipelineError::NoProcessableImages`].
pub fn detect_batch(
    input_dir: &Path,
    out_dir: &Path,
    cfg: &DetectConfig,
    workers: usize,
) -> Result<BatchSummary, PipelineError> {
    cfg.validate()?;
    let mut files: Vec<PathBuf> = fs::read_dir(input_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.to_string_lossy().eq_ignore_ascii_case("pgm"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    fs::create_dir_all(out_dir)?;

    let process = |path: &PathBuf| -> Result<BatchRow, (String, String)> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let run = || -> Result<BatchRow, String> {
            let img = load_pgm(path).map_err(|e| e.to_string())?;
            let result = detect(&img, cfg).map_err(|e| e.to_string())?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| name.clone());
            let csv_path = out_dir.join(format!("{stem}.particles.csv"));
            fs::write(&csv_path, particles_to_csv_string(&result.particles))
                .map_err(|e| e.to_string())?;
            Ok(BatchRow {
                file: name.clone(),
                particles: result.particles.len(),
                iterations: result.thresholds_used.len(),
                thresholds: result.thresholds_used,
            })
        };
        run().map_err(|e| (name, e))
    };

    let outcomes: Vec<Result<BatchRow, (String, String)>> = if workers <= 1 {
        files.iter().map(process).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::WorkerPool(e.to_string()))?;
        pool.install(|| files.par_iter().map(process).collect())
    };

    let mut summary = BatchSummary::default();
    for outcome in outcomes {
        match outcome {
            Ok(row) => summary.rows.push(row),
            Err(skip) => summary.skipped.push(skip),
        }
    }
    fs::write(out_dir.join("summary.csv"), summary.to_csv_string())?;
    if summary.rows.is_empty() {
        return Err(PipelineError::NoProcessableImages {
            dir: input_dir.display().to_string(),
            skipped: summary.skipped.len(),
        });
    }
    Ok(summary)
}
