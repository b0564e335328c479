//! Binary segmentation masks, pairwise IoU, and overlap deduplication.
//!
//! The dedup rule keeps the smaller mask whenever a pair overlaps with IoU
//! above the threshold (default 0.7). The pairwise statement is ambiguous for
//! chains, so elimination is made deterministic: masks are sorted by area
//! ascending (stable, ties keep input order) and greedily accepted iff their
//! IoU with every already-accepted mask stays at or below the threshold.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Default IoU threshold above which two masks are considered duplicates.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("mask bit count {got} does not match {width}x{height}")]
    BitCountMismatch { got: usize, width: u32, height: u32 },
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("failed to read mask {path}: {reason}")]
    Io { path: String, reason: String },
}

/// A 2D boolean raster with a cached population count.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
    area: usize,
    pub source_keyword: String,
}

impl BinaryMask {
    pub fn new(
        width: u32,
        height: u32,
        bits: Vec<bool>,
        source_keyword: impl Into<String>,
    ) -> Result<Self, MaskError> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(MaskError::BitCountMismatch {
                got: bits.len(),
                width,
                height,
            });
        }
        let area = bits.iter().filter(|b| **b).count();
        Ok(Self {
            width,
            height,
            bits,
            area,
            source_keyword: source_keyword.into(),
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of true bits.
    pub fn area(&self) -> usize {
        self.area
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    fn same_dims(&self, o: &BinaryMask) -> Result<(), MaskError> {
        if self.width != o.width || self.height != o.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                o.width,
                o.height,
            ));
        }
        Ok(())
    }
}

/// Intersection over union of two same-sized masks. Defined as 0 when both
/// masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    a.same_dims(b)?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (pa, pb) in a.bits.iter().zip(&b.bits) {
        inter += (*pa && *pb) as usize;
        union += (*pa || *pb) as usize;
    }
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// One kept/dropped decision from a dedup pass.
#[derive(Debug, Clone, Serialize)]
pub struct DedupDecision {
    /// Index of the mask in the input list.
    pub index: usize,
    pub keyword: String,
    pub area: usize,
    pub kept: bool,
    /// For dropped masks: the input index of the kept mask that triggered the
    /// drop and the offending IoU value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_against: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triggering_iou: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DedupReport {
    pub threshold: f64,
    pub decisions: Vec<DedupDecision>,
}

/// Deduplicate masks and report every decision. Empty masks are dropped
/// up front; survivors have pairwise IoU <= threshold and whenever a pair
/// exceeded the threshold the smaller-area member is the one that survives.
pub fn dedup_with_report(
    masks: &[BinaryMask],
    threshold: f64,
) -> Result<(Vec<BinaryMask>, DedupReport), MaskError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MaskError::BadThreshold(threshold));
    }
    for pair in masks.windows(2) {
        pair[0].same_dims(&pair[1])?;
    }

    let mut order: Vec<usize> = (0..masks.len())
        .filter(|&i| masks[i].area() > 0)
        .collect();
    order.sort_by_key(|&i| masks[i].area()); // stable: ties keep input order

    let mut kept: Vec<usize> = Vec::new();
    let mut decisions: Vec<DedupDecision> = masks
        .iter()
        .enumerate()
        .map(|(index, m)| DedupDecision {
            index,
            keyword: m.source_keyword.clone(),
            area: m.area(),
            kept: false,
            dropped_against: None,
            triggering_iou: None,
        })
        .collect();

    for &i in &order {
        let mut conflict: Option<(usize, f64)> = None;
        for &k in &kept {
            let score = iou(&masks[i], &masks[k])?;
            if score > threshold {
                conflict = Some((k, score));
                break;
            }
        }
        match conflict {
            None => {
                kept.push(i);
                decisions[i].kept = true;
            }
            Some((against, score)) => {
                decisions[i].dropped_against = Some(against);
                decisions[i].triggering_iou = Some(score);
            }
        }
    }

    kept.sort_unstable(); // survivors in input order
    let survivors = kept.iter().map(|&i| masks[i].clone()).collect();
    Ok((
        survivors,
        DedupReport {
            threshold,
            decisions,
        },
    ))
}

/// [`dedup_with_report`] without the report.
pub fn dedup(masks: &[BinaryMask], threshold: f64) -> Result<Vec<BinaryMask>, MaskError> {
    dedup_with_report(masks, threshold).map(|(kept, _)| kept)
}

fn mask_from_dynamic(
    img: image::DynamicImage,
    keyword: &str,
) -> Result<BinaryMask, MaskError> {
    let rgb = img.to_rgb8();
    let (width, height) = rgb.dimensions();
    let bits = rgb
        .pixels()
        .map(|p| p.0.iter().copied().max().unwrap_or(0) > 127)
        .collect();
    BinaryMask::new(width, height, bits, keyword)
}

/// Load a PNG as a binary mask: a pixel is true iff its max channel value
/// exceeds 127.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask, MaskError> {
    let img = image::open(path).map_err(|e| MaskError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let keyword = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    mask_from_dynamic(img, &keyword)
}

/// Decode PNG bytes (e.g. a segmentation service reply) into a binary mask
/// with the same >127 threshold rule.
pub fn mask_from_png_bytes(bytes: &[u8], keyword: &str) -> Result<BinaryMask, MaskError> {
    let img = image::load_from_memory(bytes).map_err(|e| MaskError::Io {
        path: format!("<{keyword}>"),
        reason: e.to_string(),
    })?;
    mask_from_dynamic(img, keyword)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_indices(w: u32, h: u32, idx: &[usize]) -> BinaryMask {
        let mut bits = vec![false; (w * h) as usize];
        for &i in idx {
            bits[i] = true;
        }
        BinaryMask::new(w, h, bits, "t").unwrap()
    }

    #[test]
    fn iou_identity_disjoint_and_bounds() {
        let a = mask_from_indices(4, 4, &[0, 1, 2]);
        let b = mask_from_indices(4, 4, &[5, 6]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        // symmetry is exact
        assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        let empty = mask_from_indices(4, 4, &[]);
        assert_eq!(iou(&empty, &empty).unwrap(), 0.0);
    }

    #[test]
    fn iou_containment_half() {
        let a = mask_from_indices(8, 8, &(0..16).collect::<Vec<_>>());
        let b = mask_from_indices(8, 8, &(0..32).collect::<Vec<_>>());
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn iou_boundary_pair() {
        // |a| = |b| = 12 with 10 shared -> 10/14
        let a = mask_from_indices(8, 8, &(0..12).collect::<Vec<_>>());
        let b = mask_from_indices(8, 8, &(2..14).collect::<Vec<_>>());
        let score = iou(&a, &b).unwrap();
        assert!((score - 10.0 / 14.0).abs() < 1e-12);
        assert!(score > DEFAULT_IOU_THRESHOLD);
    }

    #[test]
    fn iou_dimension_mismatch() {
        let a = mask_from_indices(4, 4, &[0]);
        let b = mask_from_indices(4, 5, &[0]);
        assert!(matches!(
            iou(&a, &b),
            Err(MaskError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn dedup_boundary_pair_keeps_smaller() {
        let a = mask_from_indices(8, 8, &(0..12).collect::<Vec<_>>());
        let b = mask_from_indices(8, 8, &(2..14).collect::<Vec<_>>());
        // equal areas: the earlier-listed mask survives
        let (kept, report) = dedup_with_report(&[a.clone(), b.clone()], 0.7).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0], a);
        assert!(report.decisions[0].kept);
        assert!(!report.decisions[1].kept);
        assert_eq!(report.decisions[1].dropped_against, Some(0));
        let trig = report.decisions[1].triggering_iou.unwrap();
        assert!((trig - 10.0 / 14.0).abs() < 1e-12);

        // strictly smaller second mask survives instead
        let big = mask_from_indices(8, 8, &(0..13).collect::<Vec<_>>());
        let small = mask_from_indices(8, 8, &(2..14).collect::<Vec<_>>());
        assert!(iou(&big, &small).unwrap() > 0.7);
        let kept = dedup(&[big, small.clone()], 0.7).unwrap();
        assert_eq!(kept, vec![small]);
    }

    #[test]
    fn dedup_containment_pair_survives() {
        let a = mask_from_indices(8, 8, &(0..16).collect::<Vec<_>>());
        let b = mask_from_indices(8, 8, &(0..32).collect::<Vec<_>>());
        let kept = dedup(&[a, b], 0.7).unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn dedup_empty_input_and_empty_masks() {
        assert!(dedup(&[], 0.7).unwrap().is_empty());
        let empty = mask_from_indices(4, 4, &[]);
        let solid = mask_from_indices(4, 4, &[0, 1]);
        let kept = dedup(&[empty, solid.clone()], 0.7).unwrap();
        assert_eq!(kept, vec![solid]);
    }

    #[test]
    fn dedup_idempotent_and_pairwise_bounded() {
        let masks: Vec<BinaryMask> = (0..6)
            .map(|i| mask_from_indices(8, 8, &(i..i + 10).collect::<Vec<_>>()))
            .collect();
        let once = dedup(&masks, 0.7).unwrap();
        let twice = dedup(&once, 0.7).unwrap();
        assert_eq!(once, twice);
        for i in 0..once.len() {
            for j in i + 1..once.len() {
                assert!(iou(&once[i], &once[j]).unwrap() <= 0.7);
            }
        }
    }

    // Brute-force reference: apply the same ordering rule by explicit pair
    // scans instead of the greedy accept loop.
    fn dedup_reference(masks: &[BinaryMask], threshold: f64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..masks.len())
            .filter(|&i| masks[i].area() > 0)
            .collect();
        order.sort_by_key(|&i| masks[i].area());
        let mut kept: Vec<usize> = Vec::new();
        'outer: for &i in &order {
            for &k in &kept {
                if iou(&masks[i], &masks[k]).unwrap() > threshold {
                    continue 'outer;
                }
            }
            kept.push(i);
        }
        kept.sort_unstable();
        kept
    }

    #[test]
    fn dedup_matches_bruteforce_on_random_sets() {
        let mut state = 0x5bd1_e995_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..1000 {
            let count = (next() % 8 + 1) as usize;
            let masks: Vec<BinaryMask> = (0..count)
                .map(|_| {
                    let bits: Vec<bool> = (0..256).map(|_| next() % 3 == 0).collect();
                    BinaryMask::new(16, 16, bits, "r").unwrap()
                })
                .collect();
            let got = dedup(&masks, 0.7).unwrap();
            let expect: Vec<BinaryMask> = dedup_reference(&masks, 0.7)
                .into_iter()
                .map(|i| masks[i].clone())
                .collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn load_mask_png_threshold_rule() {
        let dir = tempfile::tempdir().unwrap();

        let black = image::RgbImage::from_pixel(4, 4, image::Rgb([0, 0, 0]));
        let p = dir.path().join("black.png");
        black.save(&p).unwrap();
        assert_eq!(load_mask_png(&p).unwrap().area(), 0);

        let white = image::RgbImage::from_pixel(4, 4, image::Rgb([255, 255, 255]));
        let p = dir.path().join("white.png");
        white.save(&p).unwrap();
        let m = load_mask_png(&p).unwrap();
        assert_eq!(m.area(), 16);
        assert_eq!(m.source_keyword, "white");

        // 128 is just above the >127 threshold
        let gray = image::RgbImage::from_pixel(4, 4, image::Rgb([128, 128, 128]));
        let p = dir.path().join("gray.png");
        gray.save(&p).unwrap();
        assert_eq!(load_mask_png(&p).unwrap().area(), 16);

        assert!(matches!(
            load_mask_png(&dir.path().join("missing.png")),
            Err(MaskError::Io { .. })
        ));
    }
}
