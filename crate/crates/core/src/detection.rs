//! Detector evaluation: IoU, greedy matching, all-point interpolated AP and
//! mAP over classes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::BBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no class has a defined average precision")]
    NoEvaluableClasses,
    #[error("iou threshold {0} outside (0, 1]")]
    IouThreshold(f64),
    #[error("score {0} outside [0, 1]")]
    Score(f64),
    #[error("invalid box on line {line}")]
    InvalidBox { line: u64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: i64,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: i64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    pub detection: Detection,
    pub is_true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap: BTreeMap<i64, f64>,
    pub n_classes: usize,
    pub map_value: f64,
    pub iou_threshold: f64,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy matching in descending score order (stable for equal scores).
/// Each detection takes the highest-IoU ground truth of the same image and
/// class that is still unmatched and clears the threshold.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Result<Vec<MatchedDetection>, EvalError> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(EvalError::IouThreshold(iou_thresh));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut used = vec![false; gts.len()];
    let mut out = Vec::with_capacity(dets.len());
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.class_id != d.class_id || g.image_id != d.image_id {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox);
            if o >= iou_thresh && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
        }
        out.push(MatchedDetection {
            detection: d.clone(),
            is_true_positive: best.is_some(),
        });
    }
    Ok(out)
}

/// All-point interpolated average precision over score-ordered TP/FP flags.
///
/// Returns `None` when the class has neither ground truth nor detections
/// (excluded from the mean), and `0` when there are detections but no ground
/// truth.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in flags.iter().enumerate() {
        tp += is_tp as usize;
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // Precision envelope: running max from the right.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    // Recall rises by 1/n_gt exactly at each true positive; dividing once at
    // the end keeps a perfect ranking at exactly 1.
    let area: f64 = flags
        .iter()
        .zip(&precision)
        .filter(|(t, _)| **t)
        .map(|(_, p)| p)
        .sum();
    let ap = area / n_gt as f64;
    Some(ap)
}

pub fn mean_average_precision(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Result<EvalReport, EvalError> {
    if let Some(d) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
        return Err(EvalError::Score(d.score));
    }
    let matches = match_detections(dets, gts, iou_thresh)?;
    let classes: BTreeSet<i64> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .collect();

    let mut per_class_ap = BTreeMap::new();
    for class in classes {
        let flags: Vec<bool> = matches
            .iter()
            .filter(|m| m.detection.class_id == class)
            .map(|m| m.is_true_positive)
            .collect();
        let n_gt = gts.iter().filter(|g| g.class_id == class).count();
        if let Some(ap) = average_precision(&flags, n_gt) {
            per_class_ap.insert(class, ap);
        }
    }
    if per_class_ap.is_empty() {
        return Err(EvalError::NoEvaluableClasses);
    }
    let n_classes = per_class_ap.len();
    let map_value = per_class_ap.values().sum::<f64>() / n_classes as f64;
    Ok(EvalReport {
        per_class_ap,
        n_classes,
        map_value,
        iou_threshold: iou_thresh,
    })
}

#[derive(Debug, Deserialize)]
struct DetectionRow {
    image_id: String,
    class_id: i64,
    score: f64,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Debug, Deserialize)]
struct GroundTruthRow {
    image_id: String,
    class_id: i64,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

fn checked_box(
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    line: u64,
) -> Result<BBox, EvalError> {
    BBox::new(x_min, y_min, x_max, y_max).map_err(|_| EvalError::InvalidBox { line })
}

/// Reads `image_id,class_id,score,x_min,y_min,x_max,y_max`.
pub fn read_detections_csv(reader: impl Read) -> Result<Vec<Detection>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<DetectionRow>() {
        let r = row?;
        let line = out.len() as u64 + 2;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(EvalError::Score(r.score));
        }
        out.push(Detection {
            image_id: r.image_id,
            class_id: r.class_id,
            score: r.score,
            bbox: checked_box(r.x_min, r.y_min, r.x_max, r.y_max, line)?,
        });
    }
    Ok(out)
}

/// Reads `image_id,class_id,x_min,y_min,x_max,y_max`.
pub fn read_ground_truth_csv(reader: impl Read) -> Result<Vec<GroundTruth>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<GroundTruthRow>() {
        let r = row?;
        let line = out.len() as u64 + 2;
        out.push(GroundTruth {
            image_id: r.image_id,
            class_id: r.class_id,
            bbox: checked_box(r.x_min, r.y_min, r.x_max, r.y_max, line)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(score: f64, bbox: BBox) -> Detection {
        Detection {
            image_id: "img".into(),
            class_id: 0,
            score,
            bbox,
        }
    }

    fn gt(bbox: BBox) -> GroundTruth {
        GroundTruth {
            image_id: "img".into(),
            class_id: 0,
            bbox,
        }
    }

    #[test]
    fn iou_cases() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &b(2.0, 0.0, 3.0, 2.0)), 0.0);
        // Intersection 1, union 4 + 4 - 1 = 7.
        assert!((iou(&a, &b(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn matching_cases() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(&[det(0.9, g)], &[gt(g)], 0.5).unwrap();
        assert!(m[0].is_true_positive);

        let m = match_detections(&[det(0.6, g), det(0.9, g)], &[gt(g)], 0.5).unwrap();
        assert_eq!(m[0].detection.score, 0.9);
        assert!(m[0].is_true_positive);
        assert!(!m[1].is_true_positive);

        // IoU = 40 / 100 = 0.4.
        let shifted = b(0.0, 0.0, 4.0, 10.0);
        assert!((iou(&shifted, &g) - 0.4).abs() < 1e-15);
        let m = match_detections(&[det(0.9, shifted)], &[gt(g)], 0.5).unwrap();
        assert!(!m[0].is_true_positive);

        assert!(match_detections(&[], &[], 0.0).is_err());
    }

    #[test]
    fn matching_respects_image_and_class() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let mut other_img = det(0.9, g);
        other_img.image_id = "other".into();
        let mut other_cls = det(0.8, g);
        other_cls.class_id = 1;
        let m = match_detections(&[other_img, other_cls], &[gt(g)], 0.5).unwrap();
        assert!(m.iter().all(|m| !m.is_true_positive));
    }

    #[test]
    fn ap_hand_cases() {
        assert_eq!(average_precision(&[true], 1), Some(1.0));
        assert_eq!(average_precision(&[true, false], 1), Some(1.0));
        assert_eq!(average_precision(&[false, true], 1), Some(0.5));
        assert_eq!(average_precision(&[], 0), None);
        assert_eq!(average_precision(&[false], 0), Some(0.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        // Recall 1/2 at precision 1, recall 1 at precision 2/3.
        let ap = average_precision(&[true, false, true], 2).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn map_cases() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let r = mean_average_precision(&[det(0.9, g)], &[gt(g)], 0.5).unwrap();
        assert_eq!((r.map_value, r.n_classes), (1.0, 1));

        // Class 0 AP = 0.5 ([FP, TP]), class 1 AP = 1.0.
        let far = b(50.0, 50.0, 60.0, 60.0);
        let mut c1 = det(0.7, g);
        c1.class_id = 1;
        let mut g1 = gt(g);
        g1.class_id = 1;
        let r =
            mean_average_precision(&[det(0.95, far), det(0.9, g), c1], &[gt(g), g1], 0.5).unwrap();
        assert_eq!(r.per_class_ap[&0], 0.5);
        assert_eq!(r.per_class_ap[&1], 1.0);
        assert_eq!(r.map_value, 0.75);

        assert!(matches!(
            mean_average_precision(&[], &[], 0.5),
            Err(EvalError::NoEvaluableClasses)
        ));
    }

    #[test]
    fn csv_readers() {
        let dets = read_detections_csv(
            "image_id,class_id,score,x_min,y_min,x_max,y_max\na,0,0.8,1,2,3,4\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(dets[0].bbox, b(1.0, 2.0, 3.0, 4.0));
        let gts = read_ground_truth_csv(
            "image_id,class_id,x_min,y_min,x_max,y_max\na,0,1,2,3,4\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(gts[0].class_id, 0);
        assert!(read_detections_csv(
            "image_id,class_id,score,x_min,y_min,x_max,y_max\na,0,1.5,1,2,3,4\n".as_bytes()
        )
        .is_err());
        assert!(matches!(
            read_ground_truth_csv(
                "image_id,class_id,x_min,y_min,x_max,y_max\na,0,3,2,1,4\n".as_bytes()
            ),
            Err(EvalError::InvalidBox { line: 2 })
        ));
    }
}
