//! Segmentation quality against synthetic ground truth.
//!
//! Clusters are unsupervised, so each fault class is matched independently
//! to the single cluster that overlaps it best (greedy, not a global
//! assignment).

use alloc::vec;
use alloc::vec::Vec;

use crate::net::LabelMap;
use crate::synth::{GroundTruth, SceneClass};
use crate::{Error, Result};

/// Intersection over union of two pixel sets on the same grid.
///
/// Two empty sets agree perfectly (1.0); exactly one empty set scores 0.
///
/// # Panics
///
/// If the masks differ in length.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "iou masks must cover the same grid");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterMatch {
    pub cluster: u32,
    pub score: f64,
}

fn check_shapes(labels: &LabelMap, truth: &GroundTruth) -> Result<()> {
    if labels.width() != truth.width() || labels.height() != truth.height() {
        return Err(Error::shape(
            "cluster evaluation",
            format_args!("{}×{} labels", truth.height(), truth.width()),
            format_args!("{}×{}", labels.height(), labels.width()),
        ));
    }
    Ok(())
}

/// The present cluster with the highest IoU against `class`; ties go to the
/// lowest id. A class missing from the truth has no defined score and is
/// reported as [`Error::ClassAbsent`].
pub fn best_cluster_iou(
    labels: &LabelMap,
    truth: &GroundTruth,
    class: SceneClass,
) -> Result<ClusterMatch> {
    check_shapes(labels, truth)?;
    let k = labels.max_id().map_or(0, |m| m as usize + 1);
    let mut size = vec![0usize; k];
    let mut inter = vec![0usize; k];
    let mut truth_size = 0usize;
    for (&l, &c) in labels.ids().iter().zip(truth.classes()) {
        size[l as usize] += 1;
        if c == class {
            inter[l as usize] += 1;
            truth_size += 1;
        }
    }
    if truth_size == 0 {
        return Err(Error::ClassAbsent(class.as_str()));
    }
    let mut best: Option<ClusterMatch> = None;
    for (id, (&n, &i)) in size.iter().zip(&inter).enumerate() {
        if n == 0 {
            continue;
        }
        let score = i as f64 / (n + truth_size - i) as f64;
        if best.is_none_or(|b| score > b.score) {
            best = Some(ClusterMatch {
                cluster: id as u32,
                score,
            });
        }
    }
    Ok(best.expect("a non-empty truth class implies a non-empty label map"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassDetection {
    pub class: SceneClass,
    pub cluster: u32,
    pub score: f64,
    pub detected: bool,
}

/// For each fault class present in the truth: detected ⇔ best IoU ≥ `tau`.
pub fn detection_report(
    labels: &LabelMap,
    truth: &GroundTruth,
    tau: f64,
) -> Result<Vec<ClassDetection>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Precondition(alloc::format!(
            "detection threshold must be in (0, 1], got {tau}"
        )));
    }
    check_shapes(labels, truth)?;
    let mut out = Vec::new();
    for class in SceneClass::FAULTS {
        match best_cluster_iou(labels, truth, class) {
            Ok(m) => out.push(ClassDetection {
                class,
                cluster: m.cluster,
                score: m.score,
                detected: m.score >= tau,
            }),
            Err(Error::ClassAbsent(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SceneClass::*;

    #[test]
    fn iou_basics() {
        let a = [true, true, false];
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]), 0.0);
        assert!((iou(&[true, true, false], &[false, true, true]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&[false; 3], &[false; 3]), 1.0);
        assert_eq!(iou(&[false; 3], &[true, false, false]), 0.0);
    }

    #[test]
    fn perfect_match() {
        let truth = GroundTruth::new(2, 2, vec![Panel, Hotspot, Panel, Hotspot]).unwrap();
        let labels = LabelMap::new(2, 2, vec![4, 9, 4, 9]).unwrap();
        let m = best_cluster_iou(&labels, &truth, Hotspot).unwrap();
        assert_eq!(
            m,
            ClusterMatch {
                cluster: 9,
                score: 1.0
            }
        );
    }

    #[test]
    fn absent_class_is_undefined() {
        let truth = GroundTruth::new(3, 1, vec![Panel, Background, Panel]).unwrap();
        let labels = LabelMap::new(1, 3, vec![0, 1, 2]).unwrap();
        assert!(matches!(
            best_cluster_iou(&labels, &truth, Hotspot),
            Err(Error::ClassAbsent("hotspot"))
        ));
    }

    #[test]
    fn split_hotspot_ties_to_lowest_id() {
        // Hotspot = pixels 0,1. Cluster 5 = {0, 2}, cluster 3 = {1, 3}.
        let truth = GroundTruth::new(4, 1, vec![Hotspot, Hotspot, Panel, Panel]).unwrap();
        let labels = LabelMap::new(1, 4, vec![5, 3, 5, 3]).unwrap();
        let m = best_cluster_iou(&labels, &truth, Hotspot).unwrap();
        assert_eq!(m.cluster, 3);
        assert!((m.score - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_thresholds() {
        let truth = GroundTruth::new(4, 1, vec![Hotspot, Hotspot, SnailTrail, Panel]).unwrap();
        let perfect = LabelMap::new(1, 4, vec![0, 0, 1, 2]).unwrap();
        let r = detection_report(&perfect, &truth, 0.5).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|d| d.detected));

        let sloppy = LabelMap::new(1, 4, vec![0, 0, 1, 0]).unwrap();
        let r = detection_report(&sloppy, &truth, 1.0).unwrap();
        assert!(!r[0].detected);
        assert!(r[1].detected);

        let no_trail = GroundTruth::new(2, 1, vec![Hotspot, Panel]).unwrap();
        let r =
            detection_report(&LabelMap::new(1, 2, vec![0, 1]).unwrap(), &no_trail, 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].class, Hotspot);

        assert!(detection_report(&perfect, &truth, 0.0).is_err());
        assert!(detection_report(&perfect, &truth, 1.5).is_err());
    }
}
