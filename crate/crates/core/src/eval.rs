//! Retrieval metrics (CMC, mAP) and parsing IoU.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{validation, IspError, Result};
use crate::matching::DistanceMatrix;
use crate::tensor::{LabelMap, UNLABELED};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalMetrics {
    /// `cmc[r]` is the fraction of evaluated queries whose first correct match
    /// is at rank `<= r + 1`. Length equals the gallery size.
    pub cmc: Vec<f64>,
    pub map: f64,
    pub evaluated_queries: usize,
    /// Queries without any valid gallery match; excluded from both metrics.
    pub skipped_queries: usize,
}

impl RetrievalMetrics {
    /// CMC at 1-based rank `r`, saturating at the gallery size.
    pub fn rank(&self, r: usize) -> f64 {
        self.cmc[r.clamp(1, self.cmc.len()) - 1]
    }
}

/// Gallery order for query `i` after the same-person/same-camera filter:
/// ascending distance, ties broken by gallery index.
pub fn ranked_gallery(dm: &DistanceMatrix, i: usize) -> Vec<usize> {
    let q = dm.queries[i];
    let mut idx: Vec<usize> = (0..dm.g())
        .filter(|&j| {
            let g = dm.gallery[j];
            !(g.person_id == q.person_id && g.camera_id == q.camera_id)
        })
        .collect();
    let row = dm.row(i);
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx
}

/// CMC curve and mAP under the standard single-query protocol: gallery items
/// sharing both person and camera with the query are ignored.
pub fn cmc_map(dm: &DistanceMatrix) -> Result<RetrievalMetrics> {
    let g = dm.g();
    let mut hits = vec![0usize; g];
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for i in 0..dm.q() {
        let pid = dm.queries[i].person_id;
        let ranked = ranked_gallery(dm, i);
        let mut found = 0usize;
        let mut precision_sum = 0.0;
        let mut first = None;
        for (rank, &j) in ranked.iter().enumerate() {
            if dm.gallery[j].person_id == pid {
                found += 1;
                precision_sum += found as f64 / (rank + 1) as f64;
                first.get_or_insert(rank);
            }
        }
        match first {
            Some(r) => {
                hits[r] += 1;
                ap_sum += precision_sum / found as f64;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    if evaluated == 0 {
        return Err(IspError::Degenerate("no query has a valid gallery match".into()));
    }
    let mut cmc = Vec::with_capacity(g);
    let mut acc = 0usize;
    for h in hits {
        acc += h;
        cmc.push(acc as f64 / evaluated as f64);
    }
    Ok(RetrievalMetrics { cmc, map: ap_sum / evaluated as f64, evaluated_queries: evaluated, skipped_queries: skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// IoU per label (background included) over every pixel of every image.
    /// Labels absent from both prediction and truth are omitted.
    pub per_part: BTreeMap<u8, f64>,
    /// IoU of the binarized `label > 0` masks, if either side has foreground.
    pub foreground: Option<f64>,
    /// Mean of `per_part`.
    pub mean_iou: f64,
}

/// Applies a grouping table (`table[old] = new`) to every label.
pub fn remap_labels(map: &LabelMap, table: &[u8]) -> Result<LabelMap> {
    let labels = map
        .labels
        .iter()
        .map(|&l| {
            if l == UNLABELED {
                Ok(l)
            } else {
                table.get(usize::from(l)).copied().ok_or_else(|| validation!("no mapping for label {l}"))
            }
        })
        .collect::<Result<_>>()?;
    Ok(LabelMap { labels, ..map.clone() })
}

/// Pixel IoU between predicted and true label maps, paired by image id.
/// Pixels unlabeled on either side are ignored.
pub fn parsing_iou(pred: &[LabelMap], truth: &[LabelMap], k: usize) -> Result<IouReport> {
    if pred.len() != truth.len() {
        return Err(validation!("{} predicted maps vs {} truth maps", pred.len(), truth.len()));
    }
    let by_id: HashMap<u32, &LabelMap> = truth.iter().map(|t| (t.image_id, t)).collect();
    if by_id.len() != truth.len() {
        return Err(validation!("duplicate image id in truth maps"));
    }
    let mut inter = vec![0u64; k];
    let mut union = vec![0u64; k];
    let (mut fg_inter, mut fg_union) = (0u64, 0u64);
    for p in pred {
        let t = by_id.get(&p.image_id).ok_or_else(|| validation!("no truth map for image {}", p.image_id))?;
        if (p.h, p.w) != (t.h, t.w) || p.labels.len() != t.labels.len() {
            return Err(validation!("image {}: prediction {}x{} vs truth {}x{}", p.image_id, p.h, p.w, t.h, t.w));
        }
        for (&a, &b) in p.labels.iter().zip(&t.labels) {
            if a == UNLABELED || b == UNLABELED {
                continue;
            }
            let (ai, bi) = (usize::from(a), usize::from(b));
            if ai >= k || bi >= k {
                return Err(validation!("image {}: label {} outside K={k}", p.image_id, ai.max(bi)));
            }
            if a == b {
                inter[ai] += 1;
                union[ai] += 1;
            } else {
                union[ai] += 1;
                union[bi] += 1;
            }
            let (fa, fb) = (a > 0, b > 0);
            if fa && fb {
                fg_inter += 1;
            }
            if fa || fb {
                fg_union += 1;
            }
        }
    }
    let per_part: BTreeMap<u8, f64> =
        (0..k).filter(|&l| union[l] > 0).map(|l| (l as u8, inter[l] as f64 / union[l] as f64)).collect();
    let mean_iou = if per_part.is_empty() { 0.0 } else { per_part.values().sum::<f64>() / per_part.len() as f64 };
    let foreground = (fg_union > 0).then(|| fg_inter as f64 / fg_union as f64);
    Ok(IouReport { per_part, foreground, mean_iou })
}

/// Combined evaluation output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub retrieval: Option<RetrievalMetrics>,
    pub parsing: Option<IouReport>,
}

impl MetricReport {
    /// `key=value` lines for scripting.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        if let Some(r) = &self.retrieval {
            for rank in [1, 5, 10] {
                if rank <= r.cmc.len() {
                    let _ = writeln!(s, "cmc@{rank}={}", r.rank(rank));
                }
            }
            let _ = writeln!(s, "map={}", r.map);
            let _ = writeln!(s, "queries={}", r.evaluated_queries);
            let _ = writeln!(s, "skipped_queries={}", r.skipped_queries);
        }
        if let Some(p) = &self.parsing {
            if let Some(fg) = p.foreground {
                let _ = writeln!(s, "iou.fg={fg}");
            }
            for (l, v) in &p.per_part {
                let _ = writeln!(s, "iou.part.{l}={v}");
            }
            let _ = writeln!(s, "iou.mean={}", p.mean_iou);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(r) = &self.retrieval {
            let _ = writeln!(s, "Retrieval ({} queries, {} skipped)", r.evaluated_queries, r.skipped_queries);
            let ranks: Vec<String> = [1, 5, 10]
                .iter()
                .filter(|&&k| k <= r.cmc.len())
                .map(|&k| format!("Rank-{k} {:.2}%", 100.0 * r.rank(k)))
                .collect();
            let _ = writeln!(s, "  {}", ranks.join("  "));
            let _ = writeln!(s, "  mAP    {:.2}%", 100.0 * r.map);
        }
        if let Some(p) = &self.parsing {
            let _ = writeln!(s, "Parsing IoU");
            if let Some(fg) = p.foreground {
                let _ = writeln!(s, "  foreground  {:.2}%", 100.0 * fg);
            }
            for (l, v) in &p.per_part {
                let _ = writeln!(s, "  label {l:<4}  {:.2}%", 100.0 * v);
            }
            let _ = writeln!(s, "  mean        {:.2}%", 100.0 * p.mean_iou);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::ItemMeta;

    fn meta(person_id: u32, camera_id: u32) -> ItemMeta {
        ItemMeta { image_id: 0, person_id, camera_id }
    }

    #[test]
    fn single_perfect_query() {
        let dm = DistanceMatrix::new(vec![meta(1, 0)], vec![meta(1, 1), meta(2, 1)], vec![0.1, 0.5]).unwrap();
        let r = cmc_map(&dm).unwrap();
        assert_eq!(r.cmc, vec![1.0, 1.0]);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn matches_at_ranks_one_and_three() {
        let dm = DistanceMatrix::new(vec![meta(1, 0)], vec![meta(1, 1), meta(2, 1), meta(1, 2)], vec![0.1, 0.2, 0.3])
            .unwrap();
        let r = cmc_map(&dm).unwrap();
        assert!((r.map - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.cmc, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn same_camera_matches_are_ignored() {
        // the closest item is the same person on the same camera
        let dm = DistanceMatrix::new(
            vec![meta(1, 0), meta(3, 0)],
            vec![meta(1, 0), meta(2, 1), meta(1, 1)],
            vec![0.0, 0.2, 0.3, 0.1, 0.2, 0.3],
        )
        .unwrap();
        let r = cmc_map(&dm).unwrap();
        assert_eq!(r.evaluated_queries, 1);
        assert_eq!(r.skipped_queries, 1);
        assert_eq!(r.cmc[0], 0.0);
        assert_eq!(r.cmc[1], 1.0);
        assert!((r.map - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_queries_without_matches_is_error() {
        let dm = DistanceMatrix::new(vec![meta(1, 0)], vec![meta(2, 0)], vec![0.3]).unwrap();
        assert!(cmc_map(&dm).is_err());
    }

    fn lm(id: u32, labels: Vec<u8>) -> LabelMap {
        LabelMap::new(id, 0, 2, 2, labels).unwrap()
    }

    #[test]
    fn identical_maps_have_unit_iou() {
        let a = vec![lm(0, vec![0, 1, 2, 2]), lm(1, vec![1, 1, 0, 0])];
        let r = parsing_iou(&a, &a, 3).unwrap();
        assert!(r.per_part.values().all(|&v| v == 1.0));
        assert_eq!(r.foreground, Some(1.0));
        assert_eq!(r.mean_iou, 1.0);
    }

    #[test]
    fn disjoint_halves_have_zero_foreground_iou() {
        let pred = vec![lm(0, vec![1, 1, 0, 0])];
        let truth = vec![lm(0, vec![0, 0, 1, 1])];
        let r = parsing_iou(&pred, &truth, 2).unwrap();
        assert_eq!(r.foreground, Some(0.0));
        assert_eq!(r.per_part[&1], 0.0);
    }

    #[test]
    fn superset_of_double_area_has_half_iou() {
        let pred = vec![lm(0, vec![1, 1, 1, 1])];
        let truth = vec![lm(0, vec![1, 1, 0, 0])];
        let r = parsing_iou(&pred, &truth, 2).unwrap();
        assert_eq!(r.foreground, Some(0.5));
        assert_eq!(r.per_part[&0], 0.0);
    }

    #[test]
    fn absent_labels_are_skipped_and_order_does_not_matter() {
        let pred = vec![lm(0, vec![0, 1, 1, 0]), lm(1, vec![0, 0, 1, 1])];
        let truth = vec![lm(1, vec![0, 1, 1, 1]), lm(0, vec![0, 1, 0, 0])];
        let a = parsing_iou(&pred, &truth, 5).unwrap();
        let rev: Vec<LabelMap> = pred.iter().rev().cloned().collect();
        assert_eq!(a, parsing_iou(&rev, &truth, 5).unwrap());
        assert_eq!(a.per_part.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a, parsing_iou(&truth, &pred, 5).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let pred = vec![LabelMap::new(0, 0, 1, 4, vec![0; 4]).unwrap()];
        let truth = vec![lm(0, vec![0; 4])];
        assert!(parsing_iou(&pred, &truth, 2).is_err());
        assert!(parsing_iou(&[lm(5, vec![0; 4])], &truth, 2).is_err());
    }

    #[test]
    fn grouping_table() {
        let m = lm(0, vec![0, 1, 2, UNLABELED]);
        assert_eq!(remap_labels(&m, &[0, 1, 1]).unwrap().labels, vec![0, 1, 1, UNLABELED]);
        assert!(remap_labels(&m, &[0, 1]).is_err());
    }

    #[test]
    fn report_formats() {
        let report = MetricReport {
            retrieval: Some(RetrievalMetrics {
                cmc: vec![0.5, 1.0],
                map: 0.75,
                evaluated_queries: 2,
                skipped_queries: 0,
            }),
            parsing: Some(IouReport { per_part: BTreeMap::from([(1, 0.5)]), foreground: Some(0.9), mean_iou: 0.5 }),
        };
        let kv = report.to_key_values();
        assert!(kv.contains("cmc@1=0.5\n"));
        assert!(kv.contains("map=0.75\n"));
        assert!(kv.contains("iou.fg=0.9\n"));
        assert!(kv.contains("iou.part.1=0.5\n"));
        assert!(report.to_text().contains("Rank-1 50.00%"));
    }
}
