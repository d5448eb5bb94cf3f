use crate::corpus::IndexSet;

use super::AnnotationPair;

fn nearest_distance(anchors: &IndexSet, s: usize) -> Option<usize> {
    let below = anchors.range(..=s).next_back().map(|&g| s - g);
    let above = anchors.range(s..).next().map(|&g| g - s);
    match (below, above) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

/// Promotes sentences marked by only one annotator into the other
/// annotator's set when they belong to a contiguous run of marked sentences
/// that contains an agreed sentence, and lie within `max_distance` of the
/// nearest agreed sentence.
///
/// Agreed sentences are taken from `pair.anchors` when present, otherwise
/// from `a ∩ b`; the result records them as its anchors, which makes a
/// second application a no-op. Both sets only grow and their union is
/// unchanged.
pub fn extend_annotations(pair: &AnnotationPair, max_distance: usize) -> AnnotationPair {
    let anchors = pair.anchors.clone().unwrap_or_else(|| pair.intersection());
    let mut out = pair.clone();
    if anchors.is_empty() {
        out.anchors = Some(anchors);
        return out;
    }

    let union: IndexSet = pair.a.union(&pair.b).copied().collect();
    // maximal runs of consecutive marked indices
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &i in &union {
        match runs.last_mut() {
            Some((_, hi)) if *hi + 1 == i => *hi = i,
            _ => runs.push((i, i)),
        }
    }

    for (lo, hi) in runs {
        if anchors.range(lo..=hi).next().is_none() {
            continue;
        }
        for s in lo..=hi {
            let in_a = pair.a.contains(&s);
            let in_b = pair.b.contains(&s);
            if in_a == in_b {
                continue;
            }
            if nearest_distance(&anchors, s).is_some_and(|d| d <= max_distance) {
                out.a.insert(s);
                out.b.insert(s);
            }
        }
    }
    out.anchors = Some(anchors);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> IndexSet {
        xs.iter().copied().collect()
    }

    fn pair(a: &[usize], b: &[usize]) -> AnnotationPair {
        AnnotationPair::new("q", "d", set(a), set(b), 20).unwrap()
    }

    #[test]
    fn adjacent_single_mark_is_promoted() {
        let ext = extend_annotations(&pair(&[4, 5], &[5]), 3);
        assert!(ext.a.is_superset(&set(&[4, 5])));
        assert!(ext.b.is_superset(&set(&[4, 5])));
    }

    #[test]
    fn distant_single_mark_is_not_promoted() {
        let ext = extend_annotations(&pair(&[5, 9], &[5]), 3);
        assert_eq!(ext.b, set(&[5]));
        assert_eq!(ext.a, set(&[5, 9]));
    }

    #[test]
    fn run_is_capped_at_max_distance() {
        let ext = extend_annotations(&pair(&[5, 6, 7, 8, 9], &[5]), 3);
        assert_eq!(ext.b, set(&[5, 6, 7, 8]));
        assert_eq!(ext.a, set(&[5, 6, 7, 8, 9]));
    }

    #[test]
    fn gap_breaks_the_run() {
        // 7 is within distance 2 of the agreed sentence but 6 is unmarked
        let ext = extend_annotations(&pair(&[5, 7], &[5]), 3);
        assert_eq!(ext.b, set(&[5]));
    }

    #[test]
    fn runs_grow_from_both_annotators() {
        // a marks 2,3 and b marks 4,5; agreed 3..=4 is empty, so nothing moves
        let ext = extend_annotations(&pair(&[2, 3], &[4, 5]), 3);
        assert_eq!(ext.a, set(&[2, 3]));
        // with an agreed sentence in the middle, both sides fill in
        let ext = extend_annotations(&pair(&[2, 3, 4], &[4, 5, 6]), 3);
        assert_eq!(ext.a, set(&[2, 3, 4, 5, 6]));
        assert_eq!(ext.b, ext.a);
    }

    #[test]
    fn second_application_is_a_no_op() {
        let once = extend_annotations(&pair(&[5, 6, 7, 8, 9, 10], &[5]), 3);
        let twice = extend_annotations(&once, 3);
        assert_eq!(once, twice);
    }

    #[test]
    fn no_agreement_means_no_promotion() {
        let p = pair(&[1, 2], &[3, 4]);
        let ext = extend_annotations(&p, 3);
        assert_eq!(ext.a, p.a);
        assert_eq!(ext.b, p.b);
    }
}
