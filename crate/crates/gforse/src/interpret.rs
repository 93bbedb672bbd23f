//! Interpretation products: theta-based feature importance and sample-level
//! group explanation via the learned correlation matrix.

use std::io::Write;

use crate::kernel::{self, CorrelationMatrix};
use crate::kriging::KrigingModel;
use crate::{c, Error, Result, Scalar};

/// One row of the importance ranking.
#[derive(Debug, Clone)]
pub struct ImportanceEntry<F> {
    pub name: String,
    pub index: usize,
    pub theta: F,
    /// Position of log10(theta) within the search bounds, clamped to [0,1].
    pub normalized_score: F,
    /// theta within a decade of the lower bound; the dimension carries no
    /// signal the optimizer could use.
    pub inactive: bool,
}

#[derive(Debug, Clone)]
pub struct ImportanceReport<F> {
    /// Sorted by theta descending, ties broken by ascending feature index.
    pub entries: Vec<ImportanceEntry<F>>,
    pub theta_bounds: (F, F),
}

/// Ranks features by the fitted activity parameters.
pub fn feature_importance<F: Scalar>(
    model: &KrigingModel<F>,
    names: &[String],
) -> Result<ImportanceReport<F>> {
    let k = model.dim();
    if names.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: names.len(),
        });
    }
    let (lo, hi) = model.theta_bounds();
    let log_lo = lo.log10();
    let span = hi.log10() - log_lo;
    let inactive_cutoff = lo * c(10.0);
    let mut entries: Vec<ImportanceEntry<F>> = model
        .params()
        .theta
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let score = ((theta.log10() - log_lo) / span)
                .max(F::zero())
                .min(F::one());
            ImportanceEntry {
                name: names[i].clone(),
                index: i,
                theta,
                normalized_score: score,
                inactive: theta <= inactive_cutoff,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.theta
            .partial_cmp(&a.theta)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    Ok(ImportanceReport {
        entries,
        theta_bounds: (lo, hi),
    })
}

/// Cluster-ordered correlation matrix over training samples.
#[derive(Debug, Clone)]
pub struct GroupExplanation<F> {
    pub psi: CorrelationMatrix<F>,
    pub order: Vec<usize>,
    pub labels: Option<Vec<String>>,
}

/// Rebuilds the correlation matrix at the fitted parameters and orders the
/// samples by agglomerative clustering.
pub fn group_explanation<F: Scalar>(model: &KrigingModel<F>) -> Result<GroupExplanation<F>> {
    let psi = kernel::build_matrix(model.x(), model.params(), model.nugget())?;
    let order = cluster_order(&psi);
    Ok(GroupExplanation {
        psi,
        order,
        labels: None,
    })
}

/// Average-linkage agglomerative clustering on dissimilarity `1 - psi`.
/// Returns the dendrogram leaf order. Ties merge the lowest-index clusters
/// first, so the permutation is deterministic.
pub fn cluster_order<F: Scalar>(psi: &CorrelationMatrix<F>) -> Vec<usize> {
    let n = psi.dim();
    if n <= 1 {
        return (0..n).collect();
    }
    struct Cluster {
        members: Vec<usize>,
        min_index: usize,
    }
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            members: vec![i],
            min_index: i,
        })
        .collect();
    let dis = |i: usize, j: usize| F::one() - psi.get(i, j);

    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, F)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = F::zero();
                for &i in &clusters[a].members {
                    for &j in &clusters[b].members {
                        sum = sum + dis(i, j);
                    }
                }
                let avg =
                    sum / c::<F>((clusters[a].members.len() * clusters[b].members.len()) as f64);
                let better = match &best {
                    None => true,
                    Some((ba, bb, bd)) => {
                        avg < *bd
                            || (avg == *bd
                                && (clusters[a].min_index, clusters[b].min_index)
                                    < (clusters[*ba].min_index, clusters[*bb].min_index))
                    }
                };
                if better {
                    best = Some((a, b, avg));
                }
            }
        }
        let (a, b, _) = best.expect("at least one pair");
        let taken = clusters.remove(b);
        clusters[a].members.extend(taken.members);
        clusters[a].min_index = clusters[a].min_index.min(taken.min_index);
    }
    clusters.pop().unwrap().members
}

/// Heatmap CSV: first row is the permutation, then the reordered psi values
/// at 9 significant digits.
pub fn write_heatmap_csv<F: Scalar, W: Write>(expl: &GroupExplanation<F>, w: &mut W) -> Result<()> {
    let order = &expl.order;
    let line: Vec<String> = order.iter().map(|i| i.to_string()).collect();
    writeln!(w, "{}", line.join(","))?;
    for &i in order {
        let row: Vec<String> = order
            .iter()
            .map(|&j| format!("{:.8e}", expl.psi.get(i, j).to_f64().unwrap()))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Plain portable-graymap render of the ordered matrix, pixel = round(255 psi).
pub fn write_pgm<F: Scalar, W: Write>(expl: &GroupExplanation<F>, w: &mut W) -> Result<()> {
    let n = expl.order.len();
    writeln!(w, "P2")?;
    writeln!(w, "{n} {n}")?;
    writeln!(w, "255")?;
    for &i in &expl.order {
        let row: Vec<String> = expl
            .order
            .iter()
            .map(|&j| {
                let v = (expl.psi.get(i, j).to_f64().unwrap() * 255.0).round();
                format!("{}", v.clamp(0.0, 255.0) as u32)
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::linalg::Matrix;

    fn model_with_theta(theta: Vec<f64>) -> KrigingModel<f64> {
        use rand::{Rng, SeedableRng};
        let k = theta.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..k).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let x = Matrix::from_rows(rows).unwrap();
        let y: Vec<f64> = x.iter_rows().map(|r| r.iter().sum::<f64>()).collect();
        KrigingModel::from_params(
            x,
            y,
            KernelParams::new(theta),
            1e-10,
            1e-4,
            (1e-4, 1e2),
        )
        .unwrap()
    }

    #[test]
    fn importance_sorts_by_theta() {
        let m = model_with_theta(vec![0.5, 20.0, 3.0]);
        let names = vec!["a".into(), "b".into(), "c".into()];
        let rep = feature_importance(&m, &names).unwrap();
        let order: Vec<&str> = rep.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(order, vec!["b", "c", "a"]);
    }

    #[test]
    fn importance_tie_break_keeps_input_order() {
        let m = model_with_theta(vec![1.0, 1.0, 1.0]);
        let names = vec!["x1".into(), "x2".into(), "x3".into()];
        let rep = feature_importance(&m, &names).unwrap();
        let idx: Vec<usize> = rep.entries.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn importance_scores_at_bound_endpoints() {
        let m = model_with_theta(vec![1e2, 1e-4]);
        let rep = feature_importance(&m, &["hi".into(), "lo".into()]).unwrap();
        assert_eq!(rep.entries[0].normalized_score, 1.0);
        assert_eq!(rep.entries[1].normalized_score, 0.0);
        assert!(rep.entries[1].inactive);
        assert!(!rep.entries[0].inactive);
    }

    #[test]
    fn importance_name_count_mismatch() {
        let m = model_with_theta(vec![1.0, 2.0]);
        assert!(matches!(
            feature_importance(&m, &["only".into()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cluster_order_two_points() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let psi = kernel::build_matrix(&x, &KernelParams::new(vec![1.0]), 0.0).unwrap();
        assert_eq!(cluster_order(&psi), vec![0, 1]);
    }

    #[test]
    fn cluster_order_is_permutation_and_ties_deterministic() {
        // equidistant points in 2-D: all off-diagonals nearly equal
        let x = Matrix::from_rows(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.5, 0.8660254037844386],
        ])
        .unwrap();
        let psi = kernel::build_matrix(&x, &KernelParams::new(vec![1.0, 1.0]), 0.0).unwrap();
        let o1 = cluster_order(&psi);
        let o2 = cluster_order(&psi);
        assert_eq!(o1, o2);
        let mut sorted = o1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn cluster_order_blocks_stay_contiguous() {
        // rows 0,1 near each other; rows 2,3 near each other; blocks far apart
        let x = Matrix::from_rows(vec![
            vec![0.0],
            vec![0.05],
            vec![0.95],
            vec![1.0],
        ])
        .unwrap();
        let psi = kernel::build_matrix(&x, &KernelParams::new(vec![20.0]), 0.0).unwrap();
        let order = cluster_order(&psi);
        let pos: Vec<usize> = (0..4).map(|i| order.iter().position(|&v| v == i).unwrap()).collect();
        assert_eq!((pos[0] as i64 - pos[1] as i64).abs(), 1, "order {order:?}");
        assert_eq!((pos[2] as i64 - pos[3] as i64).abs(), 1, "order {order:?}");
    }

    #[test]
    fn group_explanation_duplicates_adjacent() {
        let x = Matrix::from_rows(vec![
            vec![0.2],
            vec![0.9],
            vec![0.2],
        ])
        .unwrap();
        let y = vec![1.0, 2.0, 1.5];
        let m: KrigingModel<f64> = KrigingModel::from_params(
            x,
            y,
            KernelParams::new(vec![5.0]),
            1e-8,
            1e-4,
            (1e-4, 1e2),
        )
        .unwrap();
        let g = group_explanation(&m).unwrap();
        assert!((g.psi.get(0, 2) - 1.0).abs() < 1e-12);
        let p0 = g.order.iter().position(|&v| v == 0).unwrap();
        let p2 = g.order.iter().position(|&v| v == 2).unwrap();
        assert_eq!((p0 as i64 - p2 as i64).abs(), 1);
        // psi matches build_matrix entry for entry
        let rebuilt = kernel::build_matrix(m.x(), m.params(), m.nugget()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.psi.get(i, j), rebuilt.get(i, j));
            }
        }
    }

    #[test]
    fn heatmap_and_pgm_formats() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let y = vec![0.0, 1.0];
        let m = KrigingModel::from_params(
            x,
            y,
            KernelParams::new(vec![1.0]),
            0.0,
            1e-4,
            (1e-4, 1e2),
        )
        .unwrap();
        let g = group_explanation(&m).unwrap();

        let mut csv = Vec::new();
        write_heatmap_csv(&g, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "0,1");
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((row[1] - (-1.0f64).exp()).abs() < 1e-8);

        let mut pgm = Vec::new();
        write_pgm(&g, &mut pgm).unwrap();
        let text = String::from_utf8(pgm).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "P2");
        assert_eq!(lines.next().unwrap(), "2 2");
        assert_eq!(lines.next().unwrap(), "255");
        let expected = ((-1.0f64).exp() * 255.0).round() as u32;
        assert_eq!(
            lines.next().unwrap(),
            format!("255 {expected}")
        );
    }
}
