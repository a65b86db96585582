use super::SweepPoint;

/// `a` dominates `b`: no worse in both objectives and better in at least one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the non-dominated (x, y) pairs, by ascending x then y then index.
/// Exact duplicates of a front member are all kept.
pub fn pareto_indices(objectives: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (objectives[a], objectives[b]);
        pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
    });
    // After sorting, a point survives iff its y beats the last survivor's, or it
    // duplicates the last survivor exactly.
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let p = objectives[i];
        let keep = match front.last() {
            None => true,
            Some(&k) => {
                let q = objectives[k];
                p.1 < q.1 || (p.1 == q.1 && p.0 == q.0)
            }
        };
        if keep {
            front.push(i);
        }
    }
    front
}

/// Points not dominated in (total energy, t_mem), by ascending energy.
pub fn pareto_front(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let obj: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.energy.total, p.latency.t_mem))
        .collect();
    pareto_indices(&obj)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        assert_eq!(pareto_indices(&[(3.0, 4.0)]), vec![0]);
    }

    #[test]
    fn strictly_better_wins() {
        assert_eq!(pareto_indices(&[(3.0, 4.0), (2.0, 1.0)]), vec![1]);
        assert_eq!(pareto_indices(&[(2.0, 4.0), (2.0, 1.0)]), vec![1]);
    }

    #[test]
    fn trade_off_and_duplicates() {
        let pts = [(1.0, 5.0), (2.0, 2.0), (2.0, 2.0), (3.0, 1.0), (3.0, 3.0)];
        assert_eq!(pareto_indices(&pts), vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty() {
        assert!(pareto_indices(&[]).is_empty());
    }
}
