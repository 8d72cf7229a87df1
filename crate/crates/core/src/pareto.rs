//! Non-dominated front extraction for (energy, error) point clouds.
//!
//! Both coordinates are minimized. A point is dominated when some other point
//! is no worse in both coordinates and strictly better in at least one;
//! exact duplicates of a front point stay on the front.

/// Indices of the non-dominated points, ordered by ascending energy (ties by
/// error, then by original index).
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best_error = f64::INFINITY;
    let mut last_kept: Option<(f64, f64)> = None;
    for idx in order {
        let p = points[idx];
        if p.1 < best_error {
            best_error = p.1;
            last_kept = Some(p);
            front.push(idx);
        } else if last_kept == Some(p) {
            // exact duplicate of the preceding front point
            front.push(idx);
        }
    }
    front
}

/// The non-dominated points themselves, sorted by ascending energy.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pareto_indices(points).into_iter().map(|i| points[i]).collect()
}

/// Quadratic reference implementation; kept public for oracle checks.
pub fn pareto_indices_brute_force(points: &[(f64, f64)]) -> Vec<usize> {
    let mut front: Vec<usize> = (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, q)| {
                j != i
                    && q.0 <= points[i].0
                    && q.1 <= points[i].1
                    && (q.0 < points[i].0 || q.1 < points[i].1)
            })
        })
        .collect();
    front.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    front
}
