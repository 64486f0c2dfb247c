use crate::error::{Error, Result};

/// `p` strictly dominates `q`: better on every axis.
pub fn dominates(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| a > b)
}

/// Indices of the points not strictly dominated by any other point.
/// Exact duplicates are kept once (the first occurrence).
pub fn pareto_indices(points: &[Vec<f64>]) -> Vec<usize> {
    let mut keep = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if points.iter().any(|q| dominates(q, p)) {
            continue;
        }
        if points[..i].iter().any(|q| q == p) {
            continue;
        }
        keep.push(i);
    }
    keep
}

/// The nondominated subset of `points`, duplicates kept once, in input order.
pub fn pareto_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pareto_indices(points).into_iter().map(|i| points[i].clone()).collect()
}

/// Exact hypervolume of the union of boxes `[reference, p]` for K = 2..=4.
/// Points that do not exceed the reference on every axis add nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let k = reference.len();
    if !(2..=4).contains(&k) {
        return Err(Error::Unsupported(format!("hypervolume supports 2 to 4 objectives, got {k}")));
    }
    if reference.iter().any(|r| !r.is_finite()) {
        return Err(Error::Config("hypervolume reference must be finite".into()));
    }
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if p.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: p.len() });
        }
        if p.iter().zip(reference).all(|(x, r)| x > r) {
            // Work relative to the reference so the sweep starts at zero.
            pts.push(p.iter().zip(reference).map(|(x, r)| x - r).collect());
        }
    }
    Ok(sweep(&mut pts, k))
}

/// Slices along the last axis: between consecutive distinct heights the
/// cross-section is the (k−1)-dimensional union of the taller points.
fn sweep(pts: &mut [Vec<f64>], k: usize) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    if k == 1 {
        return pts.iter().map(|p| p[0]).fold(0.0, f64::max);
    }
    pts.sort_by(|a, b| b[k - 1].total_cmp(&a[k - 1]));
    if k == 2 {
        let mut area = 0.0;
        let mut best_x = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            best_x = best_x.max(p[0]);
            let next = pts.get(i + 1).map_or(0.0, |q| q[1]);
            area += best_x * (p[1] - next);
        }
        return area;
    }
    let mut vol = 0.0;
    let mut prefix: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        prefix.push(pts[i][..k - 1].to_vec());
        let next = pts.get(i + 1).map_or(0.0, |q| q[k - 1]);
        let h = pts[i][k - 1] - next;
        if h > 0.0 {
            let mut slice = prefix.clone();
            vol += h * sweep(&mut slice, k - 1);
        }
    }
    vol
}
