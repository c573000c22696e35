//! L1 distance between unit-truncated cones over two angular sets.
//!
//! For `a = sα`, `b = tβ` with `s, t >= 1` the infimum is attained with the
//! smaller scale equal to one, so
//! `dist = inf_{α, β} min(φ(α, β), φ(β, α))` with `φ(α, β) = min_{λ>=1} ‖α - λβ‖`.
//! `φ` is a convex piecewise-linear minimisation in `λ` and is solved exactly
//! at its breakpoints. The outer search over the two caps runs a coarse grid
//! followed by zooming refinement around the best candidates.

use smallvec::SmallVec;

use super::{l1_distance, AngularSet, Coords, DiamondCap};

/// Absolute accuracy targeted by [`set_distance`].
pub const SET_DISTANCE_TOL: f64 = 1e-6;

const STARTS: usize = 6;

/// `inf {‖a - b‖ : a ∈ C_A, b ∈ C_B}` for the cones truncated at `u = 1`.
/// Returns 0 when the (closed) sets touch or overlap.
pub fn set_distance(a: &AngularSet, b: &AngularSet) -> f64 {
    let mut best = f64::INFINITY;
    for ca in a.caps() {
        for cb in b.caps() {
            best = best.min(cap_pair_distance(ca, cb, a.positive(), b.positive()));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// `min_{λ >= 1} ‖α - λβ‖`.
fn scaled_gap(alpha: &[f64], beta: &[f64]) -> f64 {
    let eval = |lam: f64| alpha.iter().zip(beta).map(|(p, q)| (p - lam * q).abs()).sum::<f64>();
    let mut best = eval(1.0);
    for (p, q) in alpha.iter().zip(beta) {
        if *q != 0.0 {
            let lam = p / q;
            if lam > 1.0 {
                best = best.min(eval(lam));
            }
        }
    }
    best
}

fn pair_objective(alpha: &[f64], beta: &[f64]) -> f64 {
    scaled_gap(alpha, beta).min(scaled_gap(beta, alpha))
}

/// Point of the closed cap for tangent parameters `p` (first `d - 1`
/// coordinates of the perturbation), or `None` when infeasible.
fn cap_point(cap: &DiamondCap, positive: bool, p: &[f64]) -> Option<Coords> {
    let c = cap.center();
    let d = c.len();
    let mut out: Coords = c.iter().copied().collect();
    let mut sum = 0.0;
    let mut norm = 0.0;
    for k in 0..d - 1 {
        out[k] += p[k];
        sum += p[k];
        norm += p[k].abs();
    }
    out[d - 1] -= sum;
    norm += sum.abs();
    if norm > cap.radius() * (1.0 + 1e-15) {
        return None;
    }
    if positive && out.iter().any(|&v| v < 0.0) {
        return None;
    }
    Some(out)
}

fn cap_pair_distance(ca: &DiamondCap, cb: &DiamondCap, pos_a: bool, pos_b: bool) -> f64 {
    // Closed caps meet iff the centers are within the summed radii: the
    // point dividing the center segment in ratio r_A : r_B lies in both.
    if l1_distance(ca.center(), cb.center()) <= ca.radius() + cb.radius() {
        return 0.0;
    }
    let d = ca.center().len();
    let m = d - 1;
    let dim = 2 * m;
    let ha = 0.5 * ca.radius();
    let hb = 0.5 * cb.radius();
    let half_widths: SmallVec<[f64; 8]> = (0..dim).map(|i| if i < m { ha } else { hb }).collect();

    let objective = |p: &[f64]| -> f64 {
        match (cap_point(ca, pos_a, &p[..m]), cap_point(cb, pos_b, &p[m..])) {
            (Some(x), Some(y)) => pair_objective(&x, &y),
            _ => f64::INFINITY,
        }
    };

    // Coarse grid over the parameter box.
    let per_axis: usize = match dim {
        2 => 161,
        4 => 25,
        _ => 7,
    };
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let total = per_axis.pow(dim as u32);
    let mut p = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        for (i, pi) in p.iter_mut().enumerate() {
            let j = rem % per_axis;
            rem /= per_axis;
            let h = half_widths[i];
            *pi = if h == 0.0 { 0.0 } else { -h + 2.0 * h * j as f64 / (per_axis - 1) as f64 };
        }
        let v = objective(&p);
        if v.is_finite() {
            candidates.push((v, p.clone()));
        }
    }
    if candidates.is_empty() {
        // Only the centers are feasible (zero radii).
        return pair_objective(ca.center(), cb.center());
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    candidates.truncate(STARTS);

    let mut best = f64::INFINITY;
    for (start_val, start) in candidates {
        let mut center = start;
        let mut val = start_val;
        let mut widths: SmallVec<[f64; 8]> = half_widths.iter().map(|h| 2.0 * h / (per_axis - 1) as f64).collect();
        let local_axis: usize = if dim <= 2 { 9 } else { 5 };
        while widths.iter().cloned().fold(0.0, f64::max) > 1e-11 {
            let n_local = local_axis.pow(dim as u32);
            let mut q = vec![0.0; dim];
            let mut improved = center.clone();
            let mut improved_val = val;
            for idx in 0..n_local {
                let mut rem = idx;
                for i in 0..dim {
                    let j = rem % local_axis;
                    rem /= local_axis;
                    let off = -1.0 + 2.0 * j as f64 / (local_axis - 1) as f64;
                    q[i] = (center[i] + off * widths[i]).clamp(-half_widths[i], half_widths[i]);
                }
                let v = objective(&q);
                if v < improved_val {
                    improved_val = v;
                    improved.copy_from_slice(&q);
                }
            }
            center = improved;
            val = improved_val;
            for w in widths.iter_mut() {
                *w *= 0.5;
            }
        }
        best = best.min(val);
    }
    best
}
