//! BPR travel-time function and piecewise-linear approximation of the
//! congestion power term.
//!
//! The convex term x^β over [L, U] is replaced by a convex combination
//! over a uniform breakpoint grid: continuous weights λ_0..λ_N with
//! Σλ = 1, segment binaries y_1..y_N with Σy = 1, and an adjacency chain
//! restricting the nonzero λ to one segment's endpoints. Because x^β is
//! convex for β > 1 the interpolant lies on or above the function, so
//! the approximation is a pure overestimate that vanishes at breakpoints
//! and shrinks under refinement.

use thiserror::Error;

use crate::milp::{LinearExpr, MilpModel, VarKind};

#[derive(Debug, Error)]
pub enum PlaError {
    #[error("invalid BPR parameter: {0}")]
    BadParam(String),
    #[error("grid requires upper > lower >= 0, got [{lower}, {upper}]")]
    BadInterval { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BprParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams { alpha: 0.15, beta: 4.0 }
    }
}

impl BprParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, PlaError> {
        if !(alpha > 0.0) {
            return Err(PlaError::BadParam(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 1.0) {
            return Err(PlaError::BadParam(format!("beta must exceed 1, got {beta}")));
        }
        Ok(BprParams { alpha, beta })
    }
}

/// t0 · (1 + α · (flow / capacity)^β)
pub fn bpr_time(t0: f64, params: BprParams, flow: f64, capacity: f64) -> Result<f64, PlaError> {
    if !(capacity > 0.0) {
        return Err(PlaError::BadParam(format!("capacity must be positive, got {capacity}")));
    }
    Ok(t0 * (1.0 + params.alpha * (flow / capacity).powf(params.beta)))
}

/// Uniform breakpoint grid for x^β over [lower, upper].
#[derive(Debug, Clone, PartialEq)]
pub struct PlaGrid {
    pub lower: f64,
    pub upper: f64,
    pub segments: usize,
    pub beta: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn build_grid(lower: f64, upper: f64, segments: usize, beta: f64) -> Result<PlaGrid, PlaError> {
    if !(upper > lower && lower >= 0.0) {
        return Err(PlaError::BadInterval { lower, upper });
    }
    assert!(segments >= 1, "at least one segment required");
    let n = segments as f64;
    let breakpoints: Vec<f64> =
        (0..=segments).map(|i| lower + (i as f64 / n) * (upper - lower)).collect();
    let values = breakpoints.iter().map(|a| a.powf(beta)).collect();
    Ok(PlaGrid { lower, upper, segments, beta, breakpoints, values })
}

impl PlaGrid {
    /// Interpolant value at `x`: exact linear interpolation on the segment
    /// containing `x`. This is what the MILP fragment evaluates to.
    pub fn interpolate(&self, x: f64) -> f64 {
        assert!(
            x >= self.lower - 1e-9 && x <= self.upper + 1e-9,
            "x = {x} outside [{}, {}]",
            self.lower,
            self.upper
        );
        let x = x.clamp(self.lower, self.upper);
        let width = (self.upper - self.lower) / self.segments as f64;
        let seg = (((x - self.lower) / width) as usize).min(self.segments - 1);
        let (a0, a1) = (self.breakpoints[seg], self.breakpoints[seg + 1]);
        let t = (x - a0) / (a1 - a0);
        self.values[seg] * (1.0 - t) + self.values[seg + 1] * t
    }
}

/// Max overestimation of the interpolant over the grid.
///
/// On each segment the gap secant(x) − x^β is concave with an interior
/// stationary point where the function's slope equals the secant slope:
/// x* = (slope / β)^(1/(β−1)). The bound is the largest gap over segments.
pub fn pla_error_bound(grid: &PlaGrid) -> f64 {
    let beta = grid.beta;
    let mut worst: f64 = 0.0;
    for seg in 0..grid.segments {
        let (a0, a1) = (grid.breakpoints[seg], grid.breakpoints[seg + 1]);
        let (b0, b1) = (grid.values[seg], grid.values[seg + 1]);
        let slope = (b1 - b0) / (a1 - a0);
        if slope <= 0.0 {
            continue;
        }
        let x = (slope / beta).powf(1.0 / (beta - 1.0)).clamp(a0, a1);
        let secant = b0 + slope * (x - a0);
        worst = worst.max(secant - x.powf(beta));
    }
    worst
}

/// Handles to the variables introduced by one PLA fragment.
#[derive(Debug, Clone)]
pub struct PlaFragment {
    pub lambda: Vec<String>,
    pub y: Vec<String>,
}

/// Add one convex-combination encoding to `model`.
///
/// Introduces λ/y variables named `lam({prefix}.i)` and `y({prefix}.i)`
/// with Σλ = 1, Σy = 1 and the adjacency chain, then ties them to the
/// caller's variables: `x_var = Σ λ_i a_i` and `fx_var = Σ λ_i b_i`.
/// `x_var` and `fx_var` must already be declared on the model.
pub fn pla_fragment(
    model: &mut MilpModel,
    grid: &PlaGrid,
    prefix: &str,
    x_var: &str,
    fx_var: &str,
) -> PlaFragment {
    let n = grid.segments;
    let lambda: Vec<String> = (0..=n)
        .map(|i| {
            let name = format!("lam({prefix}.{i})");
            model.add_variable(&name, VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
            name
        })
        .collect();
    let y: Vec<String> = (1..=n)
        .map(|i| {
            let name = format!("y({prefix}.{i})");
            model.add_variable(&name, VarKind::Binary, 0.0, 1.0).unwrap();
            name
        })
        .collect();

    let mut sum_l = LinearExpr::new();
    for l in &lambda {
        sum_l.add(l, 1.0);
    }
    model.add_eq(&format!("cvx({prefix})"), sum_l, 1.0).unwrap();

    let mut sum_y = LinearExpr::new();
    for v in &y {
        sum_y.add(v, 1.0);
    }
    model.add_eq(&format!("seg({prefix})"), sum_y, 1.0).unwrap();

    // λ_0 ≤ y_1; λ_i ≤ y_i + y_{i+1}; λ_N ≤ y_N.
    for i in 0..=n {
        let mut e = LinearExpr::new();
        e.add(&lambda[i], 1.0);
        if i >= 1 {
            e.add(&y[i - 1], -1.0);
        }
        if i < n {
            e.add(&y[i], -1.0);
        }
        model.add_le(&format!("adj({prefix}.{i})"), e, 0.0).unwrap();
    }

    // x = Σ λ_i a_i
    let mut xe = LinearExpr::new();
    xe.add(x_var, 1.0);
    for (l, &a) in lambda.iter().zip(&grid.breakpoints) {
        xe.add(l, -a);
    }
    model.add_eq(&format!("xlink({prefix})"), xe, 0.0).unwrap();

    // fx = Σ λ_i b_i
    let mut fe = LinearExpr::new();
    fe.add(fx_var, 1.0);
    for (l, &b) in lambda.iter().zip(&grid.values) {
        fe.add(l, -b);
    }
    model.add_eq(&format!("fxlink({prefix})"), fe, 0.0).unwrap();

    PlaFragment { lambda, y }
}

/// True when the breakpoint values form a convex sequence.
pub fn grid_is_convex(grid: &PlaGrid) -> bool {
    (1..grid.segments).all(|i| {
        let s0 = (grid.values[i] - grid.values[i - 1])
            / (grid.breakpoints[i] - grid.breakpoints[i - 1]);
        let s1 = (grid.values[i + 1] - grid.values[i])
            / (grid.breakpoints[i + 1] - grid.breakpoints[i]);
        s1 >= s0 - 1e-12
    })
}

/// Add a convex-combination encoding without segment binaries.
///
/// Valid only when the grid values are convex and the model minimizes
/// `fx_var` (directly or transitively): the lower hull of a convex
/// breakpoint sequence passes through every breakpoint, so under downward
/// pressure λ lands on two adjacent breakpoints and `fx` equals the
/// piecewise-linear interpolation — the adjacency chain of
/// [`pla_fragment`] is redundant and its binaries can be dropped, which
/// shrinks large models by orders of magnitude.
pub fn pla_fragment_convex(
    model: &mut MilpModel,
    grid: &PlaGrid,
    prefix: &str,
    x_var: &str,
    fx_var: &str,
) -> Vec<String> {
    assert!(grid_is_convex(grid), "pla_fragment_convex requires a convex grid");
    let n = grid.segments;
    let lambda: Vec<String> = (0..=n)
        .map(|i| {
            let name = format!("lam({prefix}.{i})");
            model.add_variable(&name, VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
            name
        })
        .collect();

    let mut sum_l = LinearExpr::new();
    for l in &lambda {
        sum_l.add(l, 1.0);
    }
    model.add_eq(&format!("cvx({prefix})"), sum_l, 1.0).unwrap();

    let mut xe = LinearExpr::new();
    xe.add(x_var, 1.0);
    for (l, &a) in lambda.iter().zip(&grid.breakpoints) {
        xe.add(l, -a);
    }
    model.add_eq(&format!("xlink({prefix})"), xe, 0.0).unwrap();

    // fx ≥ Σ λ_i b_i: under minimization fx settles on the interpolation.
    let mut fe = LinearExpr::new();
    fe.add(fx_var, 1.0);
    for (l, &b) in lambda.iter().zip(&grid.values) {
        fe.add(l, -b);
    }
    model.add_ge(&format!("fxlink({prefix})"), fe, 0.0).unwrap();

    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::MilpModel;

    #[test]
    fn bpr_zero_flow() {
        assert_eq!(bpr_time(1.0, BprParams::default(), 0.0, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn bpr_at_capacity() {
        let t = bpr_time(1.0, BprParams::default(), 10.0, 10.0).unwrap();
        assert!((t - 1.15).abs() < 1e-12);
    }

    #[test]
    fn bpr_overload() {
        let t = bpr_time(2.0, BprParams::default(), 20.0, 10.0).unwrap();
        assert!((t - 6.8).abs() < 1e-12);
    }

    #[test]
    fn bpr_rejects_zero_capacity() {
        assert!(bpr_time(1.0, BprParams::default(), 1.0, 0.0).is_err());
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(BprParams::new(0.0, 4.0).is_err());
        assert!(BprParams::new(0.15, 1.0).is_err());
        assert!(BprParams::new(0.15, 4.0).is_ok());
    }

    #[test]
    fn grid_unit_interval_quartic() {
        let g = build_grid(0.0, 1.0, 4, 4.0).unwrap();
        assert_eq!(g.breakpoints, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.values, vec![0.0, 0.00390625, 0.0625, 0.31640625, 1.0]);
    }

    #[test]
    fn grid_even_spacing() {
        let g = build_grid(0.0, 10.0, 5, 4.0).unwrap();
        assert_eq!(g.breakpoints, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn grid_single_segment_is_secant() {
        let g = build_grid(0.0, 1.0, 1, 4.0).unwrap();
        assert_eq!(g.breakpoints.len(), 2);
        assert!((g.interpolate(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_degenerate_interval() {
        assert!(build_grid(0.0, 0.0, 4, 4.0).is_err());
        assert!(build_grid(2.0, 1.0, 4, 4.0).is_err());
    }

    #[test]
    fn interpolant_overestimates_quartic() {
        for n in [1usize, 2, 4, 8, 16] {
            let g = build_grid(0.0, 1.0, n, 4.0).unwrap();
            for s in 0..=1000 {
                let x = s as f64 / 1000.0;
                let gap = g.interpolate(x) - x.powi(4);
                assert!(gap >= -1e-12, "N={n}, x={x}: gap {gap}");
            }
            for &a in &g.breakpoints {
                assert!((g.interpolate(a) - a.powi(4)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn error_bound_midpoint_example() {
        // Secant of x^4 over [0, 0.25] at the midpoint: overestimate ~0.0017.
        let g = build_grid(0.0, 0.25, 1, 4.0).unwrap();
        let pla = g.interpolate(0.125);
        assert!((pla - 0.001953125).abs() < 1e-12);
        assert!((0.125f64.powi(4) - 0.000244140625).abs() < 1e-15);
        assert!(pla_error_bound(&g) >= pla - 0.125f64.powi(4) - 1e-12);
    }

    #[test]
    fn error_bound_dominates_sampled_gap_and_shrinks() {
        let mut prev = f64::INFINITY;
        for n in [1usize, 2, 4, 8, 16] {
            let g = build_grid(0.0, 1.0, n, 4.0).unwrap();
            let bound = pla_error_bound(&g);
            let sampled: f64 = (0..=5000)
                .map(|s| {
                    let x = s as f64 / 5000.0;
                    g.interpolate(x) - x.powi(4)
                })
                .fold(0.0, f64::max);
            assert!(bound + 1e-12 >= sampled, "N={n}: bound {bound} < sampled {sampled}");
            assert!(bound < prev, "N={n}: no improvement ({bound} vs {prev})");
            // Refinement at least halves the worst-case gap for x^4.
            if prev.is_finite() {
                assert!(bound <= prev / 2.0 + 1e-12);
            }
            prev = bound;
        }
    }

    #[test]
    fn error_bound_closed_form_single_segment() {
        // For x^4 on [0,1] the secant is x; the gap x - x^4 peaks at
        // x* = (1/4)^(1/3).
        let g = build_grid(0.0, 1.0, 1, 4.0).unwrap();
        let x = 0.25f64.powf(1.0 / 3.0);
        let expect = x - x.powi(4);
        assert!((pla_error_bound(&g) - expect).abs() < 1e-12);
    }

    #[test]
    fn fragment_variable_and_constraint_counts() {
        let g = build_grid(0.0, 1.0, 4, 4.0).unwrap();
        let mut m = MilpModel::new();
        m.add_variable("xv", VarKind::Continuous, 0.0, 1.0).unwrap();
        m.add_variable("fv", VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
        let before_c = m.constraints().len();
        let frag = pla_fragment(&mut m, &g, "t", "xv", "fv");
        assert_eq!(frag.lambda.len(), 5);
        assert_eq!(frag.y.len(), 4);
        // 2 convexity equalities + 5 adjacency rows + 2 linking equalities.
        assert_eq!(m.constraints().len() - before_c, 9);
        assert_eq!(m.variables().len(), 2 + 5 + 4);
    }

    #[test]
    fn fragment_vertex_assignment_reproduces_values() {
        let g = build_grid(0.0, 1.0, 4, 4.0).unwrap();
        let mut m = MilpModel::new();
        m.add_variable("xv", VarKind::Continuous, 0.0, 1.0).unwrap();
        m.add_variable("fv", VarKind::Continuous, 0.0, f64::INFINITY).unwrap();
        let frag = pla_fragment(&mut m, &g, "t", "xv", "fv");
        for i in 0..=4usize {
            let mut assign: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
            for (j, l) in frag.lambda.iter().enumerate() {
                assign.insert(l.clone(), if i == j { 1.0 } else { 0.0 });
            }
            // A vertex lies on segment i (or i-1 at the right edge).
            let seg = i.min(3);
            for (j, yv) in frag.y.iter().enumerate() {
                assign.insert(yv.clone(), if j == seg { 1.0 } else { 0.0 });
            }
            assign.insert("xv".into(), g.breakpoints[i]);
            assign.insert("fv".into(), g.values[i]);
            assert!(m.satisfied_by(&assign, 1e-9), "vertex {i} should satisfy the fragment");
        }
    }
}
