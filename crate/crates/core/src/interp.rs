//! Piecewise-linear lookup on an ascending grid.

/// Position of `x` on `grid` as (lower index, fraction). Clamps outside the grid.
pub(crate) fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    debug_assert!(!grid.is_empty());
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = grid.partition_point(|&g| g <= x);
    let lo = hi - 1;
    let span = grid[hi] - grid[lo];
    let frac = if span > 0.0 { (x - grid[lo]) / span } else { 0.0 };
    (lo, frac)
}

/// Linear interpolation of `values` over `grid`, clamped at the endpoints.
pub fn lerp_table(grid: &[f64], values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    if values.len() == 1 {
        return values[0];
    }
    let (i, f) = locate(grid, x);
    values[i] + f * (values[i + 1] - values[i])
}

/// True if `grid` is strictly increasing.
pub(crate) fn strictly_increasing(grid: &[f64]) -> bool {
    grid.windows(2).all(|w| w[1] > w[0])
}

/// Cumulative trapezoidal integral over a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    values
        .windows(2)
        .map(|w| 0.5 * dt * (w[0] + w[1]))
        .sum()
}
