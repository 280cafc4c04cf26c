//! Time-axis quadrature helpers over snapshot series.

/// Trapezoid rule over a uniformly spaced scalar series.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    dt * (0.5 * values[0] + inner + 0.5 * values[n - 1])
}

/// Composite Simpson rule over a uniformly spaced scalar series.
///
/// Falls back to a 3/8 panel at the front when the number of steps is odd,
/// and to the trapezoid rule for fewer than three steps.
pub fn simpson(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let steps = n - 1;
    if steps < 3 && steps % 2 == 1 {
        return trapezoid(values, dt);
    }
    let mut acc = 0.0;
    let mut i = 0;
    if steps % 2 == 1 {
        acc += 3.0 * dt / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]);
        i = 3;
    }
    while i + 2 <= steps {
        acc += dt / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
        i += 2;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactness_on_polynomials() {
        let dt = 0.1;
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * dt).collect();
        let cubic: Vec<f64> = grid.iter().map(|t| t * t * t - 2.0 * t + 1.0).collect();
        // integral of t^3 - 2t + 1 over [0,1] = 1/4 - 1 + 1
        assert!((simpson(&cubic, dt) - 0.25).abs() < 1e-14);
        let linear: Vec<f64> = grid.iter().map(|t| 3.0 * t).collect();
        assert!((trapezoid(&linear, dt) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn simpson_odd_step_count() {
        let dt = 0.2;
        let grid: Vec<f64> = (0..=5).map(|i| i as f64 * dt).collect();
        let quad: Vec<f64> = grid.iter().map(|t| t * t).collect();
        assert!((simpson(&quad, dt) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_lengths() {
        assert_eq!(trapezoid(&[1.0], 0.1), 0.0);
        assert_eq!(simpson(&[1.0, 2.0], 0.1), trapezoid(&[1.0, 2.0], 0.1));
    }
}
