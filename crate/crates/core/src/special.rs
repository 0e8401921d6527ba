use std::f64::consts::PI;

/// Bessel function of the first kind, order zero.
///
/// Evaluates `(1/pi) * integral_0^pi cos(x sin(theta)) d(theta)` with the
/// trapezoidal rule, which converges geometrically for this periodic
/// integrand once the node count exceeds `|x|`.
pub fn bessel_j0(x: f64) -> f64 {
    let nodes = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / nodes as f64;
    // endpoints both contribute cos(0) = 1 with weight 1/2
    let mut acc = 1.0;
    for i in 1..nodes {
        acc += (x * (i as f64 * h).sin()).cos();
    }
    acc / nodes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Abramowitz & Stegun Table 9.1
        let table = [
            (0.0, 1.0),
            (1.0, 0.765_197_686_557_966_6),
            (2.404_825_557_695_773, 0.0),
            (5.0, -0.177_596_771_314_338_3),
            (10.0, -0.245_935_764_451_348_3),
        ];
        for (x, want) in table {
            assert!((bessel_j0(x) - want).abs() < 1e-13, "J0({x})");
            assert!((bessel_j0(-x) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn matches_power_series() {
        for i in 0..40 {
            let x = i as f64 * 0.2;
            let mut term = 1.0;
            let mut sum = 1.0;
            for m in 1..60 {
                term *= -(x * x / 4.0) / (m * m) as f64;
                sum += term;
            }
            assert!((bessel_j0(x) - sum).abs() < 1e-12, "x = {x}");
        }
    }
}
