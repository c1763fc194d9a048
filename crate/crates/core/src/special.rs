//! Cancellation-free forms of the exponential tails that show up in every
//! closed form of the linear/exponential game.

/// `1 - e^{-x} * sum_{k<m} x^k / k!`, the regularized lower incomplete gamma
/// function `P(m, x)` for integer `m >= 1`.
///
/// For small `x` the direct form loses all precision; there we sum the
/// series `e^{-x} * sum_{k>=m} x^k / k!` instead.
pub fn gamma_p(m: u32, x: f64) -> f64 {
    debug_assert!(m >= 1);
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        let mut term = 1.0;
        for k in 1..=m {
            term *= x / k as f64;
        }
        let mut sum = term;
        let mut k = m;
        loop {
            k += 1;
            term *= x / k as f64;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        return sum * (-x).exp();
    }
    let mut partial = 1.0;
    let mut term = 1.0;
    for k in 1..m {
        term *= x / k as f64;
        partial += term;
    }
    -(-x).exp_m1() - (-x).exp() * (partial - 1.0)
}

/// `x + e^{-x} - 1`, accurate for small `x`.
pub fn exp_defect(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // x^2/2 - x^3/6 + x^4/24 - ...
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        loop {
            k += 1.0;
            term *= -x / k;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        return sum;
    }
    x + (-x).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_defect_both_branches() {
        for &x in &[0.1f64, 0.49, 0.5, 2.0, 30.0] {
            let direct = x + (-x).exp() - 1.0;
            assert!((exp_defect(x) - direct).abs() <= 1e-15, "x={x}");
        }
        for &x in &[1e-9, 1e-4] {
            let series = x * x / 2.0 - x * x * x / 6.0;
            assert!((exp_defect(x) / series - 1.0).abs() < 1e-9, "x={x}");
        }
    }

    fn direct(m: u32, x: f64) -> f64 {
        let mut s = 0.0;
        let mut t = 1.0;
        for k in 0..m {
            if k > 0 {
                t *= x / k as f64;
            }
            s += t;
        }
        1.0 - (-x).exp() * s
    }

    #[test]
    fn matches_direct_form_away_from_zero() {
        for m in 1..=3 {
            for &x in &[0.5, 0.9, 1.0, 1.5, 3.0, 9.0, 15.0] {
                let (a, b) = (gamma_p(m, x), direct(m, x));
                assert!((a - b).abs() < 1e-14, "m={m} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn leading_order_near_zero() {
        // P(m, x) ~ x^m / m!
        let x = 1e-6;
        assert!((gamma_p(1, x) / x - 1.0).abs() < 1e-5);
        assert!((gamma_p(2, x) / (x * x / 2.0) - 1.0).abs() < 1e-5);
        assert!((gamma_p(3, x) / (x * x * x / 6.0) - 1.0).abs() < 1e-5);
        assert_eq!(gamma_p(2, 0.0), 0.0);
    }

    #[test]
    fn continuous_across_branch_point() {
        for m in 1..=3 {
            let lo = gamma_p(m, 1.0 - 1e-12);
            let hi = gamma_p(m, 1.0);
            assert!((lo - hi).abs() < 1e-11);
        }
    }
}
