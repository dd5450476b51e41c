use std::f64::consts::PI;

/// Wraps an angle into (-pi, pi].
pub fn wrap(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed shortest difference `to - from`, in (-pi, pi].
pub fn diff(to: f64, from: f64) -> f64 {
    wrap(to - from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_half_open_at_minus_pi() {
        assert_eq!(wrap(-PI), PI);
        assert_eq!(wrap(PI), PI);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn diff_takes_short_way_round() {
        let d = diff(-PI + 0.1, PI - 0.1);
        assert!((d - 0.2).abs() < 1e-12);
    }
}
