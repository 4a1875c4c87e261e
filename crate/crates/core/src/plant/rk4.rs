use nalgebra::{allocator::Allocator, DefaultAllocator, Dim, OVector};

use super::PlantError;
use crate::Scalar;

/// One classical fourth-order Runge–Kutta step of the autonomous system
/// `ẋ = f(x)`. Fails on the first non-finite component of the result.
pub fn rk4_step<T, D, F>(mut f: F, x: &OVector<T, D>, h: T) -> Result<OVector<T, D>, PlantError>
where
    T: Scalar,
    D: Dim,
    DefaultAllocator: Allocator<D>,
    F: FnMut(&OVector<T, D>) -> OVector<T, D>,
{
    if !(h > T::zero()) || !h.is_finite() {
        return Err(PlantError::InvalidStep(h.to_f64_lossy()));
    }
    let half = h * T::lit(0.5);
    let k1 = f(x);
    let k2 = f(&(x + &k1 * half));
    let k3 = f(&(x + &k2 * half));
    let k4 = f(&(x + &k3 * h));
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let next = x + (k1 + (k2 + k3) * two + k4) * sixth;
    if let Some(index) = next.iter().position(|v| !v.is_finite()) {
        return Err(PlantError::Divergence { index });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, Vector1, Vector2};

    #[test]
    fn decay_one_step() {
        let x = rk4_step(|x: &Vector1<f64>| -x, &Vector1::new(1.0), 0.1).unwrap();
        // 1 − h + h²/2 − h³/6 + h⁴/24
        assert!((x[0] - 0.9048375).abs() < 1e-7);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_is_identity() {
        let x0 = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let x = rk4_step(|x: &DVector<f64>| DVector::zeros(x.len()), &x0, 1e-3).unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn oscillator_amplitude_drift() {
        let h = 0.01;
        let steps = (2.0 * std::f64::consts::PI / h).round() as usize;
        let mut x = Vector2::new(1.0, 0.0);
        for _ in 0..steps {
            x = rk4_step(|x: &Vector2<f64>| Vector2::new(x[1], -x[0]), &x, h).unwrap();
        }
        assert!((x.norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn reports_the_first_diverging_component() {
        let x0 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let err = rk4_step(
            |x: &DVector<f64>| DVector::from_vec(vec![0.0, x[1] * f64::INFINITY, f64::NAN]),
            &x0,
            1e-3,
        )
        .unwrap_err();
        assert_eq!(err, PlantError::Divergence { index: 1 });
        assert!(matches!(rk4_step(|x: &Vector1<f64>| *x, &Vector1::new(1.0), 0.0), Err(PlantError::InvalidStep(_))));
    }

    #[test]
    fn fourth_order_convergence() {
        // ẋ = −x + cos(3y), ẏ = 1 carried as a state to keep it autonomous.
        let f = |s: &Vector2<f64>| Vector2::new(-s[0] + (3.0 * s[1]).cos(), 1.0);
        let run = |h: f64| {
            let mut s = Vector2::new(1.0, 0.0);
            for _ in 0..(1.0 / h).round() as usize {
                s = rk4_step(f, &s, h).unwrap();
            }
            s[0]
        };
        let reference = run(1.0 / 4096.0);
        let ratio = (run(0.1) - reference).abs() / (run(0.05) - reference).abs();
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }
}
