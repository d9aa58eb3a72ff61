//! Power-of-two FFT backed by `rustfft`, with the unnormalized forward /
//! `1/N`-scaled inverse convention.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Contract(format!(
            "FFT length must be a power of two, got {n}"
        )));
    }
    Ok(())
}

/// Cached forward plan of length `n` for the calling thread.
pub fn forward_plan(n: usize) -> Result<Arc<dyn Fft<f64>>> {
    check_len(n)?;
    Ok(PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n)))
}

pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    forward_plan(buf.len())?.process(buf);
    Ok(())
}

pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf)?;
    Ok(buf)
}

pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(x.len())?;
    let mut buf = x.to_vec();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(x.len()));
    plan.process(&mut buf);
    let scale = 1.0 / x.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::numerics::rng::{normal_c64, rng_from_seed};

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(m, &v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * ((k * m) % n) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn impulse() {
        let x = [1.0, 0.0, 0.0, 0.0].map(|r| Complex64::new(r, 0.0));
        assert_eq!(fft(&x).unwrap(), vec![Complex64::new(1.0, 0.0); 4]);
    }

    #[test]
    fn tone_lands_in_one_bin() {
        let n = 64;
        let k0 = 5;
        let x: Vec<_> = (0..n)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * (k0 * m) as f64 / n as f64))
            .collect();
        let y = fft(&x).unwrap();
        for (k, v) in y.iter().enumerate() {
            let expected = if k == k0 { n as f64 } else { 0.0 };
            assert!((v - Complex64::new(expected, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn matches_naive_dft_all_lengths() {
        let mut rng = rng_from_seed(9);
        for log_n in 1..=10 {
            let n = 1usize << log_n;
            let x: Vec<_> = (0..n).map(|_| normal_c64(&mut rng)).collect();
            let fast = fft(&x).unwrap();
            let slow = naive_dft(&x);
            let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-9 * scale, "n={n}");
            }
            let back = ifft(&fast).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(fft(&[Complex64::new(0.0, 0.0); 6]).is_err());
        assert!(fft(&[]).is_err());
    }
}
