//! Matrix exponential by scaling-and-squaring with a truncated Taylor
//! series. The input is halved until its 1-norm drops below 1/2, the series
//! is summed to machine precision, and the result is squared back up. For
//! the protocol-sized matrices in this crate the achieved accuracy is far
//! below the 1e-10 oracle contract.

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

const MAX_TERMS: usize = 64;

pub fn expm<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::analysis("expm requires a square matrix"));
    }
    let n = a.rows();
    let half = real::<T>(0.5);

    // scaling: ||A/2^s||_1 <= 1/2
    let norm = a.norm_one();
    let mut s = 0u32;
    let mut scaled = a.clone();
    if norm > half {
        let ratio = (norm / half).to_real();
        s = ratio.log2().ceil().max(0.0) as u32;
        let factor = real::<T>(0.5f64.powi(s as i32));
        scaled = a.scale(factor);
    }

    // Taylor: sum_k scaled^k / k!
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=MAX_TERMS {
        term = term.matmul(&scaled)?.scale(T::one() / real::<T>(k as f64));
        sum = sum.add(&term)?;
        if term.norm_max() <= sum.norm_max() * T::epsilon() {
            break;
        }
    }

    for _ in 0..s {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}
