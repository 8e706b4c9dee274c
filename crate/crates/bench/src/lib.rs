//! Shared inputs for the benchmarks under `benches/`.

use num_complex::Complex64 as C64;
use stokes_lab::matching::OperatorCoeffs;
use stokes_lab::PotentialParams;

pub fn params() -> PotentialParams {
    PotentialParams { a2: C64::new(1.0, 0.5), a3: C64::new(-0.5, 1.0) }
}

pub fn b_i() -> OperatorCoeffs {
    OperatorCoeffs::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0)).expect("admissible")
}
