//! Debug-build peak-allocation counter for layer kernels.
//!
//! The BLOOD estimator must never assemble a full `d_out × d_in` Jacobian;
//! tests reset the counter, run the estimator and compare the peak buffer
//! length against `d_out * d_in`. In release builds this compiles to nothing.

#[cfg(debug_assertions)]
mod imp {
    use std::cell::Cell;

    thread_local! {
        static PEAK: Cell<usize> = const { Cell::new(0) };
    }

    pub fn record(n: usize) {
        PEAK.with(|p| {
            if n > p.get() {
                p.set(n);
            }
        });
    }

    pub fn reset() {
        PEAK.with(|p| p.set(0));
    }

    pub fn peak() -> Option<usize> {
        Some(PEAK.with(|p| p.get()))
    }
}

#[cfg(not(debug_assertions))]
mod imp {
    #[inline(always)]
    pub fn record(_n: usize) {}

    pub fn reset() {}

    pub fn peak() -> Option<usize> {
        None
    }
}

pub use imp::{peak, record, reset};
