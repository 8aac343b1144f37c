//! Compensated (Neumaier) summation for long streaming accumulations.

/// Running sum with a Neumaier correction term.
///
/// Keeps the accumulated rounding error of a length-`n` sum near machine
/// epsilon instead of growing like `n * eps`.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.correction += (self.sum - t) + value;
        } else {
            self.correction += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.correction
    }

    /// Merge another accumulator into this one. Summation order changes, but
    /// the compensated error stays at the same magnitude, so merged shards
    /// agree with a sequential pass to ~1 ulp.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.correction);
    }
}

/// Integer power by square-and-multiply, one deterministic rounding chain.
pub fn pow_int(x: f64, exponent: u32) -> f64 {
    let mut result = 1.0;
    let mut base = x;
    let mut e = exponent;
    while e > 0 {
        if e & 1 == 1 {
            result *= base;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    result
}
