//! Double-double time accumulation.
//!
//! Near quenching the step size falls many orders of magnitude below the
//! elapsed time, so a plain `f64` clock stalls. The clock is kept as an
//! unevaluated sum `hi + lo`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Time {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Time {
    pub const ZERO: Time = Time { hi: 0.0, lo: 0.0 };

    pub fn new(t: f64) -> Self {
        Time { hi: t, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    #[must_use]
    pub fn advance(self, dt: f64) -> Self {
        let (s, e) = two_sum(self.hi, dt);
        let (hi, lo) = fast_two_sum(s, e + self.lo);
        Time { hi, lo }
    }

    /// `self - other`, accurate even when the two are nearly equal.
    pub fn diff(self, other: Time) -> f64 {
        let (s, e) = two_sum(self.hi, -other.hi);
        s + (e + (self.lo - other.lo))
    }
}
