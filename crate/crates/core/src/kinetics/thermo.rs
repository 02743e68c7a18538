//! NASA 7-coefficient polynomials.

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314462618;
/// Standard-state pressure for Gibbs energies, Pa.
pub const STANDARD_PRESSURE: f64 = 1.0e5;

#[derive(Clone, Debug, PartialEq)]
pub struct Nasa7 {
    pub t_low: f64,
    pub t_mid: f64,
    pub t_high: f64,
    /// Coefficients valid on `[t_low, t_mid]`.
    pub low: [f64; 7],
    /// Coefficients valid on `[t_mid, t_high]`.
    pub high: [f64; 7],
}

impl Nasa7 {
    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t < self.t_mid {
            &self.low
        } else {
            &self.high
        }
    }

    pub fn in_range(&self, t: f64) -> bool {
        t >= self.t_low && t <= self.t_high
    }

    /// Cp/R.
    pub fn cp_r(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])))
    }

    /// H/(RT).
    pub fn h_rt(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * (a[3] / 4.0 + t * a[4] / 5.0))) + a[5] / t
    }

    /// S°/R at the standard pressure.
    pub fn s_r(&self, t: f64) -> f64 {
        let a = self.coeffs(t);
        a[0] * t.ln() + t * (a[1] + t * (a[2] / 2.0 + t * (a[3] / 3.0 + t * a[4] / 4.0))) + a[6]
    }

    /// G°/(RT).
    pub fn g_rt(&self, t: f64) -> f64 {
        self.h_rt(t) - self.s_r(t)
    }
}
