//! Elementwise gate arithmetic, written once against a scalar trait.
//!
//! The same combine formulas run in three number systems: `f64` for the
//! float path, checked integers for the fixed-point path, and instrumented
//! scalars in the audit tests that count variable-by-variable products.
//! The addition-based combines never call [`GateScalar::mul`]; only the
//! conventional (multiplicative) combines do.

/// Minimal scalar arithmetic the gate stage needs.
pub trait GateScalar: Copy {
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    /// Product of two variables. Conventional gates only.
    fn mul(self, rhs: Self) -> Self;
    /// x⁺ = max(0, x)
    fn max_zero(self) -> Self;
    /// x⁻ = min(0, x)
    fn min_zero(self) -> Self;
}

impl GateScalar for f64 {
    fn add(self, rhs: f64) -> f64 {
        self + rhs
    }
    fn sub(self, rhs: f64) -> f64 {
        self - rhs
    }
    fn mul(self, rhs: f64) -> f64 {
        self * rhs
    }
    fn max_zero(self) -> f64 {
        self.max(0.0)
    }
    fn min_zero(self) -> f64 {
        self.min(0.0)
    }
}

/// Addition-based state update: (h + u⁻)⁺ + (ĥ − u⁺)⁺.
///
/// Large positive u keeps the previous state, large negative u swaps in the
/// proposal, matching the conventional gate at both extremes.
pub fn add_gate_combine<T: GateScalar>(h: T, u: T, h_hat: T) -> T {
    let keep = h.add(u.min_zero()).max_zero();
    let swap = h_hat.sub(u.max_zero()).max_zero();
    keep.add(swap)
}

/// Shifted variant for states living in [-1, 1]:
/// (h + (u−1)⁻ + 1)⁺ + (ĥ − (u+1)⁺ + 1)⁺ − 1.
///
/// `one` is the constant 1 in the caller's number system.
pub fn add_gate_combine_shifted<T: GateScalar>(h: T, u: T, h_hat: T, one: T) -> T {
    let keep = h.add(u.sub(one).min_zero()).add(one).max_zero();
    let swap = h_hat.sub(u.add(one).max_zero()).add(one).max_zero();
    keep.add(swap).sub(one)
}

/// Addition-based reset applied to the state before the proposal sees it:
/// (h + r⁻)⁺.
pub fn add_reset_state<T: GateScalar>(h: T, r: T) -> T {
    h.add(r.min_zero()).max_zero()
}

/// Addition-based memory update: (c − f)⁺ + (ĉ − i)⁺.
pub fn add_cell_combine<T: GateScalar>(c: T, f: T, i: T, c_hat: T) -> T {
    c.sub(f).max_zero().add(c_hat.sub(i).max_zero())
}

/// Conventional convex blend z⊙h + (1−z)⊙ĥ, written as z·h + (ĥ − z·ĥ)
/// so no constant is needed. Costs two variable products per element.
pub fn mul_gate_combine<T: GateScalar>(h: T, z: T, h_hat: T) -> T {
    z.mul(h).add(h_hat.sub(z.mul(h_hat)))
}

/// Conventional memory update f⊙c + i⊙ĉ. Two variable products per element.
pub fn mul_cell_combine<T: GateScalar>(c: T, f: T, i: T, c_hat: T) -> T {
    f.mul(c).add(i.mul(c_hat))
}
