//! Dense state vectors over the computational basis.
//!
//! Basis index bit `nu` equal to 0 means spin up at site `nu` (the +1
//! eigenstate of `Z`), so index 0 is the fully polarized reference state.

use num_complex::Complex;

use crate::scalar::Scalar;

/// `|up ... up>` on `n` sites.
pub fn reference_state<S: Scalar>(n: usize) -> Vec<Complex<S>> {
    let mut psi = vec![Complex::new(S::zero(), S::zero()); 1usize << n];
    psi[0] = Complex::new(S::one(), S::zero());
    psi
}

/// Squared 2-norm.
pub fn norm_sqr<S: Scalar>(psi: &[Complex<S>]) -> S {
    psi.iter().map(|a| a.norm_sqr()).sum()
}

/// `<a|b>` with the conjugate on `a`.
pub fn inner<S: Scalar>(a: &[Complex<S>], b: &[Complex<S>]) -> Complex<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .fold(Complex::new(S::zero(), S::zero()), |acc, t| acc + t)
}

/// Rescales to unit norm. No-op on the zero vector.
pub fn normalize<S: Scalar>(psi: &mut [Complex<S>]) {
    let n = norm_sqr(psi).sqrt();
    if n > S::zero() {
        let inv = S::one() / n;
        for a in psi.iter_mut() {
            *a = a.scale(inv);
        }
    }
}

/// Whether the norm is within [`Scalar::unit_tol`] of one.
pub fn is_normalized<S: Scalar>(psi: &[Complex<S>]) -> bool {
    (norm_sqr(psi) - S::one()).abs() <= S::unit_tol()
}

/// `Z`-eigenvalue sum of a basis state: `n - 2 popcount(i)`.
#[inline]
pub fn zsum<S: Scalar>(n: usize, index: usize) -> S {
    let pop = index.count_ones() as i64;
    S::from_i64(n as i64 - 2 * pop).expect("site count fits in scalar")
}
