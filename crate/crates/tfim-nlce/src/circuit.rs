//! Parameterized circuits built from `exp(i theta X X)` and
//! `exp(i theta Z)` gates, with adjoint-mode gradients.
//!
//! A circuit is a flat gate list; each gate references a slot in the
//! parameter vector, and several gates may share one slot (tied
//! parameters). Gradients accumulate over all gates of a slot.

use num_complex::Complex;

use crate::lattice::Cluster;
use crate::model::{apply_hamiltonian, energy_expectation, TfimParams};
use crate::scalar::Scalar;
use crate::state::reference_state;

/// One-parameter gate generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// `exp(i theta X_a X_b)`.
    Xx { a: usize, b: usize },
    /// `exp(i theta Z_site)`.
    Z { site: usize },
}

/// Gate sequence over `n` sites with `n_slots` shared parameters.
/// Gates are applied to the state in list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    n: usize,
    ops: Vec<(Gate, usize)>,
    n_slots: usize,
}

impl Circuit {
    pub fn new(n: usize, ops: Vec<(Gate, usize)>, n_slots: usize) -> Self {
        for &(gate, slot) in &ops {
            assert!(slot < n_slots, "slot {slot} out of range {n_slots}");
            match gate {
                Gate::Xx { a, b } => {
                    assert!(a != b && a < n && b < n, "bad XX pair ({a},{b})")
                }
                Gate::Z { site } => assert!(site < n, "bad Z site {site}"),
            }
        }
        Circuit { n, ops, n_slots }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n_gates(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[(Gate, usize)] {
        &self.ops
    }

    /// Applies the whole circuit in place.
    pub fn apply<S: Scalar>(&self, theta: &[S], psi: &mut [Complex<S>]) {
        assert_eq!(theta.len(), self.n_slots, "parameter count mismatch");
        for &(gate, slot) in &self.ops {
            apply_gate(gate, theta[slot], psi);
        }
    }

    /// Runs the circuit on the polarized reference state.
    pub fn prepare<S: Scalar>(&self, theta: &[S]) -> Vec<Complex<S>> {
        let mut psi = reference_state::<S>(self.n);
        self.apply(theta, &mut psi);
        psi
    }

    /// Variational energy `<psi(theta)|H|psi(theta)>`.
    pub fn energy<S: Scalar>(&self, cluster: &Cluster, p: TfimParams<S>, theta: &[S]) -> S {
        energy_expectation(cluster, p, &self.prepare(theta))
    }

    /// Energy and full gradient by the adjoint method.
    ///
    /// Two auxiliary vectors are walked backwards through the circuit:
    /// `phi` holds the state after gate `k` and `lam` holds
    /// `U_(k+1)^dag .. U_G^dag H psi`. The slot-`k` contribution is
    /// `2 Re <lam| i P_k |phi>` evaluated before both vectors are pulled
    /// back through `U_k^dag`. Cost is `O(G 2^n)` total.
    pub fn energy_and_grad<S: Scalar>(
        &self,
        cluster: &Cluster,
        p: TfimParams<S>,
        theta: &[S],
        grad: &mut [S],
    ) -> S {
        assert_eq!(theta.len(), self.n_slots, "parameter count mismatch");
        assert_eq!(grad.len(), self.n_slots, "gradient length mismatch");
        grad.fill(S::zero());

        let mut phi = self.prepare(theta);
        let mut lam = vec![Complex::new(S::zero(), S::zero()); phi.len()];
        apply_hamiltonian(cluster, p, &phi, &mut lam);
        let energy = crate::state::inner(&phi, &lam).re;

        for &(gate, slot) in self.ops.iter().rev() {
            grad[slot] += generator_overlap(gate, &lam, &phi);
            apply_gate(gate, -theta[slot], &mut phi);
            apply_gate(gate, -theta[slot], &mut lam);
        }
        energy
    }
}

/// Applies one gate in place. Both generators square to the identity, so
/// `exp(i theta P) = cos theta + i sin theta P`.
pub fn apply_gate<S: Scalar>(gate: Gate, theta: S, psi: &mut [Complex<S>]) {
    let (s, c) = theta.sin_cos();
    match gate {
        Gate::Xx { a, b } => {
            let mask = (1usize << a) | (1usize << b);
            let hi = 1usize << a.max(b);
            for i in 0..psi.len() {
                if i & hi == 0 {
                    let j = i ^ mask;
                    let (pi, pj) = (psi[i], psi[j]);
                    psi[i] = pi.scale(c) + (pj * Complex::new(S::zero(), s));
                    psi[j] = pj.scale(c) + (pi * Complex::new(S::zero(), s));
                }
            }
        }
        Gate::Z { site } => {
            let bit = 1usize << site;
            let up = Complex::new(c, s);
            let down = Complex::new(c, -s);
            for (i, a) in psi.iter_mut().enumerate() {
                *a = *a * if i & bit == 0 { up } else { down };
            }
        }
    }
}

/// `2 Re <lam| i P |phi>` for the gate generator `P`.
fn generator_overlap<S: Scalar>(gate: Gate, lam: &[Complex<S>], phi: &[Complex<S>]) -> S {
    let mut s = Complex::new(S::zero(), S::zero());
    match gate {
        Gate::Xx { a, b } => {
            let mask = (1usize << a) | (1usize << b);
            for (i, l) in lam.iter().enumerate() {
                s += l.conj() * phi[i ^ mask];
            }
        }
        Gate::Z { site } => {
            let bit = 1usize << site;
            for (i, l) in lam.iter().enumerate() {
                let t = l.conj() * phi[i];
                if i & bit == 0 {
                    s += t;
                } else {
                    s -= t;
                }
            }
        }
    }
    // Re(i s) = -Im(s); the factor 2 comes from d<psi|H|psi> having two
    // conjugate halves.
    -(s.im + s.im)
}
