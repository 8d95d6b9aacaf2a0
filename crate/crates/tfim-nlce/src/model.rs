//! Ferromagnetic transverse-field Ising Hamiltonian on a cluster:
//!
//! `H = -h sum_nu Z_nu - J sum_(nu,mu) X_nu X_mu`
//!
//! where the bond sum runs over the cluster's bulk bonds only. Boundary
//! bonds are ansatz structure and never contribute energy. `H` is real
//! symmetric in the computational basis and commutes with the spin-flip
//! parity `prod_nu Z_nu`, so XX terms preserve the popcount parity of
//! basis indices.

use num_complex::Complex;

use crate::lattice::Cluster;
use crate::scalar::Scalar;
use crate::state::zsum;

/// Couplings of the model. The field `h` is the energy unit in practice;
/// scans vary `j` at fixed `h = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfimParams<S> {
    pub j: S,
    pub h: S,
}

impl<S: Scalar> TfimParams<S> {
    pub fn new(j: S, h: S) -> Self {
        TfimParams { j, h }
    }
}

/// Dense `out = H psi` on the full space.
pub fn apply_hamiltonian<S: Scalar>(
    cluster: &Cluster,
    p: TfimParams<S>,
    psi: &[Complex<S>],
    out: &mut [Complex<S>],
) {
    let n = cluster.n_sites();
    let dim = cluster.dim();
    debug_assert_eq!(psi.len(), dim);
    debug_assert_eq!(out.len(), dim);
    for (i, o) in out.iter_mut().enumerate() {
        *o = psi[i].scale(-p.h * zsum::<S>(n, i));
    }
    for &(a, b) in cluster.bonds() {
        let mask = (1usize << a) | (1usize << b);
        for i in 0..dim {
            let t = psi[i ^ mask].scale(-p.j);
            out[i] += t;
        }
    }
}

/// Real matvec `out = H v` on the full space. `H` is real symmetric, so
/// iterative eigensolvers can stay in real arithmetic.
pub fn apply_hamiltonian_real<S: Scalar>(
    cluster: &Cluster,
    p: TfimParams<S>,
    v: &[S],
    out: &mut [S],
) {
    let n = cluster.n_sites();
    let dim = cluster.dim();
    debug_assert_eq!(v.len(), dim);
    debug_assert_eq!(out.len(), dim);
    for (i, o) in out.iter_mut().enumerate() {
        *o = -p.h * zsum::<S>(n, i) * v[i];
    }
    for &(a, b) in cluster.bonds() {
        let mask = (1usize << a) | (1usize << b);
        for i in 0..dim {
            out[i] -= p.j * v[i ^ mask];
        }
    }
}

/// Real matvec `out = H v` restricted to the even-parity sector.
///
/// Compact index `r` corresponds to basis state `2r` or `2r + 1`,
/// whichever has even popcount; the rank of an even state `i` is `i >> 1`.
/// XX bonds flip two bits and stay inside the sector.
pub fn apply_hamiltonian_even<S: Scalar>(
    cluster: &Cluster,
    p: TfimParams<S>,
    v: &[S],
    out: &mut [S],
) {
    let n = cluster.n_sites();
    let half = cluster.dim() >> 1;
    debug_assert_eq!(v.len(), half);
    debug_assert_eq!(out.len(), half);
    for (r, o) in out.iter_mut().enumerate() {
        let i = even_state(r);
        *o = -p.h * zsum::<S>(n, i) * v[r];
    }
    for &(a, b) in cluster.bonds() {
        let mask = (1usize << a) | (1usize << b);
        for r in 0..half {
            let j = even_state(r) ^ mask;
            out[r] -= p.j * v[j >> 1];
        }
    }
}

/// The `r`-th basis state of even popcount.
#[inline]
pub fn even_state(r: usize) -> usize {
    let base = r << 1;
    base | (base.count_ones() as usize & 1)
}

/// `<psi|H|psi>` without materializing `H psi`. Real by construction:
/// the field part weighs `|psi_i|^2` and each bond contributes
/// `-J * 2 Re sum_pairs conj(psi_i) psi_(i xor mask)`.
pub fn energy_expectation<S: Scalar>(
    cluster: &Cluster,
    p: TfimParams<S>,
    psi: &[Complex<S>],
) -> S {
    let n = cluster.n_sites();
    let dim = cluster.dim();
    debug_assert_eq!(psi.len(), dim);
    let mut field = S::zero();
    for (i, a) in psi.iter().enumerate() {
        field += a.norm_sqr() * zsum::<S>(n, i);
    }
    let mut ising = S::zero();
    for &(a, b) in cluster.bonds() {
        let mask = (1usize << a) | (1usize << b);
        let hi = 1usize << a.max(b);
        let mut acc = S::zero();
        for i in 0..dim {
            if i & hi == 0 {
                let t = psi[i].conj() * psi[i ^ mask];
                acc += t.re;
            }
        }
        ising += acc + acc;
    }
    -p.h * field - p.j * ising
}

/// Row-major dense `H` as a real symmetric matrix. Intended for small
/// clusters where direct tridiagonalization is cheaper than Lanczos.
pub fn dense_matrix<S: Scalar>(cluster: &Cluster, p: TfimParams<S>) -> Vec<S> {
    let n = cluster.n_sites();
    let dim = cluster.dim();
    let mut m = vec![S::zero(); dim * dim];
    for i in 0..dim {
        m[i * dim + i] = -p.h * zsum::<S>(n, i);
    }
    for &(a, b) in cluster.bonds() {
        let mask = (1usize << a) | (1usize << b);
        for i in 0..dim {
            m[i * dim + (i ^ mask)] -= p.j;
        }
    }
    m
}
