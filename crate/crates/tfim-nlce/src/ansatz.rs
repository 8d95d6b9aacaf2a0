//! Layered variational ansatz for cluster ground states.
//!
//! Each layer applies, in order, `exp(i Theta_b X X)` on every boundary
//! bond, `exp(i theta X X)` on every bulk bond, and `exp(i theta Z)` on
//! every site. Boundary bonds close the open cluster into its periodic
//! counterpart inside the circuit only; dropping them (a cluster with no
//! boundary bonds) recovers the plain Hamiltonian variational form. All
//! parameters are pi-periodic up to a global phase.
//!
//! Parameters can be tied across symmetry orbits. The per-layer slot
//! order is boundary orbits, bulk bond orbits, then site orbits, each
//! in deterministic orbit order.

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::lattice::Cluster;
use crate::scalar::Scalar;

/// How parameters are shared within a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tying {
    /// One parameter per point-group orbit of sites / bonds.
    PointGroup,
    /// One bond and one site parameter per layer. Valid only on
    /// periodic chains, where translations make all slots equivalent.
    Translational,
    /// Every site and bond has its own parameter.
    None,
}

/// Slot assignment for a tied, layered parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnsatzLayout {
    layers: usize,
    boundary_orbits: Vec<Vec<usize>>,
    bond_orbits: Vec<Vec<usize>>,
    site_orbits: Vec<Vec<usize>>,
}

impl AnsatzLayout {
    pub fn new(cluster: &Cluster, tying: Tying, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidCluster("zero layers".into()));
        }
        let (boundary_orbits, bond_orbits, site_orbits) = match tying {
            Tying::PointGroup => (
                cluster.boundary_orbits(),
                cluster.bond_orbits(),
                cluster.site_orbits(),
            ),
            Tying::Translational => {
                if !cluster.is_periodic() {
                    return Err(Error::InvalidCluster(
                        "translational tying requires a periodic chain".into(),
                    ));
                }
                (
                    Vec::new(),
                    vec![(0..cluster.bonds().len()).collect()],
                    vec![(0..cluster.n_sites()).collect()],
                )
            }
            Tying::None => (
                singletons(cluster.boundary_bonds().len()),
                singletons(cluster.bonds().len()),
                singletons(cluster.n_sites()),
            ),
        };
        Ok(AnsatzLayout {
            layers,
            boundary_orbits,
            bond_orbits,
            site_orbits,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Independent parameters per layer.
    pub fn per_layer(&self) -> usize {
        self.boundary_orbits.len() + self.bond_orbits.len() + self.site_orbits.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers * self.per_layer()
    }

    pub fn boundary_orbits(&self) -> &[Vec<usize>] {
        &self.boundary_orbits
    }

    pub fn bond_orbits(&self) -> &[Vec<usize>] {
        &self.bond_orbits
    }

    pub fn site_orbits(&self) -> &[Vec<usize>] {
        &self.site_orbits
    }

    /// Slot of a boundary orbit in a given layer.
    pub fn boundary_slot(&self, layer: usize, orbit: usize) -> usize {
        layer * self.per_layer() + orbit
    }

    /// Slot of a bulk bond orbit in a given layer.
    pub fn bond_slot(&self, layer: usize, orbit: usize) -> usize {
        layer * self.per_layer() + self.boundary_orbits.len() + orbit
    }

    /// Slot of a site orbit in a given layer.
    pub fn site_slot(&self, layer: usize, orbit: usize) -> usize {
        layer * self.per_layer() + self.boundary_orbits.len() + self.bond_orbits.len() + orbit
    }

    /// Materializes the gate list for `cluster`.
    pub fn build_circuit(&self, cluster: &Cluster) -> Circuit {
        let mut ops = Vec::with_capacity(
            self.layers
                * (cluster.boundary_bonds().len() + cluster.bonds().len() + cluster.n_sites()),
        );
        for layer in 0..self.layers {
            for (o, orbit) in self.boundary_orbits.iter().enumerate() {
                let slot = self.boundary_slot(layer, o);
                for &bi in orbit {
                    let (a, b) = cluster.boundary_bonds()[bi];
                    ops.push((Gate::Xx { a, b }, slot));
                }
            }
            for (o, orbit) in self.bond_orbits.iter().enumerate() {
                let slot = self.bond_slot(layer, o);
                for &bi in orbit {
                    let (a, b) = cluster.bonds()[bi];
                    ops.push((Gate::Xx { a, b }, slot));
                }
            }
            for (o, orbit) in self.site_orbits.iter().enumerate() {
                let slot = self.site_slot(layer, o);
                for &site in orbit {
                    ops.push((Gate::Z { site }, slot));
                }
            }
        }
        Circuit::new(cluster.n_sites(), ops, self.n_params())
    }
}

fn singletons(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

/// Default circuit depth for a cluster: `ceil(n / 2)` layers.
pub fn default_layers(cluster: &Cluster) -> usize {
    cluster.n_sites().div_ceil(2)
}

/// Layers needed for a periodic chain to represent its ground state
/// exactly: `floor(len / 2)`.
pub fn sufficient_periodic_layers(len: usize) -> usize {
    len / 2
}

/// The `pi/4` start for an odd periodic chain.
///
/// Setting every parameter of a depth-`floor(len/2)` circuit to `pi/4`
/// prepares the exact `h = 0` ground state of the ring. The identity
/// holds at that depth only, so deeper layouts get `pi/4` on their
/// first `floor(len/2)` layers and zero (identity gates) beyond;
/// shallower layouts cannot represent the state and are rejected.
pub fn pi_fourth_params<S: Scalar>(cluster: &Cluster, layout: &AnsatzLayout) -> Result<Vec<S>> {
    if !cluster.is_periodic() || cluster.n_sites() % 2 == 0 {
        return Err(Error::PiFourthRequiresOddChain(cluster.n_sites()));
    }
    let needed = sufficient_periodic_layers(cluster.n_sites());
    if layout.layers() < needed {
        return Err(Error::InvalidCluster(format!(
            "pi/4 start needs {needed} layers for a {}-ring, layout has {}",
            cluster.n_sites(),
            layout.layers()
        )));
    }
    let mut theta = vec![S::zero(); layout.n_params()];
    for slot in theta.iter_mut().take(needed * layout.per_layer()) {
        *slot = S::FRAC_PI_4();
    }
    Ok(theta)
}

/// Length of the periodic seed chain for a target cluster: the cluster
/// length for chains, the perimeter site count for rectangles.
pub fn seed_chain_len(cluster: &Cluster) -> usize {
    cluster.perimeter_len()
}

/// Transfers a translationally tied periodic-chain solution onto the
/// slots of an open-cluster layout.
///
/// Layerwise, the chain's bond angle lands on every boundary orbit and
/// every bulk orbit made of perimeter-ring edges; the chain's site
/// angle lands on every perimeter site orbit. Interior and chord slots
/// start at zero. For chain targets every slot is on the ring, so the
/// whole layer is seeded.
pub fn map_periodic_to_open<S: Scalar>(
    cluster: &Cluster,
    layout: &AnsatzLayout,
    periodic_layout: &AnsatzLayout,
    periodic_params: &[S],
) -> Result<Vec<S>> {
    if periodic_params.len() != periodic_layout.n_params() {
        return Err(Error::ShapeMismatch {
            expected: periodic_layout.n_params(),
            got: periodic_params.len(),
        });
    }
    if periodic_layout.per_layer() != 2 || !periodic_layout.boundary_orbits.is_empty() {
        return Err(Error::InvalidCluster(
            "periodic seed must use translational tying".into(),
        ));
    }
    if layout.layers != periodic_layout.layers {
        return Err(Error::ShapeMismatch {
            expected: layout.layers,
            got: periodic_layout.layers,
        });
    }

    let ring_edge = cluster.ring_edge_mask();
    let perimeter = cluster.perimeter_mask();
    let mut out = vec![S::zero(); layout.n_params()];
    for layer in 0..layout.layers {
        let theta_xx = periodic_params[periodic_layout.bond_slot(layer, 0)];
        let theta_z = periodic_params[periodic_layout.site_slot(layer, 0)];
        for (o, _) in layout.boundary_orbits.iter().enumerate() {
            out[layout.boundary_slot(layer, o)] = theta_xx;
        }
        for (o, orbit) in layout.bond_orbits.iter().enumerate() {
            let on_ring = ring_edge[orbit[0]];
            debug_assert!(
                orbit.iter().all(|&b| ring_edge[b] == on_ring),
                "orbit mixes ring and non-ring bonds"
            );
            if on_ring {
                out[layout.bond_slot(layer, o)] = theta_xx;
            }
        }
        for (o, orbit) in layout.site_orbits.iter().enumerate() {
            let on_perimeter = perimeter[orbit[0]];
            debug_assert!(
                orbit.iter().all(|&s| perimeter[s] == on_perimeter),
                "orbit mixes perimeter and interior sites"
            );
            if on_perimeter {
                out[layout.site_slot(layer, o)] = theta_z;
            }
        }
    }
    Ok(out)
}

/// Reduces every angle into the fundamental domain `[0, pi)`.
pub fn wrap_params<S: Scalar>(params: &mut [S]) {
    let pi = S::PI();
    for p in params.iter_mut() {
        let mut r = *p % pi;
        if r < S::zero() {
            r += pi;
        }
        // A negative angle epsilon-close to zero wraps to pi itself
        // after rounding; fold it back.
        if r >= pi {
            r -= pi;
        }
        *p = r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TfimParams;

    #[test]
    fn chain_layout_counts() {
        let c = Cluster::open(5, 1).unwrap();
        let lay = AnsatzLayout::new(&c, Tying::PointGroup, 3).unwrap();
        // Orbits: 1 boundary, 2 bond, 3 site.
        assert_eq!(lay.per_layer(), 6);
        assert_eq!(lay.n_params(), 18);
        let untied = AnsatzLayout::new(&c, Tying::None, 3).unwrap();
        assert_eq!(untied.per_layer(), 1 + 4 + 5);
    }

    #[test]
    fn translational_layout_is_two_per_layer() {
        let c = Cluster::periodic_chain(7).unwrap();
        let lay = AnsatzLayout::new(&c, Tying::Translational, 4).unwrap();
        assert_eq!(lay.per_layer(), 2);
        assert_eq!(lay.n_params(), 8);
        let open = Cluster::open(7, 1).unwrap();
        assert!(AnsatzLayout::new(&open, Tying::Translational, 4).is_err());
    }

    #[test]
    fn circuit_gate_count_and_order() {
        let c = Cluster::open(3, 1).unwrap();
        let lay = AnsatzLayout::new(&c, Tying::PointGroup, 2).unwrap();
        let circ = lay.build_circuit(&c);
        // Per layer: 1 boundary + 2 bulk XX + 3 Z gates.
        assert_eq!(circ.n_gates(), 2 * 6);
        // First layer starts with the boundary wrap gate.
        match circ.ops()[0] {
            (Gate::Xx { a, b }, slot) => {
                assert_eq!((a, b), (0, 2));
                assert_eq!(slot, 0);
            }
            other => panic!("expected boundary XX first, got {other:?}"),
        }
        // Z sublayer closes the layer.
        match circ.ops()[5] {
            (Gate::Z { .. }, _) => {}
            other => panic!("expected Z gate at layer end, got {other:?}"),
        }
    }

    #[test]
    fn pi_fourth_prepares_classical_ground_state() {
        // Odd rings at h = 0 have ground energy -J len; one parameter
        // setting reaches it at floor(len/2) layers.
        for (len, layers) in [(3, 1), (5, 2), (7, 3)] {
            let c = Cluster::periodic_chain(len).unwrap();
            let lay = AnsatzLayout::new(&c, Tying::Translational, layers).unwrap();
            let theta = pi_fourth_params::<f64>(&c, &lay).unwrap();
            let circ = lay.build_circuit(&c);
            let e = circ.energy(&c, TfimParams::new(1.0, 0.0), &theta);
            assert!(
                (e + len as f64).abs() < 1e-12,
                "len {len}, layers {layers}: {e}"
            );
        }
    }

    #[test]
    fn pi_fourth_deeper_layouts_pad_with_identity() {
        // Extra pi/4 layers would leave the ground manifold; the seed
        // pads with zeros instead, which keeps the state exact.
        for (len, layers) in [(3, 3), (5, 3), (5, 4), (7, 5)] {
            let c = Cluster::periodic_chain(len).unwrap();
            let lay = AnsatzLayout::new(&c, Tying::Translational, layers).unwrap();
            let theta = pi_fourth_params::<f64>(&c, &lay).unwrap();
            let e = lay
                .build_circuit(&c)
                .energy(&c, TfimParams::new(1.0, 0.0), &theta);
            assert!(
                (e + len as f64).abs() < 1e-12,
                "len {len}, layers {layers}: {e}"
            );
        }
    }

    #[test]
    fn pi_fourth_rejects_shallow_layout() {
        let c = Cluster::periodic_chain(7).unwrap();
        let lay = AnsatzLayout::new(&c, Tying::Translational, 2).unwrap();
        assert!(pi_fourth_params::<f64>(&c, &lay).is_err());
    }

    #[test]
    fn pi_fourth_rejects_even_and_open() {
        let even = Cluster::periodic_chain(4).unwrap();
        let lay = AnsatzLayout::new(&even, Tying::Translational, 2).unwrap();
        assert!(pi_fourth_params::<f64>(&even, &lay).is_err());
        let open = Cluster::open(5, 1).unwrap();
        let lay2 = AnsatzLayout::new(&open, Tying::PointGroup, 2).unwrap();
        assert!(pi_fourth_params::<f64>(&open, &lay2).is_err());
    }

    #[test]
    fn seed_lengths() {
        assert_eq!(seed_chain_len(&Cluster::open(6, 1).unwrap()), 6);
        assert_eq!(seed_chain_len(&Cluster::open(2, 3).unwrap()), 6);
        assert_eq!(seed_chain_len(&Cluster::open(4, 4).unwrap()), 12);
    }

    #[test]
    fn map_chain_fills_every_slot() {
        let open = Cluster::open(5, 1).unwrap();
        let lay = AnsatzLayout::new(&open, Tying::PointGroup, 2).unwrap();
        let per = Cluster::periodic_chain(5).unwrap();
        let plays = AnsatzLayout::new(&per, Tying::Translational, 2).unwrap();
        let seed: Vec<f64> = vec![0.11, 0.21, 0.12, 0.22];
        let mapped = map_periodic_to_open(&open, &lay, &plays, &seed).unwrap();
        // Layer 0: boundary, 2 bond orbits, then 3 site orbits.
        assert_eq!(mapped[..6], [0.11, 0.11, 0.11, 0.21, 0.21, 0.21]);
        assert_eq!(mapped[6..], [0.12, 0.12, 0.12, 0.22, 0.22, 0.22]);
    }

    #[test]
    fn map_rectangle_zeroes_chords_and_interior() {
        // 2x3: bond orbits are outer rungs, middle rung (chord), and
        // legs; all sites are on the perimeter.
        let open = Cluster::open(2, 3).unwrap();
        let lay = AnsatzLayout::new(&open, Tying::PointGroup, 1).unwrap();
        let per = Cluster::periodic_chain(6).unwrap();
        let plays = AnsatzLayout::new(&per, Tying::Translational, 1).unwrap();
        let mapped = map_periodic_to_open(&open, &lay, &plays, &[0.3f64, 0.7]).unwrap();
        let n_boundary = lay.boundary_orbits().len();
        assert_eq!(n_boundary, 1);
        assert_eq!(mapped[0], 0.3);
        let bond_vals: Vec<f64> = (0..lay.bond_orbits().len())
            .map(|o| mapped[lay.bond_slot(0, o)])
            .collect();
        // Orbit of the middle rung gets zero, ring orbits get theta_xx.
        let n_zero = bond_vals.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(n_zero, 1);
        let n_ring = bond_vals.iter().filter(|&&v| v == 0.3).count();
        assert_eq!(n_ring, bond_vals.len() - 1);
        for o in 0..lay.site_orbits().len() {
            assert_eq!(mapped[lay.site_slot(0, o)], 0.7);
        }
    }

    #[test]
    fn map_3x3_zeroes_center_site() {
        let open = Cluster::open(3, 3).unwrap();
        let lay = AnsatzLayout::new(&open, Tying::PointGroup, 1).unwrap();
        let per = Cluster::periodic_chain(8).unwrap();
        let plays = AnsatzLayout::new(&per, Tying::Translational, 1).unwrap();
        let mapped = map_periodic_to_open(&open, &lay, &plays, &[0.4f64, 0.9]).unwrap();
        // Site orbits: corners, edge midpoints, center.
        let center_orbit = lay
            .site_orbits()
            .iter()
            .position(|orb| orb.contains(&4))
            .unwrap();
        assert_eq!(mapped[lay.site_slot(0, center_orbit)], 0.0);
        // Center-adjacent bond orbit is interior.
        let interior_orbit = lay
            .bond_orbits()
            .iter()
            .position(|orb| {
                orb.iter()
                    .any(|&b| open.bonds()[b].0 == 4 || open.bonds()[b].1 == 4)
            })
            .unwrap();
        assert_eq!(mapped[lay.bond_slot(0, interior_orbit)], 0.0);
    }

    #[test]
    fn map_rejects_layer_mismatch() {
        let open = Cluster::open(5, 1).unwrap();
        let lay = AnsatzLayout::new(&open, Tying::PointGroup, 3).unwrap();
        let per = Cluster::periodic_chain(5).unwrap();
        let plays = AnsatzLayout::new(&per, Tying::Translational, 2).unwrap();
        let seed = vec![0.1f64; 4];
        assert!(map_periodic_to_open(&open, &lay, &plays, &seed).is_err());
    }

    #[test]
    fn wrap_into_fundamental_domain() {
        use std::f64::consts::PI;
        let mut p = vec![-0.1, PI + 0.2, 1.5 * PI, 0.3, -2.0 * PI];
        wrap_params(&mut p);
        assert!((p[0] - (PI - 0.1)).abs() < 1e-14);
        assert!((p[1] - 0.2).abs() < 1e-14);
        assert!((p[2] - 0.5 * PI).abs() < 1e-14);
        assert!((p[3] - 0.3).abs() < 1e-14);
        assert!(p[4].abs() < 1e-14 || (p[4] - PI).abs() < 1e-14);
        assert!(p.iter().all(|&x| (0.0..PI + 1e-12).contains(&x)));
    }

    #[test]
    fn wrapped_params_preserve_energy() {
        let c = Cluster::open(4, 1).unwrap();
        let lay = AnsatzLayout::new(&c, Tying::PointGroup, 2).unwrap();
        let circ = lay.build_circuit(&c);
        let p = TfimParams::new(0.9, 1.0);
        let theta: Vec<f64> = (0..lay.n_params())
            .map(|i| (i as f64) * 1.7 - 4.0)
            .collect();
        let e0 = circ.energy(&c, p, &theta);
        let mut wrapped = theta.clone();
        wrap_params(&mut wrapped);
        let e1 = circ.energy(&c, p, &wrapped);
        assert!((e0 - e1).abs() < 1e-12);
    }
}
