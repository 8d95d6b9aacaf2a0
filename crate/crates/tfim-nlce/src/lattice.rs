//! Rectangular clusters, their bond sets, and their point-group structure.
//!
//! Sites of an `lx x ly` rectangle are indexed `nu = x + lx * y`. Bonds are
//! stored as normalized `(min, max)` index pairs in a fixed deterministic
//! order, so every downstream consumer (Hamiltonian, circuit, parameter
//! layout) agrees on slot numbering.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Normalized site pair, always `(min, max)`.
pub type Bond = (usize, usize);

#[inline]
fn norm(a: usize, b: usize) -> Bond {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// How the boundary bond set of an open cluster is chosen.
///
/// Boundary bonds are *ansatz* bonds only: they never enter the cluster
/// Hamiltonian. `Torus` closes both axes with wrap bonds, skipping any
/// wrap that would duplicate a bulk bond. `Ring` closes a chain into a
/// ring; for `lx, ly >= 2` the perimeter is already a closed loop of bulk
/// bonds, so no boundary bonds are added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryStyle {
    Torus,
    Ring,
}

/// A finite rectangular cluster with open bulk bonds and a separate
/// boundary bond set.
///
/// `periodic` marks seed chains whose bulk bonds already close the ring;
/// those have no boundary bonds and support translational tying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    lx: usize,
    ly: usize,
    bonds: Vec<Bond>,
    boundary_bonds: Vec<Bond>,
    periodic: bool,
}

impl Cluster {
    /// Open rectangle with torus-closure boundary bonds.
    pub fn open(lx: usize, ly: usize) -> Result<Self> {
        Self::open_with(lx, ly, BoundaryStyle::Torus)
    }

    /// Open rectangle with an explicit boundary style.
    pub fn open_with(lx: usize, ly: usize, style: BoundaryStyle) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::InvalidCluster(format!(
                "dimensions must be positive, got {lx}x{ly}"
            )));
        }
        let bonds = open_bonds(lx, ly);
        let boundary_bonds = match style {
            BoundaryStyle::Torus => torus_wraps(lx, ly),
            BoundaryStyle::Ring => ring_closure(lx, ly),
        };
        let c = Cluster {
            lx,
            ly,
            bonds,
            boundary_bonds,
            periodic: false,
        };
        c.check_disjoint()?;
        Ok(c)
    }

    /// Periodic chain of `len >= 3` sites; the wrap bond is a bulk bond.
    pub fn periodic_chain(len: usize) -> Result<Self> {
        if len < 3 {
            return Err(Error::InvalidCluster(format!(
                "periodic chain needs at least 3 sites, got {len}"
            )));
        }
        let mut bonds: Vec<Bond> = (0..len - 1).map(|i| (i, i + 1)).collect();
        bonds.push((0, len - 1));
        Ok(Cluster {
            lx: len,
            ly: 1,
            bonds,
            boundary_bonds: Vec::new(),
            periodic: true,
        })
    }

    fn check_disjoint(&self) -> Result<()> {
        for b in &self.boundary_bonds {
            if self.bonds.contains(b) {
                return Err(Error::InvalidCluster(format!(
                    "boundary bond {b:?} duplicates a bulk bond"
                )));
            }
        }
        Ok(())
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1usize << self.n_sites()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn is_chain(&self) -> bool {
        self.lx == 1 || self.ly == 1
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn boundary_bonds(&self) -> &[Bond] {
        &self.boundary_bonds
    }

    #[inline]
    pub fn site(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.lx && y < self.ly);
        x + self.lx * y
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.lx, site / self.lx)
    }

    /// Point group as site permutations, identity first.
    ///
    /// Chains and rectangles get the reflections and the 180-degree
    /// rotation; squares additionally the diagonal maps. Degenerate
    /// elements (e.g. the y reflection of a 1xL chain) collapse under
    /// deduplication, so a 1x1 yields just the identity.
    pub fn point_group(&self) -> Vec<Vec<usize>> {
        let (lx, ly) = (self.lx, self.ly);
        let mut maps: Vec<fn(usize, usize, usize, usize) -> (usize, usize)> = vec![
            |x, y, _, _| (x, y),
            |x, y, lx, _| (lx - 1 - x, y),
            |x, y, _, ly| (x, ly - 1 - y),
            |x, y, lx, ly| (lx - 1 - x, ly - 1 - y),
        ];
        if lx == ly {
            maps.push(|x, y, _, _| (y, x));
            maps.push(|x, y, _, ly| (y, ly - 1 - x));
            maps.push(|x, y, lx, _| (lx - 1 - y, x));
            maps.push(|x, y, lx, ly| (lx - 1 - y, ly - 1 - x));
        }
        let mut perms: Vec<Vec<usize>> = Vec::new();
        for m in maps {
            let perm: Vec<usize> = (0..self.n_sites())
                .map(|i| {
                    let (x, y) = self.coords(i);
                    let (px, py) = m(x, y, lx, ly);
                    self.site(px, py)
                })
                .collect();
            if !perms.contains(&perm) {
                perms.push(perm);
            }
        }
        perms
    }

    /// Orbits of site indices under the point group, each sorted, listed
    /// by ascending minimal element.
    pub fn site_orbits(&self) -> Vec<Vec<usize>> {
        orbits_under(self.n_sites(), &self.point_group())
    }

    /// Orbits of bulk bond slots under the point group.
    pub fn bond_orbits(&self) -> Vec<Vec<usize>> {
        self.bond_orbits_of(&self.bonds)
    }

    /// Orbits of boundary bond slots under the point group.
    pub fn boundary_orbits(&self) -> Vec<Vec<usize>> {
        self.bond_orbits_of(&self.boundary_bonds)
    }

    fn bond_orbits_of(&self, bonds: &[Bond]) -> Vec<Vec<usize>> {
        let index: HashMap<Bond, usize> = bonds
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i))
            .collect();
        let perms: Vec<Vec<usize>> = self
            .point_group()
            .iter()
            .map(|p| {
                bonds
                    .iter()
                    .map(|&(a, b)| {
                        let m = norm(p[a], p[b]);
                        *index
                            .get(&m)
                            .expect("point group maps the bond set onto itself")
                    })
                    .collect()
            })
            .collect();
        orbits_under(bonds.len(), &perms)
    }

    /// Mask of sites lying on the rectangle perimeter.
    pub fn perimeter_mask(&self) -> Vec<bool> {
        (0..self.n_sites())
            .map(|i| {
                let (x, y) = self.coords(i);
                x == 0 || y == 0 || x == self.lx - 1 || y == self.ly - 1
            })
            .collect()
    }

    /// Number of perimeter sites: `2(lx + ly) - 4` for a true rectangle,
    /// all sites for a chain.
    pub fn perimeter_len(&self) -> usize {
        if self.is_chain() {
            self.n_sites()
        } else {
            2 * (self.lx + self.ly) - 4
        }
    }

    /// Mask over bulk bonds marking edges of the perimeter walk.
    ///
    /// A bond qualifies when its endpoints are consecutive on the closed
    /// path around the rectangle. Bonds between two perimeter sites that
    /// cut across the interior (the middle rungs of a 2xW cluster) are
    /// not ring edges. Chains have no closed walk; every bond is a ring
    /// edge there, matching the chain-seed convention.
    pub fn ring_edge_mask(&self) -> Vec<bool> {
        if self.is_chain() {
            return vec![true; self.bonds.len()];
        }
        let walk = self.perimeter_walk();
        let mut ring: Vec<Bond> = Vec::with_capacity(walk.len());
        for k in 0..walk.len() {
            ring.push(norm(walk[k], walk[(k + 1) % walk.len()]));
        }
        self.bonds.iter().map(|b| ring.contains(b)).collect()
    }

    /// Perimeter sites in cyclic walk order, starting at the origin.
    pub fn perimeter_walk(&self) -> Vec<usize> {
        assert!(!self.is_chain(), "perimeter walk requires lx, ly >= 2");
        let (lx, ly) = (self.lx, self.ly);
        let mut walk = Vec::with_capacity(self.perimeter_len());
        for x in 0..lx {
            walk.push(self.site(x, 0));
        }
        for y in 1..ly {
            walk.push(self.site(lx - 1, y));
        }
        for x in (0..lx - 1).rev() {
            walk.push(self.site(x, ly - 1));
        }
        for y in (1..ly - 1).rev() {
            walk.push(self.site(0, y));
        }
        walk
    }
}

/// Bulk bonds of an open rectangle: per site in index order, the bond to
/// the right neighbor then the bond to the upper neighbor.
fn open_bonds(lx: usize, ly: usize) -> Vec<Bond> {
    let mut bonds = Vec::new();
    for y in 0..ly {
        for x in 0..lx {
            let i = x + lx * y;
            if x + 1 < lx {
                bonds.push((i, i + 1));
            }
            if y + 1 < ly {
                bonds.push((i, i + lx));
            }
        }
    }
    bonds
}

/// Torus wrap bonds, skipping wraps that would duplicate a bulk bond.
///
/// A chain of length L >= 3 gets the single wrap `(0, L-1)`. A rectangle
/// gets one row wrap per row when `lx >= 3` and one column wrap per
/// column when `ly >= 3`; length-2 axes are skipped because their wrap
/// coincides with the existing bulk bond.
fn torus_wraps(lx: usize, ly: usize) -> Vec<Bond> {
    let mut wraps = Vec::new();
    if lx == 1 || ly == 1 {
        let n = lx * ly;
        if n >= 3 {
            wraps.push((0, n - 1));
        }
        return wraps;
    }
    if lx >= 3 {
        for y in 0..ly {
            wraps.push(norm(lx - 1 + lx * y, lx * y));
        }
    }
    if ly >= 3 {
        for x in 0..lx {
            wraps.push(norm(x + lx * (ly - 1), x));
        }
    }
    wraps
}

/// Ring closure: a single wrap for chains, nothing for rectangles whose
/// perimeter already closes through bulk bonds.
fn ring_closure(lx: usize, ly: usize) -> Vec<Bond> {
    if lx == 1 || ly == 1 {
        let n = lx * ly;
        if n >= 3 {
            return vec![(0, n - 1)];
        }
    }
    Vec::new()
}

/// Orbits of `0..n` under a permutation list, each orbit sorted, orbits
/// ordered by minimal element.
fn orbits_under(n: usize, perms: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut orbit = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for p in perms {
                let j = p[i];
                if !seen[j] {
                    seen[j] = true;
                    orbit.push(j);
                    stack.push(j);
                }
            }
        }
        orbit.sort_unstable();
        out.push(orbit);
    }
    out
}

/// Number of embeddings of rectangle `sub` into rectangle `parent`, both
/// given as `(a, b)` with `a <= b`. Distinct orientations contribute
/// independently: `sum over fitting (w, h) of (pa-w+1)(pb-h+1)`.
pub fn embedding_count(parent: (usize, usize), sub: (usize, usize)) -> usize {
    let (pa, pb) = parent;
    let (sa, sb) = sub;
    debug_assert!(pa <= pb && sa <= sb);
    let mut orients = vec![(sa, sb)];
    if sa != sb {
        orients.push((sb, sa));
    }
    orients
        .into_iter()
        .filter(|&(w, h)| w <= pa && h <= pb)
        .map(|(w, h)| (pa - w + 1) * (pb - h + 1))
        .sum()
}
