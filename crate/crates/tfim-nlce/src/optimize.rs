//! Variational optimization: a trust-region SR1 core, a conjugate
//! gradient fallback, and the adiabatic continuation pipeline that
//! turns periodic-chain seeds into converged open-cluster solutions
//! across a coupling grid.

use rayon::join;

use crate::ansatz::{
    default_layers, map_periodic_to_open, pi_fourth_params, seed_chain_len,
    sufficient_periodic_layers, AnsatzLayout, Tying,
};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::lattice::Cluster;
use crate::linalg::symmetric_eigen;
use crate::model::TfimParams;
use crate::scalar::{cast, Scalar};

/// Which minimizer drives the variational solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Trust-region SR1 with a Steihaug-Toint subproblem solver.
    TrustRegionSr1,
    /// Polak-Ribiere conjugate gradient with a strong Wolfe line search.
    ConjugateGradient,
}

/// Minimizer controls.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions<S> {
    pub kind: OptimizerKind,
    /// Convergence: infinity norm of the gradient at or below this.
    pub gradient_tolerance: S,
    /// Secondary stall detector on accepted energy improvements.
    pub energy_tolerance: S,
    pub max_iter: usize,
    pub initial_radius: S,
    pub max_radius: S,
    /// SR1 update guard: skip when `|s (y - B s)|` is below
    /// `guard * |s| * |y - B s|`.
    pub sr1_guard: S,
    /// Extra perturbed runs kept only when they improve on the best.
    pub restarts: usize,
    /// Perturbation scale for those runs.
    pub restart_scale: S,
}

impl<S: Scalar> Default for OptimOptions<S> {
    fn default() -> Self {
        OptimOptions {
            kind: OptimizerKind::TrustRegionSr1,
            gradient_tolerance: cast(1e-10),
            energy_tolerance: cast(1e-12),
            max_iter: 10_000,
            initial_radius: cast(0.1),
            max_radius: cast(std::f64::consts::PI),
            sr1_guard: cast(1e-8),
            restarts: 0,
            restart_scale: cast(0.05),
        }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct OptimResult<S> {
    pub x: Vec<S>,
    pub value: S,
    pub grad_inf_norm: S,
    pub iterations: usize,
    pub evals: usize,
    /// The gradient criterion was met.
    pub converged: bool,
}

/// Minimizes `f` from `x0`. `f` writes the gradient into its second
/// argument and returns the value. With `restarts > 0` the search is
/// rerun from deterministic perturbations of the best point, keeping
/// the lowest result.
pub fn minimize<S, F>(mut f: F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let run = |f: &mut F, start: &[S]| match opts.kind {
        OptimizerKind::TrustRegionSr1 => minimize_sr1(f, start, opts),
        OptimizerKind::ConjugateGradient => minimize_cg(f, start, opts),
    };
    let mut best = run(&mut f, x0);
    for r in 1..=opts.restarts {
        let start: Vec<S> = best
            .x
            .iter()
            .enumerate()
            .map(|(k, &v)| v + opts.restart_scale * jitter::<S>(k, r))
            .collect();
        let cand = run(&mut f, &start);
        if cand.value < best.value {
            let evals = best.evals + cand.evals;
            best = cand;
            best.evals = evals;
        } else {
            best.evals += cand.evals;
        }
    }
    best
}

/// Deterministic pseudo-random value in [-1, 1) from a slot index and
/// a restart counter (splitmix64 finalizer).
fn jitter<S: Scalar>(slot: usize, round: usize) -> S {
    let mut z = (slot as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((round as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let unit = (z >> 11) as f64 / (1u64 << 53) as f64;
    cast::<S>(2.0 * unit - 1.0)
}

/// Consecutive no-progress steps tolerated before a minimizer exits.
/// Depth-limited layouts flatline immediately and leave within this
/// many iterations, while slow valley descent (gains just above
/// tolerance) keeps resetting the count and runs to its floor.
const STALL_LIMIT: usize = 24;

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Trust-region SR1 (Nocedal-Wright Alg. 6.2). The model Hessian is a
/// dense symmetric matrix updated from every trial step, accepted or
/// not; iterates move only on strict decrease, so the energy sequence
/// is monotone.
fn minimize_sr1<S, F>(f: &mut F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![S::zero(); n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1usize;

    // B starts as the identity.
    let mut b = vec![S::zero(); n * n];
    for i in 0..n {
        b[i * n + i] = S::one();
    }

    let mut delta = opts.initial_radius;
    // A step strikes when it neither gains energy beyond tolerance nor
    // halves the best gradient norm; a run of strikes ends the search.
    // Energy gains near a minimum scale as the gradient squared, so
    // either signal alone would cut off the other's progress.
    let mut stall = 0usize;
    let mut gn_mark = inf_norm(&g);
    let mut first_pair = true;
    let mut g_trial = vec![S::zero(); n];
    let mut iterations = 0usize;

    for iter in 0..opts.max_iter {
        iterations = iter;
        if inf_norm(&g) <= opts.gradient_tolerance {
            return OptimResult {
                grad_inf_norm: inf_norm(&g),
                x,
                value: fx,
                iterations: iter,
                evals,
                converged: true,
            };
        }

        // For the modest parameter counts of tied layouts the exact
        // subproblem is far cheaper than one circuit evaluation and
        // extracts more progress per step than truncated CG.
        let p = if n <= 256 {
            tr_step_exact(&b, &g, delta, n).unwrap_or_else(|| steihaug(&b, &g, delta, n))
        } else {
            steihaug(&b, &g, delta, n)
        };
        let p_norm = norm2(&p);
        if p_norm <= cast::<S>(1e-16) {
            break;
        }

        let xt: Vec<S> = x.iter().zip(&p).map(|(&xi, &pi)| xi + pi).collect();
        let ft = f(&xt, &mut g_trial);
        evals += 1;

        let bp = symv(&b, &p, n);
        let pred = -(dot(&g, &p) + cast::<S>(0.5) * dot(&p, &bp));
        let ared = fx - ft;

        let y: Vec<S> = g_trial.iter().zip(&g).map(|(&a, &c)| a - c).collect();
        // First curvature pair calibrates the identity scale before any
        // SR1 information lands on it.
        if first_pair {
            first_pair = false;
            let ys = dot(&y, &p);
            if ys > S::zero() {
                let gamma = (dot(&y, &y) / ys).max(cast(1e-6)).min(cast(1e6));
                for (i, slot) in b.iter_mut().enumerate() {
                    *slot = if i % (n + 1) == 0 { gamma } else { S::zero() };
                }
            }
        }
        // SR1 update from the trial pair, independent of acceptance.
        let bp_now = symv(&b, &p, n);
        sr1_update(&mut b, &p, &y, &bp_now, opts.sr1_guard, n);

        let rho = if pred > S::zero() {
            ared / pred
        } else {
            -S::one()
        };

        // Non-strict: machine-flat steps still relocate the iterate, and
        // the model step is built from the exactly computed gradient, so
        // the gradient keeps improving after energy gains underflow.
        if ared >= S::zero() {
            x = xt;
            fx = ft;
            std::mem::swap(&mut g, &mut g_trial);
            let improved_energy = ared > opts.energy_tolerance * (S::one() + fx.abs());
            let gn_now = inf_norm(&g);
            let improved_grad = gn_now <= cast::<S>(0.5) * gn_mark;
            if improved_grad {
                gn_mark = gn_now;
            }
            if improved_energy || improved_grad {
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    return OptimResult {
                        converged: gn_now <= opts.gradient_tolerance,
                        grad_inf_norm: gn_now,
                        x,
                        value: fx,
                        iterations: iter + 1,
                        evals,
                    };
                }
            }
        }

        if rho > cast::<S>(0.75) {
            if p_norm >= cast::<S>(0.8) * delta {
                delta = (delta + delta).min(opts.max_radius);
            }
        } else if rho < cast::<S>(0.1) {
            delta *= cast::<S>(0.5);
            if delta < cast::<S>(1e-14) {
                break;
            }
        }
        iterations = iter + 1;
    }

    let gn = inf_norm(&g);
    OptimResult {
        converged: gn <= opts.gradient_tolerance,
        grad_inf_norm: gn,
        x,
        value: fx,
        iterations,
        evals,
    }
}

fn symv<S: Scalar>(b: &[S], v: &[S], n: usize) -> Vec<S> {
    (0..n)
        .map(|i| (0..n).map(|j| b[i * n + j] * v[j]).sum())
        .collect()
}

fn sr1_update<S: Scalar>(b: &mut [S], s: &[S], y: &[S], bs: &[S], guard: S, n: usize) {
    let r: Vec<S> = y.iter().zip(bs).map(|(&yi, &bi)| yi - bi).collect();
    let rs = dot(&r, s);
    if rs.abs() >= guard * norm2(s) * norm2(&r) && rs != S::zero() {
        let inv = S::one() / rs;
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] += r[i] * r[j] * inv;
            }
        }
    }
}

/// Saddle-free Newton refinement from an already good point.
///
/// Quasi-Newton trust regions crawl through the ill-conditioned
/// valleys of deep circuit landscapes because curvature is learned
/// only along the small steps the radius allows. Here the Hessian is
/// measured directly: central differences of the adjoint gradient
/// (accurate to around 1e-9 per entry), eigendecomposed, and applied
/// with absolute-value curvature so saddle directions still descend.
/// Cost per round is `2n + 1` gradient evaluations.
pub fn newton_polish<S, F>(mut f: F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![S::zero(); n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1usize;
    let mut gn = inf_norm(&g);
    let fd = cast::<S>(1e-5);
    let max_rounds = 16usize;
    let mut rounds = 0usize;
    let mut flat = 0usize;
    let mut gn_mark = gn * cast::<S>(0.5);

    for round in 0..max_rounds {
        rounds = round;
        if gn <= opts.gradient_tolerance {
            return OptimResult {
                x,
                value: fx,
                grad_inf_norm: gn,
                iterations: round,
                evals,
                converged: true,
            };
        }
        let mut hess = vec![S::zero(); n * n];
        let mut gp = vec![S::zero(); n];
        let mut gm = vec![S::zero(); n];
        let mut probe = x.clone();
        for j in 0..n {
            let xj = x[j];
            probe[j] = xj + fd;
            f(&probe, &mut gp);
            probe[j] = xj - fd;
            f(&probe, &mut gm);
            probe[j] = xj;
            evals += 2;
            for i in 0..n {
                hess[i * n + j] += (gp[i] - gm[i]) / (fd + fd);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let m = cast::<S>(0.5) * (hess[i * n + j] + hess[j * n + i]);
                hess[i * n + j] = m;
                hess[j * n + i] = m;
            }
        }
        let Ok(eig) = symmetric_eigen(&hess, n) else {
            break;
        };
        // Directions with curvature below measurement noise carry no
        // trustworthy gradient either (tied layouts are redundant);
        // dropping them avoids amplifying finite-difference error.
        let lam_cap = eig
            .values
            .iter()
            .fold(S::zero(), |m, &v| m.max(v.abs()));
        let floor = cast::<S>(1e-8) * (S::one() + lam_cap);
        let mut step = vec![S::zero(); n];
        for k in 0..n {
            let lam = eig.values[k].abs();
            if lam < floor {
                continue;
            }
            let mut gk = S::zero();
            for i in 0..n {
                gk += eig.vectors[i * n + k] * g[i];
            }
            let coef = gk / lam;
            for (i, slot) in step.iter_mut().enumerate() {
                *slot -= coef * eig.vectors[i * n + k];
            }
        }
        let step_norm = step.iter().fold(S::zero(), |a, &v| a + v * v).sqrt();
        if step_norm > S::one() {
            for v in &mut step {
                *v /= step_norm;
            }
        }
        // Backtrack on the measured energy. The evaluation itself is
        // only accurate to a few hundred ulps, so a step that halves
        // the gradient norm is taken even when the energy moves inside
        // that noise band.
        let noise = cast::<S>(2e-14) * (S::one() + fx.abs());
        let mut accepted = false;
        let mut s = S::one();
        let mut g_new = vec![S::zero(); n];
        for _ in 0..12 {
            let cand: Vec<S> = x.iter().zip(&step).map(|(&xi, &di)| xi + s * di).collect();
            let fc = f(&cand, &mut g_new);
            evals += 1;
            let gn_new = inf_norm(&g_new);
            if fc < fx || (fc <= fx + noise && gn_new <= cast::<S>(0.5) * gn) {
                let gain = fx - fc;
                x = cand;
                fx = fc;
                std::mem::swap(&mut g, &mut g_new);
                gn = gn_new;
                accepted = true;
                if gain <= cast::<S>(1e-13) * (S::one() + fx.abs()) && gn >= gn_mark {
                    flat += 1;
                } else {
                    flat = 0;
                }
                gn_mark = gn_mark.min(gn * cast(0.5));
                break;
            }
            s *= cast::<S>(0.5);
        }
        if !accepted || flat >= 2 {
            break;
        }
    }
    OptimResult {
        converged: gn <= opts.gradient_tolerance,
        grad_inf_norm: gn,
        x,
        value: fx,
        iterations: rounds,
        evals,
    }
}

/// Exact trust-region step through an eigendecomposition of the model
/// Hessian: the global minimizer of `g p + p B p / 2` over the ball,
/// including indefinite models and the hard case. Returns None when
/// the decomposition fails.
fn tr_step_exact<S: Scalar>(b: &[S], g: &[S], delta: S, n: usize) -> Option<Vec<S>> {
    let eig = symmetric_eigen(b, n).ok()?;
    let mut gt = vec![S::zero(); n];
    for (k, slot) in gt.iter_mut().enumerate() {
        let mut acc = S::zero();
        for i in 0..n {
            acc += eig.vectors[i * n + k] * g[i];
        }
        *slot = acc;
    }
    let lam_min = eig.values[0];
    let tiny = cast::<S>(1e-14) * (S::one() + lam_min.abs());

    // |p(shift)| with p_k = -gt_k / (lambda_k + shift); infinite when a
    // shifted eigenvalue vanishes against a live component.
    let norm_at = |shift: S| -> S {
        let mut acc = S::zero();
        for k in 0..n {
            let d = eig.values[k] + shift;
            if d.abs() <= tiny {
                if gt[k].abs() > tiny {
                    return S::infinity();
                }
            } else {
                let t = gt[k] / d;
                acc += t * t;
            }
        }
        acc.sqrt()
    };
    let assemble = |shift: S| -> Vec<S> {
        let mut p = vec![S::zero(); n];
        for k in 0..n {
            let d = eig.values[k] + shift;
            if d.abs() > tiny {
                let coef = -gt[k] / d;
                for (i, slot) in p.iter_mut().enumerate() {
                    *slot += coef * eig.vectors[i * n + k];
                }
            }
        }
        p
    };

    if lam_min > S::zero() && norm_at(S::zero()) <= delta {
        return Some(assemble(S::zero()));
    }
    let shift0 = (-lam_min).max(S::zero());
    if norm_at(shift0) < delta {
        // Hard case: pad the regular part with the bottom eigenvector.
        let p = assemble(shift0);
        let tau = (delta * delta - dot(&p, &p)).max(S::zero()).sqrt();
        let mut out = p;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot += tau * eig.vectors[i * n];
        }
        return Some(out);
    }
    let mut lo = shift0;
    let mut hi = shift0.max(cast::<S>(1e-3));
    let mut guard = 0;
    while norm_at(hi) > delta {
        hi = hi + hi + S::one();
        guard += 1;
        if guard > 200 || !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..220 {
        let mid = (lo + hi) * cast::<S>(0.5);
        if norm_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= cast::<S>(1e-15) * (S::one() + hi) {
            break;
        }
    }
    Some(assemble((lo + hi) * cast::<S>(0.5)))
}

/// Steihaug-Toint truncated CG for `min g p + p B p / 2` within the
/// radius. Indefinite directions and boundary hits step to the sphere.
fn steihaug<S: Scalar>(b: &[S], g: &[S], delta: S, n: usize) -> Vec<S> {
    let mut z = vec![S::zero(); n];
    let g_norm = norm2(g);
    if g_norm == S::zero() {
        return z;
    }
    let mut r = g.to_vec();
    let mut d: Vec<S> = g.iter().map(|&x| -x).collect();
    let term = g_norm * cast::<S>(0.5).min(g_norm.sqrt());

    for _ in 0..(2 * n + 4) {
        let bd = symv(b, &d, n);
        let dbd = dot(&d, &bd);
        if dbd <= S::zero() {
            return to_boundary(&z, &d, delta);
        }
        let rr = dot(&r, &r);
        let alpha = rr / dbd;
        let z_next: Vec<S> = z.iter().zip(&d).map(|(&zi, &di)| zi + alpha * di).collect();
        if norm2(&z_next) >= delta {
            return to_boundary(&z, &d, delta);
        }
        z = z_next;
        for (ri, &bdi) in r.iter_mut().zip(&bd) {
            *ri += alpha * bdi;
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= term {
            return z;
        }
        let beta = rr_new / rr;
        for (di, &ri) in d.iter_mut().zip(&r) {
            *di = -ri + beta * *di;
        }
    }
    z
}

/// Positive root of `|z + tau d| = delta`.
fn to_boundary<S: Scalar>(z: &[S], d: &[S], delta: S) -> Vec<S> {
    let a = dot(d, d);
    let b = dot(z, d);
    let c = dot(z, z) - delta * delta;
    // c <= 0 inside the region, so the discriminant is nonnegative.
    let disc = (b * b - a * c).max(S::zero()).sqrt();
    let tau = if b <= S::zero() {
        (disc - b) / a
    } else {
        -c / (b + disc)
    };
    z.iter().zip(d).map(|(&zi, &di)| zi + tau * di).collect()
}

/// Polak-Ribiere+ nonlinear CG with a strong Wolfe line search.
fn minimize_cg<S, F>(f: &mut F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![S::zero(); n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1usize;
    let mut d: Vec<S> = g.iter().map(|&v| -v).collect();
    let c1 = cast::<S>(1e-4);
    let c2 = cast::<S>(0.1);
    let mut stall = 0usize;
    let mut gn_mark = inf_norm(&g);
    let mut iterations = 0usize;

    for iter in 0..opts.max_iter {
        iterations = iter;
        if inf_norm(&g) <= opts.gradient_tolerance {
            return OptimResult {
                grad_inf_norm: inf_norm(&g),
                x,
                value: fx,
                iterations: iter,
                evals,
                converged: true,
            };
        }
        let mut dg = dot(&d, &g);
        if dg >= S::zero() {
            d = g.iter().map(|&v| -v).collect();
            dg = -dot(&g, &g);
        }

        let (alpha, ft, gt, used) = strong_wolfe(f, &x, &d, fx, dg, c1, c2);
        evals += used;
        if alpha <= S::zero() {
            break;
        }
        let ared = fx - ft;
        for (xi, &di) in x.iter_mut().zip(&d) {
            *xi += alpha * di;
        }
        let g_old = std::mem::replace(&mut g, gt);
        fx = ft;

        let improved_energy = ared > opts.energy_tolerance * (S::one() + fx.abs());
        let gn_now = inf_norm(&g);
        let improved_grad = gn_now <= cast::<S>(0.5) * gn_mark;
        if improved_grad {
            gn_mark = gn_now;
        }
        if improved_energy || improved_grad {
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                break;
            }
        }

        let gg_old = dot(&g_old, &g_old);
        let beta_pr = (dot(&g, &g) - dot(&g, &g_old)) / gg_old;
        let beta = beta_pr.max(S::zero());
        for (di, &gi) in d.iter_mut().zip(&g) {
            *di = -gi + beta * *di;
        }
        iterations = iter + 1;
    }

    let gn = inf_norm(&g);
    OptimResult {
        converged: gn <= opts.gradient_tolerance,
        grad_inf_norm: gn,
        x,
        value: fx,
        iterations,
        evals,
    }
}

/// Strong Wolfe line search (bracket then zoom). Returns the step, the
/// value and gradient at the accepted point, and evaluations used.
fn strong_wolfe<S, F>(
    f: &mut F,
    x: &[S],
    d: &[S],
    f0: S,
    dg0: S,
    c1: S,
    c2: S,
) -> (S, S, Vec<S>, usize)
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x.len();
    let mut g_buf = vec![S::zero(); n];
    let mut evals = 0usize;
    let mut probe = |a: S, g_out: &mut Vec<S>| -> (S, S) {
        let xt: Vec<S> = x.iter().zip(d).map(|(&xi, &di)| xi + a * di).collect();
        let v = f(&xt, g_out);
        (v, dot(g_out, d))
    };

    let a_max = cast::<S>(16.0);
    let mut a_prev = S::zero();
    let mut f_prev = f0;
    let mut a = S::one();

    for i in 0..20 {
        let (fa, dga) = probe(a, &mut g_buf);
        evals += 1;
        if fa > f0 + c1 * a * dg0 || (i > 0 && fa >= f_prev) {
            return zoom(f, x, d, f0, dg0, c1, c2, a_prev, f_prev, a, evals);
        }
        if dga.abs() <= -c2 * dg0 {
            return (a, fa, g_buf, evals);
        }
        if dga >= S::zero() {
            return zoom(f, x, d, f0, dg0, c1, c2, a, fa, a_prev, evals);
        }
        a_prev = a;
        f_prev = fa;
        a = (a + a).min(a_max);
        if a >= a_max {
            return (a_prev, f_prev, g_buf, evals);
        }
    }
    (S::zero(), f0, g_buf, evals)
}

#[allow(clippy::too_many_arguments)]
fn zoom<S, F>(
    f: &mut F,
    x: &[S],
    d: &[S],
    f0: S,
    dg0: S,
    c1: S,
    c2: S,
    mut lo: S,
    mut f_lo: S,
    mut hi: S,
    mut evals: usize,
) -> (S, S, Vec<S>, usize)
where
    S: Scalar,
    F: FnMut(&[S], &mut [S]) -> S,
{
    let n = x.len();
    let mut g_buf = vec![S::zero(); n];
    for _ in 0..30 {
        let a = (lo + hi) * cast::<S>(0.5);
        let xt: Vec<S> = x.iter().zip(d).map(|(&xi, &di)| xi + a * di).collect();
        let fa = f(&xt, &mut g_buf);
        evals += 1;
        let dga = dot(&g_buf, d);
        if fa > f0 + c1 * a * dg0 || fa >= f_lo {
            hi = a;
        } else {
            if dga.abs() <= -c2 * dg0 {
                return (a, fa, g_buf, evals);
            }
            if dga * (hi - lo) >= S::zero() {
                hi = lo;
            }
            lo = a;
            f_lo = fa;
        }
        if (hi - lo).abs() <= cast::<S>(1e-14) {
            return (a, fa, g_buf, evals);
        }
    }
    // Bisection exhausted: surface the best lower point.
    let xt: Vec<S> = x.iter().zip(d).map(|(&xi, &di)| xi + lo * di).collect();
    let fl = f(&xt, &mut g_buf);
    (lo, fl, g_buf, evals + 1)
}

/// Circuit depth policy for a cluster solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRule {
    /// `ceil(n / 2)`.
    Auto,
    Fixed(usize),
    /// `ceil(n / 2)` shifted by a signed offset, floored at one layer.
    Offset(isize),
}

impl LayerRule {
    pub fn layers(self, cluster: &Cluster) -> usize {
        match self {
            LayerRule::Auto => default_layers(cluster),
            LayerRule::Fixed(l) => l.max(1),
            LayerRule::Offset(k) => {
                let base = default_layers(cluster) as isize + k;
                base.max(1) as usize
            }
        }
    }
}

/// Controls for the full cluster pipeline.
#[derive(Debug, Clone)]
pub struct SolveOptions<S> {
    pub optim: OptimOptions<S>,
    pub tying: Tying,
    pub layers: LayerRule,
    /// Coupling where the mapped seed is first refined; sweeps start
    /// from the grid point nearest to it.
    pub bridge_coupling: S,
    /// Step of the internal adiabatic continuation for the periodic
    /// seed solve.
    pub continuation_step: S,
    /// Looser gradient tolerance for interior continuation points; the
    /// bridge and grid solves always use the full tolerance.
    pub seed_gradient_tolerance: S,
    /// Uniform offset added to cold starts. The polarized and `pi/4`
    /// constructions are exact critical points of the energy (the
    /// landscape is even around them), so an unperturbed optimizer
    /// cannot leave them; a small offset restores descent. Zero
    /// disables the nudge.
    pub cold_start_offset: S,
    /// Seed 2D clusters from a ring of the same site count instead of
    /// the perimeter length.
    pub seed_same_sites: bool,
}

impl<S: Scalar> Default for SolveOptions<S> {
    fn default() -> Self {
        SolveOptions {
            optim: OptimOptions::default(),
            tying: Tying::PointGroup,
            layers: LayerRule::Auto,
            bridge_coupling: S::one(),
            continuation_step: cast(0.1),
            seed_gradient_tolerance: cast(1e-5),
            cold_start_offset: cast(1e-3),
            seed_same_sites: false,
        }
    }
}

/// Converged solve at one grid coupling.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSolve<S> {
    pub j_over_h: S,
    pub energy: S,
    pub grad_norm: S,
    pub iterations: usize,
    pub converged: bool,
    pub theta: Vec<S>,
}

/// Solves one cluster across a coupling grid.
///
/// Pipeline: solve the periodic seed chain by adiabatic continuation
/// (from the exact pi/4 state at `h = 0` for odd rings of sufficient
/// depth, otherwise from the polarized state at `J = 0`), transfer the
/// parameters onto the open cluster, refine at the grid point nearest
/// the bridge coupling, then sweep outward in both directions with
/// warm starts. Grid couplings must be ascending.
pub fn solve_cluster<S: Scalar>(
    cluster: &Cluster,
    grid: &[S],
    opts: &SolveOptions<S>,
) -> Result<Vec<GridSolve<S>>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidCluster("grid must be strictly ascending".into()));
    }
    let layers = opts.layers.layers(cluster);
    let layout = AnsatzLayout::new(cluster, opts.tying, layers)?;
    let circuit = layout.build_circuit(cluster);

    // Bridge at the grid point nearest the requested coupling.
    let bridge_idx = nearest_index(grid, opts.bridge_coupling);
    let j_bridge = grid[bridge_idx];

    let mut theta_seed = periodic_seed(cluster, &layout, j_bridge, opts)?;
    nudge(&mut theta_seed, opts.cold_start_offset);

    let solve_at = |j: S, start: &[S], tol: S| -> (OptimResult<S>, Vec<S>) {
        let p = TfimParams::new(j, S::one());
        let optim = OptimOptions {
            gradient_tolerance: tol,
            ..opts.optim
        };
        let res = minimize_refined(
            |th: &[S], gr: &mut [S]| circuit.energy_and_grad(cluster, p, th, gr),
            start,
            &optim,
        );
        let theta = res.x.clone();
        (res, theta)
    };

    let full_tol = opts.optim.gradient_tolerance;
    let (bridge_res, bridge_theta) = solve_at(j_bridge, &theta_seed, full_tol);

    let record = |j: S, res: &OptimResult<S>| GridSolve {
        j_over_h: j,
        energy: res.value,
        grad_norm: res.grad_inf_norm,
        iterations: res.iterations,
        converged: res.converged,
        theta: res.x.clone(),
    };

    // Sweep both directions from the bridge, each warm-starting from
    // its neighbor. The two arms are independent.
    let left_arm: Vec<S> = grid[..bridge_idx].iter().rev().copied().collect();
    let right_arm: Vec<S> = grid[bridge_idx + 1..].to_vec();
    let (left, right) = join(
        || adiabatic_sweep(&circuit, cluster, &left_arm, &bridge_theta, &opts.optim),
        || adiabatic_sweep(&circuit, cluster, &right_arm, &bridge_theta, &opts.optim),
    );

    let mut results = Vec::with_capacity(grid.len());
    results.extend(left.into_iter().rev());
    results.push(record(j_bridge, &bridge_res));
    results.extend(right);
    Ok(results)
}

/// Solves a sequence of couplings in order, warm-starting each from
/// the previous optimum (`seed` for the first). Every returned energy
/// is at or below the energy of its warm start evaluated at its own
/// coupling, up to evaluation noise (a few hundred ulps of the
/// energy): the record's start point is the previous record's
/// optimum, and accepted iterates never increase the energy beyond
/// that band.
pub fn adiabatic_sweep<S: Scalar>(
    circuit: &Circuit,
    cluster: &Cluster,
    couplings: &[S],
    seed: &[S],
    optim: &OptimOptions<S>,
) -> Vec<GridSolve<S>> {
    let mut out = Vec::with_capacity(couplings.len());
    let mut warm = seed.to_vec();
    for &j in couplings {
        let p = TfimParams::new(j, S::one());
        let res = minimize_refined(
            |th: &[S], gr: &mut [S]| circuit.energy_and_grad(cluster, p, th, gr),
            &warm,
            optim,
        );
        warm = res.x.clone();
        out.push(GridSolve {
            j_over_h: j,
            energy: res.value,
            grad_norm: res.grad_inf_norm,
            iterations: res.iterations,
            converged: res.converged,
            theta: res.x,
        });
    }
    out
}

/// Trust-region solve, then Newton refinement if the quasi-Newton
/// stage stalled short of tolerance. Refinement cost is quadratic in
/// the parameter count, so very large layouts skip it.
fn minimize_refined<S: Scalar, F>(mut f: F, x0: &[S], opts: &OptimOptions<S>) -> OptimResult<S>
where
    F: FnMut(&[S], &mut [S]) -> S,
{
    let res = minimize(&mut f, x0, opts);
    if res.converged || x0.len() > 256 {
        return res;
    }
    let polish = newton_polish(&mut f, &res.x, opts);
    OptimResult {
        iterations: res.iterations + polish.iterations,
        evals: res.evals + polish.evals,
        ..polish
    }
}

fn nearest_index<S: Scalar>(grid: &[S], target: S) -> usize {
    let mut best = 0usize;
    let mut best_d = (grid[0] - target).abs();
    for (i, &g) in grid.iter().enumerate().skip(1) {
        let d = (g - target).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Builds the open-cluster start parameters at the bridge coupling.
///
/// Clusters too small to host a seed ring start from zeros (the
/// polarized reference), which is exact at `J = 0` and adequate after
/// the bridge refinement for two-site clusters.
fn periodic_seed<S: Scalar>(
    cluster: &Cluster,
    layout: &AnsatzLayout,
    j_bridge: S,
    opts: &SolveOptions<S>,
) -> Result<Vec<S>> {
    let len = if opts.seed_same_sites {
        cluster.n_sites()
    } else {
        seed_chain_len(cluster)
    };
    if len < 3 {
        return Ok(vec![S::zero(); layout.n_params()]);
    }
    let ring = Cluster::periodic_chain(len)?;
    let ring_layout = AnsatzLayout::new(&ring, Tying::Translational, layout.layers())?;
    let ring_circuit = ring_layout.build_circuit(&ring);

    let seed_tol = opts.seed_gradient_tolerance.max(opts.optim.gradient_tolerance);
    let minimize_ring = |theta: &[S], p: TfimParams<S>, tol: S| -> Vec<S> {
        // The seed only has to be a decent warm start at loose
        // tolerance; basin exploration belongs to the grid solves.
        let optim = OptimOptions {
            gradient_tolerance: tol,
            restarts: 0,
            ..opts.optim
        };
        minimize(
            |th: &[S], gr: &mut [S]| ring_circuit.energy_and_grad(&ring, p, th, gr),
            theta,
            &optim,
        )
        .x
    };

    let use_pi_fourth =
        len % 2 == 1 && layout.layers() >= sufficient_periodic_layers(len) && j_bridge > S::zero();

    let theta_ring = if use_pi_fourth {
        // Exact at h = 0; walk the field up to h = 1 at fixed J.
        let mut theta = pi_fourth_params::<S>(&ring, &ring_layout)?;
        nudge(&mut theta, opts.cold_start_offset);
        for &h in &continuation_path(S::one(), opts.continuation_step) {
            theta = minimize_ring(&theta, TfimParams::new(j_bridge, h), seed_tol);
        }
        theta
    } else {
        // Polarized state is exact at J = 0; walk the coupling up.
        let mut theta = vec![S::zero(); ring_layout.n_params()];
        nudge(&mut theta, opts.cold_start_offset);
        for &j in &continuation_path(j_bridge, opts.continuation_step) {
            theta = minimize_ring(&theta, TfimParams::new(j, S::one()), seed_tol);
        }
        theta
    };

    map_periodic_to_open(cluster, layout, &ring_layout, &theta_ring)
}

fn nudge<S: Scalar>(theta: &mut [S], eps: S) {
    for t in theta {
        *t += eps;
    }
}

/// Strictly increasing steps from one increment up to and including
/// `target` (empty when the target is at or below zero).
fn continuation_path<S: Scalar>(target: S, step: S) -> Vec<S> {
    let mut path = Vec::new();
    if target <= S::zero() {
        return path;
    }
    let mut x = step;
    while x < target - step * cast::<S>(0.5) {
        path.push(x);
        x += step;
    }
    path.push(target);
    path
}
