//! Monte Carlo propagation of per-cluster energy noise through the
//! expansion.
//!
//! Shot noise on a hardware run perturbs every cluster energy
//! independently; the reduction recursion then mixes those
//! perturbations into the per-site estimate with integer coefficients
//! of both signs. Each sample here redoes the reduction on noisy
//! inputs, so the measured spread is an end-to-end number, while
//! [`analytic_sigma`] gives the linear-theory prediction the samples
//! are checked against.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Cluster;
use crate::model::TfimParams;
use crate::nlce::{build_plan, ExpansionPlan, Lattice};
use crate::reference::ed_ground_energy;
use crate::scalar::{cast, Scalar};

/// Per-cluster noise scale as a function of cluster size,
/// `s_c = sigma * g(N_c)`.
///
/// Constant per-cluster error models shot counts scaled up with
/// cluster size; the growing modes model a fixed shot budget, where
/// the energy variance grows with the number of measured terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScaling {
    /// `g(N) = 1`.
    Constant,
    /// `g(N) = sqrt(N)`.
    SqrtN,
    /// `g(N) = N`.
    LinearN,
}

impl NoiseScaling {
    pub fn factor<S: Scalar>(self, n_sites: usize) -> S {
        let n = cast::<S>(n_sites as f64);
        match self {
            NoiseScaling::Constant => S::one(),
            NoiseScaling::SqrtN => n.sqrt(),
            NoiseScaling::LinearN => n,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NoiseScaling::Constant => "constant",
            NoiseScaling::SqrtN => "sqrtn",
            NoiseScaling::LinearN => "linearn",
        }
    }
}

/// Controls for one noise propagation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseStudyConfig<S> {
    /// Base noise scale.
    pub sigma: S,
    pub scaling: NoiseScaling,
    pub n_samples: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for NoiseStudyConfig<S> {
    fn default() -> Self {
        NoiseStudyConfig {
            sigma: cast(1e-3),
            scaling: NoiseScaling::Constant,
            n_samples: 100_000,
            seed: 7,
        }
    }
}

/// Spread of the per-site estimate under sampled cluster noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSummary<S> {
    /// Estimate from the unperturbed energies.
    pub clean: S,
    /// Sample mean of the perturbed estimates.
    pub mean: S,
    /// Sample standard deviation of the perturbed estimates.
    pub sigma_nlce: S,
    /// Standard error of `sigma_nlce` (Gaussian sampling theory).
    pub std_error: S,
    pub n_samples: usize,
}

/// Sensitivities of the full-truncation per-site estimate to each
/// cluster energy, in plan entry order. The estimate is linear in the
/// inputs, so these are exact.
pub fn sensitivities<S: Scalar>(plan: &ExpansionPlan) -> Vec<S> {
    let n = plan.entries().len();
    (0..n)
        .map(|i| {
            let mut unit = vec![S::zero(); n];
            unit[i] = S::one();
            // Unit vectors are always the right length; reduce cannot fail.
            let reduced = plan.reduce(&unit).expect("unit vector matches plan");
            plan.per_site(&reduced)
        })
        .collect()
}

/// Linear-theory noise prediction,
/// `sigma_NLCE^2 = sum_c (de/dE_c)^2 s_c^2`.
pub fn analytic_sigma<S: Scalar>(plan: &ExpansionPlan, cfg: &NoiseStudyConfig<S>) -> S {
    let var = sensitivities::<S>(plan)
        .iter()
        .zip(plan.entries())
        .map(|(&mu, e)| {
            let s = cfg.sigma * cfg.scaling.factor::<S>(e.n_sites());
            mu * mu * s * s
        })
        .sum::<S>();
    var.sqrt()
}

/// Perturbs every cluster energy with independent Gaussian noise,
/// recomputes the per-site estimate per sample, and reports the spread.
///
/// Sample `i` draws from its own counter-mode stream of the seeded
/// generator, so results are independent of thread scheduling.
pub fn propagate_noise<S: Scalar>(
    plan: &ExpansionPlan,
    clean_energies: &[S],
    cfg: &NoiseStudyConfig<S>,
) -> Result<NoiseSummary<S>> {
    if clean_energies.len() != plan.entries().len() {
        return Err(Error::ShapeMismatch {
            expected: plan.entries().len(),
            got: clean_energies.len(),
        });
    }
    if cfg.sigma < S::zero() {
        return Err(Error::MalformedData("negative noise scale".into()));
    }
    if cfg.n_samples < 2 {
        return Err(Error::MalformedData(
            "noise propagation needs at least 2 samples".into(),
        ));
    }

    let clean_reduced = plan.reduce(clean_energies)?;
    let clean = plan.per_site(&clean_reduced);

    let scales: Vec<S> = plan
        .entries()
        .iter()
        .map(|e| cfg.sigma * cfg.scaling.factor::<S>(e.n_sites()))
        .collect();

    let estimates: Vec<S> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let noisy: Vec<S> = clean_energies
                .iter()
                .zip(&scales)
                .map(|(&e, &s)| {
                    let xi: f64 = rng.sample(StandardNormal);
                    e + s * cast::<S>(xi)
                })
                .collect();
            let reduced = plan.reduce(&noisy).expect("lengths match by construction");
            plan.per_site(&reduced)
        })
        .collect();

    let n = cast::<S>(cfg.n_samples as f64);
    let mean = estimates.iter().copied().sum::<S>() / n;
    let var = estimates
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<S>()
        / (n - S::one());
    let sigma_nlce = var.sqrt();
    // Var(s) ~ sigma^2 / (2(n-1)) for Gaussian samples.
    let std_error = sigma_nlce / (cast::<S>(2.0) * (n - S::one())).sqrt();

    Ok(NoiseSummary {
        clean,
        mean,
        sigma_nlce,
        std_error,
        n_samples: cfg.n_samples,
    })
}

/// One `(order, mode)` cell of a scaling study.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalingRow<S> {
    pub order: usize,
    pub mode: NoiseScaling,
    pub sigma: S,
    pub sigma_nlce: S,
    pub std_error: S,
    pub n_samples: usize,
    pub seed: u64,
}

/// Noise spread vs truncation order for each scaling mode.
///
/// Clean cluster energies come from exact diagonalization at the given
/// coupling (`h = 1`), shared across orders. Each `(order, mode)` cell
/// reruns the Monte Carlo on the truncated plan.
pub fn scaling_study<S: Scalar>(
    lattice: Lattice,
    j_over_h: S,
    orders: &[usize],
    modes: &[NoiseScaling],
    cfg: &NoiseStudyConfig<S>,
) -> Result<Vec<ScalingRow<S>>> {
    let mut energy_of: BTreeMap<(usize, usize), S> = BTreeMap::new();
    let mut rows = Vec::with_capacity(orders.len() * modes.len());
    for &order in orders {
        let plan = build_plan(lattice, order)?;
        let clean = plan
            .entries()
            .iter()
            .map(|e| {
                if let Some(&v) = energy_of.get(&e.shape) {
                    return Ok(v);
                }
                let cluster = Cluster::open(e.shape.0, e.shape.1)?;
                let v = ed_ground_energy(&cluster, TfimParams::new(j_over_h, S::one()))?;
                energy_of.insert(e.shape, v);
                Ok(v)
            })
            .collect::<Result<Vec<S>>>()?;
        for &mode in modes {
            let cell_cfg = NoiseStudyConfig {
                scaling: mode,
                ..*cfg
            };
            let summary = propagate_noise(&plan, &clean, &cell_cfg)?;
            rows.push(ScalingRow {
                order,
                mode,
                sigma: cfg.sigma,
                sigma_nlce: summary.sigma_nlce,
                std_error: summary.std_error,
                n_samples: cfg.n_samples,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_plan_and_energies(order: usize) -> (ExpansionPlan, Vec<f64>) {
        let plan = build_plan(Lattice::Chain, order).unwrap();
        // Noise spread is independent of the clean values (the
        // reduction is linear); any assignment works.
        let energies = (1..=order).map(|l| -1.27 * l as f64).collect();
        (plan, energies)
    }

    #[test]
    fn zero_noise_gives_zero_spread() {
        let (plan, energies) = chain_plan_and_energies(6);
        let cfg = NoiseStudyConfig {
            sigma: 0.0,
            n_samples: 500,
            ..NoiseStudyConfig::default()
        };
        let s = propagate_noise(&plan, &energies, &cfg).unwrap();
        // Summation roundoff only.
        assert!(s.sigma_nlce < 1e-12);
        assert!((s.mean - s.clean).abs() < 1e-12);
    }

    #[test]
    fn chain_constant_mode_is_sigma_root_two() {
        // Order-L chain estimate is E_L - E_{L-1}; independent constant
        // noise on each term gives sigma * sqrt(2) exactly.
        let (plan, energies) = chain_plan_and_energies(9);
        let cfg = NoiseStudyConfig {
            sigma: 1e-3,
            n_samples: 100_000,
            ..NoiseStudyConfig::default()
        };
        let s = propagate_noise(&plan, &energies, &cfg).unwrap();
        let expect = 1e-3 * 2f64.sqrt();
        assert!(
            (s.sigma_nlce - expect).abs() < 0.01 * expect,
            "sigma_nlce {:.4e} vs {expect:.4e}",
            s.sigma_nlce
        );
    }

    #[test]
    fn chain_sensitivities_are_plus_minus_one() {
        let (plan, _) = chain_plan_and_energies(7);
        let mu = sensitivities::<f64>(&plan);
        for (i, &m) in mu.iter().enumerate() {
            let expect = match i {
                5 => -1.0,
                6 => 1.0,
                _ => 0.0,
            };
            assert!((m - expect).abs() < 1e-12, "mu[{i}] = {m}");
        }
    }

    #[test]
    fn monte_carlo_matches_linear_theory() {
        let plan = build_plan(Lattice::Square, 8).unwrap();
        let energies: Vec<f64> = plan
            .entries()
            .iter()
            .map(|e| -1.1 * e.n_sites() as f64)
            .collect();
        for mode in [
            NoiseScaling::Constant,
            NoiseScaling::SqrtN,
            NoiseScaling::LinearN,
        ] {
            let cfg = NoiseStudyConfig {
                sigma: 1e-3,
                scaling: mode,
                n_samples: 40_000,
                seed: 11,
            };
            let s = propagate_noise(&plan, &energies, &cfg).unwrap();
            let predict = analytic_sigma(&plan, &cfg);
            assert!(
                (s.sigma_nlce - predict).abs() < 3.0 * s.std_error,
                "{mode:?}: mc {:.4e} vs analytic {predict:.4e}",
                s.sigma_nlce
            );
        }
    }

    #[test]
    fn doubling_sigma_doubles_spread_exactly_per_seed() {
        // Same seed replays the same normal draws, so scaling sigma
        // scales every sampled estimate deviation linearly.
        let (plan, energies) = chain_plan_and_energies(8);
        let base = NoiseStudyConfig {
            sigma: 5e-4,
            n_samples: 2_000,
            ..NoiseStudyConfig::default()
        };
        let doubled = NoiseStudyConfig {
            sigma: 1e-3,
            ..base
        };
        let a = propagate_noise(&plan, &energies, &base).unwrap();
        let b = propagate_noise(&plan, &energies, &doubled).unwrap();
        assert!((b.sigma_nlce - 2.0 * a.sigma_nlce).abs() < 1e-12 * b.sigma_nlce.abs());
    }

    #[test]
    fn same_seed_reproduces() {
        let (plan, energies) = chain_plan_and_energies(6);
        let cfg = NoiseStudyConfig {
            n_samples: 3_000,
            ..NoiseStudyConfig::default()
        };
        let a = propagate_noise(&plan, &energies, &cfg).unwrap();
        let b = propagate_noise(&plan, &energies, &cfg).unwrap();
        assert_eq!(a.sigma_nlce, b.sigma_nlce);
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn scaling_factors() {
        assert_eq!(NoiseScaling::Constant.factor::<f64>(9), 1.0);
        assert_eq!(NoiseScaling::SqrtN.factor::<f64>(9), 3.0);
        assert_eq!(NoiseScaling::LinearN.factor::<f64>(9), 9.0);
    }

    #[test]
    fn chain_study_matches_closed_forms() {
        // Chain sensitivities are -/+1 on the last two clusters, so
        // sigma_NLCE = sigma * sqrt(g(L)^2 + g(L-1)^2) per mode.
        let cfg = NoiseStudyConfig {
            sigma: 1e-3,
            n_samples: 20_000,
            ..NoiseStudyConfig::default()
        };
        let modes = [NoiseScaling::Constant, NoiseScaling::LinearN];
        let rows = scaling_study(Lattice::Chain, 1.0, &[4, 6], &modes, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            let l = row.order as f64;
            let g = |x: f64| match row.mode {
                NoiseScaling::Constant => 1.0,
                NoiseScaling::SqrtN => x.sqrt(),
                NoiseScaling::LinearN => x,
            };
            let expect = 1e-3 * (g(l).powi(2) + g(l - 1.0).powi(2)).sqrt();
            assert!(
                (row.sigma_nlce - expect).abs() < 3.0 * row.std_error,
                "order {} {:?}: {:.4e} vs {expect:.4e}",
                row.order,
                row.mode,
                row.sigma_nlce
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (plan, energies) = chain_plan_and_energies(5);
        let cfg = NoiseStudyConfig {
            sigma: -1.0,
            ..NoiseStudyConfig::default()
        };
        assert!(propagate_noise(&plan, &energies, &cfg).is_err());
        let cfg = NoiseStudyConfig {
            n_samples: 1,
            ..NoiseStudyConfig::default()
        };
        assert!(propagate_noise(&plan, &energies, &cfg).is_err());
        assert!(propagate_noise(&plan, &energies[..3], &NoiseStudyConfig::default()).is_err());
    }
}
