//! Water-filling power allocation parameterized by the fairness rate delta.
//!
//! Once relay sets and subcarriers are fixed, every per-user rate target
//! R_k = delta * alpha_k pins down a unique water-filling power profile, so
//! the whole allocation collapses to a scalar search over delta. Transmit
//! power has a closed form in delta, its derivative is analytic, and the
//! energy-efficiency maximizer is the root of a strictly decreasing G(delta),
//! found by bisection and clipped to the power budget.

use crate::channel::{ChannelRealization, SystemConfig};
use crate::virtual_link::{df_optimal_split, e2e_rate, NodePowerSplit, VirtualLinkDecision};
use crate::{Error, Result};
use std::f64::consts::LN_2;

/// Everything about an assignment that the delta parameterization needs:
/// per-user CNRs sorted ascending and the rate offsets Q_k they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaProfile {
    /// Q_k = sum over S_k of (1/2N) log2(Y^(n)/Y^(1)), bit/s/Hz.
    pub q: Vec<f64>,
    /// Per-user virtual CNRs, ascending; Y^(1) is the minimum.
    pub upsilon_sorted: Vec<Vec<f64>>,
    /// Global subcarrier index at each sorted position.
    pub subcarriers_sorted: Vec<Vec<usize>>,
    /// |S_k| per user.
    pub s_sizes: Vec<usize>,
    /// Domain floor max_k Q_k/alpha_k; below it the weakest subcarrier would
    /// need negative power.
    pub delta_min: f64,
    pub alpha: Vec<f64>,
    pub num_subcarriers: usize,
}

/// Output of the delta search: the optimal fairness level and the powers,
/// splits, and rates it induces.
#[derive(Debug, Clone)]
pub struct PowerSolution {
    /// Optimal delta, bit/s/Hz.
    pub delta: f64,
    /// Per-pair powers, flat n-major: `p_kn[n*K + k]`, zero off-assignment.
    pub p_kn: Vec<f64>,
    /// Per-pair node splits, same indexing, None off-assignment.
    pub splits: Vec<Option<NodePowerSplit>>,
    /// Per-user rates recomputed from the powers, bit/s/Hz.
    pub rates: Vec<f64>,
    /// Radiated power, W.
    pub p_trans: f64,
    /// Consumed power eta*p_trans + P_static + xi*sum(rates), W.
    pub p_total: f64,
    /// bit/Hz/J.
    pub ee: f64,
    /// True when the budget, not the unconstrained optimum, set delta.
    pub budget_binding: bool,
    /// True when G(delta_min) <= 0 forced delta down to the domain floor.
    pub clamped: bool,
}

/// Builds the delta parameterization from an assignment and the flat n-major
/// `upsilon` matrix.
pub fn build_profile(
    assignment: &crate::subcarrier::Assignment,
    upsilon: &[f64],
    alpha: &[f64],
    num_subcarriers: usize,
) -> Result<DeltaProfile> {
    let k_total = assignment.sets.len();
    if alpha.len() != k_total || upsilon.len() != num_subcarriers * k_total {
        return Err(Error::InvalidConfig("profile dimensions mismatch".into()));
    }
    let two_n = 2.0 * num_subcarriers as f64;
    let mut q = Vec::with_capacity(k_total);
    let mut upsilon_sorted = Vec::with_capacity(k_total);
    let mut subcarriers_sorted = Vec::with_capacity(k_total);
    let mut s_sizes = Vec::with_capacity(k_total);
    for (k, set) in assignment.sets.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::InvalidConfig(format!("user {k} has no subcarriers")));
        }
        let mut pairs: Vec<(f64, usize)> = set
            .iter()
            .map(|&n| (upsilon[n * k_total + k], n))
            .collect();
        if pairs.iter().any(|(u, _)| !(*u > 0.0 && u.is_finite())) {
            return Err(Error::InvalidConfig("upsilon entries must be positive".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let u1 = pairs[0].0;
        q.push(pairs.iter().map(|(u, _)| (u / u1).log2() / two_n).sum());
        s_sizes.push(pairs.len());
        upsilon_sorted.push(pairs.iter().map(|(u, _)| *u).collect());
        subcarriers_sorted.push(pairs.iter().map(|(_, n)| *n).collect());
    }
    let delta_min = q
        .iter()
        .zip(alpha)
        .map(|(qk, ak)| qk / ak)
        .fold(0.0f64, f64::max);
    Ok(DeltaProfile {
        q,
        upsilon_sorted,
        subcarriers_sorted,
        s_sizes,
        delta_min,
        alpha: alpha.to_vec(),
        num_subcarriers,
    })
}

impl DeltaProfile {
    /// Water-filling exponent x_k = 2N (delta*alpha_k - Q_k)/|S_k|.
    fn exponent(&self, k: usize, delta: f64) -> f64 {
        2.0 * self.num_subcarriers as f64 * (delta * self.alpha[k] - self.q[k])
            / self.s_sizes[k] as f64
    }

    /// Excess inverse-CNR cost of user k's better subcarriers relative to the
    /// weakest: sum of (Y^(n) - Y^(1))/(Y^(n) Y^(1)).
    fn level_cost(&self, k: usize) -> f64 {
        let u1 = self.upsilon_sorted[k][0];
        self.upsilon_sorted[k]
            .iter()
            .map(|&u| (u - u1) / (u * u1))
            .sum()
    }

    fn check_domain(&self, delta: f64) -> Result<()> {
        let tol = 1e-12 * self.delta_min.max(1.0);
        if !delta.is_finite() || delta < self.delta_min - tol {
            return Err(Error::Domain(format!(
                "delta {delta} below the domain floor {}",
                self.delta_min
            )));
        }
        Ok(())
    }

    fn sum_alpha(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Power on user k's assigned subcarrier n (global index) at fairness level
/// `delta`, W. Zero exactly on the user's weakest subcarrier at
/// delta = Q_k/alpha_k.
pub fn per_subcarrier_power(profile: &DeltaProfile, delta: f64, k: usize, n: usize) -> Result<f64> {
    profile.check_domain(delta)?;
    let pos = profile.subcarriers_sorted[k]
        .iter()
        .position(|&m| m == n)
        .ok_or_else(|| Error::Domain(format!("subcarrier {n} is not assigned to user {k}")))?;
    let u1 = profile.upsilon_sorted[k][0];
    let un = profile.upsilon_sorted[k][pos];
    let p = (profile.exponent(k, delta).exp2() - 1.0) / u1 + (un - u1) / (un * u1);
    Ok(p.max(0.0))
}

/// Total radiated power P_trans(delta), W: the closed form summing each
/// user's water-filling profile.
pub fn total_transmit_power(profile: &DeltaProfile, delta: f64) -> Result<f64> {
    profile.check_domain(delta)?;
    Ok((0..profile.alpha.len())
        .map(|k| {
            let u1 = profile.upsilon_sorted[k][0];
            let s = profile.s_sizes[k] as f64;
            s * (profile.exponent(k, delta).exp2() - 1.0) / u1 + profile.level_cost(k)
        })
        .sum())
}

/// Analytic dP_trans/ddelta, W per bit/s/Hz. Strictly positive.
pub fn transmit_power_derivative(profile: &DeltaProfile, delta: f64) -> Result<f64> {
    profile.check_domain(delta)?;
    let two_n = 2.0 * profile.num_subcarriers as f64;
    Ok((0..profile.alpha.len())
        .map(|k| {
            let u1 = profile.upsilon_sorted[k][0];
            two_n * profile.alpha[k] * LN_2 * profile.exponent(k, delta).exp2() / u1
        })
        .sum())
}

/// EE(delta) = delta*sum(alpha) / (eta*P_trans + P_static + xi*delta*sum(alpha)),
/// bit/Hz/J.
pub fn ee_of_delta(profile: &DeltaProfile, delta: f64, config: &SystemConfig) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("EE needs delta > 0, got {delta}")));
    }
    let rate = delta * profile.sum_alpha();
    let p_trans = total_transmit_power(profile, delta)?;
    Ok(rate / (config.eta * p_trans + config.p_static_w + config.xi * rate))
}

/// G(delta) = eta*P_trans + P_static - delta*eta*dP_trans/ddelta. Strictly
/// decreasing; its sign is the sign of dEE/ddelta, so its root is the
/// unconstrained EE maximizer.
pub fn g_function(profile: &DeltaProfile, delta: f64, config: &SystemConfig) -> Result<f64> {
    profile.check_domain(delta)?;
    let two_n = 2.0 * profile.num_subcarriers as f64;
    // Grouped per user so the exploding 2^x term carries one finite negative
    // factor: the limit at large delta is -inf, never inf - inf.
    let sum: f64 = (0..profile.alpha.len())
        .map(|k| {
            let u1 = profile.upsilon_sorted[k][0];
            let s = profile.s_sizes[k] as f64;
            let growth = s - delta * two_n * profile.alpha[k] * LN_2;
            (profile.exponent(k, delta).exp2() * growth - s) / u1 + profile.level_cost(k)
        })
        .sum();
    Ok(config.eta * sum + config.p_static_w)
}

fn consumed_power(profile: &DeltaProfile, delta: f64, config: &SystemConfig) -> Result<f64> {
    Ok(config.eta * total_transmit_power(profile, delta)?
        + config.p_static_w
        + config.xi * delta * profile.sum_alpha())
}

/// Maximizes EE over delta under the consumed-power budget and materializes
/// the full solution: per-pair powers and node splits via the hop-equalizing
/// split, rates, and the efficiency achieved.
pub fn find_delta_star(
    profile: &DeltaProfile,
    config: &SystemConfig,
    decisions: &[VirtualLinkDecision],
    ch: &ChannelRealization,
) -> Result<PowerSolution> {
    config.validate()?;
    let k_total = profile.alpha.len();
    if config.alpha != profile.alpha {
        return Err(Error::InvalidConfig("profile and config disagree on alpha".into()));
    }
    if decisions.len() != profile.num_subcarriers * k_total {
        return Err(Error::InvalidConfig("decision grid size mismatch".into()));
    }

    let floor = profile.delta_min;
    let needed = consumed_power(profile, floor, config)?;
    if needed > config.p_max_w {
        return Err(Error::InfeasibleBudget { needed_w: needed, p_max_w: config.p_max_w });
    }

    let (delta, budget_binding, clamped) = if g_function(profile, floor, config)? <= 0.0 {
        if floor == 0.0 {
            return Err(Error::Domain(
                "EE has no positive maximizer: G(0) <= 0, so EE only degrades as rate grows \
                 and the supremum sits at delta = 0 with zero rate"
                    .into(),
            ));
        }
        (floor, false, true)
    } else {
        // G > 0 at the floor and G is strictly decreasing: double until the
        // sign flips, then bisect.
        let mut lo = floor;
        let mut hi = floor.max(1e-3);
        let mut guard = 0;
        while g_function(profile, hi, config)? > 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::GuardRail("G(delta) never went negative".into()));
            }
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if g_function(profile, mid, config)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let delta_sharp = 0.5 * (lo + hi);

        if consumed_power(profile, delta_sharp, config)? <= config.p_max_w {
            (delta_sharp, false, false)
        } else {
            // Budget binds below the unconstrained optimum; EE is increasing
            // there, so the constrained maximizer spends exactly P_max.
            let (mut lo, mut hi) = (floor, delta_sharp);
            for _ in 0..200 {
                if hi - lo <= 1e-14 * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if consumed_power(profile, mid, config)? > config.p_max_w {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (lo, true, false)
        }
    };

    let n_total = profile.num_subcarriers;
    let mut p_kn = vec![0.0; n_total * k_total];
    let mut splits: Vec<Option<NodePowerSplit>> = vec![None; n_total * k_total];
    let mut rates = vec![0.0; k_total];
    for k in 0..k_total {
        for pos in 0..profile.s_sizes[k] {
            let n = profile.subcarriers_sorted[k][pos];
            let p = per_subcarrier_power(profile, delta, k, n)?;
            p_kn[n * k_total + k] = p;
            splits[n * k_total + k] = Some(df_optimal_split(p, &decisions[n * k_total + k], ch)?);
            rates[k] += e2e_rate(profile.upsilon_sorted[k][pos], p, n_total);
        }
    }
    let p_trans = total_transmit_power(profile, delta)?;
    let p_total = consumed_power(profile, delta, config)?;
    let ee = ee_of_delta(profile, delta, config)?;
    Ok(PowerSolution {
        delta,
        p_kn,
        splits,
        rates,
        p_trans,
        p_total,
        ee,
        budget_binding,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channels, test_config};
    use crate::subcarrier::{assign_subcarriers, Assignment};
    use crate::virtual_link::decision_grid;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Profile with one user per entry of `upsilons`, subcarriers assigned in
    /// listed order.
    fn profile_from(upsilons: &[Vec<f64>], alpha: &[f64], n_total: usize) -> DeltaProfile {
        let k_total = upsilons.len();
        let mut upsilon = vec![1.0; n_total * k_total];
        let mut sets = Vec::new();
        let mut next = 0;
        for (k, us) in upsilons.iter().enumerate() {
            let mut set = Vec::new();
            for &u in us {
                upsilon[next * k_total + k] = u;
                set.push(next);
                next += 1;
            }
            sets.push(set);
        }
        assert!(next <= n_total);
        // Park leftover subcarriers on user 0 only if a test needs full cover;
        // build_profile only reads assigned entries.
        let assignment = Assignment {
            sets,
            theta: vec![0; n_total * k_total],
            rates_equal_power: vec![0.0; k_total],
        };
        build_profile(&assignment, &upsilon, alpha, n_total).unwrap()
    }

    fn rand_profile(rng: &mut ChaCha8Rng) -> DeltaProfile {
        let k_total = 1 + (rng.next_u64() % 3) as usize;
        let mut upsilons = Vec::new();
        let mut n_total = 0;
        for _ in 0..k_total {
            let s = 1 + (rng.next_u64() % 4) as usize;
            n_total += s;
            upsilons.push((0..s).map(|_| rand_pos(rng, 8.0)).collect());
        }
        let alpha: Vec<f64> = (0..k_total).map(|_| 0.5 + rand_pos(rng, 1.0)).collect();
        profile_from(&upsilons, &alpha, n_total)
    }

    fn rand_pos(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        -mean * (1.0 - u).ln()
    }

    #[test]
    fn q_worked_example() {
        let p = profile_from(&[vec![2.0, 4.0]], &[1.0], 2);
        assert!((p.q[0] - 0.25).abs() < 1e-15);
        assert!((p.delta_min - 0.25).abs() < 1e-15);
        assert_eq!(p.s_sizes, vec![2]);
        assert_eq!(p.upsilon_sorted[0], vec![2.0, 4.0]);
    }

    #[test]
    fn equal_upsilon_gives_zero_q_and_floor() {
        let p = profile_from(&[vec![3.0, 3.0, 3.0]], &[2.0], 3);
        assert_eq!(p.q[0], 0.0);
        assert_eq!(p.delta_min, 0.0);
        let p0 = per_subcarrier_power(&p, 1.0, 0, 0).unwrap();
        for n in 1..3 {
            assert_eq!(per_subcarrier_power(&p, 1.0, 0, n).unwrap(), p0);
        }
    }

    #[test]
    fn per_subcarrier_worked_example() {
        // Y = (2, 4), alpha = 1, N = 2, delta = 2: exponent is
        // 2N(delta - Q)/|S| = 4 * 1.75 / 2 = 3.5.
        let p = profile_from(&[vec![2.0, 4.0]], &[1.0], 2);
        let p1 = per_subcarrier_power(&p, 2.0, 0, 0).unwrap();
        let p2 = per_subcarrier_power(&p, 2.0, 0, 1).unwrap();
        assert!((p1 - (2f64.powf(3.5) - 1.0) / 2.0).abs() < 1e-12);
        assert!((p2 - (p1 + 0.25)).abs() < 1e-12);
        let rate_sum = e2e_rate(2.0, p1, 2) + e2e_rate(4.0, p2, 2);
        assert!((rate_sum - 2.0).abs() < 1e-12, "rates sum to {rate_sum}");
    }

    #[test]
    fn weakest_subcarrier_dries_up_at_the_floor() {
        let p = profile_from(&[vec![2.0, 4.0, 9.0]], &[1.5], 3);
        assert!(p.delta_min > 0.0);
        let weakest = per_subcarrier_power(&p, p.delta_min, 0, 0).unwrap();
        assert_eq!(weakest, 0.0);
        assert!(per_subcarrier_power(&p, p.delta_min, 0, 2).unwrap() > 0.0);
        assert!(matches!(
            per_subcarrier_power(&p, 0.9 * p.delta_min, 0, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_form_matches_power_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = rand_profile(&mut rng);
            let delta = p.delta_min + rand_pos(&mut rng, 1.0);
            let total = total_transmit_power(&p, delta).unwrap();
            let mut sum = 0.0;
            for k in 0..p.alpha.len() {
                for &n in &p.subcarriers_sorted[k] {
                    sum += per_subcarrier_power(&p, delta, k, n).unwrap();
                }
            }
            assert!(((total - sum) / total).abs() < 1e-12, "{total} vs {sum}");
        }
    }

    #[test]
    fn transmit_power_increasing_and_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let p = rand_profile(&mut rng);
            let base = p.delta_min.max(0.05);
            let vals: Vec<f64> = (0..40)
                .map(|i| total_transmit_power(&p, base + 0.1 * i as f64).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[1] > w[0]);
            }
            for w in vals.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] > -1e-9);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let p = rand_profile(&mut rng);
            let delta = p.delta_min + 0.01 + rand_pos(&mut rng, 0.8);
            let h = 1e-6;
            let fd = (total_transmit_power(&p, delta + h).unwrap()
                - total_transmit_power(&p, delta - h).unwrap())
                / (2.0 * h);
            let an = transmit_power_derivative(&p, delta).unwrap();
            assert!(((an - fd) / an).abs() < 1e-6, "{an} vs {fd}");
            assert!(an > 0.0);
        }
    }

    #[test]
    fn g_decreasing_and_signs_ee_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let config = test_config();
        for _ in 0..200 {
            let p = rand_profile(&mut rng);
            let base = p.delta_min.max(1e-3);
            let mut prev = f64::INFINITY;
            for i in 0..30 {
                let d = base + 0.15 * i as f64;
                let g = g_function(&p, d, &config).unwrap();
                assert!(g < prev);
                prev = g;
                let h = 1e-7 * d.max(1.0);
                if d - h > p.delta_min {
                    let slope = ee_of_delta(&p, d + h, &config).unwrap()
                        - ee_of_delta(&p, d - h, &config).unwrap();
                    if g.abs() > 1e-6 {
                        assert_eq!(slope > 0.0, g > 0.0, "at delta {d}: G {g} slope {slope}");
                    }
                }
            }
        }
    }

    #[test]
    fn g_survives_huge_delta() {
        let p = profile_from(&[vec![2.0, 4.0]], &[1.0], 2);
        let config = test_config();
        let g = g_function(&p, 1e6, &config).unwrap();
        assert_eq!(g, f64::NEG_INFINITY);
    }

    #[test]
    fn ee_identity_and_static_power_monotonicity() {
        let mut config = test_config();
        config.xi = 0.01;
        let p = profile_from(&[vec![2.0, 4.0], vec![1.0, 8.0]], &[1.0, 2.0], 4);
        let delta = p.delta_min + 0.7;
        let ee = ee_of_delta(&p, delta, &config).unwrap();
        let rate = delta * 3.0;
        let denom = config.eta * total_transmit_power(&p, delta).unwrap()
            + config.p_static_w
            + config.xi * rate;
        assert!((ee * denom - rate).abs() < 1e-12 * rate);

        let mut rich = config.clone();
        rich.p_static_w *= 10.0;
        rich.p_max_w *= 10.0;
        assert!(ee_of_delta(&p, delta, &rich).unwrap() < ee);
    }

    #[test]
    fn delta_sharp_matches_grid_scan() {
        let mut config = test_config();
        config.p_max_w = 1e9;
        config.p_static_w = 0.2;
        config.eta = 1.0;
        config.alpha = vec![1.0];
        config.num_users = 1;
        let p = profile_from(&[vec![1.0]], &[1.0], 4);
        let ch = draw_channels(&test_config()).unwrap();
        let decisions = decision_grid(&ch);
        // Single user on subcarrier 0: reuse the real grid for splits but the
        // profile drives delta; only decisions[0] is touched.
        let sol = find_delta_star(&p, &config, &decisions[..4], &ch).unwrap();
        assert!(!sol.budget_binding && !sol.clamped);

        let mut best = (0.0, 0.0);
        for i in 1..200_000 {
            let d = i as f64 * 1e-5;
            let ee = ee_of_delta(&p, d, &config).unwrap();
            if ee > best.1 {
                best = (d, ee);
            }
        }
        assert!(
            (sol.delta - best.0).abs() < 1e-4,
            "bisection {} vs grid {}",
            sol.delta,
            best.0
        );
        assert!(sol.ee >= best.1 - 1e-10);
    }

    /// End-to-end solve on drawn channels: the full three-step preamble.
    fn solved_instance(seed: u64) -> (DeltaProfile, SystemConfig, PowerSolution) {
        let mut config = test_config();
        config.seed = seed;
        config.num_subcarriers = 8;
        config.num_users = 3;
        config.alpha = vec![1.0, 2.0, 1.0];
        let ch = draw_channels(&config).unwrap();
        let decisions = decision_grid(&ch);
        let upsilon: Vec<f64> = decisions.iter().map(|d| d.upsilon).collect();
        let p_init = (config.p_max_w - config.p_static_w) / config.eta;
        let a = assign_subcarriers(&upsilon, 8, 3, p_init, &config.alpha).unwrap();
        let profile = build_profile(&a, &upsilon, &config.alpha, 8).unwrap();
        let sol = find_delta_star(&profile, &config, &decisions, &ch).unwrap();
        (profile, config, sol)
    }

    #[test]
    fn solution_is_fair_and_within_budget() {
        for seed in 0..30 {
            let (profile, config, sol) = solved_instance(seed);
            for (k, r) in sol.rates.iter().enumerate() {
                let ratio = r / profile.alpha[k];
                assert!(
                    ((ratio - sol.delta) / sol.delta).abs() < 1e-10,
                    "user {k}: {ratio} vs delta {}",
                    sol.delta
                );
            }
            assert!(sol.p_total <= config.p_max_w + 1e-9);
            let expected = config.eta * sol.p_trans
                + config.p_static_w
                + config.xi * sol.rates.iter().sum::<f64>();
            assert!((sol.p_total - expected).abs() < 1e-9);
            let direct_sum: f64 = sol.p_kn.iter().sum();
            assert!(((sol.p_trans - direct_sum) / sol.p_trans).abs() < 1e-12);
        }
    }

    #[test]
    fn water_filling_equalizes_marginal_rates() {
        for seed in 0..20 {
            let (profile, _config, sol) = solved_instance(seed);
            if sol.delta <= profile.delta_min {
                continue;
            }
            let k_total = profile.alpha.len();
            for k in 0..k_total {
                let marginals: Vec<f64> = profile.subcarriers_sorted[k]
                    .iter()
                    .zip(&profile.upsilon_sorted[k])
                    .map(|(&n, &u)| u / (1.0 + sol.p_kn[n * k_total + k] * u))
                    .collect();
                for m in &marginals {
                    assert!(((m - marginals[0]) / marginals[0]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn ee_at_delta_star_tops_feasible_grid() {
        for seed in 0..10 {
            let (profile, config, sol) = solved_instance(seed);
            let hi = 4.0 * sol.delta;
            let lo = profile.delta_min.max(1e-6);
            for i in 0..=2000 {
                let d = lo + (hi - lo) * i as f64 / 2000.0;
                if consumed_power(&profile, d, &config).unwrap() > config.p_max_w {
                    continue;
                }
                let ee = ee_of_delta(&profile, d, &config).unwrap();
                assert!(
                    ee <= sol.ee * (1.0 + 1e-8),
                    "seed {seed}: EE({d}) = {ee} beats {}",
                    sol.ee
                );
            }
        }
    }

    #[test]
    fn tight_budget_binds_exactly() {
        let mut config = test_config();
        config.num_subcarriers = 8;
        config.num_users = 3;
        config.alpha = vec![1.0, 2.0, 1.0];
        let ch = draw_channels(&config).unwrap();
        let decisions = decision_grid(&ch);
        let upsilon: Vec<f64> = decisions.iter().map(|d| d.upsilon).collect();
        let a = assign_subcarriers(&upsilon, 8, 3, 1.0, &config.alpha).unwrap();
        let profile = build_profile(&a, &upsilon, &config.alpha, 8).unwrap();

        let unconstrained = {
            let mut loose = config.clone();
            loose.p_max_w = 1e9;
            find_delta_star(&profile, &loose, &decisions, &ch).unwrap()
        };
        let floor_power = consumed_power(&profile, profile.delta_min, &config).unwrap();
        config.p_max_w = 0.5 * (floor_power + unconstrained.p_total);
        let sol = find_delta_star(&profile, &config, &decisions, &ch).unwrap();
        assert!(sol.budget_binding);
        assert!((sol.p_total - config.p_max_w).abs() < 1e-9);
        assert!(sol.delta < unconstrained.delta);
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let mut config = test_config();
        config.num_users = 1;
        config.alpha = vec![1.0];
        config.num_subcarriers = 2;
        let p = profile_from(&[vec![0.001, 4.0]], &[1.0], 2);
        let floor_power = consumed_power(&p, p.delta_min, &config).unwrap();
        config.p_max_w = 0.9 * floor_power;
        config.p_static_w = 0.5 * config.p_max_w;
        let ch = draw_channels(&test_config()).unwrap();
        let decisions = decision_grid(&ch);
        match find_delta_star(&p, &config, &decisions[..2], &ch) {
            Err(Error::InfeasibleBudget { needed_w, p_max_w }) => {
                assert!(needed_w > p_max_w);
            }
            other => panic!("expected InfeasibleBudget, got {other:?}"),
        }
    }

    #[test]
    fn wildly_spread_cnrs_clamp_to_the_floor() {
        let mut config = test_config();
        config.num_users = 1;
        config.alpha = vec![1.0];
        config.num_subcarriers = 2;
        config.p_static_w = 1e-6;
        config.p_max_w = 1e9;
        config.eta = 1.0;
        let p = profile_from(&[vec![1e-4, 1e4]], &[1.0], 2);
        let ch = draw_channels(&test_config()).unwrap();
        let decisions = decision_grid(&ch);
        let sol = find_delta_star(&p, &config, &decisions[..2], &ch).unwrap();
        assert!(sol.clamped);
        assert!((sol.delta - p.delta_min).abs() < 1e-12);
    }

    #[test]
    fn degenerate_zero_static_power_errors() {
        let mut config = test_config();
        config.num_users = 1;
        config.alpha = vec![1.0];
        config.num_subcarriers = 1;
        config.p_static_w = 0.0;
        let p = profile_from(&[vec![2.0]], &[1.0], 1);
        assert_eq!(p.delta_min, 0.0);
        let ch = draw_channels(&test_config()).unwrap();
        let decisions = decision_grid(&ch);
        assert!(matches!(
            find_delta_star(&p, &config, &decisions[..1], &ch),
            Err(Error::Domain(_))
        ));
    }
}
