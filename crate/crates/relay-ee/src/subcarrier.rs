//! Greedy subcarrier assignment at equal per-subcarrier power.
//!
//! Phase 1 hands every user its best subcarrier so no rate ratio is ever
//! 0/0. Phase 2 repeatedly serves the user furthest below its proportional
//! rate target, giving it its best remaining subcarrier. The result is
//! roughly fair; exact fairness is restored later by the water-filling step.

use crate::virtual_link::e2e_rate;
use crate::{Error, Result};

/// A partition of subcarriers over users plus the equal-power rates that
/// drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Subcarrier indices per user, in assignment order.
    pub sets: Vec<Vec<usize>>,
    /// Flat N x K indicator, n-major: `theta[n*K + k]`.
    pub theta: Vec<u8>,
    /// Per-user sum rate under equal power, bit/s/Hz.
    pub rates_equal_power: Vec<f64>,
}

impl Assignment {
    pub fn user_of(&self, n: usize) -> usize {
        let k_total = self.sets.len();
        (0..k_total).find(|&k| self.theta[n * k_total + k] == 1).unwrap()
    }
}

/// Which user Phase 2 serves next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserSelectionRule {
    /// The user with minimum R/α (furthest below target). Default.
    MinRateRatio,
    /// The user with maximum R/α. Starves lagging users; kept for studying
    /// the greedy's sensitivity to the selection rule.
    MaxRateRatio,
}

/// Rate of one pair at equal power `p_trans/n_total`.
pub fn equal_power_rate(upsilon_kn: f64, p_trans: f64, n_total: usize) -> f64 {
    e2e_rate(upsilon_kn, p_trans / n_total as f64, n_total)
}

/// Assigns every subcarrier to exactly one user given the flat n-major
/// `upsilon` matrix (`upsilon[n*K + k]`), spreading `p_trans` equally.
pub fn assign_subcarriers(
    upsilon: &[f64],
    num_subcarriers: usize,
    num_users: usize,
    p_trans: f64,
    alpha: &[f64],
) -> Result<Assignment> {
    assign_subcarriers_with_rule(
        upsilon,
        num_subcarriers,
        num_users,
        p_trans,
        alpha,
        UserSelectionRule::MinRateRatio,
    )
}

/// [`assign_subcarriers`] with an explicit Phase-2 user selection rule.
pub fn assign_subcarriers_with_rule(
    upsilon: &[f64],
    num_subcarriers: usize,
    num_users: usize,
    p_trans: f64,
    alpha: &[f64],
    rule: UserSelectionRule,
) -> Result<Assignment> {
    let (n_total, k_total) = (num_subcarriers, num_users);
    if n_total < k_total {
        return Err(Error::InvalidConfig(format!(
            "cannot give each of {k_total} users a subcarrier out of {n_total}"
        )));
    }
    if upsilon.len() != n_total * k_total || alpha.len() != k_total {
        return Err(Error::InvalidConfig("upsilon/alpha dimensions mismatch".into()));
    }
    if upsilon.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
        return Err(Error::InvalidConfig("upsilon entries must be positive".into()));
    }

    let rates: Vec<f64> = upsilon
        .iter()
        .map(|&u| equal_power_rate(u, p_trans, n_total))
        .collect();
    let mut state = Greedy {
        rates,
        k_total,
        remaining: (0..n_total).collect(),
        sets: vec![Vec::new(); k_total],
        theta: vec![0u8; n_total * k_total],
        user_rates: vec![0.0f64; k_total],
    };

    for k in 0..k_total {
        state.give_best(k);
    }

    while !state.remaining.is_empty() {
        let ratio = |k: usize| state.user_rates[k] / alpha[k];
        let u = match rule {
            UserSelectionRule::MinRateRatio => (0..k_total)
                .min_by(|&x, &y| ratio(x).partial_cmp(&ratio(y)).unwrap().then(x.cmp(&y)))
                .unwrap(),
            UserSelectionRule::MaxRateRatio => (0..k_total)
                .max_by(|&x, &y| ratio(x).partial_cmp(&ratio(y)).unwrap().then(y.cmp(&x)))
                .unwrap(),
        };
        state.give_best(u);
    }

    Ok(Assignment { sets: state.sets, theta: state.theta, rates_equal_power: state.user_rates })
}

struct Greedy {
    /// Pair rates at equal power, n-major.
    rates: Vec<f64>,
    k_total: usize,
    /// Unassigned subcarriers, ascending.
    remaining: Vec<usize>,
    sets: Vec<Vec<usize>>,
    theta: Vec<u8>,
    user_rates: Vec<f64>,
}

impl Greedy {
    /// Hands user `k` its best remaining subcarrier. Rate ties go to the
    /// lowest subcarrier index (ascending scan with a strict `>`).
    fn give_best(&mut self, k: usize) {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (pos, &n) in self.remaining.iter().enumerate() {
            let r = self.rates[n * self.k_total + k];
            if r > best.1 {
                best = (pos, r);
            }
        }
        let n = self.remaining.remove(best.0);
        self.sets[k].push(n);
        self.theta[n * self.k_total + k] = 1;
        self.user_rates[k] += self.rates[n * self.k_total + k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::virtual_link::decision_grid;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_upsilon(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len)
            .map(|_| {
                let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                -10.0 * (1.0 - u).ln()
            })
            .collect()
    }

    #[test]
    fn single_user_gets_everything() {
        let upsilon = vec![1.0, 2.0, 3.0, 4.0];
        let a = assign_subcarriers(&upsilon, 4, 1, 1.0, &[1.0]).unwrap();
        assert_eq!(a.sets[0].len(), 4);
        assert!(a.theta.iter().all(|&t| t == 1));
    }

    #[test]
    fn two_by_two_diagonal() {
        // Upsilon rows: n=0 -> (4, 1), n=1 -> (1, 4).
        let upsilon = vec![4.0, 1.0, 1.0, 4.0];
        let a = assign_subcarriers(&upsilon, 2, 2, 1.0, &[1.0, 1.0]).unwrap();
        assert_eq!(a.sets[0], vec![0]);
        assert_eq!(a.sets[1], vec![1]);
    }

    #[test]
    fn partitions_all_subcarriers_no_user_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (n, k) = (12, 5);
            let upsilon = rand_upsilon(&mut rng, n * k);
            let alpha = [1.0, 2.0, 1.5, 0.5, 3.0];
            let a = assign_subcarriers(&upsilon, n, k, 2.0, &alpha).unwrap();
            let mut seen = vec![0; n];
            for (user, set) in a.sets.iter().enumerate() {
                assert!(!set.is_empty(), "user {user} got nothing");
                for &sc in set {
                    seen[sc] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
            for n_i in 0..n {
                let row: u8 = (0..k).map(|k_i| a.theta[n_i * k + k_i]).sum();
                assert_eq!(row, 1);
            }
        }
    }

    #[test]
    fn deterministic_under_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let upsilon = rand_upsilon(&mut rng, 8 * 3);
        let alpha = [1.0, 1.0, 2.0];
        let a = assign_subcarriers(&upsilon, 8, 3, 1.0, &alpha).unwrap();
        let b = assign_subcarriers(&upsilon, 8, 3, 1.0, &alpha).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_step_gives_selected_user_its_argmax() {
        // Replay the greedy and check each grant dominates the remaining row.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, k) = (10, 3);
        let upsilon = rand_upsilon(&mut rng, n * k);
        let alpha = [1.0, 2.0, 3.0];
        let a = assign_subcarriers(&upsilon, n, k, 1.0, &alpha).unwrap();
        // Within a user's set the grant order is recorded order, so each
        // grant must dominate everything that same user received later.
        for (user, set) in a.sets.iter().enumerate() {
            for (i, &sc) in set.iter().enumerate() {
                for &later in &set[i + 1..] {
                    assert!(
                        upsilon[sc * k + user] >= upsilon[later * k + user],
                        "user {user} grabbed {sc} before strictly better {later}"
                    );
                }
            }
        }
    }

    #[test]
    fn min_rule_feeds_lagging_user() {
        // Flat channel: alpha = (1, 3) should give user 2 three of four.
        let upsilon = vec![2.0; 4 * 2];
        let a = assign_subcarriers(&upsilon, 4, 2, 1.0, &[1.0, 3.0]).unwrap();
        assert_eq!(a.sets[0].len(), 1);
        assert_eq!(a.sets[1].len(), 3);

        // The printed-argmax variant starves the lagging user instead.
        let b = assign_subcarriers_with_rule(
            &upsilon,
            4,
            2,
            1.0,
            &[1.0, 3.0],
            UserSelectionRule::MaxRateRatio,
        )
        .unwrap();
        assert_eq!(b.sets[0].len(), 3);
        assert_eq!(b.sets[1].len(), 1);
    }

    #[test]
    fn weighted_user_majority_takes_more_subcarriers() {
        let mut wins = 0;
        for seed in 0..200 {
            let mut config = crate::channel::test_config();
            config.seed = seed;
            config.alpha = vec![1.0, 3.0];
            let ch = draw_channels(&config).unwrap();
            let upsilon: Vec<f64> = decision_grid(&ch).iter().map(|d| d.upsilon).collect();
            let a = assign_subcarriers(&upsilon, 4, 2, 1.0, &config.alpha).unwrap();
            if a.sets[1].len() >= a.sets[0].len() {
                wins += 1;
            }
        }
        assert!(wins > 100, "weighted user won only {wins}/200");
    }

    #[test]
    fn rough_fairness_beats_random_split() {
        // Average max/min ratio of R/alpha should not exceed that of a
        // user-count-proportional random assignment.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, k) = (12, 3);
        let alpha = [1.0, 1.0, 2.0];
        let (mut greedy_sum, mut random_sum) = (0.0, 0.0);
        for _ in 0..1000 {
            let upsilon = rand_upsilon(&mut rng, n * k);
            let a = assign_subcarriers(&upsilon, n, k, 1.0, &alpha).unwrap();
            greedy_sum += spread(&a.rates_equal_power, &alpha);

            // Random assignment with one subcarrier per user first.
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                perm.swap(i, j);
            }
            let mut rates = vec![0.0f64; k];
            for (i, &sc) in perm.iter().enumerate() {
                let user = if i < k { i } else { (rng.next_u64() % k as u64) as usize };
                rates[user] += equal_power_rate(upsilon[sc * k + user], 1.0, n);
            }
            random_sum += spread(&rates, &alpha);
        }
        assert!(
            greedy_sum <= random_sum,
            "greedy spread {greedy_sum} worse than random {random_sum}"
        );
    }

    fn spread(rates: &[f64], alpha: &[f64]) -> f64 {
        let ratios: Vec<f64> = rates.iter().zip(alpha).map(|(r, a)| r / a).collect();
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    #[test]
    fn rejects_more_users_than_subcarriers() {
        let upsilon = vec![1.0; 2 * 3];
        assert!(assign_subcarriers(&upsilon, 2, 3, 1.0, &[1.0, 1.0, 1.0]).is_err());
    }
}
