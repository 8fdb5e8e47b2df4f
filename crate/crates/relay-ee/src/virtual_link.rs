//! Relay-set selection and the virtual-direct-link transformation.
//!
//! A (user k, subcarrier n) pair served by decode-and-forward beamforming
//! splits its power budget over two half-duplex slots: the BS broadcasts in
//! slot 1, then the helping relays and the BS transmit coherently in slot 2.
//! Under the hop-equalizing split the pair behaves like a direct link whose
//! CNR is scaled by a power gain β, so downstream stages see only the virtual
//! CNR Υ = 2βγ_Bk (or 2γ_Bk for the repetition-coded direct mode).

use crate::channel::ChannelRealization;
use crate::{par, Error, Result};

/// An ordered set of helping relay indices. Members are stored sorted
/// ascending so sums over a set are evaluated in one canonical order
/// regardless of how the set was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaySet {
    members: Vec<usize>,
}

impl RelaySet {
    /// Builds a set from arbitrary order; sorts, rejects duplicates and
    /// out-of-range indices.
    pub fn new(mut members: Vec<usize>, num_relays: usize) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("relay set contains duplicate indices".into()));
        }
        if members.last().is_some_and(|&r| r >= num_relays) {
            return Err(Error::Domain(format!(
                "relay index out of range (num_relays = {num_relays})"
            )));
        }
        Ok(Self { members })
    }

    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Transmitting node in the second slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxNode {
    Bs,
    Relay(usize),
}

/// Chosen mode and virtual CNR for one (user, subcarrier) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLinkDecision {
    pub relay_set: RelaySet,
    /// Beamforming power gain β; 1 for the direct mode.
    pub beta: f64,
    /// 1 = DF beamforming, 0 = repetition-coded direct link.
    pub rho: u8,
    /// Virtual link CNR Υ: 2βγ_Bk when rho = 1, 2γ_Bk when rho = 0.
    pub upsilon: f64,
    pub user: usize,
    pub subcarrier: usize,
}

/// Per-node transmit powers for one pair. Slot powers are twice the slot
/// energies because each slot lasts half the symbol period, so
/// `p_b_slot1/2 + (sum of slot-2 powers)/2` equals the pair budget.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePowerSplit {
    /// BS power in the broadcast slot.
    pub p_b_slot1: f64,
    /// Slot-2 powers: BS first, then relays ascending by index.
    pub p_nodes_slot2: Vec<(TxNode, f64)>,
}

impl NodePowerSplit {
    pub fn slot2_total(&self) -> f64 {
        self.p_nodes_slot2.iter().map(|(_, p)| p).sum()
    }

    /// Total energy spent by the pair over both half slots.
    pub fn energy(&self) -> f64 {
        self.p_b_slot1 / 2.0 + self.slot2_total() / 2.0
    }
}

/// Second-slot aggregate CNR over the transmit set `set ∪ {BS}`:
/// `γ_Bk + Σ_{r∈set} γ_rk`.
pub fn miso_cnr(set: &RelaySet, k: usize, n: usize, ch: &ChannelRealization) -> f64 {
    ch.bk(n, k) + relay_only_cnr(set, k, n, ch)
}

/// Relay-only part of the second-slot aggregate CNR.
pub fn relay_only_cnr(set: &RelaySet, k: usize, n: usize, ch: &ChannelRealization) -> f64 {
    set.members.iter().map(|&r| ch.rk(n, r, k)).sum()
}

/// Weakest first-hop CNR in the set, which caps the decodable rate in slot 1.
pub fn bottleneck_cnr(set: &RelaySet, n: usize, ch: &ChannelRealization) -> Result<f64> {
    set.members
        .iter()
        .map(|&r| ch.br(n, r))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or_else(|| Error::Domain("bottleneck_cnr of an empty relay set".into()))
}

/// DF beamforming power gain of a nonempty helping set:
/// `β = (γ_R + γ_Bk)·γ_min / (γ_min·γ_Bk + γ_R·γ_Bk)` with `γ_R` the
/// relay-only second-hop sum and `γ_min` the first-hop bottleneck.
pub fn beta(set: &RelaySet, k: usize, n: usize, ch: &ChannelRealization) -> Result<f64> {
    let g_min = bottleneck_cnr(set, n, ch)?;
    let a = ch.bk(n, k);
    let g = relay_only_cnr(set, k, n, ch);
    Ok(((g + a) * g_min) / (g_min * a + g * a))
}

/// Threshold Φ controlling whether dropping the first-hop bottleneck relay
/// improves β. With `a = γ_Bk`, `m` the bottleneck first-hop CNR, `s` the
/// bottleneck relay's second-hop CNR and `g` the relay-only second-hop sum:
/// `Φ = s·m·(m − a) / (g² + a·g − m·s − g·s)`.
///
/// Dropping the bottleneck raises the first-hop floor by Δγ (the first-hop
/// gap to the runner-up). Where the denominator is positive, β improves
/// exactly when Δγ > Φ. A non-positive denominator leaves the comparison
/// meaningless; compare β values directly instead.
pub fn phi_threshold(set: &RelaySet, k: usize, n: usize, ch: &ChannelRealization) -> Result<f64> {
    if set.len() < 2 {
        return Err(Error::Domain("phi_threshold needs at least two relays".into()));
    }
    let bottleneck = *set
        .members
        .iter()
        .min_by(|&&x, &&y| ch.br(n, x).partial_cmp(&ch.br(n, y)).unwrap())
        .unwrap();
    let a = ch.bk(n, k);
    let m = ch.br(n, bottleneck);
    let s = ch.rk(n, bottleneck, k);
    let g = relay_only_cnr(set, k, n, ch);
    Ok(s * m * (m - a) / (g * g + a * g - m * s - g * s))
}

/// Picks the β-maximizing helping set for pair (k, n) and emits its virtual
/// link.
///
/// Relays whose first-hop CNR does not exceed γ_Bk never help and are
/// discarded. Survivors are sorted by first-hop CNR descending and β is
/// evaluated on each prefix (each step drops the current first-hop
/// bottleneck); the best prefix is a global maximum over all subsets, with
/// ties resolved toward fewer relays. No survivors means the direct mode.
pub fn select_relay_set(k: usize, n: usize, ch: &ChannelRealization) -> VirtualLinkDecision {
    let a = ch.bk(n, k);
    let mut eligible: Vec<usize> = (0..ch.num_relays).filter(|&r| ch.br(n, r) > a).collect();
    eligible.sort_by(|&x, &y| ch.br(n, y).partial_cmp(&ch.br(n, x)).unwrap().then(x.cmp(&y)));

    let mut best: Option<(f64, usize)> = None; // (beta, prefix length)
    for len in 1..=eligible.len() {
        let set = RelaySet::new(eligible[..len].to_vec(), ch.num_relays).unwrap();
        let b = beta(&set, k, n, ch).unwrap();
        let better = match best {
            None => true,
            Some((bb, bl)) => b > bb || (b == bb && len < bl),
        };
        if better {
            best = Some((b, len));
        }
    }

    match best {
        Some((b, len)) => {
            let relay_set = RelaySet::new(eligible[..len].to_vec(), ch.num_relays).unwrap();
            VirtualLinkDecision {
                relay_set,
                beta: b,
                rho: 1,
                upsilon: 2.0 * b * a,
                user: k,
                subcarrier: n,
            }
        }
        None => VirtualLinkDecision {
            relay_set: RelaySet::empty(),
            beta: 1.0,
            rho: 0,
            upsilon: 2.0 * a,
            user: k,
            subcarrier: n,
        },
    }
}

/// Virtual-link decisions for every pair, flat n-major: index `n*K + k`.
pub fn decision_grid(ch: &ChannelRealization) -> Vec<VirtualLinkDecision> {
    let (n_sub, n_usr) = (ch.num_subcarriers, ch.num_users);
    par::map_range(n_sub * n_usr, |i| select_relay_set(i % n_usr, i / n_usr, ch))
}

/// Splits a pair budget `p_pair` across slots and nodes.
///
/// For the DF mode this is the hop-equalizing optimum: the BS gets
/// `2P(γ_R + γ_Bk)/(γ_min + γ_R)` in slot 1 and the slot-2 pool
/// `2P(γ_min − γ_Bk)/(γ_min + γ_R)` is shared by `set ∪ {BS}` in proportion
/// to second-hop CNR. For the direct mode the BS repeats the symbol at power
/// `p_pair` in both slots.
pub fn df_optimal_split(
    p_pair: f64,
    decision: &VirtualLinkDecision,
    ch: &ChannelRealization,
) -> Result<NodePowerSplit> {
    let (k, n) = (decision.user, decision.subcarrier);
    let a = ch.bk(n, k);
    if decision.rho == 0 {
        return Ok(NodePowerSplit {
            p_b_slot1: p_pair,
            p_nodes_slot2: vec![(TxNode::Bs, p_pair)],
        });
    }
    let g_min = bottleneck_cnr(&decision.relay_set, n, ch)?;
    if g_min <= a {
        return Err(Error::Domain(format!(
            "DF split needs the first-hop bottleneck ({g_min}) above the direct CNR ({a})"
        )));
    }
    let g = relay_only_cnr(&decision.relay_set, k, n, ch);
    let p_b = 2.0 * p_pair * (g + a) / (g_min + g);
    let pool = 2.0 * p_pair * (g_min - a) / (g_min + g);
    let aggregate = a + g;
    let mut p_nodes_slot2 = Vec::with_capacity(decision.relay_set.len() + 1);
    p_nodes_slot2.push((TxNode::Bs, pool * a / aggregate));
    for &r in decision.relay_set.members() {
        p_nodes_slot2.push((TxNode::Relay(r), pool * ch.rk(n, r, k) / aggregate));
    }
    Ok(NodePowerSplit { p_b_slot1: p_b, p_nodes_slot2 })
}

/// The two SNR arguments bounding a DF pair's rate: slot-1 decodability at
/// the bottleneck relay, and the MRC-combined receive SNR at the user. The
/// slot-2 term is the coherent beamforming sum `(Σ √(γ_i·P_i))²` of the
/// actual per-node powers.
pub fn hop_args(
    split: &NodePowerSplit,
    set: &RelaySet,
    k: usize,
    n: usize,
    ch: &ChannelRealization,
) -> Result<(f64, f64)> {
    let g_min = bottleneck_cnr(set, n, ch)?;
    let a = ch.bk(n, k);
    let amplitude: f64 = split
        .p_nodes_slot2
        .iter()
        .map(|&(node, p)| {
            let gamma = match node {
                TxNode::Bs => a,
                TxNode::Relay(r) => ch.rk(n, r, k),
            };
            (gamma * p).sqrt()
        })
        .sum();
    Ok((g_min * split.p_b_slot1, a * split.p_b_slot1 + amplitude * amplitude))
}

/// Spectral rate of a virtual link: `(1/(2N))·log2(1 + Υ·P)` in bit/s/Hz.
pub fn e2e_rate(upsilon: f64, p_pair: f64, num_subcarriers: usize) -> f64 {
    (1.0 + upsilon * p_pair).log2() / (2.0 * num_subcarriers as f64)
}
