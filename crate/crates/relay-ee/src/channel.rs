//! Scenario configuration and seeded channel generation.
//!
//! Every link CNR is drawn independently from an exponential distribution
//! whose mean is the configured average CNR (Rayleigh amplitude fading, so
//! channel power and therefore CNR are exponential). Generation is a pure
//! function of `(config, seed)`; realizations round-trip through a JSON file
//! whose header records the generator algorithm.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Generator recorded in channel files: ChaCha8 keyed via SplitMix64 from the
/// 64-bit seed, mapped through the inverse exponential CDF.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64/inverse-cdf-exponential";

/// Channel file schema version.
pub const SPEC_VERSION: u32 = 1;

/// Static description of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Total bandwidth W in Hz, shared by all subcarriers.
    pub bandwidth_hz: f64,
    /// Number of subcarriers N.
    pub num_subcarriers: usize,
    /// Number of users K.
    pub num_users: usize,
    /// Number of candidate relays L.
    pub num_relays: usize,
    /// Noise power spectral density N0 in W/Hz.
    pub noise_psd: f64,
    /// Mean CNR of every link, in dB.
    pub avg_cnr_db: f64,
    /// Total power budget P_max in W.
    pub p_max_w: f64,
    /// Static circuit power in W.
    pub p_static_w: f64,
    /// Rate-dependent circuit power, W per bit/s/Hz of sum rate.
    pub xi: f64,
    /// Reciprocal drain efficiency of the power amplifier.
    pub eta: f64,
    /// Proportional rate weights, one per user, all positive.
    pub alpha: Vec<f64>,
    /// Seed for channel generation.
    pub seed: u64,
}

impl SystemConfig {
    /// Checks all field invariants; every public entry point calls this.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return err(format!("bandwidth_hz must be positive, got {}", self.bandwidth_hz));
        }
        if self.num_subcarriers == 0 {
            return err("num_subcarriers must be positive".into());
        }
        if self.num_users == 0 {
            return err("num_users must be positive".into());
        }
        if self.num_subcarriers < self.num_users {
            return err(format!(
                "need num_subcarriers >= num_users so every user gets a subcarrier, got N={} < K={}",
                self.num_subcarriers, self.num_users
            ));
        }
        if !(self.noise_psd > 0.0 && self.noise_psd.is_finite()) {
            return err(format!("noise_psd must be positive, got {}", self.noise_psd));
        }
        if !self.avg_cnr_db.is_finite() {
            return err(format!("avg_cnr_db must be finite, got {}", self.avg_cnr_db));
        }
        if !(self.p_max_w > 0.0 && self.p_max_w.is_finite()) {
            return err(format!("p_max_w must be positive, got {}", self.p_max_w));
        }
        if !(self.p_static_w >= 0.0 && self.p_static_w.is_finite()) {
            return err(format!("p_static_w must be non-negative, got {}", self.p_static_w));
        }
        if self.p_max_w <= self.p_static_w {
            return err(format!(
                "p_max_w ({}) must exceed p_static_w ({})",
                self.p_max_w, self.p_static_w
            ));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return err(format!("xi must be non-negative, got {}", self.xi));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return err(format!("eta must be positive, got {}", self.eta));
        }
        if self.alpha.len() != self.num_users {
            return err(format!(
                "alpha has {} entries but num_users is {}",
                self.alpha.len(),
                self.num_users
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return err(format!("alpha entries must be positive, got {a}"));
        }
        Ok(())
    }

    /// Linear mean CNR, `10^(avg_cnr_db/10)`.
    pub fn mean_cnr(&self) -> f64 {
        10f64.powf(self.avg_cnr_db / 10.0)
    }
}

/// One draw of all link CNRs. Tensors are flat, n-major:
/// `gamma_bk[n*K + k]`, `gamma_br[n*L + r]`, `gamma_rk[(n*L + r)*K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub num_subcarriers: usize,
    pub num_users: usize,
    pub num_relays: usize,
    /// BS -> user CNRs, N x K.
    pub gamma_bk: Vec<f64>,
    /// BS -> relay CNRs (first hop), N x L.
    pub gamma_br: Vec<f64>,
    /// Relay -> user CNRs (second hop), N x L x K.
    pub gamma_rk: Vec<f64>,
}

impl ChannelRealization {
    /// BS -> user k CNR on subcarrier n.
    #[inline]
    pub fn bk(&self, n: usize, k: usize) -> f64 {
        self.gamma_bk[n * self.num_users + k]
    }

    /// BS -> relay r CNR on subcarrier n.
    #[inline]
    pub fn br(&self, n: usize, r: usize) -> f64 {
        self.gamma_br[n * self.num_relays + r]
    }

    /// Relay r -> user k CNR on subcarrier n.
    #[inline]
    pub fn rk(&self, n: usize, r: usize, k: usize) -> f64 {
        self.gamma_rk[(n * self.num_relays + r) * self.num_users + k]
    }

    /// Checks positivity, finiteness, and dimension consistency.
    pub fn validate(&self) -> Result<()> {
        let expect = [
            ("gamma_bk", self.gamma_bk.len(), self.num_subcarriers * self.num_users),
            ("gamma_br", self.gamma_br.len(), self.num_subcarriers * self.num_relays),
            (
                "gamma_rk",
                self.gamma_rk.len(),
                self.num_subcarriers * self.num_relays * self.num_users,
            ),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        for (name, data) in [
            ("gamma_bk", &self.gamma_bk),
            ("gamma_br", &self.gamma_br),
            ("gamma_rk", &self.gamma_rk),
        ] {
            if let Some(v) = data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig(format!(
                    "{name} entries must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A CNR computed from a raw channel coefficient. `degenerate` marks a zero
/// input; downstream stages require strictly positive CNRs and must reject it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cnr {
    pub value: f64,
    pub degenerate: bool,
}

/// CNR of a link with squared channel magnitude `h_mag_sq`:
/// `h_mag_sq / ((W/N) * N0)`.
pub fn cnr_from_coefficient(h_mag_sq: f64, config: &SystemConfig) -> Cnr {
    let subcarrier_bw = config.bandwidth_hz / config.num_subcarriers as f64;
    let value = h_mag_sq / (subcarrier_bw * config.noise_psd);
    Cnr { value, degenerate: value == 0.0 }
}

/// Uniform in (0, 1): 53 random bits plus a half-ulp offset, so the inverse
/// CDF below never produces an exact zero.
#[inline]
fn next_unit_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Exponential draw with the given mean via inverse CDF.
#[inline]
fn next_exp(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    -mean * (1.0 - next_unit_open(rng)).ln()
}

/// Draws every link CNR independently, exponential with mean
/// `config.mean_cnr()`. Deterministic given `config.seed`.
///
/// Draw order is the flat tensor order: `gamma_bk`, then `gamma_br`, then
/// `gamma_rk`.
pub fn draw_channels(config: &SystemConfig) -> Result<ChannelRealization> {
    config.validate()?;
    let (n, k, l) = (config.num_subcarriers, config.num_users, config.num_relays);
    let mean = config.mean_cnr();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| next_exp(&mut rng, mean)).collect() };
    let ch = ChannelRealization {
        num_subcarriers: n,
        num_users: k,
        num_relays: l,
        gamma_bk: draw(n * k),
        gamma_br: draw(n * l),
        gamma_rk: draw(n * l * k),
    };
    ch.validate()?;
    Ok(ch)
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    spec_version: u32,
    config: SystemConfig,
    rng: String,
    gamma_bk: Vec<f64>,
    gamma_br: Vec<f64>,
    gamma_rk: Vec<f64>,
}

/// Writes a channel realization with its config header as JSON.
pub fn save_channels(path: &Path, config: &SystemConfig, ch: &ChannelRealization) -> Result<()> {
    config.validate()?;
    ch.validate()?;
    let file = ChannelFile {
        spec_version: SPEC_VERSION,
        config: config.clone(),
        rng: RNG_ALGORITHM.to_string(),
        gamma_bk: ch.gamma_bk.clone(),
        gamma_br: ch.gamma_br.clone(),
        gamma_rk: ch.gamma_rk.clone(),
    };
    let json = serde_json::to_string(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a channel file back; validates the header, dimensions, and entries.
pub fn load_channels(path: &Path) -> Result<(SystemConfig, ChannelRealization)> {
    let text = std::fs::read_to_string(path)?;
    let file: ChannelFile = serde_json::from_str(&text)?;
    if file.spec_version != SPEC_VERSION {
        return Err(Error::Format(format!(
            "unsupported spec_version {} (expected {SPEC_VERSION})",
            file.spec_version
        )));
    }
    file.config.validate()?;
    let ch = ChannelRealization {
        num_subcarriers: file.config.num_subcarriers,
        num_users: file.config.num_users,
        num_relays: file.config.num_relays,
        gamma_bk: file.gamma_bk,
        gamma_br: file.gamma_br,
        gamma_rk: file.gamma_rk,
    };
    ch.validate()?;
    Ok((file.config, ch))
}

/// Small config shared by unit tests across modules.
#[cfg(test)]
pub(crate) fn test_config() -> SystemConfig {
    SystemConfig {
        bandwidth_hz: 1e6,
        num_subcarriers: 4,
        num_users: 2,
        num_relays: 5,
        noise_psd: 1e-9,
        avg_cnr_db: 10.0,
        p_max_w: 1.0,
        p_static_w: 0.2,
        xi: 0.0,
        eta: 0.38,
        alpha: vec![1.0, 1.0],
        seed: 7,
    }
}
