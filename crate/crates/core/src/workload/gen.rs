//! Seeded synthetic workloads modelled on common bottleneck patterns: token
//! distributions from a few senders, DeFi trades sharing one fee account, NFT
//! mints pushing to one array, and independent payments.
//!
//! Every generated read-modify-write is tagged [`KeyTag::Increment`] with the
//! amount moved, so downstream rewrites can treat it as a counter update.
//! Each pattern instance lives in its own namespace, so two instances never
//! share keys by accident.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{StorageKey, Transaction, Workload};
use crate::error::{Error, Result};

/// Reserved contract identifier for native account balances.
pub const BALANCE_CONTRACT: &str = "@balance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GasModel {
    Fixed { gas: u64 },
    /// Uniform over `min..=max`.
    Uniform { min: u64, max: u64 },
}

impl GasModel {
    pub fn fixed(gas: u64) -> Self {
        GasModel::Fixed { gas }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            GasModel::Fixed { gas } if gas >= 1 => Ok(()),
            GasModel::Uniform { min, max } if min >= 1 && min <= max => Ok(()),
            other => Err(Error::validation(format!("invalid gas model {other:?}"))),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            GasModel::Fixed { gas } => gas,
            GasModel::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }
}

fn require_positive(what: &str, v: usize) -> Result<()> {
    if v < 1 {
        return Err(Error::validation(format!("{what} must be at least 1")));
    }
    Ok(())
}

fn amount(rng: &mut ChaCha8Rng) -> i64 {
    rng.gen_range(1..=1_000)
}

fn finish(txs: Vec<Transaction>, generator: &str, seed: u64) -> Result<Workload> {
    Ok(Workload::renumbered(txs)?
        .with_meta("generator", generator)
        .with_meta("seed", seed.to_string()))
}

/// Independent payments: every transaction moves funds between its own fresh
/// pair of accounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payments {
    pub n: usize,
    pub gas: GasModel,
}

impl Payments {
    pub fn new(n: usize) -> Self {
        Payments {
            n,
            gas: GasModel::fixed(21_000),
        }
    }

    pub fn gas(mut self, gas: GasModel) -> Self {
        self.gas = gas;
        self
    }

    pub fn generate(&self, seed: u64) -> Result<Workload> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        finish(self.transactions(&mut rng, "pay")?, "payments", seed)
    }

    fn transactions(&self, rng: &mut ChaCha8Rng, ns: &str) -> Result<Vec<Transaction>> {
        require_positive("n", self.n)?;
        self.gas.validate()?;
        Ok((0..self.n)
            .map(|i| {
                let v = amount(rng);
                let from = format!("{ns}-payer-{i}");
                Transaction::new(from.clone(), self.gas.sample(rng))
                    .increment(StorageKey::new(BALANCE_CONTRACT, from), -v)
                    .increment(StorageKey::new(BALANCE_CONTRACT, format!("{ns}-payee-{i}")), v)
            })
            .collect())
    }
}

/// ERC20-style distribution: `senders` accounts take turns (round-robin)
/// sending to fresh recipients. Optionally every transfer also mints, bumping
/// the shared total supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub n: usize,
    pub senders: usize,
    #[serde(default)]
    pub track_total_supply: bool,
    pub gas: GasModel,
}

impl TokenDistribution {
    pub fn new(n: usize, senders: usize) -> Self {
        TokenDistribution {
            n,
            senders,
            track_total_supply: false,
            gas: GasModel::fixed(52_000),
        }
    }

    pub fn with_total_supply(mut self, on: bool) -> Self {
        self.track_total_supply = on;
        self
    }

    pub fn gas(mut self, gas: GasModel) -> Self {
        self.gas = gas;
        self
    }

    /// Balance key of the `j`-th sender of a standalone distribution.
    pub fn sender_balance_key(j: usize) -> StorageKey {
        Self::balance_key("tok", &Self::sender_name("tok", j))
    }

    pub fn sender_name_of(j: usize) -> String {
        Self::sender_name("tok", j)
    }

    pub fn supply_key() -> StorageKey {
        StorageKey::new("tok", "totalSupply")
    }

    fn sender_name(ns: &str, j: usize) -> String {
        format!("{ns}-sender-{j}")
    }

    fn balance_key(ns: &str, holder: &str) -> StorageKey {
        StorageKey::new(ns, format!("balances/{holder}"))
    }

    pub fn generate(&self, seed: u64) -> Result<Workload> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        finish(self.transactions(&mut rng, "tok")?, "token-distribution", seed)
    }

    fn transactions(&self, rng: &mut ChaCha8Rng, ns: &str) -> Result<Vec<Transaction>> {
        require_positive("n", self.n)?;
        require_positive("senders", self.senders)?;
        self.gas.validate()?;
        let supply = StorageKey::new(ns, "totalSupply");
        Ok((0..self.n)
            .map(|i| {
                let v = amount(rng);
                let sender = Self::sender_name(ns, i % self.senders);
                let recipient = format!("{ns}-recipient-{i}");
                let mut tx = Transaction::new(sender.clone(), self.gas.sample(rng))
                    .increment(Self::balance_key(ns, &sender), -v)
                    .increment(Self::balance_key(ns, &recipient), v);
                if self.track_total_supply {
                    tx = tx.increment(supply.clone(), v);
                }
                tx
            })
            .collect())
    }
}

/// DEX trades: every trade credits the same fee account and moves two
/// per-trader balances. Traders are assigned round-robin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefiFee {
    pub n: usize,
    pub traders: usize,
    pub gas: GasModel,
}

impl DefiFee {
    pub fn new(n: usize, traders: usize) -> Self {
        DefiFee {
            n,
            traders,
            gas: GasModel::fixed(150_000),
        }
    }

    pub fn gas(mut self, gas: GasModel) -> Self {
        self.gas = gas;
        self
    }

    pub fn fee_key() -> StorageKey {
        Self::fee_key_in("dex")
    }

    fn fee_key_in(ns: &str) -> StorageKey {
        StorageKey::new(BALANCE_CONTRACT, format!("{ns}-fee-account"))
    }

    pub fn generate(&self, seed: u64) -> Result<Workload> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        finish(self.transactions(&mut rng, "dex")?, "defi-fee", seed)
    }

    fn transactions(&self, rng: &mut ChaCha8Rng, ns: &str) -> Result<Vec<Transaction>> {
        require_positive("n", self.n)?;
        require_positive("traders", self.traders)?;
        self.gas.validate()?;
        let fee = Self::fee_key_in(ns);
        Ok((0..self.n)
            .map(|i| {
                let trader = format!("{ns}-trader-{}", i % self.traders);
                let (base, quote, cut) = (amount(rng), amount(rng), amount(rng) / 10 + 1);
                Transaction::new(trader.clone(), self.gas.sample(rng))
                    .increment(fee.clone(), cut)
                    .increment(StorageKey::new(ns, format!("{trader}/base")), -base)
                    .increment(StorageKey::new(ns, format!("{trader}/quote")), quote)
            })
            .collect())
    }
}

/// Collectible mints: each one pushes onto a shared array, incrementing its
/// length and writing a fresh element slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NftMint {
    pub n: usize,
    pub gas: GasModel,
}

impl NftMint {
    pub fn new(n: usize) -> Self {
        NftMint {
            n,
            gas: GasModel::fixed(120_000),
        }
    }

    pub fn gas(mut self, gas: GasModel) -> Self {
        self.gas = gas;
        self
    }

    pub fn length_key() -> StorageKey {
        StorageKey::new("nft", "items.length")
    }

    pub fn generate(&self, seed: u64) -> Result<Workload> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        finish(self.transactions(&mut rng, "nft")?, "nft-mint", seed)
    }

    fn transactions(&self, rng: &mut ChaCha8Rng, ns: &str) -> Result<Vec<Transaction>> {
        require_positive("n", self.n)?;
        self.gas.validate()?;
        let length = StorageKey::new(ns, "items.length");
        Ok((0..self.n)
            .map(|i| {
                Transaction::new(format!("{ns}-minter-{i}"), self.gas.sample(rng))
                    .increment(length.clone(), 1)
                    .write(StorageKey::new(ns, format!("items[{i}]")))
            })
            .collect())
    }
}

/// One pattern in a [`Mixed`] workload; the transaction count comes from the
/// mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "kebab-case")]
pub enum Pattern {
    Payments {
        gas: GasModel,
    },
    TokenDistribution {
        senders: usize,
        #[serde(default)]
        track_total_supply: bool,
        gas: GasModel,
    },
    DefiFee {
        traders: usize,
        gas: GasModel,
    },
    NftMint {
        gas: GasModel,
    },
}

impl Pattern {
    fn transactions(&self, n: usize, rng: &mut ChaCha8Rng, ns: &str) -> Result<Vec<Transaction>> {
        match *self {
            Pattern::Payments { gas } => Payments { n, gas }.transactions(rng, ns),
            Pattern::TokenDistribution {
                senders,
                track_total_supply,
                gas,
            } => TokenDistribution {
                n,
                senders,
                track_total_supply,
                gas,
            }
            .transactions(rng, ns),
            Pattern::DefiFee { traders, gas } => DefiFee { n, traders, gas }.transactions(rng, ns),
            Pattern::NftMint { gas } => NftMint { n, gas }.transactions(rng, ns),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    #[serde(flatten)]
    pub pattern: Pattern,
    pub weight: f64,
}

impl MixComponent {
    pub fn new(pattern: Pattern, weight: f64) -> Self {
        MixComponent { pattern, weight }
    }
}

/// Several patterns in given proportions, shuffled together.
///
/// Component `i` generates in namespace `m{i}`; counts are apportioned by
/// largest remainder, ties going to the earlier component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixed {
    pub components: Vec<MixComponent>,
    pub n: usize,
}

impl Mixed {
    pub fn new(components: Vec<MixComponent>, n: usize) -> Self {
        Mixed { components, n }
    }

    pub fn counts(&self) -> Result<Vec<usize>> {
        if self.components.is_empty() {
            return Err(Error::validation("mixed workload needs at least one component"));
        }
        require_positive("n", self.n)?;
        if let Some(c) = self
            .components
            .iter()
            .find(|c| !(c.weight.is_finite() && c.weight > 0.0))
        {
            return Err(Error::validation(format!("weight {} is not positive", c.weight)));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        let quotas: Vec<f64> = self
            .components
            .iter()
            .map(|c| self.n as f64 * c.weight / total)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = self.n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        Ok(counts)
    }

    pub fn generate(&self, seed: u64) -> Result<Workload> {
        let counts = self.counts()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut txs = Vec::with_capacity(self.n);
        for (i, (c, &count)) in self.components.iter().zip(&counts).enumerate() {
            if count > 0 {
                txs.extend(c.pattern.transactions(count, &mut rng, &format!("m{i}"))?);
            }
        }
        txs.shuffle(&mut rng);
        finish(txs, "mixed", seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_counts() {
        assert!(TokenDistribution::new(0, 1).generate(1).is_err());
        assert!(TokenDistribution::new(3, 0).generate(1).is_err());
        assert!(DefiFee::new(3, 0).generate(1).is_err());
        assert!(NftMint::new(0).generate(1).is_err());
        assert!(Payments::new(0).generate(1).is_err());
        assert!(Mixed::new(vec![], 4).generate(1).is_err());
        let bad = Mixed::new(
            vec![MixComponent::new(Pattern::NftMint { gas: GasModel::fixed(1) }, 0.0)],
            4,
        );
        assert!(bad.generate(1).is_err());
        assert!(Payments::new(2)
            .gas(GasModel::Uniform { min: 5, max: 4 })
            .generate(1)
            .is_err());
    }

    #[test]
    fn round_robin_senders() {
        let w = TokenDistribution::new(6, 3).generate(7).unwrap();
        let senders: Vec<&str> = w.transactions().iter().map(|t| &*t.sender).collect();
        assert_eq!(
            senders,
            ["tok-sender-0", "tok-sender-1", "tok-sender-2", "tok-sender-0", "tok-sender-1", "tok-sender-2"]
        );
        let key = TokenDistribution::sender_balance_key(1);
        assert!(w.transactions()[1].access.writes.contains(&key));
    }

    #[test]
    fn supply_key_on_every_tx_when_tracked() {
        let w = TokenDistribution::new(4, 4).with_total_supply(true).generate(1).unwrap();
        let supply = TokenDistribution::supply_key();
        assert!(w.transactions().iter().all(|t| t.access.writes.contains(&supply)));
    }

    #[test]
    fn largest_remainder_counts() {
        let mk = |w: f64| MixComponent::new(Pattern::Payments { gas: GasModel::fixed(1) }, w);
        assert_eq!(Mixed::new(vec![mk(1.0), mk(1.0)], 16).counts().unwrap(), vec![8, 8]);
        assert_eq!(Mixed::new(vec![mk(1.0), mk(1.0), mk(1.0)], 10).counts().unwrap(), vec![4, 3, 3]);
        assert_eq!(Mixed::new(vec![mk(3.0), mk(1.0)], 10).counts().unwrap(), vec![8, 2]);
    }

    #[test]
    fn uniform_gas_stays_in_range() {
        let w = Payments::new(200)
            .gas(GasModel::Uniform { min: 10, max: 20 })
            .generate(3)
            .unwrap();
        assert!(w.transactions().iter().all(|t| (10..=20).contains(&t.gas)));
    }

    #[test]
    fn nft_elements_distinct() {
        let w = NftMint::new(5).generate(0).unwrap();
        let mut elems = std::collections::BTreeSet::new();
        for t in w.transactions() {
            for k in &t.access.writes {
                if k != &NftMint::length_key() {
                    assert!(elems.insert(k.clone()));
                }
            }
        }
        assert_eq!(elems.len(), 5);
    }
}
