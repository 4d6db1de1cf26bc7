use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token selection policies compared in the ablations.
///
/// "Attentive" policies rank by the head-averaged last-query attention row,
/// "informative" policies rank by rollout influence. `LowInformative` is the
/// default global stage and `LowAttentive` the default fine stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    TopAttentive,
    LowAttentive,
    TopInformative,
    LowInformative,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::TopAttentive,
        Strategy::LowAttentive,
        Strategy::TopInformative,
        Strategy::LowInformative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TopAttentive => "top_attentive",
            Strategy::LowAttentive => "low_attentive",
            Strategy::TopInformative => "top_informative",
            Strategy::LowInformative => "low_informative",
        }
    }

    pub fn uses_rollout(self) -> bool {
        matches!(self, Strategy::TopInformative | Strategy::LowInformative)
    }

    /// Picks `count` positions to remove from `candidates` (`(position,
    /// score)`, ordered by position). Ties always remove the later position
    /// first so earlier tokens survive.
    pub fn select(
        self,
        candidates: &[(usize, f64)],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<usize> {
        let count = count.min(candidates.len());
        let mut order: Vec<(usize, f64)> = candidates.to_vec();
        match self {
            Strategy::Random => {
                order.shuffle(rng);
            }
            Strategy::LowAttentive | Strategy::LowInformative => {
                order.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            }
            Strategy::TopAttentive | Strategy::TopInformative => {
                order.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
            }
        }
        let mut removed: Vec<usize> = order[..count].iter().map(|c| c.0).collect();
        removed.sort_unstable();
        removed
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        strategy_variant(s)
    }
}

/// Looks a policy up by name.
pub fn strategy_variant(name: &str) -> Result<Strategy> {
    let norm = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    Strategy::ALL
        .into_iter()
        .find(|s| s.name() == norm)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown strategy '{name}'; expected one of: {}",
                Strategy::ALL.map(Strategy::name).join(", ")
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(strategy_variant(s.name()).unwrap(), s);
        }
        assert_eq!(
            strategy_variant("Low-Attentive").unwrap(),
            Strategy::LowAttentive
        );
        assert!(matches!(strategy_variant("median"), Err(Error::Config(_))));
    }

    #[test]
    fn attentive_selection() {
        let c = [(0, 0.1), (1, 0.4), (2, 0.05)];
        assert_eq!(Strategy::LowAttentive.select(&c, 1, &mut rng()), vec![2]);
        assert_eq!(Strategy::TopAttentive.select(&c, 1, &mut rng()), vec![1]);
    }

    #[test]
    fn ties_remove_later_positions() {
        let c = [(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)];
        assert_eq!(Strategy::LowAttentive.select(&c, 2, &mut rng()), vec![2, 3]);
        assert_eq!(Strategy::TopInformative.select(&c, 1, &mut rng()), vec![3]);
    }

    #[test]
    fn random_is_seeded() {
        let c: Vec<(usize, f64)> = (0..20).map(|i| (i, 0.05)).collect();
        let a = Strategy::Random.select(&c, 5, &mut rng());
        let b = Strategy::Random.select(&c, 5, &mut rng());
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn count_is_capped() {
        let c = [(4, 1.0)];
        assert_eq!(Strategy::LowAttentive.select(&c, 3, &mut rng()), vec![4]);
    }
}
