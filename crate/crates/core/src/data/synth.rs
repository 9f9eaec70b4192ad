//! Synthetic interaction logs with planted multi-level interests.
//!
//! Items belong to latent topics and their features are the topic vector
//! plus Gaussian noise. Every user has a core topic, a few like topics and
//! a couple of extra click topics. The core topic drives clicks hardest.
//! Likes come from the core and like topics, and follows almost only from
//! the core, so the follow set is small and precise while the like set is
//! broad and noisy. Both also land on off-interest items at a lower rate.
//! Exposures mix items from the user's click topics with uniformly random
//! items. Click labels are drawn from a logistic model over topic
//! membership.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::{Dataset, InteractionRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub d_latent: usize,
    pub topics: usize,
    /// Like probability of a clicked item from a liked topic.
    pub like_rate: f64,
    /// Follow probability of a clicked item from the core topic.
    pub follow_rate: f64,
    pub exposure_per_user: usize,
    /// Per-dimension standard deviation of item feature noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 500,
            items: 2000,
            d_latent: 16,
            topics: 20,
            like_rate: 0.6,
            follow_rate: 0.5,
            exposure_per_user: 60,
            noise_sigma: 0.2,
            seed: 7,
        }
    }
}

// Logistic click model over topic membership.
const CLICK_BIAS: f64 = -2.0;
const CLICK_TOPIC_WEIGHT: f64 = 2.0;
const CORE_TOPIC_WEIGHT: f64 = 4.0;
// Off-interest like/follow probability, relative to the on-interest rate.
const LIKE_LEAK: f64 = 0.5;
const FOLLOW_LEAK: f64 = 0.02;
const LIKE_SIDE_TOPICS: usize = 3;
const EXTRA_CLICK_TOPICS: usize = 2;
// Share of exposures drawn from the user's click topics.
const TARGETED_SHARE: f64 = 0.5;
const STEP_MS: u64 = 60_000;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("users", self.users),
            ("items", self.items),
            ("d_latent", self.d_latent),
            ("topics", self.topics),
            ("exposure_per_user", self.exposure_per_user),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synth.{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("like_rate", self.like_rate),
            ("follow_rate", self.follow_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("synth.{name} must lie in [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(
                "synth.noise_sigma must be finite and >= 0".into(),
            ));
        }
        if self.topics < TOPICS_PER_USER {
            return Err(Error::Config(format!(
                "synth.topics must be at least {}",
                TOPICS_PER_USER
            )));
        }
        if self.exposure_per_user > self.items {
            return Err(Error::Config(
                "synth.exposure_per_user cannot exceed synth.items".into(),
            ));
        }
        Ok(())
    }
}

/// Generator output.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// Item ids in feature-row order.
    pub item_ids: Vec<String>,
    pub item_features: Matrix,
    /// Ground-truth click logit of every record, in record order.
    pub true_logits: Vec<f64>,
}

const TOPICS_PER_USER: usize = 1 + LIKE_SIDE_TOPICS + EXTRA_CLICK_TOPICS;

struct Profile {
    core: usize,
    like_side: Vec<usize>,
    /// Core, like-side and extra click topics.
    click: Vec<usize>,
}

impl Profile {
    fn click_logit(&self, topic: usize) -> f64 {
        let mut z = CLICK_BIAS;
        if self.click.contains(&topic) {
            z += CLICK_TOPIC_WEIGHT;
        }
        if topic == self.core {
            z += CORE_TOPIC_WEIGHT;
        }
        z
    }

    fn like_factor(&self, topic: usize) -> f64 {
        if topic == self.core || self.like_side.contains(&topic) {
            1.0
        } else {
            LIKE_LEAK
        }
    }

    fn follow_factor(&self, topic: usize) -> f64 {
        if topic == self.core {
            1.0
        } else {
            FOLLOW_LEAK
        }
    }
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_latent;

    let mut topic_vectors = Matrix::zeros(cfg.topics, d);
    for t in 0..cfg.topics {
        for x in topic_vectors.row_mut(t) {
            *x = StandardNormal.sample(&mut rng);
        }
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut item_topic = Vec::with_capacity(cfg.items);
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); cfg.topics];
    let mut features = Matrix::zeros(cfg.items, d);
    for i in 0..cfg.items {
        // Round-robin keeps every topic populated; the shuffle below hides it.
        let t = i % cfg.topics;
        item_topic.push(t);
        by_topic[t].push(i);
        for (k, x) in features.row_mut(i).iter_mut().enumerate() {
            *x = topic_vectors.get(t, k) + noise.sample(&mut rng);
        }
    }
    let mut item_ids: Vec<String> = (0..cfg.items).map(|i| format!("i{i:05}")).collect();
    // Shuffle id assignment so ids carry no topic information.
    for i in (1..cfg.items).rev() {
        let j = rng.random_range(0..=i);
        item_ids.swap(i, j);
    }

    let all_topics: Vec<usize> = (0..cfg.topics).collect();
    let mut records = Vec::with_capacity(cfg.users * cfg.exposure_per_user);
    let mut true_logits = Vec::with_capacity(records.capacity());
    for u in 0..cfg.users {
        let picked: Vec<usize> = all_topics
            .choose_multiple(&mut rng, TOPICS_PER_USER)
            .copied()
            .collect();
        let profile = Profile {
            core: picked[0],
            like_side: picked[1..1 + LIKE_SIDE_TOPICS].to_vec(),
            click: picked,
        };

        let mut shown = std::collections::HashSet::new();
        let start = rng.random_range(0..1_000_000u64) * 1_000;
        for step in 0..cfg.exposure_per_user {
            let item = loop {
                let candidate = if rng.random_bool(TARGETED_SHARE) {
                    let t = *profile.click.choose(&mut rng).expect("click topics");
                    *by_topic[t].choose(&mut rng).expect("populated topic")
                } else {
                    rng.random_range(0..cfg.items)
                };
                if shown.insert(candidate) {
                    break candidate;
                }
            };
            let topic = item_topic[item];
            let logit = profile.click_logit(topic);
            let click = rng.random_bool(crate::tensor::sigmoid(logit));
            let like_p = (cfg.like_rate * profile.like_factor(topic)).min(1.0);
            let follow_p = (cfg.follow_rate * profile.follow_factor(topic)).min(1.0);
            let like = click && rng.random_bool(like_p);
            let follow = click && rng.random_bool(follow_p);
            records.push(InteractionRecord {
                user_id: format!("u{u:04}"),
                item_id: item_ids[item].clone(),
                click,
                like,
                follow,
                timestamp: start + step as u64 * STEP_MS + rng.random_range(0..STEP_MS / 2),
            });
            true_logits.push(logit);
        }
    }

    Ok(Synthetic {
        dataset: Dataset::from_records(records),
        item_ids,
        item_features: features,
        true_logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            users: 20,
            items: 200,
            exposure_per_user: 30,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(&small()).unwrap();
        let b = gen_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn counts_match_config() {
        let s = gen_synthetic(&small()).unwrap();
        assert_eq!(s.dataset.len(), 20 * 30);
        assert_eq!(s.dataset.user_count(), 20);
        assert_eq!(s.item_features.shape(), (200, 16));
        assert_eq!(s.true_logits.len(), s.dataset.len());
    }

    #[test]
    fn zero_follow_rate_has_no_follows() {
        let s = gen_synthetic(&SynthConfig {
            follow_rate: 0.0,
            ..small()
        })
        .unwrap();
        assert!(s.dataset.records().iter().all(|r| !r.follow));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(gen_synthetic(&SynthConfig {
            users: 0,
            ..small()
        })
        .is_err());
        assert!(gen_synthetic(&SynthConfig {
            like_rate: 1.5,
            ..small()
        })
        .is_err());
        assert!(gen_synthetic(&SynthConfig {
            exposure_per_user: 500,
            ..small()
        })
        .is_err());
    }
}
