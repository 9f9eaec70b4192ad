//! Interaction logs: ingestion, user filtering, train/test splitting and a
//! synthetic generator.

mod io;
mod synth;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UserHistory;

pub use io::{
    load_interactions, load_item_features, read_interactions, save_interactions,
    save_item_features, write_interactions, ItemFeatures, INTERACTION_HEADER,
};
pub use synth::{gen_synthetic, SynthConfig, Synthetic};

/// One exposure of an item to a user.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub click: bool,
    pub like: bool,
    pub follow: bool,
    /// Milliseconds.
    pub timestamp: u64,
}

impl InteractionRecord {
    /// Click ground truth of a shown item.
    pub fn label(&self) -> bool {
        self.click
    }
}

/// Records plus dense user and item vocabularies.
///
/// Vocabularies are assigned in first-appearance order. Datasets produced by
/// [`split_train_test`] keep the parent's vocabularies so that both halves
/// agree on every id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<InteractionRecord>,
    users: IndexSet<String>,
    items: IndexSet<String>,
}

impl Dataset {
    pub fn from_records(records: Vec<InteractionRecord>) -> Self {
        let mut users = IndexSet::new();
        let mut items = IndexSet::new();
        for r in &records {
            users.insert(r.user_id.clone());
            items.insert(r.item_id.clone());
        }
        Dataset {
            records,
            users,
            items,
        }
    }

    fn with_vocab_of(parent: &Dataset, records: Vec<InteractionRecord>) -> Self {
        Dataset {
            records,
            users: parent.users.clone(),
            items: parent.items.clone(),
        }
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.iter().map(String::as_str)
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(String::as_str)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.get_index_of(id)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.get_index_of(id)
    }

    pub fn user_id_at(&self, index: usize) -> Option<&str> {
        self.users.get_index(index).map(String::as_str)
    }

    pub fn item_id(&self, index: usize) -> Option<&str> {
        self.items.get_index(index).map(String::as_str)
    }

    /// `(user index, item index, record)` for every record.
    pub fn encoded(&self) -> impl Iterator<Item = (usize, usize, &InteractionRecord)> {
        self.records.iter().map(|r| {
            let u = self.users.get_index_of(&r.user_id).expect("user interned");
            let i = self.items.get_index_of(&r.item_id).expect("item interned");
            (u, i, r)
        })
    }

    /// Record indices per user, each list ordered by timestamp (ties keep
    /// file order).
    pub fn records_by_user(&self) -> Vec<Vec<usize>> {
        let mut by_user = vec![Vec::new(); self.user_count()];
        for (k, (u, _, _)) in self.encoded().enumerate() {
            by_user[u].push(k);
        }
        for list in &mut by_user {
            list.sort_by_key(|&k| self.records[k].timestamp);
        }
        by_user
    }

    /// Per-user histories built from this dataset's flags, indexed by user.
    pub fn histories(&self) -> Vec<UserHistory> {
        let items: Vec<usize> = self.encoded().map(|(_, i, _)| i).collect();
        self.records_by_user()
            .into_iter()
            .map(|ks| {
                let pick = |f: fn(&InteractionRecord) -> bool| {
                    ks.iter()
                        .filter(|&&k| f(&self.records[k]))
                        .map(|&k| items[k])
                        .collect::<Vec<_>>()
                };
                UserHistory::new(pick(|r| r.click), pick(|r| r.like), pick(|r| r.follow))
            })
            .collect()
    }
}

/// Which users survive [`filter_multilevel`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    /// At least one like and at least one follow.
    #[default]
    And,
    /// At least one like or at least one follow.
    Or,
}

impl std::str::FromStr for FilterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "and" => Ok(FilterPolicy::And),
            "or" => Ok(FilterPolicy::Or),
            _ => Err(Error::Config(format!(
                "unknown filter policy {s:?} (and, or)"
            ))),
        }
    }
}

/// Keeps only users with multi-level behaviour, together with all of their
/// records.
pub fn filter_multilevel(ds: &Dataset, policy: FilterPolicy) -> Dataset {
    let mut has_like = vec![false; ds.user_count()];
    let mut has_follow = vec![false; ds.user_count()];
    for (u, _, r) in ds.encoded() {
        has_like[u] |= r.like;
        has_follow[u] |= r.follow;
    }
    let keep = |u: usize| match policy {
        FilterPolicy::And => has_like[u] && has_follow[u],
        FilterPolicy::Or => has_like[u] || has_follow[u],
    };
    let records: Vec<InteractionRecord> = ds
        .encoded()
        .filter(|(u, _, _)| keep(*u))
        .map(|(_, _, r)| r.clone())
        .collect();
    if records.is_empty() && !ds.is_empty() {
        log::warn!("no user passes the {policy:?} multi-level filter");
    }
    Dataset::from_records(records)
}

/// Number of a user's records that go to training.
pub fn train_count(count: usize, ratio: f64) -> usize {
    // Guard against 0.7 * 10 = 7.000000000000001 style rounding.
    let raw = (ratio * count as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(count)
}

/// Per-user chronological split: each user's earliest `ceil(ratio * count)`
/// records go to train, the rest to test. Record order within each half
/// follows the input.
pub fn split_train_test(ds: &Dataset, ratio: f64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut in_train = vec![false; ds.len()];
    for ks in ds.records_by_user() {
        let n_train = train_count(ks.len(), ratio);
        for &k in &ks[..n_train] {
            in_train[k] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, r) in ds.records.iter().enumerate() {
        if in_train[k] {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((
        Dataset::with_vocab_of(ds, train),
        Dataset::with_vocab_of(ds, test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, item: &str, flags: (bool, bool, bool), ts: u64) -> InteractionRecord {
        InteractionRecord {
            user_id: user.into(),
            item_id: item.into(),
            click: flags.0,
            like: flags.1,
            follow: flags.2,
            timestamp: ts,
        }
    }

    #[test]
    fn filter_policies() {
        let ds = Dataset::from_records(vec![
            rec("a", "x", (true, true, false), 1),
            rec("a", "y", (true, false, false), 2),
            rec("b", "x", (true, true, false), 1),
            rec("b", "z", (true, false, true), 3),
            rec("c", "z", (false, false, false), 3),
        ]);
        let and = filter_multilevel(&ds, FilterPolicy::And);
        assert_eq!(and.user_ids().collect::<Vec<_>>(), ["b"]);
        assert_eq!(and.len(), 2);
        let or = filter_multilevel(&ds, FilterPolicy::Or);
        assert_eq!(or.user_ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(or.len(), 4);
        assert_eq!(filter_multilevel(&and, FilterPolicy::And), and);
    }

    #[test]
    fn filter_to_empty() {
        let ds = Dataset::from_records(vec![rec("a", "x", (true, true, false), 1)]);
        assert!(filter_multilevel(&ds, FilterPolicy::And).is_empty());
    }

    #[test]
    fn split_counts() {
        let mut records: Vec<_> = (0..10)
            .map(|t| rec("u", &format!("i{t}"), (t % 2 == 0, false, false), 100 - t))
            .collect();
        records.extend((0..5).map(|t| rec("v", &format!("j{t}"), (true, false, false), t)));
        records.push(rec("w", "k", (true, false, false), 7));
        let ds = Dataset::from_records(records);
        let (train, test) = split_train_test(&ds, 0.8).unwrap();
        let count = |d: &Dataset, u: &str| d.records().iter().filter(|r| r.user_id == u).count();
        assert_eq!((count(&train, "u"), count(&test, "u")), (8, 2));
        assert_eq!((count(&train, "v"), count(&test, "v")), (4, 1));
        assert_eq!((count(&train, "w"), count(&test, "w")), (1, 0));
        assert_eq!(train.len() + test.len(), ds.len());
        let max_train = train
            .records()
            .iter()
            .filter(|r| r.user_id == "u")
            .map(|r| r.timestamp)
            .max();
        let min_test = test
            .records()
            .iter()
            .filter(|r| r.user_id == "u")
            .map(|r| r.timestamp)
            .min();
        assert!(max_train <= min_test);
        assert_eq!(train.item_count(), ds.item_count());
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let ds = Dataset::default();
        assert!(split_train_test(&ds, 0.0).is_err());
        assert!(split_train_test(&ds, 1.0).is_err());
    }

    #[test]
    fn train_count_rounding() {
        assert_eq!(train_count(10, 0.8), 8);
        assert_eq!(train_count(5, 0.8), 4);
        assert_eq!(train_count(10, 0.7), 7);
        assert_eq!(train_count(1, 0.8), 1);
        assert_eq!(train_count(3, 0.5), 2);
    }

    #[test]
    fn histories_follow_time_order() {
        let ds = Dataset::from_records(vec![
            rec("u", "b", (true, true, false), 5),
            rec("u", "a", (true, false, true), 1),
            rec("u", "c", (false, false, false), 3),
        ]);
        let h = &ds.histories()[0];
        let a = ds.item_index("a").unwrap();
        let b = ds.item_index("b").unwrap();
        assert_eq!(h.clicked(), &[a, b]);
        assert_eq!(h.liked(), &[b]);
        assert_eq!(h.followed(), &[a]);
    }
}
