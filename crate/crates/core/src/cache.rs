//! Bounded score cache keyed by `(source, destination)`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CachePolicy {
    /// Evict the oldest inserted entry.
    #[default]
    Fifo,
    /// Evict the least recently read or written entry.
    Lru,
    /// Drop everything except the entry just inserted.
    FullReplace,
}

impl std::str::FromStr for CachePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fifo" => Ok(CachePolicy::Fifo),
            "lru" => Ok(CachePolicy::Lru),
            "full-replace" | "full" => Ok(CachePolicy::FullReplace),
            other => Err(format!("unknown cache policy `{other}` (fifo|lru|full-replace)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScoreCache<K, V> {
    capacity: usize,
    policy: CachePolicy,
    entries: HashMap<K, (V, u64)>,
    fifo: VecDeque<K>,
    recency: BTreeMap<u64, K>,
    clock: u64,
    newest: Option<K>,
}

impl<K: Hash + Eq + Clone, V> ScoreCache<K, V> {
    pub fn new(capacity: usize, policy: CachePolicy) -> Self {
        ScoreCache {
            capacity,
            policy,
            entries: HashMap::new(),
            fifo: VecDeque::new(),
            recency: BTreeMap::new(),
            clock: 0,
            newest: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Looks up `key`; under LRU a hit refreshes its recency.
    pub fn get(&mut self, key: &K) -> Option<&V> {
        if self.policy == CachePolicy::Lru && self.entries.contains_key(key) {
            let now = self.tick();
            let entry = self.entries.get_mut(key).expect("checked above");
            self.recency.remove(&entry.1);
            self.recency.insert(now, key.clone());
            entry.1 = now;
        }
        self.entries.get(key).map(|(v, _)| v)
    }

    /// Inserts and, if the cache then exceeds its capacity, evicts.
    pub fn insert(&mut self, key: K, value: V) {
        let now = self.tick();
        match self.entries.insert(key.clone(), (value, now)) {
            Some((_, old)) => {
                self.recency.remove(&old);
            }
            None if self.policy == CachePolicy::Fifo => self.fifo.push_back(key.clone()),
            None => {}
        }
        if self.policy == CachePolicy::Lru {
            self.recency.insert(now, key.clone());
        }
        self.newest = Some(key);
        while self.entries.len() > self.capacity {
            self.evict();
        }
    }

    /// Applies the eviction policy once. No-op unless over capacity.
    pub fn evict(&mut self) {
        if self.entries.len() <= self.capacity {
            return;
        }
        match self.policy {
            CachePolicy::Fifo => {
                while let Some(k) = self.fifo.pop_front() {
                    if let Some((_, stamp)) = self.entries.remove(&k) {
                        self.recency.remove(&stamp);
                        break;
                    }
                }
            }
            CachePolicy::Lru => {
                if let Some((_, k)) = self.recency.pop_first() {
                    self.entries.remove(&k);
                }
            }
            CachePolicy::FullReplace => {
                let keep = self
                    .newest
                    .take()
                    .filter(|_| self.capacity >= 1)
                    .and_then(|k| self.entries.remove(&k).map(|v| (k, v)));
                self.entries.clear();
                self.fifo.clear();
                self.recency.clear();
                if let Some((k, (v, stamp))) = keep {
                    self.entries.insert(k.clone(), (v, stamp));
                    self.newest = Some(k);
                }
            }
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.entries.keys()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(c: &ScoreCache<&'static str, u32>) -> Vec<&'static str> {
        let mut k: Vec<_> = c.keys().copied().collect();
        k.sort();
        k
    }

    #[test]
    fn fifo_drops_oldest() {
        let mut c = ScoreCache::new(2, CachePolicy::Fifo);
        c.insert("a", 1);
        c.insert("b", 2);
        c.insert("c", 3);
        assert_eq!(keys(&c), vec!["b", "c"]);
    }

    #[test]
    fn lru_keeps_recently_read() {
        let mut c = ScoreCache::new(2, CachePolicy::Lru);
        c.insert("a", 1);
        c.insert("b", 2);
        assert_eq!(c.get(&"a"), Some(&1));
        c.insert("c", 3);
        assert_eq!(keys(&c), vec!["a", "c"]);
    }

    #[test]
    fn fifo_ignores_reads() {
        let mut c = ScoreCache::new(2, CachePolicy::Fifo);
        c.insert("a", 1);
        c.insert("b", 2);
        c.get(&"a");
        c.insert("c", 3);
        assert_eq!(keys(&c), vec!["b", "c"]);
    }

    #[test]
    fn full_replace_keeps_only_newest() {
        let mut c = ScoreCache::new(2, CachePolicy::FullReplace);
        c.insert("a", 1);
        c.insert("b", 2);
        c.insert("c", 3);
        assert_eq!(keys(&c), vec!["c"]);
    }

    #[test]
    fn zero_capacity_never_holds_entries() {
        for policy in [CachePolicy::Fifo, CachePolicy::Lru, CachePolicy::FullReplace] {
            let mut c = ScoreCache::new(0, policy);
            c.insert("a", 1);
            assert!(c.is_empty(), "{policy:?}");
            assert_eq!(c.get(&"a"), None);
        }
    }

    #[test]
    fn reinsert_does_not_duplicate() {
        let mut c = ScoreCache::new(2, CachePolicy::Fifo);
        c.insert("a", 1);
        c.insert("a", 5);
        c.insert("b", 2);
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&"a"), Some(&5));
    }
}
