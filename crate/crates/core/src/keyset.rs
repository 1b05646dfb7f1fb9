//! Insertion-ordered set of byte strings stored in one contiguous arena.

use std::hash::BuildHasher;

use hashbrown::HashTable;
use rustc_hash::FxBuildHasher;

#[derive(Clone, Default)]
pub struct KeySet {
    arena: Vec<u8>,
    /// `ends[i]` is the arena offset one past key `i`.
    ends: Vec<usize>,
    table: HashTable<u32>,
}

fn hash(bytes: &[u8]) -> u64 {
    FxBuildHasher.hash_one(bytes)
}

impl KeySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u8] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.arena[start..self.ends[i]]
    }

    pub fn find(&self, key: &[u8]) -> Option<usize> {
        self.table
            .find(hash(key), |&i| self.get(i as usize) == key)
            .map(|&i| i as usize)
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.find(key).is_some()
    }

    /// Returns the index of `key` and whether it was newly inserted.
    pub fn insert(&mut self, key: &[u8]) -> (usize, bool) {
        let h = hash(key);
        let Self { arena, ends, table } = self;
        let get = |i: u32| {
            let i = i as usize;
            let start = if i == 0 { 0 } else { ends[i - 1] };
            &arena[start..ends[i]]
        };
        if let Some(&i) = table.find(h, |&i| get(i) == key) {
            return (i as usize, false);
        }
        let idx = ends.len();
        assert!(idx < u32::MAX as usize, "key set overflow");
        arena.extend_from_slice(key);
        ends.push(arena.len());
        let (arena, ends) = (&*arena, &*ends);
        table.insert_unique(h, idx as u32, |&i| {
            let i = i as usize;
            let start = if i == 0 { 0 } else { ends[i - 1] };
            hash(&arena[start..ends[i]])
        });
        (idx, true)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn is_subset(&self, other: &KeySet) -> bool {
        self.len() <= other.len() && self.iter().all(|k| other.contains(k))
    }

    /// Approximate heap usage in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.arena.capacity() + self.ends.capacity() * 8 + self.table.capacity() * 5
    }
}

impl PartialEq for KeySet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.is_subset(other)
    }
}

impl Eq for KeySet {}

impl std::fmt::Debug for KeySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeySet").field("len", &self.len()).finish()
    }
}

impl<'a> FromIterator<&'a [u8]> for KeySet {
    fn from_iter<I: IntoIterator<Item = &'a [u8]>>(iter: I) -> Self {
        let mut s = KeySet::new();
        for k in iter {
            s.insert(k);
        }
        s
    }
}
