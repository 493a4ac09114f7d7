//! Packed hash table for gridded coefficients.
//!
//! The whole point of coarse coefficients is a small resident footprint, so
//! the fixed-point training modes store them here rather than in a general
//! map of boxed entries: three parallel arrays (key, 16-bit raw coefficient,
//! counter cell), open addressing with linear probing, and a power-of-two
//! capacity kept under 70% load. The counter cell type is generic so the
//! same table serves exact 32-bit counts, 8-bit probabilistic counters, and
//! counterless storage (`()` occupies no space at all).

/// Reserved key marking an empty slot. Feature indices never take this
/// value: text data is 1-based (shifting down cannot reach `u64::MAX`) and
/// synthetic dimensions are bounded.
const EMPTY: u64 = u64::MAX;

const INITIAL_CAPACITY: usize = 16;

/// Open-addressed map from feature index to a packed (coefficient, counter)
/// pair.
#[derive(Debug, Clone)]
pub struct PackedTable<C: Copy> {
    keys: Vec<u64>,
    coeffs: Vec<i16>,
    counts: Vec<C>,
    len: usize,
}

/// SplitMix64 finalizer: cheap, well-mixed, and deterministic across runs,
/// unlike the std hasher's per-process random keys.
fn mix(key: u64) -> u64 {
    let mut z = key.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl<C: Copy + Default> Default for PackedTable<C> {
    fn default() -> Self {
        Self::new()
    }
}

impl<C: Copy + Default> PackedTable<C> {
    pub fn new() -> Self {
        PackedTable {
            keys: vec![EMPTY; INITIAL_CAPACITY],
            coeffs: vec![0; INITIAL_CAPACITY],
            counts: vec![C::default(); INITIAL_CAPACITY],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes held by the parallel arrays themselves.
    pub fn heap_bytes(&self) -> usize {
        self.keys.len() * std::mem::size_of::<u64>()
            + self.coeffs.len() * std::mem::size_of::<i16>()
            + self.counts.len() * std::mem::size_of::<C>()
    }

    fn slot_for(&self, key: u64) -> usize {
        debug_assert_ne!(key, EMPTY, "key collides with the empty sentinel");
        let mask = self.keys.len() - 1;
        let mut i = (mix(key) as usize) & mask;
        loop {
            let k = self.keys[i];
            if k == key || k == EMPTY {
                return i;
            }
            i = (i + 1) & mask;
        }
    }

    pub fn get(&self, key: u64) -> Option<(i16, C)> {
        let i = self.slot_for(key);
        if self.keys[i] == key {
            Some((self.coeffs[i], self.counts[i]))
        } else {
            None
        }
    }

    /// Mutable access to the entry for `key`, inserting
    /// `(init_coeff, init_count)` first if absent.
    pub fn entry(&mut self, key: u64, init_coeff: i16, init_count: C) -> (&mut i16, &mut C) {
        if (self.len + 1) * 10 > self.keys.len() * 7 {
            self.grow();
        }
        let i = self.slot_for(key);
        if self.keys[i] == EMPTY {
            self.keys[i] = key;
            self.coeffs[i] = init_coeff;
            self.counts[i] = init_count;
            self.len += 1;
        }
        (&mut self.coeffs[i], &mut self.counts[i])
    }

    fn grow(&mut self) {
        let new_cap = self.keys.len() * 2;
        let old_keys = std::mem::replace(&mut self.keys, vec![EMPTY; new_cap]);
        let old_coeffs = std::mem::replace(&mut self.coeffs, vec![0; new_cap]);
        let old_counts = std::mem::replace(&mut self.counts, vec![C::default(); new_cap]);
        for (j, key) in old_keys.into_iter().enumerate() {
            if key == EMPTY {
                continue;
            }
            let i = self.slot_for(key);
            self.keys[i] = key;
            self.coeffs[i] = old_coeffs[j];
            self.counts[i] = old_counts[j];
        }
    }

    /// All occupied entries, in arbitrary table order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, i16, C)> + '_ {
        self.keys
            .iter()
            .enumerate()
            .filter(|(_, &k)| k != EMPTY)
            .map(|(i, &k)| (k, self.coeffs[i], self.counts[i]))
    }
}
