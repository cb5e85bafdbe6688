use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

/// Server-side master secret for output shuffling.
#[derive(Clone, PartialEq, Eq)]
pub struct ShuffleSeed([u8; 32]);

impl ShuffleSeed {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self(b)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    fn prf(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
        let mut mac = HmacSha256::new_from_slice(key).expect("HMAC takes any key length");
        for p in parts {
            mac.update(p);
        }
        mac.finalize().into_bytes().into()
    }

    /// `HMAC(HMAC(master, "session" ‖ sid), "round" ‖ round_le32)`.
    fn round_key(&self, session_id: &[u8; 16], round: u32) -> [u8; 32] {
        let session = Self::prf(&self.0, &[b"session", session_id]);
        Self::prf(&session, &[b"round", &round.to_le_bytes()])
    }
}

impl fmt::Debug for ShuffleSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ShuffleSeed(..)")
    }
}

/// Counter-mode keystream of little-endian `u64` words.
struct KeyStream {
    key: [u8; 32],
    counter: u64,
    block: [u8; 32],
    used: usize,
}

impl KeyStream {
    fn new(key: [u8; 32]) -> Self {
        Self { key, counter: 0, block: [0; 32], used: 32 }
    }

    fn next_u64(&mut self) -> u64 {
        if self.used == 32 {
            self.block = ShuffleSeed::prf(&self.key, &[&self.counter.to_le_bytes()]);
            self.counter += 1;
            self.used = 0;
        }
        let w = u64::from_le_bytes(self.block[self.used..self.used + 8].try_into().expect("8 bytes"));
        self.used += 8;
        w
    }

    /// Uniform in `[0, bound)` by rejection.
    fn below(&mut self, bound: u64) -> u64 {
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// A bijection on `0..len`, stored as images: position `i` moves to `σ(i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Self { images: (0..len).collect() }
    }

    pub fn from_images(images: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return None;
            }
        }
        Some(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &s) in self.images.iter().enumerate() {
            inv[s] = i;
        }
        Self { images: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "composing permutations of different sizes");
        Self { images: other.images.iter().map(|&i| self.images[i]).collect() }
    }

    /// Gather indices realizing [`Self::shuffle`]: output `j` reads input `src[j]`.
    pub fn shuffle_sources(&self) -> Vec<usize> {
        self.inverse().images
    }

    /// Gather indices realizing [`Self::unshuffle`].
    pub fn unshuffle_sources(&self) -> Vec<usize> {
        self.images.clone()
    }

    /// `out[σ(i)] = v[i]`.
    pub fn shuffle<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.len());
        self.shuffle_sources().into_iter().map(|s| v[s].clone()).collect()
    }

    /// `out[i] = v[σ(i)]`, undoing [`Self::shuffle`].
    pub fn unshuffle<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.len());
        self.images.iter().map(|&s| v[s].clone()).collect()
    }
}

/// `σ_round` over `0..size`: Fisher–Yates with descending `i`, `j` uniform in
/// `[0, i]`, drawn from the keyed stream for `(seed, session, round)`.
/// Round 0 is the identity.
pub fn derive_permutation(seed: &ShuffleSeed, session_id: &[u8; 16], round: u32, size: usize) -> Permutation {
    let mut images: Vec<usize> = (0..size).collect();
    if round == 0 {
        return Permutation { images };
    }
    let mut ks = KeyStream::new(seed.round_key(session_id, round));
    for i in (1..size).rev() {
        let j = ks.below(i as u64 + 1) as usize;
        images.swap(i, j);
    }
    Permutation { images }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashSet;

    fn seed() -> ShuffleSeed {
        ShuffleSeed::from_bytes([7; 32])
    }

    #[test]
    fn deterministic_and_identity_at_round_zero() {
        let sid = [1u8; 16];
        assert_eq!(derive_permutation(&seed(), &sid, 3, 100), derive_permutation(&seed(), &sid, 3, 100));
        assert!(derive_permutation(&seed(), &sid, 0, 100).is_identity());
        assert_ne!(derive_permutation(&seed(), &sid, 1, 100), derive_permutation(&seed(), &[2; 16], 1, 100));
        assert_ne!(
            derive_permutation(&seed(), &sid, 1, 100),
            derive_permutation(&ShuffleSeed::from_bytes([8; 32]), &sid, 1, 100)
        );
        assert_eq!(derive_permutation(&seed(), &sid, 5, 1).images(), &[0]);
    }

    #[test]
    fn keystream_matches_independent_hmac() {
        // first word of the stream, recomputed with a fresh HMAC chain
        let sid = [9u8; 16];
        let mut m = HmacSha256::new_from_slice(&[7; 32]).unwrap();
        m.update(b"session");
        m.update(&sid);
        let s: [u8; 32] = m.finalize().into_bytes().into();
        let mut m = HmacSha256::new_from_slice(&s).unwrap();
        m.update(b"round");
        m.update(&4u32.to_le_bytes());
        let r: [u8; 32] = m.finalize().into_bytes().into();
        let mut m = HmacSha256::new_from_slice(&r).unwrap();
        m.update(&0u64.to_le_bytes());
        let blk: [u8; 32] = m.finalize().into_bytes().into();
        let w = u64::from_le_bytes(blk[..8].try_into().unwrap());
        // size 2: a single draw j = w mod 2 (w is accepted unless it falls in the tiny rejection zone)
        let p = derive_permutation(&seed(), &sid, 4, 2);
        assert_eq!(p.images() == [1, 0], w % 2 == 0);
    }

    #[test]
    fn inverse_and_shuffle_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for trial in 0..1000u32 {
            let mut sid = [0u8; 16];
            rng.fill_bytes(&mut sid);
            let n = 1 + (trial as usize % 40);
            let p = derive_permutation(&seed(), &sid, 1 + trial, n);
            assert!(p.compose(&p.inverse()).is_identity());
            assert!(p.inverse().compose(&p).is_identity());
            let v: Vec<usize> = (100..100 + n).collect();
            let s = p.shuffle(&v);
            for i in 0..n {
                assert_eq!(s[p.images()[i]], v[i]);
            }
            assert_eq!(p.unshuffle(&s), v);
        }
    }

    #[test]
    fn rounds_give_distinct_permutations() {
        let sid = [3u8; 16];
        let seen: HashSet<Vec<usize>> =
            (1..=10_000u32).map(|r| derive_permutation(&seed(), &sid, r, 16).images).collect();
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn roughly_uniform() {
        // position of element 0 over many rounds, size 4: each cell near 1/4
        let mut counts = [0usize; 4];
        for r in 1..=8000 {
            counts[derive_permutation(&seed(), &[0; 16], r, 4).images()[0]] += 1;
        }
        assert!(counts.iter().all(|&c| (1800..2200).contains(&c)), "{counts:?}");
        assert!(Permutation::from_images(vec![0, 0]).is_none());
        assert!(Permutation::from_images(vec![1, 2]).is_none());
    }
}
