//! Chosen-input reconstruction of a linear layer `f(x) = Ax + b` from a
//! client's point of view, under each shuffling regime.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::permutation::{derive_permutation, ShuffleSeed};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShuffleMode {
    None,
    Output,
    InputOutput,
}

/// A cleartext linear layer answering queries the way the server would:
/// every query gets fresh seeded permutations on the enabled sides.
#[derive(Clone, Debug)]
pub struct LinearOracle {
    a: Vec<Vec<i64>>,
    b: Vec<i64>,
    mode: ShuffleMode,
    seed: ShuffleSeed,
    session: [u8; 16],
    queries: u32,
}

impl LinearOracle {
    /// `a` is `m` rows of `d` weights.
    pub fn new(a: Vec<Vec<i64>>, b: Vec<i64>, mode: ShuffleMode, seed: ShuffleSeed) -> Self {
        assert_eq!(a.len(), b.len(), "one bias per row");
        Self { a, b, mode, seed, session: [0x5a; 16], queries: 0 }
    }

    pub fn random(m: usize, d: usize, range: i64, mode: ShuffleMode, rng: &mut impl Rng) -> Self {
        let a = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-range..=range)).collect()).collect();
        let b = (0..m).map(|_| rng.gen_range(-range..=range)).collect();
        Self::new(a, b, mode, ShuffleSeed::random(rng))
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.a
    }

    pub fn bias(&self) -> &[i64] {
        &self.b
    }

    pub fn inputs(&self) -> usize {
        self.a.first().map(Vec::len).unwrap_or(0)
    }

    pub fn queries(&self) -> u32 {
        self.queries
    }

    /// True column `i` as a sorted multiset.
    pub fn column_multiset(&self, i: usize) -> Vec<i64> {
        let mut c: Vec<i64> = self.a.iter().map(|r| r[i]).collect();
        c.sort_unstable();
        c
    }

    pub fn weight_histogram(&self) -> BTreeMap<i64, u64> {
        histogram(self.a.iter().flatten().copied())
    }

    pub fn query(&mut self, x: &[i64]) -> Vec<i64> {
        assert_eq!(x.len(), self.inputs());
        self.queries += 1;
        let r = self.queries;
        let x = match self.mode {
            ShuffleMode::InputOutput => derive_permutation(&self.seed, &self.session, 2 * r, x.len()).shuffle(x),
            _ => x.to_vec(),
        };
        let y: Vec<i64> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, &b)| b + row.iter().zip(&x).map(|(w, v)| w * v).sum::<i64>())
            .collect();
        match self.mode {
            ShuffleMode::None => y,
            _ => derive_permutation(&self.seed, &self.session, 2 * r + 1, y.len()).shuffle(&y),
        }
    }
}

fn histogram(values: impl IntoIterator<Item = i64>) -> BTreeMap<i64, u64> {
    let mut h = BTreeMap::new();
    for v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}

fn basis(d: usize, i: usize, k: i64) -> Vec<i64> {
    let mut x = vec![0; d];
    x[i] = k;
    x
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoShuffleRecovery {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub queries: usize,
}

/// Without shuffling, `f(0) = b` and `f(e_i) − b` is column `i`: `d + 1`
/// queries recover the layer exactly.
pub fn attack_noshuffle(d: usize, mut query: impl FnMut(&[i64]) -> Vec<i64>) -> NoShuffleRecovery {
    let b = query(&vec![0; d]);
    let mut a = vec![vec![0; d]; b.len()];
    for i in 0..d {
        let y = query(&basis(d, i, 1));
        for (k, (yk, bk)) in y.iter().zip(&b).enumerate() {
            a[k][i] = yk - bk;
        }
    }
    NoShuffleRecovery { a, b, queries: d + 1 }
}

/// Every column multiset `{a}` admitting a row matching where bias `b` and
/// probe `k·e_i` produce `k·a + b` in the `k`-th observed multiset. Stops
/// early once two distinct answers are known.
fn column_candidates(bias: &[i64], probes: &[Vec<i64>]) -> BTreeSet<Vec<i64>> {
    fn rec(i: usize, bias: &[i64], rem: &mut [BTreeMap<i64, u64>], acc: &mut Vec<i64>, out: &mut BTreeSet<Vec<i64>>) {
        if out.len() > 1 {
            return;
        }
        if i == bias.len() {
            let mut s = acc.clone();
            s.sort_unstable();
            out.insert(s);
            return;
        }
        let b = bias[i];
        let cands: Vec<i64> = rem[0].iter().filter(|(_, &c)| c > 0).map(|(&y, _)| y - b).collect();
        for a in cands {
            let fits = rem.iter().enumerate().all(|(k, r)| r.get(&((k as i64 + 1) * a + b)).copied().unwrap_or(0) > 0);
            if !fits {
                continue;
            }
            for (k, r) in rem.iter_mut().enumerate() {
                *r.get_mut(&((k as i64 + 1) * a + b)).expect("checked") -= 1;
            }
            acc.push(a);
            rec(i + 1, bias, rem, acc, out);
            acc.pop();
            for (k, r) in rem.iter_mut().enumerate() {
                *r.get_mut(&((k as i64 + 1) * a + b)).expect("checked") += 1;
            }
        }
    }
    let mut rem: Vec<BTreeMap<i64, u64>> = probes.iter().map(|p| histogram(p.iter().copied())).collect();
    let mut out = BTreeSet::new();
    if probes.iter().all(|p| p.len() == bias.len()) {
        rec(0, bias, &mut rem, &mut Vec::with_capacity(bias.len()), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutShuffleRecovery {
    /// Sorted bias multiset, from `f(0)`.
    pub bias: Vec<i64>,
    /// Sorted multiset of column `i`, or `None` if no probe budget made it
    /// unique (or no consistent matching exists).
    pub columns: Vec<Option<Vec<i64>>>,
    /// Probes beyond `e_i, 2e_i` that were needed.
    pub extra_probes: usize,
    pub queries: usize,
}

/// With a fresh output shuffle per query, probes `e_i` and `2e_i` pin
/// column `i` as a multiset via `(b + y₂)/2 ∈ y₁`; ties are broken with
/// `3e_i, 4e_i, …` up to `max_multiple`. Row order stays unknown.
pub fn attack_outshuffle(d: usize, max_multiple: i64, mut query: impl FnMut(&[i64]) -> Vec<i64>) -> OutShuffleRecovery {
    let mut bias = query(&vec![0; d]);
    bias.sort_unstable();
    let mut queries = 1;
    let mut extra_probes = 0;
    let mut columns = Vec::with_capacity(d);
    for i in 0..d {
        let mut probes = vec![query(&basis(d, i, 1)), query(&basis(d, i, 2))];
        queries += 2;
        let mut found = column_candidates(&bias, &probes);
        let mut k = 3;
        while found.len() > 1 && k <= max_multiple {
            probes.push(query(&basis(d, i, k)));
            queries += 1;
            extra_probes += 1;
            k += 1;
            found = column_candidates(&bias, &probes);
        }
        columns.push(if found.len() == 1 { found.into_iter().next() } else { None });
    }
    OutShuffleRecovery { bias, columns, extra_probes, queries }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InOutRecovery {
    /// What the attacker would believe column `i` is: the first unique
    /// answer obtained while probing index `i`.
    pub labelled: Vec<Option<Vec<i64>>>,
    /// Distinct column multisets seen, with no reliable index.
    pub distinct_columns: Vec<Vec<i64>>,
    /// Entry histogram over `distinct_columns`.
    pub histogram: BTreeMap<i64, u64>,
    pub queries: usize,
}

/// Under input and output shuffling each probe of `k·e_i` lands on an
/// unknown column, so the probes only agree when they happen to hit the
/// same one. Repeating probe sets (`e_i … probes·e_i`) and keeping the
/// uniquely consistent answers yields column multisets without indices;
/// their union is the weight histogram and nothing more.
pub fn attack_inoutshuffle(
    d: usize,
    probes: i64,
    max_queries: usize,
    mut query: impl FnMut(&[i64]) -> Vec<i64>,
) -> InOutRecovery {
    let mut bias = query(&vec![0; d]);
    bias.sort_unstable();
    let mut queries = 1;
    let mut labelled = vec![None; d];
    let mut distinct = BTreeSet::new();
    let mut i = 0;
    while distinct.len() < d && queries + probes as usize <= max_queries {
        let obs: Vec<Vec<i64>> = (1..=probes).map(|k| query(&basis(d, i, k))).collect();
        queries += probes as usize;
        let found = column_candidates(&bias, &obs);
        if found.len() == 1 {
            let col = found.into_iter().next().expect("one");
            labelled[i].get_or_insert_with(|| col.clone());
            distinct.insert(col);
        }
        i = (i + 1) % d;
    }
    let distinct_columns: Vec<Vec<i64>> = distinct.into_iter().collect();
    let histogram = histogram(distinct_columns.iter().flatten().copied());
    InOutRecovery { labelled, distinct_columns, histogram, queries }
}

/// Number of distinct orderings of a multiset, `m! / ∏ mult!`: how many row
/// assignments are consistent with a recovered column.
pub fn multiset_orderings(values: &[i64]) -> f64 {
    let fact = |n: u64| (1..=n).map(|k| k as f64).product::<f64>();
    histogram(values.iter().copied()).values().fold(fact(values.len() as u64), |acc, &c| acc / fact(c))
}
