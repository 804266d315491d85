//! Truncated Baker-Campbell-Dynkin-Hausdorff series.
//!
//! The series is
//!
//! ```text
//! log(e^X e^Y) = X + Y + sum_{k>=1} sum_{(n,m) in I_k} a^k_{n,m}
//!                ad_X^{n_1} ad_Y^{m_1} ... ad_X^{n_k} ad_Y^{m_k} X
//! a^k_{n,m} = (-1)^k / ((k+1) m! n! (|n|+1))
//! ```
//!
//! with `n_i + m_i > 0`. In a step-`r` algebra every term with `|n|+|m| >= r`
//! vanishes, so the sum is finite. Each surviving term is an iterated bracket
//! applied to `X`; we store it as a *word* over `{X, Y}` read from the inside
//! out and merge the coefficients of identical words in exact rational
//! arithmetic. Terms whose innermost operator is `ad_X` vanish (`[X, X] = 0`)
//! and are dropped.

use num_rational::Ratio;
use std::collections::BTreeMap;

/// Which argument an `ad` operator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    X,
    Y,
}

/// Merged coefficient table for one step.
#[derive(Clone, Debug)]
pub struct BcdhTable {
    step: usize,
    /// Trie of words; `nodes[0]` is the root (the bare `X`).
    nodes: Vec<TrieNode>,
}

#[derive(Clone, Debug)]
pub(crate) struct TrieNode {
    pub(crate) parent: usize,
    pub(crate) letter: Letter,
    /// Coefficient of the word ending at this node (zero for pure prefixes).
    pub(crate) coeff: Ratio<i64>,
    pub(crate) depth: usize,
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Enumerates every `(k, n, m)` with `n_i + m_i > 0` and `|n| + |m| < step`.
fn enumerate_terms(step: usize, mut visit: impl FnMut(&[(usize, usize)])) {
    fn rec(budget: usize, pairs: &mut Vec<(usize, usize)>, visit: &mut dyn FnMut(&[(usize, usize)])) {
        if !pairs.is_empty() {
            visit(pairs);
        }
        for total in 1..=budget {
            for n_i in 0..=total {
                pairs.push((n_i, total - n_i));
                rec(budget - total, pairs, visit);
                pairs.pop();
            }
        }
    }
    if step < 2 {
        return;
    }
    let mut pairs = Vec::new();
    rec(step - 1, &mut pairs, &mut visit);
}

/// Coefficient `a^k_{n,m}` as an exact rational.
pub fn dynkin_coefficient(pairs: &[(usize, usize)]) -> Ratio<i64> {
    let k = pairs.len() as i64;
    let n_abs: usize = pairs.iter().map(|p| p.0).sum();
    let denom: i64 =
        (k + 1) * pairs.iter().map(|&(n, m)| factorial(n) * factorial(m)).product::<i64>() * (n_abs as i64 + 1);
    let sign = if k % 2 == 0 { 1 } else { -1 };
    Ratio::new(sign, denom)
}

/// Word of `pairs`, innermost operator first.
fn word_of(pairs: &[(usize, usize)]) -> Vec<Letter> {
    let mut word = Vec::new();
    for &(n, m) in pairs.iter().rev() {
        word.extend(std::iter::repeat_n(Letter::Y, m));
        word.extend(std::iter::repeat_n(Letter::X, n));
    }
    word
}

impl BcdhTable {
    pub fn new(step: usize) -> Self {
        let mut merged: BTreeMap<Vec<Letter>, Ratio<i64>> = BTreeMap::new();
        enumerate_terms(step, |pairs| {
            let word = word_of(pairs);
            if word.first() != Some(&Letter::Y) {
                return;
            }
            *merged.entry(word).or_insert_with(|| Ratio::from_integer(0)) += dynkin_coefficient(pairs);
        });
        merged.retain(|_, c| *c != Ratio::from_integer(0));

        let mut nodes = vec![TrieNode {
            parent: usize::MAX,
            letter: Letter::X,
            coeff: Ratio::from_integer(0),
            depth: 0,
        }];
        let mut index: BTreeMap<Vec<Letter>, usize> = BTreeMap::new();
        // BTreeMap order puts every prefix before its extensions.
        for (word, coeff) in &merged {
            let mut parent = 0;
            for len in 1..=word.len() {
                let prefix = &word[..len];
                parent = match index.get(prefix) {
                    Some(&id) => id,
                    None => {
                        nodes.push(TrieNode {
                            parent,
                            letter: word[len - 1],
                            coeff: Ratio::from_integer(0),
                            depth: len,
                        });
                        index.insert(prefix.to_vec(), nodes.len() - 1);
                        nodes.len() - 1
                    }
                };
            }
            nodes[parent].coeff = *coeff;
        }
        BcdhTable { step, nodes }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub(crate) fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    /// Merged words with nonzero coefficient, innermost letter first.
    pub fn words(&self) -> Vec<(Vec<Letter>, Ratio<i64>)> {
        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            if node.coeff == Ratio::from_integer(0) {
                continue;
            }
            let mut word = Vec::with_capacity(node.depth);
            let mut cur = id;
            while cur != 0 {
                word.push(self.nodes[cur].letter);
                cur = self.nodes[cur].parent;
            }
            word.reverse();
            out.push((word, node.coeff));
        }
        out
    }

    /// Coefficient `c_p` of `ad_X^p v` in the left-translation differential
    /// `(L_x)_* v = v + sum_p c_p ad_X^p v`, for `p = 1..step-1`.
    ///
    /// Differentiating `BCDH(X, t v)` at `t = 0` keeps exactly the words
    /// `Y X^{p-1}`, and `ad_X^{p-1} [v, X] = -ad_X^p v`.
    pub fn pushforward_coefficients(&self) -> Vec<Ratio<i64>> {
        let mut coeffs = vec![Ratio::from_integer(0); self.step.saturating_sub(1)];
        for (word, c) in self.words() {
            if word[0] == Letter::Y && word[1..].iter().all(|&l| l == Letter::X) {
                coeffs[word.len() - 1] = -c;
            }
        }
        coeffs
    }
}
