//! Problem instances: promise functions, relations, input distributions
//! and the composed problem they induce.
//!
//! An instance pairs an outer relation `f` over `n`-bit strings with an
//! inner promise function `g` over `m`-bit blocks. The composed problem
//! feeds the block values `g(x_1), ..., g(x_n)` to `f`; if any block
//! violates the promise, every answer counts as correct.

use crate::rational::{one, zero, Rat};
use crate::{Error, Result};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeSet;
use std::fmt;

/// Value of a promise function: a Boolean or the forbidden marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GVal {
    Zero,
    One,
    Star,
}

impl GVal {
    pub fn from_bit(b: bool) -> Self {
        if b {
            GVal::One
        } else {
            GVal::Zero
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            GVal::Zero => Some(false),
            GVal::One => Some(true),
            GVal::Star => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            GVal::Zero => "0",
            GVal::One => "1",
            GVal::Star => "*",
        }
    }
}

/// Fixed-length bit string, at most 32 bits.
///
/// Positions are 0-based. Position 0 is the leftmost character of the
/// textual form, so the numeric packing orders strings lexicographically.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring {
    len: u8,
    bits: u32,
}

impl Bitstring {
    pub const MAX_LEN: usize = 32;

    pub fn new(len: usize, bits: u32) -> Self {
        assert!(len > 0 && len <= Self::MAX_LEN, "unsupported length {len}");
        assert!(
            len == 32 || bits < (1u32 << len),
            "value {bits} does not fit in {len} bits"
        );
        Bitstring {
            len: len as u8,
            bits,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(len, 0)
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > Self::MAX_LEN {
            return Err(Error::Parse(format!("bad bitstring length in {s:?}")));
        }
        let mut bits = 0u32;
        for c in s.chars() {
            bits <<= 1;
            match c {
                '0' => {}
                '1' => bits |= 1,
                _ => return Err(Error::Parse(format!("bad bitstring character in {s:?}"))),
            }
        }
        Ok(Self::new(s.len(), bits))
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn value(&self) -> u32 {
        self.bits
    }

    /// Bit at 0-based position `i` (leftmost is 0).
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len());
        (self.bits >> (self.len() - 1 - i)) & 1 == 1
    }

    pub fn with_bit(&self, i: usize, v: bool) -> Self {
        assert!(i < self.len());
        let mask = 1u32 << (self.len() - 1 - i);
        let bits = if v {
            self.bits | mask
        } else {
            self.bits & !mask
        };
        Bitstring {
            len: self.len,
            bits,
        }
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn xor(&self, other: &Bitstring) -> Bitstring {
        assert_eq!(self.len, other.len);
        Bitstring {
            len: self.len,
            bits: self.bits ^ other.bits,
        }
    }

    /// Block `i` of `count` blocks of `m` bits each.
    pub fn block(&self, i: usize, count: usize, m: usize) -> Bitstring {
        assert_eq!(self.len(), count * m);
        assert!(i < count);
        let shift = self.len() - (i + 1) * m;
        let mask = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
        Bitstring::new(m, (self.bits >> shift) & mask)
    }

    /// Replaces block `i` with `rep`.
    pub fn with_block(&self, i: usize, count: usize, rep: &Bitstring) -> Bitstring {
        let m = rep.len();
        assert_eq!(self.len(), count * m);
        assert!(i < count);
        let shift = self.len() - (i + 1) * m;
        let mask = (if m == 32 { u32::MAX } else { (1u32 << m) - 1 }) << shift;
        Bitstring {
            len: self.len,
            bits: (self.bits & !mask) | (rep.bits << shift),
        }
    }

    /// Concatenates blocks into a single string.
    pub fn concat(blocks: &[Bitstring]) -> Bitstring {
        let len: usize = blocks.iter().map(|b| b.len()).sum();
        let mut bits = 0u32;
        for b in blocks {
            bits = (bits << b.len()) | b.bits;
        }
        Bitstring::new(len, bits)
    }

    /// All strings of the given length, in lexicographic order.
    pub fn all(len: usize) -> impl Iterator<Item = Bitstring> {
        assert!(len <= 20, "refusing to enumerate 2^{len} strings");
        (0..(1u32 << len)).map(move |v| Bitstring::new(len, v))
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstring({self})")
    }
}

/// Total table of a promise function over `m`-bit inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromiseFunction {
    m: usize,
    table: Vec<GVal>,
}

impl PromiseFunction {
    pub fn new(m: usize, table: Vec<GVal>) -> Result<Self> {
        if table.len() != 1usize << m {
            return Err(Error::Parse(format!(
                "promise table has {} entries, expected {}",
                table.len(),
                1usize << m
            )));
        }
        if table.iter().all(|v| *v == GVal::Star) {
            return Err(Error::Parse(
                "promise function has no legal input".to_string(),
            ));
        }
        Ok(PromiseFunction { m, table })
    }

    /// Builds a function from a closure over all inputs.
    pub fn from_fn(m: usize, f: impl Fn(&Bitstring) -> GVal) -> Result<Self> {
        Self::new(m, Bitstring::all(m).map(|x| f(&x)).collect())
    }

    pub fn identity_1bit() -> Self {
        Self::new(1, vec![GVal::Zero, GVal::One]).unwrap()
    }

    pub fn input_len(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &Bitstring) -> GVal {
        assert_eq!(x.len(), self.m);
        self.table[x.value() as usize]
    }

    pub fn table(&self) -> &[GVal] {
        &self.table
    }

    /// Legal inputs attaining the given value.
    pub fn preimage(&self, v: GVal) -> Vec<Bitstring> {
        Bitstring::all(self.m).filter(|x| self.eval(x) == v).collect()
    }
}

/// Relation over `n`-bit inputs with a finite answer alphabet.
///
/// `accepted[z]` is the set of correct answers for input `z`; an empty
/// set means every answer is wrong there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    n: usize,
    answers: Vec<String>,
    accepted: Vec<BTreeSet<String>>,
}

impl Relation {
    pub fn new(n: usize, answers: Vec<String>, accepted: Vec<BTreeSet<String>>) -> Result<Self> {
        if accepted.len() != 1usize << n {
            return Err(Error::Parse(format!(
                "relation has {} entries, expected {}",
                accepted.len(),
                1usize << n
            )));
        }
        let alphabet: BTreeSet<&String> = answers.iter().collect();
        if alphabet.len() != answers.len() {
            return Err(Error::Parse("duplicate answer label".to_string()));
        }
        for set in &accepted {
            for a in set {
                if !alphabet.contains(a) {
                    return Err(Error::UnknownAnswer(a.clone()));
                }
            }
        }
        Ok(Relation {
            n,
            answers,
            accepted,
        })
    }

    /// The identity problem on one bit: answers "0"/"1", exact match.
    pub fn identity_1bit() -> Self {
        Self::new(
            1,
            vec!["0".into(), "1".into()],
            vec![
                BTreeSet::from(["0".to_string()]),
                BTreeSet::from(["1".to_string()]),
            ],
        )
        .unwrap()
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> &[String] {
        &self.answers
    }

    pub fn has_answer(&self, xi: &str) -> bool {
        self.answers.iter().any(|a| a == xi)
    }

    pub fn accepts(&self, z: &Bitstring, xi: &str) -> Result<bool> {
        if z.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        if !self.has_answer(xi) {
            return Err(Error::UnknownAnswer(xi.to_string()));
        }
        Ok(self.accepted[z.value() as usize].contains(xi))
    }

    pub fn accepted_set(&self, z: &Bitstring) -> &BTreeSet<String> {
        &self.accepted[z.value() as usize]
    }

    /// Inputs whose accepted set is empty (flagged by validation).
    pub fn empty_answer_inputs(&self) -> Vec<Bitstring> {
        Bitstring::all(self.n)
            .filter(|z| self.accepted[z.value() as usize].is_empty())
            .collect()
    }
}

/// Exact distribution over equal-length bitstrings, stored as a sparse
/// support list sorted by input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution {
    len: usize,
    support: Vec<(Bitstring, Rat)>,
}

impl Distribution {
    pub fn new(support: Vec<(Bitstring, Rat)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".to_string()));
        }
        let len = support[0].0.len();
        let mut sorted = support;
        sorted.sort_by_key(|(x, _)| x.value());
        let mut total = zero();
        for (i, (x, w)) in sorted.iter().enumerate() {
            if x.len() != len {
                return Err(Error::InvalidDistribution(
                    "support entries of unequal length".to_string(),
                ));
            }
            if !w.is_positive() {
                return Err(Error::InvalidDistribution(format!(
                    "weight of {x} is not positive"
                )));
            }
            if i > 0 && sorted[i - 1].0 == *x {
                return Err(Error::InvalidDistribution(format!("duplicate entry {x}")));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Distribution {
            len,
            support: sorted,
        })
    }

    pub fn point(x: Bitstring) -> Self {
        Distribution {
            len: x.len(),
            support: vec![(x, one())],
        }
    }

    pub fn uniform(len: usize) -> Self {
        let count = 1u32 << len;
        let w = Rat::new(1.into(), count.into());
        Distribution {
            len,
            support: Bitstring::all(len).map(|x| (x, w.clone())).collect(),
        }
    }

    /// Uniform over an explicit set of strings.
    pub fn uniform_over(points: &[Bitstring]) -> Result<Self> {
        let w = Rat::new(1.into(), (points.len() as u32).into());
        Self::new(points.iter().map(|x| (*x, w.clone())).collect())
    }

    pub fn input_len(&self) -> usize {
        self.len
    }

    pub fn support(&self) -> &[(Bitstring, Rat)] {
        &self.support
    }

    pub fn prob(&self, x: &Bitstring) -> Rat {
        self.support
            .iter()
            .find(|(y, _)| y == x)
            .map(|(_, w)| w.clone())
            .unwrap_or_else(zero)
    }

    /// Probability of an arbitrary event.
    pub fn prob_where(&self, pred: impl Fn(&Bitstring) -> bool) -> Rat {
        self.support
            .iter()
            .filter(|(x, _)| pred(x))
            .map(|(_, w)| w.clone())
            .sum()
    }

    /// Exact conditional distribution given an event.
    pub fn condition(&self, pred: impl Fn(&Bitstring) -> bool) -> Result<Distribution> {
        let kept: Vec<(Bitstring, Rat)> = self
            .support
            .iter()
            .filter(|(x, _)| pred(x))
            .cloned()
            .collect();
        let total: Rat = kept.iter().map(|(_, w)| w.clone()).sum();
        if total.is_zero() {
            return Err(Error::ZeroProbability);
        }
        Distribution::new(kept.into_iter().map(|(x, w)| (x, w / &total)).collect())
    }

    /// Pointwise mixture `self*w + other*(1-w)`.
    pub fn mix(&self, other: &Distribution, w: &Rat) -> Result<Distribution> {
        assert_eq!(self.len, other.len);
        let mut acc: std::collections::BTreeMap<u32, (Bitstring, Rat)> = Default::default();
        for (x, p) in &self.support {
            acc.insert(x.value(), (*x, p * w));
        }
        let cw = one() - w;
        for (x, p) in &other.support {
            acc.entry(x.value())
                .and_modify(|(_, q)| *q += p * &cw)
                .or_insert((*x, p * &cw));
        }
        Distribution::new(acc.into_values().filter(|(_, w)| w.is_positive()).collect())
    }
}

/// Membership in the composed problem: the answer `xi` is correct for
/// input `x` iff some block violates the promise or the block values
/// form an input of `f` that accepts `xi`.
pub fn compose_membership(
    f: &Relation,
    g: &PromiseFunction,
    x: &Bitstring,
    xi: &str,
) -> Result<bool> {
    let n = f.input_len();
    let m = g.input_len();
    if x.len() != n * m {
        return Err(Error::LengthMismatch {
            expected: n * m,
            got: x.len(),
        });
    }
    if !f.has_answer(xi) {
        return Err(Error::UnknownAnswer(xi.to_string()));
    }
    let mut z = Bitstring::zeros(n);
    for i in 0..n {
        match g.eval(&x.block(i, n, m)) {
            GVal::Star => return Ok(true),
            GVal::One => z = z.with_bit(i, true),
            GVal::Zero => {}
        }
    }
    f.accepts(&z, xi)
}

/// Block values `(g(x_1), ..., g(x_n))` when all blocks are legal.
pub fn block_values(g: &PromiseFunction, x: &Bitstring, n: usize) -> Option<Bitstring> {
    let m = g.input_len();
    let mut z = Bitstring::zeros(n);
    for i in 0..n {
        match g.eval(&x.block(i, n, m)) {
            GVal::Star => return None,
            GVal::One => z = z.with_bit(i, true),
            GVal::Zero => {}
        }
    }
    Some(z)
}

/// Conditional of an inner distribution on the function value.
pub fn conditional_on_value(
    mu_g: &Distribution,
    g: &PromiseFunction,
    a: bool,
) -> Result<Distribution> {
    mu_g.condition(|x| g.eval(x) == GVal::from_bit(a))
}

/// Asserts the support is promise-respecting and sees both values.
pub fn check_inner_distribution(mu_g: &Distribution, g: &PromiseFunction) -> Result<()> {
    let mut seen = [false, false];
    for (x, _) in mu_g.support() {
        match g.eval(x) {
            GVal::Star => return Err(Error::IllegalSupport),
            GVal::Zero => seen[0] = true,
            GVal::One => seen[1] = true,
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::ConstantOnSupport);
    }
    Ok(())
}

/// Product/mixture lift: choose `z` from `nu`, then each block `i`
/// independently from the inner conditional for value `z_i`.
pub fn lift_distribution(
    nu: &Distribution,
    mu_g: &Distribution,
    g: &PromiseFunction,
) -> Result<Distribution> {
    check_inner_distribution(mu_g, g)?;
    let n = nu.input_len();
    let cond = [
        conditional_on_value(mu_g, g, false)?,
        conditional_on_value(mu_g, g, true)?,
    ];
    let mut support = Vec::new();
    for (z, wz) in nu.support() {
        // Blocks are independent given z; expand the product.
        let mut parts: Vec<(Vec<Bitstring>, Rat)> = vec![(Vec::new(), wz.clone())];
        for i in 0..n {
            let inner = &cond[z.get(i) as usize];
            let mut next = Vec::with_capacity(parts.len() * inner.support().len());
            for (prefix, w) in &parts {
                for (x, wx) in inner.support() {
                    let mut p = prefix.clone();
                    p.push(*x);
                    next.push((p, w * wx));
                }
            }
            parts = next;
        }
        for (blocks, w) in parts {
            support.push((Bitstring::concat(&blocks), w));
        }
    }
    // Distinct z values produce distinct block values, so no merging is
    // needed; Distribution::new would reject duplicates anyway.
    Distribution::new(support)
}

/// Lift of a single outer input.
pub fn lift_point(
    z: &Bitstring,
    mu_g: &Distribution,
    g: &PromiseFunction,
) -> Result<Distribution> {
    lift_distribution(&Distribution::point(*z), mu_g, g)
}

/// The half/half mixture of the two value-conditionals; the function is
/// exactly unbiased under the result.
pub fn balanced_mixture(mu_g: &Distribution, g: &PromiseFunction) -> Result<Distribution> {
    for (x, _) in mu_g.support() {
        if g.eval(x) == GVal::Star {
            return Err(Error::IllegalSupport);
        }
    }
    let c0 = conditional_on_value(mu_g, g, false).map_err(|_| Error::ConstantOnSupport)?;
    let c1 = conditional_on_value(mu_g, g, true).map_err(|_| Error::ConstantOnSupport)?;
    c0.mix(&c1, &crate::rational::half())
}
