//! Seeded random instance generation for the verification suites.
//!
//! Instances are drawn from a keyed deterministic stream: the same seed
//! and index always produce the same instance, independent of platform
//! or evaluation order. The shapes follow the scale the exact engines
//! are built for: up to three blocks of up to three bits, trees of
//! depth at most four.

use crate::problems::{Bitstring, Distribution, GVal, PromiseFunction, Relation};
use crate::rational::Rat;
use crate::rng::Stream;
use crate::trees::{NodeId, XNode, XTree};
use std::collections::BTreeSet;

/// A complete random instance: problem pair, inner distribution and a
/// deterministic protocol tree for the composed problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub f: Relation,
    pub g: PromiseFunction,
    pub mu_g: Distribution,
    pub tree: XTree,
}

/// Draws a random instance. `index` selects the instance within the
/// seeded family.
pub fn random_instance(seed: u64, index: u64) -> Instance {
    let mut s = Stream::new(&[seed, index, 0x1157]);
    let n = 1 + s.below(3) as usize;
    let m = 1 + s.below(3) as usize;
    let g = random_promise(&mut s, m);
    let mu_g = random_inner_distribution(&mut s, &g);
    let f = random_relation(&mut s, n);
    let depth = 1 + s.below(4) as usize;
    let tree = random_xtree(&mut s, &f, n, m, depth);
    Instance {
        n,
        m,
        f,
        g,
        mu_g,
        tree,
    }
}

/// Random promise function attaining both values, with random holes.
pub fn random_promise(s: &mut Stream, m: usize) -> PromiseFunction {
    loop {
        let table: Vec<GVal> = (0..1usize << m)
            .map(|_| match s.below(4) {
                0 => GVal::Star,
                1 | 2 => GVal::Zero,
                _ => GVal::One,
            })
            .collect();
        let has = |v: GVal| table.contains(&v);
        if has(GVal::Zero) && has(GVal::One) {
            return PromiseFunction::new(m, table).expect("both values present");
        }
    }
}

/// Random legal-supported distribution whose support sees both values.
/// Rich supports keep repeated block queries informative.
pub fn random_inner_distribution(s: &mut Stream, g: &PromiseFunction) -> Distribution {
    let zeros = g.preimage(GVal::Zero);
    let ones = g.preimage(GVal::One);
    let mut picked: BTreeSet<Bitstring> = BTreeSet::new();
    picked.insert(zeros[s.below(zeros.len() as u64) as usize]);
    picked.insert(ones[s.below(ones.len() as u64) as usize]);
    for x in zeros.iter().chain(ones.iter()) {
        if s.below(4) != 0 {
            picked.insert(*x);
        }
    }
    weighted_over(s, picked.into_iter().collect())
}

/// Random distribution with the given support and small random weights.
pub fn weighted_over(s: &mut Stream, support: Vec<Bitstring>) -> Distribution {
    let weights: Vec<u64> = support.iter().map(|_| 1 + s.below(8)).collect();
    let total: u64 = weights.iter().sum();
    Distribution::new(
        support
            .into_iter()
            .zip(weights)
            .map(|(x, w)| (x, Rat::new(w.into(), total.into())))
            .collect(),
    )
    .expect("positive weights normalised")
}

/// Random outer distribution over a random nonempty support.
pub fn random_outer_distribution(s: &mut Stream, n: usize) -> Distribution {
    let all: Vec<Bitstring> = Bitstring::all(n).collect();
    let mut picked: BTreeSet<Bitstring> = BTreeSet::new();
    picked.insert(all[s.below(all.len() as u64) as usize]);
    for z in &all {
        if s.coin() {
            picked.insert(*z);
        }
    }
    weighted_over(s, picked.into_iter().collect())
}

/// Random full-support outer distribution; full support keeps every
/// conditional value possible.
pub fn random_full_support_distribution(s: &mut Stream, n: usize) -> Distribution {
    weighted_over(s, Bitstring::all(n).collect())
}

/// Random relation over a two- or three-letter alphabet; empty answer
/// sets are allowed.
pub fn random_relation(s: &mut Stream, n: usize) -> Relation {
    let size = 2 + s.below(2) as usize;
    let answers: Vec<String> = ["a", "b", "c"][..size]
        .iter()
        .map(|a| a.to_string())
        .collect();
    let accepted = (0..1usize << n)
        .map(|_| {
            answers
                .iter()
                .filter(|_| s.coin())
                .cloned()
                .collect::<BTreeSet<String>>()
        })
        .collect();
    Relation::new(n, answers, accepted).expect("alphabet consistent")
}

/// Random protocol tree. Queries mostly pick fresh bits but sometimes
/// repeat one already on the path, which exercises dead branches.
pub fn random_xtree(s: &mut Stream, f: &Relation, n: usize, m: usize, depth: usize) -> XTree {
    let mut nodes = Vec::new();
    let mut on_path: Vec<(usize, usize)> = Vec::new();
    let root = grow(s, f, n, m, depth, &mut nodes, &mut on_path);
    XTree::new(nodes, root).expect("generated tree is well-formed")
}

fn grow(
    s: &mut Stream,
    f: &Relation,
    n: usize,
    m: usize,
    budget: usize,
    nodes: &mut Vec<XNode>,
    on_path: &mut Vec<(usize, usize)>,
) -> NodeId {
    let make_leaf = budget == 0 || s.below(4) == 0;
    if make_leaf {
        let answers = f.alphabet();
        let answer = answers[s.below(answers.len() as u64) as usize].clone();
        nodes.push(XNode::Leaf { answer });
        return nodes.len() - 1;
    }
    let (block, bit) = if !on_path.is_empty() && s.below(8) == 0 {
        // Exact repeat: one branch is dead.
        on_path[s.below(on_path.len() as u64) as usize]
    } else if !on_path.is_empty() && s.below(2) == 0 {
        // Same block again with a fresh bit: the arrival memory may
        // already hold its value, exercising the non-trivial cases.
        let (block, _) = on_path[s.below(on_path.len() as u64) as usize];
        (block, s.below(m as u64) as usize)
    } else {
        (s.below(n as u64) as usize, s.below(m as u64) as usize)
    };
    on_path.push((block, bit));
    let child0 = grow(s, f, n, m, budget - 1, nodes, on_path);
    let child1 = grow(s, f, n, m, budget - 1, nodes, on_path);
    on_path.pop();
    nodes.push(XNode::Query {
        block,
        bit,
        children: [child0, child1],
    });
    nodes.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = random_instance(9, 4);
        let b = random_instance(9, 4);
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.f, b.f);
        assert_eq!(a.g, b.g);
        assert_eq!(a.mu_g, b.mu_g);
        let c = random_instance(9, 5);
        assert!(c.tree != a.tree || c.f != a.f || c.g != a.g || c.mu_g != a.mu_g);
    }

    #[test]
    fn generated_instances_are_well_formed() {
        for index in 0..50 {
            let inst = random_instance(3, index);
            inst.tree.check_dimensions(inst.n, inst.m).unwrap();
            crate::problems::check_inner_distribution(&inst.mu_g, &inst.g).unwrap();
            let mut s = Stream::new(&[1, index]);
            let nu = random_outer_distribution(&mut s, inst.n);
            assert_eq!(nu.input_len(), inst.n);
            let full = random_full_support_distribution(&mut s, inst.n);
            assert_eq!(full.support().len(), 1 << inst.n);
        }
    }
}
