//! File formats.
//!
//! Instance files are JSON:
//!
//! * promise function — a bare array of `2^m` entries from
//!   `"0" | "1" | "*"` in lexicographic input order;
//! * relation — `{"answers": [...], "accepted": {"<bits>": [...], ...}}`
//!   (a bare `accepted` map is also accepted on input, with the alphabet
//!   taken as the union of the labels);
//! * distribution — an array of `{"bits", "num", "den"}` records with
//!   the numerator and denominator as decimal-integer strings;
//! * trees — `{"kind", "root", "nodes": [...]}` with one record per
//!   node and children given as node ids. Probabilities appear as
//!   `"num/den"` strings, as they do in reports and ledgers.
//!
//! CSV output holds decimal approximations (12 significant digits) and
//! flags each such column as approximate in the header.

use crate::problems::{Bitstring, Distribution, GVal, PromiseFunction, Relation};
use crate::rational::{format_ratio, parse_ratio, Rat};
use crate::transform::{NodeTranslation, TranslationCase};
use crate::trees::{PNode, PolarisedTree, XNode, XTree};
use crate::{Error, Result};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn parse_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

// ---------------------------------------------------------------- promise

pub fn promise_to_json(g: &PromiseFunction) -> String {
    let table: Vec<&str> = g.table().iter().map(|v| v.symbol()).collect();
    serde_json::to_string_pretty(&table).expect("string array serializes")
}

pub fn promise_from_json(text: &str) -> Result<PromiseFunction> {
    let table: Vec<String> = serde_json::from_str(text).map_err(parse_err)?;
    let m = table.len().trailing_zeros() as usize;
    if table.len() < 2 || table.len() != 1 << m {
        return Err(Error::Parse(format!(
            "promise table has {} entries, not a power of two",
            table.len()
        )));
    }
    let values = table
        .iter()
        .map(|s| match s.as_str() {
            "0" => Ok(GVal::Zero),
            "1" => Ok(GVal::One),
            "*" => Ok(GVal::Star),
            other => Err(Error::Parse(format!("bad promise entry {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    PromiseFunction::new(m, values)
}

// --------------------------------------------------------------- relation

#[derive(Serialize, Deserialize)]
struct RelationSchema {
    answers: Vec<String>,
    accepted: BTreeMap<String, Vec<String>>,
}

pub fn relation_to_json(f: &Relation) -> String {
    let accepted: BTreeMap<String, Vec<String>> = Bitstring::all(f.input_len())
        .map(|z| {
            (
                z.to_string(),
                f.accepted_set(&z).iter().cloned().collect(),
            )
        })
        .collect();
    serde_json::to_string_pretty(&RelationSchema {
        answers: f.alphabet().to_vec(),
        accepted,
    })
    .expect("relation serializes")
}

pub fn relation_from_json(text: &str) -> Result<Relation> {
    let (answers, accepted) = match serde_json::from_str::<RelationSchema>(text) {
        Ok(schema) => (Some(schema.answers), schema.accepted),
        Err(_) => {
            let bare: BTreeMap<String, Vec<String>> =
                serde_json::from_str(text).map_err(parse_err)?;
            (None, bare)
        }
    };
    let n = accepted
        .keys()
        .next()
        .map(|k| k.len())
        .ok_or_else(|| Error::Parse("relation with no entries".to_string()))?;
    let answers = answers.unwrap_or_else(|| {
        let mut all: Vec<String> = accepted.values().flatten().cloned().collect();
        all.sort();
        all.dedup();
        all
    });
    let mut table = vec![std::collections::BTreeSet::new(); 1 << n];
    for (key, labels) in &accepted {
        let z = Bitstring::parse(key)?;
        if z.len() != n {
            return Err(Error::Parse(format!("mixed key lengths in relation ({key})")));
        }
        table[z.value() as usize] = labels.iter().cloned().collect();
    }
    Relation::new(n, answers, table)
}

// ----------------------------------------------------------- distribution

#[derive(Serialize, Deserialize)]
struct WeightRecord {
    bits: String,
    num: String,
    den: String,
}

pub fn distribution_to_json(d: &Distribution) -> String {
    let records: Vec<WeightRecord> = d
        .support()
        .iter()
        .map(|(x, w)| WeightRecord {
            bits: x.to_string(),
            num: w.numer().to_string(),
            den: w.denom().to_string(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("distribution serializes")
}

pub fn distribution_from_json(text: &str) -> Result<Distribution> {
    let records: Vec<WeightRecord> = serde_json::from_str(text).map_err(parse_err)?;
    let support = records
        .iter()
        .map(|r| {
            let num: BigInt = r
                .num
                .parse()
                .map_err(|_| Error::Parse(format!("bad numerator {:?}", r.num)))?;
            let den: BigInt = r
                .den
                .parse()
                .map_err(|_| Error::Parse(format!("bad denominator {:?}", r.den)))?;
            if den == BigInt::from(0) {
                return Err(Error::Parse(format!("zero denominator for {}", r.bits)));
            }
            Ok((Bitstring::parse(&r.bits)?, Rat::new(num, den)))
        })
        .collect::<Result<Vec<_>>>()?;
    Distribution::new(support)
}

// ------------------------------------------------------------------ trees

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum XNodeRecord {
    Leaf {
        answer: String,
    },
    Query {
        block: usize,
        bit: usize,
        children: [usize; 2],
    },
}

#[derive(Serialize, Deserialize)]
struct XTreeSchema {
    kind: String,
    root: usize,
    nodes: Vec<XNodeRecord>,
}

pub fn xtree_to_json(tree: &XTree) -> String {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| match n {
            XNode::Leaf { answer } => XNodeRecord::Leaf {
                answer: answer.clone(),
            },
            XNode::Query {
                block,
                bit,
                children,
            } => XNodeRecord::Query {
                block: *block,
                bit: *bit,
                children: *children,
            },
        })
        .collect();
    serde_json::to_string_pretty(&XTreeSchema {
        kind: "xtree".to_string(),
        root: tree.root(),
        nodes,
    })
    .expect("tree serializes")
}

pub fn xtree_from_json(text: &str) -> Result<XTree> {
    let schema: XTreeSchema = serde_json::from_str(text).map_err(parse_err)?;
    if schema.kind != "xtree" {
        return Err(Error::Parse(format!(
            "expected a deterministic tree file, found kind {:?}",
            schema.kind
        )));
    }
    let nodes = schema
        .nodes
        .into_iter()
        .map(|n| match n {
            XNodeRecord::Leaf { answer } => XNode::Leaf { answer },
            XNodeRecord::Query {
                block,
                bit,
                children,
            } => XNode::Query {
                block,
                bit,
                children,
            },
        })
        .collect();
    XTree::new(nodes, schema.root)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PNodeRecord {
    Leaf {
        answer: String,
    },
    Fork {
        alpha: String,
        children: [usize; 2],
    },
    #[serde(rename = "znode")]
    ZNode {
        index: usize,
        alpha: String,
        beta: String,
        children: [usize; 2],
    },
    #[serde(rename = "zmixer")]
    ZMixer {
        index: usize,
        alpha: String,
        beta: String,
        children: [usize; 2],
    },
}

#[derive(Serialize, Deserialize)]
struct PTreeSchema {
    kind: String,
    root: usize,
    nodes: Vec<PNodeRecord>,
}

pub fn ptree_to_json(tree: &PolarisedTree) -> String {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| match n {
            PNode::Leaf { answer } => PNodeRecord::Leaf {
                answer: answer.clone(),
            },
            PNode::Fork { alpha, children } => PNodeRecord::Fork {
                alpha: format_ratio(alpha),
                children: *children,
            },
            PNode::ZNode {
                index,
                alpha,
                beta,
                children,
            } => PNodeRecord::ZNode {
                index: *index,
                alpha: format_ratio(alpha),
                beta: format_ratio(beta),
                children: *children,
            },
            PNode::ZMixer {
                index,
                alpha,
                beta,
                children,
            } => PNodeRecord::ZMixer {
                index: *index,
                alpha: format_ratio(alpha),
                beta: format_ratio(beta),
                children: *children,
            },
        })
        .collect();
    serde_json::to_string_pretty(&PTreeSchema {
        kind: "ztree".to_string(),
        root: tree.root(),
        nodes,
    })
    .expect("tree serializes")
}

pub fn ptree_from_json(text: &str) -> Result<PolarisedTree> {
    let schema: PTreeSchema = serde_json::from_str(text).map_err(parse_err)?;
    if schema.kind != "ztree" {
        return Err(Error::Parse(format!(
            "expected a polarised tree file, found kind {:?}",
            schema.kind
        )));
    }
    let nodes = schema
        .nodes
        .into_iter()
        .map(|n| {
            Ok(match n {
                PNodeRecord::Leaf { answer } => PNode::Leaf { answer },
                PNodeRecord::Fork { alpha, children } => PNode::Fork {
                    alpha: parse_ratio(&alpha)?,
                    children,
                },
                PNodeRecord::ZNode {
                    index,
                    alpha,
                    beta,
                    children,
                } => PNode::ZNode {
                    index,
                    alpha: parse_ratio(&alpha)?,
                    beta: parse_ratio(&beta)?,
                    children,
                },
                PNodeRecord::ZMixer {
                    index,
                    alpha,
                    beta,
                    children,
                } => PNode::ZMixer {
                    index,
                    alpha: parse_ratio(&alpha)?,
                    beta: parse_ratio(&beta)?,
                    children,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PolarisedTree::new(nodes, schema.root)
}

// ------------------------------------------------------------ block trees

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BlockTreeRecord {
    Leaf {
        label: u8,
    },
    Query {
        bit: usize,
        children: [Box<BlockTreeRecord>; 2],
    },
}

fn block_tree_record(tree: &crate::restrict::BlockTree) -> BlockTreeRecord {
    match tree {
        crate::restrict::BlockTree::Leaf(v) => BlockTreeRecord::Leaf { label: *v as u8 },
        crate::restrict::BlockTree::Query { bit, children } => BlockTreeRecord::Query {
            bit: *bit,
            children: [
                Box::new(block_tree_record(&children[0])),
                Box::new(block_tree_record(&children[1])),
            ],
        },
    }
}

fn block_tree_from_record(record: &BlockTreeRecord) -> Result<crate::restrict::BlockTree> {
    Ok(match record {
        BlockTreeRecord::Leaf { label } => match label {
            0 => crate::restrict::BlockTree::Leaf(false),
            1 => crate::restrict::BlockTree::Leaf(true),
            other => return Err(Error::Parse(format!("bad leaf label {other}"))),
        },
        BlockTreeRecord::Query { bit, children } => crate::restrict::BlockTree::query(
            *bit,
            block_tree_from_record(&children[0])?,
            block_tree_from_record(&children[1])?,
        ),
    })
}

pub fn block_tree_to_json(tree: &crate::restrict::BlockTree) -> String {
    serde_json::to_string_pretty(&block_tree_record(tree)).expect("block tree serializes")
}

pub fn block_tree_from_json(text: &str) -> Result<crate::restrict::BlockTree> {
    let record: BlockTreeRecord = serde_json::from_str(text).map_err(parse_err)?;
    block_tree_from_record(&record)
}

// ---------------------------------------------------------------- reports

#[derive(Serialize, Deserialize)]
struct ReportSchema {
    error: String,
    expected_queries: String,
    per_block: Vec<String>,
    reach: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

pub fn report_to_json(report: &crate::eval::ProtocolReport, note: Option<&str>) -> String {
    serde_json::to_string_pretty(&ReportSchema {
        error: format_ratio(&report.error),
        expected_queries: format_ratio(&report.expected_queries),
        per_block: report.per_block.iter().map(format_ratio).collect(),
        reach: report.reach.iter().map(format_ratio).collect(),
        note: note.map(|s| s.to_string()),
    })
    .expect("report serializes")
}

/// CSV form of a report: one row per field, exact value plus a decimal
/// approximation column.
pub fn report_to_csv(report: &crate::eval::ProtocolReport) -> String {
    let mut rows = vec![csv_row(&[
        "field".into(),
        "value".into(),
        "value_approx".into(),
    ])];
    let mut push = |name: String, value: &Rat| {
        rows.push(csv_row(&[
            name,
            format_ratio(value),
            crate::rational::approx_decimal(value),
        ]));
    };
    push("error".into(), &report.error);
    push("expected_queries".into(), &report.expected_queries);
    for (i, v) in report.per_block.iter().enumerate() {
        push(format!("per_block_{i}"), v);
    }
    for (i, v) in report.reach.iter().enumerate() {
        push(format!("reach_{i}"), v);
    }
    rows.join("\n") + "\n"
}

pub fn report_from_json(text: &str) -> Result<crate::eval::ProtocolReport> {
    let schema: ReportSchema = serde_json::from_str(text).map_err(parse_err)?;
    Ok(crate::eval::ProtocolReport {
        error: parse_ratio(&schema.error)?,
        expected_queries: parse_ratio(&schema.expected_queries)?,
        per_block: schema
            .per_block
            .iter()
            .map(|s| parse_ratio(s))
            .collect::<Result<_>>()?,
        reach: schema
            .reach
            .iter()
            .map(|s| parse_ratio(s))
            .collect::<Result<_>>()?,
    })
}

#[derive(Serialize)]
struct LedgerRecord {
    source: usize,
    image: usize,
    block: usize,
    case: String,
    flip: bool,
    a0: u8,
    p_in: String,
    p_low: String,
    p_high: String,
    tau_low: String,
    tau_high: String,
    q_in: String,
    p_star: String,
    alpha0: String,
    beta0: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    internals: BTreeMap<&'static str, String>,
}

pub fn ledger_to_json(ledger: &[NodeTranslation]) -> String {
    let records: Vec<LedgerRecord> = ledger
        .iter()
        .map(|t| {
            let (case, internals) = match &t.case {
                TranslationCase::Degenerate => ("degenerate", BTreeMap::new()),
                TranslationCase::Unreachable => ("unreachable", BTreeMap::new()),
                TranslationCase::Mixer { gamma1 } => (
                    "mixer",
                    BTreeMap::from([("gamma1", format_ratio(gamma1))]),
                ),
                TranslationCase::Query {
                    alpha_prime,
                    gamma2,
                    gamma3,
                } => (
                    "query",
                    BTreeMap::from([
                        ("alpha_prime", format_ratio(alpha_prime)),
                        ("gamma2", format_ratio(gamma2)),
                        ("gamma3", format_ratio(gamma3)),
                    ]),
                ),
            };
            LedgerRecord {
                source: t.source,
                image: t.image,
                block: t.block,
                case: case.to_string(),
                flip: t.flip,
                a0: t.a0 as u8,
                p_in: format_ratio(&t.p_in),
                p_low: format_ratio(&t.p_lt),
                p_high: format_ratio(&t.p_gt),
                tau_low: format_ratio(&t.tau_lt),
                tau_high: format_ratio(&t.tau_gt),
                q_in: format_ratio(&t.q_in),
                p_star: format_ratio(&t.p_star),
                alpha0: format_ratio(&t.alpha0),
                beta0: format_ratio(&t.beta0),
                internals,
            }
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("ledger serializes")
}

#[derive(Serialize)]
struct CheckRecord<'a> {
    check: &'a str,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a str>,
}

pub fn checks_to_json(checks: &[crate::eval::CheckOutcome]) -> String {
    let records: Vec<CheckRecord> = checks
        .iter()
        .map(|c| CheckRecord {
            check: &c.name,
            pass: c.pass,
            witness: c.witness.as_deref(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("checks serialize")
}

pub fn certificate_to_json(cert: &crate::hardness::HardnessCertificate) -> String {
    #[derive(Serialize)]
    struct CertSchema {
        mu: serde_json::Value,
        family_size: usize,
        score: String,
    }
    serde_json::to_string_pretty(&CertSchema {
        mu: serde_json::from_str(&distribution_to_json(&cert.mu)).expect("nested json"),
        family_size: cert.family_size,
        score: format_ratio(&cert.score),
    })
    .expect("certificate serializes")
}

// ------------------------------------------------------------------- csv

/// Joins one CSV row, quoting nothing: all emitted fields are plain.
pub fn csv_row(fields: &[String]) -> String {
    fields.join(",")
}

pub fn paths_to_json(tree: &PolarisedTree, z: &Bitstring) -> Result<String> {
    #[derive(Serialize)]
    struct StepRecord {
        node: usize,
        branch: u8,
        queried: bool,
    }
    #[derive(Serialize)]
    struct PathRecord {
        leaf: String,
        weight: String,
        queries: usize,
        steps: Vec<StepRecord>,
    }
    let paths = crate::trees::enumerate_paths(tree, z)?;
    let records: Vec<PathRecord> = paths
        .iter()
        .map(|p| PathRecord {
            leaf: match tree.node(p.leaf) {
                PNode::Leaf { answer } => answer.clone(),
                _ => String::new(),
            },
            weight: format_ratio(&p.weight),
            queries: p.query_count(),
            steps: p
                .steps
                .iter()
                .map(|s| StepRecord {
                    node: s.node,
                    branch: s.branch as u8,
                    queried: s.queried,
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&records).map_err(parse_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{half, rat};

    #[test]
    fn promise_round_trip() {
        let g = PromiseFunction::new(
            2,
            vec![GVal::Zero, GVal::Star, GVal::One, GVal::One],
        )
        .unwrap();
        let text = promise_to_json(&g);
        assert_eq!(promise_from_json(&text).unwrap(), g);
        assert!(promise_from_json("[\"0\",\"2\"]").is_err());
        assert!(promise_from_json("[\"0\"]").is_err());
        assert!(promise_from_json("[\"0\",\"1\",\"1\"]").is_err());
    }

    #[test]
    fn relation_round_trip_and_bare_map() {
        let f = Relation::new(
            1,
            vec!["a".into(), "b".into()],
            vec![
                std::collections::BTreeSet::from(["a".to_string()]),
                std::collections::BTreeSet::new(),
            ],
        )
        .unwrap();
        let text = relation_to_json(&f);
        assert_eq!(relation_from_json(&text).unwrap(), f);

        let bare = r#"{"0": ["x"], "1": ["x", "y"]}"#;
        let parsed = relation_from_json(bare).unwrap();
        assert_eq!(parsed.alphabet(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn distribution_round_trip() {
        let d = Distribution::new(vec![
            (Bitstring::parse("00").unwrap(), rat(1, 3)),
            (Bitstring::parse("11").unwrap(), rat(2, 3)),
        ])
        .unwrap();
        let text = distribution_to_json(&d);
        assert_eq!(distribution_from_json(&text).unwrap(), d);
    }

    #[test]
    fn block_tree_and_report_round_trip() {
        let tree = crate::restrict::BlockTree::query(
            1,
            crate::restrict::BlockTree::leaf(false),
            crate::restrict::BlockTree::query(
                0,
                crate::restrict::BlockTree::leaf(true),
                crate::restrict::BlockTree::leaf(false),
            ),
        );
        assert_eq!(
            block_tree_from_json(&block_tree_to_json(&tree)).unwrap(),
            tree
        );

        let report = crate::eval::ProtocolReport {
            error: rat(1, 3),
            expected_queries: rat(5, 4),
            per_block: vec![rat(1, 4), rat(1, 1)],
            reach: vec![rat(1, 1), half()],
        };
        assert_eq!(
            report_from_json(&report_to_json(&report, Some("x"))).unwrap(),
            report
        );
    }

    #[test]
    fn tree_round_trips() {
        let xtree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 1,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        assert_eq!(xtree_from_json(&xtree_to_json(&xtree)).unwrap(), xtree);

        let ptree = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() },
                PNode::Leaf { answer: "1".into() },
                PNode::ZNode {
                    index: 0,
                    alpha: half(),
                    beta: rat(1, 3),
                    children: [0, 1],
                },
                PNode::Fork {
                    alpha: rat(2, 7),
                    children: [2, 1],
                },
                PNode::ZMixer {
                    index: 0,
                    alpha: rat(1, 5),
                    beta: rat(4, 5),
                    children: [3, 2],
                },
            ],
            4,
        )
        .unwrap();
        assert_eq!(ptree_from_json(&ptree_to_json(&ptree)).unwrap(), ptree);

        // Kind mismatch is a parse error.
        assert!(ptree_from_json(&xtree_to_json(&xtree)).is_err());
    }
}
