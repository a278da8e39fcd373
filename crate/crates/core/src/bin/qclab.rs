//! Command-line front door: parse instance files, dispatch operations,
//! run verification suites and emit reports.
//!
//! Exit codes: 0 on success, 1 when an invariant check fails, 2 on
//! usage or parse errors.

use clap::{Parser, Subcommand};
use qclab::eval::correspondence::{all_pass, full_verification};
use qclab::gap_majority::{
    advantage_bound, exact_probe_advantage, monte_carlo_error, InputFamily,
};
use qclab::gen;
use qclab::problems::{balanced_mixture, lift_distribution, Bitstring, Distribution};
use qclab::rational::{approx_decimal, format_ratio};
use qclab::rng::Stream;
use qclab::transform::transform_protocol;
use qclab::trees::XNode;
use qclab::{io, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qclab",
    about = "Exact laboratory for query protocols over composed problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate a deterministic tree for the composed problem into a
    /// polarised tree, writing the tree and its translation ledger.
    Transform {
        /// Deterministic tree JSON.
        #[arg(long)]
        input: PathBuf,
        /// Promise function JSON.
        #[arg(long)]
        g: PathBuf,
        /// Inner distribution JSON.
        #[arg(long = "mu-g")]
        mu_g: PathBuf,
        /// Outer input length; defaults to the largest block read.
        #[arg(long)]
        n: Option<usize>,
        /// Output tree path; the ledger lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate and then check every guarantee of the translation,
    /// writing machine-readable pass/fail lines.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long = "mu-g")]
        mu_g: PathBuf,
        /// Relation JSON (needed for the error-equality check).
        #[arg(long)]
        f: PathBuf,
        /// Polarised tree to check in place of the freshly translated
        /// one; must have the same shape.
        #[arg(long)]
        prime: Option<PathBuf>,
        /// Extra outer distributions to test, JSON files.
        #[arg(long)]
        nu: Vec<PathBuf>,
        /// Seed for the three generated outer distributions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact evaluation report of a tree file against a distribution.
    Stats {
        /// Tree JSON, deterministic or polarised (detected by kind).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: Option<PathBuf>,
        #[arg(long = "mu-g")]
        mu_g: Option<PathBuf>,
        /// Outer distribution JSON; uniform when omitted.
        #[arg(long)]
        nu: Option<PathBuf>,
        /// Emit CSV (decimal approximations) instead of exact JSON.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restrict a deterministic tree to a single block at a fixed input.
    Restrict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long = "mu-g")]
        mu_g: PathBuf,
        /// Block index to keep.
        #[arg(long)]
        block: usize,
        /// Full composed input whose bits fill the other blocks.
        #[arg(long)]
        x: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restriction/trimming survey: per-(block, input) accuracy and
    /// cost rows under the balanced inner distribution, CSV.
    Trim {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long = "mu-g")]
        mu_g: PathBuf,
        /// Sampled inputs per block.
        #[arg(long, default_value_t = 20)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search balanced distributions for a hardness certificate.
    Hardest {
        #[arg(long)]
        g: PathBuf,
        /// Grid resolution: weights are multiples of 1/grid per side.
        #[arg(long, default_value_t = 16)]
        grid: u32,
        /// Depth cap for the enumerated tree family.
        #[arg(long = "max-depth")]
        max_depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gap-threshold majority experiment: exact advantage row plus a
    /// seeded Monte Carlo row, CSV.
    Tight {
        /// Block length (and block count).
        #[arg(long)]
        n: u64,
        /// Probes per block, odd.
        #[arg(long)]
        t: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// boundary-zero | boundary-one | mixed-boundary | all-zeros | all-ones
        #[arg(long, default_value = "mixed-boundary")]
        family: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the computational paths of a polarised tree on one input.
    Paths {
        #[arg(long)]
        input: PathBuf,
        /// Outer input bits.
        #[arg(long)]
        z: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> qclab::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, text: &str) -> qclab::Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> qclab::Result<()> {
    match out {
        Some(path) => write_out(path, text),
        None => {
            // Tolerate closed pipes (e.g. `qclab ... | head`).
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

/// Outer length: explicit, or one past the largest block read.
fn infer_n(tree: &qclab::trees::XTree, explicit: Option<usize>) -> usize {
    explicit.unwrap_or_else(|| {
        tree.nodes()
            .iter()
            .filter_map(|node| match node {
                XNode::Query { block, .. } => Some(*block + 1),
                XNode::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(1)
    })
}

fn run(cli: Cli) -> qclab::Result<ExitCode> {
    match cli.command {
        Command::Transform {
            input,
            g,
            mu_g,
            n,
            out,
        } => {
            let tree = io::xtree_from_json(&read(&input)?)?;
            let g = io::promise_from_json(&read(&g)?)?;
            let mu_g = io::distribution_from_json(&read(&mu_g)?)?;
            let n = infer_n(&tree, n);
            let result = transform_protocol(&tree, n, &g, &mu_g)?;
            write_out(&out, &io::ptree_to_json(&result.tree))?;
            let ledger_path = out.with_extension("ledger.json");
            write_out(&ledger_path, &io::ledger_to_json(&result.ledger))?;
            eprintln!(
                "translated {} nodes; ledger at {}",
                result.tree.len(),
                ledger_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            input,
            g,
            mu_g,
            f,
            prime,
            nu,
            seed,
            out,
        } => {
            let tree = io::xtree_from_json(&read(&input)?)?;
            let g = io::promise_from_json(&read(&g)?)?;
            let mu_g = io::distribution_from_json(&read(&mu_g)?)?;
            let f = io::relation_from_json(&read(&f)?)?;
            warn_empty_answers(&f);
            let n = f.input_len();
            tree.check_dimensions(n, g.input_len())?;
            let mut extra_nu = Vec::new();
            for path in &nu {
                extra_nu.push(io::distribution_from_json(&read(path)?)?);
            }
            let mut extra_mu_f = Vec::new();
            for i in 0..3 {
                let mut s = Stream::new(&[seed, i, 0xa11]);
                extra_nu.push(gen::random_outer_distribution(&mut s, n));
                extra_mu_f.push(gen::random_full_support_distribution(&mut s, n));
            }
            let mut output = transform_protocol(&tree, n, &g, &mu_g)?;
            if let Some(path) = prime {
                // Audit a supplied tree against the reference ledger.
                let supplied = io::ptree_from_json(&read(&path)?)?;
                if supplied.len() != output.tree.len() {
                    return Err(Error::Parse(format!(
                        "supplied tree has {} nodes, expected {}",
                        supplied.len(),
                        output.tree.len()
                    )));
                }
                output.tree = supplied;
            }
            let checks = full_verification(&tree, &f, &g, &mu_g, &output, extra_nu, extra_mu_f)?;
            let ok = all_pass(&checks);
            emit(out.as_deref(), &io::checks_to_json(&checks))?;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Stats {
            input,
            f,
            g,
            mu_g,
            nu,
            csv,
            out,
        } => {
            let text = read(&input)?;
            let f = io::relation_from_json(&read(&f)?)?;
            warn_empty_answers(&f);
            let n = f.input_len();
            let nu = match nu {
                Some(path) => io::distribution_from_json(&read(&path)?)?,
                None => Distribution::uniform(n),
            };
            let kind: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let report = match kind.get("kind").and_then(|k| k.as_str()) {
                Some("xtree") => {
                    let tree = io::xtree_from_json(&text)?;
                    let g_path = g.ok_or_else(|| {
                        Error::Parse("--g is required for deterministic trees".to_string())
                    })?;
                    let mu_path = mu_g.ok_or_else(|| {
                        Error::Parse("--mu-g is required for deterministic trees".to_string())
                    })?;
                    let g = io::promise_from_json(&read(&g_path)?)?;
                    let mu_g = io::distribution_from_json(&read(&mu_path)?)?;
                    let lifted = lift_distribution(&nu, &mu_g, &g)?;
                    qclab::eval::evaluate_x_protocol(&tree, &f, &g, &lifted)?
                }
                Some("ztree") => {
                    let tree = io::ptree_from_json(&text)?;
                    qclab::eval::evaluate_polarised(&tree, &f, &nu)?
                }
                other => {
                    return Err(Error::Parse(format!(
                        "unknown tree kind {other:?} in {}",
                        input.display()
                    )))
                }
            };
            let text = if csv {
                io::report_to_csv(&report)
            } else {
                io::report_to_json(&report, None)
            };
            emit(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Restrict {
            input,
            g,
            mu_g,
            block,
            x,
            out,
        } => {
            let tree = io::xtree_from_json(&read(&input)?)?;
            let g = io::promise_from_json(&read(&g)?)?;
            let mu_g = io::distribution_from_json(&read(&mu_g)?)?;
            let x = Bitstring::parse(&x)?;
            let m = g.input_len();
            if x.len() % m != 0 {
                return Err(Error::Parse(format!(
                    "input length {} is not a multiple of the block size {m}",
                    x.len()
                )));
            }
            let n = x.len() / m;
            let stats = qclab::eval::x_leaf_stats(&tree, &g, &mu_g, &Distribution::uniform(n))?;
            let restricted = qclab::restrict::restrict_protocol(&tree, n, m, block, &x, &stats)?;
            write_out(&out, &io::block_tree_to_json(&restricted))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Trim {
            input,
            g,
            mu_g,
            samples,
            seed,
            out,
        } => {
            let tree = io::xtree_from_json(&read(&input)?)?;
            let g = io::promise_from_json(&read(&g)?)?;
            let mu_g_raw = io::distribution_from_json(&read(&mu_g)?)?;
            let mu_g = balanced_mixture(&mu_g_raw, &g)?;
            if mu_g != mu_g_raw {
                eprintln!("note: inner distribution rebalanced for the trimming bounds");
            }
            let m = g.input_len();
            let n = infer_n(&tree, None);
            tree.check_dimensions(n, m)?;
            let uniform = Distribution::uniform(n);
            let lifted = lift_distribution(&uniform, &mu_g, &g)?;
            let stats = qclab::eval::x_leaf_stats(&tree, &g, &mu_g, &uniform)?;
            let f_dummy = placeholder_relation(n);
            let mut rows = vec![io::csv_row(&[
                "block".into(),
                "x".into(),
                "delta_x".into(),
                "d_block_x".into(),
                "trim_accuracy".into(),
                "trim_cost".into(),
                "delta_x_approx".into(),
                "d_block_x_approx".into(),
                "trim_accuracy_approx".into(),
                "trim_cost_approx".into(),
            ])];
            let mut stream = Stream::new(&[seed, 0x7817]);
            for i0 in 0..n {
                for _ in 0..samples {
                    let pick = stream.below(lifted.support().len() as u64) as usize;
                    let x = lifted.support()[pick].0;
                    let delta_x =
                        qclab::restrict::delta_conditional(&tree, &stats, n, m, i0, &x, &lifted)?;
                    let d_ix =
                        qclab::eval::x_block_cost_conditional(&tree, &f_dummy, &g, &lifted, i0, &x)?;
                    let restricted =
                        qclab::restrict::restrict_protocol(&tree, n, m, i0, &x, &stats)?;
                    let trimmed = qclab::restrict::trim_protocol(&restricted, &g, &mu_g);
                    let acc = trimmed.accuracy(&g, &mu_g);
                    let cost = trimmed.expected_queries(&mu_g);
                    rows.push(io::csv_row(&[
                        i0.to_string(),
                        x.to_string(),
                        format_ratio(&delta_x),
                        format_ratio(&d_ix),
                        format_ratio(&acc),
                        format_ratio(&cost),
                        approx_decimal(&delta_x),
                        approx_decimal(&d_ix),
                        approx_decimal(&acc),
                        approx_decimal(&cost),
                    ]));
                }
            }
            write_out(&out, &(rows.join("\n") + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Hardest {
            g,
            grid,
            max_depth,
            out,
        } => {
            let g = io::promise_from_json(&read(&g)?)?;
            let depth = max_depth.unwrap_or(g.input_len()).min(g.input_len());
            let family = qclab::hardness::enumerate_trees(g.input_len(), depth)?;
            let cert = qclab::hardness::search_hardest(&g, &family, grid)?;
            write_out(&out, &io::certificate_to_json(&cert))?;
            eprintln!(
                "family of {} trees; best score {}",
                cert.family_size,
                format_ratio(&cert.score)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Tight {
            n,
            t,
            trials,
            seed,
            family,
            out,
        } => {
            let family = InputFamily::parse(&family)?;
            let advantage = exact_probe_advantage(n, t)?;
            let bound = advantage_bound(n, t)?;
            let mc = monte_carlo_error(n, t, trials, seed, family)?;
            let rows = [
                io::csv_row(&[
                    "row".into(),
                    "n".into(),
                    "t".into(),
                    "trials".into(),
                    "seed".into(),
                    "family".into(),
                    "estimate_approx".into(),
                    "ci_low_approx".into(),
                    "ci_high_approx".into(),
                    "chernoff_bound_approx".into(),
                    "probes".into(),
                    "advantage".into(),
                    "bound".into(),
                ]),
                io::csv_row(&[
                    "exact".into(),
                    n.to_string(),
                    t.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format_ratio(&advantage),
                    format_ratio(&bound),
                ]),
                io::csv_row(&[
                    "monte_carlo".into(),
                    n.to_string(),
                    t.to_string(),
                    trials.to_string(),
                    seed.to_string(),
                    mc.family.name().into(),
                    format!("{:.11e}", mc.estimate),
                    format!("{:.11e}", mc.wilson_low),
                    format!("{:.11e}", mc.wilson_high),
                    format!("{:.11e}", mc.chernoff_bound),
                    mc.probes.to_string(),
                    String::new(),
                    String::new(),
                ]),
            ];
            write_out(&out, &(rows.join("\n") + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Paths { input, z, out } => {
            let tree = io::ptree_from_json(&read(&input)?)?;
            let z = Bitstring::parse(&z)?;
            emit(out.as_deref(), &io::paths_to_json(&tree, &z)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn warn_empty_answers(f: &qclab::problems::Relation) {
    let empty = f.empty_answer_inputs();
    if !empty.is_empty() {
        eprintln!(
            "note: {} input(s) accept no answer; anything returned there counts as an error",
            empty.len()
        );
    }
}

/// Minimal relation used where an operation needs dimensions only.
fn placeholder_relation(n: usize) -> qclab::problems::Relation {
    let accepted = (0..1usize << n)
        .map(|_| std::collections::BTreeSet::from(["a".to_string()]))
        .collect();
    qclab::problems::Relation::new(n, vec!["a".to_string()], accepted)
        .expect("placeholder relation is valid")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(e, Error::Parse(_) | Error::Io(_));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
