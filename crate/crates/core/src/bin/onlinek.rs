use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use onlinek::chain::{chain_combine_backward, chain_combine_forward, ConditionalFamily, DEFAULT_K_MAX};
use onlinek::factorize::{factorize_computable, product_mismatch};
use onlinek::game::{replay_transcript, run_game, GameConfig, GameTranscript, Move, Placement, Scripted, Strategy};
use onlinek::interval::IntervalRecord;
use onlinek::num::{parse_q, to_wire};
use onlinek::oracle::{
    best_response, solve_game, DiscreteGameSpec, GridBob, OracleAlice, OracleBob, DEFAULT_MAX_STATES,
};
use onlinek::semimeasure::{MassAssignment, OnlineMassAssignment};
use onlinek::strategies::omega::check_decoding;
use onlinek::strategies::{build_omega, build_omega_23, decode_f, Alice23, Alice34, OmegaParams};
use onlinek::stream::{random_online_stream, EnumerationStream, History, RandomStreamConfig};
use onlinek::upper::construction::random_history;
use onlinek::upper::{assemble_semimeasures, certify_conditions, certify_history, epsilon_search, SearchConfig};
use onlinek::{BitString, Error, OnlineConstraint, Result, Q};

#[derive(Parser)]
#[command(name = "onlinek", version, about = "Online semimeasure games, constructions and certificates")]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AliceKind {
    #[value(name = "alice_34")]
    Alice34,
    #[value(name = "alice_23")]
    Alice23,
    Silent,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum BobKind {
    Silent,
    Random,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    #[value(name = "3-4")]
    ThreeQuarters,
    Eps,
    K,
    #[value(name = "2-3")]
    TwoThirds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Forward,
    Backward,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play a two-bit game and print the transcript, or re-referee one.
    RunGame {
        #[arg(long, value_enum, default_value = "alice_34")]
        alice: AliceKind,
        #[arg(long, value_enum, default_value = "random")]
        bob: BobKind,
        /// Bob's moves as a stream file; one move per distinct step.
        #[arg(long)]
        bob_script: Option<PathBuf>,
        /// Alice's budget; defaults to 3/4 for alice_34, 2/3 for alice_23, else 1.
        #[arg(long)]
        budget: Option<String>,
        #[arg(long, default_value_t = 7)]
        max_steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid denominator for random and oracle players.
        #[arg(long, default_value_t = 4)]
        grid: u32,
        /// Re-referee this transcript instead of playing.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Build the diagonal sequence omega against a Bob stream.
    BuildOmega {
        #[arg(long, value_enum, default_value = "3-4")]
        variant: Variant,
        #[arg(long, default_value = "1/2")]
        epsilon: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        rounds: usize,
        /// Bob's stream (JSON lines); a random stream is used when absent.
        #[arg(long)]
        bob: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        precision_bits: u32,
    },
    /// Decode F from Bob's stream: one query, or every block of omega.
    DecodeF {
        #[arg(long, value_enum, default_value = "3-4")]
        variant: Variant,
        #[arg(long, default_value = "1/2")]
        epsilon: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        rounds: usize,
        #[arg(long)]
        bob: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Query `F(prefix, bit)` instead of checking all blocks.
        #[arg(long)]
        prefix: Option<String>,
        #[arg(long)]
        bit: Option<u8>,
    },
    /// Run the o/p construction on a random update history and certify it.
    VerifyUpperbound {
        #[arg(long)]
        epsilon: String,
        /// Dimension `2^n`.
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 40)]
        updates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        precision_bits: u32,
        #[arg(long, default_value_t = 50_000)]
        box_budget: usize,
    },
    /// Find the largest grid epsilon whose conditions certify.
    EpsilonSearch {
        #[arg(long, default_value = "1/2048")]
        grid_step: String,
        #[arg(long, default_value = "1/64")]
        max_epsilon: String,
        #[arg(long, default_value_t = 256)]
        precision_bits: u32,
        #[arg(long, default_value_t = 50_000)]
        box_budget: usize,
    },
    /// Split a semimeasure (stream file) into odd and even online factors.
    Factorize {
        input: PathBuf,
        #[arg(long)]
        depth: usize,
    },
    /// Chain-rule combinators.
    ChainCombine {
        #[arg(value_enum)]
        direction: Direction,
        /// Joint stream (forward) or marginal stream (backward).
        input: PathBuf,
        /// Conditional family (backward only).
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long, default_value = "even")]
        constraint: String,
        #[arg(long)]
        m: usize,
        /// Forward: the conditional index.
        #[arg(long, default_value_t = 0)]
        k: u64,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: u64,
    },
    /// Solve a discretized two-bit game by backward induction.
    SolveSmallGame {
        #[arg(long)]
        budget: String,
        /// Grid as `1/N`.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 3)]
        rounds: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_states: u128,
        /// Compute Bob's best response to this Alice instead.
        #[arg(long, value_enum)]
        best_response: Option<AliceKind>,
    },
    /// Check a stream file against an online constraint (or plain rules).
    Validate {
        input: PathBuf,
        /// `odd`, `even`, `i mod k` or `plain`.
        #[arg(long, default_value = "plain")]
        constraint: String,
        #[arg(long)]
        unit_root: bool,
    },
}

/// Output plus whether everything certified.
struct Outcome {
    text: String,
    ok: bool,
}

impl Outcome {
    fn json(v: &Value, ok: bool) -> Self {
        let mut text = serde_json::to_string_pretty(v).expect("json values serialize");
        text.push('\n');
        Outcome { text, ok }
    }
}

fn read_stream(path: &Path) -> Result<EnumerationStream> {
    EnumerationStream::read_jsonl(BufReader::new(File::open(path)?))
}

fn parse_constraint(s: &str) -> Result<OnlineConstraint> {
    s.parse()
}

fn params_for(variant: Variant, epsilon: &str, k: usize) -> Result<Option<OmegaParams>> {
    Ok(match variant {
        Variant::ThreeQuarters => Some(OmegaParams::three_quarters()),
        Variant::Eps => Some(OmegaParams::epsilon(parse_q(epsilon)?)?),
        Variant::K => Some(OmegaParams::kmod(k, parse_q(epsilon)?)?),
        Variant::TwoThirds => None,
    })
}

fn bob_stream(path: Option<&Path>, constraints: &[OnlineConstraint], seed: u64) -> Result<EnumerationStream> {
    match path {
        Some(p) => read_stream(p),
        None => {
            Ok(random_online_stream(&mut ChaCha8Rng::seed_from_u64(seed), constraints, &RandomStreamConfig::default()))
        }
    }
}

fn entries_json(m: &MassAssignment) -> Value {
    Value::Object(m.entries().map(|(k, v)| (k.to_wire(), json!(to_wire(v)))).collect())
}

fn online_json(a: &OnlineMassAssignment) -> Value {
    json!({"constraint": a.constraint().to_string(), "values": entries_json(a.base())})
}

/// Group a stream into moves, one per distinct step.
fn script_moves(s: &EnumerationStream) -> Vec<Move> {
    let mut out: Vec<(u64, Move)> = Vec::new();
    for u in s.updates() {
        if out.last().is_none_or(|(st, _)| *st != u.step) {
            out.push((u.step, Vec::new()));
        }
        out.last_mut().expect("pushed").1.push(Placement::new(u.assignment, u.node.clone(), u.value.clone()));
    }
    out.into_iter().map(|(_, m)| m).collect()
}

fn game_spec(grid: u32, budget: &Q, max_steps: u64) -> Result<DiscreteGameSpec> {
    let rounds = u32::try_from(max_steps.saturating_sub(1) / 2).unwrap_or(u32::MAX).max(1);
    DiscreteGameSpec::new(grid, budget.clone(), rounds)
}

fn transcript_matches(a: &GameTranscript, b: &GameTranscript) -> bool {
    a.moves == b.moves && a.verdicts == b.verdicts && a.fault == b.fault
}

#[allow(clippy::too_many_arguments)]
fn run_game_cmd(
    alice: AliceKind,
    bob: BobKind,
    bob_script: Option<PathBuf>,
    budget: Option<String>,
    max_steps: u64,
    seed: u64,
    grid: u32,
    replay: Option<PathBuf>,
) -> Result<Outcome> {
    if let Some(path) = replay {
        let t = GameTranscript::read_jsonl(BufReader::new(File::open(path)?))?;
        let again = replay_transcript(&t)?;
        let same = transcript_matches(&t, &again);
        let v = json!({
            "identical": same,
            "steps": again.moves.len(),
            "recorded_verdict": t.final_verdict(),
            "replayed_verdict": again.final_verdict(),
            "fault": again.fault,
        });
        return Ok(Outcome::json(&v, same));
    }
    let budget = match budget {
        Some(b) => parse_q(&b)?,
        None => match alice {
            AliceKind::Alice34 => onlinek::num::q(3, 4),
            AliceKind::Alice23 => onlinek::num::q(2, 3),
            _ => onlinek::num::qi(1),
        },
    };
    let needs_oracle = matches!(alice, AliceKind::Oracle) || matches!(bob, BobKind::Oracle);
    let solution = if needs_oracle { Some(Arc::new(solve_game(&game_spec(grid, &budget, max_steps)?)?)) } else { None };
    let mut a: Box<dyn Strategy> = match alice {
        AliceKind::Alice34 => Box::new(Alice34::new()),
        AliceKind::Alice23 => Box::new(Alice23::new()),
        AliceKind::Silent => Box::new(Scripted::silent()),
        AliceKind::Oracle => Box::new(OracleAlice::new(solution.clone().expect("solved above"))),
    };
    let mut b: Box<dyn Strategy> = match (&bob_script, bob) {
        (Some(p), _) => Box::new(Scripted::new(script_moves(&read_stream(p)?))),
        (None, BobKind::Silent) => Box::new(Scripted::silent()),
        (None, BobKind::Random) => Box::new(GridBob::new(grid, seed)),
        (None, BobKind::Oracle) => Box::new(OracleBob::new(solution.expect("solved above"))),
    };
    let t = run_game(a.as_mut(), b.as_mut(), GameConfig::two_bit(budget, max_steps))?;
    Ok(Outcome { text: t.to_jsonl_string(), ok: true })
}

fn build_omega_cmd(
    variant: Variant,
    epsilon: &str,
    k: usize,
    rounds: usize,
    bob: Option<PathBuf>,
    seed: u64,
    prec: u32,
) -> Result<Outcome> {
    match params_for(variant, epsilon, k)? {
        Some(params) => {
            let stream = bob_stream(bob.as_deref(), &params.constraints(), seed)?;
            let c = build_omega(&stream, &params, rounds)?;
            let checks = c.verify();
            let mut v = c.to_json(prec);
            v["checks"] = serde_json::to_value(&checks)?;
            Ok(Outcome::json(&v, checks.all_pass()))
        }
        None => {
            let stream = bob_stream(bob.as_deref(), &[OnlineConstraint::odd(), OnlineConstraint::even()], seed)?;
            let c = build_omega_23(&stream, rounds)?;
            let checks = c.verify();
            let mut v = c.to_json();
            v["checks"] = serde_json::to_value(&checks)?;
            Ok(Outcome::json(&v, checks.all_pass()))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn decode_f_cmd(
    variant: Variant,
    epsilon: &str,
    k: usize,
    rounds: usize,
    bob: Option<PathBuf>,
    seed: u64,
    prefix: Option<String>,
    bit: Option<u8>,
) -> Result<Outcome> {
    let params = params_for(variant, epsilon, k)?
        .ok_or_else(|| Error::BadParameter("decode-f needs the 3-4, eps or k variant".into()))?;
    let stream = bob_stream(bob.as_deref(), &params.constraints(), seed)?;
    if let Some(prefix) = prefix {
        let x: BitString = prefix.parse()?;
        let bit = match bit {
            Some(0) => false,
            Some(1) => true,
            _ => return Err(Error::BadParameter("--bit must be 0 or 1".into())),
        };
        let h = History::new(&stream, &params.constraints(), true)?;
        let f = decode_f(&h, &params, &x, bit)?;
        return Ok(Outcome::json(&json!({"prefix": x.to_wire(), "bit": bit as u8, "f": f as u8}), true));
    }
    let c = build_omega(&stream, &params, rounds)?;
    let (ok, detail) = match check_decoding(&c) {
        Ok(n) => (true, json!(n)),
        Err(e) => (false, json!(e.to_string())),
    };
    let v = json!({
        "variant": params.name(),
        "omega": c.omega.to_wire(),
        "rounds": c.rounds,
        "all_blocks_recovered": ok,
        "blocks_checked": detail,
    });
    Ok(Outcome::json(&v, ok))
}

fn verify_upperbound_cmd(
    epsilon: &str,
    dim: usize,
    updates: usize,
    seed: u64,
    prec: u32,
    budget: usize,
) -> Result<Outcome> {
    if !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let n = dim.trailing_zeros() as usize;
    let eps = parse_q(epsilon)?;
    let history = random_history(&mut ChaCha8Rng::seed_from_u64(seed), n, updates, 64);
    let (builder, report) = certify_history(n, &eps, &history, prec)?;
    let assembly = assemble_semimeasures(&builder)?;
    let inequalities = certify_conditions(&eps, prec, budget);
    let ok = report.certified && assembly.all_pass() && inequalities.iter().all(|r| r.holds());
    let v = json!({
        "epsilon": to_wire(&eps),
        "dim": dim,
        "seed": seed,
        "beta": IntervalRecord::from(&builder.params().beta()),
        "history": report,
        "assembly": {
            "valid": assembly.valid,
            "roots_ok": assembly.roots_ok,
            "root_odd": to_wire(&assembly.root_odd),
            "root_ev": to_wire(&assembly.root_ev),
            "product_ok": assembly.product_ok,
            "product_ok_without_slack": assembly.product_ok_without_slack,
            "alpha_n": assembly.alpha_n,
            "min_ratio": assembly.min_ratio,
            "p_odd": online_json(&assembly.p_odd),
            "p_ev": online_json(&assembly.p_ev),
        },
        "inequalities": inequalities,
        "certified": ok,
    });
    Ok(Outcome::json(&v, ok))
}

fn epsilon_search_cmd(grid_step: &str, max_epsilon: &str, prec: u32, budget: usize) -> Result<Outcome> {
    let cfg = SearchConfig {
        grid_step: parse_q(grid_step)?,
        max_epsilon: parse_q(max_epsilon)?,
        precision_bits: prec,
        box_budget: budget,
    };
    let r = epsilon_search(&cfg)?;
    let ok = r.beta_at_most_0_4999;
    Ok(Outcome::json(&serde_json::to_value(&r)?, ok))
}

fn factorize_cmd(input: &Path, depth: usize) -> Result<Outcome> {
    let p = read_stream(input)?.replay_plain()?;
    let f = factorize_computable(&p, depth)?;
    let mismatch = product_mismatch(&p, &f, depth);
    let valid = f.odd.is_valid_semimeasure() && f.even.is_valid_semimeasure();
    let v = json!({
        "depth": depth,
        "odd": online_json(&f.odd),
        "even": online_json(&f.even),
        "factors_valid": valid,
        "product_mismatch": mismatch.map(|x| x.to_wire()),
    });
    Ok(Outcome::json(&v, valid && v["product_mismatch"].is_null()))
}

#[allow(clippy::too_many_arguments)]
fn chain_cmd(
    dir: Direction,
    input: &Path,
    family: Option<PathBuf>,
    constraint: &str,
    m: usize,
    k: u64,
    k_max: u64,
) -> Result<Outcome> {
    let c = parse_constraint(constraint)?;
    let stream = read_stream(input)?;
    match dir {
        Direction::Forward => {
            let fam = chain_combine_forward(&stream, c, m, k)?;
            let mut buf = Vec::new();
            fam.write_jsonl(&mut buf)?;
            Ok(Outcome { text: String::from_utf8(buf).expect("utf-8"), ok: true })
        }
        Direction::Backward => {
            let path = family.ok_or_else(|| Error::BadParameter("backward needs --family".into()))?;
            let fam = ConditionalFamily::read_jsonl(BufReader::new(File::open(path)?))?;
            let r = chain_combine_backward(&stream, &fam, c, m, k_max)?;
            let lines: Vec<Value> =
                r.stream.to_jsonl_string().lines().map(serde_json::from_str).collect::<std::result::Result<_, _>>()?;
            let valid = r.assignment.is_valid_semimeasure();
            let v = json!({
                "constraint": c.to_string(),
                "m": m,
                "truncation_error": to_wire(&r.truncation_error),
                "root": to_wire(&r.assignment.root()),
                "valid": valid,
                "stream": lines,
            });
            Ok(Outcome::json(&v, valid))
        }
    }
}

fn parse_grid(s: &str) -> Result<u32> {
    let den = s.strip_prefix("1/").unwrap_or(s);
    den.trim().parse().map_err(|_| Error::BadParameter(format!("grid {s:?}; expected 1/N")))
}

fn solve_cmd(budget: &str, grid: &str, rounds: u32, max_states: u128, against: Option<AliceKind>) -> Result<Outcome> {
    let mut spec = DiscreteGameSpec::new(parse_grid(grid)?, parse_q(budget)?, rounds)?;
    spec.max_states = max_states;
    if let Some(kind) = against {
        let r = match kind {
            AliceKind::Alice34 => best_response(&Alice34::new(), &spec)?,
            AliceKind::Alice23 => best_response(&Alice23::new(), &spec)?,
            _ => return Err(Error::BadParameter("best response is defined for alice_34 and alice_23".into())),
        };
        return Ok(Outcome::json(&serde_json::to_value(&r)?, true));
    }
    let s = solve_game(&spec)?;
    Ok(Outcome::json(&serde_json::to_value(s.report())?, true))
}

fn validate_cmd(input: &Path, constraint: &str, unit_root: bool) -> Result<Outcome> {
    let stream = read_stream(input)?;
    let mut finals = MassAssignment::new();
    for u in stream.updates() {
        if finals.get(&u.node) < u.value {
            finals.set(u.node.clone(), u.value.clone());
        }
    }
    let (violations, replay) = if constraint == "plain" {
        (finals.validate(), stream.replay_plain().err())
    } else {
        let c = parse_constraint(constraint)?;
        let mut final_online = OnlineMassAssignment::from_base(finals, c);
        if unit_root && final_online.base().explicit(&BitString::empty()).is_none() {
            final_online.set(BitString::empty(), onlinek::num::qi(1));
        }
        (final_online.validate(), stream.replay_online(&[c], unit_root).err())
    };
    let ok = violations.is_empty() && replay.is_none();
    let v = json!({
        "updates": stream.len(),
        "constraint": constraint,
        "valid": ok,
        "violations": violations,
        "replay_error": replay.map(|e| e.to_string()),
    });
    Ok(Outcome::json(&v, ok))
}

fn dispatch(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::RunGame { alice, bob, bob_script, budget, max_steps, seed, grid, replay } => {
            run_game_cmd(alice, bob, bob_script, budget, max_steps, seed, grid, replay)
        }
        Cmd::BuildOmega { variant, epsilon, k, rounds, bob, seed, precision_bits } => {
            build_omega_cmd(variant, &epsilon, k, rounds, bob, seed, precision_bits)
        }
        Cmd::DecodeF { variant, epsilon, k, rounds, bob, seed, prefix, bit } => {
            decode_f_cmd(variant, &epsilon, k, rounds, bob, seed, prefix, bit)
        }
        Cmd::VerifyUpperbound { epsilon, dim, updates, seed, precision_bits, box_budget } => {
            verify_upperbound_cmd(&epsilon, dim, updates, seed, precision_bits, box_budget)
        }
        Cmd::EpsilonSearch { grid_step, max_epsilon, precision_bits, box_budget } => {
            epsilon_search_cmd(&grid_step, &max_epsilon, precision_bits, box_budget)
        }
        Cmd::Factorize { input, depth } => factorize_cmd(&input, depth),
        Cmd::ChainCombine { direction, input, family, constraint, m, k, k_max } => {
            chain_cmd(direction, &input, family, &constraint, m, k, k_max)
        }
        Cmd::SolveSmallGame { budget, grid, rounds, max_states, best_response } => {
            solve_cmd(&budget, &grid, rounds, max_states, best_response)
        }
        Cmd::Validate { input, constraint, unit_root } => validate_cmd(&input, &constraint, unit_root),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Certification(_) | Error::PrecisionExhausted { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = cli.out.clone();
    match dispatch(cli.cmd) {
        Ok(o) => {
            let written = match &out {
                Some(p) => std::fs::write(p, &o.text),
                None => std::io::stdout().write_all(o.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            if o.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
