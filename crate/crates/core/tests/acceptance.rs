//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::time::Instant;

use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use onlinek::factorize::factorize_computable;
use onlinek::num::{parse_q, pow, q, qi};
use onlinek::oracle::{best_response, solve_game, DiscreteGameSpec, REFINING_GRIDS};
use onlinek::semimeasure::{min_online_from_leaves, Rule};
use onlinek::strategies::omega::check_decoding;
use onlinek::strategies::{build_omega, Alice23, Alice34, OmegaParams};
use onlinek::upper::construction::random_history;
use onlinek::upper::{
    assemble_semimeasures, cauchy_check, certify_history, epsilon_search, holder_check, norm_io, norm_oi, SearchConfig,
};
use onlinek::{BitString, OnlineConstraint, Q};

struct Verdict {
    pass: bool,
    detail: String,
}

fn pass_if(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn criterion_1(eps_out: &mut Q) -> Verdict {
    let cfg = SearchConfig::default();
    match epsilon_search(&cfg) {
        Ok(r) => {
            *eps_out = parse_q(&r.best_epsilon).expect("wire rational");
            let pass = r.beta_below_half && r.beta_at_most_0_4999;
            let note = if r.beta_at_most_0_491 {
                "beta <= 0.491 met".to_string()
            } else {
                format!(
                    "beta <= 0.491 NOT met under strict verification: gap {:.5}, needs eps ~ {:.5}",
                    r.gap_to_0_491, r.epsilon_needed_for_0_491
                )
            };
            pass_if(
                pass,
                format!(
                    "certified eps = {} ({:.6}), beta in [{:.7}, {:.7}]; {note}",
                    r.best_epsilon,
                    r.best_epsilon_f64,
                    q_f64(&r.beta.lo),
                    q_f64(&r.beta.hi)
                ),
            )
        }
        Err(e) => pass_if(false, format!("search failed: {e}")),
    }
}

fn q_f64(s: &str) -> f64 {
    parse_q(s).ok().and_then(|x| x.to_f64()).unwrap_or(f64::NAN)
}

/// Criteria 2 and 3 share the streams.
fn criteria_2_3() -> (Verdict, Verdict) {
    let params = OmegaParams::three_quarters();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad2 = Vec::new();
    let mut bad3 = Vec::new();
    let mut events = 0usize;
    let mut decoded = 0usize;
    for run in 0..200 {
        let n = rng.gen_range(1..=32);
        let s = common::adaptive_stream(&mut rng, &params, n);
        let c = match build_omega(&s, &params, n) {
            Ok(c) => c,
            Err(e) => {
                bad2.push(format!("run {run}: {e}"));
                continue;
            }
        };
        events += c.events().len();
        if !c.p.validate().is_empty() {
            bad2.push(format!("run {run}: P invalid"));
        }
        for j in 0..=n {
            let x = c.omega.prefix(2 * j);
            let counts = c.counts_at(j);
            let o = params.threshold_exact(counts, 1).expect("rational");
            let e = params.threshold_exact(counts, 2).expect("rational");
            let qo = c.history.final_value(0, &x);
            let qe = c.history.final_value(1, &x);
            let bound = pow(&q(3, 4), j as u32) * c.p.get(&x);
            if qo > o || qe > e || &qo * &qe > bound {
                bad2.push(format!("run {run}: round {j} at {x}"));
            }
        }
        match check_decoding(&c) {
            Ok(k) => decoded += k,
            Err(e) => bad3.push(format!("3/4 run {run}: {e}")),
        }
    }
    for k in [2usize, 3, 4] {
        let p = OmegaParams::kmod(k, q(1, 2)).expect("rational delta");
        for run in 0..30 {
            let n = rng.gen_range(1..=16);
            let s = common::adaptive_stream(&mut rng, &p, n);
            match build_omega(&s, &p, n).and_then(|c| check_decoding(&c)) {
                Ok(b) => decoded += b,
                Err(e) => bad3.push(format!("k={k} run {run}: {e}")),
            }
        }
    }
    let v2 = pass_if(bad2.is_empty(), format!("200 runs, n <= 32, {events} events; failures: {:?}", first(&bad2)));
    let v3 = pass_if(bad3.is_empty(), format!("{decoded} blocks decoded; failures: {:?}", first(&bad3)));
    (v2, v3)
}

fn first(v: &[String]) -> Vec<&String> {
    v.iter().take(3).collect()
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let depth = 10;
    let mut bad = Vec::new();
    for run in 0..100 {
        let p = common::random_semimeasure(&mut rng, depth);
        let f = match factorize_computable(&p, depth) {
            Ok(f) => f,
            Err(e) => {
                bad.push(format!("run {run}: {e}"));
                continue;
            }
        };
        if !f.odd.validate().is_empty() || !f.even.validate().is_empty() {
            bad.push(format!("run {run}: invalid factor"));
        }
        for d in (0..=depth).step_by(2) {
            for x in BitString::all_of_length(d) {
                if f.odd.value(&x) * f.even.value(&x) != p.get(&x) {
                    bad.push(format!("run {run}: product differs at {x}"));
                }
            }
        }
    }
    pass_if(bad.is_empty(), format!("100 semimeasures to depth {depth}; failures: {:?}", first(&bad)))
}

fn criterion_5(eps: &Q) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    let mut stages = 0;
    for n in 1..=4usize {
        for run in 0..50 {
            let h = random_history(&mut rng, n, 3 << n, 32);
            match certify_history(n, eps, &h, 128) {
                Ok((b, report)) => {
                    stages += report.stages;
                    if !report.certified {
                        bad.push(format!("dim {} run {run}: {:?}", 1 << n, report.failure));
                    }
                    match assemble_semimeasures(&b) {
                        Ok(a) if a.valid && a.roots_ok => {}
                        Ok(_) => bad.push(format!("dim {} run {run}: assembly invalid", 1 << n)),
                        Err(e) => bad.push(format!("dim {} run {run}: {e}", 1 << n)),
                    }
                }
                Err(e) => bad.push(format!("dim {} run {run}: {e}", 1 << n)),
            }
        }
    }
    pass_if(bad.is_empty(), format!("eps = {eps}, 200 histories, {stages} stages; failures: {:?}", first(&bad)))
}

fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<Q> {
    (0..len).map(|_| q(rng.gen_range(0..=64), rng.gen_range(1..=16))).collect()
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = Vec::new();
    for i in 0..10_000 {
        let len = 1 << rng.gen_range(0..=4);
        let (u, v) = (rand_vec(&mut rng, len), rand_vec(&mut rng, len));
        let c = q(rng.gen_range(0..=20), rng.gen_range(1..=7));
        let cu: Vec<Q> = u.iter().map(|x| x * &c).collect();
        let uv: Vec<Q> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        for f in [norm_oi, norm_io] {
            let (nu, nv) = (f(&u).unwrap(), f(&v).unwrap());
            if f(&cu).unwrap() != &c * &nu || f(&uv).unwrap() > nu + nv {
                bad.push(format!("norm instance {i}"));
            }
        }
    }
    for i in 0..10_000 {
        let x: Vec<Q> = (0..4).map(|_| q(rng.gen_range(0..=30), rng.gen_range(1..=9))).collect();
        if !matches!(cauchy_check(&x[0], &x[1], &x[2], &x[3]), Ok(true)) {
            bad.push(format!("cauchy instance {i}"));
        }
    }
    let three = q(3, 1);
    for i in 0..10_000 {
        let vs: Vec<Vec<Q>> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
        if !matches!(holder_check(&vs, &[three.clone(), three.clone(), three.clone()], &qi(1), 256), Ok(true)) {
            bad.push(format!("holder instance {i}"));
        }
    }
    let grid = [0u32, 1, 2, 3, 4];
    let decode = |len: usize, mut code: usize| -> Vec<u32> {
        (0..len)
            .map(|_| {
                let d = grid[code % grid.len()];
                code /= grid.len();
                d
            })
            .collect()
    };
    let mut checked = 0usize;
    for len in [1usize, 2, 4, 8] {
        let total = grid.len().pow(len as u32);
        checked += total;
        bad.extend((0..total).into_par_iter().filter_map(|code| fold_mismatch(&decode(len, code))).collect::<Vec<_>>());
    }
    for _ in 0..10_000 {
        let leaves: Vec<u32> = (0..16).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
        bad.extend(fold_mismatch(&leaves));
        checked += 1;
    }
    pass_if(
        bad.is_empty(),
        format!(
            "10^4 norm, Cauchy and Holder instances; {checked} fold vectors (all of dim <= 8, 10^4 of dim 16); failures: {:?}",
            first(&bad)
        ),
    )
}

/// Compares the fold with the brute-force minimum under both constraints.
fn fold_mismatch(leaves: &[u32]) -> Option<String> {
    let qs: Vec<Q> = leaves.iter().map(|&k| q(k as i64, 4)).collect();
    for c in [OnlineConstraint::odd(), OnlineConstraint::even()] {
        let m = min_online_from_leaves(&qs, c).expect("power of two");
        let want = q(common::brute_min_root(leaves, c) as i64, 4);
        let dominated =
            BitString::all_of_length(leaves.len().trailing_zeros() as usize).zip(&qs).all(|(x, v)| m.value(&x) >= *v);
        let locally_valid = m.validate().iter().all(|v| matches!(v.rule, Rule::RootAboveOne));
        if m.root() != want || !dominated || !locally_valid {
            return Some(format!("fold {leaves:?} under {c}"));
        }
    }
    None
}

fn criterion_7() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    let s34 = solve_game(&DiscreteGameSpec::new(4, q(3, 4), 3).expect("spec"));
    match &s34 {
        Ok(s) => {
            let ok = s.alice_wins && s.winning_openings.contains(&[1, 0, 0, 0]);
            pass &= ok;
            notes.push(format!("3/4 grid 1/4: alice wins = {}, opening 00=1/4 wins = {ok}", s.alice_wins));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("3/4: {e}"));
        }
    }
    let s23 = solve_game(&DiscreteGameSpec::new(9, q(2, 3), 3).expect("spec"));
    match &s23 {
        Ok(s) => {
            let ok = s.alice_wins && s.winning_openings.contains(&[1, 0, 1, 0]);
            pass &= ok;
            notes.push(format!("2/3 grid 1/9: alice wins = {}, opening 00=10=1/9 wins = {ok}", s.alice_wins));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("2/3: {e}"));
        }
    }
    let mut beaten = Vec::new();
    for n in REFINING_GRIDS {
        let r34 = best_response(&Alice34::new(), &DiscreteGameSpec::new(n, q(3, 4), 3).expect("spec"));
        let r23 = best_response(&Alice23::new(), &DiscreteGameSpec::new(n, q(2, 3), 3).expect("spec"));
        for (name, r) in [("alice_34", r34), ("alice_23", r23)] {
            match r {
                Ok(r) if !r.bob_beats => {}
                Ok(r) => beaten.push(format!("{name} on 1/{n} via {:?}", r.worst_branch)),
                Err(e) => beaten.push(format!("{name} on 1/{n}: {e}")),
            }
        }
    }
    pass &= beaten.is_empty();
    notes.push(format!("best responses on grids up to 1/36 beating a shipped strategy: {beaten:?}"));
    pass_if(pass, notes.join("; "))
}

fn main() {
    let mut eps = Q::zero();
    let mut results: Vec<(usize, Verdict, f64)> = Vec::new();
    let t = Instant::now();
    let v1 = criterion_1(&mut eps);
    results.push((1, v1, t.elapsed().as_secs_f64()));
    if eps.is_zero() {
        eps = q(1, 256);
    }
    let t = Instant::now();
    let (v2, v3) = criteria_2_3();
    let dt = t.elapsed().as_secs_f64();
    results.push((2, v2, dt));
    results.push((3, v3, dt));
    let t = Instant::now();
    results.push((4, criterion_4(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((5, criterion_5(&eps), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((6, criterion_6(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((7, criterion_7(), t.elapsed().as_secs_f64()));
    let mut failed = 0;
    for (i, v, secs) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("criterion {i}: {tag} ({secs:.1}s) {}", v.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
