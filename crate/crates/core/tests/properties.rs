mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use onlinek::factorize::{factorize_computable, product_mismatch};
use onlinek::game::{replay_transcript, run_game, GameConfig, GameTranscript};
use onlinek::interval::Interval;
use onlinek::num::{parse_q, q, to_wire};
use onlinek::oracle::{solve_game, BobGrid, DiscreteGameSpec, GridBob, OracleAlice, ReactiveAlice};
use onlinek::semimeasure::min_online_from_leaves;
use onlinek::strategies::{Alice23, Alice34};
use onlinek::stream::{random_online_stream, EnumerationStream, RandomStreamConfig};
use onlinek::upper::{norm_io, norm_oi};
use onlinek::{BitString, OnlineConstraint, Q};

fn constraint() -> impl Strategy<Value = OnlineConstraint> {
    prop_oneof![Just(OnlineConstraint::odd()), Just(OnlineConstraint::even())]
}

fn rational() -> impl Strategy<Value = Q> {
    (0i64..200, 1i64..50).prop_map(|(n, d)| q(n, d))
}

fn covers(a: &[Q; 4], b: &BobGrid, n: u32) -> bool {
    let nn = (n as i64) * (n as i64);
    a.iter().zip(b.products()).any(|(x, p)| *x >= q(p as i64, nn))
}

fn bob_grid(n: u32) -> impl Strategy<Value = BobGrid> {
    let pair = move || (0..=n).prop_flat_map(move |a| (Just(a), 0..=n - a));
    (pair(), pair(), pair()).prop_map(|((p, q), (u, v), (r, s))| BobGrid { p, q, u, v, r, s })
}

/// A pair `b1 <= b2` of valid grid states.
fn bob_chain(n: u32) -> impl Strategy<Value = (BobGrid, BobGrid)> {
    bob_grid(n).prop_flat_map(move |b| {
        let up = move |x: u32, y: u32| 0..=n - x - y;
        (Just(b), up(b.p, b.q), up(b.u, b.v), up(b.r, b.s), any::<[bool; 3]>()).prop_map(|(b, dp, du, dr, side)| {
            let mut c = b;
            if side[0] {
                c.p += dp
            } else {
                c.q += dp
            }
            if side[1] {
                c.u += du
            } else {
                c.v += du
            }
            if side[2] {
                c.r += dr
            } else {
                c.s += dr
            }
            (b, c)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rationals_survive_the_wire(x in rational()) {
        prop_assert_eq!(parse_q(&to_wire(&x)).unwrap(), x);
    }

    #[test]
    fn stream_jsonl_round_trip(seed in any::<u64>(), c in constraint(), updates in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RandomStreamConfig { updates, ..Default::default() };
        let s = random_online_stream(&mut rng, &[c, OnlineConstraint::odd()], &cfg);
        let text = s.to_jsonl_string();
        let back = EnumerationStream::read_jsonl(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_jsonl_string(), text);
    }

    #[test]
    fn generated_streams_replay_to_valid_semimeasures(seed in any::<u64>(), c in constraint(), depth in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = RandomStreamConfig { max_depth: depth, ..Default::default() };
        let s = random_online_stream(&mut rng, &[c], &cfg);
        let states = s.replay_online(&[c], true).unwrap();
        prop_assert!(states[0].validate().is_empty());
        prop_assert_eq!(states[0].root(), q(1, 1));
    }

    #[test]
    fn factors_multiply_back(seed in any::<u64>(), half in 0usize..5) {
        let depth = 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_semimeasure(&mut rng, depth);
        prop_assert!(p.validate().is_empty());
        let f = factorize_computable(&p, depth).unwrap();
        prop_assert!(f.odd.validate().is_empty());
        prop_assert!(f.even.validate().is_empty());
        prop_assert_eq!(product_mismatch(&p, &f, depth), None);
    }

    #[test]
    fn minimal_fold_matches_brute_force(leaves in prop::collection::vec(0u32..6, 1..=8), c in constraint()) {
        let len = leaves.len().next_power_of_two();
        let mut leaves = leaves;
        leaves.resize(len, 0);
        let qs: Vec<Q> = leaves.iter().map(|&k| q(k as i64, 5)).collect();
        let m = min_online_from_leaves(&qs, c).unwrap();
        prop_assert_eq!(m.root(), q(common::brute_min_root(&leaves, c) as i64, 5));
        let d = len.trailing_zeros() as usize;
        for (x, v) in BitString::all_of_length(d).zip(&qs) {
            prop_assert!(m.value(&x) >= *v);
        }
    }

    #[test]
    fn mixed_norms_are_norms(
        u in prop::collection::vec(rational(), 8),
        v in prop::collection::vec(rational(), 8),
        c in rational(),
    ) {
        let cu: Vec<Q> = u.iter().map(|x| x * &c).collect();
        let uv: Vec<Q> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        for f in [norm_oi, norm_io] {
            let (nu, nv) = (f(&u).unwrap(), f(&v).unwrap());
            prop_assert_eq!(f(&cu).unwrap(), &c * &nu);
            prop_assert!(f(&uv).unwrap() <= nu + nv);
        }
    }

    #[test]
    fn intervals_enclose(x in rational(), y in rational(), prec in 8u32..80) {
        let (ix, iy) = (Interval::point(x.clone()), Interval::point(y.clone()));
        prop_assert!(ix.add(&iy, prec).contains(&(&x + &y)));
        prop_assert!(ix.mul(&iy, prec).contains(&(&x * &y)));
        let r = ix.sqrt(prec);
        prop_assert!(r.lo() * r.lo() <= x && x <= r.hi() * r.hi());
    }

    #[test]
    fn three_quarter_replies_hold((b1, b2) in bob_chain(12)) {
        check_reactive(&Alice34::new(), 12, &b1, &b2)?;
    }

    #[test]
    fn two_thirds_replies_hold((b1, b2) in bob_chain(18)) {
        check_reactive(&Alice23::new(), 18, &b1, &b2)?;
    }

    #[test]
    fn shipped_strategies_beat_grid_bob(seed in any::<u64>(), which in any::<bool>()) {
        let (mut alice, budget, n): (Box<dyn onlinek::game::Strategy>, Q, u32) = if which {
            (Box::new(Alice34::new()), q(3, 4), 8)
        } else {
            (Box::new(Alice23::new()), q(2, 3), 9)
        };
        let mut bob = GridBob::new(n, seed);
        let t = run_game(alice.as_mut(), &mut bob, GameConfig::two_bit(budget, 9)).unwrap();
        prop_assert!(t.fault.is_none());
        for (i, v) in t.verdicts.iter().enumerate() {
            if i % 2 == 0 {
                prop_assert!(v.alice_wins(), "step {}: {:?}", i, v);
            }
        }
    }

    #[test]
    fn transcripts_round_trip_and_replay(seed in any::<u64>()) {
        let mut bob = GridBob::new(4, seed);
        let t = run_game(&mut Alice34::new(), &mut bob, GameConfig::two_bit(q(3, 4), 7)).unwrap();
        let back = GameTranscript::read_jsonl(t.to_jsonl_string().as_bytes()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(replay_transcript(&back).unwrap(), t);
    }
}

fn check_reactive(alice: &dyn ReactiveAlice, n: u32, b1: &BobGrid, b2: &BobGrid) -> Result<(), TestCaseError> {
    if alice.triggered(n, b1) {
        let a = alice.reply(n, b1);
        prop_assert!(a.iter().sum::<Q>() <= q(3, 4));
        prop_assert!(covers(&a, b2, n), "reply to {:?} fails at {:?}", b1, b2);
    } else {
        prop_assert!(covers(&alice.opening(), b1, n), "opening fails at {:?}", b1);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_budget_never_hurts(n in 2u32..=5, rounds in 1u32..=2) {
        let mut prev = false;
        for k in 0..=n {
            let s = solve_game(&DiscreteGameSpec::new(n, q(k as i64, n as i64), rounds).unwrap()).unwrap();
            prop_assert!(!prev || s.alice_wins, "budget {}/{} lost after a smaller budget won", k, n);
            prev = s.alice_wins;
        }
    }

    #[test]
    fn more_rounds_never_help(n in 2u32..=4, k in 0i64..=4) {
        let budget = q(k, 4);
        let wins: Vec<bool> = (1..=3)
            .map(|r| solve_game(&DiscreteGameSpec::new(n, budget.clone(), r).unwrap()).unwrap().alice_wins)
            .collect();
        prop_assert!(wins.windows(2).all(|w| w[0] || !w[1]), "{:?}", wins);
    }

    #[test]
    fn solved_alice_survives_random_bobs(seed in any::<u64>()) {
        let sol = Arc::new(solve_game(&DiscreteGameSpec::new(4, q(3, 4), 3).unwrap()).unwrap());
        let mut alice = OracleAlice::new(sol);
        let mut bob = GridBob::new(4, seed);
        let t = run_game(&mut alice, &mut bob, GameConfig::two_bit(q(3, 4), 7)).unwrap();
        prop_assert!(t.fault.is_none());
        prop_assert!(t.final_verdict().alice_wins());
    }
}
