//! The balanced/unbalanced o/p construction over `2^n`-dimensional vectors.
//!
//! `u` holds square roots of a leaf semimeasure `P_n`; we store the squares
//! exactly and only take roots inside intervals. A stage is one monotone
//! update of a leaf. After every stage the nodes on the path from that leaf
//! to the root are recomputed with
//!
//! * unbalanced `v`: `o = max(o_old, (1 - eps) w_o)`, `p = (1 + 2 eps) w_p / sqrt 2`
//! * balanced `v`: `o = (1 + 5 eps) w_o`, `p = max(p_old, (1 - 4 eps) w_p / sqrt 2)`
//!
//! where `v = [|u-|, |u+|]`, `w_o = p(u-) ++ p(u+)` and `w_p = o(u-) ++ o(u+)`.
//! `v = [a, b]` is balanced iff `a sqrt(20 eps) <= b <= a / sqrt(20 eps)`.

use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::interval::{decide, Interval, IntervalRecord, MAX_PREC};
use crate::num::{q, qi, to_wire, Q};
use crate::semimeasure::{min_online_from_leaves, OnlineConstraint, OnlineMassAssignment};

use super::norms::{norm_io_iv, norm_oi_iv};

#[derive(Debug, Clone)]
pub struct UpperBoundParams {
    epsilon: Q,
    prec: u32,
    alpha: Interval,
    inv_sqrt2: Interval,
}

impl UpperBoundParams {
    /// Requires `0 < eps < 1/20` so that the balance band is non-empty.
    pub fn new(epsilon: Q, prec: u32) -> Result<Self> {
        if epsilon <= Q::zero() || epsilon >= q(1, 20) {
            return Err(Error::BadParameter(format!("epsilon {} outside (0, 1/20)", to_wire(&epsilon))));
        }
        let inv_sqrt2 = Interval::point(q(1, 2)).sqrt(prec);
        let alpha = inv_sqrt2.add(&Interval::point(&epsilon / qi(2)), prec);
        Ok(UpperBoundParams { epsilon, prec, alpha, inv_sqrt2 })
    }

    pub fn epsilon(&self) -> &Q {
        &self.epsilon
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        Self::new(self.epsilon.clone(), prec).expect("validated")
    }

    /// `1/sqrt 2 + eps/2`.
    pub fn alpha(&self) -> &Interval {
        &self.alpha
    }

    pub fn alpha_pow(&self, n: u32) -> Interval {
        self.alpha.powi(n, self.prec)
    }

    /// `-log2 alpha`.
    pub fn beta(&self) -> Interval {
        self.alpha.log2(self.prec, self.prec).neg()
    }

    /// `sqrt(20 eps)`.
    pub fn balance_threshold(&self) -> Interval {
        Interval::point(qi(20) * &self.epsilon).sqrt(self.prec)
    }

    /// Balance test on squared coordinates, exact.
    pub fn is_balanced(&self, a2: &Q, b2: &Q) -> bool {
        let t = qi(20) * &self.epsilon;
        &t * a2 <= *b2 && &t * b2 <= *a2
    }
}

/// Leaf vector `u = sqrt(P_n)` with its update history.
#[derive(Debug, Clone, Serialize)]
pub struct MixedNormVector {
    n: usize,
    #[serde(with = "crate::num::q_vec")]
    squares: Vec<Q>,
    history: Vec<(usize, String)>,
}

impl MixedNormVector {
    pub fn new(n: usize) -> Self {
        MixedNormVector { n, squares: vec![Q::zero(); 1 << n], history: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.squares.len()
    }

    /// `u_i^2 = P_n(x_i)`.
    pub fn squares(&self) -> &[Q] {
        &self.squares
    }

    pub fn norm2_sq(&self) -> Q {
        self.squares.iter().sum()
    }

    /// Raise `P_n` at leaf `i`. Values may only grow and the total stays at
    /// most 1.
    pub fn update(&mut self, i: usize, value: Q) -> Result<()> {
        if i >= self.dim() {
            return Err(Error::BadParameter(format!("leaf {i} out of range for dimension {}", self.dim())));
        }
        if value < self.squares[i] {
            return Err(Error::NonIncreasing {
                node: BitString::from_index(i, self.n),
                step: self.history.len() as u64,
            });
        }
        let total = self.norm2_sq() - &self.squares[i] + &value;
        if total > Q::one() {
            return Err(Error::BadParameter(format!("leaf mass {} exceeds 1", to_wire(&total))));
        }
        self.squares[i] = value.clone();
        self.history.push((i, to_wire(&value)));
        Ok(())
    }

    pub fn values(&self, prec: u32) -> Vec<Interval> {
        self.squares.iter().map(|s| Interval::point(s.clone()).sqrt(prec)).collect()
    }
}

#[derive(Debug, Clone)]
struct NodeState {
    o: Vec<Interval>,
    p: Vec<Interval>,
    sq: Q,
    balanced: Option<bool>,
}

/// Conjunction over certified outcomes: a certified failure dominates an
/// undecided comparison.
fn and(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (None, _) | (_, None) => None,
        _ => Some(true),
    }
}

/// Outcome of the checks after one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageCheck {
    /// `oi(o) <= |u|` on every recomputed node.
    pub o_norm: Option<bool>,
    /// `io(p) <= |u|`.
    pub p_norm: Option<bool>,
    /// `o p >= alpha^m u^2` pointwise.
    pub product: Option<bool>,
    /// No coordinate of o or p decreased.
    pub monotone: Option<bool>,
}

impl StageCheck {
    fn ok() -> Self {
        StageCheck { o_norm: Some(true), p_norm: Some(true), product: Some(true), monotone: Some(true) }
    }

    pub fn overall(&self) -> Option<bool> {
        and(and(self.o_norm, self.p_norm), and(self.product, self.monotone))
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        [("o-norm", self.o_norm), ("p-norm", self.p_norm), ("product", self.product), ("monotone", self.monotone)]
            .into_iter()
            .find(|(_, v)| *v == Some(false))
            .map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub leaf: usize,
    pub value: String,
    /// `(level, index, balanced)` for the recomputed nodes, root first.
    pub classes: Vec<(usize, usize, bool)>,
    pub check: StageCheck,
}

/// Incremental o/p construction. Levels run from 0 (root) to `n` (leaves).
#[derive(Debug, Clone)]
pub struct OpBuilder {
    params: UpperBoundParams,
    u: MixedNormVector,
    levels: Vec<Vec<NodeState>>,
    log: Vec<StageRecord>,
}

fn ge_certified(new: &Interval, old: &Interval) -> Option<bool> {
    // a certified decrease is a failure, overlapping enclosures are not
    match old.le(new) {
        Some(false) => Some(false),
        _ => Some(true),
    }
}

impl OpBuilder {
    pub fn new(n: usize, params: UpperBoundParams) -> Self {
        let levels = (0..=n)
            .map(|l| {
                let dim = 1 << (n - l);
                vec![
                    NodeState {
                        o: vec![Interval::zero(); dim],
                        p: vec![Interval::zero(); dim],
                        sq: Q::zero(),
                        balanced: None
                    };
                    1 << l
                ]
            })
            .collect();
        OpBuilder { params, u: MixedNormVector::new(n), levels, log: Vec::new() }
    }

    pub fn params(&self) -> &UpperBoundParams {
        &self.params
    }

    pub fn vector(&self) -> &MixedNormVector {
        &self.u
    }

    pub fn log(&self) -> &[StageRecord] {
        &self.log
    }

    pub fn o(&self) -> &[Interval] {
        &self.levels[0][0].o
    }

    pub fn p(&self) -> &[Interval] {
        &self.levels[0][0].p
    }

    /// The pair rule at one node given its children.
    fn combine(&self, left: &NodeState, right: &NodeState, old: &NodeState) -> (NodeState, Option<bool>) {
        let prec = self.params.prec;
        let eps = &self.params.epsilon;
        let balanced = self.params.is_balanced(&left.sq, &right.sq);
        let w_o: Vec<Interval> = left.p.iter().chain(&right.p).cloned().collect();
        let w_p: Vec<Interval> = left.o.iter().chain(&right.o).cloned().collect();
        let s2 = &self.params.inv_sqrt2;
        let (co, cp) = if balanced {
            (Interval::point(Q::one() + qi(5) * eps), s2.mul_q(&(Q::one() - qi(4) * eps), prec))
        } else {
            (Interval::point(Q::one() - eps), s2.mul_q(&(Q::one() + qi(2) * eps), prec))
        };
        let mut o: Vec<Interval> = w_o.iter().map(|w| w.mul(&co, prec)).collect();
        let mut p: Vec<Interval> = w_p.iter().map(|w| w.mul(&cp, prec)).collect();
        if balanced {
            p = p.iter().zip(&old.p).map(|(n, o)| n.max(o)).collect();
        } else {
            o = o.iter().zip(&old.o).map(|(n, o)| n.max(o)).collect();
        }
        let mut mono = Some(true);
        if old.balanced.is_some() {
            for (n, o) in o.iter().zip(&old.o).chain(p.iter().zip(&old.p)) {
                mono = and(mono, ge_certified(n, o));
            }
        }
        (NodeState { o, p, sq: &left.sq + &right.sq, balanced: Some(balanced) }, mono)
    }

    fn check_node(&self, level: usize, index: usize) -> StageCheck {
        let prec = self.params.prec;
        let node = &self.levels[level][index];
        let m = (self.u.n - level) as u32;
        let sq = Interval::point(node.sq.clone());
        let o_norm = norm_oi_iv(&node.o, prec).expect("power of two").square(prec).le(&sq);
        let p_norm = norm_io_iv(&node.p, prec).expect("power of two").square(prec).le(&sq);
        let am = self.params.alpha_pow(m);
        let span = 1usize << m;
        let mut product = Some(true);
        for (k, (o, p)) in node.o.iter().zip(&node.p).enumerate() {
            let s = &self.u.squares[index * span + k];
            if s.is_zero() {
                continue;
            }
            let lhs = o.mul(p, prec);
            let rhs = am.mul_q(s, prec);
            product = and(product, rhs.le(&lhs));
        }
        StageCheck { o_norm, p_norm, product, monotone: Some(true) }
    }

    /// Apply one stage: raise `P_n` at leaf `i` and recompute the path.
    pub fn update(&mut self, i: usize, value: Q) -> Result<StageCheck> {
        self.u.update(i, value.clone())?;
        let n = self.u.n;
        let prec = self.params.prec;
        let leaf = Interval::point(value.clone()).sqrt(prec);
        self.levels[n][i] = NodeState { o: vec![leaf.clone()], p: vec![leaf], sq: value.clone(), balanced: Some(true) };
        let mut check = StageCheck::ok();
        let mut classes = Vec::new();
        let mut idx = i;
        for level in (0..n).rev() {
            idx /= 2;
            let (left, right) = (&self.levels[level + 1][2 * idx], &self.levels[level + 1][2 * idx + 1]);
            let (state, mono) = self.combine(left, right, &self.levels[level][idx]);
            classes.push((level, idx, state.balanced == Some(true)));
            self.levels[level][idx] = state;
            let c = self.check_node(level, idx);
            check = StageCheck {
                o_norm: and(check.o_norm, c.o_norm),
                p_norm: and(check.p_norm, c.p_norm),
                product: and(check.product, c.product),
                monotone: and(check.monotone, mono),
            };
        }
        classes.reverse();
        self.log.push(StageRecord { stage: self.log.len(), leaf: i, value: to_wire(&value), classes, check });
        Ok(check)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryReport {
    pub dim: usize,
    pub epsilon: String,
    pub precision_bits: u32,
    pub stages: usize,
    pub certified: bool,
    /// `(stage, condition)` of the first certified failure.
    pub failure: Option<(usize, String)>,
    pub stage_log: Vec<StageRecord>,
}

/// Run a whole update history, doubling precision until every check is
/// decided. Returns the builder from the deciding run.
pub fn certify_history(
    n: usize,
    epsilon: &Q,
    updates: &[(usize, Q)],
    start_prec: u32,
) -> Result<(OpBuilder, HistoryReport)> {
    let mut result = None;
    let what = format!("o/p conditions, dimension {}", 1usize << n);
    decide(start_prec, MAX_PREC, &what, |prec| {
        let params = UpperBoundParams::new(epsilon.clone(), prec).ok()?;
        let mut b = OpBuilder::new(n, params);
        let mut overall = Some(true);
        let mut failure = None;
        for (k, (i, v)) in updates.iter().enumerate() {
            let c = match b.update(*i, v.clone()) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some((k, e.to_string()));
                    overall = Some(false);
                    break;
                }
            };
            overall = and(overall, c.overall());
            if overall == Some(false) {
                failure = Some((k, c.first_failure().unwrap_or("unknown").to_string()));
                break;
            }
        }
        let d = overall?;
        result = Some((b, failure, prec));
        Some(d)
    })?;
    let (b, failure, prec) = result.expect("decided");
    let report = HistoryReport {
        dim: 1 << n,
        epsilon: to_wire(epsilon),
        precision_bits: prec,
        stages: b.log.len(),
        certified: failure.is_none(),
        failure,
        stage_log: b.log.clone(),
    };
    Ok((b, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct Assembly {
    #[serde(skip)]
    pub p_odd: OnlineMassAssignment,
    #[serde(skip)]
    pub p_ev: OnlineMassAssignment,
    #[serde(with = "crate::num::q_str")]
    pub root_odd: Q,
    #[serde(with = "crate::num::q_str")]
    pub root_ev: Q,
    pub valid: bool,
    pub roots_ok: bool,
    /// `P_odd P_ev >= alpha^n P_n / 4` at every leaf.
    pub product_ok: bool,
    /// The same bound without the factor 4.
    pub product_ok_without_slack: bool,
    /// `alpha^n`, enclosed.
    pub alpha_n: IntervalRecord,
    /// Smallest `P_odd P_ev / P_n` over leaves with positive mass.
    pub min_ratio: Option<f64>,
}

impl Assembly {
    pub fn all_pass(&self) -> bool {
        self.valid && self.roots_ok && self.product_ok
    }
}

/// The smallest even online semimeasure above `o` and odd online semimeasure
/// above `p`, using the lower ends of the enclosures.
pub fn assemble_semimeasures(b: &OpBuilder) -> Result<Assembly> {
    use num_traits::ToPrimitive;
    let n = b.u.n;
    let lo = |v: &[Interval]| -> Vec<Q> { v.iter().map(|x| x.lo().clone().max(Q::zero())).collect() };
    let p_ev = min_online_from_leaves(&lo(b.o()), OnlineConstraint::even())?;
    let p_odd = min_online_from_leaves(&lo(b.p()), OnlineConstraint::odd())?;
    let valid = p_ev.validate().is_empty() && p_odd.validate().is_empty();
    let (root_odd, root_ev) = (p_odd.root(), p_ev.root());
    let roots_ok = root_odd <= Q::one() && root_ev <= Q::one();
    let an = b.params.alpha_pow(n as u32);
    let mut product_ok = true;
    let mut strict_ok = true;
    let mut min_ratio: Option<Q> = None;
    for (k, s) in b.u.squares.iter().enumerate() {
        if s.is_zero() {
            continue;
        }
        let x = BitString::from_index(k, n);
        let prod = p_odd.value(&x) * p_ev.value(&x);
        let bound = an.hi() * s;
        product_ok &= prod >= &bound / qi(4);
        strict_ok &= prod >= bound;
        let r = &prod / s;
        if min_ratio.as_ref().is_none_or(|m| r < *m) {
            min_ratio = Some(r);
        }
    }
    Ok(Assembly {
        p_odd,
        p_ev,
        root_odd,
        root_ev,
        valid,
        roots_ok,
        product_ok,
        product_ok_without_slack: strict_ok,
        alpha_n: IntervalRecord::from(&an),
        min_ratio: min_ratio.and_then(|r| r.to_f64()),
    })
}

/// Random monotone history for a `2^n`-dimensional `u`: each update raises
/// one leaf by a multiple of `1/granularity` while the total stays at most 1.
pub fn random_history<R: Rng>(rng: &mut R, n: usize, updates: usize, granularity: i64) -> Vec<(usize, Q)> {
    let dim = 1usize << n;
    let mut vals = vec![0i64; dim];
    let mut total = 0i64;
    let mut out = Vec::with_capacity(updates);
    for _ in 0..updates {
        if total >= granularity {
            break;
        }
        let i = rng.gen_range(0..dim);
        let room = granularity - total;
        let step = rng.gen_range(1..=room.min(granularity / 4).max(1));
        vals[i] += step;
        total += step;
        out.push((i, q(vals[i], granularity)));
    }
    out
}

/// `sqrt 2` times the product of the o and p coefficients at one level.
/// Condition 3 needs it to be at least `1 + eps / sqrt 2`.
pub fn level_factor(epsilon: &Q, balanced: bool) -> Q {
    if balanced {
        (Q::one() + qi(5) * epsilon) * (Q::one() - qi(4) * epsilon)
    } else {
        (Q::one() - epsilon) * (Q::one() + qi(2) * epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eps() -> Q {
        q(1, 200)
    }

    #[test]
    fn params() {
        let p = UpperBoundParams::new(eps(), 128).unwrap();
        assert!(p.alpha().lo() > &q(7071, 10000));
        let beta = p.beta();
        assert!(beta.hi() < &q(1, 2));
        assert!(p.is_balanced(&qi(1), &qi(1)));
        assert!(!p.is_balanced(&qi(1), &q(1, 20)));
        assert!(p.is_balanced(&qi(1), &q(1, 10)));
        assert!(UpperBoundParams::new(Q::zero(), 64).is_err());
    }

    #[test]
    fn one_dimensional_is_identity() {
        let mut b = OpBuilder::new(0, UpperBoundParams::new(eps(), 64).unwrap());
        b.update(0, q(1, 4)).unwrap();
        assert!(b.o()[0].contains(&q(1, 2)));
        assert!(b.p()[0].contains(&q(1, 2)));
    }

    #[test]
    fn balanced_pair() {
        let mut b = OpBuilder::new(1, UpperBoundParams::new(eps(), 128).unwrap());
        b.update(0, q(1, 2)).unwrap();
        let c = b.update(1, q(1, 2)).unwrap();
        assert_eq!(c.overall(), Some(true));
        // o = (1 + 5 eps) u with u = [1/sqrt 2, 1/sqrt 2]
        let want = Interval::point(q(1, 2)).sqrt(128).mul_q(&(Q::one() + qi(5) * eps()), 128);
        assert!(b.o()[0].le(&want.add(&Interval::point(q(1, 1 << 60)), 128)) == Some(true));
        assert_eq!(b.log().last().unwrap().classes, vec![(0, 0, true)]);
    }

    #[test]
    fn unbalanced_pair() {
        let mut b = OpBuilder::new(1, UpperBoundParams::new(eps(), 128).unwrap());
        let c = b.update(0, qi(1)).unwrap();
        assert_eq!(c.overall(), Some(true));
        // p = (1 + 2 eps) [1, 0] / sqrt 2, |p|_1 < 1
        let want = Interval::point(q(1, 2)).sqrt(128).mul_q(&(Q::one() + qi(2) * eps()), 128);
        assert!(b.p()[0].hi() >= want.lo() && b.p()[0].lo() <= want.hi());
        assert_eq!(b.log()[0].classes, vec![(0, 0, false)]);
    }

    #[test]
    fn history_after_balanced_stage() {
        // balanced at [1/2, 1/2], then a grows alone: unbalanced with o kept
        let updates = vec![(0, q(1, 16)), (1, q(1, 16)), (0, q(15, 16))];
        let (b, r) = certify_history(1, &eps(), &updates, 128).unwrap();
        assert!(r.certified, "{r:?}");
        assert_eq!(b.log()[2].classes, vec![(0, 0, false)]);
    }

    #[test]
    fn uniform_two_bits() {
        let updates: Vec<_> = (0..4).map(|i| (i, q(1, 4))).collect();
        let (b, r) = certify_history(2, &eps(), &updates, 128).unwrap();
        assert!(r.certified, "{r:?}");
        let a = assemble_semimeasures(&b).unwrap();
        assert!(a.all_pass(), "{a:?}");
        assert!(a.product_ok_without_slack);
    }

    #[test]
    fn point_mass() {
        let (b, r) = certify_history(3, &eps(), &[(5, qi(1))], 128).unwrap();
        assert!(r.certified);
        let a = assemble_semimeasures(&b).unwrap();
        assert!(a.all_pass());
    }

    #[test]
    fn random_histories_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            for _ in 0..5 {
                let h = random_history(&mut rng, n, 30, 64);
                let (b, r) = certify_history(n, &eps(), &h, 128).unwrap();
                assert!(r.certified, "{:?}", r.failure);
                assert!(assemble_semimeasures(&b).unwrap().all_pass());
            }
        }
    }

    #[test]
    fn rejects_decrease() {
        let mut b = OpBuilder::new(1, UpperBoundParams::new(eps(), 64).unwrap());
        b.update(0, q(1, 2)).unwrap();
        assert!(b.update(0, q(1, 4)).is_err());
        assert!(b.update(1, qi(1)).is_err());
    }
}
