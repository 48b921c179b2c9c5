//! Certified inequality checks: Cauchy and generalised Hölder, and the four
//! conditions the pair rule needs, proved over their whole parameter domains
//! by interval branch and bound.
//!
//! With `s = sqrt(20 eps)` and everything scaled so that one coordinate is 1,
//! the conditions are
//!
//! 1. balanced, `o <= |u|`: `sqrt(1 + t) >= 1 + 5 eps` for `t = (b/a)^2` in
//!    `[20 eps, 1/(20 eps)]`;
//! 2. unbalanced, `|p|_1 <= |u|`: `sqrt(1 + t^2) >= (1 + 2 eps)(1 + t)/sqrt 2`
//!    for `t = b/a` in `[0, s]`;
//! 3. unbalanced after a balanced stage, `o <= |u|`:
//!    `sqrt(1 + 20 eps x^2) >= 1 - eps + 6 eps x` for `x = a_o/a` in `[0, 1]`;
//! 4. balanced after an unbalanced stage, `|p|_1 <= |u|`:
//!    `sqrt(x^2 + y^2) >= ((1 - 4 eps)(x + y) + 6 eps (1 + y_o))/sqrt 2` with
//!    `a_o = 1`, `y_o = b_o <= min(s, y)`, `x >= 1` and `(x, y)` balanced.
//!
//! The mirrored cases (`a` and `b` swapped) are the same inequalities. On top
//! of these the level coefficients must satisfy condition 3 of the
//! construction, `c_o c_p >= 1/sqrt 2 + eps/2` in both regimes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{decide, Interval};
use crate::num::{q, qi, to_wire, Q};

/// `(p + q)(u + v) >= (sqrt(pu) + sqrt(qv))^2`, decided exactly: the
/// difference of the two sides is `(sqrt(pv) - sqrt(qu))^2` and its sign
/// reduces to `(pv + qu)^2 >= 4 pquv`.
pub fn cauchy_check(p: &Q, q: &Q, u: &Q, v: &Q) -> Result<bool> {
    if [p, q, u, v].iter().any(|x| x.is_negative()) {
        return Err(Error::BadParameter("cauchy_check needs nonnegative inputs".into()));
    }
    let lhs = p * v + q * u;
    Ok(&lhs * &lhs >= qi(4) * p * q * u * v)
}

fn ratio_parts(x: &Q) -> Result<(u32, u32)> {
    let n = x.numer().to_u32().ok_or_else(|| Error::BadParameter(format!("exponent {} too large", to_wire(x))))?;
    let d = x.denom().to_u32().ok_or_else(|| Error::BadParameter(format!("exponent {} too large", to_wire(x))))?;
    Ok((n, d))
}

/// `|v|_r` for a nonnegative vector and positive rational `r`.
fn lp_norm(v: &[Interval], r: &Q, prec: u32) -> Result<Interval> {
    let (n, d) = ratio_parts(r)?;
    let mut acc = Interval::zero();
    for x in v {
        acc = acc.add(&x.pow_ratio(n, d, prec), prec);
    }
    Ok(acc.pow_ratio(d, n, prec))
}

/// `|u^1 ... u^k|_r <= |u^1|_{s_1} ... |u^k|_{s_k}` with `sum 1/s_i = 1/r`.
/// Returns `false` only on a certified violation; a comparison that stays
/// undecided up to `max_prec` bits (an equality case) counts as holding.
pub fn holder_check(vectors: &[Vec<Q>], exponents: &[Q], r: &Q, max_prec: u32) -> Result<bool> {
    if vectors.is_empty() || vectors.len() != exponents.len() {
        return Err(Error::BadParameter("one exponent per vector is required".into()));
    }
    if !r.is_positive() || exponents.iter().any(|s| !s.is_positive()) {
        return Err(Error::BadParameter("exponents must be positive".into()));
    }
    let inv: Q = exponents.iter().map(|s| s.recip()).sum();
    if inv != r.recip() {
        return Err(Error::BadParameter(format!(
            "sum of 1/s_i is {} but 1/r is {}",
            to_wire(&inv),
            to_wire(&r.recip())
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::BadParameter("vectors differ in dimension".into()));
    }
    if vectors.iter().flatten().any(|x| x.is_negative()) {
        return Err(Error::BadParameter("holder_check needs nonnegative entries".into()));
    }
    let product: Vec<Q> = (0..dim).map(|j| vectors.iter().map(|v| v[j].clone()).product()).collect();
    let out = decide(64, max_prec, "Hölder inequality", |prec| {
        let pt = |v: &[Q]| v.iter().cloned().map(Interval::point).collect::<Vec<_>>();
        let lhs = lp_norm(&pt(&product), r, prec).ok()?;
        let mut rhs = Interval::one();
        for (v, s) in vectors.iter().zip(exponents) {
            rhs = rhs.mul(&lp_norm(&pt(v), s, prec).ok()?, prec);
        }
        lhs.le(&rhs)
    });
    match out {
        Ok(b) => Ok(b),
        Err(Error::PrecisionExhausted { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

type BoxFn<'a, T> = Box<dyn Fn(&[Interval]) -> T + Sync + 'a>;

/// A function to bound from below on boxes: natural interval extension plus
/// an optional gradient enclosure for the mean-value form. `None` means the
/// box lies outside the domain.
struct Target<'a> {
    eval: BoxFn<'a, Option<Interval>>,
    grad: Option<BoxFn<'a, Vec<Interval>>>,
    /// Boxes this returns `true` for are settled by a separate argument.
    settled: Option<BoxFn<'a, bool>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxOutcome {
    /// `Some(true)`: proved on the domain. `Some(false)`: a point with a
    /// certified negative value was found. `None`: budget exhausted.
    pub certified: Option<bool>,
    pub boxes: usize,
    /// Smallest certified lower bound over the accepted boxes.
    pub min_margin: Option<f64>,
    pub witness: Option<Vec<f64>>,
}

fn midpoint(b: &[Interval]) -> Vec<Interval> {
    b.iter().map(|x| Interval::point((x.lo() + x.hi()) / qi(2))).collect()
}

fn lower_bound(t: &Target, b: &[Interval], prec: u32) -> Option<Interval> {
    let nat = (t.eval)(b)?;
    let Some(g) = &t.grad else { return Some(nat) };
    let m = midpoint(b);
    let Some(fm) = (t.eval)(&m) else { return Some(nat) };
    let mut c = fm;
    for ((gi, xi), mi) in g(b).iter().zip(b).zip(&m) {
        let d = Interval::new(xi.lo() - mi.lo(), xi.hi() - mi.lo());
        c = c.add(&gi.mul(&d, prec), prec);
    }
    // only the lower end is used
    let lo = nat.lo().clone().max(c.lo().clone());
    let hi = nat.hi().clone().max(lo.clone());
    Some(Interval::new(lo, hi))
}

type BoxKey = Vec<(Q, Q)>;

/// Best-first branch and bound proving `f >= 0` on `domain`.
fn prove_nonneg(t: &Target, domain: Vec<Interval>, prec: u32, budget: usize) -> BoxOutcome {
    let mut heap: BinaryHeap<(Reverse<Q>, BoxKey)> = BinaryHeap::new();
    let key = |b: &[Interval]| b.iter().map(|x| (x.lo().clone(), x.hi().clone())).collect::<Vec<_>>();
    let mut boxes = 0usize;
    let mut min_margin: Option<Q> = None;
    let push = |heap: &mut BinaryHeap<_>,
                b: Vec<Interval>,
                boxes: &mut usize,
                min_margin: &mut Option<Q>|
     -> Option<BoxOutcome> {
        *boxes += 1;
        if t.settled.as_ref().is_some_and(|s| s(&b)) {
            return None;
        }
        let f = lower_bound(t, &b, prec)?;
        if !f.lo().is_negative() {
            if min_margin.as_ref().is_none_or(|m| f.lo() < m) {
                *min_margin = Some(f.lo().clone());
            }
            return None;
        }
        let m = midpoint(&b);
        if let Some(fm) = (t.eval)(&m) {
            if fm.hi().is_negative() {
                return Some(BoxOutcome {
                    certified: Some(false),
                    boxes: *boxes,
                    min_margin: None,
                    witness: Some(m.iter().map(|x| x.midpoint_f64()).collect()),
                });
            }
        }
        heap.push((Reverse(f.lo().clone()), key(&b)));
        None
    };
    if let Some(out) = push(&mut heap, domain, &mut boxes, &mut min_margin) {
        return out;
    }
    while let Some((_, b)) = heap.pop() {
        if boxes >= budget {
            return BoxOutcome { certified: None, boxes, min_margin: None, witness: None };
        }
        let b: Vec<Interval> = b.into_iter().map(|(l, h)| Interval::new(l, h)).collect();
        let (i, _) = b.iter().enumerate().max_by(|x, y| x.1.width().cmp(&y.1.width())).expect("non-empty box");
        let (l, r) = b[i].bisect();
        for half in [l, r] {
            let mut nb = b.clone();
            nb[i] = half;
            if let Some(out) = push(&mut heap, nb, &mut boxes, &mut min_margin) {
                return out;
            }
        }
    }
    BoxOutcome { certified: Some(true), boxes, min_margin: min_margin.and_then(|m| m.to_f64()), witness: None }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub statement: String,
    pub domain: String,
    #[serde(flatten)]
    pub outcome: BoxOutcome,
}

impl InequalityReport {
    pub fn holds(&self) -> bool {
        self.outcome.certified == Some(true)
    }
}

/// Shared constants for one `eps`.
struct Consts {
    eps: Q,
    prec: u32,
    s: Interval,
    r2: Interval,
}

impl Consts {
    fn new(eps: &Q, prec: u32) -> Self {
        Consts {
            eps: eps.clone(),
            prec,
            s: Interval::point(qi(20) * eps).sqrt(prec),
            r2: Interval::point(q(1, 2)).sqrt(prec),
        }
    }

    fn c(&self, a: i64, b: i64) -> Q {
        // a + b eps
        qi(a) + qi(b) * &self.eps
    }
}

fn balanced_o(k: &Consts, budget: usize) -> InequalityReport {
    let prec = k.prec;
    let lo = qi(20) * &k.eps;
    let hi = lo.recip();
    let c = k.c(1, 5);
    let t = Target {
        eval: Box::new(move |b: &[Interval]| {
            Some(Interval::one().add(&b[0], prec).sqrt(prec).sub(&Interval::point(c.clone()), prec))
        }),
        grad: None,
        settled: None,
    };
    InequalityReport {
        name: "balanced_o".into(),
        statement: "(1 + 5 eps) a <= sqrt(a^2 + b^2), balanced".into(),
        domain: "t = (b/a)^2 in [20 eps, 1/(20 eps)]".into(),
        outcome: prove_nonneg(&t, vec![Interval::new(lo, hi)], prec, budget),
    }
}

fn unbalanced_p(k: &Consts, budget: usize) -> InequalityReport {
    let prec = k.prec;
    let coef = k.r2.mul_q(&k.c(1, 2), prec);
    let coef2 = coef.clone();
    let t = Target {
        eval: Box::new(move |b: &[Interval]| {
            let lhs = Interval::one().add(&b[0].square(prec), prec).sqrt(prec);
            Some(lhs.sub(&coef.mul(&Interval::one().add(&b[0], prec), prec), prec))
        }),
        grad: Some(Box::new(move |b: &[Interval]| {
            let r = Interval::one().add(&b[0].square(prec), prec).sqrt(prec);
            vec![b[0].div(&r, prec).expect("r >= 1").sub(&coef2, prec)]
        })),
        settled: None,
    };
    InequalityReport {
        name: "unbalanced_p".into(),
        statement: "(1 + 2 eps)(a + b)/sqrt 2 <= sqrt(a^2 + b^2), unbalanced".into(),
        domain: "t = b/a in [0, sqrt(20 eps)]".into(),
        outcome: prove_nonneg(&t, vec![Interval::new(Q::zero(), k.s.hi().clone())], prec, budget),
    }
}

fn switch_to_unbalanced(k: &Consts, budget: usize) -> InequalityReport {
    let prec = k.prec;
    let te = qi(20) * &k.eps;
    let (c0, c1) = (k.c(1, -1), qi(6) * &k.eps);
    let (te2, c1g) = (te.clone(), c1.clone());
    let t = Target {
        eval: Box::new(move |b: &[Interval]| {
            let r = Interval::one().add(&b[0].square(prec).mul_q(&te, prec), prec).sqrt(prec);
            Some(r.sub(&b[0].mul_q(&c1, prec).add(&Interval::point(c0.clone()), prec), prec))
        }),
        grad: Some(Box::new(move |b: &[Interval]| {
            let r = Interval::one().add(&b[0].square(prec).mul_q(&te2, prec), prec).sqrt(prec);
            vec![b[0].mul_q(&te2, prec).div(&r, prec).expect("r >= 1").sub(&Interval::point(c1g.clone()), prec)]
        })),
        settled: None,
    };
    InequalityReport {
        name: "switch_to_unbalanced".into(),
        statement: "(1 - eps) a + 6 eps a_o <= sqrt(a^2 + b^2), unbalanced after balanced".into(),
        domain: "x = a_o/a in [0, 1], b >= sqrt(20 eps) a_o".into(),
        outcome: prove_nonneg(&t, vec![Interval::new(Q::zero(), Q::one())], prec, budget),
    }
}

fn switch_to_balanced(k: &Consts, budget: usize) -> InequalityReport {
    let prec = k.prec;
    let te = qi(20) * &k.eps;
    let c1 = k.c(1, -4);
    let c2 = qi(6) * &k.eps;
    let s = k.s.clone();
    let r2 = k.r2.clone();
    // for x + y >= z0: sqrt(x^2 + y^2) >= (x + y)/sqrt 2 and 4 eps z0 >= 6 eps (1 + s)
    let z0 = q(3, 2) * (Q::one() + s.hi());
    let outside = {
        let te = te.clone();
        move |b: &[Interval]| -> bool {
            let (x, y) = (&b[0], &b[1]);
            let y_hi2 = y.hi() * y.hi();
            let y_lo2 = y.lo() * y.lo();
            y_hi2 < &te * x.lo() * x.lo() || &te * &y_lo2 > x.hi() * x.hi()
        }
    };
    let min_s = {
        let s = s.clone();
        move |y: &Interval| -> Interval { y.min(&s) }
    };
    let (c1e, c2e, r2e, min_e) = (c1.clone(), c2.clone(), r2.clone(), min_s.clone());
    let eval = move |b: &[Interval]| -> Option<Interval> {
        if outside(b) {
            return None;
        }
        let (x, y) = (&b[0], &b[1]);
        let r = x.square(prec).add(&y.square(prec), prec).sqrt(prec);
        let old = Interval::one().add(&min_e(y), prec).mul_q(&c2e, prec);
        let lhs = x.add(y, prec).mul_q(&c1e, prec).add(&old, prec).mul(&r2e, prec);
        Some(r.sub(&lhs, prec))
    };
    let (c1g, c2g, r2g) = (c1.clone(), c2.clone(), r2.clone());
    let sg = s.clone();
    let grad = move |b: &[Interval]| -> Vec<Interval> {
        let (x, y) = (&b[0], &b[1]);
        let r = x.square(prec).add(&y.square(prec), prec).sqrt(prec);
        let lin = r2g.mul_q(&c1g, prec);
        let dx = x.div(&r, prec).expect("x >= 1").sub(&lin, prec);
        // d/dy min(s, y) is 1 below s and 0 above
        let dmin = if y.hi() <= sg.lo() {
            Interval::one()
        } else if y.lo() >= sg.hi() {
            Interval::zero()
        } else {
            Interval::new(Q::zero(), Q::one())
        };
        let dy = y.div(&r, prec).expect("x >= 1").sub(&lin, prec).sub(&dmin.mul_q(&c2g, prec).mul(&r2g, prec), prec);
        vec![dx, dy]
    };
    let zs = z0.clone();
    let settled = move |b: &[Interval]| b[0].lo() + b[1].lo() >= zs;
    let t = Target { eval: Box::new(eval), grad: Some(Box::new(grad)), settled: Some(Box::new(settled)) };
    let domain = vec![Interval::new(Q::one(), z0.clone()), Interval::new(Q::zero(), z0.clone())];
    // the settling argument itself: 4 eps z0 >= 6 eps (1 + s_hi), exact
    let lemma = qi(4) * &z0 >= qi(6) * (Q::one() + s.hi());
    let mut outcome = prove_nonneg(&t, domain, prec, budget);
    if !lemma && outcome.certified == Some(true) {
        outcome.certified = None;
    }
    InequalityReport {
        name: "switch_to_balanced".into(),
        statement: "(1 - 4 eps)(a + b)/sqrt 2 + 6 eps (a_o + b_o)/sqrt 2 <= sqrt(a^2 + b^2), balanced after unbalanced"
            .into(),
        domain: "a_o = 1, b_o <= min(sqrt(20 eps), b), a >= 1, (a, b) balanced".into(),
        outcome,
    }
}

fn coefficients(k: &Consts) -> InequalityReport {
    let prec = k.prec;
    let alpha = k.r2.add(&Interval::point(&k.eps / qi(2)), prec);
    let unbalanced = k.r2.mul_q(&(k.c(1, -1) * k.c(1, 2)), prec);
    let balanced = k.r2.mul_q(&(k.c(1, 5) * k.c(1, -4)), prec);
    let a = alpha.le(&unbalanced);
    let b = alpha.le(&balanced);
    let certified = match (a, b) {
        (Some(true), Some(true)) => Some(true),
        (Some(false), _) | (_, Some(false)) => Some(false),
        _ => None,
    };
    let margin = unbalanced.sub(&alpha, prec).lo().clone().min(balanced.sub(&alpha, prec).lo().clone());
    InequalityReport {
        name: "product".into(),
        statement: "(1 - eps)(1 + 2 eps)/sqrt 2 and (1 + 5 eps)(1 - 4 eps)/sqrt 2 are >= 1/sqrt 2 + eps/2".into(),
        domain: "both regimes".into(),
        outcome: BoxOutcome { certified, boxes: 1, min_margin: margin.to_f64(), witness: None },
    }
}

/// Certify every condition for one `eps` at `prec` bits with at most
/// `budget` boxes per inequality.
pub fn certify_conditions(eps: &Q, prec: u32, budget: usize) -> Vec<InequalityReport> {
    let k = Consts::new(eps, prec);
    vec![
        balanced_o(&k, budget),
        unbalanced_p(&k, budget),
        switch_to_unbalanced(&k, budget),
        switch_to_balanced(&k, budget),
        coefficients(&k),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_cases() {
        let h = q(1, 2);
        assert!(cauchy_check(&h, &h, &h, &h).unwrap());
        // (sqrt(1/9) + sqrt(4/9))^2 = 1 with p + q = u + v = 1
        let (p, qq) = (q(1, 3), q(2, 3));
        assert!(cauchy_check(&p, &qq, &p, &qq).unwrap());
        assert!(cauchy_check(&qi(1), &qi(0), &qi(0), &qi(1)).unwrap());
        assert!(cauchy_check(&qi(-1), &qi(0), &qi(0), &qi(1)).is_err());
    }

    #[test]
    fn holder_cases() {
        let v = vec![vec![q(1, 2), q(1, 3)], vec![q(1, 5), qi(1)]];
        assert!(holder_check(&v, &[qi(2), qi(2)], &qi(1), 256).unwrap());
        let w = vec![vec![q(1, 2), q(1, 3)]; 3];
        assert!(holder_check(&w, &[qi(3), qi(3), qi(3)], &qi(1), 256).unwrap());
        assert!(holder_check(&v, &[qi(2), qi(3)], &qi(1), 256).is_err());
        // equality: u = v gives |u^2|_1 = |u|_2^2
        assert!(holder_check(&[vec![q(1, 2)], vec![q(1, 2)]], &[qi(2), qi(2)], &qi(1), 128).unwrap());
    }

    #[test]
    fn small_eps_certifies() {
        for r in certify_conditions(&q(1, 256), 128, 20_000) {
            assert!(r.holds(), "{} {:?}", r.name, r.outcome);
        }
    }

    #[test]
    fn switch_to_balanced_fails_beyond_one_over_180() {
        let k = Consts::new(&q(1, 150), 128);
        let r = switch_to_balanced(&k, 20_000);
        assert_eq!(r.outcome.certified, Some(false), "{:?}", r.outcome);
        let k = Consts::new(&q(1, 150), 128);
        assert!(balanced_o(&k, 1000).holds());
    }
}
