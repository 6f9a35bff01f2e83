//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] carries the value of a function together with all of its partial
//! derivatives up to a fixed total order, with respect to up to three
//! variables. Arithmetic on jets propagates derivatives exactly (no truncation
//! error below the jet order, only f64 rounding), which is what keeps every
//! downstream curvature and ODE formula free of finite-difference noise.
//!
//! Internally a jet stores Taylor *coefficients* `c_alpha = d^alpha f / alpha!`
//! in graded-lexicographic slot order, so multiplication is a plain truncated
//! convolution. The [`partial`](Jet::partial) accessor multiplies the factorial
//! back in.

#![allow(clippy::should_implement_trait)] // fallible ops sit beside add/sub/neg
#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

pub const MAX_VARS: usize = 3;
pub const MAX_ORDER: usize = 4;
/// Number of coefficients of a full (3 vars, order 4) jet: C(3+4, 3).
pub const MAX_COEFFS: usize = 35;

/// Descriptor of a jet space: number of variables and truncation order.
///
/// Spaces are interned; all jets in one computation share a `&'static` space.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    /// Exponent multi-index of each coefficient slot, graded-lex order.
    exps: Vec<[u8; 3]>,
    /// Maps `e0 + 5*e1 + 25*e2` to slot + 1 (0 = not in this space).
    slot_of: [u16; 125],
    /// Ordered pairs `(a, b, out)` with `exps[a] + exps[b] = exps[out]`.
    prod: Vec<(u16, u16, u16)>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace({} vars, order {})", self.nvars, self.order)
    }
}

impl PartialEq for JetSpace {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
    }
}

fn key(e: [u8; 3]) -> usize {
    e[0] as usize + 5 * e[1] as usize + 25 * e[2] as usize
}

impl JetSpace {
    /// Interned space with `nvars` variables truncated at total `order`.
    ///
    /// Panics if `nvars > 3` or `order > 4`; those bounds cover everything the
    /// library needs (third-order web jets, fourth p-derivatives, second-order
    /// jets in three variables for the dual invariant).
    pub fn get(nvars: usize, order: usize) -> &'static JetSpace {
        assert!(
            (1..=MAX_VARS).contains(&nvars),
            "jet space supports 1..=3 variables"
        );
        assert!(order <= MAX_ORDER, "jet space supports order <= 4");
        static SPACES: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> =
            OnceLock::new();
        let map = SPACES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = map.lock().unwrap();
        guard
            .entry((nvars, order))
            .or_insert_with(|| Box::leak(Box::new(JetSpace::build(nvars, order))))
    }

    fn build(nvars: usize, order: usize) -> JetSpace {
        let mut exps: Vec<[u8; 3]> = Vec::new();
        for total in 0..=order {
            // graded order; lexicographic within a degree
            let mut level: Vec<[u8; 3]> = Vec::new();
            for e0 in 0..=total {
                for e1 in 0..=(total - e0) {
                    let e2 = total - e0 - e1;
                    if (nvars < 2 && e1 > 0) || (nvars < 3 && e2 > 0) {
                        continue;
                    }
                    level.push([e0 as u8, e1 as u8, e2 as u8]);
                }
            }
            level.sort();
            exps.extend(level);
        }
        let mut slot_of = [0u16; 125];
        for (i, &e) in exps.iter().enumerate() {
            slot_of[key(e)] = (i + 1) as u16;
        }
        let mut prod = Vec::new();
        for (a, &ea) in exps.iter().enumerate() {
            for (b, &eb) in exps.iter().enumerate() {
                let total =
                    (ea[0] + eb[0]) as usize + (ea[1] + eb[1]) as usize + (ea[2] + eb[2]) as usize;
                if total > order {
                    continue;
                }
                let out = slot_of[key([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]])];
                debug_assert!(out > 0);
                prod.push((a as u16, b as u16, out - 1));
            }
        }
        JetSpace {
            nvars,
            order,
            exps,
            slot_of,
            prod,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn slot(&self, e: [u8; 3]) -> Option<usize> {
        if e.iter().any(|&x| x as usize > MAX_ORDER) {
            return None;
        }
        let s = self.slot_of[key(e)];
        if s == 0 {
            None
        } else {
            Some(s as usize - 1)
        }
    }
}

/// A truncated Taylor expansion: value plus partial derivatives.
#[derive(Clone, Copy)]
pub struct Jet {
    space: &'static JetSpace,
    c: [f64; MAX_COEFFS],
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[{:?}; ", self.space)?;
        for i in 0..self.space.len() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", self.c[i])?;
        }
        write!(f, "]")
    }
}

fn factorial(n: u8) -> f64 {
    const F: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
    F[n as usize]
}

impl Jet {
    pub fn constant(space: &'static JetSpace, value: f64) -> Jet {
        let mut c = [0.0; MAX_COEFFS];
        c[0] = value;
        Jet { space, c }
    }

    /// The jet of the coordinate function `var` (0-based) at `value`.
    pub fn variable(space: &'static JetSpace, var: usize, value: f64) -> Jet {
        assert!(var < space.nvars);
        let mut c = [0.0; MAX_COEFFS];
        c[0] = value;
        if space.order >= 1 {
            let mut e = [0u8; 3];
            e[var] = 1;
            c[space.slot(e).unwrap()] = 1.0;
        }
        Jet { space, c }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative `d^alpha f` for the multi-index `alpha`.
    ///
    /// Panics if `alpha` exceeds the space order; that is a programming error,
    /// not a data error.
    pub fn partial(&self, alpha: [u8; 3]) -> f64 {
        let slot = self
            .space
            .slot(alpha)
            .expect("partial(): multi-index outside jet space");
        self.c[slot] * factorial(alpha[0]) * factorial(alpha[1]) * factorial(alpha[2])
    }

    /// First partial in variable `i`.
    pub fn d1(&self, i: usize) -> f64 {
        let mut e = [0u8; 3];
        e[i] = 1;
        self.partial(e)
    }

    /// Second partial in variables `i`, `j`.
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        let mut e = [0u8; 3];
        e[i] += 1;
        e[j] += 1;
        self.partial(e)
    }

    /// Third partial in variables `i`, `j`, `k`.
    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut e = [0u8; 3];
        e[i] += 1;
        e[j] += 1;
        e[k] += 1;
        self.partial(e)
    }

    /// Raw Taylor coefficient at `alpha` (`partial / alpha!`).
    pub fn coeff(&self, alpha: [u8; 3]) -> f64 {
        let slot = self
            .space
            .slot(alpha)
            .expect("coeff(): multi-index outside jet space");
        self.c[slot]
    }

    pub fn is_finite(&self) -> bool {
        self.c[..self.space.len()].iter().all(|x| x.is_finite())
    }

    /// Same jet with the value slot replaced (used to re-center implicit
    /// solves whose root is known to machine precision).
    pub fn with_value(mut self, v: f64) -> Jet {
        self.c[0] = v;
        self
    }

    /// Forgets derivatives above `order` (projection into a smaller space).
    pub fn truncated(&self, order: usize) -> Jet {
        assert!(order <= self.space.order);
        let target = JetSpace::get(self.space.nvars, order);
        let mut c = [0.0; MAX_COEFFS];
        c[..target.len()].copy_from_slice(&self.c[..target.len()]);
        Jet { space: target, c }
    }

    /// The jet of `df/dx_var`, one order lower than `self`.
    pub fn deriv(&self, var: usize) -> Jet {
        assert!(self.space.order >= 1, "cannot differentiate an order-0 jet");
        let target = JetSpace::get(self.space.nvars, self.space.order - 1);
        let mut c = [0.0; MAX_COEFFS];
        for (i, &e) in target.exps.iter().enumerate() {
            let mut src = e;
            src[var] += 1;
            let slot = self.space.slot(src).unwrap();
            c[i] = self.c[slot] * (e[var] as f64 + 1.0);
        }
        Jet { space: target, c }
    }

    pub fn neg(mut self) -> Jet {
        for x in self.c[..self.space.len()].iter_mut() {
            *x = -*x;
        }
        self
    }

    pub fn add(mut self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        for i in 0..self.space.len() {
            self.c[i] += rhs.c[i];
        }
        self
    }

    pub fn sub(mut self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        for i in 0..self.space.len() {
            self.c[i] -= rhs.c[i];
        }
        self
    }

    pub fn scale(mut self, k: f64) -> Jet {
        for x in self.c[..self.space.len()].iter_mut() {
            *x *= k;
        }
        self
    }

    pub fn mul(&self, rhs: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, rhs.space));
        let mut c = [0.0; MAX_COEFFS];
        for &(a, b, out) in &self.space.prod {
            c[out as usize] += self.c[a as usize] * rhs.c[b as usize];
        }
        Jet {
            space: self.space,
            c,
        }
    }

    /// `self / rhs`; fails if the denominator value is zero.
    pub fn div(&self, rhs: &Jet) -> Result<Jet> {
        if rhs.value() == 0.0 {
            return Err(Error::Singular {
                what: "division by zero".into(),
                x: f64::NAN,
                y: f64::NAN,
            });
        }
        let b0 = rhs.value();
        // 1/u = sum (-1)^k (u - u0)^k / u0^{k+1}
        let order = self.space.order;
        let mut d = [0.0; MAX_ORDER + 1];
        let mut pw = 1.0 / b0;
        for k in 0..=order {
            d[k] = if k % 2 == 0 { pw } else { -pw };
            pw /= b0;
        }
        let recip = rhs.compose_series(&d);
        Ok(self.mul(&recip))
    }

    /// Composes a univariate analytic function given by its Taylor
    /// coefficients `d_k = f^(k)(value)/k!` with this jet.
    fn compose_series(&self, d: &[f64; MAX_ORDER + 1]) -> Jet {
        let order = self.space.order;
        // hat = self - value (zero constant term)
        let mut hat = *self;
        hat.c[0] = 0.0;
        // Horner: r = d_order; r = r*hat + d_k
        let mut r = Jet::constant(self.space, d[order]);
        for k in (0..order).rev() {
            r = r.mul(&hat);
            r.c[0] += d[k];
        }
        r
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut f = 1.0;
        for k in 0..=self.space.order {
            if k > 0 {
                f *= k as f64;
            }
            d[k] = e / f;
        }
        self.compose_series(&d)
    }

    pub fn ln(&self) -> Result<Jet> {
        let u0 = self.value();
        if u0 <= 0.0 {
            return Err(Error::Singular {
                what: format!("ln of non-positive value {u0}"),
                x: f64::NAN,
                y: f64::NAN,
            });
        }
        let mut d = [0.0; MAX_ORDER + 1];
        d[0] = u0.ln();
        let mut pw = 1.0 / u0;
        for k in 1..=self.space.order {
            d[k] = if k % 2 == 1 { pw } else { -pw } / k as f64;
            pw /= u0;
        }
        Ok(self.compose_series(&d))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let u0 = self.value();
        if u0 < 0.0 || (u0 == 0.0 && self.space.order >= 1) {
            return Err(Error::Singular {
                what: format!("sqrt of non-positive value {u0}"),
                x: f64::NAN,
                y: f64::NAN,
            });
        }
        self.powf(0.5)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut d = [0.0; MAX_ORDER + 1];
        let mut f = 1.0;
        for k in 0..=self.space.order {
            if k > 0 {
                f *= k as f64;
            }
            d[k] = cycle[k % 4] / f;
        }
        self.compose_series(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let mut d = [0.0; MAX_ORDER + 1];
        let mut f = 1.0;
        for k in 0..=self.space.order {
            if k > 0 {
                f *= k as f64;
            }
            d[k] = cycle[k % 4] / f;
        }
        self.compose_series(&d)
    }

    /// Integer power; handles zero base for non-negative exponents.
    pub fn powi(&self, n: i64) -> Result<Jet> {
        if n < 0 {
            let pos = self.powi(-n)?;
            return Jet::constant(self.space, 1.0).div(&pos);
        }
        let mut result = Jet::constant(self.space, 1.0);
        let mut base = *self;
        let mut n = n as u64;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        Ok(result)
    }

    /// Real power; requires a strictly positive base value.
    pub fn powf(&self, a: f64) -> Result<Jet> {
        let u0 = self.value();
        if u0 <= 0.0 {
            return Err(Error::Singular {
                what: format!("real power of non-positive base {u0}"),
                x: f64::NAN,
                y: f64::NAN,
            });
        }
        let mut d = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0; // a(a-1)...(a-k+1)/k!
        let mut pw = u0.powf(a);
        for k in 0..=self.space.order {
            if k > 0 {
                coef *= (a - (k as f64 - 1.0)) / k as f64;
                pw /= u0;
            }
            d[k] = coef * pw;
        }
        Ok(self.compose_series(&d))
    }

    /// Evaluates this jet viewed as a polynomial in its displacement variables
    /// at the given displacement jets (which must have zero value), producing a
    /// jet in the displacements' space. This is truncated series composition.
    pub fn eval_at_displacements(&self, deltas: &[Jet]) -> Result<Jet> {
        assert_eq!(deltas.len(), self.space.nvars);
        let target = deltas[0].space;
        for d in deltas {
            debug_assert!(std::ptr::eq(d.space, target));
            if d.value() != 0.0 {
                return Err(Error::InternalCheck(
                    "eval_at_displacements: displacement jet with non-zero value".into(),
                ));
            }
        }
        // Precompute powers delta_i^k for k = 0..=order of self.
        let one = Jet::constant(target, 1.0);
        let mut powers: Vec<Vec<Jet>> = Vec::with_capacity(self.space.nvars);
        for d in deltas {
            let mut col = vec![one];
            for k in 1..=self.space.order {
                let prev = col[k - 1];
                col.push(prev.mul(d));
            }
            powers.push(col);
        }
        let mut acc = Jet::constant(target, 0.0);
        for (i, &e) in self.space.exps.iter().enumerate() {
            let coef = self.c[i];
            if coef == 0.0 {
                continue;
            }
            let mut term = powers[0][e[0] as usize];
            if self.space.nvars >= 2 {
                term = term.mul(&powers[1][e[1] as usize]);
            }
            if self.space.nvars >= 3 {
                term = term.mul(&powers[2][e[2] as usize]);
            }
            acc = acc.add(&term.scale(coef));
        }
        Ok(acc)
    }
}
