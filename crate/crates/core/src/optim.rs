//! One-dimensional bracketed root finding and a small box-constrained
//! quasi-Newton minimizer.

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum RootError<T> {
    /// `f(a)` and `f(b)` have the same strict sign.
    NoSignChange { a: T, fa: T, b: T, fb: T },
    NotFinite { x: T, fx: T },
    MaxIter { best: T },
}

/// Brent's method on `[a, b]`.
///
/// Terminates when the bracket is narrower than `xtol` plus a few ulps of
/// the current iterate, or when an exact zero is hit.
pub fn brent_root<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    xtol: T,
    max_iter: usize,
) -> Result<T, RootError<T>> {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let half = T::lit(0.5);
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    for (x, fx) in [(a, fa), (b, fb)] {
        if !fx.is_finite() {
            return Err(RootError::NotFinite { x, fx });
        }
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { a, fa, b, fb });
    }
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::epsilon() * b.abs() + half * xtol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when only two points differ
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qa * (qa - r) - (b - a) * (r - T::one()));
                q = (qa - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 {
            b + d
        } else {
            b + tol1.copysign(xm)
        };
        fb = f(b);
        if !fb.is_finite() {
            return Err(RootError::NotFinite { x: b, fx: fb });
        }
    }
    Err(RootError::MaxIter { best: b })
}

/// Root of a function that is negative at `0` and positive for large
/// arguments, searched on `[0, upper]` with the upper end doubled until the
/// sign changes. Returns `None` when `f(0) >= 0`, i.e. the boundary is the
/// answer.
pub fn nonnegative_root<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    upper: T,
    xtol: T,
) -> Result<Option<T>, RootError<T>> {
    let f0 = f(T::zero());
    if !f0.is_finite() {
        return Err(RootError::NotFinite { x: T::zero(), fx: f0 });
    }
    if f0 >= T::zero() {
        return Ok(None);
    }
    let mut hi = if upper > T::zero() { upper } else { T::one() };
    let mut fhi = f(hi);
    let mut expansions = 0;
    while fhi < T::zero() {
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(RootError::NoSignChange {
                a: T::zero(),
                fa: f0,
                b: hi,
                fb: fhi,
            });
        }
        hi = hi * T::lit(2.0);
        fhi = f(hi);
    }
    brent_root(f, T::zero(), hi, xtol, 500).map(Some)
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<T> {
    /// Stop once a successful step changes the objective by less than this
    /// fraction of its magnitude.
    pub rel_tol: T,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    /// Infinity norm of the projected gradient at `x`.
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

fn project<T: Real>(x: &mut [T], lower: &[T], upper: &[T]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lower[i]).min(upper[i]);
    }
}

fn projected_grad<T: Real>(x: &[T], g: &[T], lower: &[T], upper: &[T]) -> Vec<T> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lower[i] && g[i] > T::zero()) || (x[i] >= upper[i] && g[i] < T::zero()) {
                T::zero()
            } else {
                g[i]
            }
        })
        .collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Projected BFGS with an Armijo backtracking line search.
///
/// `f` returns the objective value and its gradient. Coordinates pinned at a
/// bound with the gradient pushing outward are frozen for the step.
pub fn minimize_bounded<T: Real, F: FnMut(&[T]) -> (T, Vec<T>)>(
    mut f: F,
    x0: &[T],
    lower: &[T],
    upper: &[T],
    opts: MinimizeOptions<T>,
) -> Minimum<T> {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    let identity = |n: usize| {
        let mut h = vec![T::zero(); n * n];
        for i in 0..n {
            h[i * n + i] = T::one();
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let gtol = T::lit(1e-10);

    for iter in 1..=opts.max_iter {
        let pg = projected_grad(&x, &g, lower, upper);
        let pg_norm = pg.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if pg_norm <= gtol * (T::one() + fx.abs()) {
            return Minimum {
                x,
                value: fx,
                grad_norm: pg_norm,
                iterations: iter - 1,
                converged: true,
            };
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != T::zero() || *gi == T::zero()).collect();
        let mut p: Vec<T> = (0..n)
            .map(|i| {
                if !free[i] {
                    return T::zero();
                }
                -(0..n).filter(|&j| free[j]).map(|j| h[i * n + j] * g[j]).sum::<T>()
            })
            .collect();
        if dot(&p, &g) >= T::zero() {
            h = identity(n);
            fresh = true;
            p = pg.iter().map(|&v| -v).collect();
        }

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<T> = x.iter().zip(&p).map(|(&xi, &pi)| xi + t * pi).collect();
            project(&mut xn, lower, upper);
            let (fn_, gn) = f(&xn);
            let step: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let decrease = dot(&g, &step);
            if fn_.is_finite() && fn_ <= fx + T::lit(1e-4) * decrease {
                accepted = Some((xn, fn_, gn, step));
                break;
            }
            t = t * T::lit(0.5);
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if fresh {
                // no descent possible along the projected gradient
                return Minimum {
                    x,
                    value: fx,
                    grad_norm: pg_norm,
                    iterations: iter,
                    converged: pg_norm <= T::lit(1e-6) * (T::one() + fx.abs()),
                };
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = T::one() / sy;
            let hy: Vec<T> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = h[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        let change = (fx - fn_).abs();
        x = xn;
        let prev = fx;
        fx = fn_;
        g = gn;
        if change <= opts.rel_tol * prev.abs().max(T::min_positive_value()) {
            let pg = projected_grad(&x, &g, lower, upper);
            return Minimum {
                x,
                value: fx,
                grad_norm: pg.iter().fold(T::zero(), |m, v| m.max(v.abs())),
                iterations: iter,
                converged: true,
            };
        }
    }
    let pg = projected_grad(&x, &g, lower, upper);
    Minimum {
        x,
        value: fx,
        grad_norm: pg.iter().fold(T::zero(), |m, v| m.max(v.abs())),
        iterations: opts.max_iter,
        converged: false,
    }
}
