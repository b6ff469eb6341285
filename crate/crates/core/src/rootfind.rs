//! Bracketing scan and Brent refinement for scalar roots.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError<E> {
    #[error("root is not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("Brent iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("function evaluation failed: {0}")]
    Eval(E),
}

/// Brent's method on `[a, b]` until the bracket is narrower than `xtol`.
pub fn brent<F, E>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64, RootError<E>>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a).map_err(RootError::Eval)?;
    let mut fb = f(b).map_err(RootError::Eval)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { a, b, fa, fb });
    }
    let (mut c, mut fc) = (a, fa);
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
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b).map_err(RootError::Eval)?;
    }
    Err(RootError::NoConvergence(max_iter))
}

/// Sampled `(x, f(x))` pairs and the first sign-change interval, if any.
pub type Scan = (Vec<(f64, f64)>, Option<(f64, f64)>);

/// Evaluates `f` on `samples` evenly spaced points of `[lo, hi]` and returns
/// the sampled values together with the first bracketing pair.
pub fn first_bracket<F, E>(mut f: F, lo: f64, hi: f64, samples: usize) -> Result<Scan, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let n = samples.max(2);
    let mut values = Vec::with_capacity(n);
    let mut bracket = None;
    for i in 0..n {
        let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let v = f(t)?;
        if bracket.is_none() {
            if let Some(&(tp, vp)) = values.last() {
                let vp: f64 = vp;
                if vp == 0.0 || vp.signum() != v.signum() {
                    bracket = Some((tp, t));
                }
            }
        }
        values.push((t, v));
    }
    Ok((values, bracket))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn finds_simple_roots() {
        let r = brent(|x| Ok::<_, Infallible>(x * x - 2.0), 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = brent(|x: f64| Ok::<_, Infallible>(x.cos() - x), 0.0, 1.0, 1e-14, 100).unwrap();
        assert!((r.cos() - r).abs() < 1e-13);
    }

    #[test]
    fn rejects_unbracketed_interval() {
        let r = brent(|x| Ok::<_, Infallible>(x * x + 1.0), -1.0, 1.0, 1e-12, 50);
        assert!(matches!(r, Err(RootError::NotBracketed { .. })));
    }

    #[test]
    fn scan_reports_the_first_sign_change() {
        let (vals, br) = first_bracket(|x: f64| Ok::<_, Infallible>((x - 1.05) * (x - 3.05)), 0.0, 4.0, 41).unwrap();
        assert_eq!(vals.len(), 41);
        let (a, b) = br.unwrap();
        assert!(a < 1.05 && b > 1.05 && b - a < 0.11);
    }
}
