//! User expressions in `t` and `x` for custom drifts.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use meval::{ContextProvider, FuncEvalError};

#[derive(Clone)]
pub struct Expr {
    inner: Arc<meval::Expr>,
    source: String,
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Expr").field(&self.source).finish()
    }
}

struct Vars {
    t: f64,
    x: f64,
}

fn unary(args: &[f64], f: fn(f64) -> f64) -> Result<f64, FuncEvalError> {
    match args {
        [a] => Ok(f(*a)),
        [] => Err(FuncEvalError::TooFewArguments),
        _ => Err(FuncEvalError::TooManyArguments),
    }
}

impl ContextProvider for Vars {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "x" => Some(self.x),
            "pi" => Some(PI),
            "e" => Some(E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        match name {
            "sin" => unary(args, f64::sin),
            "cos" => unary(args, f64::cos),
            "tan" => unary(args, f64::tan),
            "atan" => unary(args, f64::atan),
            "tanh" => unary(args, f64::tanh),
            "exp" => unary(args, f64::exp),
            "ln" => unary(args, f64::ln),
            "sqrt" => unary(args, f64::sqrt),
            "abs" => unary(args, f64::abs),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

impl Expr {
    /// Parses and test-evaluates at `(t, x) = (0.3, 0.7)` so that unknown
    /// names are reported up front.
    pub fn parse(source: &str) -> Result<Self, String> {
        let inner: meval::Expr = source.parse().map_err(|e: meval::Error| e.to_string())?;
        inner.eval_with_context(Vars { t: 0.3, x: 0.7 }).map_err(|e| e.to_string())?;
        Ok(Self { inner: Arc::new(inner), source: source.to_string() })
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.inner.eval_with_context(Vars { t, x }).unwrap_or(f64::NAN)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_drift() {
        let e = Expr::parse("0.5*cos(t)*x").unwrap();
        assert!((e.eval(1.0, 2.0) - 1.0f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(Expr::parse("y + 1").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("x +").is_err());
    }
}
