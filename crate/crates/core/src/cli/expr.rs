//! Source/target/initial-guess expressions in `x` and `y`, and the penalty
//! parameter as an expression in `h`.
//!
//! Arithmetic, `^`, `sin`, `cos`, `exp` and the constant `pi` are available
//! (plus whatever else `meval` ships). `π`, `×` and `−` are accepted as
//! spellings of `pi`, `*` and `-`.

use std::fmt;

fn normalize(text: &str) -> String {
    text.replace('π', "pi").replace('×', "*").replace('−', "-")
}

/// A parsed expression bound to the variables `x` and `y`.
pub struct CompiledExpr {
    text: String,
    func: Box<dyn Fn(f64, f64) -> f64>,
}

impl CompiledExpr {
    pub fn parse(text: &str) -> Result<Self, String> {
        let expr: meval::Expr = normalize(text)
            .parse()
            .map_err(|e: meval::Error| format!("cannot parse `{text}`: {e}"))?;
        let func = expr
            .bind2("x", "y")
            .map_err(|e| format!("cannot bind `{text}`: {e}"))?;
        Ok(Self {
            text: text.to_string(),
            func: Box::new(func),
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.func)(x, y)
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl fmt::Debug for CompiledExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CompiledExpr").field(&self.text).finish()
    }
}

/// Evaluate an expression in the mesh size `h`.
pub fn eval_in_h(text: &str, h: f64) -> Result<f64, String> {
    let expr: meval::Expr = normalize(text)
        .parse()
        .map_err(|e: meval::Error| format!("cannot parse `{text}`: {e}"))?;
    let func = expr
        .bind("h")
        .map_err(|e| format!("cannot bind `{text}`: {e}"))?;
    Ok(func(h))
}
