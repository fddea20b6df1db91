//! Scalar math expressions: parsing, pretty-printing, IEEE evaluation and
//! first-order forward-mode derivatives. Every Jacobian in the toolkit comes
//! from `eval_dual` / `Compiled::eval_with_deriv`, so user-supplied problem
//! files and built-ins share one differentiation mechanism.
//!
//! Supported functions: sin, cos, exp, ln, abs, sqrt. Operators: + - * / ^
//! and unary minus. `^` with a constant integer exponent is evaluated by
//! repeated multiplication (any base); any other exponent requires a positive
//! base. The derivative of abs at 0 is taken to be 0.

mod parse;

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug)]
pub(crate) enum NodeKind {
    Const(f64),
    Var(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) kind: NodeKind,
    /// Byte offset of the node in the source text, for error messages.
    pub(crate) offset: usize,
}

/// A parsed expression tree. Immutable after parse; evaluation is reentrant.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Node,
}

/// Value plus partial derivatives with respect to the seeded variables.
#[derive(Clone, Debug, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub partials: BTreeMap<String, f64>,
}

impl Expr {
    /// Parse an expression from text. Errors carry a byte offset and an
    /// expected-token message.
    pub fn parse(source: &str) -> Result<Expr> {
        parse::parse(source)
    }

    /// Build a constant expression.
    pub fn constant(value: f64) -> Expr {
        Expr {
            root: Node {
                kind: NodeKind::Const(value),
                offset: 0,
            },
        }
    }

    /// Build a bare variable reference.
    pub fn var(name: &str) -> Expr {
        Expr {
            root: Node {
                kind: NodeKind::Var(name.to_string()),
                offset: 0,
            },
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        collect_vars(&self.root, &mut set);
        set
    }

    /// IEEE-double evaluation. Domain violations (ln of a nonpositive value,
    /// sqrt of a negative, division by zero, bad powers) are reported with
    /// the byte offset of the offending node.
    pub fn eval(&self, bindings: &BTreeMap<String, f64>) -> Result<f64> {
        eval_node(&self.root, &mut |name, offset| {
            bindings
                .get(name)
                .copied()
                .ok_or_else(|| missing(name, offset))
        })
    }

    /// Forward-mode evaluation with one derivative pass per seeded variable.
    pub fn eval_dual(
        &self,
        bindings: &BTreeMap<String, f64>,
        seeds: &BTreeSet<String>,
    ) -> Result<DualValue> {
        let free = self.free_vars();
        for s in seeds {
            if !free.contains(s) {
                return Err(Error::Precondition(format!(
                    "seed `{s}` is not a free variable of the expression"
                )));
            }
        }
        let mut partials = BTreeMap::new();
        let mut value = None;
        for seed in seeds {
            let (v, d) = dual_node(&self.root, &mut |name, offset| {
                let val = bindings
                    .get(name)
                    .copied()
                    .ok_or_else(|| missing(name, offset))?;
                Ok((val, if name == seed { 1.0 } else { 0.0 }))
            })?;
            partials.insert(seed.clone(), d);
            value = Some(v);
        }
        let value = match value {
            Some(v) => v,
            None => self.eval(bindings)?,
        };
        Ok(DualValue { value, partials })
    }

    /// Structural equality ignoring source offsets; constants compare by
    /// bit pattern.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        nodes_eq(&self.root, &other.root)
    }

    /// Replace every occurrence of `var` by `replacement`.
    pub fn substitute(&self, var: &str, replacement: &Expr) -> Expr {
        Expr {
            root: substitute_node(&self.root, var, &replacement.root),
        }
    }

    /// Symbolic derivative with respect to `var`, used to build transformed
    /// problems (no simplification beyond dropping obvious zero branches is
    /// attempted). abs differentiates to arg/abs(arg), undefined at 0.
    pub fn derivative(&self, var: &str) -> Expr {
        Expr {
            root: derivative_node(&self.root, var),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print_node(&self.root, f, 0)
    }
}

fn missing(name: &str, _offset: usize) -> Error {
    Error::MissingBinding {
        name: name.to_string(),
    }
}

fn collect_vars(node: &Node, set: &mut BTreeSet<String>) {
    match &node.kind {
        NodeKind::Const(_) => {}
        NodeKind::Var(name) => {
            set.insert(name.clone());
        }
        NodeKind::Neg(inner) => collect_vars(inner, set),
        NodeKind::Bin(_, a, b) => {
            collect_vars(a, set);
            collect_vars(b, set);
        }
        NodeKind::Call(_, a) => collect_vars(a, set),
    }
}

fn nodes_eq(a: &Node, b: &Node) -> bool {
    match (&a.kind, &b.kind) {
        (NodeKind::Const(x), NodeKind::Const(y)) => x.to_bits() == y.to_bits(),
        (NodeKind::Var(x), NodeKind::Var(y)) => x == y,
        (NodeKind::Neg(x), NodeKind::Neg(y)) => nodes_eq(x, y),
        (NodeKind::Bin(op1, a1, b1), NodeKind::Bin(op2, a2, b2)) => {
            op1 == op2 && nodes_eq(a1, a2) && nodes_eq(b1, b2)
        }
        (NodeKind::Call(f1, a1), NodeKind::Call(f2, a2)) => f1 == f2 && nodes_eq(a1, a2),
        _ => false,
    }
}

fn substitute_node(node: &Node, var: &str, replacement: &Node) -> Node {
    let kind = match &node.kind {
        NodeKind::Const(c) => NodeKind::Const(*c),
        NodeKind::Var(name) => {
            if name == var {
                return replacement.clone();
            }
            NodeKind::Var(name.clone())
        }
        NodeKind::Neg(inner) => NodeKind::Neg(Box::new(substitute_node(inner, var, replacement))),
        NodeKind::Bin(op, a, b) => NodeKind::Bin(
            *op,
            Box::new(substitute_node(a, var, replacement)),
            Box::new(substitute_node(b, var, replacement)),
        ),
        NodeKind::Call(f, a) => NodeKind::Call(*f, Box::new(substitute_node(a, var, replacement))),
    };
    Node {
        kind,
        offset: node.offset,
    }
}

fn is_const_zero(node: &Node) -> bool {
    matches!(node.kind, NodeKind::Const(c) if c == 0.0)
}

fn mk(kind: NodeKind) -> Node {
    Node { kind, offset: 0 }
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    // Fold the most common trivial branches so derivative trees stay small.
    match op {
        BinOp::Add => {
            if is_const_zero(&a) {
                return b;
            }
            if is_const_zero(&b) {
                return a;
            }
        }
        BinOp::Sub => {
            if is_const_zero(&b) {
                return a;
            }
        }
        BinOp::Mul => {
            if is_const_zero(&a) || is_const_zero(&b) {
                return mk(NodeKind::Const(0.0));
            }
            if matches!(a.kind, NodeKind::Const(c) if c == 1.0) {
                return b;
            }
            if matches!(b.kind, NodeKind::Const(c) if c == 1.0) {
                return a;
            }
        }
        BinOp::Div | BinOp::Pow => {}
    }
    mk(NodeKind::Bin(op, Box::new(a), Box::new(b)))
}

fn derivative_node(node: &Node, var: &str) -> Node {
    match &node.kind {
        NodeKind::Const(_) => mk(NodeKind::Const(0.0)),
        NodeKind::Var(name) => mk(NodeKind::Const(if name == var { 1.0 } else { 0.0 })),
        NodeKind::Neg(inner) => {
            let d = derivative_node(inner, var);
            if is_const_zero(&d) {
                d
            } else {
                mk(NodeKind::Neg(Box::new(d)))
            }
        }
        NodeKind::Bin(op, a, b) => {
            let da = derivative_node(a, var);
            let db = derivative_node(b, var);
            match op {
                BinOp::Add => bin(BinOp::Add, da, db),
                BinOp::Sub => {
                    if is_const_zero(&db) {
                        da
                    } else {
                        bin(BinOp::Sub, da, db)
                    }
                }
                BinOp::Mul => bin(
                    BinOp::Add,
                    bin(BinOp::Mul, da, (**b).clone()),
                    bin(BinOp::Mul, (**a).clone(), db),
                ),
                BinOp::Div => {
                    // (a/b)' = (a' b - a b') / b^2
                    let num = bin(
                        BinOp::Sub,
                        bin(BinOp::Mul, da, (**b).clone()),
                        bin(BinOp::Mul, (**a).clone(), db),
                    );
                    let den = bin(
                        BinOp::Pow,
                        (**b).clone(),
                        mk(NodeKind::Const(2.0)),
                    );
                    bin(BinOp::Div, num, den)
                }
                BinOp::Pow => {
                    if let NodeKind::Const(e) = b.kind {
                        // (a^n)' = n a^(n-1) a'
                        let power = bin(
                            BinOp::Pow,
                            (**a).clone(),
                            mk(NodeKind::Const(e - 1.0)),
                        );
                        bin(BinOp::Mul, mk(NodeKind::Const(e)), bin(BinOp::Mul, power, da))
                    } else {
                        // (a^b)' = a^b (b' ln a + b a'/a), a > 0
                        let self_clone = (*node).clone();
                        let term1 = bin(
                            BinOp::Mul,
                            db,
                            mk(NodeKind::Call(Func::Ln, Box::new((**a).clone()))),
                        );
                        let term2 = bin(
                            BinOp::Div,
                            bin(BinOp::Mul, (**b).clone(), da),
                            (**a).clone(),
                        );
                        bin(BinOp::Mul, self_clone, bin(BinOp::Add, term1, term2))
                    }
                }
            }
        }
        NodeKind::Call(f, a) => {
            let da = derivative_node(a, var);
            if is_const_zero(&da) {
                return mk(NodeKind::Const(0.0));
            }
            let arg = (**a).clone();
            let outer = match f {
                Func::Sin => mk(NodeKind::Call(Func::Cos, Box::new(arg))),
                Func::Cos => mk(NodeKind::Neg(Box::new(mk(NodeKind::Call(
                    Func::Sin,
                    Box::new(arg),
                ))))),
                Func::Exp => mk(NodeKind::Call(Func::Exp, Box::new(arg))),
                Func::Ln => bin(BinOp::Div, mk(NodeKind::Const(1.0)), arg),
                Func::Abs => bin(
                    BinOp::Div,
                    arg.clone(),
                    mk(NodeKind::Call(Func::Abs, Box::new(arg))),
                ),
                Func::Sqrt => bin(
                    BinOp::Div,
                    mk(NodeKind::Const(0.5)),
                    mk(NodeKind::Call(Func::Sqrt, Box::new(arg))),
                ),
            };
            bin(BinOp::Mul, outer, da)
        }
    }
}

/// Integer power by repeated multiplication; negative exponents invert.
fn pow_int(base: f64, n: i64, offset: usize) -> Result<f64> {
    if base == 0.0 && n <= 0 {
        return Err(Error::EvalDomain {
            offset,
            message: format!("0 raised to nonpositive integer power {n}"),
        });
    }
    let mut acc = 1.0;
    let mut b = base;
    let mut e = n.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    Ok(if n < 0 { 1.0 / acc } else { acc })
}

fn as_integer(e: f64) -> Option<i64> {
    if e.fract() == 0.0 && e.abs() <= 9.0e15 {
        Some(e as i64)
    } else {
        None
    }
}

fn eval_node(node: &Node, lookup: &mut impl FnMut(&str, usize) -> Result<f64>) -> Result<f64> {
    match &node.kind {
        NodeKind::Const(c) => Ok(*c),
        NodeKind::Var(name) => lookup(name, node.offset),
        NodeKind::Neg(inner) => Ok(-eval_node(inner, lookup)?),
        NodeKind::Bin(op, a, b) => {
            let x = eval_node(a, lookup)?;
            let y = eval_node(b, lookup)?;
            apply_bin(*op, x, y, node.offset)
        }
        NodeKind::Call(f, a) => {
            let x = eval_node(a, lookup)?;
            apply_func(*f, x, node.offset)
        }
    }
}

fn apply_bin(op: BinOp, x: f64, y: f64, offset: usize) -> Result<f64> {
    match op {
        BinOp::Add => Ok(x + y),
        BinOp::Sub => Ok(x - y),
        BinOp::Mul => Ok(x * y),
        BinOp::Div => {
            if y == 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: "division by zero".into(),
                })
            } else {
                Ok(x / y)
            }
        }
        BinOp::Pow => {
            if let Some(n) = as_integer(y) {
                return pow_int(x, n, offset);
            }
            if x <= 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("nonpositive base {x:.6e} with non-integer exponent"),
                })
            } else {
                Ok(x.powf(y))
            }
        }
    }
}

fn apply_func(f: Func, x: f64, offset: usize) -> Result<f64> {
    match f {
        Func::Sin => Ok(x.sin()),
        Func::Cos => Ok(x.cos()),
        Func::Exp => Ok(x.exp()),
        Func::Ln => {
            if x <= 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("ln of nonpositive value {x:.6e}"),
                })
            } else {
                Ok(x.ln())
            }
        }
        Func::Abs => Ok(x.abs()),
        Func::Sqrt => {
            if x < 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("sqrt of negative value {x:.6e}"),
                })
            } else {
                Ok(x.sqrt())
            }
        }
    }
}

/// Single-seed forward-mode pass: returns (value, derivative).
fn dual_node(
    node: &Node,
    lookup: &mut impl FnMut(&str, usize) -> Result<(f64, f64)>,
) -> Result<(f64, f64)> {
    match &node.kind {
        NodeKind::Const(c) => Ok((*c, 0.0)),
        NodeKind::Var(name) => lookup(name, node.offset),
        NodeKind::Neg(inner) => {
            let (v, d) = dual_node(inner, lookup)?;
            Ok((-v, -d))
        }
        NodeKind::Bin(op, a, b) => {
            let (xv, xd) = dual_node(a, lookup)?;
            let (yv, yd) = dual_node(b, lookup)?;
            dual_bin(*op, xv, xd, yv, yd, node.offset)
        }
        NodeKind::Call(f, a) => {
            let (v, d) = dual_node(a, lookup)?;
            dual_func(*f, v, d, node.offset)
        }
    }
}

fn dual_bin(op: BinOp, xv: f64, xd: f64, yv: f64, yd: f64, offset: usize) -> Result<(f64, f64)> {
    match op {
        BinOp::Add => Ok((xv + yv, xd + yd)),
        BinOp::Sub => Ok((xv - yv, xd - yd)),
        BinOp::Mul => Ok((xv * yv, xd * yv + xv * yd)),
        BinOp::Div => {
            if yv == 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: "division by zero".into(),
                })
            } else {
                Ok((xv / yv, (xd * yv - xv * yd) / (yv * yv)))
            }
        }
        BinOp::Pow => {
            // An exponent with integer value and zero derivative (constants,
            // folded constants) takes the repeated-multiplication route and
            // admits any base; everything else needs ln(base).
            if yd == 0.0 {
                if let Some(n) = as_integer(yv) {
                    let value = pow_int(xv, n, offset)?;
                    let deriv = if n == 0 {
                        0.0
                    } else {
                        (n as f64) * pow_int(xv, n - 1, offset)? * xd
                    };
                    return Ok((value, deriv));
                }
            }
            if xv <= 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("nonpositive base {xv:.6e} with non-integer exponent"),
                })
            } else {
                let value = xv.powf(yv);
                Ok((value, value * (yd * xv.ln() + yv * xd / xv)))
            }
        }
    }
}

fn dual_func(f: Func, v: f64, d: f64, offset: usize) -> Result<(f64, f64)> {
    match f {
        Func::Sin => Ok((v.sin(), v.cos() * d)),
        Func::Cos => Ok((v.cos(), -v.sin() * d)),
        Func::Exp => {
            let e = v.exp();
            Ok((e, e * d))
        }
        Func::Ln => {
            if v <= 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("ln of nonpositive value {v:.6e}"),
                })
            } else {
                Ok((v.ln(), d / v))
            }
        }
        // subgradient choice: abs'(0) = 0
        Func::Abs => Ok((v.abs(), if v == 0.0 { 0.0 } else { v.signum() * d })),
        Func::Sqrt => {
            if v < 0.0 {
                Err(Error::EvalDomain {
                    offset,
                    message: format!("sqrt of negative value {v:.6e}"),
                })
            } else {
                let s = v.sqrt();
                Ok((s, 0.5 * d / s))
            }
        }
    }
}

fn precedence(kind: &NodeKind) -> u8 {
    match kind {
        NodeKind::Const(_) | NodeKind::Var(_) | NodeKind::Call(..) => 4,
        NodeKind::Neg(_) => 1,
        NodeKind::Bin(BinOp::Pow, ..) => 3,
        NodeKind::Bin(BinOp::Mul, ..) | NodeKind::Bin(BinOp::Div, ..) => 2,
        NodeKind::Bin(BinOp::Add, ..) | NodeKind::Bin(BinOp::Sub, ..) => 0,
    }
}

fn print_node(node: &Node, f: &mut fmt::Formatter<'_>, parent_prec: u8) -> fmt::Result {
    let prec = precedence(&node.kind);
    let need_parens = prec < parent_prec;
    if need_parens {
        write!(f, "(")?;
    }
    match &node.kind {
        NodeKind::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "({c})")?;
            } else {
                write!(f, "{c}")?;
            }
        }
        NodeKind::Var(name) => write!(f, "{name}")?,
        NodeKind::Neg(inner) => {
            write!(f, "-")?;
            print_node(inner, f, 2)?;
        }
        NodeKind::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", 0, 1),
                BinOp::Sub => ("-", 0, 1),
                BinOp::Mul => ("*", 2, 2),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 4, 3),
            };
            print_node(a, f, lp)?;
            write!(f, "{sym}")?;
            print_node(b, f, rp)?;
        }
        NodeKind::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            print_node(a, f, 0)?;
            write!(f, ")")?;
        }
    }
    if need_parens {
        write!(f, ")")?;
    }
    Ok(())
}

/// An expression compiled against a fixed variable ordering: variables become
/// slot indices, so repeated evaluation inside integrators avoids name lookups.
#[derive(Clone, Debug)]
pub struct Compiled {
    root: CompiledNode,
}

#[derive(Clone, Debug)]
enum CompiledNode {
    Const(f64),
    Var(usize),
    Neg(Box<CompiledNode>),
    Bin(BinOp, Box<CompiledNode>, Box<CompiledNode>, usize),
    Call(Func, Box<CompiledNode>, usize),
}

impl Compiled {
    pub fn new(expr: &Expr, vars: &[String]) -> Result<Compiled> {
        fn build(node: &Node, vars: &[String]) -> Result<CompiledNode> {
            Ok(match &node.kind {
                NodeKind::Const(c) => CompiledNode::Const(*c),
                NodeKind::Var(name) => {
                    let slot = vars.iter().position(|v| v == name).ok_or_else(|| {
                        Error::InvalidProblem(format!("variable `{name}` is not allowed here"))
                    })?;
                    CompiledNode::Var(slot)
                }
                NodeKind::Neg(inner) => CompiledNode::Neg(Box::new(build(inner, vars)?)),
                NodeKind::Bin(op, a, b) => CompiledNode::Bin(
                    *op,
                    Box::new(build(a, vars)?),
                    Box::new(build(b, vars)?),
                    node.offset,
                ),
                NodeKind::Call(f, a) => {
                    CompiledNode::Call(*f, Box::new(build(a, vars)?), node.offset)
                }
            })
        }
        Ok(Compiled {
            root: build(&expr.root, vars)?,
        })
    }

    pub fn eval(&self, vals: &[f64]) -> Result<f64> {
        fn go(node: &CompiledNode, vals: &[f64]) -> Result<f64> {
            Ok(match node {
                CompiledNode::Const(c) => *c,
                CompiledNode::Var(slot) => vals[*slot],
                CompiledNode::Neg(inner) => -go(inner, vals)?,
                CompiledNode::Bin(op, a, b, offset) => {
                    apply_bin(*op, go(a, vals)?, go(b, vals)?, *offset)?
                }
                CompiledNode::Call(f, a, offset) => apply_func(*f, go(a, vals)?, *offset)?,
            })
        }
        go(&self.root, vals)
    }

    /// Value and derivative with respect to the variable in slot `seed`.
    pub fn eval_with_deriv(&self, vals: &[f64], seed: usize) -> Result<(f64, f64)> {
        fn go(node: &CompiledNode, vals: &[f64], seed: usize) -> Result<(f64, f64)> {
            Ok(match node {
                CompiledNode::Const(c) => (*c, 0.0),
                CompiledNode::Var(slot) => (vals[*slot], if *slot == seed { 1.0 } else { 0.0 }),
                CompiledNode::Neg(inner) => {
                    let (v, d) = go(inner, vals, seed)?;
                    (-v, -d)
                }
                CompiledNode::Bin(op, a, b, offset) => {
                    let (xv, xd) = go(a, vals, seed)?;
                    let (yv, yd) = go(b, vals, seed)?;
                    dual_bin(*op, xv, xd, yv, yd, *offset)?
                }
                CompiledNode::Call(f, a, offset) => {
                    let (v, d) = go(a, vals, seed)?;
                    dual_func(*f, v, d, *offset)?
                }
            })
        }
        go(&self.root, vals, seed)
    }
}
