//! The DAE problem ẋ = a(t) f(x,y) + λ h(t,x,y), g(x,y) = 0: construction,
//! validation, evaluation of F = (f, g) and its Jacobian, the three built-in
//! problems, the Θ_b change of variables and the problem-file format.

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::linalg::Mat;
use crate::quad;
use std::collections::BTreeMap;
use std::fmt;

/// A point split into its differentiated part p ∈ ℝᵏ and algebraic part q ∈ ℝˢ.
#[derive(Clone, Debug, PartialEq)]
pub struct PointKS {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PointKS {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        PointKS { p, q }
    }

    pub fn from_concat(k: usize, z: &[f64]) -> Self {
        PointKS {
            p: z[..k].to_vec(),
            q: z[k..].to_vec(),
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut z = self.p.clone();
        z.extend_from_slice(&self.q);
        z
    }
}

impl fmt::Display for PointKS {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.p.iter().chain(&self.q).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6}")?;
        }
        write!(f, ")")
    }
}

/// Product of open intervals; bounds may be ±∞.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidProblem(
                "domain bounds have mismatched lengths".into(),
            ));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo < hi) {
                return Err(Error::InvalidProblem(format!(
                    "empty domain interval ({lo}, {hi})"
                )));
            }
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        DomainBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Index of the first violated component, if any (open intervals).
    pub fn violation(&self, z: &[f64]) -> Option<usize> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .position(|(v, (lo, hi))| !(v > lo && v < hi))
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.violation(z).is_none()
    }

    /// Replace infinite bounds by ±half_width for searches; finite bounds
    /// are kept. The cap is reported alongside results, never silent.
    pub fn capped(&self, half_width: f64) -> DomainBox {
        DomainBox {
            lower: self
                .lower
                .iter()
                .map(|&v| if v.is_finite() { v } else { -half_width })
                .collect(),
            upper: self
                .upper
                .iter()
                .map(|&v| if v.is_finite() { v } else { half_width })
                .collect(),
        }
    }

    pub fn is_capped_anywhere(&self) -> bool {
        self.lower.iter().chain(&self.upper).any(|v| !v.is_finite())
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Jacobian blocks of F = (f, g) at a point: ∂₁f (k×k), ∂₂f (k×s),
/// ∂₁g (s×k), ∂₂g (s×s).
#[derive(Clone, Debug)]
pub struct JacBlocks {
    pub d1f: Mat,
    pub d2f: Mat,
    pub d1g: Mat,
    pub d2g: Mat,
}

impl JacBlocks {
    /// Assemble the full (k+s)×(k+s) Jacobian [[∂₁f, ∂₂f], [∂₁g, ∂₂g]].
    pub fn full(&self) -> Mat {
        let k = self.d1f.rows();
        let s = self.d1g.rows();
        Mat::from_fn(k + s, k + s, |i, j| match (i < k, j < k) {
            (true, true) => self.d1f[(i, j)],
            (true, false) => self.d2f[(i, j - k)],
            (false, true) => self.d1g[(i - k, j)],
            (false, false) => self.d2g[(i - k, j - k)],
        })
    }
}

/// A validated problem. Immutable after construction; shareable across threads.
#[derive(Clone, Debug)]
pub struct DaeProblem {
    k: usize,
    s: usize,
    f: Vec<Compiled>,
    g: Vec<Compiled>,
    h: Vec<Compiled>,
    a: Compiled,
    f_src: Vec<Expr>,
    g_src: Vec<Expr>,
    h_src: Vec<Expr>,
    a_src: Expr,
    period: f64,
    domain: DomainBox,
    a_mean: f64,
    name: Option<String>,
}

const PERIODICITY_SAMPLES: usize = 64;
const PERIODICITY_TOL: f64 = 1e-9;

impl DaeProblem {
    /// Validate and compile a problem. Expressions for f and g live in
    /// (x1..xk, y1..ys); h additionally sees t; a sees only t. With k = 1 the
    /// alias `x` for `x1` is accepted, and likewise `y` for `y1` when s = 1.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        s: usize,
        f: Vec<Expr>,
        g: Vec<Expr>,
        h: Vec<Expr>,
        a: Expr,
        period: f64,
        domain: DomainBox,
    ) -> Result<DaeProblem> {
        if k == 0 || s == 0 {
            return Err(Error::InvalidProblem(
                "dimensions k and s must be positive".into(),
            ));
        }
        if f.len() != k {
            return Err(Error::InvalidProblem(format!(
                "expected {k} components of f, found {}",
                f.len()
            )));
        }
        if g.len() != s {
            return Err(Error::InvalidProblem(format!(
                "expected {s} components of g, found {}",
                g.len()
            )));
        }
        if h.len() != k {
            return Err(Error::InvalidProblem(format!(
                "expected {k} components of h, found {}",
                h.len()
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "period must be a positive real, got {period}"
            )));
        }
        if domain.dim() != k + s {
            return Err(Error::InvalidProblem(format!(
                "domain box has dimension {}, expected k+s = {}",
                domain.dim(),
                k + s
            )));
        }

        let resolve = |e: &Expr| -> Expr {
            let mut e = e.clone();
            if k == 1 {
                e = e.substitute("x", &Expr::var("x1"));
            }
            if s == 1 {
                e = e.substitute("y", &Expr::var("y1"));
            }
            e
        };
        let f_src: Vec<Expr> = f.iter().map(&resolve).collect();
        let g_src: Vec<Expr> = g.iter().map(&resolve).collect();
        let h_src: Vec<Expr> = h.iter().map(&resolve).collect();
        let a_src = a;

        let state_vars = state_var_names(k, s);
        let th_vars = th_var_names(k, s);
        let f_c = f_src
            .iter()
            .map(|e| Compiled::new(e, &state_vars))
            .collect::<Result<Vec<_>>>()?;
        let g_c = g_src
            .iter()
            .map(|e| Compiled::new(e, &state_vars))
            .collect::<Result<Vec<_>>>()?;
        let h_c = h_src
            .iter()
            .map(|e| Compiled::new(e, &th_vars))
            .collect::<Result<Vec<_>>>()?;
        let a_c = Compiled::new(&a_src, &["t".to_string()])?;

        // a must be T-periodic with nonzero average.
        for i in 0..PERIODICITY_SAMPLES {
            let t = period * i as f64 / PERIODICITY_SAMPLES as f64;
            let v0 = a_c.eval(&[t])?;
            let v1 = a_c.eval(&[t + period])?;
            if !((v0 - v1).abs() <= PERIODICITY_TOL) {
                return Err(Error::InvalidProblem(format!(
                    "a is not T-periodic: |a({t:.6}) - a({:.6})| = {:.3e}",
                    t + period,
                    (v0 - v1).abs()
                )));
            }
        }
        let (integral, _) = quad::integrate(
            |t| a_c.eval(&[t]).unwrap_or(f64::NAN),
            0.0,
            period,
            1e-12,
        );
        let a_mean = integral / period;
        if !(a_mean.abs() > 1e-10) {
            return Err(Error::InvalidProblem(format!(
                "mean of a over one period is {a_mean:.3e}; it must be nonzero"
            )));
        }

        // h must be T-periodic in t; sampled componentwise at a handful of
        // deterministic state points inside the capped domain.
        let capped = domain.capped(10.0);
        let mut probes = vec![capped.center()];
        for seed in 0..4u64 {
            let z: Vec<f64> = (0..k + s)
                .map(|j| {
                    let frac = fract_hash(seed * 131 + j as u64);
                    capped.lower[j] + (0.05 + 0.9 * frac) * (capped.upper[j] - capped.lower[j])
                })
                .collect();
            probes.push(z);
        }
        let mut th_vals = vec![0.0; 1 + k + s];
        for z in &probes {
            th_vals[1..].copy_from_slice(z);
            for i in 0..PERIODICITY_SAMPLES {
                let t = period * i as f64 / PERIODICITY_SAMPLES as f64;
                for (ci, comp) in h_c.iter().enumerate() {
                    th_vals[0] = t;
                    let v0 = match comp.eval(&th_vals) {
                        Ok(v) => v,
                        Err(_) => continue, // probe outside h's domain of definition
                    };
                    th_vals[0] = t + period;
                    let v1 = match comp.eval(&th_vals) {
                        Ok(v) => v,
                        Err(_) => continue,
                    };
                    if !((v0 - v1).abs() <= PERIODICITY_TOL) {
                        return Err(Error::InvalidProblem(format!(
                            "h{} is not T-periodic in t (difference {:.3e} at t = {:.6})",
                            ci + 1,
                            (v0 - v1).abs(),
                            t
                        )));
                    }
                }
            }
        }

        Ok(DaeProblem {
            k,
            s,
            f: f_c,
            g: g_c,
            h: h_c,
            a: a_c,
            f_src,
            g_src,
            h_src,
            a_src,
            period,
            domain,
            a_mean,
            name: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.k + self.s
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn a_mean(&self) -> f64 {
        self.a_mean
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn f_sources(&self) -> &[Expr] {
        &self.f_src
    }

    pub fn g_sources(&self) -> &[Expr] {
        &self.g_src
    }

    pub fn h_sources(&self) -> &[Expr] {
        &self.h_src
    }

    pub fn a_source(&self) -> &Expr {
        &self.a_src
    }

    pub fn eval_a(&self, t: f64) -> Result<f64> {
        self.a.eval(&[t])
    }

    pub fn eval_f(&self, z: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(z.len(), self.dim());
        self.f.iter().map(|c| c.eval(z)).collect()
    }

    pub fn eval_g(&self, z: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(z.len(), self.dim());
        self.g.iter().map(|c| c.eval(z)).collect()
    }

    pub fn eval_h(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(z.len(), self.dim());
        let mut vals = Vec::with_capacity(1 + z.len());
        vals.push(t);
        vals.extend_from_slice(z);
        self.h.iter().map(|c| c.eval(&vals)).collect()
    }

    /// F(z) = (f(z), g(z)), the map whose zeros are the constant solutions.
    pub fn eval_fg(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.eval_f(z)?;
        out.extend(self.eval_g(z)?);
        Ok(out)
    }

    pub fn g_residual(&self, z: &[f64]) -> Result<f64> {
        Ok(self
            .eval_g(z)?
            .iter()
            .fold(0.0, |m, v| m.max(v.abs())))
    }

    /// All four Jacobian blocks of F at z, from forward-mode derivatives.
    pub fn jac_blocks(&self, z: &[f64]) -> Result<JacBlocks> {
        let (k, s) = (self.k, self.s);
        let mut d1f = Mat::zeros(k, k);
        let mut d2f = Mat::zeros(k, s);
        for (i, c) in self.f.iter().enumerate() {
            for j in 0..k + s {
                let (_, d) = c.eval_with_deriv(z, j)?;
                if j < k {
                    d1f[(i, j)] = d;
                } else {
                    d2f[(i, j - k)] = d;
                }
            }
        }
        let mut d1g = Mat::zeros(s, k);
        let mut d2g = Mat::zeros(s, s);
        for (i, c) in self.g.iter().enumerate() {
            for j in 0..k + s {
                let (_, d) = c.eval_with_deriv(z, j)?;
                if j < k {
                    d1g[(i, j)] = d;
                } else {
                    d2g[(i, j - k)] = d;
                }
            }
        }
        Ok(JacBlocks { d1f, d2f, d1g, d2g })
    }

    /// Full Jacobian of F = (f, g) at z.
    pub fn jac_fg(&self, z: &[f64]) -> Result<Mat> {
        Ok(self.jac_blocks(z)?.full())
    }

    /// Built-in problems: "example-3-7", "reactor", "example-4-6".
    pub fn builtin(name: &str) -> Result<DaeProblem> {
        let mut prob = match name {
            "example-3-7" => {
                let raw = MovingConstraintDae {
                    a: Expr::parse("abs(cos(t))")?,
                    g: Expr::parse("y^5+y^3+y+x^3")?,
                    h: Expr::parse("cos(t)")?,
                    period: 2.0 * std::f64::consts::PI,
                    domain: DomainBox::new(
                        vec![-1.0, f64::NEG_INFINITY],
                        vec![f64::INFINITY, f64::INFINITY],
                    )?,
                };
                transform_theta_b(&Expr::parse("2+sin(t)")?, &raw)?
            }
            "reactor" => {
                // k1 = k3 = 1/2, k2 = 2, k4 = 1, C0 = 2, T0 = Tc = 1;
                // x = (concentration, temperature), y = reaction rate.
                let two_pi = "6.283185307179586";
                DaeProblem::new(
                    2,
                    1,
                    vec![
                        Expr::parse("0.5*(2-x1)-y")?,
                        Expr::parse("0.5*(1-x2)+2*y-0.5*(x2-1)")?,
                    ],
                    vec![Expr::parse("y-0.5*exp(-x1/x2)")?],
                    vec![
                        Expr::parse(&format!("cos({two_pi}*t)"))?,
                        Expr::parse(&format!("cos({two_pi}*t)"))?,
                    ],
                    Expr::parse(&format!("1+0.5*sin({two_pi}*t)"))?,
                    1.0,
                    DomainBox::new(
                        vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
                        vec![f64::INFINITY, f64::INFINITY, f64::INFINITY],
                    )?,
                )?
            }
            "example-4-6" => {
                let two_pi = "6.283185307179586";
                DaeProblem::new(
                    1,
                    1,
                    vec![Expr::parse("x*y^2-x^2*y")?],
                    vec![Expr::parse("y-x^3+0.5*y^3")?],
                    vec![Expr::parse(&format!("cos({two_pi}*t)"))?],
                    Expr::parse(&format!("1+0.5*sin({two_pi}*t)"))?,
                    1.0,
                    DomainBox::new(vec![-1.5, -1.5], vec![10.0, 10.0])?,
                )?
            }
            other => {
                return Err(Error::Precondition(format!(
                    "unknown builtin `{other}`; available: example-3-7, reactor, example-4-6"
                )))
            }
        };
        prob.name = Some(name.to_string());
        Ok(prob)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["example-3-7", "reactor", "example-4-6"]
    }
}

pub(crate) fn state_var_names(k: usize, s: usize) -> Vec<String> {
    let mut vars: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    vars.extend((1..=s).map(|i| format!("y{i}")));
    vars
}

fn th_var_names(k: usize, s: usize) -> Vec<String> {
    let mut vars = vec!["t".to_string()];
    vars.extend(state_var_names(k, s));
    vars
}

/// Cheap deterministic hash → [0, 1) for probe points.
pub(crate) fn fract_hash(n: u64) -> f64 {
    let mut x = n.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xD1B54A32D192ED03);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// The scalar moving-constraint problem ẋ = (a(t)/b(t)) x + λ h(t, x, y),
/// g(b(t) x, y) = 0, which the Θ_b change of variables turns into a
/// fixed-constraint problem of the standard form.
#[derive(Clone, Debug)]
pub struct MovingConstraintDae {
    pub a: Expr,
    pub g: Expr,
    pub h: Expr,
    pub period: f64,
    /// Domain of the transformed problem (in the 𝘅 = b(t)x variable).
    pub domain: DomainBox,
}

/// Θ_b: with 𝘅 = b(t) x the problem becomes
/// 𝘅̇ = ((ḃ(t)+a(t))/b(t)) 𝘅 + λ b(t) h(t, 𝘅/b(t), y), g(𝘅, y) = 0.
/// Requires b ∈ C¹, T-periodic and strictly positive. Over one period the
/// drift mean is unchanged (∫ḃ/b = 0), which is asserted numerically.
pub fn transform_theta_b(b: &Expr, raw: &MovingConstraintDae) -> Result<DaeProblem> {
    let period = raw.period;
    let t_var = ["t".to_string()];
    let b_c = Compiled::new(b, &t_var)?;
    for i in 0..PERIODICITY_SAMPLES {
        let t = period * i as f64 / PERIODICITY_SAMPLES as f64;
        let v0 = b_c.eval(&[t])?;
        if !(v0 > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "b({t:.6}) = {v0:.6e} is not strictly positive"
            )));
        }
        let v1 = b_c.eval(&[t + period])?;
        if !((v0 - v1).abs() <= PERIODICITY_TOL) {
            return Err(Error::InvalidProblem(format!(
                "b is not T-periodic: difference {:.3e} at t = {t:.6}",
                (v0 - v1).abs()
            )));
        }
    }

    let db = b.derivative("t");
    // a_new = (ḃ + a)/b
    let a_new = Expr::parse(&format!("(({}) + ({})) / ({})", db, raw.a, b))?;
    // h_new = b(t) · h(t, x/b(t), y)
    let x_over_b = Expr::parse(&format!("x1/({b})"))?;
    let h_sub = raw
        .h
        .substitute("x", &Expr::var("x1"))
        .substitute("x1", &x_over_b);
    let h_new = Expr::parse(&format!("({b}) * ({h_sub})"))?;

    let prob = DaeProblem::new(
        1,
        1,
        vec![Expr::var("x")],
        vec![raw.g.clone()],
        vec![h_new],
        a_new,
        period,
        raw.domain.clone(),
    )?;

    // mean of (ḃ+a)/b must equal mean of a/b: ∫ ḃ/b vanishes over a period
    let a_c = Compiled::new(&raw.a, &t_var)?;
    let (raw_integral, _) = quad::integrate(
        |t| {
            let av = a_c.eval(&[t]).unwrap_or(f64::NAN);
            let bv = b_c.eval(&[t]).unwrap_or(f64::NAN);
            av / bv
        },
        0.0,
        period,
        1e-12,
    );
    let raw_mean = raw_integral / period;
    if !((prob.a_mean() - raw_mean).abs() <= 1e-8) {
        return Err(Error::InvalidProblem(format!(
            "transformed drift mean {:.12e} does not match mean of a/b {:.12e}; \
             is b differentiable on [0, T]?",
            prob.a_mean(),
            raw_mean
        )));
    }
    Ok(prob)
}

/// Parse the key=value problem-file format (see docs/problem-format.md).
pub fn parse_problem_file(text: &str) -> Result<DaeProblem> {
    let mut section = String::new();
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    let mut period: Option<f64> = None;
    let mut a: Option<Expr> = None;
    let mut f_entries: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut g_entries: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut h_entries: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut domain_entries: BTreeMap<String, (f64, f64)> = BTreeMap::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| {
            Error::InvalidProblem(format!("line {}: {}", lineno + 1, msg))
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header".into()))?;
            section = name.trim().to_lowercase();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        match section.as_str() {
            "dims" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| err(format!("bad dimension `{value}`")))?;
                dims.insert(key.to_string(), n);
            }
            "period" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| err(format!("bad period `{value}`")))?;
                period = Some(v);
            }
            "a" => {
                a = Some(Expr::parse(value).map_err(|e| err(format!("in a: {e}")))?);
            }
            "f" | "g" | "h" => {
                let idx = parse_indexed_key(key, section.chars().next().unwrap())
                    .ok_or_else(|| err(format!("expected keys like {section}1, found `{key}`")))?;
                let expr = Expr::parse(value).map_err(|e| err(format!("in {key}: {e}")))?;
                match section.as_str() {
                    "f" => f_entries.insert(idx, expr),
                    "g" => g_entries.insert(idx, expr),
                    _ => h_entries.insert(idx, expr),
                };
            }
            "domain" => {
                let inner = value
                    .strip_prefix('(')
                    .and_then(|v| v.strip_suffix(')'))
                    .ok_or_else(|| err(format!("expected {key} = (lo, hi), found `{value}`")))?;
                let (lo, hi) = inner
                    .split_once(',')
                    .ok_or_else(|| err("expected two comma-separated bounds".into()))?;
                let parse_bound = |s: &str| -> Result<f64> {
                    match s.trim() {
                        "inf" | "+inf" => Ok(f64::INFINITY),
                        "-inf" => Ok(f64::NEG_INFINITY),
                        other => other
                            .parse()
                            .map_err(|_| err(format!("bad bound `{other}`"))),
                    }
                };
                domain_entries.insert(key.to_string(), (parse_bound(lo)?, parse_bound(hi)?));
            }
            "" => return Err(err("content before any [section] header".into())),
            other => return Err(err(format!("unknown section [{other}]"))),
        }
    }

    let k = *dims
        .get("k")
        .ok_or_else(|| Error::InvalidProblem("missing k in [dims]".into()))?;
    let s = *dims
        .get("s")
        .ok_or_else(|| Error::InvalidProblem("missing s in [dims]".into()))?;
    let period =
        period.ok_or_else(|| Error::InvalidProblem("missing T in [period]".into()))?;
    let a = a.ok_or_else(|| Error::InvalidProblem("missing a in [a]".into()))?;

    let collect = |entries: &BTreeMap<usize, Expr>, n: usize, what: &str| -> Result<Vec<Expr>> {
        (1..=n)
            .map(|i| {
                entries.get(&i).cloned().ok_or_else(|| {
                    Error::InvalidProblem(format!("missing {what}{i} in [{what}]"))
                })
            })
            .collect()
    };
    let f = collect(&f_entries, k, "f")?;
    let g = collect(&g_entries, s, "g")?;
    let h = collect(&h_entries, k, "h")?;

    let names = state_var_names(k, s);
    let mut lower = Vec::with_capacity(k + s);
    let mut upper = Vec::with_capacity(k + s);
    for name in &names {
        let (lo, hi) = domain_entries
            .get(name)
            .copied()
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        lower.push(lo);
        upper.push(hi);
    }
    let domain = DomainBox::new(lower, upper)?;
    DaeProblem::new(k, s, f, g, h, a, period, domain)
}

fn parse_indexed_key(key: &str, prefix: char) -> Option<usize> {
    let rest = key.strip_prefix(prefix)?;
    rest.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn builtin_3_7_shape_and_zero() {
        let prob = DaeProblem::builtin("example-3-7").unwrap();
        assert_eq!((prob.k(), prob.s()), (1, 1));
        assert!((prob.period() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        let fg = prob.eval_fg(&[0.0, 0.0]).unwrap();
        assert_eq!(fg, vec![0.0, 0.0]);
    }

    #[test]
    fn builtin_3_7_mean_drift_is_two_ln_three_over_period() {
        let prob = DaeProblem::builtin("example-3-7").unwrap();
        let want = 2.0 * 3.0f64.ln() / (2.0 * std::f64::consts::PI);
        assert!(
            (prob.a_mean() - want).abs() < 1e-8,
            "a_mean {} vs {}",
            prob.a_mean(),
            want
        );
    }

    #[test]
    fn builtin_4_6_zeros_of_fg() {
        let prob = DaeProblem::builtin("example-4-6").unwrap();
        for z in [
            vec![0.0, 0.0],
            vec![SQRT2, SQRT2],
            vec![-SQRT2, -SQRT2],
        ] {
            let fg = prob.eval_fg(&z).unwrap();
            assert!(
                fg.iter().all(|v| v.abs() <= 1e-12),
                "F{z:?} = {fg:?} is not zero"
            );
        }
        // first test point from direct substitution
        let fg = prob.eval_fg(&[1.0, 0.0]).unwrap();
        assert!((fg[0] - 0.0).abs() < 1e-15 && (fg[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_reactor_shape() {
        let prob = DaeProblem::builtin("reactor").unwrap();
        assert_eq!((prob.k(), prob.s()), (2, 1));
        // ∂₂g ≡ 1
        for z in [[1.0, 1.0, 0.3], [0.5, 2.0, 0.1], [3.0, 0.7, 0.9]] {
            let blocks = prob.jac_blocks(&z).unwrap();
            assert!((blocks.d2g[(0, 0)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(DaeProblem::builtin("nope").is_err());
    }

    #[test]
    fn jac_3_7_at_origin_is_identity() {
        let prob = DaeProblem::builtin("example-3-7").unwrap();
        let j = prob.jac_fg(&[0.0, 0.0]).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(j[(0, 1)].abs() < 1e-14);
        assert!(j[(1, 0)].abs() < 1e-14);
        assert!((j[(1, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reactor_det_identity_at_random_points() {
        // det dF = (k1-η)(k1+k3) - k1 k2 η x1/x2, η = (k3 k4/x2) e^(-k4 x1/x2)
        let prob = DaeProblem::builtin("reactor").unwrap();
        let (k1, k2, k3, k4) = (0.5, 2.0, 0.5, 1.0);
        for i in 0..20 {
            let x1 = 0.2 + 4.5 * fract_hash(1000 + i);
            let x2 = 0.2 + 4.5 * fract_hash(2000 + i);
            let y = 0.05 + 2.0 * fract_hash(3000 + i);
            let jac = prob.jac_fg(&[x1, x2, y]).unwrap();
            let det = crate::linalg::Lu::factor(&jac).det();
            let eta = (k3 * k4 / x2) * (-k4 * x1 / x2).exp();
            let want = (k1 - eta) * (k1 + k3) - k1 * k2 * eta * x1 / x2;
            assert!(
                (det - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "det {det} vs closed form {want} at ({x1}, {x2}, {y})"
            );
        }
    }

    #[test]
    fn linear_problem_has_constant_jacobian() {
        // F(z) = Mz with M = [[2, -1], [1, 3]]
        let prob = DaeProblem::new(
            1,
            1,
            vec![Expr::parse("2*x-y").unwrap()],
            vec![Expr::parse("x+3*y").unwrap()],
            vec![Expr::parse("sin(6.283185307179586*t)").unwrap()],
            Expr::parse("1").unwrap(),
            1.0,
            DomainBox::unbounded(2),
        )
        .unwrap();
        for z in [[0.0, 0.0], [1.5, -2.0], [10.0, 4.0]] {
            let j = prob.jac_fg(&z).unwrap();
            assert_eq!(
                [j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]],
                [2.0, -1.0, 1.0, 3.0]
            );
        }
    }

    #[test]
    fn jac_matches_finite_differences() {
        for name in DaeProblem::builtin_names() {
            let prob = DaeProblem::builtin(name).unwrap();
            let n = prob.dim();
            let z: Vec<f64> = (0..n).map(|j| 0.4 + 0.3 * fract_hash(j as u64 + 77)).collect();
            let jac = prob.jac_fg(&z).unwrap();
            let h = 1e-6;
            for j in 0..n {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                let fp = prob.eval_fg(&zp).unwrap();
                let fm = prob.eval_fg(&zm).unwrap();
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!(
                        (jac[(i, j)] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "{name}: J[{i},{j}] = {} vs FD {}",
                        jac[(i, j)],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn theta_b_with_unit_b_is_identity() {
        let raw = MovingConstraintDae {
            a: Expr::parse("1+0.25*cos(t)").unwrap(),
            g: Expr::parse("y+x").unwrap(),
            h: Expr::parse("sin(t)*x+y").unwrap(),
            period: 2.0 * std::f64::consts::PI,
            domain: DomainBox::unbounded(2),
        };
        let prob = transform_theta_b(&Expr::parse("1").unwrap(), &raw).unwrap();
        for i in 0..10 {
            let t = 0.63 * i as f64;
            let want = 1.0 + 0.25 * t.cos();
            assert!((prob.eval_a(t).unwrap() - want).abs() < 1e-12);
            let z = [0.3 * i as f64 - 1.0, 0.2];
            let hv = prob.eval_h(t, &z).unwrap();
            let want_h = t.sin() * z[0] + z[1];
            assert!((hv[0] - want_h).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_b_rejects_nonpositive_b() {
        let raw = MovingConstraintDae {
            a: Expr::parse("1").unwrap(),
            g: Expr::parse("y+x").unwrap(),
            h: Expr::parse("cos(t)").unwrap(),
            period: 2.0 * std::f64::consts::PI,
            domain: DomainBox::unbounded(2),
        };
        assert!(transform_theta_b(&Expr::parse("sin(t)").unwrap(), &raw).is_err());
    }

    #[test]
    fn theta_b_rejects_nonperiodic_b() {
        let raw = MovingConstraintDae {
            a: Expr::parse("1").unwrap(),
            g: Expr::parse("y+x").unwrap(),
            h: Expr::parse("cos(t)").unwrap(),
            period: 2.0 * std::f64::consts::PI,
            domain: DomainBox::unbounded(2),
        };
        assert!(transform_theta_b(&Expr::parse("2+0.1*t").unwrap(), &raw).is_err());
    }

    #[test]
    fn d2g_invertible_near_manifold_for_builtins() {
        for name in DaeProblem::builtin_names() {
            let prob = DaeProblem::builtin(name).unwrap();
            let capped = prob.domain().capped(3.0);
            let mut checked = 0;
            let mut attempt = 0u64;
            while checked < 200 && attempt < 4000 {
                attempt += 1;
                let z: Vec<f64> = (0..prob.dim())
                    .map(|j| {
                        let f = fract_hash(attempt * 31 + j as u64);
                        capped.lower[j] + f * (capped.upper[j] - capped.lower[j])
                    })
                    .collect();
                if !prob.domain().contains(&z) {
                    continue;
                }
                let blocks = match prob.jac_blocks(&z) {
                    Ok(b) => b,
                    Err(_) => continue,
                };
                let det = crate::linalg::Lu::factor(&blocks.d2g).det();
                assert!(
                    det.abs() > 1e-12,
                    "{name}: |det d2g| = {} at {:?}",
                    det.abs(),
                    z
                );
                checked += 1;
            }
            assert!(checked >= 200, "{name}: only {checked} points checked");
        }
    }

    #[test]
    fn rejects_non_periodic_a() {
        let r = DaeProblem::new(
            1,
            1,
            vec![Expr::parse("x").unwrap()],
            vec![Expr::parse("y").unwrap()],
            vec![Expr::parse("cos(t)").unwrap()],
            Expr::parse("t").unwrap(),
            1.0,
            DomainBox::unbounded(2),
        );
        assert!(matches!(r, Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn rejects_zero_mean_a() {
        let r = DaeProblem::new(
            1,
            1,
            vec![Expr::parse("x").unwrap()],
            vec![Expr::parse("y").unwrap()],
            vec![Expr::parse("cos(t)").unwrap()],
            Expr::parse("sin(6.283185307179586*t)").unwrap(),
            1.0,
            DomainBox::unbounded(2),
        );
        assert!(matches!(r, Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn problem_file_roundtrip() {
        let text = r#"
# test problem
[dims]
k = 1
s = 1
[period]
T = 1.0
[a]
a = 1+0.5*sin(6.283185307179586*t)
[f]
f1 = x*y^2-x^2*y
[g]
g1 = y-x^3+0.5*y^3
[h]
h1 = cos(6.283185307179586*t)
[domain]
x1 = (-1.5, 10)
y1 = (-1.5, 10)
"#;
        let prob = parse_problem_file(text).unwrap();
        let builtin = DaeProblem::builtin("example-4-6").unwrap();
        for z in [[0.5, 0.3], [1.2, -0.4]] {
            assert_eq!(prob.eval_fg(&z).unwrap(), builtin.eval_fg(&z).unwrap());
        }
        assert_eq!(prob.domain(), builtin.domain());
    }

    #[test]
    fn problem_file_errors_carry_line_numbers() {
        let text = "[dims]\nk = 1\ns = oops\n";
        match parse_problem_file(text) {
            Err(Error::InvalidProblem(msg)) => assert!(msg.contains("line 3")),
            other => panic!("expected invalid problem, got {other:?}"),
        }
    }
}
