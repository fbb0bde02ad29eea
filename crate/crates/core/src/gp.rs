//! Genetic programming over formulaic factors: expression trees on the
//! standardized OHLCV series, exact rank-IC fitness, tournament selection
//! with elitism, and S-expression serialization.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::spearman_ic;
use crate::error::{Error, Result};
use crate::factor::FactorSource;
use crate::market::{DayBatch, Panel, Series};
use crate::num::Real;
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// Allowed lookback steps for shift/ts_mean/ts_std/delta.
pub const LOOKBACK_CHOICES: [usize; 4] = [1, 3, 5, 10];
/// Division yields 1.0 when the denominator is below this magnitude.
const PDIV_FLOOR: f64 = 1e-10;
/// Constant leaves are drawn from this closed interval.
const CONST_RANGE: (f64, f64) = (-5.0, 5.0);
/// Default tree depth bound.
pub const MAX_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    /// Value k days earlier in the window.
    Shift(usize),
    /// Mean of the trailing k values.
    TsMean(usize),
    /// Population std of the trailing k values.
    TsStd(usize),
    /// Difference against the value k days earlier.
    Delta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// Protected: returns 1.0 where |denominator| < 1e-10.
    Div,
    Max,
    Min,
}

impl BinaryOp {
    const ALL: [BinaryOp; 6] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Max,
        BinaryOp::Min,
    ];

    fn commutative(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Mul | BinaryOp::Max | BinaryOp::Min
        )
    }

    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Max => "max",
            BinaryOp::Min => "min",
        }
    }
}

/// A formulaic factor over one trailing window, evaluated per stock.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Series(Series),
    Const(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

fn series_name(s: Series) -> &'static str {
    match s {
        Series::Open => "open",
        Series::High => "high",
        Series::Low => "low",
        Series::Close => "close",
        Series::Volume => "volume",
    }
}

fn series_from_name(name: &str) -> Option<Series> {
    Series::ALL.into_iter().find(|&s| series_name(s) == name)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Series(s) => write!(f, "{}", series_name(*s)),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Unary(op, x) => match op {
                UnaryOp::Neg => write!(f, "(neg {x})"),
                UnaryOp::Abs => write!(f, "(abs {x})"),
                UnaryOp::Shift(k) => write!(f, "(shift {x} {k})"),
                UnaryOp::TsMean(k) => write!(f, "(ts_mean {x} {k})"),
                UnaryOp::TsStd(k) => write!(f, "(ts_std {x} {k})"),
                UnaryOp::Delta(k) => write!(f, "(delta {x} {k})"),
            },
            Expr::Binary(op, a, b) => write!(f, "({} {a} {b})", op.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl Expr {
    pub fn depth(&self) -> usize {
        match self {
            Expr::Series(_) | Expr::Const(_) => 1,
            Expr::Unary(_, x) => 1 + x.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Days of history needed before the window's last day.
    pub fn lookback(&self) -> usize {
        match self {
            Expr::Series(_) | Expr::Const(_) => 0,
            Expr::Unary(op, x) => {
                let inner = x.lookback();
                match op {
                    UnaryOp::Neg | UnaryOp::Abs => inner,
                    UnaryOp::Shift(k) | UnaryOp::Delta(k) => inner + k,
                    UnaryOp::TsMean(k) | UnaryOp::TsStd(k) => inner + k - 1,
                }
            }
            Expr::Binary(_, a, b) => a.lookback().max(b.lookback()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Series(_) | Expr::Const(_) => 1,
            Expr::Unary(_, x) => 1 + x.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn validate(&self, max_depth: usize) -> Result<()> {
        if self.depth() > max_depth {
            return Err(Error::InvalidConfig(format!(
                "expression depth {} exceeds bound {max_depth}",
                self.depth()
            )));
        }
        self.validate_nodes()
    }

    fn validate_nodes(&self) -> Result<()> {
        match self {
            Expr::Series(_) => Ok(()),
            Expr::Const(c) => {
                if !c.is_finite() || *c < CONST_RANGE.0 || *c > CONST_RANGE.1 {
                    return Err(Error::InvalidConfig(format!(
                        "constant {c} outside [{}, {}]",
                        CONST_RANGE.0, CONST_RANGE.1
                    )));
                }
                Ok(())
            }
            Expr::Unary(op, x) => {
                if let UnaryOp::Shift(k) | UnaryOp::TsMean(k) | UnaryOp::TsStd(k)
                | UnaryOp::Delta(k) = op
                {
                    if !LOOKBACK_CHOICES.contains(k) {
                        return Err(Error::InvalidConfig(format!(
                            "lookback {k} not in {LOOKBACK_CHOICES:?}"
                        )));
                    }
                }
                x.validate_nodes()
            }
            Expr::Binary(_, a, b) => {
                a.validate_nodes()?;
                b.validate_nodes()
            }
        }
    }

    /// Canonical form: children of commutative operators sorted by their
    /// serialized text, recursively. Never changes evaluation.
    pub fn normalize(&self) -> Expr {
        match self {
            Expr::Series(_) | Expr::Const(_) => self.clone(),
            Expr::Unary(op, x) => Expr::Unary(*op, Box::new(x.normalize())),
            Expr::Binary(op, a, b) => {
                let na = a.normalize();
                let nb = b.normalize();
                if op.commutative() && nb.to_string() < na.to_string() {
                    Expr::Binary(*op, Box::new(nb), Box::new(na))
                } else {
                    Expr::Binary(*op, Box::new(na), Box::new(nb))
                }
            }
        }
    }

    /// Clone of the subtree at preorder index `idx`.
    fn subtree(&self, idx: usize) -> &Expr {
        fn walk<'a>(e: &'a Expr, idx: &mut usize) -> Option<&'a Expr> {
            if *idx == 0 {
                return Some(e);
            }
            *idx -= 1;
            match e {
                Expr::Series(_) | Expr::Const(_) => None,
                Expr::Unary(_, x) => walk(x, idx),
                Expr::Binary(_, a, b) => walk(a, idx).or_else(|| walk(b, idx)),
            }
        }
        let mut i = idx;
        walk(self, &mut i).expect("preorder index in range")
    }

    /// New tree with the subtree at preorder index `idx` replaced.
    fn replace(&self, idx: usize, new: &Expr) -> Expr {
        fn walk(e: &Expr, idx: &mut usize, new: &Expr) -> Expr {
            if *idx == 0 {
                *idx = usize::MAX;
                return new.clone();
            }
            *idx -= 1;
            match e {
                Expr::Series(_) | Expr::Const(_) => e.clone(),
                Expr::Unary(op, x) => Expr::Unary(*op, Box::new(walk(x, idx, new))),
                Expr::Binary(op, a, b) => {
                    let left = walk(a, idx, new);
                    let right = if *idx == usize::MAX {
                        (**b).clone()
                    } else {
                        walk(b, idx, new)
                    };
                    Expr::Binary(*op, Box::new(left), Box::new(right))
                }
            }
        }
        let mut i = idx;
        walk(self, &mut i, new)
    }

    fn leaves(&self) -> Vec<Expr> {
        match self {
            Expr::Series(_) | Expr::Const(_) => vec![self.clone()],
            Expr::Unary(_, x) => x.leaves(),
            Expr::Binary(_, a, b) => {
                let mut out = a.leaves();
                out.extend(b.leaves());
                out
            }
        }
    }
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let err = |msg: String| Error::ExprParse(msg);
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| err("unexpected end of expression".into()))?
        .clone();
    *pos += 1;
    if tok != "(" {
        if tok == ")" {
            return Err(err("unexpected ')'".into()));
        }
        if let Some(s) = series_from_name(&tok) {
            return Ok(Expr::Series(s));
        }
        let c: f64 = tok
            .parse()
            .map_err(|_| err(format!("unknown leaf {tok:?}")))?;
        return Ok(Expr::Const(c));
    }
    let head = tokens
        .get(*pos)
        .ok_or_else(|| err("missing operator after '('".into()))?
        .clone();
    *pos += 1;
    let out = match head.as_str() {
        "neg" | "abs" => {
            let x = parse_tokens(tokens, pos)?;
            let op = if head == "neg" { UnaryOp::Neg } else { UnaryOp::Abs };
            Expr::Unary(op, Box::new(x))
        }
        "shift" | "ts_mean" | "ts_std" | "delta" => {
            let x = parse_tokens(tokens, pos)?;
            let raw = tokens
                .get(*pos)
                .ok_or_else(|| err(format!("{head} needs a lookback argument")))?;
            let k: usize = raw
                .parse()
                .map_err(|_| err(format!("bad lookback {raw:?}")))?;
            *pos += 1;
            let op = match head.as_str() {
                "shift" => UnaryOp::Shift(k),
                "ts_mean" => UnaryOp::TsMean(k),
                "ts_std" => UnaryOp::TsStd(k),
                _ => UnaryOp::Delta(k),
            };
            Expr::Unary(op, Box::new(x))
        }
        "add" | "sub" | "mul" | "div" | "max" | "min" => {
            let a = parse_tokens(tokens, pos)?;
            let b = parse_tokens(tokens, pos)?;
            let op = BinaryOp::ALL
                .into_iter()
                .find(|o| o.name() == head)
                .unwrap();
            Expr::Binary(op, Box::new(a), Box::new(b))
        }
        other => return Err(err(format!("unknown operator {other:?}"))),
    };
    match tokens.get(*pos) {
        Some(t) if t == ")" => {
            *pos += 1;
            Ok(out)
        }
        _ => Err(err(format!("missing ')' after {head}"))),
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(text: &str) -> Result<Expr> {
        let spaced = text.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<String> = spaced.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::ExprParse("empty expression".into()));
        }
        let mut pos = 0usize;
        let expr = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::ExprParse(format!(
                "trailing tokens after expression: {:?}",
                &tokens[pos..]
            )));
        }
        expr.validate_nodes()?;
        Ok(expr)
    }
}

/// Evaluate over an (m, 5, n) window tensor, returning each node as an
/// (m, n) value matrix; only positions at or past the node's lookback are
/// meaningful, and the root's last column is the factor.
fn eval_matrix<F: Real>(expr: &Expr, inputs: &Tensor<F>, m: usize, n: usize) -> Vec<F> {
    match expr {
        Expr::Series(s) => {
            let mut out = vec![F::zero(); m * n];
            let data = inputs.data();
            for i in 0..m {
                let from = i * 5 * n + s.index() * n;
                out[i * n..(i + 1) * n].copy_from_slice(&data[from..from + n]);
            }
            out
        }
        Expr::Const(c) => vec![F::cast(*c); m * n],
        Expr::Unary(op, x) => {
            let child = eval_matrix(x, inputs, m, n);
            let mut out = vec![F::zero(); m * n];
            match op {
                UnaryOp::Neg => {
                    for (o, &v) in out.iter_mut().zip(&child) {
                        *o = -v;
                    }
                }
                UnaryOp::Abs => {
                    for (o, &v) in out.iter_mut().zip(&child) {
                        *o = v.abs();
                    }
                }
                UnaryOp::Shift(k) => {
                    for i in 0..m {
                        for t in *k..n {
                            out[i * n + t] = child[i * n + t - k];
                        }
                    }
                }
                UnaryOp::Delta(k) => {
                    for i in 0..m {
                        for t in *k..n {
                            out[i * n + t] = child[i * n + t] - child[i * n + t - k];
                        }
                    }
                }
                UnaryOp::TsMean(k) => {
                    let kk = F::cast(*k as f64);
                    for i in 0..m {
                        for t in (k - 1)..n {
                            let mut acc = F::zero();
                            for j in (t + 1 - k)..=t {
                                acc += child[i * n + j];
                            }
                            out[i * n + t] = acc / kk;
                        }
                    }
                }
                UnaryOp::TsStd(k) => {
                    let kk = F::cast(*k as f64);
                    for i in 0..m {
                        for t in (k - 1)..n {
                            let mut acc = F::zero();
                            for j in (t + 1 - k)..=t {
                                acc += child[i * n + j];
                            }
                            let mu = acc / kk;
                            let mut var = F::zero();
                            for j in (t + 1 - k)..=t {
                                let d = child[i * n + j] - mu;
                                var += d * d;
                            }
                            out[i * n + t] = (var / kk).sqrt();
                        }
                    }
                }
            }
            out
        }
        Expr::Binary(op, a, b) => {
            let left = eval_matrix(a, inputs, m, n);
            let right = eval_matrix(b, inputs, m, n);
            let floor = F::cast(PDIV_FLOOR);
            left.iter()
                .zip(&right)
                .map(|(&x, &y)| match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y.abs() < floor {
                            F::one()
                        } else {
                            x / y
                        }
                    }
                    BinaryOp::Max => x.max(y),
                    BinaryOp::Min => x.min(y),
                })
                .collect()
        }
    }
}

/// Evaluate an expression on an (m, 5, n) window tensor, one value per row
/// (the window's last day).
pub fn eval_window<F: Real>(expr: &Expr, inputs: &Tensor<F>) -> Result<Vec<F>> {
    let shape = inputs.shape();
    if shape.len() != 3 || shape[1] != Series::ALL.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected (m, 5, n) windows, got {shape:?}"
        )));
    }
    let (m, n) = (shape[0], shape[2]);
    let lookback = expr.lookback();
    if lookback + 1 > n {
        return Err(Error::LookbackExceedsWindow {
            lookback,
            window: n,
        });
    }
    let matrix = eval_matrix(expr, inputs, m, n);
    Ok((0..m).map(|i| matrix[i * n + n - 1]).collect())
}

/// Evaluate on a day's cross-section batch.
pub fn eval_expr<F: Real>(expr: &Expr, batch: &DayBatch<F>) -> Result<Vec<F>> {
    eval_window(expr, &batch.inputs)
}

/// A GP expression usable as a factor source over a panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExprFactor {
    pub expr: Expr,
    /// Trailing-window length the expression is evaluated on.
    pub window: usize,
}

impl<F: Real> FactorSource<F> for ExprFactor {
    fn label(&self) -> String {
        format!("gp:{}", self.expr)
    }

    fn values(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)> {
        let (names, inputs) = panel.input_batch(day, self.window)?;
        Ok((names, eval_window(&self.expr, &inputs)?))
    }
}

fn random_leaf(rng: &mut ChaCha8Rng) -> Expr {
    if rng.gen::<f64>() < 0.8 {
        Expr::Series(Series::ALL[rng.gen_range(0..Series::ALL.len())])
    } else {
        Expr::Const(rng.gen_range(CONST_RANGE.0..=CONST_RANGE.1))
    }
}

fn random_k(rng: &mut ChaCha8Rng) -> usize {
    LOOKBACK_CHOICES[rng.gen_range(0..LOOKBACK_CHOICES.len())]
}

fn random_unary(rng: &mut ChaCha8Rng, child: Expr) -> Expr {
    let op = match rng.gen_range(0..6) {
        0 => UnaryOp::Neg,
        1 => UnaryOp::Abs,
        2 => UnaryOp::Shift(random_k(rng)),
        3 => UnaryOp::TsMean(random_k(rng)),
        4 => UnaryOp::TsStd(random_k(rng)),
        _ => UnaryOp::Delta(random_k(rng)),
    };
    Expr::Unary(op, Box::new(child))
}

fn random_binary(rng: &mut ChaCha8Rng, a: Expr, b: Expr) -> Expr {
    Expr::Binary(
        BinaryOp::ALL[rng.gen_range(0..BinaryOp::ALL.len())],
        Box::new(a),
        Box::new(b),
    )
}

fn grow(rng: &mut ChaCha8Rng, budget: usize, full: bool) -> Expr {
    if budget <= 1 || (!full && rng.gen::<f64>() < 0.3) {
        return random_leaf(rng);
    }
    if rng.gen::<f64>() < 0.5 {
        let child = grow(rng, budget - 1, full);
        random_unary(rng, child)
    } else {
        let a = grow(rng, budget - 1, full);
        let b = grow(rng, budget - 1, full);
        random_binary(rng, a, b)
    }
}

/// Ramped half-and-half initialization within the depth bound.
pub fn random_expr(rng: &mut ChaCha8Rng, max_depth: usize) -> Expr {
    if max_depth <= 1 {
        return random_leaf(rng);
    }
    let depth = rng.gen_range(2..=max_depth);
    let full = rng.gen::<f64>() < 0.5;
    grow(rng, depth, full)
}

/// Subtree exchange at random crossover points; offspring exceeding the
/// depth bound have the transplanted subtree collapsed to one of its
/// leaves.
pub fn crossover(
    a: &Expr,
    b: &Expr,
    rng: &mut ChaCha8Rng,
    max_depth: usize,
) -> (Expr, Expr) {
    let ia = rng.gen_range(0..a.node_count());
    let ib = rng.gen_range(0..b.node_count());
    let sub_a = a.subtree(ia).clone();
    let sub_b = b.subtree(ib).clone();
    let mut first = a.replace(ia, &sub_b);
    let mut second = b.replace(ib, &sub_a);
    if first.depth() > max_depth {
        let leaves = sub_b.leaves();
        let leaf = leaves[rng.gen_range(0..leaves.len())].clone();
        first = a.replace(ia, &leaf);
    }
    if second.depth() > max_depth {
        let leaves = sub_a.leaves();
        let leaf = leaves[rng.gen_range(0..leaves.len())].clone();
        second = b.replace(ib, &leaf);
    }
    (first, second)
}

/// Point mutation (operator or leaf swap) or subtree replacement, chosen
/// uniformly.
pub fn mutate(a: &Expr, rng: &mut ChaCha8Rng, max_depth: usize) -> Expr {
    let idx = rng.gen_range(0..a.node_count());
    if rng.gen::<f64>() < 0.5 {
        // point mutation keeps the shape
        let new_node = match a.subtree(idx) {
            Expr::Series(_) | Expr::Const(_) => random_leaf(rng),
            Expr::Unary(_, x) => random_unary(rng, (**x).clone()),
            Expr::Binary(_, l, r) => random_binary(rng, (**l).clone(), (**r).clone()),
        };
        a.replace(idx, &new_node)
    } else {
        // subtree replacement within the remaining depth budget
        let path_depth = {
            fn depth_of(e: &Expr, idx: &mut usize, depth: usize) -> Option<usize> {
                if *idx == 0 {
                    return Some(depth);
                }
                *idx -= 1;
                match e {
                    Expr::Series(_) | Expr::Const(_) => None,
                    Expr::Unary(_, x) => depth_of(x, idx, depth + 1),
                    Expr::Binary(_, l, r) => {
                        depth_of(l, idx, depth + 1).or_else(|| depth_of(r, idx, depth + 1))
                    }
                }
            }
            let mut i = idx;
            depth_of(a, &mut i, 1).expect("preorder index in range")
        };
        let budget = (max_depth + 1).saturating_sub(path_depth).max(1);
        let replacement = random_expr(rng, budget);
        a.replace(idx, &replacement)
    }
}

/// Evolution hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elitism: usize,
    pub max_depth: usize,
    /// Train days sampled once for the fitness metric.
    pub fitness_days: usize,
    /// Trailing-window length expressions see.
    pub window: usize,
    /// Forward-return horizon for fitness and validation IC.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 200,
            generations: 30,
            tournament: 5,
            crossover_prob: 0.7,
            mutation_prob: 0.2,
            elitism: 5,
            max_depth: MAX_DEPTH,
            fitness_days: 32,
            window: 30,
            horizon: 5,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.population == 0 || self.generations == 0 {
            return bad("population and generations must be >= 1");
        }
        if self.tournament == 0 || self.tournament > self.population {
            return bad("tournament size must be in [1, population]");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob)
            || !(0.0..=1.0).contains(&self.mutation_prob)
            || self.crossover_prob + self.mutation_prob > 1.0
        {
            return bad("crossover and mutation probabilities must fit in [0, 1]");
        }
        if self.elitism > self.population {
            return bad("elitism cannot exceed the population");
        }
        if self.max_depth == 0 || self.fitness_days == 0 {
            return bad("max_depth and fitness_days must be >= 1");
        }
        if self.window < 2 || self.horizon == 0 {
            return bad("window must be >= 2 and horizon >= 1");
        }
        Ok(())
    }
}

/// One survivor of the evolution, ranked by validation IC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpCandidate {
    pub expr: Expr,
    /// Mean Spearman IC over the fixed sample of train days.
    pub train_fitness: f64,
    pub val_ic: f64,
}

/// Evolution output: deduplicated candidates sorted by validation IC, plus
/// the best train fitness per generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpReport {
    pub ranked: Vec<GpCandidate>,
    pub best_fitness_trace: Vec<f64>,
}

/// Mean exact rank IC of an expression over pre-built day batches;
/// degenerate (constant) cross-sections are skipped, and an expression
/// degenerate everywhere scores 0.
pub fn expr_fitness<F: Real>(expr: &Expr, batches: &[DayBatch<F>]) -> f64 {
    let mut total = 0.0f64;
    let mut days = 0usize;
    for batch in batches {
        let values = match eval_expr(expr, batch) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let out = match spearman_ic(&values, &batch.forward_returns) {
            Ok(o) => o,
            Err(_) => return f64::NEG_INFINITY,
        };
        if !out.degenerate {
            total += out.value.to_f64_lossy();
            days += 1;
        }
    }
    if days == 0 {
        0.0
    } else {
        total / days as f64
    }
}

fn valid_random(rng: &mut ChaCha8Rng, cfg: &GpConfig) -> Expr {
    for _ in 0..100 {
        let e = random_expr(rng, cfg.max_depth);
        if e.lookback() + 1 <= cfg.window {
            return e;
        }
    }
    Expr::Series(Series::Close)
}

fn tournament_winner<'a>(
    rng: &mut ChaCha8Rng,
    scored: &'a [(Expr, f64)],
    size: usize,
) -> &'a Expr {
    let picks = sample(rng, scored.len(), size.min(scored.len()));
    let mut best: Option<usize> = None;
    for i in picks.iter() {
        best = match best {
            None => Some(i),
            Some(j) if scored[i].1 > scored[j].1 => Some(i),
            Some(j) => Some(j),
        };
    }
    &scored[best.unwrap()].0
}

/// Run the evolution loop and rank the final population by validation IC.
pub fn evolve<F: Real>(
    panel: &Panel<F>,
    train_range: Range<usize>,
    val_range: Range<usize>,
    cfg: &GpConfig,
) -> Result<GpReport> {
    cfg.validate()?;
    let train_days = panel.eligible_days(train_range, cfg.window, cfg.horizon);
    let val_days = panel.eligible_days(val_range, cfg.window, cfg.horizon);
    if train_days.is_empty() || val_days.is_empty() {
        return Err(Error::NoEligibleDays);
    }
    let mut rng = rng_for(cfg.seed, 0x6770);
    // one fixed day sample keeps fitness comparable across generations
    let fit_days: Vec<usize> = if train_days.len() <= cfg.fitness_days {
        train_days.clone()
    } else {
        sample(&mut rng, train_days.len(), cfg.fitness_days)
            .iter()
            .map(|i| train_days[i])
            .collect()
    };
    let fit_batches: Vec<DayBatch<F>> = fit_days
        .iter()
        .map(|&d| panel.day_batch(d, cfg.window, cfg.horizon))
        .collect::<Result<_>>()?;
    let val_batches: Vec<DayBatch<F>> = val_days
        .iter()
        .map(|&d| panel.day_batch(d, cfg.window, cfg.horizon))
        .collect::<Result<_>>()?;

    let population: Vec<Expr> = (0..cfg.population)
        .map(|_| valid_random(&mut rng, cfg))
        .collect();
    let mut best_trace = Vec::with_capacity(cfg.generations);

    let score = |pop: Vec<Expr>| -> Vec<(Expr, f64)> {
        let fits: Vec<f64> = pop
            .par_iter()
            .map(|e| expr_fitness(e, &fit_batches))
            .collect();
        pop.into_iter().zip(fits).collect()
    };

    let mut scored = score(population);
    for _generation in 0..cfg.generations {
        // stable elite order: fitness desc, then text asc
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&x, &y| {
            scored[y]
                .1
                .partial_cmp(&scored[x].1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| scored[x].0.to_string().cmp(&scored[y].0.to_string()))
        });
        best_trace.push(scored[order[0]].1);
        let mut next: Vec<Expr> = order[..cfg.elitism.min(order.len())]
            .iter()
            .map(|&i| scored[i].0.clone())
            .collect();
        while next.len() < cfg.population {
            let r = rng.gen::<f64>();
            if r < cfg.crossover_prob {
                let a = tournament_winner(&mut rng, &scored, cfg.tournament).clone();
                let b = tournament_winner(&mut rng, &scored, cfg.tournament).clone();
                let (mut c, mut d) = crossover(&a, &b, &mut rng, cfg.max_depth);
                if c.lookback() + 1 > cfg.window {
                    c = a.clone();
                }
                if d.lookback() + 1 > cfg.window {
                    d = b.clone();
                }
                next.push(c);
                if next.len() < cfg.population {
                    next.push(d);
                }
            } else if r < cfg.crossover_prob + cfg.mutation_prob {
                let a = tournament_winner(&mut rng, &scored, cfg.tournament).clone();
                let mut c = mutate(&a, &mut rng, cfg.max_depth);
                if c.lookback() + 1 > cfg.window {
                    c = a.clone();
                }
                next.push(c);
            } else {
                next.push(tournament_winner(&mut rng, &scored, cfg.tournament).clone());
            }
        }
        scored = score(next);
    }

    // dedupe by normalized tree, keep the best train fitness per form
    let mut seen: std::collections::BTreeMap<String, (Expr, f64)> = Default::default();
    for (expr, fit) in &scored {
        let key = expr.normalize().to_string();
        match seen.get(&key) {
            Some((_, f)) if *f >= *fit => {}
            _ => {
                seen.insert(key, (expr.clone(), *fit));
            }
        }
    }
    let mut ranked: Vec<GpCandidate> = seen
        .into_values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(expr, fit)| GpCandidate {
            expr: expr.clone(),
            train_fitness: *fit,
            val_ic: expr_fitness(expr, &val_batches),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.val_ic
            .partial_cmp(&a.val_ic)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                b.train_fitness
                    .partial_cmp(&a.train_fitness)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.expr.to_string().cmp(&b.expr.to_string()))
    });
    Ok(GpReport {
        ranked,
        best_fitness_trace: best_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    /// Toy batch: 2 stocks, window 12, hand-set series values.
    fn toy_batch() -> DayBatch<f64> {
        let n = 12;
        let mut data = Vec::new();
        for stock in 0..2 {
            let base = (stock as f64) * 10.0;
            // open, high, low, close, volume
            for s in 0..5 {
                for t in 0..n {
                    data.push(base + (s as f64) * 100.0 + t as f64);
                }
            }
        }
        DayBatch {
            date: NaiveDate::from_ymd_opt(2021, 6, 1).unwrap(),
            day: 40,
            tickers: vec!["S0000".into(), "S0001".into()],
            inputs: Tensor::from_vec(&[2, 5, n], data).unwrap(),
            forward_returns: vec![0.01, -0.02],
        }
    }

    fn parse(text: &str) -> Expr {
        text.parse().unwrap()
    }

    #[test]
    fn relative_strength_formula_by_hand() {
        let batch = toy_batch();
        let expr = parse("(div (sub low high) (shift volume 1))");
        let got = eval_expr(&expr, &batch).unwrap();
        // per stock: low - high = 100 at every t; volume[t-1] = base + 400 + 10
        assert!((got[0] - 100.0 / 410.0).abs() < 1e-12);
        assert!((got[1] - 100.0 / 420.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_protected_division() {
        let batch = toy_batch();
        let ones = eval_expr(&parse("1"), &batch).unwrap();
        assert_eq!(ones, vec![1.0, 1.0]);
        let protected = eval_expr(&parse("(div close (sub close close))"), &batch).unwrap();
        assert_eq!(protected, vec![1.0, 1.0]);
    }

    #[test]
    fn window_operators_by_hand() {
        let batch = toy_batch();
        let n = 12.0;
        // close series for stock 0 is 300 + t
        let last_close = 300.0 + n - 1.0;
        let shifted = eval_expr(&parse("(shift close 3)"), &batch).unwrap();
        assert!((shifted[0] - (last_close - 3.0)).abs() < 1e-12);
        let mean3 = eval_expr(&parse("(ts_mean close 3)"), &batch).unwrap();
        assert!((mean3[0] - (last_close - 1.0)).abs() < 1e-12);
        let delta5 = eval_expr(&parse("(delta close 5)"), &batch).unwrap();
        assert!((delta5[0] - 5.0).abs() < 1e-12);
        // linear ramp has constant std over any window
        let std3 = eval_expr(&parse("(ts_std close 3)"), &batch).unwrap();
        let expect = (2.0f64 / 3.0).sqrt();
        assert!((std3[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn lookback_bound_is_enforced() {
        let batch = toy_batch();
        // 12-day window admits lookback 11 at most
        let deep = parse("(shift (shift close 10) 3)");
        assert_eq!(deep.lookback(), 13);
        assert!(matches!(
            eval_expr(&deep, &batch),
            Err(Error::LookbackExceedsWindow { lookback: 13, window: 12 })
        ));
        let ok = parse("(shift (shift close 10) 1)");
        assert!(eval_expr(&ok, &batch).is_ok());
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let text = "(div (sub high low) (shift volume 1))";
        let expr = parse(text);
        assert_eq!(expr.to_string(), text);
        assert!("(div close".parse::<Expr>().is_err());
        assert!("(foo close open)".parse::<Expr>().is_err());
        assert!("close extra".parse::<Expr>().is_err());
        assert!("(shift close 4)".parse::<Expr>().is_err());
        assert!("(add close 9.5)".parse::<Expr>().is_err());
    }

    #[test]
    fn random_exprs_satisfy_invariants() {
        let mut rng = rng_for(7, 0);
        for _ in 0..1000 {
            let e = random_expr(&mut rng, MAX_DEPTH);
            assert!(e.depth() <= MAX_DEPTH);
            e.validate(MAX_DEPTH).unwrap();
            let round: Expr = e.to_string().parse().unwrap();
            assert_eq!(round, e);
        }
        let mut rng_a = rng_for(3, 1);
        let mut rng_b = rng_for(3, 1);
        assert_eq!(random_expr(&mut rng_a, 4), random_expr(&mut rng_b, 4));
        let mut rng_leaf = rng_for(5, 2);
        for _ in 0..50 {
            assert_eq!(random_expr(&mut rng_leaf, 1).depth(), 1);
        }
    }

    #[test]
    fn crossover_respects_depth_and_swaps_leaves() {
        let mut rng = rng_for(11, 0);
        let a = Expr::Series(Series::Close);
        let b = Expr::Const(2.0);
        let (c, d) = crossover(&a, &b, &mut rng, MAX_DEPTH);
        assert_eq!(c, b);
        assert_eq!(d, a);
        for _ in 0..300 {
            let p = random_expr(&mut rng, MAX_DEPTH);
            let q = random_expr(&mut rng, MAX_DEPTH);
            let (x, y) = crossover(&p, &q, &mut rng, MAX_DEPTH);
            assert!(x.depth() <= MAX_DEPTH, "offspring depth {}", x.depth());
            assert!(y.depth() <= MAX_DEPTH);
            x.validate(MAX_DEPTH).unwrap();
            y.validate(MAX_DEPTH).unwrap();
        }
        let mut r1 = rng_for(13, 0);
        let mut r2 = rng_for(13, 0);
        let p = random_expr(&mut r1, MAX_DEPTH);
        let q = random_expr(&mut r1, MAX_DEPTH);
        let p2 = random_expr(&mut r2, MAX_DEPTH);
        let q2 = random_expr(&mut r2, MAX_DEPTH);
        assert_eq!(crossover(&p, &q, &mut r1, 6), crossover(&p2, &q2, &mut r2, 6));
    }

    #[test]
    fn mutation_respects_depth_and_reaches_neighbor_formulas() {
        let mut rng = rng_for(17, 0);
        for _ in 0..300 {
            let p = random_expr(&mut rng, MAX_DEPTH);
            let m = mutate(&p, &mut rng, MAX_DEPTH);
            assert!(m.depth() <= MAX_DEPTH, "mutant depth {}", m.depth());
            m.validate(MAX_DEPTH).unwrap();
        }
        // a single point mutation can turn the relative-strength numerator
        // into the volume-flavored variant
        let origin = parse("(div (sub high low) (shift volume 1))");
        let target = parse("(div (sub high volume) (shift volume 1))");
        let mut found = false;
        for seed in 0..4000 {
            let mut r = rng_for(seed, 9);
            if mutate(&origin, &mut r, MAX_DEPTH) == target {
                found = true;
                break;
            }
        }
        assert!(found, "target formula unreachable by one mutation");
    }

    #[test]
    fn normalization_orders_commutative_children_only() {
        let a = parse("(add close open)");
        let b = parse("(add open close)");
        assert_eq!(a.normalize(), b.normalize());
        let sub_a = parse("(sub close open)");
        let sub_b = parse("(sub open close)");
        assert_ne!(sub_a.normalize(), sub_b.normalize());

        let batch = toy_batch();
        let mut rng = rng_for(23, 0);
        for _ in 0..200 {
            let e = random_expr(&mut rng, 5);
            if e.lookback() + 1 > batch.window() {
                continue;
            }
            let plain = eval_expr(&e, &batch).unwrap();
            let normal = eval_expr(&e.normalize(), &batch).unwrap();
            assert_eq!(plain, normal);
        }
    }

    #[test]
    fn evaluation_is_permutation_equivariant() {
        let batch = toy_batch();
        let mut swapped = batch.clone();
        swapped.tickers.reverse();
        let mut data = batch.inputs.data().to_vec();
        let half = data.len() / 2;
        data.rotate_left(half);
        swapped.inputs = Tensor::from_vec(&[2, 5, 12], data).unwrap();
        let mut rng = rng_for(29, 0);
        for _ in 0..100 {
            let e = random_expr(&mut rng, 5);
            if e.lookback() + 1 > batch.window() {
                continue;
            }
            let plain = eval_expr(&e, &batch).unwrap();
            let perm = eval_expr(&e, &swapped).unwrap();
            assert_eq!(plain[0], perm[1]);
            assert_eq!(plain[1], perm[0]);
        }
    }

    #[test]
    fn constant_population_scores_zero() {
        let batch = toy_batch();
        let fitness = expr_fitness(&Expr::Const(1.5), &[batch.clone(), batch]);
        assert_eq!(fitness, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(GpConfig::default().validate().is_ok());
        assert!(GpConfig { tournament: 0, ..GpConfig::default() }.validate().is_err());
        assert!(GpConfig { tournament: 300, ..GpConfig::default() }.validate().is_err());
        assert!(GpConfig { crossover_prob: 0.9, mutation_prob: 0.2, ..GpConfig::default() }
            .validate()
            .is_err());
        assert!(GpConfig { elitism: 201, ..GpConfig::default() }.validate().is_err());
    }

    #[test]
    fn evolution_finds_planted_reversal() {
        use crate::market::SplitSpec;
        use crate::synthetic::{generate_synthetic, SynthConfig};

        let raw: Panel<f64> = generate_synthetic(&SynthConfig {
            tickers: 20,
            days: 320,
            signal_strength: 0.5,
            seed: 7,
        })
        .unwrap();
        let split = SplitSpec {
            train_days: 200,
            val_days: 30,
            test_days: 90,
        };
        let (train, val, test) = raw.split(split).unwrap();
        let panel = raw.standardize(train.clone());
        let cfg = GpConfig {
            population: 80,
            generations: 10,
            fitness_days: 24,
            window: 12,
            seed: 3,
            ..GpConfig::default()
        };
        let report = evolve(&panel, train.clone(), val.clone(), &cfg).unwrap();
        assert!(!report.ranked.is_empty());
        // elitism keeps the best train fitness from degrading
        for w in report.best_fitness_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "trace regressed: {w:?}");
        }
        // the champion generalizes to held-out days
        let test_days = panel.eligible_days(test, cfg.window, cfg.horizon);
        let batches: Vec<_> = test_days
            .iter()
            .map(|&d| panel.day_batch(d, cfg.window, cfg.horizon).unwrap())
            .collect();
        let champ_ic = expr_fitness(&report.ranked[0].expr, &batches);
        assert!(champ_ic > 0.05, "champion test IC {champ_ic}");

        let again = evolve(&panel, train, val, &cfg).unwrap();
        assert_eq!(
            report.ranked[0].expr.to_string(),
            again.ranked[0].expr.to_string()
        );
        assert_eq!(report.best_fitness_trace, again.best_fitness_trace);

        // normalized duplicates are reported once
        let mut keys: Vec<String> = report
            .ranked
            .iter()
            .map(|c| c.expr.normalize().to_string())
            .collect();
        keys.sort();
        let before = keys.len();
        keys.dedup();
        assert_eq!(before, keys.len());
    }
}
