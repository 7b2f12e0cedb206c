//! Integer address expressions over thread and block coordinates.
//!
//! An [`AddressExpr`] computes the byte address one thread touches for one
//! access. Block and grid dimensions appear as symbolic leaves and are bound
//! from a [`LaunchConfig`] when the expression is evaluated, so a single tree
//! can be swept over many launch shapes.

pub mod parse;

use std::collections::HashMap;
use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::LaunchConfig;

pub use parse::parse;

/// Field base addresses, keyed by field name.
pub type BaseMap = HashMap<String, i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("unknown field `{0}` referenced by address expression")]
    UnknownField(String),
    #[error("divisor must be a positive constant, got {0}")]
    InvalidDivisor(i64),
    #[error("64-bit overflow while evaluating address expression")]
    Overflow,
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

/// One of the three launch axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Thread-local and block coordinates, the free variables of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Coord {
    TidX,
    TidY,
    TidZ,
    BidX,
    BidY,
    BidZ,
}

impl Coord {
    pub const ALL: [Coord; 6] = [
        Coord::TidX,
        Coord::TidY,
        Coord::TidZ,
        Coord::BidX,
        Coord::BidY,
        Coord::BidZ,
    ];

    pub fn index(self) -> usize {
        match self {
            Coord::TidX => 0,
            Coord::TidY => 1,
            Coord::TidZ => 2,
            Coord::BidX => 3,
            Coord::BidY => 4,
            Coord::BidZ => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coord::TidX => "tidx",
            Coord::TidY => "tidy",
            Coord::TidZ => "tidz",
            Coord::BidX => "bidx",
            Coord::BidY => "bidy",
            Coord::BidZ => "bidz",
        }
    }

    pub fn from_name(name: &str) -> Option<Coord> {
        Coord::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Coordinates of a single thread in the launch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ThreadCoord {
    pub tidx: u32,
    pub tidy: u32,
    pub tidz: u32,
    pub bidx: u32,
    pub bidy: u32,
    pub bidz: u32,
}

impl ThreadCoord {
    pub fn new(tid: [u32; 3], bid: [u32; 3]) -> Self {
        ThreadCoord {
            tidx: tid[0],
            tidy: tid[1],
            tidz: tid[2],
            bidx: bid[0],
            bidy: bid[1],
            bidz: bid[2],
        }
    }

    pub fn get(&self, coord: Coord) -> u32 {
        match coord {
            Coord::TidX => self.tidx,
            Coord::TidY => self.tidy,
            Coord::TidZ => self.tidz,
            Coord::BidX => self.bidx,
            Coord::BidY => self.bidy,
            Coord::BidZ => self.bidz,
        }
    }

    pub fn as_array(&self) -> [i64; 6] {
        [
            self.tidx as i64,
            self.tidy as i64,
            self.tidz as i64,
            self.bidx as i64,
            self.bidy as i64,
            self.bidz as i64,
        ]
    }

    /// Checks the coordinate against the block and grid extents of `launch`.
    pub fn is_valid_for(&self, launch: &LaunchConfig) -> bool {
        self.tidx < launch.block[0]
            && self.tidy < launch.block[1]
            && self.tidz < launch.block[2]
            && self.bidx < launch.grid[0]
            && self.bidy < launch.grid[1]
            && self.bidz < launch.grid[2]
    }
}

/// Strictly positive constant divisor for floor division and modulo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Divisor(i64);

impl Divisor {
    pub fn new(value: i64) -> Result<Self, ExprError> {
        if value > 0 {
            Ok(Divisor(value))
        } else {
            Err(ExprError::InvalidDivisor(value))
        }
    }

    pub fn get(self) -> i64 {
        self.0
    }
}

/// Address expression tree. Evaluates to a byte address.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AddressExpr {
    Const(i64),
    Coord(Coord),
    /// `blockDim` along an axis, bound at evaluation time.
    BlockDim(Axis),
    /// `gridDim` along an axis, bound at evaluation time.
    GridDim(Axis),
    /// Placeholder for a field's base address.
    Base(String),
    Add(Box<AddressExpr>, Box<AddressExpr>),
    Sub(Box<AddressExpr>, Box<AddressExpr>),
    Mul(Box<AddressExpr>, Box<AddressExpr>),
    FloorDiv(Box<AddressExpr>, Divisor),
    Mod(Box<AddressExpr>, Divisor),
}

impl AddressExpr {
    pub fn constant(value: i64) -> Self {
        AddressExpr::Const(value)
    }

    pub fn coord(coord: Coord) -> Self {
        AddressExpr::Coord(coord)
    }

    pub fn base(field: impl Into<String>) -> Self {
        AddressExpr::Base(field.into())
    }

    pub fn block_dim(axis: Axis) -> Self {
        AddressExpr::BlockDim(axis)
    }

    pub fn grid_dim(axis: Axis) -> Self {
        AddressExpr::GridDim(axis)
    }

    pub fn floor_div(self, divisor: i64) -> Result<Self, ExprError> {
        Ok(AddressExpr::FloorDiv(Box::new(self), Divisor::new(divisor)?))
    }

    pub fn modulo(self, divisor: i64) -> Result<Self, ExprError> {
        Ok(AddressExpr::Mod(Box::new(self), Divisor::new(divisor)?))
    }

    /// Global thread index along `axis`: `tid + bid * blockDim`.
    pub fn global_index(axis: Axis) -> Self {
        let (tid, bid) = match axis {
            Axis::X => (Coord::TidX, Coord::BidX),
            Axis::Y => (Coord::TidY, Coord::BidY),
            Axis::Z => (Coord::TidZ, Coord::BidZ),
        };
        AddressExpr::coord(tid) + AddressExpr::coord(bid) * AddressExpr::block_dim(axis)
    }

    /// Names of all fields referenced through `Base` leaves, in first-seen order.
    pub fn base_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let AddressExpr::Base(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    /// Number of `Base` leaves, counting repeats.
    pub fn base_ref_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, AddressExpr::Base(_)) {
                n += 1;
            }
        });
        n
    }

    pub fn has_floor_ops(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, AddressExpr::FloorDiv(..) | AddressExpr::Mod(..)) {
                found = true;
            }
        });
        found
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a AddressExpr)) {
        f(self);
        match self {
            AddressExpr::Add(a, b) | AddressExpr::Sub(a, b) | AddressExpr::Mul(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            AddressExpr::FloorDiv(a, _) | AddressExpr::Mod(a, _) => a.visit(f),
            _ => {}
        }
    }

    /// Substitutes launch dimensions and base addresses, producing a tree over
    /// the six coordinates only.
    pub fn bind(&self, launch: &LaunchConfig, bases: &BaseMap) -> Result<BoundExpr, ExprError> {
        let root = self.bind_node(launch, bases)?;
        let affine = root.affine()?;
        Ok(BoundExpr { root, affine })
    }

    fn bind_node(&self, launch: &LaunchConfig, bases: &BaseMap) -> Result<Node, ExprError> {
        let bin = |a: &AddressExpr, b: &AddressExpr| -> Result<(Box<Node>, Box<Node>), ExprError> {
            Ok((
                Box::new(a.bind_node(launch, bases)?),
                Box::new(b.bind_node(launch, bases)?),
            ))
        };
        Ok(match self {
            AddressExpr::Const(v) => Node::Const(*v),
            AddressExpr::Coord(c) => Node::Coord(c.index()),
            AddressExpr::BlockDim(axis) => Node::Const(launch.block[axis.index()] as i64),
            AddressExpr::GridDim(axis) => Node::Const(launch.grid[axis.index()] as i64),
            AddressExpr::Base(name) => Node::Const(
                *bases
                    .get(name)
                    .ok_or_else(|| ExprError::UnknownField(name.clone()))?,
            ),
            AddressExpr::Add(a, b) => {
                let (a, b) = bin(a, b)?;
                Node::Add(a, b)
            }
            AddressExpr::Sub(a, b) => {
                let (a, b) = bin(a, b)?;
                Node::Sub(a, b)
            }
            AddressExpr::Mul(a, b) => {
                let (a, b) = bin(a, b)?;
                Node::Mul(a, b)
            }
            AddressExpr::FloorDiv(a, d) => {
                Node::FloorDiv(Box::new(a.bind_node(launch, bases)?), d.get())
            }
            AddressExpr::Mod(a, d) => Node::Mod(Box::new(a.bind_node(launch, bases)?), d.get()),
        })
    }

    /// Scalar evaluation for a single thread.
    pub fn eval_scalar(
        &self,
        coord: &ThreadCoord,
        launch: &LaunchConfig,
        bases: &BaseMap,
    ) -> Result<i64, ExprError> {
        let c = coord.as_array();
        self.eval_tree(&c, launch, bases)
    }

    fn eval_tree(&self, c: &[i64; 6], launch: &LaunchConfig, bases: &BaseMap) -> Result<i64, ExprError> {
        match self {
            AddressExpr::Const(v) => Ok(*v),
            AddressExpr::Coord(k) => Ok(c[k.index()]),
            AddressExpr::BlockDim(axis) => Ok(launch.block[axis.index()] as i64),
            AddressExpr::GridDim(axis) => Ok(launch.grid[axis.index()] as i64),
            AddressExpr::Base(name) => bases
                .get(name)
                .copied()
                .ok_or_else(|| ExprError::UnknownField(name.clone())),
            AddressExpr::Add(a, b) => a
                .eval_tree(c, launch, bases)?
                .checked_add(b.eval_tree(c, launch, bases)?)
                .ok_or(ExprError::Overflow),
            AddressExpr::Sub(a, b) => a
                .eval_tree(c, launch, bases)?
                .checked_sub(b.eval_tree(c, launch, bases)?)
                .ok_or(ExprError::Overflow),
            AddressExpr::Mul(a, b) => a
                .eval_tree(c, launch, bases)?
                .checked_mul(b.eval_tree(c, launch, bases)?)
                .ok_or(ExprError::Overflow),
            AddressExpr::FloorDiv(a, d) => Ok(a.eval_tree(c, launch, bases)?.div_euclid(d.get())),
            AddressExpr::Mod(a, d) => Ok(a.eval_tree(c, launch, bases)?.rem_euclid(d.get())),
        }
    }
}

/// Evaluates `expr` for every coordinate in `coords`, preserving order.
pub fn evaluate(
    expr: &AddressExpr,
    coords: &[ThreadCoord],
    launch: &LaunchConfig,
    bases: &BaseMap,
) -> Result<Vec<i64>, ExprError> {
    let bound = expr.bind(launch, bases)?;
    bound.eval_many(coords)
}

impl ops::Add for AddressExpr {
    type Output = AddressExpr;
    fn add(self, rhs: AddressExpr) -> AddressExpr {
        AddressExpr::Add(Box::new(self), Box::new(rhs))
    }
}

impl ops::Sub for AddressExpr {
    type Output = AddressExpr;
    fn sub(self, rhs: AddressExpr) -> AddressExpr {
        AddressExpr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl ops::Mul for AddressExpr {
    type Output = AddressExpr;
    fn mul(self, rhs: AddressExpr) -> AddressExpr {
        AddressExpr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Add<i64> for AddressExpr {
    type Output = AddressExpr;
    fn add(self, rhs: i64) -> AddressExpr {
        self + AddressExpr::Const(rhs)
    }
}

impl ops::Mul<i64> for AddressExpr {
    type Output = AddressExpr;
    fn mul(self, rhs: i64) -> AddressExpr {
        self * AddressExpr::Const(rhs)
    }
}

impl From<i64> for AddressExpr {
    fn from(v: i64) -> Self {
        AddressExpr::Const(v)
    }
}

impl From<Coord> for AddressExpr {
    fn from(c: Coord) -> Self {
        AddressExpr::Coord(c)
    }
}

// Binding power used by the renderer; mirrors the parser's precedence.
fn precedence(e: &AddressExpr) -> u8 {
    match e {
        AddressExpr::Add(..) | AddressExpr::Sub(..) => 1,
        AddressExpr::Mul(..) | AddressExpr::FloorDiv(..) | AddressExpr::Mod(..) => 2,
        _ => 3,
    }
}

impl fmt::Display for AddressExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &AddressExpr, paren: bool) -> fmt::Result {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        let p = precedence(self);
        match self {
            AddressExpr::Const(v) => write!(f, "{v}"),
            AddressExpr::Coord(c) => f.write_str(c.name()),
            AddressExpr::BlockDim(a) => write!(f, "B{a:?}"),
            AddressExpr::GridDim(a) => write!(f, "G{a:?}"),
            AddressExpr::Base(name) => f.write_str(name),
            AddressExpr::Add(a, b) | AddressExpr::Sub(a, b) | AddressExpr::Mul(a, b) => {
                let op = match self {
                    AddressExpr::Add(..) => "+",
                    AddressExpr::Sub(..) => "-",
                    _ => "*",
                };
                child(f, a, precedence(a) < p)?;
                write!(f, " {op} ")?;
                child(f, b, precedence(b) <= p)
            }
            AddressExpr::FloorDiv(a, d) => {
                child(f, a, precedence(a) < p)?;
                write!(f, " / {}", d.get())
            }
            AddressExpr::Mod(a, d) => {
                child(f, a, precedence(a) < p)?;
                write!(f, " % {}", d.get())
            }
        }
    }
}

/// Affine form `constant + sum(coeffs[i] * coord[i])` over the six coordinates,
/// ordered tidx, tidy, tidz, bidx, bidy, bidz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AffineForm {
    pub constant: i64,
    pub coeffs: [i64; 6],
}

impl AffineForm {
    fn constant_only(v: i64) -> Self {
        AffineForm {
            constant: v,
            coeffs: [0; 6],
        }
    }

    fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    fn combine(&self, other: &AffineForm, sign: i64) -> Result<AffineForm, ExprError> {
        let mut coeffs = [0i64; 6];
        for (i, slot) in coeffs.iter_mut().enumerate() {
            let rhs = other.coeffs[i].checked_mul(sign).ok_or(ExprError::Overflow)?;
            *slot = self.coeffs[i].checked_add(rhs).ok_or(ExprError::Overflow)?;
        }
        let rhs = other.constant.checked_mul(sign).ok_or(ExprError::Overflow)?;
        Ok(AffineForm {
            constant: self.constant.checked_add(rhs).ok_or(ExprError::Overflow)?,
            coeffs,
        })
    }

    fn scale(&self, k: i64) -> Result<AffineForm, ExprError> {
        let mut coeffs = [0i64; 6];
        for (slot, c) in coeffs.iter_mut().zip(self.coeffs) {
            *slot = c.checked_mul(k).ok_or(ExprError::Overflow)?;
        }
        Ok(AffineForm {
            constant: self.constant.checked_mul(k).ok_or(ExprError::Overflow)?,
            coeffs,
        })
    }

    pub fn eval(&self, c: &[i64; 6]) -> Result<i64, ExprError> {
        let mut acc = self.constant;
        for i in 0..6 {
            let term = self.coeffs[i].checked_mul(c[i]).ok_or(ExprError::Overflow)?;
            acc = acc.checked_add(term).ok_or(ExprError::Overflow)?;
        }
        Ok(acc)
    }

    /// Smallest and largest value over the box `lo[i] <= c[i] <= hi[i]`,
    /// computed in 128-bit arithmetic.
    pub fn range_over(&self, lo: &[i64; 6], hi: &[i64; 6]) -> (i128, i128) {
        let mut min = self.constant as i128;
        let mut max = self.constant as i128;
        for i in 0..6 {
            let a = self.coeffs[i] as i128 * lo[i] as i128;
            let b = self.coeffs[i] as i128 * hi[i] as i128;
            min += a.min(b);
            max += a.max(b);
        }
        (min, max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Const(i64),
    Coord(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    FloorDiv(Box<Node>, i64),
    Mod(Box<Node>, i64),
}

impl Node {
    fn eval(&self, c: &[i64; 6]) -> Result<i64, ExprError> {
        match self {
            Node::Const(v) => Ok(*v),
            Node::Coord(i) => Ok(c[*i]),
            Node::Add(a, b) => a.eval(c)?.checked_add(b.eval(c)?).ok_or(ExprError::Overflow),
            Node::Sub(a, b) => a.eval(c)?.checked_sub(b.eval(c)?).ok_or(ExprError::Overflow),
            Node::Mul(a, b) => a.eval(c)?.checked_mul(b.eval(c)?).ok_or(ExprError::Overflow),
            Node::FloorDiv(a, d) => Ok(a.eval(c)?.div_euclid(*d)),
            Node::Mod(a, d) => Ok(a.eval(c)?.rem_euclid(*d)),
        }
    }

    // None when the node is not affine in the coordinates.
    fn affine(&self) -> Result<Option<AffineForm>, ExprError> {
        Ok(match self {
            Node::Const(v) => Some(AffineForm::constant_only(*v)),
            Node::Coord(i) => {
                let mut coeffs = [0; 6];
                coeffs[*i] = 1;
                Some(AffineForm { constant: 0, coeffs })
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                let sign = if matches!(self, Node::Add(..)) { 1 } else { -1 };
                match (a.affine()?, b.affine()?) {
                    (Some(x), Some(y)) => Some(x.combine(&y, sign)?),
                    _ => None,
                }
            }
            Node::Mul(a, b) => match (a.affine()?, b.affine()?) {
                (Some(x), Some(y)) if y.is_constant() => Some(x.scale(y.constant)?),
                (Some(x), Some(y)) if x.is_constant() => Some(y.scale(x.constant)?),
                _ => None,
            },
            Node::FloorDiv(a, d) | Node::Mod(a, d) => match a.affine()? {
                Some(x) if x.is_constant() => {
                    let v = if matches!(self, Node::FloorDiv(..)) {
                        x.constant.div_euclid(*d)
                    } else {
                        x.constant.rem_euclid(*d)
                    };
                    Some(AffineForm::constant_only(v))
                }
                _ => None,
            },
        })
    }
}

/// An expression with launch dimensions and base addresses substituted.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    root: Node,
    affine: Option<AffineForm>,
}

impl BoundExpr {
    /// The affine coefficients, when the expression is affine in the coordinates.
    pub fn affine(&self) -> Option<&AffineForm> {
        self.affine.as_ref()
    }

    pub fn eval(&self, c: &[i64; 6]) -> Result<i64, ExprError> {
        match &self.affine {
            Some(a) => a.eval(c),
            None => self.root.eval(c),
        }
    }

    pub fn eval_many(&self, coords: &[ThreadCoord]) -> Result<Vec<i64>, ExprError> {
        coords.iter().map(|tc| self.eval(&tc.as_array())).collect()
    }
}
