//! A small reverse-mode tape specialised to the operations that occur in
//! unrolled GP / Condat–Vu / FISTA iterations.
//!
//! Every node records exactly the buffers its backward rule needs and
//! reports their size, so the tape doubles as a memory ledger.

use std::fmt;

use super::projection::{vjp_pixelwise, BallJacobian};
use crate::error::Result;
use crate::field::{DualField, Image, VectorSpace};
use crate::linops::{div2d, grad2d, gradient_step, LinearMap, NormalOperator};
use crate::prox::{heaviside_backward, proj_l2ball, proj_nonneg};

const F64_BYTES: usize = std::mem::size_of::<f64>();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded value together with its variable id.
#[derive(Debug, Clone)]
pub struct Var<T> {
    pub id: VarId,
    pub value: T,
}

/// Cotangent storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Image(Image),
    Dual(DualField),
}

impl Value {
    fn accumulate(&mut self, other: Value) {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => *a += b,
            (Value::Image(a), Value::Image(b)) => a.axpy(1.0, &b),
            (Value::Dual(a), Value::Dual(b)) => a.axpy(1.0, &b),
            (a, b) => panic!("cotangent kind mismatch: {a:?} vs {b:?}"),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(s) => Some(*s),
            _ => None,
        }
    }

    pub fn as_image(&self) -> Option<&Image> {
        match self {
            Value::Image(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_dual(&self) -> Option<&DualField> {
        match self {
            Value::Dual(x) => Some(x),
            _ => None,
        }
    }

    /// `a * self + b * other` for cotangents of the same kind.
    pub fn lin_comb(&self, a: f64, other: &Value, b: f64) -> Value {
        match (self, other) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(a * x + b * y),
            (Value::Image(x), Value::Image(y)) => Value::Image(x.lin_comb(a, y, b)),
            (Value::Dual(x), Value::Dual(y)) => Value::Dual(x.lin_comb(a, y, b)),
            _ => panic!("cotangent kind mismatch"),
        }
    }

    pub fn dot(&self, other: &Value) -> f64 {
        match (self, other) {
            (Value::Scalar(x), Value::Scalar(y)) => x * y,
            (Value::Image(x), Value::Image(y)) => x.dot(y),
            (Value::Dual(x), Value::Dual(y)) => x.dot(y),
            _ => panic!("cotangent kind mismatch"),
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            Value::Scalar(_) => F64_BYTES,
            Value::Image(x) => x.byte_len(),
            Value::Dual(x) => x.byte_len(),
        }
    }
}

/// Kind and shape of a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Image(usize, usize),
    Dual(usize, usize),
}

impl Shape {
    pub fn zeros(self) -> Value {
        match self {
            Shape::Scalar => Value::Scalar(0.0),
            Shape::Image(r, c) => Value::Image(Image::zeros(r, c)),
            Shape::Dual(r, c) => Value::Dual(DualField::zeros(r, c)),
        }
    }
}

/// Anything a node can output.
pub trait Recorded {
    fn shape_of(&self) -> Shape;
}

impl Recorded for f64 {
    fn shape_of(&self) -> Shape {
        Shape::Scalar
    }
}

impl Recorded for Image {
    fn shape_of(&self) -> Shape {
        Shape::Image(self.rows(), self.cols())
    }
}

impl Recorded for DualField {
    fn shape_of(&self) -> Shape {
        Shape::Dual(self.rows(), self.cols())
    }
}

/// Array types that can flow through the tape.
pub trait TapeArray: VectorSpace + Recorded {
    fn into_value(self) -> Value;
    fn from_value(v: Value) -> Self;
}

impl TapeArray for Image {
    fn into_value(self) -> Value {
        Value::Image(self)
    }

    fn from_value(v: Value) -> Self {
        match v {
            Value::Image(x) => x,
            other => panic!("expected image cotangent, got {other:?}"),
        }
    }
}

impl TapeArray for DualField {
    fn into_value(self) -> Value {
        Value::Dual(self)
    }

    fn from_value(v: Value) -> Self {
        match v {
            Value::Dual(x) => x,
            other => panic!("expected dual cotangent, got {other:?}"),
        }
    }
}

/// Precision of the dual buffer kept by the assisted projection node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SavePrecision {
    #[default]
    F64,
    /// Halves the saved bytes; gradients are then only approximate.
    F32,
}

/// What the assisted projection node keeps for its backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssistedSaves {
    /// Only the pre-projection input; `|w|_2` and the max factor are
    /// recomputed in backward.
    #[default]
    InputOnly,
    /// Input plus `|w|_2` and the max factor: less recomputation, more memory.
    InputNormFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TapeConfig {
    pub assisted: AssistedSaves,
    pub precision: SavePrecision,
}

#[derive(Debug, Clone)]
pub(crate) enum SavedDual {
    F64(DualField),
    F32 {
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    },
}

impl SavedDual {
    fn new(w: &DualField, precision: SavePrecision) -> Self {
        match precision {
            SavePrecision::F64 => SavedDual::F64(w.clone()),
            SavePrecision::F32 => SavedDual::F32 {
                rows: w.rows(),
                cols: w.cols(),
                data: w.as_slice().iter().map(|&x| x as f32).collect(),
            },
        }
    }

    fn restore(&self) -> DualField {
        match self {
            SavedDual::F64(w) => w.clone(),
            SavedDual::F32 { rows, cols, data } => {
                let mut w = DualField::zeros(*rows, *cols);
                for (o, &x) in w.as_mut_slice().iter_mut().zip(data) {
                    *o = f64::from(x);
                }
                w
            }
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            SavedDual::F64(w) => w.byte_len(),
            SavedDual::F32 { data, .. } => data.len() * std::mem::size_of::<f32>(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Div,
    Grad,
    Combine,
    Offset,
    GradientStep,
    Extrapolate,
    ScaleByParam,
    DivByParam,
    ProjNonneg,
    PixelNorm,
    ClampMinOne,
    PixelDiv,
    AssistedBallProj,
    ScalarScale,
    ScalarRecip,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

enum NodeOp<'a> {
    Div,
    Grad,
    Combine { a: f64, b: f64 },
    Offset,
    GradientStep { gamma: f64, op: &'a dyn NormalOperator },
    Extrapolate { a: f64 },
    ScaleByParam { x: Value, s: f64 },
    DivByParam { x: Value, s: f64 },
    ProjNonneg { input: Image },
    PixelNorm { input: DualField, output: Image },
    ClampMinOne { input: Image },
    PixelDiv { num: DualField, den: Image },
    AssistedBallProj {
        input: SavedDual,
        radius: f64,
        aux: Option<(Image, Image)>,
    },
    ScalarScale { c: f64 },
    ScalarRecip { c: f64, x: f64 },
}

/// One recorded elementary operation with a single output.
pub struct TapeNode<'a> {
    op: NodeOp<'a>,
    inputs: Vec<VarId>,
    output: VarId,
    shape: Shape,
}

impl fmt::Debug for TapeNode<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TapeNode")
            .field("kind", &self.kind())
            .field("inputs", &self.inputs)
            .field("output", &self.output)
            .field("saved_bytes", &self.saved_bytes())
            .finish()
    }
}

impl TapeNode<'_> {
    pub fn kind(&self) -> OpKind {
        match &self.op {
            NodeOp::Div => OpKind::Div,
            NodeOp::Grad => OpKind::Grad,
            NodeOp::Combine { .. } => OpKind::Combine,
            NodeOp::Offset => OpKind::Offset,
            NodeOp::GradientStep { .. } => OpKind::GradientStep,
            NodeOp::Extrapolate { .. } => OpKind::Extrapolate,
            NodeOp::ScaleByParam { .. } => OpKind::ScaleByParam,
            NodeOp::DivByParam { .. } => OpKind::DivByParam,
            NodeOp::ProjNonneg { .. } => OpKind::ProjNonneg,
            NodeOp::PixelNorm { .. } => OpKind::PixelNorm,
            NodeOp::ClampMinOne { .. } => OpKind::ClampMinOne,
            NodeOp::PixelDiv { .. } => OpKind::PixelDiv,
            NodeOp::AssistedBallProj { .. } => OpKind::AssistedBallProj,
            NodeOp::ScalarScale { .. } => OpKind::ScalarScale,
            NodeOp::ScalarRecip { .. } => OpKind::ScalarRecip,
        }
    }

    pub fn inputs(&self) -> &[VarId] {
        &self.inputs
    }

    pub fn output(&self) -> VarId {
        self.output
    }

    pub fn output_shape(&self) -> Shape {
        self.shape
    }

    /// Bytes of array buffers retained for backward.
    pub fn buffer_bytes(&self) -> usize {
        match &self.op {
            NodeOp::ScaleByParam { x, .. } | NodeOp::DivByParam { x, .. } => x.byte_len(),
            NodeOp::ProjNonneg { input } | NodeOp::ClampMinOne { input } => input.byte_len(),
            NodeOp::PixelNorm { input, output } => input.byte_len() + output.byte_len(),
            NodeOp::PixelDiv { num, den } => num.byte_len() + den.byte_len(),
            NodeOp::AssistedBallProj { input, aux, .. } => {
                input.byte_len() + aux.as_ref().map_or(0, |(n, m)| n.byte_len() + m.byte_len())
            }
            _ => 0,
        }
    }

    /// Bytes of scalar constants retained for backward.
    pub fn scalar_bytes(&self) -> usize {
        let count = match &self.op {
            NodeOp::Div | NodeOp::Grad | NodeOp::Offset => 0,
            NodeOp::Combine { .. } | NodeOp::ScalarRecip { .. } => 2,
            NodeOp::GradientStep { .. }
            | NodeOp::Extrapolate { .. }
            | NodeOp::ScaleByParam { .. }
            | NodeOp::DivByParam { .. }
            | NodeOp::AssistedBallProj { .. }
            | NodeOp::ScalarScale { .. } => 1,
            NodeOp::ProjNonneg { .. }
            | NodeOp::PixelNorm { .. }
            | NodeOp::ClampMinOne { .. }
            | NodeOp::PixelDiv { .. } => 0,
        };
        count * F64_BYTES
    }

    pub fn saved_bytes(&self) -> usize {
        self.buffer_bytes() + self.scalar_bytes()
    }

    /// Pulls the output cotangent back to one cotangent per input.
    /// Linear in `cot`.
    pub fn backward(&self, cot: &Value) -> Vec<Value> {
        match &self.op {
            NodeOp::Div => {
                // div = -grad^T, so div^T = -grad
                let g = cot.as_image().expect("div output is an image");
                vec![Value::Dual(grad2d(g).scaled(-1.0))]
            }
            NodeOp::Grad => {
                let g = cot.as_dual().expect("grad output is a dual field");
                vec![Value::Image(div2d(g).scaled(-1.0))]
            }
            NodeOp::Combine { a, b } => vec![scale_value(cot, *a), scale_value(cot, *b)],
            NodeOp::Offset => vec![cot.clone()],
            NodeOp::GradientStep { gamma, op } => {
                let g = cot.as_image().expect("gradient step output is an image");
                vec![Value::Image(g.lin_comb(1.0, &op.normal(g), -gamma))]
            }
            NodeOp::Extrapolate { a } => vec![scale_value(cot, 1.0 + a), scale_value(cot, -a)],
            NodeOp::ScaleByParam { x, s } => {
                vec![scale_value(cot, *s), Value::Scalar(cot.dot(x))]
            }
            NodeOp::DivByParam { x, s } => {
                vec![scale_value(cot, 1.0 / s), Value::Scalar(-cot.dot(x) / (s * s))]
            }
            NodeOp::ProjNonneg { input } => {
                let g = cot.as_image().expect("projection output is an image");
                let mut out = g.clone();
                for (o, x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *o *= heaviside_backward(*x);
                }
                vec![Value::Image(out)]
            }
            NodeOp::PixelNorm { input, output } => {
                let g = cot.as_image().expect("norm output is an image");
                let mut out = input.zeros_like();
                for p in 0..input.pixels() {
                    let n = output.as_slice()[p];
                    if n > 0.0 {
                        let (x, y) = input.pixel(p);
                        let s = g.as_slice()[p] / n;
                        out.set_pixel(p, (s * x, s * y));
                    }
                }
                vec![Value::Dual(out)]
            }
            NodeOp::ClampMinOne { input } => {
                let g = cot.as_image().expect("clamp output is an image");
                let mut out = g.clone();
                for (o, q) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *o *= heaviside_backward(*q - 1.0);
                }
                vec![Value::Image(out)]
            }
            NodeOp::PixelDiv { num, den } => {
                let g = cot.as_dual().expect("pixel division output is a dual field");
                let mut num_bar = num.zeros_like();
                let mut den_bar = den.zeros_like();
                for p in 0..num.pixels() {
                    let m = den.as_slice()[p];
                    let (gx, gy) = g.pixel(p);
                    let (x, y) = num.pixel(p);
                    num_bar.set_pixel(p, (gx / m, gy / m));
                    den_bar.as_mut_slice()[p] = -(gx * x + gy * y) / (m * m);
                }
                vec![Value::Dual(num_bar), Value::Image(den_bar)]
            }
            NodeOp::AssistedBallProj { input, radius, aux } => {
                let g = cot.as_dual().expect("projection output is a dual field");
                let w = input.restore();
                let jac = match aux {
                    None => BallJacobian::recompute(&w, *radius),
                    Some((norm, factor)) => BallJacobian::from_saved(&w, *radius, norm, factor),
                };
                let (w_bar, r_bar) = vjp_pixelwise(&jac, g);
                vec![Value::Dual(w_bar), Value::Scalar(r_bar)]
            }
            NodeOp::ScalarScale { c } => vec![scale_value(cot, *c)],
            NodeOp::ScalarRecip { c, x } => {
                let g = cot.as_scalar().expect("scalar cotangent");
                vec![Value::Scalar(-g / (c * x * x))]
            }
        }
    }
}

fn scale_value(v: &Value, a: f64) -> Value {
    match v {
        Value::Scalar(x) => Value::Scalar(a * x),
        Value::Image(x) => Value::Image(x.scaled(a)),
        Value::Dual(x) => Value::Dual(x.scaled(a)),
    }
}

/// Recorded computation graph over unrolled iterations.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<TapeNode<'a>>,
    n_vars: usize,
    // node index at which each iteration starts
    iteration_starts: Vec<usize>,
    config: TapeConfig,
}

/// Cotangents after a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    cotangents: Vec<Option<Value>>,
    visited: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.cotangents[id.0].as_ref()
    }

    /// Scalar cotangent, zero if nothing reached the variable.
    pub fn scalar(&self, id: VarId) -> f64 {
        self.get(id).and_then(Value::as_scalar).unwrap_or(0.0)
    }

    /// Node indices in the order the backward sweep visited them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

impl<'a> Tape<'a> {
    pub fn new(config: TapeConfig) -> Self {
        Tape {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> TapeConfig {
        self.config
    }

    pub fn nodes(&self) -> &[TapeNode<'a>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_saved_bytes(&self) -> usize {
        self.nodes.iter().map(TapeNode::saved_bytes).sum()
    }

    /// Marks the start of a solver iteration for memory accounting.
    pub fn begin_iteration(&mut self) {
        self.iteration_starts.push(self.nodes.len());
    }

    /// Node index ranges of every marked iteration.
    pub fn iteration_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ends: Vec<usize> = self.iteration_starts.iter().skip(1).copied().collect();
        ends.push(self.nodes.len());
        self.iteration_starts
            .iter()
            .zip(ends)
            .map(|(&s, e)| s..e)
            .collect()
    }

    /// Bytes recorded before the first marked iteration.
    pub fn setup_bytes(&self) -> usize {
        let end = self.iteration_starts.first().copied().unwrap_or(self.nodes.len());
        self.nodes[..end].iter().map(TapeNode::saved_bytes).sum()
    }

    pub fn per_iteration_bytes(&self) -> Vec<usize> {
        self.iteration_ranges()
            .into_iter()
            .map(|r| self.nodes[r].iter().map(TapeNode::saved_bytes).sum())
            .collect()
    }

    fn fresh(&mut self) -> VarId {
        let id = VarId(self.n_vars);
        self.n_vars += 1;
        id
    }

    fn push<T: Recorded>(&mut self, op: NodeOp<'a>, inputs: Vec<VarId>, value: T) -> Var<T> {
        let output = self.fresh();
        let shape = value.shape_of();
        self.nodes.push(TapeNode {
            op,
            inputs,
            output,
            shape,
        });
        Var { id: output, value }
    }

    pub fn leaf<T>(&mut self, value: T) -> Var<T> {
        Var {
            id: self.fresh(),
            value,
        }
    }

    pub fn div(&mut self, w: &Var<DualField>) -> Var<Image> {
        self.push(NodeOp::Div, vec![w.id], div2d(&w.value))
    }

    pub fn grad(&mut self, u: &Var<Image>) -> Var<DualField> {
        self.push(NodeOp::Grad, vec![u.id], grad2d(&u.value))
    }

    /// `a * x + b * y`
    pub fn combine<T: TapeArray>(&mut self, x: &Var<T>, a: f64, y: &Var<T>, b: f64) -> Var<T> {
        let value = x.value.lin_comb(a, &y.value, b);
        self.push(NodeOp::Combine { a, b }, vec![x.id, y.id], value)
    }

    /// `x + c` for a constant `c`.
    pub fn offset(&mut self, x: &Var<Image>, c: &Image) -> Var<Image> {
        let value = x.value.add(c);
        self.push(NodeOp::Offset, vec![x.id], value)
    }

    /// `x - gamma A*(A x - data)`.
    pub fn gradient_step<A>(&mut self, x: &Var<Image>, op: &'a A, data: &A::Codomain, gamma: f64) -> Var<Image>
    where
        A: LinearMap<Domain = Image>,
    {
        let value = gradient_step(op, &x.value, data, gamma);
        self.push(NodeOp::GradientStep { gamma, op }, vec![x.id], value)
    }

    /// `x + a (x - y)`
    pub fn extrapolate<T: TapeArray>(&mut self, x: &Var<T>, y: &Var<T>, a: f64) -> Var<T> {
        let value = crate::solvers::extrapolate(&x.value, &y.value, a);
        self.push(NodeOp::Extrapolate { a }, vec![x.id, y.id], value)
    }

    /// `s * x` with `s` a recorded scalar.
    pub fn scale_by_param<T: TapeArray>(&mut self, x: &Var<T>, s: &Var<f64>) -> Var<T> {
        let value = x.value.scaled(s.value);
        let op = NodeOp::ScaleByParam {
            x: x.value.clone().into_value(),
            s: s.value,
        };
        self.push(op, vec![x.id, s.id], value)
    }

    /// `x / s` with `s` a recorded scalar.
    pub fn div_by_param<T: TapeArray>(&mut self, x: &Var<T>, s: &Var<f64>) -> Var<T> {
        let mut value = x.value.clone();
        for v in value.as_mut_slice() {
            *v /= s.value;
        }
        let op = NodeOp::DivByParam {
            x: x.value.clone().into_value(),
            s: s.value,
        };
        self.push(op, vec![x.id, s.id], value)
    }

    pub fn proj_nonneg(&mut self, x: &Var<Image>) -> Var<Image> {
        let op = NodeOp::ProjNonneg {
            input: x.value.clone(),
        };
        self.push(op, vec![x.id], proj_nonneg(&x.value))
    }

    pub fn pixel_norm(&mut self, x: &Var<DualField>) -> Var<Image> {
        let value = x.value.pointwise_norm();
        let op = NodeOp::PixelNorm {
            input: x.value.clone(),
            output: value.clone(),
        };
        self.push(op, vec![x.id], value)
    }

    /// `max(1, x)`
    pub fn clamp_min_one(&mut self, x: &Var<Image>) -> Var<Image> {
        let op = NodeOp::ClampMinOne {
            input: x.value.clone(),
        };
        self.push(op, vec![x.id], x.value.map(|q| 1.0_f64.max(q)))
    }

    /// Per-pixel `num_p / den_p`.
    pub fn pixel_div(&mut self, num: &Var<DualField>, den: &Var<Image>) -> Var<DualField> {
        let mut value = num.value.clone();
        let n = value.pixels();
        let (x, y) = value.planes_mut();
        for (p, m) in den.value.as_slice().iter().enumerate().take(n) {
            x[p] /= m;
            y[p] /= m;
        }
        let op = NodeOp::PixelDiv {
            num: num.value.clone(),
            den: den.value.clone(),
        };
        self.push(op, vec![num.id, den.id], value)
    }

    /// Ball projection as a single node with a closed-form backward.
    pub fn assisted_ball_proj(&mut self, c: &Var<DualField>, radius: &Var<f64>) -> Result<Var<DualField>> {
        let value = proj_l2ball(&c.value, radius.value)?;
        let aux = match self.config.assisted {
            AssistedSaves::InputOnly => None,
            AssistedSaves::InputNormFactor => {
                let norm = c.value.pointwise_norm();
                let factor = norm.map(|n| 1.0_f64.max(n / radius.value));
                Some((norm, factor))
            }
        };
        let op = NodeOp::AssistedBallProj {
            input: SavedDual::new(&c.value, self.config.precision),
            radius: radius.value,
            aux,
        };
        Ok(self.push(op, vec![c.id, radius.id], value))
    }

    pub fn scalar_scale(&mut self, x: &Var<f64>, c: f64) -> Var<f64> {
        self.push(NodeOp::ScalarScale { c }, vec![x.id], c * x.value)
    }

    /// `1 / (c x)`
    pub fn scalar_recip(&mut self, x: &Var<f64>, c: f64) -> Var<f64> {
        let op = NodeOp::ScalarRecip { c, x: x.value };
        self.push(op, vec![x.id], 1.0 / (x.value * c))
    }

    /// Reverse sweep from the given seed cotangents.
    pub fn backward(&self, seeds: Vec<(VarId, Value)>) -> Gradients {
        let mut cot: Vec<Option<Value>> = vec![None; self.n_vars];
        for (id, v) in seeds {
            match &mut cot[id.0] {
                Some(existing) => existing.accumulate(v),
                slot => *slot = Some(v),
            }
        }
        let mut visited = Vec::with_capacity(self.nodes.len());
        for (index, node) in self.nodes.iter().enumerate().rev() {
            visited.push(index);
            let Some(g) = cot[node.output.0].take() else {
                continue;
            };
            for (id, contribution) in node.inputs.iter().zip(node.backward(&g)) {
                match &mut cot[id.0] {
                    Some(existing) => existing.accumulate(contribution),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Gradients {
            cotangents: cot,
            visited,
        }
    }
}
