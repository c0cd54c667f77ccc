//! Reverse-mode differentiation over the tensor kernels.
//!
//! Network code is written once against [`Backend`]. [`Eval`] runs it on
//! plain tensors and drops intermediates as soon as they go out of scope;
//! [`Tape`] records every operation so [`Tape::backward`] can produce
//! parameter gradients.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{warp_backward, warp_forward};
use crate::tensor::{self, Rotation, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]` initialization.
    pub fn add_fan_in(
        &mut self,
        name: impl Into<String>,
        shape: [usize; 4],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let t = Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-bound..bound));
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }
}

/// Operations the networks are built from.
pub trait Backend {
    type Value: Clone;

    fn params(&self) -> &ParamStore;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn param(&mut self, id: ParamId) -> Self::Value;
    fn constant(&mut self, t: Tensor) -> Self::Value;

    fn conv2d(
        &mut self,
        x: &Self::Value,
        weight: &Self::Value,
        bias: &Self::Value,
        dilation: usize,
    ) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, s: f64) -> Self::Value;
    fn mean_hw(&mut self, x: &Self::Value) -> Self::Value;
    fn max_hw(&mut self, x: &Self::Value) -> Self::Value;
    fn mean_c(&mut self, x: &Self::Value) -> Self::Value;
    fn max_c(&mut self, x: &Self::Value) -> Self::Value;
    fn avg_pool(&mut self, x: &Self::Value, k: usize) -> Self::Value;
    fn upsample(&mut self, x: &Self::Value, h: usize, w: usize) -> Self::Value;
    fn concat(&mut self, parts: &[&Self::Value]) -> Result<Self::Value>;
    fn slice_c(&mut self, x: &Self::Value, start: usize, len: usize) -> Result<Self::Value>;
    fn rot90(&mut self, x: &Self::Value, rot: Rotation) -> Self::Value;
    fn warp(
        &mut self,
        img: &Self::Value,
        disp: &Self::Value,
        offsets: &[(f64, f64)],
    ) -> Result<Self::Value>;
    fn diff_x(&mut self, x: &Self::Value) -> Self::Value;
    fn diff_y(&mut self, x: &Self::Value) -> Self::Value;
    /// Mean absolute difference as a `[1, 1, 1, 1]` value.
    fn l1(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
}

/// Forward-only evaluation on tensors.
pub struct Eval<'p> {
    params: &'p ParamStore,
}

impl<'p> Eval<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Eval { params }
    }
}

impl Backend for Eval<'_> {
    type Value = Rc<Tensor>;

    fn params(&self) -> &ParamStore {
        self.params
    }
    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }
    fn param(&mut self, id: ParamId) -> Rc<Tensor> {
        Rc::new(self.params.get(id).clone())
    }
    fn constant(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }
    fn conv2d(
        &mut self,
        x: &Rc<Tensor>,
        w: &Rc<Tensor>,
        b: &Rc<Tensor>,
        dilation: usize,
    ) -> Result<Rc<Tensor>> {
        tensor::conv2d_forward(x, w, Some(b), dilation).map(Rc::new)
    }
    fn relu(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::relu(x))
    }
    fn sigmoid(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::sigmoid(x))
    }
    fn add(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        tensor::broadcast_binary(a, b, |x, y| x + y).map(Rc::new)
    }
    fn mul(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        tensor::broadcast_binary(a, b, |x, y| x * y).map(Rc::new)
    }
    fn scale(&mut self, x: &Rc<Tensor>, s: f64) -> Rc<Tensor> {
        Rc::new(x.map(|v| v * s))
    }
    fn mean_hw(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::mean_hw(x))
    }
    fn max_hw(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::max_hw(x).0)
    }
    fn mean_c(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::mean_c(x))
    }
    fn max_c(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::max_c(x).0)
    }
    fn avg_pool(&mut self, x: &Rc<Tensor>, k: usize) -> Rc<Tensor> {
        Rc::new(tensor::avg_pool(x, k))
    }
    fn upsample(&mut self, x: &Rc<Tensor>, h: usize, w: usize) -> Rc<Tensor> {
        Rc::new(tensor::upsample_bilinear(x, h, w))
    }
    fn concat(&mut self, parts: &[&Rc<Tensor>]) -> Result<Rc<Tensor>> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| p.as_ref()).collect();
        tensor::concat_c(&refs).map(Rc::new)
    }
    fn slice_c(&mut self, x: &Rc<Tensor>, start: usize, len: usize) -> Result<Rc<Tensor>> {
        tensor::slice_c(x, start, len).map(Rc::new)
    }
    fn rot90(&mut self, x: &Rc<Tensor>, rot: Rotation) -> Rc<Tensor> {
        Rc::new(tensor::rot90(x, rot))
    }
    fn warp(
        &mut self,
        img: &Rc<Tensor>,
        disp: &Rc<Tensor>,
        offsets: &[(f64, f64)],
    ) -> Result<Rc<Tensor>> {
        warp_forward(img, disp, offsets).map(Rc::new)
    }
    fn diff_x(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::diff_x(x))
    }
    fn diff_y(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(tensor::diff_y(x))
    }
    fn l1(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        Ok(Rc::new(Tensor::scalar(tensor::l1_mean(a, b)?)))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Var, dilation: usize },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MeanHw(Var),
    MaxHw(Var, Vec<usize>),
    MeanC(Var),
    MaxC(Var, Vec<usize>),
    AvgPool(Var, usize),
    Upsample(Var),
    Concat(Vec<Var>),
    SliceC(Var, usize),
    Rot90(Var, Rotation),
    Warp { img: Var, disp: Var, offsets: Vec<(f64, f64)> },
    DiffX(Var),
    DiffY(Var),
    L1(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording backend.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Parameter gradients from [`Tape::backward`], indexed like the store.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Add another gradient set with the same layout.
    pub fn accumulate(&mut self, other: Gradients) {
        for (a, b) in self.grads.iter_mut().zip(other.grads) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(&b),
                (None, Some(b)) => *a = Some(b),
                _ => {}
            }
        }
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::Conv { x, w, b, .. } => self.rg(*x) || self.rg(*w) || self.rg(*b),
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Scale(a, _)
            | Op::MeanHw(a)
            | Op::MaxHw(a, _)
            | Op::MeanC(a)
            | Op::MaxC(a, _)
            | Op::AvgPool(a, _)
            | Op::Upsample(a)
            | Op::SliceC(a, _)
            | Op::Rot90(a, _)
            | Op::DiffX(a)
            | Op::DiffY(a) => self.rg(*a),
            Op::Add(a, b) | Op::Mul(a, b) | Op::L1(a, b) => self.rg(*a) || self.rg(*b),
            Op::Concat(parts) => parts.iter().any(|p| self.rg(*p)),
            Op::Warp { img, disp, .. } => self.rg(*img) || self.rg(*disp),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Back-propagate from the scalar `root` and collect parameter gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.val(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                self.val(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients {
            grads: vec![None; self.params.len()],
        };

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |v: Var, t: Tensor| {
                if !self.rg(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match &mut out.grads[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::Conv { x, w, b, dilation } => {
                    let (gx, gw, gb) = tensor::conv2d_backward(
                        self.val(*x),
                        self.val(*w),
                        *dilation,
                        &g,
                        self.rg(*x),
                    );
                    if let Some(gx) = gx {
                        send(*x, gx);
                    }
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::Relu(a) => {
                    let gx = self
                        .val(*a)
                        .zip_map(&g, |x, gv| if x > 0.0 { gv } else { 0.0 })?;
                    send(*a, gx);
                }
                Op::Sigmoid(a) => {
                    let gx = node.value.zip_map(&g, |s, gv| gv * s * (1.0 - s))?;
                    send(*a, gx);
                }
                Op::Add(a, b) => {
                    let sa = self.val(*a).shape();
                    let sb = self.val(*b).shape();
                    send(*a, tensor::reduce_to_shape(&g, sa));
                    send(*b, tensor::reduce_to_shape(&g, sb));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    if self.rg(*a) {
                        let t = tensor::broadcast_binary(&g, vb, |x, y| x * y)?;
                        send(*a, tensor::reduce_to_shape(&t, va.shape()));
                    }
                    if self.rg(*b) {
                        let t = tensor::broadcast_binary(&g, va, |x, y| x * y)?;
                        send(*b, tensor::reduce_to_shape(&t, vb.shape()));
                    }
                }
                Op::Scale(a, s) => send(*a, g.map(|v| v * s)),
                Op::MeanHw(a) => {
                    let [n, c, h, w] = self.val(*a).shape();
                    let inv = 1.0 / (h * w) as f64;
                    send(
                        *a,
                        Tensor::from_fn([n, c, h, w], |ni, ci, _, _| g.at(ni, ci, 0, 0) * inv),
                    );
                }
                Op::MaxHw(a, arg) => {
                    let shape = self.val(*a).shape();
                    let hw = shape[2] * shape[3];
                    let mut gx = Tensor::zeros(shape);
                    for (plane, &i) in arg.iter().enumerate() {
                        gx.data_mut()[plane * hw + i] += g.data()[plane];
                    }
                    send(*a, gx);
                }
                Op::MeanC(a) => {
                    let shape = self.val(*a).shape();
                    let inv = 1.0 / shape[1] as f64;
                    send(
                        *a,
                        Tensor::from_fn(shape, |ni, _, y, x| g.at(ni, 0, y, x) * inv),
                    );
                }
                Op::MaxC(a, arg) => {
                    send(*a, tensor::max_c_backward(&g, arg, self.val(*a).c()));
                }
                Op::AvgPool(a, k) => {
                    send(*a, tensor::avg_pool_backward(&g, *k, self.val(*a).shape()));
                }
                Op::Upsample(a) => {
                    send(
                        *a,
                        tensor::upsample_bilinear_backward(&g, self.val(*a).shape()),
                    );
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let c = self.val(*p).c();
                        if self.rg(*p) {
                            send(*p, tensor::slice_c(&g, start, c)?);
                        }
                        start += c;
                    }
                }
                Op::SliceC(a, start) => {
                    send(
                        *a,
                        tensor::slice_c_backward(&g, *start, self.val(*a).shape()),
                    );
                }
                Op::Rot90(a, rot) => send(*a, tensor::rot90(&g, rot.inverse())),
                Op::Warp { img, disp, offsets } => {
                    let (gi, gd) = warp_backward(
                        self.val(*img),
                        self.val(*disp),
                        offsets,
                        &g,
                        self.rg(*img),
                    );
                    if let Some(gi) = gi {
                        send(*img, gi);
                    }
                    send(*disp, gd);
                }
                Op::DiffX(a) => send(*a, tensor::diff_x_backward(&g)),
                Op::DiffY(a) => send(*a, tensor::diff_y_backward(&g)),
                Op::L1(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    let ga = tensor::l1_mean_backward(va, vb, g.item());
                    if self.rg(*b) {
                        send(*b, ga.map(|v| -v));
                    }
                    send(*a, ga);
                }
            }
        }
        Ok(out)
    }
}

impl Backend for Tape<'_> {
    type Value = Var;

    fn params(&self) -> &ParamStore {
        self.params
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }
    fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }
    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }
    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, dilation: usize) -> Result<Var> {
        let y = tensor::conv2d_forward(self.val(*x), self.val(*w), Some(self.val(*b)), dilation)?;
        Ok(self.push(
            y,
            Op::Conv {
                x: *x,
                w: *w,
                b: *b,
                dilation,
            },
        ))
    }
    fn relu(&mut self, x: &Var) -> Var {
        let y = tensor::relu(self.val(*x));
        self.push(y, Op::Relu(*x))
    }
    fn sigmoid(&mut self, x: &Var) -> Var {
        let y = tensor::sigmoid(self.val(*x));
        self.push(y, Op::Sigmoid(*x))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = tensor::broadcast_binary(self.val(*a), self.val(*b), |x, y| x + y)?;
        Ok(self.push(y, Op::Add(*a, *b)))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = tensor::broadcast_binary(self.val(*a), self.val(*b), |x, y| x * y)?;
        Ok(self.push(y, Op::Mul(*a, *b)))
    }
    fn scale(&mut self, x: &Var, s: f64) -> Var {
        let y = self.val(*x).map(|v| v * s);
        self.push(y, Op::Scale(*x, s))
    }
    fn mean_hw(&mut self, x: &Var) -> Var {
        let y = tensor::mean_hw(self.val(*x));
        self.push(y, Op::MeanHw(*x))
    }
    fn max_hw(&mut self, x: &Var) -> Var {
        let (y, arg) = tensor::max_hw(self.val(*x));
        self.push(y, Op::MaxHw(*x, arg))
    }
    fn mean_c(&mut self, x: &Var) -> Var {
        let y = tensor::mean_c(self.val(*x));
        self.push(y, Op::MeanC(*x))
    }
    fn max_c(&mut self, x: &Var) -> Var {
        let (y, arg) = tensor::max_c(self.val(*x));
        self.push(y, Op::MaxC(*x, arg))
    }
    fn avg_pool(&mut self, x: &Var, k: usize) -> Var {
        let y = tensor::avg_pool(self.val(*x), k);
        self.push(y, Op::AvgPool(*x, k))
    }
    fn upsample(&mut self, x: &Var, h: usize, w: usize) -> Var {
        let y = tensor::upsample_bilinear(self.val(*x), h, w);
        self.push(y, Op::Upsample(*x))
    }
    fn concat(&mut self, parts: &[&Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.val(**p)).collect();
        let y = tensor::concat_c(&refs)?;
        Ok(self.push(y, Op::Concat(parts.iter().map(|p| **p).collect())))
    }
    fn slice_c(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let y = tensor::slice_c(self.val(*x), start, len)?;
        Ok(self.push(y, Op::SliceC(*x, start)))
    }
    fn rot90(&mut self, x: &Var, rot: Rotation) -> Var {
        let y = tensor::rot90(self.val(*x), rot);
        self.push(y, Op::Rot90(*x, rot))
    }
    fn warp(&mut self, img: &Var, disp: &Var, offsets: &[(f64, f64)]) -> Result<Var> {
        let y = warp_forward(self.val(*img), self.val(*disp), offsets)?;
        Ok(self.push(
            y,
            Op::Warp {
                img: *img,
                disp: *disp,
                offsets: offsets.to_vec(),
            },
        ))
    }
    fn diff_x(&mut self, x: &Var) -> Var {
        let y = tensor::diff_x(self.val(*x));
        self.push(y, Op::DiffX(*x))
    }
    fn diff_y(&mut self, x: &Var) -> Var {
        let y = tensor::diff_y(self.val(*x));
        self.push(y, Op::DiffY(*x))
    }
    fn l1(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = Tensor::scalar(tensor::l1_mean(self.val(*a), self.val(*b))?);
        Ok(self.push(y, Op::L1(*a, *b)))
    }
}
