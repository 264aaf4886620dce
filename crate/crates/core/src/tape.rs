//! Reverse-mode autodiff over an explicit tape.
//!
//! Every forward op pushes its output tensor together with an [`Record`]
//! naming the op, its input node ids, and whatever small metadata backward
//! needs. Calling [`Tape::backward`] seeds the root with ones and replays the
//! records in reverse creation order, accumulating gradients into every
//! reachable node. Gradients are never zeroed implicitly: replaying backward
//! twice accumulates exactly twice the gradient.

use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::ops::conv2d::{self, Conv2dDims};
use crate::ops::conv3d::{self, Conv3dDims};
use crate::ops::softmax;
use crate::ops::upsample::{self, UpsampleMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
}

/// Op record: identifier, input references, and saved call metadata.
#[derive(Clone, Debug)]
pub enum Record<T: Scalar> {
    Leaf,
    Conv2d { input: TensorId, weight: TensorId, bias: TensorId, dims: Conv2dDims },
    Conv3d { input: TensorId, weight: TensorId, bias: TensorId, dims: Conv3dDims },
    Activation { input: TensorId, kind: ActivationKind },
    SoftmaxAxis { input: TensorId, axis: usize },
    Upsample2x { input: TensorId, mode: UpsampleMode },
    Add { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { input: TensorId, factor: T },
    ConcatChannels { a: TensorId, b: TensorId },
    ChannelSlice { input: TensorId, start: usize, len: usize },
    Reshape { input: TensorId },
    ReduceMean { input: TensorId, mask: Option<Arc<Vec<T>>>, count: usize },
    Lsp { input: TensorId, dilation: usize, window: usize, include_center: bool, eps: f64 },
    ConcatVolume { left: TensorId, right: TensorId, d_max: usize },
    DisparityExpectation { probs: TensorId },
    BilinearSample { map: TensorId, coord_x: TensorId, coord_y: TensorId },
    ChanMul { a: TensorId, b: TensorId },
    ChanDivFloor { num: TensorId, den: TensorId, eps: f64 },
    CeLoss { probs: TensorId, target: Arc<Vec<T>>, mask: Arc<Vec<T>>, valid: usize },
    SmoothL1 { pred: TensorId, target: Arc<Vec<T>>, mask: Arc<Vec<T>>, valid: usize },
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Tensor<T>>,
    records: Vec<Record<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input node (parameter, image, or constant).
    pub fn leaf(&mut self, tensor: Tensor<T>) -> TensorId {
        self.nodes.push(tensor);
        self.records.push(Record::Leaf);
        TensorId(self.nodes.len() - 1)
    }

    pub(crate) fn push_node(&mut self, shape: Vec<usize>, data: Vec<T>, record: Record<T>) -> Result<TensorId> {
        let tensor = Tensor::new(shape, data)?;
        self.nodes.push(tensor);
        self.records.push(record);
        Ok(TensorId(self.nodes.len() - 1))
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: TensorId) -> &[T] {
        self.nodes[id.0].data()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].shape()
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad()
    }

    pub fn zero_all_grads(&mut self) {
        for n in &mut self.nodes {
            n.zero_grad();
        }
    }

    // ── elementwise and shape ops ────────────────────────────────────

    pub fn relu(&mut self, input: TensorId) -> Result<TensorId> {
        let data: Vec<T> = self.data(input).iter().map(|&v| v.maxv(T::ZERO)).collect();
        let shape = self.shape(input).to_vec();
        self.push_node(shape, data, Record::Activation { input, kind: ActivationKind::Relu })
    }

    pub fn sigmoid(&mut self, input: TensorId) -> Result<TensorId> {
        let data: Vec<T> = self.data(input).iter().map(|&v| T::ONE / (T::ONE + (-v).exp())).collect();
        let shape = self.shape(input).to_vec();
        self.push_node(shape, data, Record::Activation { input, kind: ActivationKind::Sigmoid })
    }

    pub fn activation(&mut self, input: TensorId, kind: ActivationKind) -> Result<TensorId> {
        match kind {
            ActivationKind::Relu => self.relu(input),
            ActivationKind::Sigmoid => self.sigmoid(input),
        }
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push_node(shape, data, Record::Add { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::shape(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push_node(shape, data, Record::Mul { a, b })
    }

    pub fn scale(&mut self, input: TensorId, factor: T) -> Result<TensorId> {
        let data: Vec<T> = self.data(input).iter().map(|&v| v * factor).collect();
        let shape = self.shape(input).to_vec();
        self.push_node(shape, data, Record::Scale { input, factor })
    }

    /// Concatenate along the channel axis (axis 1). Shapes must match on
    /// every other axis.
    pub fn concat_channels(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != sb.len() || sa.len() < 2 {
            return Err(TensorError::shape("concat_channels", format!("{:?} vs {:?}", sa, sb)));
        }
        for ax in 0..sa.len() {
            if ax != 1 && sa[ax] != sb[ax] {
                return Err(TensorError::shape("concat_channels", format!("{:?} vs {:?}", sa, sb)));
            }
        }
        let batch = sa[0];
        let inner: usize = sa[2..].iter().product();
        let (ca, cb) = (sa[1], sb[1]);
        let mut out_shape = sa.clone();
        out_shape[1] = ca + cb;
        let mut data = vec![T::ZERO; batch * (ca + cb) * inner];
        for bi in 0..batch {
            let dst = &mut data[bi * (ca + cb) * inner..(bi + 1) * (ca + cb) * inner];
            dst[..ca * inner].copy_from_slice(&self.data(a)[bi * ca * inner..(bi + 1) * ca * inner]);
            dst[ca * inner..].copy_from_slice(&self.data(b)[bi * cb * inner..(bi + 1) * cb * inner]);
        }
        self.push_node(out_shape, data, Record::ConcatChannels { a, b })
    }

    /// View of `len` channels starting at `start` (axis 1).
    pub fn channel_slice(&mut self, input: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 || start + len > shape[1] {
            return Err(TensorError::shape(
                "channel_slice",
                format!("slice [{}, {}) of shape {:?}", start, start + len, shape),
            ));
        }
        let batch = shape[0];
        let channels = shape[1];
        let inner: usize = shape[2..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[1] = len;
        let mut data = vec![T::ZERO; batch * len * inner];
        for bi in 0..batch {
            let src = &self.data(input)[(bi * channels + start) * inner..(bi * channels + start + len) * inner];
            data[bi * len * inner..(bi + 1) * len * inner].copy_from_slice(src);
        }
        self.push_node(out_shape, data, Record::ChannelSlice { input, start, len })
    }

    pub fn reshape(&mut self, input: TensorId, new_shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = new_shape.iter().product();
        if numel != self.tensor(input).numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape(input), new_shape),
            ));
        }
        let data = self.data(input).to_vec();
        self.push_node(new_shape, data, Record::Reshape { input })
    }

    /// Mean over all elements, producing a scalar node.
    pub fn reduce_mean(&mut self, input: TensorId) -> Result<TensorId> {
        let n = self.tensor(input).numel();
        if n == 0 {
            return Err(TensorError::NoValidPixels { op: "reduce_mean" });
        }
        let mut sum = T::ZERO;
        for v in self.data(input) {
            sum += *v;
        }
        let mean = sum / T::from_usize(n);
        self.push_node(vec![1], vec![mean], Record::ReduceMean { input, mask: None, count: n })
    }

    /// Mean over elements selected by a same-shape {0,1} mask.
    pub fn reduce_mean_masked(&mut self, input: TensorId, mask: &Tensor<T>) -> Result<TensorId> {
        if mask.shape() != self.shape(input) {
            return Err(TensorError::shape(
                "reduce_mean",
                format!("mask {:?} vs input {:?}", mask.shape(), self.shape(input)),
            ));
        }
        let count = mask.data().iter().filter(|v| **v != T::ZERO).count();
        if count == 0 {
            return Err(TensorError::NoValidPixels { op: "reduce_mean" });
        }
        let mut sum = T::ZERO;
        for (v, m) in self.data(input).iter().zip(mask.data()) {
            if *m != T::ZERO {
                sum += *v;
            }
        }
        let mean = sum / T::from_usize(count);
        self.push_node(
            vec![1],
            vec![mean],
            Record::ReduceMean { input, mask: Some(Arc::new(mask.data().to_vec())), count },
        )
    }

    // ── structured ops ───────────────────────────────────────────────

    pub fn softmax_axis(&mut self, input: TensorId, axis: usize) -> Result<TensorId> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::invalid(
                "softmax_axis",
                format!("axis {} out of range for shape {:?}", axis, shape),
            ));
        }
        let data = softmax::forward(self.data(input), &shape, axis);
        self.push_node(shape, data, Record::SoftmaxAxis { input, axis })
    }

    pub fn upsample2x(&mut self, input: TensorId, mode: UpsampleMode) -> Result<TensorId> {
        let (b, c, h, w) = self.tensor(input).dims4()?;
        let data = upsample::forward(self.data(input), b, c, h, w, mode);
        self.push_node(vec![b, c, 2 * h, 2 * w], data, Record::Upsample2x { input, mode })
    }

    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<TensorId> {
        let dims = Conv2dDims::infer(
            self.shape(input),
            self.shape(weight),
            self.shape(bias),
            stride,
            padding,
            dilation,
        )?;
        let data = conv2d::forward(self.data(input), self.data(weight), self.data(bias), &dims);
        self.push_node(
            vec![dims.batch, dims.cout, dims.ho, dims.wo],
            data,
            Record::Conv2d { input, weight, bias, dims },
        )
    }

    pub fn conv3d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let dims = Conv3dDims::infer(self.shape(input), self.shape(weight), self.shape(bias), stride, padding)?;
        let data = conv3d::forward(self.data(input), self.data(weight), self.data(bias), &dims);
        self.push_node(
            vec![dims.batch, dims.cout, dims.do_, dims.ho, dims.wo],
            data,
            Record::Conv3d { input, weight, bias, dims },
        )
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse replay from a scalar root. Accumulates into existing
    /// gradient buffers without zeroing them first.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.tensor(root).numel() != 1 {
            return Err(TensorError::invalid(
                "backward",
                format!("root must be scalar, got shape {:?}", self.shape(root)),
            ));
        }
        self.nodes[root.0].accumulate_grad(&[T::ONE]);

        for i in (0..self.nodes.len()).rev() {
            let gout = match self.nodes[i].grad() {
                Some(_) => self.nodes[i].take_grad().unwrap(),
                None => continue,
            };
            let record = self.records[i].clone();
            self.dispatch_backward(i, &record, &gout);
            self.nodes[i].set_grad(gout);
        }
        Ok(())
    }

    fn accum(&mut self, id: TensorId, contrib: &[T]) {
        self.nodes[id.0].accumulate_grad(contrib);
    }

    fn dispatch_backward(&mut self, out_idx: usize, record: &Record<T>, gout: &[T]) {
        match record {
            Record::Leaf => {}

            Record::Conv2d { input, weight, bias, dims } => {
                let (di, dw, db) = conv2d::backward(self.data(*input), self.data(*weight), gout, dims);
                self.accum(*input, &di);
                self.accum(*weight, &dw);
                self.accum(*bias, &db);
            }

            Record::Conv3d { input, weight, bias, dims } => {
                let (di, dw, db) = conv3d::backward(self.data(*input), self.data(*weight), gout, dims);
                self.accum(*input, &di);
                self.accum(*weight, &dw);
                self.accum(*bias, &db);
            }

            Record::Activation { input, kind } => {
                let din: Vec<T> = match kind {
                    ActivationKind::Relu => self
                        .data(*input)
                        .iter()
                        .zip(gout)
                        .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
                        .collect(),
                    // sigmoid backward uses the saved output: s * (1 - s)
                    ActivationKind::Sigmoid => self.nodes[out_idx]
                        .data()
                        .iter()
                        .zip(gout)
                        .map(|(&s, &g)| g * s * (T::ONE - s))
                        .collect(),
                };
                self.accum(*input, &din);
            }

            Record::SoftmaxAxis { input, axis } => {
                let shape = self.shape(*input).to_vec();
                let din = softmax::backward(self.nodes[out_idx].data(), gout, &shape, *axis);
                self.accum(*input, &din);
            }

            Record::Upsample2x { input, mode } => {
                let (b, c, h, w) = self.tensor(*input).dims4().expect("recorded op had rank 4");
                let din = upsample::backward(gout, b, c, h, w, *mode);
                self.accum(*input, &din);
            }

            Record::Add { a, b } => {
                self.accum(*a, gout);
                self.accum(*b, gout);
            }

            Record::Mul { a, b } => {
                let da: Vec<T> = gout.iter().zip(self.data(*b)).map(|(&g, &y)| g * y).collect();
                let db: Vec<T> = gout.iter().zip(self.data(*a)).map(|(&g, &x)| g * x).collect();
                self.accum(*a, &da);
                self.accum(*b, &db);
            }

            Record::Scale { input, factor } => {
                let din: Vec<T> = gout.iter().map(|&g| g * *factor).collect();
                self.accum(*input, &din);
            }

            Record::ConcatChannels { a, b } => {
                let sa = self.shape(*a).to_vec();
                let sb = self.shape(*b).to_vec();
                let batch = sa[0];
                let inner: usize = sa[2..].iter().product();
                let (ca, cb) = (sa[1], sb[1]);
                let mut da = vec![T::ZERO; batch * ca * inner];
                let mut db = vec![T::ZERO; batch * cb * inner];
                for bi in 0..batch {
                    let g = &gout[bi * (ca + cb) * inner..(bi + 1) * (ca + cb) * inner];
                    da[bi * ca * inner..(bi + 1) * ca * inner].copy_from_slice(&g[..ca * inner]);
                    db[bi * cb * inner..(bi + 1) * cb * inner].copy_from_slice(&g[ca * inner..]);
                }
                self.accum(*a, &da);
                self.accum(*b, &db);
            }

            Record::ChannelSlice { input, start, len } => {
                let shape = self.shape(*input).to_vec();
                let batch = shape[0];
                let channels = shape[1];
                let inner: usize = shape[2..].iter().product();
                let mut din = vec![T::ZERO; self.tensor(*input).numel()];
                for bi in 0..batch {
                    let dst = &mut din[(bi * channels + start) * inner..(bi * channels + start + len) * inner];
                    dst.copy_from_slice(&gout[bi * len * inner..(bi + 1) * len * inner]);
                }
                self.accum(*input, &din);
            }

            Record::Reshape { input } => {
                self.accum(*input, gout);
            }

            Record::ReduceMean { input, mask, count } => {
                let scale = gout[0] / T::from_usize(*count);
                let din: Vec<T> = match mask {
                    None => vec![scale; self.tensor(*input).numel()],
                    Some(m) => m.iter().map(|&mv| if mv != T::ZERO { scale } else { T::ZERO }).collect(),
                };
                self.accum(*input, &din);
            }

            Record::Lsp { input, dilation, window, include_center, eps } => {
                let (b, c, h, w) = self.tensor(*input).dims4().expect("recorded op had rank 4");
                let offsets = crate::lsp::neighbor_offsets(*window, *dilation, *include_center);
                let din = crate::lsp::backward(self.data(*input), gout, b, c, h, w, &offsets, *eps);
                self.accum(*input, &din);
            }

            Record::ConcatVolume { left, right, d_max } => {
                let (b, c, h, w) = self.tensor(*left).dims4().expect("recorded op had rank 4");
                let (dl, dr) = crate::cost::concat_volume_backward(gout, b, c, h, w, *d_max);
                self.accum(*left, &dl);
                self.accum(*right, &dr);
            }

            Record::DisparityExpectation { probs } => {
                let (b, d, h, w) = self.tensor(*probs).dims4().expect("recorded op had rank 4");
                let dp = crate::cost::expectation_backward(gout, b, d, h * w);
                self.accum(*probs, &dp);
            }

            Record::BilinearSample { map, coord_x, coord_y } => {
                let (b, c, h, w) = self.tensor(*map).dims4().expect("recorded op had rank 4");
                let (dm, dx, dy) = crate::refine::bilinear_backward(
                    self.data(*map),
                    self.data(*coord_x),
                    self.data(*coord_y),
                    gout,
                    b,
                    c,
                    h,
                    w,
                );
                self.accum(*map, &dm);
                self.accum(*coord_x, &dx);
                self.accum(*coord_y, &dy);
            }

            Record::ChanMul { a, b } => {
                let (bn, c, h, w) = self.tensor(*a).dims4().expect("recorded op had rank 4");
                let (da, db) = crate::refine::chan_mul_backward(self.data(*a), self.data(*b), gout, bn, c, h * w);
                self.accum(*a, &da);
                self.accum(*b, &db);
            }

            Record::ChanDivFloor { num, den, eps } => {
                let (b, c, h, w) = self.tensor(*num).dims4().expect("recorded op had rank 4");
                let (dn, dd) =
                    crate::refine::chan_div_floor_backward(self.data(*num), self.data(*den), gout, *eps, b, c, h * w);
                self.accum(*num, &dn);
                self.accum(*den, &dd);
            }

            Record::CeLoss { probs, target, mask, valid } => {
                let (b, d, h, w) = self.tensor(*probs).dims4().expect("recorded op had rank 4");
                let dp = crate::cost::ce_loss_backward(self.data(*probs), target, mask, b, d, h * w, *valid, gout[0]);
                self.accum(*probs, &dp);
            }

            Record::SmoothL1 { pred, target, mask, valid } => {
                let dp = crate::cost::smooth_l1_backward(self.data(*pred), target, mask, *valid, gout[0]);
                self.accum(*pred, &dp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_sigmoid_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![-2.5, 0.0, 2.5]).unwrap());
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.data(r), &[0.0, 0.0, 2.5]);
        let s = tape.sigmoid(x).unwrap();
        assert!((tape.data(s)[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn add_identity_and_mul_shapes() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let z = tape.leaf(Tensor::zeros(vec![2, 2]));
        let sum = tape.add(x, z).unwrap();
        assert_eq!(tape.data(sum), tape.data(x));
        let bad = tape.leaf(Tensor::zeros(vec![3]));
        assert!(tape.add(x, bad).is_err());
        assert!(tape.mul(x, bad).is_err());
    }

    #[test]
    fn concat_orders_a_then_b() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::new(vec![1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![1, 3, 1, 2], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap());
        let c = tape.concat_channels(a, b).unwrap();
        assert_eq!(tape.shape(c), &[1, 5, 1, 2]);
        assert_eq!(tape.data(c), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
    }

    #[test]
    fn slice_views_channels() {
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::new(vec![1, 3, 1, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let s = tape.channel_slice(a, 1, 2).unwrap();
        assert_eq!(tape.shape(s), &[1, 2, 1, 2]);
        assert_eq!(tape.data(s), &[3.0, 4.0, 5.0, 6.0]);
        assert!(tape.channel_slice(a, 2, 2).is_err());
    }

    #[test]
    fn reduce_mean_all_and_masked() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let m = tape.reduce_mean(x).unwrap();
        assert_eq!(tape.data(m)[0], 2.0);

        let mask = Tensor::new(vec![3], vec![0.0, 0.0, 1.0]).unwrap();
        let mm = tape.reduce_mean_masked(x, &mask).unwrap();
        assert_eq!(tape.data(mm)[0], 3.0);

        let empty = Tensor::zeros(vec![3]);
        assert!(tape.reduce_mean_masked(x, &empty).is_err());
    }

    #[test]
    fn masked_mean_gradient_spreads_over_count() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mask = Tensor::new(vec![4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let m = tape.reduce_mean_masked(x, &mask).unwrap();
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.5, -0.5]).unwrap());
        let y = tape.mul(x, x).unwrap();
        let loss = tape.reduce_mean(y).unwrap();
        tape.backward(loss).unwrap();
        let g1: Vec<f64> = tape.grad(x).unwrap().to_vec();
        tape.backward(loss).unwrap();
        let g2: Vec<f64> = tape.grad(x).unwrap().to_vec();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(vec![2, 2]));
        let y = tape.relu(x).unwrap();
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn shared_input_accumulates_once_per_use() {
        // y = x + x -> dy/dx = 2
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![3.0]).unwrap());
        let y = tape.add(x, x).unwrap();
        let loss = tape.reduce_mean(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0]);
    }
}
