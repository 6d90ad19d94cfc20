use super::kernels::{self, ImageDims, KernelDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: Option<usize>,
    },
    MaxPool2 {
        input: usize,
        argmax: Vec<usize>,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    Reshape(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Square(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Minimum(usize, usize),
    Clamp {
        input: usize,
        lo: f64,
        hi: f64,
    },
    LogSoftmax(usize),
    PickColumns {
        input: usize,
        columns: Vec<usize>,
    },
    SumLast(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Linear record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it. [`Tape::backward`] consumes the tape and visits each node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<usize>,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, zeros if it did not
    /// contribute.
    pub fn wrt(&self, var: Var) -> Vec<f64> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.shapes[var.0].iter().product()],
        }
    }

    /// Gradients of all registered parameters, concatenated in
    /// registration order.
    pub fn param_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &p in &self.params {
            match &self.grads[p] {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, self.shapes[p].iter().product())),
            }
        }
        out
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = *shape.last().expect("non-empty shape");
    (shape.iter().product::<usize>() / cols, cols)
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(value, op)
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        same_shape(ta, tb, what)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        Ok(self.push(value, op))
    }

    /// A constant input; gradients are tracked but not reported as
    /// parameters.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable parameter. [`Gradients::param_grads`] concatenates
    /// parameter gradients in the order they were registered here.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Param);
        self.params.push(v.0);
        v
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let k = &self.nodes[kernel.0].value;
        let in_dims = ImageDims::from_shape(x.shape())?;
        let k_dims = KernelDims::from_shape(k.shape())?;
        let b = bias.map(|b| self.nodes[b.0].value.data());
        let (data, out_dims) = kernels::conv2d(x.data(), in_dims, k.data(), k_dims, b)?;
        let value = Tensor::new(out_dims.shape_like(x.shape()), data)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                bias: bias.map(|b| b.0),
            },
        ))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let dims = ImageDims::from_shape(x.shape())?;
        let (data, argmax, out_dims) = kernels::maxpool2(x.data(), dims)?;
        let value = Tensor::new(out_dims.shape_like(x.shape()), data)?;
        Ok(self.push(
            value,
            Op::MaxPool2 {
                input: input.0,
                argmax,
            },
        ))
    }

    /// `x W + b` for a vector `x` (`n`) or a batch of rows (`rows x n`),
    /// with `W` shaped `n x m` and `b` shaped `m`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let (n, m) = match *w.shape() {
            [n, m] => (n, m),
            _ => {
                return Err(Error::config(format!(
                    "linear weight must be 2-D, got {:?}",
                    w.shape()
                )))
            }
        };
        let (rows, cols) = rows_cols(x.shape());
        if cols != n {
            return Err(Error::config(format!(
                "linear input width {cols} does not match weight rows {n}"
            )));
        }
        let b = match bias {
            Some(b) => {
                let bt = &self.nodes[b.0].value;
                if bt.len() != m {
                    return Err(Error::config(format!(
                        "linear bias has {} entries, expected {m}",
                        bt.len()
                    )));
                }
                Some(bt.data())
            }
            None => None,
        };
        let data = kernels::linear(x.data(), rows, n, w.data(), m, b);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::Linear {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
            },
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.nodes[input.0].value.clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(input.0)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x.0))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x.0))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, move |v| v * factor, Op::Scale(x.0, factor))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, move |v| v + c, Op::AddScalar(x.0))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(
            x,
            move |v| v.clamp(lo, hi),
            Op::Clamp { input: x.0, lo, hi },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Elementwise minimum; on ties the gradient flows to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "minimum", f64::min, Op::Minimum(a.0, b.0))
    }

    /// Log-softmax over the last dimension.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let (rows, k) = rows_cols(t.shape());
        let data = kernels::log_softmax(t.data(), rows, k);
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::LogSoftmax(x.0))
    }

    /// Select one column per row of a `rows x k` matrix, giving `rows`.
    pub fn pick_columns(&mut self, x: Var, columns: &[usize]) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let (rows, k) = rows_cols(t.shape());
        if columns.len() != rows || columns.iter().any(|&c| c >= k) {
            return Err(Error::config(format!(
                "pick_columns: {} indices for {rows}x{k} input",
                columns.len()
            )));
        }
        let data = columns
            .iter()
            .enumerate()
            .map(|(r, &c)| t.data()[r * k + c])
            .collect();
        let value = Tensor::new(vec![rows], data)?;
        Ok(self.push(
            value,
            Op::PickColumns {
                input: x.0,
                columns: columns.to_vec(),
            },
        ))
    }

    /// Sum over the last dimension.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let (rows, k) = rows_cols(t.shape());
        let data = (0..rows)
            .map(|r| t.data()[r * k..(r + 1) * k].iter().sum())
            .collect();
        let shape = if t.shape().len() > 1 {
            t.shape()[..t.shape().len() - 1].to_vec()
        } else {
            vec![1]
        };
        let value = Tensor::new(shape, data).expect("row sums");
        self.push(value, Op::SumLast(x.0))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x.0))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x.0))
    }

    /// Reverse pass from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let Tape { nodes, params } = self;
        if loss.0 >= nodes.len() {
            return Err(Error::contract("loss node is not on this tape"));
        }
        if !nodes[loss.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let val = |j: usize| nodes[j].value.data();
            match &node.op {
                Op::Leaf | Op::Param => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                } => {
                    let x = &nodes[*input].value;
                    let k = &nodes[*kernel].value;
                    let in_dims = ImageDims::from_shape(x.shape())?;
                    let k_dims = KernelDims::from_shape(k.shape())?;
                    let (gx, gk, gb) =
                        kernels::conv2d_backward(x.data(), in_dims, k.data(), k_dims, &g);
                    accumulate(&mut grads[*input], &gx);
                    accumulate(&mut grads[*kernel], &gk);
                    if let Some(b) = bias {
                        accumulate(&mut grads[*b], &gb);
                    }
                }
                Op::MaxPool2 { input, argmax } => {
                    let mut gx = vec![0.0; nodes[*input].value.len()];
                    for (&src, &gv) in argmax.iter().zip(&g) {
                        gx[src] += gv;
                    }
                    accumulate(&mut grads[*input], &gx);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &nodes[*input].value;
                    let w = &nodes[*weight].value;
                    let (n, m) = (w.shape()[0], w.shape()[1]);
                    let rows = x.len() / n;
                    let (gx, gw, gb) = kernels::linear_backward(x.data(), rows, n, w.data(), m, &g);
                    accumulate(&mut grads[*input], &gx);
                    accumulate(&mut grads[*weight], &gw);
                    if let Some(b) = bias {
                        accumulate(&mut grads[*b], &gb);
                    }
                }
                Op::Reshape(x) => accumulate(&mut grads[*x], &g),
                Op::Relu(x) => {
                    let gx: Vec<f64> = val(*x)
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = node
                        .value
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&y, &gv)| gv * (1.0 - y * y))
                        .collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Exp(x) => {
                    let gx: Vec<f64> = node
                        .value
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&y, &gv)| gv * y)
                        .collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Square(x) => {
                    let gx: Vec<f64> = val(*x)
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| 2.0 * v * gv)
                        .collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Scale(x, f) => {
                    let gx: Vec<f64> = g.iter().map(|&gv| gv * f).collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::AddScalar(x) => accumulate(&mut grads[*x], &g),
                Op::Clamp { input, lo, hi } => {
                    let gx: Vec<f64> = val(*input)
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if v >= *lo && v <= *hi { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[*input], &gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut grads[*b], &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = val(*b).iter().zip(&g).map(|(y, gv)| y * gv).collect();
                    let gb: Vec<f64> = val(*a).iter().zip(&g).map(|(x, gv)| x * gv).collect();
                    accumulate(&mut grads[*a], &ga);
                    accumulate(&mut grads[*b], &gb);
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let mut ga = vec![0.0; g.len()];
                    let mut gb = vec![0.0; g.len()];
                    for k in 0..g.len() {
                        if va[k] <= vb[k] {
                            ga[k] = g[k];
                        } else {
                            gb[k] = g[k];
                        }
                    }
                    accumulate(&mut grads[*a], &ga);
                    accumulate(&mut grads[*b], &gb);
                }
                Op::LogSoftmax(x) => {
                    let (rows, k) = rows_cols(node.value.shape());
                    let y = node.value.data();
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let gs: f64 = g[r * k..(r + 1) * k].iter().sum();
                        for c in 0..k {
                            gx[r * k + c] = g[r * k + c] - y[r * k + c].exp() * gs;
                        }
                    }
                    accumulate(&mut grads[*x], &gx);
                }
                Op::PickColumns { input, columns } => {
                    let (_, k) = rows_cols(nodes[*input].value.shape());
                    let mut gx = vec![0.0; nodes[*input].value.len()];
                    for (r, &c) in columns.iter().enumerate() {
                        gx[r * k + c] += g[r];
                    }
                    accumulate(&mut grads[*input], &gx);
                }
                Op::SumLast(x) => {
                    let (_, k) = rows_cols(nodes[*x].value.shape());
                    let gx: Vec<f64> = g
                        .iter()
                        .flat_map(|&gv| std::iter::repeat_n(gv, k))
                        .collect();
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Sum(x) => {
                    let gx = vec![g[0]; nodes[*x].value.len()];
                    accumulate(&mut grads[*x], &gx);
                }
                Op::Mean(x) => {
                    let n = nodes[*x].value.len();
                    let gx = vec![g[0] / n as f64; n];
                    accumulate(&mut grads[*x], &gx);
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Only leaves and parameters keep their gradient after the pass.
        for (i, n) in nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf | Op::Param) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(t(&[4], &[0.5, -1.0, 2.0, 3.0]));
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.param_grads(), vec![1.0; 4]);
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::scalar(3.0));
        let sq = tape.square(p);
        let g = tape.backward(sq).unwrap();
        assert_eq!(g.param_grads(), vec![6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(t(&[2], &[1.0, 2.0]));
        let e = tape.exp(p);
        assert!(matches!(tape.backward(e), Err(Error::Contract(_))));
    }

    #[test]
    fn conv_shape_and_zero_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[5, 5, 3]));
        let k = tape.param(Tensor::full(&[2, 2, 3, 16], 0.3));
        let b = tape.param(Tensor::full(&[16], 0.25));
        let y = tape.conv2d(x, k, Some(b)).unwrap();
        assert_eq!(tape.value(y).shape(), &[4, 4, 16]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.25));
        let y0 = tape.conv2d(x, k, None).unwrap();
        assert!(tape.value(y0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_gradient_goes_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 2, 1], &[1.0, 3.0, 2.0, 0.0]));
        let y = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.param_grads(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_linear_passes_input_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.5, -2.0, 0.25]));
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = tape.param(t(&[3, 3], &eye));
        let b = tape.param(Tensor::zeros(&[3]));
        let y = tape.linear(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, -2.0, 0.25]);
        assert_eq!(tape.value(y).shape(), &[3]);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3]));
        let w = tape.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.linear(x, w, None), Err(Error::Config(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dp (p * p + p) = 2p + 1
        let mut tape = Tape::new();
        let p = tape.param(Tensor::scalar(1.5));
        let sq = tape.mul(p, p).unwrap();
        let y = tape.add(sq, p).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.param_grads(), vec![4.0]);
    }
}
