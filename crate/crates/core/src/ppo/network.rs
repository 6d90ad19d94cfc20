//! Actor-critic network: conv(3->16, 2x2) -> ReLU -> maxpool 2x2 ->
//! conv(16->64, 2x2) -> ReLU -> 64 features, followed by a 7-way actor
//! head and a scalar critic head, both squashed with tanh.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gridworld::{Observation, DEFAULT_VIEW_SIZE, NUM_ACTIONS};
use crate::rng::Rng;
use crate::tensor::kernels::{self, ImageDims, KernelDims};
use crate::tensor::{Tape, Tensor, Var};

pub const OBS_CHANNELS: usize = 3;
pub const CONV1_OUT: usize = 16;
pub const CONV2_OUT: usize = 64;
pub const FEATURES: usize = CONV2_OUT;

const CONV1_W: usize = 2 * 2 * OBS_CHANNELS * CONV1_OUT;
const CONV2_W: usize = 2 * 2 * CONV1_OUT * CONV2_OUT;
const ACTOR_W: usize = FEATURES * NUM_ACTIONS;
const CRITIC_W: usize = FEATURES;

/// Parameter blocks in storage order: `(shape, length)`.
const BLOCKS: [(&[usize], usize); 8] = [
    (&[2, 2, OBS_CHANNELS, CONV1_OUT], CONV1_W),
    (&[CONV1_OUT], CONV1_OUT),
    (&[2, 2, CONV1_OUT, CONV2_OUT], CONV2_W),
    (&[CONV2_OUT], CONV2_OUT),
    (&[FEATURES, NUM_ACTIONS], ACTOR_W),
    (&[NUM_ACTIONS], NUM_ACTIONS),
    (&[FEATURES, 1], CRITIC_W),
    (&[1], 1),
];

pub const NUM_PARAMS: usize =
    CONV1_W + CONV1_OUT + CONV2_W + CONV2_OUT + ACTOR_W + NUM_ACTIONS + CRITIC_W + 1;

/// How the actor head output becomes logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitHead {
    /// `tanh(linear(h))`, bounding logits to (-1, 1).
    #[default]
    Tanh,
    /// Raw `linear(h)`.
    Linear,
}

/// Flat parameter vector of the actor-critic.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    data: Vec<f64>,
}

fn block_ranges() -> [std::ops::Range<usize>; 8] {
    let mut start = 0;
    BLOCKS.map(|(_, len)| {
        let r = start..start + len;
        start += len;
        r
    })
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams {
            data: vec![0.0; NUM_PARAMS],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != NUM_PARAMS {
            return Err(Error::config(format!(
                "policy needs {NUM_PARAMS} parameters, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        Ok(PolicyParams { data })
    }

    /// Conv layers: uniform in `±1/sqrt(fan_in)` (weights and biases).
    /// Linear heads: standard normal weights with each output column
    /// rescaled to unit norm, zero bias.
    pub fn init(rng: &mut Rng) -> Self {
        let mut data = vec![0.0; NUM_PARAMS];
        let r = block_ranges();
        for (w, b, fan_in) in [(0, 1, 2 * 2 * OBS_CHANNELS), (2, 3, 2 * 2 * CONV1_OUT)] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for i in r[w].clone().chain(r[b].clone()) {
                data[i] = rng.gen_range(-bound..bound);
            }
        }
        for (w, outs) in [(4, NUM_ACTIONS), (6, 1)] {
            let block = &mut data[r[w].clone()];
            for v in block.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for o in 0..outs {
                let norm = (0..FEATURES)
                    .map(|k| block[k * outs + o].powi(2))
                    .sum::<f64>()
                    .sqrt();
                for k in 0..FEATURES {
                    block[k * outs + o] /= norm;
                }
            }
        }
        PolicyParams { data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.data[block_ranges()[i].clone()]
    }

    /// Register every parameter block on `tape`, in storage order.
    pub fn register(&self, tape: &mut Tape) -> NetVars {
        let r = block_ranges();
        let vars: Vec<Var> = BLOCKS
            .iter()
            .enumerate()
            .map(|(i, (shape, _))| {
                let t = Tensor::new(shape.to_vec(), self.data[r[i].clone()].to_vec())
                    .expect("block shape");
                tape.param(t)
            })
            .collect();
        NetVars {
            vars: vars.try_into().expect("eight blocks"),
        }
    }
}

/// Tape handles of the network parameters.
#[derive(Clone, Copy, Debug)]
pub struct NetVars {
    vars: [Var; 8],
}

/// Outputs of a recorded forward pass over a batch.
#[derive(Clone, Copy, Debug)]
pub struct NetOutputs {
    /// `N x 7` actor outputs (logits of the action distribution).
    pub logits: Var,
    /// `N` critic values.
    pub values: Var,
}

/// Stack observations into an `N x V x V x 3` tensor of normalized codes.
pub fn stack_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for o in obs {
        if o.view_size != DEFAULT_VIEW_SIZE {
            return Err(Error::config(format!(
                "network expects {DEFAULT_VIEW_SIZE}x{DEFAULT_VIEW_SIZE} observations, got {0}x{0}",
                o.view_size
            )));
        }
        o.write_normalized(&mut data);
        n += 1;
    }
    if n == 0 {
        return Err(Error::config("empty observation batch"));
    }
    Tensor::new(
        vec![n, DEFAULT_VIEW_SIZE, DEFAULT_VIEW_SIZE, OBS_CHANNELS],
        data,
    )
}

/// Record the forward pass of a batch `N x 5 x 5 x 3` on `tape`.
pub fn forward_tape(
    tape: &mut Tape,
    net: NetVars,
    obs: Var,
    head: LogitHead,
) -> Result<NetOutputs> {
    let [c1w, c1b, c2w, c2b, aw, ab, cw, cb] = net.vars;
    let shape = tape.value(obs).shape().to_vec();
    if shape.len() != 4 || shape[1..] != [DEFAULT_VIEW_SIZE, DEFAULT_VIEW_SIZE, OBS_CHANNELS] {
        return Err(Error::config(format!(
            "observation batch has shape {shape:?}"
        )));
    }
    let n = shape[0];
    let h = tape.conv2d(obs, c1w, Some(c1b))?;
    let h = tape.relu(h);
    let h = tape.maxpool2(h)?;
    let h = tape.conv2d(h, c2w, Some(c2b))?;
    let h = tape.relu(h);
    let h = tape.reshape(h, vec![n, FEATURES])?;
    let a = tape.linear(h, aw, Some(ab))?;
    let logits = match head {
        LogitHead::Tanh => tape.tanh(a),
        LogitHead::Linear => a,
    };
    let v = tape.linear(h, cw, Some(cb))?;
    let v = tape.tanh(v);
    let values = tape.reshape(v, vec![n])?;
    Ok(NetOutputs { logits, values })
}

/// Inference-only forward pass over `n` stacked observations. Returns
/// `(logits n x 7, values n)`.
pub fn forward_batch(
    params: &PolicyParams,
    obs: &[f64],
    n: usize,
    head: LogitHead,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let in_dims = ImageDims {
        batch: n,
        height: DEFAULT_VIEW_SIZE,
        width: DEFAULT_VIEW_SIZE,
        channels: OBS_CHANNELS,
    };
    if obs.len() != in_dims.len() {
        return Err(Error::config(format!(
            "expected {} observation values, got {}",
            in_dims.len(),
            obs.len()
        )));
    }
    let k1 = KernelDims::from_shape(BLOCKS[0].0)?;
    let k2 = KernelDims::from_shape(BLOCKS[2].0)?;
    let (mut h, d) = kernels::conv2d(obs, in_dims, params.block(0), k1, Some(params.block(1)))?;
    h.iter_mut().for_each(|v| *v = v.max(0.0));
    let (h, _, d) = kernels::maxpool2(&h, d)?;
    let (mut h, _) = kernels::conv2d(&h, d, params.block(2), k2, Some(params.block(3)))?;
    h.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut logits = kernels::linear(
        &h,
        n,
        FEATURES,
        params.block(4),
        NUM_ACTIONS,
        Some(params.block(5)),
    );
    if head == LogitHead::Tanh {
        logits.iter_mut().for_each(|v| *v = v.tanh());
    }
    let mut values = kernels::linear(&h, n, FEATURES, params.block(6), 1, Some(params.block(7)));
    values.iter_mut().for_each(|v| *v = v.tanh());
    if let Some(bad) = logits.iter().chain(&values).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network activation {bad}")));
    }
    Ok((logits, values))
}

/// Logits (7) and value for a single observation.
pub fn forward(
    params: &PolicyParams,
    obs: &Observation,
    head: LogitHead,
) -> Result<(Vec<f64>, f64)> {
    let t = stack_observations([obs])?;
    let (logits, values) = forward_batch(params, t.data(), 1, head)?;
    Ok((logits, values[0]))
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draw an action index from `probs` with one uniform sample.
pub fn sample_action(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
