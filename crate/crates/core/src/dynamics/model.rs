//! Mean-aggregation graph layers and the encoder / message / decoder model.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{SceneGraph, NODE_FEATURES};
use crate::error::{Error, Result};
use crate::math::{normalize_backward, Quat, Vec3};
use crate::sim::Action;

/// Node features plus the four action scalars.
pub const INPUT_WIDTH: usize = NODE_FEATURES + 4;
/// Decoder outputs per node: Δg (3) then raw Δr (4).
pub const OUTPUT_WIDTH: usize = 7;

const MAGIC: &[u8; 6] = b"GSDYN1";

/// h' = act(h·W_self + mean_N(h)·W_neigh + b).
#[derive(Clone, Debug, PartialEq)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array1<f64>,
    pub relu: bool,
}

struct LayerTape {
    input: Array2<f64>,
    mean: Array2<f64>,
    pre: Array2<f64>,
}

impl SageLayer {
    fn uniform(fan_in: usize, fan_out: usize, relu: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |shape: (usize, usize)| Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound));
        let w_self = draw((fan_in, fan_out));
        let w_neigh = draw((fan_in, fan_out));
        let bias = Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..=bound));
        SageLayer {
            w_self,
            w_neigh,
            bias,
            relu,
        }
    }

    fn zeros(fan_in: usize, fan_out: usize, relu: bool) -> Self {
        SageLayer {
            w_self: Array2::zeros((fan_in, fan_out)),
            w_neigh: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
            relu,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w_self.ncols()
    }

    fn forward(&self, graph: &SceneGraph, input: Array2<f64>) -> (Array2<f64>, LayerTape) {
        let mean = graph.neighbor_mean(&input);
        let pre = input.dot(&self.w_self) + mean.dot(&self.w_neigh) + &self.bias;
        let out = if self.relu {
            pre.mapv(|v| v.max(0.0))
        } else {
            pre.clone()
        };
        (out, LayerTape { input, mean, pre })
    }

    fn backward(&self, graph: &SceneGraph, tape: &LayerTape, d_out: Array2<f64>, grad: &mut SageLayer) -> Array2<f64> {
        let mut d_pre = d_out;
        if self.relu {
            d_pre.zip_mut_with(&tape.pre, |d, &p| {
                if p <= 0.0 {
                    *d = 0.0
                }
            });
        }
        grad.w_self += &tape.input.t().dot(&d_pre);
        grad.w_neigh += &tape.mean.t().dot(&d_pre);
        grad.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.w_self.t()) + graph.neighbor_mean_adjoint(&d_pre.dot(&self.w_neigh.t()))
    }
}

/// Architecture and preprocessing constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Recursive message-passing steps Γ.
    pub gamma: usize,
    /// Edge threshold ω, meters.
    pub omega: f64,
    /// Multiplier on positions and action coordinates before the encoder.
    pub position_scale: f64,
    /// Multiplier on splat scales before the encoder.
    pub size_scale: f64,
    /// Displacement per unit of decoder output, meters.
    pub delta_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            gamma: 2,
            omega: 0.1,
            position_scale: 10.0,
            size_scale: 100.0,
            delta_scale: 0.1,
            seed: 0,
        }
    }
}

/// Per-node prediction: displacement and unit rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delta {
    pub dg: Vec3,
    pub dr: Quat,
}

impl Delta {
    pub const IDENTITY: Delta = Delta {
        dg: Vec3::new(0.0, 0.0, 0.0),
        dr: Quat::IDENTITY,
    };
}

/// Encoder (2 layers, ReLU), message module (2 layers, ReLU, shared over Γ
/// steps) and a linear decoder layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    /// enc₁, enc₂, msg₁, msg₂, dec.
    pub layers: Vec<SageLayer>,
    pub gamma: usize,
    pub omega: f64,
    /// Per-input multipliers applied to the raw node+action row.
    pub input_scale: [f64; INPUT_WIDTH],
    pub delta_scale: f64,
}

/// Intermediate values kept for the backward pass.
pub struct Tape {
    layers: Vec<(usize, LayerTape)>,
    raw: Array2<f64>,
}

/// Gradient with the same shape as the model's layers.
pub type ModelGrad = Vec<SageLayer>;

fn input_scale(position_scale: f64, size_scale: f64) -> [f64; INPUT_WIDTH] {
    let mut s = [1.0; INPUT_WIDTH];
    s[8..11].fill(position_scale);
    s[11..14].fill(size_scale);
    s[14..18].fill(position_scale);
    s
}

impl DynamicsModel {
    /// Seeded uniform ±1/√fan_in weights with a zero decoder.
    pub fn new(config: &ModelConfig) -> Self {
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = vec![
            SageLayer::uniform(INPUT_WIDTH, h, true, &mut rng),
            SageLayer::uniform(h, h, true, &mut rng),
            SageLayer::uniform(h, h, true, &mut rng),
            SageLayer::uniform(h, h, true, &mut rng),
            SageLayer::zeros(h, OUTPUT_WIDTH, false),
        ];
        DynamicsModel {
            layers,
            gamma: config.gamma,
            omega: config.omega,
            input_scale: input_scale(config.position_scale, config.size_scale),
            delta_scale: config.delta_scale,
        }
    }

    pub fn zero_grad(&self) -> ModelGrad {
        self.layers
            .iter()
            .map(|l| SageLayer::zeros(l.fan_in(), l.fan_out(), l.relu))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| 2 * l.w_self.len() + l.bias.len()).sum()
    }

    fn input(&self, graph: &SceneGraph, action: &Action) -> Result<Array2<f64>> {
        if graph.features.ncols() != NODE_FEATURES || graph.features.nrows() != graph.len() {
            return Err(Error::ShapeMismatch(format!(
                "node features are {:?}, expected ({}, {NODE_FEATURES})",
                graph.features.dim(),
                graph.len()
            )));
        }
        let u = action.to_array();
        let mut x = Array2::zeros((graph.len(), INPUT_WIDTH));
        for i in 0..graph.len() {
            for k in 0..NODE_FEATURES {
                x[[i, k]] = graph.features[[i, k]] * self.input_scale[k];
            }
            for k in 0..4 {
                x[[i, NODE_FEATURES + k]] = u[k] * self.input_scale[NODE_FEATURES + k];
            }
        }
        Ok(x)
    }

    fn check_shapes(&self) -> Result<()> {
        let l = &self.layers;
        let ok = l.len() == 5
            && l[0].fan_in() == INPUT_WIDTH
            && l[1].fan_in() == l[0].fan_out()
            && l[2].fan_in() == l[1].fan_out()
            && l[3].fan_in() == l[2].fan_out()
            && l[3].fan_out() == l[2].fan_in()
            && l[4].fan_in() == l[1].fan_out()
            && l[4].fan_out() == OUTPUT_WIDTH
            && l.iter()
                .all(|x| x.w_neigh.dim() == x.w_self.dim() && x.bias.len() == x.fan_out());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("inconsistent layer dimensions".into()))
        }
    }

    /// Per-node (Δg, Δr) plus the tape for [`DynamicsModel::backward`].
    pub fn forward_with_tape(&self, graph: &SceneGraph, action: &Action) -> Result<(Vec<Delta>, Tape)> {
        self.check_shapes()?;
        let mut h = self.input(graph, action)?;
        let mut tapes = Vec::with_capacity(3 + 2 * self.gamma);
        let mut order = vec![0, 1];
        for _ in 0..self.gamma {
            order.extend([2, 3]);
        }
        order.push(4);
        for id in order {
            let (out, tape) = self.layers[id].forward(graph, h);
            tapes.push((id, tape));
            h = out;
        }
        let deltas = (0..graph.len())
            .map(|i| {
                let row = h.row(i);
                let raw = Quat([row[3] + 1.0, row[4], row[5], row[6]]);
                Delta {
                    dg: Vec3::new(row[0], row[1], row[2]) * self.delta_scale,
                    dr: raw.normalized(),
                }
            })
            .collect();
        Ok((deltas, Tape { layers: tapes, raw: h }))
    }

    pub fn forward(&self, graph: &SceneGraph, action: &Action) -> Result<Vec<Delta>> {
        Ok(self.forward_with_tape(graph, action)?.0)
    }

    /// Backpropagates per-node gradients on (Δg, unit Δr). Adds weight
    /// gradients into `grad` and returns the gradient on the raw, unscaled
    /// input rows (node features then action).
    pub fn backward(
        &self,
        graph: &SceneGraph,
        tape: &Tape,
        d_dg: &[Vec3],
        d_dr: &[[f64; 4]],
        grad: &mut ModelGrad,
    ) -> Array2<f64> {
        let n = graph.len();
        let mut d = Array2::zeros((n, OUTPUT_WIDTH));
        for i in 0..n {
            for k in 0..3 {
                d[[i, k]] = d_dg[i][k] * self.delta_scale;
            }
            let raw = [
                tape.raw[[i, 3]] + 1.0,
                tape.raw[[i, 4]],
                tape.raw[[i, 5]],
                tape.raw[[i, 6]],
            ];
            let dr = normalize_backward(&raw, &d_dr[i]);
            for k in 0..4 {
                d[[i, 3 + k]] = dr[k];
            }
        }
        for (id, layer_tape) in tape.layers.iter().rev() {
            d = self.layers[*id].backward(graph, layer_tape, d, &mut grad[*id]);
        }
        for i in 0..n {
            for k in 0..INPUT_WIDTH {
                d[[i, k]] *= self.input_scale[k];
            }
        }
        d
    }

    /// All weights in declaration order: per layer W_self, W_neigh, b.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.w_self.iter_mut().chain(l.w_neigh.iter_mut()).chain(l.bias.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
    }

    /// Binary checkpoint: magic, u32 layer count, per-layer (fan_in, fan_out,
    /// relu), u32 Γ, f32 ω, f32 Δg scale, f32 input scales, then f32 weights.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            for v in [l.fan_in() as u32, l.fan_out() as u32, u32::from(l.relu)] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.extend_from_slice(&(self.gamma as u32).to_le_bytes());
        for v in [self.omega, self.delta_scale].iter().chain(self.input_scale.iter()) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for v in self.params() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.get(..MAGIC.len()) != Some(MAGIC.as_slice()) {
            return Err(Error::parse(path, "not a dynamics checkpoint"));
        }
        parse_checkpoint(&bytes, path)
    }
}

fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<DynamicsModel> {
    let bad = |msg: &str| Error::parse(path, msg);
    let mut at = MAGIC.len();
    let mut word = || -> Result<[u8; 4]> {
        let s = bytes.get(at..at + 4).ok_or_else(|| bad("truncated checkpoint"))?;
        at += 4;
        Ok(s.try_into().expect("4 bytes"))
    };
    let n_layers = u32::from_le_bytes(word()?) as usize;
    if n_layers != 5 {
        return Err(Error::ShapeMismatch(format!("expected 5 layers, found {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let fan_in = u32::from_le_bytes(word()?) as usize;
        let fan_out = u32::from_le_bytes(word()?) as usize;
        let relu = u32::from_le_bytes(word()?) != 0;
        layers.push(SageLayer::zeros(fan_in, fan_out, relu));
    }
    let gamma = u32::from_le_bytes(word()?) as usize;
    let omega = f32::from_le_bytes(word()?) as f64;
    let delta_scale = f32::from_le_bytes(word()?) as f64;
    let mut scale = [0.0; INPUT_WIDTH];
    for s in scale.iter_mut() {
        *s = f32::from_le_bytes(word()?) as f64;
    }
    let mut model = DynamicsModel {
        layers,
        gamma,
        omega,
        input_scale: scale,
        delta_scale,
    };
    model.check_shapes()?;
    let mut flat = Vec::with_capacity(model.n_params());
    for _ in 0..model.n_params() {
        flat.push(f32::from_le_bytes(word()?) as f64);
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after weights"));
    }
    model.set_params(&flat);
    Ok(model)
}

/// Layer weights in parameter order: per layer, self weights, neighbor
/// weights, then bias. Matches [`DynamicsModel::params`].
pub fn flatten(layers: &[SageLayer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w_self.iter().chain(l.w_neigh.iter()).chain(l.bias.iter()));
    }
    out
}
