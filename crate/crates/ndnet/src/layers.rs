use rand::Rng;

use crate::error::NdError;
use crate::tape::{Tape, Value};
use crate::tensor::Tensor;
use crate::Result;

/// Activation applied after a dense affine transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer `y = activation(x W + b)` with `W: in x out`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

impl DenseLayer {
    /// Zero-initialized layer.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Tensor::zeros(in_dim, out_dim),
            bias: Tensor::zeros(1, out_dim),
            activation,
        }
    }

    /// He-uniform initialized weights (`limit = sqrt(6 / fan_in)`), zero bias.
    pub fn init_he<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let mut layer = DenseLayer::new(in_dim, out_dim, activation);
        for w in layer.weights.data_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        layer
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weights.cols() {
            return Err(NdError::shape(
                "dense layer bias",
                weights.shape(),
                bias.shape(),
            ));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    /// Puts the parameters on a tape once so every subsequent forward pass
    /// through the same bound layer accumulates gradients into one leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        BoundDense {
            w: tape.leaf(&self.weights),
            b: tape.leaf(&self.bias),
            activation: self.activation,
            in_dim: self.in_dim(),
        }
    }
}

/// Tape handles for one dense layer.
#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    w: Value,
    b: Value,
    activation: Activation,
    in_dim: usize,
}

impl BoundDense {
    pub fn forward(&self, tape: &mut Tape, input: Value) -> Result<Value> {
        let in_shape = tape.shape(input);
        if in_shape.1 != self.in_dim {
            return Err(NdError::shape(
                "dense forward",
                in_shape,
                tape.shape(self.w),
            ));
        }
        let z = tape.matmul(input, self.w);
        let z = tape.add_bias(z, self.b);
        Ok(match self.activation {
            Activation::Relu => tape.relu(z),
            Activation::Identity => z,
        })
    }

    pub fn param_values(&self) -> [Value; 2] {
        [self.w, self.b]
    }
}

/// `m` equal-width dense layers with an identity skip connection from the
/// block input to the block output. With all-zero inner parameters (and ReLU
/// activations) the block is the identity map.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    layers: Vec<DenseLayer>,
}

impl ResidualBlock {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NdError::InvalidLayer(
                "residual block needs at least one layer".into(),
            ));
        }
        let width = layers[0].out_dim();
        for l in &layers {
            if l.in_dim() != width || l.out_dim() != width {
                return Err(NdError::InvalidLayer(format!(
                    "residual block layers must all be {width}x{width}, got {}x{}",
                    l.in_dim(),
                    l.out_dim()
                )));
            }
        }
        Ok(ResidualBlock { layers })
    }

    pub fn init_he<R: Rng + ?Sized>(
        depth: usize,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let layers = (0..depth)
            .map(|_| DenseLayer::init_he(width, width, activation, rng))
            .collect();
        ResidualBlock { layers }
    }

    pub fn width(&self) -> usize {
        self.layers[0].out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundResidual {
        BoundResidual {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            width: self.width(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundResidual {
    layers: Vec<BoundDense>,
    width: usize,
}

impl BoundResidual {
    pub fn forward(&self, tape: &mut Tape, input: Value) -> Result<Value> {
        let in_shape = tape.shape(input);
        if in_shape.1 != self.width {
            return Err(NdError::shape(
                "residual forward",
                in_shape,
                (self.width, self.width),
            ));
        }
        let mut z = input;
        for layer in &self.layers {
            z = layer.forward(tape, z)?;
        }
        Ok(tape.add(input, z))
    }
}

/// One element of a sequential stack.
#[derive(Clone, Debug)]
pub enum Block {
    Dense(DenseLayer),
    Residual(ResidualBlock),
}

/// A sequential composition of dense layers and residual blocks.
#[derive(Clone, Debug, Default)]
pub struct Stack {
    blocks: Vec<Block>,
}

impl Stack {
    pub fn new(blocks: Vec<Block>) -> Self {
        Stack { blocks }
    }

    pub fn push(&mut self, block: Block) {
        self.blocks.push(block);
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundStack {
        BoundStack {
            blocks: self
                .blocks
                .iter()
                .map(|b| match b {
                    Block::Dense(d) => BoundBlock::Dense(d.bind(tape)),
                    Block::Residual(r) => BoundBlock::Residual(r.bind(tape)),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BoundBlock {
    Dense(BoundDense),
    Residual(BoundResidual),
}

#[derive(Clone, Debug)]
pub struct BoundStack {
    blocks: Vec<BoundBlock>,
}

impl BoundStack {
    pub fn forward(&self, tape: &mut Tape, input: Value) -> Result<Value> {
        let mut z = input;
        for b in &self.blocks {
            z = match b {
                BoundBlock::Dense(d) => d.forward(tape, z)?,
                BoundBlock::Residual(r) => r.forward(tape, z)?,
            };
        }
        Ok(z)
    }

    /// Parameter leaves in canonical (visit) order.
    pub fn param_values(&self, out: &mut Vec<Value>) {
        for b in &self.blocks {
            match b {
                BoundBlock::Dense(d) => out.extend(d.param_values()),
                BoundBlock::Residual(r) => {
                    for l in &r.layers {
                        out.extend(l.param_values());
                    }
                }
            }
        }
    }
}

/// A model exposing its parameter tensors in a stable canonical order.
pub trait Parameterized {
    fn for_each_param(&self, f: &mut dyn FnMut(&Tensor));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));

    /// Number of parameter tensors.
    fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_| n += 1);
        n
    }

    /// Total number of trainable scalars.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |t| n += t.len());
        n
    }

    /// Flattens all parameters into one vector (canonical order).
    fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param(&mut |t| out.extend_from_slice(t.data()));
        out
    }

    /// Writes a flat vector back into the parameters. Panics on length mismatch.
    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.for_each_param_mut(&mut |t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

impl Parameterized for DenseLayer {
    fn for_each_param(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.weights);
        f(&self.bias);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weights);
        f(&mut self.bias);
    }
}

impl Parameterized for ResidualBlock {
    fn for_each_param(&self, f: &mut dyn FnMut(&Tensor)) {
        for l in &self.layers {
            l.for_each_param(f);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for l in &mut self.layers {
            l.for_each_param_mut(f);
        }
    }
}

impl Parameterized for Block {
    fn for_each_param(&self, f: &mut dyn FnMut(&Tensor)) {
        match self {
            Block::Dense(d) => d.for_each_param(f),
            Block::Residual(r) => r.for_each_param(f),
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        match self {
            Block::Dense(d) => d.for_each_param_mut(f),
            Block::Residual(r) => r.for_each_param_mut(f),
        }
    }
}

impl Parameterized for Stack {
    fn for_each_param(&self, f: &mut dyn FnMut(&Tensor)) {
        for b in &self.blocks {
            b.for_each_param(f);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for b in &mut self.blocks {
            b.for_each_param_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_layer_passes_input_through() {
        // W = I(2), b = 0, identity activation, input [[3, -1]] -> [[3, -1]]
        let layer =
            DenseLayer::from_parts(Tensor::eye(2), Tensor::zeros(1, 2), Activation::Identity)
                .unwrap();
        let mut tape = Tape::new();
        let bound = layer.bind(&mut tape);
        let x = tape.constant(&Tensor::from_vec(1, 2, vec![3.0, -1.0]));
        let y = bound.forward(&mut tape, x).unwrap();
        assert_eq!(tape.data(y).data(), &[3.0, -1.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        // W = [[1],[1]], b = [-5], relu, input [[2, 2]] -> [[0]]
        let layer = DenseLayer::from_parts(
            Tensor::from_vec(2, 1, vec![1.0, 1.0]),
            Tensor::from_vec(1, 1, vec![-5.0]),
            Activation::Relu,
        )
        .unwrap();
        let mut tape = Tape::new();
        let bound = layer.bind(&mut tape);
        let x = tape.constant(&Tensor::from_vec(1, 2, vec![2.0, 2.0]));
        let y = bound.forward(&mut tape, x).unwrap();
        assert_eq!(tape.data(y).data(), &[0.0]);
    }

    #[test]
    fn dense_forward_rejects_width_mismatch() {
        let layer = DenseLayer::new(3, 2, Activation::Identity);
        let mut tape = Tape::new();
        let bound = layer.bind(&mut tape);
        let x = tape.constant(&Tensor::zeros(1, 4));
        let err = bound.forward(&mut tape, x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x4") && msg.contains("3x2"), "got: {msg}");
    }

    #[test]
    fn random_dense_matches_hand_computed_product() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let layer = DenseLayer::init_he(3, 4, Activation::Identity, &mut rng);
        let input = Tensor::from_vec(2, 3, (0..6).map(|i| (i as f64) * 0.37 - 1.0).collect());

        let mut tape = Tape::new();
        let bound = layer.bind(&mut tape);
        let x = tape.constant(&input);
        let y = bound.forward(&mut tape, x).unwrap();

        // Independent brute-force oracle: explicit triple loop plus bias.
        for r in 0..2 {
            for c in 0..4 {
                let mut s = layer.bias().get(0, c);
                for k in 0..3 {
                    s += input.get(r, k) * layer.weights().get(k, c);
                }
                assert!((tape.data(y).get(r, c) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zeroed_residual_block_is_identity() {
        let block = ResidualBlock::new(vec![
            DenseLayer::new(4, 4, Activation::Relu),
            DenseLayer::new(4, 4, Activation::Relu),
            DenseLayer::new(4, 4, Activation::Relu),
        ])
        .unwrap();
        let mut tape = Tape::new();
        let bound = block.bind(&mut tape);
        let input = Tensor::from_vec(2, 4, vec![0.1, -0.2, 0.3, 1.0, -1.0, 0.5, 0.0, 2.0]);
        let x = tape.constant(&input);
        let y = bound.forward(&mut tape, x).unwrap();
        assert_eq!(tape.data(y), &input);
    }

    #[test]
    fn residual_block_rejects_uneven_widths() {
        let err = ResidualBlock::new(vec![
            DenseLayer::new(4, 4, Activation::Relu),
            DenseLayer::new(4, 3, Activation::Relu),
        ])
        .unwrap_err();
        assert!(matches!(err, NdError::InvalidLayer(_)));
    }

    #[test]
    fn flatten_set_roundtrip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut stack = Stack::new(vec![
            Block::Dense(DenseLayer::init_he(2, 4, Activation::Relu, &mut rng)),
            Block::Residual(ResidualBlock::init_he(2, 4, Activation::Relu, &mut rng)),
        ]);
        let flat = stack.flatten_params();
        assert_eq!(flat.len(), stack.param_count());
        let mut changed = flat.clone();
        changed[5] += 1.0;
        stack.set_flat_params(&changed);
        assert_eq!(stack.flatten_params(), changed);
    }
}
