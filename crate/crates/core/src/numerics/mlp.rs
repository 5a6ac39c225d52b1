use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Graph, NumericsError, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn apply_graph(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected network. Parameters are stored as `[W₀, b₀, W₁, b₁, …]`
/// with `Wᵢ` of shape `[nᵢ, nᵢ₊₁]` and `bᵢ` of shape `[nᵢ₊₁]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<Tensor>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// Weights and biases drawn uniformly from `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        validate_sizes(sizes)?;
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Tensor::matrix(w[0], w[1], draw(w[0] * w[1]))?);
            params.push(Tensor::new(vec![w[1]], draw(w[1]))?);
        }
        Ok(Self { sizes: sizes.to_vec(), params, hidden, output })
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self, NumericsError> {
        validate_sizes(sizes)?;
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            params.push(Tensor::zeros(&[w[0], w[1]]));
            params.push(Tensor::zeros(&[w[1]]));
        }
        Ok(Self { sizes: sizes.to_vec(), params, hidden, output })
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_params(
        sizes: &[usize],
        params: Vec<Tensor>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self, NumericsError> {
        let reference = Self::zeros(sizes, hidden, output)?;
        if params.len() != reference.params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "from_params",
                detail: format!("expected {} tensors, got {}", reference.params.len(), params.len()),
            });
        }
        for (p, r) in params.iter().zip(&reference.params) {
            if p.shape() != r.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "from_params",
                    detail: format!("{:?} vs {:?}", p.shape(), r.shape()),
                });
            }
        }
        Ok(Self { params, ..reference })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.hidden == other.hidden && self.output == other.output
    }

    fn check_input(&self, cols: usize) -> Result<(), NumericsError> {
        if cols != self.input_size() {
            return Err(NumericsError::ShapeMismatch {
                op: "mlp_forward",
                detail: format!("input has {cols} features, network expects {}", self.input_size()),
            });
        }
        Ok(())
    }

    /// Plain evaluation on a `[batch, input]` matrix (or a single row).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NumericsError> {
        self.check_input(input.cols())?;
        let layers = self.sizes.len() - 1;
        let mut h = input.clone();
        if h.shape().len() != 2 {
            h = h.reshape(&[input.rows(), input.cols()])?;
        }
        for l in 0..layers {
            let mut z = h.matmul(&self.params[2 * l])?;
            let bias = self.params[2 * l + 1].data();
            let act = if l + 1 == layers { self.output } else { self.hidden };
            for row in z.data_mut().chunks_exact_mut(bias.len()) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v = act.apply(*v + b);
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Registers the parameters on `g`, either as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MlpBinding {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect();
        MlpBinding { vars, input: self.input_size(), hidden: self.hidden, output: self.output }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<(), NumericsError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NumericsError::Config(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// Parameters of an [`Mlp`] recorded on a [`Graph`].
#[derive(Debug, Clone)]
pub struct MlpBinding {
    vars: Vec<Var>,
    input: usize,
    hidden: Activation,
    output: Activation,
}

impl MlpBinding {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NumericsError> {
        let cols = g.value(x).cols();
        if cols != self.input {
            return Err(NumericsError::ShapeMismatch {
                op: "mlp_forward",
                detail: format!("input has {cols} features, network expects {}", self.input),
            });
        }
        let layers = self.vars.len() / 2;
        let mut h = x;
        for l in 0..layers {
            let z = g.matmul(h, self.vars[2 * l])?;
            let z = g.add_row(z, self.vars[2 * l + 1])?;
            let act = if l + 1 == layers { self.output } else { self.hidden };
            h = act.apply_graph(g, z);
        }
        Ok(h)
    }

    /// Per-parameter gradients in parameter order; zeros where the loss does
    /// not depend on a parameter.
    pub fn gradients(&self, g: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|&v| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
            .collect()
    }
}

/// Evaluates a loss built on `net` and returns `(loss, ∇params)`.
pub fn gradient<F>(net: &Mlp, build: F) -> Result<(f64, Vec<Tensor>), NumericsError>
where
    F: FnOnce(&mut Graph, &MlpBinding) -> Result<Var, NumericsError>,
{
    let mut g = Graph::new();
    let binding = net.bind(&mut g, true);
    let loss = build(&mut g, &binding)?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).item()?, binding.gradients(&g, &grads)))
}

/// Online network plus its slowly tracking target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub online: Mlp,
    pub target: Mlp,
    tau: f64,
}

impl TargetPair {
    /// Target starts as an exact copy of `online`.
    pub fn new(online: Mlp, tau: f64) -> Result<Self, NumericsError> {
        check_tau(tau)?;
        Ok(Self { target: online.clone(), online, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `target ← τ·target + (1 − τ)·online`; τ is the retained fraction.
    pub fn polyak_update(&mut self) -> Result<(), NumericsError> {
        polyak_update(&mut self.target, &self.online, self.tau)
    }
}

fn check_tau(tau: f64) -> Result<(), NumericsError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(NumericsError::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

pub(crate) fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NumericsError> {
    check_tau(tau)?;
    if !target.same_architecture(online) {
        return Err(NumericsError::ShapeMismatch {
            op: "polyak_update",
            detail: format!("{:?} vs {:?}", target.sizes, online.sizes),
        });
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = tau * *tv + (1.0 - tau) * ov;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: Vec<Vec<f64>>, b: Vec<f64>) -> Mlp {
        let (i, o) = (w.len(), w[0].len());
        Mlp::from_params(
            &[i, o],
            vec![Tensor::from_rows(&w).unwrap(), Tensor::new(vec![o], b).unwrap()],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        let out = net.forward(&Tensor::row_vector(&[1.0, -4.0, 2.5])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer() {
        let net = linear(vec![vec![2.0, 0.0], vec![0.0, 3.0]], vec![0.0, 0.0]);
        let out = net.forward(&Tensor::row_vector(&[1.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[2.0, 3.0]);
    }

    #[test]
    fn hidden_rectifier_by_hand() {
        // Input (1, -1). Hidden W = [[1, 2], [3, -1]], b = [0.5, 0]:
        //   pre = (1 - 3 + 0.5, 2 + 1 + 0) = (-1.5, 3) -> relu (0, 3)
        // Output W = [[1], [-2]], b = [1]: 0·1 + 3·(-2) + 1 = -5
        let params = vec![
            Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap(),
            Tensor::new(vec![2], vec![0.5, 0.0]).unwrap(),
            Tensor::from_rows(&[vec![1.0], vec![-2.0]]).unwrap(),
            Tensor::new(vec![1], vec![1.0]).unwrap(),
        ];
        let net = Mlp::from_params(&[2, 2, 1], params, Activation::Relu, Activation::Identity).unwrap();
        let out = net.forward(&Tensor::row_vector(&[1.0, -1.0])).unwrap();
        assert_eq!(out.data(), &[-5.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = Mlp::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(
            net.forward(&Tensor::row_vector(&[1.0, 2.0])),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 256, 256, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert_eq!(net.param_count(), 3 * 256 + 256 + 256 * 256 + 256 + 256 + 1);
    }

    #[test]
    fn graph_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 8, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let x = Tensor::matrix(2, 4, (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let mut g = Graph::new();
        let b = net.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = b.forward(&mut g, xv).unwrap();
        assert_eq!(g.value(y), &net.forward(&x).unwrap());
    }

    #[test]
    fn least_squares_gradient_matches_closed_form() {
        // L = mean((Xw - y)²) over B rows; ∇w = 2·Xᵀ(Xw − y)/B, ∇b = 2·Σ(Xw − y)/B
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, -2.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![1.0], vec![0.0], vec![-1.0]]).unwrap();
        let net = Mlp::from_params(
            &[2, 1],
            vec![
                Tensor::from_rows(&[vec![0.3], vec![-0.7]]).unwrap(),
                Tensor::new(vec![1], vec![0.1]).unwrap(),
            ],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let (_, grads) = gradient(&net, |g, b| {
            let xv = g.constant(x.clone());
            let yv = g.constant(y.clone());
            let p = b.forward(g, xv)?;
            let r = g.sub(p, yv)?;
            let s = g.square(r);
            Ok(g.mean(s))
        })
        .unwrap();
        let pred = net.forward(&x).unwrap();
        let resid = pred.zip_map(&y, |p, t| p - t).unwrap();
        let expected_w = x.transpose().matmul(&resid).unwrap().map(|v| 2.0 * v / 3.0);
        assert!(grads[0].max_abs_diff(&expected_w) < 1e-12);
        assert!((grads[1].data()[0] - 2.0 * resid.sum() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn polyak_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let online = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let target = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();

        let mut keep = target.clone();
        polyak_update(&mut keep, &online, 1.0).unwrap();
        assert_eq!(keep, target);

        let mut copy = target.clone();
        polyak_update(&mut copy, &online, 0.0).unwrap();
        assert_eq!(copy, online);

        let zeros = Mlp::zeros(&[1, 1], Activation::Relu, Activation::Identity).unwrap();
        let twos = Mlp::from_params(
            &[1, 1],
            vec![Tensor::filled(&[1, 1], 2.0), Tensor::filled(&[1], 2.0)],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let mut half = zeros.clone();
        polyak_update(&mut half, &twos, 0.5).unwrap();
        assert!(half.params().iter().all(|p| p.data() == [1.0]));

        assert!(matches!(polyak_update(&mut half, &twos, 1.5), Err(NumericsError::Config(_))));
        assert!(TargetPair::new(zeros, -0.1).is_err());
    }

    #[test]
    fn polyak_converges_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let mut pair = TargetPair::new(online, 0.995).unwrap();
        pair.target = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let dist = |p: &TargetPair| {
            p.target
                .params()
                .iter()
                .zip(p.online.params())
                .map(|(t, o)| t.zip_map(o, |a, b| (a - b).powi(2)).unwrap().sum())
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = dist(&pair);
        for _ in 0..50 {
            pair.polyak_update().unwrap();
            let now = dist(&pair);
            assert!((now / prev - 0.995).abs() < 1e-9);
            prev = now;
        }
    }
}
