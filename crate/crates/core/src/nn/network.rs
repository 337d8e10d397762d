//! The multi-head mixture network.
//!
//! ```text
//!   x ─ trunk: Dense ─ BN ─ ReLU ─ Dense ─ ReLU ─ Dense ─ ReLU ─► z
//!   z ─ reg:   Dense ─ BN ─ ReLU ─ Dense ─ ReLU ─┬─ Dense ─► shape logits (p)
//!                                                └─ Dense ─► scale logits (p)
//!   z ─ clf:   Dense ─ BN ─ ReLU ─ Dense ─ ReLU ─── Dense ─► weight logits (p)
//! ```
//!
//! The classification head exists only for `p > 1`. Output activations
//! (ELU plus offsets, softmax) are applied by [`HeadOutputs::to_params`] so
//! that the loss gradient can be taken with respect to the raw logits.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::ScalerStats;
use crate::error::{Error, Result};
use crate::mixloss::{constraint_violations, BatchParams, HeadGradients, HeadOutputs};
use crate::nn::batchnorm::{BatchNorm, BatchNormCache, BatchStats};
use crate::nn::dense::Dense;

pub const DEFAULT_TRUNK_WIDTHS: [usize; 3] = [128, 64, 32];
pub const DEFAULT_HEAD_WIDTHS: [usize; 2] = [16, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub n_components: usize,
    pub trunk_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, n_components: usize) -> Self {
        Self {
            input_dim,
            n_components,
            trunk_widths: DEFAULT_TRUNK_WIDTHS.to_vec(),
            head_widths: DEFAULT_HEAD_WIDTHS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if self.n_components == 0 {
            return Err(Error::Config("mixture size p must be >= 1".into()));
        }
        if self.trunk_widths.is_empty() || self.head_widths.is_empty() {
            return Err(Error::Config("trunk and heads need at least one layer".into()));
        }
        if self.trunk_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn has_classifier(&self) -> bool {
        self.n_components > 1
    }
}

/// Row-major copy regardless of the array's memory order.
fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
}

impl Layer {
    fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense { input: Array2<f64> },
    BatchNorm(BatchNormCache),
    Relu { output: Array2<f64> },
}

/// Dense ─ BN ─ ReLU, then Dense ─ ReLU for every further width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stack {
    name: String,
    layers: Vec<Layer>,
}

struct StackRun {
    output: Array2<f64>,
    caches: Vec<LayerCache>,
    stats: Vec<Option<BatchStats>>,
}

impl Stack {
    fn build(name: &str, input: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::new();
        let mut prev = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Layer::Dense(Dense::he_init(prev, w, rng)));
            if i == 0 {
                layers.push(Layer::BatchNorm(BatchNorm::new(w)));
            }
            layers.push(Layer::Relu);
            prev = w;
        }
        Self {
            name: name.to_string(),
            layers,
        }
    }

    fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.output_dim()),
                _ => None,
            })
            .unwrap_or(0)
    }

    fn run(&self, x: &Array2<f64>, training: bool) -> Result<StackRun> {
        let mut caches = Vec::with_capacity(if training { self.layers.len() } else { 0 });
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut layer_stats = None;
            let next = match layer {
                Layer::Dense(d) => {
                    let out = d.forward(&current);
                    if training {
                        caches.push(LayerCache::Dense { input: current });
                    }
                    out
                }
                Layer::BatchNorm(bn) if training => {
                    let (out, cache, s) = bn.forward_train(&current)?;
                    caches.push(LayerCache::BatchNorm(cache));
                    layer_stats = Some(s);
                    out
                }
                Layer::BatchNorm(bn) => bn.forward_inference(&current),
                Layer::Relu => {
                    let out = current.mapv(|v| v.max(0.0));
                    if training {
                        caches.push(LayerCache::Relu {
                            output: out.clone(),
                        });
                    }
                    out
                }
            };
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation {
                    layer: format!("{}.{idx} ({})", self.name, layer.kind()),
                });
            }
            stats.push(layer_stats);
            current = next;
        }
        Ok(StackRun {
            output: current,
            caches,
            stats,
        })
    }

    fn apply_stats(&mut self, stats: &[Option<BatchStats>]) {
        for (layer, s) in self.layers.iter_mut().zip(stats) {
            if let (Layer::BatchNorm(bn), Some(s)) = (layer, s) {
                bn.update_running(s);
            }
        }
    }

    /// Backpropagates `dy`; returns the input gradient (if requested) and the
    /// parameter gradients in layer order.
    fn backward(
        &self,
        caches: &[LayerCache],
        dy: Array2<f64>,
        need_input_grad: bool,
    ) -> (Option<Array2<f64>>, Vec<Vec<f64>>) {
        let mut grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut delta = dy;
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let first = idx == 0;
            match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { input }) => {
                    let (dw, db, dx) = d.backward(input, &delta, !first || need_input_grad);
                    grads[idx] = vec![flat(&dw), db.to_vec()];
                    if let Some(dx) = dx {
                        delta = dx;
                    }
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                    let (dx, dscale, dshift) = bn.backward(c, &delta);
                    grads[idx] = vec![dscale.to_vec(), dshift.to_vec()];
                    delta = dx;
                }
                (Layer::Relu, LayerCache::Relu { output }) => {
                    ndarray::Zip::from(&mut delta).and(output).for_each(|d, &o| {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    });
                }
                _ => unreachable!("cache layout follows the layer list"),
            }
        }
        let input_grad = need_input_grad.then_some(delta);
        (input_grad, grads.into_iter().flatten().collect())
    }

    fn push_params<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.scale.as_slice().expect("standard layout"));
                    out.push(bn.shift.as_slice().expect("standard layout"));
                }
                Layer::Relu => {}
            }
        }
    }

    fn push_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.scale.as_slice_mut().expect("standard layout"));
                    out.push(bn.shift.as_slice_mut().expect("standard layout"));
                }
                Layer::Relu => {}
            }
        }
    }

    fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierHead {
    stack: Stack,
    output: Dense,
}

/// Weights, normalization statistics and metadata of a mixture network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    architecture: Architecture,
    offset_epsilon: f64,
    trunk: Stack,
    regression: Stack,
    shape_output: Dense,
    scale_output: Dense,
    classifier: Option<ClassifierHead>,
    scaler: Option<ScalerStats>,
    feature_names: Vec<String>,
    #[serde(skip)]
    version: u64,
}

/// Intermediate values of one forward pass, consumed by [`NetworkModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    training: bool,
    n_rows: usize,
    trunk: Vec<LayerCache>,
    regression: Vec<LayerCache>,
    regression_features: Option<Array2<f64>>,
    classifier: Option<(Vec<LayerCache>, Array2<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub heads: HeadOutputs,
    pub params: BatchParams,
    pub cache: ForwardCache,
}

/// Parameter gradients, one flat tensor per weight/bias/scale/shift in the
/// order of [`NetworkModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NetworkModel {
    pub fn new(architecture: Architecture, offset_epsilon: f64, seed: u64) -> Result<Self> {
        architecture.validate()?;
        if !(offset_epsilon.is_finite() && offset_epsilon > 0.0) {
            return Err(Error::Config(format!("offset epsilon must be > 0, got {offset_epsilon}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = architecture.n_components;
        let trunk = Stack::build("trunk", architecture.input_dim, &architecture.trunk_widths, &mut rng);
        let latent = trunk.output_dim();
        let regression = Stack::build("regression", latent, &architecture.head_widths, &mut rng);
        let head_dim = regression.output_dim();
        let shape_output = Dense::he_init(head_dim, p, &mut rng);
        let scale_output = Dense::he_init(head_dim, p, &mut rng);
        let classifier = architecture.has_classifier().then(|| {
            let stack = Stack::build("classifier", latent, &architecture.head_widths, &mut rng);
            let output = Dense::he_init(stack.output_dim(), p, &mut rng);
            ClassifierHead { stack, output }
        });
        Ok(Self {
            architecture,
            offset_epsilon,
            trunk,
            regression,
            shape_output,
            scale_output,
            classifier,
            scaler: None,
            feature_names: Vec::new(),
            version: 0,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn n_components(&self) -> usize {
        self.architecture.n_components
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn offset_epsilon(&self) -> f64 {
        self.offset_epsilon
    }

    pub fn scaler(&self) -> Option<&ScalerStats> {
        self.scaler.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Attaches the feature standardization the model was trained under.
    pub fn set_preprocessing(&mut self, scaler: ScalerStats, feature_names: Vec<String>) {
        self.scaler = Some(scaler);
        self.feature_names = feature_names;
    }

    /// Applies the stored feature standardization (identity without one).
    pub fn standardize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.architecture.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.architecture.input_dim,
                x.ncols()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("input features must be finite".into()));
        }
        Ok(())
    }

    /// Forward pass without side effects. In training mode, batch statistics
    /// are returned for the caller to fold into the running averages.
    fn evaluate(&self, x: &Array2<f64>, training: bool) -> Result<(ForwardPass, Vec<Vec<Option<BatchStats>>>)> {
        self.check_input(x)?;
        let trunk = self.trunk.run(x, training)?;
        let regression = self.regression.run(&trunk.output, training)?;
        let beta_raw = self.shape_output.forward(&regression.output);
        let eta_raw = self.scale_output.forward(&regression.output);
        let classifier = match &self.classifier {
            Some(head) => {
                let run = head.stack.run(&trunk.output, training)?;
                let logits = head.output.forward(&run.output);
                Some((run, logits))
            }
            None => None,
        };
        for (name, m) in [("shape output", &beta_raw), ("scale output", &eta_raw)]
            .into_iter()
            .chain(classifier.as_ref().map(|(_, l)| ("weight output", l)))
        {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: name.into() });
            }
        }

        let heads = HeadOutputs {
            alpha_logits: classifier.as_ref().map(|(_, l)| l.clone()),
            beta_raw,
            eta_raw,
        };
        let params = heads.to_params(self.offset_epsilon)?;
        debug_assert_eq!(
            constraint_violations(&params, self.offset_epsilon),
            0,
            "network output violates the mixture constraints"
        );

        let mut stats = vec![trunk.stats, regression.stats];
        let classifier_cache = classifier.map(|(run, _)| {
            stats.push(run.stats);
            (run.caches, run.output)
        });
        let cache = ForwardCache {
            version: self.version,
            training,
            n_rows: x.nrows(),
            trunk: trunk.caches,
            regression: regression.caches,
            regression_features: training.then_some(regression.output),
            classifier: if training { classifier_cache } else { None },
        };
        Ok((ForwardPass { heads, params, cache }, stats))
    }

    /// Runs the network. Training mode normalizes with batch statistics and
    /// updates the running averages; inference mode uses the running averages.
    pub fn forward(&mut self, x: &Array2<f64>, training: bool) -> Result<ForwardPass> {
        let (pass, stats) = self.evaluate(x, training)?;
        if training {
            let mut stats = stats.into_iter();
            self.trunk.apply_stats(&stats.next().unwrap_or_default());
            self.regression.apply_stats(&stats.next().unwrap_or_default());
            if let (Some(head), Some(s)) = (self.classifier.as_mut(), stats.next()) {
                head.stack.apply_stats(&s);
            }
        }
        Ok(pass)
    }

    /// Training-mode forward that leaves the running statistics untouched.
    pub fn forward_frozen(&self, x: &Array2<f64>) -> Result<ForwardPass> {
        Ok(self.evaluate(x, true)?.0)
    }

    /// Which rectifier units are active under a training-mode forward. Two
    /// parameter settings with equal patterns lie on the same smooth piece
    /// of the loss, which finite-difference checks rely on.
    pub fn activation_pattern(&self, x: &Array2<f64>) -> Result<Vec<bool>> {
        let cache = self.forward_frozen(x)?.cache;
        let mut out = Vec::new();
        let classifier = cache.classifier.iter().flat_map(|(c, _)| c);
        for layer in cache.trunk.iter().chain(&cache.regression).chain(classifier) {
            if let LayerCache::Relu { output } = layer {
                out.extend(output.iter().map(|&v| v > 0.0));
            }
        }
        Ok(out)
    }

    /// Inference-mode mixture parameters.
    pub fn infer(&self, x: &Array2<f64>) -> Result<BatchParams> {
        Ok(self.evaluate(x, false)?.0.params)
    }

    /// Inference-mode raw head outputs.
    pub fn infer_heads(&self, x: &Array2<f64>) -> Result<HeadOutputs> {
        Ok(self.evaluate(x, false)?.0.heads)
    }

    /// Backpropagates head-output gradients to every trainable tensor.
    pub fn backward(&self, cache: &ForwardCache, head_grads: &HeadGradients) -> Result<Gradients> {
        if !cache.training {
            return Err(Error::Contract("backward needs a training-mode forward cache".into()));
        }
        if cache.version != self.version {
            return Err(Error::Contract(
                "stale forward cache: parameters changed since the forward pass".into(),
            ));
        }
        let p = self.n_components();
        let dim = (cache.n_rows, p);
        let alpha_ok = match (&head_grads.alpha_logits, &self.classifier) {
            (Some(g), Some(_)) => g.dim() == dim,
            (None, None) => true,
            _ => false,
        };
        if head_grads.beta_raw.dim() != dim || head_grads.eta_raw.dim() != dim || !alpha_ok {
            return Err(Error::DimensionMismatch(format!(
                "head gradients do not match a {}x{} forward pass",
                dim.0, dim.1
            )));
        }

        let features = cache
            .regression_features
            .as_ref()
            .expect("training cache holds regression features");
        let (dw_shape, db_shape, dfeat_shape) =
            self.shape_output.backward(features, &head_grads.beta_raw, true);
        let (dw_scale, db_scale, dfeat_scale) =
            self.scale_output.backward(features, &head_grads.eta_raw, true);
        let dfeatures = dfeat_shape.expect("requested") + dfeat_scale.expect("requested");
        let (dlatent_reg, reg_grads) = self.regression.backward(&cache.regression, dfeatures, true);
        let mut dlatent = dlatent_reg.expect("requested");

        let mut clf_grads = Vec::new();
        if let (Some(head), Some((caches, features)), Some(dlogits)) =
            (&self.classifier, &cache.classifier, &head_grads.alpha_logits)
        {
            let (dw, db, dfeat) = head.output.backward(features, dlogits, true);
            let (dlatent_clf, stack_grads) =
                head.stack.backward(caches, dfeat.expect("requested"), true);
            dlatent += &dlatent_clf.expect("requested");
            clf_grads.extend(stack_grads);
            clf_grads.push(flat(&dw));
            clf_grads.push(db.to_vec());
        }

        let (_, trunk_grads) = self.trunk.backward(&cache.trunk, dlatent, false);
        let mut tensors = trunk_grads;
        tensors.extend(reg_grads);
        tensors.push(flat(&dw_shape));
        tensors.push(db_shape.to_vec());
        tensors.push(flat(&dw_scale));
        tensors.push(db_scale.to_vec());
        tensors.extend(clf_grads);
        Ok(Gradients { tensors })
    }

    /// Every trainable tensor, flattened, in a fixed order.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.trunk.push_params(&mut out);
        self.regression.push_params(&mut out);
        for d in [&self.shape_output, &self.scale_output] {
            out.push(d.weights.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        if let Some(head) = &self.classifier {
            head.stack.push_params(&mut out);
            out.push(head.output.weights.as_slice().expect("standard layout"));
            out.push(head.output.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// Mutable view of [`Self::parameters`]. Invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::new();
        self.trunk.push_params_mut(&mut out);
        self.regression.push_params_mut(&mut out);
        for d in [&mut self.shape_output, &mut self.scale_output] {
            out.push(d.weights.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        if let Some(head) = &mut self.classifier {
            head.stack.push_params_mut(&mut out);
            out.push(head.output.weights.as_slice_mut().expect("standard layout"));
            out.push(head.output.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Running statistics of every batch-normalization layer, trunk first.
    pub fn batch_norm_layers(&self) -> Vec<&BatchNorm> {
        let mut out: Vec<&BatchNorm> = self.trunk.batch_norms().collect();
        out.extend(self.regression.batch_norms());
        if let Some(head) = &self.classifier {
            out.extend(head.stack.batch_norms());
        }
        out
    }

    /// Flags feature columns whose mean suggests unstandardized input.
    pub fn unscaled_columns(&self, x: &Array2<f64>) -> Vec<usize> {
        const MEAN_LIMIT: f64 = 4.0;
        if self.scaler.is_none() || x.nrows() == 0 {
            return Vec::new();
        }
        x.columns()
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.mean().is_some_and(|m| m.abs() > MEAN_LIMIT))
            .map(|(j, _)| j)
            .collect()
    }
}
