use std::path::Path;

use rand::RngCore;

use super::config::{GruConfig, HeadKind};
use crate::autodiff::{dense, init_dense, Activation, Graph, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Posterior regime probabilities for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub probabilities: Vec<f64>,
}

impl FilterOutput {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probabilities.iter().enumerate() {
            if *p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Stacked GRU with a task head.
///
/// Layer `l` keeps its gate maps in blocks: `gru/l/input` is `3h × in` with
/// rows ordered reset, update, candidate; `gru/l/recurrent_gates` is `2h × h`
/// for reset and update; `gru/l/recurrent_candidate` is `h × h`.
#[derive(Debug, Clone)]
pub struct GruStack {
    config: GruConfig,
    params: ParamStore,
}

fn layer_name(l: usize, part: &str) -> String {
    format!("gru/{l}/{part}")
}

fn head_name(i: usize) -> String {
    format!("head/{i}")
}

const HEAD_OUT: &str = "head/out";

impl GruStack {
    pub fn new(config: GruConfig, rng: &mut impl RngCore) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut params = ParamStore::new();
        for l in 0..config.layers {
            let fan_in = if l == 0 { 1 } else { h };
            let bound = 1.0 / (h as f64).sqrt();
            params.insert(layer_name(l, "input"), Tensor::uniform(&[3 * h, fan_in], bound, rng))?;
            params.insert(layer_name(l, "recurrent_gates"), Tensor::uniform(&[2 * h, h], bound, rng))?;
            params.insert(layer_name(l, "recurrent_candidate"), Tensor::uniform(&[h, h], bound, rng))?;
            params.insert(layer_name(l, "bias"), Tensor::uniform(&[3 * h], bound, rng))?;
        }
        let mut width = h;
        for i in 0..config.head_layers {
            init_dense(&mut params, &head_name(i), width, config.head_width, rng)?;
            width = config.head_width;
        }
        init_dense(&mut params, HEAD_OUT, width, config.output_width(), rng)?;
        let mut stack = GruStack { config, params };
        stack.center_output_bias();
        Ok(stack)
    }

    /// Forecast heads start out predicting the input centre so training does
    /// not spend its first steps walking the bias towards the signal level.
    fn center_output_bias(&mut self) {
        let c = self.config.input_center;
        let target = match self.config.head {
            HeadKind::Regressor => inverse_silu(c),
            HeadKind::Feature { .. } if c > 0.0 => c,
            _ => return,
        };
        if let Some(bias) = self.params.get_mut(&format!("{HEAD_OUT}/bias")) {
            bias.data_mut().iter_mut().for_each(|b| *b = target);
        }
    }

    pub fn from_parts(config: GruConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let template = GruStack::new(config.clone(), &mut crate::rng::seeded(0))?;
        for (name, p) in template.params.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Format(format!("missing GRU parameter {name}")))?;
            if got.shape() != p.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    p.value.shape()
                )));
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::Format("unexpected extra GRU parameters".into()));
        }
        Ok(GruStack { config, params })
    }

    pub fn config(&self) -> &GruConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Sequence length the stack expects.
    pub fn sequence_len(&self) -> usize {
        self.config.window + 1
    }

    /// Stacks the trailing `W + 1` values of each window into a normalised `b × (W+1)` tensor.
    pub fn input_tensor(&self, windows: &[&[f64]]) -> Result<Tensor> {
        let n = self.sequence_len();
        let mut data = Vec::with_capacity(windows.len() * n);
        for w in windows {
            if w.len() < n {
                return Err(Error::Dimension(format!(
                    "GRU expects sequences of {n} values, got {}",
                    w.len()
                )));
            }
            data.extend(w[w.len() - n..].iter().map(|s| self.normalise(*s)));
        }
        Tensor::matrix(windows.len(), n, data)
    }

    fn normalise(&self, s: f64) -> f64 {
        (s - self.config.input_center) / self.config.input_scale
    }

    fn register(&self, g: &mut Graph, name: &str, frozen: bool) -> Result<Var> {
        if frozen {
            g.frozen(&self.params, name)
        } else {
            g.param(&self.params, name)
        }
    }

    /// Runs the recursion over every step of every layer. Returns the hidden
    /// states `h_0..h_W` of each layer.
    pub fn gru_forward(&self, g: &mut Graph, x: Var, frozen: bool) -> Result<Vec<Vec<Var>>> {
        let (b, n) = g.value(x).dims2()?;
        if n != self.sequence_len() {
            return Err(Error::Dimension(format!(
                "GRU expects sequences of {} values, got {n}",
                self.sequence_len()
            )));
        }
        let h = self.config.hidden;
        let gate = self.config.gate_activation.activation();
        let mut inputs: Vec<Var> = (0..n).map(|k| g.slice_cols(x, k, 1)).collect::<Result<_>>()?;
        let mut all = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let w_in = self.register(g, &layer_name(l, "input"), frozen)?;
            let u_gates = self.register(g, &layer_name(l, "recurrent_gates"), frozen)?;
            let u_cand = self.register(g, &layer_name(l, "recurrent_candidate"), frozen)?;
            let bias = self.register(g, &layer_name(l, "bias"), frozen)?;
            let mut state = g.constant(Tensor::zeros(&[b, h]))?;
            let mut states = Vec::with_capacity(n);
            for &x_k in &inputs {
                let pre = g.matmul_t(x_k, w_in)?;
                let pre = g.add(pre, bias)?;
                let pre_gates = g.slice_cols(pre, 0, 2 * h)?;
                let pre_cand = g.slice_cols(pre, 2 * h, h)?;
                let rec = g.matmul_t(state, u_gates)?;
                let gates = g.add(pre_gates, rec)?;
                let gates = g.activation(gates, gate)?;
                let reset = g.slice_cols(gates, 0, h)?;
                let update = g.slice_cols(gates, h, h)?;
                let reset_state = g.mul(reset, state)?;
                let rec_cand = g.matmul_t(reset_state, u_cand)?;
                let cand = g.add(pre_cand, rec_cand)?;
                let cand = g.tanh(cand)?;
                // h_k = (1 − z) ∘ h_{k−1} + z ∘ h̃_k
                let diff = g.sub(cand, state)?;
                let step = g.mul(update, diff)?;
                state = g.add(state, step)?;
                states.push(state);
            }
            inputs = states.clone();
            all.push(states);
        }
        Ok(all)
    }

    /// Final hidden state of the last layer.
    pub fn encode(&self, g: &mut Graph, x: Var, frozen: bool) -> Result<Var> {
        let states = self.gru_forward(g, x, frozen)?;
        Ok(*states.last().and_then(|s| s.last()).expect("at least one layer and step"))
    }

    fn head_pre_activation(&self, g: &mut Graph, hidden: Var, frozen: bool) -> Result<Var> {
        let mut z = hidden;
        for i in 0..self.config.head_layers {
            z = dense(g, &self.params, &head_name(i), z, frozen)?;
            z = g.silu(z)?;
        }
        dense(g, &self.params, HEAD_OUT, z, frozen)
    }

    /// Head output: class probabilities, or a next-value forecast.
    pub fn output(&self, g: &mut Graph, x: Var, frozen: bool) -> Result<Var> {
        let hidden = self.encode(g, x, frozen)?;
        let z = self.head_pre_activation(g, hidden, frozen)?;
        match self.config.head {
            HeadKind::Classifier { .. } => g.softmax(z),
            HeadKind::Regressor => g.activation(z, Activation::Silu),
            HeadKind::Feature { .. } => g.activation(z, Activation::LeakyRelu),
        }
    }

    /// Agent-facing read-out: the head output for classifiers and regressors,
    /// the final hidden state (or its scalar projection) for feature stacks.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.config.head {
            HeadKind::Feature { scalar: false } => self.encode(g, x, true),
            HeadKind::Feature { scalar: true } => {
                let hidden = self.encode(g, x, true)?;
                self.head_pre_activation(g, hidden, true)
            }
            _ => self.output(g, x, true),
        }
    }

    /// Untaped batch evaluation of [`GruStack::features`].
    pub fn feature_batch(&self, windows: &[&[f64]]) -> Result<Tensor> {
        let mut g = Graph::untaped();
        let x = g.constant(self.input_tensor(windows)?)?;
        let out = self.features(&mut g, x)?;
        Ok(g.take_value(out))
    }

    /// Untaped batch evaluation of [`GruStack::output`].
    pub fn output_batch(&self, windows: &[&[f64]]) -> Result<Tensor> {
        let mut g = Graph::untaped();
        let x = g.constant(self.input_tensor(windows)?)?;
        let out = self.output(&mut g, x, true)?;
        Ok(g.take_value(out))
    }

    pub fn classify_regimes(&self, sequence: &[f64]) -> Result<FilterOutput> {
        if !matches!(self.config.head, HeadKind::Classifier { .. }) {
            return Err(Error::Usage(format!("{} head cannot classify regimes", self.config.head.name())));
        }
        let out = self.output_batch(&[sequence])?;
        Ok(FilterOutput { probabilities: out.into_data() })
    }

    pub fn predict_next(&self, sequence: &[f64]) -> Result<f64> {
        if matches!(self.config.head, HeadKind::Classifier { .. }) {
            return Err(Error::Usage("classifier head cannot forecast".into()));
        }
        self.output_batch(&[sequence])?.item()
    }

    pub fn hidden_feature(&self, sequence: &[f64]) -> Result<Vec<f64>> {
        Ok(self.feature_batch(&[sequence])?.into_data())
    }

    /// Writes `<stem>.rtps` with the parameters and `<stem>.json` with the architecture.
    pub fn save(&self, stem: &Path) -> Result<()> {
        self.params.save(&stem.with_extension("rtps"))?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let config: GruConfig = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let params = ParamStore::load(&stem.with_extension("rtps"))?;
        GruStack::from_parts(config, params)
    }
}

/// Solves `silu(x) = y` for `y > 0` by Newton's method.
fn inverse_silu(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let mut x = y.max(1.0);
    for _ in 0..50 {
        let s = crate::autodiff::logistic(x);
        let f = x * s - y;
        let df = s * (1.0 + x * (1.0 - s));
        x -= f / df;
    }
    x
}
