//! Probabilistic GLM spiking network.
//!
//! Neuron `i` fires at step `t` with probability `sigmoid(o_i(t))`, where the
//! membrane potential is a weighted sum of filtered presynaptic traces, a
//! filtered trace of the neuron's own spikes, and a bias. Traces only see
//! spikes up to `t - 1`, so all neurons of a step are sampled simultaneously.
//!
//! Parameters of a neuron with `P` presynaptic signals and `K` filters are a
//! flat vector of length `P * K + 2`: synaptic weight `(p, k)` at `p * K + k`,
//! then the feedback weight, then the bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::filters::{FilterBank, FilterConfig};
use crate::sampler::Sampler;
use crate::spike::SpikeTensor;
use crate::trace::TraceState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronRole {
    /// Transmitted (encoder) or supervised (decoder) neuron.
    Output,
    Hidden,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Input(usize),
    Neuron(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyDescriptor {
    /// Every neuron receives every exogenous input and every other neuron.
    /// Output neurons come first in index order.
    FullyConnected {
        num_inputs: usize,
        num_outputs: usize,
        num_hidden: usize,
    },
    Custom {
        num_inputs: usize,
        roles: Vec<NeuronRole>,
        presynaptic: Vec<Vec<Source>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    descriptor: TopologyDescriptor,
    num_inputs: usize,
    roles: Vec<NeuronRole>,
    outputs: Vec<usize>,
    hidden: Vec<usize>,
    /// Presynaptic signal indices; inputs occupy `0..num_inputs`, neuron `i`
    /// is signal `num_inputs + i`.
    presynaptic: Vec<Vec<usize>>,
}

impl NetworkTopology {
    pub fn fully_connected(
        num_inputs: usize,
        num_outputs: usize,
        num_hidden: usize,
    ) -> Result<Self> {
        Self::from_descriptor(TopologyDescriptor::FullyConnected {
            num_inputs,
            num_outputs,
            num_hidden,
        })
    }

    pub fn custom(
        num_inputs: usize,
        roles: Vec<NeuronRole>,
        presynaptic: Vec<Vec<Source>>,
    ) -> Result<Self> {
        Self::from_descriptor(TopologyDescriptor::Custom {
            num_inputs,
            roles,
            presynaptic,
        })
    }

    pub fn from_descriptor(descriptor: TopologyDescriptor) -> Result<Self> {
        let (num_inputs, roles, sources) = match &descriptor {
            TopologyDescriptor::FullyConnected {
                num_inputs,
                num_outputs,
                num_hidden,
            } => {
                let n = num_outputs + num_hidden;
                let roles: Vec<NeuronRole> = (0..n)
                    .map(|i| {
                        if i < *num_outputs {
                            NeuronRole::Output
                        } else {
                            NeuronRole::Hidden
                        }
                    })
                    .collect();
                let sources = (0..n)
                    .map(|i| {
                        (0..*num_inputs)
                            .map(Source::Input)
                            .chain((0..n).filter(|&j| j != i).map(Source::Neuron))
                            .collect()
                    })
                    .collect();
                (*num_inputs, roles, sources)
            }
            TopologyDescriptor::Custom {
                num_inputs,
                roles,
                presynaptic,
            } => (*num_inputs, roles.clone(), presynaptic.clone()),
        };

        let n = roles.len();
        if n == 0 {
            return Err(Error::Parameter("network needs at least one neuron".into()));
        }
        check_dim("presynaptic lists", n, sources.len())?;
        let mut presynaptic = Vec::with_capacity(n);
        for (i, list) in sources.iter().enumerate() {
            let mut signals = Vec::with_capacity(list.len());
            for src in list {
                let sig = match *src {
                    Source::Input(j) if j < num_inputs => j,
                    Source::Neuron(j) if j < n && j != i => num_inputs + j,
                    Source::Neuron(j) if j == i => {
                        return Err(Error::Parameter(format!(
                            "neuron {i} lists itself as presynaptic; self-memory uses the feedback filter"
                        )))
                    }
                    other => {
                        return Err(Error::Parameter(format!("neuron {i}: invalid presynaptic source {other:?}")))
                    }
                };
                if signals.contains(&sig) {
                    return Err(Error::Parameter(format!(
                        "neuron {i}: duplicate presynaptic source {src:?}"
                    )));
                }
                signals.push(sig);
            }
            presynaptic.push(signals);
        }
        let outputs = (0..n).filter(|&i| roles[i] == NeuronRole::Output).collect();
        let hidden = (0..n).filter(|&i| roles[i] == NeuronRole::Hidden).collect();
        Ok(NetworkTopology {
            descriptor,
            num_inputs,
            roles,
            outputs,
            hidden,
            presynaptic,
        })
    }

    pub fn descriptor(&self) -> &TopologyDescriptor {
        &self.descriptor
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_neurons(&self) -> usize {
        self.roles.len()
    }

    pub fn num_signals(&self) -> usize {
        self.num_inputs + self.roles.len()
    }

    pub fn role(&self, neuron: usize) -> NeuronRole {
        self.roles[neuron]
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// Presynaptic signal indices of a neuron.
    pub fn presynaptic(&self, neuron: usize) -> &[usize] {
        &self.presynaptic[neuron]
    }

    pub fn neuron_signal(&self, neuron: usize) -> usize {
        self.num_inputs + neuron
    }
}

/// Local parameters of one neuron: synaptic weights, feedback weight, bias.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronParams {
    values: Vec<f64>,
}

impl NeuronParams {
    pub fn zeros(num_presynaptic: usize, num_filters: usize) -> Self {
        NeuronParams {
            values: vec![0.0; num_presynaptic * num_filters + 2],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::dim("neuron parameter count", 2, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("neuron parameters must be finite".into()));
        }
        Ok(NeuronParams { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn synaptic(&self) -> &[f64] {
        &self.values[..self.values.len() - 2]
    }

    pub fn feedback(&self) -> f64 {
        self.values[self.values.len() - 2]
    }

    pub fn bias(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn set_feedback(&mut self, w: f64) {
        let n = self.values.len();
        self.values[n - 2] = w;
    }

    pub fn set_bias(&mut self, b: f64) {
        let n = self.values.len();
        self.values[n - 1] = b;
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn spike_probability(o: f64) -> f64 {
    if o >= 0.0 {
        1.0 / (1.0 + (-o).exp())
    } else {
        let e = o.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^o)` without overflow or cancellation.
#[inline]
fn softplus(o: f64) -> f64 {
    o.max(0.0) + (-o.abs()).exp().ln_1p()
}

/// `-log p(s | o)`, the binary cross-entropy evaluated directly from the potential.
#[inline]
pub fn loss_from_potential(s: u8, o: f64) -> f64 {
    softplus(o) - f64::from(s) * o
}

/// `log p(s | o)` under the sigmoid spiking model.
#[inline]
pub fn log_prob(s: u8, o: f64) -> f64 {
    -loss_from_potential(s, o)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLoss {
    pub value: f64,
    /// Set when `p` had to be clamped into `[eps, 1 - eps]`.
    pub clamped: bool,
}

/// Binary cross-entropy `-s ln p - (1 - s) ln(1 - p)`.
pub fn log_loss(s: u8, p: f64, eps: f64) -> LogLoss {
    let clamped_p = p.clamp(eps, 1.0 - eps);
    let value = if s == 1 {
        -clamped_p.ln()
    } else {
        -(1.0 - clamped_p).ln()
    };
    LogLoss {
        value,
        clamped: clamped_p != p,
    }
}

/// Potential from presynaptic trace features laid out like the synaptic weights.
#[inline]
pub fn membrane_potential(params: &NeuronParams, features: &[f64], feedback_trace: f64) -> f64 {
    dot(params.synaptic(), features) + params.feedback() * feedback_trace + params.bias()
}

/// Gradient of `log p(s | o)` with respect to a neuron's parameters.
pub fn log_prob_grad(s: u8, o: f64, features: &[f64], feedback_trace: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), features.len() + 2);
    let err = f64::from(s) - spike_probability(o);
    let n = features.len();
    for (g, &f) in out[..n].iter_mut().zip(features) {
        *g = err * f;
    }
    out[n] = err * feedback_trace;
    out[n + 1] = err;
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mutable per-rollout state of a network: traces of inputs and neurons.
#[derive(Clone, Debug)]
pub struct NetworkState {
    traces: TraceState,
    scratch: Vec<u8>,
    num_inputs: usize,
}

impl NetworkState {
    pub fn traces(&self) -> &TraceState {
        &self.traces
    }

    pub fn reset(&mut self) {
        self.traces.reset();
    }

    /// 1-based step about to be simulated.
    pub fn step(&self) -> usize {
        self.traces.step()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Realised spikes of every neuron.
    pub spikes: Vec<u8>,
    pub potentials: Vec<f64>,
    /// `log p(s_i | o_i)` of the realised spikes.
    pub log_probs: Vec<f64>,
}

/// Serializable form of a network: topology, filters and flat parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSnapshot {
    pub topology: TopologyDescriptor,
    pub filters: FilterConfig,
    pub params: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SnnModel {
    topology: NetworkTopology,
    filter_config: FilterConfig,
    filters: FilterBank,
    params: Vec<NeuronParams>,
}

impl SnnModel {
    /// All-zero parameters: every neuron fires with probability 1/2.
    pub fn zeros(topology: NetworkTopology, filter_config: FilterConfig) -> Result<Self> {
        let filters = filter_config.build()?;
        let k = filters.num_filters();
        let params = (0..topology.num_neurons())
            .map(|i| NeuronParams::zeros(topology.presynaptic(i).len(), k))
            .collect();
        Ok(SnnModel {
            topology,
            filter_config,
            filters,
            params,
        })
    }

    /// Gaussian weights with standard deviation `scale / sqrt(P * K)`, zero biases.
    pub fn random<R: Rng + ?Sized>(
        topology: NetworkTopology,
        filter_config: FilterConfig,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(topology, filter_config)?;
        let k = model.filters.num_filters();
        for (i, p) in model.params.iter_mut().enumerate() {
            let fan_in = model.topology.presynaptic(i).len() * k;
            let std = scale / (fan_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
            let n = p.len();
            for v in &mut p.values_mut()[..n - 1] {
                *v = normal.sample(rng);
            }
            p.set_bias(0.0);
        }
        Ok(model)
    }

    pub fn from_snapshot(snapshot: &ModelSnapshot) -> Result<Self> {
        let topology = NetworkTopology::from_descriptor(snapshot.topology.clone())?;
        let mut model = Self::zeros(topology, snapshot.filters.clone())?;
        check_dim(
            "checkpoint neuron count",
            model.params.len(),
            snapshot.params.len(),
        )?;
        for (p, values) in model.params.iter_mut().zip(&snapshot.params) {
            check_dim("checkpoint parameter count", p.len(), values.len())?;
            *p = NeuronParams::from_values(values.clone())?;
        }
        Ok(model)
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            topology: self.topology.descriptor().clone(),
            filters: self.filter_config.clone(),
            params: self.params.iter().map(|p| p.values().to_vec()).collect(),
        }
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn filters(&self) -> &FilterBank {
        &self.filters
    }

    pub fn filter_config(&self) -> &FilterConfig {
        &self.filter_config
    }

    pub fn params(&self) -> &[NeuronParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NeuronParams] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(NeuronParams::len).sum()
    }

    pub fn new_state(&self) -> NetworkState {
        NetworkState {
            traces: TraceState::new(self.topology.num_signals(), &self.filters),
            scratch: vec![0; self.topology.num_signals()],
            num_inputs: self.topology.num_inputs(),
        }
    }

    /// Presynaptic trace features of a neuron, in weight order.
    pub fn features(&self, neuron: usize, state: &NetworkState) -> Vec<f64> {
        let k = self.filters.num_filters();
        let mut out = Vec::with_capacity(self.topology.presynaptic(neuron).len() * k);
        for &sig in self.topology.presynaptic(neuron) {
            out.extend_from_slice(state.traces.synaptic_row(sig));
        }
        out
    }

    pub fn membrane_potential(&self, neuron: usize, state: &NetworkState) -> f64 {
        let p = &self.params[neuron];
        let k = self.filters.num_filters();
        let w = p.synaptic();
        let mut acc = 0.0;
        for (pi, &sig) in self.topology.presynaptic(neuron).iter().enumerate() {
            let tr = state.traces.synaptic_row(sig);
            for kk in 0..k {
                acc += w[pi * k + kk] * tr[kk];
            }
        }
        acc + p.feedback() * state.traces.feedback(self.topology.neuron_signal(neuron)) + p.bias()
    }

    /// Gradient of `log p(s | o)` for one neuron at the current step.
    pub fn log_prob_grad(
        &self,
        neuron: usize,
        s: u8,
        o: f64,
        state: &NetworkState,
        out: &mut [f64],
    ) {
        let k = self.filters.num_filters();
        let err = f64::from(s) - spike_probability(o);
        let pre = self.topology.presynaptic(neuron);
        debug_assert_eq!(out.len(), pre.len() * k + 2);
        for (pi, &sig) in pre.iter().enumerate() {
            let tr = state.traces.synaptic_row(sig);
            for kk in 0..k {
                out[pi * k + kk] = err * tr[kk];
            }
        }
        let n = out.len();
        out[n - 2] = err * state.traces.feedback(self.topology.neuron_signal(neuron));
        out[n - 1] = err;
    }

    /// Computes potentials and draws spikes for the current step without
    /// advancing the state. Output neurons take `clamp` when given.
    pub fn sample_step(
        &self,
        state: &NetworkState,
        exogenous: &[u8],
        clamp: Option<&[u8]>,
        sampler: &mut dyn Sampler,
    ) -> Result<StepOutput> {
        check_dim(
            "exogenous inputs",
            self.topology.num_inputs(),
            exogenous.len(),
        )?;
        if let Some(c) = clamp {
            check_dim("clamped outputs", self.topology.outputs().len(), c.len())?;
        }
        let n = self.topology.num_neurons();
        let potentials: Vec<f64> = (0..n).map(|i| self.membrane_potential(i, state)).collect();
        let mut spikes = vec![0u8; n];
        let mut clamped = vec![false; n];
        if let Some(c) = clamp {
            for (&i, &v) in self.topology.outputs().iter().zip(c) {
                if v > 1 {
                    return Err(Error::Parameter(format!(
                        "clamp entries must be binary, found {v}"
                    )));
                }
                spikes[i] = v;
                clamped[i] = true;
            }
        }
        for i in 0..n {
            if !clamped[i] {
                spikes[i] = sampler.bernoulli(spike_probability(potentials[i]));
            }
        }
        let log_probs = spikes
            .iter()
            .zip(&potentials)
            .map(|(&s, &o)| log_prob(s, o))
            .collect();
        Ok(StepOutput {
            spikes,
            potentials,
            log_probs,
        })
    }

    /// Pushes the realised exogenous inputs and neuron spikes into the traces.
    pub fn advance(&self, state: &mut NetworkState, exogenous: &[u8], spikes: &[u8]) -> Result<()> {
        check_dim("exogenous inputs", state.num_inputs, exogenous.len())?;
        check_dim("neuron spikes", self.topology.num_neurons(), spikes.len())?;
        let ni = state.num_inputs;
        state.scratch[..ni].copy_from_slice(exogenous);
        state.scratch[ni..].copy_from_slice(spikes);
        let NetworkState {
            traces, scratch, ..
        } = state;
        traces.update(scratch, &self.filters)
    }

    pub fn step(
        &self,
        state: &mut NetworkState,
        exogenous: &[u8],
        clamp: Option<&[u8]>,
        sampler: &mut dyn Sampler,
    ) -> Result<StepOutput> {
        let out = self.sample_step(state, exogenous, clamp, sampler)?;
        self.advance(state, exogenous, &out.spikes)?;
        Ok(out)
    }

    /// `sum_t sum_i log p(s_i(t) | o_i(t))` of a realised history, with the
    /// potentials recomputed from that history.
    pub fn sequence_log_prob(&self, spikes: &SpikeTensor, exogenous: &SpikeTensor) -> Result<f64> {
        check_dim(
            "neuron spike rows",
            self.topology.num_neurons(),
            spikes.num_signals(),
        )?;
        check_dim(
            "exogenous rows",
            self.topology.num_inputs(),
            exogenous.num_signals(),
        )?;
        check_dim("time steps", spikes.num_steps(), exogenous.num_steps())?;
        let mut state = self.new_state();
        let mut total = 0.0;
        for t in 0..spikes.num_steps() {
            let s = spikes.column(t);
            for (i, &si) in s.iter().enumerate() {
                total += log_prob(si, self.membrane_potential(i, &state));
            }
            self.advance(&mut state, &exogenous.column(t), &s)?;
        }
        Ok(total)
    }

    /// Gradient of [`Self::sequence_log_prob`] with respect to every parameter,
    /// accumulated from [`Self::log_prob_grad`] along the history.
    pub fn sequence_log_prob_grad(
        &self,
        spikes: &SpikeTensor,
        exogenous: &SpikeTensor,
    ) -> Result<Vec<Vec<f64>>> {
        check_dim(
            "neuron spike rows",
            self.topology.num_neurons(),
            spikes.num_signals(),
        )?;
        check_dim(
            "exogenous rows",
            self.topology.num_inputs(),
            exogenous.num_signals(),
        )?;
        check_dim("time steps", spikes.num_steps(), exogenous.num_steps())?;
        let mut state = self.new_state();
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut buf: Vec<Vec<f64>> = grads.clone();
        for t in 0..spikes.num_steps() {
            let s = spikes.column(t);
            for (i, &si) in s.iter().enumerate() {
                let o = self.membrane_potential(i, &state);
                self.log_prob_grad(i, si, o, &state, &mut buf[i]);
                grads[i].iter_mut().zip(&buf[i]).for_each(|(g, b)| *g += b);
            }
            self.advance(&mut state, &exogenous.column(t), &s)?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_filters() -> FilterConfig {
        FilterConfig::Exponential {
            decays: vec![0.5],
            feedback_decay: 0.5,
            window: 4,
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(spike_probability(0.0), 0.5);
        assert_eq!(spike_probability(1e6), 1.0);
        assert_eq!(spike_probability(-1e6), 0.0);
        assert!(!spike_probability(f64::MAX).is_nan());
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((spike_probability(2.0) - expected).abs() < 1e-15);
        assert!((spike_probability(2.0) - 0.880_797_077_977_882_3).abs() < 1e-12);
    }

    #[test]
    fn log_loss_values() {
        let eps = 1e-12;
        assert!(log_loss(1, 1.0 - 1e-9, eps).value < 1e-8);
        assert!((log_loss(1, 0.5, eps).value - std::f64::consts::LN_2).abs() < 1e-15);
        for &p in &[0.1, 0.3, 0.77] {
            assert!((log_loss(1, p, eps).value - log_loss(0, 1.0 - p, eps).value).abs() < 1e-12);
            assert!(log_loss(0, p, eps).value >= 0.0);
        }
        let c = log_loss(1, 0.0, eps);
        assert!(c.clamped);
        assert!((c.value - (-(eps.ln()))).abs() < 1e-9);
        assert!(!log_loss(0, 0.0, eps).clamped || log_loss(0, 0.0, eps).value < 1e-9);
    }

    #[test]
    fn loss_from_potential_is_stable() {
        for &o in &[-50.0, -31.0, -2.0, 0.0, 3.0, 31.0, 50.0] {
            let p = spike_probability(o);
            for s in 0..2u8 {
                let direct = loss_from_potential(s, o);
                assert!(direct.is_finite() && direct >= 0.0);
                if p > 1e-12 && p < 1.0 - 1e-12 {
                    assert!((direct - log_loss(s, p, 1e-300).value).abs() < 1e-9);
                }
            }
        }
        assert!((loss_from_potential(0, 50.0) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn potential_examples() {
        let mut p = NeuronParams::zeros(1, 1);
        p.set_bias(-2.0);
        assert_eq!(membrane_potential(&p, &[0.7], 0.3), -2.0);

        let mut p = NeuronParams::from_values(vec![2.0, 0.0, -1.0]).unwrap();
        assert_eq!(membrane_potential(&p, &[0.5], 0.9), 0.0);
        let base = membrane_potential(&p, &[0.3], 0.2);
        p.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        assert_eq!(membrane_potential(&p, &[0.3], 0.2), 2.0 * base);
    }

    #[test]
    fn grad_examples() {
        let mut g = vec![0.0; 3];
        log_prob_grad(1, 0.0, &[0.0], 0.0, &mut g);
        assert_eq!(g, vec![0.0, 0.0, 0.5]);
        log_prob_grad(0, 1.3, &[0.0], 0.0, &mut g);
        assert_eq!(g[..2], [0.0, 0.0]);
        assert!((g[2] + spike_probability(1.3)).abs() < 1e-15);
    }

    #[test]
    fn grad_matches_finite_difference_of_loss() {
        let features = [0.4, -1.1, 0.25];
        let fb = 0.6;
        let base = NeuronParams::from_values(vec![0.3, -0.2, 0.5, 0.1, -0.4]).unwrap();
        let h = 1e-6;
        for s in 0..2u8 {
            let o = membrane_potential(&base, &features, fb);
            let mut g = vec![0.0; 5];
            log_prob_grad(s, o, &features, fb, &mut g);
            for (idx, &gi) in g.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut p = base.clone();
                    p.values_mut()[idx] += delta;
                    -loss_from_potential(s, membrane_potential(&p, &features, fb))
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (fd - gi).abs() / gi.abs().max(fd.abs()).max(1e-12);
                assert!(rel <= 1e-5, "s={s} idx={idx} fd={fd} analytic={}", gi);
            }
        }
    }

    #[test]
    fn topology_validation() {
        assert!(NetworkTopology::custom(
            1,
            vec![NeuronRole::Output],
            vec![vec![Source::Neuron(0)]]
        )
        .is_err());
        assert!(
            NetworkTopology::custom(1, vec![NeuronRole::Output], vec![vec![Source::Input(3)]])
                .is_err()
        );
        assert!(NetworkTopology::custom(
            1,
            vec![NeuronRole::Output, NeuronRole::Hidden],
            vec![
                vec![Source::Neuron(1)],
                vec![Source::Neuron(0), Source::Input(0)]
            ],
        )
        .is_ok());
        let fc = NetworkTopology::fully_connected(3, 2, 1).unwrap();
        assert_eq!(fc.outputs(), &[0, 1]);
        assert_eq!(fc.hidden(), &[2]);
        assert_eq!(fc.presynaptic(1), &[0, 1, 2, 3, 5]);
    }

    #[test]
    fn zero_params_fire_half_the_time() {
        let topo = NetworkTopology::fully_connected(1, 1, 1).unwrap();
        let model = SnnModel::zeros(topo, exp_filters()).unwrap();
        let mut state = model.new_state();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut count = 0usize;
        let steps = 10_000;
        for _ in 0..steps {
            count += model.step(&mut state, &[1], None, &mut rng).unwrap().spikes[0] as usize;
        }
        let rate = count as f64 / steps as f64;
        assert!((rate - 0.5).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn saturated_bias_never_fires() {
        let topo = NetworkTopology::fully_connected(0, 2, 2).unwrap();
        let mut model = SnnModel::zeros(topo, exp_filters()).unwrap();
        model.params_mut().iter_mut().for_each(|p| p.set_bias(-1e3));
        let mut state = model.new_state();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            assert!(model
                .step(&mut state, &[], None, &mut rng)
                .unwrap()
                .spikes
                .iter()
                .all(|&s| s == 0));
        }
    }

    #[test]
    fn clamped_outputs_follow_targets() {
        let topo = NetworkTopology::fully_connected(2, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = SnnModel::random(topo, exp_filters(), 2.0, &mut rng).unwrap();
        let mut state = model.new_state();
        for t in 0..200 {
            let clamp = [(t % 2) as u8, ((t / 3) % 2) as u8];
            let out = model
                .step(&mut state, &[1, 0], Some(&clamp), &mut rng)
                .unwrap();
            assert_eq!(&out.spikes[..2], &clamp);
        }
        assert!(model
            .step(&mut state, &[1, 0], Some(&[1]), &mut rng)
            .is_err());
        assert!(model.step(&mut state, &[1], None, &mut rng).is_err());
    }

    #[test]
    fn single_step_sequence_is_fair_coins() {
        let topo = NetworkTopology::fully_connected(1, 2, 1).unwrap();
        let model = SnnModel::zeros(topo, exp_filters()).unwrap();
        let spikes = SpikeTensor::from_rows(3, 1, vec![1, 0, 1]).unwrap();
        let exo = SpikeTensor::from_rows(1, 1, vec![1]).unwrap();
        let lp = model.sequence_log_prob(&spikes, &exo).unwrap();
        assert!((lp - 3.0 * 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(lp, model.sequence_log_prob(&spikes, &exo).unwrap());
    }

    #[test]
    fn potentials_ignore_future_inputs() {
        let topo = NetworkTopology::fully_connected(2, 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = SnnModel::random(topo, exp_filters(), 3.0, &mut rng).unwrap();
        let steps: Vec<(Vec<u8>, Vec<u8>)> = (0..6)
            .map(|t| (vec![(t % 2) as u8, 1], vec![1, (t % 3 == 0) as u8, 0]))
            .collect();
        let run = |mutate_from: usize| -> Vec<Vec<f64>> {
            let mut state = model.new_state();
            let mut pots = Vec::new();
            for (t, (exo, s)) in steps.iter().enumerate() {
                let (exo, s) = if t >= mutate_from {
                    (
                        vec![1 - exo[0], 1 - exo[1]],
                        s.iter().map(|v| 1 - v).collect(),
                    )
                } else {
                    (exo.clone(), s.clone())
                };
                pots.push(
                    (0..3)
                        .map(|i| model.membrane_potential(i, &state))
                        .collect(),
                );
                model.advance(&mut state, &exo, &s).unwrap();
            }
            pots
        };
        let base = run(usize::MAX);
        for cut in 0..6 {
            let mutated = run(cut);
            // potential at `cut` only sees steps < cut
            assert_eq!(base[..=cut], mutated[..=cut]);
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let topo = NetworkTopology::fully_connected(3, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = SnnModel::random(topo, FilterConfig::default(), 0.7, &mut rng).unwrap();
        let json = serde_json::to_string(&model.snapshot()).unwrap();
        let back: ModelSnapshot = serde_json::from_str(&json).unwrap();
        let restored = SnnModel::from_snapshot(&back).unwrap();
        for (a, b) in model.params().iter().zip(restored.params()) {
            let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn hidden_sampling_matches_sigmoid() {
        // Clamped outputs, hidden neuron frequencies vs sigma(o) per step.
        let topo = NetworkTopology::fully_connected(1, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let model = SnnModel::random(topo, exp_filters(), 3.0, &mut rng).unwrap();
        let trials = 10_000;
        let steps = 4;
        let targets = [1u8, 0, 1, 1];
        // Condition on a fixed hidden history by replaying the same prefix.
        let mut state = model.new_state();
        for t in 0..steps {
            let o = model.membrane_potential(1, &state);
            let p = spike_probability(o);
            let mut hits = 0usize;
            for _ in 0..trials {
                hits += model
                    .sample_step(&state, &[1], Some(&targets[t..t + 1]), &mut rng)
                    .unwrap()
                    .spikes[1] as usize;
            }
            let freq = hits as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-12,
                "step {t}: freq {freq} p {p}"
            );
            model
                .advance(&mut state, &[1], &[targets[t], (t % 2) as u8])
                .unwrap();
        }
    }
}
