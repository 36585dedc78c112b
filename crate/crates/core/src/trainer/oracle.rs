//! Exact expected loss and gradient by exhaustive enumeration.
//!
//! Every binary variable of a rollout (encoder spikes, non-deterministic
//! channel outputs, decoder hidden spikes) is enumerated depth first. Decoder
//! outputs are clamped to the target. Potentials are recomputed from the
//! enumerated histories with [`convolve_filter`] and differentiated in
//! forward mode, so the result shares no code with the rollout or the
//! learning rules. Only tiny systems are feasible.

use crate::channel::{ChannelHistory, ChannelModel};
use crate::error::{Error, Result};
use crate::filters::convolve_filter;
use crate::glm::SnnModel;
use crate::sampler::forced_outcome;
use crate::spike::SpikeTensor;

use super::{check_example, JsccSystem, SystemGrads};

/// Default cap on enumerated binary variables along one trajectory.
pub const DEFAULT_MAX_VARIABLES: usize = 20;

#[derive(Clone, Debug)]
pub struct OracleResult {
    /// `E[sum_t sum_{i in V} -log p(v_i(t) | o_i(t))]`.
    pub loss: f64,
    /// Gradient of `loss` in parameter layout.
    pub grad: SystemGrads,
    /// Total probability of the enumerated trajectories (1 up to rounding).
    pub total_probability: f64,
    /// `-ln p(v | u)` with all latent variables marginalised.
    pub neg_log_likelihood: f64,
    pub trajectories: usize,
    /// Largest number of enumerated variables on a trajectory.
    pub variables: usize,
}

/// Value with a dense forward-mode derivative.
#[derive(Clone, Debug)]
struct Dual {
    v: f64,
    g: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, n: usize) -> Self {
        Dual { v, g: vec![0.0; n] }
    }

    fn add(&self, other: &Dual) -> Dual {
        Dual {
            v: self.v + other.v,
            g: self.g.iter().zip(&other.g).map(|(a, b)| a + b).collect(),
        }
    }

    fn scale(&self, c: f64) -> Dual {
        Dual {
            v: c * self.v,
            g: self.g.iter().map(|a| c * a).collect(),
        }
    }

    /// `ln(1 + e^x)`; its derivative is the logistic function.
    fn softplus(&self) -> Dual {
        let x = self.v;
        let v = x.max(0.0) + (-x.abs()).exp().ln_1p();
        let d = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            x.exp() / (1.0 + x.exp())
        };
        Dual {
            v,
            g: self.g.iter().map(|a| d * a).collect(),
        }
    }

    /// `ln p(s | o) = s o - softplus(o)`.
    fn log_bernoulli(&self, s: u8) -> Dual {
        self.scale(f64::from(s)).add(&self.softplus().scale(-1.0))
    }
}

struct Net<'a> {
    model: &'a SnnModel,
    /// Offset of each neuron's parameters in the flat layout.
    offsets: Vec<usize>,
    /// One row per signal (inputs then neurons), one entry per step so far.
    hist: Vec<Vec<u8>>,
}

impl<'a> Net<'a> {
    fn new(model: &'a SnnModel, start: usize) -> (Self, usize) {
        let mut offsets = Vec::with_capacity(model.params().len());
        let mut at = start;
        for p in model.params() {
            offsets.push(at);
            at += p.len();
        }
        let hist = vec![Vec::new(); model.topology().num_signals()];
        (
            Net {
                model,
                offsets,
                hist,
            },
            at,
        )
    }

    fn begin_step(&mut self) {
        self.hist.iter_mut().for_each(|r| r.push(0));
    }

    fn end_step(&mut self) {
        self.hist.iter_mut().for_each(|r| {
            r.pop();
        });
    }

    fn set(&mut self, signal: usize, value: u8) {
        let row = &mut self.hist[signal];
        let last = row.len() - 1;
        row[last] = value;
    }

    /// Potentials of all neurons at the current (last) step.
    fn potentials(&self, num_params: usize) -> Result<Vec<Dual>> {
        let topo = self.model.topology();
        let bank = self.model.filters();
        let k = bank.num_filters();
        let mut out = Vec::with_capacity(topo.num_neurons());
        for (i, p) in self.model.params().iter().enumerate() {
            let mut o = Dual::constant(0.0, num_params);
            let base = self.offsets[i];
            let vals = p.values();
            for (pi, &sig) in topo.presynaptic(i).iter().enumerate() {
                let row = &self.hist[sig];
                for kk in 0..k {
                    let f = convolve_filter(bank.synaptic(kk), row, row.len())?;
                    let idx = pi * k + kk;
                    o.v += vals[idx] * f;
                    o.g[base + idx] = f;
                }
            }
            let n = vals.len();
            let own = &self.hist[topo.neuron_signal(i)];
            let fb = convolve_filter(bank.feedback(), own, own.len())?;
            o.v += vals[n - 2] * fb + vals[n - 1];
            o.g[base + n - 2] = fb;
            o.g[base + n - 1] = 1.0;
            out.push(o);
        }
        Ok(out)
    }
}

struct Acc {
    loss: f64,
    grad: Vec<f64>,
    total_probability: f64,
    likelihood: f64,
    trajectories: usize,
    variables: usize,
}

struct Enumerator<'a> {
    channel: &'a dyn ChannelModel,
    u: &'a SpikeTensor,
    v: &'a SpikeTensor,
    enc: Option<Net<'a>>,
    dec: Net<'a>,
    history: ChannelHistory,
    num_params: usize,
    max_variables: usize,
    acc: Acc,
}

/// Partial trajectory weight: `log_p` carries the model factors (with
/// derivative), `channel_p` the parameter-free channel factors.
#[derive(Clone)]
struct Path {
    log_p: Dual,
    loss: Dual,
    channel_p: f64,
    depth: usize,
}

impl Enumerator<'_> {
    fn bump(&self, path: &Path) -> Result<usize> {
        let depth = path.depth + 1;
        if depth > self.max_variables {
            return Err(Error::TooLarge {
                variables: depth,
                limit: self.max_variables,
            });
        }
        Ok(depth)
    }

    fn step(&mut self, t: usize, path: Path) -> Result<()> {
        if t == self.u.num_steps() {
            self.finish(&path);
            return Ok(());
        }
        let u_t = self.u.column(t);
        let Some(enc) = self.enc.as_mut() else {
            return self.channel_stage(t, u_t, path);
        };
        enc.begin_step();
        for (j, &b) in u_t.iter().enumerate() {
            enc.set(j, b);
        }
        let pots = enc.potentials(self.num_params)?;
        self.encoder_branch(t, 0, &pots, path)?;
        self.enc.as_mut().expect("encoder").end_step();
        Ok(())
    }

    fn encoder_branch(&mut self, t: usize, i: usize, pots: &[Dual], path: Path) -> Result<()> {
        let enc = self.enc.as_ref().expect("encoder");
        if i == pots.len() {
            let topo = enc.model.topology();
            let x_t = topo
                .outputs()
                .iter()
                .map(|&n| *enc.hist[topo.neuron_signal(n)].last().expect("step"))
                .collect();
            return self.channel_stage(t, x_t, path);
        }
        let signal = enc.model.topology().neuron_signal(i);
        let depth = self.bump(&path)?;
        for s in [0u8, 1] {
            self.enc.as_mut().expect("encoder").set(signal, s);
            let next = Path {
                log_p: path.log_p.add(&pots[i].log_bernoulli(s)),
                depth,
                ..path.clone()
            };
            self.encoder_branch(t, i + 1, pots, next)?;
        }
        Ok(())
    }

    fn channel_stage(&mut self, t: usize, x_t: Vec<u8>, path: Path) -> Result<()> {
        let probs = self.channel.one_probabilities(&self.history, &x_t);
        self.dec.begin_step();
        let mut y = vec![0u8; probs.len()];
        self.channel_branch(t, &x_t, &probs, 0, &mut y, path)?;
        self.dec.end_step();
        Ok(())
    }

    fn channel_branch(
        &mut self,
        t: usize,
        x_t: &[u8],
        probs: &[f64],
        j: usize,
        y: &mut Vec<u8>,
        path: Path,
    ) -> Result<()> {
        if j == probs.len() {
            for (jj, &b) in y.iter().enumerate() {
                self.dec.set(jj, b);
            }
            let pots = self.dec.potentials(self.num_params)?;
            let mut path = path;
            let model = self.dec.model;
            let topo = model.topology();
            for (r, &n) in topo.outputs().iter().enumerate() {
                let vt = self.v.get(r, t);
                self.dec.set(topo.neuron_signal(n), vt);
                path.loss = path.loss.add(&pots[n].log_bernoulli(vt).scale(-1.0));
            }
            let hidden = topo.hidden().to_vec();
            self.history.push(x_t.to_vec(), y.clone());
            let res = self.hidden_branch(t, &hidden, 0, &pots, path);
            self.history.inputs.pop();
            self.history.outputs.pop();
            return res;
        }
        let p = probs[j];
        match forced_outcome(p) {
            Some(b) => {
                y[j] = b;
                self.channel_branch(t, x_t, probs, j + 1, y, path)
            }
            None => {
                let depth = self.bump(&path)?;
                for (b, w) in [(0u8, 1.0 - p), (1, p)] {
                    y[j] = b;
                    let next = Path {
                        channel_p: path.channel_p * w,
                        depth,
                        ..path.clone()
                    };
                    self.channel_branch(t, x_t, probs, j + 1, y, next)?;
                }
                Ok(())
            }
        }
    }

    fn hidden_branch(
        &mut self,
        t: usize,
        hidden: &[usize],
        h: usize,
        pots: &[Dual],
        path: Path,
    ) -> Result<()> {
        if h == hidden.len() {
            return self.step(t + 1, path);
        }
        let n = hidden[h];
        let model = self.dec.model;
        let signal = model.topology().neuron_signal(n);
        let depth = self.bump(&path)?;
        for s in [0u8, 1] {
            self.dec.set(signal, s);
            let next = Path {
                log_p: path.log_p.add(&pots[n].log_bernoulli(s)),
                depth,
                ..path.clone()
            };
            self.hidden_branch(t, hidden, h + 1, pots, next)?;
        }
        Ok(())
    }

    fn finish(&mut self, path: &Path) {
        let p = path.channel_p * path.log_p.v.exp();
        let l = path.loss.v;
        let acc = &mut self.acc;
        acc.loss += p * l;
        for ((g, dl), dp) in acc.grad.iter_mut().zip(&path.loss.g).zip(&path.log_p.g) {
            *g += p * (l * dp + dl);
        }
        acc.total_probability += p;
        acc.likelihood += p * (-l).exp();
        acc.trajectories += 1;
        acc.variables = acc.variables.max(path.depth);
    }
}

/// Exact expected output loss of `(u, v)` and its gradient.
///
/// Fails with [`Error::TooLarge`] as soon as a trajectory needs more than
/// `max_variables` enumerated binary variables.
pub fn exact_gradient_oracle(
    system: &JsccSystem,
    channel: &dyn ChannelModel,
    u: &SpikeTensor,
    v: &SpikeTensor,
    max_variables: usize,
) -> Result<OracleResult> {
    check_example(system, u, v)?;
    let (enc, next) = match &system.encoder {
        Some(m) => {
            let (net, next) = Net::new(m, 0);
            (Some(net), next)
        }
        None => (None, 0),
    };
    let (dec, num_params) = Net::new(&system.decoder, next);
    let mut e = Enumerator {
        channel,
        u,
        v,
        enc,
        dec,
        history: ChannelHistory::default(),
        num_params,
        max_variables,
        acc: Acc {
            loss: 0.0,
            grad: vec![0.0; num_params],
            total_probability: 0.0,
            likelihood: 0.0,
            trajectories: 0,
            variables: 0,
        },
    };
    let start = Path {
        log_p: Dual::constant(0.0, num_params),
        loss: Dual::constant(0.0, num_params),
        channel_p: 1.0,
        depth: 0,
    };
    e.step(0, start)?;

    let mut grad = SystemGrads::zeros_like(system);
    let mut flat = e.acc.grad.iter();
    for row in grad.encoder.iter_mut().chain(&mut grad.decoder) {
        row.iter_mut()
            .for_each(|g| *g = *flat.next().expect("layout"));
    }
    Ok(OracleResult {
        loss: e.acc.loss,
        grad,
        total_probability: e.acc.total_probability,
        neg_log_likelihood: -e.acc.likelihood.ln(),
        trajectories: e.acc.trajectories,
        variables: e.acc.variables,
    })
}
