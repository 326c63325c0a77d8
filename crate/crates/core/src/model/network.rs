//! Forward evaluation and backpropagation through time for every
//! architecture kind.
//!
//! A step flows through
//!
//! ```text
//! x_t ─ LSTM ─ h_t ─ emb (linear+ReLU, dropout) ─ ẽ_t ─┬─ [target branch] ─(+ residual(x_t))─ target head ─ ŷ_t
//!                                                     └─ [GPSR branch] ─ GPSR head ─ X̂_{t+1}
//! ```
//!
//! Masked steps are skipped entirely: they produce no output, no loss and no
//! state update, so inserting one leaves the loss and every gradient unchanged.

use super::loss::{check_weight, combined_loss, gpsr_loss, inside_clamp, target_loss};
use super::{GpsrHead, GpsrOutput, Linear, LstmParams, ModelParams, TargetHead, TaskLayout};
use crate::data::EncodedSequence;
use crate::error::{Error, Result};
use crate::numkernel::{gemv, gemv_acc, gemv_t_acc, outer_acc, sigmoid, RngStream};

/// Train mode draws inverted-dropout masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut RngStream),
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut RngStream> {
        match self {
            Mode::Eval => None,
            Mode::Train(rng) => Some(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Index of the step within its sequence.
    pub step: usize,
    pub state: LstmState,
    pub embedding: Vec<f64>,
    pub y_hat: f64,
    /// Class probabilities in task-layout order; `None` without a GPSR head.
    pub gpsr: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SequenceForward {
    pub outputs: Vec<StepOutput>,
    /// Mean per-step loss over valid steps.
    pub loss: f64,
}

struct LstmTrace {
    /// Post-activation gates `[i, f, o, g]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn lstm_forward(x: &[f64], prev: &LstmState, params: &LstmParams) -> (LstmState, LstmTrace) {
    let h = params.hidden();
    let mut pre = params.bias.as_slice().to_vec();
    gemv_acc(&params.input, x, &mut pre);
    gemv_acc(&params.recurrent, &prev.h, &mut pre);
    let mut gates = pre;
    for v in &mut gates[..3 * h] {
        *v = sigmoid(*v);
    }
    for v in &mut gates[3 * h..] {
        *v = v.tanh();
    }
    let (i, rest) = gates.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (o, g) = rest.split_at(h);
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    for k in 0..h {
        c[k] = f[k] * prev.c[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        hn[k] = o[k] * tanh_c[k];
    }
    (LstmState { h: hn, c }, LstmTrace { gates, tanh_c })
}

/// One LSTM cell update with forget gate, from `prev` and input `x`.
pub fn lstm_step(x: &[f64], prev: &LstmState, params: &LstmParams) -> Result<LstmState> {
    let h = params.hidden();
    if x.len() != params.input_dim() {
        return Err(Error::Shape {
            op: "lstm_step input",
            left: (x.len(), 1),
            right: (params.input_dim(), 1),
        });
    }
    if prev.h.len() != h || prev.c.len() != h {
        return Err(Error::Shape {
            op: "lstm_step state",
            left: (prev.h.len(), prev.c.len()),
            right: (h, h),
        });
    }
    Ok(lstm_forward(x, prev, params).0)
}

fn draw_mask(rate: f64, n: usize, rng: Option<&mut RngStream>) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..n).map(|_| if rng.uniform() < rate { 0.0 } else { keep }).collect())
}

struct DenseTrace {
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
    out: Vec<f64>,
}

fn relu_dropout(layer: &Linear, input: &[f64], rate: f64, rng: Option<&mut RngStream>) -> DenseTrace {
    let mut pre = layer.bias.as_slice().to_vec();
    gemv_acc(&layer.weight, input, &mut pre);
    let mask = draw_mask(rate, pre.len(), rng);
    let out = match &mask {
        Some(m) => pre.iter().zip(m).map(|(&a, &s)| if a > 0.0 { a * s } else { 0.0 }).collect(),
        None => pre.iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect(),
    };
    DenseTrace { pre, mask, out }
}

/// `relu(W_e h + b_e)` with inverted dropout in train mode.
pub fn embed_state(h: &[f64], emb: &Linear, rate: f64, mut mode: Mode<'_>) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("dropout", format!("rate must lie in [0, 1), got {rate}")));
    }
    if h.len() != emb.weight.cols() {
        return Err(Error::Shape {
            op: "embed_state",
            left: (h.len(), 1),
            right: emb.weight.shape(),
        });
    }
    Ok(relu_dropout(emb, h, rate, mode.rng()).out)
}

/// `σ(a_y · u + b_y)`.
pub fn predict_target(u: &[f64], head: &TargetHead) -> f64 {
    let mut logit = [0.0];
    gemv(&head.weight, u, &mut logit);
    sigmoid(logit[0] + head.bias.as_slice()[0])
}

fn gpsr_logits(v: &[f64], head: &GpsrHead) -> Vec<f64> {
    let mut z = head.bias.as_slice().to_vec();
    gemv_t_acc(&head.weight, v, &mut z);
    z
}

fn gpsr_activate(z: &mut [f64], mode: GpsrOutput, layout: &TaskLayout) {
    match mode {
        GpsrOutput::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        GpsrOutput::Softmax => {
            for (off, m) in layout.blocks() {
                let block = &mut z[off..off + m];
                let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in block.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                block.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
}

/// Per-class probabilities `X̂_{t+1}` from the GPSR head input `v`.
pub fn predict_gpsr(v: &[f64], head: &GpsrHead, mode: GpsrOutput, layout: &TaskLayout) -> Vec<f64> {
    let mut z = gpsr_logits(v, head);
    gpsr_activate(&mut z, mode, layout);
    z
}

struct StepTrace {
    step: usize,
    prev: LstmState,
    lstm: LstmTrace,
    state: LstmState,
    emb: DenseTrace,
    target_branch: Option<DenseTrace>,
    gpsr_branch: Option<DenseTrace>,
    target_in: Vec<f64>,
    y_hat: f64,
    gpsr: Option<Vec<f64>>,
}

impl StepTrace {
    fn gpsr_in(&self) -> &[f64] {
        match &self.gpsr_branch {
            Some(b) => &b.out,
            None => &self.emb.out,
        }
    }
}

/// Target-term weight actually used: kinds without a GPSR head train on the
/// target alone.
fn effective_weight(params: &ModelParams, p: f64) -> Result<f64> {
    check_weight(p)?;
    Ok(if params.kind().has_gpsr_head() { p } else { 1.0 })
}

fn check_sequence(seq: &EncodedSequence, params: &ModelParams) -> Result<usize> {
    let cfg = &params.config;
    let mut n_valid = 0;
    for (k, s) in seq.steps.iter().enumerate() {
        if s.input.len() != cfg.input_dim {
            return Err(Error::Shape {
                op: "sequence input",
                left: (s.input.len(), 1),
                right: (cfg.input_dim, 1),
            });
        }
        if s.valid {
            if cfg.kind.has_gpsr_head() && s.gpsr.len() != cfg.tasks.n_tasks() {
                return Err(Error::Data(format!(
                    "admission {} step {k}: {} GPSR targets for {} tasks",
                    seq.admission_id,
                    s.gpsr.len(),
                    cfg.tasks.n_tasks()
                )));
            }
            n_valid += 1;
        }
    }
    if n_valid == 0 {
        return Err(Error::Data(format!(
            "admission {}: every step is masked, nothing to learn from",
            seq.admission_id
        )));
    }
    Ok(n_valid)
}

fn forward_traced(seq: &EncodedSequence, params: &ModelParams, p: f64, mut mode: Mode<'_>) -> Result<(Vec<StepTrace>, f64)> {
    let p = effective_weight(params, p)?;
    let n_valid = check_sequence(seq, params)?;
    let cfg = &params.config;
    let mut state = LstmState::zeros(cfg.hidden);
    let mut traces = Vec::with_capacity(n_valid);
    let mut total = 0.0;
    for (k, s) in seq.steps.iter().enumerate() {
        if !s.valid {
            continue;
        }
        let (next, lstm) = lstm_forward(&s.input, &state, &params.lstm);
        let emb = relu_dropout(&params.embedding, &next.h, cfg.emb_dropout, mode.rng());
        let target_branch = params
            .target_branch
            .as_ref()
            .map(|l| relu_dropout(l, &emb.out, cfg.branch_dropout, mode.rng()));
        let gpsr_branch = params
            .gpsr_branch
            .as_ref()
            .map(|l| relu_dropout(l, &emb.out, cfg.branch_dropout, mode.rng()));
        let mut target_in = match &target_branch {
            Some(b) => b.out.clone(),
            None => emb.out.clone(),
        };
        if let Some(res) = &params.residual {
            gemv_acc(&res.weight, &s.input, &mut target_in);
            for (t, b) in target_in.iter_mut().zip(res.bias.as_slice()) {
                *t += b;
            }
        }
        let y_hat = predict_target(&target_in, &params.target_head);
        let err_y = target_loss(y_hat, s.label);
        let mut trace = StepTrace {
            step: k,
            prev: state,
            lstm,
            state: next.clone(),
            emb,
            target_branch,
            gpsr_branch,
            target_in,
            y_hat,
            gpsr: None,
        };
        let step_loss = match &params.gpsr_head {
            Some(head) => {
                let probs = predict_gpsr(trace.gpsr_in(), head, cfg.gpsr_output, &cfg.tasks);
                let err_x = gpsr_loss(&probs, &s.gpsr, &cfg.tasks)?;
                trace.gpsr = Some(probs);
                combined_loss(p, err_y, err_x)?
            }
            None => err_y,
        };
        total += step_loss;
        traces.push(trace);
        state = next;
    }
    Ok((traces, total / n_valid as f64))
}

/// Runs the model over one sequence from a zero initial state.
pub fn forward_sequence(seq: &EncodedSequence, params: &ModelParams, p: f64, mode: Mode<'_>) -> Result<SequenceForward> {
    let (traces, loss) = forward_traced(seq, params, p, mode)?;
    let outputs = traces
        .into_iter()
        .map(|t| StepOutput {
            step: t.step,
            state: t.state,
            embedding: t.emb.out,
            y_hat: t.y_hat,
            gpsr: t.gpsr,
        })
        .collect();
    Ok(SequenceForward { outputs, loss })
}

/// Backpropagates `dout` through `relu(W x + b) * mask`, accumulating the
/// layer gradients and adding the input gradient into `dinput`.
fn dense_backward(layer: &Linear, grad: &mut Linear, trace: &DenseTrace, input: &[f64], dout: &[f64], dinput: &mut [f64]) {
    let dpre: Vec<f64> = trace
        .pre
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            if a <= 0.0 {
                return 0.0;
            }
            match &trace.mask {
                Some(m) => dout[j] * m[j],
                None => dout[j],
            }
        })
        .collect();
    outer_acc(&mut grad.weight, &dpre, input);
    for (b, d) in grad.bias.as_mut_slice().iter_mut().zip(&dpre) {
        *b += d;
    }
    gemv_t_acc(&layer.weight, &dpre, dinput);
}

/// Loss and exact gradient of the mean per-step loss with respect to every
/// parameter block. In train mode the dropout masks are drawn from `mode`'s
/// stream exactly as [`forward_sequence`] would draw them.
pub fn backward_sequence(seq: &EncodedSequence, params: &ModelParams, p: f64, mode: Mode<'_>) -> Result<(f64, ModelParams)> {
    let (traces, loss) = forward_traced(seq, params, p, mode)?;
    let p = effective_weight(params, p)?;
    let cfg = &params.config;
    let n = traces.len() as f64;
    let w_target = p / n;
    let w_gpsr = (1.0 - p) / (n * cfg.tasks.n_tasks() as f64);
    let h = cfg.hidden;

    let mut grads = params.zeros_like();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    for t in traces.iter().rev() {
        let s = &seq.steps[t.step];

        // Target head.
        let dlogit = if inside_clamp(t.y_hat) {
            w_target * (t.y_hat - if s.label { 1.0 } else { 0.0 })
        } else {
            0.0
        };
        outer_acc(&mut grads.target_head.weight, &[dlogit], &t.target_in);
        grads.target_head.bias.as_mut_slice()[0] += dlogit;
        let du: Vec<f64> = params.target_head.weight.as_slice().iter().map(|a| a * dlogit).collect();

        // GPSR head; a zero weight contributes nothing and is skipped outright.
        let mut dv = None;
        if let (Some(head), Some(probs)) = (&params.gpsr_head, &t.gpsr) {
            if w_gpsr != 0.0 {
                let dz = gpsr_logit_grad(probs, &s.gpsr, cfg.gpsr_output, &cfg.tasks, w_gpsr);
                let gh = grads.gpsr_head.as_mut().expect("gradient mirrors params");
                outer_acc(&mut gh.weight, t.gpsr_in(), &dz);
                for (b, d) in gh.bias.as_mut_slice().iter_mut().zip(&dz) {
                    *b += d;
                }
                let mut d = vec![0.0; head.weight.rows()];
                gemv(&head.weight, &dz, &mut d);
                dv = Some(d);
            }
        }

        // Branches back to the (post-dropout) embedding output.
        let mut de = match (&params.target_branch, &t.target_branch) {
            (Some(layer), Some(tr)) => {
                let mut de = vec![0.0; cfg.embed];
                let g = grads.target_branch.as_mut().expect("gradient mirrors params");
                dense_backward(layer, g, tr, &t.emb.out, &du, &mut de);
                de
            }
            _ => du.clone(),
        };
        if let Some(res) = &mut grads.residual {
            outer_acc(&mut res.weight, &du, &s.input);
            for (b, d) in res.bias.as_mut_slice().iter_mut().zip(&du) {
                *b += d;
            }
        }
        if let Some(dv) = dv {
            match (&params.gpsr_branch, &t.gpsr_branch) {
                (Some(layer), Some(tr)) => {
                    let g = grads.gpsr_branch.as_mut().expect("gradient mirrors params");
                    dense_backward(layer, g, tr, &t.emb.out, &dv, &mut de);
                }
                _ => de.iter_mut().zip(&dv).for_each(|(a, b)| *a += b),
            }
        }

        // Embedding layer back to h_t.
        let mut dh = dh_next.clone();
        dense_backward(&params.embedding, &mut grads.embedding, &t.emb, &t.state.h, &de, &mut dh);

        // LSTM cell.
        let g = &t.lstm.gates;
        let mut dgates = vec![0.0; 4 * h];
        for k in 0..h {
            let (i, f, o, gg) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = t.lstm.tanh_c[k];
            let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
            let d_o = dh[k] * tc;
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * t.prev.c[k];
            dc_next[k] = dc * f;
            dgates[k] = d_i * i * (1.0 - i);
            dgates[h + k] = d_f * f * (1.0 - f);
            dgates[2 * h + k] = d_o * o * (1.0 - o);
            dgates[3 * h + k] = d_g * (1.0 - gg * gg);
        }
        outer_acc(&mut grads.lstm.input, &dgates, &s.input);
        outer_acc(&mut grads.lstm.recurrent, &dgates, &t.prev.h);
        for (b, d) in grads.lstm.bias.as_mut_slice().iter_mut().zip(&dgates) {
            *b += d;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(&params.lstm.recurrent, &dgates, &mut dh_next);
    }

    if let Some(block) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of block {block}")));
    }
    Ok((loss, grads))
}

fn gpsr_logit_grad(probs: &[f64], targets: &[u16], mode: GpsrOutput, layout: &TaskLayout, weight: f64) -> Vec<f64> {
    let mut dz = vec![0.0; probs.len()];
    for ((off, m), &c) in layout.blocks().zip(targets) {
        let c = c as usize;
        let p_true = probs[off + c];
        if !inside_clamp(p_true) {
            continue;
        }
        match mode {
            GpsrOutput::Sigmoid => dz[off + c] = weight * (p_true - 1.0),
            GpsrOutput::Softmax => {
                for j in 0..m {
                    let ind = if j == c { 1.0 } else { 0.0 };
                    dz[off + j] = weight * (probs[off + j] - ind);
                }
            }
        }
    }
    dz
}

/// Scores of the valid steps in order, in eval mode.
pub fn score_sequence(seq: &EncodedSequence, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(forward_sequence(seq, params, 1.0, Mode::Eval)?
        .outputs
        .into_iter()
        .map(|o| o.y_hat)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Step;
    use crate::model::{build_architecture, ArchitectureConfig, ArchitectureKind};
    use crate::numkernel::{Matrix, Purpose};

    fn cfg(kind: ArchitectureKind) -> ArchitectureConfig {
        ArchitectureConfig::new(kind, 4, 3, 2, TaskLayout::new(vec![3, 2]).unwrap())
    }

    fn seq(n: usize) -> EncodedSequence {
        let mut rng = RngStream::new(11, 0);
        EncodedSequence {
            admission_id: "a".into(),
            steps: (0..n)
                .map(|k| Step {
                    time: k as f64,
                    input: (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                    label: k % 2 == 0,
                    gpsr: vec![(k % 3) as u16, (k % 2) as u16],
                    valid: true,
                })
                .collect(),
        }
    }

    #[test]
    fn zero_cell() {
        let p = LstmParams::zeros(4, 3);
        let out = lstm_step(&[1.0, -1.0, 0.5, 2.0], &LstmState::zeros(3), &p).unwrap();
        assert_eq!(out, LstmState::zeros(3));
    }

    #[test]
    fn forget_gate_saturation_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3);
        for k in 0..3 {
            p.bias.as_mut_slice()[3 + k] = 40.0;
        }
        let prev = LstmState {
            h: vec![0.0; 3],
            c: vec![0.7, -1.3, 2.0],
        };
        let out = lstm_step(&[0.0, 0.0], &prev, &p).unwrap();
        for (a, b) in out.c.iter().zip(&prev.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_shape_errors() {
        let p = LstmParams::zeros(2, 3);
        assert!(lstm_step(&[0.0; 3], &LstmState::zeros(3), &p).is_err());
        assert!(lstm_step(&[0.0; 2], &LstmState::zeros(2), &p).is_err());
    }

    #[test]
    fn embedding_examples() {
        let zero = Linear {
            weight: Matrix::zeros(2, 3),
            bias: Matrix::zeros(2, 1),
        };
        assert_eq!(embed_state(&[1.0, 2.0, 3.0], &zero, 0.0, Mode::Eval).unwrap(), vec![0.0, 0.0]);

        let lin = Linear {
            weight: Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]]),
            bias: Matrix::zeros(2, 1),
        };
        assert_eq!(embed_state(&[2.0, 0.0, 0.0], &lin, 0.0, Mode::Eval).unwrap(), vec![2.0, 0.0]);
        let mut rng = RngStream::new(0, 0);
        assert_eq!(
            embed_state(&[2.0, 0.0, 0.0], &lin, 0.0, Mode::Train(&mut rng)).unwrap(),
            embed_state(&[2.0, 0.0, 0.0], &lin, 0.0, Mode::Eval).unwrap()
        );
        assert!(embed_state(&[2.0, 0.0, 0.0], &lin, 1.0, Mode::Eval).is_err());
    }

    #[test]
    fn dropout_scales_kept_units() {
        let lin = Linear {
            weight: Matrix::from_vec(64, 1, vec![1.0; 64]).unwrap(),
            bias: Matrix::zeros(64, 1),
        };
        let mut rng = RngStream::for_purpose(1, Purpose::Test, &[]);
        let out = embed_state(&[1.0], &lin, 0.5, Mode::Train(&mut rng)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(out.contains(&0.0) && out.contains(&2.0));
    }

    #[test]
    fn target_head_examples() {
        let zero = TargetHead {
            weight: Matrix::zeros(1, 2),
            bias: Matrix::zeros(1, 1),
        };
        assert_eq!(predict_target(&[3.0, 4.0], &zero), 0.5);
        let sat = TargetHead {
            weight: Matrix::zeros(1, 2),
            bias: Matrix::column(&[20.0]),
        };
        assert!((predict_target(&[0.0, 0.0], &sat) - 1.0).abs() < 1e-8);
        let cancel = TargetHead {
            weight: Matrix::from_rows(&[&[1.0, -1.0]]),
            bias: Matrix::zeros(1, 1),
        };
        assert_eq!(predict_target(&[2.0, 2.0], &cancel), 0.5);
    }

    #[test]
    fn gpsr_head_examples() {
        let layout = TaskLayout::new(vec![3]).unwrap();
        let zero = GpsrHead {
            weight: Matrix::zeros(2, 3),
            bias: Matrix::zeros(3, 1),
        };
        assert_eq!(predict_gpsr(&[1.0, 1.0], &zero, GpsrOutput::Sigmoid, &layout), vec![0.5; 3]);
        for p in predict_gpsr(&[1.0, 1.0], &zero, GpsrOutput::Softmax, &layout) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let layout = TaskLayout::new(vec![3, 2, 4]).unwrap();
        let mut rng = RngStream::new(2, 2);
        let head = GpsrHead {
            weight: Matrix::from_vec(2, 9, (0..18).map(|_| rng.uniform_range(-3.0, 3.0)).collect()).unwrap(),
            bias: Matrix::from_vec(9, 1, (0..9).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap(),
        };
        let probs = predict_gpsr(&[0.3, -2.0], &head, GpsrOutput::Softmax, &layout);
        for (off, m) in layout.blocks() {
            let s: f64 = probs[off..off + m].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_zero_step_loss_is_ln2() {
        let c = cfg(ArchitectureKind::EvtGpsr);
        let params = ModelParams::zeros(&c).unwrap();
        let s = EncodedSequence {
            admission_id: "z".into(),
            steps: vec![Step {
                time: 0.0,
                input: vec![0.3, 0.1, -0.2, 0.9],
                label: true,
                gpsr: vec![2, 1],
                valid: true,
            }],
        };
        let f = forward_sequence(&s, &params, 1.0, Mode::Eval).unwrap();
        assert!((f.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn stateless_when_recurrence_off() {
        let c = cfg(ArchitectureKind::EvtGpsr);
        let mut params = build_architecture(&c, 5).unwrap();
        params.lstm.recurrent.fill(0.0);
        // c_t also carries state; kill the forget gate to make steps independent.
        for k in 0..3 {
            params.lstm.bias.as_mut_slice()[3 + k] = -1e3;
        }
        let mut s = seq(1);
        let step = s.steps[0].clone();
        s.steps = (0..5)
            .map(|k| Step {
                time: k as f64,
                ..step.clone()
            })
            .collect();
        let f = forward_sequence(&s, &params, 0.5, Mode::Eval).unwrap();
        let first = &f.outputs[0];
        for o in &f.outputs {
            assert_eq!(o.y_hat.to_bits(), first.y_hat.to_bits());
        }
    }

    #[test]
    fn all_masked_rejected() {
        let params = build_architecture(&cfg(ArchitectureKind::Spv), 1).unwrap();
        let mut s = seq(3);
        s.steps.iter_mut().for_each(|st| st.valid = false);
        assert!(forward_sequence(&s, &params, 1.0, Mode::Eval).is_err());
        assert!(backward_sequence(&s, &params, 1.0, Mode::Eval).is_err());
    }

    #[test]
    fn zero_weight_paths_have_exactly_zero_gradient() {
        let params = build_architecture(&cfg(ArchitectureKind::EvtGpsr), 3).unwrap();
        let s = seq(4);
        let (_, g) = backward_sequence(&s, &params, 1.0, Mode::Eval).unwrap();
        let gh = g.gpsr_head.unwrap();
        assert!(gh.weight.as_slice().iter().chain(gh.bias.as_slice()).all(|&v| v == 0.0));
        let (_, g) = backward_sequence(&s, &params, 0.0, Mode::Eval).unwrap();
        assert!(g.target_head.weight.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(g.target_head.bias.as_slice()[0], 0.0);
    }

    #[test]
    fn masked_step_is_neutral() {
        for kind in ArchitectureKind::ALL {
            let params = build_architecture(&cfg(kind), 8).unwrap();
            let s = seq(4);
            let mut t = s.clone();
            let mut extra = t.steps[1].clone();
            extra.valid = false;
            extra.input = vec![9.0, -9.0, 3.0, 1.0];
            t.steps.insert(2, extra);
            let (la, ga) = backward_sequence(&s, &params, 0.6, Mode::Eval).unwrap();
            let (lb, gb) = backward_sequence(&t, &params, 0.6, Mode::Eval).unwrap();
            assert_eq!(la.to_bits(), lb.to_bits());
            assert_eq!(ga, gb);
        }
    }

    #[test]
    fn eval_forward_is_bit_identical() {
        let params = build_architecture(&cfg(ArchitectureKind::EvtLLGpsrMTLL), 2).unwrap();
        let s = seq(6);
        let a = forward_sequence(&s, &params, 0.8, Mode::Eval).unwrap();
        let b = forward_sequence(&s, &params, 0.8, Mode::Eval).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn forward_and_backward_losses_agree_in_train_mode() {
        let mut c = cfg(ArchitectureKind::EvtLLGpsrMTLL);
        c.emb_dropout = 0.3;
        c.branch_dropout = 0.2;
        let params = build_architecture(&c, 2).unwrap();
        let s = seq(6);
        let mut r1 = RngStream::new(1, 1);
        let mut r2 = RngStream::new(1, 1);
        let f = forward_sequence(&s, &params, 0.8, Mode::Train(&mut r1)).unwrap();
        let (l, _) = backward_sequence(&s, &params, 0.8, Mode::Train(&mut r2)).unwrap();
        assert_eq!(f.loss.to_bits(), l.to_bits());
    }
}
