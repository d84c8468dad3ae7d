//! Compact autoregressive policy over think / no-think responses.
//!
//! A response is `[MODE_NOTHINK, ANSWER]` or `[MODE_THINK, REASON, ANSWER]`.
//! Every token is drawn from a softmax row of a logit table:
//!
//! | token   | row                                   |
//! |---------|---------------------------------------|
//! | mode    | `theta_mode[coarse]`                  |
//! | reason  | `theta_reason[coarse][fine]`          |
//! | answer  | `theta_ans_think[coarse][reason]` or `theta_ans_nothink[coarse]` |
//!
//! The log-probability of a response is the sum of its token log-probabilities
//! and the gradient of each term is `one_hot - softmax` on the row it used.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::taskworld::{Dims, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "think")]
    Think,
    #[serde(rename = "nothink")]
    NoThink,
}

impl Mode {
    /// Column of the mode table holding this mode's logit.
    pub fn index(self) -> usize {
        match self {
            Mode::Think => 0,
            Mode::NoThink => 1,
        }
    }

    /// Textual prefix a language model would be prompted with to force this mode.
    pub fn prefix(self) -> &'static str {
        match self {
            Mode::Think => "<think>\n",
            Mode::NoThink => "<think>\n\n</think>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    ModeThink,
    ModeNoThink,
    Reason(usize),
    Answer(usize),
}

impl Token {
    pub fn mode(mode: Mode) -> Token {
        match mode {
            Mode::Think => Token::ModeThink,
            Mode::NoThink => Token::ModeNoThink,
        }
    }
}

/// How forced prefix tokens are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Forced tokens belong to the prompt: log-probability 0, no gradient.
    #[default]
    PromptPrefix,
    /// Forced tokens are scored at their unforced probability.
    Unforced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
    pub forced_prefix_len: usize,
}

impl Trajectory {
    /// Checks the response grammar and payload ranges.
    pub fn check_shape(&self, dims: Dims) -> Result<()> {
        let ok = match self.tokens.as_slice() {
            [Token::ModeNoThink, Token::Answer(a)] => *a < dims.n_answers,
            [Token::ModeThink, Token::Reason(r), Token::Answer(a)] => *r < dims.n_fine && *a < dims.n_answers,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!("malformed trajectory {:?}", self.tokens)));
        }
        if self.forced_prefix_len > 1 {
            return Err(Error::Shape(format!(
                "forced prefix of length {} (at most the mode token can be forced)",
                self.forced_prefix_len
            )));
        }
        Ok(())
    }

    /// Full invariant check including the recorded log-probabilities.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        self.check_shape(dims)?;
        if self.logprobs.len() != self.tokens.len() {
            return Err(Error::Shape(format!(
                "{} logprobs for {} tokens",
                self.logprobs.len(),
                self.tokens.len()
            )));
        }
        if self.logprobs.iter().any(|&l| l.is_nan() || l > 0.0) {
            return Err(Error::Numeric(format!(
                "logprob above zero or NaN: {:?}",
                self.logprobs
            )));
        }
        Ok(())
    }

    pub fn mode(&self) -> Option<Mode> {
        match self.tokens.first() {
            Some(Token::ModeThink) => Some(Mode::Think),
            Some(Token::ModeNoThink) => Some(Mode::NoThink),
            _ => None,
        }
    }

    pub fn reason(&self) -> Option<usize> {
        self.tokens.iter().find_map(|t| match t {
            Token::Reason(r) => Some(*r),
            _ => None,
        })
    }

    pub fn answer(&self) -> Option<usize> {
        match self.tokens.last() {
            Some(Token::Answer(a)) => Some(*a),
            _ => None,
        }
    }

    /// Number of reasoning tokens.
    pub fn trace_len(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::Reason(_))).count()
    }

    pub fn is_forced(&self, position: usize) -> bool {
        position < self.forced_prefix_len
    }
}

/// Which table a row lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Mode,
    Reason,
    AnsThink,
    AnsNoThink,
}

/// The four logit tables of the policy, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    dims: Dims,
    /// `[C][2]`, column 0 is think.
    theta_mode: Vec<f64>,
    /// `[C][F][F]`
    theta_reason: Vec<f64>,
    /// `[C][F][K]`
    theta_ans_think: Vec<f64>,
    /// `[C][K]`
    theta_ans_nothink: Vec<f64>,
}

impl PolicyParams {
    /// All-zero logits: every row is uniform.
    pub fn zeros(dims: Dims) -> Self {
        let (c, f, k) = (dims.n_coarse, dims.n_fine, dims.n_answers);
        Self {
            dims,
            theta_mode: vec![0.0; c * 2],
            theta_reason: vec![0.0; c * f * f],
            theta_ans_think: vec![0.0; c * f * k],
            theta_ans_nothink: vec![0.0; c * k],
        }
    }

    /// A base policy that almost never reasons: uniform content heads and a
    /// no-think logit of `nothink_logit` against a think logit of 0.
    pub fn base(dims: Dims, nothink_logit: f64) -> Self {
        let mut p = Self::zeros(dims);
        for c in 0..dims.n_coarse {
            p.theta_mode[c * 2 + Mode::NoThink.index()] = nothink_logit;
        }
        p
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.theta_mode.len() + self.theta_reason.len() + self.theta_ans_think.len() + self.theta_ans_nothink.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries in a fixed order: mode, reason, think-answer, no-think-answer.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.theta_mode
            .iter()
            .chain(&self.theta_reason)
            .chain(&self.theta_ans_think)
            .chain(&self.theta_ans_nothink)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.theta_mode
            .iter_mut()
            .chain(self.theta_reason.iter_mut())
            .chain(self.theta_ans_think.iter_mut())
            .chain(self.theta_ans_nothink.iter_mut())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let expect = [
            ("theta_mode", self.theta_mode.len(), d.n_coarse * 2),
            (
                "theta_reason",
                self.theta_reason.len(),
                d.n_coarse * d.n_fine * d.n_fine,
            ),
            (
                "theta_ans_think",
                self.theta_ans_think.len(),
                d.n_coarse * d.n_fine * d.n_answers,
            ),
            (
                "theta_ans_nothink",
                self.theta_ans_nothink.len(),
                d.n_coarse * d.n_answers,
            ),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if let Some((i, v)) = self.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter entry {i} is {v}")));
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn row_range(&self, table: Table, outer: usize, inner: usize) -> (usize, usize) {
        let d = self.dims;
        let (width, start) = match table {
            Table::Mode => (2, outer * 2),
            Table::Reason => (d.n_fine, (outer * d.n_fine + inner) * d.n_fine),
            Table::AnsThink => (d.n_answers, (outer * d.n_fine + inner) * d.n_answers),
            Table::AnsNoThink => (d.n_answers, outer * d.n_answers),
        };
        (start, start + width)
    }

    fn table(&self, table: Table) -> &Vec<f64> {
        match table {
            Table::Mode => &self.theta_mode,
            Table::Reason => &self.theta_reason,
            Table::AnsThink => &self.theta_ans_think,
            Table::AnsNoThink => &self.theta_ans_nothink,
        }
    }

    fn table_mut(&mut self, table: Table) -> &mut Vec<f64> {
        match table {
            Table::Mode => &mut self.theta_mode,
            Table::Reason => &mut self.theta_reason,
            Table::AnsThink => &mut self.theta_ans_think,
            Table::AnsNoThink => &mut self.theta_ans_nothink,
        }
    }

    fn row(&self, table: Table, outer: usize, inner: usize) -> &[f64] {
        let (s, e) = self.row_range(table, outer, inner);
        &self.table(table)[s..e]
    }

    fn row_mut(&mut self, table: Table, outer: usize, inner: usize) -> &mut [f64] {
        let (s, e) = self.row_range(table, outer, inner);
        &mut self.table_mut(table)[s..e]
    }

    pub fn mode_logits(&self, coarse: usize) -> &[f64] {
        self.row(Table::Mode, coarse, 0)
    }

    pub fn mode_logits_mut(&mut self, coarse: usize) -> &mut [f64] {
        self.row_mut(Table::Mode, coarse, 0)
    }

    pub fn reason_logits(&self, coarse: usize, fine: usize) -> &[f64] {
        self.row(Table::Reason, coarse, fine)
    }

    pub fn reason_logits_mut(&mut self, coarse: usize, fine: usize) -> &mut [f64] {
        self.row_mut(Table::Reason, coarse, fine)
    }

    pub fn think_answer_logits(&self, coarse: usize, reason: usize) -> &[f64] {
        self.row(Table::AnsThink, coarse, reason)
    }

    pub fn think_answer_logits_mut(&mut self, coarse: usize, reason: usize) -> &mut [f64] {
        self.row_mut(Table::AnsThink, coarse, reason)
    }

    pub fn nothink_answer_logits(&self, coarse: usize) -> &[f64] {
        self.row(Table::AnsNoThink, coarse, 0)
    }

    pub fn nothink_answer_logits_mut(&mut self, coarse: usize) -> &mut [f64] {
        self.row_mut(Table::AnsNoThink, coarse, 0)
    }

    /// `(P(think), P(no-think))` for a coarse bin.
    pub fn mode_probs(&self, coarse: usize) -> [f64; 2] {
        let p = softmax(self.mode_logits(coarse));
        [p[0], p[1]]
    }

    fn check_task(&self, task: &Task) -> Result<()> {
        task.check(self.dims)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

fn draw(logits: &[f64], rng: &mut StreamRng) -> (usize, f64) {
    let logp = log_softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return (i, *lp);
        }
    }
    let last = logp.len() - 1;
    (last, logp[last])
}

/// Samples one response. With `force` set, the mode token is part of the
/// prompt: it is emitted with log-probability 0 and `forced_prefix_len = 1`.
pub fn sample_trajectory(
    params: &PolicyParams,
    task: &Task,
    force: Option<Mode>,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    params.check_task(task)?;
    let c = task.coarse;
    let (mode, mode_lp) = match force {
        Some(m) => (m, 0.0),
        None => {
            let (i, lp) = draw(params.mode_logits(c), rng);
            (
                if i == Mode::Think.index() {
                    Mode::Think
                } else {
                    Mode::NoThink
                },
                lp,
            )
        }
    };
    let mut tokens = vec![Token::mode(mode)];
    let mut logprobs = vec![mode_lp];
    let answer_row = match mode {
        Mode::Think => {
            let (r, lp) = draw(params.reason_logits(c, task.fine), rng);
            tokens.push(Token::Reason(r));
            logprobs.push(lp);
            params.think_answer_logits(c, r)
        }
        Mode::NoThink => params.nothink_answer_logits(c),
    };
    let (a, lp) = draw(answer_row, rng);
    tokens.push(Token::Answer(a));
    logprobs.push(lp);
    Ok(Trajectory {
        tokens,
        logprobs,
        forced_prefix_len: usize::from(force.is_some()),
    })
}

/// Row and chosen column used by token `t`, or `None` when the token is a
/// forced prefix scored as prompt.
fn token_rows(task: &Task, traj: &Trajectory, scoring: Scoring) -> Vec<Option<(Table, usize, usize, usize)>> {
    let c = task.coarse;
    let mode = traj.mode();
    traj.tokens
        .iter()
        .enumerate()
        .map(|(t, tok)| {
            if traj.is_forced(t) && scoring == Scoring::PromptPrefix {
                return None;
            }
            Some(match *tok {
                Token::ModeThink => (Table::Mode, c, 0, Mode::Think.index()),
                Token::ModeNoThink => (Table::Mode, c, 0, Mode::NoThink.index()),
                Token::Reason(r) => (Table::Reason, c, task.fine, r),
                Token::Answer(a) => match (mode, traj.reason()) {
                    (Some(Mode::Think), Some(r)) => (Table::AnsThink, c, r, a),
                    _ => (Table::AnsNoThink, c, 0, a),
                },
            })
        })
        .collect()
}

/// Per-token log-probabilities of `traj` under `params`.
pub fn logprob(params: &PolicyParams, task: &Task, traj: &Trajectory, scoring: Scoring) -> Result<Vec<f64>> {
    params.check_task(task)?;
    traj.check_shape(params.dims)?;
    Ok(token_rows(task, traj, scoring)
        .into_iter()
        .map(|slot| match slot {
            None => 0.0,
            Some((table, outer, inner, col)) => log_softmax(params.row(table, outer, inner))[col],
        })
        .collect())
}

/// Adds `sum_t weight(t) * d logprob_t / d theta` into `grad`. Forced tokens
/// scored as prompt are skipped.
pub fn accumulate_grad(
    params: &PolicyParams,
    task: &Task,
    traj: &Trajectory,
    scoring: Scoring,
    mut weight: impl FnMut(usize) -> f64,
    grad: &mut PolicyParams,
) -> Result<()> {
    params.check_task(task)?;
    traj.check_shape(params.dims)?;
    params.same_shape(grad)?;
    for (t, slot) in token_rows(task, traj, scoring).into_iter().enumerate() {
        let Some((table, outer, inner, col)) = slot else {
            continue;
        };
        let w = weight(t);
        if w == 0.0 {
            continue;
        }
        let probs = softmax(params.row(table, outer, inner));
        let row = grad.row_mut(table, outer, inner);
        for (j, (g, p)) in row.iter_mut().zip(&probs).enumerate() {
            let onehot = if j == col { 1.0 } else { 0.0 };
            *g += w * (onehot - p);
        }
    }
    Ok(())
}

/// Exact gradient of `sum_t logprob_t` with respect to every table entry.
pub fn grad_logprob(params: &PolicyParams, task: &Task, traj: &Trajectory, scoring: Scoring) -> Result<PolicyParams> {
    let mut grad = PolicyParams::zeros(params.dims);
    accumulate_grad(params, task, traj, scoring, |_| 1.0, &mut grad)?;
    Ok(grad)
}

/// Exact unforced statistics of the policy on one task:
/// `(P(think), P(correct))`.
pub fn expected_outcome(params: &PolicyParams, task: &Task) -> (f64, f64) {
    let c = task.coarse;
    let [p_think, p_nothink] = params.mode_probs(c);
    let reason = softmax(params.reason_logits(c, task.fine));
    let think_acc: f64 = reason
        .iter()
        .enumerate()
        .map(|(r, pr)| pr * softmax(params.think_answer_logits(c, r))[task.answer])
        .sum();
    let nothink_acc = softmax(params.nothink_answer_logits(c))[task.answer];
    (p_think, p_think * think_acc + p_nothink * nothink_acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub learning_rate: f64,
    pub step_count: u64,
}

impl OptState {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        Ok(Self {
            learning_rate,
            step_count: 0,
        })
    }
}

/// Gradient ascent: `params += lr * grad`. A non-finite gradient entry
/// refuses the step and leaves `params` untouched.
pub fn apply_step(params: &mut PolicyParams, grad: &PolicyParams, opt: &mut OptState) -> Result<()> {
    params.same_shape(grad)?;
    if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "gradient entry {i} is {g} at step {}",
            opt.step_count
        )));
    }
    params.add_scaled(grad, opt.learning_rate)?;
    opt.step_count += 1;
    Ok(())
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    version: u32,
    params: PolicyParams,
}

pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        params: params.clone(),
    };
    fs::write(path, serde_json::to_string(&ck)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Input(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.params.validate()?;
    Ok(ck.params)
}
