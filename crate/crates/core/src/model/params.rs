use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Purpose, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchitectureKind {
    /// Supervised target only.
    #[serde(rename = "spv")]
    Spv,
    /// Target and GPSR heads on the shared embedding.
    #[serde(rename = "evt_gpsr")]
    EvtGpsr,
    /// Like `EvtGpsr` with one extra linear+ReLU layer per branch.
    #[serde(rename = "evtll_gpsr_mtll")]
    EvtLLGpsrMTLL,
    /// GPSR pretraining, then a linear target layer over the frozen embedding.
    #[serde(rename = "embedding")]
    Embedding,
    /// Embedding model plus a residual path from the raw inputs.
    #[serde(rename = "residual")]
    Residual,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 5] = [
        ArchitectureKind::Spv,
        ArchitectureKind::EvtGpsr,
        ArchitectureKind::EvtLLGpsrMTLL,
        ArchitectureKind::Embedding,
        ArchitectureKind::Residual,
    ];

    pub fn has_gpsr_head(self) -> bool {
        !matches!(self, ArchitectureKind::Spv)
    }

    pub fn has_branches(self) -> bool {
        matches!(self, ArchitectureKind::EvtLLGpsrMTLL)
    }

    pub fn has_residual(self) -> bool {
        matches!(self, ArchitectureKind::Residual)
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, ArchitectureKind::Embedding | ArchitectureKind::Residual)
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::Spv => "spv",
            ArchitectureKind::EvtGpsr => "evt_gpsr",
            ArchitectureKind::EvtLLGpsrMTLL => "evtll_gpsr_mtll",
            ArchitectureKind::Embedding => "embedding",
            ArchitectureKind::Residual => "residual",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchitectureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("kind", format!("unknown architecture `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpsrOutput {
    /// Elementwise sigmoid over every class logit.
    #[default]
    Sigmoid,
    /// Softmax within each task's class block.
    Softmax,
}

/// Class counts of the GPSR tasks, in column order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLayout {
    classes: Vec<usize>,
}

impl TaskLayout {
    pub fn new(classes: Vec<usize>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("tasks", "at least one GPSR task is required"));
        }
        if let Some(i) = classes.iter().position(|&m| m < 2) {
            return Err(Error::invalid("tasks", format!("task {i} has fewer than two classes")));
        }
        Ok(TaskLayout { classes })
    }

    pub fn n_tasks(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn total(&self) -> usize {
        self.classes.iter().sum()
    }

    /// `(offset, class count)` of every task's column block.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.classes.iter().scan(0usize, |off, &m| {
            let start = *off;
            *off += m;
            Some((start, m))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub kind: ArchitectureKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    /// Width of the extra target-branch layer (`EvtLLGpsrMTLL` only).
    pub target_branch: usize,
    /// Width of the shared multi-task GPSR layer (`EvtLLGpsrMTLL` only).
    pub gpsr_branch: usize,
    pub emb_dropout: f64,
    pub branch_dropout: f64,
    pub gpsr_output: GpsrOutput,
    pub tasks: TaskLayout,
}

impl ArchitectureConfig {
    /// Defaults for everything but the data-dependent sizes; branch widths
    /// follow the embedding width.
    pub fn new(kind: ArchitectureKind, input_dim: usize, hidden: usize, embed: usize, tasks: TaskLayout) -> Self {
        ArchitectureConfig {
            kind,
            input_dim,
            hidden,
            embed,
            target_branch: embed,
            gpsr_branch: embed,
            emb_dropout: 0.0,
            branch_dropout: 0.0,
            gpsr_output: GpsrOutput::Sigmoid,
            tasks,
        }
    }

    pub fn with_kind(&self, kind: ArchitectureKind) -> Self {
        ArchitectureConfig { kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("input_dim", self.input_dim), ("hidden", self.hidden), ("embed", self.embed)] {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if self.kind.has_branches() {
            if self.target_branch == 0 {
                return Err(Error::invalid("target_branch", "must be at least 1"));
            }
            if self.gpsr_branch == 0 {
                return Err(Error::invalid("gpsr_branch", "must be at least 1"));
            }
        }
        for (field, r) in [("emb_dropout", self.emb_dropout), ("branch_dropout", self.branch_dropout)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(field, format!("dropout rate must lie in [0, 1), got {r}")));
            }
        }
        Ok(())
    }

    /// Width of the vector fed to the target head.
    pub fn target_input(&self) -> usize {
        if self.kind.has_branches() {
            self.target_branch
        } else {
            self.embed
        }
    }

    /// Width of the vector fed to the GPSR head.
    pub fn gpsr_input(&self) -> usize {
        if self.kind.has_branches() {
            self.gpsr_branch
        } else {
            self.embed
        }
    }
}

/// Named parameter blocks, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    LstmInput,
    LstmRecurrent,
    LstmBias,
    EmbWeight,
    EmbBias,
    TargetBranchWeight,
    TargetBranchBias,
    GpsrBranchWeight,
    GpsrBranchBias,
    ResidualWeight,
    ResidualBias,
    TargetWeight,
    TargetBias,
    GpsrWeight,
    GpsrBias,
}

impl Block {
    pub fn is_bias(self) -> bool {
        matches!(
            self,
            Block::LstmBias
                | Block::EmbBias
                | Block::TargetBranchBias
                | Block::GpsrBranchBias
                | Block::ResidualBias
                | Block::TargetBias
                | Block::GpsrBias
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::LstmInput => "lstm_input",
            Block::LstmRecurrent => "lstm_recurrent",
            Block::LstmBias => "lstm_bias",
            Block::EmbWeight => "emb_weight",
            Block::EmbBias => "emb_bias",
            Block::TargetBranchWeight => "target_branch_weight",
            Block::TargetBranchBias => "target_branch_bias",
            Block::GpsrBranchWeight => "gpsr_branch_weight",
            Block::GpsrBranchBias => "gpsr_branch_bias",
            Block::ResidualWeight => "residual_weight",
            Block::ResidualBias => "residual_bias",
            Block::TargetWeight => "target_weight",
            Block::TargetBias => "target_bias",
            Block::GpsrWeight => "gpsr_weight",
            Block::GpsrBias => "gpsr_bias",
        }
    }

    pub fn group(self) -> BlockGroup {
        match self {
            Block::LstmInput | Block::LstmRecurrent | Block::LstmBias => BlockGroup::Lstm,
            Block::EmbWeight | Block::EmbBias => BlockGroup::Embedding,
            Block::TargetBranchWeight | Block::TargetBranchBias => BlockGroup::TargetBranch,
            Block::GpsrBranchWeight | Block::GpsrBranchBias => BlockGroup::GpsrBranch,
            Block::ResidualWeight | Block::ResidualBias => BlockGroup::Residual,
            Block::TargetWeight | Block::TargetBias => BlockGroup::TargetHead,
            Block::GpsrWeight | Block::GpsrBias => BlockGroup::GpsrHead,
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockGroup {
    Lstm,
    Embedding,
    TargetBranch,
    GpsrBranch,
    Residual,
    TargetHead,
    GpsrHead,
}

/// Affine map `W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    fn zeros(out: usize, inp: usize) -> Self {
        Linear {
            weight: Matrix::zeros(out, inp),
            bias: Matrix::zeros(out, 1),
        }
    }
}

/// LSTM weights with the four gates stacked row-wise in the order
/// input, forget, output, candidate: rows `k*h..(k+1)*h` belong to gate `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            input: Matrix::zeros(4 * hidden, input_dim),
            recurrent: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.input.cols()
    }
}

/// `ŷ = σ(a_y · u + b_y)`; `weight` is `1 x k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetHead {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// `z = A_Xᵀ v + b_X`; `weight` is `k x C_total`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsrHead {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// All learnable weights of one architecture. The same type doubles as the
/// gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ArchitectureConfig,
    pub lstm: LstmParams,
    pub embedding: Linear,
    pub target_branch: Option<Linear>,
    pub gpsr_branch: Option<Linear>,
    pub residual: Option<Linear>,
    pub target_head: TargetHead,
    pub gpsr_head: Option<GpsrHead>,
}

impl ModelParams {
    /// All-zero parameters with the block structure `config.kind` implies.
    pub fn zeros(config: &ArchitectureConfig) -> Result<Self> {
        config.validate()?;
        let kind = config.kind;
        let (d, h, e) = (config.input_dim, config.hidden, config.embed);
        Ok(ModelParams {
            config: config.clone(),
            lstm: LstmParams::zeros(d, h),
            embedding: Linear::zeros(e, h),
            target_branch: kind.has_branches().then(|| Linear::zeros(config.target_branch, e)),
            gpsr_branch: kind.has_branches().then(|| Linear::zeros(config.gpsr_branch, e)),
            residual: kind.has_residual().then(|| Linear::zeros(e, d)),
            target_head: TargetHead {
                weight: Matrix::zeros(1, config.target_input()),
                bias: Matrix::zeros(1, 1),
            },
            gpsr_head: kind.has_gpsr_head().then(|| GpsrHead {
                weight: Matrix::zeros(config.gpsr_input(), config.tasks.total()),
                bias: Matrix::zeros(config.tasks.total(), 1),
            }),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_block_mut(|_, m| m.fill(0.0));
        z
    }

    pub fn kind(&self) -> ArchitectureKind {
        self.config.kind
    }

    /// Present blocks in canonical order.
    pub fn blocks(&self) -> Vec<(Block, &Matrix)> {
        let mut out = vec![
            (Block::LstmInput, &self.lstm.input),
            (Block::LstmRecurrent, &self.lstm.recurrent),
            (Block::LstmBias, &self.lstm.bias),
            (Block::EmbWeight, &self.embedding.weight),
            (Block::EmbBias, &self.embedding.bias),
        ];
        if let Some(l) = &self.target_branch {
            out.push((Block::TargetBranchWeight, &l.weight));
            out.push((Block::TargetBranchBias, &l.bias));
        }
        if let Some(l) = &self.gpsr_branch {
            out.push((Block::GpsrBranchWeight, &l.weight));
            out.push((Block::GpsrBranchBias, &l.bias));
        }
        if let Some(l) = &self.residual {
            out.push((Block::ResidualWeight, &l.weight));
            out.push((Block::ResidualBias, &l.bias));
        }
        out.push((Block::TargetWeight, &self.target_head.weight));
        out.push((Block::TargetBias, &self.target_head.bias));
        if let Some(g) = &self.gpsr_head {
            out.push((Block::GpsrWeight, &g.weight));
            out.push((Block::GpsrBias, &g.bias));
        }
        out
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(Block, &mut Matrix)) {
        f(Block::LstmInput, &mut self.lstm.input);
        f(Block::LstmRecurrent, &mut self.lstm.recurrent);
        f(Block::LstmBias, &mut self.lstm.bias);
        f(Block::EmbWeight, &mut self.embedding.weight);
        f(Block::EmbBias, &mut self.embedding.bias);
        if let Some(l) = &mut self.target_branch {
            f(Block::TargetBranchWeight, &mut l.weight);
            f(Block::TargetBranchBias, &mut l.bias);
        }
        if let Some(l) = &mut self.gpsr_branch {
            f(Block::GpsrBranchWeight, &mut l.weight);
            f(Block::GpsrBranchBias, &mut l.bias);
        }
        if let Some(l) = &mut self.residual {
            f(Block::ResidualWeight, &mut l.weight);
            f(Block::ResidualBias, &mut l.bias);
        }
        f(Block::TargetWeight, &mut self.target_head.weight);
        f(Block::TargetBias, &mut self.target_head.bias);
        if let Some(g) = &mut self.gpsr_head {
            f(Block::GpsrWeight, &mut g.weight);
            f(Block::GpsrBias, &mut g.bias);
        }
    }

    pub fn block(&self, block: Block) -> Option<&Matrix> {
        self.blocks().into_iter().find(|(b, _)| *b == block).map(|(_, m)| m)
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    /// Concatenates every block into one column, in canonical order.
    pub fn to_flat(&self) -> Matrix {
        let mut v = Vec::with_capacity(self.n_params());
        for (_, m) in self.blocks() {
            v.extend_from_slice(m.as_slice());
        }
        Matrix::column(&v)
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn set_flat(&mut self, flat: &Matrix) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape {
                op: "set_flat",
                left: (self.n_params(), 1),
                right: flat.shape(),
            });
        }
        let src = flat.as_slice();
        let mut off = 0;
        self.for_each_block_mut(|_, m| {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&src[off..off + n]);
            off += n;
        });
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.is_finite())
    }

    /// First block holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<Block> {
        self.blocks().into_iter().find(|(_, m)| !m.is_finite()).map(|(b, _)| b)
    }

    /// Elementwise `self += other`; both must share one architecture.
    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        if self.config.kind != other.config.kind {
            return Err(Error::Data(format!(
                "cannot add {} parameters to {} parameters",
                other.config.kind, self.config.kind
            )));
        }
        let theirs = other.blocks();
        let mut result = Ok(());
        let mut i = 0;
        self.for_each_block_mut(|_, m| {
            if result.is_ok() {
                result = m.add_assign(theirs[i].1);
            }
            i += 1;
        });
        result
    }

    pub fn scale_assign(&mut self, s: f64) {
        self.for_each_block_mut(|_, m| m.as_mut_slice().iter_mut().for_each(|v| *v *= s));
    }
}

fn fan_in(block: Block, m: &Matrix) -> usize {
    match block {
        // A_X is stored `k x C`, so its inputs run along the rows.
        Block::GpsrWeight => m.rows(),
        _ => m.cols(),
    }
}

/// Initializes every weight block uniformly in `±1/sqrt(fan_in)` with its own
/// random stream; biases start at zero. Blocks shared between kinds therefore
/// receive identical values under the same seed.
pub fn build_architecture(config: &ArchitectureConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    params.for_each_block_mut(|block, m| init_block(block, m, seed));
    Ok(params)
}

fn init_block(block: Block, m: &mut Matrix, seed: u64) {
    if block.is_bias() {
        m.fill(0.0);
        return;
    }
    let bound = 1.0 / (fan_in(block, m).max(1) as f64).sqrt();
    let mut rng = RngStream::for_purpose(seed, Purpose::Init, &[block as u64]);
    for v in m.as_mut_slice() {
        *v = rng.uniform_range(-bound, bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ArchitectureKind) -> ArchitectureConfig {
        ArchitectureConfig::new(kind, 6, 8, 5, TaskLayout::new(vec![3, 3, 3]).unwrap())
    }

    #[test]
    fn spv_has_no_gpsr_head() {
        let p = build_architecture(&cfg(ArchitectureKind::Spv), 1).unwrap();
        assert!(p.gpsr_head.is_none());
        assert!(p.block(Block::GpsrWeight).is_none());
    }

    #[test]
    fn block_structure_per_kind() {
        let has = |k, b| build_architecture(&cfg(k), 1).unwrap().block(b).is_some();
        assert!(has(ArchitectureKind::EvtGpsr, Block::GpsrWeight));
        assert!(!has(ArchitectureKind::EvtGpsr, Block::TargetBranchWeight));
        assert!(has(ArchitectureKind::EvtLLGpsrMTLL, Block::TargetBranchWeight));
        assert!(has(ArchitectureKind::EvtLLGpsrMTLL, Block::GpsrBranchWeight));
        assert!(has(ArchitectureKind::Embedding, Block::GpsrWeight));
        assert!(!has(ArchitectureKind::Embedding, Block::ResidualWeight));
        assert!(has(ArchitectureKind::Residual, Block::ResidualWeight));
    }

    #[test]
    fn init_reproducible_and_shared_across_kinds() {
        let a = build_architecture(&cfg(ArchitectureKind::EvtGpsr), 9).unwrap();
        let b = build_architecture(&cfg(ArchitectureKind::EvtGpsr), 9).unwrap();
        assert_eq!(a, b);
        let s = build_architecture(&cfg(ArchitectureKind::Spv), 9).unwrap();
        assert_eq!(a.lstm, s.lstm);
        assert_eq!(a.embedding, s.embedding);
        assert_eq!(a.target_head, s.target_head);
        let c = build_architecture(&cfg(ArchitectureKind::EvtGpsr), 10).unwrap();
        assert_ne!(a.lstm, c.lstm);
    }

    #[test]
    fn init_bounds() {
        let p = build_architecture(&cfg(ArchitectureKind::EvtGpsr), 3).unwrap();
        let bound = 1.0 / 6f64.sqrt();
        assert!(p.lstm.input.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(p.lstm.bias.as_slice().iter().all(|&v| v == 0.0));
        let g = p.gpsr_head.unwrap();
        assert_eq!(g.weight.shape(), (5, 9));
        assert!(g.weight.as_slice().iter().all(|v| v.abs() <= 1.0 / 5f64.sqrt()));
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut c = cfg(ArchitectureKind::EvtGpsr);
        c.hidden = 0;
        assert!(build_architecture(&c, 0).is_err());
        let mut c = cfg(ArchitectureKind::EvtGpsr);
        c.emb_dropout = 1.0;
        assert!(build_architecture(&c, 0).is_err());
        let mut c = cfg(ArchitectureKind::EvtLLGpsrMTLL);
        c.gpsr_branch = 0;
        assert!(build_architecture(&c, 0).is_err());
        assert!(TaskLayout::new(vec![]).is_err());
        assert!(TaskLayout::new(vec![3, 1]).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let p = build_architecture(&cfg(ArchitectureKind::Residual), 4).unwrap();
        let flat = p.to_flat();
        let mut q = p.zeros_like();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn layout_blocks() {
        let l = TaskLayout::new(vec![2, 3, 2]).unwrap();
        assert_eq!(l.blocks().collect::<Vec<_>>(), vec![(0, 2), (2, 3), (5, 2)]);
        assert_eq!(l.total(), 7);
    }
}
