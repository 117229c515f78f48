//! Parameter layout and storage.
//!
//! All learnable tensors live in one flat f64 vector with a named segment
//! map derived from the model dimensions. Optimizer state, gradients, and
//! finite-difference probes all mirror this vector coordinate for
//! coordinate. With shared per-hop weights there is exactly one segment per
//! hop, so both branches accumulate into the same gradient coordinates.

use crate::cell_data::TaskKind;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Nonlinearity for σ (per-hop) and ξ (combiner). Heads always use ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Learnable shared negative slope (one scalar for all sites).
    PRelu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
    Sum,
}

/// Branch/fusion configuration, mirroring the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Geometric branch only.
    Voronoi,
    /// Cell-type branch only.
    Celltype,
    /// Both branches, elementwise sum.
    Sum,
    /// Both branches, concatenation followed by a linear map.
    Concat,
    /// Both branches, two-way attention (the full model).
    Attention,
}

impl Variant {
    pub fn uses_voronoi(self) -> bool {
        self != Variant::Celltype
    }

    pub fn uses_celltype(self) -> bool {
        self != Variant::Voronoi
    }

    pub fn both(self) -> bool {
        self.uses_voronoi() && self.uses_celltype()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub name: String,
    pub kind: TaskKind,
}

impl TaskHead {
    /// Output width: two softmax logits for binary, one risk score for hazard.
    pub fn out_dim(&self) -> usize {
        match self.kind {
            TaskKind::Binary => 2,
            TaskKind::Hazard => 1,
        }
    }
}

/// Everything that fixes the parameter shapes and forward semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub f: usize,
    pub d: usize,
    pub k: usize,
    pub shared: bool,
    pub variant: Variant,
    pub activation: Activation,
    pub pooling: Pooling,
    pub dropout: f64,
    pub tasks: Vec<TaskHead>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    pub fn build(dims: &ModelDims) -> Self {
        let (f, d, k) = (dims.f, dims.d, dims.k);
        let mut segments = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, rows: usize, cols: usize, offset: &mut usize| {
            segments.push(Segment { name, offset: *offset, rows, cols });
            *offset += rows * cols;
        };

        let shared_hops = dims.shared && dims.variant.both();
        if shared_hops {
            for h in 0..=k {
                push(format!("w.{h}"), f, d, &mut offset);
                push(format!("b.{h}"), 1, d, &mut offset);
            }
        } else {
            if dims.variant.uses_voronoi() {
                for h in 0..=k {
                    push(format!("w_v.{h}"), f, d, &mut offset);
                    push(format!("b_v.{h}"), 1, d, &mut offset);
                }
            }
            if dims.variant.uses_celltype() {
                for h in 0..=k {
                    push(format!("w_c.{h}"), f, d, &mut offset);
                    push(format!("b_c.{h}"), 1, d, &mut offset);
                }
            }
        }
        if dims.variant.uses_voronoi() {
            push("wz_v".into(), (k + 1) * d, d, &mut offset);
            push("bz_v".into(), 1, d, &mut offset);
        }
        if dims.variant.uses_celltype() {
            push("wz_c".into(), (k + 1) * d, d, &mut offset);
            push("bz_c".into(), 1, d, &mut offset);
        }
        if dims.activation == Activation::PRelu {
            push("prelu".into(), 1, 1, &mut offset);
        }
        match dims.variant {
            Variant::Attention => push("attn".into(), 1, d, &mut offset),
            Variant::Concat => {
                push("wf".into(), 2 * d, d, &mut offset);
                push("bf".into(), 1, d, &mut offset);
            }
            _ => {}
        }
        for task in &dims.tasks {
            let c = task.out_dim();
            push(format!("head.{}.w1", task.name), d, d, &mut offset);
            push(format!("head.{}.b1", task.name), 1, d, &mut offset);
            push(format!("head.{}.w2", task.name), d, d, &mut offset);
            push(format!("head.{}.b2", task.name), 1, d, &mut offset);
            push(format!("head.{}.w3", task.name), d, c, &mut offset);
            push(format!("head.{}.b3", task.name), 1, c, &mut offset);
        }
        ParamLayout { segments, total: offset }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn seg(&self, name: &str) -> &Segment {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no parameter segment named `{name}`"))
    }

    /// Segment owning a flat coordinate; used by diagnostics and tests.
    pub fn segment_of(&self, coord: usize) -> &Segment {
        self.segments
            .iter()
            .find(|s| coord >= s.offset && coord < s.offset + s.len())
            .expect("coordinate outside layout")
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, 0.25 PReLU slope.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.d == 0 || dims.f == 0 || dims.k == 0 {
            return Err(Error::InvalidConfig { reason: "f, d, k must all be >= 1".into() });
        }
        if dims.tasks.is_empty() {
            return Err(Error::InvalidConfig { reason: "at least one task head".into() });
        }
        let layout = ParamLayout::build(&dims);
        let mut values = vec![0.0f64; layout.total()];
        let mut rng = rng::stream(seed, 0x1217);
        for seg in layout.segments() {
            let is_bias = seg.name.starts_with('b') || seg.name.contains(".b");
            if seg.name == "prelu" {
                values[seg.offset] = 0.25;
            } else if !is_bias {
                let bound = (6.0 / (seg.rows + seg.cols) as f64).sqrt();
                for v in &mut values[seg.offset..seg.offset + seg.len()] {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
                }
            }
        }
        Ok(ModelParams { dims, layout, values })
    }

    pub fn seg(&self, name: &str) -> &[f64] {
        let s = self.layout.seg(name);
        &self.values[s.offset..s.offset + s.len()]
    }

    pub fn seg_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.layout.seg(name).clone();
        &mut self.values[s.offset..s.offset + s.len()]
    }

    /// Per-hop weight segment name for a branch, honoring sharing.
    pub fn hop_weight_name(&self, voronoi_branch: bool, h: usize) -> String {
        if self.dims.shared && self.dims.variant.both() {
            format!("w.{h}")
        } else if voronoi_branch {
            format!("w_v.{h}")
        } else {
            format!("w_c.{h}")
        }
    }

    pub fn hop_bias_name(&self, voronoi_branch: bool, h: usize) -> String {
        if self.dims.shared && self.dims.variant.both() {
            format!("b.{h}")
        } else if voronoi_branch {
            format!("b_v.{h}")
        } else {
            format!("b_c.{h}")
        }
    }

    /// Negative-slope value used by σ/ξ under the current activation.
    pub fn prelu_slope(&self) -> f64 {
        match self.dims.activation {
            Activation::PRelu => self.values[self.layout.seg("prelu").offset],
            _ => 0.0,
        }
    }
}
