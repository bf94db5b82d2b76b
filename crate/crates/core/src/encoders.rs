//! VGG-style CNN encoders for floorplans and photographs.
//!
//! Each block is `n` 3x3 convolutions (stride 1, padding 1) with ReLU,
//! followed by a 2x2 max pool. The flattened output of the last block feeds
//! one dense layer (`fc6`) producing the feature vector. The outputs of the
//! third and fourth blocks are exposed as the `conv3` and `conv4` taps.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::synthgen::RoomType;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Input `(height, width)`.
    pub input_size: (usize, usize),
    pub in_channels: usize,
    /// `(out_channels, number of convolutions)` per block.
    pub conv_blocks: Vec<(usize, usize)>,
    pub feature_dim: usize,
    /// Standard deviation of dense-layer weights.
    pub init_sigma: f64,
    pub conv_init: ConvInit,
}

/// Initialisation of convolution kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvInit {
    /// `N(0, 2 / fan_in)`; keeps activations at unit scale through the
    /// blocks, in place of pretrained convolution weights.
    He,
    /// `N(0, init_sigma^2)`, like the dense layers.
    Sigma,
}

impl ConvInit {
    fn sigma(self, fan_in: usize, init_sigma: f64) -> f64 {
        match self {
            ConvInit::He => libm::sqrt(2.0 / fan_in as f64),
            ConvInit::Sigma => init_sigma,
        }
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_size: (64, 64),
            in_channels: 3,
            conv_blocks: alloc::vec![(16, 1), (32, 1), (64, 1), (64, 1)],
            feature_dim: 64,
            init_sigma: 0.001,
            conv_init: ConvInit::He,
        }
    }
}

impl EncoderConfig {
    pub fn with_input(mut self, size: usize) -> Self {
        self.input_size = (size, size);
        self
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |f: &str, reason: String| Err(Error::Config { field: format!("{field}.{f}"), reason });
        if self.conv_blocks.is_empty() {
            return bad("conv_blocks", "at least one block is required".into());
        }
        if let Some(b) = self.conv_blocks.iter().find(|b| b.0 == 0 || b.1 == 0) {
            return bad("conv_blocks", format!("block {b:?} has zero channels or convolutions"));
        }
        let pools = self.conv_blocks.len() as u32;
        let div = 1usize << pools;
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return bad(
                "input_size",
                format!("{h}x{w} does not survive {pools} 2x poolings with spatial size >= 1"),
            );
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be positive".into());
        }
        if self.in_channels == 0 {
            return bad("in_channels", "must be positive".into());
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return bad("init_sigma", "must be positive".into());
        }
        Ok(())
    }

    /// `(channels, height, width)` after `blocks` blocks.
    pub fn shape_after(&self, blocks: usize) -> (usize, usize, usize) {
        let (h, w) = self.input_size;
        let c = if blocks == 0 { self.in_channels } else { self.conv_blocks[blocks - 1].0 };
        (c, h >> blocks, w >> blocks)
    }

    pub fn flat_dim(&self) -> usize {
        let (c, h, w) = self.shape_after(self.conv_blocks.len());
        c * h * w
    }
}

/// Dense layer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn build<T: Scalar>(store: &mut ParamStore<T>, name: &str, din: usize, dout: usize, sigma: f64, rng: &mut Rng) -> Result<Self> {
        let weight = store.add(&format!("{name}.weight"), gaussian(&[dout, din], sigma, rng)?)?;
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[dout]))?;
        Ok(Dense { weight, bias })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, Some(b))
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

pub(crate) fn gaussian<T: Scalar>(shape: &[usize], sigma: f64, rng: &mut Rng) -> Result<Tensor<T>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("init sigma: {e}")))?;
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ConvBlock {
    convs: Vec<(ParamId, ParamId)>,
}

/// Named intermediate outputs of one encoder pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct Taps {
    pub conv3: Option<NodeId>,
    pub conv4: Option<NodeId>,
    pub fc6: Option<NodeId>,
}

/// A contiguous range of blocks, optionally followed by `fc6`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    blocks: Range<usize>,
    in_channels: usize,
    convs: Vec<ConvBlock>,
    fc: Option<Dense>,
}

impl Encoder {
    /// Full encoder: every block plus `fc6`.
    pub fn build<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, config: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate(prefix)?;
        Self::build_stage(store, prefix, config, 0..config.conv_blocks.len(), config.in_channels, true, rng)
    }

    /// Blocks `blocks` of `config` reading `in_channels` channels, with an
    /// optional trailing `fc6` whose input width follows from the channel
    /// count at the end of the range.
    pub fn build_stage<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: &EncoderConfig,
        blocks: Range<usize>,
        in_channels: usize,
        with_fc: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = in_channels;
        for b in blocks.clone() {
            let (cout, n) = config.conv_blocks[b];
            let mut block = ConvBlock { convs: Vec::new() };
            for j in 0..n {
                let name = format!("{prefix}.conv{}_{}", b + 1, j + 1);
                let w = store.add(&format!("{name}.weight"), gaussian(&[cout, cin, 3, 3], config.conv_init.sigma(cin * 9, config.init_sigma), rng)?)?;
                let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[cout]))?;
                block.convs.push((w, bias));
                cin = cout;
            }
            convs.push(block);
        }
        let fc = if with_fc {
            let (c, h, w) = config.shape_after(blocks.end);
            let c = if blocks.is_empty() { in_channels } else { c };
            Some(Dense::build(store, &format!("{prefix}.fc6"), c * h * w, config.feature_dim, config.init_sigma, rng)?)
        } else {
            None
        };
        Ok(Encoder { config: config.clone(), blocks, in_channels, convs, fc })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn blocks(&self) -> Range<usize> {
        self.blocks.clone()
    }

    pub fn fc(&self) -> Option<Dense> {
        self.fc
    }

    pub(crate) fn with_fc(mut self, fc: Dense) -> Self {
        self.fc = Some(fc);
        self
    }

    pub fn conv_params(&self) -> Vec<ParamId> {
        self.convs.iter().flat_map(|b| b.convs.iter().flat_map(|&(w, b)| [w, b])).collect()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.conv_params();
        if let Some(fc) = self.fc {
            p.extend(fc.params());
        }
        p
    }

    /// Expected `(channels, height, width)` of this stage's input.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        let (_, h, w) = self.config.shape_after(self.blocks.start);
        (self.in_channels, h, w)
    }

    /// Runs the stage. The returned feature is the `fc6` output when the
    /// stage has one, otherwise the last block's output.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<(NodeId, Taps)> {
        let (c, h, w) = self.input_shape();
        let xs = g.shape(x);
        if xs.len() != 4 || xs[1] != c || xs[2] != h || xs[3] != w {
            return Err(Error::Dimension {
                op: "encode",
                detail: format!("expected [N, {c}, {h}, {w}], got {xs:?}"),
            });
        }
        let mut taps = Taps::default();
        let mut cur = x;
        for (block, b) in self.convs.iter().zip(self.blocks.clone()) {
            for &(wid, bid) in &block.convs {
                let wn = g.param(wid);
                let bn = g.param(bid);
                let y = g.conv2d(cur, wn, bn, 1, 1)?;
                cur = g.relu(y)?;
            }
            cur = g.maxpool2x2(cur)?;
            match b {
                2 => taps.conv3 = Some(cur),
                3 => taps.conv4 = Some(cur),
                _ => {}
            }
        }
        if let Some(fc) = self.fc {
            let flat = g.flatten(cur)?;
            cur = fc.forward(g, flat)?;
            taps.fc6 = Some(cur);
        }
        Ok((cur, taps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankMode {
    RoomAware,
    RoomAgnostic,
}

/// Photograph encoders keyed by room type. Room-agnostic banks map every
/// room type to one encoder whose parameters are therefore shared.
pub fn encoder_bank<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    config: &EncoderConfig,
    mode: BankMode,
    room_types: &[RoomType],
    rng: &mut Rng,
) -> Result<BTreeMap<RoomType, Encoder>> {
    if room_types.is_empty() {
        return Err(Error::InvalidArgument("encoder bank needs at least one room type".into()));
    }
    let mut bank = BTreeMap::new();
    match mode {
        BankMode::RoomAware => {
            for &rt in room_types {
                bank.insert(rt, Encoder::build(store, &format!("{prefix}.{}", rt.name()), config, rng)?);
            }
        }
        BankMode::RoomAgnostic => {
            let shared = Encoder::build(store, &format!("{prefix}.shared"), config, rng)?;
            for &rt in room_types {
                bank.insert(rt, shared.clone());
            }
        }
    }
    Ok(bank)
}
