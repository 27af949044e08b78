//! Late-fusion classifier: one projection layer per modality, concatenation
//! in canonical modality order, two fully connected fusion layers.
//!
//! ```text
//! x_m ──proj_m──relu──┐
//!                     ├─concat──fusion1──relu──fusion2──▶ logits
//! x_n ──proj_n──relu──┘
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_atomic, Modality};
use crate::labels::{Dimension, LabeledSegment};
use crate::nn::{self, Activation, DenseLayer, LayerGrad};

/// Non-empty set of modalities, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModalityCombo(Vec<Modality>);

const VISUAL: [Modality; 3] = [Modality::Still, Modality::Scene, Modality::Motion];

impl ModalityCombo {
    pub fn new(modalities: impl IntoIterator<Item = Modality>) -> Result<ModalityCombo> {
        let mut v: Vec<Modality> = modalities.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(Error::invalid("modality combination is empty"));
        }
        Ok(ModalityCombo(v))
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.0
    }

    pub fn contains(&self, modality: Modality) -> bool {
        self.0.contains(&modality)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Row label in report style: the three visual modalities together read
    /// as "Visual", the rest by name, joined with " + ".
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let has_visual = VISUAL.iter().all(|m| self.contains(*m));
        if has_visual {
            parts.push("Visual".to_string());
        }
        for m in &self.0 {
            if has_visual && VISUAL.contains(m) {
                continue;
            }
            let name = m.as_str();
            parts.push(name[..1].to_ascii_uppercase() + &name[1..]);
        }
        parts.join(" + ")
    }

    /// The nine experiment rows of the reference ablation, in table order.
    pub fn default_ablation() -> Vec<ModalityCombo> {
        [
            "visual",
            "sound",
            "text",
            "visual+sound",
            "still+sound",
            "text+sound",
            "text+visual",
            "text+still",
            "visual+sound+text",
        ]
        .iter()
        .map(|s| s.parse().expect("built-in combo"))
        .collect()
    }
}

impl fmt::Display for ModalityCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|m| m.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

/// Parses `+`-joined modality names. `visual` expands to still+scene+motion
/// and `resnet` is accepted for `still`.
impl FromStr for ModalityCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mods = Vec::new();
        for part in s.split('+').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "visual" => mods.extend(VISUAL),
                "resnet" => mods.push(Modality::Still),
                "places" => mods.push(Modality::Scene),
                "i3d" => mods.push(Modality::Motion),
                "soundnet" => mods.push(Modality::Sound),
                "bert" => mods.push(Modality::Text),
                other => mods.push(other.parse()?),
            }
        }
        ModalityCombo::new(mods)
    }
}

impl TryFrom<String> for ModalityCombo {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModalityCombo> for String {
    fn from(c: ModalityCombo) -> String {
        c.to_string()
    }
}

/// Layer widths. Defaults: 128-wide projections, 256-wide hidden layer,
/// 7 classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub proj_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            proj_dim: 128,
            hidden_dim: 256,
            num_classes: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub combo: ModalityCombo,
    pub target: Dimension,
    /// One per modality of `combo`, same order.
    pub projections: Vec<DenseLayer>,
    pub fusion1: DenseLayer,
    pub fusion2: DenseLayer,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct FusionActivations {
    pub proj_pre: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
    pub hidden_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub projections: Vec<LayerGrad>,
    pub fusion1: LayerGrad,
    pub fusion2: LayerGrad,
}

impl FusionGrads {
    pub fn layers(&self) -> Vec<&LayerGrad> {
        self.projections
            .iter()
            .chain([&self.fusion1, &self.fusion2])
            .collect()
    }
}

/// Builds a freshly initialised model. Layers are initialised from one seeded
/// stream in the order projections (canonical modality order), fusion1,
/// fusion2.
pub fn build_model(
    dims: &BTreeMap<Modality, usize>,
    combo: &ModalityCombo,
    target: Dimension,
    shape: &ModelShape,
    seed: u64,
) -> Result<FusionModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut projections = Vec::with_capacity(combo.len());
    for m in combo.modalities() {
        let input_dim = *dims
            .get(m)
            .ok_or_else(|| Error::Config(format!("modality {m} is not in the dataset manifest")))?;
        projections.push(DenseLayer::init(input_dim, shape.proj_dim, Activation::Relu, &mut rng)?);
    }
    let fusion1 = DenseLayer::init(combo.len() * shape.proj_dim, shape.hidden_dim, Activation::Relu, &mut rng)?;
    let fusion2 = DenseLayer::init(shape.hidden_dim, shape.num_classes, Activation::Identity, &mut rng)?;
    Ok(FusionModel {
        combo: combo.clone(),
        target,
        projections,
        fusion1,
        fusion2,
    })
}

impl FusionModel {
    pub fn num_classes(&self) -> usize {
        self.fusion2.output_dim()
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            proj_dim: self.fusion1.input_dim() / self.combo.len(),
            hidden_dim: self.fusion1.output_dim(),
            num_classes: self.num_classes(),
        }
    }

    /// Input dims of the projection layers, keyed by modality.
    pub fn input_dims(&self) -> BTreeMap<Modality, usize> {
        self.combo
            .modalities()
            .iter()
            .zip(&self.projections)
            .map(|(m, p)| (*m, p.input_dim()))
            .collect()
    }

    /// All layers: projections, fusion1, fusion2.
    pub fn layers(&self) -> Vec<&DenseLayer> {
        self.projections
            .iter()
            .chain([&self.fusion1, &self.fusion2])
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.projections
            .iter_mut()
            .chain([&mut self.fusion1, &mut self.fusion2])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    /// Stacks the features of `segments` into one `[batch, dim]` matrix per
    /// combo modality.
    pub fn gather_inputs(&self, segments: &[&LabeledSegment]) -> Result<Vec<Array2<f64>>> {
        self.combo
            .modalities()
            .iter()
            .zip(&self.projections)
            .map(|(m, proj)| {
                let dim = proj.input_dim();
                let mut out = Array2::zeros((segments.len(), dim));
                for (mut row, seg) in out.outer_iter_mut().zip(segments) {
                    let values = seg.features.get(m).ok_or_else(|| {
                        Error::Data(format!(
                            "segment {}#{} has no {m} features",
                            seg.window.movie_id, seg.window.index
                        ))
                    })?;
                    if values.len() != dim {
                        return Err(Error::Data(format!(
                            "segment {}#{}: {m} features have dim {}, model expects {dim}",
                            seg.window.movie_id,
                            seg.window.index,
                            values.len()
                        )));
                    }
                    row.iter_mut().zip(values).for_each(|(d, &v)| *d = v as f64);
                }
                Ok(out)
            })
            .collect()
    }

    pub fn forward_batch(&self, inputs: &[Array2<f64>]) -> Result<FusionActivations> {
        if inputs.len() != self.projections.len() {
            return Err(Error::invalid(format!(
                "{} input matrices for {} modalities",
                inputs.len(),
                self.projections.len()
            )));
        }
        let batch = inputs[0].nrows();
        let proj_dim = self.fusion1.input_dim() / self.projections.len();
        let mut concat = Array2::zeros((batch, self.fusion1.input_dim()));
        let mut proj_pre = Vec::with_capacity(inputs.len());
        for (k, ((x, layer), m)) in inputs.iter().zip(&self.projections).zip(self.combo.modalities()).enumerate() {
            if x.nrows() != batch {
                return Err(Error::invalid(format!("{m} input has {} rows, expected {batch}", x.nrows())));
            }
            let (pre, out) = layer
                .forward(x.view())
                .map_err(|e| Error::invalid(format!("{m} projection: {e}")))?;
            concat.slice_mut(s![.., k * proj_dim..(k + 1) * proj_dim]).assign(&out);
            proj_pre.push(pre);
        }
        let (hidden_pre, hidden) = self
            .fusion1
            .forward(concat.view())
            .map_err(|e| Error::invalid(format!("fusion1: {e}")))?;
        let (logits, _) = self
            .fusion2
            .forward(hidden.view())
            .map_err(|e| Error::invalid(format!("fusion2: {e}")))?;
        Ok(FusionActivations {
            proj_pre,
            concat,
            hidden_pre,
            hidden,
            logits,
        })
    }

    /// Backpropagates `dL/d(logits)` to every parameter.
    pub fn backward(&self, inputs: &[Array2<f64>], acts: &FusionActivations, grad_logits: Array2<f64>) -> FusionGrads {
        let (fusion2, grad_hidden) = self
            .fusion2
            .backward(acts.hidden.view(), acts.logits.view(), grad_logits.view());
        let (fusion1, grad_concat) =
            self.fusion1
                .backward(acts.concat.view(), acts.hidden_pre.view(), grad_hidden.view());
        let proj_dim = self.fusion1.input_dim() / self.projections.len();
        let projections = self
            .projections
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                let upstream = grad_concat.slice(s![.., k * proj_dim..(k + 1) * proj_dim]);
                layer.backward(inputs[k].view(), acts.proj_pre[k].view(), upstream).0
            })
            .collect();
        FusionGrads {
            projections,
            fusion1,
            fusion2,
        }
    }

    /// Mean temperature-softmax cross-entropy of a batch and its gradients.
    pub fn loss_and_grads(
        &self,
        inputs: &[Array2<f64>],
        targets: &[usize],
        temperature: f64,
    ) -> Result<(f64, FusionGrads)> {
        let acts = self.forward_batch(inputs)?;
        let (loss, grad_logits) = nn::softmax_cross_entropy_grad(acts.logits.view(), targets, temperature)?;
        Ok((loss, self.backward(inputs, &acts, grad_logits)))
    }

    /// SGD step on every layer; rejects non-finite gradients before touching
    /// any parameter.
    pub fn apply_sgd(&mut self, grads: &FusionGrads, learning_rate: f64, weight_decay: f64) -> Result<()> {
        if grads.projections.len() != self.projections.len() {
            return Err(Error::invalid("gradient set does not match model"));
        }
        if let Some(layer) = grads.layers().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
        for (layer, grad) in self.layers_mut().into_iter().zip(grads.layers()) {
            layer.apply_sgd(grad, learning_rate, weight_decay);
        }
        Ok(())
    }

    pub fn logits_batch(&self, segments: &[&LabeledSegment]) -> Result<Array2<f64>> {
        if segments.is_empty() {
            return Ok(Array2::zeros((0, self.num_classes())));
        }
        let inputs = self.gather_inputs(segments)?;
        Ok(self.forward_batch(&inputs)?.logits)
    }

    /// Logits for one segment.
    pub fn fuse_forward(&self, segment: &LabeledSegment) -> Result<Vec<f64>> {
        Ok(self.logits_batch(&[segment])?.row(0).to_vec())
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, segment: &LabeledSegment) -> Result<usize> {
        Ok(nn::argmax(&self.fuse_forward(segment)?))
    }

    pub fn predict_batch(&self, segments: &[&LabeledSegment]) -> Result<Vec<usize>> {
        let logits = self.logits_batch(segments)?;
        Ok(logits
            .axis_iter(Axis(0))
            .map(|row| nn::argmax(row.as_slice().expect("standard layout")))
            .collect())
    }

    fn tags(&self) -> Vec<u8> {
        let mut tags = vec![self.target.code(), self.combo.len() as u8];
        tags.extend(self.combo.modalities().iter().map(|m| m.code()));
        tags
    }

    pub fn encode(&self, echo: &str) -> Result<Vec<u8>> {
        nn::encode_checkpoint(&self.layers(), &self.tags(), echo)
    }

    /// Rebuilds a model from checkpoint bytes; returns it with the config echo.
    pub fn decode(bytes: &[u8]) -> Result<(FusionModel, String)> {
        let ck = nn::decode_checkpoint(bytes)?;
        let bad = |reason: String| Error::Data(format!("checkpoint is not a fusion model: {reason}"));
        let (&target_code, rest) = ck.tags.split_first().ok_or_else(|| bad("missing tags".into()))?;
        let target = Dimension::from_code(target_code).ok_or_else(|| bad(format!("target code {target_code}")))?;
        let (&n, codes) = rest.split_first().ok_or_else(|| bad("missing combo".into()))?;
        if codes.len() != n as usize || ck.layers.len() != n as usize + 2 {
            return Err(bad(format!("{} layers for {} modalities", ck.layers.len(), n)));
        }
        let mods = codes
            .iter()
            .map(|&c| Modality::from_code(c).ok_or_else(|| bad(format!("modality code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        let combo = ModalityCombo::new(mods)?;
        let mut layers = ck.layers;
        let fusion2 = layers.pop().expect("n + 2 layers");
        let fusion1 = layers.pop().expect("n + 2 layers");
        let proj_total: usize = layers.iter().map(DenseLayer::output_dim).sum();
        if proj_total != fusion1.input_dim() || fusion1.output_dim() != fusion2.input_dim() {
            return Err(bad("layer shapes do not chain".into()));
        }
        Ok((
            FusionModel {
                combo,
                target,
                projections: layers,
                fusion1,
                fusion2,
            },
            ck.echo,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, echo: &str) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode(echo)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(FusionModel, String)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        FusionModel::decode(&bytes)
    }
}
