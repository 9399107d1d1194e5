//! Compound-scaled convolutional backbone family.
//!
//! One scaling coefficient widens every stage and deepens the stack
//! uniformly; `b0` is the base member and the one the default registry
//! ships weights for. The backbone is resolution-agnostic: global average
//! pooling reduces whatever spatial size remains to a fixed-width feature
//! vector.

use serde::{Deserialize, Serialize};

use super::spec::{LayerEntry, LayerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneArch {
    pub id: String,
    pub stem_width: usize,
    pub block_widths: Vec<usize>,
}

const BASE_STEM: usize = 16;
const BASE_BLOCKS: &[usize] = &[24, 40, 80];
const WIDTH_FACTOR: f64 = 1.2;

fn round4(w: f64) -> usize {
    (((w / 4.0).round() as usize) * 4).max(4)
}

impl BackboneArch {
    /// Member `phi` of the family: widths scale by 1.2^phi, depth grows by
    /// one block per step.
    pub fn scaled(phi: usize) -> Self {
        let f = WIDTH_FACTOR.powi(phi as i32);
        let mut block_widths: Vec<usize> =
            BASE_BLOCKS.iter().map(|&w| round4(w as f64 * f)).collect();
        for _ in 0..phi {
            let last = *block_widths.last().unwrap();
            block_widths.push(round4(last as f64 * WIDTH_FACTOR));
        }
        Self {
            id: format!("cs-b{phi}"),
            stem_width: round4(BASE_STEM as f64 * f),
            block_widths,
        }
    }

    /// Feature vector width after global average pooling.
    pub fn feature_dim(&self) -> usize {
        *self.block_widths.last().unwrap()
    }

    /// Number of freeze-policy blocks (stem plus conv blocks).
    pub fn num_blocks(&self) -> usize {
        1 + self.block_widths.len()
    }

    /// Block names in order, stem first.
    pub fn block_names(&self) -> Vec<String> {
        let mut names = vec!["stem".to_string()];
        for i in 0..self.block_widths.len() {
            names.push(format!("block{}", i + 1));
        }
        names
    }

    /// Each block halves the spatial side once (via its pool).
    pub fn min_input_side(&self) -> usize {
        4 << self.block_widths.len()
    }

    /// Backbone layer entries: stem Conv/BN/ReLU, then per block
    /// Conv/BN/ReLU/MaxPool.
    pub fn layers(&self) -> Vec<LayerEntry> {
        let mut layers = Vec::new();
        let push = |layers: &mut Vec<LayerEntry>, id: String, block: &str, spec: LayerSpec| {
            layers.push(LayerEntry {
                id,
                block: block.to_string(),
                trainable: true,
                spec,
            });
        };
        push(
            &mut layers,
            "stem_conv".into(),
            "stem",
            LayerSpec::Conv {
                in_ch: 3,
                out_ch: self.stem_width,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
        );
        push(
            &mut layers,
            "stem_bn".into(),
            "stem",
            LayerSpec::BatchNorm {
                channels: self.stem_width,
            },
        );
        push(&mut layers, "stem_relu".into(), "stem", LayerSpec::Relu);

        let mut in_ch = self.stem_width;
        for (i, &out_ch) in self.block_widths.iter().enumerate() {
            let b = format!("block{}", i + 1);
            push(
                &mut layers,
                format!("{b}_conv"),
                &b,
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
            );
            push(
                &mut layers,
                format!("{b}_bn"),
                &b,
                LayerSpec::BatchNorm { channels: out_ch },
            );
            push(&mut layers, format!("{b}_relu"), &b, LayerSpec::Relu);
            push(&mut layers, format!("{b}_pool"), &b, LayerSpec::MaxPool { size: 2 });
            in_ch = out_ch;
        }
        layers
    }

    /// Parameter names the backbone owns (weights and batch-norm state).
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut conv_bn = |conv: String, bn: String, _ch: usize| {
            names.push(format!("{conv}.weight"));
            names.push(format!("{conv}.bias"));
            names.push(format!("{bn}.gamma"));
            names.push(format!("{bn}.beta"));
            names.push(format!("{bn}.running_mean"));
            names.push(format!("{bn}.running_var"));
        };
        conv_bn("stem_conv".into(), "stem_bn".into(), self.stem_width);
        for (i, &w) in self.block_widths.iter().enumerate() {
            let b = format!("block{}", i + 1);
            conv_bn(format!("{b}_conv"), format!("{b}_bn"), w);
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b0_is_base() {
        let b0 = BackboneArch::scaled(0);
        assert_eq!(b0.id, "cs-b0");
        assert_eq!(b0.stem_width, 16);
        assert_eq!(b0.block_widths, vec![24, 40, 80]);
        assert_eq!(b0.feature_dim(), 80);
        assert_eq!(b0.num_blocks(), 4);
    }

    #[test]
    fn scaling_is_uniform_in_width_and_depth() {
        let b0 = BackboneArch::scaled(0);
        let b1 = BackboneArch::scaled(1);
        assert_eq!(b1.block_widths.len(), b0.block_widths.len() + 1);
        assert!(b1.stem_width > b0.stem_width);
        for (w1, w0) in b1.block_widths.iter().zip(&b0.block_widths) {
            assert!(w1 > w0);
        }
    }

    #[test]
    fn layers_and_param_names_agree() {
        let arch = BackboneArch::scaled(0);
        let layers = arch.layers();
        assert_eq!(layers.len(), 3 + 4 * arch.block_widths.len());
        let names = arch.param_names();
        assert_eq!(names.len(), 6 * (1 + arch.block_widths.len()));
        assert!(names.contains(&"block3_bn.running_var".to_string()));
    }
}
