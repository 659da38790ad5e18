use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Task};
use crate::embed::{attach_prompts, coords_matrix, strip_prompts, OrderPromptBank, PositionalMap};
use crate::local::LocalAggregator;
use crate::nn::{join, relu, Linear, Params, ResidualBlock, RmsNorm, Visit, VisitMut};
use crate::pointset::{canonical_tiebreak_order, normalize_unit_cube, PointCloud, Point3};
use crate::sample::{
    farthest_point_sample, interpolate_features, knn, FpsStart, DEFAULT_INTERPOLATION_K,
};
use crate::serialize::serialize_coords;
use crate::ssm::{BiMamba, BlockConfig};
use crate::{Error, Result};

/// One encoder stage: local aggregation followed by bidirectional Mamba layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub local: LocalAggregator<f32>,
    pub pos: PositionalMap<f32>,
    pub layers: Vec<BiMamba<f32>>,
}

impl Params<f32> for Stage {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, f32>) {
        self.local.visit(&join(prefix, "local"), f);
        self.pos.visit(&join(prefix, "pos"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layers.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, f32>) {
        self.local.visit_mut(&join(prefix, "local"), f);
        self.pos.visit_mut(&join(prefix, "pos"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
    }
}

/// Max-pool, hidden layer with ReLU, logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationHead {
    pub fc1: Linear<f32>,
    pub fc2: Linear<f32>,
}

/// One upsampling step of the segmentation decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage {
    pub fc1: Linear<f32>,
    pub norm1: RmsNorm<f32>,
    pub fc2: Linear<f32>,
    pub norm2: RmsNorm<f32>,
}

impl DecoderStage {
    fn forward(&self, x: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut h = self.fc1.forward(x);
        self.norm1.forward_inplace(&mut h);
        h.mapv_inplace(relu);
        let mut h = self.fc2.forward(h.view());
        self.norm2.forward_inplace(&mut h);
        h.mapv_inplace(relu);
        h
    }
}

impl Params<f32> for DecoderStage {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, f32>) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, f32>) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
    }
}

/// Interpolating decoder; `ups[s]` lifts stage `s + 1` features onto stage `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationDecoder {
    pub ups: Vec<DecoderStage>,
    pub classifier: Linear<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Classification(ClassificationHead),
    Segmentation(SegmentationDecoder),
}

impl Params<f32> for Head {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, f32>) {
        match self {
            Head::Classification(h) => {
                h.fc1.visit(&join(prefix, "fc1"), f);
                h.fc2.visit(&join(prefix, "fc2"), f);
            }
            Head::Segmentation(d) => {
                for (i, u) in d.ups.iter().enumerate() {
                    u.visit(&join(prefix, &format!("ups.{i}")), f);
                }
                d.classifier.visit(&join(prefix, "classifier"), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, f32>) {
        match self {
            Head::Classification(h) => {
                h.fc1.visit_mut(&join(prefix, "fc1"), f);
                h.fc2.visit_mut(&join(prefix, "fc2"), f);
            }
            Head::Segmentation(d) => {
                for (i, u) in d.ups.iter_mut().enumerate() {
                    u.visit_mut(&join(prefix, &format!("ups.{i}")), f);
                }
                d.classifier.visit_mut(&join(prefix, "classifier"), f);
            }
        }
    }
}

/// The four-stage point cloud encoder with its task head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub stem: Linear<f32>,
    pub stem_block: ResidualBlock<f32>,
    pub stages: Vec<Stage>,
    pub prompts: OrderPromptBank<f32>,
    pub head: Head,
}

/// Encoder outputs in canonical point order.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    /// All input points after unit-cube normalization, canonically sorted.
    pub coords: Vec<Point3>,
    /// `order[i]` is the input index of canonical point `i`.
    pub order: Vec<usize>,
    pub stage_coords: Vec<Vec<Point3>>,
    pub stage_features: Vec<Array2<f32>>,
}

/// Deterministically initializes every parameter from `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths: Vec<usize> = config.stages.iter().map(|s| s.channels).collect();
    let d0 = widths[0];
    let stem = Linear::new(&mut rng, 3 + config.input_features, d0, true);
    let stem_block = ResidualBlock::new(&mut rng, d0);
    let mut stages = Vec::with_capacity(config.stages.len());
    let mut prev = d0;
    for sc in &config.stages {
        let d = sc.channels;
        let block = BlockConfig {
            expand: config.expand,
            d_state: config.d_state,
            conv_width: config.conv_width,
            ..BlockConfig::new(d)
        };
        let local = LocalAggregator::new(&mut rng, prev, d, config.sigma_mode);
        let pos = PositionalMap::new(&mut rng, d);
        let layers = (0..sc.num_layers)
            .map(|_| {
                let mut l = BiMamba::new(&mut rng, &block);
                l.fwd.ssm.mode = config.scan_mode;
                l.bwd.ssm.mode = config.scan_mode;
                l
            })
            .collect();
        stages.push(Stage { local, pos, layers });
        prev = d;
    }
    let prompts = OrderPromptBank::new(&mut rng, config.n_p, config.prompt_width, &config.layer_orders(), &widths);
    let head = match config.task {
        Task::Classification => Head::Classification(ClassificationHead {
            fc1: Linear::new(&mut rng, prev, config.head_hidden, true),
            fc2: Linear::new(&mut rng, config.head_hidden, config.num_classes, true),
        }),
        Task::PartSegmentation => {
            let ups = (0..widths.len() - 1)
                .map(|s| DecoderStage {
                    fc1: Linear::new(&mut rng, widths[s + 1] + widths[s], widths[s], true),
                    norm1: RmsNorm::new(widths[s]),
                    fc2: Linear::new(&mut rng, widths[s], widths[s], true),
                    norm2: RmsNorm::new(widths[s]),
                })
                .collect();
            Head::Segmentation(SegmentationDecoder {
                ups,
                classifier: Linear::new(&mut rng, d0, config.num_classes, true),
            })
        }
    };
    Ok(Model {
        config: config.clone(),
        stem,
        stem_block,
        stages,
        prompts,
        head,
    })
}

impl Model {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        build_model(config, config.seed)
    }

    /// Normalization, canonical ordering, stem and every encoder stage.
    pub fn encode(&self, cloud: &PointCloud) -> Result<Encoding> {
        let cfg = &self.config;
        let schedule = cfg.schedule(cloud.len())?;
        if cloud.feature_channels() != cfg.input_features {
            return Err(Error::InvalidInput(format!(
                "the model expects {} feature channels, the cloud has {}",
                cfg.input_features,
                cloud.feature_channels()
            )));
        }
        let normalized = normalize_unit_cube(cloud.clone())?;
        let order = canonical_tiebreak_order(normalized.coords()).into_vec();
        let canon = normalized.cloud.select(&order)?;
        let coords = canon.coords().to_vec();

        let base: Vec<usize> = if coords.len() > schedule[0] {
            farthest_point_sample(&coords, schedule[0], FpsStart::DeterministicMin)?
        } else {
            (0..coords.len()).collect()
        };
        let mut cur_coords: Vec<Point3> = base.iter().map(|&i| coords[i]).collect();
        let mut input = coords_matrix::<f32>(&cur_coords);
        if let Some(f) = canon.features() {
            let extra = Array2::from_shape_fn((base.len(), f.ncols()), |(r, c)| f[[base[r], c]] as f32);
            input = concatenate![Axis(1), input, extra];
        }
        let stem = self.stem.forward(input.view());
        let mut feats = self.stem_block.forward(stem.view());

        let mut stage_coords = Vec::with_capacity(self.stages.len());
        let mut stage_features = Vec::with_capacity(self.stages.len());
        for (s, (stage, sc)) in self.stages.iter().zip(&cfg.stages).enumerate() {
            let centers = if s == 0 || schedule[s] == cur_coords.len() {
                (0..cur_coords.len()).collect()
            } else {
                farthest_point_sample(&cur_coords, schedule[s], FpsStart::DeterministicMin)?
            };
            let center_coords: Vec<Point3> = centers.iter().map(|&i| cur_coords[i]).collect();
            let mut nbhd = knn(&center_coords, &cur_coords, sc.k_neighbors.min(cur_coords.len()))?;
            nbhd.centers = centers;
            feats = stage.local.forward(feats.view(), &nbhd)?;
            cur_coords = center_coords;
            let pos = stage.pos.forward(&cur_coords);
            for (layer, &kind) in stage.layers.iter().zip(&sc.serializations) {
                let perm = serialize_coords(&cur_coords, cfg.order(kind), cfg.grid_n)?;
                let tokens = (&feats + &pos).select(Axis(0), perm.as_slice());
                let seq = attach_prompts(tokens.view(), kind, &self.prompts, s)?;
                let out = strip_prompts(layer.forward(seq.view()).view(), cfg.n_p)?;
                for (row, &dst) in out.outer_iter().zip(perm.as_slice()) {
                    feats.row_mut(dst).assign(&row);
                }
            }
            stage_coords.push(cur_coords.clone());
            stage_features.push(feats.clone());
        }
        Ok(Encoding { coords, order, stage_coords, stage_features })
    }

    /// Channel-wise max over the final stage's tokens.
    pub fn pooled_features(&self, cloud: &PointCloud) -> Result<Array1<f32>> {
        let enc = self.encode(cloud)?;
        Ok(max_pool(enc.stage_features.last().expect("at least one stage").view()))
    }

    pub fn forward_classification(&self, cloud: &PointCloud) -> Result<Array1<f32>> {
        let Head::Classification(head) = &self.head else {
            return Err(Error::Config("the model was built for segmentation".into()));
        };
        let pooled = self.pooled_features(cloud)?;
        let x = pooled.insert_axis(Axis(0));
        let mut h = head.fc1.forward(x.view());
        h.mapv_inplace(relu);
        Ok(head.fc2.forward(h.view()).row(0).to_owned())
    }

    /// Per-point logits in input order.
    pub fn forward_segmentation(&self, cloud: &PointCloud) -> Result<Array2<f32>> {
        let Head::Segmentation(dec) = &self.head else {
            return Err(Error::Config("the model was built for classification".into()));
        };
        let enc = self.encode(cloud)?;
        let last = enc.stage_features.len() - 1;
        let mut cur = enc.stage_features[last].clone();
        for s in (0..last).rev() {
            let up = interpolate_features(
                &enc.stage_coords[s],
                &enc.stage_coords[s + 1],
                cur.view(),
                DEFAULT_INTERPOLATION_K,
            )?;
            let cat = concatenate![Axis(1), up, enc.stage_features[s]];
            cur = dec.ups[s].forward(cat.view());
        }
        let full = if enc.stage_coords[0].len() == enc.coords.len() {
            cur
        } else {
            interpolate_features(&enc.coords, &enc.stage_coords[0], cur.view(), DEFAULT_INTERPOLATION_K)?
        };
        let logits = dec.classifier.forward(full.view());
        let mut out = Array2::zeros(logits.dim());
        for (row, &dst) in logits.outer_iter().zip(&enc.order) {
            out.row_mut(dst).assign(&row);
        }
        Ok(out)
    }

    pub fn count_parameters(&self) -> usize {
        self.num_params()
    }

    /// Parameter count of each top-level component.
    pub fn parameter_breakdown(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        self.visit("", &mut |name, _, data| {
            let parts: Vec<&str> = name.split('.').collect();
            let group = match parts[0] {
                "stages" => format!("stages.{}.{}", parts[1], parts[2]),
                other => other.to_string(),
            };
            match out.last_mut() {
                Some((g, n)) if *g == group => *n += data.len(),
                _ => out.push((group, data.len())),
            }
        });
        out
    }

    /// Analytic multiply-accumulate count of one forward pass on `n_points`.
    pub fn estimate_flops(&self, n_points: usize) -> u64 {
        let cfg = &self.config;
        let schedule: Vec<usize> = cfg.stages.iter().map(|s| s.points.min(n_points)).collect();
        let mut macs = self.stem.macs(schedule[0]) + self.stem_block.macs(schedule[0]);
        for (s, (stage, sc)) in self.stages.iter().zip(&cfg.stages).enumerate() {
            let m = schedule[s];
            let tokens = m + 2 * cfg.n_p;
            macs += stage.local.macs(m, sc.k_neighbors);
            macs += stage.pos.map.macs(m);
            macs += self.prompts.projections[s].macs(cfg.n_p) * stage.layers.len() as u64;
            macs += stage.layers.iter().map(|l| l.macs(tokens)).sum::<u64>();
        }
        macs += match &self.head {
            Head::Classification(h) => h.fc1.macs(1) + h.fc2.macs(1),
            Head::Segmentation(d) => {
                let ups: u64 = d
                    .ups
                    .iter()
                    .enumerate()
                    .map(|(s, u)| u.fc1.macs(schedule[s]) + u.fc2.macs(schedule[s]))
                    .sum();
                ups + d.classifier.macs(n_points)
            }
        };
        macs
    }
}

fn max_pool(x: ArrayView2<'_, f32>) -> Array1<f32> {
    let mut out = Array1::from_elem(x.ncols(), f32::NEG_INFINITY);
    for row in x.outer_iter() {
        for (o, &v) in out.iter_mut().zip(row) {
            if v > *o {
                *o = v;
            }
        }
    }
    out
}

impl Params<f32> for Model {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, f32>) {
        self.stem.visit(&join(prefix, "stem"), f);
        self.stem_block.visit(&join(prefix, "stem_block"), f);
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stages.{i}")), f);
        }
        self.prompts.visit(&join(prefix, "prompts"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, f32>) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        self.stem_block.visit_mut(&join(prefix, "stem_block"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stages.{i}")), f);
        }
        self.prompts.visit_mut(&join(prefix, "prompts"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

pub fn forward_classification(model: &Model, cloud: &PointCloud) -> Result<Array1<f32>> {
    model.forward_classification(cloud)
}

pub fn forward_segmentation(model: &Model, cloud: &PointCloud) -> Result<Array2<f32>> {
    model.forward_segmentation(cloud)
}

pub fn count_parameters(model: &Model) -> usize {
    model.count_parameters()
}

pub fn estimate_flops(model: &Model, n_points: usize) -> u64 {
    model.estimate_flops(n_points)
}
