//! APIR-Net: a constant-resolution convolutional network fitted to the
//! sampled k-space of a single scan.
//!
//! The pattern-masked k-space, with real and imaginary parts stacked as `2C`
//! features, goes through a 5x5 linear layer, a run of 3x3 ReLU layers of
//! decreasing width and a final 5x5 linear layer back to `2C` features. The
//! loss compares the output with the measured data at every sampled position,
//! so ACS samples outside the pattern act as training targets. Training runs
//! over centered k-space regions of increasing size, each level starting from
//! the parameters of the previous one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{apply_mask, denormalize, normalize, reconstruct_image, ComplexGrid, Domain, NormalizationRecord, RealGrid};
use crate::mask::SamplingMasks;
use crate::nn::{masked_mse_grad, Activation, AdamConfig, AdamState, ConvSpec, Network, Tape, Tensor4};

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub n_coils: usize,
    /// Output widths of the first layer and of each ReLU layer, strictly decreasing.
    pub widths: Vec<usize>,
    #[serde(default = "default_outer")]
    pub outer_kernel: usize,
    #[serde(default = "default_inner")]
    pub inner_kernel: usize,
    /// Adds the network input to its output.
    #[serde(default)]
    pub residual: bool,
}

fn default_outer() -> usize {
    5
}

fn default_inner() -> usize {
    3
}

impl ArchitectureSpec {
    pub fn new(n_coils: usize) -> Self {
        ArchitectureSpec { n_coils, widths: vec![64, 48, 32, 24], outer_kernel: 5, inner_kernel: 3, residual: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_coils == 0 {
            return Err(Error::Spec("architecture needs at least one coil".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Spec(format!("widths must be positive and non-empty, got {:?}", self.widths)));
        }
        if self.widths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Spec(format!("widths must be strictly decreasing, got {:?}", self.widths)));
        }
        if self.outer_kernel % 2 == 0 || self.inner_kernel % 2 == 0 {
            return Err(Error::Spec("kernel sizes must be odd".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<ConvSpec> {
        let io = 2 * self.n_coils;
        let mut layers = vec![ConvSpec {
            in_features: io,
            out_features: self.widths[0],
            kernel: self.outer_kernel,
            activation: Activation::Linear,
        }];
        for w in self.widths.windows(2) {
            layers.push(ConvSpec {
                in_features: w[0],
                out_features: w[1],
                kernel: self.inner_kernel,
                activation: Activation::Relu,
            });
        }
        layers.push(ConvSpec {
            in_features: *self.widths.last().unwrap(),
            out_features: io,
            kernel: self.outer_kernel,
            activation: Activation::Linear,
        });
        layers
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(ConvSpec::param_count).sum()
    }
}

/// Network with every weight and bias drawn uniformly from `[-0.05, 0.05]`.
pub fn build_network(arch: &ArchitectureSpec, seed: u64) -> Result<Network> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = arch.param_count();
    let params = (0..n).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect();
    Network::new(arch.layers(), params, arch.residual)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Centered phase-encode region `(pe1, pe2)`.
    pub region: (usize, usize),
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub levels: Vec<Level>,
}

impl LevelSchedule {
    /// Three levels over a 64x64 grid: regions 16, 32, 64 with rates 1e-3, 1e-4, 5e-5.
    pub fn desk() -> Self {
        LevelSchedule::from_rows(&[(16, 1e-3, 2000), (32, 1e-4, 1000), (64, 5e-5, 500)])
    }

    /// The four-level phantom schedule for a 192 grid.
    pub fn phantom_192() -> Self {
        LevelSchedule::from_rows(&[(32, 1e-3, 10000), (48, 1e-4, 5000), (96, 5e-5, 1000), (192, 5e-5, 500)])
    }

    fn from_rows(rows: &[(usize, f64, usize)]) -> Self {
        LevelSchedule {
            levels: rows
                .iter()
                .map(|&(n, learning_rate, epochs)| Level { region: (n, n), learning_rate, epochs })
                .collect(),
        }
    }

    /// Regions rescaled from the schedule's final region to `shape`; rates and epochs kept.
    pub fn scaled_to(&self, shape: (usize, usize)) -> Result<Self> {
        let last = self.levels.last().ok_or_else(|| Error::Spec("schedule has no levels".into()))?.region;
        let scale = |v: usize, from: usize, to: usize| ((v * to + from / 2) / from).clamp(1, to);
        Ok(LevelSchedule {
            levels: self
                .levels
                .iter()
                .map(|l| Level {
                    region: (scale(l.region.0, last.0, shape.0), scale(l.region.1, last.1, shape.1)),
                    ..*l
                })
                .collect(),
        })
    }

    /// Same regions and rates, epochs multiplied by `factor` (at least one epoch per level).
    pub fn with_epoch_factor(&self, factor: f64) -> Self {
        LevelSchedule {
            levels: self
                .levels
                .iter()
                .map(|l| Level { epochs: ((l.epochs as f64 * factor).round() as usize).max(1), ..*l })
                .collect(),
        }
    }

    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        let last = self.levels.last().ok_or_else(|| Error::Spec("schedule has no levels".into()))?;
        if last.region != shape {
            return Err(Error::Spec(format!("last level region {:?} must equal the grid {:?}", last.region, shape)));
        }
        for (l, level) in self.levels.iter().enumerate() {
            if level.region.0 == 0 || level.region.1 == 0 || level.region.0 > shape.0 || level.region.1 > shape.1 {
                return Err(Error::Spec(format!("level {} region {:?} outside grid {:?}", l + 1, level.region, shape)));
            }
            if !(level.learning_rate.is_finite() && level.learning_rate > 0.0) {
                return Err(Error::Spec(format!("level {} learning rate must be > 0", l + 1)));
            }
            if l > 0 {
                let prev = self.levels[l - 1].region;
                if level.region.0 < prev.0 || level.region.1 < prev.1 {
                    return Err(Error::Spec(format!("level {} region shrinks from {:?} to {:?}", l + 1, prev, level.region)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    /// Clear the Adam moments at the start of every level.
    #[serde(default)]
    pub reset_optimizer: bool,
    /// Replace the network output by the measured data at sampled positions.
    #[serde(default)]
    pub hard_dc: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainOptions {
    pub fn seeded(seed: u64) -> Self {
        TrainOptions { seed, reset_optimizer: false, hard_dc: false, adam: AdamConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: Level,
    /// Loss before each update.
    pub losses: Vec<f64>,
    /// Loss of the parameters the level ended with.
    pub final_loss: f64,
    #[serde(skip)]
    pub checkpoint: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub arch: ArchitectureSpec,
    pub schedule: LevelSchedule,
    pub options: TrainOptions,
    pub levels: Vec<LevelRecord>,
    pub network: Network,
    pub normalization: NormalizationRecord,
    pub wall_time_s: f64,
}

impl TrainRun {
    /// Network holding the parameters reached at the end of level `l` (0-based).
    pub fn network_at(&self, l: usize) -> Result<Network> {
        let rec = self.levels.get(l).ok_or_else(|| Error::Spec(format!("no level {}", l + 1)))?;
        Network::new(self.arch.layers(), rec.checkpoint.clone(), self.arch.residual)
    }

    /// First recorded loss of the run and the loss it ended with.
    pub fn loss_span(&self) -> Option<(f64, f64)> {
        let first = self.levels.iter().find_map(|l| l.losses.first().copied())?;
        Some((first, self.levels.last()?.final_loss))
    }
}

/// `2C` real features: real parts of every coil, then imaginary parts.
pub fn stack(kspace: &ComplexGrid) -> Result<Tensor4> {
    let dims = kspace.dims();
    if !dims.is_2d() {
        return Err(Error::Dimension(format!("the network takes 2D k-space, got {dims:?}")));
    }
    let c = kspace.channels();
    let plane = dims.plane();
    let mut data = vec![0.0; 2 * c * plane];
    for ch in 0..c {
        for (p, z) in kspace.channel(ch).iter().enumerate() {
            data[ch * plane + p] = z.re;
            data[(c + ch) * plane + p] = z.im;
        }
    }
    Tensor4::from_vec([1, 2 * c, dims.pe1, dims.pe2], data)
}

/// Inverse of [`stack`].
pub fn unstack(t: &Tensor4) -> Result<ComplexGrid> {
    let [_, f, h, w] = t.shape();
    if f % 2 != 0 {
        return Err(Error::Dimension(format!("cannot split {f} features into re/im halves")));
    }
    let c = f / 2;
    let plane = h * w;
    let d = t.data();
    let data = (0..c * plane)
        .map(|k| {
            let (ch, p) = (k / plane, k % plane);
            Complex64::new(d[ch * plane + p], d[(c + ch) * plane + p])
        })
        .collect();
    ComplexGrid::from_vec(c, crate::Dims::new_2d(h, w), Domain::Kspace, data)
}

fn check_channels(net: &Network, kspace: &ComplexGrid) -> Result<()> {
    if net.in_features() != 2 * kspace.channels() {
        return Err(Error::Dimension(format!(
            "network built for {} coils, data has {}",
            net.in_features() / 2,
            kspace.channels()
        )));
    }
    Ok(())
}

/// Network output for the pattern-masked input, on every k-space position.
/// With `hard_dc` the sampled positions are then overwritten by the measured data.
pub fn forward_complete(net: &Network, kspace: &ComplexGrid, masks: &SamplingMasks, hard_dc: bool) -> Result<ComplexGrid> {
    kspace.expect_domain(Domain::Kspace)?;
    check_channels(net, kspace)?;
    let input = stack(&apply_mask(kspace, &masks.m_pattern)?)?;
    let out = unstack(&net.forward(&input)?)?;
    if hard_dc {
        crate::grappa::merge(&apply_mask(kspace, &masks.m_sampled)?, &out, masks)
    } else {
        Ok(out)
    }
}

/// Runs `level.epochs` Adam steps of the masked loss on the centered region.
/// Returns the per-epoch losses and the loss after the last update.
pub fn train_level(
    net: &mut Network,
    adam: &mut AdamState,
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    level: &Level,
    level_index: usize,
) -> Result<(Vec<f64>, f64)> {
    kspace.expect_domain(Domain::Kspace)?;
    check_channels(net, kspace)?;
    let (r1, r2) = level.region;
    let crop = kspace.crop_center(r1, r2)?;
    let cm = masks.crop_center(r1, r2)?;
    if cm.m_sampled.count() == 0 {
        return Err(Error::Degenerate(format!("level {} region {:?} holds no sampled positions", level_index + 1, level.region)));
    }
    adam.set_learning_rate(level.learning_rate)?;
    let input = stack(&apply_mask(&crop, &cm.m_pattern)?)?;
    let target = stack(&crop)?;
    let mut tape = Tape::new();
    let mut losses = Vec::with_capacity(level.epochs);
    let diverged = |epoch: usize, loss: f64| Error::Divergence { level: level_index + 1, epoch, loss };
    for epoch in 0..level.epochs {
        let out = net.forward_recorded(&input, &mut tape)?;
        let (loss, d_out) = masked_mse_grad(&out, &target, &cm.m_sampled)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, loss));
        }
        losses.push(loss);
        let (grads, _) = net.backward(&tape, &d_out, false)?;
        adam.step(net.params_mut(), &grads)?;
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(diverged(epoch, f64::NAN));
        }
    }
    let final_loss = crate::nn::masked_mse_loss(&net.forward(&input)?, &target, &cm.m_sampled)?;
    if !final_loss.is_finite() {
        return Err(diverged(level.epochs, final_loss));
    }
    Ok((losses, final_loss))
}

/// Normalizes, builds the network and trains every level in turn.
pub fn hierarchical_train(
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    arch: &ArchitectureSpec,
    schedule: &LevelSchedule,
    options: TrainOptions,
) -> Result<TrainRun> {
    let started = Instant::now();
    kspace.expect_domain(Domain::Kspace)?;
    let dims = kspace.dims();
    if !dims.is_2d() {
        return Err(Error::Dimension(format!("the network takes 2D k-space, got {dims:?}")));
    }
    if arch.n_coils != kspace.channels() {
        return Err(Error::Dimension(format!("architecture for {} coils, data has {}", arch.n_coils, kspace.channels())));
    }
    schedule.validate((dims.pe1, dims.pe2))?;
    let acquired = apply_mask(kspace, &masks.m_sampled)?;
    let (normalized, normalization) = normalize(&acquired, &masks.m_sampled)?;
    let mut net = build_network(arch, options.seed)?;
    let first_rate = schedule.levels[0].learning_rate;
    let mut adam = AdamState::new(net.param_count(), first_rate, options.adam)?;
    let mut levels = Vec::with_capacity(schedule.levels.len());
    for (l, level) in schedule.levels.iter().enumerate() {
        if options.reset_optimizer {
            adam.reset();
        }
        let (losses, final_loss) = train_level(&mut net, &mut adam, &normalized, masks, level, l)?;
        levels.push(LevelRecord { level: *level, losses, final_loss, checkpoint: net.params().to_vec() });
    }
    Ok(TrainRun {
        arch: arch.clone(),
        schedule: schedule.clone(),
        options,
        levels,
        network: net,
        normalization,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Completed k-space and image from a trained network, in the units of the raw data.
pub fn complete_with(net: &Network, kspace: &ComplexGrid, masks: &SamplingMasks, run: &TrainRun) -> Result<(ComplexGrid, RealGrid)> {
    let acquired = apply_mask(kspace, &masks.m_sampled)?;
    let scaled = denormalize(&acquired, NormalizationRecord { scale: 1.0 / run.normalization.scale });
    let out = forward_complete(net, &scaled, masks, run.options.hard_dc)?;
    let completed = denormalize(&out, run.normalization);
    let image = reconstruct_image(&completed)?;
    Ok((completed, image))
}

/// Train on the scan, then complete it with the final parameters.
pub fn apirnet_reconstruct(
    kspace: &ComplexGrid,
    masks: &SamplingMasks,
    arch: &ArchitectureSpec,
    schedule: &LevelSchedule,
    options: TrainOptions,
) -> Result<(ComplexGrid, RealGrid, TrainRun)> {
    let run = hierarchical_train(kspace, masks, arch, schedule, options)?;
    let (completed, image) = complete_with(&run.network, kspace, masks, &run)?;
    Ok((completed, image, run))
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    layers: Vec<ConvSpec>,
    residual: bool,
    param_count: usize,
}

/// Writes the layer descriptor to the JSON sidecar and the parameters as little-endian f64.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let header = CheckpointHeader { layers: net.layers().to_vec(), residual: net.residual(), param_count: net.param_count() };
    let sidecar = crate::io::sidecar_path(path);
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::format(&sidecar, e))?;
    fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    let blob: Vec<u8> = net.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, blob).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let sidecar = crate::io::sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::format(&sidecar, e))?;
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    if blob.len() != header.param_count * 8 {
        return Err(Error::format(path, format!("expected {} bytes, found {}", header.param_count * 8, blob.len())));
    }
    let params = blob.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Network::new(header.layers, params, header.residual)
}

/// JSON summary of a run: architecture, schedule, options, normalization, losses, timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub arch: ArchitectureSpec,
    pub schedule: LevelSchedule,
    pub options: TrainOptions,
    pub normalization: NormalizationRecord,
    pub levels: Vec<LevelRecord>,
    pub wall_time_s: f64,
    /// Checkpoint file per level, relative to the manifest.
    pub checkpoints: Vec<String>,
}

/// Writes `run.json` and `level<k>.f64` checkpoints into `dir`.
pub fn save_run(run: &TrainRun, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut checkpoints = Vec::new();
    for (l, rec) in run.levels.iter().enumerate() {
        let name = format!("level{}.f64", l + 1);
        let net = Network::new(run.arch.layers(), rec.checkpoint.clone(), run.arch.residual)?;
        save_checkpoint(&net, &dir.join(&name))?;
        checkpoints.push(name);
    }
    let manifest = RunManifest {
        arch: run.arch.clone(),
        schedule: run.schedule.clone(),
        options: run.options,
        normalization: run.normalization,
        levels: run.levels.clone(),
        wall_time_s: run.wall_time_s,
        checkpoints,
    };
    let path = dir.join("run.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use crate::mask::{make_masks, MaskParams};
    use crate::nn::conv::{conv2d_periodic, ConvLayer};

    fn small_arch(c: usize) -> ArchitectureSpec {
        ArchitectureSpec { n_coils: c, widths: vec![6, 4], outer_kernel: 5, inner_kernel: 3, residual: false }
    }

    #[test]
    fn default_layout_and_count() {
        let arch = ArchitectureSpec::new(8);
        let layers = arch.layers();
        assert_eq!(layers.len(), 5);
        assert_eq!(layers[0].in_features, 16);
        assert_eq!(layers[4].out_features, 16);
        assert_eq!(layers[0].kernel, 5);
        assert_eq!(layers[4].kernel, 5);
        assert!(layers[1..4].iter().all(|l| l.kernel == 3 && l.activation == Activation::Relu));
        // independent count: sum of k^2 * in * out + out
        let oracle = [(5, 16, 64), (3, 64, 48), (3, 48, 32), (3, 32, 24), (5, 24, 16)]
            .iter()
            .map(|&(k, i, o)| k * k * i * o + o)
            .sum::<usize>();
        assert_eq!(oracle, 83768);
        assert_eq!(arch.param_count(), oracle);
        assert_eq!(build_network(&arch, 1).unwrap().param_count(), oracle);
    }

    #[test]
    fn initialization_is_bounded_and_seeded() {
        let arch = ArchitectureSpec::new(2);
        let a = build_network(&arch, 5).unwrap();
        assert!(a.params().iter().all(|p| p.abs() <= INIT_RANGE));
        assert_eq!(a, build_network(&arch, 5).unwrap());
        assert_ne!(a, build_network(&arch, 6).unwrap());
        let bad = ArchitectureSpec { widths: vec![8, 8], ..arch };
        assert!(matches!(build_network(&bad, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn stack_round_trip() {
        let data = (0..2 * 12).map(|k| Complex64::new(k as f64, -(k as f64) * 0.5)).collect();
        let g = ComplexGrid::from_vec(2, Dims::new_2d(3, 4), Domain::Kspace, data).unwrap();
        let t = stack(&g).unwrap();
        assert_eq!(t.shape(), [1, 4, 3, 4]);
        assert_eq!(t.get(0, 1, 0, 1), 13.0);
        assert_eq!(t.get(0, 3, 0, 1), -6.5);
        assert_eq!(unstack(&t).unwrap(), g);
    }

    #[test]
    fn zero_input_matches_layer_by_layer() {
        let arch = small_arch(2);
        let net = build_network(&arch, 3).unwrap();
        let m = make_masks(MaskParams { shape: (8, 8), accel: (2, 2), acs: (2, 2), offsets: (0, 0) }).unwrap();
        let zero = ComplexGrid::zeros(2, Dims::new_2d(8, 8), Domain::Kspace).unwrap();
        let out = forward_complete(&net, &zero, &m, false).unwrap();
        let mut x = Tensor4::zeros([1, 4, 8, 8]);
        for (l, spec) in net.layers().iter().enumerate() {
            let (w, b) = net.layer_params(l);
            x = conv2d_periodic(&x, &ConvLayer::new(*spec, w.to_vec(), b.to_vec()).unwrap()).unwrap();
        }
        assert_eq!(stack(&out).unwrap(), x);
    }

    #[test]
    fn output_is_shift_equivariant() {
        let net = build_network(&small_arch(2), 4).unwrap();
        let m = make_masks(MaskParams { shape: (8, 8), accel: (1, 1), acs: (0, 0), offsets: (0, 0) }).unwrap();
        let data = (0..128).map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let g = ComplexGrid::from_vec(2, Dims::new_2d(8, 8), Domain::Kspace, data).unwrap();
        let a = stack(&forward_complete(&net, &g, &m, false).unwrap()).unwrap().roll(3, -2);
        let shifted = unstack(&stack(&g).unwrap().roll(3, -2)).unwrap();
        let b = stack(&forward_complete(&net, &shifted, &m, false).unwrap()).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_validation_and_scaling() {
        let s = LevelSchedule::phantom_192();
        assert_eq!(s.levels.len(), 4);
        s.validate((192, 192)).unwrap();
        assert!(s.validate((64, 64)).is_err());
        let scaled = s.scaled_to((64, 64)).unwrap();
        assert_eq!(scaled.levels.iter().map(|l| l.region.0).collect::<Vec<_>>(), vec![11, 16, 32, 64]);
        scaled.validate((64, 64)).unwrap();
        let shrinking = LevelSchedule::from_rows(&[(32, 1e-3, 1), (16, 1e-3, 1), (64, 1e-3, 1)]);
        assert!(shrinking.validate((64, 64)).is_err());
        LevelSchedule::desk().validate((64, 64)).unwrap();
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let arch = small_arch(2);
        let m = make_masks(MaskParams { shape: (8, 8), accel: (2, 2), acs: (4, 4), offsets: (0, 0) }).unwrap();
        let data = (0..128).map(|k| Complex64::new((k as f64).sin(), 0.0)).collect();
        let g = ComplexGrid::from_vec(2, Dims::new_2d(8, 8), Domain::Kspace, data).unwrap();
        let mut net = build_network(&arch, 0).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(net.param_count(), 1e-3, AdamConfig::default()).unwrap();
        let level = Level { region: (8, 8), learning_rate: 1e-3, epochs: 0 };
        let (losses, _) = train_level(&mut net, &mut adam, &g, &m, &level, 0).unwrap();
        assert!(losses.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = build_network(&small_arch(3), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.f64");
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }
}
