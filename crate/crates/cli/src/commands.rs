use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use kspace_recon::apirnet::{
    apirnet_reconstruct, complete_with, save_run, ArchitectureSpec, LevelSchedule, TrainOptions,
};
use kspace_recon::benchmark::benchmark_phantom;
use kspace_recon::grappa::{calibrate, apply_kernel, save_kernel, KernelGeometry};
use kspace_recon::grid::{apply_mask, mse, normalize, reconstruct_image, rms_combine};
use kspace_recon::io::{read_grid, read_mask, read_real, write_grid, write_mask, write_real};
use kspace_recon::mask::{make_masks, MaskParams};
use kspace_recon::noise::{compare_methods, run_replicas, write_report, CompareConfig, Dataset, Method, NamedMethod, ReplicaConfig};
use kspace_recon::phantom::{add_noise, make_coils, make_phantom, simulate_kspace, CoilOptions, PhantomSpec};
use kspace_recon::{pgm, Domain, Error, Mask, RealGrid, SamplingMasks};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Compute(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Compute(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number in {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number in {s:?}"))?;
    Ok((a, b))
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate a phantom, coil maps and fully sampled k-space.
    Simulate(SimulateArgs),
    /// Normalize, add noise and subsample fully sampled k-space.
    Subsample(SubsampleArgs),
    /// Reconstruct subsampled k-space.
    Reconstruct(ReconstructArgs),
    /// Image error metrics against a reference.
    Evaluate(EvaluateArgs),
    /// Pseudo-replica noise amplification map of one method.
    Noisemap(NoisemapArgs),
    /// Reconstruction, error image and noise map for a list of methods.
    Compare(CompareArgs),
    /// Write a 16-bit grayscale PGM of a grid.
    EmitImage(EmitImageArgs),
}

impl Command {
    fn out(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.out,
            Command::Subsample(a) => &a.out,
            Command::Reconstruct(a) => &a.out,
            Command::Evaluate(a) => &a.out,
            Command::Noisemap(a) => &a.out,
            Command::Compare(a) => &a.out,
            Command::EmitImage(a) => &a.out,
        }
    }

    fn set_out(&mut self, dir: PathBuf) {
        match self {
            Command::Simulate(a) => a.out = dir,
            Command::Subsample(a) => a.out = dir,
            Command::Reconstruct(a) => a.out = dir,
            Command::Evaluate(a) => a.out = dir,
            Command::Noisemap(a) => a.out = dir,
            Command::Compare(a) => a.out = dir,
            Command::EmitImage(a) => a.out = dir,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Phantom description (JSON). Defaults to the benchmark disk phantom.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Grid size of the default phantom.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Number of receive coils.
    #[arg(long, default_value_t = 8)]
    pub coils: usize,
    /// Coil map seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Use unit coil sensitivities.
    #[arg(long)]
    pub uniform_coils: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleArgs {
    /// Fully sampled k-space grid.
    #[arg(long)]
    pub input: PathBuf,
    /// Acceleration along PE1 x PE2.
    #[arg(long, value_parser = parse_pair, default_value = "2x2")]
    pub accel: (usize, usize),
    /// ACS block size.
    #[arg(long, value_parser = parse_pair, default_value = "24x24")]
    pub acs: (usize, usize),
    /// Lattice offsets of the sampling pattern.
    #[arg(long, value_parser = parse_pair, default_value = "0x0")]
    pub offsets: (usize, usize),
    /// Noise std per real component, in normalized units.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 1234)]
    pub seed: u64,
    /// Keep raw units instead of scaling the largest sampled magnitude to 1.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Zero,
    Grappa,
    Apirnet,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodKind::Grappa)]
    pub method: MethodKind,
    /// GRAPPA Tikhonov weight.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// GRAPPA kernel extent along PE1 x PE2.
    #[arg(long, value_parser = parse_pair, default_value = "5x5")]
    pub kernel: (usize, usize),
    /// GRAPPA kernel extent along FE (odd).
    #[arg(long, default_value_t = 1)]
    pub fe_kernel: usize,
    /// APIR-Net level schedule (JSON). Defaults to 16/32/64 regions scaled to the grid.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Multiplies every level's epoch count.
    #[arg(long, default_value_t = 1.0)]
    pub epoch_factor: f64,
    /// APIR-Net initialization seed.
    #[arg(long = "init-seed", default_value_t = 1)]
    pub init_seed: u64,
    /// Clear the Adam moments at every level.
    #[arg(long)]
    pub reset_optimizer: bool,
    /// Keep measured values at sampled positions of the network output.
    #[arg(long)]
    pub hard_dc: bool,
    /// Add the network input to its output.
    #[arg(long)]
    pub residual: bool,
}

impl MethodArgs {
    fn resolve(&self, shape: (usize, usize), coils: usize) -> Outcome<Method> {
        let geometry = KernelGeometry { fe: self.fe_kernel, pe1: self.kernel.0, pe2: self.kernel.1 };
        Ok(match self.method {
            MethodKind::Zero => Method::ZeroFilled,
            MethodKind::Grappa => Method::Grappa { geometry, lambda: self.lambda },
            MethodKind::Apirnet => {
                if !(self.epoch_factor.is_finite() && self.epoch_factor >= 0.0) {
                    return Err(Failure::Validation(format!("epoch factor must be >= 0, got {}", self.epoch_factor)));
                }
                let schedule = match &self.schedule {
                    Some(p) => read_json::<LevelSchedule>(p)?,
                    None => LevelSchedule::desk().scaled_to(shape)?,
                }
                .with_epoch_factor(self.epoch_factor);
                let mut arch = ArchitectureSpec::new(coils);
                arch.residual = self.residual;
                let mut options = TrainOptions::seeded(self.init_seed);
                options.reset_optimizer = self.reset_optimizer;
                options.hard_dc = self.hard_dc;
                Method::Apirnet { arch, schedule, options }
            }
        })
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructArgs {
    /// Subsampled k-space grid.
    #[arg(long)]
    pub input: PathBuf,
    /// masks.json written by `subsample`.
    #[arg(long)]
    pub masks: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Reconstructed image.
    #[arg(long)]
    pub image: PathBuf,
    /// Reference image.
    #[arg(long)]
    pub reference: PathBuf,
    /// Restrict the metrics to this mask.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NoisemapArgs {
    /// Fully sampled base k-space (`full.bin` from `subsample`).
    #[arg(long)]
    pub full: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 50)]
    pub replicas: usize,
    /// Replica noise std per real component.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Replica r uses seed SEED + r.
    #[arg(long, default_value_t = 1000)]
    pub seed: u64,
    /// Region for the spatial mean.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub full: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub region: Option<PathBuf>,
    /// JSON list of `{"name", "method", ...}` entries.
    #[arg(long)]
    pub methods: PathBuf,
    /// Replicas per method; 0 skips the noise maps.
    #[arg(long, default_value_t = 10)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1000)]
    pub seed: u64,
    /// Display gain of the error images.
    #[arg(long, default_value_t = 5.0)]
    pub error_gain: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EmitImageArgs {
    /// Any grid file. K-space is reconstructed and coils are RMS-combined first.
    #[arg(long)]
    pub input: PathBuf,
    /// Intensity window MIN:MAX. Defaults to the data range.
    #[arg(long)]
    pub window: Option<String>,
    /// FE slice of a 3D grid.
    #[arg(long, default_value_t = 0)]
    pub slice: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: Command,
    outputs: Vec<String>,
    summary: serde_json::Value,
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path, out: Option<&Path>) -> Outcome<Command> {
    let m: Manifest = read_json(path)?;
    let mut command = m.command;
    if let Some(dir) = out {
        command.set_out(dir.to_path_buf());
    }
    Ok(command)
}

fn require(paths: &[&Path]) -> Outcome<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Io(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

fn load_masks(path: &Path, shape: (usize, usize)) -> Outcome<SamplingMasks> {
    let params: MaskParams = read_json(path)?;
    if params.shape != shape {
        return Err(Failure::Validation(format!("masks are {:?}, data is {:?}", params.shape, shape)));
    }
    Ok(make_masks(params)?)
}

fn region(path: Option<&PathBuf>) -> Outcome<Option<Mask>> {
    Ok(path.map(|p| read_mask(p)).transpose()?)
}

/// Runs one command, writes its outputs and manifest, and returns a one-line summary.
pub fn execute(command: &Command) -> Outcome<String> {
    let out = command.out();
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let (outputs, summary) = match command {
        Command::Simulate(a) => simulate(a)?,
        Command::Subsample(a) => subsample(a)?,
        Command::Reconstruct(a) => reconstruct(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Noisemap(a) => noisemap(a)?,
        Command::Compare(a) => compare(a)?,
        Command::EmitImage(a) => emit_image(a)?,
    };
    let manifest = Manifest {
        tool: "kspace-recon".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        outputs,
        summary: summary.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(summary.to_string())
}

type Produced = (Vec<String>, serde_json::Value);

fn simulate(a: &SimulateArgs) -> Outcome<Produced> {
    let spec: PhantomSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => benchmark_phantom(a.size),
    };
    let phantom = make_phantom(&spec)?;
    let coils = make_coils(phantom.image.dims(), CoilOptions { n_coils: a.coils, seed: a.seed, uniform: a.uniform_coils })?;
    let kspace = simulate_kspace(&phantom.image, &coils)?;
    write_grid(&a.out.join("kspace.bin"), &kspace)?;
    write_real(&a.out.join("phantom.bin"), &phantom.image)?;
    write_mask(&a.out.join("support.mask"), &phantom.support)?;
    Ok((
        vec!["kspace.bin".into(), "phantom.bin".into(), "support.mask".into()],
        serde_json::json!({ "shape": spec.shape, "coils": a.coils, "support_pixels": phantom.support.count() }),
    ))
}

fn subsample(a: &SubsampleArgs) -> Outcome<Produced> {
    require(&[&a.input])?;
    let raw = read_grid(&a.input)?;
    raw.expect_domain(Domain::Kspace)?;
    let dims = raw.dims();
    let masks = make_masks(MaskParams { shape: (dims.pe1, dims.pe2), accel: a.accel, acs: a.acs, offsets: a.offsets })?;
    let (clean, scale) = if a.no_normalize {
        (raw, 1.0)
    } else {
        let (g, rec) = normalize(&raw, &masks.m_sampled)?;
        (g, rec.scale)
    };
    let everywhere = Mask::ones(dims.pe1, dims.pe2);
    let full = add_noise(&clean, &everywhere, a.sigma, a.seed)?;
    let acquired = apply_mask(&full, &masks.m_sampled)?;
    write_grid(&a.out.join("kspace.bin"), &acquired)?;
    write_grid(&a.out.join("full.bin"), &full)?;
    write_real(&a.out.join("reference.bin"), &reconstruct_image(&clean)?)?;
    write_mask(&a.out.join("m_sampled.mask"), &masks.m_sampled)?;
    write_mask(&a.out.join("m_pattern.mask"), &masks.m_pattern)?;
    write_mask(&a.out.join("m_acs.mask"), &masks.m_acs)?;
    write_json(&a.out.join("masks.json"), &masks.params())?;
    Ok((
        ["kspace.bin", "full.bin", "reference.bin", "m_sampled.mask", "m_pattern.mask", "m_acs.mask", "masks.json"]
            .map(String::from)
            .to_vec(),
        serde_json::json!({
            "scale": scale,
            "sampled": masks.m_sampled.count(),
            "pattern": masks.m_pattern.count(),
            "acs": masks.m_acs.count(),
            "sampled_fraction": masks.sampled_fraction(),
        }),
    ))
}

fn reconstruct(a: &ReconstructArgs) -> Outcome<Produced> {
    require(&[&a.input, &a.masks])?;
    let kspace = read_grid(&a.input)?;
    kspace.expect_domain(Domain::Kspace)?;
    let dims = kspace.dims();
    let masks = load_masks(&a.masks, (dims.pe1, dims.pe2))?;
    let method = a.method.resolve((dims.pe1, dims.pe2), kspace.channels())?;
    let mut outputs = vec!["kspace.bin".to_string(), "image.bin".to_string()];
    let mut summary = serde_json::json!({ "method": method.label() });
    let (completed, image) = match &method {
        Method::ZeroFilled => {
            let acquired = apply_mask(&kspace, &masks.m_sampled)?;
            let image = reconstruct_image(&acquired)?;
            (acquired, image)
        }
        Method::Grappa { geometry, lambda } => {
            let kernel = calibrate(&apply_mask(&kspace, &masks.m_sampled)?, &masks, *geometry, *lambda)?;
            save_kernel(&kernel, &a.out.join("kernel.bin"))?;
            outputs.push("kernel.bin".into());
            summary["weight_norm"] = kernel.weight_norm().into();
            summary["fit_residuals"] = kernel.offsets.iter().map(|o| o.fit_residual).collect::<Vec<_>>().into();
            apply_kernel(&kspace, &masks, &kernel)?
        }
        Method::Apirnet { arch, schedule, options } => {
            let (completed, image, run) = apirnet_reconstruct(&kspace, &masks, arch, schedule, *options)?;
            let run_dir = a.out.join("run");
            let manifest = save_run(&run, &run_dir)?;
            outputs.extend(manifest.checkpoints.iter().map(|c| format!("run/{c}")));
            outputs.push("run/run.json".into());
            for l in 0..run.levels.len() {
                let (_, img) = complete_with(&run.network_at(l)?, &kspace, &masks, &run)?;
                let name = format!("level{}_image.bin", l + 1);
                write_real(&a.out.join(&name), &img)?;
                outputs.push(name);
            }
            if let Some((first, last)) = run.loss_span() {
                summary["initial_loss"] = first.into();
                summary["final_loss"] = last.into();
            }
            summary["wall_time_s"] = run.wall_time_s.into();
            (completed, image)
        }
    };
    write_grid(&a.out.join("kspace.bin"), &completed)?;
    write_real(&a.out.join("image.bin"), &image)?;
    Ok((outputs, summary))
}

fn evaluate(a: &EvaluateArgs) -> Outcome<Produced> {
    require(&[&a.image, &a.reference])?;
    let image = read_real(&a.image)?;
    let reference = read_real(&a.reference)?;
    let region = region(a.region.as_ref())?;
    let value = mse(&image, &reference, region.as_ref())?;
    let err = image.abs_diff(&reference)?;
    let plane = err.dims().plane();
    let max_abs = err
        .data()
        .iter()
        .enumerate()
        .filter(|(k, _)| region.as_ref().is_none_or(|m| m.bits()[k % plane]))
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    let metrics = serde_json::json!({
        "mse": value,
        "rmse": value.sqrt(),
        "max_abs_error": max_abs,
        "pixels": region.as_ref().map_or(err.data().len(), |m| m.count() * err.dims().fe),
    });
    write_json(&a.out.join("metrics.json"), &metrics)?;
    Ok((vec!["metrics.json".into()], metrics))
}

fn noisemap(a: &NoisemapArgs) -> Outcome<Produced> {
    require(&[&a.full, &a.masks])?;
    let full = read_grid(&a.full)?;
    full.expect_domain(Domain::Kspace)?;
    let dims = full.dims();
    let masks = load_masks(&a.masks, (dims.pe1, dims.pe2))?;
    let region = region(a.region.as_ref())?;
    let method = a.method.resolve((dims.pe1, dims.pe2), full.channels())?;
    let cfg = ReplicaConfig { n_replicas: a.replicas, sigma: a.sigma, base_seed: a.seed, method };
    let map = run_replicas(&full, &masks, &cfg)?;
    write_real(&a.out.join("amplification.bin"), &map.amplification)?;
    write_real(&a.out.join("std.bin"), &map.std)?;
    write_real(&a.out.join("reference_std.bin"), &map.reference_std)?;
    write_real(&a.out.join("mean.bin"), &map.mean)?;
    let summary = serde_json::json!({
        "method": cfg.method.label(),
        "replicas": map.n_replicas,
        "sigma": a.sigma,
        "mean_amplification": map.mean_amplification(region.as_ref())?,
    });
    write_json(&a.out.join("noisemap.json"), &summary)?;
    Ok((
        ["amplification.bin", "std.bin", "reference_std.bin", "mean.bin", "noisemap.json"].map(String::from).to_vec(),
        summary,
    ))
}

fn compare(a: &CompareArgs) -> Outcome<Produced> {
    require(&[&a.full, &a.masks, &a.reference, &a.methods])?;
    let full = read_grid(&a.full)?;
    full.expect_domain(Domain::Kspace)?;
    let dims = full.dims();
    let data = Dataset {
        masks: load_masks(&a.masks, (dims.pe1, dims.pe2))?,
        base: full,
        reference: read_real(&a.reference)?,
        region: region(a.region.as_ref())?,
    };
    let methods: Vec<NamedMethod> = read_json(&a.methods)?;
    let cfg = CompareConfig { sigma: a.sigma, base_seed: a.seed, replicas: a.replicas, error_gain: a.error_gain };
    let (report, outputs) = compare_methods(&data, &methods, &cfg)?;
    write_report(&a.out, &report, &outputs)?;
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| serde_json::json!({ "name": r.name, "mse": r.mse, "mean_amplification": r.mean_amplification }))
        .collect();
    Ok((vec!["report.json".into()], serde_json::Value::Array(rows)))
}

fn emit_image(a: &EmitImageArgs) -> Outcome<Produced> {
    require(&[&a.input])?;
    let g = read_grid(&a.input)?;
    let image: RealGrid = match g.domain() {
        Domain::Kspace => reconstruct_image(&g)?,
        Domain::Image if g.channels() == 1 => read_real(&a.input)?,
        Domain::Image => rms_combine(&g)?,
    };
    let (lo, hi) = match &a.window {
        Some(w) => pgm::parse_window(w)?,
        None => image.min_max(),
    };
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let name = format!("{stem}.pgm");
    pgm::write_pgm(&a.out.join(&name), &image, a.slice, lo, hi)?;
    Ok((vec![name], serde_json::json!({ "window": [lo, hi], "slice": a.slice })))
}
