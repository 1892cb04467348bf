//! Command-line front end: spectroscopy sweeps, decoherence-model curves,
//! measurement fits and seeded synthetic data, all with reproducible CSV
//! outputs and a JSON run manifest per invocation.

mod config;
mod manifest;
mod output;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use spincoh::decomodels::{
    self, subensembles_from_transitions, BathSpec, CentralSpinContext, IdVariant, ResonatorFilter,
};
use spincoh::fieldsearch::{
    angular_sweep, resonance_fields, zefoz_scan, Plane, ResonanceOptions, TransitionSelector,
};
use spincoh::fitkit::{
    covariance_scan, fit_avoided_crossing, fit_biexponential_t1, fit_decay_noise_floor, fit_eseem,
    fit_field_sweep_gaussian, fit_stimulated, CrossingTrace, DecayTrace, FitResult, SlopeSpec,
    StimEchoGrid,
};
use spincoh::presets;
use spincoh::spinham::{self, FieldVector};
use spincoh::synth;

use config::SystemConfig;
use manifest::ManifestBuilder;
use output::{write_json, CsvValue, CsvWriter};

#[derive(Parser)]
#[command(name = "spincoh", version, about = "Rare-earth spin coherence toolkit")]
struct Cli {
    /// Configuration file (TOML). Falls back to $SPINCOH_CONFIG, then to the
    /// built-in presets alone.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output base path; files are written as <out>.csv, <out>.json,
    /// <out>.manifest.json.
    #[arg(long, global = true, default_value = "spincoh_out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenlevels of a spin system at a fixed field.
    Levels(LevelsArgs),
    /// Transition table (frequency, matrix element, gradient) at a field.
    Transitions(TransitionsArgs),
    /// Resonance fields at fixed probe frequency.
    Resonance(ResonanceArgs),
    /// Angle-resolved resonance fields over a crystal plane.
    SweepAngle(SweepAngleArgs),
    /// Low-field |∇f| map and minimal-gradient ray.
    Zefoz(ZefozArgs),
    /// Closed-form decoherence model curves.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Least-squares fits of measurement data.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Seeded synthetic data for round-trip testing.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct LevelsArgs {
    #[arg(long)]
    system: String,
    /// Field vector "D1,D2,b" in tesla.
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    field: String,
}

#[derive(Args)]
struct TransitionsArgs {
    #[arg(long)]
    system: String,
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    field: String,
    /// Drive direction "x,y,z"; defaults to perpendicular to the field.
    #[arg(long, allow_hyphen_values = true)]
    b1: Option<String>,
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
}

#[derive(Args)]
struct ResonanceArgs {
    #[arg(long)]
    system: String,
    /// Probe frequency in Hz.
    #[arg(long)]
    freq: f64,
    /// Fixed direction "x,y,z"; alternative to --plane.
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<String>,
    /// Sweep plane (D1D2, D2B, D1B) with --angles.
    #[arg(long)]
    plane: Option<String>,
    /// Angle list "start:stop:step" in degrees.
    #[arg(long, default_value = "-180:180:1", allow_hyphen_values = true)]
    angles: String,
    #[arg(long, default_value_t = 0.0)]
    bmin: f64,
    #[arg(long, default_value_t = 1.32)]
    bmax: f64,
    #[arg(long, default_value_t = 1e3)]
    tol: f64,
    #[arg(long)]
    b1: Option<String>,
}

#[derive(Args)]
struct SweepAngleArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    freq: f64,
    #[arg(long, default_value = "D1D2")]
    plane: String,
    #[arg(long, default_value = "-180:180:1", allow_hyphen_values = true)]
    angles: String,
    /// Misalignment tilt toward the out-of-plane axis, degrees.
    #[arg(long, default_value_t = 0.0)]
    misalign: f64,
    #[arg(long, default_value_t = 0.0)]
    bmin: f64,
    #[arg(long, default_value_t = 1.32)]
    bmax: f64,
    #[arg(long)]
    b1: Option<String>,
}

#[derive(Args)]
struct ZefozArgs {
    #[arg(long)]
    system: String,
    /// Select the level pair by zero-field frequency (Hz)…
    #[arg(long)]
    freq_select: Option<f64>,
    /// …or explicitly as "lower,upper".
    #[arg(long)]
    pair: Option<String>,
    #[arg(long, default_value = "D1D2")]
    plane: String,
    #[arg(long, default_value_t = 0.04)]
    bmax: f64,
    #[arg(long, default_value_t = 21)]
    grid: usize,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Instantaneous-diffusion T₂ for a resonant spin density.
    Id(ModelIdArgs),
    /// ID-limited T₂ across a field sweep through the spin line.
    IdProfile(ModelIdProfileArgs),
    /// Temperature-dependent decoherence rate Γ(T).
    SdTemp(ModelSdTempArgs),
    /// Angle-dependent T₂ from a resonance sweep.
    SdAngle(ModelSdAngleArgs),
    /// ⁸⁹Y nuclear-bath spectral diffusion rates.
    Y89(ModelY89Args),
    /// Purcell-limited T₁.
    Purcell(ModelPurcellArgs),
}

#[derive(Args)]
struct ModelIdArgs {
    /// Effective g-factor of the probed transition.
    #[arg(long)]
    g: f64,
    /// Resonant (excited) spin density, m⁻³.
    #[arg(long)]
    density: f64,
    #[arg(long, default_value = "main")]
    variant: String,
    /// Refocusing pulse angle in degrees (SI variant).
    #[arg(long, default_value_t = 180.0)]
    theta_deg: f64,
}

#[derive(Args)]
struct ModelIdProfileArgs {
    #[arg(long)]
    g: f64,
    /// Total spin density of the line, m⁻³.
    #[arg(long)]
    density: f64,
    /// Resonator block name from the config, or use explicit flags below.
    #[arg(long)]
    resonator: Option<String>,
    #[arg(long, default_value_t = 5.04e9)]
    f0: f64,
    /// Excitation pulse length (s); bandwidth = 1/pulse.
    #[arg(long, default_value_t = 15e-6)]
    pulse: f64,
    #[arg(long, default_value_t = 8.7e6)]
    line_fwhm: f64,
    /// Field-to-frequency slope df/dB (Hz/T).
    #[arg(long)]
    dfdb: f64,
    /// Line-centre field (T).
    #[arg(long)]
    center: f64,
    #[arg(long)]
    bmin: f64,
    #[arg(long)]
    bmax: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[arg(long, default_value = "main")]
    variant: String,
}

#[derive(Args)]
struct ModelSdTempArgs {
    /// Spin system whose transitions define the bath sub-ensembles.
    #[arg(long)]
    system: Option<String>,
    /// Working field "D1,D2,b" (T) for the sub-ensemble table.
    #[arg(long, default_value = "0.326,0,0", allow_hyphen_values = true)]
    field: String,
    /// Number of sub-ensembles taken from the strongest transitions.
    #[arg(long, default_value_t = 8)]
    pools: usize,
    /// Use [ensemble.*] blocks from the config instead of --system.
    #[arg(long, default_value_t = false)]
    from_config: bool,
    /// Central-spin effective g.
    #[arg(long)]
    g: f64,
    #[arg(long, default_value_t = 8.7e6)]
    linewidth: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_res: f64,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.014)]
    tmin: f64,
    #[arg(long, default_value_t = 1.2)]
    tmax: f64,
    #[arg(long, default_value_t = 60)]
    points: usize,
}

#[derive(Args)]
struct ModelSdAngleArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    freq: f64,
    #[arg(long, default_value = "D1D2")]
    plane: String,
    #[arg(long, default_value = "-180:180:2", allow_hyphen_values = true)]
    angles: String,
    #[arg(long, default_value_t = 0.0)]
    misalign: f64,
    #[arg(long, default_value_t = 0.0)]
    bmin: f64,
    #[arg(long, default_value_t = 1.32)]
    bmax: f64,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.014)]
    temp: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_res: f64,
    #[arg(long, default_value_t = 8.7e6)]
    linewidth: f64,
    /// Total Yb concentration (ppm) for the I = 0 bath pools of both sites.
    #[arg(long, default_value_t = 50.0)]
    total_ppm: f64,
}

#[derive(Args)]
struct ModelY89Args {
    /// Effective g of the central spin.
    #[arg(long)]
    g: f64,
    #[arg(long)]
    field: f64,
    #[arg(long)]
    temp: f64,
    /// Yttrium density of the site class considered (m⁻³).
    #[arg(long, default_value_t = presets::Y_SITE_DENSITY_SINGLE_SITE_PER_M3)]
    ny: f64,
}

#[derive(Args)]
struct ModelPurcellArgs {
    /// Single-spin coupling g₀/2π (Hz).
    #[arg(long)]
    g0: f64,
    /// Cavity linewidth κ_s/2π (Hz).
    #[arg(long)]
    kappa: f64,
}

#[derive(Subcommand)]
enum FitCommand {
    /// Two-pulse echo decay over a noise floor. Input: tau_s, amplitude_V.
    Decay(FitDecayArgs),
    /// Stimulated echo (A0, R, Γ_SD). Input: tau_s, tw_s, amplitude_V.
    Stim(FitStimArgs),
    /// Covariance ridge scan over fixed Γ_SD / R values.
    Covscan(FitCovscanArgs),
    /// Biexponential inversion recovery. Input: tau_s, amplitude_V.
    T1(FitT1Args),
    /// Avoided crossing (dispersive shift + linewidth). Input: B_T, f_Hz, kappa_Hz.
    Crossing(FitCrossingArgs),
    /// Gaussian max-echo field profile. Input: B_T, amplitude_V.
    Fieldsweep(FitFieldsweepArgs),
    /// Damped-cosine echo modulation at the ⁸⁹Y Larmor frequency.
    Eseem(FitEseemArgs),
}

#[derive(Args)]
struct FitDecayArgs {
    #[arg(long)]
    input: PathBuf,
    /// Freeze the noise floor to a separately measured value.
    #[arg(long)]
    fix_noise: Option<f64>,
}

#[derive(Args)]
struct FitStimArgs {
    #[arg(long)]
    input: PathBuf,
    /// Separately measured relaxation time T₁ (s).
    #[arg(long)]
    t1: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma0: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct FitCovscanArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    t1: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma0: f64,
    /// Comma-separated fixed Γ_SD values (Hz).
    #[arg(long, default_value = "")]
    gsd: String,
    /// Comma-separated fixed R values (Hz).
    #[arg(long, default_value = "")]
    r: String,
}

#[derive(Args)]
struct FitT1Args {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct FitCrossingArgs {
    #[arg(long)]
    input: PathBuf,
    /// Known df/dB (Hz/T); otherwise fitted from this initial guess.
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long)]
    fit_slope: Option<f64>,
    /// Resonator block whose f0/2Q half-width is reported alongside the
    /// fitted κ0 for comparison.
    #[arg(long)]
    resonator: Option<String>,
}

#[derive(Args)]
struct FitFieldsweepArgs {
    #[arg(long)]
    input: PathBuf,
    /// Freeze the FWHM (T), e.g. to spin linewidth divided by df/dB.
    #[arg(long)]
    fwhm: Option<f64>,
}

#[derive(Args)]
struct FitEseemArgs {
    #[arg(long)]
    input: PathBuf,
    /// Static field (T) pinning the modulation frequency.
    #[arg(long)]
    field: f64,
}

#[derive(Subcommand)]
enum SynthCommand {
    Decay(SynthDecayArgs),
    Stim(SynthStimArgs),
    Crossing(SynthCrossingArgs),
    Eseem(SynthEseemArgs),
}

#[derive(Args)]
struct SynthDecayArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long)]
    t2: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_floor: f64,
    #[arg(long)]
    tau_min: f64,
    #[arg(long)]
    tau_max: f64,
    #[arg(long, default_value_t = 60)]
    points: usize,
    #[arg(long, default_value_t = 100.0)]
    snr: f64,
}

#[derive(Args)]
struct SynthStimArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    gsd: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma0: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    tau_min: f64,
    #[arg(long)]
    tau_max: f64,
    #[arg(long, default_value_t = 10)]
    tau_points: usize,
    #[arg(long)]
    tw_min: f64,
    #[arg(long)]
    tw_max: f64,
    #[arg(long, default_value_t = 12)]
    tw_points: usize,
    #[arg(long, default_value_t = 100.0)]
    snr: f64,
}

#[derive(Args)]
struct SynthCrossingArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    f0: f64,
    #[arg(long)]
    kappa0: f64,
    #[arg(long)]
    g: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    b0: f64,
    #[arg(long)]
    slope: f64,
    #[arg(long)]
    bmin: f64,
    #[arg(long)]
    bmax: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    #[arg(long, default_value_t = 100.0)]
    snr: f64,
}

#[derive(Args)]
struct SynthEseemArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long)]
    t2: f64,
    #[arg(long)]
    depth: f64,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long)]
    field: f64,
    #[arg(long)]
    tau_min: f64,
    #[arg(long)]
    tau_max: f64,
    #[arg(long, default_value_t = 240)]
    points: usize,
    #[arg(long, default_value_t = 100.0)]
    snr: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let body = serde_json::json!({
            "error": {
                "kind": "run_failure",
                "message": format!("{e:#}"),
            }
        });
        eprintln!("{body}");
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> Result<(SystemConfig, String)> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("SPINCOH_CONFIG").map(PathBuf::from));
    match path {
        Some(p) => {
            let cfg = SystemConfig::parse_file(&p)?;
            let text = cfg.to_toml()?;
            Ok((cfg, text))
        }
        None => Ok((SystemConfig::default(), String::new())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, cfg_text) = load_config(&cli)?;
    let consts = cfg.physical_constants();
    let mut manifest = ManifestBuilder::new(cfg_text);
    let out = cli.out.clone();
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }

    match &cli.command {
        Command::Levels(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let b = parse_field(&args.field)?;
            let levels =
                spinham::eigensolve(&spinham::build_hamiltonian(&sys, &b, &consts).map_err(wrap)?)
                    .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["index", "energy_Hz"])?;
            for (k, e) in levels.energies.iter().enumerate() {
                w.row(&[CsvValue::Int(k as i64), CsvValue::Float(*e)])?;
            }
            w.finish()?;
            manifest.output(&path);
        }
        Command::Transitions(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let b = parse_field(&args.field)?;
            let b1 = args.b1.as_deref().map(parse_vector).transpose()?;
            let found =
                spinham::transitions(&sys, &b, b1, args.threshold, &consts).map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(
                &path,
                &[
                    "lower",
                    "upper",
                    "f_Hz",
                    "M",
                    "grad_D1_Hz_per_T",
                    "grad_D2_Hz_per_T",
                    "grad_b_Hz_per_T",
                    "g_eff",
                ],
            )?;
            for t in &found {
                let g = t.gradient.unwrap_or([f64::NAN; 3]);
                w.row(&[
                    CsvValue::Int(t.lower as i64),
                    CsvValue::Int(t.upper as i64),
                    CsvValue::Float(t.frequency),
                    CsvValue::Float(t.matrix_element),
                    CsvValue::Float(g[0]),
                    CsvValue::Float(g[1]),
                    CsvValue::Float(g[2]),
                    CsvValue::Float(t.g_eff.unwrap_or(f64::NAN)),
                ])?;
            }
            w.finish()?;
            manifest.output(&path);
        }
        Command::Resonance(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let opts = ResonanceOptions {
                tolerance_hz: args.tol,
                b1: args
                    .b1
                    .as_deref()
                    .map(parse_vector)
                    .transpose()?
                    .map(|v| [v.x, v.y, v.z]),
                ..ResonanceOptions::default()
            };
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(
                &path,
                &[
                    "angle_deg",
                    "subsite",
                    "B_T",
                    "f_Hz",
                    "M",
                    "g_eff",
                    "grad_norm_Hz_per_T",
                ],
            )?;
            match (&args.direction, &args.plane) {
                (Some(dir), None) => {
                    let d = parse_vector(dir)?;
                    let sols = resonance_fields(
                        &sys,
                        args.freq,
                        d,
                        (args.bmin, args.bmax),
                        &opts,
                        &consts,
                    )
                    .map_err(wrap)?;
                    for s in &sols {
                        write_solution_row(&mut w, f64::NAN, "a", s)?;
                    }
                }
                (None, Some(plane)) => {
                    let plane = parse_plane(plane)?;
                    let angles = parse_angles(&args.angles)?;
                    let sweep = angular_sweep(
                        &sys,
                        args.freq,
                        plane,
                        &angles,
                        0.0,
                        (args.bmin, args.bmax),
                        &opts,
                        &consts,
                    )
                    .map_err(wrap)?;
                    for entry in &sweep.entries {
                        for s in &entry.solutions {
                            write_solution_row(&mut w, entry.angle_deg, &entry.subsite, s)?;
                        }
                    }
                }
                _ => bail!("specify exactly one of --direction or --plane"),
            }
            w.finish()?;
            manifest.output(&path);
        }
        Command::SweepAngle(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let plane = parse_plane(&args.plane)?;
            let angles = parse_angles(&args.angles)?;
            let opts = ResonanceOptions {
                b1: args
                    .b1
                    .as_deref()
                    .map(parse_vector)
                    .transpose()?
                    .map(|v| [v.x, v.y, v.z]),
                ..ResonanceOptions::default()
            };
            let sweep = angular_sweep(
                &sys,
                args.freq,
                plane,
                &angles,
                args.misalign,
                (args.bmin, args.bmax),
                &opts,
                &consts,
            )
            .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(
                &path,
                &[
                    "angle_deg",
                    "subsite",
                    "B_T",
                    "f_Hz",
                    "M",
                    "g_eff",
                    "grad_norm_Hz_per_T",
                ],
            )?;
            for entry in &sweep.entries {
                for s in &entry.solutions {
                    write_solution_row(&mut w, entry.angle_deg, &entry.subsite, s)?;
                }
            }
            w.finish()?;
            manifest.output(&path);
        }
        Command::Zefoz(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let plane = parse_plane(&args.plane)?;
            let selector = match (&args.freq_select, &args.pair) {
                (Some(f), None) => TransitionSelector::NearestZeroField(*f),
                (None, Some(p)) => {
                    let parts = parse_list(p)?;
                    if parts.len() != 2 {
                        bail!("--pair expects \"lower,upper\"");
                    }
                    TransitionSelector::Pair {
                        lower: parts[0] as usize,
                        upper: parts[1] as usize,
                    }
                }
                _ => bail!("specify exactly one of --freq-select or --pair"),
            };
            let map =
                zefoz_scan(&sys, selector, plane, args.bmax, args.grid, &consts).map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["B_axis1_T", "B_axis2_T", "grad_Hz_per_T"])?;
            let n = map.axis_t.len();
            for (i, &x) in map.axis_t.iter().enumerate() {
                for (j, &y) in map.axis_t.iter().enumerate() {
                    w.row(&[
                        CsvValue::Float(x),
                        CsvValue::Float(y),
                        CsvValue::Float(map.gradient_hz_per_t[i * n + j]),
                    ])?;
                }
            }
            w.finish()?;
            manifest.output(&path);
            let sidecar = out.with_extension("json");
            write_json(
                &sidecar,
                &serde_json::json!({
                    "min_gradient_angle_deg": map.min_gradient_angle_deg,
                    "lower": map.lower,
                    "upper": map.upper,
                    "bmax_t": args.bmax,
                    "grid": args.grid,
                }),
            )?;
            manifest.output(&sidecar);
            println!(
                "minimal-gradient ray: {:.1} deg",
                map.min_gradient_angle_deg
            );
        }
        Command::Model(model) => run_model(model, &cfg, &consts, &out, &mut manifest)?,
        Command::Fit(fit) => run_fit(fit, &cfg, &consts, &out, &mut manifest)?,
        Command::Synth(synth_cmd) => run_synth(synth_cmd, &consts, &out, &mut manifest)?,
    }

    manifest.write(&out)?;
    Ok(())
}

fn run_model(
    model: &ModelCommand,
    cfg: &SystemConfig,
    consts: &spincoh::PhysicalConstants,
    out: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<()> {
    match model {
        ModelCommand::Id(args) => {
            let variant = parse_variant(&args.variant)?;
            let t2 = decomodels::id_t2(
                args.g,
                args.density,
                variant,
                args.theta_deg.to_radians(),
                consts,
            )
            .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["T2_s"])?;
            w.row(&[CsvValue::Float(t2)])?;
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "g": args.g, "density_per_m3": args.density,
                    "variant": args.variant, "theta_deg": args.theta_deg, "T2_s": t2,
                }),
            )?;
        }
        ModelCommand::IdProfile(args) => {
            let filter = match &args.resonator {
                Some(name) => {
                    let block = cfg
                        .resonator
                        .get(name)
                        .ok_or_else(|| anyhow!("no [resonator.{name}] in config"))?;
                    let mut f = block.to_filter()?;
                    if f.df_db_hz_per_t == 0.0 {
                        f.df_db_hz_per_t = args.dfdb;
                    }
                    f
                }
                None => ResonatorFilter {
                    f0_hz: args.f0,
                    pulse_length_s: args.pulse,
                    line_fwhm_hz: args.line_fwhm,
                    df_db_hz_per_t: args.dfdb,
                },
            };
            let axis = synth::linspace(args.bmin, args.bmax, args.points);
            let variant = parse_variant(&args.variant)?;
            let profile = decomodels::id_t2_profile(
                args.g,
                args.density,
                &filter,
                args.center,
                &axis,
                variant,
                std::f64::consts::PI,
                consts,
            )
            .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["B_T", "T2_s"])?;
            for (b, t2) in &profile {
                w.row(&[CsvValue::Float(*b), CsvValue::Float(*t2)])?;
            }
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "g": args.g, "density_per_m3": args.density, "center_t": args.center,
                    "pulse_length_s": filter.pulse_length_s, "line_fwhm_hz": filter.line_fwhm_hz,
                    "df_db_hz_per_t": filter.df_db_hz_per_t, "variant": args.variant,
                }),
            )?;
        }
        ModelCommand::SdTemp(args) => {
            let ensembles = if args.from_config {
                let mut list = cfg.subensembles()?;
                for e in &mut list {
                    if e.linewidth_hz == 0.0 {
                        e.linewidth_hz = args.linewidth;
                    }
                }
                list
            } else {
                let name = args
                    .system
                    .as_deref()
                    .ok_or_else(|| anyhow!("--system or --from-config required"))?;
                let sys = cfg.spin_system(name)?;
                let b = parse_field(&args.field)?;
                let mut list =
                    subensembles_from_transitions(&sys, &b, args.pools, consts).map_err(wrap)?;
                for e in &mut list {
                    e.linewidth_hz = args.linewidth;
                }
                list
            };
            let ctx = CentralSpinContext {
                g_eff: args.g,
                linewidth_hz: args.linewidth,
                gamma_res_hz: args.gamma_res,
                xi: args.xi,
            };
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["T_K", "Gamma_Hz", "T2_s"])?;
            for t in synth::logspace(args.tmin, args.tmax, args.points) {
                let gamma =
                    decomodels::temperature_model(&ctx, &ensembles, t, consts).map_err(wrap)?;
                w.row(&[
                    CsvValue::Float(t),
                    CsvValue::Float(gamma),
                    CsvValue::Float(1.0 / gamma),
                ])?;
            }
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "g": args.g, "xi": args.xi, "gamma_res_hz": args.gamma_res,
                    "linewidth_hz": args.linewidth,
                    "ensembles": ensembles,
                    "tmin_k": args.tmin, "tmax_k": args.tmax,
                }),
            )?;
        }
        ModelCommand::SdAngle(args) => {
            let sys = cfg.spin_system(&args.system)?;
            let plane = parse_plane(&args.plane)?;
            let angles = parse_angles(&args.angles)?;
            let sweep = angular_sweep(
                &sys,
                args.freq,
                plane,
                &angles,
                args.misalign,
                (args.bmin, args.bmax),
                &ResonanceOptions::default(),
                consts,
            )
            .map_err(wrap)?;
            // I = 0 isotope pools of both crystallographic sites form the
            // dominant field-dependent bath.
            let i0_ppm_per_site = args.total_ppm * 0.70 / 2.0;
            let baths: Vec<BathSpec> = [presets::yb171_site1(), presets::yb171_site2()]
                .into_iter()
                .map(|s| BathSpec::ZeemanLike {
                    label: format!("I0_site{}", s.site),
                    density_per_m3: presets::ppm_to_per_m3(i0_ppm_per_site),
                    linewidth_hz: args.linewidth,
                    system: s,
                })
                .collect();
            let ctx = CentralSpinContext {
                g_eff: 1.0, // replaced per angle by the probed transition
                linewidth_hz: args.linewidth,
                gamma_res_hz: args.gamma_res,
                xi: args.xi,
            };
            let curve = decomodels::angular_t2_model(&ctx, &baths, args.temp, &sweep, consts)
                .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["angle_deg", "Gamma_Hz", "T2_s"])?;
            for (angle, gamma, t2) in &curve {
                w.row(&[
                    CsvValue::Float(*angle),
                    CsvValue::Float(*gamma),
                    CsvValue::Float(*t2),
                ])?;
            }
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "system": args.system, "freq_hz": args.freq, "xi": args.xi,
                    "temp_k": args.temp, "gamma_res_hz": args.gamma_res,
                    "misalign_deg": args.misalign, "total_ppm": args.total_ppm,
                }),
            )?;
        }
        ModelCommand::Y89(args) => {
            let bath = decomodels::y89_bath(args.g, args.field, args.temp, args.ny, consts)
                .map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["Gamma_SD_Y_Hz", "R_Y_Hz", "product_Hz2"])?;
            w.row(&[
                CsvValue::Float(bath.gamma_sd_hz),
                CsvValue::Float(bath.rate_hz),
                CsvValue::Float(bath.product_hz2),
            ])?;
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "g": args.g, "field_t": args.field, "temp_k": args.temp,
                    "n_y_per_m3": args.ny, "result": bath,
                }),
            )?;
        }
        ModelCommand::Purcell(args) => {
            let two_pi = 2.0 * std::f64::consts::PI;
            let t1 = decomodels::purcell_t1(two_pi * args.g0, two_pi * args.kappa).map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["T1_s"])?;
            w.row(&[CsvValue::Float(t1)])?;
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "g0_over_2pi_hz": args.g0, "kappa_over_2pi_hz": args.kappa, "T1_s": t1,
                }),
            )?;
        }
    }
    Ok(())
}

fn run_fit(
    fit: &FitCommand,
    cfg: &SystemConfig,
    consts: &spincoh::PhysicalConstants,
    out: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<()> {
    match fit {
        FitCommand::Decay(args) => {
            let trace = read_decay_csv(&args.input, "tau_s", "amplitude_V")?;
            let result = fit_decay_noise_floor(&trace, args.fix_noise).map_err(wrap)?;
            write_fit_outputs(out, manifest, &result, || {
                model_curve_decay(&trace, &result)
            })?;
        }
        FitCommand::Stim(args) => {
            let grid = read_stim_csv(&args.input, args.t1)?;
            manifest.seed(args.seed);
            let result = fit_stimulated(&grid, args.gamma0, args.seed).map_err(wrap)?;
            write_fit_outputs(out, manifest, &result, || {
                let a0 = result.value("A0").unwrap();
                let r = result.value("R").unwrap();
                let gsd = result.value("Gamma_SD").unwrap();
                grid.points
                    .iter()
                    .map(|&(tau, tw, _)| {
                        (
                            tau,
                            spincoh::fitkit::stimulated_echo_amplitude(
                                a0,
                                r,
                                gsd,
                                args.gamma0,
                                grid.t1_s,
                                tau,
                                tw,
                            ),
                        )
                    })
                    .collect()
            })?;
        }
        FitCommand::Covscan(args) => {
            let grid = read_stim_csv(&args.input, args.t1)?;
            let gsd = parse_list_opt(&args.gsd)?;
            let r = parse_list_opt(&args.r)?;
            if gsd.is_empty() && r.is_empty() {
                bail!("provide --gsd and/or --r fixed values");
            }
            let (rows, estimate) = covariance_scan(&grid, args.gamma0, &gsd, &r).map_err(wrap)?;
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(
                &path,
                &[
                    "fixed_param",
                    "fixed_value_Hz",
                    "best_other_Hz",
                    "r_squared",
                    "product_Hz2",
                ],
            )?;
            for row in &rows {
                w.row(&[
                    CsvValue::Text(&row.fixed_param),
                    CsvValue::Float(row.fixed_value),
                    CsvValue::Float(row.best_other),
                    CsvValue::Float(row.r_squared),
                    CsvValue::Float(row.product),
                ])?;
            }
            w.finish()?;
            manifest.output(&path);
            write_sidecar(
                out,
                manifest,
                &serde_json::json!({
                    "ridge_product_estimate_hz2": estimate,
                    "rows": rows,
                }),
            )?;
        }
        FitCommand::T1(args) => {
            let trace = read_decay_csv(&args.input, "tau_s", "amplitude_V")?;
            let result = fit_biexponential_t1(&trace).map_err(wrap)?;
            write_fit_outputs(out, manifest, &result, || {
                let af = result.value("A_fast").unwrap();
                let tf = result.value("T1_fast").unwrap();
                let as_ = result.value("A_slow").unwrap();
                let ts = result.value("T1_slow").unwrap();
                let off = result.value("offset").unwrap();
                trace
                    .tau_s
                    .iter()
                    .map(|&t| {
                        (
                            t,
                            (af * (-t / tf).exp() + as_ * (-t / ts).exp() + off).abs(),
                        )
                    })
                    .collect()
            })?;
        }
        FitCommand::Crossing(args) => {
            let trace = read_crossing_csv(&args.input)?;
            let slope = match (args.slope, args.fit_slope, trace.slope_hz_per_t) {
                (Some(v), None, _) => SlopeSpec::Fixed(v),
                (None, Some(v), _) => SlopeSpec::Fit(v),
                (None, None, Some(v)) => SlopeSpec::Fixed(v),
                (None, None, None) => bail!("provide --slope or --fit-slope"),
                (Some(_), Some(_), _) => bail!("--slope and --fit-slope are exclusive"),
            };
            let result = fit_avoided_crossing(&trace, slope).map_err(wrap)?;
            let reference_kappa0 = args
                .resonator
                .as_deref()
                .map(|name| {
                    cfg.resonator
                        .get(name)
                        .ok_or_else(|| anyhow!("no [resonator.{name}] in config"))
                        .and_then(|r| r.kappa0_hz())
                })
                .transpose()?;
            write_json(
                &out.with_extension("json"),
                &serde_json::json!({
                    "fit": result,
                    "reference_kappa0_hz_from_q": reference_kappa0,
                }),
            )?;
            manifest.output(&out.with_extension("json"));
            let path = out.with_extension("csv");
            let mut w = CsvWriter::create(&path, &["B_T", "f_model_Hz", "kappa_model_Hz"])?;
            let (f0, k0, g, gamma, b0) = (
                result.value("f0").unwrap(),
                result.value("kappa0").unwrap(),
                result.value("g_ens").unwrap(),
                result.value("gamma").unwrap(),
                result.value("B0").unwrap(),
            );
            let dfdb = result
                .value("df_dB")
                .or(match slope {
                    SlopeSpec::Fixed(v) => Some(v),
                    SlopeSpec::Fit(_) => None,
                })
                .unwrap();
            for &(b, _, _) in &trace.points {
                let delta = dfdb * (b - b0);
                let denom = delta * delta + gamma * gamma;
                w.row(&[
                    CsvValue::Float(b),
                    CsvValue::Float(f0 - g * g * delta / denom),
                    CsvValue::Float(k0 + g * g * gamma / denom),
                ])?;
            }
            w.finish()?;
            manifest.output(&path);
        }
        FitCommand::Fieldsweep(args) => {
            let trace = read_decay_csv(&args.input, "B_T", "amplitude_V")?;
            let result = fit_field_sweep_gaussian(&trace, args.fwhm).map_err(wrap)?;
            write_fit_outputs(out, manifest, &result, || {
                let amp = result.value("amplitude").unwrap();
                let c = result.value("center").unwrap();
                let fwhm = args.fwhm.unwrap_or_else(|| result.value("fwhm").unwrap());
                let bg = result.value("background").unwrap();
                let s = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                trace
                    .tau_s
                    .iter()
                    .map(|&b| (b, amp * (-(b - c) * (b - c) / (2.0 * s * s)).exp() + bg))
                    .collect()
            })?;
        }
        FitCommand::Eseem(args) => {
            let trace = read_decay_csv(&args.input, "tau_s", "amplitude_V")?;
            let result = fit_eseem(&trace, args.field, consts).map_err(wrap)?;
            let field = args.field;
            write_fit_outputs(out, manifest, &result, || {
                let p = decomodels::EseemParams {
                    amplitude: result.value("A0").unwrap(),
                    t2_s: result.value("T2").unwrap(),
                    depth: result.value("depth").unwrap(),
                    field_t: field,
                    phase_rad: result.value("phase").unwrap(),
                };
                trace
                    .tau_s
                    .iter()
                    .map(|&t| (t, decomodels::eseem_model(t, &p, consts)))
                    .collect()
            })?;
        }
    }
    Ok(())
}

fn run_synth(
    cmd: &SynthCommand,
    consts: &spincoh::PhysicalConstants,
    out: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<()> {
    let path = out.with_extension("csv");
    match cmd {
        SynthCommand::Decay(args) => {
            manifest.seed(args.seed);
            let taus = synth::linspace(args.tau_min, args.tau_max, args.points);
            let trace = synth::decay_trace(
                args.a0,
                args.t2,
                args.noise_floor,
                &taus,
                args.snr,
                args.seed,
            )
            .map_err(wrap)?;
            let mut w = CsvWriter::create(&path, &["tau_s", "amplitude_V"])?;
            for (t, a) in trace.tau_s.iter().zip(trace.amplitude_v.iter()) {
                w.row(&[CsvValue::Float(*t), CsvValue::Float(*a)])?;
            }
            w.finish()?;
        }
        SynthCommand::Stim(args) => {
            manifest.seed(args.seed);
            let taus = synth::linspace(args.tau_min, args.tau_max, args.tau_points);
            let tws = synth::logspace(args.tw_min, args.tw_max, args.tw_points);
            let grid = synth::stimulated_grid(
                args.a0,
                args.r,
                args.gsd,
                args.gamma0,
                args.t1,
                &taus,
                &tws,
                args.snr,
                args.seed,
            )
            .map_err(wrap)?;
            let mut w = CsvWriter::create(&path, &["tau_s", "tw_s", "amplitude_V"])?;
            for (tau, tw, a) in &grid.points {
                w.row(&[
                    CsvValue::Float(*tau),
                    CsvValue::Float(*tw),
                    CsvValue::Float(*a),
                ])?;
            }
            w.finish()?;
        }
        SynthCommand::Crossing(args) => {
            manifest.seed(args.seed);
            let fields = synth::linspace(args.bmin, args.bmax, args.points);
            let trace = synth::crossing_trace(
                args.f0,
                args.kappa0,
                args.g,
                args.gamma,
                args.b0,
                args.slope,
                &fields,
                args.snr,
                args.seed,
            )
            .map_err(wrap)?;
            let mut w = CsvWriter::create(&path, &["B_T", "f_Hz", "kappa_Hz"])?;
            for (b, f, k) in &trace.points {
                w.row(&[
                    CsvValue::Float(*b),
                    CsvValue::Float(*f),
                    CsvValue::Float(*k),
                ])?;
            }
            w.finish()?;
        }
        SynthCommand::Eseem(args) => {
            manifest.seed(args.seed);
            let taus = synth::linspace(args.tau_min, args.tau_max, args.points);
            let trace = synth::eseem_trace(
                args.a0, args.t2, args.depth, args.phase, args.field, &taus, args.snr, args.seed,
                consts,
            )
            .map_err(wrap)?;
            let mut w = CsvWriter::create(&path, &["tau_s", "amplitude_V"])?;
            for (t, a) in trace.tau_s.iter().zip(trace.amplitude_v.iter()) {
                w.row(&[CsvValue::Float(*t), CsvValue::Float(*a)])?;
            }
            w.finish()?;
        }
    }
    manifest.output(&path);
    Ok(())
}

fn write_fit_outputs(
    out: &Path,
    manifest: &mut ManifestBuilder,
    result: &FitResult,
    model_curve: impl FnOnce() -> Vec<(f64, f64)>,
) -> Result<()> {
    let json_path = out.with_extension("json");
    write_json(&json_path, result)?;
    manifest.output(&json_path);
    let csv_path = out.with_extension("csv");
    let mut w = CsvWriter::create(&csv_path, &["abscissa", "model_value"])?;
    for (x, y) in model_curve() {
        w.row(&[CsvValue::Float(x), CsvValue::Float(y)])?;
    }
    w.finish()?;
    manifest.output(&csv_path);
    Ok(())
}

fn model_curve_decay(trace: &DecayTrace, result: &FitResult) -> Vec<(f64, f64)> {
    let a0 = result.value("A0").unwrap();
    let t2 = result.value("T2").unwrap();
    let c = result.value("C").unwrap_or(0.0);
    trace
        .tau_s
        .iter()
        .map(|&tau| {
            let s = a0 * (-2.0 * tau / t2).exp();
            (tau, (s * s + c * c).sqrt())
        })
        .collect()
}

fn write_solution_row(
    w: &mut CsvWriter,
    angle: f64,
    subsite: &str,
    s: &spincoh::fieldsearch::ResonanceSolution,
) -> Result<()> {
    let grad_norm = s
        .transition
        .gradient
        .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
        .unwrap_or(f64::NAN);
    w.row(&[
        CsvValue::Float(angle),
        CsvValue::Text(subsite),
        CsvValue::Float(s.field_t),
        CsvValue::Float(s.transition.frequency),
        CsvValue::Float(s.transition.matrix_element),
        CsvValue::Float(s.transition.g_eff.unwrap_or(f64::NAN)),
        CsvValue::Float(grad_norm),
    ])
}

fn write_sidecar(
    out: &Path,
    manifest: &mut ManifestBuilder,
    value: &serde_json::Value,
) -> Result<()> {
    let path = out.with_extension("json");
    write_json(&path, value)?;
    manifest.output(&path);
    Ok(())
}

fn wrap(e: spincoh::Error) -> anyhow::Error {
    anyhow!("{e}")
}

fn parse_vector(text: &str) -> Result<Vector3<f64>> {
    let parts = parse_list(text)?;
    if parts.len() != 3 {
        bail!("expected three comma-separated components, got '{text}'");
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

fn parse_field(text: &str) -> Result<FieldVector> {
    let v = parse_vector(text)?;
    Ok(FieldVector::new(v.x, v.y, v.z))
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("cannot parse number '{p}'"))
        })
        .collect()
}

fn parse_list_opt(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_list(text)
}

fn parse_plane(text: &str) -> Result<Plane> {
    match text.to_ascii_uppercase().as_str() {
        "D1D2" => Ok(Plane::D1D2),
        "D2B" => Ok(Plane::D2B),
        "D1B" => Ok(Plane::D1B),
        other => bail!("unknown plane '{other}' (use D1D2, D2B or D1B)"),
    }
}

fn parse_angles(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("angles must be 'start:stop:step', got '{text}'");
    }
    let start: f64 = parts[0].parse().context("bad start angle")?;
    let stop: f64 = parts[1].parse().context("bad stop angle")?;
    let step: f64 = parts[2].parse().context("bad angle step")?;
    if step <= 0.0 {
        bail!("angle step must be positive");
    }
    let mut out = Vec::new();
    let mut a = start;
    while a <= stop + 1e-9 {
        out.push(a);
        a += step;
    }
    Ok(out)
}

fn parse_variant(text: &str) -> Result<IdVariant> {
    match text.to_ascii_lowercase().as_str() {
        "main" => Ok(IdVariant::Main),
        "si" => Ok(IdVariant::Si),
        other => bail!("unknown ID variant '{other}' (use main or si)"),
    }
}

fn read_decay_csv(path: &Path, x_col: &str, y_col: &str) -> Result<DecayTrace> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let xi = column(&headers, x_col)?;
    let yi = column(&headers, y_col)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record?;
        xs.push(parse_cell(&record, xi)?);
        ys.push(parse_cell(&record, yi)?);
    }
    DecayTrace::new(xs, ys).map_err(wrap)
}

fn read_stim_csv(path: &Path, t1: f64) -> Result<StimEchoGrid> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let ti = column(&headers, "tau_s")?;
    let wi = column(&headers, "tw_s")?;
    let ai = column(&headers, "amplitude_V")?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        points.push((
            parse_cell(&record, ti)?,
            parse_cell(&record, wi)?,
            parse_cell(&record, ai)?,
        ));
    }
    let grid = StimEchoGrid { points, t1_s: t1 };
    grid.validate().map_err(wrap)?;
    Ok(grid)
}

fn read_crossing_csv(path: &Path) -> Result<CrossingTrace> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let bi = column(&headers, "B_T")?;
    let fi = column(&headers, "f_Hz")?;
    let ki = column(&headers, "kappa_Hz")?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        points.push((
            parse_cell(&record, bi)?,
            parse_cell(&record, fi)?,
            parse_cell(&record, ki)?,
        ));
    }
    let trace = CrossingTrace {
        points,
        slope_hz_per_t: None,
    };
    trace.validate().map_err(wrap)?;
    Ok(trace)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| anyhow!("input CSV is missing the '{name}' column"))
}

fn parse_cell(record: &csv::StringRecord, idx: usize) -> Result<f64> {
    let cell = record.get(idx).ok_or_else(|| anyhow!("short CSV record"))?;
    cell.trim()
        .parse::<f64>()
        .with_context(|| format!("cannot parse '{cell}' as a number"))
}
