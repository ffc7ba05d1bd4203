//! The `cryodec` command line: argument parsing, the commands themselves, and
//! the mapping from failures to exit codes.
//!
//! Every command reads the configuration, derives all randomness from
//! `--seed`, and writes CSV files into `--out`.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analog;
use crate::config::{Config, ConfigError};
use crate::crossbar::ProgrammingReport;
use crate::device::{self, MemristorState, Polarity, Pulse};
use crate::io::{self, EvalRow, IoError, SweepRow};
use crate::pipeline::{self, DecoderConfig, NetworkWeights};
use crate::qec::eval::{evaluate_ler, trial_trace};
use crate::qec::{self, Decoder, LookupDecoder, SurrogateModel, SyndromeTrace};
use crate::rng;

pub const DATASET_FILE: &str = "dataset.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const LOSS_FILE: &str = "training_loss.csv";
pub const CROSSBAR_FILES: [&str; 3] = ["crossbar_input.csv", "crossbar_recurrent.csv", "crossbar_output.csv"];
pub const EVAL_FILE: &str = "eval.csv";

const GEN_SALT: u64 = 0x6765;
const TRAIN_SALT: u64 = 0x7472;
const PROGRAM_SALT: u64 = 0x7072;
const EVAL_SALT: u64 = 0x6576;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing required artifact {}: {hint}", path.display())]
    Dependency { path: PathBuf, hint: &'static str },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Dependency { .. } | CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Dependency { .. } => "dependency",
            CliError::Runtime(_) => "runtime",
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn artifact(path: &Path, e: IoError) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "cryodec", version, about = "Behavioral simulator of a memristor recurrent neural decoder")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Depression then potentiation pulse trains, averaged over repeated runs.
    ProgramSweep,
    /// Sigmoid transfer curve of one preset.
    SigmoidSweep {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run the demo network on a pulse pattern; writes trace and waveform.
    PulseRun {
        /// Rounds separated by commas, e.g. "11,01".
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Supply power per preset.
    PowerReport,
    /// Repetition-code harness.
    Qec {
        #[command(subcommand)]
        step: QecStep,
    },
}

#[derive(Debug, Subcommand)]
pub enum QecStep {
    /// Sample the training dataset.
    Gen,
    /// Train the surrogate on the dataset.
    Train,
    /// Program crossbars from the trained weights.
    Compile,
    /// Estimate logical error rates.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecoderChoice {
    /// constant0, lookup, surrogate and hardware.
    All,
    Oracle,
    Constant0,
    Lookup,
    Surrogate,
    Hardware,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value_t = DecoderChoice::All)]
    pub decoder: DecoderChoice,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Operating point for the surrogate and hardware decoders.
    #[arg(long)]
    pub preset: Option<String>,
}

/// Seed, output directory and parsed configuration of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        Ok((path, BufWriter::new(f)))
    }

    fn require(&self, name: &str, hint: &'static str) -> Result<(PathBuf, File), CliError> {
        let path = self.path(name);
        match File::open(&path) {
            Ok(f) => Ok((path, f)),
            Err(_) => Err(CliError::Dependency { path, hint }),
        }
    }
}

/// Runs one parsed command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| runtime(format!("{}: {e}", cli.out.display())))?;
    let run = RunConfig { config, seed: cli.seed, out: cli.out.clone() };
    match &cli.command {
        Command::ProgramSweep => program_sweep(&run),
        Command::SigmoidSweep { preset } => sigmoid_sweep(&run, preset.as_deref()),
        Command::PulseRun { pattern, preset } => pulse_run(&run, pattern, preset.as_deref()),
        Command::PowerReport => power_report(&run),
        Command::Qec { step: QecStep::Gen } => qec_gen(&run),
        Command::Qec { step: QecStep::Train } => qec_train(&run),
        Command::Qec { step: QecStep::Compile } => qec_compile(&run),
        Command::Qec { step: QecStep::Eval(args) } => qec_eval(&run, args),
    }
}

/// Parses `args`, runs the command, reports, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 1;
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

/// Mean and population standard deviation. Deviations are taken about the
/// first sample so that identical samples give exactly zero spread.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let origin = xs.first().copied().unwrap_or(0.0);
    let shift = xs.iter().map(|x| x - origin).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - origin - shift).powi(2)).sum::<f64>() / n;
    (origin + shift, var.sqrt())
}

/// Each run starts fully potentiated, takes `n_pulses` depression pulses and
/// then `n_pulses` potentiation pulses; run `r` uses stream `r` of the seed.
pub fn program_sweep(run: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let (params, s) = (&cfg.device, &cfg.sweep);
    let mut trajectories = Vec::with_capacity(s.n_runs);
    for r in 0..s.n_runs {
        let mut rng = rng::stream(run.seed, r as u64);
        let start = MemristorState::new(params.g_max, params).map_err(runtime)?;
        let (mid, mut down) = device::apply_pulse_train(
            start,
            s.n_pulses,
            Pulse::new(Polarity::Depress, s.amplitude, s.width),
            params,
            &mut rng,
        )
        .map_err(runtime)?;
        let (_, up) = device::apply_pulse_train(
            mid,
            s.n_pulses,
            Pulse::new(Polarity::Potentiate, s.amplitude, s.width),
            params,
            &mut rng,
        )
        .map_err(runtime)?;
        down.extend(up);
        trajectories.push(down);
    }
    let rows: Vec<SweepRow> = (0..2 * s.n_pulses)
        .map(|k| {
            let column: Vec<f64> = trajectories.iter().map(|t| t[k]).collect();
            let (mean_g, std_g) = mean_std(&column);
            let polarity = if k < s.n_pulses { Polarity::Depress } else { Polarity::Potentiate };
            SweepRow { pulse_index: k + 1, polarity, mean_g, std_g }
        })
        .collect();
    let (path, w) = run.create("program_sweep.csv")?;
    io::write_sweep(w, &rows).map_err(|e| artifact(&path, e))?;
    Ok(vec![path])
}

pub fn sigmoid_sweep(run: &RunConfig, preset: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let preset = cfg.preset(preset.unwrap_or(&cfg.circuit.preset))?;
    let points = analog::sigmoid_sweep(&preset.sigmoid, cfg.sweep.i_max, cfg.sweep.n_points - 1);
    let (path, w) = run.create("sigmoid.csv")?;
    io::write_sigmoid(w, &points).map_err(|e| artifact(&path, e))?;
    Ok(vec![path])
}

/// The demo network in fixed-resistor mode (crossbars at their exact targets).
pub fn demo_decoder(cfg: &Config, preset: &str) -> Result<DecoderConfig, CliError> {
    let weights = cfg.demo.to_weights()?;
    DecoderConfig::from_weights_ideal(&weights, &cfg.mapping(), cfg.circuit(preset)?).map_err(runtime)
}

pub fn pulse_run(run: &RunConfig, pattern: &str, preset: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let preset = preset.unwrap_or(&cfg.circuit.preset);
    let decoder = demo_decoder(cfg, preset)?;
    let inputs = pipeline::parse_pattern(pattern, decoder.n_in).map_err(CliError::Usage)?;
    let (_, traces) = pipeline::run(&decoder, &inputs, run.seed).map_err(runtime)?;
    let c = &decoder.circuit;
    let wave =
        pipeline::render_waveform(&traces, &c.preset, c.pulse_width, cfg.sweep.sample_period).map_err(runtime)?;
    let (trace_path, w) = run.create("trace.csv")?;
    io::write_trace(w, &traces).map_err(|e| artifact(&trace_path, e))?;
    let (wave_path, w) = run.create("waveform.csv")?;
    io::write_waveform(w, &wave).map_err(|e| artifact(&wave_path, e))?;
    Ok(vec![trace_path, wave_path])
}

pub fn power_report(run: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (path, w) = run.create("power.csv")?;
    io::write_power(w, &run.config.power_table()).map_err(|e| artifact(&path, e))?;
    Ok(vec![path])
}

/// Training traces: trace `i` is trial `i` under a seed derived from `--seed`.
pub fn qec_gen(run: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let q = &run.config.qec;
    let (code, noise) = (q.code()?, q.noise()?);
    let seed = rng::subseed(run.seed, GEN_SALT);
    let traces = (0..q.train_traces as u64)
        .map(|i| trial_trace(&code, &noise, q.rounds, seed, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let (path, w) = run.create(DATASET_FILE)?;
    io::write_dataset(w, &traces).map_err(|e| artifact(&path, e))?;
    Ok(vec![path])
}

fn surrogate_model(cfg: &Config, preset: &str) -> Result<SurrogateModel, CliError> {
    Ok(SurrogateModel::from_hardware(&cfg.circuit(preset)?, &cfg.mapping(), cfg.qec.out_scale))
}

fn load_dataset(run: &RunConfig) -> Result<Vec<SyndromeTrace>, CliError> {
    let (path, f) = run.require(DATASET_FILE, "run `qec gen` first")?;
    let n_checks = run.config.qec.code()?.n_checks();
    let traces = io::read_dataset(f, n_checks).map_err(|e| artifact(&path, e))?;
    if traces.is_empty() {
        return Err(runtime(format!("{}: no traces", path.display())));
    }
    Ok(traces)
}

fn load_weights(run: &RunConfig) -> Result<NetworkWeights, CliError> {
    let (path, f) = run.require(WEIGHTS_FILE, "run `qec train` first")?;
    io::read_weights(f).map_err(|e| artifact(&path, e))
}

pub fn qec_train(run: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let traces = load_dataset(run)?;
    let model = surrogate_model(cfg, &cfg.qec.preset)?;
    let train = qec::TrainConfig { seed: rng::subseed(run.seed, TRAIN_SALT), ..cfg.qec.train };
    let report = qec::train_surrogate(&traces, &model, &train).map_err(runtime)?;
    let (w_path, w) = run.create(WEIGHTS_FILE)?;
    io::write_weights(w, &report.weights).map_err(|e| artifact(&w_path, e))?;
    let (l_path, mut w) = run.create(LOSS_FILE)?;
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in report.losses.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    std::io::Write::write_all(&mut w, out.as_bytes()).map_err(|e| runtime(format!("{}: {e}", l_path.display())))?;
    Ok(vec![w_path, l_path])
}

/// Write-verify every device from a fresh array at `qec.program_tolerance`.
/// Cells that do not converge are kept as reached and show up in the
/// snapshot's error column.
pub fn qec_compile(run: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let weights = load_weights(run)?;
    let mut wv = cfg.programming;
    wv.tolerance = cfg.qec.program_tolerance;
    let mut rng = rng::from_seed(rng::subseed(run.seed, PROGRAM_SALT));
    let (decoder, reports) =
        DecoderConfig::from_weights_programmed(&weights, &cfg.mapping(), cfg.circuit(&cfg.qec.preset)?, &wv, &mut rng)
            .map_err(runtime)?;
    let xbars = [&decoder.input_xbar, &decoder.recurrent_xbar, &decoder.output_xbar];
    let mut written = Vec::new();
    for ((name, xbar), report) in CROSSBAR_FILES.iter().zip(xbars).zip(&reports) {
        let (path, w) = run.create(name)?;
        io::write_crossbar(w, xbar, Some(report)).map_err(|e| artifact(&path, e))?;
        written.push(path);
    }
    let failed: usize = reports.iter().map(|r: &ProgrammingReport| r.failures().count()).sum();
    if failed > 0 {
        eprintln!("warning: {failed} device(s) did not reach tolerance; kept as programmed");
    }
    Ok(written)
}

fn load_hardware(run: &RunConfig, preset: &str) -> Result<DecoderConfig, CliError> {
    let cfg = &run.config;
    let mut xbars = Vec::with_capacity(3);
    for name in CROSSBAR_FILES {
        let (path, f) = run.require(name, "run `qec compile` first")?;
        let mut x = io::read_crossbar(f, cfg.device).map_err(|e| artifact(&path, e))?;
        x.v_clamp = cfg.crossbar.v_clamp;
        xbars.push(x);
    }
    let output_xbar = xbars.pop().expect("three crossbars");
    let recurrent_xbar = xbars.pop().expect("three crossbars");
    let input_xbar = xbars.pop().expect("three crossbars");
    let decoder = DecoderConfig {
        n_in: input_xbar.n_in().saturating_sub(1),
        n_hidden: input_xbar.n_out(),
        n_out: output_xbar.n_out(),
        input_xbar,
        recurrent_xbar,
        output_xbar,
        circuit: cfg.circuit(preset)?,
    };
    decoder.validate().map_err(runtime)?;
    Ok(decoder)
}

pub fn qec_eval(run: &RunConfig, args: &EvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.config;
    let mut q = cfg.qec.clone();
    if let Some(p) = args.p {
        q.p = p;
    }
    if let Some(x) = args.q {
        q.q = x;
    }
    let (code, noise) = (q.code()?, q.noise()?);
    let trials = args.trials.unwrap_or(q.trials);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let preset = args.preset.clone().unwrap_or_else(|| q.preset.clone());

    use DecoderChoice as D;
    let wanted: Vec<DecoderChoice> = match args.decoder {
        D::All => vec![D::Constant0, D::Lookup, D::Surrogate, D::Hardware],
        one => vec![one],
    };
    let needs = |d: DecoderChoice| wanted.contains(&d);
    let lookup =
        if needs(D::Lookup) { Some(LookupDecoder::build(&code, &noise, q.rounds).map_err(runtime)?) } else { None };
    let surrogate = if needs(D::Surrogate) { Some((surrogate_model(cfg, &preset)?, load_weights(run)?)) } else { None };
    let hardware = if needs(D::Hardware) { Some(load_hardware(run, &preset)?) } else { None };

    let seed = rng::subseed(run.seed, EVAL_SALT);
    let mut rows = Vec::with_capacity(wanted.len());
    for choice in wanted {
        let decoder = match choice {
            D::Oracle => Decoder::Oracle,
            D::Constant0 => Decoder::Constant(0),
            D::Lookup => Decoder::Lookup(lookup.as_ref().expect("built above")),
            D::Surrogate => {
                let (model, weights) = surrogate.as_ref().expect("loaded above");
                Decoder::Surrogate { model, weights }
            }
            D::Hardware => Decoder::Hardware(hardware.as_ref().expect("loaded above")),
            D::All => unreachable!("expanded above"),
        };
        let estimate = evaluate_ler(&decoder, &code, &noise, q.rounds, trials, seed).map_err(runtime)?;
        rows.push(EvalRow { decoder: decoder.name().to_string(), p: q.p, q: q.q, estimate });
    }
    let (path, w) = run.create(EVAL_FILE)?;
    io::write_eval(w, &rows).map_err(|e| artifact(&path, e))?;
    Ok(vec![path])
}
