use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vna::audio_noise::AssetLibrary;
use vna::config::{generate_random, NoiseSpec, RandomSpecParams};
use vna::engine::NoiseContext;
use vna::evaluation::{self, CurveFormat, Dataset, MaterializeOptions, RobustnessReport, SweepOptions, SweepPlan};
use vna::media_io::{self, container, InjectOptions, MediaError, MediaMeta, OutputQuality, Transcoder, TRANSCODER_ENV};
use vna::service::{self, ServiceConfig};
use vna::text_noise::Transcript;

#[derive(Parser)]
#[command(name = "vna", version, about = "Multimodal noise injection and robustness evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a randomized noise spec
    GenConfig(GenConfigArgs),
    /// Apply a noise spec to a media file
    Inject(InjectArgs),
    /// Run a robustness sweep
    Sweep(SweepArgs),
    /// Merge reports and export curves
    Report(ReportArgs),
    /// Mass-produce noised copies of a dataset
    Augment(AugmentArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Native transcoder protocol over `.vnar` files
    #[command(subcommand)]
    Codec(CodecCmd),
}

#[derive(Args)]
struct TranscoderArg {
    /// Transcoder program (default: $VNA_TRANSCODER, then ffmpeg on PATH)
    #[arg(long)]
    transcoder: Option<PathBuf>,
}

#[derive(Args)]
struct GenConfigArgs {
    #[arg(long, default_value = "random_full")]
    mode: String,
    /// Full parameter file; flags override its fields
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    v_noise: Option<Vec<String>>,
    #[arg(long)]
    v_num: Option<usize>,
    #[arg(long)]
    v_ratio: Option<f64>,
    #[arg(long)]
    v_intensity: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    a_noise: Option<Vec<String>>,
    #[arg(long)]
    a_num: Option<usize>,
    #[arg(long)]
    a_ratio: Option<f64>,
    #[arg(long)]
    a_intensity: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    t_noise: Option<Vec<String>>,
    #[arg(long)]
    t_num: Option<usize>,
    #[arg(long)]
    t_ratio: Option<f64>,
    #[arg(long)]
    t_intensity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Media file whose timing the spec is laid out on
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Clip geometry when no media file is given
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 1)]
    channels: u16,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    t: TranscoderArg,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Transcript to perturb with the spec's text items
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Feature files to perturb with the spec's feature items
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Scenario asset manifest
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Encode losslessly (for golden comparisons)
    #[arg(long)]
    lossless: bool,
    /// Write the injection report here as well as to stdout
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    t: TranscoderArg,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory for noised instances (default: next to the report)
    #[arg(long)]
    work: Option<PathBuf>,
    /// Also export the curve as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    t: TranscoderArg,
}

#[derive(Args)]
struct ReportArgs {
    /// Reports to combine
    #[arg(long, num_args = 1.., required = true)]
    merge: Vec<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    assets: Option<PathBuf>,
    #[command(flatten)]
    t: TranscoderArg,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "vna-data")]
    data: PathBuf,
    /// Predictor registry `{"predictors": [...]}`
    #[arg(long)]
    predictors: Option<PathBuf>,
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Built web console to serve under /ui/
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long)]
    lossless: bool,
    #[command(flatten)]
    t: TranscoderArg,
}

#[derive(Subcommand)]
enum CodecCmd {
    /// Print stream metadata as JSON
    Probe { path: PathBuf },
    /// Write one raw stream to stdout
    Decode {
        #[arg(long, value_parser = ["video", "audio"])]
        stream: String,
        path: PathBuf,
    },
    /// Read raw RGB24 frames from stdin and write a container
    Encode {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        width: u32,
        #[arg(long, default_value_t = 0)]
        height: u32,
        #[arg(long, default_value_t = 0.0)]
        fps: f64,
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample_rate: u32,
        #[arg(long, default_value_t = 0)]
        channels: u32,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Failure {
            code: code as u8,
            message: message.to_string(),
        }
    }
}

impl From<MediaError> for Failure {
    fn from(e: MediaError) -> Self {
        Failure::new(e.exit_code(), e)
    }
}

impl From<vna::config::ConfigError> for Failure {
    fn from(e: vna::config::ConfigError) -> Self {
        Failure::new(2, e)
    }
}

impl From<evaluation::EvalError> for Failure {
    fn from(e: evaluation::EvalError) -> Self {
        Failure::new(e.exit_code(), e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::new(1, format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::new(1, e))
        }
    }
}

fn is_native_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == container::EXTENSION)
}

/// Explicit flag, then the environment; when neither names a transcoder and
/// every file is a native container, this executable serves as its own.
fn transcoder(arg: &TranscoderArg, files: &[&Path]) -> Result<Transcoder, Failure> {
    if let Some(p) = &arg.transcoder {
        return Ok(Transcoder::from_program(p));
    }
    let native_only = !files.is_empty() && files.iter().all(|p| is_native_file(p));
    if native_only && std::env::var_os(TRANSCODER_ENV).is_none() {
        if let Ok(me) = std::env::current_exe() {
            return Ok(Transcoder::native(me));
        }
    }
    Ok(Transcoder::from_env()?)
}

fn assets(path: Option<&Path>) -> Result<Option<AssetLibrary>, Failure> {
    path.map(|p| AssetLibrary::open(p).map_err(|e| Failure::new(2, e))).transpose()
}

fn gen_config(a: GenConfigArgs) -> Result<(), Failure> {
    let mut params = match &a.params {
        Some(p) => RandomSpecParams::from_json(&read(p)?)?,
        None => RandomSpecParams::default(),
    };
    if a.params.is_none() || a.mode != "random_full" {
        params.mode = a.mode.clone();
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$( if let Some(v) = a.$flag.clone() { params.$field = v; } )*};
    }
    set!(v_noise => v_noise_list, v_num => v_noise_num, v_ratio => v_noise_ratio, v_intensity => v_noise_intensity,
         a_noise => a_noise_list, a_num => a_noise_num, a_ratio => a_noise_ratio, a_intensity => a_noise_intensity,
         t_noise => t_noise_list, t_num => t_noise_num, t_ratio => t_noise_ratio, t_intensity => t_noise_intensity,
         seed => seed);
    let meta = match &a.input {
        Some(input) => transcoder(&a.t, &[input])?.probe(input)?,
        None => MediaMeta::audio_video(a.duration, a.fps, a.width, a.height, a.sample_rate, a.channels),
    };
    let spec = generate_random(&params, &meta)?;
    write_out(a.out.as_deref(), &(spec.to_json_pretty() + "\n"))
}

fn inject(a: InjectArgs) -> Result<(), Failure> {
    let spec = NoiseSpec::from_json(&read(&a.config)?)?;
    let t = transcoder(&a.t, &[&a.input, &a.out])?;
    let mut opts = InjectOptions::new(t);
    if a.lossless {
        opts.quality = OutputQuality::Lossless;
    }
    if let Some(p) = &a.transcript {
        opts.transcript = Some(Transcript::from_json(&read(p)?).map_err(|e| Failure::new(2, e))?);
    }
    opts.features = a.features.clone();
    opts.context = NoiseContext {
        assets: assets(a.assets.as_deref())?,
        base_dir: a.config.parent().map(Path::to_path_buf),
    };
    let report = media_io::inject_spec(&a.input, &a.out, &spec, &opts)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(p) = &a.report {
        write_out(Some(p), &json)?;
    }
    write_out(None, &json)
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut plan = SweepPlan::from_json(&read(&a.plan)?)?;
    let base = a.plan.parent().unwrap_or(Path::new(""));
    if plan.dataset.is_relative() {
        plan.dataset = base.join(&plan.dataset);
    }
    if let Some(assets) = plan.assets.as_mut().filter(|p| p.is_relative()) {
        *assets = base.join(&*assets);
    }
    let dataset = Dataset::load(&plan.dataset)?;
    let media: Vec<&Path> = dataset.instances.iter().filter_map(|i| i.media.as_deref()).collect();
    let work = a.work.clone().unwrap_or_else(|| media_io::sidecar(&a.out, "work"));
    let mut opts = SweepOptions::new(work);
    if !media.is_empty() {
        opts.transcoder = Some(transcoder(&a.t, &media)?);
    }
    let spec = plan
        .predictor
        .clone()
        .ok_or_else(|| Failure::new(2, "plan names no predictor"))?;
    let predictor = spec.build()?;
    let report = evaluation::run_sweep(&plan, &dataset, predictor.as_ref(), &opts)?;
    report.save(&a.out)?;
    if let Some(csv) = &a.csv {
        evaluation::export_curves(std::slice::from_ref(&report), CurveFormat::Csv, csv)?;
    }
    eprintln!("AIR acc2 {:.6}  f1 {:.6}", report.air_acc2, report.air_f1);
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let reports = a
        .merge
        .iter()
        .map(|p| RobustnessReport::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut any = false;
    for (path, format) in [(&a.svg, CurveFormat::Svg), (&a.csv, CurveFormat::Csv), (&a.json, CurveFormat::Json)] {
        if let Some(p) = path {
            evaluation::export_curves(&reports, format, p)?;
            any = true;
        }
    }
    if !any {
        write_out(None, &evaluation::render_curves(&reports, CurveFormat::Csv))?;
    }
    Ok(())
}

fn augment(a: AugmentArgs) -> Result<(), Failure> {
    let dataset = Dataset::load(&a.manifest)?;
    let spec = NoiseSpec::from_json(&read(&a.config)?)?;
    let media: Vec<&Path> = dataset.instances.iter().filter_map(|i| i.media.as_deref()).collect();
    let opts = MaterializeOptions {
        transcoder: if media.is_empty() { None } else { Some(transcoder(&a.t, &media)?) },
        context: NoiseContext {
            assets: assets(a.assets.as_deref())?,
            base_dir: a.config.parent().map(Path::to_path_buf),
        },
    };
    let out = evaluation::augment(&dataset, &spec, a.copies, &a.out, &opts)?;
    eprintln!("wrote {} instances to {}", out.instances.len(), a.out.join("manifest.json").display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let mut config = ServiceConfig::new(&a.data);
    config.transcoder = match transcoder(&a.t, &[]) {
        Ok(t) => Some(t),
        // without ffmpeg the service still handles native containers
        Err(_) => std::env::current_exe().ok().map(Transcoder::native),
    };
    if let Some(p) = &a.predictors {
        config.predictors = evaluation::load_registry(p)?;
    }
    config.assets = assets(a.assets.as_deref())?;
    config.workers = a.workers;
    config.static_dir = a.ui.clone();
    if a.lossless {
        config.quality = OutputQuality::Lossless;
    }
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::new(2, format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e))?;
    rt.block_on(service::serve(config, addr)).map_err(|e| Failure::new(1, e))
}

fn codec(c: CodecCmd) -> Result<(), Failure> {
    let media = |e: std::io::Error, p: &Path| Failure::new(3, format!("{}: {e}", p.display()));
    match c {
        CodecCmd::Probe { path } => {
            let meta = container::probe(&path).map_err(|e| media(e, &path))?;
            write_out(None, &(serde_json::to_string(&meta).expect("meta serializes") + "\n"))
        }
        CodecCmd::Decode { stream, path } => {
            let mut out = BufWriter::new(std::io::stdout().lock());
            container::decode_stream(&path, stream == "video", &mut out).map_err(|e| media(e, &path))
        }
        CodecCmd::Encode {
            out,
            width,
            height,
            fps,
            audio,
            sample_rate,
            channels,
        } => {
            let params = container::EncodeParams {
                width,
                height,
                fps,
                audio: audio.as_deref().map(|p| (p, sample_rate, channels)),
            };
            let mut input = std::io::stdin().lock();
            container::encode(&out, &params, &mut input).map_err(|e| media(e, &out))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::GenConfig(a) => gen_config(a),
        Cmd::Inject(a) => inject(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Report(a) => report(a),
        Cmd::Augment(a) => augment(a),
        Cmd::Serve(a) => serve(a),
        Cmd::Codec(c) => codec(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("vna: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
